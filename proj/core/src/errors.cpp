#include "dcs/errors.hpp"

#include <array>
#include <utility>

namespace dcs {

namespace {

constexpr std::pair<Errc, std::string_view> kNames[] = {
    {Errc::UnknownField, "UnknownField"},
    {Errc::IdentityMismatch, "IdentityMismatch"},
    {Errc::EmptyGrant, "EmptyGrant"},
    {Errc::OwnerAsReceiver, "OwnerAsReceiver"},
    {Errc::EntropyUnavailable, "EntropyUnavailable"},
    {Errc::MalformedPublicKey, "MalformedPublicKey"},
    {Errc::UnwrapFailed, "UnwrapFailed"},
    {Errc::PlaintextTooLarge, "PlaintextTooLarge"},
    {Errc::OpenFailed, "OpenFailed"},
    {Errc::OversizeField, "OversizeField"},
    {Errc::Malformed, "Malformed"},
    {Errc::NonCanonical, "NonCanonical"},
    {Errc::UnknownType, "UnknownType"},
    {Errc::NotSignable, "NotSignable"},
    {Errc::FrameTooLarge, "FrameTooLarge"},
    {Errc::TruncatedFrame, "TruncatedFrame"},
    {Errc::KeyConflict, "KeyConflict"},
    {Errc::UnknownOwner, "UnknownOwner"},
    {Errc::BadSignature, "BadSignature"},
    {Errc::UnknownUser, "UnknownUser"},
    {Errc::ReplayedRequest, "ReplayedRequest"},
    {Errc::NoKey, "NoKey"},
    {Errc::NotGrantOwner, "NotGrantOwner"},
    {Errc::DuplicateDossier, "DuplicateDossier"},
    {Errc::NotOwner, "NotOwner"},
    {Errc::UnknownDossier, "UnknownDossier"},
    {Errc::UnknownReceiver, "UnknownReceiver"},
    {Errc::SyncUnreachable, "SyncUnreachable"},
    {Errc::AccessRevoked, "AccessRevoked"},
    {Errc::CorruptRecord, "CorruptRecord"},
    {Errc::CorruptSnapshot, "CorruptSnapshot"},
    {Errc::LogGap, "LogGap"},
    {Errc::SuiteMismatch, "SuiteMismatch"},
    {Errc::DiskFull, "DiskFull"},
    {Errc::LockLost, "LockLost"},
    {Errc::InvalidScenario, "InvalidScenario"},
    {Errc::QueuesNotDrained, "QueuesNotDrained"},
};

} // namespace

std::string_view errc_name(Errc c) {
    for (const auto& [code, name] : kNames)
        if (code == c)
            return name;
    return "Unknown";
}

Errc errc_from_name(std::string_view name) {
    for (const auto& [code, n] : kNames)
        if (n == name)
            return code;
    return Errc::Malformed;
}

} // namespace dcs
