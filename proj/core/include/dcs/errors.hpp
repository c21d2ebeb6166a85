// errors.hpp -- error codes shared by every module and the wire Err variant
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dcs {

enum class Errc {
    // model
    UnknownField,
    IdentityMismatch,
    EmptyGrant,
    OwnerAsReceiver,
    // crypto
    EntropyUnavailable,
    MalformedPublicKey,
    UnwrapFailed,
    PlaintextTooLarge,
    OpenFailed,
    // wire
    OversizeField,
    Malformed,
    NonCanonical,
    UnknownType,
    NotSignable,
    FrameTooLarge,
    TruncatedFrame,
    // synchronizer
    KeyConflict,
    UnknownOwner,
    BadSignature,
    UnknownUser,
    ReplayedRequest,
    NoKey,
    NotGrantOwner,
    // agent
    DuplicateDossier,
    NotOwner,
    UnknownDossier,
    UnknownReceiver,
    SyncUnreachable,
    AccessRevoked,
    CorruptRecord,
    // store
    CorruptSnapshot,
    LogGap,
    SuiteMismatch,
    DiskFull,
    LockLost,
    // simnet
    InvalidScenario,
    QueuesNotDrained,
};

std::string_view errc_name(Errc c);

// Reverse lookup for wire Err codes; returns Malformed for unknown names.
Errc errc_from_name(std::string_view name);

class Error : public std::runtime_error {
  public:
    Error(Errc code, std::string detail = "")
        : std::runtime_error(std::string(errc_name(code)) +
                             (detail.empty() ? "" : ": " + detail)),
          code_(code), detail_(std::move(detail)) {}

    Errc code() const { return code_; }
    const std::string& detail() const { return detail_; }

  private:
    Errc code_;
    std::string detail_;
};

} // namespace dcs
