// wire.hpp -- canonical message encoding, the signing-bytes rule, and
// length-prefixed framing for all agent<->synchronizer traffic
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <variant>
#include <vector>

#include "dcs/bytes.hpp"
#include "dcs/crypto.hpp"
#include "dcs/errors.hpp"
#include "dcs/model.hpp"

namespace dcs::wire {

constexpr std::size_t kMaxFrameBytes = 2 * 1024 * 1024;

// Requests. Every request except Register is signed over its canonical
// encoding with the signature field omitted. request_seq is a per-sender
// strictly increasing replay guard on the read/ack path.
struct Register {
    UserId user;
    Bytes enc_public;
    Bytes sig_public;
    bool operator==(const Register&) const = default;
};

struct Grant {
    DossierId dossier;
    UserId owner;
    UserId receiver;
    Bytes wrapped;
    Signature signature;
    bool operator==(const Grant&) const = default;
};

struct Send {
    DossierId dossier;
    UserId owner;
    UserId receiver;
    Version version = 1;
    Bytes nonce;
    Bytes ciphertext;
    Signature signature;
    bool operator==(const Send&) const = default;
};

struct Fetch {
    UserId receiver;
    std::uint64_t request_seq = 1;
    Signature signature;
    bool operator==(const Fetch&) const = default;
};

struct Ack {
    UserId receiver;
    std::vector<std::uint64_t> entry_ids;
    std::uint64_t request_seq = 1;
    Signature signature;
    bool operator==(const Ack&) const = default;
};

struct GetKey {
    DossierId dossier;
    UserId receiver;
    std::uint64_t request_seq = 1;
    Signature signature;
    bool operator==(const GetKey&) const = default;
};

// Registry lookup: lets an agent fetch another user's public bundle.
struct GetUser {
    UserId requester;
    UserId user;
    std::uint64_t request_seq = 1;
    Signature signature;
    bool operator==(const GetUser&) const = default;
};

struct Revoke {
    DossierId dossier;
    UserId owner;
    UserId receiver;
    Signature signature;
    bool operator==(const Revoke&) const = default;
};

// Responses.
struct PendingWire {
    std::uint64_t entry_id = 0;
    DossierId dossier;
    UserId owner;
    Version version = 1;
    Bytes nonce;
    Bytes ciphertext;
    Signature signature;
    bool operator==(const PendingWire&) const = default;
};

struct OkKey {
    Bytes wrapped;
    bool operator==(const OkKey&) const = default;
};

struct OkPending {
    std::vector<PendingWire> entries;
    bool operator==(const OkPending&) const = default;
};

struct OkUser {
    UserId user;
    Bytes enc_public;
    Bytes sig_public;
    bool operator==(const OkUser&) const = default;
};

struct OkEmpty {
    bool operator==(const OkEmpty&) const = default;
};

struct Err {
    std::string code;
    std::string detail;
    bool operator==(const Err&) const = default;
};

using Message = std::variant<Register, Grant, Send, Fetch, Ack, GetKey,
                             GetUser, Revoke, OkKey, OkPending, OkUser,
                             OkEmpty, Err>;

// Deterministic single-object text encoding: sorted keys, no insignificant
// whitespace, minimal decimal integers, byte strings as padded base64,
// a "type" key naming the variant.
Bytes canonical_encode(const Message& m);

// Strict inverse: rejects anything canonical_encode would not produce.
Message decode(ByteView b);

// Canonical encoding with the signature field omitted entirely.
Bytes signing_bytes(const Message& m);

Err err_of(Errc code, std::string detail = "");

// Throws Error(code) when m is an Err, otherwise returns m unchanged.
const Message& raise_if_err(const Message& m);

// 4-byte big-endian length prefix.
Bytes frame(ByteView payload);

// Reads whole bytes from a stream; returns 0 only at end of stream.
using Reader = std::function<std::size_t(std::uint8_t*, std::size_t)>;

// Reads exactly one frame. nullopt on clean end-of-stream at a frame
// boundary; TruncatedFrame when the stream ends mid-frame.
std::optional<Bytes> deframe(const Reader& read);

// Canonical codec for redacted views; this is the sealed payload of a
// pending dossier and the byte-for-byte comparison unit in checks.
Bytes encode_view(const RedactedView& v);
RedactedView decode_view(ByteView b);

} // namespace dcs::wire
