// crypto.hpp -- identities, per-(dossier, receiver) keys, wrapping,
// signatures, and salted authenticated encryption
#pragma once

#include <array>
#include <cstdint>
#include <memory>

#include "dcs/bytes.hpp"
#include "dcs/errors.hpp"
#include "dcs/model.hpp"

namespace dcs {

// Suite identifier carried in the wire handshake and the store snapshots.
// Fixed once per deployment.
constexpr const char* kSuiteId = "x25519-ed25519-xchacha20poly1305";

constexpr std::size_t kEncPublicBytes = 32;  // X25519
constexpr std::size_t kEncSecretBytes = 32;
constexpr std::size_t kSigPublicBytes = 32;  // Ed25519
constexpr std::size_t kSigSecretBytes = 64;
constexpr std::size_t kSymKeyBytes = 32;
constexpr std::size_t kSignatureBytes = 64;
constexpr std::size_t kSealNonceBytes = 24;  // the per-encryption salt
constexpr std::size_t kSealOverheadBytes = 16;
constexpr std::size_t kWrapOverheadBytes = 48; // ephemeral pk + box tag
constexpr std::size_t kMaxPlaintextBytes = 1024 * 1024;

// Entropy source. Implementations either fill the span or throw
// Error(EntropyUnavailable). Must be safe to call from concurrent callers
// when shared (SystemRng is; DrbgRng owns one stream and is not shared).
class Rng {
  public:
    virtual ~Rng() = default;
    virtual void fill(std::span<std::uint8_t> out) = 0;

    Bytes bytes(std::size_t n) {
        Bytes b(n);
        fill(b);
        return b;
    }
};

// Process-wide OS entropy.
class SystemRng final : public Rng {
  public:
    void fill(std::span<std::uint8_t> out) override;
};

// Deterministic stream for simulation: ChaCha20 keystream keyed from
// (seed, stream). Same (seed, stream) yields the same byte sequence.
class DrbgRng final : public Rng {
  public:
    DrbgRng(std::uint64_t seed, std::uint64_t stream);
    void fill(std::span<std::uint8_t> out) override;

    std::uint64_t next_u64();
    // Uniform in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n);

  private:
    std::array<std::uint8_t, 32> key_;
    std::uint64_t counter_ = 0;
    std::array<std::uint8_t, 64> block_{};
    std::size_t used_ = 64;
};

struct PublicKeyBundle {
    UserId user;
    Bytes enc_public; // kEncPublicBytes
    Bytes sig_public; // kSigPublicBytes

    bool operator==(const PublicKeyBundle&) const = default;
};

struct Identity {
    UserId user;
    Bytes enc_secret;
    Bytes sig_secret;
    PublicKeyBundle public_bundle;
};

struct SymKey {
    std::array<std::uint8_t, kSymKeyBytes> bytes{};

    bool operator==(const SymKey&) const = default;
    ByteView view() const { return ByteView(bytes.data(), bytes.size()); }
};

struct SealedBox {
    Bytes nonce;      // unique per encryption
    Bytes ciphertext; // authenticated

    bool operator==(const SealedBox&) const = default;
};

using Signature = Bytes; // kSignatureBytes when valid

Identity gen_identity(const UserId& user, Rng& rng);
SymKey gen_sym_key(Rng& rng);

// Hybrid envelope: seals k so only the holder of the matching decryption
// secret can recover it. Layout is libsodium sealed-box compatible
// (ephemeral public key || box); the ephemeral seed comes from rng so
// simulation runs are reproducible.
Bytes wrap_key(const SymKey& k, const PublicKeyBundle& receiver, Rng& rng);
SymKey unwrap_key(ByteView wrapped, const Identity& receiver);

SealedBox seal(ByteView plaintext, const SymKey& k, Rng& rng);
Bytes open_box(const SealedBox& box, const SymKey& k);

Signature sign(ByteView msg, const Identity& signer);
// Never throws; malformed input is simply invalid.
bool verify(ByteView msg, const Signature& sig, const PublicKeyBundle& pub);

std::string sha256_hex(ByteView data);

} // namespace dcs
