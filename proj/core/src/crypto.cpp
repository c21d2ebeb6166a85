#include "dcs/crypto.hpp"

#include <sodium.h>

#include <cstring>
#include <mutex>

namespace dcs {

namespace {

void ensure_sodium() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() == -1)
            throw Error(Errc::EntropyUnavailable, "sodium_init failed");
    });
}

void check_bundle(const PublicKeyBundle& pub) {
    if (pub.enc_public.size() != kEncPublicBytes ||
        pub.sig_public.size() != kSigPublicBytes)
        throw Error(Errc::MalformedPublicKey, pub.user);
}

// Sealed-box nonce rule: BLAKE2b-24(ephemeral_pk || recipient_pk).
void seal_nonce(std::uint8_t* nonce, const std::uint8_t* epk,
                const std::uint8_t* rpk) {
    crypto_generichash_state st;
    crypto_generichash_init(&st, nullptr, 0, crypto_box_NONCEBYTES);
    crypto_generichash_update(&st, epk, crypto_box_PUBLICKEYBYTES);
    crypto_generichash_update(&st, rpk, crypto_box_PUBLICKEYBYTES);
    crypto_generichash_final(&st, nonce, crypto_box_NONCEBYTES);
}

} // namespace

void SystemRng::fill(std::span<std::uint8_t> out) {
    ensure_sodium();
    randombytes_buf(out.data(), out.size());
}

DrbgRng::DrbgRng(std::uint64_t seed, std::uint64_t stream) {
    ensure_sodium();
    std::uint8_t input[16 + 16];
    std::memset(input, 0, sizeof input);
    std::memcpy(input, "dcs-drbg-v1", 11);
    for (int i = 0; i < 8; ++i) {
        input[16 + i] = static_cast<std::uint8_t>(seed >> (8 * i));
        input[24 + i] = static_cast<std::uint8_t>(stream >> (8 * i));
    }
    crypto_generichash(key_.data(), key_.size(), input, sizeof input, nullptr, 0);
}

void DrbgRng::fill(std::span<std::uint8_t> out) {
    static const std::uint8_t kNonce[crypto_stream_chacha20_NONCEBYTES] = {
        'd', 'c', 's', 'r', 'n', 'g', '0', '1'};
    std::size_t i = 0;
    while (i < out.size()) {
        if (used_ == block_.size()) {
            std::memset(block_.data(), 0, block_.size());
            crypto_stream_chacha20_xor_ic(block_.data(), block_.data(),
                                          block_.size(), kNonce, counter_,
                                          key_.data());
            counter_ += block_.size() / 64;
            used_ = 0;
        }
        const std::size_t take =
            std::min(out.size() - i, block_.size() - used_);
        std::memcpy(out.data() + i, block_.data() + used_, take);
        used_ += take;
        i += take;
    }
}

std::uint64_t DrbgRng::next_u64() {
    std::uint8_t b[8];
    fill(b);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

std::uint64_t DrbgRng::below(std::uint64_t n) {
    // rejection sampling to avoid modulo bias
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % n;
}

Identity gen_identity(const UserId& user, Rng& rng) {
    ensure_sodium();
    Identity id;
    id.user = user;

    std::uint8_t seed[32];
    rng.fill(seed);
    id.enc_secret.resize(crypto_box_SECRETKEYBYTES);
    Bytes enc_pub(crypto_box_PUBLICKEYBYTES);
    crypto_box_seed_keypair(enc_pub.data(), id.enc_secret.data(), seed);

    rng.fill(seed);
    id.sig_secret.resize(crypto_sign_SECRETKEYBYTES);
    Bytes sig_pub(crypto_sign_PUBLICKEYBYTES);
    crypto_sign_seed_keypair(sig_pub.data(), id.sig_secret.data(), seed);

    id.public_bundle = PublicKeyBundle{user, std::move(enc_pub), std::move(sig_pub)};
    return id;
}

SymKey gen_sym_key(Rng& rng) {
    SymKey k;
    rng.fill(k.bytes);
    return k;
}

Bytes wrap_key(const SymKey& k, const PublicKeyBundle& receiver, Rng& rng) {
    ensure_sodium();
    check_bundle(receiver);

    std::uint8_t seed[32];
    rng.fill(seed);
    std::uint8_t epk[crypto_box_PUBLICKEYBYTES];
    std::uint8_t esk[crypto_box_SECRETKEYBYTES];
    crypto_box_seed_keypair(epk, esk, seed);

    std::uint8_t nonce[crypto_box_NONCEBYTES];
    seal_nonce(nonce, epk, receiver.enc_public.data());

    Bytes out(crypto_box_PUBLICKEYBYTES + kSymKeyBytes + crypto_box_MACBYTES);
    std::memcpy(out.data(), epk, crypto_box_PUBLICKEYBYTES);
    if (crypto_box_easy(out.data() + crypto_box_PUBLICKEYBYTES, k.bytes.data(),
                        k.bytes.size(), nonce, receiver.enc_public.data(),
                        esk) != 0)
        throw Error(Errc::MalformedPublicKey, receiver.user);
    sodium_memzero(esk, sizeof esk);
    sodium_memzero(seed, sizeof seed);
    return out;
}

SymKey unwrap_key(ByteView wrapped, const Identity& receiver) {
    ensure_sodium();
    if (wrapped.size() != crypto_box_SEALBYTES + kSymKeyBytes)
        throw Error(Errc::UnwrapFailed, "bad length");
    // sealed boxes need the recipient public key for the nonce derivation
    std::uint8_t pk[crypto_box_PUBLICKEYBYTES];
    if (receiver.public_bundle.enc_public.size() != kEncPublicBytes ||
        receiver.enc_secret.size() != kEncSecretBytes)
        throw Error(Errc::UnwrapFailed, "bad identity");
    std::memcpy(pk, receiver.public_bundle.enc_public.data(), sizeof pk);

    SymKey k;
    if (crypto_box_seal_open(k.bytes.data(), wrapped.data(), wrapped.size(),
                             pk, receiver.enc_secret.data()) != 0)
        throw Error(Errc::UnwrapFailed);
    return k;
}

SealedBox seal(ByteView plaintext, const SymKey& k, Rng& rng) {
    ensure_sodium();
    if (plaintext.size() > kMaxPlaintextBytes)
        throw Error(Errc::PlaintextTooLarge);

    SealedBox box;
    box.nonce = rng.bytes(crypto_aead_xchacha20poly1305_ietf_NPUBBYTES);
    box.ciphertext.resize(plaintext.size() +
                          crypto_aead_xchacha20poly1305_ietf_ABYTES);
    unsigned long long clen = 0;
    crypto_aead_xchacha20poly1305_ietf_encrypt(
        box.ciphertext.data(), &clen, plaintext.data(), plaintext.size(),
        nullptr, 0, nullptr, box.nonce.data(), k.bytes.data());
    box.ciphertext.resize(clen);
    return box;
}

Bytes open_box(const SealedBox& box, const SymKey& k) {
    ensure_sodium();
    if (box.nonce.size() != crypto_aead_xchacha20poly1305_ietf_NPUBBYTES ||
        box.ciphertext.size() < crypto_aead_xchacha20poly1305_ietf_ABYTES)
        throw Error(Errc::OpenFailed);

    Bytes plaintext(box.ciphertext.size() -
                    crypto_aead_xchacha20poly1305_ietf_ABYTES);
    unsigned long long mlen = 0;
    if (crypto_aead_xchacha20poly1305_ietf_decrypt(
            plaintext.data(), &mlen, nullptr, box.ciphertext.data(),
            box.ciphertext.size(), nullptr, 0, box.nonce.data(),
            k.bytes.data()) != 0)
        throw Error(Errc::OpenFailed);
    plaintext.resize(mlen);
    return plaintext;
}

Signature sign(ByteView msg, const Identity& signer) {
    ensure_sodium();
    if (signer.sig_secret.size() != kSigSecretBytes)
        throw Error(Errc::MalformedPublicKey, signer.user);
    Signature sig(crypto_sign_BYTES);
    crypto_sign_detached(sig.data(), nullptr, msg.data(), msg.size(),
                         signer.sig_secret.data());
    return sig;
}

bool verify(ByteView msg, const Signature& sig, const PublicKeyBundle& pub) {
    ensure_sodium();
    if (sig.size() != crypto_sign_BYTES ||
        pub.sig_public.size() != kSigPublicBytes)
        return false;
    return crypto_sign_verify_detached(sig.data(), msg.data(), msg.size(),
                                       pub.sig_public.data()) == 0;
}

std::string sha256_hex(ByteView data) {
    ensure_sodium();
    std::uint8_t digest[crypto_hash_sha256_BYTES];
    crypto_hash_sha256(digest, data.data(), data.size());
    return hex_encode(ByteView(digest, sizeof digest));
}

} // namespace dcs
