// agent.hpp -- the trusted client agent: local plaintext store for owned
// dossiers, ciphertext-only store for foreign ones, and the Grant / Send /
// Receive / Use / Revoke sequences against a synchronizer
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcs/crypto.hpp"
#include "dcs/model.hpp"
#include "dcs/net.hpp"
#include "dcs/store.hpp"
#include "dcs/wire.hpp"

namespace dcs {

enum class RevokePolicy {
    Purge,  // delete the foreign record when the key is gone
    Retain, // keep the ciphertext; rights may be restored
};

struct AgentConfig {
    RevokePolicy revoke_policy = RevokePolicy::Retain;
    std::uint64_t key_cache_ttl_seconds = 0; // 0 disables caching
};

// A foreign dossier is ciphertext at rest; decryption happens at Use.
struct ForeignRecord {
    DossierId id;
    UserId owner;
    Version version = 1;
    Bytes nonce;
    Bytes ciphertext;

    bool operator==(const ForeignRecord&) const = default;
};

struct KeyState {
    SymKey key;
    bool active = true; // inactive after revoke, kept for restored rights

    bool operator==(const KeyState&) const = default;
};

struct AgentState {
    UserId user;
    std::uint64_t next_seq = 1;
    std::map<UserId, PublicKeyBundle> pinned; // peer bundles, first fetch wins
    std::map<DossierId, Dossier> owned;
    Acl acl;
    std::map<DossierId, std::map<UserId, KeyState>> keys;
    std::map<DossierId, ForeignRecord> foreign;

    bool operator==(const AgentState&) const = default;
};

Bytes encode_agent_state(const AgentState& s);
AgentState decode_agent_state(ByteView b, const UserId& user);

struct PushOutcome {
    UserId receiver;
    Version version = 0;
    std::optional<Errc> error; // set when this receiver's send failed
};

struct PullOutcome {
    std::size_t applied = 0;
    std::size_t stale = 0;
    std::size_t quarantined = 0; // bad signature or identity mismatch, not acked
};

struct UseOutcome {
    RedactedView view;
    bool owned = false;
};

// Identity file I/O (frame-wrapped canonical encoding, owner-only perms).
void save_identity(const std::filesystem::path& file, const Identity& id);
Identity load_identity(const std::filesystem::path& file);

class Agent {
  public:
    Agent(const std::filesystem::path& store_dir, Identity identity,
          AgentConfig config, Rng& rng, Durability durability);

    const AgentState& state() const { return state_; }
    const Identity& identity() const { return identity_; }
    const AgentConfig& config() const { return config_; }
    Bytes state_bytes() const { return encode_agent_state(state_); }
    void save();

    // Registers this agent's public bundle (trust-on-first-use server side).
    void register_identity(net::Transport& t);

    void create_dossier(const DossierId& id, FieldMap fields);
    // nullopt deletes the field. Bumps the version either way.
    void edit_field(const DossierId& id, const FieldName& name,
                    std::optional<FieldValue> value);

    // Installs a fresh (or retained) key for (id, receiver) at the
    // synchronizer, records the ACL row, and pushes the current redacted
    // view so the receiver gets data along with its grant.
    void grant(net::Transport& t, const DossierId& id, const UserId& receiver,
               const FieldNameSet& fields);

    // Sends a per-receiver redacted, sealed copy of the dossier to every
    // receiver in its ACL. Per-receiver failures do not stop the fan-out.
    std::vector<PushOutcome> push(net::Transport& t, const DossierId& id);

    // Fetches pending entries, applies the newer-version rule to local
    // ciphertext records, and acks exactly the applied or stale entries.
    PullOutcome pull(net::Transport& t);

    // Owned dossiers resolve locally; foreign ones fetch + unwrap the key
    // (or hit the TTL cache) and decrypt. Throws AccessRevoked when the
    // synchronizer no longer holds a key for us.
    UseOutcome use_dossier(net::Transport& t, const DossierId& id,
                           std::uint64_t now_seconds = 0);

    void revoke(net::Transport& t, const DossierId& id, const UserId& receiver);

    std::optional<SymKey> key_cache_lookup(const DossierId& id,
                                           std::uint64_t now_seconds);

  private:
    std::uint64_t take_seq();
    const PublicKeyBundle& bundle_of(net::Transport& t, const UserId& user);
    void log_apply(const Bytes& command);
    wire::Message signed_request(wire::Message m);

    Identity identity_;
    AgentConfig config_;
    AgentState state_;
    Store store_;
    Rng& rng_;

    struct CachedKey {
        SymKey key;
        std::uint64_t fetched_at = 0;
    };
    std::map<DossierId, CachedKey> key_cache_; // in-memory only
};

// Pure replay of one agent command; shared by the live path and load().
void agent_apply_command(AgentState& s, ByteView command);

} // namespace dcs
