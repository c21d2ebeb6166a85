// synchronizer.hpp -- the remote untrusted synchronizer: public-key
// registry, wrapped-key store, and pending-dossier queues. It never holds
// plaintext or unwrapped keys.
#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <vector>

#include "dcs/crypto.hpp"
#include "dcs/model.hpp"
#include "dcs/store.hpp"
#include "dcs/wire.hpp"

namespace dcs {

struct WrappedKeyRec {
    DossierId dossier;
    UserId owner;
    UserId receiver;
    Bytes wrapped;
    Signature signature; // over the Grant signing bytes, re-checkable

    bool operator==(const WrappedKeyRec&) const = default;
};

struct PendingEntry {
    std::uint64_t entry_id = 0;
    DossierId dossier;
    UserId owner;
    UserId receiver;
    Version version = 1;
    Bytes nonce;
    Bytes ciphertext;
    Signature signature; // over the Send signing bytes

    bool operator==(const PendingEntry&) const = default;
};

struct SyncState {
    std::map<UserId, PublicKeyBundle> registry;
    std::map<DossierId, std::map<UserId, WrappedKeyRec>> keystore;
    std::map<UserId, std::vector<PendingEntry>> pending;
    std::map<UserId, std::uint64_t> last_seq;
    std::uint64_t next_entry_id = 1;

    bool operator==(const SyncState&) const = default;
};

Bytes encode_sync_state(const SyncState& s);
SyncState decode_sync_state(ByteView b);

// Replay applies the server's own durable log, whose records were verified
// at ingest; signatures are not re-checked there.
enum class VerifyMode { Ingest, Replay };

struct ApplyResult {
    wire::Message response;
    bool mutated = false;
};

// The protocol state machine: a pure function of (state, message). Requests
// that fail leave the state untouched and produce an Err response.
ApplyResult sync_apply(SyncState& s, const wire::Message& m,
                       VerifyMode mode = VerifyMode::Ingest);

// Re-verifies every stored signature against the registry. Returns the
// violations (empty means the ingest-time origin check held everywhere).
std::vector<std::string> audit_state(const SyncState& s);

// Store-backed synchronizer: log-then-apply on every mutation, snapshot on
// save. Thread-safe; mutations apply in one total order.
class SyncService {
  public:
    SyncService(const std::filesystem::path& dir, std::string suite_id,
                Durability durability);

    wire::Message handle(const wire::Message& request);

    SyncState state_copy() const;
    Bytes state_bytes() const;
    void save();

  private:
    mutable std::mutex mu_;
    Store store_;
    SyncState state_;
};

} // namespace dcs
