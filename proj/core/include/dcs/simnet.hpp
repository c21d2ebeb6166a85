// simnet.hpp -- deterministic in-process harness: N agents and one
// synchronizer on a simulated network, with scripted offline periods,
// crashes, and a virtual clock. Same scenario, same trace, byte for byte.
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "dcs/agent.hpp"
#include "dcs/synchronizer.hpp"

namespace dcs::sim {

struct OpCreate {
    DossierId dossier;
    FieldMap fields;
};
struct OpSet {
    DossierId dossier;
    FieldName name;
    FieldValue value;
};
struct OpDel {
    DossierId dossier;
    FieldName name;
};
struct OpGrant {
    DossierId dossier;
    UserId receiver;
    FieldNameSet fields;
};
struct OpRevoke {
    DossierId dossier;
    UserId receiver;
};
struct OpPush {
    DossierId dossier;
};
struct OpPull {};
struct OpUse {
    DossierId dossier;
};

using AgentOp = std::variant<OpCreate, OpSet, OpDel, OpGrant, OpRevoke, OpPush,
                             OpPull, OpUse>;

struct EvAgentOp {
    UserId user;
    AgentOp op;
};
struct EvGoOffline {
    UserId user;
};
struct EvGoOnline {
    UserId user;
};
struct EvCrashSync {};
struct EvRestartSync {};
struct EvAdvanceClock {
    std::uint64_t seconds = 0;
};

using Event = std::variant<EvAgentOp, EvGoOffline, EvGoOnline, EvCrashSync,
                           EvRestartSync, EvAdvanceClock>;

struct Scenario {
    std::uint64_t seed = 0;
    std::vector<UserId> agents;
    std::vector<Event> script;
    AgentConfig agent_config;
};

// Scenario files are frame-wrapped canonical encodings of this form.
Bytes encode_scenario(const Scenario& sc);
Scenario decode_scenario(ByteView b);

// Record 0 is setup (identity registration); script events follow at 1..n.
struct TraceRecord {
    std::uint64_t event_index = 0;
    std::string actor; // acting user, "sync", or "" for setup
    std::vector<Bytes> messages; // canonical request/response bytes, in order
    std::map<std::string, std::string> digests; // "sync" and per-user state digests
    std::vector<std::string> errors;
};

struct UseRecord {
    UserId user;
    DossierId dossier;
    Version version = 0;
    Bytes view_bytes;
};

struct RunResult {
    Scenario scenario;
    std::vector<TraceRecord> trace;

    // final world
    std::map<UserId, AgentState> final_agents;
    std::map<UserId, Identity> identities;
    SyncState final_sync;
    bool queues_drained = false;
    std::map<UserId, std::size_t> unflushed_ops;

    // byte corpora for the confidentiality sweep
    std::vector<Bytes> sync_serializations; // after every event
    std::vector<Bytes> sync_disk_bytes;     // at crash points and at end
    std::vector<Bytes> wire_bytes;          // every message either way
    std::map<UserId, Bytes> agent_serializations; // final states
    std::map<UserId, Bytes> agent_disk_bytes;     // final snapshot+log bytes

    // oracle inputs for the checks
    std::map<Bytes, UserId> sym_keys;            // key bytes -> generating owner
    std::map<UserId, std::set<Bytes>> exposure;  // values legitimately delivered
    // dossier -> receiver -> version -> every distinct redaction pushed at
    // that version (re-grants can push one version under different field
    // sets; whichever lands first at the receiver wins)
    std::map<DossierId,
             std::map<UserId, std::map<Version, std::vector<Bytes>>>>
        pushed_views;
    std::vector<UseRecord> uses; // successful Use outputs
};

RunResult run_scenario(const Scenario& sc);

// Canonical serialization of the trace; equal scenarios yield equal bytes.
Bytes trace_bytes(const RunResult& run);

struct CheckReport {
    std::vector<std::string> violations;
    std::vector<std::string> notes;
    bool ok() const { return violations.empty(); }
};

// For every active grant: the receiver's decrypted record equals the
// owner-side redaction at the highest pushed version. Revoked receivers are
// classified revoked-ok. Throws QueuesNotDrained.
CheckReport check_convergence(const RunResult& run);

// Scans synchronizer bytes (memory and disk), all wire traffic, and every
// non-authorized agent's bytes for planted 32-byte canaries and for raw
// symmetric keys, in both raw and base64-embedded form.
CheckReport check_confidentiality(const RunResult& run);

// Digest over every agent's decrypted converged views; the unit of the
// offline-equivalence comparison.
std::string converged_view_digest(const RunResult& run);

// True when any byte corpus would reveal `needle` directly or embedded in a
// base64 string (any alignment).
bool leaks(ByteView hay, ByteView needle);

} // namespace dcs::sim
