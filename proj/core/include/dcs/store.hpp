// store.hpp -- snapshot + append-log persistence: full state in memory,
// startup replay of the command log, shutdown serialization
#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "dcs/bytes.hpp"
#include "dcs/errors.hpp"

namespace dcs {

enum class Durability {
    Fsync, // flush + fsync on every append (daemon mode)
    Flush, // flush only (simulation mode: crashes are process-level)
};

struct LoadedState {
    Bytes snapshot_body;             // canonical state encoding, empty at bootstrap
    std::vector<Bytes> log_records;  // command encodings, in sequence order
    std::uint64_t sequence = 0;      // snapshot sequence (records folded in)
    bool torn_tail_discarded = false;
};

// One directory = one state owner. The lock marker is flock(2)-guarded so a
// crashed owner never wedges recovery. Layout:
//   snapshot.dc  frame-wrapped canonical Snapshot
//   log.dc       concatenated frame-wrapped LogRecords
//   lock         owner pid + nonce
class Store {
  public:
    Store(const std::filesystem::path& dir, std::string suite_id,
          std::string state_kind, Durability durability);
    ~Store();

    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;
    Store(Store&& other) noexcept
        : dir_(std::move(other.dir_)), suite_id_(std::move(other.suite_id_)),
          state_kind_(std::move(other.state_kind_)),
          durability_(other.durability_), lock_fd_(other.lock_fd_),
          log_(other.log_), sequence_(other.sequence_) {
        other.lock_fd_ = -1;
        other.log_ = nullptr;
    }

    // Reads the snapshot and every complete log record. A torn final record
    // is discarded. Throws CorruptSnapshot, LogGap, SuiteMismatch.
    LoadedState load();

    // Durably appends one command before the caller applies it. Returns the
    // record's sequence number.
    std::uint64_t append(ByteView command);

    // Atomically replaces the snapshot (write temp + rename) and truncates
    // the log. Sequence carries forward.
    void save(ByteView state_body);

    std::uint64_t sequence() const { return sequence_; }
    const std::filesystem::path& dir() const { return dir_; }

    static constexpr const char* kSnapshotFile = "snapshot.dc";
    static constexpr const char* kLogFile = "log.dc";
    static constexpr const char* kLockFile = "lock";

  private:
    void write_bootstrap_snapshot();
    void open_log_for_append();

    std::filesystem::path dir_;
    std::string suite_id_;
    std::string state_kind_;
    Durability durability_;
    int lock_fd_ = -1;
    std::FILE* log_ = nullptr;
    std::uint64_t sequence_ = 0; // last sequence handed out or folded
};

} // namespace dcs
