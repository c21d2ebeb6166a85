#include "dcs/store.hpp"

#include <json.hpp>

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <random>

#include "dcs/wire.hpp"

namespace dcs {

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

Bytes read_file(const fs::path& p) {
    std::FILE* f = std::fopen(p.c_str(), "rb");
    if (!f)
        throw Error(Errc::CorruptSnapshot, "cannot open " + p.string());
    Bytes out;
    std::uint8_t buf[65536];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0)
        out.insert(out.end(), buf, buf + n);
    std::fclose(f);
    return out;
}

void flush_file(std::FILE* f, Durability d) {
    if (std::fflush(f) != 0)
        throw Error(errno == ENOSPC ? Errc::DiskFull : Errc::CorruptSnapshot,
                    std::strerror(errno));
    if (d == Durability::Fsync && fsync(fileno(f)) != 0)
        throw Error(Errc::DiskFull, std::strerror(errno));
}

void fsync_dir(const fs::path& dir, Durability d) {
    if (d != Durability::Fsync)
        return;
    int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd >= 0) {
        fsync(fd);
        ::close(fd);
    }
}

// Splits a concatenation of frames. Stops at a torn tail (incomplete length
// prefix or payload) and reports it.
struct FrameScan {
    std::vector<Bytes> frames;
    bool torn = false;
};

FrameScan scan_frames(ByteView data) {
    FrameScan out;
    std::size_t i = 0;
    while (i < data.size()) {
        if (i + 4 > data.size()) {
            out.torn = true;
            break;
        }
        const std::uint32_t n = (std::uint32_t(data[i]) << 24) |
                                (std::uint32_t(data[i + 1]) << 16) |
                                (std::uint32_t(data[i + 2]) << 8) |
                                std::uint32_t(data[i + 3]);
        if (n > wire::kMaxFrameBytes || i + 4 + n > data.size()) {
            out.torn = true;
            break;
        }
        out.frames.emplace_back(data.begin() + i + 4, data.begin() + i + 4 + n);
        i += 4 + n;
    }
    return out;
}

} // namespace

Store::Store(const fs::path& dir, std::string suite_id, std::string state_kind,
             Durability durability)
    : dir_(dir), suite_id_(std::move(suite_id)),
      state_kind_(std::move(state_kind)), durability_(durability) {
    std::error_code ec;
    fs::create_directories(dir_, ec);

    const fs::path lock_path = dir_ / kLockFile;
    lock_fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT, 0600);
    if (lock_fd_ < 0)
        throw Error(Errc::LockLost, "cannot open lock: " + lock_path.string());
    if (flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(lock_fd_);
        lock_fd_ = -1;
        throw Error(Errc::LockLost, "directory already locked: " + dir_.string());
    }
    std::random_device rd;
    char content[64];
    std::snprintf(content, sizeof content, "pid=%d nonce=%08x\n", getpid(),
                  rd());
    if (ftruncate(lock_fd_, 0) == 0) {
        ssize_t written = ::write(lock_fd_, content, std::strlen(content));
        (void)written;
    }

    if (!fs::exists(dir_ / kSnapshotFile))
        write_bootstrap_snapshot();
    open_log_for_append();
}

Store::~Store() {
    if (log_)
        std::fclose(log_);
    if (lock_fd_ >= 0) {
        flock(lock_fd_, LOCK_UN);
        ::close(lock_fd_);
    }
}

void Store::write_bootstrap_snapshot() {
    Json snap = Json::object();
    snap["type"] = "snapshot";
    snap["suite_id"] = suite_id_;
    snap["state_kind"] = state_kind_;
    snap["sequence"] = 0;
    snap["body"] = Json::object();
    const Bytes framed = wire::frame(to_bytes(snap.dump()));

    const fs::path tmp = dir_ / (std::string(kSnapshotFile) + ".tmp");
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f)
        throw Error(Errc::DiskFull, "cannot create snapshot");
    std::fwrite(framed.data(), 1, framed.size(), f);
    flush_file(f, durability_);
    std::fclose(f);
    fs::rename(tmp, dir_ / kSnapshotFile);
    fsync_dir(dir_, durability_);
}

void Store::open_log_for_append() {
    const fs::path log_path = dir_ / kLogFile;
    log_ = std::fopen(log_path.c_str(), "ab");
    if (!log_)
        throw Error(Errc::DiskFull, "cannot open log");
}

LoadedState Store::load() {
    LoadedState out;

    const Bytes snap_raw = read_file(dir_ / kSnapshotFile);
    FrameScan snap_scan = scan_frames(snap_raw);
    if (snap_scan.torn || snap_scan.frames.size() != 1)
        throw Error(Errc::CorruptSnapshot, "snapshot framing");
    Json snap = Json::parse(to_string(snap_scan.frames[0]), nullptr, false);
    if (snap.is_discarded() || !snap.is_object() ||
        snap.value("type", "") != "snapshot" || !snap.contains("body") ||
        !snap.contains("sequence") || !snap["sequence"].is_number_unsigned())
        throw Error(Errc::CorruptSnapshot, "snapshot contents");
    if (snap.value("suite_id", "") != suite_id_)
        throw Error(Errc::SuiteMismatch, snap.value("suite_id", ""));
    if (snap.value("state_kind", "") != state_kind_)
        throw Error(Errc::CorruptSnapshot, "state kind");

    out.sequence = snap["sequence"].get<std::uint64_t>();
    if (!snap["body"].is_object())
        throw Error(Errc::CorruptSnapshot, "snapshot body");
    if (!snap["body"].empty())
        out.snapshot_body = to_bytes(snap["body"].dump());

    const fs::path log_path = dir_ / kLogFile;
    if (fs::exists(log_path)) {
        const Bytes log_raw = read_file(log_path);
        FrameScan log_scan = scan_frames(log_raw);
        std::uint64_t expect = out.sequence;
        for (std::size_t i = 0; i < log_scan.frames.size(); ++i) {
            Json rec = Json::parse(to_string(log_scan.frames[i]), nullptr, false);
            const bool last = i + 1 == log_scan.frames.size() && !log_scan.torn;
            if (rec.is_discarded() || !rec.is_object() ||
                rec.value("type", "") != "log_record" ||
                !rec.contains("sequence") ||
                !rec["sequence"].is_number_unsigned() || !rec.contains("record")) {
                // a complete-looking but unparseable final frame is treated
                // as a torn tail; anywhere else it is corruption
                if (last) {
                    out.torn_tail_discarded = true;
                    break;
                }
                throw Error(Errc::LogGap, "unparseable log record");
            }
            const std::uint64_t seq = rec["sequence"].get<std::uint64_t>();
            if (seq != expect + 1)
                throw Error(Errc::LogGap, "expected sequence " +
                                              std::to_string(expect + 1) +
                                              ", found " + std::to_string(seq));
            expect = seq;
            out.log_records.push_back(to_bytes(rec["record"].dump()));
        }
        if (log_scan.torn)
            out.torn_tail_discarded = true;
        sequence_ = expect;
    } else {
        sequence_ = out.sequence;
    }

    if (out.torn_tail_discarded) {
        // drop the torn tail so future appends start at a clean boundary
        std::fclose(log_);
        std::FILE* f = std::fopen(log_path.c_str(), "wb");
        if (!f)
            throw Error(Errc::DiskFull, "cannot rewrite log");
        for (std::uint64_t i = 0; i < out.log_records.size(); ++i) {
            Json rec = Json::object();
            rec["type"] = "log_record";
            rec["sequence"] = out.sequence + i + 1;
            rec["record"] = Json::parse(to_string(out.log_records[i]));
            const Bytes framed = wire::frame(to_bytes(rec.dump()));
            std::fwrite(framed.data(), 1, framed.size(), f);
        }
        flush_file(f, durability_);
        std::fclose(f);
        open_log_for_append();
        std::fprintf(stderr,
                     "store: discarded torn log tail in %s (recovered %zu records)\n",
                     dir_.c_str(), out.log_records.size());
    }

    return out;
}

std::uint64_t Store::append(ByteView command) {
    if (lock_fd_ < 0 || flock(lock_fd_, LOCK_EX | LOCK_NB) != 0)
        throw Error(Errc::LockLost, dir_.string());

    const std::uint64_t seq = sequence_ + 1;
    Json rec = Json::object();
    rec["type"] = "log_record";
    rec["sequence"] = seq;
    Json cmd = Json::parse(to_string(command), nullptr, false);
    if (cmd.is_discarded())
        throw Error(Errc::Malformed, "command not canonical");
    rec["record"] = std::move(cmd);

    const Bytes framed = wire::frame(to_bytes(rec.dump()));
    if (std::fwrite(framed.data(), 1, framed.size(), log_) != framed.size())
        throw Error(Errc::DiskFull, "log append");
    flush_file(log_, durability_);
    sequence_ = seq;
    return seq;
}

void Store::save(ByteView state_body) {
    Json body = Json::parse(to_string(state_body), nullptr, false);
    if (body.is_discarded() || !body.is_object())
        throw Error(Errc::Malformed, "state body not canonical");

    Json snap = Json::object();
    snap["type"] = "snapshot";
    snap["suite_id"] = suite_id_;
    snap["state_kind"] = state_kind_;
    snap["sequence"] = sequence_;
    snap["body"] = std::move(body);
    const Bytes framed = wire::frame(to_bytes(snap.dump()));

    const fs::path tmp = dir_ / (std::string(kSnapshotFile) + ".tmp");
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f)
        throw Error(Errc::DiskFull, "cannot create snapshot");
    if (std::fwrite(framed.data(), 1, framed.size(), f) != framed.size()) {
        std::fclose(f);
        throw Error(Errc::DiskFull, "snapshot write");
    }
    flush_file(f, durability_);
    std::fclose(f);
    fs::rename(tmp, dir_ / kSnapshotFile);
    fsync_dir(dir_, durability_);

    // log truncates only after the snapshot is durably in place
    std::fclose(log_);
    std::FILE* lf = std::fopen((dir_ / kLogFile).c_str(), "wb");
    if (!lf)
        throw Error(Errc::DiskFull, "cannot truncate log");
    flush_file(lf, durability_);
    std::fclose(lf);
    open_log_for_append();
}

} // namespace dcs
