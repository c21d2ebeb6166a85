#include "dcs/simnet.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <memory>

namespace dcs::sim {

namespace fs = std::filesystem;
using Json = nlohmann::json;
using namespace wire;

namespace {

Json op_json(const AgentOp& op) {
    Json j = Json::object();
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, OpCreate>) {
                j["op"] = "create";
                j["dossier"] = v.dossier;
                Json fields = Json::object();
                for (const auto& [name, value] : v.fields)
                    fields[name] = base64_encode(value);
                j["fields"] = std::move(fields);
            } else if constexpr (std::is_same_v<T, OpSet>) {
                j["op"] = "set";
                j["dossier"] = v.dossier;
                j["name"] = v.name;
                j["value"] = base64_encode(v.value);
            } else if constexpr (std::is_same_v<T, OpDel>) {
                j["op"] = "del";
                j["dossier"] = v.dossier;
                j["name"] = v.name;
            } else if constexpr (std::is_same_v<T, OpGrant>) {
                j["op"] = "grant";
                j["dossier"] = v.dossier;
                j["receiver"] = v.receiver;
                j["fields"] = v.fields;
            } else if constexpr (std::is_same_v<T, OpRevoke>) {
                j["op"] = "revoke";
                j["dossier"] = v.dossier;
                j["receiver"] = v.receiver;
            } else if constexpr (std::is_same_v<T, OpPush>) {
                j["op"] = "push";
                j["dossier"] = v.dossier;
            } else if constexpr (std::is_same_v<T, OpPull>) {
                j["op"] = "pull";
            } else if constexpr (std::is_same_v<T, OpUse>) {
                j["op"] = "use";
                j["dossier"] = v.dossier;
            }
        },
        op);
    return j;
}

AgentOp op_from(const Json& j) {
    const std::string op = j.value("op", "");
    try {
        if (op == "create") {
            OpCreate v;
            v.dossier = j.at("dossier").get<std::string>();
            for (const auto& [name, value] : j.at("fields").items()) {
                auto d = base64_decode(value.get_ref<const std::string&>());
                if (!d)
                    throw Error(Errc::InvalidScenario, "field value");
                v.fields.emplace(name, std::move(*d));
            }
            return v;
        }
        if (op == "set") {
            OpSet v;
            v.dossier = j.at("dossier").get<std::string>();
            v.name = j.at("name").get<std::string>();
            auto d = base64_decode(j.at("value").get_ref<const std::string&>());
            if (!d)
                throw Error(Errc::InvalidScenario, "value");
            v.value = std::move(*d);
            return v;
        }
        if (op == "del")
            return OpDel{j.at("dossier").get<std::string>(),
                         j.at("name").get<std::string>()};
        if (op == "grant") {
            OpGrant v;
            v.dossier = j.at("dossier").get<std::string>();
            v.receiver = j.at("receiver").get<std::string>();
            for (const auto& f : j.at("fields"))
                v.fields.insert(f.get<std::string>());
            return v;
        }
        if (op == "revoke")
            return OpRevoke{j.at("dossier").get<std::string>(),
                            j.at("receiver").get<std::string>()};
        if (op == "push")
            return OpPush{j.at("dossier").get<std::string>()};
        if (op == "pull")
            return OpPull{};
        if (op == "use")
            return OpUse{j.at("dossier").get<std::string>()};
    } catch (const Json::exception& e) {
        throw Error(Errc::InvalidScenario, e.what());
    }
    throw Error(Errc::InvalidScenario, "unknown op " + op);
}

Json event_json(const Event& ev) {
    Json j = Json::object();
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, EvAgentOp>) {
                j["event"] = "op";
                j["user"] = v.user;
                j["args"] = op_json(v.op);
            } else if constexpr (std::is_same_v<T, EvGoOffline>) {
                j["event"] = "go_offline";
                j["user"] = v.user;
            } else if constexpr (std::is_same_v<T, EvGoOnline>) {
                j["event"] = "go_online";
                j["user"] = v.user;
            } else if constexpr (std::is_same_v<T, EvCrashSync>) {
                j["event"] = "crash_sync";
            } else if constexpr (std::is_same_v<T, EvRestartSync>) {
                j["event"] = "restart_sync";
            } else if constexpr (std::is_same_v<T, EvAdvanceClock>) {
                j["event"] = "advance_clock";
                j["seconds"] = v.seconds;
            }
        },
        ev);
    return j;
}

Event event_from(const Json& j) {
    const std::string ev = j.value("event", "");
    try {
        if (ev == "op")
            return EvAgentOp{j.at("user").get<std::string>(),
                             op_from(j.at("args"))};
        if (ev == "go_offline")
            return EvGoOffline{j.at("user").get<std::string>()};
        if (ev == "go_online")
            return EvGoOnline{j.at("user").get<std::string>()};
        if (ev == "crash_sync")
            return EvCrashSync{};
        if (ev == "restart_sync")
            return EvRestartSync{};
        if (ev == "advance_clock")
            return EvAdvanceClock{j.at("seconds").get<std::uint64_t>()};
    } catch (const Json::exception& e) {
        throw Error(Errc::InvalidScenario, e.what());
    }
    throw Error(Errc::InvalidScenario, "unknown event " + ev);
}

// Unique scratch directory, removed on destruction.
struct ScratchDir {
    fs::path path;

    ScratchDir() {
        std::string tmpl =
            (fs::temp_directory_path() / "dcs-sim-XXXXXX").string();
        if (!mkdtemp(tmpl.data()))
            throw Error(Errc::DiskFull, "mkdtemp failed");
        path = tmpl;
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

Bytes read_file_bytes(const fs::path& p) {
    Bytes out;
    std::FILE* f = std::fopen(p.c_str(), "rb");
    if (!f)
        return out;
    std::uint8_t buf[65536];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0)
        out.insert(out.end(), buf, buf + n);
    std::fclose(f);
    return out;
}

Bytes dir_bytes(const fs::path& dir) {
    Bytes out;
    for (const char* name : {Store::kSnapshotFile, Store::kLogFile}) {
        Bytes b = read_file_bytes(dir / name);
        out.insert(out.end(), b.begin(), b.end());
    }
    return out;
}

struct SimWorld;

// Synchronous request/response through the simulated network; records the
// canonical bytes of everything exchanged.
class SimTransport final : public net::Transport {
  public:
    SimTransport(SimWorld& world, UserId user)
        : world_(world), user_(std::move(user)) {}
    Message roundtrip(const Message& request) override;

  private:
    SimWorld& world_;
    UserId user_;
};

struct SimAgent {
    std::unique_ptr<DrbgRng> rng;
    Identity identity;
    std::unique_ptr<Agent> agent;
    std::unique_ptr<SimTransport> transport;
    fs::path store_dir;
    bool offline = false;
    std::vector<AgentOp> queued; // deferred grant/push/revoke
};

struct SimWorld {
    const Scenario& scenario;
    ScratchDir scratch;
    fs::path sync_dir;
    std::unique_ptr<SyncService> sync;
    std::map<UserId, SimAgent> agents;
    std::uint64_t clock = 0;
    RunResult* run = nullptr;
    std::vector<Bytes>* current_messages = nullptr;

    explicit SimWorld(const Scenario& sc) : scenario(sc) {}
};

Message SimTransport::roundtrip(const Message& request) {
    SimAgent& me = world_.agents.at(user_);
    if (me.offline)
        throw Error(Errc::SyncUnreachable, "agent offline");
    if (!world_.sync)
        throw Error(Errc::SyncUnreachable, "synchronizer down");

    Bytes req_bytes = canonical_encode(request);
    if (world_.current_messages)
        world_.current_messages->push_back(req_bytes);
    world_.run->wire_bytes.push_back(std::move(req_bytes));

    Message response = world_.sync->handle(request);

    Bytes resp_bytes = canonical_encode(response);
    if (world_.current_messages)
        world_.current_messages->push_back(resp_bytes);
    world_.run->wire_bytes.push_back(std::move(resp_bytes));
    return response;
}

bool network_op(const AgentOp& op) {
    return std::holds_alternative<OpGrant>(op) ||
           std::holds_alternative<OpPush>(op) ||
           std::holds_alternative<OpRevoke>(op);
}

// Exposure and pushed-view bookkeeping for a successful delivery of
// (dossier, receiver) at the owner's current version.
void record_push(RunResult& run, const AgentState& owner_state,
                 const DossierId& id, const UserId& receiver,
                 const FieldNameSet& granted) {
    const Dossier& d = owner_state.owned.at(id);
    FieldNameSet allowed;
    for (const FieldName& f : granted)
        if (d.fields.count(f))
            allowed.insert(f);
    const RedactedView view = redact(d, allowed);
    Bytes bytes = encode_view(view);
    for (const auto& [name, value] : view.fields)
        run.exposure[receiver].insert(value);
    auto& variants = run.pushed_views[id][receiver][d.version];
    if (std::find(variants.begin(), variants.end(), bytes) == variants.end())
        variants.push_back(std::move(bytes));
}

void collect_sym_keys(RunResult& run, const UserId& user, const AgentState& s) {
    for (const auto& [id, receivers] : s.keys)
        for (const auto& [receiver, ks] : receivers)
            run.sym_keys.emplace(Bytes(ks.key.bytes.begin(), ks.key.bytes.end()),
                                 user);
}

void execute_op(SimWorld& world, TraceRecord& rec, const UserId& user,
                const AgentOp& op) {
    SimAgent& sa = world.agents.at(user);
    Agent& agent = *sa.agent;
    RunResult& run = *world.run;
    try {
        std::visit(
            [&](const auto& v) {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, OpCreate>) {
                    agent.create_dossier(v.dossier, v.fields);
                } else if constexpr (std::is_same_v<T, OpSet>) {
                    agent.edit_field(v.dossier, v.name, v.value);
                } else if constexpr (std::is_same_v<T, OpDel>) {
                    agent.edit_field(v.dossier, v.name, std::nullopt);
                } else if constexpr (std::is_same_v<T, OpGrant>) {
                    agent.grant(*sa.transport, v.dossier, v.receiver, v.fields);
                    record_push(run, agent.state(), v.dossier, v.receiver,
                                v.fields);
                } else if constexpr (std::is_same_v<T, OpRevoke>) {
                    agent.revoke(*sa.transport, v.dossier, v.receiver);
                } else if constexpr (std::is_same_v<T, OpPush>) {
                    const auto outcomes = agent.push(*sa.transport, v.dossier);
                    for (const PushOutcome& out : outcomes) {
                        if (out.error) {
                            rec.errors.push_back(
                                "push " + v.dossier + "->" + out.receiver +
                                ": " + std::string(errc_name(*out.error)));
                        } else {
                            const FieldNameSet* granted =
                                agent.state().acl.lookup(v.dossier,
                                                         out.receiver);
                            if (granted)
                                record_push(run, agent.state(), v.dossier,
                                            out.receiver, *granted);
                        }
                    }
                } else if constexpr (std::is_same_v<T, OpPull>) {
                    agent.pull(*sa.transport);
                } else if constexpr (std::is_same_v<T, OpUse>) {
                    UseOutcome out =
                        agent.use_dossier(*sa.transport, v.dossier, world.clock);
                    run.uses.push_back(UseRecord{user, v.dossier,
                                                 out.view.version,
                                                 encode_view(out.view)});
                }
            },
            op);
    } catch (const Error& e) {
        rec.errors.push_back(user + ": " + e.what());
    }
    collect_sym_keys(run, user, agent.state());
}

void snapshot_world(SimWorld& world, TraceRecord& rec) {
    RunResult& run = *world.run;
    if (world.sync) {
        Bytes state = world.sync->state_bytes();
        rec.digests["sync"] = sha256_hex(state);
        run.sync_serializations.push_back(std::move(state));
    } else {
        rec.digests["sync"] = "down";
    }
    for (const auto& [user, sa] : world.agents)
        rec.digests[user] = sha256_hex(sa.agent->state_bytes());
}

} // namespace

Bytes encode_scenario(const Scenario& sc) {
    Json j = Json::object();
    j["type"] = "scenario";
    j["seed"] = sc.seed;
    j["agents"] = sc.agents;
    Json config = Json::object();
    config["revoke_policy"] =
        sc.agent_config.revoke_policy == RevokePolicy::Purge ? "purge"
                                                             : "retain";
    config["key_cache_ttl_seconds"] = sc.agent_config.key_cache_ttl_seconds;
    j["config"] = std::move(config);
    Json script = Json::array();
    for (const Event& ev : sc.script)
        script.push_back(event_json(ev));
    j["script"] = std::move(script);
    return to_bytes(j.dump());
}

Scenario decode_scenario(ByteView b) {
    Json j = Json::parse(to_string(b), nullptr, false);
    if (j.is_discarded() || !j.is_object() || j.value("type", "") != "scenario")
        throw Error(Errc::InvalidScenario, "not a scenario");
    Scenario sc;
    try {
        sc.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& a : j.at("agents"))
            sc.agents.push_back(a.get<std::string>());
        const Json& config = j.at("config");
        const std::string policy = config.at("revoke_policy").get<std::string>();
        if (policy == "purge")
            sc.agent_config.revoke_policy = RevokePolicy::Purge;
        else if (policy == "retain")
            sc.agent_config.revoke_policy = RevokePolicy::Retain;
        else
            throw Error(Errc::InvalidScenario, "revoke_policy");
        sc.agent_config.key_cache_ttl_seconds =
            config.at("key_cache_ttl_seconds").get<std::uint64_t>();
        for (const auto& ej : j.at("script"))
            sc.script.push_back(event_from(ej));
    } catch (const Json::exception& e) {
        throw Error(Errc::InvalidScenario, e.what());
    }
    return sc;
}

RunResult run_scenario(const Scenario& sc) {
    if (sc.agents.empty())
        throw Error(Errc::InvalidScenario, "no agents");
    std::set<UserId> declared;
    for (const UserId& u : sc.agents) {
        if (!valid_user_id(u))
            throw Error(Errc::InvalidScenario, "bad user id");
        if (!declared.insert(u).second)
            throw Error(Errc::InvalidScenario, "duplicate agent " + u);
    }
    auto known = [&](const UserId& u) {
        if (!declared.count(u))
            throw Error(Errc::InvalidScenario, "undeclared agent " + u);
    };
    for (const Event& ev : sc.script) {
        if (const auto* op = std::get_if<EvAgentOp>(&ev))
            known(op->user);
        else if (const auto* off = std::get_if<EvGoOffline>(&ev))
            known(off->user);
        else if (const auto* on = std::get_if<EvGoOnline>(&ev))
            known(on->user);
    }

    RunResult run;
    run.scenario = sc;

    SimWorld world(sc);
    world.run = &run;
    world.sync_dir = world.scratch.path / "sync";
    world.sync = std::make_unique<SyncService>(world.sync_dir, kSuiteId,
                                               Durability::Flush);

    // setup: identities from the seed, stores, registration (trace record 0)
    TraceRecord setup;
    setup.event_index = 0;
    world.current_messages = &setup.messages;
    std::uint64_t stream = 1;
    std::size_t index = 0;
    for (const UserId& user : sc.agents) {
        SimAgent sa;
        sa.rng = std::make_unique<DrbgRng>(sc.seed, stream++);
        sa.identity = gen_identity(user, *sa.rng);
        sa.store_dir = world.scratch.path / ("a" + std::to_string(index++));
        sa.agent = std::make_unique<Agent>(sa.store_dir, sa.identity,
                                           sc.agent_config, *sa.rng,
                                           Durability::Flush);
        sa.transport = std::make_unique<SimTransport>(world, user);
        world.agents.emplace(user, std::move(sa));
    }
    for (const UserId& user : sc.agents) {
        SimAgent& sa = world.agents.at(user);
        sa.agent->register_identity(*sa.transport);
        run.identities.emplace(user, sa.identity);
    }
    snapshot_world(world, setup);
    run.trace.push_back(std::move(setup));

    // script
    std::uint64_t event_index = 0;
    for (const Event& ev : sc.script) {
        event_index += 1;
        TraceRecord rec;
        rec.event_index = event_index;
        world.current_messages = &rec.messages;

        std::visit(
            [&](const auto& v) {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, EvAgentOp>) {
                    rec.actor = v.user;
                    SimAgent& sa = world.agents.at(v.user);
                    if (sa.offline && network_op(v.op)) {
                        // outbound protocol actions defer to reconnect
                        sa.queued.push_back(v.op);
                    } else {
                        execute_op(world, rec, v.user, v.op);
                    }
                } else if constexpr (std::is_same_v<T, EvGoOffline>) {
                    rec.actor = v.user;
                    world.agents.at(v.user).offline = true;
                } else if constexpr (std::is_same_v<T, EvGoOnline>) {
                    rec.actor = v.user;
                    SimAgent& sa = world.agents.at(v.user);
                    sa.offline = false;
                    std::vector<AgentOp> queued;
                    queued.swap(sa.queued);
                    for (const AgentOp& op : queued)
                        execute_op(world, rec, v.user, op);
                } else if constexpr (std::is_same_v<T, EvCrashSync>) {
                    rec.actor = "sync";
                    if (world.sync) {
                        world.sync.reset(); // in-memory state is gone
                        run.sync_disk_bytes.push_back(
                            dir_bytes(world.sync_dir));
                    }
                } else if constexpr (std::is_same_v<T, EvRestartSync>) {
                    rec.actor = "sync";
                    if (!world.sync)
                        world.sync = std::make_unique<SyncService>(
                            world.sync_dir, kSuiteId, Durability::Flush);
                } else if constexpr (std::is_same_v<T, EvAdvanceClock>) {
                    rec.actor = "clock";
                    world.clock += v.seconds;
                }
            },
            ev);

        snapshot_world(world, rec);
        run.trace.push_back(std::move(rec));
    }
    world.current_messages = nullptr;

    // final world capture
    run.queues_drained = world.sync != nullptr;
    for (auto& [user, sa] : world.agents) {
        if (!sa.queued.empty()) {
            run.unflushed_ops[user] = sa.queued.size();
            run.queues_drained = false;
        }
        run.final_agents.emplace(user, sa.agent->state());
        run.agent_serializations[user] = sa.agent->state_bytes();
    }
    if (world.sync) {
        run.final_sync = world.sync->state_copy();
        for (const auto& [receiver, queue] : run.final_sync.pending)
            if (!queue.empty())
                run.queues_drained = false;
        // durable bytes: the full log first, then the saved snapshot
        run.sync_disk_bytes.push_back(dir_bytes(world.sync_dir));
        world.sync->save();
        run.sync_disk_bytes.push_back(dir_bytes(world.sync_dir));
    } else {
        run.sync_disk_bytes.push_back(dir_bytes(world.sync_dir));
    }
    for (auto& [user, sa] : world.agents) {
        // the full command log first, then the saved snapshot
        Bytes disk = dir_bytes(sa.store_dir);
        sa.agent->save();
        const Bytes saved = dir_bytes(sa.store_dir);
        disk.insert(disk.end(), saved.begin(), saved.end());
        run.agent_disk_bytes[user] = std::move(disk);
    }
    return run;
}

Bytes trace_bytes(const RunResult& run) {
    Json arr = Json::array();
    for (const TraceRecord& rec : run.trace) {
        Json j = Json::object();
        j["event_index"] = rec.event_index;
        j["actor"] = rec.actor;
        Json msgs = Json::array();
        for (const Bytes& m : rec.messages)
            msgs.push_back(base64_encode(m));
        j["messages"] = std::move(msgs);
        j["digests"] = rec.digests;
        j["errors"] = rec.errors;
        arr.push_back(std::move(j));
    }
    return to_bytes(arr.dump());
}

CheckReport check_convergence(const RunResult& run) {
    if (!run.queues_drained)
        throw Error(Errc::QueuesNotDrained);
    CheckReport report;

    for (const auto& [owner, state] : run.final_agents) {
        for (const auto& [id, receivers] : state.acl.entries()) {
            for (const auto& [receiver, granted] : receivers) {
                auto pv = run.pushed_views.find(id);
                if (pv == run.pushed_views.end() ||
                    !pv->second.count(receiver) ||
                    pv->second.at(receiver).empty()) {
                    report.violations.push_back("no pushed view for " + id +
                                                "/" + receiver);
                    continue;
                }
                const auto& versions = pv->second.at(receiver);
                const Version maxv = versions.rbegin()->first;
                const std::vector<Bytes>& expected = versions.rbegin()->second;

                const auto& rstate = run.final_agents.at(receiver);
                auto rec = rstate.foreign.find(id);
                if (rec == rstate.foreign.end()) {
                    report.violations.push_back(receiver + " missing record " +
                                                id);
                    continue;
                }
                if (rec->second.version != maxv) {
                    report.violations.push_back(
                        receiver + " at version " +
                        std::to_string(rec->second.version) + " of " + id +
                        ", expected " + std::to_string(maxv));
                    continue;
                }
                // decrypt with the owner-side key (the independent route;
                // the receiver's own Use path is exercised by the script)
                const auto& ks = state.keys.at(id).at(receiver);
                Bytes plaintext;
                try {
                    plaintext = open_box(
                        SealedBox{rec->second.nonce, rec->second.ciphertext},
                        ks.key);
                } catch (const Error&) {
                    report.violations.push_back(receiver + " record " + id +
                                                " does not decrypt");
                    continue;
                }
                if (std::find(expected.begin(), expected.end(), plaintext) ==
                    expected.end())
                    report.violations.push_back(receiver + " view of " + id +
                                                " differs from redaction at v" +
                                                std::to_string(maxv));
            }
        }
        // revoked pairs: key retained but inactive and no ACL row
        for (const auto& [id, receivers] : state.keys)
            for (const auto& [receiver, ks] : receivers)
                if (!ks.active && !state.acl.lookup(id, receiver))
                    report.notes.push_back("revoked-ok " + id + "/" + receiver);
    }
    return report;
}

bool leaks(ByteView hay, ByteView needle) {
    if (contains(hay, needle))
        return true;
    // base64 embeddings: a needle inside a larger blob appears at one of
    // three alignments; the middle of its encoding is alignment-pure
    for (std::size_t phase = 0; phase < 3 && phase + 6 <= needle.size();
         ++phase) {
        const std::string enc = base64_encode(needle.subspan(phase));
        if (enc.size() < 8)
            continue;
        const std::string core = enc.substr(0, (enc.size() / 4 - 1) * 4);
        if (!core.empty() && contains(hay, to_bytes(core)))
            return true;
    }
    return false;
}

CheckReport check_confidentiality(const RunResult& run) {
    CheckReport report;

    // canaries: 32-byte field values planted by the script
    std::map<Bytes, UserId> canaries;
    for (const Event& ev : run.scenario.script) {
        const auto* op = std::get_if<EvAgentOp>(&ev);
        if (!op)
            continue;
        if (const auto* create = std::get_if<OpCreate>(&op->op)) {
            for (const auto& [name, value] : create->fields)
                if (value.size() == 32)
                    canaries.emplace(value, op->user);
        } else if (const auto* set = std::get_if<OpSet>(&op->op)) {
            if (set->value.size() == 32)
                canaries.emplace(set->value, op->user);
        }
    }

    auto scan_corpus = [&](const Bytes& needle, const std::string& what,
                           const std::vector<Bytes>& corpus,
                           const std::string& where) {
        for (const Bytes& hay : corpus)
            if (leaks(hay, needle)) {
                report.violations.push_back(what + " found in " + where);
                return;
            }
    };

    for (const auto& [canary, owner] : canaries) {
        const std::string label = "canary of " + owner;
        scan_corpus(canary, label, run.sync_serializations, "sync memory");
        scan_corpus(canary, label, run.sync_disk_bytes, "sync disk");
        scan_corpus(canary, label, run.wire_bytes, "wire traffic");
        for (const auto& [user, bytes] : run.agent_serializations) {
            if (user == owner)
                continue;
            auto exp = run.exposure.find(user);
            const bool authorized =
                exp != run.exposure.end() && exp->second.count(canary);
            if (authorized)
                continue;
            if (leaks(bytes, canary))
                report.violations.push_back(label + " found in store of " +
                                            user);
            auto disk = run.agent_disk_bytes.find(user);
            if (disk != run.agent_disk_bytes.end() &&
                leaks(disk->second, canary))
                report.violations.push_back(label + " found on disk of " +
                                            user);
            for (const UseRecord& use : run.uses)
                if (use.user == user && leaks(use.view_bytes, canary))
                    report.violations.push_back(label + " in use output of " +
                                                user);
        }
    }

    for (const auto& [key, owner] : run.sym_keys) {
        const std::string label = "symkey of " + owner;
        scan_corpus(key, label, run.sync_serializations, "sync memory");
        scan_corpus(key, label, run.sync_disk_bytes, "sync disk");
        scan_corpus(key, label, run.wire_bytes, "wire traffic");
        for (const auto& [user, bytes] : run.agent_serializations) {
            if (user == owner)
                continue;
            if (leaks(bytes, key))
                report.violations.push_back(label + " found in store of " +
                                            user);
        }
    }

    report.notes.push_back(std::to_string(canaries.size()) + " canaries, " +
                           std::to_string(run.sym_keys.size()) + " keys scanned");
    return report;
}

std::string converged_view_digest(const RunResult& run) {
    Json j = Json::object();
    for (const auto& [user, state] : run.final_agents) {
        Json per = Json::object();
        for (const auto& [id, d] : state.owned)
            per[id] = base64_encode(encode_view(view_of(d)));
        for (const auto& [id, rec] : state.foreign) {
            // decrypt with the owner-side key; records whose key is gone
            // (revoked) digest as ciphertext so both sides stay comparable
            Bytes bytes;
            auto owner_it = run.final_agents.find(rec.owner);
            if (owner_it != run.final_agents.end()) {
                const auto& keys = owner_it->second.keys;
                auto kit = keys.find(id);
                if (kit != keys.end() && kit->second.count(user)) {
                    try {
                        bytes = open_box(SealedBox{rec.nonce, rec.ciphertext},
                                         kit->second.at(user).key);
                    } catch (const Error&) {
                        bytes.clear();
                    }
                }
            }
            per[id] = bytes.empty() ? "undecryptable"
                                    : base64_encode(bytes);
        }
        j[user] = std::move(per);
    }
    return sha256_hex(to_bytes(j.dump()));
}

} // namespace dcs::sim
