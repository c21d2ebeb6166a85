// agent -- the trusted client agent CLI
#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <sstream>

#include "dcs/agent.hpp"
#include "dcs/net.hpp"

namespace {

namespace fs = std::filesystem;
using dcs::Errc;
using dcs::Error;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitRevoked = 2; // scriptable: revocation is a domain outcome

std::vector<std::string> split_csv(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty())
            out.push_back(item);
    return out;
}

void print_view(const dcs::RedactedView& view) {
    for (const auto& [name, value] : view.fields) {
        std::fwrite(name.data(), 1, name.size(), stdout);
        std::fputc('=', stdout);
        std::fwrite(value.data(), 1, value.size(), stdout);
        std::fputc('\n', stdout);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dossier-cloud client agent: owned dossiers stay plaintext "
                 "locally, foreign ones stay encrypted until use"};
    app.require_subcommand(1);

    std::string identity_file;
    std::string store_dir;
    std::string sync_addr;
    std::string suite = dcs::kSuiteId;
    std::string revoke_policy = "retain";
    std::uint64_t key_ttl = 0;
    if (const char* env = std::getenv("DC_SYNC"))
        sync_addr = env;

    app.add_option("--identity", identity_file, "identity file (created by init)")
        ->required();
    app.add_option("--store", store_dir, "local dossier store directory")
        ->required();
    app.add_option("--sync", sync_addr,
                   "synchronizer host:port (defaults to $DC_SYNC)");
    app.add_option("--suite", suite, "crypto suite identifier")
        ->capture_default_str();
    app.add_option("--revoke-policy", revoke_policy,
                   "what Use does to a foreign record when its key is gone")
        ->check(CLI::IsMember({"purge", "retain"}))
        ->capture_default_str();
    app.add_option("--key-ttl", key_ttl,
                   "seconds an unwrapped key may be cached in memory (0 = off)")
        ->capture_default_str();

    std::string arg_user, arg_dossier, arg_field, arg_value, arg_receiver,
        arg_fields;
    bool push_all = false;

    auto* cmd_init = app.add_subcommand("init", "create an identity and register it");
    cmd_init->add_option("user", arg_user, "user name")->required();
    auto* cmd_create = app.add_subcommand("create", "create an owned dossier");
    cmd_create->add_option("dossier", arg_dossier)->required();
    auto* cmd_set = app.add_subcommand("set", "set a field of an owned dossier");
    cmd_set->add_option("dossier", arg_dossier)->required();
    cmd_set->add_option("field", arg_field)->required();
    cmd_set->add_option("value", arg_value)->required();
    auto* cmd_del = app.add_subcommand("del-field", "remove a field of an owned dossier");
    cmd_del->add_option("dossier", arg_dossier)->required();
    cmd_del->add_option("field", arg_field)->required();
    auto* cmd_grant = app.add_subcommand(
        "grant", "give a receiver access to selected fields");
    cmd_grant->add_option("dossier", arg_dossier)->required();
    cmd_grant->add_option("receiver", arg_receiver)->required();
    cmd_grant->add_option("fields", arg_fields, "comma-separated field names")
        ->required();
    auto* cmd_revoke = app.add_subcommand("revoke", "delete a receiver's key");
    cmd_revoke->add_option("dossier", arg_dossier)->required();
    cmd_revoke->add_option("receiver", arg_receiver)->required();
    auto* cmd_push = app.add_subcommand(
        "push", "send the redacted dossier to every receiver");
    cmd_push->add_option("dossier", arg_dossier);
    cmd_push->add_flag("--all", push_all, "push every owned dossier");
    auto* cmd_pull = app.add_subcommand("pull", "fetch and apply pending dossiers");
    auto* cmd_show = app.add_subcommand(
        "show", "print a dossier's fields (decrypts foreign dossiers)");
    cmd_show->add_option("dossier", arg_dossier)->required();
    auto* cmd_list = app.add_subcommand("list", "list owned and foreign dossiers");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help exits 0; anything else is a usage error, one line, exit 1
        return app.exit(e) == 0 ? 0 : 1;
    }

    dcs::AgentConfig config;
    config.revoke_policy = revoke_policy == "purge" ? dcs::RevokePolicy::Purge
                                                    : dcs::RevokePolicy::Retain;
    config.key_cache_ttl_seconds = key_ttl;

    try {
        dcs::SystemRng rng;

        if (cmd_init->parsed()) {
            dcs::Identity identity;
            if (fs::exists(identity_file)) {
                identity = dcs::load_identity(identity_file);
                if (identity.user != arg_user)
                    throw Error(Errc::KeyConflict,
                                "identity file belongs to " + identity.user);
            } else {
                identity = dcs::gen_identity(arg_user, rng);
                dcs::save_identity(identity_file, identity);
            }
            dcs::Agent agent(store_dir, identity, config, rng,
                             dcs::Durability::Fsync);
            if (sync_addr.empty())
                throw Error(Errc::SyncUnreachable, "--sync (or $DC_SYNC) required");
            dcs::net::TcpTransport transport(
                dcs::net::parse_endpoint(sync_addr), suite);
            agent.register_identity(transport);
            std::printf("registered %s\n", arg_user.c_str());
            return kExitOk;
        }

        dcs::Identity identity = dcs::load_identity(identity_file);
        dcs::Agent agent(store_dir, identity, config, rng,
                         dcs::Durability::Fsync);
        dcs::net::TcpTransport transport(
            dcs::net::parse_endpoint(sync_addr.empty() ? "127.0.0.1:7700"
                                                       : sync_addr),
            suite);

        if (cmd_create->parsed()) {
            agent.create_dossier(arg_dossier, {});
        } else if (cmd_set->parsed()) {
            agent.edit_field(arg_dossier, arg_field, dcs::to_bytes(arg_value));
        } else if (cmd_del->parsed()) {
            agent.edit_field(arg_dossier, arg_field, std::nullopt);
        } else if (cmd_grant->parsed()) {
            dcs::FieldNameSet fields;
            for (auto& f : split_csv(arg_fields))
                fields.insert(f);
            agent.grant(transport, arg_dossier, arg_receiver, fields);
        } else if (cmd_revoke->parsed()) {
            agent.revoke(transport, arg_dossier, arg_receiver);
        } else if (cmd_push->parsed()) {
            if (push_all == !arg_dossier.empty())
                throw Error(Errc::Malformed, "push needs a dossier or --all");
            std::vector<dcs::DossierId> targets;
            if (push_all)
                for (const auto& [id, d] : agent.state().owned)
                    targets.push_back(id);
            else
                targets.push_back(arg_dossier);
            bool any_failed = false;
            for (const auto& id : targets)
                for (const auto& out : agent.push(transport, id))
                    if (out.error) {
                        any_failed = true;
                        std::fprintf(stderr, "push %s -> %s failed: %s\n",
                                     id.c_str(), out.receiver.c_str(),
                                     std::string(dcs::errc_name(*out.error))
                                         .c_str());
                    }
            if (any_failed)
                return kExitError;
        } else if (cmd_pull->parsed()) {
            dcs::PullOutcome out = agent.pull(transport);
            std::printf("applied %zu, stale %zu, quarantined %zu\n",
                        out.applied, out.stale, out.quarantined);
        } else if (cmd_show->parsed()) {
            dcs::UseOutcome out = agent.use_dossier(
                transport, arg_dossier,
                static_cast<std::uint64_t>(std::time(nullptr)));
            print_view(out.view);
        } else if (cmd_list->parsed()) {
            for (const auto& [id, d] : agent.state().owned)
                std::printf("owned %s v%llu\n", id.c_str(),
                            static_cast<unsigned long long>(d.version));
            for (const auto& [id, rec] : agent.state().foreign)
                std::printf("foreign %s v%llu owner=%s\n", id.c_str(),
                            static_cast<unsigned long long>(rec.version),
                            rec.owner.c_str());
        }
        return kExitOk;
    } catch (const Error& e) {
        std::fprintf(stderr, "agent: %s\n", e.what());
        return e.code() == Errc::AccessRevoked ? kExitRevoked : kExitError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "agent: %s\n", e.what());
        return kExitError;
    }
}
