#include "dcs/agent.hpp"

#include <json.hpp>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>

namespace dcs {

using Json = nlohmann::json;
using namespace wire;

namespace {

Bytes b64_field(const Json& j, const char* key) {
    auto d = base64_decode(j.at(key).get_ref<const std::string&>());
    if (!d)
        throw Error(Errc::CorruptSnapshot, key);
    return std::move(*d);
}

Json dump_fields(const FieldMap& fields) {
    Json out = Json::object();
    for (const auto& [name, value] : fields)
        out[name] = base64_encode(value);
    return out;
}

FieldMap parse_fields(const Json& j) {
    FieldMap out;
    for (const auto& [name, value] : j.items()) {
        auto d = base64_decode(value.get_ref<const std::string&>());
        if (!d)
            throw Error(Errc::CorruptSnapshot, "field value");
        out.emplace(name, std::move(*d));
    }
    return out;
}

void check_field(const FieldName& name, const FieldValue& value) {
    if (!valid_field_name(name))
        throw Error(Errc::OversizeField, "field name");
    if (!valid_field_value(value))
        throw Error(Errc::OversizeField, name);
}

template <typename T>
Message with_signature(T m, Signature sig) {
    m.signature = std::move(sig);
    return m;
}

} // namespace

void agent_apply_command(AgentState& s, ByteView command) {
    Json j = Json::parse(to_string(command), nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw Error(Errc::CorruptSnapshot, "agent command");
    const std::string cmd = j.value("cmd", "");

    if (cmd == "create") {
        Dossier d;
        d.id = j.at("dossier").get<std::string>();
        d.owner = s.user;
        d.version = 1;
        d.fields = parse_fields(j.at("fields"));
        s.owned.emplace(d.id, std::move(d));
        return;
    }
    if (cmd == "set_field") {
        Dossier& d = s.owned.at(j.at("dossier").get<std::string>());
        d.fields[j.at("name").get<std::string>()] = b64_field(j, "value");
        d.version += 1;
        return;
    }
    if (cmd == "del_field") {
        Dossier& d = s.owned.at(j.at("dossier").get<std::string>());
        d.fields.erase(j.at("name").get<std::string>());
        d.version += 1;
        return;
    }
    if (cmd == "grant_local") {
        const DossierId id = j.at("dossier").get<std::string>();
        const UserId receiver = j.at("receiver").get<std::string>();
        FieldNameSet fields;
        for (const auto& f : j.at("fields"))
            fields.insert(f.get<std::string>());
        s.acl.grant(id, receiver, s.user, std::move(fields));
        KeyState ks;
        const Bytes key = b64_field(j, "key");
        if (key.size() != kSymKeyBytes)
            throw Error(Errc::CorruptSnapshot, "key size");
        std::copy(key.begin(), key.end(), ks.key.bytes.begin());
        ks.active = true;
        s.keys[id][receiver] = ks;
        return;
    }
    if (cmd == "revoke_local") {
        const DossierId id = j.at("dossier").get<std::string>();
        const UserId receiver = j.at("receiver").get<std::string>();
        s.acl.revoke(id, receiver);
        auto it = s.keys.find(id);
        if (it != s.keys.end()) {
            auto jt = it->second.find(receiver);
            if (jt != it->second.end())
                jt->second.active = false;
        }
        return;
    }
    if (cmd == "apply_foreign") {
        ForeignRecord rec;
        rec.id = j.at("dossier").get<std::string>();
        rec.owner = j.at("owner").get<std::string>();
        rec.version = j.at("version").get<std::uint64_t>();
        rec.nonce = b64_field(j, "nonce");
        rec.ciphertext = b64_field(j, "ciphertext");
        s.foreign[rec.id] = std::move(rec);
        return;
    }
    if (cmd == "purge_foreign") {
        s.foreign.erase(j.at("dossier").get<std::string>());
        return;
    }
    if (cmd == "pin") {
        const UserId user = j.at("user").get<std::string>();
        s.pinned[user] = PublicKeyBundle{user, b64_field(j, "enc_public"),
                                         b64_field(j, "sig_public")};
        return;
    }
    if (cmd == "bump_seq") {
        s.next_seq += 1;
        return;
    }
    throw Error(Errc::CorruptSnapshot, "unknown command " + cmd);
}

Bytes encode_agent_state(const AgentState& s) {
    Json j = Json::object();
    j["type"] = "agent_state";
    j["user"] = s.user;
    j["next_seq"] = s.next_seq;

    Json pinned = Json::object();
    for (const auto& [user, b] : s.pinned) {
        Json pj = Json::object();
        pj["enc_public"] = base64_encode(b.enc_public);
        pj["sig_public"] = base64_encode(b.sig_public);
        pinned[user] = std::move(pj);
    }
    j["pinned"] = std::move(pinned);

    Json owned = Json::object();
    for (const auto& [id, d] : s.owned) {
        Json dj = Json::object();
        dj["version"] = d.version;
        dj["fields"] = dump_fields(d.fields);
        owned[id] = std::move(dj);
    }
    j["owned"] = std::move(owned);

    Json acl = Json::object();
    for (const auto& [id, receivers] : s.acl.entries()) {
        Json rj = Json::object();
        for (const auto& [receiver, fields] : receivers)
            rj[receiver] = fields;
        acl[id] = std::move(rj);
    }
    j["acl"] = std::move(acl);

    Json keys = Json::object();
    for (const auto& [id, receivers] : s.keys) {
        Json rj = Json::object();
        for (const auto& [receiver, ks] : receivers) {
            Json kj = Json::object();
            kj["active"] = ks.active;
            kj["key"] = base64_encode(ks.key.view());
            rj[receiver] = std::move(kj);
        }
        keys[id] = std::move(rj);
    }
    j["keys"] = std::move(keys);

    Json foreign = Json::object();
    for (const auto& [id, rec] : s.foreign) {
        Json fj = Json::object();
        fj["owner"] = rec.owner;
        fj["version"] = rec.version;
        fj["nonce"] = base64_encode(rec.nonce);
        fj["ciphertext"] = base64_encode(rec.ciphertext);
        foreign[id] = std::move(fj);
    }
    j["foreign"] = std::move(foreign);

    return to_bytes(j.dump());
}

AgentState decode_agent_state(ByteView b, const UserId& user) {
    Json j = Json::parse(to_string(b), nullptr, false);
    if (j.is_discarded() || !j.is_object() ||
        j.value("type", "") != "agent_state")
        throw Error(Errc::CorruptSnapshot, "agent state");
    try {
        AgentState s;
        s.user = j.at("user").get<std::string>();
        if (s.user != user)
            throw Error(Errc::CorruptSnapshot,
                        "store belongs to " + s.user + ", not " + user);
        s.next_seq = j.at("next_seq").get<std::uint64_t>();
        for (const auto& [u, pj] : j.at("pinned").items())
            s.pinned[u] = PublicKeyBundle{u, b64_field(pj, "enc_public"),
                                          b64_field(pj, "sig_public")};
        for (const auto& [id, dj] : j.at("owned").items()) {
            Dossier d;
            d.id = id;
            d.owner = s.user;
            d.version = dj.at("version").get<std::uint64_t>();
            d.fields = parse_fields(dj.at("fields"));
            s.owned.emplace(id, std::move(d));
        }
        for (const auto& [id, rj] : j.at("acl").items())
            for (const auto& [receiver, fields] : rj.items()) {
                FieldNameSet set;
                for (const auto& f : fields)
                    set.insert(f.get<std::string>());
                s.acl.grant(id, receiver, s.user, std::move(set));
            }
        for (const auto& [id, rj] : j.at("keys").items())
            for (const auto& [receiver, kj] : rj.items()) {
                KeyState ks;
                const Bytes key = b64_field(kj, "key");
                if (key.size() != kSymKeyBytes)
                    throw Error(Errc::CorruptSnapshot, "key size");
                std::copy(key.begin(), key.end(), ks.key.bytes.begin());
                ks.active = kj.at("active").get<bool>();
                s.keys[id][receiver] = ks;
            }
        for (const auto& [id, fj] : j.at("foreign").items()) {
            ForeignRecord rec;
            rec.id = id;
            rec.owner = fj.at("owner").get<std::string>();
            rec.version = fj.at("version").get<std::uint64_t>();
            rec.nonce = b64_field(fj, "nonce");
            rec.ciphertext = b64_field(fj, "ciphertext");
            s.foreign.emplace(id, std::move(rec));
        }
        // every active grant must have its pair key
        for (const auto& [id, receivers] : s.acl.entries())
            for (const auto& [receiver, fields] : receivers) {
                auto kit = s.keys.find(id);
                if (kit == s.keys.end() || !kit->second.count(receiver))
                    throw Error(Errc::CorruptSnapshot,
                                "grant without key: " + id + "/" + receiver);
            }
        return s;
    } catch (const Json::exception& e) {
        throw Error(Errc::CorruptSnapshot, e.what());
    }
}

void save_identity(const std::filesystem::path& file, const Identity& id) {
    Json j = Json::object();
    j["type"] = "identity";
    j["user"] = id.user;
    j["enc_public"] = base64_encode(id.public_bundle.enc_public);
    j["enc_secret"] = base64_encode(id.enc_secret);
    j["sig_public"] = base64_encode(id.public_bundle.sig_public);
    j["sig_secret"] = base64_encode(id.sig_secret);
    const Bytes framed = frame(to_bytes(j.dump()));

    const int fd = ::open(file.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
    if (fd < 0)
        throw Error(Errc::DiskFull, "cannot write identity file");
    ssize_t n = ::write(fd, framed.data(), framed.size());
    ::close(fd);
    if (n != static_cast<ssize_t>(framed.size()))
        throw Error(Errc::DiskFull, "identity write");
}

Identity load_identity(const std::filesystem::path& file) {
    std::FILE* f = std::fopen(file.c_str(), "rb");
    if (!f)
        throw Error(Errc::CorruptSnapshot,
                    "cannot open identity file " + file.string());
    Bytes raw;
    std::uint8_t buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0)
        raw.insert(raw.end(), buf, buf + n);
    std::fclose(f);

    if (raw.size() < 4)
        throw Error(Errc::CorruptSnapshot, "identity file truncated");
    Json j = Json::parse(std::string(raw.begin() + 4, raw.end()), nullptr, false);
    if (j.is_discarded() || j.value("type", "") != "identity")
        throw Error(Errc::CorruptSnapshot, "identity file contents");
    Identity id;
    id.user = j.at("user").get<std::string>();
    id.enc_secret = b64_field(j, "enc_secret");
    id.sig_secret = b64_field(j, "sig_secret");
    id.public_bundle = PublicKeyBundle{id.user, b64_field(j, "enc_public"),
                                       b64_field(j, "sig_public")};
    if (id.enc_secret.size() != kEncSecretBytes ||
        id.sig_secret.size() != kSigSecretBytes ||
        id.public_bundle.enc_public.size() != kEncPublicBytes ||
        id.public_bundle.sig_public.size() != kSigPublicBytes)
        throw Error(Errc::CorruptSnapshot, "identity key sizes");
    return id;
}

Agent::Agent(const std::filesystem::path& store_dir, Identity identity,
             AgentConfig config, Rng& rng, Durability durability)
    : identity_(std::move(identity)), config_(config),
      store_(store_dir, kSuiteId, "agent", durability), rng_(rng) {
    LoadedState loaded = store_.load();
    if (loaded.snapshot_body.empty()) {
        state_.user = identity_.user;
    } else {
        state_ = decode_agent_state(loaded.snapshot_body, identity_.user);
    }
    for (const Bytes& rec : loaded.log_records)
        agent_apply_command(state_, rec);
}

void Agent::save() { store_.save(encode_agent_state(state_)); }

void Agent::log_apply(const Bytes& command) {
    store_.append(command);
    agent_apply_command(state_, command);
}

std::uint64_t Agent::take_seq() {
    const std::uint64_t seq = state_.next_seq;
    // reserved durably before the request leaves, so a crash cannot reuse it
    Json j = Json::object();
    j["cmd"] = "bump_seq";
    log_apply(to_bytes(j.dump()));
    return seq;
}

wire::Message Agent::signed_request(Message m) {
    const Bytes sb = signing_bytes(m);
    Signature sig = sign(sb, identity_);
    return std::visit(
        [&](auto v) -> Message {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Grant> || std::is_same_v<T, Send> ||
                          std::is_same_v<T, Fetch> || std::is_same_v<T, Ack> ||
                          std::is_same_v<T, GetKey> ||
                          std::is_same_v<T, GetUser> ||
                          std::is_same_v<T, Revoke>) {
                return with_signature(std::move(v), std::move(sig));
            } else {
                throw Error(Errc::NotSignable);
            }
        },
        std::move(m));
}

const PublicKeyBundle& Agent::bundle_of(net::Transport& t, const UserId& user) {
    if (user == identity_.user)
        return identity_.public_bundle;
    auto it = state_.pinned.find(user);
    if (it != state_.pinned.end())
        return it->second;

    const std::uint64_t seq = take_seq();
    Message resp = t.roundtrip(
        signed_request(GetUser{identity_.user, user, seq, {}}));
    raise_if_err(resp);
    const auto* ok = std::get_if<OkUser>(&resp);
    if (!ok || ok->user != user)
        throw Error(Errc::Malformed, "bad registry response");

    Json j = Json::object();
    j["cmd"] = "pin";
    j["user"] = user;
    j["enc_public"] = base64_encode(ok->enc_public);
    j["sig_public"] = base64_encode(ok->sig_public);
    log_apply(to_bytes(j.dump()));
    return state_.pinned.at(user);
}

void Agent::register_identity(net::Transport& t) {
    raise_if_err(t.roundtrip(Register{identity_.user,
                                      identity_.public_bundle.enc_public,
                                      identity_.public_bundle.sig_public}));
}

void Agent::create_dossier(const DossierId& id, FieldMap fields) {
    if (!valid_dossier_id(id))
        throw Error(Errc::OversizeField, "dossier id");
    if (state_.owned.count(id) || state_.foreign.count(id))
        throw Error(Errc::DuplicateDossier, id);
    for (const auto& [name, value] : fields)
        check_field(name, value);

    Json j = Json::object();
    j["cmd"] = "create";
    j["dossier"] = id;
    j["fields"] = dump_fields(fields);
    log_apply(to_bytes(j.dump()));
}

void Agent::edit_field(const DossierId& id, const FieldName& name,
                       std::optional<FieldValue> value) {
    if (state_.foreign.count(id))
        throw Error(Errc::NotOwner, id); // owner-only writes
    if (!state_.owned.count(id))
        throw Error(Errc::UnknownDossier, id);

    Json j = Json::object();
    if (value) {
        check_field(name, *value);
        j["cmd"] = "set_field";
        j["dossier"] = id;
        j["name"] = name;
        j["value"] = base64_encode(*value);
    } else {
        if (!valid_field_name(name))
            throw Error(Errc::OversizeField, "field name");
        j["cmd"] = "del_field";
        j["dossier"] = id;
        j["name"] = name;
    }
    log_apply(to_bytes(j.dump()));
}

void Agent::grant(net::Transport& t, const DossierId& id,
                  const UserId& receiver, const FieldNameSet& fields) {
    auto it = state_.owned.find(id);
    if (it == state_.owned.end())
        throw Error(Errc::UnknownDossier, id);
    if (fields.empty())
        throw Error(Errc::EmptyGrant, id);
    if (receiver == identity_.user)
        throw Error(Errc::OwnerAsReceiver, receiver);
    for (const FieldName& f : fields)
        if (!it->second.fields.count(f))
            throw Error(Errc::UnknownField, f);

    const PublicKeyBundle* bundle;
    try {
        bundle = &bundle_of(t, receiver);
    } catch (const Error& e) {
        if (e.code() == Errc::UnknownUser)
            throw Error(Errc::UnknownReceiver, receiver);
        throw;
    }

    // reuse a retained key so restored rights keep old ciphertext readable
    SymKey key;
    auto kit = state_.keys.find(id);
    if (kit != state_.keys.end() && kit->second.count(receiver))
        key = kit->second.at(receiver).key;
    else
        key = gen_sym_key(rng_);

    // server first: a failure here leaves no half-granted local state
    const Bytes wrapped = wrap_key(key, *bundle, rng_);
    raise_if_err(t.roundtrip(signed_request(
        Grant{id, identity_.user, receiver, wrapped, {}})));

    Json j = Json::object();
    j["cmd"] = "grant_local";
    j["dossier"] = id;
    j["receiver"] = receiver;
    j["fields"] = fields;
    j["key"] = base64_encode(key.view());
    log_apply(to_bytes(j.dump()));

    // the receiver gets data along with its grant
    const Dossier& d = it->second;
    const RedactedView view = redact(d, fields);
    const SealedBox box = seal(encode_view(view), key, rng_);
    raise_if_err(t.roundtrip(signed_request(
        Send{id, identity_.user, receiver, d.version, box.nonce,
             box.ciphertext, {}})));
}

std::vector<PushOutcome> Agent::push(net::Transport& t, const DossierId& id) {
    auto it = state_.owned.find(id);
    if (it == state_.owned.end())
        throw Error(Errc::UnknownDossier, id);
    const Dossier& d = it->second;

    std::vector<PushOutcome> outcomes;
    for (const auto& [receiver, granted] : state_.acl.receivers_of(id)) {
        PushOutcome out{receiver, d.version, std::nullopt};
        try {
            // fields deleted since the grant silently drop out of the view
            FieldNameSet allowed;
            for (const FieldName& f : granted)
                if (d.fields.count(f))
                    allowed.insert(f);
            const RedactedView view = redact(d, allowed);

            const auto& ks = state_.keys.at(id).at(receiver);
            const SealedBox box = seal(encode_view(view), ks.key, rng_);
            raise_if_err(t.roundtrip(signed_request(
                Send{id, identity_.user, receiver, d.version, box.nonce,
                     box.ciphertext, {}})));
        } catch (const Error& e) {
            out.error = e.code();
        }
        outcomes.push_back(std::move(out));
    }
    return outcomes;
}

PullOutcome Agent::pull(net::Transport& t) {
    const std::uint64_t seq = take_seq();
    Message resp =
        t.roundtrip(signed_request(Fetch{identity_.user, seq, {}}));
    raise_if_err(resp);
    const auto* ok = std::get_if<OkPending>(&resp);
    if (!ok)
        throw Error(Errc::Malformed, "bad fetch response");

    PullOutcome outcome;
    std::vector<std::uint64_t> ack_ids;
    for (const PendingWire& e : ok->entries) {
        // origin check against the pinned bundle; forged or unverifiable
        // entries are quarantined, not acked
        const PublicKeyBundle* bundle = nullptr;
        try {
            bundle = &bundle_of(t, e.owner);
        } catch (const Error&) {
            outcome.quarantined += 1;
            continue;
        }
        const Send as_sent{e.dossier, e.owner,      identity_.user, e.version,
                           e.nonce,   e.ciphertext, {}};
        if (!verify(signing_bytes(as_sent), e.signature, *bundle)) {
            outcome.quarantined += 1;
            continue;
        }
        if (state_.owned.count(e.dossier)) {
            outcome.quarantined += 1; // we own this dossier; nobody may push it
            continue;
        }
        auto local = state_.foreign.find(e.dossier);
        if (local != state_.foreign.end() &&
            local->second.owner != e.owner) {
            outcome.quarantined += 1;
            continue;
        }
        if (local == state_.foreign.end() ||
            e.version > local->second.version) {
            Json j = Json::object();
            j["cmd"] = "apply_foreign";
            j["dossier"] = e.dossier;
            j["owner"] = e.owner;
            j["version"] = e.version;
            j["nonce"] = base64_encode(e.nonce);
            j["ciphertext"] = base64_encode(e.ciphertext);
            log_apply(to_bytes(j.dump()));
            outcome.applied += 1;
        } else {
            outcome.stale += 1;
        }
        ack_ids.push_back(e.entry_id);
    }

    if (!ack_ids.empty()) {
        const std::uint64_t ack_seq = take_seq();
        raise_if_err(t.roundtrip(signed_request(
            Ack{identity_.user, std::move(ack_ids), ack_seq, {}})));
    }
    return outcome;
}

UseOutcome Agent::use_dossier(net::Transport& t, const DossierId& id,
                              std::uint64_t now_seconds) {
    auto oit = state_.owned.find(id);
    if (oit != state_.owned.end())
        return UseOutcome{view_of(oit->second), true};

    auto fit = state_.foreign.find(id);
    if (fit == state_.foreign.end())
        throw Error(Errc::UnknownDossier, id);
    const ForeignRecord& rec = fit->second;

    std::optional<SymKey> key = key_cache_lookup(id, now_seconds);
    if (!key) {
        const std::uint64_t seq = take_seq();
        Message resp = t.roundtrip(
            signed_request(GetKey{id, identity_.user, seq, {}}));
        if (const auto* err = std::get_if<Err>(&resp)) {
            if (errc_from_name(err->code) == Errc::NoKey) {
                key_cache_.erase(id);
                if (config_.revoke_policy == RevokePolicy::Purge) {
                    Json j = Json::object();
                    j["cmd"] = "purge_foreign";
                    j["dossier"] = id;
                    log_apply(to_bytes(j.dump()));
                }
                // under Retain the ciphertext stays cached; rights may come back
                throw Error(Errc::AccessRevoked, id);
            }
            raise_if_err(resp);
        }
        const auto* ok = std::get_if<OkKey>(&resp);
        if (!ok)
            throw Error(Errc::Malformed, "bad key response");
        try {
            key = unwrap_key(ok->wrapped, identity_);
        } catch (const Error&) {
            throw Error(Errc::CorruptRecord, "key does not unwrap");
        }
        if (config_.key_cache_ttl_seconds > 0)
            key_cache_[id] = CachedKey{*key, now_seconds};
    }

    Bytes plaintext;
    try {
        plaintext = open_box(SealedBox{rec.nonce, rec.ciphertext}, *key);
    } catch (const Error&) {
        throw Error(Errc::CorruptRecord, id);
    }
    RedactedView view = decode_view(plaintext);
    if (view.id != id || view.owner != rec.owner)
        throw Error(Errc::CorruptRecord, "view identity mismatch");
    return UseOutcome{std::move(view), false};
}

void Agent::revoke(net::Transport& t, const DossierId& id,
                   const UserId& receiver) {
    if (!state_.owned.count(id))
        throw Error(Errc::UnknownDossier, id);

    Json j = Json::object();
    j["cmd"] = "revoke_local";
    j["dossier"] = id;
    j["receiver"] = receiver;
    log_apply(to_bytes(j.dump()));

    raise_if_err(t.roundtrip(signed_request(
        Revoke{id, identity_.user, receiver, {}})));
}

std::optional<SymKey> Agent::key_cache_lookup(const DossierId& id,
                                              std::uint64_t now_seconds) {
    if (config_.key_cache_ttl_seconds == 0)
        return std::nullopt;
    auto it = key_cache_.find(id);
    if (it == key_cache_.end())
        return std::nullopt;
    if (now_seconds - it->second.fetched_at >= config_.key_cache_ttl_seconds) {
        key_cache_.erase(it);
        return std::nullopt;
    }
    return it->second.key;
}

} // namespace dcs
