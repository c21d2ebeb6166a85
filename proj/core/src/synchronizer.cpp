#include "dcs/synchronizer.hpp"

#include <json.hpp>

#include <algorithm>

namespace dcs {

using Json = nlohmann::json;
using namespace wire;

namespace {

Json bundle_json(const PublicKeyBundle& b) {
    Json j = Json::object();
    j["enc_public"] = base64_encode(b.enc_public);
    j["sig_public"] = base64_encode(b.sig_public);
    return j;
}

Bytes b64_field(const Json& j, const char* key) {
    auto d = base64_decode(j.at(key).get_ref<const std::string&>());
    if (!d)
        throw Error(Errc::CorruptSnapshot, key);
    return std::move(*d);
}

// Rebuilds the Grant a keystore record was ingested from, for signature
// re-verification.
Grant grant_of(const WrappedKeyRec& k) {
    return Grant{k.dossier, k.owner, k.receiver, k.wrapped, k.signature};
}

Send send_of(const PendingEntry& p) {
    return Send{p.dossier, p.owner,      p.receiver, p.version,
                p.nonce,   p.ciphertext, p.signature};
}

bool fresh_seq(SyncState& s, const UserId& user, std::uint64_t seq) {
    auto it = s.last_seq.find(user);
    const std::uint64_t last = it == s.last_seq.end() ? 0 : it->second;
    if (seq <= last)
        return false;
    s.last_seq[user] = seq;
    return true;
}

struct Reject {
    Errc code;
    std::string detail;
};

ApplyResult err_result(Errc code, std::string detail = "") {
    return ApplyResult{err_of(code, std::move(detail)), false};
}

const PublicKeyBundle* find_bundle(const SyncState& s, const UserId& u) {
    auto it = s.registry.find(u);
    return it == s.registry.end() ? nullptr : &it->second;
}

bool signed_by(const SyncState& s, const Message& m, const UserId& user,
               const Signature& sig, VerifyMode mode) {
    const PublicKeyBundle* pub = find_bundle(s, user);
    if (!pub)
        return false;
    if (mode == VerifyMode::Replay)
        return true;
    return verify(signing_bytes(m), sig, *pub);
}

} // namespace

ApplyResult sync_apply(SyncState& s, const Message& m, VerifyMode mode) {
    if (const auto* reg = std::get_if<Register>(&m)) {
        PublicKeyBundle incoming{reg->user, reg->enc_public, reg->sig_public};
        auto it = s.registry.find(reg->user);
        if (it != s.registry.end()) {
            if (it->second == incoming)
                return ApplyResult{OkEmpty{}, false}; // idempotent
            return err_result(Errc::KeyConflict, reg->user);
        }
        // trust on first use: the first registered bundle wins
        s.registry.emplace(reg->user, std::move(incoming));
        return ApplyResult{OkEmpty{}, true};
    }

    if (const auto* g = std::get_if<Grant>(&m)) {
        if (!find_bundle(s, g->owner))
            return err_result(Errc::UnknownOwner, g->owner);
        if (!signed_by(s, m, g->owner, g->signature, mode))
            return err_result(Errc::BadSignature);
        s.keystore[g->dossier][g->receiver] =
            WrappedKeyRec{g->dossier, g->owner, g->receiver, g->wrapped,
                          g->signature};
        return ApplyResult{OkEmpty{}, true};
    }

    if (const auto* snd = std::get_if<Send>(&m)) {
        if (!find_bundle(s, snd->owner))
            return err_result(Errc::UnknownOwner, snd->owner);
        if (!signed_by(s, m, snd->owner, snd->signature, mode))
            return err_result(Errc::BadSignature);
        auto& queue = s.pending[snd->receiver];
        const bool dup = std::any_of(
            queue.begin(), queue.end(), [&](const PendingEntry& e) {
                return e.dossier == snd->dossier &&
                       e.receiver == snd->receiver && e.version == snd->version;
            });
        if (dup)
            return ApplyResult{OkEmpty{}, false}; // duplicate update, no-op
        PendingEntry e{s.next_entry_id++, snd->dossier,    snd->owner,
                       snd->receiver,     snd->version,    snd->nonce,
                       snd->ciphertext,   snd->signature};
        queue.push_back(std::move(e));
        return ApplyResult{OkEmpty{}, true};
    }

    if (const auto* f = std::get_if<Fetch>(&m)) {
        if (!find_bundle(s, f->receiver))
            return err_result(Errc::UnknownUser, f->receiver);
        if (!signed_by(s, m, f->receiver, f->signature, mode))
            return err_result(Errc::BadSignature);
        if (!fresh_seq(s, f->receiver, f->request_seq))
            return err_result(Errc::ReplayedRequest);
        OkPending ok;
        auto it = s.pending.find(f->receiver);
        if (it != s.pending.end()) {
            for (const PendingEntry& e : it->second)
                ok.entries.push_back(PendingWire{e.entry_id, e.dossier, e.owner,
                                                 e.version, e.nonce,
                                                 e.ciphertext, e.signature});
        }
        // non-destructive read: removal happens on Ack
        return ApplyResult{std::move(ok), true};
    }

    if (const auto* a = std::get_if<Ack>(&m)) {
        if (!find_bundle(s, a->receiver))
            return err_result(Errc::UnknownUser, a->receiver);
        if (!signed_by(s, m, a->receiver, a->signature, mode))
            return err_result(Errc::BadSignature);
        if (!fresh_seq(s, a->receiver, a->request_seq))
            return err_result(Errc::ReplayedRequest);
        auto it = s.pending.find(a->receiver);
        if (it != s.pending.end()) {
            // only this receiver's own entries can be deleted; unknown ids
            // are ignored so acks are idempotent
            auto& queue = it->second;
            queue.erase(std::remove_if(queue.begin(), queue.end(),
                                       [&](const PendingEntry& e) {
                                           return std::find(a->entry_ids.begin(),
                                                            a->entry_ids.end(),
                                                            e.entry_id) !=
                                                  a->entry_ids.end();
                                       }),
                        queue.end());
            if (queue.empty())
                s.pending.erase(it);
        }
        return ApplyResult{OkEmpty{}, true};
    }

    if (const auto* gk = std::get_if<GetKey>(&m)) {
        if (!find_bundle(s, gk->receiver))
            return err_result(Errc::UnknownUser, gk->receiver);
        if (!signed_by(s, m, gk->receiver, gk->signature, mode))
            return err_result(Errc::BadSignature);
        if (!fresh_seq(s, gk->receiver, gk->request_seq))
            return err_result(Errc::ReplayedRequest);
        // a key wrapped for another receiver is indistinguishable from an
        // absent or revoked one
        auto dit = s.keystore.find(gk->dossier);
        if (dit != s.keystore.end()) {
            auto rit = dit->second.find(gk->receiver);
            if (rit != dit->second.end())
                return ApplyResult{OkKey{rit->second.wrapped}, true};
        }
        return ApplyResult{err_of(Errc::NoKey), true};
    }

    if (const auto* gu = std::get_if<GetUser>(&m)) {
        if (!find_bundle(s, gu->requester))
            return err_result(Errc::UnknownUser, gu->requester);
        if (!signed_by(s, m, gu->requester, gu->signature, mode))
            return err_result(Errc::BadSignature);
        if (!fresh_seq(s, gu->requester, gu->request_seq))
            return err_result(Errc::ReplayedRequest);
        const PublicKeyBundle* pub = find_bundle(s, gu->user);
        if (!pub)
            return ApplyResult{err_of(Errc::UnknownUser, gu->user), true};
        return ApplyResult{OkUser{pub->user, pub->enc_public, pub->sig_public},
                           true};
    }

    if (const auto* rv = std::get_if<Revoke>(&m)) {
        if (!find_bundle(s, rv->owner))
            return err_result(Errc::UnknownOwner, rv->owner);
        if (!signed_by(s, m, rv->owner, rv->signature, mode))
            return err_result(Errc::BadSignature);
        bool mutated = false;
        auto dit = s.keystore.find(rv->dossier);
        if (dit != s.keystore.end()) {
            auto rit = dit->second.find(rv->receiver);
            if (rit != dit->second.end()) {
                if (rit->second.owner != rv->owner)
                    return err_result(Errc::NotGrantOwner, rv->dossier);
                dit->second.erase(rit);
                if (dit->second.empty())
                    s.keystore.erase(dit);
                mutated = true;
            }
        }
        // retained undecryptable ciphertext would only leak metadata;
        // purge this owner's pending entries for the pair as well
        auto pit = s.pending.find(rv->receiver);
        if (pit != s.pending.end()) {
            auto& queue = pit->second;
            const auto before = queue.size();
            queue.erase(std::remove_if(queue.begin(), queue.end(),
                                       [&](const PendingEntry& e) {
                                           return e.dossier == rv->dossier &&
                                                  e.owner == rv->owner;
                                       }),
                        queue.end());
            mutated = mutated || queue.size() != before;
            if (queue.empty())
                s.pending.erase(pit);
        }
        return ApplyResult{OkEmpty{}, mutated};
    }

    // response variants are not requests
    return err_result(Errc::Malformed, "not a request");
}

Bytes encode_sync_state(const SyncState& s) {
    Json j = Json::object();
    j["type"] = "sync_state";
    j["next_entry_id"] = s.next_entry_id;

    Json reg = Json::object();
    for (const auto& [user, bundle] : s.registry)
        reg[user] = bundle_json(bundle);
    j["registry"] = std::move(reg);

    Json ks = Json::object();
    for (const auto& [dossier, receivers] : s.keystore) {
        Json per = Json::object();
        for (const auto& [receiver, rec] : receivers) {
            Json k = Json::object();
            k["owner"] = rec.owner;
            k["wrapped"] = base64_encode(rec.wrapped);
            k["signature"] = base64_encode(rec.signature);
            per[receiver] = std::move(k);
        }
        ks[dossier] = std::move(per);
    }
    j["keystore"] = std::move(ks);

    Json pend = Json::object();
    for (const auto& [receiver, queue] : s.pending) {
        Json arr = Json::array();
        for (const PendingEntry& e : queue) {
            Json p = Json::object();
            p["entry_id"] = e.entry_id;
            p["dossier"] = e.dossier;
            p["owner"] = e.owner;
            p["version"] = e.version;
            p["nonce"] = base64_encode(e.nonce);
            p["ciphertext"] = base64_encode(e.ciphertext);
            p["signature"] = base64_encode(e.signature);
            arr.push_back(std::move(p));
        }
        pend[receiver] = std::move(arr);
    }
    j["pending"] = std::move(pend);

    Json seqs = Json::object();
    for (const auto& [user, seq] : s.last_seq)
        seqs[user] = seq;
    j["last_seq"] = std::move(seqs);

    return to_bytes(j.dump());
}

SyncState decode_sync_state(ByteView b) {
    Json j = Json::parse(to_string(b), nullptr, false);
    if (j.is_discarded() || !j.is_object() ||
        j.value("type", "") != "sync_state")
        throw Error(Errc::CorruptSnapshot, "sync state");
    try {
        SyncState s;
        s.next_entry_id = j.at("next_entry_id").get<std::uint64_t>();
        for (const auto& [user, bj] : j.at("registry").items())
            s.registry[user] = PublicKeyBundle{user, b64_field(bj, "enc_public"),
                                               b64_field(bj, "sig_public")};
        for (const auto& [dossier, receivers] : j.at("keystore").items())
            for (const auto& [receiver, kj] : receivers.items())
                s.keystore[dossier][receiver] = WrappedKeyRec{
                    dossier, kj.at("owner").get<std::string>(), receiver,
                    b64_field(kj, "wrapped"), b64_field(kj, "signature")};
        for (const auto& [receiver, arr] : j.at("pending").items())
            for (const auto& pj : arr) {
                PendingEntry e;
                e.entry_id = pj.at("entry_id").get<std::uint64_t>();
                e.dossier = pj.at("dossier").get<std::string>();
                e.owner = pj.at("owner").get<std::string>();
                e.receiver = receiver;
                e.version = pj.at("version").get<std::uint64_t>();
                e.nonce = b64_field(pj, "nonce");
                e.ciphertext = b64_field(pj, "ciphertext");
                e.signature = b64_field(pj, "signature");
                s.pending[receiver].push_back(std::move(e));
            }
        for (const auto& [user, seq] : j.at("last_seq").items())
            s.last_seq[user] = seq.get<std::uint64_t>();
        return s;
    } catch (const Json::exception& e) {
        throw Error(Errc::CorruptSnapshot, e.what());
    }
}

std::vector<std::string> audit_state(const SyncState& s) {
    std::vector<std::string> violations;
    auto check = [&](const UserId& owner, const Message& m, const Signature& sig,
                     const std::string& what) {
        const PublicKeyBundle* pub = find_bundle(s, owner);
        if (!pub) {
            violations.push_back(what + ": owner not registered");
            return;
        }
        if (!verify(signing_bytes(m), sig, *pub))
            violations.push_back(what + ": signature does not verify");
    };
    for (const auto& [dossier, receivers] : s.keystore)
        for (const auto& [receiver, rec] : receivers)
            check(rec.owner, grant_of(rec), rec.signature,
                  "keystore " + dossier + "/" + receiver);
    for (const auto& [receiver, queue] : s.pending)
        for (const PendingEntry& e : queue)
            check(e.owner, send_of(e), e.signature,
                  "pending " + e.dossier + "#" + std::to_string(e.entry_id));
    return violations;
}

SyncService::SyncService(const std::filesystem::path& dir, std::string suite_id,
                         Durability durability)
    : store_(dir, std::move(suite_id), "synchronizer", durability) {
    LoadedState loaded = store_.load();
    if (!loaded.snapshot_body.empty())
        state_ = decode_sync_state(loaded.snapshot_body);
    for (const Bytes& rec : loaded.log_records)
        sync_apply(state_, decode(rec), VerifyMode::Replay);
}

wire::Message SyncService::handle(const Message& request) {
    std::lock_guard lock(mu_);
    SyncState next = state_;
    ApplyResult r = sync_apply(next, request);
    if (r.mutated) {
        // the log record is durable before the mutation is acted upon
        store_.append(canonical_encode(request));
        state_ = std::move(next);
    }
    return std::move(r.response);
}

SyncState SyncService::state_copy() const {
    std::lock_guard lock(mu_);
    return state_;
}

Bytes SyncService::state_bytes() const {
    std::lock_guard lock(mu_);
    return encode_sync_state(state_);
}

void SyncService::save() {
    std::lock_guard lock(mu_);
    store_.save(encode_sync_state(state_));
}

} // namespace dcs
