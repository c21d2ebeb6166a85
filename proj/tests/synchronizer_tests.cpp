#include <doctest.h>

#include <map>

#include "dcs/simnet.hpp" // for sim::leaks in the canary check
#include "dcs/synchronizer.hpp"
#include "support/helpers.hpp"

using namespace dcs;
using namespace dcs::wire;

namespace {

struct Party {
    Identity id;
    std::uint64_t next_seq = 1;

    explicit Party(const UserId& user) {
        SystemRng rng;
        id = gen_identity(user, rng);
    }

    Register reg() const {
        return Register{id.user, id.public_bundle.enc_public,
                        id.public_bundle.sig_public};
    }

    template <typename T> T signed_msg(T m) {
        m.signature = sign(signing_bytes(m), id);
        return m;
    }

    std::uint64_t seq() { return next_seq++; }
};

Errc err_code(const Message& m) {
    const auto* e = std::get_if<Err>(&m);
    REQUIRE(e);
    return errc_from_name(e->code);
}

} // namespace

TEST_CASE("register is trust-on-first-use") {
    SyncState s;
    Party u("u1");

    auto r1 = sync_apply(s, u.reg());
    CHECK(std::holds_alternative<OkEmpty>(r1.response));
    CHECK(r1.mutated);
    CHECK(s.registry.at("u1") == u.id.public_bundle);

    // identical re-registration is a no-op success
    auto r2 = sync_apply(s, u.reg());
    CHECK(std::holds_alternative<OkEmpty>(r2.response));
    CHECK_FALSE(r2.mutated);

    // differing re-registration is rejected
    Party intruder("u1");
    auto r3 = sync_apply(s, intruder.reg());
    CHECK(err_code(r3.response) == Errc::KeyConflict);
    CHECK(s.registry.at("u1") == u.id.public_bundle);
}

TEST_CASE("grant verifies origin and stores the wrapped key") {
    SyncState s;
    Party owner("owner"), receiver("r"), other("other");
    SystemRng rng;
    sync_apply(s, owner.reg());
    sync_apply(s, receiver.reg());
    sync_apply(s, other.reg());

    const SymKey k = gen_sym_key(rng);
    const Bytes wrapped = wrap_key(k, receiver.id.public_bundle, rng);

    // signature by the wrong identity leaves the keystore unchanged
    Grant forged{"d1", "owner", "r", wrapped, {}};
    forged = other.signed_msg(forged);
    CHECK(err_code(sync_apply(s, forged).response) == Errc::BadSignature);
    CHECK(s.keystore.empty());

    Grant ok = owner.signed_msg(Grant{"d1", "owner", "r", wrapped, {}});
    CHECK(std::holds_alternative<OkEmpty>(sync_apply(s, ok).response));

    auto resp = sync_apply(
        s, receiver.signed_msg(GetKey{"d1", "r", receiver.seq(), {}}));
    const auto* okk = std::get_if<OkKey>(&resp.response);
    REQUIRE(okk);
    CHECK(okk->wrapped == wrapped);
    CHECK(unwrap_key(okk->wrapped, receiver.id) == k);

    Grant unknown{"d1", "ghost", "r", wrapped, {}};
    CHECK(err_code(sync_apply(s, unknown).response) == Errc::UnknownOwner);
}

TEST_CASE("a newer grant for the same pair replaces the old key") {
    SyncState s;
    Party owner("owner"), receiver("r");
    SystemRng rng;
    sync_apply(s, owner.reg());
    sync_apply(s, receiver.reg());

    // replay oracle over a small random grant sequence
    std::map<std::pair<DossierId, UserId>, Bytes> oracle;
    DrbgRng seq_rng(31, 0);
    for (int i = 0; i < 20; ++i) {
        const DossierId d = "d" + std::to_string(seq_rng.below(3));
        const Bytes wrapped =
            wrap_key(gen_sym_key(rng), receiver.id.public_bundle, rng);
        sync_apply(s, owner.signed_msg(Grant{d, "owner", "r", wrapped, {}}));
        oracle[{d, "r"}] = wrapped;
    }
    for (const auto& [key, wrapped] : oracle)
        CHECK(s.keystore.at(key.first).at(key.second).wrapped == wrapped);
}

TEST_CASE("send queues per receiver with dedup and increasing entry ids") {
    SyncState s;
    Party owner("owner"), receiver("r");
    SystemRng rng;
    sync_apply(s, owner.reg());
    sync_apply(s, receiver.reg());

    auto send_v = [&](Version v) {
        return owner.signed_msg(Send{"d1", "owner", "r", v,
                                     rng.bytes(kSealNonceBytes),
                                     rng.bytes(64), {}});
    };
    CHECK(sync_apply(s, send_v(2)).mutated);
    CHECK(sync_apply(s, send_v(3)).mutated);
    REQUIRE(s.pending.at("r").size() == 2);
    CHECK(s.pending.at("r")[0].entry_id < s.pending.at("r")[1].entry_id);

    // duplicate (dossier, receiver, version) is dropped as a no-op success
    auto dup = sync_apply(s, send_v(2));
    CHECK(std::holds_alternative<OkEmpty>(dup.response));
    CHECK_FALSE(dup.mutated);
    CHECK(s.pending.at("r").size() == 2);
}

TEST_CASE("fetch is non-destructive and replay-guarded") {
    SyncState s;
    Party owner("owner"), receiver("r");
    SystemRng rng;
    sync_apply(s, owner.reg());
    sync_apply(s, receiver.reg());

    // empty queue
    auto empty = sync_apply(
        s, receiver.signed_msg(Fetch{"r", receiver.seq(), {}}));
    REQUIRE(std::holds_alternative<OkPending>(empty.response));
    CHECK(std::get<OkPending>(empty.response).entries.empty());

    sync_apply(s, owner.signed_msg(Send{"d1", "owner", "r", 1,
                                        rng.bytes(kSealNonceBytes),
                                        rng.bytes(16), {}}));

    auto first = sync_apply(
        s, receiver.signed_msg(Fetch{"r", receiver.seq(), {}}));
    auto second = sync_apply(
        s, receiver.signed_msg(Fetch{"r", receiver.seq(), {}}));
    CHECK(std::get<OkPending>(first.response).entries ==
          std::get<OkPending>(second.response).entries);

    // a replayed request_seq is rejected
    const std::uint64_t replayed = receiver.next_seq - 1;
    auto bad = sync_apply(s, receiver.signed_msg(Fetch{"r", replayed, {}}));
    CHECK(err_code(bad.response) == Errc::ReplayedRequest);

    auto ghost = sync_apply(s, receiver.signed_msg(Fetch{"ghost", 1, {}}));
    CHECK(err_code(ghost.response) == Errc::UnknownUser);
}

TEST_CASE("ack drains exactly the listed entries, idempotently") {
    SyncState s;
    Party owner("owner"), r1("r1"), r2("r2");
    SystemRng rng;
    sync_apply(s, owner.reg());
    sync_apply(s, r1.reg());
    sync_apply(s, r2.reg());

    for (Version v = 1; v <= 3; ++v) {
        sync_apply(s, owner.signed_msg(Send{"d1", "owner", "r1", v,
                                            rng.bytes(kSealNonceBytes),
                                            rng.bytes(8), {}}));
        sync_apply(s, owner.signed_msg(Send{"d1", "owner", "r2", v,
                                            rng.bytes(kSealNonceBytes),
                                            rng.bytes(8), {}}));
    }
    std::vector<std::uint64_t> r1_ids;
    for (const auto& e : s.pending.at("r1"))
        r1_ids.push_back(e.entry_id);
    std::vector<std::uint64_t> r2_ids;
    for (const auto& e : s.pending.at("r2"))
        r2_ids.push_back(e.entry_id);

    // r1 acking r2's entries must not delete them
    std::vector<std::uint64_t> mixed = r1_ids;
    mixed.insert(mixed.end(), r2_ids.begin(), r2_ids.end());
    sync_apply(s, r1.signed_msg(Ack{"r1", mixed, r1.seq(), {}}));
    CHECK(s.pending.count("r1") == 0);
    CHECK(s.pending.at("r2").size() == 3);

    // acking already-acked ids is a no-op success
    auto again = sync_apply(s, r1.signed_msg(Ack{"r1", r1_ids, r1.seq(), {}}));
    CHECK(std::holds_alternative<OkEmpty>(again.response));
    CHECK(s.pending.at("r2").size() == 3);
}

TEST_CASE("cross-receiver ack isolation holds over random schedules") {
    SystemRng rng;
    DrbgRng sched(99, 7);
    Party owner("owner"), r1("r1"), r2("r2");

    for (int round = 0; round < 10; ++round) {
        SyncState s;
        sync_apply(s, owner.reg());
        sync_apply(s, r1.reg());
        sync_apply(s, r2.reg());

        // random sends to both receivers
        std::map<UserId, std::vector<std::uint64_t>> ids;
        for (int i = 0; i < 12; ++i) {
            const UserId receiver = sched.below(2) ? "r1" : "r2";
            sync_apply(s, owner.signed_msg(
                              Send{"d" + std::to_string(sched.below(3)),
                                   "owner", receiver, 1 + sched.below(9),
                                   rng.bytes(kSealNonceBytes), rng.bytes(8),
                                   {}}));
        }
        for (const auto& [receiver, queue] : s.pending)
            for (const auto& e : queue)
                ids[receiver].push_back(e.entry_id);

        // r1 acks everything it can see plus all of r2's ids
        std::vector<std::uint64_t> all = ids["r1"];
        all.insert(all.end(), ids["r2"].begin(), ids["r2"].end());
        sync_apply(s, r1.signed_msg(Ack{"r1", all, r1.seq(), {}}));

        std::vector<std::uint64_t> r2_after;
        if (s.pending.count("r2"))
            for (const auto& e : s.pending.at("r2"))
                r2_after.push_back(e.entry_id);
        CHECK(r2_after == ids["r2"]); // untouched
        CHECK(s.pending.count("r1") == 0);
    }
}

TEST_CASE("getkey isolates receivers and reports revocation as NoKey") {
    SyncState s;
    Party owner("owner"), r1("r1"), r2("r2");
    SystemRng rng;
    sync_apply(s, owner.reg());
    sync_apply(s, r1.reg());
    sync_apply(s, r2.reg());

    const Bytes wrapped =
        wrap_key(gen_sym_key(rng), r1.id.public_bundle, rng);
    sync_apply(s, owner.signed_msg(Grant{"d1", "owner", "r1", wrapped, {}}));

    // granted to r1, invisible to r2 (indistinguishable from absence)
    auto for_r2 =
        sync_apply(s, r2.signed_msg(GetKey{"d1", "r2", r2.seq(), {}}));
    CHECK(err_code(for_r2.response) == Errc::NoKey);

    auto for_r1 =
        sync_apply(s, r1.signed_msg(GetKey{"d1", "r1", r1.seq(), {}}));
    CHECK(std::holds_alternative<OkKey>(for_r1.response));

    sync_apply(s, owner.signed_msg(Revoke{"d1", "owner", "r1", {}}));
    auto after =
        sync_apply(s, r1.signed_msg(GetKey{"d1", "r1", r1.seq(), {}}));
    CHECK(err_code(after.response) == Errc::NoKey);
}

TEST_CASE("revoke requires the original owner and purges pending entries") {
    SyncState s;
    Party owner("owner"), rival("rival"), r1("r1"), r2("r2");
    SystemRng rng;
    for (Party* p : {&owner, &rival, &r1, &r2})
        sync_apply(s, p->reg());

    sync_apply(s, owner.signed_msg(Grant{
                      "d1", "owner", "r1",
                      wrap_key(gen_sym_key(rng), r1.id.public_bundle, rng), {}}));
    sync_apply(s, owner.signed_msg(Grant{
                      "d1", "owner", "r2",
                      wrap_key(gen_sym_key(rng), r2.id.public_bundle, rng), {}}));
    sync_apply(s, owner.signed_msg(Send{"d1", "owner", "r1", 4,
                                        rng.bytes(kSealNonceBytes),
                                        rng.bytes(8), {}}));

    // a rival cannot revoke someone else's grant
    auto stolen = sync_apply(s, rival.signed_msg(Revoke{"d1", "rival", "r1", {}}));
    CHECK(err_code(stolen.response) == Errc::NotGrantOwner);
    CHECK(s.keystore.at("d1").count("r1"));

    sync_apply(s, owner.signed_msg(Revoke{"d1", "owner", "r1", {}}));
    CHECK_FALSE(s.keystore.at("d1").count("r1"));
    CHECK(s.keystore.at("d1").count("r2")); // per-receiver isolation
    CHECK(s.pending.count("r1") == 0);      // pending purged too

    // revoking a non-existent grant is a no-op success
    auto again = sync_apply(s, owner.signed_msg(Revoke{"d1", "owner", "r1", {}}));
    CHECK(std::holds_alternative<OkEmpty>(again.response));
}

TEST_CASE("reachable states pass the signature audit") {
    SyncState s;
    Party owner("owner"), r("r");
    SystemRng rng;
    sync_apply(s, owner.reg());
    sync_apply(s, r.reg());
    sync_apply(s, owner.signed_msg(Grant{
                      "d1", "owner", "r",
                      wrap_key(gen_sym_key(rng), r.id.public_bundle, rng), {}}));
    sync_apply(s, owner.signed_msg(Send{"d1", "owner", "r", 1,
                                        rng.bytes(kSealNonceBytes),
                                        rng.bytes(32), {}}));
    CHECK(audit_state(s).empty());

    // corrupting a stored signature must trip the audit
    SyncState bad = s;
    bad.keystore.at("d1").at("r").signature[0] ^= 1;
    CHECK_FALSE(audit_state(bad).empty());
}

TEST_CASE("the synchronizer never sees plaintext or raw keys") {
    SyncState s;
    Party owner("owner"), r("r");
    SystemRng rng;
    sync_apply(s, owner.reg());
    sync_apply(s, r.reg());

    const Bytes canary = rng.bytes(32);
    const SymKey key = gen_sym_key(rng);

    RedactedView view{"d1", "owner", 1, {{"secret", canary}}};
    const SealedBox box = seal(encode_view(view), key, rng);
    sync_apply(s, owner.signed_msg(Grant{
                      "d1", "owner", "r",
                      wrap_key(key, r.id.public_bundle, rng), {}}));
    sync_apply(s, owner.signed_msg(
                      Send{"d1", "owner", "r", 1, box.nonce, box.ciphertext, {}}));

    const Bytes state_bytes = encode_sync_state(s);
    CHECK_FALSE(sim::leaks(state_bytes, canary));
    CHECK_FALSE(sim::leaks(state_bytes, key.view()));
}

TEST_CASE("handlers are deterministic and replay from the log exactly") {
    test::TempDir dir;
    SystemRng rng;
    Party owner("owner"), r("r");

    SyncState oracle; // pure fold, no persistence
    Bytes live_bytes;
    {
        SyncService service(dir.path / "sync", "suite-x", Durability::Flush);
        auto feed = [&](const Message& m) {
            service.handle(m);
            sync_apply(oracle, m);
        };
        feed(owner.reg());
        feed(r.reg());
        feed(owner.signed_msg(Grant{
            "d1", "owner", "r",
            wrap_key(gen_sym_key(rng), r.id.public_bundle, rng), {}}));
        for (Version v = 1; v <= 5; ++v)
            feed(owner.signed_msg(Send{"d1", "owner", "r", v,
                                       rng.bytes(kSealNonceBytes),
                                       rng.bytes(24), {}}));
        feed(r.signed_msg(Fetch{"r", r.seq(), {}}));
        feed(r.signed_msg(Ack{"r", {1, 2}, r.seq(), {}}));
        live_bytes = service.state_bytes();
        // no save: recovery must come purely from the log
    }
    SyncService recovered(dir.path / "sync", "suite-x", Durability::Flush);
    CHECK(recovered.state_bytes() == live_bytes);
    CHECK(recovered.state_bytes() == encode_sync_state(oracle));
}

TEST_CASE("sync state encoding round trips") {
    SyncState s;
    Party owner("owner"), r("r");
    SystemRng rng;
    sync_apply(s, owner.reg());
    sync_apply(s, r.reg());
    sync_apply(s, owner.signed_msg(Grant{
                      "d1", "owner", "r",
                      wrap_key(gen_sym_key(rng), r.id.public_bundle, rng), {}}));
    sync_apply(s, owner.signed_msg(Send{"d1", "owner", "r", 2,
                                        rng.bytes(kSealNonceBytes),
                                        rng.bytes(16), {}}));
    sync_apply(s, r.signed_msg(Fetch{"r", r.seq(), {}}));

    const Bytes bytes = encode_sync_state(s);
    CHECK(decode_sync_state(bytes) == s);
    CHECK(encode_sync_state(decode_sync_state(bytes)) == bytes);
}

TEST_CASE("responses and garbage are not requests") {
    SyncState s;
    auto r = sync_apply(s, OkEmpty{});
    CHECK(err_code(r.response) == Errc::Malformed);
    CHECK_FALSE(r.mutated);
}
