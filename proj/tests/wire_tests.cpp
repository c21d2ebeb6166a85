#include <doctest.h>
#include <json.hpp>

#include <map>
#include <set>

#include "dcs/crypto.hpp"
#include "dcs/wire.hpp"

using namespace dcs;
using namespace dcs::wire;

namespace {

// Random message generator over all request/response variants.
Message random_message(DrbgRng& rng) {
    auto user = [&](const char* prefix) {
        return std::string(prefix) + std::to_string(rng.below(1000));
    };
    auto sig = [&] { return rng.bytes(kSignatureBytes); };
    auto wrapped = [&] { return rng.bytes(kWrapOverheadBytes + kSymKeyBytes); };

    switch (rng.below(13)) {
    case 0:
        return Register{user("u"), rng.bytes(32), rng.bytes(32)};
    case 1:
        return Grant{user("d"), user("o"), user("r"), wrapped(), sig()};
    case 2:
        return Send{user("d"), user("o"), user("r"), 1 + rng.below(100),
                    rng.bytes(kSealNonceBytes), rng.bytes(rng.below(200)),
                    sig()};
    case 3:
        return Fetch{user("u"), 1 + rng.below(1000), sig()};
    case 4: {
        Ack a{user("u"), {}, 1 + rng.below(1000), sig()};
        const std::size_t n = rng.below(5);
        for (std::size_t i = 0; i < n; ++i)
            a.entry_ids.push_back(rng.below(10000));
        return a;
    }
    case 5:
        return GetKey{user("d"), user("u"), 1 + rng.below(1000), sig()};
    case 6:
        return GetUser{user("u"), user("v"), 1 + rng.below(1000), sig()};
    case 7:
        return Revoke{user("d"), user("o"), user("r"), sig()};
    case 8:
        return OkKey{wrapped()};
    case 9: {
        OkPending ok;
        const std::size_t n = rng.below(4);
        for (std::size_t i = 0; i < n; ++i)
            ok.entries.push_back(PendingWire{
                1 + rng.below(1000), user("d"), user("o"), 1 + rng.below(50),
                rng.bytes(kSealNonceBytes), rng.bytes(rng.below(100)), sig()});
        return ok;
    }
    case 10:
        return OkUser{user("u"), rng.bytes(32), rng.bytes(32)};
    case 11:
        return OkEmpty{};
    default:
        return Err{"NoKey", "detail " + std::to_string(rng.below(100))};
    }
}

} // namespace

TEST_CASE("encode/decode round trips and is injective over a random corpus") {
    DrbgRng rng(2024, 0);
    std::map<Bytes, Message> by_encoding;
    for (int i = 0; i < 1000; ++i) {
        const Message m = random_message(rng);
        const Bytes b = canonical_encode(m);
        CHECK(decode(b) == m);
        // pairwise: an encoding collision is only allowed for equal messages
        auto [it, inserted] = by_encoding.emplace(b, m);
        if (!inserted)
            CHECK(it->second == m);
    }
}

TEST_CASE("canonical bytes are stable under re-encode") {
    DrbgRng rng(11, 0);
    for (int i = 0; i < 200; ++i) {
        const Bytes b = canonical_encode(random_message(rng));
        CHECK(canonical_encode(decode(b)) == b);
    }
}

TEST_CASE("construction order cannot change the bytes") {
    Register a;
    a.user = "u1";
    a.enc_public = Bytes(32, 1);
    a.sig_public = Bytes(32, 2);
    Register b;
    b.sig_public = Bytes(32, 2);
    b.enc_public = Bytes(32, 1);
    b.user = "u1";
    CHECK(canonical_encode(a) == canonical_encode(b));
}

TEST_CASE("whitespace after a separator is rejected as non-canonical") {
    const Bytes b = canonical_encode(OkEmpty{});
    std::string text = to_string(b); // {"type":"ok_empty"}
    const auto colon = text.find(':');
    text.insert(colon + 1, " ");
    try {
        decode(to_bytes(text));
        FAIL("expected NonCanonical");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::NonCanonical);
    }
}

namespace {

// Byte positions outside string literals, where inserted whitespace keeps
// the text parseable but non-canonical.
std::vector<std::size_t> structural_positions(const std::string& text) {
    std::vector<std::size_t> out;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (!in_string)
            out.push_back(i);
        const char c = text[i];
        if (in_string) {
            if (escaped)
                escaped = false;
            else if (c == '\\')
                escaped = true;
            else if (c == '"')
                in_string = false;
        } else if (c == '"') {
            in_string = true;
        }
    }
    return out;
}

} // namespace

TEST_CASE("inserted structural whitespace is rejected as non-canonical") {
    DrbgRng rng(77, 0);
    for (int i = 0; i < 100; ++i) {
        const Message m = random_message(rng);
        const std::string text = to_string(canonical_encode(m));
        const auto positions = structural_positions(text);
        for (std::size_t pos : positions) {
            std::string fuzzed = text;
            fuzzed.insert(pos, " ");
            CHECK_THROWS_AS(decode(to_bytes(fuzzed)), Error);
        }
    }
}

namespace {

// Re-serializes with object keys in reverse order: parseable, same content,
// different bytes.
void dump_reversed(const nlohmann::json& j, std::string& out) {
    if (j.is_object()) {
        out.push_back('{');
        bool first = true;
        std::vector<std::string> keys;
        for (const auto& item : j.items())
            keys.push_back(item.key());
        for (auto it = keys.rbegin(); it != keys.rend(); ++it) {
            if (!first)
                out.push_back(',');
            first = false;
            out += nlohmann::json(*it).dump();
            out.push_back(':');
            dump_reversed(j.at(*it), out);
        }
        out.push_back('}');
    } else if (j.is_array()) {
        out.push_back('[');
        bool first = true;
        for (const auto& item : j) {
            if (!first)
                out.push_back(',');
            first = false;
            dump_reversed(item, out);
        }
        out.push_back(']');
    } else {
        out += j.dump();
    }
}

} // namespace

TEST_CASE("permuted key order is rejected as non-canonical") {
    DrbgRng rng(78, 0);
    int rejected = 0;
    for (int i = 0; i < 200; ++i) {
        const Message m = random_message(rng);
        const std::string text = to_string(canonical_encode(m));
        const auto j = nlohmann::json::parse(text);
        std::string reversed;
        dump_reversed(j, reversed);
        if (reversed == text)
            continue; // single-key objects reverse to themselves
        try {
            decode(to_bytes(reversed));
            FAIL("accepted a permuted encoding: ", reversed);
        } catch (const Error& e) {
            CHECK(e.code() == Errc::NonCanonical);
            rejected += 1;
        }
    }
    CHECK(rejected > 150);
}

TEST_CASE("truncation at every byte never yields a valid message") {
    DrbgRng rng(5, 0);
    const Message m =
        Send{"d1", "u1", "u2", 3, rng.bytes(kSealNonceBytes), rng.bytes(40),
             rng.bytes(kSignatureBytes)};
    const Bytes b = canonical_encode(m);
    for (std::size_t cut = 0; cut < b.size(); ++cut) {
        const Bytes prefix(b.begin(), b.begin() + cut);
        CHECK_THROWS_AS(decode(prefix), Error);
    }
}

TEST_CASE("non-minimal number spellings are rejected") {
    const std::string sig = base64_encode(Bytes(64));
    // exponent form re-serializes differently: non-canonical
    try {
        decode(to_bytes("{\"receiver\":\"u\",\"request_seq\":1e1,"
                        "\"signature\":\"" + sig + "\",\"type\":\"fetch\"}"));
        FAIL("expected rejection");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::NonCanonical);
    }
    // leading zeros are not even parseable JSON
    CHECK_THROWS_AS(decode(to_bytes(std::string("{\"type\":\"ok_empty\",\"x\":01}"))),
                    Error);
    // a float where an integer belongs survives re-serialization but fails
    // the typed check
    try {
        decode(to_bytes("{\"receiver\":\"u\",\"request_seq\":1.0,"
                        "\"signature\":\"" + sig + "\",\"type\":\"fetch\"}"));
        FAIL("expected rejection");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::Malformed);
    }
}

TEST_CASE("unknown variant names are rejected") {
    try {
        decode(to_bytes(std::string("{\"type\":\"warp\"}")));
        FAIL("expected UnknownType");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::UnknownType);
    }
}

TEST_CASE("signing bytes omit the signature and nothing else") {
    DrbgRng rng(3, 0);
    Grant g{"d1", "u1", "u2", rng.bytes(kWrapOverheadBytes + kSymKeyBytes),
            rng.bytes(kSignatureBytes)};
    Grant g2 = g;
    g2.signature = rng.bytes(kSignatureBytes);
    CHECK(signing_bytes(g) == signing_bytes(g2));

    // consistency with crypto
    SystemRng sys;
    Identity id = gen_identity("u1", sys);
    const Signature sig = sign(signing_bytes(g), id);
    CHECK(verify(signing_bytes(g), sig, id.public_bundle));
}

TEST_CASE("every non-signature field changes the signing bytes") {
    DrbgRng rng(4, 0);
    const Send base{"d1", "u1", "u2", 3, rng.bytes(kSealNonceBytes),
                    rng.bytes(32), rng.bytes(kSignatureBytes)};
    const Bytes sb = signing_bytes(base);

    auto mutated = [&](auto fn) {
        Send copy = base;
        fn(copy);
        return signing_bytes(copy);
    };
    CHECK(mutated([](Send& s) { s.dossier = "d2"; }) != sb);
    CHECK(mutated([](Send& s) { s.owner = "uX"; }) != sb);
    CHECK(mutated([](Send& s) { s.receiver = "uY"; }) != sb);
    CHECK(mutated([](Send& s) { s.version += 1; }) != sb);
    CHECK(mutated([](Send& s) { s.nonce[0] ^= 1; }) != sb);
    CHECK(mutated([](Send& s) { s.ciphertext.push_back(0); }) != sb);
    CHECK(mutated([](Send& s) { s.signature.clear(); }) == sb); // omitted
}

TEST_CASE("signing bytes cover every mutable field of every request") {
    DrbgRng rng(6, 0);
    const Bytes sig = rng.bytes(kSignatureBytes);
    const Bytes wrapped = rng.bytes(kWrapOverheadBytes + kSymKeyBytes);

    auto differs = [](const Message& a, const Message& b) {
        return signing_bytes(a) != signing_bytes(b);
    };

    const Grant grant{"d", "o", "r", wrapped, sig};
    CHECK(differs(grant, Grant{"dX", "o", "r", wrapped, sig}));
    CHECK(differs(grant, Grant{"d", "oX", "r", wrapped, sig}));
    CHECK(differs(grant, Grant{"d", "o", "rX", wrapped, sig}));
    CHECK(differs(grant, Grant{"d", "o", "r", rng.bytes(wrapped.size()), sig}));

    const Fetch fetch{"u", 7, sig};
    CHECK(differs(fetch, Fetch{"uX", 7, sig}));
    CHECK(differs(fetch, Fetch{"u", 8, sig}));

    const Ack ack{"u", {1, 2}, 7, sig};
    CHECK(differs(ack, Ack{"uX", {1, 2}, 7, sig}));
    CHECK(differs(ack, Ack{"u", {1, 3}, 7, sig}));
    CHECK(differs(ack, Ack{"u", {1, 2}, 8, sig}));

    const GetKey getkey{"d", "u", 7, sig};
    CHECK(differs(getkey, GetKey{"dX", "u", 7, sig}));
    CHECK(differs(getkey, GetKey{"d", "uX", 7, sig}));
    CHECK(differs(getkey, GetKey{"d", "u", 8, sig}));

    const GetUser getuser{"q", "u", 7, sig};
    CHECK(differs(getuser, GetUser{"qX", "u", 7, sig}));
    CHECK(differs(getuser, GetUser{"q", "uX", 7, sig}));
    CHECK(differs(getuser, GetUser{"q", "u", 8, sig}));

    const Revoke revoke{"d", "o", "r", sig};
    CHECK(differs(revoke, Revoke{"dX", "o", "r", sig}));
    CHECK(differs(revoke, Revoke{"d", "oX", "r", sig}));
    CHECK(differs(revoke, Revoke{"d", "o", "rX", sig}));
}

TEST_CASE("responses are not signable") {
    CHECK_THROWS_AS(signing_bytes(OkEmpty{}), Error);
    CHECK_THROWS_AS(signing_bytes(Err{"NoKey", ""}), Error);
}

TEST_CASE("frame prepends a 4-byte big-endian length") {
    const Bytes framed = frame(to_bytes("hello"));
    REQUIRE(framed.size() == 9);
    CHECK(framed[0] == 0x00);
    CHECK(framed[1] == 0x00);
    CHECK(framed[2] == 0x00);
    CHECK(framed[3] == 0x05);
}

TEST_CASE("deframe inverts frame and preserves stream order") {
    const Bytes a = to_bytes("first frame");
    const Bytes b = to_bytes("second");
    Bytes stream = frame(a);
    const Bytes fb = frame(b);
    stream.insert(stream.end(), fb.begin(), fb.end());

    std::size_t offset = 0;
    auto reader = [&](std::uint8_t* dst, std::size_t n) {
        const std::size_t take = std::min(n, stream.size() - offset);
        std::copy(stream.begin() + offset, stream.begin() + offset + take, dst);
        offset += take;
        return take;
    };
    CHECK(*deframe(reader) == a);
    CHECK(*deframe(reader) == b);
    CHECK_FALSE(deframe(reader).has_value()); // clean EOF
}

TEST_CASE("deframe reports truncation and oversize frames") {
    Bytes stream = frame(to_bytes("payload"));
    stream.resize(stream.size() - 2); // cut mid-frame
    std::size_t offset = 0;
    auto reader = [&](std::uint8_t* dst, std::size_t n) {
        const std::size_t take = std::min(n, stream.size() - offset);
        std::copy(stream.begin() + offset, stream.begin() + offset + take, dst);
        offset += take;
        return take;
    };
    CHECK_THROWS_AS(deframe(reader), Error);

    Bytes huge = {0x7F, 0xFF, 0xFF, 0xFF};
    std::size_t hoffset = 0;
    auto hreader = [&](std::uint8_t* dst, std::size_t n) {
        const std::size_t take = std::min(n, huge.size() - hoffset);
        std::copy(huge.begin() + hoffset, huge.begin() + hoffset + take, dst);
        hoffset += take;
        return take;
    };
    try {
        deframe(hreader);
        FAIL("expected FrameTooLarge");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::FrameTooLarge);
    }

    CHECK_THROWS_AS(frame(Bytes(kMaxFrameBytes + 1)), Error);
}

TEST_CASE("view codec round trips and stays canonical") {
    DrbgRng rng(8, 0);
    for (int i = 0; i < 100; ++i) {
        RedactedView v;
        v.id = "d" + std::to_string(rng.below(10));
        v.owner = "u" + std::to_string(rng.below(10));
        v.version = 1 + rng.below(50);
        const std::size_t n = rng.below(5);
        for (std::size_t k = 0; k < n; ++k)
            v.fields["f" + std::to_string(k)] = rng.bytes(rng.below(64));
        const Bytes b = encode_view(v);
        CHECK(decode_view(b) == v);
        CHECK(encode_view(decode_view(b)) == b);
    }
}

TEST_CASE("oversize ids and values are rejected at encode time") {
    Register bad{std::string(65, 'u'), Bytes(32), Bytes(32)};
    CHECK_THROWS_AS(canonical_encode(bad), Error);

    RedactedView v;
    v.id = "d";
    v.owner = "u";
    v.fields["f"] = Bytes(64 * 1024 + 1);
    CHECK_THROWS_AS(encode_view(v), Error);
}
