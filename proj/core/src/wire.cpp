#include "dcs/wire.hpp"

#include <json.hpp>

#include <limits>

namespace dcs::wire {

using Json = nlohmann::json;

namespace {

constexpr std::size_t kMaxCiphertextBytes =
    kMaxPlaintextBytes + kSealOverheadBytes;
constexpr std::size_t kWrappedBytes = kWrapOverheadBytes + kSymKeyBytes;
constexpr std::size_t kMaxAckIds = 65536;
constexpr std::size_t kMaxErrText = 1024;

void require(bool ok, Errc e, const char* what) {
    if (!ok)
        throw Error(e, what);
}

std::string b64(ByteView b) { return base64_encode(b); }

void put_user(Json& j, const char* key, const UserId& u) {
    require(valid_user_id(u), Errc::OversizeField, key);
    j[key] = u;
}

void put_dossier(Json& j, const char* key, const DossierId& d) {
    require(valid_dossier_id(d), Errc::OversizeField, key);
    j[key] = d;
}

Json fields_json(const FieldMap& fields) {
    Json out = Json::object();
    for (const auto& [name, value] : fields) {
        require(valid_field_name(name), Errc::OversizeField, "field name");
        require(valid_field_value(value), Errc::OversizeField, "field value");
        out[name] = b64(value);
    }
    return out;
}

Json pending_json(const PendingWire& p) {
    Json j = Json::object();
    j["entry_id"] = p.entry_id;
    put_dossier(j, "dossier", p.dossier);
    put_user(j, "owner", p.owner);
    j["version"] = p.version;
    j["nonce"] = b64(p.nonce);
    j["ciphertext"] = b64(p.ciphertext);
    j["signature"] = b64(p.signature);
    return j;
}

Json message_json(const Message& m) {
    Json j = Json::object();
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Register>) {
                j["type"] = "register";
                put_user(j, "user", v.user);
                j["enc_public"] = b64(v.enc_public);
                j["sig_public"] = b64(v.sig_public);
            } else if constexpr (std::is_same_v<T, Grant>) {
                j["type"] = "grant";
                put_dossier(j, "dossier", v.dossier);
                put_user(j, "owner", v.owner);
                put_user(j, "receiver", v.receiver);
                j["wrapped"] = b64(v.wrapped);
                j["signature"] = b64(v.signature);
            } else if constexpr (std::is_same_v<T, Send>) {
                j["type"] = "send";
                put_dossier(j, "dossier", v.dossier);
                put_user(j, "owner", v.owner);
                put_user(j, "receiver", v.receiver);
                j["version"] = v.version;
                j["nonce"] = b64(v.nonce);
                require(v.ciphertext.size() <= kMaxCiphertextBytes,
                        Errc::OversizeField, "ciphertext");
                j["ciphertext"] = b64(v.ciphertext);
                j["signature"] = b64(v.signature);
            } else if constexpr (std::is_same_v<T, Fetch>) {
                j["type"] = "fetch";
                put_user(j, "receiver", v.receiver);
                j["request_seq"] = v.request_seq;
                j["signature"] = b64(v.signature);
            } else if constexpr (std::is_same_v<T, Ack>) {
                j["type"] = "ack";
                put_user(j, "receiver", v.receiver);
                require(v.entry_ids.size() <= kMaxAckIds, Errc::OversizeField,
                        "entry_ids");
                j["entry_ids"] = v.entry_ids;
                j["request_seq"] = v.request_seq;
                j["signature"] = b64(v.signature);
            } else if constexpr (std::is_same_v<T, GetKey>) {
                j["type"] = "get_key";
                put_dossier(j, "dossier", v.dossier);
                put_user(j, "receiver", v.receiver);
                j["request_seq"] = v.request_seq;
                j["signature"] = b64(v.signature);
            } else if constexpr (std::is_same_v<T, GetUser>) {
                j["type"] = "get_user";
                put_user(j, "requester", v.requester);
                put_user(j, "user", v.user);
                j["request_seq"] = v.request_seq;
                j["signature"] = b64(v.signature);
            } else if constexpr (std::is_same_v<T, Revoke>) {
                j["type"] = "revoke";
                put_dossier(j, "dossier", v.dossier);
                put_user(j, "owner", v.owner);
                put_user(j, "receiver", v.receiver);
                j["signature"] = b64(v.signature);
            } else if constexpr (std::is_same_v<T, OkKey>) {
                j["type"] = "ok_key";
                j["wrapped"] = b64(v.wrapped);
            } else if constexpr (std::is_same_v<T, OkPending>) {
                j["type"] = "ok_pending";
                Json arr = Json::array();
                for (const auto& e : v.entries)
                    arr.push_back(pending_json(e));
                j["entries"] = std::move(arr);
            } else if constexpr (std::is_same_v<T, OkUser>) {
                j["type"] = "ok_user";
                put_user(j, "user", v.user);
                j["enc_public"] = b64(v.enc_public);
                j["sig_public"] = b64(v.sig_public);
            } else if constexpr (std::is_same_v<T, OkEmpty>) {
                j["type"] = "ok_empty";
            } else if constexpr (std::is_same_v<T, Err>) {
                j["type"] = "err";
                require(v.code.size() <= kMaxErrText, Errc::OversizeField,
                        "code");
                require(v.detail.size() <= kMaxErrText, Errc::OversizeField,
                        "detail");
                j["code"] = v.code;
                j["detail"] = v.detail;
            }
        },
        m);
    return j;
}

// Strict field extraction: every key must be consumed exactly once and no
// unknown keys may remain.
class ObjReader {
  public:
    explicit ObjReader(const Json& j) : j_(j) {
        if (!j.is_object())
            throw Error(Errc::Malformed, "not an object");
    }

    const Json& get(const char* key) {
        auto it = j_.find(key);
        if (it == j_.end())
            throw Error(Errc::Malformed, std::string("missing ") + key);
        ++consumed_;
        return *it;
    }

    std::string str(const char* key, std::size_t max) {
        const Json& v = get(key);
        if (!v.is_string())
            throw Error(Errc::Malformed, std::string(key) + " not a string");
        std::string s = v.get<std::string>();
        if (s.size() > max)
            throw Error(Errc::Malformed, std::string(key) + " too long");
        return s;
    }

    UserId user(const char* key) {
        std::string s = str(key, kMaxUserIdBytes);
        if (!valid_user_id(s))
            throw Error(Errc::Malformed, std::string("bad ") + key);
        return s;
    }

    DossierId dossier(const char* key) {
        std::string s = str(key, kMaxDossierIdBytes);
        if (!valid_dossier_id(s))
            throw Error(Errc::Malformed, std::string("bad ") + key);
        return s;
    }

    std::uint64_t u64(const char* key) {
        const Json& v = get(key);
        if (v.is_number_unsigned())
            return v.get<std::uint64_t>();
        if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
            return static_cast<std::uint64_t>(v.get<std::int64_t>());
        throw Error(Errc::Malformed, std::string(key) + " not an unsigned int");
    }

    Bytes bytes(const char* key, std::size_t min, std::size_t max) {
        const Json& v = get(key);
        if (!v.is_string())
            throw Error(Errc::Malformed, std::string(key) + " not a string");
        auto decoded = base64_decode(v.get_ref<const std::string&>());
        if (!decoded)
            throw Error(Errc::Malformed, std::string(key) + " not base64");
        if (decoded->size() < min || decoded->size() > max)
            throw Error(Errc::Malformed, std::string(key) + " bad length");
        return std::move(*decoded);
    }

    Bytes exact_bytes(const char* key, std::size_t n) { return bytes(key, n, n); }

    void finish() const {
        if (consumed_ != j_.size())
            throw Error(Errc::Malformed, "unexpected keys");
    }

  private:
    const Json& j_;
    std::size_t consumed_ = 0;
};

PendingWire pending_from(const Json& j) {
    ObjReader r(j);
    PendingWire p;
    p.entry_id = r.u64("entry_id");
    p.dossier = r.dossier("dossier");
    p.owner = r.user("owner");
    p.version = r.u64("version");
    p.nonce = r.exact_bytes("nonce", kSealNonceBytes);
    p.ciphertext = r.bytes("ciphertext", 0, kMaxCiphertextBytes);
    p.signature = r.exact_bytes("signature", kSignatureBytes);
    r.finish();
    return p;
}

Message message_from(const Json& j) {
    if (!j.is_object())
        throw Error(Errc::Malformed, "not an object");
    auto tit = j.find("type");
    if (tit == j.end() || !tit->is_string())
        throw Error(Errc::Malformed, "missing type");
    const std::string type = tit->get<std::string>();

    ObjReader r(j);
    r.get("type"); // consume

    if (type == "register") {
        Register m;
        m.user = r.user("user");
        m.enc_public = r.exact_bytes("enc_public", kEncPublicBytes);
        m.sig_public = r.exact_bytes("sig_public", kSigPublicBytes);
        r.finish();
        return m;
    }
    if (type == "grant") {
        Grant m;
        m.dossier = r.dossier("dossier");
        m.owner = r.user("owner");
        m.receiver = r.user("receiver");
        m.wrapped = r.exact_bytes("wrapped", kWrappedBytes);
        m.signature = r.exact_bytes("signature", kSignatureBytes);
        r.finish();
        return m;
    }
    if (type == "send") {
        Send m;
        m.dossier = r.dossier("dossier");
        m.owner = r.user("owner");
        m.receiver = r.user("receiver");
        m.version = r.u64("version");
        m.nonce = r.exact_bytes("nonce", kSealNonceBytes);
        m.ciphertext = r.bytes("ciphertext", 0, kMaxCiphertextBytes);
        m.signature = r.exact_bytes("signature", kSignatureBytes);
        r.finish();
        return m;
    }
    if (type == "fetch") {
        Fetch m;
        m.receiver = r.user("receiver");
        m.request_seq = r.u64("request_seq");
        m.signature = r.exact_bytes("signature", kSignatureBytes);
        r.finish();
        return m;
    }
    if (type == "ack") {
        Ack m;
        m.receiver = r.user("receiver");
        const Json& ids = r.get("entry_ids");
        if (!ids.is_array() || ids.size() > kMaxAckIds)
            throw Error(Errc::Malformed, "entry_ids");
        for (const auto& v : ids) {
            if (!v.is_number_unsigned())
                throw Error(Errc::Malformed, "entry_ids");
            m.entry_ids.push_back(v.get<std::uint64_t>());
        }
        m.request_seq = r.u64("request_seq");
        m.signature = r.exact_bytes("signature", kSignatureBytes);
        r.finish();
        return m;
    }
    if (type == "get_key") {
        GetKey m;
        m.dossier = r.dossier("dossier");
        m.receiver = r.user("receiver");
        m.request_seq = r.u64("request_seq");
        m.signature = r.exact_bytes("signature", kSignatureBytes);
        r.finish();
        return m;
    }
    if (type == "get_user") {
        GetUser m;
        m.requester = r.user("requester");
        m.user = r.user("user");
        m.request_seq = r.u64("request_seq");
        m.signature = r.exact_bytes("signature", kSignatureBytes);
        r.finish();
        return m;
    }
    if (type == "revoke") {
        Revoke m;
        m.dossier = r.dossier("dossier");
        m.owner = r.user("owner");
        m.receiver = r.user("receiver");
        m.signature = r.exact_bytes("signature", kSignatureBytes);
        r.finish();
        return m;
    }
    if (type == "ok_key") {
        OkKey m;
        m.wrapped = r.exact_bytes("wrapped", kWrappedBytes);
        r.finish();
        return m;
    }
    if (type == "ok_pending") {
        OkPending m;
        const Json& arr = r.get("entries");
        if (!arr.is_array())
            throw Error(Errc::Malformed, "entries");
        for (const auto& e : arr)
            m.entries.push_back(pending_from(e));
        r.finish();
        return m;
    }
    if (type == "ok_user") {
        OkUser m;
        m.user = r.user("user");
        m.enc_public = r.exact_bytes("enc_public", kEncPublicBytes);
        m.sig_public = r.exact_bytes("sig_public", kSigPublicBytes);
        r.finish();
        return m;
    }
    if (type == "ok_empty") {
        r.finish();
        return OkEmpty{};
    }
    if (type == "err") {
        Err m;
        m.code = r.str("code", kMaxErrText);
        m.detail = r.str("detail", kMaxErrText);
        r.finish();
        return m;
    }
    throw Error(Errc::UnknownType, type);
}

Bytes dump_canonical(const Json& j) {
    // nlohmann objects are std::map-backed: keys come out sorted by byte
    // order, and dump() with default arguments emits no whitespace and
    // minimal decimal integers.
    return to_bytes(j.dump());
}

} // namespace

Bytes canonical_encode(const Message& m) {
    return dump_canonical(message_json(m));
}

Message decode(ByteView b) {
    const std::string text(b.begin(), b.end());
    Json j = Json::parse(text, nullptr, false);
    if (j.is_discarded())
        throw Error(Errc::Malformed, "parse error");
    // Anything that parses but differs from its own re-serialization (key
    // order, whitespace, escapes, number spelling, duplicate keys) is
    // rejected before typed validation; otherwise signatures could be
    // bypassed by re-encoding ambiguity.
    if (j.dump() != text)
        throw Error(Errc::NonCanonical);
    Message m = message_from(j);
    // belt and braces: the typed form must reproduce the exact input bytes
    if (to_string(canonical_encode(m)) != text)
        throw Error(Errc::NonCanonical);
    return m;
}

Bytes signing_bytes(const Message& m) {
    const bool request =
        std::holds_alternative<Register>(m) || std::holds_alternative<Grant>(m) ||
        std::holds_alternative<Send>(m) || std::holds_alternative<Fetch>(m) ||
        std::holds_alternative<Ack>(m) || std::holds_alternative<GetKey>(m) ||
        std::holds_alternative<GetUser>(m) || std::holds_alternative<Revoke>(m);
    if (!request)
        throw Error(Errc::NotSignable);
    Json j = message_json(m);
    j.erase("signature");
    return dump_canonical(j);
}

Err err_of(Errc code, std::string detail) {
    return Err{std::string(errc_name(code)), std::move(detail)};
}

const Message& raise_if_err(const Message& m) {
    if (const auto* e = std::get_if<Err>(&m))
        throw Error(errc_from_name(e->code), e->detail);
    return m;
}

Bytes frame(ByteView payload) {
    if (payload.size() > kMaxFrameBytes)
        throw Error(Errc::FrameTooLarge);
    Bytes out;
    out.reserve(4 + payload.size());
    const std::uint32_t n = static_cast<std::uint32_t>(payload.size());
    out.push_back(static_cast<std::uint8_t>(n >> 24));
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    out.push_back(static_cast<std::uint8_t>(n >> 8));
    out.push_back(static_cast<std::uint8_t>(n));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

namespace {

// Returns false only when the stream ends before the first byte.
bool read_exact(const Reader& read, std::uint8_t* dst, std::size_t n,
                bool allow_eof_at_start) {
    std::size_t got = 0;
    while (got < n) {
        const std::size_t r = read(dst + got, n - got);
        if (r == 0) {
            if (got == 0 && allow_eof_at_start)
                return false;
            throw Error(Errc::TruncatedFrame);
        }
        got += r;
    }
    return true;
}

} // namespace

std::optional<Bytes> deframe(const Reader& read) {
    std::uint8_t len[4];
    if (!read_exact(read, len, 4, true))
        return std::nullopt;
    const std::uint32_t n = (std::uint32_t(len[0]) << 24) |
                            (std::uint32_t(len[1]) << 16) |
                            (std::uint32_t(len[2]) << 8) | std::uint32_t(len[3]);
    if (n > kMaxFrameBytes)
        throw Error(Errc::FrameTooLarge);
    Bytes payload(n);
    if (n > 0)
        read_exact(read, payload.data(), n, false);
    return payload;
}

Bytes encode_view(const RedactedView& v) {
    Json j = Json::object();
    j["type"] = "view";
    put_dossier(j, "id", v.id);
    put_user(j, "owner", v.owner);
    j["version"] = v.version;
    j["fields"] = fields_json(v.fields);
    return dump_canonical(j);
}

RedactedView decode_view(ByteView b) {
    const std::string text(b.begin(), b.end());
    Json j = Json::parse(text, nullptr, false);
    if (j.is_discarded())
        throw Error(Errc::Malformed, "parse error");
    ObjReader r(j);
    const Json& t = r.get("type");
    if (!t.is_string() || t.get<std::string>() != "view")
        throw Error(Errc::Malformed, "not a view");
    RedactedView v;
    v.id = r.dossier("id");
    v.owner = r.user("owner");
    v.version = r.u64("version");
    const Json& fields = r.get("fields");
    if (!fields.is_object())
        throw Error(Errc::Malformed, "fields");
    for (const auto& [name, value] : fields.items()) {
        if (!valid_field_name(name) || !value.is_string())
            throw Error(Errc::Malformed, "field");
        auto decoded = base64_decode(value.get_ref<const std::string&>());
        if (!decoded || !valid_field_value(*decoded))
            throw Error(Errc::Malformed, "field value");
        v.fields.emplace(name, std::move(*decoded));
    }
    r.finish();
    if (to_string(encode_view(v)) != text)
        throw Error(Errc::NonCanonical);
    return v;
}

} // namespace dcs::wire
