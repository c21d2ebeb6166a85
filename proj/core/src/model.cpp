#include "dcs/model.hpp"

namespace dcs {

bool valid_user_id(const UserId& u) {
    return !u.empty() && u.size() <= kMaxUserIdBytes && utf8_valid(u);
}

bool valid_dossier_id(const DossierId& d) {
    return !d.empty() && d.size() <= kMaxDossierIdBytes && utf8_valid(d);
}

bool valid_field_name(const FieldName& f) {
    return !f.empty() && f.size() <= kMaxFieldNameBytes && utf8_valid(f);
}

bool valid_field_value(const FieldValue& v) {
    return v.size() <= kMaxFieldValueBytes;
}

RedactedView view_of(const Dossier& d) {
    return RedactedView{d.id, d.owner, d.version, d.fields};
}

RedactedView redact(const Dossier& d, const FieldNameSet& allowed) {
    RedactedView v{d.id, d.owner, d.version, {}};
    for (const auto& name : allowed) {
        auto it = d.fields.find(name);
        if (it == d.fields.end())
            throw Error(Errc::UnknownField, name);
        v.fields.emplace(it->first, it->second);
    }
    return v;
}

RedactedView apply_incoming(const std::optional<RedactedView>& local,
                            const RedactedView& incoming) {
    if (!local)
        return incoming;
    if (local->id != incoming.id || local->owner != incoming.owner)
        throw Error(Errc::IdentityMismatch, incoming.id);
    return incoming.version > local->version ? incoming : *local;
}

void Acl::grant(const DossierId& d, const UserId& receiver, const UserId& owner,
                FieldNameSet fields) {
    if (fields.empty())
        throw Error(Errc::EmptyGrant, d);
    if (receiver == owner)
        throw Error(Errc::OwnerAsReceiver, receiver);
    entries_[d][receiver] = std::move(fields);
}

void Acl::revoke(const DossierId& d, const UserId& receiver) {
    auto it = entries_.find(d);
    if (it == entries_.end())
        return;
    it->second.erase(receiver);
    if (it->second.empty())
        entries_.erase(it);
}

const FieldNameSet* Acl::lookup(const DossierId& d, const UserId& receiver) const {
    auto it = entries_.find(d);
    if (it == entries_.end())
        return nullptr;
    auto jt = it->second.find(receiver);
    return jt == it->second.end() ? nullptr : &jt->second;
}

std::map<UserId, FieldNameSet> Acl::receivers_of(const DossierId& d) const {
    auto it = entries_.find(d);
    return it == entries_.end() ? std::map<UserId, FieldNameSet>{} : it->second;
}

} // namespace dcs
