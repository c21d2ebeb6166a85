// model.hpp -- dossiers, access lists, redaction, version-ordered merge
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "dcs/bytes.hpp"
#include "dcs/errors.hpp"

namespace dcs {

// Size caps. Values are opaque bytes; names and ids are UTF-8 text.
constexpr std::size_t kMaxUserIdBytes = 64;
constexpr std::size_t kMaxDossierIdBytes = 128;
constexpr std::size_t kMaxFieldNameBytes = 64;
constexpr std::size_t kMaxFieldValueBytes = 64 * 1024;

using UserId = std::string;
using DossierId = std::string;
using FieldName = std::string;
using FieldValue = Bytes;
using FieldMap = std::map<FieldName, FieldValue>;
using FieldNameSet = std::set<FieldName>;

// Owner modification counter, starts at 1; only monotonicity matters.
using Version = std::uint64_t;

bool valid_user_id(const UserId& u);
bool valid_dossier_id(const DossierId& d);
bool valid_field_name(const FieldName& f);
bool valid_field_value(const FieldValue& v);

struct Dossier {
    DossierId id;
    UserId owner;
    Version version = 1;
    FieldMap fields;
};

// The slice of a dossier a receiver is allowed to see.
struct RedactedView {
    DossierId id;
    UserId owner;
    Version version = 1;
    FieldMap fields;

    bool operator==(const RedactedView&) const = default;
};

RedactedView view_of(const Dossier& d);

// Projects d onto `allowed`. Every allowed name must exist in d.
RedactedView redact(const Dossier& d, const FieldNameSet& allowed);

// Last-writer-wins by version. Returns `incoming` when local is absent or
// older, `local` otherwise; stale and duplicate deliveries are no-ops.
RedactedView apply_incoming(const std::optional<RedactedView>& local,
                            const RedactedView& incoming);

// Per-(dossier, receiver) sets of permitted field names.
class Acl {
  public:
    // Replaces any prior grant for (d, r). Empty grants and grants to the
    // owner are rejected.
    void grant(const DossierId& d, const UserId& receiver, const UserId& owner,
               FieldNameSet fields);

    // No-op when the pair is absent.
    void revoke(const DossierId& d, const UserId& receiver);

    const FieldNameSet* lookup(const DossierId& d, const UserId& receiver) const;

    // Receivers with an active grant on d, with their field sets.
    std::map<UserId, FieldNameSet> receivers_of(const DossierId& d) const;

    const std::map<DossierId, std::map<UserId, FieldNameSet>>& entries() const {
        return entries_;
    }

    bool operator==(const Acl&) const = default;

  private:
    std::map<DossierId, std::map<UserId, FieldNameSet>> entries_;
};

} // namespace dcs
