#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "govsim/core.hpp"
#include "govsim/jsonl.hpp"

namespace govsim::kyc {

enum class RiskTier { basic, elevated, edd_required, denied };

inline std::string to_string(RiskTier t) {
    switch (t) {
        case RiskTier::basic: return "basic";
        case RiskTier::elevated: return "elevated";
        case RiskTier::edd_required: return "edd_required";
        case RiskTier::denied: return "denied";
    }
    throw Error("bad RiskTier");
}

inline RiskTier risk_tier_from_string(const std::string& s) {
    for (auto t : {RiskTier::basic, RiskTier::elevated, RiskTier::edd_required, RiskTier::denied})
        if (to_string(t) == s) return t;
    throw ValidationError("unknown risk tier '" + s + "'");
}

inline int severity(RiskTier t) { return static_cast<int>(t); }

struct IdDocument {
    std::string kind;
    std::string checksum;
};

struct CustomerAccount {
    std::string customer_id;
    std::string legal_name;
    std::string jurisdiction; // country code
    std::vector<std::string> beneficial_owner_ids;
    std::vector<IdDocument> id_documents;
    std::string payment_instrument;
    bool is_foreign = false;
    RiskTier risk_tier = RiskTier::basic;
    std::string attestation_key; // shared secret for simulated attestation
};

using AccountRegistry = std::map<std::string, CustomerAccount>;

// ---------------------------------------------------------------------------
// Name normalization: lowercase, trim, collapse whitespace, fold common
// latin diacritics. Exact match after normalization; no fuzzy matching.
// ---------------------------------------------------------------------------

inline std::string normalize_name(const std::string& raw) {
    // UTF-8 fold table for the latin-1 supplement block.
    static const std::map<std::string, std::string> folds = {
        {"à", "a"}, {"á", "a"}, {"â", "a"}, {"ã", "a"}, {"ä", "a"},
        {"å", "a"}, {"ç", "c"}, {"è", "e"}, {"é", "e"}, {"ê", "e"},
        {"ë", "e"}, {"ì", "i"}, {"í", "i"}, {"î", "i"}, {"ï", "i"},
        {"ñ", "n"}, {"ò", "o"}, {"ó", "o"}, {"ô", "o"}, {"õ", "o"},
        {"ö", "o"}, {"ù", "u"}, {"ú", "u"}, {"û", "u"}, {"ü", "u"},
        {"ý", "y"}, {"ß", "ss"},
    };
    std::string lowered;
    lowered.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size();) {
        const unsigned char c = raw[i];
        if (c < 0x80) {
            lowered.push_back(static_cast<char>(std::tolower(c)));
            ++i;
            continue;
        }
        // Try two-byte fold first (all table entries are two bytes upper or lower).
        bool folded = false;
        if (i + 1 < raw.size()) {
            std::string pair = raw.substr(i, 2);
            // Fold uppercase latin-1 (0xC0..0xDE maps to 0xE0..0xFE).
            if (static_cast<unsigned char>(pair[0]) == 0xC3) {
                unsigned char b = static_cast<unsigned char>(pair[1]);
                if (b >= 0x80 && b <= 0x9e && b != 0x97) pair[1] = static_cast<char>(b + 0x20);
            }
            auto it = folds.find(pair);
            if (it != folds.end()) {
                lowered += it->second;
                i += 2;
                folded = true;
            }
        }
        if (!folded) {
            lowered.push_back(static_cast<char>(c));
            ++i;
        }
    }
    // Trim and collapse whitespace.
    std::string out;
    bool in_space = true;
    for (char c : lowered) {
        if (c == ' ' || c == '\t') {
            if (!in_space) out.push_back(' ');
            in_space = true;
        } else {
            out.push_back(c);
            in_space = false;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

// ---------------------------------------------------------------------------
// Entity list
// ---------------------------------------------------------------------------

struct EntityListEntry {
    std::string name_pattern; // matched after normalization
    std::string jurisdiction; // empty = any
};

struct EntityList {
    std::string version;
    std::vector<EntityListEntry> entries;

    bool matches(const std::string& legal_name, const std::string& jurisdiction) const {
        const std::string norm = normalize_name(legal_name);
        for (const auto& e : entries) {
            if (normalize_name(e.name_pattern) != norm) continue;
            if (e.jurisdiction.empty() || e.jurisdiction == jurisdiction) return true;
        }
        return false;
    }
};

inline EntityList entity_list_from_json(const json& j) {
    EntityList list;
    list.version = j.at("version").get<std::string>();
    for (const auto& e : j.at("entries"))
        list.entries.push_back({e.at("name_pattern").get<std::string>(),
                                e.value("jurisdiction", std::string())});
    return list;
}

inline EntityList load_entity_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open entity list file " + path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const json j = json::parse(content, nullptr, false);
    if (j.is_discarded()) throw ValidationError(path + ": malformed entity list document");
    return entity_list_from_json(j);
}

inline std::string entity_list_to_json(const EntityList& list) {
    JsonWriter w;
    w.begin_obj();
    w.kv("version", list.version);
    w.key("entries").begin_arr();
    for (const auto& e : list.entries) {
        w.begin_obj();
        w.kv("name_pattern", e.name_pattern);
        w.kv("jurisdiction", e.jurisdiction);
        w.end_obj();
    }
    w.end_arr();
    w.end_obj();
    return w.take();
}

// ---------------------------------------------------------------------------
// Beneficial ownership
// ---------------------------------------------------------------------------

namespace detail {

inline void walk_owners(const std::string& id, const AccountRegistry& registry,
                        std::set<std::string>& visiting, std::set<std::string>& closure,
                        std::set<std::string>& ultimate, std::set<std::string>& unresolved) {
    auto it = registry.find(id);
    if (it == registry.end()) {
        unresolved.insert(id);
        ultimate.insert(id); // terminal by lack of further data
        return;
    }
    if (!visiting.insert(id).second)
        throw DataError("beneficial ownership cycle involving account '" + id + "'");
    const auto& owners = it->second.beneficial_owner_ids;
    if (owners.empty()) {
        ultimate.insert(id);
    } else {
        for (const auto& owner : owners) {
            closure.insert(owner);
            walk_owners(owner, registry, visiting, closure, ultimate, unresolved);
        }
    }
    visiting.erase(id);
}

} // namespace detail

struct OwnershipResolution {
    std::vector<std::string> ultimate_owners; // sorted, deduplicated
    std::vector<std::string> all_owners;      // every account on some owner path
    std::vector<std::string> unresolved;      // ids not present in the registry
};

// Transitive closure of the (acyclic) ownership graph. An account with no
// owner edges is its own ultimate owner.
inline OwnershipResolution resolve_beneficial_owners(const CustomerAccount& account,
                                                     const AccountRegistry& registry) {
    std::set<std::string> visiting, closure, ultimate, unresolved;
    if (account.beneficial_owner_ids.empty()) {
        ultimate.insert(account.customer_id);
    } else {
        visiting.insert(account.customer_id);
        for (const auto& owner : account.beneficial_owner_ids) {
            closure.insert(owner);
            detail::walk_owners(owner, registry, visiting, closure, ultimate, unresolved);
        }
    }
    OwnershipResolution r;
    r.ultimate_owners.assign(ultimate.begin(), ultimate.end());
    r.all_owners.assign(closure.begin(), closure.end());
    r.unresolved.assign(unresolved.begin(), unresolved.end());
    return r;
}

// ---------------------------------------------------------------------------
// Identity verification
// ---------------------------------------------------------------------------

struct KycConfig {
    // Requested capacity at or above this marks a frontier-capable request.
    // Defaults to 10% of the default cluster rate threshold.
    OpsPerSec frontier_capacity_ops_per_sec = 1e19;
};

struct VerificationOutcome {
    RiskTier tier = RiskTier::basic;
    std::vector<std::string> reasons;
};

inline VerificationOutcome verify_identity(const CustomerAccount& account,
                                           OpsPerSec requested_capacity, const EntityList& list,
                                           const AccountRegistry& registry,
                                           const KycConfig& cfg = {}) {
    if (account.id_documents.empty())
        throw DataError("verification_incomplete: account '" + account.customer_id +
                        "' has no identity documents");

    VerificationOutcome out;
    const auto ownership = resolve_beneficial_owners(account, registry);

    // Entity-list screening of the account and everyone on an ownership path.
    if (list.matches(account.legal_name, account.jurisdiction)) {
        out.tier = RiskTier::denied;
        out.reasons.push_back("entity_list_hit:" + normalize_name(account.legal_name));
        return out;
    }
    std::set<std::string> screened(ownership.all_owners.begin(), ownership.all_owners.end());
    for (const auto& id : ownership.ultimate_owners) screened.insert(id);
    screened.erase(account.customer_id);
    for (const auto& id : screened) {
        auto it = registry.find(id);
        if (it == registry.end()) continue;
        if (list.matches(it->second.legal_name, it->second.jurisdiction)) {
            out.tier = RiskTier::denied;
            out.reasons.push_back("entity_list_hit_owner:" + normalize_name(it->second.legal_name));
            return out;
        }
    }

    const bool frontier = requested_capacity >= cfg.frontier_capacity_ops_per_sec;
    bool undocumented_owner = !ownership.unresolved.empty();
    for (const auto& id : screened) {
        auto it = registry.find(id);
        if (it != registry.end() && it->second.id_documents.empty()) undocumented_owner = true;
    }

    if (frontier) out.reasons.push_back("frontier_capacity_request");
    if (undocumented_owner) out.reasons.push_back("beneficial_owner_undocumented");
    if (account.is_foreign) out.reasons.push_back("foreign_customer");

    if (frontier && (account.is_foreign || undocumented_owner)) {
        out.tier = RiskTier::edd_required;
    } else if (account.is_foreign) {
        out.tier = RiskTier::elevated;
    } else {
        out.tier = RiskTier::basic;
        if (out.reasons.empty()) out.reasons.push_back("no_risk_indicators");
    }
    return out;
}

inline std::string kyc_event_line(const CustomerAccount& account, OpsPerSec requested_capacity,
                                  const VerificationOutcome& outcome) {
    JsonWriter w;
    w.begin_obj();
    w.kv("kind", "kyc_event");
    w.kv("customer_id", account.customer_id);
    w.kv("requested_capacity_ops_per_sec", requested_capacity);
    w.kv("risk_tier", to_string(outcome.tier));
    w.key("reasons").begin_arr();
    for (const auto& r : outcome.reasons) w.str(r);
    w.end_arr();
    w.end_obj();
    return w.take();
}

} // namespace govsim::kyc
