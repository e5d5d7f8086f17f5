#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "govsim/accounting.hpp"
#include "govsim/core.hpp"
#include "govsim/jsonl.hpp"
#include "govsim/kyc.hpp"
#include "govsim/sha256.hpp"

namespace govsim::federation {

inline constexpr int kDigestFormatVersion = 1;

// ---------------------------------------------------------------------------
// Identity normalization. Providers must hash the same bytes for the same
// legal entity, so the procedure is fixed: fold case/diacritics, drop
// punctuation, strip trailing legal-form suffixes, collapse whitespace.
// ---------------------------------------------------------------------------

inline const std::set<std::string>& legal_suffixes() {
    static const std::set<std::string> s = {
        "inc",  "incorporated", "llc", "ltd", "limited", "gmbh", "corp", "corporation",
        "co",   "company",      "plc", "ag",  "sa",      "srl",  "bv",   "pty",
        "kk",   "oy",           "ab",  "sarl"};
    return s;
}

inline std::string normalize_identity(const std::string& legal_name) {
    std::string folded = kyc::normalize_name(legal_name);
    std::string cleaned;
    for (char c : folded)
        if (c != '.' && c != ',' && c != '\'') cleaned.push_back(c);
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : cleaned) {
        if (c == ' ') {
            if (!cur.empty()) tokens.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    while (tokens.size() > 1 && legal_suffixes().count(tokens.back())) tokens.pop_back();
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out.push_back(' ');
        out += t;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Digests
// ---------------------------------------------------------------------------

struct SharedSalt {
    std::uint64_t epoch = 0;
    std::string salt_id;
    std::string secret; // distributed out-of-band among providers
};

// 128-bit pseudonymous customer tag, identical across providers that share
// the salt and the normalization procedure.
inline std::string customer_tag(const SharedSalt& salt, const std::string& legal_name) {
    const auto digest = Sha256::digest(salt.secret + "\x1f" + normalize_identity(legal_name));
    return to_hex(digest.data(), 16);
}

struct DigestEntry {
    std::string customer_tag;
    OpsPerSec rate_ops_per_sec = 0;
    Ops cum_ops_epoch = 0;
};

struct FederationDigest {
    std::uint64_t epoch = 0;
    std::string provider_id;
    std::string salt_id;
    std::vector<DigestEntry> entries; // sorted by tag, one per tag
};

struct CustomerEpochUsage {
    OpsPerSec peak_rate_ops_per_sec = 0;
    Ops cum_ops = 0;
};

// Per-provider view of one epoch: legal identity -> usage.
struct ProviderEpochUsage {
    std::string provider_id;
    std::uint64_t epoch = 0;
    std::map<std::string, CustomerEpochUsage> by_identity;
};

struct FederationConfig {
    OpsPerSec digest_rate_floor = 1e16; // entries below this are omitted
};

inline FederationDigest build_digest(const ProviderEpochUsage& usage, std::uint64_t epoch,
                                     const SharedSalt& salt, const FederationConfig& cfg = {}) {
    if (salt.epoch != epoch)
        throw DataError("stale salt: salt is for epoch " + std::to_string(salt.epoch) +
                        ", digest requested for epoch " + std::to_string(epoch));
    require(usage.epoch == epoch, "usage snapshot is for a different epoch");

    FederationDigest d;
    d.epoch = epoch;
    d.provider_id = usage.provider_id;
    d.salt_id = salt.salt_id;
    std::map<std::string, DigestEntry> by_tag;
    for (const auto& [identity, u] : usage.by_identity) {
        if (u.peak_rate_ops_per_sec < cfg.digest_rate_floor) continue;
        const std::string tag = customer_tag(salt, identity);
        auto& e = by_tag[tag];
        e.customer_tag = tag;
        // Two accounts normalizing to one identity are one customer.
        e.rate_ops_per_sec += u.peak_rate_ops_per_sec;
        e.cum_ops_epoch += u.cum_ops;
    }
    for (auto& [tag, e] : by_tag) d.entries.push_back(std::move(e));
    return d;
}

// ---------------------------------------------------------------------------
// Merge and structuring detection
// ---------------------------------------------------------------------------

struct ProviderShare {
    std::string provider_id;
    OpsPerSec rate_ops_per_sec = 0;
    Ops cum_ops_epoch = 0;
};

struct StructuringAlert {
    std::string customer_tag;
    std::uint64_t epoch = 0;
    OpsPerSec combined_rate = 0;
    Ops combined_cum_ops = 0;
    int provider_count = 0;
    std::vector<ProviderShare> shares; // sorted by provider_id
    std::vector<std::string> reasons;
};

// A structuring alert fires for a tag seen at two or more providers whose
// combined usage crosses a threshold that every individual share stays
// under — the split is what kept it invisible to any one provider.
inline std::vector<StructuringAlert> merge_and_detect(
    const std::vector<FederationDigest>& digests, const accounting::ComputeThresholds& th,
    Seconds reference_duration = accounting::kReferenceDurationS) {
    th.validate();
    std::vector<StructuringAlert> alerts;
    if (digests.empty()) return alerts;

    const std::uint64_t epoch = digests.front().epoch;
    const std::string& salt_id = digests.front().salt_id;
    for (const auto& d : digests) {
        if (d.epoch != epoch)
            throw DataError("refusing merge: digest epochs differ (" + std::to_string(epoch) +
                            " vs " + std::to_string(d.epoch) + ")");
        if (d.salt_id != salt_id)
            throw DataError("refusing merge: digest salt ids differ ('" + salt_id + "' vs '" +
                            d.salt_id + "')");
    }

    std::map<std::string, std::vector<ProviderShare>> by_tag;
    for (const auto& d : digests)
        for (const auto& e : d.entries)
            by_tag[e.customer_tag].push_back({d.provider_id, e.rate_ops_per_sec, e.cum_ops_epoch});

    const OpsPerSec implied = accounting::implied_training_rate(th, reference_duration);

    for (auto& [tag, shares] : by_tag) {
        if (shares.size() < 2) continue;
        std::sort(shares.begin(), shares.end(),
                  [](const auto& a, const auto& b) { return a.provider_id < b.provider_id; });
        OpsPerSec combined_rate = 0;
        Ops combined_cum = 0;
        OpsPerSec max_share_rate = 0;
        Ops max_share_cum = 0;
        for (const auto& s : shares) {
            combined_rate += s.rate_ops_per_sec;
            combined_cum += s.cum_ops_epoch;
            max_share_rate = std::max(max_share_rate, s.rate_ops_per_sec);
            max_share_cum = std::max(max_share_cum, s.cum_ops_epoch);
        }

        std::vector<std::string> reasons;
        if (combined_rate >= th.cluster_rate_threshold &&
            max_share_rate < th.cluster_rate_threshold)
            reasons.push_back("combined_rate_over_cluster_threshold");
        if (combined_rate >= implied && max_share_rate < implied)
            reasons.push_back("combined_rate_over_implied_training_rate");
        if (combined_cum >= th.training_ops_threshold &&
            max_share_cum < th.training_ops_threshold)
            reasons.push_back("combined_ops_over_training_threshold");
        if (reasons.empty()) continue;

        StructuringAlert a;
        a.customer_tag = tag;
        a.epoch = epoch;
        a.combined_rate = combined_rate;
        a.combined_cum_ops = combined_cum;
        a.provider_count = static_cast<int>(shares.size());
        a.shares = shares;
        a.reasons = std::move(reasons);
        alerts.push_back(std::move(a));
    }
    return alerts;
}

// Drops alerts for customers a provider already reported individually in the
// epoch (e.g. a rate event): the federation channel exists to catch what
// single-provider checks missed, not to duplicate them.
inline std::vector<StructuringAlert> suppress_reported(std::vector<StructuringAlert> alerts,
                                                       const std::set<std::string>& reported_tags) {
    alerts.erase(std::remove_if(alerts.begin(), alerts.end(),
                                [&](const StructuringAlert& a) {
                                    return reported_tags.count(a.customer_tag) > 0;
                                }),
                 alerts.end());
    return alerts;
}

// ---------------------------------------------------------------------------
// Wire format: one object per digest, canonical field order, hex tags.
// ---------------------------------------------------------------------------

inline std::string digest_line(const FederationDigest& d) {
    JsonWriter w;
    w.begin_obj();
    w.kv("format_version", kDigestFormatVersion);
    w.kv("kind", "federation_digest");
    w.kv("epoch", d.epoch);
    w.kv("provider_id", d.provider_id);
    w.kv("salt_id", d.salt_id);
    w.key("entries").begin_arr();
    for (const auto& e : d.entries) {
        w.begin_obj();
        w.kv("customer_tag", e.customer_tag);
        w.kv("rate_ops_per_sec", e.rate_ops_per_sec);
        w.kv("cum_ops_epoch", e.cum_ops_epoch);
        w.end_obj();
    }
    w.end_arr();
    w.end_obj();
    return w.take();
}

inline FederationDigest digest_from_json(const json& j) {
    require(j.at("format_version").get<int>() == kDigestFormatVersion,
            "federation digest: unsupported format_version");
    FederationDigest d;
    d.epoch = j.at("epoch").get<std::uint64_t>();
    d.provider_id = j.at("provider_id").get<std::string>();
    d.salt_id = j.at("salt_id").get<std::string>();
    for (const auto& e : j.at("entries"))
        d.entries.push_back({e.at("customer_tag").get<std::string>(),
                             e.at("rate_ops_per_sec").get<double>(),
                             e.at("cum_ops_epoch").get<double>()});
    return d;
}

inline std::string alert_line(const StructuringAlert& a) {
    JsonWriter w;
    w.begin_obj();
    w.kv("kind", "structuring_alert");
    w.kv("customer_tag", a.customer_tag);
    w.kv("epoch", a.epoch);
    w.kv("combined_rate", a.combined_rate);
    w.kv("combined_cum_ops", a.combined_cum_ops);
    w.kv("provider_count", a.provider_count);
    w.key("shares").begin_arr();
    for (const auto& s : a.shares) {
        w.begin_obj();
        w.kv("provider_id", s.provider_id);
        w.kv("rate_ops_per_sec", s.rate_ops_per_sec);
        w.kv("cum_ops_epoch", s.cum_ops_epoch);
        w.end_obj();
    }
    w.end_arr();
    w.key("reasons").begin_arr();
    for (const auto& r : a.reasons) w.str(r);
    w.end_arr();
    w.end_obj();
    return w.take();
}

} // namespace govsim::federation
