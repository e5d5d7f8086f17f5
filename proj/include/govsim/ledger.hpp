#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "govsim/core.hpp"
#include "govsim/jsonl.hpp"
#include "govsim/sha256.hpp"

namespace govsim::ledger {

inline constexpr int kLedgerFormatVersion = 1;

enum class RecordKind {
    usage,
    estimate,
    classification,
    kyc_event,
    enforcement_event,
    access_audit,
    federation_digest
};

inline const std::vector<RecordKind>& all_record_kinds() {
    static const std::vector<RecordKind> v{
        RecordKind::usage,         RecordKind::estimate,     RecordKind::classification,
        RecordKind::kyc_event,     RecordKind::enforcement_event, RecordKind::access_audit,
        RecordKind::federation_digest};
    return v;
}

inline std::string to_string(RecordKind k) {
    switch (k) {
        case RecordKind::usage: return "usage";
        case RecordKind::estimate: return "estimate";
        case RecordKind::classification: return "classification";
        case RecordKind::kyc_event: return "kyc_event";
        case RecordKind::enforcement_event: return "enforcement_event";
        case RecordKind::access_audit: return "access_audit";
        case RecordKind::federation_digest: return "federation_digest";
    }
    throw Error("bad RecordKind");
}

inline RecordKind record_kind_from_string(const std::string& s) {
    for (auto k : all_record_kinds())
        if (to_string(k) == s) return k;
    throw ValidationError("unknown record kind '" + s + "'");
}

enum class Sensitivity { aggregate_ok, detailed };

inline std::string to_string(Sensitivity s) {
    return s == Sensitivity::aggregate_ok ? "aggregate_ok" : "detailed";
}

inline Sensitivity sensitivity_from_string(const std::string& s) {
    if (s == "aggregate_ok") return Sensitivity::aggregate_ok;
    if (s == "detailed") return Sensitivity::detailed;
    throw ValidationError("unknown sensitivity '" + s + "'");
}

// Estimates, enforcement outcomes, audits and federation digests are
// aggregate-safe; billing detail, classifications and KYC files are not.
inline Sensitivity default_sensitivity(RecordKind k) {
    switch (k) {
        case RecordKind::estimate:
        case RecordKind::enforcement_event:
        case RecordKind::access_audit:
        case RecordKind::federation_digest:
            return Sensitivity::aggregate_ok;
        default:
            return Sensitivity::detailed;
    }
}

struct LedgerRecord {
    std::uint64_t seq = 0; // assigned by the ledger, strictly increasing
    Seconds t = 0;
    RecordKind kind = RecordKind::usage;
    std::string customer_id; // empty when not customer-scoped
    std::string payload;     // one serialized JSON object
    Sensitivity sensitivity = Sensitivity::detailed;
    bool legal_hold = false;

    bool operator==(const LedgerRecord&) const = default;
};

struct RetentionPolicy {
    std::map<RecordKind, Seconds> retention_s = {
        {RecordKind::usage, 7 * 365 * 86400.0},
        {RecordKind::estimate, 365 * 86400.0},
        {RecordKind::classification, 365 * 86400.0},
        {RecordKind::kyc_event, 7 * 365 * 86400.0},
        {RecordKind::enforcement_event, 7 * 365 * 86400.0},
        {RecordKind::access_audit, 7 * 365 * 86400.0},
        {RecordKind::federation_digest, 365 * 86400.0},
    };

    void validate() const {
        for (const auto& [k, d] : retention_s)
            require(d > 0, "retention duration for " + to_string(k) + " must be > 0");
    }

    Seconds duration_for(RecordKind k) const {
        auto it = retention_s.find(k);
        return it != retention_s.end() ? it->second : std::numeric_limits<double>::infinity();
    }
};

// ---------------------------------------------------------------------------
// Queries
// ---------------------------------------------------------------------------

enum class Requestor { provider_admin, regulator, regulator_with_warrant };

inline std::string to_string(Requestor r) {
    switch (r) {
        case Requestor::provider_admin: return "provider_admin";
        case Requestor::regulator: return "regulator";
        case Requestor::regulator_with_warrant: return "regulator_with_warrant";
    }
    throw Error("bad Requestor");
}

struct QueryFilter {
    std::optional<RecordKind> kind;
    std::string customer_id; // empty = any
    Seconds t_min = -std::numeric_limits<double>::infinity();
    Seconds t_max = std::numeric_limits<double>::infinity();
    bool aggregate = false;
    Seconds bucket_s = 2592000; // 30-day buckets for aggregate views
};

struct AggregateRow {
    std::int64_t bucket = 0; // floor(t / bucket_s)
    std::uint64_t count = 0;
    Ops sum_ops = 0; // sum of payload ops_point where present
};

struct QueryResult {
    bool refused = false;
    std::string refusal_reason;
    bool anonymized = false;
    std::vector<LedgerRecord> records;
    std::vector<AggregateRow> aggregate;
};

// ---------------------------------------------------------------------------
// Ledger: append-only store, optionally file-backed (one JSONL line per
// record, appended and flushed as records arrive; retention sweeps compact
// the file in place). Single writer, read-consistent queries.
// ---------------------------------------------------------------------------

class Ledger {
public:
    Ledger() = default;

    explicit Ledger(std::string backing_path, std::string anonymization_salt = "govsim-salt")
        : path_(std::move(backing_path)), base_salt_(std::move(anonymization_salt)) {
        load_existing();
        open_append();
    }

    explicit Ledger(std::string anonymization_salt, bool /*memory_only_tag*/)
        : base_salt_(std::move(anonymization_salt)) {}

    std::uint64_t append_record(LedgerRecord record) {
        record.seq = next_seq_++;
        if (backing_) {
            *backing_ << record_line(record) << '\n';
            backing_->flush();
        }
        records_.push_back(std::move(record));
        return records_.back().seq;
    }

    std::uint64_t append(Seconds t, RecordKind kind, const std::string& customer_id,
                         std::string payload) {
        LedgerRecord r;
        r.t = t;
        r.kind = kind;
        r.customer_id = customer_id;
        r.payload = std::move(payload);
        r.sensitivity = default_sensitivity(kind);
        return append_record(std::move(r));
    }

    const std::vector<LedgerRecord>& records() const { return records_; }

    void set_legal_hold(std::uint64_t seq, bool hold, Seconds now) {
        for (auto& r : records_)
            if (r.seq == seq) {
                r.legal_hold = hold;
                JsonWriter w;
                w.begin_obj();
                w.kv("action", "legal_hold");
                w.kv("seq", seq);
                w.kv_bool("hold", hold);
                w.end_obj();
                append(now, RecordKind::access_audit, "", w.take());
                rewrite_backing();
                return;
            }
        throw DataError("set_legal_hold: no record with seq " + std::to_string(seq));
    }

    // Purges whole records past their retention, except those under legal
    // hold. The purge itself is recorded as an access_audit entry.
    std::size_t sweep_retention(Seconds now, const RetentionPolicy& policy) {
        policy.validate();
        std::size_t purged = 0;
        std::map<std::string, std::uint64_t> purged_by_kind;
        std::vector<LedgerRecord> kept;
        kept.reserve(records_.size());
        for (auto& r : records_) {
            const Seconds age = now - r.t;
            if (age > policy.duration_for(r.kind) && !r.legal_hold) {
                ++purged;
                ++purged_by_kind[to_string(r.kind)];
            } else {
                kept.push_back(std::move(r));
            }
        }
        records_ = std::move(kept);
        if (purged > 0) {
            JsonWriter w;
            w.begin_obj();
            w.kv("action", "retention_sweep");
            w.kv("purged", static_cast<std::uint64_t>(purged));
            w.key("by_kind").begin_obj();
            for (const auto& [k, n] : purged_by_kind) w.kv(k, n);
            w.end_obj();
            w.end_obj();
            append(now, RecordKind::access_audit, "", w.take());
            rewrite_backing();
        }
        return purged;
    }

    // Privacy-tiered access. Every query, including a refused one, leaves an
    // access_audit record. Results are computed against the records present
    // when the call started (the audit row itself is appended afterwards).
    QueryResult query(Requestor requestor, const QueryFilter& filter, Seconds now) {
        const std::size_t snapshot = records_.size();
        QueryResult result;

        switch (requestor) {
            case Requestor::provider_admin:
                collect(filter, snapshot, /*aggregate_ok_only=*/false, result);
                break;
            case Requestor::regulator: {
                const bool targets_customer = !filter.customer_id.empty();
                const bool detailed_kind =
                    filter.kind && default_sensitivity(*filter.kind) == Sensitivity::detailed;
                // Naming a customer defeats anonymization even in aggregates.
                if (targets_customer || (!filter.aggregate && detailed_kind)) {
                    result.refused = true;
                    result.refusal_reason =
                        "customer-scoped or detailed records require a warrant";
                } else {
                    collect(filter, snapshot, /*aggregate_ok_only=*/!filter.aggregate, result);
                    anonymize(result);
                }
                break;
            }
            case Requestor::regulator_with_warrant: {
                if (filter.customer_id.empty()) {
                    result.refused = true;
                    result.refusal_reason = "warrant-scoped query must name a customer";
                } else {
                    collect(filter, snapshot, /*aggregate_ok_only=*/false, result);
                }
                break;
            }
        }

        JsonWriter w;
        w.begin_obj();
        w.kv("action", "query");
        w.kv("requestor", to_string(requestor));
        w.kv("kind_filter", filter.kind ? to_string(*filter.kind) : "any");
        w.kv("customer_filter", filter.customer_id.empty() ? "any" : filter.customer_id);
        w.kv_bool("aggregate", filter.aggregate);
        w.kv("outcome", result.refused ? "refused" : "served");
        w.kv("returned_records", static_cast<std::uint64_t>(result.records.size()));
        w.kv("returned_aggregate_rows", static_cast<std::uint64_t>(result.aggregate.size()));
        w.end_obj();
        append(now, RecordKind::access_audit, "", w.take());
        return result;
    }

    // Full export, one line per record, preceded by a format header. The
    // anonymizing variant replaces customer ids with salted 128-bit tags
    // under a salt that rotates on every export.
    std::string export_jsonl(bool anonymize_ids = false) {
        std::string salt;
        if (anonymize_ids) salt = next_export_salt();
        std::string out;
        {
            JsonWriter w;
            w.begin_obj();
            w.kv("format_version", kLedgerFormatVersion);
            w.kv("kind", "ledger_export");
            w.kv_bool("anonymized", anonymize_ids);
            w.kv("record_count", static_cast<std::uint64_t>(records_.size()));
            w.end_obj();
            out += w.take();
            out.push_back('\n');
        }
        for (const auto& r : records_) {
            if (anonymize_ids && !r.customer_id.empty()) {
                LedgerRecord masked = r;
                masked.customer_id = salted_tag(salt, r.customer_id);
                masked.payload = "{}"; // payloads may embed identities
                out += record_line(masked);
            } else {
                out += record_line(r);
            }
            out.push_back('\n');
        }
        return out;
    }

    static std::string salted_tag(const std::string& salt, const std::string& id) {
        const auto digest = Sha256::digest(salt + "\x1f" + id);
        return to_hex(digest.data(), 16); // 128-bit tag
    }

    static std::string record_line(const LedgerRecord& r) {
        JsonWriter w;
        w.begin_obj();
        w.kv("seq", r.seq);
        w.kv("t", r.t);
        w.kv("kind", to_string(r.kind));
        w.kv("customer_id", r.customer_id);
        w.kv("sensitivity", to_string(r.sensitivity));
        w.kv_bool("legal_hold", r.legal_hold);
        w.key("payload").raw(r.payload.empty() ? "{}" : r.payload);
        w.end_obj();
        return w.take();
    }

    // raw_line, when given, supplies the payload bytes verbatim: re-dumping
    // through a JSON library would renormalize numbers and key order, and
    // replay must reproduce the stored line exactly.
    static LedgerRecord record_from_json(const json& j, const std::string& raw_line = {}) {
        LedgerRecord r;
        r.seq = j.at("seq").get<std::uint64_t>();
        r.t = j.at("t").get<double>();
        r.kind = record_kind_from_string(j.at("kind").get<std::string>());
        r.customer_id = j.at("customer_id").get<std::string>();
        r.sensitivity = sensitivity_from_string(j.at("sensitivity").get<std::string>());
        r.legal_hold = j.at("legal_hold").get<bool>();
        // record_line writes the payload as the final field.
        const auto marker = raw_line.find("\"payload\":");
        if (marker != std::string::npos && raw_line.back() == '}') {
            r.payload = raw_line.substr(marker + 10, raw_line.size() - marker - 11);
        } else {
            r.payload = j.at("payload").dump();
        }
        return r;
    }

private:
    void collect(const QueryFilter& filter, std::size_t snapshot, bool aggregate_ok_only,
                 QueryResult& out) const {
        std::map<std::int64_t, AggregateRow> buckets;
        for (std::size_t i = 0; i < snapshot; ++i) {
            const auto& r = records_[i];
            if (filter.kind && r.kind != *filter.kind) continue;
            if (!filter.customer_id.empty() && r.customer_id != filter.customer_id) continue;
            if (r.t < filter.t_min || r.t > filter.t_max) continue;
            if (aggregate_ok_only && r.sensitivity != Sensitivity::aggregate_ok) continue;
            if (filter.aggregate) {
                const auto bucket = static_cast<std::int64_t>(std::floor(r.t / filter.bucket_s));
                auto& row = buckets[bucket];
                row.bucket = bucket;
                row.count += 1;
                const json payload = json::parse(r.payload, nullptr, false);
                if (payload.is_object() && payload.contains("ops_point"))
                    row.sum_ops += payload["ops_point"].get<double>();
            } else {
                out.records.push_back(r);
            }
        }
        for (auto& [b, row] : buckets) out.aggregate.push_back(row);
    }

    void anonymize(QueryResult& result) {
        result.anonymized = true;
        const std::string salt = next_export_salt();
        for (auto& r : result.records) {
            if (!r.customer_id.empty()) r.customer_id = salted_tag(salt, r.customer_id);
            r.payload = "{}";
        }
    }

    // Derived from a monotone counter so every export sees a fresh salt.
    std::string next_export_salt() {
        ++export_count_;
        return to_hex(Sha256::digest(base_salt_ + ":" + std::to_string(export_count_)).data(), 16);
    }

    void load_existing() {
        std::ifstream in(path_);
        if (!in) return;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const json j = parse_json_line(line, path_ + ":" + std::to_string(lineno));
            if (j.contains("kind") && j["kind"].is_string() &&
                j["kind"].get<std::string>() == "ledger_export")
                continue; // header line
            LedgerRecord r = record_from_json(j, line);
            require(records_.empty() || r.seq > records_.back().seq,
                    path_ + ": ledger replay found non-increasing seq");
            next_seq_ = r.seq + 1;
            records_.push_back(std::move(r));
        }
    }

    void open_append() {
        if (path_.empty()) return;
        backing_.emplace(path_, std::ios::app | std::ios::binary);
        if (!*backing_) throw Error("cannot open ledger backing file " + path_);
    }

    void rewrite_backing() {
        if (path_.empty()) return;
        backing_.reset();
        std::ofstream out(path_, std::ios::trunc | std::ios::binary);
        if (!out) throw Error("cannot rewrite ledger backing file " + path_);
        for (const auto& r : records_) out << record_line(r) << '\n';
        out.close();
        open_append();
    }

    std::string path_;
    std::string base_salt_ = "govsim-salt";
    std::optional<std::ofstream> backing_;
    std::vector<LedgerRecord> records_;
    std::uint64_t next_seq_ = 1;
    std::uint64_t export_count_ = 0;
};

} // namespace govsim::ledger
