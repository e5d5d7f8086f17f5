#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "govsim/accounting.hpp"
#include "govsim/classify.hpp"
#include "govsim/core.hpp"
#include "govsim/jsonl.hpp"
#include "govsim/kyc.hpp"
#include "govsim/ledger.hpp"
#include "govsim/oversight.hpp"
#include "govsim/telemetry.hpp"

namespace govsim::scenario {

inline constexpr int kScenarioFormatVersion = 1;

struct ScheduleEntry {
    std::string workload_id;
    std::string provider_id;
    Seconds start_t = 0;
    Seconds sample_interval_s = 60;
    telemetry::WorkloadSpec workload;
};

struct Directive {
    Seconds t = 0;
    std::string customer_id;
    std::string kind; // "suspend" | "resolve"
};

struct ClaimSpec {
    Seconds t = 0;
    std::string customer_id;
    oversight::ClaimKind claim_kind = oversight::ClaimKind::eval_was_run;
    std::string payload; // serialized JSON object
    bool tamper = false; // flip a payload bit after signing
};

struct Policies {
    double edd_capacity_fraction = 0.10;      // of cluster_rate_threshold
    Seconds epoch_length_s = 86400;           // federation epoch
    OpsPerSec digest_rate_floor = 1e16;
    std::string salt_id = "salt-1";
    std::string salt_secret = "scenario-shared-salt";
    Seconds violation_window_s = 30 * 86400.0;
    double throttle_multiplier = 0.5;
    Seconds reference_duration_s = accounting::kReferenceDurationS;
    std::string visibility = "full"; // "full" | "provider"
    int classifier_train_per_class = 16;
    classify::ReconcileConfig reconcile;
    ledger::RetentionPolicy retention;
    std::optional<Seconds> retention_sweep_at;
};

struct Scenario {
    std::string name;
    std::uint64_t seed = 0;
    bool seed_present = false;
    accounting::ComputeThresholds thresholds;
    Policies policies;
    accounting::AcceleratorCatalog accelerators;
    std::vector<telemetry::ClusterConfig> providers;
    kyc::AccountRegistry accounts;
    kyc::EntityList entity_list;
    std::vector<classify::Declaration> declarations;
    std::vector<ScheduleEntry> schedule;
    std::vector<Directive> directives;
    std::vector<ClaimSpec> attested_claims;

    const telemetry::ClusterConfig& provider(const std::string& id) const {
        for (const auto& p : providers)
            if (p.provider_id == id) return p;
        throw ValidationError("unknown provider '" + id + "'");
    }

    void validate() const {
        require(seed_present, "scenario: seed is mandatory");
        thresholds.validate();
        require(policies.epoch_length_s > 0, "policies.epoch_length_s must be > 0");
        require(policies.visibility == "full" || policies.visibility == "provider",
                "policies.visibility must be 'full' or 'provider'");
        policies.retention.validate();

        std::set<std::string> provider_ids;
        for (const auto& p : providers) {
            p.validate();
            require(provider_ids.insert(p.provider_id).second,
                    "duplicate provider id '" + p.provider_id + "'");
        }
        std::set<std::string> workload_ids;
        for (const auto& e : schedule) {
            require(!e.workload_id.empty(), "schedule entry missing workload_id");
            require(workload_ids.insert(e.workload_id).second,
                    "duplicate workload id '" + e.workload_id + "'");
            require(provider_ids.count(e.provider_id),
                    "schedule['" + e.workload_id + "']: unknown provider '" + e.provider_id + "'");
            require(accounts.count(e.workload.customer_id),
                    "schedule['" + e.workload_id + "']: unknown customer '" +
                        e.workload.customer_id + "'");
            require(e.start_t >= 0, "schedule['" + e.workload_id + "']: start_t must be >= 0");
            require(e.sample_interval_s > 0,
                    "schedule['" + e.workload_id + "']: sample_interval_s must be > 0");
            e.workload.validate();
        }
        for (const auto& d : declarations)
            require(accounts.count(d.customer_id),
                    "declaration references unknown customer '" + d.customer_id + "'");
        for (const auto& d : directives) {
            require(accounts.count(d.customer_id),
                    "directive references unknown customer '" + d.customer_id + "'");
            require(d.kind == "suspend" || d.kind == "resolve",
                    "directive kind must be 'suspend' or 'resolve'");
        }
        for (const auto& c : attested_claims) {
            auto it = accounts.find(c.customer_id);
            require(it != accounts.end(),
                    "attested claim references unknown customer '" + c.customer_id + "'");
            require(!it->second.attestation_key.empty(),
                    "attested claim: customer '" + c.customer_id + "' has no attestation_key");
        }
    }
};

// ---------------------------------------------------------------------------
// Parsing. Two accepted representations of the same document:
//   - nested: one JSON object with the sections as keys;
//   - line-delimited: a {"kind":"scenario",...} head line followed by one
//     object per element ({"kind":"provider",...}, {"kind":"account",...}, ...).
// ---------------------------------------------------------------------------

namespace detail {

template <typename F>
auto ctx(const std::string& where, F&& f) {
    try {
        return f();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(where + ": " + e.what());
    }
}

inline kyc::CustomerAccount account_from_json(const json& j) {
    kyc::CustomerAccount a;
    a.customer_id = j.at("customer_id").get<std::string>();
    a.legal_name = j.at("legal_name").get<std::string>();
    a.jurisdiction = j.value("jurisdiction", std::string("US"));
    if (j.contains("beneficial_owner_ids"))
        for (const auto& o : j["beneficial_owner_ids"]) a.beneficial_owner_ids.push_back(o.get<std::string>());
    if (j.contains("id_documents"))
        for (const auto& d : j["id_documents"])
            a.id_documents.push_back(
                {d.at("kind").get<std::string>(), d.value("checksum", std::string())});
    a.payment_instrument = j.value("payment_instrument", std::string());
    a.is_foreign = j.value("is_foreign", false);
    a.attestation_key = j.value("attestation_key", std::string());
    return a;
}

inline telemetry::ClusterConfig provider_from_json(const json& j,
                                                   const accounting::AcceleratorCatalog& catalog) {
    telemetry::ClusterConfig c;
    c.provider_id = j.at("provider_id").get<std::string>();
    c.node_count = j.at("node_count").get<int>();
    c.inter_node_bandwidth_bits_per_sec = j.at("inter_node_bandwidth_bits_per_sec").get<double>();
    const json& n = j.at("node");
    c.node.intra_node_bandwidth_bits_per_sec =
        n.at("intra_node_bandwidth_bits_per_sec").get<double>();
    for (const auto& g : n.at("accelerators")) {
        const std::string spec_id = g.at("spec_id").get<std::string>();
        auto it = catalog.find(spec_id);
        if (it == catalog.end())
            throw ValidationError("provider '" + c.provider_id + "': unknown accelerator spec '" +
                                  spec_id + "'");
        c.node.accelerators.push_back({it->second, g.at("count").get<int>()});
    }
    return c;
}

inline ScheduleEntry schedule_entry_from_json(const json& j) {
    ScheduleEntry e;
    e.workload_id = j.at("workload_id").get<std::string>();
    e.provider_id = j.at("provider_id").get<std::string>();
    e.start_t = j.value("start_t", 0.0);
    e.sample_interval_s = j.value("sample_interval_s", 60.0);
    const json& w = j.at("workload");
    e.workload.workload_id = e.workload_id;
    e.workload.klass = telemetry::workload_class_from_string(w.at("class").get<std::string>());
    e.workload.duration_s = w.at("duration_s").get<double>();
    e.workload.target_utilization = w.at("target_utilization").get<double>();
    e.workload.precision_mix = w.contains("precision_mix")
                                   ? json_to_tag_map(w["precision_mix"])
                                   : telemetry::default_mix(e.workload.klass);
    e.workload.obfuscation =
        telemetry::obfuscation_from_string(w.value("obfuscation", std::string("none")));
    e.workload.customer_id = w.at("customer_id").get<std::string>();
    return e;
}

inline classify::Declaration declaration_from_json(const json& j) {
    classify::Declaration d;
    d.customer_id = j.at("customer_id").get<std::string>();
    d.declared_class =
        telemetry::workload_class_from_string(j.at("declared_class").get<std::string>());
    d.declared_max_ops = j.at("declared_max_ops").get<double>();
    d.t = j.value("t", 0.0);
    return d;
}

inline void policies_from_json(const json& j, Policies& p) {
    p.edd_capacity_fraction = j.value("edd_capacity_fraction", p.edd_capacity_fraction);
    p.epoch_length_s = j.value("epoch_length_s", p.epoch_length_s);
    p.digest_rate_floor = j.value("digest_rate_floor_ops_per_sec", p.digest_rate_floor);
    p.salt_id = j.value("salt_id", p.salt_id);
    p.salt_secret = j.value("salt_secret", p.salt_secret);
    p.violation_window_s = j.value("violation_window_s", p.violation_window_s);
    p.throttle_multiplier = j.value("throttle_multiplier", p.throttle_multiplier);
    p.reference_duration_s = j.value("reference_duration_s", p.reference_duration_s);
    p.visibility = j.value("visibility", p.visibility);
    p.classifier_train_per_class = j.value("classifier_train_per_class", p.classifier_train_per_class);
    p.reconcile.mismatch_confidence =
        j.value("confidence_mismatch", p.reconcile.mismatch_confidence);
    p.reconcile.follow_up_confidence =
        j.value("confidence_follow_up", p.reconcile.follow_up_confidence);
    p.reconcile.ops_slack = j.value("ops_slack", p.reconcile.ops_slack);
    if (j.contains("retention_s"))
        for (auto it = j["retention_s"].begin(); it != j["retention_s"].end(); ++it)
            p.retention.retention_s[ledger::record_kind_from_string(it.key())] =
                it.value().get<double>();
    if (j.contains("retention_sweep_at")) p.retention_sweep_at = j["retention_sweep_at"].get<double>();
}

inline void thresholds_from_json(const json& j, accounting::ComputeThresholds& th) {
    th.training_ops_threshold = j.value("training_ops_threshold", th.training_ops_threshold);
    th.cluster_rate_threshold = j.value("cluster_rate_threshold", th.cluster_rate_threshold);
    th.cluster_fabric_threshold_bits_per_sec =
        j.value("cluster_fabric_threshold_bits_per_sec", th.cluster_fabric_threshold_bits_per_sec);
}

inline Directive directive_from_json(const json& j) {
    return {j.value("t", 0.0), j.at("customer_id").get<std::string>(),
            j.at("kind").get<std::string>()};
}

inline ClaimSpec claim_from_json(const json& j) {
    ClaimSpec c;
    c.t = j.value("t", 0.0);
    c.customer_id = j.at("customer_id").get<std::string>();
    c.claim_kind = oversight::claim_kind_from_string(j.at("claim_kind").get<std::string>());
    c.payload = j.contains("payload") ? j["payload"].dump() : std::string("{}");
    c.tamper = j.value("tamper", false);
    return c;
}

} // namespace detail

inline Scenario scenario_from_nested_json(const json& doc) {
    using detail::ctx;
    Scenario s;
    s.accelerators["accel-default"] = telemetry::default_accelerator();

    ctx("scenario header", [&] {
        require(doc.value("format_version", 1) == kScenarioFormatVersion,
                "unsupported scenario format_version");
        s.name = doc.value("name", std::string("scenario"));
        if (doc.contains("seed")) {
            s.seed = doc["seed"].get<std::uint64_t>();
            s.seed_present = true;
        }
        return 0;
    });
    if (doc.contains("thresholds"))
        ctx("thresholds", [&] { detail::thresholds_from_json(doc["thresholds"], s.thresholds); return 0; });
    if (doc.contains("policies"))
        ctx("policies", [&] { detail::policies_from_json(doc["policies"], s.policies); return 0; });
    if (doc.contains("accelerators"))
        ctx("accelerators", [&] {
            for (const auto& a : doc["accelerators"]) {
                auto spec = telemetry::detail::accelerator_from_json(a);
                spec.validate();
                s.accelerators[spec.id] = spec;
            }
            return 0;
        });
    if (doc.contains("providers"))
        ctx("providers", [&] {
            for (const auto& p : doc["providers"])
                s.providers.push_back(detail::provider_from_json(p, s.accelerators));
            return 0;
        });
    if (doc.contains("accounts"))
        ctx("accounts", [&] {
            for (const auto& a : doc["accounts"]) {
                auto acct = detail::account_from_json(a);
                s.accounts[acct.customer_id] = acct;
            }
            return 0;
        });
    if (doc.contains("entity_list"))
        ctx("entity_list", [&] {
            s.entity_list = kyc::entity_list_from_json(doc["entity_list"]);
            return 0;
        });
    if (doc.contains("declarations"))
        ctx("declarations", [&] {
            for (const auto& d : doc["declarations"])
                s.declarations.push_back(detail::declaration_from_json(d));
            return 0;
        });
    if (doc.contains("schedule"))
        ctx("schedule", [&] {
            for (const auto& e : doc["schedule"])
                s.schedule.push_back(detail::schedule_entry_from_json(e));
            return 0;
        });
    if (doc.contains("directives"))
        ctx("directives", [&] {
            for (const auto& d : doc["directives"])
                s.directives.push_back(detail::directive_from_json(d));
            return 0;
        });
    if (doc.contains("attested_claims"))
        ctx("attested_claims", [&] {
            for (const auto& c : doc["attested_claims"])
                s.attested_claims.push_back(detail::claim_from_json(c));
            return 0;
        });

    s.validate();
    return s;
}

inline Scenario scenario_from_jsonl_lines(const std::vector<json>& lines) {
    using detail::ctx;
    Scenario s;
    s.accelerators["accel-default"] = telemetry::default_accelerator();
    bool have_head = false;
    std::vector<json> provider_lines;

    for (std::size_t i = 0; i < lines.size(); ++i) {
        const json& j = lines[i];
        const std::string where = "line " + std::to_string(i + 1);
        const std::string kind = ctx(where, [&] { return j.at("kind").get<std::string>(); });
        if (kind == "scenario") {
            ctx(where, [&] {
                require(j.value("format_version", 1) == kScenarioFormatVersion,
                        "unsupported scenario format_version");
                s.name = j.value("name", std::string("scenario"));
                if (j.contains("seed")) {
                    s.seed = j["seed"].get<std::uint64_t>();
                    s.seed_present = true;
                }
                if (j.contains("thresholds")) detail::thresholds_from_json(j["thresholds"], s.thresholds);
                if (j.contains("policies")) detail::policies_from_json(j["policies"], s.policies);
                return 0;
            });
            have_head = true;
        } else if (kind == "accelerator") {
            ctx(where, [&] {
                auto spec = telemetry::detail::accelerator_from_json(j.at("spec"));
                spec.validate();
                s.accelerators[spec.id] = spec;
                return 0;
            });
        } else if (kind == "provider") {
            provider_lines.push_back(j); // resolved after all accelerators are read
        } else if (kind == "account") {
            ctx(where, [&] {
                auto acct = detail::account_from_json(j);
                s.accounts[acct.customer_id] = acct;
                return 0;
            });
        } else if (kind == "entity_list") {
            ctx(where, [&] {
                s.entity_list = kyc::entity_list_from_json(j);
                return 0;
            });
        } else if (kind == "declaration") {
            ctx(where, [&] {
                s.declarations.push_back(detail::declaration_from_json(j));
                return 0;
            });
        } else if (kind == "workload") {
            ctx(where, [&] {
                s.schedule.push_back(detail::schedule_entry_from_json(j));
                return 0;
            });
        } else if (kind == "directive") {
            ctx(where, [&] {
                s.directives.push_back(detail::directive_from_json(j));
                return 0;
            });
        } else if (kind == "attested_claim") {
            ctx(where, [&] {
                s.attested_claims.push_back(detail::claim_from_json(j));
                return 0;
            });
        } else {
            throw ValidationError(where + ": unknown record kind '" + kind + "'");
        }
    }
    require(have_head, "line-delimited scenario: missing {\"kind\":\"scenario\"} head line");
    for (const auto& p : provider_lines)
        s.providers.push_back(detail::provider_from_json(p, s.accelerators));

    s.validate();
    return s;
}

// Loads either representation; .jsonl selects the line-delimited variant.
inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open scenario file " + path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl")
        return scenario_from_jsonl_lines(read_jsonl_file(path));

    try {
        return scenario_from_nested_json(json::parse(content));
    } catch (const nlohmann::json::parse_error& e) {
        // Map the byte offset to a line number for the diagnostic.
        std::size_t line = 1;
        for (std::size_t i = 0; i < content.size() && i + 1 < e.byte; ++i)
            if (content[i] == '\n') ++line;
        throw ValidationError(path + ":" + std::to_string(line) + ": " + e.what());
    }
}

} // namespace govsim::scenario
