#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "govsim/accounting.hpp"
#include "govsim/classify.hpp"
#include "govsim/core.hpp"
#include "govsim/federation.hpp"
#include "govsim/jsonl.hpp"
#include "govsim/kyc.hpp"
#include "govsim/ledger.hpp"
#include "govsim/oversight.hpp"
#include "govsim/scenario.hpp"
#include "govsim/telemetry.hpp"

namespace govsim::pipeline {

namespace fs = std::filesystem;
using scenario::Scenario;

// Pipeline prefix to execute: each stage implies the ones before it, in the
// fixed order generate -> account -> classify -> kyc -> oversee+federate.
enum class Stage { simulate = 0, account = 1, classify = 2, kyc = 3, federate = 4, report = 5 };

inline Stage stage_from_string(const std::string& s) {
    if (s == "simulate") return Stage::simulate;
    if (s == "account") return Stage::account;
    if (s == "classify") return Stage::classify;
    if (s == "kyc") return Stage::kyc;
    if (s == "federate") return Stage::federate;
    if (s == "report") return Stage::report;
    throw ValidationError("unknown stage '" + s + "'");
}

struct RunOptions {
    Stage stage = Stage::report;
    std::optional<std::uint64_t> seed_override;
};

struct RunResult {
    int exit_code = 0;
    std::string summary_json;
    std::string summary_text;
    std::size_t trace_count = 0;
    std::size_t estimate_count = 0;
    std::vector<accounting::ReportableEvent> events;
    std::vector<federation::StructuringAlert> alerts;
    std::map<std::string, std::string> kyc_tiers;          // customer -> tier
    std::map<std::string, std::string> enforcement_states; // customer -> state
    std::map<std::string, std::string> reconcile_outcomes; // workload -> outcome
    std::map<std::string, std::string> classifications;    // workload -> label
};

namespace detail {

struct GeneratedTrace {
    scenario::ScheduleEntry entry;
    telemetry::TelemetryTrace trace;
};

inline std::string alloc_id(std::size_t index) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "alloc-%04zu", index);
    return buf;
}

// Peak concurrent theoretical capacity a customer requested from one
// provider, from the workload schedule (what KYC sizes its checks on).
inline OpsPerSec requested_capacity(const Scenario& sc, const std::string& customer_id,
                                    const std::string& provider_id) {
    struct Edge {
        Seconds t;
        OpsPerSec delta;
    };
    std::vector<Edge> edges;
    const auto& cluster = sc.provider(provider_id);
    const OpsPerSec capacity = cluster.peak_ops_per_sec();
    for (const auto& e : sc.schedule) {
        if (e.workload.customer_id != customer_id || e.provider_id != provider_id) continue;
        edges.push_back({e.start_t, capacity});
        edges.push_back({e.start_t + e.workload.duration_s, -capacity});
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        return a.t != b.t ? a.t < b.t : a.delta < b.delta;
    });
    OpsPerSec running = 0, best = 0;
    for (const auto& e : edges) {
        running += e.delta;
        best = std::max(best, running);
    }
    return best;
}

// Deterministic classifier training: per distinct cluster shape, synthesize
// labeled workloads across all classes at class-typical settings.
inline classify::ClassifierModel train_model_for_cluster(const telemetry::ClusterConfig& cluster,
                                                         std::uint64_t seed, int per_class) {
    std::vector<classify::LabeledExample> examples;
    const int n = std::max(per_class, 10);
    for (auto klass : telemetry::all_classes()) {
        Rng rng(derive_seed(seed, "train:" + telemetry::to_string(klass)));
        const auto [lo, hi] = telemetry::typical_target_range(klass);
        for (int i = 0; i < n; ++i) {
            telemetry::WorkloadSpec w;
            w.workload_id = "train-" + telemetry::to_string(klass) + "-" + std::to_string(i);
            w.klass = klass;
            w.duration_s = 24 * 60.0;
            w.target_utilization = rng.uniform(lo, hi);
            w.precision_mix = telemetry::default_mix(klass);
            w.customer_id = "train";
            const auto trace = telemetry::generate_trace(w, cluster, rng.next_u64(), 60.0);
            examples.push_back({classify::extract_features(trace), klass});
        }
    }
    return classify::fit_classifier(examples, seed);
}

inline std::string cluster_shape_key(const telemetry::ClusterConfig& c) {
    std::string key = std::to_string(c.node_count);
    for (const auto& g : c.node.accelerators)
        key += "|" + g.spec.id + "x" + std::to_string(g.count);
    return key;
}

inline void remove_artifacts(const fs::path& out) {
    static const char* files[] = {
        "ledger.jsonl",  "ledger_export.jsonl", "summary.json",    "summary.txt",
        "usage.jsonl",   "estimates.jsonl",     "events.jsonl",    "classifications.jsonl",
        "model.json",    "kyc.jsonl",           "enforcement.jsonl", "reports.jsonl",
        "claims.jsonl",  "digests.jsonl",       "alerts.jsonl"};
    for (const char* f : files) fs::remove(out / f);
    fs::remove_all(out / "traces");
}

struct EpochSpan {
    std::uint64_t first = 0;
    std::uint64_t last = 0;
};

inline EpochSpan epochs_covering(Seconds start, Seconds end, Seconds epoch_len) {
    EpochSpan s;
    s.first = static_cast<std::uint64_t>(std::max(0.0, std::floor(start / epoch_len)));
    const Seconds end_in = std::max(start, end - epoch_len * 1e-9);
    s.last = static_cast<std::uint64_t>(std::max(0.0, std::floor(end_in / epoch_len)));
    return s;
}

} // namespace detail

// ---------------------------------------------------------------------------
// run_scenario: the full deterministic pipeline. Identical scenario + seed
// produce byte-identical artifact directories.
// ---------------------------------------------------------------------------

inline RunResult run_scenario(Scenario sc, const fs::path& out_dir, const RunOptions& opts = {}) {
    if (opts.seed_override) {
        sc.seed = *opts.seed_override;
        sc.seed_present = true;
    }
    sc.validate();
    const Stage stage = opts.stage;

    fs::create_directories(out_dir);
    detail::remove_artifacts(out_dir);
    fs::create_directories(out_dir / "traces");

    RunResult result;
    ledger::Ledger book((out_dir / "ledger.jsonl").string(),
                        "ledger:" + sc.name + ":" + std::to_string(sc.seed));
    const std::string report_salt =
        to_hex(Sha256::digest("report:" + sc.name + ":" + std::to_string(sc.seed)).data(), 16);

    // --- stage 0: generate ------------------------------------------------
    std::vector<detail::GeneratedTrace> traces;
    {
        auto schedule = sc.schedule;
        std::sort(schedule.begin(), schedule.end(), [](const auto& a, const auto& b) {
            return a.start_t != b.start_t ? a.start_t < b.start_t : a.workload_id < b.workload_id;
        });
        for (const auto& entry : schedule) {
            const auto seed = derive_seed(sc.seed, "trace:" + entry.workload_id);
            auto trace = telemetry::generate_trace(entry.workload, sc.provider(entry.provider_id),
                                                   seed, entry.sample_interval_s);
            telemetry::write_trace_file(trace,
                                        (out_dir / "traces" / (entry.workload_id + ".jsonl")).string());
            traces.push_back({entry, std::move(trace)});
        }
        result.trace_count = traces.size();
    }

    // --- stage 1: account --------------------------------------------------
    const bool provider_visibility = sc.policies.visibility == "provider";
    std::vector<accounting::UsageRecord> usage_records;
    std::vector<accounting::AttributedEstimate> all_estimates; // across providers
    std::map<std::string, std::vector<accounting::AttributedEstimate>> estimates_by_provider;
    std::vector<accounting::ReportableEvent> events;
    std::map<std::string, Ops> counters_ops_by_customer;

    if (stage >= Stage::account) {
        std::string usage_lines;
        for (std::size_t i = 0; i < traces.size(); ++i) {
            const auto& g = traces[i];
            accounting::UsageRecord r;
            r.customer_id = g.entry.workload.customer_id;
            r.cluster_id = g.entry.provider_id;
            const auto& cluster = sc.provider(g.entry.provider_id);
            r.node_count = cluster.node_count;
            r.accel_per_node = cluster.node.accel_count();
            r.accel_spec_id = cluster.node.accelerators.front().spec.id;
            r.start_t = g.entry.start_t;
            r.end_t = g.entry.start_t + std::max(g.entry.workload.duration_s,
                                                 g.entry.sample_interval_s);
            r.assumed_utilization = g.entry.workload.target_utilization;
            usage_records.push_back(r);

            JsonWriter w;
            w.begin_obj();
            w.kv("kind", "usage");
            w.kv("customer_id", r.customer_id);
            w.kv("cluster_id", r.cluster_id);
            w.kv("node_count", r.node_count);
            w.kv("accel_per_node", r.accel_per_node);
            w.kv("accel_spec_id", r.accel_spec_id);
            w.kv("start_t", r.start_t);
            w.kv("end_t", r.end_t);
            w.kv("assumed_utilization", r.assumed_utilization);
            w.kv("allocation_id", detail::alloc_id(i));
            w.end_obj();
            const std::string line = w.take();
            usage_lines += line;
            usage_lines.push_back('\n');
            book.append(r.start_t, ledger::RecordKind::usage, r.customer_id, line);
        }
        write_text_file((out_dir / "usage.jsonl").string(), usage_lines);

        // Empirical (counters) estimate per trace; the attribution unit is
        // the workload tag in full visibility, the allocation window in
        // provider visibility.
        std::string estimate_lines;
        for (std::size_t i = 0; i < traces.size(); ++i) {
            const auto& g = traces[i];
            accounting::AttributedEstimate ae;
            ae.customer_id = g.entry.workload.customer_id;
            ae.workload_id = provider_visibility ? detail::alloc_id(i) : g.entry.workload_id;
            ae.t = g.entry.start_t + g.entry.workload.duration_s;
            ae.estimate = accounting::empirical_estimate(g.trace, accounting::Method::counters);
            ae.estimate.window_start_t += g.entry.start_t; // trace-relative -> absolute
            ae.estimate.window_end_t += g.entry.start_t;
            counters_ops_by_customer[ae.customer_id] += ae.estimate.ops_point;
            estimates_by_provider[g.entry.provider_id].push_back(ae);
            all_estimates.push_back(ae);

            const std::string line = accounting::estimate_line(ae);
            estimate_lines += line;
            estimate_lines.push_back('\n');
            book.append(ae.t, ledger::RecordKind::estimate, ae.customer_id, line);
        }
        // Reference theoretical budget per (provider, customer): written as
        // estimates but not fed to threshold streams (counters already
        // attribute those ops; feeding both would double-count).
        std::map<std::pair<std::string, std::string>, std::vector<accounting::UsageRecord>>
            records_by_provider_customer;
        for (const auto& r : usage_records)
            records_by_provider_customer[{r.cluster_id, r.customer_id}].push_back(r);
        for (const auto& [key, records] : records_by_provider_customer) {
            const auto budget = accounting::theoretical_budget(records, sc.accelerators);
            accounting::AttributedEstimate ae;
            ae.customer_id = key.second;
            ae.workload_id = "allocation:" + key.first;
            ae.t = budget.estimate.window_end_t;
            ae.estimate = budget.estimate;
            const std::string line = accounting::estimate_line(ae);
            estimate_lines += line;
            estimate_lines.push_back('\n');
            book.append(ae.t, ledger::RecordKind::estimate, ae.customer_id, line);
        }
        write_text_file((out_dir / "estimates.jsonl").string(), estimate_lines);
        result.estimate_count = all_estimates.size();

        // Threshold checks per provider over its own estimate stream.
        std::string event_lines;
        for (const auto& p : sc.providers) {
            auto stream = estimates_by_provider[p.provider_id];
            std::sort(stream.begin(), stream.end(), [](const auto& a, const auto& b) {
                return a.t != b.t ? a.t < b.t : a.workload_id < b.workload_id;
            });
            auto provider_events = accounting::check_thresholds(
                stream, &p, sc.thresholds, sc.policies.reference_duration_s);
            for (auto& ev : provider_events) {
                event_lines += accounting::event_line(ev);
                event_lines.push_back('\n');
                events.push_back(std::move(ev));
            }
        }
        write_text_file((out_dir / "events.jsonl").string(), event_lines);
        result.events = events;
    }

    // --- stage 2: classify ---------------------------------------------------
    std::map<std::string, classify::ClassificationResult> classifications; // by workload
    std::map<std::string, classify::ReconcileOutcome> reconciliations;
    if (stage >= Stage::classify && !traces.empty()) {
        std::map<std::string, classify::ClassifierModel> models_by_shape;
        std::string model_doc;
        for (const auto& p : sc.providers) {
            const std::string key = detail::cluster_shape_key(p);
            if (!models_by_shape.count(key)) {
                models_by_shape[key] = detail::train_model_for_cluster(
                    p, derive_seed(sc.seed, "model:" + key), sc.policies.classifier_train_per_class);
                model_doc += classify::model_to_json(models_by_shape[key]);
                model_doc.push_back('\n');
            }
        }
        write_text_file((out_dir / "model.json").string(), model_doc);

        std::string classification_lines;
        for (const auto& g : traces) {
            const auto& model =
                models_by_shape.at(detail::cluster_shape_key(sc.provider(g.entry.provider_id)));
            const auto res = classify::classify_trace(g.trace, model);
            const std::string line = classify::classification_line(
                g.entry.workload_id, g.entry.workload.customer_id, res);
            classification_lines += line;
            classification_lines.push_back('\n');
            book.append(g.entry.start_t + g.entry.workload.duration_s,
                        ledger::RecordKind::classification, g.entry.workload.customer_id, line);
            result.classifications[g.entry.workload_id] = res.top_label;
            classifications[g.entry.workload_id] = res;

            // Reconcile against the latest declaration made before the
            // workload completed; no declaration, nothing to reconcile.
            const classify::Declaration* decl = nullptr;
            const Seconds end_t = g.entry.start_t + g.entry.workload.duration_s;
            for (const auto& d : sc.declarations)
                if (d.customer_id == g.entry.workload.customer_id && d.t <= end_t &&
                    (!decl || d.t >= decl->t))
                    decl = &d;
            if (decl) {
                accounting::ComputeEstimate est;
                for (const auto& ae : all_estimates)
                    if (ae.workload_id == g.entry.workload_id ||
                        (provider_visibility && ae.customer_id == g.entry.workload.customer_id))
                        est = ae.estimate;
                reconciliations[g.entry.workload_id] =
                    classify::reconcile(*decl, res, est, sc.policies.reconcile);
                result.reconcile_outcomes[g.entry.workload_id] =
                    classify::to_string(reconciliations[g.entry.workload_id]);
            }
        }
        write_text_file((out_dir / "classifications.jsonl").string(), classification_lines);
    } else if (stage >= Stage::classify) {
        write_text_file((out_dir / "model.json").string(), "");
        write_text_file((out_dir / "classifications.jsonl").string(), "");
    }

    // --- stage 3: kyc ---------------------------------------------------------
    std::vector<std::string> denied_customers;
    if (stage >= Stage::kyc) {
        kyc::KycConfig kcfg;
        kcfg.frontier_capacity_ops_per_sec =
            sc.policies.edd_capacity_fraction * sc.thresholds.cluster_rate_threshold;
        std::string kyc_lines;
        for (auto& [id, account] : sc.accounts) {
            OpsPerSec capacity = 0;
            for (const auto& p : sc.providers)
                capacity = std::max(capacity, detail::requested_capacity(sc, id, p.provider_id));
            const auto outcome =
                kyc::verify_identity(account, capacity, sc.entity_list, sc.accounts, kcfg);
            account.risk_tier = outcome.tier;
            result.kyc_tiers[id] = kyc::to_string(outcome.tier);
            if (outcome.tier == kyc::RiskTier::denied) denied_customers.push_back(id);
            const std::string line = kyc::kyc_event_line(account, capacity, outcome);
            kyc_lines += line;
            kyc_lines.push_back('\n');
            book.append(0, ledger::RecordKind::kyc_event, id, line);
        }
        write_text_file((out_dir / "kyc.jsonl").string(), kyc_lines);
    }

    // --- stage 4: oversee + federate -------------------------------------------
    if (stage >= Stage::federate) {
        // Attested claims: sign with the registered key, apply the scripted
        // tamper bit, then verify as the provider would.
        oversight::KeyRegistry keys;
        for (const auto& [id, account] : sc.accounts)
            if (!account.attestation_key.empty()) keys[id] = account.attestation_key;

        struct PendingSignal {
            oversight::Signal signal;
            std::string customer_id;
            accounting::ComputeEstimate evidence;
            std::string report_kind;
        };
        std::vector<PendingSignal> signals;

        std::string claim_lines;
        for (const auto& cspec : sc.attested_claims) {
            auto claim = oversight::make_attested_claim(cspec.customer_id, cspec.claim_kind,
                                                        cspec.payload, keys.at(cspec.customer_id));
            if (cspec.tamper && !claim.payload.empty()) claim.payload[0] ^= 0x01;
            const auto verdict = oversight::verify_attested_claim(claim, keys);
            JsonWriter w;
            w.begin_obj();
            w.kv("kind", "attested_claim");
            w.kv("customer_id", cspec.customer_id);
            w.kv("claim_kind", oversight::to_string(cspec.claim_kind));
            w.kv("t", cspec.t);
            w.kv_bool("accepted", verdict.accepted);
            w.kv("reason", verdict.accepted ? "mac_valid" : verdict.reason);
            w.end_obj();
            claim_lines += w.take();
            claim_lines.push_back('\n');

            if (!verdict.accepted) {
                PendingSignal ps;
                ps.signal = {oversight::SignalKind::attestation_failure, cspec.t,
                             oversight::to_string(cspec.claim_kind)};
                ps.customer_id = cspec.customer_id;
                ps.report_kind = "attestation_failure";
                signals.push_back(std::move(ps));
            } else if (cspec.claim_kind == oversight::ClaimKind::ops_consumed &&
                       verdict.content.contains("ops")) {
                accounting::ComputeEstimate ref;
                ref.method = accounting::Method::counters;
                ref.ops_point = ref.ops_lower = ref.ops_upper =
                    counters_ops_by_customer[cspec.customer_id];
                auto cross = oversight::cross_check_ops_claim(
                    verdict.content["ops"].get<double>(), ref, cspec.t);
                if (cross) {
                    PendingSignal ps;
                    ps.signal = *cross;
                    ps.customer_id = cspec.customer_id;
                    ps.evidence = ref;
                    ps.report_kind = "ops_claim_mismatch";
                    signals.push_back(std::move(ps));
                }
            }
        }
        write_text_file((out_dir / "claims.jsonl").string(), claim_lines);

        // KYC denials.
        for (const auto& id : denied_customers) {
            PendingSignal ps;
            ps.signal = {oversight::SignalKind::kyc_denied, 0, "entity_list"};
            ps.customer_id = id;
            ps.report_kind = "kyc_denied";
            signals.push_back(std::move(ps));
        }

        // Reconciliation outcomes.
        for (const auto& g : traces) {
            auto it = reconciliations.find(g.entry.workload_id);
            if (it == reconciliations.end()) continue;
            const Seconds end_t = g.entry.start_t + g.entry.workload.duration_s;
            if (it->second == classify::ReconcileOutcome::mismatch) {
                PendingSignal ps;
                ps.signal = {oversight::SignalKind::mismatch, end_t, g.entry.workload_id};
                ps.customer_id = g.entry.workload.customer_id;
                for (const auto& ae : all_estimates)
                    if (ae.customer_id == g.entry.workload.customer_id &&
                        (ae.workload_id == g.entry.workload_id || provider_visibility))
                        ps.evidence = ae.estimate;
                ps.report_kind = "declaration_mismatch";
                signals.push_back(std::move(ps));
            } else if (it->second == classify::ReconcileOutcome::follow_up) {
                PendingSignal ps;
                ps.signal = {oversight::SignalKind::follow_up, end_t, g.entry.workload_id};
                ps.customer_id = g.entry.workload.customer_id;
                signals.push_back(std::move(ps));
            }
        }

        // Threshold events: unreported unless a prior declaration covers the
        // evidenced ops.
        for (const auto& ev : events) {
            if (ev.kind == accounting::EventKind::cluster_over_threshold) continue;
            bool reported = false;
            for (const auto& d : sc.declarations)
                if (d.customer_id == ev.customer_id && d.t <= ev.t &&
                    d.declared_max_ops >= ev.evidence.ops_point)
                    reported = true;
            if (!reported) {
                PendingSignal ps;
                ps.signal = {oversight::SignalKind::unreported_threshold_event, ev.t,
                             accounting::to_string(ev.kind)};
                ps.customer_id = ev.customer_id;
                ps.evidence = ev.evidence;
                ps.report_kind = "unreported_" + accounting::to_string(ev.kind);
                signals.push_back(std::move(ps));
            }
        }

        // Regulator directives.
        for (const auto& d : sc.directives) {
            PendingSignal ps;
            ps.signal = {d.kind == "suspend" ? oversight::SignalKind::directive_suspend
                                             : oversight::SignalKind::directive_resolve,
                         d.t, "regulator_directive"};
            ps.customer_id = d.customer_id;
            if (d.kind == "suspend") ps.report_kind = "regulator_directive_suspend";
            signals.push_back(std::move(ps));
        }

        std::stable_sort(signals.begin(), signals.end(), [](const auto& a, const auto& b) {
            return a.signal.t != b.signal.t ? a.signal.t < b.signal.t
                                            : a.customer_id < b.customer_id;
        });

        oversight::EnforcementPolicy policy;
        policy.violation_window_s = sc.policies.violation_window_s;
        policy.throttle_multiplier = sc.policies.throttle_multiplier;
        oversight::EnforcementEngine engine(policy);
        for (const auto& [id, account] : sc.accounts) engine.register_customer(id);

        std::string enforcement_lines, report_lines;
        for (const auto& ps : signals) {
            const auto tr = engine.evaluate(ps.customer_id, ps.signal);
            if (tr.changed || ps.signal.kind != oversight::SignalKind::compliant) {
                const std::string line =
                    oversight::enforcement_event_line(ps.customer_id, tr, ps.signal.t);
                enforcement_lines += line;
                enforcement_lines.push_back('\n');
                book.append(ps.signal.t, ledger::RecordKind::enforcement_event, ps.customer_id,
                            line);
            }
            if (tr.report_to_regulator && !ps.report_kind.empty()) {
                report_lines += oversight::regulator_report_line(
                    ps.report_kind, ps.customer_id, /*under_warrant=*/false, report_salt,
                    ps.evidence, ps.signal.t);
                report_lines.push_back('\n');
            }
        }
        write_text_file((out_dir / "enforcement.jsonl").string(), enforcement_lines);
        write_text_file((out_dir / "reports.jsonl").string(), report_lines);
        for (const auto& st : engine.all())
            result.enforcement_states[st.customer_id] = oversight::to_string(st.state);

        // Federation: per-epoch digests per provider, then a merge.
        const Seconds epoch_len = sc.policies.epoch_length_s;
        // (provider, epoch) -> identity -> usage
        std::map<std::pair<std::string, std::uint64_t>, federation::ProviderEpochUsage> usage;
        for (const auto& g : traces) {
            const auto& account = sc.accounts.at(g.entry.workload.customer_id);
            // Cluster-wide ops per step, then fold into epochs.
            std::map<Seconds, Ops> step_ops;
            for (const auto& s : g.trace.samples) {
                Ops v = 0;
                for (const auto& [tag, ops] : s.ops_by_precision) v += ops;
                step_ops[g.entry.start_t + s.t] += v;
            }
            std::map<std::uint64_t, federation::CustomerEpochUsage> per_epoch;
            for (const auto& [t_abs, ops] : step_ops) {
                const auto epoch = static_cast<std::uint64_t>(std::floor(t_abs / epoch_len));
                auto& u = per_epoch[epoch];
                u.cum_ops += ops;
                u.peak_rate_ops_per_sec =
                    std::max(u.peak_rate_ops_per_sec, ops / g.trace.sample_interval_s);
            }
            for (const auto& [epoch, u] : per_epoch) {
                auto& pe = usage[{g.entry.provider_id, epoch}];
                pe.provider_id = g.entry.provider_id;
                pe.epoch = epoch;
                auto& cu = pe.by_identity[account.legal_name];
                cu.cum_ops += u.cum_ops;
                // Concurrent workloads of one customer add capacity.
                cu.peak_rate_ops_per_sec += u.peak_rate_ops_per_sec;
            }
        }

        federation::FederationConfig fcfg;
        fcfg.digest_rate_floor = sc.policies.digest_rate_floor;
        std::map<std::uint64_t, std::vector<federation::FederationDigest>> digests_by_epoch;
        std::string digest_lines;
        for (const auto& [key, pe] : usage) {
            federation::SharedSalt salt{key.second, sc.policies.salt_id, sc.policies.salt_secret};
            auto digest = federation::build_digest(pe, key.second, salt, fcfg);
            digest_lines += federation::digest_line(digest);
            digest_lines.push_back('\n');
            book.append(static_cast<double>(key.second) * epoch_len,
                        ledger::RecordKind::federation_digest, "",
                        federation::digest_line(digest));
            digests_by_epoch[key.second].push_back(std::move(digest));
        }
        write_text_file((out_dir / "digests.jsonl").string(), digest_lines);

        // Customers already reported by a single provider in an epoch are
        // not re-alerted by the merge.
        std::map<std::uint64_t, std::set<std::string>> reported_tags_by_epoch;
        for (const auto& ev : events) {
            if (ev.kind == accounting::EventKind::cluster_over_threshold) continue;
            const auto& account = sc.accounts.at(ev.customer_id);
            const auto span = detail::epochs_covering(ev.evidence.window_start_t,
                                                      ev.evidence.window_end_t, epoch_len);
            for (std::uint64_t e = span.first; e <= span.last; ++e) {
                federation::SharedSalt salt{e, sc.policies.salt_id, sc.policies.salt_secret};
                reported_tags_by_epoch[e].insert(
                    federation::customer_tag(salt, account.legal_name));
            }
        }

        std::string alert_lines;
        for (auto& [epoch, digests] : digests_by_epoch) {
            auto alerts = federation::merge_and_detect(digests, sc.thresholds,
                                                       sc.policies.reference_duration_s);
            alerts = federation::suppress_reported(std::move(alerts),
                                                   reported_tags_by_epoch[epoch]);
            for (auto& a : alerts) {
                alert_lines += federation::alert_line(a);
                alert_lines.push_back('\n');
                result.alerts.push_back(std::move(a));
            }
        }
        write_text_file((out_dir / "alerts.jsonl").string(), alert_lines);
    }

    // Optional retention sweep at the end of the run.
    if (stage >= Stage::federate && sc.policies.retention_sweep_at)
        book.sweep_retention(*sc.policies.retention_sweep_at, sc.policies.retention);

    // --- summary -----------------------------------------------------------
    const bool alert_present = !result.events.empty() || !result.alerts.empty();
    result.exit_code = alert_present ? 3 : 0;

    {
        JsonWriter w;
        w.begin_obj();
        w.kv("kind", "summary");
        w.kv("scenario", sc.name);
        w.kv("seed", sc.seed);
        w.kv("providers", static_cast<std::uint64_t>(sc.providers.size()));
        w.kv("accounts", static_cast<std::uint64_t>(sc.accounts.size()));
        w.kv("traces", static_cast<std::uint64_t>(result.trace_count));
        w.kv("estimates", static_cast<std::uint64_t>(result.estimate_count));
        w.key("reportable_events").begin_arr();
        for (const auto& ev : result.events) {
            w.begin_obj();
            w.kv("event", accounting::to_string(ev.kind));
            w.kv("customer_id", ev.customer_id);
            w.kv("workload_id", ev.workload_id);
            w.kv("t", ev.t);
            w.kv("ops_point", ev.evidence.ops_point);
            w.end_obj();
        }
        w.end_arr();
        w.key("classifications").begin_obj();
        for (const auto& [wid, label] : result.classifications) w.kv(wid, label);
        w.end_obj();
        w.key("reconciliations").begin_obj();
        for (const auto& [wid, outcome] : result.reconcile_outcomes) w.kv(wid, outcome);
        w.end_obj();
        w.key("kyc_tiers").begin_obj();
        for (const auto& [id, tier] : result.kyc_tiers) w.kv(id, tier);
        w.end_obj();
        w.key("enforcement_states").begin_obj();
        for (const auto& [id, st] : result.enforcement_states) w.kv(id, st);
        w.end_obj();
        w.key("structuring_alerts").begin_arr();
        for (const auto& a : result.alerts) {
            w.begin_obj();
            w.kv("customer_tag", a.customer_tag);
            w.kv("epoch", a.epoch);
            w.kv("combined_rate", a.combined_rate);
            w.kv("provider_count", a.provider_count);
            w.end_obj();
        }
        w.end_arr();
        w.kv("exit_code", result.exit_code);
        w.end_obj();
        result.summary_json = w.take();
    }
    {
        std::ostringstream t;
        t << "scenario: " << sc.name << "\n";
        t << "seed: " << sc.seed << "\n";
        t << "providers: " << sc.providers.size() << "  accounts: " << sc.accounts.size()
          << "  workloads: " << sc.schedule.size() << "\n";
        t << "traces: " << result.trace_count << "  estimates: " << result.estimate_count << "\n";
        t << "reportable events: " << result.events.size() << "\n";
        for (const auto& ev : result.events)
            t << "  - " << accounting::to_string(ev.kind) << " customer=" << ev.customer_id
              << " unit=" << ev.workload_id << " ops=" << format_sci(ev.evidence.ops_point)
              << "\n";
        t << "classifications:\n";
        for (const auto& [wid, label] : result.classifications)
            t << "  - " << wid << " -> " << label << "\n";
        t << "reconciliations:\n";
        for (const auto& [wid, outcome] : result.reconcile_outcomes)
            t << "  - " << wid << " -> " << outcome << "\n";
        t << "kyc:\n";
        for (const auto& [id, tier] : result.kyc_tiers) t << "  - " << id << " = " << tier << "\n";
        t << "enforcement:\n";
        for (const auto& [id, st] : result.enforcement_states)
            t << "  - " << id << " = " << st << "\n";
        t << "structuring alerts: " << result.alerts.size() << "\n";
        for (const auto& a : result.alerts)
            t << "  - tag=" << a.customer_tag << " epoch=" << a.epoch
              << " combined_rate=" << format_sci(a.combined_rate)
              << " providers=" << a.provider_count << "\n";
        t << "exit: " << result.exit_code << "\n";
        result.summary_text = t.str();
    }
    write_text_file((out_dir / "summary.json").string(), result.summary_json + "\n");
    write_text_file((out_dir / "summary.txt").string(), result.summary_text);
    write_text_file((out_dir / "ledger_export.jsonl").string(), book.export_jsonl(false));

    return result;
}

inline RunResult run_scenario_file(const std::string& scenario_path, const fs::path& out_dir,
                                   const RunOptions& opts = {}) {
    return run_scenario(scenario::load_scenario(scenario_path), out_dir, opts);
}

} // namespace govsim::pipeline
