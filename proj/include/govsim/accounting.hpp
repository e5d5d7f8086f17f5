#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "govsim/core.hpp"
#include "govsim/jsonl.hpp"
#include "govsim/telemetry.hpp"

namespace govsim::accounting {

using telemetry::AcceleratorSpec;
using telemetry::ClusterConfig;
using telemetry::TelemetryTrace;

using AcceleratorCatalog = std::map<std::string, AcceleratorSpec>;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

// Billing-level allocation record: what hardware a customer had, and when.
struct UsageRecord {
    std::string customer_id;
    std::string cluster_id;
    int node_count = 1;
    int accel_per_node = 1;
    std::string accel_spec_id;
    Seconds start_t = 0;
    Seconds end_t = 0;
    Fraction assumed_utilization = 0;

    void validate() const {
        require(end_t > start_t, "usage record: end_t must be > start_t");
        require(node_count >= 1 && accel_per_node >= 1, "usage record: counts must be >= 1");
        require(assumed_utilization >= 0 && assumed_utilization <= 1,
                "usage record: assumed_utilization must be in [0,1]");
    }
};

enum class Method { theoretical, counters, mem_bw_proxy, power_proxy, fused };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::theoretical: return "theoretical";
        case Method::counters: return "counters";
        case Method::mem_bw_proxy: return "mem_bw_proxy";
        case Method::power_proxy: return "power_proxy";
        case Method::fused: return "fused";
    }
    throw Error("bad Method");
}

inline Method method_from_string(const std::string& s) {
    for (auto m : {Method::theoretical, Method::counters, Method::mem_bw_proxy,
                   Method::power_proxy, Method::fused})
        if (to_string(m) == s) return m;
    throw ValidationError("unknown estimation method '" + s + "'");
}

struct ComputeEstimate {
    Ops ops_point = 0;
    Ops ops_lower = 0;
    Ops ops_upper = 0;
    OpsPerSec peak_rate_ops_per_sec = 0;
    Method method = Method::theoretical;
    Seconds window_start_t = 0;
    Seconds window_end_t = 0;

    void validate() const {
        require(ops_lower >= 0 && ops_point >= 0 && ops_upper >= 0 && peak_rate_ops_per_sec >= 0,
                "estimate: negative quantity");
        require(ops_lower <= ops_point && ops_point <= ops_upper,
                "estimate: need ops_lower <= ops_point <= ops_upper");
    }
};

struct ComputeThresholds {
    Ops training_ops_threshold = 1e26;
    OpsPerSec cluster_rate_threshold = 1e20;
    BitsPerSec cluster_fabric_threshold_bits_per_sec = 1e11; // 100 Gbit/s

    void validate() const {
        require(training_ops_threshold > 0 && cluster_rate_threshold > 0 &&
                    cluster_fabric_threshold_bits_per_sec > 0,
                "thresholds must be > 0");
    }
};

// Sustained rate that would accumulate the training threshold over the
// reference duration (default 90 days).
inline constexpr Seconds kReferenceDurationS = 90.0 * 86400.0;

inline OpsPerSec implied_training_rate(const ComputeThresholds& th,
                                       Seconds reference_duration = kReferenceDurationS) {
    return th.training_ops_threshold / reference_duration;
}

enum class EventKind { training_run_over_threshold, cluster_over_threshold, rate_over_threshold };

inline std::string to_string(EventKind k) {
    switch (k) {
        case EventKind::training_run_over_threshold: return "training_run_over_threshold";
        case EventKind::cluster_over_threshold: return "cluster_over_threshold";
        case EventKind::rate_over_threshold: return "rate_over_threshold";
    }
    throw Error("bad EventKind");
}

struct ReportableEvent {
    EventKind kind = EventKind::training_run_over_threshold;
    std::string customer_id;
    std::string workload_id; // attribution unit that triggered the event
    ComputeEstimate evidence;
    Seconds t = 0;
};

// ---------------------------------------------------------------------------
// Theoretical budget
// ---------------------------------------------------------------------------

struct TheoreticalBudget {
    ComputeEstimate estimate;
    std::vector<std::string> overlap_flags; // overlapping same-allocation records
};

// Peak capacity x allocated time x assumed utilization, summed over records.
// Overlapping records for the same physical allocation are clipped so hours
// are not billed twice, and each clip is reported in overlap_flags.
inline TheoreticalBudget theoretical_budget(std::vector<UsageRecord> records,
                                            const AcceleratorCatalog& specs) {
    TheoreticalBudget out;
    out.estimate.method = Method::theoretical;
    if (records.empty()) return out;

    for (const auto& r : records) {
        r.validate();
        if (!specs.count(r.accel_spec_id))
            throw DataError("unknown accelerator spec '" + r.accel_spec_id + "'");
    }

    // Clip overlaps within groups describing the same allocation.
    auto alloc_key = [](const UsageRecord& r) {
        return r.customer_id + "|" + r.cluster_id + "|" + r.accel_spec_id + "|" +
               std::to_string(r.node_count) + "|" + std::to_string(r.accel_per_node);
    };
    std::stable_sort(records.begin(), records.end(), [&](const auto& a, const auto& b) {
        const auto ka = alloc_key(a), kb = alloc_key(b);
        return ka != kb ? ka < kb : a.start_t < b.start_t;
    });
    for (std::size_t i = 1; i < records.size(); ++i) {
        auto& cur = records[i];
        const auto& prev = records[i - 1];
        if (alloc_key(cur) != alloc_key(prev)) continue;
        if (cur.start_t < prev.end_t) {
            out.overlap_flags.push_back("overlapping allocation for customer " + cur.customer_id +
                                        " on cluster " + cur.cluster_id + " at t=" +
                                        format_sci(cur.start_t));
            cur.start_t = std::min(prev.end_t, cur.end_t);
        }
    }

    double min_start = records.front().start_t, max_end = records.front().end_t;
    Ops point = 0, upper = 0;
    struct Edge {
        Seconds t;
        OpsPerSec delta;
    };
    std::vector<Edge> edges;
    for (const auto& r : records) {
        min_start = std::min(min_start, r.start_t);
        max_end = std::max(max_end, r.end_t);
        const Seconds dur = std::max(0.0, r.end_t - r.start_t);
        if (dur == 0) continue;
        const OpsPerSec capacity = static_cast<double>(r.node_count) * r.accel_per_node *
                                   specs.at(r.accel_spec_id).max_peak();
        point += capacity * dur * r.assumed_utilization;
        upper += capacity * dur;
        edges.push_back({r.start_t, capacity});
        edges.push_back({r.end_t, -capacity});
    }
    // Ends sort before starts at equal t so back-to-back allocations do not
    // register a transient doubled capacity.
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        return a.t != b.t ? a.t < b.t : a.delta < b.delta;
    });
    OpsPerSec running = 0, peak = 0;
    for (const auto& e : edges) {
        running += e.delta;
        peak = std::max(peak, running);
    }

    out.estimate.ops_point = point;
    out.estimate.ops_lower = 0; // theoretical method cannot bound below
    out.estimate.ops_upper = upper;
    out.estimate.peak_rate_ops_per_sec = peak;
    out.estimate.window_start_t = min_start;
    out.estimate.window_end_t = max_end;
    out.estimate.validate();
    return out;
}

// ---------------------------------------------------------------------------
// Empirical estimates
// ---------------------------------------------------------------------------

struct EstimateOptions {
    double oi_lower = 50.0;  // ops per byte moved, lower bound
    double oi_upper = 500.0; // ops per byte moved, upper bound
    int peak_window_samples = 1;
};

namespace detail {

// Per-time-step totals of some per-sample quantity, in time order.
template <typename F>
std::vector<double> per_step_totals(const TelemetryTrace& trace, F&& f) {
    std::vector<double> totals;
    double current_t = 0;
    bool have_t = false;
    for (const auto& s : trace.samples) {
        if (!have_t || s.t != current_t) {
            totals.push_back(0);
            current_t = s.t;
            have_t = true;
        }
        totals.back() += f(s);
    }
    return totals;
}

inline OpsPerSec windowed_peak(const std::vector<double>& step_ops, Seconds dt, int window) {
    if (step_ops.empty() || dt <= 0) return 0;
    const int w = std::clamp<int>(window, 1, static_cast<int>(step_ops.size()));
    double running = 0, best = 0;
    for (std::size_t i = 0; i < step_ops.size(); ++i) {
        running += step_ops[i];
        if (i >= static_cast<std::size_t>(w)) running -= step_ops[i - w];
        if (i + 1 >= static_cast<std::size_t>(w)) best = std::max(best, running);
    }
    return best / (w * dt);
}

inline void finish_window(const TelemetryTrace& trace, ComputeEstimate& e) {
    if (trace.samples.empty()) return;
    e.window_start_t = trace.samples.front().t;
    e.window_end_t = trace.samples.back().t + trace.sample_interval_s;
}

} // namespace detail

inline ComputeEstimate empirical_estimate(const TelemetryTrace& trace, Method method,
                                          const EstimateOptions& opts = {}) {
    ComputeEstimate e;
    e.method = method;
    if (method == Method::theoretical)
        throw ValidationError("theoretical method takes usage records, not traces");
    if (trace.samples.empty()) return e; // empty trace estimates to zero
    const Seconds dt = trace.sample_interval_s;
    const auto& node = trace.cluster.node;

    auto need = [&](const char* attr) {
        if (!trace.has_attribute(attr))
            throw DataError(std::string("attribute unavailable: ") + attr +
                            " (not collected for this trace)");
    };

    switch (method) {
        case Method::counters: {
            need(telemetry::kAttrCounters);
            Ops total = 0;
            for (const auto& s : trace.samples)
                for (const auto& [tag, v] : s.ops_by_precision) total += v;
            e.ops_point = e.ops_lower = e.ops_upper = total;
            const auto steps = detail::per_step_totals(trace, [](const auto& s) {
                Ops v = 0;
                for (const auto& [tag, ops] : s.ops_by_precision) v += ops;
                return v;
            });
            e.peak_rate_ops_per_sec = detail::windowed_peak(steps, dt, opts.peak_window_samples);
            break;
        }
        case Method::mem_bw_proxy: {
            need(telemetry::kAttrMemBw);
            const Bytes membw_node = node.mem_bandwidth();
            Bytes bytes = 0;
            for (const auto& s : trace.samples) bytes += s.mem_bw_util * membw_node * dt;
            const double oi_mid = std::sqrt(opts.oi_lower * opts.oi_upper);
            e.ops_lower = bytes * opts.oi_lower;
            e.ops_upper = bytes * opts.oi_upper;
            e.ops_point = bytes * oi_mid;
            const auto steps = detail::per_step_totals(trace, [&](const auto& s) {
                return s.mem_bw_util * membw_node * dt;
            });
            e.peak_rate_ops_per_sec =
                detail::windowed_peak(steps, dt, opts.peak_window_samples) * oi_mid;
            break;
        }
        case Method::power_proxy: {
            need(telemetry::kAttrPower);
            const Watts idle = node.idle_power();
            const Watts peak = node.peak_power();
            const OpsPerSec maxp = node.max_peak_ops();
            const OpsPerSec minp = node.min_peak_ops();
            Ops point = 0;
            double util_sum = 0;
            for (const auto& s : trace.samples) {
                const double frac = peak > idle ? (s.power_watts - idle) / (peak - idle) : 0.0;
                const double u = telemetry::power_fraction_to_util(frac);
                util_sum += u;
                point += u * maxp * dt;
            }
            e.ops_point = point;
            // The precision actually used is unknown to this method; bound by
            // slowest/fastest tags with a margin for inversion noise.
            e.ops_lower = 0.9 * util_sum * minp * dt;
            e.ops_upper = 1.1 * util_sum * maxp * dt;
            const auto steps = detail::per_step_totals(trace, [&](const auto& s) {
                const double frac = peak > idle ? (s.power_watts - idle) / (peak - idle) : 0.0;
                return telemetry::power_fraction_to_util(frac) * maxp * dt;
            });
            e.peak_rate_ops_per_sec = detail::windowed_peak(steps, dt, opts.peak_window_samples);
            break;
        }
        case Method::fused: {
            std::optional<ComputeEstimate> counters, membw, power;
            if (trace.has_attribute(telemetry::kAttrCounters))
                counters = empirical_estimate(trace, Method::counters, opts);
            if (trace.has_attribute(telemetry::kAttrMemBw))
                membw = empirical_estimate(trace, Method::mem_bw_proxy, opts);
            if (trace.has_attribute(telemetry::kAttrPower))
                power = empirical_estimate(trace, Method::power_proxy, opts);
            if (!counters && !membw && !power)
                throw DataError("attribute unavailable: fused estimate needs at least one of "
                                "counters/mem_bw/power");
            Ops lower = 0, upper = std::numeric_limits<double>::infinity();
            for (const auto* part : {&counters, &membw, &power}) {
                if (!part->has_value()) continue;
                lower = std::max(lower, (*part)->ops_lower);
                upper = std::min(upper, (*part)->ops_upper);
            }
            const ComputeEstimate& best = counters ? *counters : (power ? *power : *membw);
            e.ops_point = std::clamp(best.ops_point, lower, std::max(lower, upper));
            e.ops_lower = std::min(lower, e.ops_point);
            e.ops_upper = std::max(upper, e.ops_point);
            e.peak_rate_ops_per_sec = best.peak_rate_ops_per_sec;
            break;
        }
        case Method::theoretical:
            throw ValidationError("theoretical method takes usage records, not traces");
    }
    detail::finish_window(trace, e);
    e.validate();
    return e;
}

// ---------------------------------------------------------------------------
// Threshold checks
// ---------------------------------------------------------------------------

// One attributed estimate in a per-customer stream. workload_id identifies
// the attribution unit: the simulator's workload tag when visible, otherwise
// an allocation-window id derived from billing records.
struct AttributedEstimate {
    std::string customer_id;
    std::string workload_id;
    ComputeEstimate estimate;
    Seconds t = 0;
};

inline std::vector<ReportableEvent> check_thresholds(
    const std::vector<AttributedEstimate>& estimates, const ClusterConfig* cluster,
    const ComputeThresholds& th, Seconds reference_duration = kReferenceDurationS) {
    th.validate();
    std::vector<ReportableEvent> events;

    if (cluster) {
        const OpsPerSec capacity = cluster->peak_ops_per_sec();
        const bool over_rate = capacity >= th.cluster_rate_threshold;
        const bool over_fabric =
            cluster->inter_node_bandwidth_bits_per_sec >= th.cluster_fabric_threshold_bits_per_sec;
        if (over_rate && over_fabric) { // conjunction: both must hold
            ReportableEvent ev;
            ev.kind = EventKind::cluster_over_threshold;
            ev.customer_id = "";
            ev.workload_id = cluster->provider_id;
            ev.evidence.method = Method::theoretical;
            ev.evidence.peak_rate_ops_per_sec = capacity;
            ev.t = 0;
            events.push_back(std::move(ev));
        }
    }

    Seconds prev_t = -std::numeric_limits<double>::infinity();
    for (const auto& ae : estimates) {
        require(ae.t >= prev_t, "estimate stream must be time-ordered");
        prev_t = ae.t;
    }

    struct WorkloadAcc {
        Ops cum = 0;
        Seconds start = 0, end = 0;
        bool first = true;
        bool fired = false;
    };
    struct CustomerAcc {
        Ops cum = 0;
        Seconds start = 0, end = 0;
        bool first = true;
        bool fired = false;
    };
    std::map<std::string, WorkloadAcc> per_workload;
    std::map<std::string, CustomerAcc> per_customer;
    const OpsPerSec implied = implied_training_rate(th, reference_duration);

    for (const auto& ae : estimates) {
        auto& w = per_workload[ae.customer_id + "|" + ae.workload_id];
        w.cum += ae.estimate.ops_point;
        w.start = w.first ? ae.estimate.window_start_t : std::min(w.start, ae.estimate.window_start_t);
        w.end = w.first ? ae.estimate.window_end_t : std::max(w.end, ae.estimate.window_end_t);
        w.first = false;
        if (!w.fired && w.cum >= th.training_ops_threshold) {
            w.fired = true;
            ReportableEvent ev;
            ev.kind = EventKind::training_run_over_threshold;
            ev.customer_id = ae.customer_id;
            ev.workload_id = ae.workload_id;
            ev.evidence = ae.estimate;
            ev.evidence.ops_point = w.cum;
            ev.evidence.ops_lower = std::min(ev.evidence.ops_lower, w.cum);
            ev.evidence.ops_upper = std::max(ev.evidence.ops_upper, w.cum);
            ev.evidence.window_start_t = w.start;
            ev.evidence.window_end_t = w.end;
            ev.t = ae.t;
            events.push_back(std::move(ev));
        }

        auto& c = per_customer[ae.customer_id];
        c.cum += ae.estimate.ops_point;
        c.start = c.first ? ae.estimate.window_start_t : std::min(c.start, ae.estimate.window_start_t);
        c.end = c.first ? ae.estimate.window_end_t : std::max(c.end, ae.estimate.window_end_t);
        c.first = false;
        const Seconds span = c.end - c.start;
        if (!c.fired && span > 0 && c.cum / span >= implied) {
            c.fired = true;
            ReportableEvent ev;
            ev.kind = EventKind::rate_over_threshold;
            ev.customer_id = ae.customer_id;
            ev.workload_id = ae.workload_id;
            ev.evidence = ae.estimate;
            ev.evidence.ops_point = c.cum;
            ev.evidence.ops_lower = std::min(ev.evidence.ops_lower, c.cum);
            ev.evidence.ops_upper = std::max(ev.evidence.ops_upper, c.cum);
            ev.evidence.peak_rate_ops_per_sec = c.cum / span;
            ev.evidence.window_start_t = c.start;
            ev.evidence.window_end_t = c.end;
            ev.t = ae.t;
            events.push_back(std::move(ev));
        }
    }
    return events;
}

// ---------------------------------------------------------------------------
// Serialization (shared line format: numbers in explicit-exponent form)
// ---------------------------------------------------------------------------

inline void write_estimate_fields(JsonWriter& w, const ComputeEstimate& e) {
    w.kv("ops_point", e.ops_point);
    w.kv("ops_lower", e.ops_lower);
    w.kv("ops_upper", e.ops_upper);
    w.kv("peak_rate_ops_per_sec", e.peak_rate_ops_per_sec);
    w.kv("method", to_string(e.method));
    w.kv("window_start_t", e.window_start_t);
    w.kv("window_end_t", e.window_end_t);
}

inline std::string estimate_line(const AttributedEstimate& ae) {
    JsonWriter w;
    w.begin_obj();
    w.kv("kind", "estimate");
    w.kv("customer_id", ae.customer_id);
    w.kv("workload_id", ae.workload_id);
    w.kv("t", ae.t);
    write_estimate_fields(w, ae.estimate);
    w.end_obj();
    return w.take();
}

inline std::string event_line(const ReportableEvent& ev) {
    JsonWriter w;
    w.begin_obj();
    w.kv("kind", "reportable_event");
    w.kv("event", to_string(ev.kind));
    w.kv("customer_id", ev.customer_id);
    w.kv("workload_id", ev.workload_id);
    w.kv("t", ev.t);
    w.key("evidence").begin_obj();
    write_estimate_fields(w, ev.evidence);
    w.end_obj();
    w.end_obj();
    return w.take();
}

} // namespace govsim::accounting
