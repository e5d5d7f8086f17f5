#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "govsim/core.hpp"
#include "govsim/jsonl.hpp"
#include "govsim/rng.hpp"

namespace govsim::telemetry {

// ---------------------------------------------------------------------------
// Hardware model
// ---------------------------------------------------------------------------

struct AcceleratorSpec {
    std::string id;
    std::map<std::string, OpsPerSec> peak_ops_per_sec_by_precision;
    Bytes mem_bandwidth_bytes_per_sec = 0;
    Watts idle_power_watts = 0;
    Watts peak_power_watts = 0;

    void validate() const {
        require(!id.empty(), "accelerator id empty");
        require(!peak_ops_per_sec_by_precision.empty(), "accelerator " + id + ": no precision tags");
        for (const auto& [tag, rate] : peak_ops_per_sec_by_precision)
            require(rate > 0, "accelerator " + id + ": peak rate for tag '" + tag + "' must be > 0");
        require(mem_bandwidth_bytes_per_sec > 0, "accelerator " + id + ": mem bandwidth must be > 0");
        require(idle_power_watts >= 0 && idle_power_watts < peak_power_watts,
                "accelerator " + id + ": need 0 <= idle power < peak power");
    }

    OpsPerSec max_peak() const {
        OpsPerSec m = 0;
        for (const auto& [tag, rate] : peak_ops_per_sec_by_precision) m = std::max(m, rate);
        return m;
    }

    OpsPerSec min_peak() const {
        OpsPerSec m = 0;
        bool first = true;
        for (const auto& [tag, rate] : peak_ops_per_sec_by_precision) {
            if (first || rate < m) m = rate;
            first = false;
        }
        return m;
    }
};

struct AcceleratorGroup {
    AcceleratorSpec spec;
    int count = 1;
};

struct NodeConfig {
    std::vector<AcceleratorGroup> accelerators;
    BitsPerSec intra_node_bandwidth_bits_per_sec = 0;

    void validate() const {
        require(!accelerators.empty(), "node has no accelerators");
        for (const auto& g : accelerators) {
            require(g.count >= 1, "accelerator count must be >= 1");
            g.spec.validate();
        }
        require(intra_node_bandwidth_bits_per_sec > 0, "intra-node bandwidth must be > 0");
    }

    int accel_count() const {
        int n = 0;
        for (const auto& g : accelerators) n += g.count;
        return n;
    }

    Watts idle_power() const {
        Watts w = 0;
        for (const auto& g : accelerators) w += g.count * g.spec.idle_power_watts;
        return w;
    }

    Watts peak_power() const {
        Watts w = 0;
        for (const auto& g : accelerators) w += g.count * g.spec.peak_power_watts;
        return w;
    }

    // Peak throughput if every accelerator ran its fastest precision.
    OpsPerSec max_peak_ops() const {
        OpsPerSec r = 0;
        for (const auto& g : accelerators) r += g.count * g.spec.max_peak();
        return r;
    }

    OpsPerSec min_peak_ops() const {
        OpsPerSec r = 0;
        for (const auto& g : accelerators) r += g.count * g.spec.min_peak();
        return r;
    }

    Bytes mem_bandwidth() const {
        Bytes b = 0;
        for (const auto& g : accelerators) b += g.count * g.spec.mem_bandwidth_bytes_per_sec;
        return b;
    }
};

struct ClusterConfig {
    int node_count = 1;
    NodeConfig node;
    BitsPerSec inter_node_bandwidth_bits_per_sec = 0;
    std::string provider_id;

    void validate() const {
        require(node_count >= 1, "cluster node_count must be >= 1");
        require(inter_node_bandwidth_bits_per_sec > 0, "inter-node bandwidth must be > 0");
        node.validate();
    }

    int total_accelerators() const { return node_count * node.accel_count(); }
    OpsPerSec peak_ops_per_sec() const { return node_count * node.max_peak_ops(); }
};

// ---------------------------------------------------------------------------
// Workloads
// ---------------------------------------------------------------------------

enum class WorkloadClass { design, pretraining, enhancement, inference, graphics, hpc };

inline const std::vector<WorkloadClass>& all_classes() {
    static const std::vector<WorkloadClass> v{
        WorkloadClass::design, WorkloadClass::pretraining, WorkloadClass::enhancement,
        WorkloadClass::inference, WorkloadClass::graphics, WorkloadClass::hpc};
    return v;
}

inline std::string to_string(WorkloadClass c) {
    switch (c) {
        case WorkloadClass::design: return "design";
        case WorkloadClass::pretraining: return "pretraining";
        case WorkloadClass::enhancement: return "enhancement";
        case WorkloadClass::inference: return "inference";
        case WorkloadClass::graphics: return "graphics";
        case WorkloadClass::hpc: return "hpc";
    }
    throw Error("bad WorkloadClass");
}

inline WorkloadClass workload_class_from_string(const std::string& s) {
    for (auto c : all_classes())
        if (to_string(c) == s) return c;
    throw ValidationError("unknown workload class '" + s + "'");
}

enum class Obfuscation { none, throttle, precision_shift, traffic_shaping };

inline std::string to_string(Obfuscation o) {
    switch (o) {
        case Obfuscation::none: return "none";
        case Obfuscation::throttle: return "throttle";
        case Obfuscation::precision_shift: return "precision_shift";
        case Obfuscation::traffic_shaping: return "traffic_shaping";
    }
    throw Error("bad Obfuscation");
}

inline Obfuscation obfuscation_from_string(const std::string& s) {
    for (auto o : {Obfuscation::none, Obfuscation::throttle, Obfuscation::precision_shift,
                   Obfuscation::traffic_shaping})
        if (to_string(o) == s) return o;
    throw ValidationError("unknown obfuscation mode '" + s + "'");
}

struct WorkloadSpec {
    std::string workload_id;
    WorkloadClass klass = WorkloadClass::pretraining;
    Seconds duration_s = 0;
    Fraction target_utilization = 0;
    std::map<std::string, Fraction> precision_mix;
    Obfuscation obfuscation = Obfuscation::none;
    Ops ground_truth_ops = 0; // filled in by the generator
    std::string customer_id;

    void validate() const {
        require(duration_s >= 0, "workload duration must be >= 0");
        require(target_utilization >= 0 && target_utilization <= 1,
                "target_utilization must be in [0,1]");
        require(!precision_mix.empty(), "precision_mix empty");
        double sum = 0;
        for (const auto& [tag, f] : precision_mix) {
            require(f >= 0, "precision_mix fraction for '" + tag + "' negative");
            sum += f;
        }
        require(std::abs(sum - 1.0) <= 1e-9, "precision_mix must sum to 1");
    }
};

struct TelemetrySample {
    Seconds t = 0;
    std::string node_id;
    Fraction accel_util = 0;
    Fraction mem_bw_util = 0;
    Watts power_watts = 0;
    Bytes inter_node_bytes = 0;
    Bytes intra_node_bytes = 0;
    Bytes external_io_bytes = 0;
    std::map<std::string, Ops> ops_by_precision;

    bool operator==(const TelemetrySample&) const = default;
};

// Telemetry attribute groups a trace may expose. Mirrors the idea that some
// collection modes (e.g. bare metal) lack per-precision counters.
inline constexpr const char* kAttrCounters = "counters";
inline constexpr const char* kAttrMemBw = "mem_bw";
inline constexpr const char* kAttrNetwork = "network";
inline constexpr const char* kAttrPower = "power";

struct TelemetryTrace {
    ClusterConfig cluster;
    WorkloadSpec workload;
    Seconds sample_interval_s = 60;
    std::vector<std::string> available_attributes; // sorted
    std::vector<TelemetrySample> samples;          // ordered by (t, node_id)

    bool has_attribute(const std::string& a) const {
        return std::binary_search(available_attributes.begin(), available_attributes.end(), a);
    }
};

// ---------------------------------------------------------------------------
// Class-conditional signature profiles (generation constants)
// ---------------------------------------------------------------------------

inline constexpr double kPowerExponent = 0.8; // power = idle + (peak-idle)*u^0.8
inline constexpr double kThrottleFactor = 0.6;
inline constexpr double kPrecisionShiftActivityFactor = 0.9;
inline constexpr double kPrecisionShiftMass = 0.7; // mix mass moved to slowest tag
inline constexpr double kTrafficShapingActivityFactor = 0.85;
inline constexpr double kTrafficShapingDummyRatio = 0.3;

enum class UtilPattern { steady, telegraph, frames };

struct ClassProfile {
    double util_sigma;           // gaussian noise on activity
    bool diurnal;                // add slow sinusoidal load swing
    UtilPattern pattern;
    int inter_burst_period;      // 0 = no periodic inter-node bursts
    double inter_burst_level;    // fraction of per-node fabric share during burst
    double inter_base_level;     // fraction of per-node fabric share between bursts
    double external_ratio;       // external bytes as a ratio of (inter+intra)
    double operational_intensity;// ops per byte moved from accelerator memory
    double intra_factor;         // fraction of intra-node capacity used at full activity
    std::map<std::string, Fraction> default_mix;
};

inline const ClassProfile& class_profile(WorkloadClass c) {
    static const std::map<WorkloadClass, ClassProfile> table = {
        {WorkloadClass::design,
         {0.15, false, UtilPattern::telegraph, 0, 0.0, 0.08, 0.087, 220.0, 0.25,
          {{"bf16", 0.4}, {"fp32", 0.3}, {"int8", 0.3}}}},
        {WorkloadClass::pretraining,
         {0.015, false, UtilPattern::steady, 6, 0.6, 0.05, 0.004, 300.0, 0.30,
          {{"bf16", 0.97}, {"fp32", 0.03}}}},
        // enhancement: fine-tuning collectives are small enough to smear out
        // at sample resolution; no sample-scale burst period.
        {WorkloadClass::enhancement,
         {0.06, false, UtilPattern::steady, 0, 0.0, 0.12, 0.0204, 280.0, 0.30,
          {{"bf16", 0.7}, {"fp32", 0.3}}}},
        {WorkloadClass::inference,
         {0.08, true, UtilPattern::steady, 0, 0.0, 0.04, 0.538, 250.0, 0.20,
          {{"int8", 0.9}, {"bf16", 0.1}}}},
        {WorkloadClass::graphics,
         {0.05, false, UtilPattern::frames, 0, 0.0, 0.06, 0.176, 150.0, 0.35,
          {{"fp32", 1.0}}}},
        // hpc: halo exchanges are far below telemetry resolution, so its
        // inter-node series reads smooth, unlike the collective bursts of
        // sample-scale training phases.
        {WorkloadClass::hpc,
         {0.02, false, UtilPattern::steady, 0, 0.0, 0.25, 0.0101, 110.0, 0.40,
          {{"fp64", 1.0}}}},
    };
    return table.at(c);
}

inline std::map<std::string, Fraction> default_mix(WorkloadClass c) {
    return class_profile(c).default_mix;
}

// Typical target-utilization band per class, used when synthesizing labeled
// workloads (classifier training sets, test corpora).
inline std::pair<double, double> typical_target_range(WorkloadClass c) {
    switch (c) {
        case WorkloadClass::design: return {0.20, 0.45};
        case WorkloadClass::pretraining: return {0.75, 0.95};
        case WorkloadClass::enhancement: return {0.55, 0.80};
        case WorkloadClass::inference: return {0.30, 0.60};
        case WorkloadClass::graphics: return {0.35, 0.65};
        case WorkloadClass::hpc: return {0.85, 0.97};
    }
    throw Error("bad WorkloadClass");
}

// Calibration profile: peak 6.3e14 OP/s at the dense training precision,
// HBM-class memory bandwidth, 120 W idle / 700 W peak. Not vendor data.
inline AcceleratorSpec default_accelerator() {
    AcceleratorSpec a;
    a.id = "accel-default";
    a.peak_ops_per_sec_by_precision = {
        {"bf16", 6.3e14}, {"int8", 6.3e14}, {"fp32", 3.15e14}, {"fp64", 3.15e14}};
    a.mem_bandwidth_bytes_per_sec = 3.35e12;
    a.idle_power_watts = 120;
    a.peak_power_watts = 700;
    return a;
}

inline ClusterConfig desk_cluster(int node_count, int accels_per_node,
                                  const std::string& provider_id = "provider-a") {
    ClusterConfig c;
    c.node_count = node_count;
    c.node.accelerators = {{default_accelerator(), accels_per_node}};
    c.node.intra_node_bandwidth_bits_per_sec = 7.2e12;
    c.inter_node_bandwidth_bits_per_sec = 4e11 * node_count;
    c.provider_id = provider_id;
    return c;
}

// ---------------------------------------------------------------------------
// Power model
// ---------------------------------------------------------------------------

// Concave in utilization: power(0)=idle, power(1)=peak, with
// power = idle + (peak-idle) * util^kPowerExponent. Invertible on [0,1].
inline Watts power_model(const AcceleratorSpec& accel, Fraction util) {
    require(util >= 0 && util <= 1, "power_model: util outside [0,1]");
    return accel.idle_power_watts +
           (accel.peak_power_watts - accel.idle_power_watts) * std::pow(util, kPowerExponent);
}

// Inverse of the curve's normalized term: fraction of (peak-idle) -> util.
inline Fraction power_fraction_to_util(double fraction) {
    fraction = std::clamp(fraction, 0.0, 1.0);
    return std::pow(fraction, 1.0 / kPowerExponent);
}

// ---------------------------------------------------------------------------
// Trace generation
// ---------------------------------------------------------------------------

namespace detail {

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Weighted peak throughput of one node under a precision mix; throws on a
// mix tag no accelerator group knows about.
inline OpsPerSec node_weighted_peak(const NodeConfig& node,
                                    const std::map<std::string, Fraction>& mix) {
    OpsPerSec total = 0;
    for (const auto& g : node.accelerators) {
        OpsPerSec per_accel = 0;
        for (const auto& [tag, frac] : mix) {
            auto it = g.spec.peak_ops_per_sec_by_precision.find(tag);
            if (it == g.spec.peak_ops_per_sec_by_precision.end())
                throw ValidationError("unknown precision tag '" + tag + "' for accelerator " +
                                      g.spec.id);
            per_accel += frac * it->second;
        }
        total += g.count * per_accel;
    }
    return total;
}

// Tag with the lowest peak rate on the node's first accelerator group; the
// target of the precision_shift obfuscation.
inline std::string slowest_tag(const NodeConfig& node) {
    const auto& peaks = node.accelerators.front().spec.peak_ops_per_sec_by_precision;
    std::string best;
    OpsPerSec best_rate = 0;
    for (const auto& [tag, rate] : peaks) {
        if (best.empty() || rate < best_rate) {
            best = tag;
            best_rate = rate;
        }
    }
    return best;
}

} // namespace detail

// Deterministic trace generation. Signature shapes per class:
//   - pretraining/hpc: near-constant utilization, periodic inter-node bursts,
//     negligible external traffic;
//   - inference: noisy utilization with a slow diurnal swing and a large
//     external-traffic share;
//   - design/graphics: bursty utilization;
//   - enhancement: between pretraining and design.
// Obfuscation perturbs the signature and always costs delivered ops:
//   throttle scales the utilization target by 0.6, precision_shift moves most
//   of the mix onto the slowest precision tag (x0.9 activity), traffic_shaping
//   pads network counters with dummy bytes (x0.85 activity).
inline TelemetryTrace generate_trace(const WorkloadSpec& spec, const ClusterConfig& cluster,
                                     std::uint64_t seed, Seconds sample_interval_s = 60) {
    spec.validate();
    cluster.validate();
    if (sample_interval_s <= 0) throw ValidationError("sample_interval_s must be > 0");

    const ClassProfile& prof = class_profile(spec.klass);

    // Resolve obfuscation into an adjusted target, mix, and padding ratio.
    double target = spec.target_utilization;
    std::map<std::string, Fraction> mix = spec.precision_mix;
    double shaping_ratio = 0;
    switch (spec.obfuscation) {
        case Obfuscation::none:
            break;
        case Obfuscation::throttle:
            target *= kThrottleFactor;
            break;
        case Obfuscation::precision_shift: {
            const std::string slow = detail::slowest_tag(cluster.node);
            std::map<std::string, Fraction> shifted;
            for (const auto& [tag, f] : mix) shifted[tag] = f * (1.0 - kPrecisionShiftMass);
            shifted[slow] += kPrecisionShiftMass;
            mix = std::move(shifted);
            target *= kPrecisionShiftActivityFactor;
            break;
        }
        case Obfuscation::traffic_shaping:
            target *= kTrafficShapingActivityFactor;
            shaping_ratio = kTrafficShapingDummyRatio;
            break;
    }

    // Per-tag node throughput; also validates mix tags against the hardware.
    std::map<std::string, OpsPerSec> node_tag_peak;
    for (const auto& [tag, frac] : mix)
        node_tag_peak[tag] = detail::node_weighted_peak(cluster.node, {{tag, 1.0}});
    const Watts idle_node = cluster.node.idle_power();
    const Watts peak_node = cluster.node.peak_power();
    const OpsPerSec maxpeak_node = cluster.node.max_peak_ops();
    const Bytes membw_node = cluster.node.mem_bandwidth();
    const Bytes fabric_share =
        cluster.inter_node_bandwidth_bits_per_sec / 8.0 / cluster.node_count;
    const Bytes intra_capacity = cluster.node.intra_node_bandwidth_bits_per_sec / 8.0;

    TelemetryTrace trace;
    trace.cluster = cluster;
    trace.workload = spec;
    trace.workload.ground_truth_ops = 0;
    trace.sample_interval_s = sample_interval_s;
    trace.available_attributes = {kAttrCounters, kAttrMemBw, kAttrNetwork, kAttrPower};
    std::sort(trace.available_attributes.begin(), trace.available_attributes.end());

    const auto steps = static_cast<std::uint64_t>(spec.duration_s / sample_interval_s);
    if (steps == 0) return trace;
    trace.samples.reserve(steps * static_cast<std::uint64_t>(cluster.node_count));

    Rng rng(seed);
    const double diurnal_phase = rng.uniform(0, 86400.0);
    const int burst_phase = prof.inter_burst_period > 0
                                ? static_cast<int>(rng.next_u64() % prof.inter_burst_period)
                                : 0;
    bool telegraph_high = rng.next_double() < 0.5;
    const double dt = sample_interval_s;
    const bool idle_run = target == 0.0;

    std::vector<std::string> node_ids(cluster.node_count);
    for (int j = 0; j < cluster.node_count; ++j) {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "node-%05d", j);
        node_ids[j] = buf;
    }

    Ops ground_truth = 0;
    for (std::uint64_t i = 0; i < steps; ++i) {
        const Seconds t = static_cast<double>(i) * dt;

        double base = target;
        if (prof.diurnal)
            base = target *
                   (0.78 + 0.22 * std::sin(2.0 * std::numbers::pi * (t + diurnal_phase) / 86400.0));
        if (prof.pattern == UtilPattern::telegraph) {
            if (rng.next_double() < 0.15) telegraph_high = !telegraph_high;
            base = target * (telegraph_high ? 1.6 : 0.4);
        } else if (prof.pattern == UtilPattern::frames) {
            base = target * ((i % 8) < 4 ? 1.35 : 0.65);
        }

        const bool burst_step =
            prof.inter_burst_period > 0 &&
            static_cast<int>(i % static_cast<std::uint64_t>(prof.inter_burst_period)) ==
                burst_phase;

        for (int j = 0; j < cluster.node_count; ++j) {
            TelemetrySample s;
            s.t = t;
            s.node_id = node_ids[j];

            double a = idle_run ? 0.0 : detail::clamp01(base + prof.util_sigma * rng.gaussian());
            s.accel_util = a;

            // ground_truth accumulates tag by tag in map order — the same
            // order a counters-based consumer sums the emitted values — so
            // the conservation identity holds bit-exactly.
            Ops sample_ops = 0;
            for (const auto& [tag, frac] : mix) {
                const Ops ops = a * frac * node_tag_peak[tag] * dt;
                s.ops_by_precision[tag] = ops;
                sample_ops += ops;
            }
            for (const auto& [tag, ops] : s.ops_by_precision) ground_truth += ops;

            // Power follows delivered throughput as a fraction of the node's
            // fastest-precision peak (documented calibration choice); this is
            // what makes the power curve invertible into an ops estimate.
            const double u_ops = maxpeak_node > 0 ? (sample_ops / dt) / maxpeak_node : 0.0;
            if (idle_run) {
                s.power_watts = idle_node;
                s.mem_bw_util = 0;
                s.inter_node_bytes = 0;
                s.intra_node_bytes = 0;
                s.external_io_bytes = 0;
            } else {
                const double pnoise = 1.0 + 0.01 * rng.gaussian();
                const double pfrac =
                    detail::clamp01(std::pow(detail::clamp01(u_ops), kPowerExponent) * pnoise);
                s.power_watts = idle_node + (peak_node - idle_node) * pfrac;

                const double bnoise = std::clamp(1.0 + 0.03 * rng.gaussian(), 0.9, 1.1);
                s.mem_bw_util = detail::clamp01(
                    (sample_ops / dt) / (prof.operational_intensity * membw_node) * bnoise);

                double inter_level = burst_step ? prof.inter_burst_level : prof.inter_base_level;
                inter_level *= 0.9 + 0.2 * rng.next_double();
                s.inter_node_bytes = inter_level * fabric_share * dt;

                const double inoise = std::max(0.0, 1.0 + 0.05 * rng.gaussian());
                s.intra_node_bytes = prof.intra_factor * a * intra_capacity * dt * inoise;
                if (shaping_ratio > 0) s.intra_node_bytes *= 1.2;

                const double enoise = std::max(0.0, 1.0 + 0.2 * rng.gaussian());
                const Bytes local = s.inter_node_bytes + s.intra_node_bytes;
                s.external_io_bytes = prof.external_ratio * local * enoise + shaping_ratio * local;
            }
            trace.samples.push_back(std::move(s));
        }
    }
    trace.workload.ground_truth_ops = ground_truth;
    return trace;
}

// Drops telemetry attribute groups, modeling reduced collection visibility
// (e.g. a bare-metal service without per-precision counters). Cleared fields
// read as zero and the attribute is removed from available_attributes.
inline TelemetryTrace strip_attributes(const TelemetryTrace& trace,
                                       const std::vector<std::string>& keep) {
    TelemetryTrace out = trace;
    out.available_attributes.clear();
    for (const auto& a : keep)
        if (trace.has_attribute(a)) out.available_attributes.push_back(a);
    std::sort(out.available_attributes.begin(), out.available_attributes.end());
    const bool counters = out.has_attribute(kAttrCounters);
    const bool mem_bw = out.has_attribute(kAttrMemBw);
    const bool network = out.has_attribute(kAttrNetwork);
    const bool power = out.has_attribute(kAttrPower);
    for (auto& s : out.samples) {
        if (!counters) s.ops_by_precision.clear();
        if (!mem_bw) s.mem_bw_util = 0;
        if (!power) s.power_watts = 0;
        if (!network) {
            s.inter_node_bytes = 0;
            s.intra_node_bytes = 0;
            s.external_io_bytes = 0;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Trace file format: one header object, then one object per sample.
// ---------------------------------------------------------------------------

inline constexpr int kTraceFormatVersion = 1;

namespace detail {

inline void write_accelerator(JsonWriter& w, const AcceleratorSpec& a) {
    w.begin_obj();
    w.kv("id", a.id);
    w.key("peak_ops_per_sec_by_precision").begin_obj();
    for (const auto& [tag, rate] : a.peak_ops_per_sec_by_precision) w.kv(tag, rate);
    w.end_obj();
    w.kv("mem_bandwidth_bytes_per_sec", a.mem_bandwidth_bytes_per_sec);
    w.kv("idle_power_watts", a.idle_power_watts);
    w.kv("peak_power_watts", a.peak_power_watts);
    w.end_obj();
}

inline void write_cluster(JsonWriter& w, const ClusterConfig& c) {
    w.begin_obj();
    w.kv("provider_id", c.provider_id);
    w.kv("node_count", c.node_count);
    w.kv("inter_node_bandwidth_bits_per_sec", c.inter_node_bandwidth_bits_per_sec);
    w.key("node").begin_obj();
    w.kv("intra_node_bandwidth_bits_per_sec", c.node.intra_node_bandwidth_bits_per_sec);
    w.key("accelerators").begin_arr();
    for (const auto& g : c.node.accelerators) {
        w.begin_obj();
        w.kv("count", g.count);
        w.key("spec");
        write_accelerator(w, g.spec);
        w.end_obj();
    }
    w.end_arr();
    w.end_obj();
    w.end_obj();
}

inline void write_workload(JsonWriter& w, const WorkloadSpec& s) {
    w.begin_obj();
    w.kv("workload_id", s.workload_id);
    w.kv("class", to_string(s.klass));
    w.kv("duration_s", s.duration_s);
    w.kv("target_utilization", s.target_utilization);
    w.kv("precision_mix", s.precision_mix);
    w.kv("obfuscation", to_string(s.obfuscation));
    w.kv("ground_truth_ops", s.ground_truth_ops);
    w.kv("customer_id", s.customer_id);
    w.end_obj();
}

inline AcceleratorSpec accelerator_from_json(const json& j) {
    AcceleratorSpec a;
    a.id = j.at("id").get<std::string>();
    a.peak_ops_per_sec_by_precision = json_to_tag_map(j.at("peak_ops_per_sec_by_precision"));
    a.mem_bandwidth_bytes_per_sec = j.at("mem_bandwidth_bytes_per_sec").get<double>();
    a.idle_power_watts = j.at("idle_power_watts").get<double>();
    a.peak_power_watts = j.at("peak_power_watts").get<double>();
    return a;
}

inline ClusterConfig cluster_from_json(const json& j) {
    ClusterConfig c;
    c.provider_id = j.at("provider_id").get<std::string>();
    c.node_count = j.at("node_count").get<int>();
    c.inter_node_bandwidth_bits_per_sec =
        j.at("inter_node_bandwidth_bits_per_sec").get<double>();
    const json& n = j.at("node");
    c.node.intra_node_bandwidth_bits_per_sec =
        n.at("intra_node_bandwidth_bits_per_sec").get<double>();
    for (const auto& g : n.at("accelerators"))
        c.node.accelerators.push_back(
            {accelerator_from_json(g.at("spec")), g.at("count").get<int>()});
    return c;
}

inline WorkloadSpec workload_from_json(const json& j) {
    WorkloadSpec s;
    s.workload_id = j.at("workload_id").get<std::string>();
    s.klass = workload_class_from_string(j.at("class").get<std::string>());
    s.duration_s = j.at("duration_s").get<double>();
    s.target_utilization = j.at("target_utilization").get<double>();
    s.precision_mix = json_to_tag_map(j.at("precision_mix"));
    s.obfuscation = obfuscation_from_string(j.at("obfuscation").get<std::string>());
    s.ground_truth_ops = j.at("ground_truth_ops").get<double>();
    s.customer_id = j.at("customer_id").get<std::string>();
    return s;
}

} // namespace detail

inline std::string trace_to_jsonl(const TelemetryTrace& trace) {
    std::string out;
    {
        JsonWriter w;
        w.begin_obj();
        w.kv("format_version", kTraceFormatVersion);
        w.kv("kind", "header");
        w.kv("sample_interval_s", trace.sample_interval_s);
        w.key("available_attributes").begin_arr();
        for (const auto& a : trace.available_attributes) w.str(a);
        w.end_arr();
        w.key("cluster");
        detail::write_cluster(w, trace.cluster);
        w.key("workload");
        detail::write_workload(w, trace.workload);
        w.end_obj();
        out += w.take();
        out.push_back('\n');
    }
    for (const auto& s : trace.samples) {
        JsonWriter w;
        w.begin_obj();
        w.kv("t", s.t);
        w.kv("node_id", s.node_id);
        w.kv("accel_util", s.accel_util);
        w.kv("mem_bw_util", s.mem_bw_util);
        w.kv("power_watts", s.power_watts);
        w.kv("inter_node_bytes", s.inter_node_bytes);
        w.kv("intra_node_bytes", s.intra_node_bytes);
        w.kv("external_io_bytes", s.external_io_bytes);
        w.kv("ops_by_precision", s.ops_by_precision);
        w.end_obj();
        out += w.take();
        out.push_back('\n');
    }
    return out;
}

inline TelemetryTrace trace_from_jsonl_lines(const std::vector<json>& lines) {
    require(!lines.empty(), "trace file empty (missing header)");
    const json& h = lines.front();
    require(h.value("kind", "") == std::string("header"), "trace file: first line is not a header");
    require(h.at("format_version").get<int>() == kTraceFormatVersion,
            "trace file: unsupported format_version");
    TelemetryTrace trace;
    trace.sample_interval_s = h.at("sample_interval_s").get<double>();
    for (const auto& a : h.at("available_attributes"))
        trace.available_attributes.push_back(a.get<std::string>());
    trace.cluster = detail::cluster_from_json(h.at("cluster"));
    trace.workload = detail::workload_from_json(h.at("workload"));
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const json& j = lines[i];
        TelemetrySample s;
        s.t = j.at("t").get<double>();
        s.node_id = j.at("node_id").get<std::string>();
        s.accel_util = j.at("accel_util").get<double>();
        s.mem_bw_util = j.at("mem_bw_util").get<double>();
        s.power_watts = j.at("power_watts").get<double>();
        s.inter_node_bytes = j.at("inter_node_bytes").get<double>();
        s.intra_node_bytes = j.at("intra_node_bytes").get<double>();
        s.external_io_bytes = j.at("external_io_bytes").get<double>();
        s.ops_by_precision = json_to_tag_map(j.at("ops_by_precision"));
        trace.samples.push_back(std::move(s));
    }
    return trace;
}

inline void write_trace_file(const TelemetryTrace& trace, const std::string& path) {
    write_text_file(path, trace_to_jsonl(trace));
}

inline TelemetryTrace read_trace_file(const std::string& path) {
    return trace_from_jsonl_lines(read_jsonl_file(path));
}

} // namespace govsim::telemetry
