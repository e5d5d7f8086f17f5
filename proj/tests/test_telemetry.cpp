#include <doctest.h>

#include <cmath>
#include <sstream>

#include "govsim/telemetry.hpp"

using namespace govsim;
using namespace govsim::telemetry;

namespace {

WorkloadSpec make_spec(WorkloadClass klass, double target, Seconds duration,
                       Obfuscation obf = Obfuscation::none) {
    WorkloadSpec w;
    w.workload_id = "w-" + to_string(klass);
    w.klass = klass;
    w.duration_s = duration;
    w.target_utilization = target;
    w.precision_mix = default_mix(klass);
    w.obfuscation = obf;
    w.customer_id = "c1";
    return w;
}

struct UtilStats {
    double mean = 0;
    double variance = 0;
    double cv = 0;
};

// Independent recomputation from the emitted samples.
UtilStats util_stats(const TelemetryTrace& trace) {
    UtilStats st;
    if (trace.samples.empty()) return st;
    double sum = 0;
    for (const auto& s : trace.samples) sum += s.accel_util;
    st.mean = sum / trace.samples.size();
    for (const auto& s : trace.samples) {
        const double d = s.accel_util - st.mean;
        st.variance += d * d;
    }
    st.variance /= trace.samples.size();
    st.cv = st.mean > 0 ? std::sqrt(st.variance) / st.mean : 0;
    return st;
}

Ops total_ops(const TelemetryTrace& trace) {
    Ops total = 0;
    for (const auto& s : trace.samples)
        for (const auto& [tag, v] : s.ops_by_precision) total += v;
    return total;
}

} // namespace

TEST_SUITE("telemetry") {

TEST_CASE("zero duration gives an empty trace") {
    const auto trace = generate_trace(make_spec(WorkloadClass::pretraining, 0.5, 0),
                                      desk_cluster(4, 8), 1);
    CHECK(trace.samples.empty());
    CHECK(trace.workload.ground_truth_ops == 0);
}

TEST_CASE("pretraining utilization is near-constant at the target") {
    const auto trace = generate_trace(make_spec(WorkloadClass::pretraining, 0.40, 2 * 3600.0),
                                      desk_cluster(8, 8), 7);
    const auto st = util_stats(trace);
    CHECK(st.mean >= 0.35);
    CHECK(st.mean <= 0.45);
    CHECK(st.cv < 0.10);
    // Near-zero external traffic during the run.
    Bytes ext = 0, all = 0;
    for (const auto& s : trace.samples) {
        ext += s.external_io_bytes;
        all += s.external_io_bytes + s.inter_node_bytes + s.intra_node_bytes;
    }
    CHECK(ext / all < 0.05);
}

TEST_CASE("inference utilization varies more than pretraining at matched scale") {
    const auto cluster = desk_cluster(8, 8);
    const auto pre = generate_trace(make_spec(WorkloadClass::pretraining, 0.5, 4 * 3600.0),
                                    cluster, 11);
    const auto inf = generate_trace(make_spec(WorkloadClass::inference, 0.5, 4 * 3600.0),
                                    cluster, 11);
    CHECK(util_stats(inf).variance > util_stats(pre).variance);
    // And inference moves more bytes off-cluster.
    auto ext_ratio = [](const TelemetryTrace& t) {
        Bytes ext = 0, all = 0;
        for (const auto& s : t.samples) {
            ext += s.external_io_bytes;
            all += s.external_io_bytes + s.inter_node_bytes + s.intra_node_bytes;
        }
        return ext / all;
    };
    CHECK(ext_ratio(inf) > ext_ratio(pre));
}

TEST_CASE("determinism: identical inputs give bit-identical traces") {
    const auto spec = make_spec(WorkloadClass::enhancement, 0.6, 3600.0);
    const auto cluster = desk_cluster(4, 8);
    const auto a = generate_trace(spec, cluster, 123);
    const auto b = generate_trace(spec, cluster, 123);
    REQUIRE(a.samples.size() == b.samples.size());
    CHECK(a.samples == b.samples);
    CHECK(trace_to_jsonl(a) == trace_to_jsonl(b));
    const auto c = generate_trace(spec, cluster, 124);
    CHECK(trace_to_jsonl(a) != trace_to_jsonl(c));
}

TEST_CASE("conservation: per-sample counters sum exactly to ground truth") {
    for (auto klass : all_classes()) {
        const auto trace =
            generate_trace(make_spec(klass, 0.7, 2 * 3600.0), desk_cluster(3, 8), 5);
        CHECK(total_ops(trace) == trace.workload.ground_truth_ops);
    }
    for (auto obf : {Obfuscation::throttle, Obfuscation::precision_shift,
                     Obfuscation::traffic_shaping}) {
        const auto trace = generate_trace(
            make_spec(WorkloadClass::pretraining, 0.7, 2 * 3600.0, obf), desk_cluster(3, 8), 5);
        CHECK(total_ops(trace) == trace.workload.ground_truth_ops);
    }
}

TEST_CASE("sample invariants hold for every class") {
    const auto cluster = desk_cluster(4, 8);
    const Watts idle = cluster.node.idle_power();
    const Watts peak = cluster.node.peak_power();
    for (auto klass : all_classes()) {
        const auto trace = generate_trace(make_spec(klass, 0.8, 3600.0), cluster, 17);
        REQUIRE(!trace.samples.empty());
        for (const auto& s : trace.samples) {
            CHECK(s.accel_util >= 0);
            CHECK(s.accel_util <= 1);
            CHECK(s.mem_bw_util >= 0);
            CHECK(s.mem_bw_util <= 1);
            CHECK(s.power_watts >= idle);
            CHECK(s.power_watts <= peak);
            CHECK(s.inter_node_bytes >= 0);
            CHECK(s.intra_node_bytes >= 0);
            CHECK(s.external_io_bytes >= 0);
            for (const auto& [tag, v] : s.ops_by_precision) CHECK(v >= 0);
        }
        // samples strictly ordered by (t, node_id)
        for (std::size_t i = 1; i < trace.samples.size(); ++i) {
            const auto& a = trace.samples[i - 1];
            const auto& b = trace.samples[i];
            CHECK((a.t < b.t || (a.t == b.t && a.node_id < b.node_id)));
        }
    }
}

TEST_CASE("every obfuscation mode costs delivered ops per node-hour") {
    const auto cluster = desk_cluster(4, 8);
    const Seconds duration = 4 * 3600.0;
    const auto baseline = generate_trace(
        make_spec(WorkloadClass::pretraining, 0.8, duration), cluster, 31);
    const Ops base_ops = baseline.workload.ground_truth_ops;
    for (auto obf : {Obfuscation::throttle, Obfuscation::precision_shift,
                     Obfuscation::traffic_shaping}) {
        const auto obfuscated = generate_trace(
            make_spec(WorkloadClass::pretraining, 0.8, duration, obf), cluster, 31);
        // Equal wall time and node count, so ops compare directly.
        CHECK(obfuscated.workload.ground_truth_ops < base_ops);
    }
}

TEST_CASE("obfuscation perturbs the signature it targets") {
    const auto cluster = desk_cluster(4, 8);
    const auto plain =
        generate_trace(make_spec(WorkloadClass::pretraining, 0.8, 7200.0), cluster, 41);
    const auto throttled = generate_trace(
        make_spec(WorkloadClass::pretraining, 0.8, 7200.0, Obfuscation::throttle), cluster, 41);
    CHECK(util_stats(throttled).mean < 0.75 * util_stats(plain).mean);

    const auto shifted = generate_trace(
        make_spec(WorkloadClass::pretraining, 0.8, 7200.0, Obfuscation::precision_shift),
        cluster, 41);
    auto share_of = [](const TelemetryTrace& t, const std::string& tag) {
        Ops tagged = 0, total = 0;
        for (const auto& s : t.samples)
            for (const auto& [k, v] : s.ops_by_precision) {
                total += v;
                if (k == tag) tagged += v;
            }
        return tagged / total;
    };
    // Mass moves onto the slow precision tag.
    CHECK(share_of(shifted, "fp32") > 0.5);
    CHECK(share_of(plain, "fp32") < 0.1);

    const auto shaped = generate_trace(
        make_spec(WorkloadClass::pretraining, 0.8, 7200.0, Obfuscation::traffic_shaping),
        cluster, 41);
    auto ext_ratio = [](const TelemetryTrace& t) {
        Bytes ext = 0, all = 0;
        for (const auto& s : t.samples) {
            ext += s.external_io_bytes;
            all += s.external_io_bytes + s.inter_node_bytes + s.intra_node_bytes;
        }
        return ext / all;
    };
    CHECK(ext_ratio(shaped) > 3 * ext_ratio(plain));
}

TEST_CASE("power model boundaries and concavity") {
    const auto accel = default_accelerator();
    CHECK(power_model(accel, 0) == accel.idle_power_watts);
    CHECK(power_model(accel, 1) == accel.peak_power_watts);
    // Closed-form midpoint check: idle + (peak-idle) * 0.5^0.8.
    const double expected =
        accel.idle_power_watts +
        (accel.peak_power_watts - accel.idle_power_watts) * std::pow(0.5, 0.8);
    CHECK(power_model(accel, 0.5) == doctest::Approx(expected).epsilon(1e-12));
    const double midpoint = 0.5 * (accel.idle_power_watts + accel.peak_power_watts);
    CHECK(power_model(accel, 0.5) > midpoint);
    // Monotone nondecreasing, and invertible on a grid.
    double prev = -1;
    for (int i = 0; i <= 100; ++i) {
        const double u = i / 100.0;
        const double p = power_model(accel, u);
        CHECK(p >= prev);
        prev = p;
        const double frac = (p - accel.idle_power_watts) /
                            (accel.peak_power_watts - accel.idle_power_watts);
        CHECK(power_fraction_to_util(frac) == doctest::Approx(u).epsilon(1e-9));
    }
    CHECK_THROWS_AS(power_model(accel, 1.1), ValidationError);
    CHECK_THROWS_AS(power_model(accel, -0.1), ValidationError);
}

TEST_CASE("generation errors") {
    auto spec = make_spec(WorkloadClass::pretraining, 0.5, 3600.0);
    const auto cluster = desk_cluster(2, 4);
    CHECK_THROWS_AS(generate_trace(spec, cluster, 1, 0), ValidationError);
    CHECK_THROWS_AS(generate_trace(spec, cluster, 1, -5), ValidationError);
    spec.precision_mix = {{"fp8_nonexistent", 1.0}};
    CHECK_THROWS_AS(generate_trace(spec, cluster, 1), ValidationError);
    spec.precision_mix = {{"bf16", 0.5}, {"fp32", 0.4}}; // sums to 0.9
    CHECK_THROWS_AS(generate_trace(spec, cluster, 1), ValidationError);
}

TEST_CASE("idle run emits explicit zero-utilization samples") {
    const auto trace =
        generate_trace(make_spec(WorkloadClass::hpc, 0.0, 3600.0), desk_cluster(2, 4), 3);
    REQUIRE(!trace.samples.empty());
    const Watts idle = trace.cluster.node.idle_power();
    for (const auto& s : trace.samples) {
        CHECK(s.accel_util == 0);
        CHECK(s.power_watts == idle);
        CHECK(s.external_io_bytes == 0);
        for (const auto& [tag, v] : s.ops_by_precision) CHECK(v == 0);
    }
    CHECK(trace.workload.ground_truth_ops == 0);
}

TEST_CASE("trace file round-trips bit-exactly") {
    const auto trace = generate_trace(make_spec(WorkloadClass::inference, 0.45, 3600.0),
                                      desk_cluster(3, 8), 77);
    const std::string serialized = trace_to_jsonl(trace);
    std::vector<json> lines;
    std::istringstream in(serialized);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(json::parse(line));
    const auto parsed = trace_from_jsonl_lines(lines);
    CHECK(parsed.samples == trace.samples);
    CHECK(parsed.sample_interval_s == trace.sample_interval_s);
    CHECK(parsed.workload.ground_truth_ops == trace.workload.ground_truth_ops);
    CHECK(trace_to_jsonl(parsed) == serialized);
}

TEST_CASE("nodes with mixed accelerator groups generate and account consistently") {
    ClusterConfig cluster = desk_cluster(3, 4);
    auto second = default_accelerator();
    second.id = "accel-older";
    for (auto& [tag, rate] : second.peak_ops_per_sec_by_precision) rate *= 0.5;
    second.peak_power_watts = 500;
    cluster.node.accelerators.push_back({second, 2});
    REQUIRE(cluster.node.accel_count() == 6);

    const auto trace = generate_trace(make_spec(WorkloadClass::pretraining, 0.7, 3600.0),
                                      cluster, 13);
    REQUIRE(!trace.samples.empty());
    Ops total = 0;
    for (const auto& s : trace.samples)
        for (const auto& [tag, v] : s.ops_by_precision) total += v;
    CHECK(total == trace.workload.ground_truth_ops);
    const Watts idle = cluster.node.idle_power();
    const Watts peak = cluster.node.peak_power();
    for (const auto& s : trace.samples) {
        CHECK(s.power_watts >= idle);
        CHECK(s.power_watts <= peak);
    }

    // A mix tag one group lacks is an error, not a silent skip.
    auto missing_tag = cluster;
    missing_tag.node.accelerators[1].spec.peak_ops_per_sec_by_precision.erase("bf16");
    CHECK_THROWS_AS(
        generate_trace(make_spec(WorkloadClass::pretraining, 0.7, 3600.0), missing_tag, 13),
        ValidationError);
}

TEST_CASE("attribute stripping removes fields and availability") {
    const auto trace = generate_trace(make_spec(WorkloadClass::hpc, 0.9, 3600.0),
                                      desk_cluster(2, 4), 9);
    const auto power_only = strip_attributes(trace, {kAttrPower});
    CHECK(power_only.has_attribute(kAttrPower));
    CHECK(!power_only.has_attribute(kAttrCounters));
    for (const auto& s : power_only.samples) {
        CHECK(s.ops_by_precision.empty());
        CHECK(s.mem_bw_util == 0);
        CHECK(s.power_watts > 0);
    }
}

} // TEST_SUITE
