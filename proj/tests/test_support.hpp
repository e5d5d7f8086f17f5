#pragma once

// Shared helpers for synthesizing labeled workloads in tests.

#include <string>
#include <vector>

#include "govsim/classify.hpp"
#include "govsim/rng.hpp"
#include "govsim/telemetry.hpp"

namespace test_support {

using govsim::Rng;
using govsim::telemetry::TelemetryTrace;
using govsim::telemetry::WorkloadClass;

struct LabeledTrace {
    TelemetryTrace trace;
    WorkloadClass label;
};

inline govsim::telemetry::WorkloadSpec random_spec(WorkloadClass klass, Rng& rng,
                                                   const std::string& id) {
    govsim::telemetry::WorkloadSpec w;
    w.workload_id = id;
    w.klass = klass;
    w.duration_s = rng.uniform(2.0, 4.0) * 3600.0;
    const auto [lo, hi] = govsim::telemetry::typical_target_range(klass);
    w.target_utilization = rng.uniform(lo, hi);
    w.precision_mix = govsim::telemetry::default_mix(klass);
    w.customer_id = "dataset";
    return w;
}

// Labeled corpus across classes with varied desk-scale cluster sizes.
inline std::vector<LabeledTrace> make_corpus(const std::vector<WorkloadClass>& classes,
                                             int per_class, std::uint64_t seed) {
    std::vector<LabeledTrace> out;
    for (auto klass : classes) {
        Rng rng(govsim::derive_seed(seed, "corpus:" + govsim::telemetry::to_string(klass)));
        for (int i = 0; i < per_class; ++i) {
            const int nodes = 4 + static_cast<int>(rng.next_u64() % 9); // 4..12
            const auto cluster = govsim::telemetry::desk_cluster(nodes, 8);
            const auto spec = random_spec(klass, rng,
                                          govsim::telemetry::to_string(klass) + "-" +
                                              std::to_string(i));
            out.push_back({govsim::telemetry::generate_trace(spec, cluster, rng.next_u64(),
                                                             120.0),
                           klass});
        }
    }
    return out;
}

inline std::vector<govsim::classify::LabeledExample> to_examples(
    const std::vector<LabeledTrace>& corpus) {
    std::vector<govsim::classify::LabeledExample> out;
    out.reserve(corpus.size());
    for (const auto& lt : corpus)
        out.push_back({govsim::classify::extract_features(lt.trace), lt.label});
    return out;
}

} // namespace test_support
