// Generates one workload trace and compares every compute-estimation method
// against the simulator's ground truth.
//
//   ./estimate_comparison [class] [target_utilization]

#include <cstdio>
#include <string>

#include "govsim/accounting.hpp"
#include "govsim/telemetry.hpp"

namespace tel = govsim::telemetry;
namespace acc = govsim::accounting;

int main(int argc, char** argv) {
    const auto klass =
        argc > 1 ? tel::workload_class_from_string(argv[1]) : tel::WorkloadClass::pretraining;
    const double target = argc > 2 ? std::stod(argv[2]) : 0.8;

    tel::WorkloadSpec spec;
    spec.workload_id = "demo";
    spec.klass = klass;
    spec.duration_s = 4 * 3600.0;
    spec.target_utilization = target;
    spec.precision_mix = tel::default_mix(klass);
    spec.customer_id = "demo-customer";

    const auto cluster = tel::desk_cluster(8, 8);
    const auto trace = tel::generate_trace(spec, cluster, 42);
    const double truth = trace.workload.ground_truth_ops;
    std::printf("class=%s target=%.2f nodes=%d accels=%d samples=%zu\n",
                tel::to_string(klass).c_str(), target, cluster.node_count,
                cluster.total_accelerators(), trace.samples.size());
    std::printf("ground truth: %s OP\n\n", govsim::format_sci(truth).c_str());
    std::printf("%-14s %-14s %-14s %-14s %8s\n", "method", "ops_lower", "ops_point", "ops_upper",
                "error");

    for (auto method : {acc::Method::counters, acc::Method::power_proxy,
                        acc::Method::mem_bw_proxy, acc::Method::fused}) {
        // The power proxy sees only what a counter-less collection mode would.
        const auto view = method == acc::Method::power_proxy
                              ? tel::strip_attributes(trace, {tel::kAttrPower})
                              : trace;
        const auto est = acc::empirical_estimate(view, method);
        std::printf("%-14s %-14s %-14s %-14s %7.2f%%\n", acc::to_string(method).c_str(),
                    govsim::format_sci(est.ops_lower).c_str(),
                    govsim::format_sci(est.ops_point).c_str(),
                    govsim::format_sci(est.ops_upper).c_str(),
                    100.0 * (est.ops_point - truth) / truth);
    }

    acc::AcceleratorCatalog catalog;
    catalog["accel-default"] = tel::default_accelerator();
    acc::UsageRecord record;
    record.customer_id = spec.customer_id;
    record.cluster_id = cluster.provider_id;
    record.node_count = cluster.node_count;
    record.accel_per_node = cluster.node.accel_count();
    record.accel_spec_id = "accel-default";
    record.start_t = 0;
    record.end_t = spec.duration_s;
    record.assumed_utilization = target;
    const auto budget = acc::theoretical_budget({record}, catalog);
    std::printf("%-14s %-14s %-14s %-14s %7.2f%%\n", "theoretical",
                govsim::format_sci(budget.estimate.ops_lower).c_str(),
                govsim::format_sci(budget.estimate.ops_point).c_str(),
                govsim::format_sci(budget.estimate.ops_upper).c_str(),
                100.0 * (budget.estimate.ops_point - truth) / truth);
    return 0;
}
