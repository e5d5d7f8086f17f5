// Splits one training run across N providers and shows when the federated
// digest merge catches it.
//
//   ./structuring_demo [providers]

#include <cstdio>
#include <string>

#include "govsim/federation.hpp"

namespace fed = govsim::federation;
namespace acc = govsim::accounting;

int main(int argc, char** argv) {
    const int providers = argc > 1 ? std::stoi(argv[1]) : 11;
    acc::ComputeThresholds th;
    const double implied = acc::implied_training_rate(th);
    const double run_rate = 10.5 * implied; // the run needs this aggregate rate

    std::printf("run rate %s OP/s, single-provider reporting line %s OP/s\n",
                govsim::format_sci(run_rate).c_str(), govsim::format_sci(implied).c_str());
    std::printf("split across %d providers: %s OP/s each\n\n", providers,
                govsim::format_sci(run_rate / providers).c_str());

    const fed::SharedSalt salt{0, "salt-demo", "out-of-band-secret"};
    std::vector<fed::FederationDigest> digests;
    for (int i = 0; i < providers; ++i) {
        fed::ProviderEpochUsage usage;
        usage.provider_id = "provider-" + std::to_string(i);
        usage.epoch = 0;
        usage.by_identity["Splitter Corp"] = {run_rate / providers,
                                              run_rate / providers * 86400.0};
        digests.push_back(fed::build_digest(usage, 0, salt));
    }

    const bool individually_visible = run_rate / providers >= implied;
    std::printf("each share %s the single-provider reporting line\n",
                individually_visible ? "is at or over" : "stays under");

    const auto alerts = fed::merge_and_detect(digests, th);
    if (alerts.empty()) {
        std::printf("merge: no structuring alert\n");
    } else {
        const auto& a = alerts.front();
        std::printf("merge: structuring alert, tag=%s combined=%s OP/s across %d providers\n",
                    a.customer_tag.c_str(), govsim::format_sci(a.combined_rate).c_str(),
                    a.provider_count);
        for (const auto& r : a.reasons) std::printf("  reason: %s\n", r.c_str());
    }
    return 0;
}
