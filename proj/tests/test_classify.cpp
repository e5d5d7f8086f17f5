#include <doctest.h>

#include <cmath>

#include "govsim/classify.hpp"
#include "test_support.hpp"

using namespace govsim;
using namespace govsim::classify;
namespace tel = govsim::telemetry;

namespace {

tel::TelemetryTrace make_trace(tel::WorkloadClass klass, double target, std::uint64_t seed,
                               tel::Obfuscation obf = tel::Obfuscation::none) {
    tel::WorkloadSpec w;
    w.workload_id = "w";
    w.klass = klass;
    w.duration_s = 3 * 3600.0;
    w.target_utilization = target;
    w.precision_mix = tel::default_mix(klass);
    w.obfuscation = obf;
    w.customer_id = "c";
    return tel::generate_trace(w, tel::desk_cluster(6, 8), seed);
}

const std::vector<tel::WorkloadClass> kFiveClasses = {
    tel::WorkloadClass::pretraining, tel::WorkloadClass::enhancement,
    tel::WorkloadClass::inference, tel::WorkloadClass::graphics, tel::WorkloadClass::hpc};

} // namespace

TEST_SUITE("classify") {

TEST_CASE("empty trace yields the zero vector and unknown label") {
    const tel::TelemetryTrace empty;
    const auto f = extract_features(empty);
    for (int d = 0; d < FeatureVector::kDim; ++d) CHECK(f[d] == 0);

    const auto model = fit_classifier(test_support::to_examples(
        test_support::make_corpus(kFiveClasses, 10, 1)));
    const auto result = classify_workload(f, model);
    CHECK(result.top_label == "unknown");
    CHECK(result.confidence == 0);
}

TEST_CASE("features match an independent recomputation from the samples") {
    const auto trace = make_trace(tel::WorkloadClass::pretraining, 0.8, 42);
    const auto f = extract_features(trace);

    double sum = 0;
    for (const auto& s : trace.samples) sum += s.accel_util;
    const double mean = sum / trace.samples.size();
    double var = 0;
    for (const auto& s : trace.samples) var += (s.accel_util - mean) * (s.accel_util - mean);
    var /= trace.samples.size();
    CHECK(f.util_mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(f.util_cv == doctest::Approx(std::sqrt(var) / mean).epsilon(1e-12));

    Bytes ext = 0, total = 0;
    for (const auto& s : trace.samples) {
        ext += s.external_io_bytes;
        total += s.external_io_bytes + s.inter_node_bytes + s.intra_node_bytes;
    }
    CHECK(f.external_io_ratio == doctest::Approx(ext / total).epsilon(1e-12));
    CHECK(f.scale_accel_count == 48);

    // Signature bounds for an unobfuscated pretraining run.
    CHECK(f.util_cv < 0.10);
    CHECK(f.external_io_ratio < 0.05);
}

TEST_CASE("inference has a larger external-io ratio than pretraining at matched scale") {
    const auto pre = extract_features(make_trace(tel::WorkloadClass::pretraining, 0.5, 7));
    const auto inf = extract_features(make_trace(tel::WorkloadClass::inference, 0.5, 7));
    CHECK(inf.external_io_ratio > pre.external_io_ratio);
}

TEST_CASE("pretraining inter-node traffic is periodic, inference is not") {
    const auto pre = extract_features(make_trace(tel::WorkloadClass::pretraining, 0.8, 3));
    const auto inf = extract_features(make_trace(tel::WorkloadClass::inference, 0.5, 3));
    CHECK(pre.inter_node_comm_periodicity > 0.4);
    CHECK(inf.inter_node_comm_periodicity < pre.inter_node_comm_periodicity);
}

TEST_CASE("fit rejects degenerate training sets") {
    const auto one_class = test_support::to_examples(
        test_support::make_corpus({tel::WorkloadClass::pretraining}, 12, 2));
    CHECK_THROWS_AS(fit_classifier(one_class), ValidationError);

    const auto too_few = test_support::to_examples(test_support::make_corpus(
        {tel::WorkloadClass::pretraining, tel::WorkloadClass::inference}, 5, 2));
    CHECK_THROWS_AS(fit_classifier(too_few), ValidationError);
}

TEST_CASE("refit with identical data gives identical parameters") {
    const auto examples = test_support::to_examples(
        test_support::make_corpus(kFiveClasses, 10, 77));
    const auto a = fit_classifier(examples, 1);
    const auto b = fit_classifier(examples, 1);
    CHECK(model_to_json(a) == model_to_json(b));
}

TEST_CASE("held-out accuracy on a light corpus") {
    const auto model = fit_classifier(test_support::to_examples(
        test_support::make_corpus(kFiveClasses, 12, 1001)));
    const auto holdout = test_support::make_corpus(kFiveClasses, 12, 2002);
    int correct = 0;
    for (const auto& lt : holdout) {
        const auto r = classify_trace(lt.trace, model);
        if (r.top_label == tel::to_string(lt.label)) ++correct;
    }
    CHECK(static_cast<double>(correct) / holdout.size() >= 0.9);
}

TEST_CASE("scores form a probability vector with the argmax on top") {
    const auto model = fit_classifier(test_support::to_examples(
        test_support::make_corpus(kFiveClasses, 10, 31)));
    for (auto klass : kFiveClasses) {
        const auto r = classify_trace(make_trace(klass, 0.7, 13), model);
        double sum = 0, best = 0;
        for (const auto& [label, s] : r.label_scores) {
            CHECK(s >= 0);
            CHECK(s <= 1);
            sum += s;
            best = std::max(best, s);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(r.confidence == doctest::Approx(best));
        CHECK(r.label_scores.at(r.top_label) == doctest::Approx(best));
    }
}

TEST_CASE("confident pretraining call on unobfuscated desk-scale settings") {
    const auto model = fit_classifier(test_support::to_examples(
        test_support::make_corpus(kFiveClasses, 16, 555)));
    const auto r = classify_trace(make_trace(tel::WorkloadClass::pretraining, 0.85, 909), model);
    CHECK(r.top_label == "pretraining");
    CHECK(r.confidence >= 0.8);
}

TEST_CASE("affine per-feature rescaling of the dataset leaves predictions unchanged") {
    const auto examples = test_support::to_examples(
        test_support::make_corpus(kFiveClasses, 10, 404));
    const auto queries = test_support::to_examples(
        test_support::make_corpus(kFiveClasses, 4, 505));
    const auto base_model = fit_classifier(examples);

    Rng rng(99);
    std::array<double, FeatureVector::kDim> scale{}, shift{};
    for (int d = 0; d < FeatureVector::kDim; ++d) {
        scale[d] = rng.uniform(0.2, 5.0);
        shift[d] = rng.uniform(-10.0, 10.0);
    }
    auto rescale = [&](std::vector<LabeledExample> xs) {
        for (auto& ex : xs)
            for (int d = 0; d < FeatureVector::kDim; ++d)
                ex.features[d] = ex.features[d] * scale[d] + shift[d];
        return xs;
    };
    const auto rescaled_model = fit_classifier(rescale(examples));
    const auto rescaled_queries = rescale(queries);
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const auto a = classify_workload(queries[i].features, base_model);
        const auto b = classify_workload(rescaled_queries[i].features, rescaled_model);
        CHECK(a.top_label == b.top_label);
        CHECK(a.confidence == doctest::Approx(b.confidence).epsilon(1e-9));
    }
}

TEST_CASE("model serialization round-trips") {
    const auto model = fit_classifier(test_support::to_examples(
        test_support::make_corpus(kFiveClasses, 10, 606)));
    const auto parsed = model_from_json(json::parse(model_to_json(model)));
    CHECK(model_to_json(parsed) == model_to_json(model));
    const auto f = extract_features(make_trace(tel::WorkloadClass::hpc, 0.9, 17));
    CHECK(classify_workload(f, parsed).top_label == classify_workload(f, model).top_label);
}

TEST_CASE("classify requires a fitted model") {
    ClassifierModel blank;
    FeatureVector f;
    f.scale_accel_count = 8;
    CHECK_THROWS_AS(classify_workload(f, blank), ValidationError);
}

TEST_CASE("reconcile rule table") {
    Declaration decl;
    decl.customer_id = "c";
    decl.declared_class = tel::WorkloadClass::inference;
    decl.declared_max_ops = 1e20;

    accounting::ComputeEstimate within;
    within.ops_point = within.ops_upper = 5e19;

    ClassificationResult res;
    res.top_label = "pretraining";
    res.confidence = 0.98;
    CHECK(reconcile(decl, res, within) == ReconcileOutcome::mismatch);

    res.top_label = "inference";
    res.confidence = 0.97;
    CHECK(reconcile(decl, res, within) == ReconcileOutcome::match);

    res.confidence = 0.4;
    CHECK(reconcile(decl, res, within) == ReconcileOutcome::follow_up);

    // Ops blowout is a mismatch even when the label agrees confidently.
    res.confidence = 0.97;
    accounting::ComputeEstimate over;
    over.ops_point = over.ops_upper = 1.2e20; // > 1e20 * 1.1
    CHECK(reconcile(decl, res, over) == ReconcileOutcome::mismatch);
}

TEST_CASE("raising confidence never converts mismatch to match") {
    Declaration decl;
    decl.customer_id = "c";
    decl.declared_class = tel::WorkloadClass::inference;
    decl.declared_max_ops = 1e20;
    accounting::ComputeEstimate est;
    est.ops_point = est.ops_upper = 5e19;

    ClassificationResult res;
    res.top_label = "pretraining"; // disagrees with the declaration
    bool seen_mismatch = false;
    for (int i = 0; i <= 100; ++i) {
        res.confidence = i / 100.0;
        const auto outcome = reconcile(decl, res, est);
        if (seen_mismatch) CHECK(outcome == ReconcileOutcome::mismatch);
        if (outcome == ReconcileOutcome::mismatch) seen_mismatch = true;
    }
    CHECK(seen_mismatch);
}

} // TEST_SUITE
