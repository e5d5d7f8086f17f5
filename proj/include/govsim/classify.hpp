#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "govsim/accounting.hpp"
#include "govsim/core.hpp"
#include "govsim/jsonl.hpp"
#include "govsim/telemetry.hpp"

namespace govsim::classify {

using telemetry::TelemetryTrace;
using telemetry::WorkloadClass;

// ---------------------------------------------------------------------------
// Feature extraction
// ---------------------------------------------------------------------------

struct FeatureVector {
    Fraction util_mean = 0;
    Fraction util_cv = 0;
    Fraction external_io_ratio = 0;
    double inter_node_comm_periodicity = 0;
    double precision_mix_entropy = 0; // nats
    Fraction power_cv = 0;
    double scale_accel_count = 0;

    static constexpr int kDim = 7;

    double operator[](int i) const {
        switch (i) {
            case 0: return util_mean;
            case 1: return util_cv;
            case 2: return external_io_ratio;
            case 3: return inter_node_comm_periodicity;
            case 4: return precision_mix_entropy;
            case 5: return power_cv;
            case 6: return scale_accel_count;
        }
        throw Error("feature index out of range");
    }

    double& operator[](int i) {
        switch (i) {
            case 0: return util_mean;
            case 1: return util_cv;
            case 2: return external_io_ratio;
            case 3: return inter_node_comm_periodicity;
            case 4: return precision_mix_entropy;
            case 5: return power_cv;
            case 6: return scale_accel_count;
        }
        throw Error("feature index out of range");
    }

    static const char* name(int i) {
        static constexpr const char* names[kDim] = {
            "util_mean", "util_cv", "external_io_ratio", "inter_node_comm_periodicity",
            "precision_mix_entropy", "power_cv", "scale_accel_count"};
        return names[i];
    }
};

namespace detail {

struct MeanCv {
    double mean = 0;
    double cv = 0;
};

template <typename It, typename F>
MeanCv mean_cv(It begin, It end, F&& f) {
    double sum = 0;
    std::size_t n = 0;
    for (It it = begin; it != end; ++it, ++n) sum += f(*it);
    if (n == 0) return {};
    const double mean = sum / static_cast<double>(n);
    double var = 0;
    for (It it = begin; it != end; ++it) {
        const double d = f(*it) - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    return {mean, mean > 0 ? std::sqrt(var) / mean : 0.0};
}

// Peak autocorrelation of the first-differenced series. Differencing removes
// slow trends (e.g. a diurnal swing) so only genuine short-period structure
// such as collective-communication bursts scores high.
inline double periodicity_score(const std::vector<double>& series) {
    if (series.size() < 6) return 0;
    std::vector<double> diff(series.size() - 1);
    for (std::size_t i = 0; i + 1 < series.size(); ++i) diff[i] = series[i + 1] - series[i];
    const std::size_t n = diff.size();
    double mean = 0;
    for (double v : diff) mean += v;
    mean /= static_cast<double>(n);
    double denom = 0;
    for (double v : diff) denom += (v - mean) * (v - mean);
    if (denom <= 0) return 0;
    const std::size_t max_lag = std::min<std::size_t>(n / 2, 48);
    double best = 0;
    for (std::size_t lag = 2; lag <= max_lag; ++lag) {
        double acc = 0;
        for (std::size_t i = 0; i + lag < n; ++i)
            acc += (diff[i] - mean) * (diff[i + lag] - mean);
        best = std::max(best, acc / denom);
    }
    return std::clamp(best, 0.0, 1.0);
}

} // namespace detail

inline FeatureVector extract_features(const TelemetryTrace& trace) {
    FeatureVector f;
    if (trace.samples.empty()) return f; // all-zero vector, scale 0

    const auto util = detail::mean_cv(trace.samples.begin(), trace.samples.end(),
                                      [](const auto& s) { return s.accel_util; });
    f.util_mean = util.mean;
    f.util_cv = util.cv;

    const auto power = detail::mean_cv(trace.samples.begin(), trace.samples.end(),
                                       [](const auto& s) { return s.power_watts; });
    f.power_cv = power.cv;

    Bytes external = 0, inter = 0, intra = 0;
    for (const auto& s : trace.samples) {
        external += s.external_io_bytes;
        inter += s.inter_node_bytes;
        intra += s.intra_node_bytes;
    }
    const Bytes total = external + inter + intra;
    f.external_io_ratio = total > 0 ? external / total : 0.0;

    // Cluster-wide inter-node traffic per time step, in time order.
    std::vector<double> inter_series;
    {
        double current_t = 0;
        bool have_t = false;
        for (const auto& s : trace.samples) {
            if (!have_t || s.t != current_t) {
                inter_series.push_back(0);
                current_t = s.t;
                have_t = true;
            }
            inter_series.back() += s.inter_node_bytes;
        }
    }
    f.inter_node_comm_periodicity = detail::periodicity_score(inter_series);

    std::map<std::string, Ops> tag_totals;
    Ops ops_total = 0;
    for (const auto& s : trace.samples)
        for (const auto& [tag, v] : s.ops_by_precision) {
            tag_totals[tag] += v;
            ops_total += v;
        }
    if (ops_total > 0) {
        double h = 0;
        for (const auto& [tag, v] : tag_totals) {
            const double p = v / ops_total;
            if (p > 0) h -= p * std::log(p);
        }
        f.precision_mix_entropy = h;
    }

    f.scale_accel_count = trace.cluster.total_accelerators();
    return f;
}

// ---------------------------------------------------------------------------
// Nearest-centroid classifier with per-feature standardization
// ---------------------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;
inline constexpr double kScoreTemperature = 2.0; // softmax over -d^2/T

struct ClassifierModel {
    std::vector<std::string> classes; // sorted label names
    std::array<double, FeatureVector::kDim> feature_mean{};
    std::array<double, FeatureVector::kDim> feature_std{};
    std::vector<std::array<double, FeatureVector::kDim>> centroids; // per class, standardized
    bool fitted = false;
};

struct LabeledExample {
    FeatureVector features;
    WorkloadClass label;
};

// Deterministic fit: standardize each feature over the whole training set,
// then average per class. The seed parameter is accepted for interface
// stability; the procedure has no stochastic step.
inline ClassifierModel fit_classifier(const std::vector<LabeledExample>& labeled,
                                      std::uint64_t /*seed*/ = 0) {
    std::map<std::string, std::vector<const FeatureVector*>> by_class;
    for (const auto& ex : labeled) by_class[telemetry::to_string(ex.label)].push_back(&ex.features);
    if (by_class.size() < 2)
        throw ValidationError("fit_classifier: need at least 2 classes, got " +
                              std::to_string(by_class.size()));
    for (const auto& [name, rows] : by_class)
        if (rows.size() < 10)
            throw ValidationError("fit_classifier: class '" + name + "' has " +
                                  std::to_string(rows.size()) + " examples, need >= 10");

    ClassifierModel m;
    const double n = static_cast<double>(labeled.size());
    for (int d = 0; d < FeatureVector::kDim; ++d) {
        double sum = 0;
        for (const auto& ex : labeled) sum += ex.features[d];
        const double mean = sum / n;
        double var = 0;
        for (const auto& ex : labeled) {
            const double diff = ex.features[d] - mean;
            var += diff * diff;
        }
        var /= n;
        m.feature_mean[d] = mean;
        m.feature_std[d] = var > 0 ? std::sqrt(var) : 1.0;
    }
    for (const auto& [name, rows] : by_class) {
        std::array<double, FeatureVector::kDim> c{};
        for (const auto* fv : rows)
            for (int d = 0; d < FeatureVector::kDim; ++d)
                c[d] += ((*fv)[d] - m.feature_mean[d]) / m.feature_std[d];
        for (auto& v : c) v /= static_cast<double>(rows.size());
        m.classes.push_back(name);
        m.centroids.push_back(c);
    }
    m.fitted = true;
    return m;
}

struct ClassificationResult {
    std::map<std::string, double> label_scores; // sums to 1 when a label is assigned
    std::string top_label;                      // class name or "unknown"
    double confidence = 0;
    FeatureVector features;
};

inline ClassificationResult classify_workload(const FeatureVector& features,
                                              const ClassifierModel& model) {
    if (!model.fitted) throw ValidationError("classify_workload: model not fitted");
    ClassificationResult r;
    r.features = features;
    if (features.scale_accel_count <= 0) {
        r.top_label = "unknown";
        r.confidence = 0;
        return r;
    }

    std::vector<double> d2(model.classes.size(), 0);
    for (std::size_t c = 0; c < model.classes.size(); ++c) {
        for (int d = 0; d < FeatureVector::kDim; ++d) {
            const double z = (features[d] - model.feature_mean[d]) / model.feature_std[d];
            const double diff = z - model.centroids[c][d];
            d2[c] += diff * diff;
        }
    }
    const double dmin = *std::min_element(d2.begin(), d2.end());
    double norm = 0;
    std::vector<double> score(d2.size());
    for (std::size_t c = 0; c < d2.size(); ++c) {
        score[c] = std::exp(-(d2[c] - dmin) / kScoreTemperature);
        norm += score[c];
    }
    std::size_t best = 0;
    for (std::size_t c = 0; c < d2.size(); ++c) {
        score[c] /= norm;
        r.label_scores[model.classes[c]] = score[c];
        if (score[c] > score[best]) best = c;
    }
    r.top_label = model.classes[best];
    r.confidence = score[best];
    return r;
}

inline ClassificationResult classify_trace(const TelemetryTrace& trace,
                                           const ClassifierModel& model) {
    return classify_workload(extract_features(trace), model);
}

// ---------------------------------------------------------------------------
// Declarations and reconciliation
// ---------------------------------------------------------------------------

struct Declaration {
    std::string customer_id;
    WorkloadClass declared_class = WorkloadClass::pretraining;
    Ops declared_max_ops = 0;
    Seconds t = 0;

    void validate() const { require(declared_max_ops >= 0, "declared_max_ops must be >= 0"); }
};

enum class ReconcileOutcome { match, mismatch, follow_up };

inline std::string to_string(ReconcileOutcome o) {
    switch (o) {
        case ReconcileOutcome::match: return "match";
        case ReconcileOutcome::mismatch: return "mismatch";
        case ReconcileOutcome::follow_up: return "follow_up";
    }
    throw Error("bad ReconcileOutcome");
}

struct ReconcileConfig {
    double mismatch_confidence = 0.9;
    double follow_up_confidence = 0.5;
    double ops_slack = 1.1; // tolerated ratio over declared_max_ops
};

// Checks actual usage against the customer's representations: a confident
// label disagreement or exceeding declared ops is a mismatch, low confidence
// asks for follow-up, anything else is consistent.
inline ReconcileOutcome reconcile(const Declaration& declaration,
                                  const ClassificationResult& result,
                                  const accounting::ComputeEstimate& estimate,
                                  const ReconcileConfig& cfg = {}) {
    declaration.validate();
    const bool label_disagrees = result.top_label != telemetry::to_string(declaration.declared_class);
    if (label_disagrees && result.confidence >= cfg.mismatch_confidence)
        return ReconcileOutcome::mismatch;
    if (estimate.ops_point > declaration.declared_max_ops * cfg.ops_slack)
        return ReconcileOutcome::mismatch;
    if (result.confidence < cfg.follow_up_confidence) return ReconcileOutcome::follow_up;
    return ReconcileOutcome::match;
}

// ---------------------------------------------------------------------------
// Model / result serialization
// ---------------------------------------------------------------------------

inline std::string model_to_json(const ClassifierModel& m) {
    JsonWriter w;
    w.begin_obj();
    w.kv("format_version", kModelFormatVersion);
    w.kv("family", "nearest_centroid");
    w.key("classes").begin_arr();
    for (const auto& c : m.classes) w.str(c);
    w.end_arr();
    w.key("feature_mean").begin_arr();
    for (double v : m.feature_mean) w.num(v);
    w.end_arr();
    w.key("feature_std").begin_arr();
    for (double v : m.feature_std) w.num(v);
    w.end_arr();
    w.key("centroids").begin_arr();
    for (const auto& c : m.centroids) {
        w.begin_arr();
        for (double v : c) w.num(v);
        w.end_arr();
    }
    w.end_arr();
    w.end_obj();
    return w.take();
}

inline ClassifierModel model_from_json(const json& j) {
    require(j.at("format_version").get<int>() == kModelFormatVersion,
            "classifier model: unsupported format_version");
    ClassifierModel m;
    for (const auto& c : j.at("classes")) m.classes.push_back(c.get<std::string>());
    int i = 0;
    for (const auto& v : j.at("feature_mean")) m.feature_mean[i++] = v.get<double>();
    i = 0;
    for (const auto& v : j.at("feature_std")) m.feature_std[i++] = v.get<double>();
    for (const auto& row : j.at("centroids")) {
        std::array<double, FeatureVector::kDim> c{};
        int d = 0;
        for (const auto& v : row) c[d++] = v.get<double>();
        m.centroids.push_back(c);
    }
    require(m.classes.size() == m.centroids.size(), "classifier model: class/centroid mismatch");
    m.fitted = !m.classes.empty();
    return m;
}

inline void write_feature_fields(JsonWriter& w, const FeatureVector& f) {
    for (int d = 0; d < FeatureVector::kDim; ++d) w.kv(FeatureVector::name(d), f[d]);
}

inline std::string classification_line(const std::string& workload_id,
                                       const std::string& customer_id,
                                       const ClassificationResult& r) {
    JsonWriter w;
    w.begin_obj();
    w.kv("kind", "classification");
    w.kv("workload_id", workload_id);
    w.kv("customer_id", customer_id);
    w.kv("top_label", r.top_label);
    w.kv("confidence", r.confidence);
    w.key("label_scores").begin_obj();
    for (const auto& [label, s] : r.label_scores) w.kv(label, s);
    w.end_obj();
    w.key("features").begin_obj();
    write_feature_fields(w, r.features);
    w.end_obj();
    w.end_obj();
    return w.take();
}

} // namespace govsim::classify
