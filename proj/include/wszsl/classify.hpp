#pragma once

#include "wszsl/types.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wszsl {

enum class Metric { euclidean, cosine };

inline std::string_view to_string(Metric metric) {
    return metric == Metric::cosine ? "cosine" : "euclidean";
}

inline Metric parse_metric(std::string_view name) {
    if (name == "euclidean") return Metric::euclidean;
    if (name == "cosine") return Metric::cosine;
    throw InvalidParameter("unknown metric '" + std::string(name) + "'");
}

/// Category prototypes, one column per category.
struct PrototypeSet {
    SemanticMatrix prototypes;  // m x C
    std::vector<int> category_ids;

    Index size() const { return prototypes.cols(); }

    void validate(Metric metric = Metric::euclidean) const {
        if (prototypes.cols() < 1) throw InvalidInput("prototype set is empty");
        if (static_cast<Index>(category_ids.size()) != prototypes.cols())
            throw DimensionError("prototype set: id count does not match prototype columns");
        std::set<int> seen(category_ids.begin(), category_ids.end());
        if (seen.size() != category_ids.size()) throw InvalidInput("prototype set: duplicate category id");
        require_finite(prototypes, "prototypes");
        if (metric == Metric::cosine && (prototypes.colwise().norm().array() == 0.0).any())
            throw InvalidInput("prototype set: zero prototype under cosine metric");
    }

    /// [first, second]; used for the generalized setting.
    static PrototypeSet concat(const PrototypeSet& first, const PrototypeSet& second) {
        if (first.prototypes.rows() != second.prototypes.rows())
            throw DimensionError("prototype sets differ in semantic dimension");
        PrototypeSet out;
        out.prototypes.resize(first.prototypes.rows(), first.size() + second.size());
        out.prototypes << first.prototypes, second.prototypes;
        out.category_ids = first.category_ids;
        out.category_ids.insert(out.category_ids.end(), second.category_ids.begin(),
                                second.category_ids.end());
        return out;
    }
};

struct Predictions {
    std::vector<int> labels;
    /// Test columns with zero norm that were classified by euclidean distance under cosine.
    std::vector<Index> cosine_fallback;
};

/// Nearest-prototype assignment; ties go to the lowest prototype index.
inline Predictions classify_nn(const SemanticMatrix& a_test, const PrototypeSet& protos,
                               Metric metric = Metric::euclidean) {
    protos.validate(metric);
    if (a_test.rows() != protos.prototypes.rows())
        throw DimensionError("classify_nn: code dimension " + std::to_string(a_test.rows()) +
                             " does not match prototype dimension " +
                             std::to_string(protos.prototypes.rows()));
    require_finite(a_test, "A^t");
    const Matrix& p = protos.prototypes;
    const Vector proto_norms = p.colwise().norm().transpose();

    Predictions out;
    out.labels.resize(static_cast<std::size_t>(a_test.cols()));
    for (Index i = 0; i < a_test.cols(); ++i) {
        const auto col = a_test.col(i);
        const double col_norm = col.norm();
        const bool use_cosine = metric == Metric::cosine && col_norm > 0.0;
        if (metric == Metric::cosine && !use_cosine) out.cosine_fallback.push_back(i);
        Index best = 0;
        double best_dist = 0.0;
        for (Index k = 0; k < p.cols(); ++k) {
            const double dist = use_cosine ? 1.0 - col.dot(p.col(k)) / (col_norm * proto_norms(k))
                                           : (col - p.col(k)).squaredNorm();
            if (k == 0 || dist < best_dist) {
                best = k;
                best_dist = dist;
            }
        }
        out.labels[static_cast<std::size_t>(i)] = protos.category_ids[static_cast<std::size_t>(best)];
    }
    return out;
}

struct PredictionReport {
    std::vector<int> predicted;
    double accuracy = 0.0;
    std::map<int, double> per_category_accuracy;
};

/// Overall and per-category top-1 accuracy. Every truth label must be in `known_ids`.
inline PredictionReport evaluate(const std::vector<int>& predicted, const std::vector<int>& truth,
                                 const std::vector<int>& known_ids) {
    if (predicted.size() != truth.size())
        throw DimensionError("evaluate: " + std::to_string(predicted.size()) + " predictions for " +
                             std::to_string(truth.size()) + " labels");
    const std::set<int> known(known_ids.begin(), known_ids.end());
    std::map<int, std::pair<std::size_t, std::size_t>> tally;  // id -> (correct, total)
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!known.count(truth[i]))
            throw InvalidInput("evaluate: unknown category id " + std::to_string(truth[i]));
        auto& [ok, total] = tally[truth[i]];
        ++total;
        if (predicted[i] == truth[i]) {
            ++ok;
            ++correct;
        }
    }
    PredictionReport report;
    report.predicted = predicted;
    report.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
    for (const auto& [id, counts] : tally)
        report.per_category_accuracy[id] =
            static_cast<double>(counts.first) / static_cast<double>(counts.second);
    return report;
}

/// Web instances sorted by descending importance weight, ties kept in input order.
inline std::vector<std::pair<std::string, double>> export_weight_ranking(
    const Vector& theta, const std::vector<std::string>& instance_ids) {
    if (static_cast<Index>(instance_ids.size()) != theta.size())
        throw DimensionError("export_weight_ranking: id count does not match weight count");
    std::vector<std::size_t> order(instance_ids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return theta(static_cast<Index>(a)) > theta(static_cast<Index>(b));
    });
    std::vector<std::pair<std::string, double>> ranked;
    ranked.reserve(order.size());
    for (std::size_t i : order) ranked.emplace_back(instance_ids[i], theta(static_cast<Index>(i)));
    return ranked;
}

}  // namespace wszsl
