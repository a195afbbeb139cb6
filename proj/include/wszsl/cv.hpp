#pragma once

#include "wszsl/alm.hpp"
#include "wszsl/classify.hpp"
#include "wszsl/io.hpp"
#include "wszsl/synth.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace wszsl {

/// Everything parameter selection may see: auxiliary data and web images crawled for the
/// validation categories. Test images and their labels are deliberately not part of it.
struct CvData {
    FeatureMatrix x_aux;
    SemanticMatrix a_aux;
    std::vector<int> aux_labels;
    PrototypeSet aux_prototypes;
    FeatureMatrix x_web_val;
    SemanticMatrix a_web_val;
    std::optional<FeatureMatrix> x_priv_val;
    int validation_categories = 0;

    static CvData from(const SynthProblem& sp) {
        CvData data;
        data.x_aux = sp.x_aux;
        data.a_aux = sp.a_aux;
        data.aux_labels = sp.aux_labels;
        data.aux_prototypes = sp.aux_prototypes;
        data.x_web_val = sp.validation_web.x;
        data.a_web_val = sp.validation_web.a;
        data.x_priv_val = sp.validation_web.x_priv;
        data.validation_categories = sp.validation_categories;
        return data;
    }
};

inline CvData load_cv_data(const DatasetManifest& mf) {
    if (!mf.x_aux || !mf.a_aux || !mf.aux_labels)
        throw InvalidInput("cv: manifest must provide x_aux, a_aux and aux_labels");
    if (!mf.validation) throw InvalidInput("cv: manifest has no web images for validation categories");
    CvData data;
    data.x_aux = detail::load_checked(mf, *mf.x_aux, mf.d, mf.n_aux, "x_aux");
    data.a_aux = detail::load_checked(mf, *mf.a_aux, mf.m, data.x_aux.cols(), "a_aux");
    data.aux_labels = load_labels(mf.path(*mf.aux_labels));
    if (static_cast<Index>(data.aux_labels.size()) != data.x_aux.cols())
        throw DimensionError("cv: aux_labels length does not match x_aux");
    const Matrix protos = detail::load_checked(mf, mf.prototypes, mf.m, mf.c_aux + mf.c_test, "prototypes");
    data.aux_prototypes.prototypes = protos.leftCols(mf.c_aux);
    for (int c = 0; c < mf.c_aux; ++c) data.aux_prototypes.category_ids.push_back(c);
    data.x_web_val = detail::load_checked(mf, mf.validation->x_web, mf.d, 0, "validation x_web");
    data.a_web_val = detail::load_checked(mf, mf.validation->a_web, mf.m, data.x_web_val.cols(), "validation a_web");
    if (mf.validation->x_priv)
        data.x_priv_val = detail::load_checked(mf, *mf.validation->x_priv, 0, data.x_web_val.cols(), "validation x_priv");
    data.validation_categories = mf.validation->categories;
    return data;
}

/// The validation task: the first C^c auxiliary categories play the role of test categories.
struct ValidationTask {
    Problem problem;
    PrototypeSet prototypes;
    std::vector<int> truth;
};

inline ValidationTask make_validation_task(const CvData& data) {
    const int cc = data.validation_categories;
    const int c_aux = static_cast<int>(data.aux_prototypes.size());
    if (cc < 1 || cc >= c_aux) throw InvalidParameter("cv: need 1 <= C^c < C^a");
    std::vector<Index> train, held;
    std::vector<int> truth;
    for (std::size_t i = 0; i < data.aux_labels.size(); ++i) {
        const int label = data.aux_labels[i];
        const auto pos = std::find(data.aux_prototypes.category_ids.begin(),
                                   data.aux_prototypes.category_ids.end(), label) -
                         data.aux_prototypes.category_ids.begin();
        if (pos < cc) {
            held.push_back(static_cast<Index>(i));
            truth.push_back(label);
        } else {
            train.push_back(static_cast<Index>(i));
        }
    }
    if (train.empty() || held.empty()) throw InvalidInput("cv: validation split is empty");
    ValidationTask task;
    task.problem.d_aux = train_auxiliary_dictionary(data.x_aux(Eigen::all, train), data.a_aux(Eigen::all, train));
    task.problem.x_test = data.x_aux(Eigen::all, held);
    task.problem.x_web = data.x_web_val;
    task.problem.a_web = data.a_web_val;
    task.problem.x_priv = data.x_priv_val;
    task.prototypes.prototypes = data.aux_prototypes.prototypes.leftCols(cc);
    task.prototypes.category_ids.assign(data.aux_prototypes.category_ids.begin(),
                                        data.aux_prototypes.category_ids.begin() + cc);
    task.truth = std::move(truth);
    return task;
}

struct CvTrial {
    SolverConfig config;
    double validation_accuracy = -1.0;
    bool converged = false;
    int iterations = 0;
    std::string error;
};

struct CvResult {
    SolverConfig best;
    int best_index = -1;
    std::vector<CvTrial> trials;
};

/// Random draws over the grids; each trial is `base` with lambda1..4, b and gamma replaced.
inline std::vector<SolverConfig> sample_configs(const SolverConfig& base, const CvSpec& spec) {
    spec.validate();
    Rng rng(static_cast<std::uint64_t>(spec.seed));
    auto pick = [&](const std::vector<double>& grid) { return grid[rng.below(grid.size())]; };
    std::vector<SolverConfig> configs;
    for (int i = 0; i < spec.n_samples; ++i) {
        SolverConfig c = base;
        c.lambda1 = pick(spec.lambda_grid);
        c.lambda2 = pick(spec.lambda_grid);
        c.lambda3 = pick(spec.lambda_grid);
        c.lambda4 = pick(spec.lambda_grid);
        c.b = pick(spec.b_grid);
        c.gamma = pick(spec.gamma_grid);
        configs.push_back(c);
    }
    return configs;
}

inline CvTrial run_trial(const ValidationTask& task, const SolverConfig& config, Mode mode, Metric metric) {
    CvTrial trial;
    trial.config = config;
    try {
        const Solution sol = solve(task.problem, config, mode);
        const Predictions pred = classify_nn(sol.a_test, task.prototypes, metric);
        trial.validation_accuracy = evaluate(pred.labels, task.truth, task.prototypes.category_ids).accuracy;
        trial.converged = sol.converged;
        trial.iterations = sol.iterations;
    } catch (const std::exception& e) {
        trial.error = e.what();
    }
    return trial;
}

/// Random-search parameter selection by validation accuracy. Trials run on `jobs` threads;
/// results do not depend on the thread count. Ties go to the earliest trial.
inline CvResult run_cv(const CvData& data, const SolverConfig& base, Mode mode, const CvSpec& spec,
                       Metric metric = Metric::euclidean, int jobs = 1) {
    const ValidationTask task = make_validation_task(data);
    const std::vector<SolverConfig> configs = sample_configs(base, spec);
    CvResult result;
    result.trials.resize(configs.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++)
            result.trials[i] = run_trial(task, configs[i], mode, metric);
    };
    const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(configs.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (std::size_t i = 0; i < result.trials.size(); ++i) {
        const CvTrial& t = result.trials[i];
        if (!t.error.empty()) continue;
        if (result.best_index < 0 ||
            t.validation_accuracy > result.trials[static_cast<std::size_t>(result.best_index)].validation_accuracy)
            result.best_index = static_cast<int>(i);
    }
    if (result.best_index < 0) throw NumericalError("cv: every trial failed");
    result.best = result.trials[static_cast<std::size_t>(result.best_index)].config;
    return result;
}

}  // namespace wszsl
