#pragma once

#include "wszsl/alm.hpp"
#include "wszsl/classify.hpp"
#include "wszsl/cv.hpp"
#include "wszsl/io.hpp"
#include "wszsl/synth.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace wszsl {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int usage = 2;
}  // namespace exit_code

namespace detail {

inline const char* error_kind(const std::exception& e) {
    if (dynamic_cast<const ParseError*>(&e)) return "parse";
    if (dynamic_cast<const DimensionError*>(&e)) return "dimension";
    if (dynamic_cast<const InfeasibleError*>(&e)) return "infeasible";
    if (dynamic_cast<const DivergedError*>(&e)) return "diverged";
    if (dynamic_cast<const NumericalError*>(&e)) return "numerical";
    if (dynamic_cast<const InvalidParameter*>(&e)) return "invalid_parameter";
    if (dynamic_cast<const InvalidInput*>(&e)) return "invalid_input";
    return "runtime";
}

inline Json solution_json(const Solution& sol, Mode mode, const SolverConfig& config) {
    Json residuals = Json::array();
    for (const auto& [e, z] : sol.residual_trace) residuals.push_back({e, z});
    return Json{{"mode", std::string(to_string(mode))},
                {"config", to_json(config)},
                {"converged", sol.converged},
                {"iterations", sol.iterations},
                {"e_residual_inf", sol.e_residual_inf},
                {"z_residual_inf", sol.z_residual_inf},
                {"objective_trace", sol.objective_trace},
                {"residual_trace", residuals},
                {"mu_trace", sol.mu_trace},
                {"warnings", sol.warnings}};
}

inline Json report_json(const PredictionReport& report, bool with_truth) {
    Json j{{"predicted", report.predicted}};
    if (with_truth) {
        j["accuracy"] = report.accuracy;
        Json per = Json::object();
        for (const auto& [id, acc] : report.per_category_accuracy) per[std::to_string(id)] = acc;
        j["per_category_accuracy"] = per;
    }
    return j;
}

struct Options {
    std::string manifest, config, out, solution;
    std::string mode = "full";
    std::string metric = "euclidean";
    std::optional<long> seed;
    bool generalized = false;
    int jobs = 1;
    double holdout_aux = 0.0;
};

inline ConfigDocument config_or_default(const std::string& path) {
    return path.empty() ? ConfigDocument{} : load_config(path);
}

inline int cmd_synth(const Options& o, std::ostream& out) {
    SynthSpec spec = config_or_default(o.config).synth;
    if (o.seed) spec.seed = *o.seed;
    SynthProblem sp = generate(spec);
    if (o.holdout_aux > 0.0) sp = make_generalized_split(sp, o.holdout_aux);
    write_synthetic_dataset(o.out, sp, spec);
    out << "wrote synthetic dataset to " << o.out << "\n";
    return exit_code::ok;
}

inline int cmd_train_aux(const Options& o, std::ostream& out) {
    const DatasetManifest mf = load_manifest(o.manifest);
    if (!mf.x_aux || !mf.a_aux) throw InvalidInput("train-aux: manifest lacks x_aux/a_aux");
    const Matrix x_aux = detail::load_checked(mf, *mf.x_aux, mf.d, mf.n_aux, "x_aux");
    const Matrix a_aux = detail::load_checked(mf, *mf.a_aux, mf.m, x_aux.cols(), "a_aux");
    save_matrix(fs::path(o.out) / "d_aux.csv", train_auxiliary_dictionary(x_aux, a_aux));
    out << "wrote " << (fs::path(o.out) / "d_aux.csv").string() << "\n";
    return exit_code::ok;
}

inline int cmd_solve(const Options& o, std::ostream& out) {
    const DatasetManifest mf = load_manifest(o.manifest);
    const Problem problem = load_problem(mf);
    SolverConfig config = config_or_default(o.config).solver;
    if (o.seed) config.seed = *o.seed;
    const Mode mode = parse_mode(o.mode);
    const Solution sol = solve(problem, config, mode);
    const fs::path dir(o.out);
    save_matrix(dir / "a_test.csv", sol.a_test);
    save_matrix(dir / "d_test.csv", sol.d_test);
    if (sol.theta.size() > 0) save_matrix(dir / "theta.csv", sol.theta);
    if (sol.w_tilde) save_matrix(dir / "w_tilde.csv", *sol.w_tilde);
    save_json(dir / "solution.json", solution_json(sol, mode, config));
    out << "mode " << to_string(mode) << ": " << (sol.converged ? "converged" : "did not converge")
        << " after " << sol.iterations << " iterations\n";
    return exit_code::ok;
}

inline int cmd_eval(const Options& o, std::ostream& out) {
    const DatasetManifest mf = load_manifest(o.manifest);
    const Metric metric = parse_metric(o.metric);
    const PrototypeSet protos = load_prototypes(mf, o.generalized);
    const Matrix a_test = detail::load_checked(mf, (fs::path(o.solution) / "a_test.csv").string(), mf.m, mf.n_test, "a_test");
    const Predictions pred = classify_nn(a_test, protos, metric);
    const fs::path dir(o.out);
    save_labels(dir / "predictions.csv", pred.labels);
    PredictionReport report;
    report.predicted = pred.labels;
    const bool with_truth = mf.truth_test.has_value();
    if (with_truth) {
        report = evaluate(pred.labels, load_labels(mf.path(*mf.truth_test)), protos.category_ids);
    }
    Json j = report_json(report, with_truth);
    j["metric"] = std::string(to_string(metric));
    j["generalized"] = o.generalized;
    j["cosine_fallback"] = pred.cosine_fallback;
    save_json(dir / "report.json", j);
    if (with_truth) out << "accuracy " << report.accuracy << "\n";
    return exit_code::ok;
}

inline int cmd_cv(const Options& o, std::ostream& out) {
    const DatasetManifest mf = load_manifest(o.manifest);
    const ConfigDocument doc = config_or_default(o.config);
    CvSpec spec = doc.cv;
    if (o.seed) spec.seed = *o.seed;
    const CvResult result = run_cv(load_cv_data(mf), doc.solver, parse_mode(o.mode), spec,
                                   parse_metric(o.metric), o.jobs);
    const fs::path dir(o.out);
    save_json(dir / "best_config.json", Json{{"solver", to_json(result.best)}});
    Json trials = Json::array();
    for (std::size_t i = 0; i < result.trials.size(); ++i) {
        const CvTrial& t = result.trials[i];
        Json jt{{"index", i},
                {"lambda1", t.config.lambda1}, {"lambda2", t.config.lambda2},
                {"lambda3", t.config.lambda3}, {"lambda4", t.config.lambda4},
                {"b", t.config.b}, {"gamma", t.config.gamma},
                {"validation_accuracy", t.validation_accuracy},
                {"converged", t.converged}, {"iterations", t.iterations}};
        if (!t.error.empty()) jt["error"] = t.error;
        trials.push_back(jt);
    }
    save_json(dir / "trials.json", Json{{"best_index", result.best_index}, {"trials", trials}});
    out << "best trial " << result.best_index << " validation accuracy "
        << result.trials[static_cast<std::size_t>(result.best_index)].validation_accuracy << "\n";
    return exit_code::ok;
}

inline int cmd_weights(const Options& o, std::ostream& out) {
    const Matrix theta = load_matrix(fs::path(o.solution) / "theta.csv");
    if (theta.cols() != 1) throw InvalidInput("weights: theta.csv must have one column");
    std::vector<std::string> ids;
    for (Index i = 0; i < theta.rows(); ++i) ids.push_back(std::to_string(i));
    const auto ranked = export_weight_ranking(theta.col(0), ids);
    std::string text = "id,weight\n";
    char buf[64];
    for (const auto& [id, w] : ranked) {
        const auto res = std::to_chars(buf, buf + sizeof buf, w);
        text += id + "," + std::string(buf, res.ptr) + "\n";
    }
    write_file(fs::path(o.out) / "weight_ranking.csv", text);
    out << "ranked " << ranked.size() << " web instances\n";
    return exit_code::ok;
}

}  // namespace detail

/// Entry point shared by the executable and the tests. Returns the process exit status.
inline int run_command(const std::vector<std::string>& args, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
    CLI::App app{"Robust visual-semantic dictionary learning from web images and auxiliary categories"};
    app.require_subcommand(1);
    detail::Options o;

    auto add_seed = [&](CLI::App* sub) {
        sub->add_option_function<long>("--seed", [&](const long& s) { o.seed = s; }, "Random seed override");
    };
    const std::vector<std::string> modes{"full", "zsl_only", "wsl_only", "sim1", "sim2", "full_pi"};

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset and manifest");
    synth->add_option("--config", o.config, "JSON config (uses the 'synth' section)");
    synth->add_option("--out", o.out, "Output directory")->required();
    synth->add_option("--holdout-aux", o.holdout_aux, "Move this fraction of auxiliary instances to the test set")
        ->check(CLI::Range(0.0, 0.99));
    add_seed(synth);

    auto* train = app.add_subcommand("train-aux", "Learn the auxiliary dictionary");
    train->add_option("--manifest", o.manifest)->required();
    train->add_option("--out", o.out)->required();

    auto* solve_cmd = app.add_subcommand("solve", "Run the solver");
    solve_cmd->add_option("--manifest", o.manifest)->required();
    solve_cmd->add_option("--config", o.config, "JSON config (uses the 'solver' section)");
    solve_cmd->add_option("--mode", o.mode)->check(CLI::IsMember(modes));
    solve_cmd->add_option("--out", o.out)->required();
    add_seed(solve_cmd);

    auto* eval = app.add_subcommand("eval", "Classify solved codes and score them");
    eval->add_option("--manifest", o.manifest)->required();
    eval->add_option("--solution", o.solution, "Directory written by solve")->required();
    eval->add_option("--metric", o.metric)->check(CLI::IsMember({"euclidean", "cosine"}));
    eval->add_flag("--generalized", o.generalized, "Compare against auxiliary and test prototypes");
    eval->add_option("--out", o.out)->required();

    auto* cv = app.add_subcommand("cv", "Random-search parameter selection on auxiliary validation categories");
    cv->add_option("--manifest", o.manifest)->required();
    cv->add_option("--config", o.config, "JSON config ('solver' base values and 'cv' grids)");
    cv->add_option("--mode", o.mode)->check(CLI::IsMember(modes));
    cv->add_option("--metric", o.metric)->check(CLI::IsMember({"euclidean", "cosine"}));
    cv->add_option("--jobs", o.jobs)->check(CLI::PositiveNumber);
    cv->add_option("--out", o.out)->required();
    add_seed(cv);

    auto* weights = app.add_subcommand("weights", "Rank web instances by importance weight");
    weights->add_option("--solution", o.solution)->required();
    weights->add_option("--out", o.out)->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_code::ok;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n" << app.help();
        return exit_code::usage;
    }

    try {
        if (synth->parsed()) return detail::cmd_synth(o, out);
        if (train->parsed()) return detail::cmd_train_aux(o, out);
        if (solve_cmd->parsed()) return detail::cmd_solve(o, out);
        if (eval->parsed()) return detail::cmd_eval(o, out);
        if (cv->parsed()) return detail::cmd_cv(o, out);
        if (weights->parsed()) return detail::cmd_weights(o, out);
    } catch (const std::exception& e) {
        err << Json{{"error", detail::error_kind(e)}, {"message", e.what()}}.dump() << "\n";
        return exit_code::failure;
    }
    return exit_code::usage;
}

}  // namespace wszsl
