#include "wszsl/cli.hpp"
#include "wszsl/io.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include <unistd.h>

using namespace wszsl;

namespace {

class TempDir {
 public:
    TempDir() {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("wszsl_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }
    std::string str(const std::string& rel) const { return (path_ / rel).string(); }

 private:
    fs::path path_;
};

struct CliRun {
    int code;
    std::string out, err;
};

CliRun run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_command(args, out, err);
    return {code, out.str(), err.str()};
}

// Small problem so the CLI round trips stay fast.
const char* kSmallConfig = R"({
  "synth": {"d": 12, "m": 4, "d_tilde": 6, "c_aux": 5, "c_test": 3,
            "n_per_aux": 12, "n_web_per_test": 10, "n_test_per_test": 10, "seed": 4},
  "solver": {"max_iters": 200},
  "cv": {"n_samples": 3, "seed": 9}
})";

fs::path make_dataset(const TempDir& dir, const std::string& extra_config = "") {
    write_file(dir.path() / "config.json", extra_config.empty() ? kSmallConfig : extra_config);
    const CliRun r = run({"synth", "--config", dir.str("config.json"), "--out", dir.str("data")});
    EXPECT_EQ(r.code, 0) << r.err;
    return dir.path() / "data" / "manifest.json";
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// Matrix text format

TEST(MatrixFormat, ParsesRowsAndColumns) {
    Matrix expected(2, 2);
    expected << 1, 2, 3, 4;
    EXPECT_EQ(parse_matrix("1,2\n3,4"), expected);
    EXPECT_EQ(parse_matrix("1, 2\r\n3 ,4\n\n"), expected);
    EXPECT_EQ(parse_matrix("-1.5e-3,+2").row(0), (Eigen::RowVector2d(-1.5e-3, 2.0)));
}

TEST(MatrixFormat, RaggedRowNamesLine) {
    try {
        parse_matrix("1,2\n3");
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(MatrixFormat, RejectsMalformedInput) {
    auto line_of = [](const char* text) -> std::size_t {
        try {
            parse_matrix(text);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    EXPECT_EQ(line_of(""), 1u);
    EXPECT_EQ(line_of("\n\n"), 1u);
    EXPECT_EQ(line_of("1,2\n3,x"), 2u);
    EXPECT_EQ(line_of("1,2\n\n3,4"), 2u);
    EXPECT_EQ(line_of("1,,2"), 1u);
    EXPECT_EQ(line_of("1,2\n3,4\nnan,1"), 3u);
    EXPECT_EQ(line_of("1,2\ninf,1"), 2u);
    EXPECT_EQ(line_of("1 2"), 1u);
}

TEST(MatrixFormat, RoundTripIsExact) {
    TempDir dir;
    std::mt19937_64 gen(1);
    Matrix m = oracle::random_matrix(gen, 13, 7);
    m(0, 0) = 1e-310;  // subnormal
    m(1, 1) = -1.7976931348623157e308;
    m(2, 2) = 0.1;
    m(3, 3) = -0.0;
    save_matrix(dir.path() / "m.csv", m);
    const Matrix back = load_matrix(dir.path() / "m.csv");
    EXPECT_EQ(back, m);
    EXPECT_LE((back - m).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(MatrixFormat, LoadErrorsMentionPath) {
    TempDir dir;
    EXPECT_THROW(load_matrix(dir.path() / "missing.csv"), InvalidInput);
    write_file(dir.path() / "bad.csv", "1,2\n3\n");
    try {
        load_matrix(dir.path() / "bad.csv");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("bad.csv"), std::string::npos);
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(Labels, RoundTripAndValidation) {
    TempDir dir;
    save_labels(dir.path() / "l.csv", {3, 1, 4, 1, 5});
    EXPECT_EQ(load_labels(dir.path() / "l.csv"), (std::vector<int>{3, 1, 4, 1, 5}));
    write_file(dir.path() / "f.csv", "1\n2.5\n");
    EXPECT_THROW(load_labels(dir.path() / "f.csv"), ParseError);
    write_file(dir.path() / "w.csv", "1,2\n");
    EXPECT_THROW(load_labels(dir.path() / "w.csv"), InvalidInput);
}

// ---------------------------------------------------------------------------------------------
// Config documents

TEST(Config, RoundTripsThroughJson) {
    SolverConfig c;
    c.lambda1 = 10.0;
    c.b = 3.5;
    c.init = InitStrategy::zeros;
    const SolverConfig back = solver_config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    SynthSpec s;
    s.noise_rate = 0.3;
    EXPECT_EQ(to_json(synth_spec_from_json(to_json(s))), to_json(s));
}

TEST(Config, UnknownKeysRejected) {
    EXPECT_THROW(config_from_json(Json::parse(R"({"solver": {"lambda_1": 1}})")), InvalidInput);
    EXPECT_THROW(config_from_json(Json::parse(R"({"solvr": {}})")), InvalidInput);
    EXPECT_THROW(config_from_json(Json::parse(R"({"synth": {"sigma": 1}})")), InvalidInput);
    EXPECT_THROW(config_from_json(Json::parse(R"({"cv": {"samples": 1}})")), InvalidInput);
}

TEST(Config, BadValuesRejected) {
    EXPECT_THROW(config_from_json(Json::parse(R"({"solver": {"lambda1": "big"}})")), InvalidInput);
    EXPECT_THROW(config_from_json(Json::parse(R"({"solver": {"lambda1": -1}})")), InvalidParameter);
    EXPECT_THROW(config_from_json(Json::parse(R"({"solver": {"init": "random"}})")), InvalidInput);
    EXPECT_THROW(config_from_json(Json::parse(R"({"cv": {"b_grid": []}})")), InvalidParameter);
    const ConfigDocument doc = config_from_json(Json::parse(R"({"cv": {"n_samples": 5}})"));
    EXPECT_EQ(doc.cv.n_samples, 5);
    EXPECT_EQ(doc.solver.lambda1, 1.0);
}

// ---------------------------------------------------------------------------------------------
// Command line

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"frobnicate"}).code, 2);
    EXPECT_EQ(run({"solve", "--manifest", "x", "--out", "y", "--bogus"}).code, 2);
    EXPECT_EQ(run({"solve", "--out", "y"}).code, 2);
    EXPECT_EQ(run({"solve", "--manifest", "x", "--out", "y", "--mode", "turbo"}).code, 2);
    EXPECT_EQ(run({"eval", "--manifest", "x", "--solution", "s", "--out", "y", "--metric", "l1"}).code, 2);
    const CliRun help = run({"--help"});
    EXPECT_EQ(help.code, 0);
    EXPECT_NE(help.out.find("solve"), std::string::npos);
}

TEST(Cli, RuntimeFailuresExitOneWithStructuredMessage) {
    TempDir dir;
    const CliRun missing = run({"solve", "--manifest", dir.str("nope.json"), "--out", dir.str("o")});
    EXPECT_EQ(missing.code, 1);
    const Json err = Json::parse(missing.err);
    EXPECT_EQ(err.at("error"), "invalid_input");
    EXPECT_TRUE(err.contains("message"));

    write_file(dir.path() / "typo.json", R"({"solver": {"lamda1": 1}})");
    const fs::path manifest = make_dataset(dir);
    const CliRun typo = run({"solve", "--manifest", manifest.string(), "--config", dir.str("typo.json"), "--out", dir.str("o")});
    EXPECT_EQ(typo.code, 1);
    EXPECT_NE(typo.err.find("lamda1"), std::string::npos);

    write_file(dir.path() / "infeasible.json", R"({"solver": {"b": 0.5}})");
    const CliRun inf = run({"solve", "--manifest", manifest.string(), "--config", dir.str("infeasible.json"), "--out", dir.str("o")});
    EXPECT_EQ(inf.code, 1);
    EXPECT_EQ(Json::parse(inf.err).at("error"), "infeasible");

    write_file(dir.path() / "data" / "x_test.csv", "1,2\n3\n");
    const CliRun ragged = run({"solve", "--manifest", manifest.string(), "--out", dir.str("o")});
    EXPECT_EQ(ragged.code, 1);
    EXPECT_EQ(Json::parse(ragged.err).at("error"), "parse");
}

TEST(Cli, SynthWritesReloadableArtifacts) {
    TempDir dir;
    const fs::path manifest = make_dataset(dir);
    const DatasetManifest mf = load_manifest(manifest);
    EXPECT_EQ(mf.d, 12);
    EXPECT_EQ(mf.n_web, 30);
    EXPECT_EQ(mf.generator.at("rng"), Rng::kName);
    const Problem p = load_problem(mf);
    SynthSpec spec = load_config(dir.path() / "config.json").synth;
    const SynthProblem sp = generate(spec);
    EXPECT_EQ(p.x_web, sp.problem.x_web);
    EXPECT_EQ(p.x_test, sp.problem.x_test);
    EXPECT_EQ(*p.x_priv, *sp.problem.x_priv);
    EXPECT_EQ(p.d_aux, sp.problem.d_aux);
    for (const auto& entry : fs::directory_iterator(dir.path() / "data")) {
        if (entry.path().extension() == ".csv") {
            EXPECT_NO_THROW(load_matrix(entry.path())) << entry.path();
        }
        if (entry.path().extension() == ".json") {
            EXPECT_NO_THROW(load_json(entry.path())) << entry.path();
        }
    }
}

TEST(Cli, TrainAuxMatchesLibrary) {
    TempDir dir;
    const fs::path manifest = make_dataset(dir);
    ASSERT_EQ(run({"train-aux", "--manifest", manifest.string(), "--out", dir.str("aux")}).code, 0);
    const DatasetManifest mf = load_manifest(manifest);
    EXPECT_EQ(load_matrix(dir.path() / "aux" / "d_aux.csv"), load_or_train_aux_dictionary(mf));
}

TEST(Cli, ZslOnlyModeEqualsFullWithWebTermsOff) {
    TempDir dir;
    const fs::path manifest = make_dataset(dir);
    write_file(dir.path() / "off.json", R"({"solver": {"lambda3": 0, "lambda4": 0, "max_iters": 200}})");
    ASSERT_EQ(run({"solve", "--manifest", manifest.string(), "--config", dir.str("config.json"), "--mode", "zsl_only",
                   "--out", dir.str("zsl")}).code, 0);
    ASSERT_EQ(run({"solve", "--manifest", manifest.string(), "--config", dir.str("off.json"), "--mode", "full",
                   "--out", dir.str("full")}).code, 0);
    EXPECT_EQ(read_file(dir.path() / "zsl" / "a_test.csv"), read_file(dir.path() / "full" / "a_test.csv"));
}

TEST(Cli, SolveIsDeterministicAndEvaluates) {
    TempDir dir;
    const fs::path manifest = make_dataset(dir);
    for (const char* out : {"s1", "s2"})
        ASSERT_EQ(run({"solve", "--manifest", manifest.string(), "--config", dir.str("config.json"), "--seed", "5",
                       "--out", dir.str(out)}).code, 0);
    for (const char* f : {"a_test.csv", "d_test.csv", "theta.csv", "solution.json"})
        EXPECT_EQ(read_file(dir.path() / "s1" / f), read_file(dir.path() / "s2" / f)) << f;

    const Json sol = load_json(dir.path() / "s1" / "solution.json");
    EXPECT_EQ(sol.at("mode"), "full");
    EXPECT_EQ(sol.at("config").at("seed"), 5);
    EXPECT_EQ(sol.at("residual_trace").size(), static_cast<std::size_t>(sol.at("iterations").get<int>()));
    const Matrix theta = load_matrix(dir.path() / "s1" / "theta.csv");
    EXPECT_NEAR(theta.sum(), 30.0, 1e-9);

    ASSERT_EQ(run({"eval", "--manifest", manifest.string(), "--solution", dir.str("s1"), "--out", dir.str("e")}).code, 0);
    const Json report = load_json(dir.path() / "e" / "report.json");
    const std::vector<int> pred = load_labels(dir.path() / "e" / "predictions.csv");
    const std::vector<int> truth = load_labels(dir.path() / "data" / "truth_test.csv");
    EXPECT_EQ(report.at("predicted").get<std::vector<int>>(), pred);
    EXPECT_DOUBLE_EQ(report.at("accuracy").get<double>(), evaluate(pred, truth, {5, 6, 7}).accuracy);
    for (int id : pred) EXPECT_TRUE(id >= 5 && id < 8);

    ASSERT_EQ(run({"eval", "--manifest", manifest.string(), "--solution", dir.str("s1"), "--generalized",
                   "--metric", "cosine", "--out", dir.str("g")}).code, 0);
    const Json greport = load_json(dir.path() / "g" / "report.json");
    EXPECT_EQ(greport.at("generalized"), true);
    EXPECT_EQ(greport.at("metric"), "cosine");
}

TEST(Cli, FullPiWritesSlackMapping) {
    TempDir dir;
    const fs::path manifest = make_dataset(dir);
    ASSERT_EQ(run({"solve", "--manifest", manifest.string(), "--config", dir.str("config.json"), "--mode", "full_pi",
                   "--out", dir.str("pi")}).code, 0);
    const Matrix w = load_matrix(dir.path() / "pi" / "w_tilde.csv");
    EXPECT_EQ(w.rows(), 12);
    EXPECT_EQ(w.cols(), 6);
}

TEST(Cli, WeightsAreRankedDescending) {
    TempDir dir;
    const fs::path manifest = make_dataset(dir);
    ASSERT_EQ(run({"solve", "--manifest", manifest.string(), "--config", dir.str("config.json"), "--out", dir.str("s")}).code, 0);
    ASSERT_EQ(run({"weights", "--solution", dir.str("s"), "--out", dir.str("w")}).code, 0);
    const std::string text = read_file(dir.path() / "w" / "weight_ranking.csv");
    ASSERT_EQ(text.rfind("id,weight\n", 0), 0u);
    const Matrix body = parse_matrix(text.substr(10));
    const Matrix theta = load_matrix(dir.path() / "s" / "theta.csv");
    ASSERT_EQ(body.rows(), theta.rows());
    std::vector<bool> seen(static_cast<std::size_t>(theta.rows()), false);
    for (Index i = 0; i < body.rows(); ++i) {
        const auto id = static_cast<Index>(body(i, 0));
        EXPECT_EQ(body(i, 1), theta(id, 0));
        EXPECT_FALSE(seen[static_cast<std::size_t>(id)]);
        seen[static_cast<std::size_t>(id)] = true;
        if (i > 0) {
            EXPECT_GE(body(i - 1, 1), body(i, 1));
        }
    }
}

TEST(Cli, CvIsDeterministicAndIgnoresTestLabels) {
    TempDir dir;
    const fs::path manifest = make_dataset(dir);
    write_file(dir.path() / "one.json", R"({"cv": {"n_samples": 1, "seed": 3}, "solver": {"max_iters": 200}})");
    for (const char* out : {"c1", "c2"})
        ASSERT_EQ(run({"cv", "--manifest", manifest.string(), "--config", dir.str("one.json"), "--out", dir.str(out)}).code, 0);
    EXPECT_EQ(read_file(dir.path() / "c1" / "best_config.json"), read_file(dir.path() / "c2" / "best_config.json"));

    ASSERT_EQ(run({"cv", "--manifest", manifest.string(), "--config", dir.str("config.json"), "--jobs", "3",
                   "--out", dir.str("c3")}).code, 0);
    const std::string best = read_file(dir.path() / "c3" / "best_config.json");
    const std::string log = read_file(dir.path() / "c3" / "trials.json");
    EXPECT_EQ(load_json(dir.path() / "c3" / "trials.json").at("trials").size(), 3u);

    // The chosen config is loadable as a solver config.
    EXPECT_NO_THROW(load_config(dir.path() / "c3" / "best_config.json"));

    // Scrambling test features and labels leaves parameter selection untouched.
    write_file(dir.path() / "data" / "truth_test.csv", "999\n");
    write_file(dir.path() / "data" / "x_test.csv", "0\n");
    ASSERT_EQ(run({"cv", "--manifest", manifest.string(), "--config", dir.str("config.json"), "--out", dir.str("c4")}).code, 0);
    EXPECT_EQ(read_file(dir.path() / "c4" / "best_config.json"), best);
    EXPECT_EQ(read_file(dir.path() / "c4" / "trials.json"), log);
}

TEST(Cli, GeneralizedHoldoutFeedsEval) {
    TempDir dir;
    write_file(dir.path() / "config.json", kSmallConfig);
    ASSERT_EQ(run({"synth", "--config", dir.str("config.json"), "--holdout-aux", "0.25", "--out", dir.str("data")}).code, 0);
    const fs::path manifest = dir.path() / "data" / "manifest.json";
    const DatasetManifest mf = load_manifest(manifest);
    EXPECT_EQ(mf.n_test, 30 + 5 * 3);
    ASSERT_EQ(run({"solve", "--manifest", manifest.string(), "--config", dir.str("config.json"), "--out", dir.str("s")}).code, 0);
    // Auxiliary ids in the truth are unknown to the standard prototype set.
    EXPECT_EQ(run({"eval", "--manifest", manifest.string(), "--solution", dir.str("s"), "--out", dir.str("e")}).code, 1);
    EXPECT_EQ(run({"eval", "--manifest", manifest.string(), "--solution", dir.str("s"), "--generalized",
                   "--out", dir.str("g")}).code, 0);
}

TEST(Manifest, DimensionMismatchIsReported) {
    TempDir dir;
    const fs::path manifest = make_dataset(dir);
    Json j = load_json(manifest);
    j["d"] = 13;
    save_json(manifest, j);
    EXPECT_THROW(load_problem(load_manifest(manifest)), DimensionError);
    j["extra"] = 1;
    save_json(manifest, j);
    EXPECT_THROW(load_manifest(manifest), InvalidInput);
}
