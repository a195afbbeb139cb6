#pragma once

#include "wszsl/alm.hpp"
#include "wszsl/synth.hpp"
#include "wszsl/types.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace wszsl {

namespace fs = std::filesystem;
using Json = nlohmann::json;

// ---------------------------------------------------------------------------------------------
// Matrix text format: one matrix row per line, comma-separated decimal floats, no header.

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace detail

inline Matrix parse_matrix(std::string_view text) {
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    std::size_t last_content_line = 0;
    std::vector<std::string_view> lines;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
        lines.push_back(text.substr(pos, end - pos));
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    for (std::size_t i = 0; i < lines.size(); ++i)
        if (!detail::trim(lines[i]).empty()) last_content_line = i + 1;
    if (last_content_line == 0) throw ParseError("empty matrix file", 1);

    for (std::size_t i = 0; i < last_content_line; ++i) {
        line_no = i + 1;
        const std::string_view line = detail::trim(lines[i]);
        if (line.empty()) throw ParseError("blank line inside matrix", line_no);
        std::vector<double> row;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            const std::string_view token =
                detail::trim(line.substr(start, comma == std::string_view::npos ? line.size() - start : comma - start));
            double value = 0.0;
            const char* first = token.data();
            const char* last = token.data() + token.size();
            if (!token.empty() && *first == '+') ++first;
            const auto [ptr, ec] = std::from_chars(first, last, value);
            if (token.empty() || ec != std::errc{} || ptr != last)
                throw ParseError("non-numeric token '" + std::string(token) + "'", line_no);
            if (!std::isfinite(value)) throw ParseError("non-finite value '" + std::string(token) + "'", line_no);
            row.push_back(value);
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw ParseError("ragged row: expected " + std::to_string(rows.front().size()) +
                                 " values, found " + std::to_string(row.size()),
                             line_no);
        rows.push_back(std::move(row));
    }
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return m;
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Matrix load_matrix(const fs::path& path) {
    const std::string text = read_file(path);
    try {
        return parse_matrix(text);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.message(), e.line());
    }
}

/// Shortest round-trip decimal representation of every entry.
inline std::string format_matrix(const Matrix& m) {
    std::string out;
    char buf[64];
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j) out.push_back(',');
            const auto res = std::to_chars(buf, buf + sizeof buf, m(i, j));
            out.append(buf, res.ptr);
        }
        out.push_back('\n');
    }
    return out;
}

inline void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write '" + path.string() + "'");
    out << text;
}

inline void save_matrix(const fs::path& path, const Matrix& m) { write_file(path, format_matrix(m)); }

/// Integer labels stored as a single-column matrix.
inline std::vector<int> load_labels(const fs::path& path) {
    const Matrix m = load_matrix(path);
    if (m.cols() != 1) throw InvalidInput(path.string() + ": label file must have one column");
    std::vector<int> labels;
    for (Index i = 0; i < m.rows(); ++i) {
        const double v = m(i, 0);
        if (v != std::floor(v)) throw ParseError(path.string() + ": non-integer label", static_cast<std::size_t>(i) + 1);
        labels.push_back(static_cast<int>(v));
    }
    return labels;
}

inline void save_labels(const fs::path& path, const std::vector<int>& labels) {
    std::string out;
    for (int l : labels) out += std::to_string(l) + "\n";
    write_file(path, out);
}

inline void save_json(const fs::path& path, const Json& j) { write_file(path, j.dump(2) + "\n"); }

inline Json load_json(const fs::path& path) {
    try {
        return Json::parse(read_file(path));
    } catch (const Json::parse_error& e) {
        throw InvalidInput(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------------------------
// Configuration document: {"solver": {...}, "synth": {...}, "cv": {...}}; unknown keys rejected.

struct CvSpec {
    std::vector<double> lambda_grid{1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
    std::vector<double> b_grid{1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0};
    std::vector<double> gamma_grid{1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
    int n_samples = 64;
    long seed = 0;

    void validate() const {
        if (lambda_grid.empty() || b_grid.empty() || gamma_grid.empty())
            throw InvalidParameter("cv: grids must be nonempty");
        if (n_samples < 1) throw InvalidParameter("cv: n_samples must be >= 1");
    }
};

namespace detail {

inline void reject_unknown(const Json& j, std::initializer_list<const char*> known, const char* section) {
    if (!j.is_object()) throw InvalidInput(std::string(section) + ": expected a JSON object");
    const std::set<std::string> names(known.begin(), known.end());
    for (const auto& item : j.items())
        if (!names.count(item.key()))
            throw InvalidInput(std::string(section) + ": unknown key '" + item.key() + "'");
}

template <typename T>
void read_field(const Json& j, const char* key, T& field, const char* section) {
    if (!j.contains(key)) return;
    try {
        field = j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw InvalidInput(std::string(section) + ": bad value for '" + key + "'");
    }
}

}  // namespace detail

inline SolverConfig solver_config_from_json(const Json& j) {
    detail::reject_unknown(j, {"lambda1", "lambda2", "lambda3", "lambda4", "b", "gamma", "rho", "mu0",
                               "mu_max", "nu", "max_iters", "qp_tol", "qp_max_iters", "seed", "init",
                               "allow_ridge"},
                           "solver");
    SolverConfig c;
    const char* s = "solver";
    detail::read_field(j, "lambda1", c.lambda1, s);
    detail::read_field(j, "lambda2", c.lambda2, s);
    detail::read_field(j, "lambda3", c.lambda3, s);
    detail::read_field(j, "lambda4", c.lambda4, s);
    detail::read_field(j, "b", c.b, s);
    detail::read_field(j, "gamma", c.gamma, s);
    detail::read_field(j, "rho", c.rho, s);
    detail::read_field(j, "mu0", c.mu0, s);
    detail::read_field(j, "mu_max", c.mu_max, s);
    detail::read_field(j, "nu", c.nu, s);
    detail::read_field(j, "max_iters", c.max_iters, s);
    detail::read_field(j, "qp_tol", c.qp_tol, s);
    detail::read_field(j, "qp_max_iters", c.qp_max_iters, s);
    detail::read_field(j, "seed", c.seed, s);
    detail::read_field(j, "allow_ridge", c.allow_ridge, s);
    if (j.contains("init")) {
        std::string init;
        detail::read_field(j, "init", init, s);
        if (init == "ridge") c.init = InitStrategy::ridge;
        else if (init == "zeros") c.init = InitStrategy::zeros;
        else throw InvalidInput("solver: init must be 'ridge' or 'zeros'");
    }
    c.validate();
    return c;
}

inline Json to_json(const SolverConfig& c) {
    return Json{{"lambda1", c.lambda1}, {"lambda2", c.lambda2}, {"lambda3", c.lambda3},
                {"lambda4", c.lambda4}, {"b", c.b}, {"gamma", c.gamma}, {"rho", c.rho},
                {"mu0", c.mu0}, {"mu_max", c.mu_max}, {"nu", c.nu}, {"max_iters", c.max_iters},
                {"qp_tol", c.qp_tol}, {"qp_max_iters", c.qp_max_iters}, {"seed", c.seed},
                {"init", c.init == InitStrategy::ridge ? "ridge" : "zeros"},
                {"allow_ridge", c.allow_ridge}};
}

inline SynthSpec synth_spec_from_json(const Json& j) {
    detail::reject_unknown(j, {"d", "m", "d_tilde", "c_aux", "c_test", "n_per_aux", "n_web_per_test",
                               "n_test_per_test", "noise_rate", "shift_magnitude", "feature_noise_sigma",
                               "dictionary_drift", "pi_informativeness", "seed"},
                           "synth");
    SynthSpec s;
    const char* n = "synth";
    detail::read_field(j, "d", s.d, n);
    detail::read_field(j, "m", s.m, n);
    detail::read_field(j, "d_tilde", s.d_tilde, n);
    detail::read_field(j, "c_aux", s.c_aux, n);
    detail::read_field(j, "c_test", s.c_test, n);
    detail::read_field(j, "n_per_aux", s.n_per_aux, n);
    detail::read_field(j, "n_web_per_test", s.n_web_per_test, n);
    detail::read_field(j, "n_test_per_test", s.n_test_per_test, n);
    detail::read_field(j, "noise_rate", s.noise_rate, n);
    detail::read_field(j, "shift_magnitude", s.shift_magnitude, n);
    detail::read_field(j, "feature_noise_sigma", s.feature_noise_sigma, n);
    detail::read_field(j, "dictionary_drift", s.dictionary_drift, n);
    detail::read_field(j, "pi_informativeness", s.pi_informativeness, n);
    detail::read_field(j, "seed", s.seed, n);
    s.validate();
    return s;
}

inline Json to_json(const SynthSpec& s) {
    return Json{{"d", s.d}, {"m", s.m}, {"d_tilde", s.d_tilde}, {"c_aux", s.c_aux},
                {"c_test", s.c_test}, {"n_per_aux", s.n_per_aux}, {"n_web_per_test", s.n_web_per_test},
                {"n_test_per_test", s.n_test_per_test}, {"noise_rate", s.noise_rate},
                {"shift_magnitude", s.shift_magnitude}, {"feature_noise_sigma", s.feature_noise_sigma},
                {"dictionary_drift", s.dictionary_drift}, {"pi_informativeness", s.pi_informativeness},
                {"seed", s.seed}};
}

inline CvSpec cv_spec_from_json(const Json& j) {
    detail::reject_unknown(j, {"lambda_grid", "b_grid", "gamma_grid", "n_samples", "seed"}, "cv");
    CvSpec c;
    detail::read_field(j, "lambda_grid", c.lambda_grid, "cv");
    detail::read_field(j, "b_grid", c.b_grid, "cv");
    detail::read_field(j, "gamma_grid", c.gamma_grid, "cv");
    detail::read_field(j, "n_samples", c.n_samples, "cv");
    detail::read_field(j, "seed", c.seed, "cv");
    c.validate();
    return c;
}

struct ConfigDocument {
    SolverConfig solver;
    SynthSpec synth;
    CvSpec cv;
};

inline ConfigDocument config_from_json(const Json& j) {
    detail::reject_unknown(j, {"solver", "synth", "cv"}, "config");
    ConfigDocument doc;
    if (j.contains("solver")) doc.solver = solver_config_from_json(j.at("solver"));
    if (j.contains("synth")) doc.synth = synth_spec_from_json(j.at("synth"));
    if (j.contains("cv")) doc.cv = cv_spec_from_json(j.at("cv"));
    return doc;
}

inline ConfigDocument load_config(const fs::path& path) { return config_from_json(load_json(path)); }

// ---------------------------------------------------------------------------------------------
// Dataset manifest. Paths are relative to the manifest's directory. Prototype columns are
// category ids: the first c_aux columns are auxiliary categories, the rest test categories.

struct ValidationWebPaths {
    std::string x_web, a_web;
    std::optional<std::string> x_priv;
    int categories = 0;
};

struct DatasetManifest {
    fs::path root;
    int d = 0, m = 0, d_tilde = 0;
    int c_aux = 0, c_test = 0;
    int n_aux = 0, n_web = 0, n_test = 0;
    std::optional<std::string> x_aux, a_aux, aux_labels, d_aux;
    std::string x_web, a_web, x_test, prototypes;
    std::optional<std::string> x_priv, truth_test;
    std::optional<ValidationWebPaths> validation;
    Json generator;  // provenance of synthetic data, if any

    fs::path path(const std::string& rel) const { return root / rel; }
};

inline Json to_json(const DatasetManifest& mf) {
    Json j{{"d", mf.d}, {"m", mf.m}, {"c_aux", mf.c_aux}, {"c_test", mf.c_test},
           {"n_aux", mf.n_aux}, {"n_web", mf.n_web}, {"n_test", mf.n_test},
           {"x_web", mf.x_web}, {"a_web", mf.a_web}, {"x_test", mf.x_test},
           {"prototypes", mf.prototypes}};
    if (mf.x_aux) j["x_aux"] = *mf.x_aux;
    if (mf.a_aux) j["a_aux"] = *mf.a_aux;
    if (mf.aux_labels) j["aux_labels"] = *mf.aux_labels;
    if (mf.d_aux) j["d_aux"] = *mf.d_aux;
    if (mf.x_priv) {
        j["x_priv"] = *mf.x_priv;
        j["d_tilde"] = mf.d_tilde;
    }
    if (mf.truth_test) j["truth_test"] = *mf.truth_test;
    if (mf.validation) {
        Json v{{"x_web", mf.validation->x_web}, {"a_web", mf.validation->a_web},
               {"categories", mf.validation->categories}};
        if (mf.validation->x_priv) v["x_priv"] = *mf.validation->x_priv;
        j["validation"] = v;
    }
    if (!mf.generator.is_null()) j["generator"] = mf.generator;
    return j;
}

inline DatasetManifest load_manifest(const fs::path& path) {
    const Json j = load_json(path);
    detail::reject_unknown(j, {"d", "m", "d_tilde", "c_aux", "c_test", "n_aux", "n_web", "n_test",
                               "x_aux", "a_aux", "aux_labels", "d_aux", "x_web", "a_web", "x_test",
                               "x_priv", "truth_test", "prototypes", "validation", "generator"},
                           "manifest");
    DatasetManifest mf;
    mf.root = path.parent_path();
    const char* s = "manifest";
    for (const char* key : {"d", "m", "c_aux", "c_test", "x_web", "a_web", "x_test", "prototypes"})
        if (!j.contains(key)) throw InvalidInput(std::string("manifest: missing '") + key + "'");
    detail::read_field(j, "d", mf.d, s);
    detail::read_field(j, "m", mf.m, s);
    detail::read_field(j, "d_tilde", mf.d_tilde, s);
    detail::read_field(j, "c_aux", mf.c_aux, s);
    detail::read_field(j, "c_test", mf.c_test, s);
    detail::read_field(j, "n_aux", mf.n_aux, s);
    detail::read_field(j, "n_web", mf.n_web, s);
    detail::read_field(j, "n_test", mf.n_test, s);
    detail::read_field(j, "x_web", mf.x_web, s);
    detail::read_field(j, "a_web", mf.a_web, s);
    detail::read_field(j, "x_test", mf.x_test, s);
    detail::read_field(j, "prototypes", mf.prototypes, s);
    auto opt = [&](const char* key, std::optional<std::string>& field) {
        if (j.contains(key)) field = j.at(key).get<std::string>();
    };
    opt("x_aux", mf.x_aux);
    opt("a_aux", mf.a_aux);
    opt("aux_labels", mf.aux_labels);
    opt("d_aux", mf.d_aux);
    opt("x_priv", mf.x_priv);
    opt("truth_test", mf.truth_test);
    if (!mf.d_aux && !(mf.x_aux && mf.a_aux))
        throw InvalidInput("manifest: needs either d_aux or both x_aux and a_aux");
    if (j.contains("validation")) {
        const Json& v = j.at("validation");
        detail::reject_unknown(v, {"x_web", "a_web", "x_priv", "categories"}, "manifest.validation");
        ValidationWebPaths vp;
        detail::read_field(v, "x_web", vp.x_web, s);
        detail::read_field(v, "a_web", vp.a_web, s);
        detail::read_field(v, "categories", vp.categories, s);
        if (v.contains("x_priv")) vp.x_priv = v.at("x_priv").get<std::string>();
        mf.validation = vp;
    }
    if (j.contains("generator")) mf.generator = j.at("generator");

    std::vector<std::string> referenced{mf.x_web, mf.a_web, mf.x_test, mf.prototypes};
    for (const auto* o : {&mf.x_aux, &mf.a_aux, &mf.aux_labels, &mf.d_aux, &mf.x_priv, &mf.truth_test})
        if (*o) referenced.push_back(**o);
    if (mf.validation) {
        referenced.push_back(mf.validation->x_web);
        referenced.push_back(mf.validation->a_web);
        if (mf.validation->x_priv) referenced.push_back(*mf.validation->x_priv);
    }
    for (const auto& rel : referenced)
        if (!fs::exists(mf.path(rel))) throw InvalidInput("manifest: referenced file '" + rel + "' does not exist");
    return mf;
}

namespace detail {

inline Matrix load_checked(const DatasetManifest& mf, const std::string& rel, Index rows, Index cols,
                           const char* name) {
    Matrix m = load_matrix(mf.path(rel));
    if ((rows > 0 && m.rows() != rows) || (cols > 0 && m.cols() != cols)) {
        throw DimensionError(std::string("manifest: ") + name + " is " + std::to_string(m.rows()) + "x" +
                             std::to_string(m.cols()) + ", declared " + std::to_string(rows) + "x" +
                             std::to_string(cols));
    }
    return m;
}

}  // namespace detail

inline PrototypeSet load_prototypes(const DatasetManifest& mf, bool generalized) {
    const Matrix all = detail::load_checked(mf, mf.prototypes, mf.m, mf.c_aux + mf.c_test, "prototypes");
    PrototypeSet set;
    const int first = generalized ? 0 : mf.c_aux;
    set.prototypes = all.rightCols(all.cols() - first);
    for (int c = first; c < mf.c_aux + mf.c_test; ++c) set.category_ids.push_back(c);
    return set;
}

inline Dictionary load_or_train_aux_dictionary(const DatasetManifest& mf) {
    if (mf.d_aux) return detail::load_checked(mf, *mf.d_aux, mf.d, mf.m, "d_aux");
    const Matrix x_aux = detail::load_checked(mf, *mf.x_aux, mf.d, mf.n_aux, "x_aux");
    const Matrix a_aux = detail::load_checked(mf, *mf.a_aux, mf.m, mf.n_aux, "a_aux");
    return train_auxiliary_dictionary(x_aux, a_aux);
}

inline Problem load_problem(const DatasetManifest& mf) {
    Problem p;
    p.x_test = detail::load_checked(mf, mf.x_test, mf.d, mf.n_test, "x_test");
    p.x_web = detail::load_checked(mf, mf.x_web, mf.d, mf.n_web, "x_web");
    p.a_web = detail::load_checked(mf, mf.a_web, mf.m, p.x_web.cols(), "a_web");
    if (mf.x_priv) p.x_priv = detail::load_checked(mf, *mf.x_priv, mf.d_tilde, p.x_web.cols(), "x_priv");
    p.d_aux = load_or_train_aux_dictionary(mf);
    p.validate();
    return p;
}

/// Writes every matrix of a synthetic problem plus manifest.json under `dir`.
inline DatasetManifest write_synthetic_dataset(const fs::path& dir, const SynthProblem& sp, const SynthSpec& spec) {
    fs::create_directories(dir);
    DatasetManifest mf;
    mf.root = dir;
    mf.d = static_cast<int>(sp.problem.feature_dim());
    mf.m = static_cast<int>(sp.problem.semantic_dim());
    mf.c_aux = static_cast<int>(sp.aux_prototypes.size());
    mf.c_test = static_cast<int>(sp.test_prototypes.size());
    mf.n_aux = static_cast<int>(sp.x_aux.cols());
    mf.n_web = static_cast<int>(sp.problem.n_web());
    mf.n_test = static_cast<int>(sp.problem.n_test());
    mf.x_aux = "x_aux.csv";
    mf.a_aux = "a_aux.csv";
    mf.aux_labels = "aux_labels.csv";
    mf.x_web = "x_web.csv";
    mf.a_web = "a_web.csv";
    mf.x_test = "x_test.csv";
    mf.truth_test = "truth_test.csv";
    mf.prototypes = "prototypes.csv";
    save_matrix(dir / *mf.x_aux, sp.x_aux);
    save_matrix(dir / *mf.a_aux, sp.a_aux);
    save_labels(dir / *mf.aux_labels, sp.aux_labels);
    save_matrix(dir / mf.x_web, sp.problem.x_web);
    save_matrix(dir / mf.a_web, sp.problem.a_web);
    save_matrix(dir / mf.x_test, sp.problem.x_test);
    save_labels(dir / *mf.truth_test, sp.truth_test);
    save_matrix(dir / mf.prototypes, sp.all_prototypes().prototypes);
    if (sp.problem.x_priv) {
        mf.x_priv = "x_priv.csv";
        mf.d_tilde = static_cast<int>(sp.problem.x_priv->rows());
        save_matrix(dir / *mf.x_priv, *sp.problem.x_priv);
    }
    std::vector<int> mask(sp.outlier_mask.begin(), sp.outlier_mask.end());
    save_labels(dir / "outlier_mask.csv", mask);
    if (sp.validation_categories > 0) {
        ValidationWebPaths v{"x_web_val.csv", "a_web_val.csv", std::string("x_priv_val.csv"), sp.validation_categories};
        save_matrix(dir / v.x_web, sp.validation_web.x);
        save_matrix(dir / v.a_web, sp.validation_web.a);
        save_matrix(dir / *v.x_priv, sp.validation_web.x_priv);
        mf.validation = v;
    }
    mf.generator = Json{{"rng", Rng::kName}, {"spec", to_json(spec)}};
    save_json(dir / "manifest.json", to_json(mf));
    return mf;
}

}  // namespace wszsl
