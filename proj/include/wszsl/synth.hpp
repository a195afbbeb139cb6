#pragma once

#include "wszsl/alm.hpp"
#include "wszsl/classify.hpp"
#include "wszsl/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace wszsl {

/// Seedable generator with a portable output stream: mt19937_64 words mapped to uniforms by
/// their top 53 bits, normals by Box-Muller. Identical seeds give identical streams on every
/// conforming standard library.
class Rng {
 public:
    static constexpr const char* kName = "mt19937_64+boxmuller";

    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.14159265358979323846 * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    Matrix normal_matrix(Index rows, Index cols, double scale = 1.0) {
        Matrix m(rows, cols);
        for (Index j = 0; j < cols; ++j)
            for (Index i = 0; i < rows; ++i) m(i, j) = scale * normal();
        return m;
    }

    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[below(i)]);
        return p;
    }

 private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

struct SynthSpec {
    int d = 32;
    int m = 8;
    int d_tilde = 16;
    int c_aux = 10;
    int c_test = 5;
    int n_per_aux = 40;
    int n_web_per_test = 40;
    int n_test_per_test = 40;
    double noise_rate = 0.2;
    double shift_magnitude = 0.5;
    double feature_noise_sigma = 1.6;
    double dictionary_drift = 1.0;
    double pi_informativeness = 0.5;
    long seed = 0;

    void validate() const {
        if (d < 1 || m < 1 || d_tilde < 1 || c_aux < 1 || c_test < 1 || n_per_aux < 1 ||
            n_web_per_test < 1 || n_test_per_test < 1)
            throw InvalidParameter("synth: dimensions and counts must be >= 1");
        if (!(noise_rate >= 0.0 && noise_rate < 1.0)) throw InvalidParameter("synth: noise_rate must be in [0, 1)");
        if (!(pi_informativeness >= 0.0 && pi_informativeness <= 1.0))
            throw InvalidParameter("synth: pi_informativeness must be in [0, 1]");
        for (double v : {shift_magnitude, feature_noise_sigma, dictionary_drift})
            if (!(v >= 0.0) || !std::isfinite(v))
                throw InvalidParameter("synth: shift, sigma and drift must be finite and >= 0");
    }
};

/// Number of leading auxiliary categories held out for validation, C^c, chosen so that
/// C^c / C^a matches C^t / (C^a + C^t), clamped to [1, C^a - 1].
inline int validation_category_count(int c_aux, int c_test) {
    if (c_aux < 2) throw InvalidParameter("validation split needs at least two auxiliary categories");
    const double ratio = static_cast<double>(c_test) / static_cast<double>(c_aux + c_test);
    const int cc = static_cast<int>(std::lround(ratio * c_aux));
    return std::clamp(cc, 1, c_aux - 1);
}

/// Web images (with features, possibly wrong codes and privileged features) for one group of
/// categories.
struct WebSet {
    FeatureMatrix x;
    SemanticMatrix a;
    FeatureMatrix x_priv;
    std::vector<int> queried;      // category whose prototype is in column of a
    std::vector<int> true_labels;  // category the features were drawn from
    std::vector<bool> outlier;
};

struct SynthProblem {
    Problem problem;
    FeatureMatrix x_aux;
    SemanticMatrix a_aux;
    std::vector<int> aux_labels;
    std::vector<int> truth_test;
    std::vector<bool> outlier_mask;
    PrototypeSet aux_prototypes;
    PrototypeSet test_prototypes;
    /// Web images crawled for the first validation_categories auxiliary categories.
    WebSet validation_web;
    int validation_categories = 0;
    Dictionary d_aux_true;
    Dictionary d_test_true;
    /// Mapping of the validation categories; drifts from d_aux_true like d_test_true does.
    Dictionary d_val_true;

    PrototypeSet all_prototypes() const { return PrototypeSet::concat(aux_prototypes, test_prototypes); }
};

namespace detail {

inline double min_pairwise_distance(const Matrix& cols) {
    double best = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < cols.cols(); ++i)
        for (Index j = i + 1; j < cols.cols(); ++j) best = std::min(best, (cols.col(i) - cols.col(j)).norm());
    return best;
}

inline Matrix sample_prototypes(Rng& rng, int m, int count, double sigma) {
    const double accept = 0.25 * std::sqrt(2.0 * m);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        Matrix protos = rng.normal_matrix(m, count);
        if (count < 2) return protos;
        const double gap = min_pairwise_distance(protos);
        if (gap < accept) continue;
        if (gap < 4.0 * sigma) protos *= 4.0 * sigma / gap;
        return protos;
    }
    throw InvalidParameter("synth: could not draw " + std::to_string(count) +
                           " separated prototypes in " + std::to_string(m) +
                           " dimensions after 1000 attempts");
}

inline int flip_label(Rng& rng, int label, int group_begin, int group_size, int total) {
    if (group_size >= 2) {
        const int offset = static_cast<int>(rng.below(static_cast<std::size_t>(group_size - 1)));
        const int other = group_begin + offset;
        return other >= label ? other + 1 : other;
    }
    const int other = static_cast<int>(rng.below(static_cast<std::size_t>(total - 1)));
    return other >= label ? other + 1 : other;
}

struct WebDraw {
    const Matrix* protos;
    const Dictionary* dict;
    const Vector* shift;
    const Matrix* projector;
    int group_begin;
    int group_size;
    int per_category;
};

inline WebSet draw_web(Rng& rng, const SynthSpec& spec, const WebDraw& w) {
    const int total_categories = static_cast<int>(w.protos->cols());
    const int n = w.group_size * w.per_category;
    WebSet web;
    web.x.resize(spec.d, n);
    web.a.resize(spec.m, n);
    web.queried.resize(static_cast<std::size_t>(n));
    web.true_labels.resize(static_cast<std::size_t>(n));
    web.outlier.assign(static_cast<std::size_t>(n), false);

    const auto n_out = static_cast<std::size_t>(std::lround(spec.noise_rate * n));
    const std::vector<std::size_t> perm = rng.permutation(static_cast<std::size_t>(n));
    for (std::size_t k = 0; k < n_out; ++k) web.outlier[perm[k]] = true;

    for (int i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const int label = w.group_begin + i / w.per_category;
        const int queried = web.outlier[ui]
                                ? flip_label(rng, label, w.group_begin, w.group_size, total_categories)
                                : label;
        web.true_labels[ui] = label;
        web.queried[ui] = queried;
        web.a.col(i) = w.protos->col(queried);
        web.x.col(i) = *w.dict * w.protos->col(label) + *w.shift +
                       spec.feature_noise_sigma * rng.normal_matrix(spec.d, 1);
    }
    const Matrix residual = web.x - *w.dict * web.a;
    web.x_priv = *w.projector * residual +
                 (1.0 - spec.pi_informativeness) * rng.normal_matrix(spec.d_tilde, n);
    return web;
}

}  // namespace detail

/// Draws a synthetic problem with a planted dictionary pair, noisy web labels, a constant
/// web-domain offset and privileged features correlated with the web mapping error.
inline SynthProblem generate(const SynthSpec& spec) {
    spec.validate();
    Rng rng(static_cast<std::uint64_t>(spec.seed));
    const int c_total = spec.c_aux + spec.c_test;
    const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(spec.m));

    const Matrix protos = detail::sample_prototypes(rng, spec.m, c_total, spec.feature_noise_sigma);
    SynthProblem out;
    out.d_aux_true = rng.normal_matrix(spec.d, spec.m, inv_sqrt_m);
    out.d_test_true = out.d_aux_true + rng.normal_matrix(spec.d, spec.m, spec.dictionary_drift * inv_sqrt_m);
    out.d_val_true = out.d_aux_true + rng.normal_matrix(spec.d, spec.m, spec.dictionary_drift * inv_sqrt_m);
    const int n_val = spec.c_aux >= 2 ? validation_category_count(spec.c_aux, spec.c_test) : 0;
    Vector shift(spec.d);
    for (Index i = 0; i < spec.d; ++i) shift(i) = (rng.uniform() < 0.5 ? -1.0 : 1.0) * spec.shift_magnitude;
    const Matrix projector = rng.normal_matrix(spec.d_tilde, spec.d, 1.0 / std::sqrt(static_cast<double>(spec.d)));

    out.aux_prototypes.prototypes = protos.leftCols(spec.c_aux);
    out.test_prototypes.prototypes = protos.rightCols(spec.c_test);
    for (int c = 0; c < spec.c_aux; ++c) out.aux_prototypes.category_ids.push_back(c);
    for (int c = 0; c < spec.c_test; ++c) out.test_prototypes.category_ids.push_back(spec.c_aux + c);

    const int n_aux = spec.c_aux * spec.n_per_aux;
    out.x_aux.resize(spec.d, n_aux);
    out.a_aux.resize(spec.m, n_aux);
    for (int i = 0; i < n_aux; ++i) {
        const int label = i / spec.n_per_aux;
        out.aux_labels.push_back(label);
        out.a_aux.col(i) = protos.col(label);
        const Dictionary& dict = label < n_val ? out.d_val_true : out.d_aux_true;
        out.x_aux.col(i) = dict * protos.col(label) + spec.feature_noise_sigma * rng.normal_matrix(spec.d, 1);
    }

    const int n_test = spec.c_test * spec.n_test_per_test;
    Matrix x_test(spec.d, n_test);
    for (int i = 0; i < n_test; ++i) {
        const int label = spec.c_aux + i / spec.n_test_per_test;
        out.truth_test.push_back(label);
        x_test.col(i) = out.d_test_true * protos.col(label) +
                        spec.feature_noise_sigma * rng.normal_matrix(spec.d, 1);
    }

    const WebSet web = detail::draw_web(
        rng, spec, {&protos, &out.d_test_true, &shift, &projector, spec.c_aux, spec.c_test, spec.n_web_per_test});
    out.outlier_mask = web.outlier;

    if (n_val > 0) {
        out.validation_categories = n_val;
        out.validation_web = detail::draw_web(rng, spec,
                                              {&protos, &out.d_val_true, &shift, &projector, 0, n_val,
                                               spec.n_web_per_test});
    }

    out.problem.x_test = std::move(x_test);
    out.problem.x_web = web.x;
    out.problem.a_web = web.a;
    out.problem.x_priv = web.x_priv;
    out.problem.d_aux = train_auxiliary_dictionary(out.x_aux, out.a_aux);
    return out;
}

/// Moves round(fraction * n_per_category) instances of every auxiliary category into the test
/// set (keeping their auxiliary labels) and retrains the auxiliary dictionary on the remainder.
inline SynthProblem make_generalized_split(const SynthProblem& base, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidParameter("generalized split: fraction must be in (0, 1)");
    std::vector<Index> keep, moved;
    std::vector<int> seen_per_label;
    std::vector<int> count_per_label;
    for (int label : base.aux_labels) {
        if (label >= static_cast<int>(count_per_label.size())) count_per_label.resize(static_cast<std::size_t>(label) + 1, 0);
        ++count_per_label[static_cast<std::size_t>(label)];
    }
    seen_per_label.assign(count_per_label.size(), 0);
    for (std::size_t i = 0; i < base.aux_labels.size(); ++i) {
        const auto label = static_cast<std::size_t>(base.aux_labels[i]);
        const long quota = std::lround(fraction * count_per_label[label]);
        if (seen_per_label[label]++ < quota) moved.push_back(static_cast<Index>(i));
        else keep.push_back(static_cast<Index>(i));
    }
    if (keep.empty()) throw InvalidParameter("generalized split leaves no auxiliary instances");

    SynthProblem out = base;
    out.x_aux = base.x_aux(Eigen::all, keep);
    out.a_aux = base.a_aux(Eigen::all, keep);
    out.aux_labels.clear();
    for (Index i : keep) out.aux_labels.push_back(base.aux_labels[static_cast<std::size_t>(i)]);

    const Index nt = base.problem.x_test.cols();
    Matrix x_test(base.problem.x_test.rows(), nt + static_cast<Index>(moved.size()));
    x_test.leftCols(nt) = base.problem.x_test;
    x_test.rightCols(static_cast<Index>(moved.size())) = base.x_aux(Eigen::all, moved);
    out.problem.x_test = std::move(x_test);
    for (Index i : moved) out.truth_test.push_back(base.aux_labels[static_cast<std::size_t>(i)]);
    out.problem.d_aux = train_auxiliary_dictionary(out.x_aux, out.a_aux);
    return out;
}

/// Ridge-regularized codes min ||x - D a||^2 + ridge ||a||^2 per column, by plain conjugate
/// gradient on the normal equations. Shares no code with the solver's closed forms.
inline SemanticMatrix brute_force_code_oracle(const FeatureMatrix& x, const Dictionary& d, double ridge) {
    if (x.rows() != d.rows()) throw DimensionError("code oracle: feature dimension mismatch");
    if (!(ridge >= 0.0)) throw InvalidParameter("code oracle: ridge must be >= 0");
    const Index m = d.cols();
    auto apply = [&](const Vector& v) -> Vector {
        Vector dv = Vector::Zero(d.rows());
        for (Index k = 0; k < m; ++k) dv += v(k) * d.col(k);
        Vector out(m);
        for (Index k = 0; k < m; ++k) out(k) = d.col(k).dot(dv) + ridge * v(k);
        return out;
    };
    SemanticMatrix codes(m, x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
        Vector rhs(m);
        for (Index k = 0; k < m; ++k) rhs(k) = d.col(k).dot(x.col(j));
        Vector a = Vector::Zero(m);
        Vector r = rhs;
        Vector p = r;
        double rr = r.squaredNorm();
        const double stop = 1e-30 * std::max(1.0, rhs.squaredNorm());
        for (Index it = 0; it < 10 * m + 50 && rr > stop; ++it) {
            const Vector ap = apply(p);
            const double denom = p.dot(ap);
            if (!(denom > 0.0)) break;
            const double alpha = rr / denom;
            a += alpha * p;
            r -= alpha * ap;
            const double rr_next = r.squaredNorm();
            p = r + (rr_next / rr) * p;
            rr = rr_next;
        }
        codes.col(j) = a;
    }
    return codes;
}

}  // namespace wszsl
