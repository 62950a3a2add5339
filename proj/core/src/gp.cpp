#include "unalab/gp.hpp"

#include <cmath>

namespace unalab {

KernelTerm KernelTerm::rbf(double amplitude, double length_scale) {
    return {Type::RBF, amplitude, length_scale, 0.0};
}

KernelTerm KernelTerm::matern52(double amplitude, double length_scale) {
    return {Type::Matern52, amplitude, length_scale, 0.0};
}

KernelTerm KernelTerm::white(double noise_level) {
    return {Type::White, 0.0, 0.0, noise_level};
}

void KernelSpec::validate() const {
    if (terms.empty()) throw std::invalid_argument("KernelSpec: no terms");
    for (const auto& t : terms) {
        if (t.type == KernelTerm::Type::White) {
            if (t.noise_level <= 0.0) {
                throw std::invalid_argument("KernelSpec: White noise level must be > 0");
            }
        } else if (t.amplitude <= 0.0 || t.length_scale <= 0.0) {
            throw std::invalid_argument("KernelSpec: amplitude and length scale must be > 0");
        }
    }
}

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double term_value(const KernelTerm& t, const Vec& a, const Vec& b) {
    switch (t.type) {
        case KernelTerm::Type::RBF: {
            const double d2 = (a - b).squaredNorm();
            return t.amplitude * t.amplitude *
                   std::exp(-d2 / (2.0 * t.length_scale * t.length_scale));
        }
        case KernelTerm::Type::Matern52: {
            const double r = (a - b).norm();
            const double s = std::sqrt(5.0) * r / t.length_scale;
            return t.amplitude * t.amplitude *
                   (1.0 + s + s * s / 3.0) * std::exp(-s);
        }
        case KernelTerm::Type::White:
            // Exact coordinate equality, not a tolerance.
            return a == b ? t.noise_level : 0.0;
    }
    return 0.0;
}

}  // namespace

Mat kernel_matrix(const KernelSpec& spec, const Mat& X, const Mat& Xp) {
    spec.validate();
    if (X.cols() != Xp.cols()) throw std::invalid_argument("kernel_matrix: dim mismatch");
    Mat K = Mat::Zero(X.rows(), Xp.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const Vec a = X.row(i);
        for (Eigen::Index j = 0; j < Xp.rows(); ++j) {
            const Vec b = Xp.row(j);
            double v = 0.0;
            for (const auto& t : spec.terms) v += term_value(t, a, b);
            K(i, j) = v;
        }
    }
    return K;
}

GpPosterior gp_fit(const Mat& X, const Vec& y, const KernelSpec& spec, double noise2) {
    if (X.rows() < 1) throw std::invalid_argument("gp_fit: need N >= 1");
    if (X.rows() != y.size()) throw std::invalid_argument("gp_fit: X/y mismatch");
    GpPosterior post;
    post.X = X;
    post.y = y;
    post.spec = spec;
    post.noise2 = noise2;
    Mat K = kernel_matrix(spec, X, X);
    K.diagonal().array() += noise2;
    post.L = cholesky(K);
    post.alpha = chol_solve(post.L, y);
    return post;
}

PredictiveDist gp_predict(const GpPosterior& post, const Mat& Xstar) {
    const Mat Kxs = kernel_matrix(post.spec, post.X, Xstar);  // N x Q
    PredictiveDist dist;
    dist.mean = Kxs.transpose() * post.alpha;
    const Mat half = post.L.triangularView<Eigen::Lower>().solve(Kxs);
    dist.epistemic_var = Vec(Xstar.rows());
    for (Eigen::Index q = 0; q < Xstar.rows(); ++q) {
        const Vec x = Xstar.row(q);
        double prior = 0.0;
        for (const auto& t : post.spec.terms) prior += term_value(t, x, x);
        dist.epistemic_var[q] = std::max(prior - half.col(q).squaredNorm(), 0.0);
    }
    dist.total_var = dist.epistemic_var.array() + post.noise2;
    return dist;
}

double gp_log_marginal(const Mat& X, const Vec& y, const KernelSpec& spec, double noise2) {
    GpPosterior post = gp_fit(X, y, spec, noise2);
    const double n = static_cast<double>(X.rows());
    return -0.5 * y.dot(post.alpha) - 0.5 * chol_log_det(post.L) -
           0.5 * n * std::log(kTwoPi);
}

Mat gp_prior_sample(const KernelSpec& spec, const Mat& Xgrid, int num_draws,
                    RngStream& stream) {
    if (Xgrid.rows() < 1) throw std::invalid_argument("gp_prior_sample: empty grid");
    if (num_draws < 1) throw std::invalid_argument("gp_prior_sample: need >= 1 draw");
    Mat K = kernel_matrix(spec, Xgrid, Xgrid);
    K.diagonal().array() += 1e-10 * std::max(K.diagonal().mean(), 1.0);
    const Mat L = cholesky(K);
    Mat draws(Xgrid.rows(), num_draws);
    for (int m = 0; m < num_draws; ++m) {
        draws.col(m) = L * stream.standard_normal(static_cast<int>(Xgrid.rows()));
    }
    return draws;
}

KernelSpec gp_grid_search(const Mat& X, const Vec& y,
                          const std::vector<KernelSpec>& candidates, double noise2) {
    if (candidates.empty()) throw std::invalid_argument("gp_grid_search: no candidates");
    bool found = false;
    double best = 0.0;
    std::size_t best_idx = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        double ll;
        try {
            ll = gp_log_marginal(X, y, candidates[i], noise2);
        } catch (const NotPositiveDefinite&) {
            continue;
        }
        if (!found || ll > best) {
            found = true;
            best = ll;
            best_idx = i;
        }
    }
    if (!found) throw NotPositiveDefinite("gp_grid_search: every candidate failed");
    return candidates[best_idx];
}

}  // namespace unalab
