#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace unalab {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct NotPositiveDefinite : std::runtime_error {
    explicit NotPositiveDefinite(const std::string& what) : std::runtime_error(what) {}
};

/// Lower-triangular Cholesky factor of a symmetric PSD matrix.
///
/// Near-singular matrices get a jitter ladder (1e-10, 1e-8, 1e-6 times the
/// mean diagonal) before NotPositiveDefinite is thrown. Gram matrices of wide
/// feature layers are routinely rank-deficient, so the ladder is part of the
/// contract rather than an afterthought.
Mat cholesky(const Mat& a);

/// Solve a*x = b for symmetric PSD a via Cholesky. b may be a vector or matrix.
Mat solve_psd(const Mat& a, const Mat& b);
Vec solve_psd(const Mat& a, const Vec& b);

/// Triangular solves against a precomputed lower Cholesky factor.
Mat chol_solve(const Mat& L, const Mat& b);
Vec chol_solve(const Mat& L, const Vec& b);

/// log det(A) from its lower Cholesky factor.
double chol_log_det(const Mat& L);

/// Counter-based splittable random stream.
///
/// The sequence is a pure function of (seed, counter), so identical seeds give
/// byte-identical draw sequences on every platform. Child streams from split()
/// mix the child index into the seed through a fixed 64-bit hash and are
/// independent of the parent's position.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed) {}

    RngStream split(std::uint64_t child) const;

    std::uint64_t next_u64();

    /// Uniform draw in [0, 1).
    double next_uniform();
    double next_uniform(double lo, double hi);

    /// Standard normal via the Box-Muller transform of two uniforms.
    /// No pair caching: each draw consumes exactly two uniforms.
    double next_normal();

    /// Uniform integer in [0, n). n must be positive.
    int next_index(int n);

    Vec standard_normal(int n);
    Vec uniform(double lo, double hi, int n);

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace unalab
