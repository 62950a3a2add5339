#include "unalab/numkit.hpp"

#include <cmath>

namespace unalab {

namespace {

void check_square_symmetric(const Mat& a) {
    if (a.rows() != a.cols()) {
        throw std::invalid_argument("cholesky: matrix must be square");
    }
    if (a.size() > 0) {
        const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
        const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
        if (asym > 1e-10 * scale) {
            throw std::invalid_argument("cholesky: matrix not symmetric within 1e-10");
        }
    }
}

}  // namespace

Mat cholesky(const Mat& a) {
    check_square_symmetric(a);
    const Eigen::Index n = a.rows();
    if (n == 0) return Mat(0, 0);

    const double mean_diag = a.diagonal().cwiseAbs().mean();
    const double jitters[] = {0.0, 1e-10, 1e-8, 1e-6};
    for (double j : jitters) {
        Mat work = a;
        if (j > 0.0) work.diagonal().array() += j * std::max(mean_diag, 1e-300);
        Eigen::LLT<Mat> llt(work);
        if (llt.info() == Eigen::Success) {
            return llt.matrixL();
        }
    }
    throw NotPositiveDefinite("cholesky: matrix not positive definite after jitter ladder");
}

Mat chol_solve(const Mat& L, const Mat& b) {
    Mat x = L.triangularView<Eigen::Lower>().solve(b);
    return L.transpose().triangularView<Eigen::Upper>().solve(x);
}

Vec chol_solve(const Mat& L, const Vec& b) {
    Vec x = L.triangularView<Eigen::Lower>().solve(b);
    return L.transpose().triangularView<Eigen::Upper>().solve(x);
}

double chol_log_det(const Mat& L) {
    return 2.0 * L.diagonal().array().log().sum();
}

Mat solve_psd(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows()) {
        throw std::invalid_argument("solve_psd: dimension mismatch");
    }
    return chol_solve(cholesky(a), b);
}

Vec solve_psd(const Mat& a, const Vec& b) {
    if (a.rows() != b.rows()) {
        throw std::invalid_argument("solve_psd: dimension mismatch");
    }
    return chol_solve(cholesky(a), b);
}

namespace {

// SplitMix64 finalizer. Fixed constants, identical output everywhere.
std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

RngStream RngStream::split(std::uint64_t child) const {
    return RngStream(mix64(seed_ ^ mix64(child + 0xda942042e4dd58b5ULL)));
}

std::uint64_t RngStream::next_u64() {
    return mix64(seed_ + 0x9e3779b97f4a7c15ULL * ++counter_);
}

double RngStream::next_uniform() {
    // 53 random bits into [0, 1).
    return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
}

double RngStream::next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_uniform();
}

double RngStream::next_normal() {
    double u1 = next_uniform();
    const double u2 = next_uniform();
    if (u1 <= 0.0) u1 = 1.0 / 9007199254740992.0;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

int RngStream::next_index(int n) {
    if (n <= 0) throw std::invalid_argument("next_index: n must be positive");
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
}

Vec RngStream::standard_normal(int n) {
    if (n < 0) throw std::invalid_argument("standard_normal: n must be nonnegative");
    Vec out(n);
    for (int i = 0; i < n; ++i) out[i] = next_normal();
    return out;
}

Vec RngStream::uniform(double lo, double hi, int n) {
    if (n < 0) throw std::invalid_argument("uniform: n must be nonnegative");
    Vec out(n);
    for (int i = 0; i < n; ++i) out[i] = next_uniform(lo, hi);
    return out;
}

}  // namespace unalab
