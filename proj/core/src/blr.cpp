#include "unalab/blr.hpp"

#include <cmath>

namespace unalab {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kMinSigma2 = 1e-12;

void check_inputs(const Mat& Phi, const Vec& y, double alpha, double sigma2) {
    if (alpha <= 0.0) throw std::invalid_argument("blr: alpha must be > 0");
    if (sigma2 < kMinSigma2) throw std::invalid_argument("blr: sigma2 must be >= 1e-12");
    if (Phi.rows() != y.size()) throw std::invalid_argument("blr: Phi/y row mismatch");
    if (!Phi.allFinite() || !y.allFinite()) throw std::invalid_argument("blr: non-finite input");
}

Mat precision_matrix(const Mat& Phi, double alpha, double sigma2) {
    Mat A = (Phi.transpose() * Phi) / sigma2;
    A.diagonal().array() += 1.0 / alpha;
    return A;
}

}  // namespace

BlrPosterior fit_blr(const Mat& Phi, const Vec& y, double alpha, double sigma2) {
    check_inputs(Phi, y, alpha, sigma2);
    const Eigen::Index m = Phi.cols();
    BlrPosterior post;
    post.alpha = alpha;
    post.sigma2 = sigma2;
    post.L_precision = cholesky(precision_matrix(Phi, alpha, sigma2));
    post.V_N = chol_solve(post.L_precision, Mat(Mat::Identity(m, m)));
    post.w_N = chol_solve(post.L_precision, Vec(Phi.transpose() * y / sigma2));
    return post;
}

PredictiveDist predict_blr(const BlrPosterior& post, const Mat& PhiStar) {
    if (PhiStar.cols() != post.w_N.size()) {
        throw std::invalid_argument("predict_blr: feature dimension mismatch");
    }
    PredictiveDist dist;
    dist.mean = PhiStar * post.w_N;
    // phi^T V_N phi via the Cholesky factor: || L^{-1} phi ||^2.
    Mat half = post.L_precision.triangularView<Eigen::Lower>().solve(
        Mat(PhiStar.transpose()));
    dist.epistemic_var = half.colwise().squaredNorm().transpose().cwiseMax(0.0);
    dist.total_var = dist.epistemic_var.array() + post.sigma2;
    return dist;
}

double log_marginal(const Mat& Phi, const Vec& y, double alpha, double sigma2) {
    check_inputs(Phi, y, alpha, sigma2);
    const double n = static_cast<double>(Phi.rows());
    const double m = static_cast<double>(Phi.cols());
    if (Phi.rows() == 0) return 0.0;

    const Mat L = cholesky(precision_matrix(Phi, alpha, sigma2));
    const Vec b = Phi.transpose() * y / sigma2;
    const Vec w_N = chol_solve(L, b);
    // log N(y; 0, alpha Phi Phi^T + sigma2 I) through the m-dim form:
    //   -n/2 log(2 pi sigma2) - m/2 log(alpha) - 1/2 log|A|
    //   - 1/(2 sigma2) y^T y + 1/2 b^T A^{-1} b
    return -0.5 * n * std::log(kTwoPi * sigma2) - 0.5 * m * std::log(alpha) -
           0.5 * chol_log_det(L) - 0.5 * y.squaredNorm() / sigma2 +
           0.5 * b.dot(w_N);
}

double avg_log_likelihood(const PredictiveDist& dist, const Vec& y) {
    if (y.size() == 0) throw std::invalid_argument("avg_log_likelihood: empty input");
    if (dist.mean.size() != y.size()) {
        throw std::invalid_argument("avg_log_likelihood: length mismatch");
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double var = dist.total_var[i];
        const double r = y[i] - dist.mean[i];
        total += -0.5 * std::log(kTwoPi * var) - 0.5 * r * r / var;
    }
    return total / static_cast<double>(y.size());
}

double rmse(const PredictiveDist& dist, const Vec& y) {
    if (y.size() == 0) throw std::invalid_argument("rmse: empty input");
    if (dist.mean.size() != y.size()) throw std::invalid_argument("rmse: length mismatch");
    return std::sqrt((dist.mean - y).squaredNorm() / static_cast<double>(y.size()));
}

}  // namespace unalab
