#pragma once

#include "unalab/numkit.hpp"

namespace unalab {

/// Per-query Gaussian predictive: mean, total variance (aleatoric +
/// epistemic), and the epistemic part alone. The common currency of every
/// model in this library.
struct PredictiveDist {
    Vec mean;
    Vec total_var;
    Vec epistemic_var;
};

/// Gaussian posterior over last-layer weights on a fixed feature basis.
/// Immutable after fit; prediction is pure.
struct BlrPosterior {
    Vec w_N;          // posterior mean
    Mat V_N;          // posterior covariance
    Mat L_precision;  // lower Cholesky factor of V_N^{-1}
    double alpha = 1.0;
    double sigma2 = 1.0;
};

/// Exact conjugate posterior: V_N^{-1} = (1/alpha) I + (1/sigma2) Phi^T Phi,
/// w_N = (1/sigma2) V_N Phi^T y. N = 0 recovers the prior.
BlrPosterior fit_blr(const Mat& Phi, const Vec& y, double alpha, double sigma2);

PredictiveDist predict_blr(const BlrPosterior& post, const Mat& PhiStar);

/// Log evidence log N(y; 0, alpha Phi Phi^T + sigma2 I), computed through the
/// feature-dimensional precision for stability.
double log_marginal(const Mat& Phi, const Vec& y, double alpha, double sigma2);

/// Mean over points of log N(y_i; mean_i, total_var_i).
double avg_log_likelihood(const PredictiveDist& dist, const Vec& y);

double rmse(const PredictiveDist& dist, const Vec& y);

}  // namespace unalab
