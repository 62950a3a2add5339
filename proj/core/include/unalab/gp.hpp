#pragma once

#include "unalab/blr.hpp"
#include "unalab/numkit.hpp"

#include <vector>

namespace unalab {

struct KernelTerm {
    enum class Type { RBF, Matern52, White };
    Type type = Type::RBF;
    double amplitude = 1.0;     // RBF / Matern52
    double length_scale = 1.0;  // RBF / Matern52
    double noise_level = 1.0;   // White

    static KernelTerm rbf(double amplitude, double length_scale);
    static KernelTerm matern52(double amplitude, double length_scale);
    static KernelTerm white(double noise_level);
};

/// Sum-of-terms kernel. All hyperparameters must be positive.
struct KernelSpec {
    std::vector<KernelTerm> terms;

    void validate() const;
};

/// N x M cross-kernel matrix. The White term contributes only on exactly
/// equal coordinates (it is meant to hit the training diagonal).
Mat kernel_matrix(const KernelSpec& spec, const Mat& X, const Mat& Xp);

/// Exact GP posterior with zero prior mean. Callers normalize their data.
struct GpPosterior {
    Mat X;
    Vec y;
    KernelSpec spec;
    double noise2 = 0.0;
    Mat L;      // Cholesky of K + noise2 I
    Vec alpha;  // (K + noise2 I)^{-1} y
};

GpPosterior gp_fit(const Mat& X, const Vec& y, const KernelSpec& spec, double noise2);

/// Predictive mean / variance per query row; epistemic = posterior k(x, x),
/// total = epistemic + noise2.
PredictiveDist gp_predict(const GpPosterior& post, const Mat& Xstar);

double gp_log_marginal(const Mat& X, const Vec& y, const KernelSpec& spec, double noise2);

/// I x M matrix of independent draws from the zero-mean GP prior on the grid.
Mat gp_prior_sample(const KernelSpec& spec, const Mat& Xgrid, int num_draws,
                    RngStream& stream);

/// Argmax of the log marginal likelihood over candidate specs. Ties (and
/// exact duplicates) resolve to the first-listed candidate.
KernelSpec gp_grid_search(const Mat& X, const Vec& y,
                          const std::vector<KernelSpec>& candidates, double noise2);

}  // namespace unalab
