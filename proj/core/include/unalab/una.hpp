#pragma once

#include "unalab/bench.hpp"
#include "unalab/blr.hpp"
#include "unalab/gp.hpp"
#include "unalab/net.hpp"

namespace unalab {

struct DegenerateGradient : std::runtime_error {
    explicit DegenerateGradient(const std::string& what) : std::runtime_error(what) {}
};

/// Squared cosine similarity of two gradient vectors. Near-zero-norm inputs
/// throw DegenerateGradient; penalty code treats that pair as contributing 0.
double cos_sim_sq(const Vec& g, const Vec& h);

enum class ScheduleKind { Constant, Sqrt, Sigmoid, Tanh };

struct AnnealSchedule {
    ScheduleKind kind = ScheduleKind::Constant;
    double scale = 1.0;     // C
    int total_epochs = 1;   // N

    void validate() const;
};

/// lambda at epoch x: Constant -> C; Sqrt -> C sqrt(x/N);
/// Sigmoid -> C / (1 + exp(-6x/N + 3)); Tanh -> C (tanh(6x/N - 3) + 1) / 2.
double anneal(const AnnealSchedule& schedule, double epoch);

struct LunaConfig {
    MlpSpec spec;
    int num_heads = 2;       // M
    double gamma = 0.0;
    double alpha = 1.0;
    double sigma2 = 1.0;
    double sigma_perturb = 0.1;  // standard deviation of the FD perturbation
    AnnealSchedule schedule;
    OptimizerConfig opt;

    void validate() const;
};

/// Finite-difference input gradients of all M auxiliary heads at x, one shared
/// perturbation draw per dimension: (f_m(x + delta_d e_d) - f_m(x)) / delta_d,
/// delta_d ~ N(0, sigma_perturb^2). Returns M x D.
Mat fd_gradients(const MlpSpec& spec, const MlpParams& params, const Mat& heads,
                 const Vec& x, double sigma_perturb, RngStream& stream);

/// Sum over head pairs of mean-over-batch CosSim^2 of FD gradients.
/// Degenerate gradients contribute 0. normalized divides by C(M,2).
double diversity_penalty(const MlpSpec& spec, const MlpParams& params, const Mat& heads,
                         const Mat& Xbatch, double sigma_perturb, RngStream& stream,
                         bool normalized);

/// (1/M) sum_m log N(y; Phi w_m, sigma2 I) - gamma ||Psi||^2, where Psi stacks
/// the feature-layer parameters and all heads.
double fit_term(const MlpSpec& spec, const MlpParams& params, const Mat& heads,
                const Mat& X, const Vec& y, double sigma2, double gamma);

struct LunaResult {
    MlpParams params;
    Mat heads;  // feature_dim x M
    std::vector<double> fit_trace;
    std::vector<double> diverse_trace;  // raw pair-sum penalty per epoch
    std::vector<double> lambda_trace;
};

/// Gradient ascent on L_FIT - lambda_epoch * (2 n / (M (M-1))) * penalty,
/// n = batch size at each step; perturbation points are the minibatch inputs.
LunaResult train_luna(const Dataset& data, const LunaConfig& cfg, RngStream& stream);

BlrPosterior luna_posterior(const MlpSpec& spec, const MlpParams& params,
                            const Dataset& data, double alpha, double sigma2);

struct LunaRunStats {
    double validation_ll = 0.0;
    double validation_diversity = 0.0;
};

/// Keep runs with validation LL at or above the 90th percentile, then pick the
/// lowest validation diversity; ties resolve to the earliest run.
std::size_t select_luna_model(const std::vector<LunaRunStats>& runs);

struct ReferenceSet {
    Mat X;  // I x D reference inputs
    Mat G;  // I x M reference values, column m = g_m on the grid
};

/// Training inputs plus one Gaussian-perturbed copy each (2N x D).
Mat make_reference_points(const Mat& X, double sigma_x, RngStream& stream);

/// Reference functions drawn from a GP prior on the reference inputs.
ReferenceSet build_reference_set(const Mat& x_ref, const KernelSpec& prior, int M,
                                 RngStream& stream);
/// User-supplied reference values, validated against the input row count.
ReferenceSet build_reference_set(const Mat& x_ref, const Mat& values);

struct TunaConfig {
    MlpSpec spec;
    OptimizerConfig opt;
    bool freeze_features = false;  // heads-only training (used by tests)
};

struct TunaResult {
    MlpParams params;
    Mat heads;  // feature_dim x M
    std::vector<double> loss_trace;
};

/// Minimize (1/M) sum_m ||g_m - Phi_theta w_m||^2 jointly over theta and heads.
TunaResult train_tuna(const ReferenceSet& refs, const TunaConfig& cfg, RngStream& stream);

/// Append pseudo rows; the broadcast form copies one target across all M
/// columns (head agreement there pulls predictive uncertainty down).
ReferenceSet tuna_pseudo_augment(const ReferenceSet& refs, const Mat& pseudo_X,
                                 const Mat& pseudo_G);
ReferenceSet tuna_pseudo_augment(const ReferenceSet& refs, const Mat& pseudo_X,
                                 const Vec& broadcast_target);

BlrPosterior tuna_posterior(const MlpSpec& spec, const MlpParams& params,
                            const Dataset& data, double alpha, double sigma2);

}  // namespace unalab
