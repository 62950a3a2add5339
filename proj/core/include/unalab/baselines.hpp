#pragma once

#include "unalab/bench.hpp"
#include "unalab/blr.hpp"
#include "unalab/net.hpp"

#include <functional>
#include <vector>

namespace unalab {

enum class EnsembleVariant { Vanilla, Bootstrap, Anchored };

struct EnsembleConfig {
    MlpSpec spec;
    int members = 5;
    EnsembleVariant variant = EnsembleVariant::Vanilla;
    double gamma = 0.0;         // l2 weight, Vanilla / Bootstrap
    double sigma_init2 = 1.0;   // Anchored init variance
    double sigma_prior2 = 1.0;  // Anchored anchor variance
    double sigma_eps2 = 1.0;    // Anchored noise variance; diag(Gamma) = eps2/prior2
    OptimizerConfig opt;

    void validate() const;
};

struct EnsembleModel {
    MlpSpec spec;
    std::vector<MlpParams> members;
    std::vector<MlpParams> anchors;  // Anchored only
};

/// Members differ by init stream (Vanilla), by an N-size resample with
/// replacement (Bootstrap), or by per-member anchor draws (Anchored).
EnsembleModel train_ensemble(const Dataset& data, const EnsembleConfig& cfg,
                             RngStream& stream);

/// Anchored member loss: (1/n)||y - f|| ^2 + (1/n)||Gamma^(1/2)(theta - anchor)||^2.
double anchored_loss(const MlpSpec& spec, const MlpParams& params, const MlpParams& anchor,
                     const Mat& X, const Vec& y, double sigma_eps2, double sigma_prior2);

/// Mean over members; epistemic variance is the population (1/M) variance of
/// member predictions. Ensembles carry no noise model: total = epistemic.
PredictiveDist ensemble_predict(const EnsembleModel& model, const Mat& X);

struct McdConfig {
    MlpSpec spec;
    double rate = 0.1;  // dropout probability p
    int passes = 50;    // T stochastic forward passes at prediction
    double gamma = 0.0;
    double sigma2 = 1.0;  // external noise variance added to total
    OptimizerConfig opt;

    void validate() const;
};

struct McdModel {
    MlpSpec spec;
    MlpParams params;
    double rate = 0.1;
    int passes = 50;
    double sigma2 = 1.0;
};

struct DropoutCache {
    std::vector<Mat> acts;    // pre-mask activations, acts[0] = X
    std::vector<Mat> masked;  // post-mask layer inputs
    std::vector<Mat> masks;   // keep masks already scaled by 1/(1-p)
};

/// Inverted dropout: per-unit Bernoulli(1-p) masks with 1/(1-p) rescaling.
Vec dropout_forward(const MlpSpec& spec, const MlpParams& params, const Mat& X,
                    double rate, RngStream& stream, DropoutCache* cache = nullptr);

MlpParams dropout_backward(const MlpSpec& spec, const MlpParams& params,
                           const DropoutCache& cache, const Vec& grad_out);

McdModel mcd_train(const Dataset& data, const McdConfig& cfg, RngStream& stream);

/// T stochastic passes with dropout kept on; total = epistemic + sigma2.
PredictiveDist mcd_predict(const McdModel& model, const Mat& X, RngStream& stream);

/// Power-iteration spectral norm estimate; rescales to norm c only when the
/// estimate exceeds c.
Mat spectral_normalize(const Mat& W, double c, int iters, RngStream& stream);

struct SngpConfig {
    MlpSpec spec;
    double c = 1.0;          // spectral norm bound
    int power_iters = 10;
    int rff = 200;           // D_L random Fourier features
    double lengthscale = 1.0;
    double alpha = 1.0;
    double sigma2 = 1.0;
    OptimizerConfig opt;

    void validate() const;
};

struct SngpModel {
    MlpSpec spec;
    MlpParams params;
    Mat W_L;  // rff x last hidden width, frozen
    Vec b_L;  // rff, frozen
    double c = 1.0;
    BlrPosterior head;
};

/// sqrt(2/D_L) cos(W_L h + b_L) rows for a matrix of body outputs h.
Mat rff_features(const Mat& W_L, const Vec& b_L, const Mat& H);

/// Body trained on MSE with spectral normalization after every step; RFF layer
/// drawn once (W_L ~ N(0, 1/lengthscale^2), b_L ~ U(0, 2pi)) and frozen;
/// analytic Bayesian linear head on the RFF features.
SngpModel train_sngp(const Dataset& data, const SngpConfig& cfg, RngStream& stream);

PredictiveDist sngp_predict(const SngpModel& model, const Mat& X);

struct HmcConfig {
    double step_size = 1e-2;  // eta
    int leapfrog = 10;        // L
    int iterations = 1000;    // T
    int burn_in = 0;
    int thin = 1;
    double mass = 1.0;        // scalar mass matrix
    double prior_sd = 1.0;    // sigma_theta, BNN prior
    double noise_sd = 1.0;    // sigma_y, BNN likelihood

    void validate() const;
};

/// Potential U(q); fills *grad with dU/dq when grad is non-null.
using PotentialFn = std::function<double(const Vec& q, Vec* grad)>;

/// Leapfrog integration in place: half momentum step, alternating full
/// position/momentum steps, closing half momentum step.
void leapfrog(const PotentialFn& U, Vec& q, Vec& p, double step_size, int steps,
              double mass);

/// T x dim trace. Momentum ~ N(0, mass I); accept when u < exp(dU + dK);
/// the current position is recorded every iteration, accepted or not.
/// Non-finite proposal energy rejects and continues.
Mat hmc_sample(const PotentialFn& U, const HmcConfig& cfg, const Vec& q0,
               RngStream& stream);

/// BNN posterior predictive via HMC over network weights: Gaussian prior
/// N(0, prior_sd^2) and likelihood N(f(x), noise_sd^2); predictive stats over
/// the thinned post-burn-in trace; total = epistemic + noise_sd^2.
PredictiveDist bnn_hmc_predict(const MlpSpec& spec, const Dataset& data,
                               const HmcConfig& cfg, RngStream& stream,
                               const Mat& Xstar);

}  // namespace unalab
