#pragma once

#include "unalab/bench.hpp"
#include "unalab/blr.hpp"
#include "unalab/net.hpp"

namespace unalab {

enum class NlmMode { MLE, MAP, Marginal };

struct NlmConfig {
    MlpSpec spec;
    double alpha = 1.0;
    double sigma2 = 1.0;
    double gamma = 0.0;
    OptimizerConfig opt;
    NlmMode mode = NlmMode::MAP;

    void validate() const;
};

/// MAP objective over the full deterministic network (feature layers plus its
/// own output head): Gaussian log-likelihood of the network outputs minus
/// gamma * ||theta_full||^2.
double map_objective(const MlpSpec& spec, const MlpParams& params, const Mat& X,
                     const Vec& y, double sigma2, double gamma);

/// Log evidence of the feature basis minus gamma * ||feature-layer params||^2.
/// The head carries no weight here (it is integrated out).
double marginal_objective(const MlpSpec& spec, const MlpParams& params, const Mat& X,
                          const Vec& y, double alpha, double sigma2, double gamma);

/// d log_marginal / d Phi for gradient training on the marginal objective.
Mat log_marginal_grad_phi(const Mat& Phi, const Vec& y, double alpha, double sigma2);

struct NlmResult {
    MlpParams params;
    std::vector<double> loss_trace;
};

NlmResult train_nlm(const Dataset& data, const NlmConfig& cfg, RngStream& stream);

/// Step 2: discard the network's own head and fit the Bayesian layer on the
/// learned features.
BlrPosterior nlm_posterior(const MlpSpec& spec, const MlpParams& params,
                           const Dataset& data, double alpha, double sigma2);

/// Scale the last feature layer by c and divide the head by c. Network
/// outputs are unchanged (ReLU positive homogeneity); the feature basis grows
/// by a factor of c.
MlpParams scale_last_layer(const MlpSpec& spec, const MlpParams& params, double c);

}  // namespace unalab
