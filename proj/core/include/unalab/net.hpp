#pragma once

#include "unalab/numkit.hpp"

#include <functional>
#include <vector>

namespace unalab {

enum class Activation { ReLU, Tanh };

/// Fixed-architecture MLP: input_dim -> hidden[0] -> ... -> hidden.back() -> 1.
struct MlpSpec {
    int input_dim = 1;
    std::vector<int> hidden;
    Activation activation = Activation::ReLU;

    MlpSpec() = default;
    MlpSpec(int input_dim_, std::vector<int> hidden_, Activation act);

    int num_layers() const { return static_cast<int>(hidden.size()) + 1; }
    int feature_dim() const;  // last hidden width + 1 (bias column)
    int num_params() const;
    int num_feature_params() const;  // excluding the output head
};

/// Per-layer weights and biases. W[l] maps layer l input to its output
/// (rows = out, cols = in); the last entry is the 1-output head.
struct MlpParams {
    std::vector<Mat> W;
    std::vector<Vec> b;
};

struct ForwardCache {
    std::vector<Mat> acts;  // acts[0] = X, acts[l+1] = activation output of layer l
};

MlpParams mlp_init(const MlpSpec& spec, RngStream& stream);

/// N x 1 network outputs. Fills the cache for a later backward pass.
Vec mlp_forward(const MlpSpec& spec, const MlpParams& params, const Mat& X,
                ForwardCache* cache = nullptr);

/// Feature basis: last hidden activations with a trailing column of ones,
/// N x (last hidden width + 1).
Mat mlp_features(const MlpSpec& spec, const MlpParams& params, const Mat& X,
                 ForwardCache* cache = nullptr);

/// Reverse-mode gradients of a scalar loss through the whole network,
/// given dLoss/dOutput per row. ReLU subgradient at 0 is 0.
MlpParams mlp_backward(const MlpSpec& spec, const MlpParams& params,
                       const ForwardCache& cache, const Vec& grad_out);

/// Reverse-mode gradients through the feature layers only, given
/// dLoss/dFeatures (N x feature_dim; the bias column is ignored).
/// Head gradients come back zero.
MlpParams mlp_feature_backward(const MlpSpec& spec, const MlpParams& params,
                               const ForwardCache& cache, const Mat& grad_features);

// Flat parameter vector <-> structured params. Order: (W0, b0, W1, b1, ...),
// each W row-major.
Vec pack_params(const MlpSpec& spec, const MlpParams& params);
MlpParams unpack_params(const MlpSpec& spec, const Vec& flat);

/// Flatten only the feature layers (everything but the head).
Vec pack_feature_params(const MlpSpec& spec, const MlpParams& params);
void unpack_feature_params(const MlpSpec& spec, const Vec& flat, MlpParams& params);

enum class OptKind { GD, SGD, Adam };

struct OptimizerConfig {
    OptKind kind = OptKind::Adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch_size = 0;  // 0 = full batch
    int epochs = 0;

    void validate() const;
};

struct OptimizerState {
    int t = 0;
    Vec m;  // Adam first moment
    Vec v;  // Adam second moment
};

/// One descent step in place: theta <- theta - eta * g (GD/SGD), or the
/// bias-corrected Adam update.
void optimizer_step(OptimizerState& state, Vec& params, const Vec& grad,
                    const OptimizerConfig& cfg);

/// Minibatch loss: fills grad (same size as params) and returns the loss over
/// the given row indices. `epoch` is the zero-based epoch counter.
using BatchLoss = std::function<double(const Vec& params, const std::vector<int>& batch,
                                       int epoch, Vec& grad)>;

/// Called after every optimizer step (e.g. spectral normalization).
using StepHook = std::function<void(Vec& params, int step)>;

struct TrainResult {
    Vec params;
    std::vector<double> loss_trace;  // mean batch loss per epoch
};

/// Deterministic training loop. SGD/minibatch order is a pure function of the
/// stream; the final short batch is used, not dropped. Aborts on non-finite
/// loss with the epoch index in the message.
TrainResult train(Vec init, int n_data, const BatchLoss& loss,
                  const OptimizerConfig& cfg, RngStream& stream,
                  const StepHook& hook = nullptr);

/// Fisher-Yates shuffle of 0..n-1 driven by the stream.
std::vector<int> shuffled_indices(int n, RngStream& stream);

}  // namespace unalab
