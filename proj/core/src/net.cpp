#include "unalab/net.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace unalab {

MlpSpec::MlpSpec(int input_dim_, std::vector<int> hidden_, Activation act)
    : input_dim(input_dim_), hidden(std::move(hidden_)), activation(act) {
    if (input_dim < 1) throw std::invalid_argument("MlpSpec: input_dim must be >= 1");
    for (int w : hidden) {
        if (w < 1) throw std::invalid_argument("MlpSpec: hidden widths must be >= 1");
    }
}

int MlpSpec::feature_dim() const {
    if (hidden.empty()) throw std::invalid_argument("MlpSpec: features need >= 1 hidden layer");
    return hidden.back() + 1;
}

namespace {

std::vector<std::pair<int, int>> layer_shapes(const MlpSpec& spec) {
    std::vector<std::pair<int, int>> shapes;
    int in = spec.input_dim;
    for (int w : spec.hidden) {
        shapes.emplace_back(w, in);
        in = w;
    }
    shapes.emplace_back(1, in);
    return shapes;
}

Mat apply_act(const Mat& z, Activation act) {
    if (act == Activation::ReLU) return z.cwiseMax(0.0);
    return z.array().tanh().matrix();
}

// Derivative of the activation expressed through its output.
Mat act_deriv_from_output(const Mat& a, Activation act) {
    if (act == Activation::ReLU) {
        return (a.array() > 0.0).cast<double>().matrix();
    }
    return (1.0 - a.array().square()).matrix();
}

}  // namespace

int MlpSpec::num_params() const {
    int n = 0;
    for (auto [r, c] : layer_shapes(*this)) n += r * c + r;
    return n;
}

int MlpSpec::num_feature_params() const {
    auto shapes = layer_shapes(*this);
    int n = 0;
    for (std::size_t l = 0; l + 1 < shapes.size(); ++l) {
        n += shapes[l].first * shapes[l].second + shapes[l].first;
    }
    return n;
}

MlpParams mlp_init(const MlpSpec& spec, RngStream& stream) {
    MlpParams p;
    const double gain = spec.activation == Activation::ReLU ? 2.0 : 1.0;
    for (auto [rows, cols] : layer_shapes(spec)) {
        const double sd = std::sqrt(gain / cols);
        Mat W(rows, cols);
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < cols; ++j) W(i, j) = sd * stream.next_normal();
        }
        p.W.push_back(std::move(W));
        p.b.push_back(Vec::Zero(rows));
    }
    return p;
}

Vec mlp_forward(const MlpSpec& spec, const MlpParams& params, const Mat& X,
                ForwardCache* cache) {
    if (X.cols() != spec.input_dim) {
        throw std::invalid_argument("mlp_forward: input dimension mismatch");
    }
    const int L = spec.num_layers();
    Mat a = X;
    if (cache) {
        cache->acts.clear();
        cache->acts.push_back(a);
    }
    for (int l = 0; l < L - 1; ++l) {
        Mat z = (a * params.W[l].transpose()).rowwise() + params.b[l].transpose();
        a = apply_act(z, spec.activation);
        if (cache) cache->acts.push_back(a);
    }
    Mat out = (a * params.W[L - 1].transpose()).rowwise() + params.b[L - 1].transpose();
    if (cache) cache->acts.push_back(out);
    return out.col(0);
}

Mat mlp_features(const MlpSpec& spec, const MlpParams& params, const Mat& X,
                 ForwardCache* cache) {
    const int L = spec.num_layers();
    if (L < 2) throw std::invalid_argument("mlp_features: need >= 1 hidden layer");
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    mlp_forward(spec, params, X, &c);
    const Mat& h = c.acts[L - 1];
    Mat phi(h.rows(), h.cols() + 1);
    phi.leftCols(h.cols()) = h;
    phi.col(h.cols()).setOnes();
    return phi;
}

namespace {

MlpParams zero_like(const MlpSpec& spec) {
    MlpParams g;
    for (auto [r, c] : layer_shapes(spec)) {
        g.W.push_back(Mat::Zero(r, c));
        g.b.push_back(Vec::Zero(r));
    }
    return g;
}

// Backprop from an upstream gradient on the activations of hidden layer
// `top` (1-based index into cache.acts), down to the inputs.
void backprop_hidden(const MlpSpec& spec, const MlpParams& params,
                     const ForwardCache& cache, Mat delta, int top, MlpParams& grads) {
    for (int l = top - 1; l >= 0; --l) {
        delta = delta.cwiseProduct(act_deriv_from_output(cache.acts[l + 1], spec.activation));
        grads.W[l] += delta.transpose() * cache.acts[l];
        grads.b[l] += delta.colwise().sum().transpose();
        if (l > 0) delta = delta * params.W[l];
    }
}

}  // namespace

MlpParams mlp_backward(const MlpSpec& spec, const MlpParams& params,
                       const ForwardCache& cache, const Vec& grad_out) {
    const int L = spec.num_layers();
    MlpParams grads = zero_like(spec);
    const Mat& last_hidden = cache.acts[L - 1];
    grads.W[L - 1] = grad_out.transpose() * last_hidden;
    grads.b[L - 1] = Vec::Constant(1, grad_out.sum());
    if (L > 1) {
        Mat delta = grad_out * params.W[L - 1];
        backprop_hidden(spec, params, cache, std::move(delta), L - 1, grads);
    }
    return grads;
}

MlpParams mlp_feature_backward(const MlpSpec& spec, const MlpParams& params,
                               const ForwardCache& cache, const Mat& grad_features) {
    const int L = spec.num_layers();
    if (L < 2) throw std::invalid_argument("mlp_feature_backward: need >= 1 hidden layer");
    MlpParams grads = zero_like(spec);
    // Drop the bias column; it carries no parameter dependence.
    Mat delta = grad_features.leftCols(grad_features.cols() - 1);
    backprop_hidden(spec, params, cache, std::move(delta), L - 1, grads);
    return grads;
}

Vec pack_params(const MlpSpec& spec, const MlpParams& params) {
    Vec flat(spec.num_params());
    int k = 0;
    for (std::size_t l = 0; l < params.W.size(); ++l) {
        for (int i = 0; i < params.W[l].rows(); ++i) {
            for (int j = 0; j < params.W[l].cols(); ++j) flat[k++] = params.W[l](i, j);
        }
        for (int i = 0; i < params.b[l].size(); ++i) flat[k++] = params.b[l][i];
    }
    return flat;
}

MlpParams unpack_params(const MlpSpec& spec, const Vec& flat) {
    if (flat.size() != spec.num_params()) {
        throw std::invalid_argument("unpack_params: size mismatch");
    }
    MlpParams p = zero_like(spec);
    int k = 0;
    for (std::size_t l = 0; l < p.W.size(); ++l) {
        for (int i = 0; i < p.W[l].rows(); ++i) {
            for (int j = 0; j < p.W[l].cols(); ++j) p.W[l](i, j) = flat[k++];
        }
        for (int i = 0; i < p.b[l].size(); ++i) p.b[l][i] = flat[k++];
    }
    return p;
}

Vec pack_feature_params(const MlpSpec& spec, const MlpParams& params) {
    Vec flat(spec.num_feature_params());
    int k = 0;
    const int L = spec.num_layers();
    for (int l = 0; l < L - 1; ++l) {
        for (int i = 0; i < params.W[l].rows(); ++i) {
            for (int j = 0; j < params.W[l].cols(); ++j) flat[k++] = params.W[l](i, j);
        }
        for (int i = 0; i < params.b[l].size(); ++i) flat[k++] = params.b[l][i];
    }
    return flat;
}

void unpack_feature_params(const MlpSpec& spec, const Vec& flat, MlpParams& params) {
    if (flat.size() != spec.num_feature_params()) {
        throw std::invalid_argument("unpack_feature_params: size mismatch");
    }
    int k = 0;
    const int L = spec.num_layers();
    for (int l = 0; l < L - 1; ++l) {
        for (int i = 0; i < params.W[l].rows(); ++i) {
            for (int j = 0; j < params.W[l].cols(); ++j) params.W[l](i, j) = flat[k++];
        }
        for (int i = 0; i < params.b[l].size(); ++i) params.b[l][i] = flat[k++];
    }
}

void OptimizerConfig::validate() const {
    if (learning_rate <= 0.0) throw std::invalid_argument("OptimizerConfig: learning_rate must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw std::invalid_argument("OptimizerConfig: betas must lie in [0, 1)");
    }
    if (eps <= 0.0) throw std::invalid_argument("OptimizerConfig: eps must be > 0");
    if (epochs < 0) throw std::invalid_argument("OptimizerConfig: epochs must be >= 0");
    if (batch_size < 0) throw std::invalid_argument("OptimizerConfig: batch_size must be >= 0");
}

void optimizer_step(OptimizerState& state, Vec& params, const Vec& grad,
                    const OptimizerConfig& cfg) {
    if (params.size() != grad.size()) {
        throw std::invalid_argument("optimizer_step: shape mismatch");
    }
    if (cfg.kind != OptKind::Adam) {
        params -= cfg.learning_rate * grad;
        return;
    }
    if (state.m.size() != params.size()) {
        state.m = Vec::Zero(params.size());
        state.v = Vec::Zero(params.size());
        state.t = 0;
    }
    ++state.t;
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(cfg.beta1, state.t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, state.t);
    params.array() -= cfg.learning_rate * (state.m.array() / bc1) /
                      ((state.v.array() / bc2).sqrt() + cfg.eps);
}

std::vector<int> shuffled_indices(int n, RngStream& stream) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = n - 1; i > 0; --i) {
        std::swap(idx[i], idx[stream.next_index(i + 1)]);
    }
    return idx;
}

TrainResult train(Vec init, int n_data, const BatchLoss& loss,
                  const OptimizerConfig& cfg, RngStream& stream,
                  const StepHook& hook) {
    cfg.validate();
    TrainResult result;
    result.params = std::move(init);
    result.loss_trace.reserve(cfg.epochs);

    OptimizerState state;
    Vec grad(result.params.size());
    std::vector<int> full(n_data);
    std::iota(full.begin(), full.end(), 0);

    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        int batches = 0;
        if (cfg.batch_size <= 0 || cfg.batch_size >= n_data) {
            epoch_loss = loss(result.params, full, epoch, grad);
            optimizer_step(state, result.params, grad, cfg);
            if (hook) hook(result.params, step);
            ++step;
            batches = 1;
        } else {
            std::vector<int> order = shuffled_indices(n_data, stream);
            for (int start = 0; start < n_data; start += cfg.batch_size) {
                const int end = std::min(start + cfg.batch_size, n_data);
                std::vector<int> batch(order.begin() + start, order.begin() + end);
                epoch_loss += loss(result.params, batch, epoch, grad);
                optimizer_step(state, result.params, grad, cfg);
                if (hook) hook(result.params, step);
                ++step;
                ++batches;
            }
        }
        epoch_loss /= std::max(batches, 1);
        if (!std::isfinite(epoch_loss)) {
            std::ostringstream msg;
            msg << "train: non-finite loss at epoch " << epoch;
            throw std::runtime_error(msg.str());
        }
        result.loss_trace.push_back(epoch_loss);
    }
    return result;
}

}  // namespace unalab
