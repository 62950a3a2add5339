#include "unalab/nlm.hpp"

#include <cmath>

namespace unalab {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Mat select_rows(const Mat& X, const std::vector<int>& idx) {
    Mat out(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
    }
    return out;
}

Vec select_elems(const Vec& y, const std::vector<int>& idx) {
    Vec out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out[static_cast<Eigen::Index>(i)] = y[idx[i]];
    }
    return out;
}

}  // namespace

void NlmConfig::validate() const {
    if (alpha <= 0.0) throw std::invalid_argument("NlmConfig: alpha must be > 0");
    if (sigma2 <= 0.0) throw std::invalid_argument("NlmConfig: sigma2 must be > 0");
    if (gamma < 0.0) throw std::invalid_argument("NlmConfig: gamma must be >= 0");
    if (mode == NlmMode::MLE && gamma != 0.0) {
        throw std::invalid_argument("NlmConfig: MLE mode requires gamma == 0");
    }
    opt.validate();
}

double map_objective(const MlpSpec& spec, const MlpParams& params, const Mat& X,
                     const Vec& y, double sigma2, double gamma) {
    const Vec out = mlp_forward(spec, params, X);
    const double n = static_cast<double>(X.rows());
    const double resid = (y - out).squaredNorm();
    const Vec flat = pack_params(spec, params);
    return -0.5 * n * (kLog2Pi + std::log(sigma2)) - resid / (2.0 * sigma2) -
           gamma * flat.squaredNorm();
}

double marginal_objective(const MlpSpec& spec, const MlpParams& params, const Mat& X,
                          const Vec& y, double alpha, double sigma2, double gamma) {
    const Vec feat_flat = pack_feature_params(spec, params);
    const double penalty = gamma * feat_flat.squaredNorm();
    if (X.rows() == 0) return -penalty;
    const Mat Phi = mlp_features(spec, params, X);
    return log_marginal(Phi, y, alpha, sigma2) - penalty;
}

Mat log_marginal_grad_phi(const Mat& Phi, const Vec& y, double alpha, double sigma2) {
    // d/dPhi log N(y; 0, C) with C = alpha Phi Phi^T + sigma2 I:
    //   alpha (beta beta^T - C^{-1}) Phi, beta = C^{-1} y.
    Mat C = alpha * (Phi * Phi.transpose());
    C.diagonal().array() += sigma2;
    const Mat L = cholesky(C);
    const Vec beta = chol_solve(L, y);
    const Mat CinvPhi = chol_solve(L, Phi);
    return alpha * (beta * (beta.transpose() * Phi) - CinvPhi);
}

NlmResult train_nlm(const Dataset& data, const NlmConfig& cfg, RngStream& stream) {
    cfg.validate();
    const MlpSpec& spec = cfg.spec;
    if (data.dim() != spec.input_dim) throw std::invalid_argument("train_nlm: dim mismatch");
    RngStream init_stream = stream.split(0);
    RngStream train_stream = stream.split(1);
    const Vec init = pack_params(spec, mlp_init(spec, init_stream));

    BatchLoss loss;
    if (cfg.mode == NlmMode::Marginal) {
        loss = [&](const Vec& flat, const std::vector<int>& batch, int, Vec& grad) {
            MlpParams params = unpack_params(spec, flat);
            const Mat Xb = select_rows(data.X, batch);
            const Vec yb = select_elems(data.y, batch);
            ForwardCache cache;
            const Mat Phi = mlp_features(spec, params, Xb, &cache);
            const double ll = log_marginal(Phi, yb, cfg.alpha, cfg.sigma2);
            const Mat grad_phi = log_marginal_grad_phi(Phi, yb, cfg.alpha, cfg.sigma2);
            const MlpParams g = mlp_feature_backward(spec, params, cache, -grad_phi);
            grad = pack_params(spec, g);
            const Vec feat_flat = pack_feature_params(spec, params);
            // gamma penalty covers feature layers only; the head carries none.
            MlpParams pen = unpack_params(spec, Vec::Zero(flat.size()));
            unpack_feature_params(spec, 2.0 * cfg.gamma * feat_flat, pen);
            grad += pack_params(spec, pen);
            return -(ll - cfg.gamma * feat_flat.squaredNorm());
        };
    } else {
        const double gamma = cfg.mode == NlmMode::MLE ? 0.0 : cfg.gamma;
        loss = [&, gamma](const Vec& flat, const std::vector<int>& batch, int, Vec& grad) {
            MlpParams params = unpack_params(spec, flat);
            const Mat Xb = select_rows(data.X, batch);
            const Vec yb = select_elems(data.y, batch);
            ForwardCache cache;
            const Vec out = mlp_forward(spec, params, Xb, &cache);
            const double n = static_cast<double>(batch.size());
            const double resid = (yb - out).squaredNorm();
            const Vec grad_out = (out - yb) / cfg.sigma2;
            const MlpParams g = mlp_backward(spec, params, cache, grad_out);
            grad = pack_params(spec, g) + 2.0 * gamma * flat;
            return 0.5 * n * (kLog2Pi + std::log(cfg.sigma2)) +
                   resid / (2.0 * cfg.sigma2) + gamma * flat.squaredNorm();
        };
    }

    TrainResult res = train(init, data.n(), loss, cfg.opt, train_stream);
    NlmResult out;
    out.params = unpack_params(spec, res.params);
    out.loss_trace = std::move(res.loss_trace);
    return out;
}

BlrPosterior nlm_posterior(const MlpSpec& spec, const MlpParams& params,
                           const Dataset& data, double alpha, double sigma2) {
    const Mat Phi = mlp_features(spec, params, data.X);
    return fit_blr(Phi, data.y, alpha, sigma2);
}

MlpParams scale_last_layer(const MlpSpec& spec, const MlpParams& params, double c) {
    if (c <= 0.0) throw std::invalid_argument("scale_last_layer: c must be > 0");
    if (spec.hidden.empty()) throw std::invalid_argument("scale_last_layer: need a hidden layer");
    if (spec.activation != Activation::ReLU) {
        throw std::invalid_argument("scale_last_layer: requires ReLU (positive homogeneity)");
    }
    MlpParams out = params;
    const std::size_t last = spec.hidden.size() - 1;
    out.W[last] *= c;
    out.b[last] *= c;
    out.W.back() /= c;  // head weights; head bias untouched
    return out;
}

}  // namespace unalab
