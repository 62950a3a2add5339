#include "unalab/baselines.hpp"

#include <cmath>

namespace unalab {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

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

MlpParams gaussian_params(const MlpSpec& spec, double sd, RngStream& stream) {
    return unpack_params(spec, Vec(sd * stream.standard_normal(spec.num_params())));
}

MlpParams train_one_member(const Dataset& data, const MlpSpec& spec,
                           const OptimizerConfig& opt, double gamma,
                           const MlpParams* anchor, double gamma_anchor,
                           const Vec& init_flat, RngStream& train_stream) {
    const Vec anchor_flat = anchor ? pack_params(spec, *anchor) : Vec();
    BatchLoss loss = [&](const Vec& flat, const std::vector<int>& batch, int, Vec& grad) {
        const MlpParams params = unpack_params(spec, flat);
        const Mat Xb = select_rows(data.X, batch);
        const Vec yb = select_elems(data.y, batch);
        const double n = static_cast<double>(batch.size());
        ForwardCache cache;
        const Vec out = mlp_forward(spec, params, Xb, &cache);
        const Vec r = out - yb;
        double value = r.squaredNorm() / n;
        const MlpParams g = mlp_backward(spec, params, cache, Vec(2.0 * r / n));
        grad = pack_params(spec, g);
        if (anchor) {
            const Vec d = flat - anchor_flat;
            value += gamma_anchor * d.squaredNorm() / n;
            grad += (2.0 * gamma_anchor / n) * d;
        } else if (gamma > 0.0) {
            value += gamma * flat.squaredNorm();
            grad += 2.0 * gamma * flat;
        }
        return value;
    };
    TrainResult res = train(init_flat, data.n(), loss, opt, train_stream);
    return unpack_params(spec, res.params);
}

}  // namespace

void EnsembleConfig::validate() const {
    if (members < 2) throw std::invalid_argument("EnsembleConfig: need >= 2 members");
    if (gamma < 0.0) throw std::invalid_argument("EnsembleConfig: gamma must be >= 0");
    if (sigma_init2 <= 0.0 || sigma_prior2 <= 0.0 || sigma_eps2 <= 0.0) {
        throw std::invalid_argument("EnsembleConfig: variances must be > 0");
    }
    opt.validate();
}

double anchored_loss(const MlpSpec& spec, const MlpParams& params, const MlpParams& anchor,
                     const Mat& X, const Vec& y, double sigma_eps2, double sigma_prior2) {
    const double n = static_cast<double>(X.rows());
    const Vec out = mlp_forward(spec, params, X);
    const Vec d = pack_params(spec, params) - pack_params(spec, anchor);
    const double gamma = sigma_eps2 / sigma_prior2;
    return (y - out).squaredNorm() / n + gamma * d.squaredNorm() / n;
}

EnsembleModel train_ensemble(const Dataset& data, const EnsembleConfig& cfg,
                             RngStream& stream) {
    cfg.validate();
    if (data.dim() != cfg.spec.input_dim) {
        throw std::invalid_argument("train_ensemble: dim mismatch");
    }
    EnsembleModel model;
    model.spec = cfg.spec;
    for (int m = 0; m < cfg.members; ++m) {
        RngStream member = stream.split(static_cast<std::uint64_t>(m));
        RngStream init_stream = member.split(0);
        RngStream train_stream = member.split(1);
        RngStream data_stream = member.split(2);
        switch (cfg.variant) {
            case EnsembleVariant::Vanilla: {
                const Vec init = pack_params(cfg.spec, mlp_init(cfg.spec, init_stream));
                model.members.push_back(train_one_member(
                    data, cfg.spec, cfg.opt, cfg.gamma, nullptr, 0.0, init, train_stream));
                break;
            }
            case EnsembleVariant::Bootstrap: {
                Dataset resample;
                resample.X = Mat(data.n(), data.dim());
                resample.y = Vec(data.n());
                for (int i = 0; i < data.n(); ++i) {
                    const int j = data_stream.next_index(data.n());
                    resample.X.row(i) = data.X.row(j);
                    resample.y[i] = data.y[j];
                }
                const Vec init = pack_params(cfg.spec, mlp_init(cfg.spec, init_stream));
                model.members.push_back(train_one_member(resample, cfg.spec, cfg.opt,
                                                         cfg.gamma, nullptr, 0.0, init,
                                                         train_stream));
                break;
            }
            case EnsembleVariant::Anchored: {
                const MlpParams anchor =
                    gaussian_params(cfg.spec, std::sqrt(cfg.sigma_prior2), data_stream);
                const Vec init =
                    std::sqrt(cfg.sigma_init2) * init_stream.standard_normal(cfg.spec.num_params());
                model.anchors.push_back(anchor);
                model.members.push_back(train_one_member(
                    data, cfg.spec, cfg.opt, 0.0, &anchor,
                    cfg.sigma_eps2 / cfg.sigma_prior2, init, train_stream));
                break;
            }
        }
    }
    return model;
}

PredictiveDist ensemble_predict(const EnsembleModel& model, const Mat& X) {
    const int M = static_cast<int>(model.members.size());
    if (M < 2) throw std::invalid_argument("ensemble_predict: need >= 2 members");
    Mat preds(X.rows(), M);
    for (int m = 0; m < M; ++m) {
        preds.col(m) = mlp_forward(model.spec, model.members[m], X);
    }
    PredictiveDist dist;
    dist.mean = preds.rowwise().mean();
    dist.epistemic_var =
        (preds.colwise() - dist.mean).rowwise().squaredNorm() / static_cast<double>(M);
    dist.total_var = dist.epistemic_var;
    return dist;
}

void McdConfig::validate() const {
    if (rate <= 0.0 || rate >= 1.0) throw std::invalid_argument("McdConfig: rate must be in (0,1)");
    if (passes < 2) throw std::invalid_argument("McdConfig: need >= 2 passes");
    if (gamma < 0.0) throw std::invalid_argument("McdConfig: gamma must be >= 0");
    if (sigma2 <= 0.0) throw std::invalid_argument("McdConfig: sigma2 must be > 0");
    opt.validate();
}

Vec dropout_forward(const MlpSpec& spec, const MlpParams& params, const Mat& X,
                    double rate, RngStream& stream, DropoutCache* cache) {
    if (X.cols() != spec.input_dim) throw std::invalid_argument("dropout_forward: dim mismatch");
    const int L = spec.num_layers();
    const double keep = 1.0 - rate;
    Mat a = X;
    if (cache) {
        cache->acts.assign(1, a);
        cache->masked.assign(1, a);
        cache->masks.clear();
    }
    for (int l = 0; l < L - 1; ++l) {
        Mat z = (a * params.W[l].transpose()).rowwise() + params.b[l].transpose();
        Mat act = spec.activation == Activation::ReLU ? Mat(z.cwiseMax(0.0))
                                                      : Mat(z.array().tanh().matrix());
        Mat mask(act.rows(), act.cols());
        for (Eigen::Index i = 0; i < mask.rows(); ++i) {
            for (Eigen::Index j = 0; j < mask.cols(); ++j) {
                mask(i, j) = stream.next_uniform() < keep ? 1.0 / keep : 0.0;
            }
        }
        a = act.cwiseProduct(mask);
        if (cache) {
            cache->acts.push_back(act);
            cache->masks.push_back(std::move(mask));
            cache->masked.push_back(a);
        }
    }
    const Mat out = (a * params.W[L - 1].transpose()).rowwise() + params.b[L - 1].transpose();
    return out.col(0);
}

MlpParams dropout_backward(const MlpSpec& spec, const MlpParams& params,
                           const DropoutCache& cache, const Vec& grad_out) {
    const int L = spec.num_layers();
    MlpParams grads = unpack_params(spec, Vec::Zero(spec.num_params()));
    grads.W[L - 1] = grad_out.transpose() * cache.masked[L - 1];
    grads.b[L - 1] = Vec::Constant(1, grad_out.sum());
    Mat delta = grad_out * params.W[L - 1];
    for (int l = L - 2; l >= 0; --l) {
        delta = delta.cwiseProduct(cache.masks[l]);
        if (spec.activation == Activation::ReLU) {
            delta = delta.cwiseProduct(
                (cache.acts[l + 1].array() > 0.0).cast<double>().matrix());
        } else {
            delta = delta.cwiseProduct(
                (1.0 - cache.acts[l + 1].array().square()).matrix());
        }
        grads.W[l] += delta.transpose() * cache.masked[l];
        grads.b[l] += delta.colwise().sum().transpose();
        if (l > 0) delta = delta * params.W[l];
    }
    return grads;
}

McdModel mcd_train(const Dataset& data, const McdConfig& cfg, RngStream& stream) {
    cfg.validate();
    if (data.dim() != cfg.spec.input_dim) throw std::invalid_argument("mcd_train: dim mismatch");
    RngStream init_stream = stream.split(0);
    RngStream train_stream = stream.split(1);
    RngStream mask_stream = stream.split(2);
    const Vec init = pack_params(cfg.spec, mlp_init(cfg.spec, init_stream));
    BatchLoss loss = [&](const Vec& flat, const std::vector<int>& batch, int, Vec& grad) {
        const MlpParams params = unpack_params(cfg.spec, flat);
        const Mat Xb = select_rows(data.X, batch);
        const Vec yb = select_elems(data.y, batch);
        const double n = static_cast<double>(batch.size());
        DropoutCache cache;
        const Vec out = dropout_forward(cfg.spec, params, Xb, cfg.rate, mask_stream, &cache);
        const Vec r = out - yb;
        const MlpParams g = dropout_backward(cfg.spec, params, cache, Vec(2.0 * r / n));
        grad = pack_params(cfg.spec, g) + 2.0 * cfg.gamma * flat;
        return r.squaredNorm() / n + cfg.gamma * flat.squaredNorm();
    };
    TrainResult res = train(init, data.n(), loss, cfg.opt, train_stream);
    McdModel model;
    model.spec = cfg.spec;
    model.params = unpack_params(cfg.spec, res.params);
    model.rate = cfg.rate;
    model.passes = cfg.passes;
    model.sigma2 = cfg.sigma2;
    return model;
}

PredictiveDist mcd_predict(const McdModel& model, const Mat& X, RngStream& stream) {
    const int T = model.passes;
    Mat preds(X.rows(), T);
    for (int t = 0; t < T; ++t) {
        preds.col(t) = dropout_forward(model.spec, model.params, X, model.rate, stream);
    }
    PredictiveDist dist;
    dist.mean = preds.rowwise().mean();
    dist.epistemic_var =
        (preds.colwise() - dist.mean).rowwise().squaredNorm() / static_cast<double>(T);
    dist.total_var = dist.epistemic_var.array() + model.sigma2;
    return dist;
}

Mat spectral_normalize(const Mat& W, double c, int iters, RngStream& stream) {
    if (c <= 0.0) throw std::invalid_argument("spectral_normalize: c must be > 0");
    if (iters < 1) throw std::invalid_argument("spectral_normalize: need >= 1 iteration");
    Vec v = stream.standard_normal(static_cast<int>(W.cols()));
    if (v.norm() < 1e-12) v = Vec::Ones(W.cols());
    v.normalize();
    Vec u;
    for (int i = 0; i < iters; ++i) {
        u = W * v;
        const double nu = u.norm();
        if (nu < 1e-30) return W;  // zero matrix
        u /= nu;
        v = W.transpose() * u;
        v.normalize();
    }
    const double est = u.dot(W * v);
    if (est <= c) return W;
    return (c / est) * W;
}

void SngpConfig::validate() const {
    if (c <= 0.0) throw std::invalid_argument("SngpConfig: c must be > 0");
    if (power_iters < 1) throw std::invalid_argument("SngpConfig: need >= 1 power iteration");
    if (rff < 1) throw std::invalid_argument("SngpConfig: need >= 1 random feature");
    if (lengthscale <= 0.0) throw std::invalid_argument("SngpConfig: lengthscale must be > 0");
    if (alpha <= 0.0 || sigma2 <= 0.0) throw std::invalid_argument("SngpConfig: alpha, sigma2 must be > 0");
    opt.validate();
}

Mat rff_features(const Mat& W_L, const Vec& b_L, const Mat& H) {
    const double scale = std::sqrt(2.0 / static_cast<double>(W_L.rows()));
    Mat Z = (H * W_L.transpose()).rowwise() + b_L.transpose();
    return scale * Z.array().cos().matrix();
}

namespace {

Mat body_hidden(const MlpSpec& spec, const MlpParams& params, const Mat& X) {
    const Mat phi = mlp_features(spec, params, X);
    return phi.leftCols(phi.cols() - 1);
}

}  // namespace

SngpModel train_sngp(const Dataset& data, const SngpConfig& cfg, RngStream& stream) {
    cfg.validate();
    if (data.dim() != cfg.spec.input_dim) throw std::invalid_argument("train_sngp: dim mismatch");
    RngStream init_stream = stream.split(0);
    RngStream train_stream = stream.split(1);
    RngStream sn_stream = stream.split(2);
    RngStream rff_stream = stream.split(3);

    const Vec init = pack_params(cfg.spec, mlp_init(cfg.spec, init_stream));
    BatchLoss loss = [&](const Vec& flat, const std::vector<int>& batch, int, Vec& grad) {
        const MlpParams params = unpack_params(cfg.spec, flat);
        const Mat Xb = select_rows(data.X, batch);
        const Vec yb = select_elems(data.y, batch);
        const double n = static_cast<double>(batch.size());
        ForwardCache cache;
        const Vec out = mlp_forward(cfg.spec, params, Xb, &cache);
        const Vec r = out - yb;
        grad = pack_params(cfg.spec, mlp_backward(cfg.spec, params, cache, Vec(2.0 * r / n)));
        return r.squaredNorm() / n;
    };
    StepHook hook = [&](Vec& flat, int) {
        MlpParams params = unpack_params(cfg.spec, flat);
        for (auto& W : params.W) {
            W = spectral_normalize(W, cfg.c, cfg.power_iters, sn_stream);
        }
        flat = pack_params(cfg.spec, params);
    };
    TrainResult res = train(init, data.n(), loss, cfg.opt, train_stream, hook);

    SngpModel model;
    model.spec = cfg.spec;
    model.params = unpack_params(cfg.spec, res.params);
    model.c = cfg.c;
    const int H = cfg.spec.hidden.back();
    model.W_L = Mat(cfg.rff, H);
    for (int i = 0; i < cfg.rff; ++i) {
        for (int j = 0; j < H; ++j) {
            model.W_L(i, j) = rff_stream.next_normal() / cfg.lengthscale;
        }
    }
    model.b_L = rff_stream.uniform(0.0, kTwoPi, cfg.rff);
    const Mat Phi = rff_features(model.W_L, model.b_L, body_hidden(cfg.spec, model.params, data.X));
    model.head = fit_blr(Phi, data.y, cfg.alpha, cfg.sigma2);
    return model;
}

PredictiveDist sngp_predict(const SngpModel& model, const Mat& X) {
    const Mat Phi = rff_features(model.W_L, model.b_L, body_hidden(model.spec, model.params, X));
    return predict_blr(model.head, Phi);
}

void HmcConfig::validate() const {
    if (step_size <= 0.0) throw std::invalid_argument("HmcConfig: step_size must be > 0");
    if (leapfrog < 1) throw std::invalid_argument("HmcConfig: need >= 1 leapfrog step");
    if (iterations < 1) throw std::invalid_argument("HmcConfig: need >= 1 iteration");
    if (burn_in < 0 || burn_in >= iterations) {
        throw std::invalid_argument("HmcConfig: burn_in must lie in [0, iterations)");
    }
    if (thin < 1) throw std::invalid_argument("HmcConfig: thin must be >= 1");
    if (mass <= 0.0) throw std::invalid_argument("HmcConfig: mass must be > 0");
    if (prior_sd <= 0.0 || noise_sd <= 0.0) {
        throw std::invalid_argument("HmcConfig: prior_sd, noise_sd must be > 0");
    }
}

void leapfrog(const PotentialFn& U, Vec& q, Vec& p, double step_size, int steps,
              double mass) {
    Vec grad(q.size());
    U(q, &grad);
    p -= 0.5 * step_size * grad;
    for (int s = 0; s < steps; ++s) {
        q += (step_size / mass) * p;
        U(q, &grad);
        p -= (s + 1 < steps ? step_size : 0.5 * step_size) * grad;
    }
}

Mat hmc_sample(const PotentialFn& U, const HmcConfig& cfg, const Vec& q0,
               RngStream& stream) {
    cfg.validate();
    const int dim = static_cast<int>(q0.size());
    Vec q = q0;
    double U_cur = U(q, nullptr);
    Mat trace(cfg.iterations, dim);
    for (int t = 0; t < cfg.iterations; ++t) {
        Vec p = std::sqrt(cfg.mass) * stream.standard_normal(dim);
        const double K_cur = p.squaredNorm() / (2.0 * cfg.mass);
        Vec q_prop = q;
        Vec p_prop = p;
        leapfrog(U, q_prop, p_prop, cfg.step_size, cfg.leapfrog, cfg.mass);
        const double U_prop = U(q_prop, nullptr);
        const double K_prop = p_prop.squaredNorm() / (2.0 * cfg.mass);
        const double log_accept = U_cur - U_prop + K_cur - K_prop;
        const double u = stream.next_uniform();
        if (std::isfinite(U_prop) && std::isfinite(K_prop) &&
            u < std::exp(log_accept)) {
            q = q_prop;
            U_cur = U_prop;
        }
        trace.row(t) = q.transpose();
    }
    return trace;
}

PredictiveDist bnn_hmc_predict(const MlpSpec& spec, const Dataset& data,
                               const HmcConfig& cfg, RngStream& stream,
                               const Mat& Xstar) {
    cfg.validate();
    RngStream init_stream = stream.split(0);
    RngStream chain_stream = stream.split(1);
    const double prior_var = cfg.prior_sd * cfg.prior_sd;
    const double noise_var = cfg.noise_sd * cfg.noise_sd;
    PotentialFn U = [&](const Vec& q, Vec* grad) {
        const MlpParams params = unpack_params(spec, q);
        double value = q.squaredNorm() / (2.0 * prior_var);
        Vec r;
        ForwardCache cache;
        if (data.n() > 0) {
            const Vec out = mlp_forward(spec, params, data.X, grad ? &cache : nullptr);
            r = out - data.y;
            value += r.squaredNorm() / (2.0 * noise_var);
        }
        if (grad) {
            *grad = q / prior_var;
            if (data.n() > 0) {
                *grad += pack_params(spec, mlp_backward(spec, params, cache, Vec(r / noise_var)));
            }
        }
        return value;
    };
    const Vec q0 = pack_params(spec, mlp_init(spec, init_stream));
    const Mat trace = hmc_sample(U, cfg, q0, chain_stream);

    std::vector<int> keep;
    for (int t = cfg.burn_in; t < cfg.iterations; t += cfg.thin) keep.push_back(t);
    if (keep.empty()) throw std::runtime_error("bnn_hmc_predict: empty thinned trace");
    Mat preds(Xstar.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) {
        const MlpParams params = unpack_params(spec, trace.row(keep[i]).transpose());
        preds.col(static_cast<Eigen::Index>(i)) = mlp_forward(spec, params, Xstar);
    }
    PredictiveDist dist;
    dist.mean = preds.rowwise().mean();
    dist.epistemic_var = (preds.colwise() - dist.mean).rowwise().squaredNorm() /
                         static_cast<double>(keep.size());
    dist.total_var = dist.epistemic_var.array() + noise_var;
    return dist;
}

}  // namespace unalab
