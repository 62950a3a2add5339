#include "unalab/una.hpp"

#include "unalab/nlm.hpp"

#include <cmath>

namespace unalab {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kNormFloor = 1e-12;

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

double draw_perturbation(RngStream& stream, double sigma_perturb) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        const double d = sigma_perturb * stream.next_normal();
        if (std::abs(d) >= kNormFloor) return d;
    }
    throw std::runtime_error("fd perturbation: draws collapsed to zero");
}

/// Raw pair-sum diversity penalty over a batch, optionally with gradients in
/// flat network-parameter space and head space. One shared perturbation draw
/// per (point, dimension); all evaluations go through one stacked forward pass.
struct PenaltyEval {
    double value = 0.0;
    Vec grad_params;  // size spec.num_params(), zero head block
    Mat grad_heads;   // F x M
};

PenaltyEval penalty_eval(const MlpSpec& spec, const MlpParams& params, const Mat& heads,
                         const Mat& Xb, double sigma_perturb, RngStream& stream,
                         bool want_grad) {
    const int B = static_cast<int>(Xb.rows());
    const int D = static_cast<int>(Xb.cols());
    const int M = static_cast<int>(heads.cols());
    const int F = spec.feature_dim();

    PenaltyEval out;
    out.grad_params = Vec::Zero(spec.num_params());
    out.grad_heads = Mat::Zero(F, M);
    if (M < 2 || B == 0) return out;

    Mat delta(B, D);
    for (int b = 0; b < B; ++b) {
        for (int d = 0; d < D; ++d) delta(b, d) = draw_perturbation(stream, sigma_perturb);
    }

    // Stacked rows: block 0 = Xb, block d+1 = Xb with column d shifted.
    Mat Xs((D + 1) * B, D);
    Xs.topRows(B) = Xb;
    for (int d = 0; d < D; ++d) {
        Mat blk = Xb;
        blk.col(d) += delta.col(d);
        Xs.middleRows((d + 1) * B, B) = blk;
    }
    ForwardCache cache;
    const Mat Phis = mlp_features(spec, params, Xs, want_grad ? &cache : nullptr);

    Mat grad_phis;
    if (want_grad) grad_phis = Mat::Zero(Phis.rows(), F);

    for (int b = 0; b < B; ++b) {
        Mat Delta(D, F);  // FD feature differences per dimension
        for (int d = 0; d < D; ++d) {
            Delta.row(d) = (Phis.row((d + 1) * B + b) - Phis.row(b)) / delta(b, d);
        }
        const Mat G = Delta * heads;  // D x M head gradients at this point
        Mat dG = Mat::Zero(D, M);
        for (int i = 0; i < M; ++i) {
            const double ni = G.col(i).squaredNorm();
            if (ni <= kNormFloor * kNormFloor) continue;
            for (int j = i + 1; j < M; ++j) {
                const double nj = G.col(j).squaredNorm();
                if (nj <= kNormFloor * kNormFloor) continue;
                const double s = G.col(i).dot(G.col(j));
                const double c = s * s / (ni * nj);
                out.value += c / B;
                if (!want_grad) continue;
                dG.col(i) += (2.0 * s / (ni * nj)) * G.col(j) - (2.0 * c / ni) * G.col(i);
                dG.col(j) += (2.0 * s / (ni * nj)) * G.col(i) - (2.0 * c / nj) * G.col(j);
            }
        }
        if (!want_grad) continue;
        dG /= static_cast<double>(B);
        out.grad_heads += Delta.transpose() * dG;
        const Mat dDelta = dG * heads.transpose();  // D x F
        for (int d = 0; d < D; ++d) {
            const auto row = dDelta.row(d) / delta(b, d);
            grad_phis.row((d + 1) * B + b) += row;
            grad_phis.row(b) -= row;
        }
    }

    if (want_grad) {
        const MlpParams g = mlp_feature_backward(spec, params, cache, grad_phis);
        out.grad_params = pack_params(spec, g);
    }
    return out;
}

struct FitEval {
    double value = 0.0;
    Vec grad_params;  // d fit / d theta (ascent direction), zero head block
    Mat grad_heads;
};

FitEval fit_eval(const MlpSpec& spec, const MlpParams& params, const Mat& heads,
                 const Mat& Xb, const Vec& yb, double sigma2, double gamma,
                 bool want_grad, ForwardCache* cache_out = nullptr) {
    const int M = static_cast<int>(heads.cols());
    const double nb = static_cast<double>(Xb.rows());
    ForwardCache cache;
    const Mat Phi = mlp_features(spec, params, Xb, &cache);
    const Mat R = yb.replicate(1, M) - Phi * heads;  // residual per head
    const Vec feat_flat = pack_feature_params(spec, params);
    FitEval out;
    out.value = -0.5 * nb * (kLog2Pi + std::log(sigma2)) -
                R.squaredNorm() / (2.0 * sigma2 * M) -
                gamma * (feat_flat.squaredNorm() + heads.squaredNorm());
    if (want_grad) {
        const Mat grad_phi = (R * heads.transpose()) / (M * sigma2);
        MlpParams g = mlp_feature_backward(spec, params, cache, grad_phi);
        Vec flat = pack_params(spec, g);
        MlpParams pen = unpack_params(spec, Vec::Zero(spec.num_params()));
        unpack_feature_params(spec, -2.0 * gamma * feat_flat, pen);
        out.grad_params = flat + pack_params(spec, pen);
        out.grad_heads = (Phi.transpose() * R) / (M * sigma2) - 2.0 * gamma * heads;
    }
    if (cache_out) *cache_out = std::move(cache);
    return out;
}

}  // namespace

double cos_sim_sq(const Vec& g, const Vec& h) {
    const double ng = g.norm();
    const double nh = h.norm();
    if (ng <= kNormFloor || nh <= kNormFloor) {
        throw DegenerateGradient("cos_sim_sq: gradient norm below 1e-12");
    }
    const double s = g.dot(h) / (ng * nh);
    return s * s;
}

void AnnealSchedule::validate() const {
    if (scale < 0.0) throw std::invalid_argument("AnnealSchedule: scale must be >= 0");
    if (total_epochs < 1) throw std::invalid_argument("AnnealSchedule: total epochs must be >= 1");
}

double anneal(const AnnealSchedule& schedule, double epoch) {
    schedule.validate();
    const double C = schedule.scale;
    const double t = epoch / static_cast<double>(schedule.total_epochs);
    switch (schedule.kind) {
        case ScheduleKind::Constant: return C;
        case ScheduleKind::Sqrt: return C * std::sqrt(t);
        case ScheduleKind::Sigmoid: return C / (1.0 + std::exp(-6.0 * t + 3.0));
        case ScheduleKind::Tanh: return C * (std::tanh(6.0 * t - 3.0) + 1.0) / 2.0;
    }
    return C;
}

void LunaConfig::validate() const {
    if (num_heads < 1) throw std::invalid_argument("LunaConfig: need >= 1 head");
    if (sigma_perturb <= 0.0) throw std::invalid_argument("LunaConfig: sigma_perturb must be > 0");
    if (alpha <= 0.0 || sigma2 <= 0.0) throw std::invalid_argument("LunaConfig: alpha, sigma2 must be > 0");
    if (gamma < 0.0) throw std::invalid_argument("LunaConfig: gamma must be >= 0");
    schedule.validate();
    opt.validate();
}

Mat fd_gradients(const MlpSpec& spec, const MlpParams& params, const Mat& heads,
                 const Vec& x, double sigma_perturb, RngStream& stream) {
    if (sigma_perturb <= 0.0) throw std::invalid_argument("fd_gradients: sigma_perturb must be > 0");
    const int D = static_cast<int>(x.size());
    const int M = static_cast<int>(heads.cols());
    Vec delta(D);
    for (int d = 0; d < D; ++d) delta[d] = draw_perturbation(stream, sigma_perturb);
    Mat Xs(D + 1, D);
    Xs.row(0) = x.transpose();
    for (int d = 0; d < D; ++d) {
        Xs.row(d + 1) = x.transpose();
        Xs(d + 1, d) += delta[d];
    }
    const Mat Phi = mlp_features(spec, params, Xs);
    Mat grads(M, D);
    for (int d = 0; d < D; ++d) {
        const Mat diff = (Phi.row(d + 1) - Phi.row(0)) / delta[d];  // 1 x F
        grads.col(d) = (diff * heads).transpose();
    }
    return grads;
}

double diversity_penalty(const MlpSpec& spec, const MlpParams& params, const Mat& heads,
                         const Mat& Xbatch, double sigma_perturb, RngStream& stream,
                         bool normalized) {
    const int M = static_cast<int>(heads.cols());
    if (M < 2) return 0.0;
    const PenaltyEval pe =
        penalty_eval(spec, params, heads, Xbatch, sigma_perturb, stream, false);
    if (!normalized) return pe.value;
    return pe.value / (0.5 * M * (M - 1));
}

double fit_term(const MlpSpec& spec, const MlpParams& params, const Mat& heads,
                const Mat& X, const Vec& y, double sigma2, double gamma) {
    return fit_eval(spec, params, heads, X, y, sigma2, gamma, false).value;
}

LunaResult train_luna(const Dataset& data, const LunaConfig& cfg, RngStream& stream) {
    cfg.validate();
    const MlpSpec& spec = cfg.spec;
    if (data.dim() != spec.input_dim) throw std::invalid_argument("train_luna: dim mismatch");
    const int M = cfg.num_heads;
    const int F = spec.feature_dim();
    const int P = spec.num_params();

    RngStream init_stream = stream.split(0);
    RngStream head_stream = stream.split(1);
    RngStream train_stream = stream.split(2);
    RngStream perturb_stream = stream.split(3);

    Vec init(P + F * M);
    init.head(P) = pack_params(spec, mlp_init(spec, init_stream));
    for (int m = 0; m < M; ++m) {
        init.segment(P + m * F, F) = head_stream.standard_normal(F) / std::sqrt(double(F));
    }

    std::vector<double> fit_sum, pen_sum;
    std::vector<int> batch_count;
    auto at_epoch = [&](std::vector<double>& v, int e) -> double& {
        if (static_cast<int>(v.size()) <= e) v.resize(e + 1, 0.0);
        return v[e];
    };

    BatchLoss loss = [&](const Vec& flat, const std::vector<int>& batch, int epoch,
                         Vec& grad) {
        const MlpParams params = unpack_params(spec, flat.head(P));
        Mat heads(F, M);
        for (int m = 0; m < M; ++m) heads.col(m) = flat.segment(P + m * F, F);
        const Mat Xb = select_rows(data.X, batch);
        const Vec yb = select_elems(data.y, batch);
        const double nb = static_cast<double>(batch.size());

        const FitEval fit =
            fit_eval(spec, params, heads, Xb, yb, cfg.sigma2, cfg.gamma, true);
        const double lambda = anneal(cfg.schedule, static_cast<double>(epoch));
        double pen_value = 0.0;
        grad = Vec::Zero(flat.size());
        grad.head(P) = -fit.grad_params;
        for (int m = 0; m < M; ++m) grad.segment(P + m * F, F) = -fit.grad_heads.col(m);
        if (lambda > 0.0 && M >= 2) {
            const double scale = lambda * 2.0 * nb / (double(M) * (M - 1));
            const PenaltyEval pe =
                penalty_eval(spec, params, heads, Xb, cfg.sigma_perturb, perturb_stream, true);
            pen_value = pe.value;
            grad.head(P) += scale * pe.grad_params;
            for (int m = 0; m < M; ++m) {
                grad.segment(P + m * F, F) += scale * pe.grad_heads.col(m);
            }
        }
        at_epoch(fit_sum, epoch) += fit.value;
        at_epoch(pen_sum, epoch) += pen_value;
        if (static_cast<int>(batch_count.size()) <= epoch) batch_count.resize(epoch + 1, 0);
        ++batch_count[epoch];
        const double scale = lambda * 2.0 * nb / std::max(double(M) * (M - 1), 1.0);
        return -fit.value + scale * pen_value;
    };

    TrainResult res = train(init, data.n(), loss, cfg.opt, train_stream);

    LunaResult out;
    out.params = unpack_params(spec, res.params.head(P));
    out.heads = Mat(F, M);
    for (int m = 0; m < M; ++m) out.heads.col(m) = res.params.segment(P + m * F, F);
    for (std::size_t e = 0; e < batch_count.size(); ++e) {
        out.fit_trace.push_back(fit_sum[e] / batch_count[e]);
        out.diverse_trace.push_back(pen_sum[e] / batch_count[e]);
        out.lambda_trace.push_back(anneal(cfg.schedule, static_cast<double>(e)));
    }
    return out;
}

BlrPosterior luna_posterior(const MlpSpec& spec, const MlpParams& params,
                            const Dataset& data, double alpha, double sigma2) {
    return nlm_posterior(spec, params, data, alpha, sigma2);
}

std::size_t select_luna_model(const std::vector<LunaRunStats>& runs) {
    if (runs.empty()) throw std::invalid_argument("select_luna_model: no runs");
    std::vector<double> lls;
    lls.reserve(runs.size());
    for (const auto& r : runs) lls.push_back(r.validation_ll);
    const double threshold = percentile(lls, 90.0);
    std::size_t best = runs.size();
    for (std::size_t i = 0; i < runs.size(); ++i) {
        if (runs[i].validation_ll < threshold) continue;
        if (best == runs.size() ||
            runs[i].validation_diversity < runs[best].validation_diversity) {
            best = i;
        }
    }
    return best;
}

Mat make_reference_points(const Mat& X, double sigma_x, RngStream& stream) {
    if (sigma_x < 0.0) throw std::invalid_argument("make_reference_points: sigma_x must be >= 0");
    const Eigen::Index N = X.rows();
    Mat out(2 * N, X.cols());
    out.topRows(N) = X;
    for (Eigen::Index i = 0; i < N; ++i) {
        out.row(N + i) =
            X.row(i) + sigma_x * stream.standard_normal(static_cast<int>(X.cols())).transpose();
    }
    return out;
}

ReferenceSet build_reference_set(const Mat& x_ref, const KernelSpec& prior, int M,
                                 RngStream& stream) {
    if (M < 1) throw std::invalid_argument("build_reference_set: need M >= 1");
    ReferenceSet set;
    set.X = x_ref;
    set.G = gp_prior_sample(prior, x_ref, M, stream);
    return set;
}

ReferenceSet build_reference_set(const Mat& x_ref, const Mat& values) {
    if (values.rows() != x_ref.rows() || values.cols() < 1) {
        throw std::invalid_argument("build_reference_set: value shape mismatch");
    }
    return {x_ref, values};
}

TunaResult train_tuna(const ReferenceSet& refs, const TunaConfig& cfg, RngStream& stream) {
    cfg.opt.validate();
    const MlpSpec& spec = cfg.spec;
    if (refs.X.cols() != spec.input_dim) throw std::invalid_argument("train_tuna: dim mismatch");
    if (refs.X.rows() < 1 || refs.G.rows() != refs.X.rows()) {
        throw std::invalid_argument("train_tuna: invalid reference set");
    }
    const int M = static_cast<int>(refs.G.cols());
    const int F = spec.feature_dim();
    const int P = spec.num_params();

    RngStream init_stream = stream.split(0);
    RngStream train_stream = stream.split(1);
    Vec init = Vec::Zero(P + F * M);
    init.head(P) = pack_params(spec, mlp_init(spec, init_stream));
    // Heads start at zero: the loss and its trace are then exactly the
    // reference-function energy at the feature init.

    BatchLoss loss = [&](const Vec& flat, const std::vector<int>& batch, int, Vec& grad) {
        const MlpParams params = unpack_params(spec, flat.head(P));
        Mat heads(F, M);
        for (int m = 0; m < M; ++m) heads.col(m) = flat.segment(P + m * F, F);
        const Mat Xb = select_rows(refs.X, batch);
        Mat Gb(static_cast<Eigen::Index>(batch.size()), M);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            Gb.row(static_cast<Eigen::Index>(i)) = refs.G.row(batch[i]);
        }
        ForwardCache cache;
        const Mat Phi = mlp_features(spec, params, Xb, &cache);
        const Mat R = Phi * heads - Gb;
        const double value = R.squaredNorm() / M;
        grad = Vec::Zero(flat.size());
        if (!cfg.freeze_features) {
            const Mat grad_phi = (2.0 / M) * (R * heads.transpose());
            grad.head(P) = pack_params(spec, mlp_feature_backward(spec, params, cache, grad_phi));
        }
        const Mat grad_heads = (2.0 / M) * (Phi.transpose() * R);
        for (int m = 0; m < M; ++m) grad.segment(P + m * F, F) = grad_heads.col(m);
        return value;
    };

    TrainResult res = train(init, static_cast<int>(refs.X.rows()), loss, cfg.opt, train_stream);
    TunaResult out;
    out.params = unpack_params(spec, res.params.head(P));
    out.heads = Mat(F, M);
    for (int m = 0; m < M; ++m) out.heads.col(m) = res.params.segment(P + m * F, F);
    out.loss_trace = std::move(res.loss_trace);
    return out;
}

ReferenceSet tuna_pseudo_augment(const ReferenceSet& refs, const Mat& pseudo_X,
                                 const Mat& pseudo_G) {
    if (pseudo_X.rows() != pseudo_G.rows()) {
        throw std::invalid_argument("tuna_pseudo_augment: row mismatch");
    }
    if (pseudo_X.rows() > 0 &&
        (pseudo_X.cols() != refs.X.cols() || pseudo_G.cols() != refs.G.cols())) {
        throw std::invalid_argument("tuna_pseudo_augment: column mismatch");
    }
    ReferenceSet out;
    out.X = Mat(refs.X.rows() + pseudo_X.rows(), refs.X.cols());
    out.X << refs.X, pseudo_X;
    out.G = Mat(refs.G.rows() + pseudo_G.rows(), refs.G.cols());
    out.G << refs.G, pseudo_G;
    return out;
}

ReferenceSet tuna_pseudo_augment(const ReferenceSet& refs, const Mat& pseudo_X,
                                 const Vec& broadcast_target) {
    if (broadcast_target.size() != pseudo_X.rows()) {
        throw std::invalid_argument("tuna_pseudo_augment: broadcast length mismatch");
    }
    const Mat G = broadcast_target.replicate(1, refs.G.cols());
    return tuna_pseudo_augment(refs, pseudo_X, G);
}

BlrPosterior tuna_posterior(const MlpSpec& spec, const MlpParams& params,
                            const Dataset& data, double alpha, double sigma2) {
    return nlm_posterior(spec, params, data, alpha, sigma2);
}

}  // namespace unalab
