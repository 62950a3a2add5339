#include "unalab/bayesopt.hpp"

#include "unalab/gp.hpp"

#include <cmath>

namespace unalab {

namespace {

constexpr double kPi = 3.1415926535897932384626433832795;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

}  // namespace

void ObjectiveSpec::validate() const {
    if (dim < 1) throw std::invalid_argument("ObjectiveSpec: dim must be >= 1");
    if (lower.size() != dim || upper.size() != dim) {
        throw std::invalid_argument("ObjectiveSpec: bounds size mismatch");
    }
    for (int d = 0; d < dim; ++d) {
        if (!(lower[d] < upper[d])) {
            throw std::invalid_argument("ObjectiveSpec: need lower < upper per dim");
        }
    }
    if (!fn) throw std::invalid_argument("ObjectiveSpec: missing evaluation function");
}

double branin(const Vec& x) {
    if (x.size() != 2) throw std::invalid_argument("branin: need a 2-vector");
    const double x1 = x[0];
    const double x2 = x[1];
    const double a = x2 - 5.1 / (4.0 * kPi * kPi) * x1 * x1 + 5.0 / kPi * x1 - 6.0;
    return a * a + 10.0 * (1.0 - 1.0 / (8.0 * kPi)) * std::cos(x1) + 10.0;
}

double hartmann6(const Vec& x) {
    if (x.size() != 6) throw std::invalid_argument("hartmann6: need a 6-vector");
    static const double alpha[4] = {1.0, 1.2, 3.0, 3.2};
    static const double A[4][6] = {
        {10.0, 3.0, 17.0, 3.5, 1.7, 8.0},
        {0.05, 10.0, 17.0, 0.1, 8.0, 14.0},
        {3.0, 3.5, 1.7, 10.0, 17.0, 8.0},
        {17.0, 8.0, 0.05, 10.0, 0.1, 14.0}};
    static const double P[4][6] = {
        {0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886},
        {0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991},
        {0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650},
        {0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381}};
    double value = 0.0;
    for (int i = 0; i < 4; ++i) {
        double inner = 0.0;
        for (int j = 0; j < 6; ++j) {
            const double d = x[j] - P[i][j];
            inner += A[i][j] * d * d;
        }
        value -= alpha[i] * std::exp(-inner);
    }
    return value;
}

ObjectiveSpec branin_objective() {
    ObjectiveSpec spec;
    spec.name = "branin";
    spec.dim = 2;
    spec.lower = Vec(2);
    spec.lower << -5.0, 0.0;
    spec.upper = Vec(2);
    spec.upper << 10.0, 15.0;
    spec.fn = branin;
    spec.optimum = 0.397887;
    return spec;
}

ObjectiveSpec hartmann6_objective() {
    ObjectiveSpec spec;
    spec.name = "hartmann6";
    spec.dim = 6;
    spec.lower = Vec::Zero(6);
    spec.upper = Vec::Ones(6);
    spec.fn = hartmann6;
    spec.optimum = -3.32237;
    return spec;
}

double expected_improvement(double mu, double sigma, double f_best) {
    if (sigma < 0.0) throw std::invalid_argument("expected_improvement: sigma must be >= 0");
    const double gap = f_best - mu;
    if (sigma == 0.0) return std::max(gap, 0.0);
    const double z = gap / sigma;
    return gap * normal_cdf(z) + sigma * normal_pdf(z);
}

Vec propose_next(const SurrogateFn& surrogate, const Vec& lower, const Vec& upper,
                 double f_best, int candidates, RngStream& stream) {
    if (candidates < 1) throw std::invalid_argument("propose_next: need >= 1 candidate");
    const int dim = static_cast<int>(lower.size());
    Mat C(candidates, dim);
    for (int k = 0; k < candidates; ++k) {
        for (int d = 0; d < dim; ++d) C(k, d) = stream.next_uniform(lower[d], upper[d]);
    }
    const PredictiveDist dist = surrogate(C);
    int best = 0;
    double best_ei = -1.0;
    for (int k = 0; k < candidates; ++k) {
        const double sd = std::sqrt(std::max(dist.total_var[k], 0.0));
        const double ei = expected_improvement(dist.mean[k], sd, f_best);
        if (ei > best_ei) {
            best_ei = ei;
            best = k;
        }
    }
    return C.row(best).transpose();
}

void BoConfig::validate() const {
    if (init_points < 1) throw std::invalid_argument("BoConfig: need >= 1 init point");
    if (steps < 0) throw std::invalid_argument("BoConfig: steps must be >= 0");
    if (candidates < 1) throw std::invalid_argument("BoConfig: need >= 1 candidate");
}

BoResult bayesopt_loop(const ObjectiveSpec& objective, const SurrogateFactory& factory,
                       const BoConfig& cfg, RngStream& stream) {
    objective.validate();
    cfg.validate();
    const int dim = objective.dim;
    BoResult result;
    result.seed = stream.seed();

    Mat X(cfg.init_points, dim);
    Vec y(cfg.init_points);
    for (int i = 0; i < cfg.init_points; ++i) {
        for (int d = 0; d < dim; ++d) {
            X(i, d) = stream.next_uniform(objective.lower[d], objective.upper[d]);
        }
        y[i] = objective.fn(X.row(i).transpose());
    }

    for (int s = 0; s < cfg.steps; ++s) {
        Vec q;
        try {
            const SurrogateFn surrogate = factory(X, y);
            q = propose_next(surrogate, objective.lower, objective.upper, y.minCoeff(),
                             cfg.candidates, stream);
        } catch (const std::exception&) {
            break;  // keep the partial trace
        }
        const double value = objective.fn(q);
        X.conservativeResize(X.rows() + 1, Eigen::NoChange);
        X.row(X.rows() - 1) = q.transpose();
        y.conservativeResize(y.size() + 1);
        y[y.size() - 1] = value;
    }

    result.queries = X;
    result.values = y;
    result.best_error = Vec(y.size());
    double best = y[0];
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        best = std::min(best, y[i]);
        result.best_error[i] = objective.optimum ? best - *objective.optimum : best;
    }
    return result;
}

SurrogateFactory gp_surrogate_factory() {
    return [](const Mat& X, const Vec& y) -> SurrogateFn {
        Dataset data{X, y};
        const NormalizedDataset nd = normalize(data);
        std::vector<KernelSpec> candidates;
        for (double l : {0.1, 0.2, 0.5, 1.0, 2.0}) {
            candidates.push_back({{KernelTerm::rbf(1.0, l)}});
        }
        const double noise2 = 1e-6;
        const KernelSpec best = gp_grid_search(nd.data.X, nd.data.y, candidates, noise2);
        const GpPosterior post = gp_fit(nd.data.X, nd.data.y, best, noise2);
        const NormStats stats = nd.stats;
        return [post, stats](const Mat& Xq) {
            return denormalize_dist(gp_predict(post, normalize_inputs(Xq, stats)), stats);
        };
    };
}

}  // namespace unalab
