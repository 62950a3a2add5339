#pragma once

#include "unalab/bench.hpp"
#include "unalab/blr.hpp"
#include "unalab/numkit.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace unalab {

struct ObjectiveSpec {
    std::string name;
    int dim = 1;
    Vec lower;
    Vec upper;
    std::function<double(const Vec&)> fn;
    std::optional<double> optimum;  // known minimum value, for error traces

    void validate() const;
};

double branin(const Vec& x);
double hartmann6(const Vec& x);

/// Branin on [-5,10] x [0,15], minimum 0.397887.
ObjectiveSpec branin_objective();
/// Hartmann6 on (0,1)^6, minimum -3.32237.
ObjectiveSpec hartmann6_objective();

/// Expected improvement for minimization. sigma = 0 collapses to
/// max(f_best - mu, 0).
double expected_improvement(double mu, double sigma, double f_best);

/// Surrogate predictive over a batch of candidate points (raw scale).
using SurrogateFn = std::function<PredictiveDist(const Mat&)>;

/// Argmax of EI over K uniform candidates inside the bounds; ties resolve to
/// the lowest candidate index.
Vec propose_next(const SurrogateFn& surrogate, const Vec& lower, const Vec& upper,
                 double f_best, int candidates, RngStream& stream);

/// Refit on all observations so far, then return a predictive function on the
/// raw input/output scale.
using SurrogateFactory = std::function<SurrogateFn(const Mat& X, const Vec& y)>;

struct BoConfig {
    int init_points = 5;
    int steps = 50;
    int candidates = 2000;

    void validate() const;
};

struct BoResult {
    Mat queries;         // (init + steps) x dim
    Vec values;          // objective at each query
    Vec best_error;      // best-so-far minus known optimum (or best value itself)
    std::uint64_t seed = 0;
};

BoResult bayesopt_loop(const ObjectiveSpec& objective, const SurrogateFactory& factory,
                       const BoConfig& cfg, RngStream& stream);

/// GP surrogate used by the paper's strongest baseline: normalizes the
/// observations internally and undoes the scaling at prediction.
SurrogateFactory gp_surrogate_factory();

}  // namespace unalab
