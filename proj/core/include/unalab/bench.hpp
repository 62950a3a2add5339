#pragma once

#include "unalab/blr.hpp"
#include "unalab/numkit.hpp"

#include <functional>
#include <string>
#include <vector>

namespace unalab {

/// Per-feature and target z-score statistics recorded by normalize().
struct NormStats {
    Vec x_mean;
    Vec x_sd;
    double y_mean = 0.0;
    double y_sd = 1.0;
    std::vector<int> passthrough_cols;  // zero-variance columns left unscaled
};

struct Dataset {
    Mat X;
    Vec y;

    int n() const { return static_cast<int>(X.rows()); }
    int dim() const { return static_cast<int>(X.cols()); }
};

/// Cubic gap: 100 points, x uniform on [-4,-2] u [2,4], y = x^3 + N(0, 3^2).
Dataset gen_cubic_gap(RngStream& stream);

enum class SquiggleRegion { NotGap, Gap };

/// y = x^3 + 20 exp(-x^2) sin(10x) + N(0, 3^2); 100 points from the chosen region.
Dataset gen_squiggle(RngStream& stream, SquiggleRegion region);
double squiggle_truth(double x);

/// Shell data 1 <= |x| <= 2 with y = |x| + N(0, 1e-5), rejection-sampled from
/// the box [-2,2]^D. count < 0 uses the reference counts for D in {1,2,3}
/// (50 / 200 / 500).
Dataset gen_radial_shell(int dim, RngStream& stream, int count = -1);

struct NormalizedDataset {
    Dataset data;
    NormStats stats;
};

/// Z-score features and target. Zero-variance columns pass through unscaled
/// and are recorded in stats.passthrough_cols.
NormalizedDataset normalize(const Dataset& data);

Dataset apply_normalization(const Dataset& data, const NormStats& stats);
Mat normalize_inputs(const Mat& X, const NormStats& stats);

/// Map a predictive distribution on the normalized scale back to raw units.
PredictiveDist denormalize_dist(const PredictiveDist& dist, const NormStats& stats);

Dataset load_csv(const std::string& path, int target_column, bool has_header);
void save_csv(const std::string& path, const Dataset& data);

struct GapSplit {
    Dataset train;
    Dataset gap;
};

/// Stable sort on the chosen feature, then remove the middle third:
/// gap = rows [floor(N/3), floor(N/3) + ceil(N/3)).
GapSplit uci_gap_transform(const Dataset& data, int feature_index);

enum class UncertaintyKind { Epistemic, Total };

struct RubConfig {
    int dim = 1;
    int rays = 1000;  // ignored in 1D, which always uses {-1, +1}
    double r_max = 3.0;
    int radius_steps = 100;
    UncertaintyKind kind = UncertaintyKind::Epistemic;
};

struct RubReport {
    Vec radii;
    Vec mean_std;      // mean uncertainty std across rays, per radius
    Vec std_std;       // std across rays, per radius
    double percentile997 = 0.0;
    double peak_value = 0.0;
    double peak_radius = 0.0;
};

using PredictFn = std::function<PredictiveDist(const Mat&)>;

/// Sample rays uniformly on the sphere (1D: exactly {-1,+1}), evaluate the
/// model's uncertainty std at every direction x radius, and aggregate.
RubReport rub_run(const PredictFn& model, const RubConfig& cfg, RngStream& stream);

struct RubScore {
    double peak = 0.0;
    double ideal = 0.0;  // 1 / 2^D
    double ratio = 0.0;  // percentile997 / ideal
};

RubScore rub_ideal_score(const RubReport& report, int dim);

/// Linear-interpolation percentile (p in [0, 100]).
double percentile(std::vector<double> values, double p);

/// Refit the Bayesian head on gap-train features (theta frozen) and report
/// average log-likelihood on gap-test.
using FeatureFn = std::function<Mat(const Mat&)>;
double transfer_eval(const FeatureFn& features, const Dataset& gap_train,
                     const Dataset& gap_test, double alpha, double sigma2);

struct GapRatioResult {
    double percent_increase = 0.0;
    double gap_mean_std = 0.0;
    double notgap_mean_std = 0.0;
};

/// 100 * (mean gap epistemic std / mean not-gap epistemic std - 1).
GapRatioResult epistemic_gap_ratio(const PredictFn& model, const Dataset& gap,
                                   const Dataset& notgap);

/// Detection across repeated runs: mean percent increase minus its std must
/// exceed zero.
bool gap_detected(const std::vector<double>& percent_increases);

}  // namespace unalab
