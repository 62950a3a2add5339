#include "unalab/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace unalab {

namespace {

constexpr double kShellNoiseSd = 0.0031622776601683794;  // sqrt(1e-5)

double sample_two_band(RngStream& stream) {
    // Uniform over [-4,-2] u [2,4]: pick the band, then the offset.
    const double u = stream.next_uniform();
    const double t = stream.next_uniform(2.0, 4.0);
    return u < 0.5 ? -t : t;
}

}  // namespace

Dataset gen_cubic_gap(RngStream& stream) {
    Dataset d;
    d.X = Mat(100, 1);
    d.y = Vec(100);
    for (int i = 0; i < 50; ++i) d.X(i, 0) = stream.next_uniform(-4.0, -2.0);
    for (int i = 50; i < 100; ++i) d.X(i, 0) = stream.next_uniform(2.0, 4.0);
    for (int i = 0; i < 100; ++i) {
        const double x = d.X(i, 0);
        d.y[i] = x * x * x + 3.0 * stream.next_normal();
    }
    return d;
}

double squiggle_truth(double x) {
    return x * x * x + 20.0 * std::exp(-x * x) * std::sin(10.0 * x);
}

Dataset gen_squiggle(RngStream& stream, SquiggleRegion region) {
    Dataset d;
    d.X = Mat(100, 1);
    d.y = Vec(100);
    for (int i = 0; i < 100; ++i) {
        const double x = region == SquiggleRegion::Gap ? stream.next_uniform(-2.0, 2.0)
                                                       : sample_two_band(stream);
        d.X(i, 0) = x;
        d.y[i] = squiggle_truth(x) + 3.0 * stream.next_normal();
    }
    return d;
}

Dataset gen_radial_shell(int dim, RngStream& stream, int count) {
    if (dim < 1) throw std::invalid_argument("gen_radial_shell: dim must be >= 1");
    if (count < 0) {
        switch (dim) {
            case 1: count = 50; break;
            case 2: count = 200; break;
            case 3: count = 500; break;
            default:
                throw std::invalid_argument(
                    "gen_radial_shell: explicit count required for dim > 3");
        }
    }
    Dataset d;
    d.X = Mat(count, dim);
    d.y = Vec(count);
    for (int i = 0; i < count; ++i) {
        Vec x(dim);
        for (;;) {
            for (int k = 0; k < dim; ++k) x[k] = stream.next_uniform(-2.0, 2.0);
            const double r = x.norm();
            if (r >= 1.0 && r <= 2.0) break;
        }
        d.X.row(i) = x;
        d.y[i] = x.norm() + kShellNoiseSd * stream.next_normal();
    }
    return d;
}

NormalizedDataset normalize(const Dataset& data) {
    if (data.n() < 2) throw std::invalid_argument("normalize: need N >= 2");
    NormalizedDataset out;
    out.stats.x_mean = data.X.colwise().mean();
    out.stats.x_sd = Vec(data.dim());
    out.data.X = data.X;
    const double n = static_cast<double>(data.n());
    for (int j = 0; j < data.dim(); ++j) {
        const double var =
            (data.X.col(j).array() - out.stats.x_mean[j]).square().sum() / n;
        const double sd = std::sqrt(var);
        if (sd <= 0.0) {
            out.stats.x_sd[j] = 1.0;
            out.stats.passthrough_cols.push_back(j);
        } else {
            out.stats.x_sd[j] = sd;
        }
        out.data.X.col(j) =
            (data.X.col(j).array() - out.stats.x_mean[j]) / out.stats.x_sd[j];
    }
    out.stats.y_mean = data.y.mean();
    const double y_var = (data.y.array() - out.stats.y_mean).square().sum() / n;
    out.stats.y_sd = y_var > 0.0 ? std::sqrt(y_var) : 1.0;
    out.data.y = (data.y.array() - out.stats.y_mean) / out.stats.y_sd;
    return out;
}

Mat normalize_inputs(const Mat& X, const NormStats& stats) {
    Mat out = X;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        out.col(j) = (X.col(j).array() - stats.x_mean[j]) / stats.x_sd[j];
    }
    return out;
}

Dataset apply_normalization(const Dataset& data, const NormStats& stats) {
    Dataset out;
    out.X = normalize_inputs(data.X, stats);
    out.y = (data.y.array() - stats.y_mean) / stats.y_sd;
    return out;
}

PredictiveDist denormalize_dist(const PredictiveDist& dist, const NormStats& stats) {
    PredictiveDist out;
    const double s2 = stats.y_sd * stats.y_sd;
    out.mean = dist.mean.array() * stats.y_sd + stats.y_mean;
    out.total_var = dist.total_var * s2;
    out.epistemic_var = dist.epistemic_var * s2;
    return out;
}

Dataset load_csv(const std::string& path, int target_column, bool has_header) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (has_header && lineno == 1) continue;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        int col = 0;
        while (std::getline(ss, cell, ',')) {
            ++col;
            try {
                std::size_t pos = 0;
                row.push_back(std::stod(cell, &pos));
                while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
                if (pos != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                std::ostringstream msg;
                msg << "load_csv: non-numeric cell at row " << lineno << ", col " << col;
                throw std::runtime_error(msg.str());
            }
        }
        if (width == 0) {
            width = row.size();
        } else if (row.size() != width) {
            std::ostringstream msg;
            msg << "load_csv: ragged row at line " << lineno;
            throw std::runtime_error(msg.str());
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("load_csv: empty file " + path);
    if (target_column < 0 || static_cast<std::size_t>(target_column) >= width) {
        throw std::runtime_error("load_csv: target column out of range");
    }
    Dataset d;
    d.X = Mat(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1));
    d.y = Vec(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        int k = 0;
        for (std::size_t j = 0; j < width; ++j) {
            if (static_cast<int>(j) == target_column) {
                d.y[static_cast<Eigen::Index>(i)] = rows[i][j];
            } else {
                d.X(static_cast<Eigen::Index>(i), k++) = rows[i][j];
            }
        }
    }
    return d;
}

void save_csv(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_csv: cannot open " + path);
    out.precision(17);
    for (int i = 0; i < data.n(); ++i) {
        for (int j = 0; j < data.dim(); ++j) out << data.X(i, j) << ',';
        out << data.y[i] << '\n';
    }
}

GapSplit uci_gap_transform(const Dataset& data, int feature_index) {
    if (data.n() < 3) throw std::invalid_argument("uci_gap_transform: need N >= 3");
    if (feature_index < 0 || feature_index >= data.dim()) {
        throw std::invalid_argument("uci_gap_transform: feature index out of range");
    }
    const int n = data.n();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return data.X(a, feature_index) < data.X(b, feature_index);
    });
    const int gap_start = n / 3;
    const int gap_size = (n + 2) / 3;  // ceil(N/3)
    GapSplit split;
    split.gap.X = Mat(gap_size, data.dim());
    split.gap.y = Vec(gap_size);
    split.train.X = Mat(n - gap_size, data.dim());
    split.train.y = Vec(n - gap_size);
    int gi = 0;
    int ti = 0;
    for (int k = 0; k < n; ++k) {
        const int src = order[k];
        if (k >= gap_start && k < gap_start + gap_size) {
            split.gap.X.row(gi) = data.X.row(src);
            split.gap.y[gi++] = data.y[src];
        } else {
            split.train.X.row(ti) = data.X.row(src);
            split.train.y[ti++] = data.y[src];
        }
    }
    return split;
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("percentile: empty input");
    std::sort(values.begin(), values.end());
    const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = static_cast<std::size_t>(std::ceil(rank));
    const double frac = rank - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

RubReport rub_run(const PredictFn& model, const RubConfig& cfg, RngStream& stream) {
    if (cfg.dim < 1) throw std::invalid_argument("rub_run: dim must be >= 1");
    if (cfg.radius_steps < 2) throw std::invalid_argument("rub_run: need >= 2 radius steps");

    Mat directions;
    if (cfg.dim == 1) {
        directions = Mat(2, 1);
        directions(0, 0) = -1.0;
        directions(1, 0) = 1.0;
    } else {
        if (cfg.rays < 2) throw std::invalid_argument("rub_run: need >= 2 rays");
        directions = Mat(cfg.rays, cfg.dim);
        for (int r = 0; r < cfg.rays; ++r) {
            Vec v = stream.standard_normal(cfg.dim);
            while (v.norm() < 1e-12) v = stream.standard_normal(cfg.dim);
            directions.row(r) = v / v.norm();
        }
    }
    const int nrays = static_cast<int>(directions.rows());

    RubReport report;
    report.radii = Vec::LinSpaced(cfg.radius_steps, 0.0, cfg.r_max);
    report.mean_std = Vec(cfg.radius_steps);
    report.std_std = Vec(cfg.radius_steps);

    // One model call per ray covering all radii; predictions must be pure.
    Mat stds(nrays, cfg.radius_steps);
    for (int r = 0; r < nrays; ++r) {
        Mat pts(cfg.radius_steps, cfg.dim);
        for (int s = 0; s < cfg.radius_steps; ++s) {
            pts.row(s) = directions.row(r) * report.radii[s];
        }
        const PredictiveDist dist = model(pts);
        const Vec& var = cfg.kind == UncertaintyKind::Epistemic ? dist.epistemic_var
                                                                : dist.total_var;
        stds.row(r) = var.array().max(0.0).sqrt().transpose();
    }

    std::vector<double> all;
    all.reserve(static_cast<std::size_t>(nrays) * cfg.radius_steps);
    for (int s = 0; s < cfg.radius_steps; ++s) {
        const double mean = stds.col(s).mean();
        const double var = (stds.col(s).array() - mean).square().sum() / nrays;
        report.mean_std[s] = mean;
        report.std_std[s] = std::sqrt(var);
        for (int r = 0; r < nrays; ++r) all.push_back(stds(r, s));
    }
    report.percentile997 = percentile(all, 99.7);
    Eigen::Index peak_idx = 0;
    report.peak_value = report.mean_std.maxCoeff(&peak_idx);
    report.peak_radius = report.radii[peak_idx];
    return report;
}

RubScore rub_ideal_score(const RubReport& report, int dim) {
    if (dim < 1) throw std::invalid_argument("rub_ideal_score: dim must be >= 1");
    RubScore score;
    score.peak = report.peak_value;
    score.ideal = std::pow(2.0, -dim);
    score.ratio = report.percentile997 / score.ideal;
    return score;
}

double transfer_eval(const FeatureFn& features, const Dataset& gap_train,
                     const Dataset& gap_test, double alpha, double sigma2) {
    const Mat Phi_train = features(gap_train.X);
    const BlrPosterior post = fit_blr(Phi_train, gap_train.y, alpha, sigma2);
    const PredictiveDist dist = predict_blr(post, features(gap_test.X));
    return avg_log_likelihood(dist, gap_test.y);
}

GapRatioResult epistemic_gap_ratio(const PredictFn& model, const Dataset& gap,
                                   const Dataset& notgap) {
    if (gap.n() == 0 || notgap.n() == 0) {
        throw std::invalid_argument("epistemic_gap_ratio: empty input");
    }
    GapRatioResult result;
    result.gap_mean_std =
        model(gap.X).epistemic_var.array().max(0.0).sqrt().mean();
    result.notgap_mean_std =
        model(notgap.X).epistemic_var.array().max(0.0).sqrt().mean();
    if (result.notgap_mean_std <= 0.0) {
        throw std::runtime_error("epistemic_gap_ratio: zero not-gap uncertainty");
    }
    result.percent_increase =
        100.0 * (result.gap_mean_std / result.notgap_mean_std - 1.0);
    return result;
}

bool gap_detected(const std::vector<double>& percent_increases) {
    if (percent_increases.empty()) {
        throw std::invalid_argument("gap_detected: empty input");
    }
    const double n = static_cast<double>(percent_increases.size());
    double mean = 0.0;
    for (double v : percent_increases) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : percent_increases) var += (v - mean) * (v - mean);
    var /= n;
    return mean - std::sqrt(var) > 0.0;
}

}  // namespace unalab
