// una_lab: deterministic experiment driver for the uncertainty laboratory.
//
// Subcommands: dataset, train, rub, bayesopt, report. Every command is a pure
// function of (config, seed, input files); a manifest with output digests is
// written next to the artifacts. Exit codes: 0 success, 1 runtime error,
// 2 configuration error.

#include "unalab/baselines.hpp"
#include "unalab/bayesopt.hpp"
#include "unalab/bench.hpp"
#include "unalab/blr.hpp"
#include "unalab/gp.hpp"
#include "unalab/net.hpp"
#include "unalab/nlm.hpp"
#include "unalab/numkit.hpp"
#include "unalab/una.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using json = nlohmann::ordered_json;
using namespace unalab;
namespace fs = std::filesystem;

namespace {

constexpr int kModelFormatVersion = 1;

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------- utilities

std::string fnv1a_digest(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << bytes;
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

json load_json(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": config must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw ConfigError(where + ": unknown config key '" + it.key() + "'");
        }
    }
}

json vec_to_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Vec vec_from_json(const json& a) {
    Vec v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
    return v;
}

json mat_to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_to_json(m.row(i).transpose()));
    return rows;
}

Mat mat_from_json(const json& rows) {
    if (rows.empty()) return Mat(0, 0);
    Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        m.row(static_cast<Eigen::Index>(i)) = vec_from_json(rows[i]).transpose();
    }
    return m;
}

// Seed precedence: --seed flag, then config "seed", then UNA_LAB_SEED, then 0.
std::uint64_t resolve_seed(bool seed_given, std::uint64_t flag_seed, const json& cfg) {
    if (seed_given) return flag_seed;
    if (cfg.contains("seed")) return cfg["seed"].get<std::uint64_t>();
    if (const char* env = std::getenv("UNA_LAB_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw ConfigError("UNA_LAB_SEED: not an unsigned integer");
        }
    }
    return 0;
}

// Configs may point at a previous run's manifest; its resolved_config then
// stands in for the plain config object.
json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    json j = load_json(path);
    if (j.contains("resolved_config")) return j["resolved_config"];
    return j;
}

struct ManifestWriter {
    std::string out_dir;
    std::string command;
    json resolved_config;
    std::uint64_t seed = 0;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    std::map<std::string, std::string> digests;

    void add_output(const std::string& name, const std::string& bytes) {
        write_file((fs::path(out_dir) / name).string(), bytes);
        digests[name] = fnv1a_digest(bytes);
    }

    void finish() {
        const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - start)
                            .count();
        json m;
        m["command"] = command;
        m["format_version"] = kModelFormatVersion;
        m["seed"] = seed;
        m["resolved_config"] = resolved_config;
        m["wall_clock_ms"] = ms;
        json outs = json::object();
        for (const auto& [name, digest] : digests) outs[name] = digest;
        m["outputs"] = outs;
        write_file((fs::path(out_dir) / "manifest.json").string(), dump_json(m));
    }
};

std::string format_double(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

std::string dataset_csv(const Dataset& d) {
    std::ostringstream out;
    out.precision(17);
    for (int i = 0; i < d.n(); ++i) {
        for (int j = 0; j < d.dim(); ++j) out << d.X(i, j) << ',';
        out << d.y[i] << '\n';
    }
    return out.str();
}

Mat load_matrix_csv(const std::string& path, bool has_header) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (has_header && lineno == 1) continue;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error(path + ": empty CSV");
    Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size()) throw std::runtime_error(path + ": ragged CSV");
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return m;
}

// --------------------------------------------------------- model machinery

const std::set<std::string> kModelKinds = {
    "nlm-map", "nlm-mle", "nlm-marginal", "luna", "tuna", "gp", "ensemble",
    "ensemble-boot", "ensemble-anchored", "mcd", "sngp", "bnn-hmc"};

bool needs_sigma2(const std::string& kind) {
    return kind != "ensemble" && kind != "ensemble-boot" && kind != "ensemble-anchored";
}

MlpSpec spec_from_cfg(const json& cfg, int input_dim) {
    std::vector<int> hidden = {50, 50};
    if (cfg.contains("hidden")) hidden = cfg["hidden"].get<std::vector<int>>();
    Activation act = Activation::ReLU;
    if (cfg.value("activation", std::string("relu")) == "tanh") act = Activation::Tanh;
    return MlpSpec(input_dim, hidden, act);
}

OptimizerConfig opt_from_cfg(const json& cfg) {
    OptimizerConfig opt;
    const std::string kind = cfg.value("optimizer", std::string("adam"));
    if (kind == "adam") opt.kind = OptKind::Adam;
    else if (kind == "gd") opt.kind = OptKind::GD;
    else if (kind == "sgd") opt.kind = OptKind::SGD;
    else throw ConfigError("optimizer: unknown kind '" + kind + "'");
    opt.learning_rate = cfg.value("lr", 1e-3);
    opt.epochs = cfg.value("epochs", 1000);
    opt.batch_size = cfg.value("batch_size", 0);
    return opt;
}

json spec_to_json(const MlpSpec& spec) {
    json j;
    j["input_dim"] = spec.input_dim;
    j["hidden"] = spec.hidden;
    j["activation"] = spec.activation == Activation::ReLU ? "relu" : "tanh";
    return j;
}

MlpSpec spec_from_json(const json& j) {
    return MlpSpec(j["input_dim"].get<int>(), j["hidden"].get<std::vector<int>>(),
                   j["activation"].get<std::string>() == "tanh" ? Activation::Tanh
                                                                : Activation::ReLU);
}

json stats_to_json(const NormStats& s) {
    json j;
    j["x_mean"] = vec_to_json(s.x_mean);
    j["x_sd"] = vec_to_json(s.x_sd);
    j["y_mean"] = s.y_mean;
    j["y_sd"] = s.y_sd;
    return j;
}

NormStats stats_from_json(const json& j) {
    NormStats s;
    s.x_mean = vec_from_json(j["x_mean"]);
    s.x_sd = vec_from_json(j["x_sd"]);
    s.y_mean = j["y_mean"].get<double>();
    s.y_sd = j["y_sd"].get<double>();
    return s;
}

struct TrainedModel {
    std::string kind;
    json payload;  // everything needed for deterministic re-prediction
};

PredictiveDist predict_from_head(const Vec& w_N, const Mat& V_N, double sigma2,
                                 const Mat& Phi) {
    PredictiveDist dist;
    dist.mean = Phi * w_N;
    dist.epistemic_var = Vec(Phi.rows());
    for (Eigen::Index i = 0; i < Phi.rows(); ++i) {
        const Vec phi = Phi.row(i).transpose();
        dist.epistemic_var[i] = std::max(phi.dot(V_N * phi), 0.0);
    }
    dist.total_var = dist.epistemic_var.array() + sigma2;
    return dist;
}

KernelSpec kernel_from_cfg(const json& cfg) {
    KernelSpec spec;
    const std::string kind = cfg.value("kernel", std::string("rbf"));
    const double amplitude = cfg.value("amplitude", 1.0);
    const double lengthscale = cfg.value("lengthscale", 1.0);
    if (kind == "rbf") spec.terms.push_back(KernelTerm::rbf(amplitude, lengthscale));
    else if (kind == "matern52") spec.terms.push_back(KernelTerm::matern52(amplitude, lengthscale));
    else throw ConfigError("kernel: unknown kind '" + kind + "'");
    if (cfg.contains("white")) spec.terms.push_back(KernelTerm::white(cfg["white"].get<double>()));
    return spec;
}

json kernel_to_json(const KernelSpec& spec) {
    json terms = json::array();
    for (const auto& t : spec.terms) {
        json j;
        switch (t.type) {
            case KernelTerm::Type::RBF: j["type"] = "rbf"; break;
            case KernelTerm::Type::Matern52: j["type"] = "matern52"; break;
            case KernelTerm::Type::White: j["type"] = "white"; break;
        }
        j["amplitude"] = t.amplitude;
        j["lengthscale"] = t.length_scale;
        j["noise_level"] = t.noise_level;
        terms.push_back(j);
    }
    return terms;
}

KernelSpec kernel_from_json(const json& terms) {
    KernelSpec spec;
    for (const auto& j : terms) {
        const std::string type = j["type"].get<std::string>();
        if (type == "rbf") spec.terms.push_back(KernelTerm::rbf(j["amplitude"], j["lengthscale"]));
        else if (type == "matern52") spec.terms.push_back(KernelTerm::matern52(j["amplitude"], j["lengthscale"]));
        else spec.terms.push_back(KernelTerm::white(j["noise_level"]));
    }
    return spec;
}

const std::set<std::string> kCommonKeys = {
    "seed", "sigma2", "alpha", "gamma", "hidden", "activation", "optimizer",
    "lr", "epochs", "batch_size"};

std::set<std::string> with_keys(std::initializer_list<const char*> extra) {
    std::set<std::string> keys = kCommonKeys;
    for (const char* k : extra) keys.insert(k);
    return keys;
}

void require_sigma2(const json& cfg, const std::string& kind) {
    if (!cfg.contains("sigma2")) {
        throw ConfigError(kind + ": config key 'sigma2' is mandatory (hand-tuned noise)");
    }
}

TrainedModel train_model(const std::string& kind, const Dataset& raw, const json& cfg,
                         std::uint64_t seed) {
    if (!kModelKinds.count(kind)) throw ConfigError("--model: unknown model kind '" + kind + "'");
    if (needs_sigma2(kind)) require_sigma2(cfg, kind);
    const NormalizedDataset nd = normalize(raw);
    RngStream stream(seed);
    TrainedModel model;
    model.kind = kind;
    json& p = model.payload;
    p["version"] = kModelFormatVersion;
    p["kind"] = kind;
    p["stats"] = stats_to_json(nd.stats);

    if (kind == "nlm-map" || kind == "nlm-mle" || kind == "nlm-marginal") {
        check_keys(cfg, kCommonKeys, kind);
        NlmConfig c;
        c.spec = spec_from_cfg(cfg, raw.dim());
        c.alpha = cfg.value("alpha", 1.0);
        c.sigma2 = cfg["sigma2"].get<double>();
        c.gamma = cfg.value("gamma", 0.0);
        c.opt = opt_from_cfg(cfg);
        c.mode = kind == "nlm-mle" ? NlmMode::MLE
                 : kind == "nlm-map" ? NlmMode::MAP
                                     : NlmMode::Marginal;
        if (c.mode == NlmMode::MLE) c.gamma = 0.0;
        const NlmResult res = train_nlm(nd.data, c, stream);
        const BlrPosterior post = nlm_posterior(c.spec, res.params, nd.data, c.alpha, c.sigma2);
        p["spec"] = spec_to_json(c.spec);
        p["params"] = vec_to_json(pack_params(c.spec, res.params));
        p["sigma2"] = c.sigma2;
        p["w_N"] = vec_to_json(post.w_N);
        p["V_N"] = mat_to_json(post.V_N);
    } else if (kind == "luna") {
        check_keys(cfg, with_keys({"heads", "sigma_perturb", "schedule", "schedule_scale"}), kind);
        LunaConfig c;
        c.spec = spec_from_cfg(cfg, raw.dim());
        c.num_heads = cfg.value("heads", 20);
        c.alpha = cfg.value("alpha", 1.0);
        c.sigma2 = cfg["sigma2"].get<double>();
        c.gamma = cfg.value("gamma", 0.0);
        c.sigma_perturb = cfg.value("sigma_perturb", 0.1);
        c.opt = opt_from_cfg(cfg);
        const std::string sched = cfg.value("schedule", std::string("sigmoid"));
        if (sched == "constant") c.schedule.kind = ScheduleKind::Constant;
        else if (sched == "sqrt") c.schedule.kind = ScheduleKind::Sqrt;
        else if (sched == "sigmoid") c.schedule.kind = ScheduleKind::Sigmoid;
        else if (sched == "tanh") c.schedule.kind = ScheduleKind::Tanh;
        else throw ConfigError("schedule: unknown kind '" + sched + "'");
        c.schedule.scale = cfg.value("schedule_scale", 1.0);
        c.schedule.total_epochs = std::max(c.opt.epochs, 1);
        const LunaResult res = train_luna(nd.data, c, stream);
        const BlrPosterior post = luna_posterior(c.spec, res.params, nd.data, c.alpha, c.sigma2);
        p["spec"] = spec_to_json(c.spec);
        p["params"] = vec_to_json(pack_params(c.spec, res.params));
        p["sigma2"] = c.sigma2;
        p["w_N"] = vec_to_json(post.w_N);
        p["V_N"] = mat_to_json(post.V_N);
    } else if (kind == "tuna") {
        check_keys(cfg, with_keys({"heads", "sigma_x", "kernel", "amplitude", "lengthscale", "white"}), kind);
        TunaConfig c;
        c.spec = spec_from_cfg(cfg, raw.dim());
        c.opt = opt_from_cfg(cfg);
        const int M = cfg.value("heads", 40);
        const double sigma_x = cfg.value("sigma_x", 0.1);
        const double alpha = cfg.value("alpha", 1.0);
        const double sigma2 = cfg["sigma2"].get<double>();
        RngStream ref_stream = stream.split(10);
        const Mat x_ref = make_reference_points(nd.data.X, sigma_x, ref_stream);
        const ReferenceSet refs = build_reference_set(x_ref, kernel_from_cfg(cfg), M, ref_stream);
        const TunaResult res = train_tuna(refs, c, stream);
        const BlrPosterior post = tuna_posterior(c.spec, res.params, nd.data, alpha, sigma2);
        p["spec"] = spec_to_json(c.spec);
        p["params"] = vec_to_json(pack_params(c.spec, res.params));
        p["sigma2"] = sigma2;
        p["w_N"] = vec_to_json(post.w_N);
        p["V_N"] = mat_to_json(post.V_N);
    } else if (kind == "gp") {
        check_keys(cfg, with_keys({"kernel", "amplitude", "lengthscale", "white"}), kind);
        const double noise2 = cfg["sigma2"].get<double>();
        const KernelSpec kspec = kernel_from_cfg(cfg);
        gp_fit(nd.data.X, nd.data.y, kspec, noise2);  // validates up front
        p["X"] = mat_to_json(nd.data.X);
        p["y"] = vec_to_json(nd.data.y);
        p["kernel"] = kernel_to_json(kspec);
        p["sigma2"] = noise2;
    } else if (kind == "ensemble" || kind == "ensemble-boot" || kind == "ensemble-anchored") {
        check_keys(cfg, with_keys({"members", "sigma_init2", "sigma_prior2", "sigma_eps2"}), kind);
        EnsembleConfig c;
        c.spec = spec_from_cfg(cfg, raw.dim());
        c.members = cfg.value("members", 5);
        c.gamma = cfg.value("gamma", 0.0);
        c.sigma_init2 = cfg.value("sigma_init2", 1.0);
        c.sigma_prior2 = cfg.value("sigma_prior2", 1.0);
        c.sigma_eps2 = cfg.value("sigma_eps2", 1.0);
        c.opt = opt_from_cfg(cfg);
        c.variant = kind == "ensemble" ? EnsembleVariant::Vanilla
                    : kind == "ensemble-boot" ? EnsembleVariant::Bootstrap
                                              : EnsembleVariant::Anchored;
        const EnsembleModel em = train_ensemble(nd.data, c, stream);
        p["spec"] = spec_to_json(c.spec);
        json members = json::array();
        for (const auto& m : em.members) members.push_back(vec_to_json(pack_params(c.spec, m)));
        p["members"] = members;
    } else if (kind == "mcd") {
        check_keys(cfg, with_keys({"rate", "passes"}), kind);
        McdConfig c;
        c.spec = spec_from_cfg(cfg, raw.dim());
        c.rate = cfg.value("rate", 0.1);
        c.passes = cfg.value("passes", 50);
        c.gamma = cfg.value("gamma", 0.0);
        c.sigma2 = cfg["sigma2"].get<double>();
        c.opt = opt_from_cfg(cfg);
        const McdModel mm = mcd_train(nd.data, c, stream);
        p["spec"] = spec_to_json(c.spec);
        p["params"] = vec_to_json(pack_params(c.spec, mm.params));
        p["rate"] = c.rate;
        p["passes"] = c.passes;
        p["sigma2"] = c.sigma2;
        p["predict_seed"] = stream.split(99).seed();
    } else if (kind == "sngp") {
        check_keys(cfg, with_keys({"c", "power_iters", "rff", "lengthscale"}), kind);
        SngpConfig c;
        c.spec = spec_from_cfg(cfg, raw.dim());
        c.c = cfg.value("c", 1.0);
        c.power_iters = cfg.value("power_iters", 10);
        c.rff = cfg.value("rff", 200);
        c.lengthscale = cfg.value("lengthscale", 1.0);
        c.alpha = cfg.value("alpha", 1.0);
        c.sigma2 = cfg["sigma2"].get<double>();
        c.opt = opt_from_cfg(cfg);
        const SngpModel sm = train_sngp(nd.data, c, stream);
        p["spec"] = spec_to_json(c.spec);
        p["params"] = vec_to_json(pack_params(c.spec, sm.params));
        p["W_L"] = mat_to_json(sm.W_L);
        p["b_L"] = vec_to_json(sm.b_L);
        p["sigma2"] = c.sigma2;
        p["w_N"] = vec_to_json(sm.head.w_N);
        p["V_N"] = mat_to_json(sm.head.V_N);
    } else if (kind == "bnn-hmc") {
        check_keys(cfg, with_keys({"step_size", "leapfrog", "iterations", "burn_in", "thin",
                                   "mass", "prior_sd"}), kind);
        HmcConfig c;
        c.step_size = cfg.value("step_size", 1e-3);
        c.leapfrog = cfg.value("leapfrog", 20);
        c.iterations = cfg.value("iterations", 500);
        c.burn_in = cfg.value("burn_in", 100);
        c.thin = cfg.value("thin", 5);
        c.mass = cfg.value("mass", 1.0);
        c.prior_sd = cfg.value("prior_sd", 1.0);
        c.noise_sd = std::sqrt(cfg["sigma2"].get<double>());
        const MlpSpec spec = spec_from_cfg(cfg, raw.dim());
        // The predictive is a pure function of the thinned trace; persist it.
        RngStream init_stream = stream.split(0);
        RngStream chain_stream = stream.split(1);
        const double prior_var = c.prior_sd * c.prior_sd;
        const double noise_var = c.noise_sd * c.noise_sd;
        const Dataset& data = nd.data;
        PotentialFn U = [&](const Vec& q, Vec* grad) {
            const MlpParams params = unpack_params(spec, q);
            ForwardCache cache;
            const Vec out = mlp_forward(spec, params, data.X, grad ? &cache : nullptr);
            const Vec r = out - data.y;
            double value = q.squaredNorm() / (2.0 * prior_var) +
                           r.squaredNorm() / (2.0 * noise_var);
            if (grad) {
                *grad = q / prior_var +
                        pack_params(spec, mlp_backward(spec, params, cache, Vec(r / noise_var)));
            }
            return value;
        };
        const Vec q0 = pack_params(spec, mlp_init(spec, init_stream));
        const Mat trace = hmc_sample(U, c, q0, chain_stream);
        json kept = json::array();
        for (int t = c.burn_in; t < c.iterations; t += c.thin) {
            kept.push_back(vec_to_json(trace.row(t).transpose()));
        }
        p["spec"] = spec_to_json(spec);
        p["trace"] = kept;
        p["sigma2"] = noise_var;
    }
    return model;
}

// Prediction on the raw input scale; uncertainty reported in raw target units.
PredictiveDist predict_model(const TrainedModel& model, const Mat& Xraw) {
    const json& p = model.payload;
    const NormStats stats = stats_from_json(p["stats"]);
    const Mat Xn = normalize_inputs(Xraw, stats);
    PredictiveDist dist;
    const std::string& kind = model.kind;
    if (kind == "nlm-map" || kind == "nlm-mle" || kind == "nlm-marginal" ||
        kind == "luna" || kind == "tuna") {
        const MlpSpec spec = spec_from_json(p["spec"]);
        const MlpParams params = unpack_params(spec, vec_from_json(p["params"]));
        const Mat Phi = mlp_features(spec, params, Xn);
        dist = predict_from_head(vec_from_json(p["w_N"]), mat_from_json(p["V_N"]),
                                 p["sigma2"].get<double>(), Phi);
    } else if (kind == "gp") {
        const GpPosterior post = gp_fit(mat_from_json(p["X"]), vec_from_json(p["y"]),
                                        kernel_from_json(p["kernel"]),
                                        p["sigma2"].get<double>());
        dist = gp_predict(post, Xn);
    } else if (kind == "ensemble" || kind == "ensemble-boot" || kind == "ensemble-anchored") {
        EnsembleModel em;
        em.spec = spec_from_json(p["spec"]);
        for (const auto& m : p["members"]) {
            em.members.push_back(unpack_params(em.spec, vec_from_json(m)));
        }
        dist = ensemble_predict(em, Xn);
    } else if (kind == "mcd") {
        McdModel mm;
        mm.spec = spec_from_json(p["spec"]);
        mm.params = unpack_params(mm.spec, vec_from_json(p["params"]));
        mm.rate = p["rate"].get<double>();
        mm.passes = p["passes"].get<int>();
        mm.sigma2 = p["sigma2"].get<double>();
        RngStream predict_stream(p["predict_seed"].get<std::uint64_t>());
        dist = mcd_predict(mm, Xn, predict_stream);
    } else if (kind == "sngp") {
        const MlpSpec spec = spec_from_json(p["spec"]);
        const MlpParams params = unpack_params(spec, vec_from_json(p["params"]));
        const Mat phi_body = mlp_features(spec, params, Xn);
        const Mat H = phi_body.leftCols(phi_body.cols() - 1);
        const Mat Phi = rff_features(mat_from_json(p["W_L"]), vec_from_json(p["b_L"]), H);
        dist = predict_from_head(vec_from_json(p["w_N"]), mat_from_json(p["V_N"]),
                                 p["sigma2"].get<double>(), Phi);
    } else if (kind == "bnn-hmc") {
        const MlpSpec spec = spec_from_json(p["spec"]);
        const json& kept = p["trace"];
        Mat preds(Xn.rows(), static_cast<Eigen::Index>(kept.size()));
        for (std::size_t i = 0; i < kept.size(); ++i) {
            const MlpParams params = unpack_params(spec, vec_from_json(kept[i]));
            preds.col(static_cast<Eigen::Index>(i)) = mlp_forward(spec, params, Xn);
        }
        dist.mean = preds.rowwise().mean();
        dist.epistemic_var = (preds.colwise() - dist.mean).rowwise().squaredNorm() /
                             static_cast<double>(kept.size());
        dist.total_var = dist.epistemic_var.array() + p["sigma2"].get<double>();
    } else {
        throw std::runtime_error("predict_model: unknown kind " + kind);
    }
    return denormalize_dist(dist, stats);
}

TrainedModel load_model(const std::string& path) {
    json p = load_json(path);
    if (!p.contains("version") || p["version"].get<int>() != kModelFormatVersion) {
        throw std::runtime_error(path + ": unsupported model format version");
    }
    TrainedModel model;
    model.kind = p["kind"].get<std::string>();
    model.payload = std::move(p);
    return model;
}

std::string predictions_csv(const Mat& Xraw, const PredictiveDist& dist) {
    std::ostringstream out;
    out.precision(17);
    for (int d = 0; d < Xraw.cols(); ++d) out << 'x' << (d + 1) << ',';
    out << "mean,std_total,std_epistemic\n";
    for (Eigen::Index i = 0; i < Xraw.rows(); ++i) {
        for (Eigen::Index d = 0; d < Xraw.cols(); ++d) out << Xraw(i, d) << ',';
        out << dist.mean[i] << ',' << std::sqrt(std::max(dist.total_var[i], 0.0)) << ','
            << std::sqrt(std::max(dist.epistemic_var[i], 0.0)) << '\n';
    }
    return out.str();
}

// ----------------------------------------------------------------- plotting

std::string svg_polyline(const std::vector<std::pair<double, double>>& pts,
                         const std::string& style) {
    std::ostringstream out;
    out.precision(6);
    out << "  <polyline fill=\"none\" " << style << " points=\"";
    for (const auto& [x, y] : pts) out << x << ',' << y << ' ';
    out << "\"/>\n";
    return out.str();
}

std::string write_rub_svg(const RubReport& report, double ideal) {
    const double W = 800.0, H = 500.0;
    const double ml = 60.0, mr = 20.0, mt = 20.0, mb = 40.0;
    double ymax = ideal;
    for (Eigen::Index i = 0; i < report.radii.size(); ++i) {
        ymax = std::max(ymax, report.mean_std[i] + report.std_std[i]);
    }
    if (ymax <= 0.0) ymax = 1.0;
    ymax *= 1.1;
    const double xmax = report.radii[report.radii.size() - 1];
    auto px = [&](double r) { return ml + (W - ml - mr) * (xmax > 0 ? r / xmax : 0.0); };
    auto py = [&](double v) { return H - mb - (H - mt - mb) * (v / ymax); };

    std::ostringstream out;
    out.precision(6);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 500\" "
           "width=\"800\" height=\"500\">\n";
    out << "  <rect x=\"0\" y=\"0\" width=\"800\" height=\"500\" fill=\"white\"/>\n";
    // band polygon: mean + std forward, mean - std backward
    out << "  <polygon fill=\"#4477aa\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
    for (Eigen::Index i = 0; i < report.radii.size(); ++i) {
        out << px(report.radii[i]) << ',' << py(report.mean_std[i] + report.std_std[i]) << ' ';
    }
    for (Eigen::Index i = report.radii.size() - 1; i >= 0; --i) {
        out << px(report.radii[i]) << ','
            << py(std::max(report.mean_std[i] - report.std_std[i], 0.0)) << ' ';
    }
    out << "\"/>\n";
    std::vector<std::pair<double, double>> mean_pts, ideal_pts, x_axis, y_axis;
    for (Eigen::Index i = 0; i < report.radii.size(); ++i) {
        mean_pts.emplace_back(px(report.radii[i]), py(report.mean_std[i]));
    }
    ideal_pts.emplace_back(px(0.0), py(ideal));
    ideal_pts.emplace_back(px(xmax), py(ideal));
    x_axis.emplace_back(ml, H - mb);
    x_axis.emplace_back(W - mr, H - mb);
    y_axis.emplace_back(ml, mt);
    y_axis.emplace_back(ml, H - mb);
    out << svg_polyline(x_axis, "stroke=\"black\" stroke-width=\"1\"");
    out << svg_polyline(y_axis, "stroke=\"black\" stroke-width=\"1\"");
    out << svg_polyline(mean_pts, "stroke=\"#4477aa\" stroke-width=\"2\"");
    out << svg_polyline(ideal_pts,
                        "stroke=\"#cc3311\" stroke-width=\"1.5\" stroke-dasharray=\"6,4\"");
    out << "  <text x=\"" << (W / 2) << "\" y=\"" << (H - 8)
        << "\" text-anchor=\"middle\" font-size=\"14\">radius</text>\n";
    out << "  <text x=\"16\" y=\"" << (H / 2)
        << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 16 "
        << (H / 2) << ")\">uncertainty std</text>\n";
    out << "</svg>\n";
    return out.str();
}

// --------------------------------------------------------------- commands

struct DatasetArgs {
    std::string gen;
    std::string out_dir = ".";
    std::string in_csv;
    int feature = 0;
    int target = -1;
    bool has_header = false;
    int dim = 1;
    int count = -1;
    std::string region = "notgap";
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string config_path;
};

void cmd_dataset(const DatasetArgs& a) {
    const json cfg = load_config(a.config_path);
    check_keys(cfg, {"seed", "gen", "in", "feature", "target", "has_header", "dim",
                     "count", "region"},
               "dataset");
    const std::uint64_t seed = resolve_seed(a.seed_given, a.seed, cfg);
    const std::string gen = !a.gen.empty() ? a.gen : cfg.value("gen", std::string());
    const std::string in_csv = !a.in_csv.empty() ? a.in_csv : cfg.value("in", std::string());
    const int feature = cfg.contains("feature") && a.feature == 0 ? cfg["feature"].get<int>()
                                                                  : a.feature;
    const int dim = cfg.contains("dim") && a.dim == 1 ? cfg["dim"].get<int>() : a.dim;
    const int count = cfg.contains("count") && a.count == -1 ? cfg["count"].get<int>() : a.count;
    const std::string region =
        cfg.contains("region") && a.region == "notgap" ? cfg["region"].get<std::string>()
                                                       : a.region;

    fs::create_directories(a.out_dir);
    ManifestWriter manifest;
    manifest.out_dir = a.out_dir;
    manifest.command = "dataset";
    manifest.seed = seed;
    json resolved;
    resolved["gen"] = gen;
    resolved["seed"] = seed;

    RngStream stream(seed);
    if (gen == "cubic-gap") {
        manifest.add_output("data.csv", dataset_csv(gen_cubic_gap(stream)));
    } else if (gen == "squiggle") {
        if (region != "gap" && region != "notgap") {
            throw ConfigError("--region: expected 'gap' or 'notgap'");
        }
        resolved["region"] = region;
        manifest.add_output("data.csv",
                            dataset_csv(gen_squiggle(stream, region == "gap"
                                                                 ? SquiggleRegion::Gap
                                                                 : SquiggleRegion::NotGap)));
    } else if (gen == "radial-shell") {
        if (dim < 1) throw ConfigError("--dim: must be >= 1");
        resolved["dim"] = dim;
        resolved["count"] = count;
        manifest.add_output("data.csv", dataset_csv(gen_radial_shell(dim, stream, count)));
    } else if (gen == "uci-gap") {
        if (in_csv.empty()) throw ConfigError("--in: required for the uci-gap generator");
        const int target = cfg.contains("target") && a.target == -1 ? cfg["target"].get<int>()
                                                                    : a.target;
        const Mat all = load_matrix_csv(in_csv, a.has_header);
        const int tcol = target < 0 ? static_cast<int>(all.cols()) - 1 : target;
        if (tcol < 0 || tcol >= all.cols()) throw ConfigError("--target: column out of range");
        resolved["in"] = in_csv;
        resolved["feature"] = feature;
        resolved["target"] = tcol;
        Dataset data;
        data.X = Mat(all.rows(), all.cols() - 1);
        data.y = all.col(tcol);
        for (int j = 0, k = 0; j < all.cols(); ++j) {
            if (j != tcol) data.X.col(k++) = all.col(j);
        }
        const GapSplit split = uci_gap_transform(data, feature);
        manifest.add_output("train.csv", dataset_csv(split.train));
        manifest.add_output("gap.csv", dataset_csv(split.gap));
    } else {
        throw ConfigError("--gen: unknown generator '" + gen + "'");
    }
    manifest.resolved_config = resolved;
    manifest.finish();
}

struct TrainArgs {
    std::string model;
    std::string data_csv;
    std::string predict_csv;
    std::string load_path;
    std::string config_path;
    std::string out_dir = ".";
    int target = -1;
    bool has_header = false;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

int resolved_target(int target, int width) {
    return target < 0 ? width - 1 : target;
}

void cmd_train(const TrainArgs& a) {
    json cfg = load_config(a.config_path);
    const std::uint64_t seed = resolve_seed(a.seed_given, a.seed, cfg);
    // A manifest's resolved config records the model kind; honor it as a
    // fallback and keep it out of the per-model key check.
    std::string kind = a.model;
    if (cfg.contains("model")) {
        if (kind.empty()) kind = cfg["model"].get<std::string>();
        cfg.erase("model");
    }
    if (kind.empty() && a.load_path.empty()) {
        throw ConfigError("--model: required unless --load is given");
    }
    if (!kind.empty() && !kModelKinds.count(kind)) {
        throw ConfigError("--model: unknown model kind '" + kind + "'");
    }
    const bool need_data = a.load_path.empty() || a.predict_csv.empty();
    if (a.data_csv.empty() && need_data) throw ConfigError("--data: required");

    Dataset raw;
    if (!a.data_csv.empty()) {
        const Mat all = load_matrix_csv(a.data_csv, a.has_header);
        const int tcol = resolved_target(a.target, static_cast<int>(all.cols()));
        if (tcol < 0 || tcol >= all.cols()) throw ConfigError("--target: column out of range");
        raw.X = Mat(all.rows(), all.cols() - 1);
        raw.y = all.col(tcol);
        for (int j = 0, k = 0; j < all.cols(); ++j) {
            if (j != tcol) raw.X.col(k++) = all.col(j);
        }
    }

    TrainedModel model = a.load_path.empty() ? train_model(kind, raw, cfg, seed)
                                             : load_model(a.load_path);

    Mat Xq = raw.X;
    if (!a.predict_csv.empty()) Xq = load_matrix_csv(a.predict_csv, false);
    const PredictiveDist dist = predict_model(model, Xq);

    fs::create_directories(a.out_dir);
    ManifestWriter manifest;
    manifest.out_dir = a.out_dir;
    manifest.command = "train";
    manifest.seed = seed;
    json resolved = cfg;
    resolved["seed"] = seed;
    resolved["model"] = model.kind;
    manifest.resolved_config = resolved;
    manifest.add_output("model.json", dump_json(model.payload));
    manifest.add_output("predictions.csv", predictions_csv(Xq, dist));
    manifest.finish();
}

struct RubArgs {
    std::string model;
    std::string config_path;
    std::string out_dir = ".";
    int dim = 1;
    int rays = 1000;
    int count = -1;
    int steps = 100;
    double r_max = 3.0;
    std::string kind = "epistemic";
    std::uint64_t seed = 0;
    bool seed_given = false;
};

// Flag values fall back to the config (e.g. a manifest's resolved config)
// when the flag was left at its default.
template <typename T>
T cfg_or(const json& cfg, const char* key, const T& flag_value, const T& flag_default) {
    if (cfg.contains(key) && flag_value == flag_default) return cfg[key].get<T>();
    return flag_value;
}

void cmd_rub(const RubArgs& a) {
    json cfg = load_config(a.config_path);
    const std::uint64_t seed = resolve_seed(a.seed_given, a.seed, cfg);
    const std::string model = cfg_or(cfg, "model", a.model, std::string());
    const int dim = cfg_or(cfg, "dim", a.dim, 1);
    const int rays = cfg_or(cfg, "rays", a.rays, 1000);
    const int count = cfg_or(cfg, "count", a.count, -1);
    const int steps = cfg_or(cfg, "steps", a.steps, 100);
    const double r_max = cfg_or(cfg, "r_max", a.r_max, 3.0);
    const std::string kind = cfg_or(cfg, "kind", a.kind, std::string("epistemic"));
    for (const char* k : {"model", "dim", "rays", "count", "steps", "r_max", "kind"}) {
        cfg.erase(k);
    }
    if (dim < 1) throw ConfigError("--dim: must be >= 1");
    if (model.empty() || !kModelKinds.count(model)) {
        throw ConfigError("--model: unknown model kind '" + model + "'");
    }
    if (kind != "epistemic" && kind != "total") {
        throw ConfigError("--kind: expected 'epistemic' or 'total'");
    }

    RngStream master(seed);
    RngStream data_stream = master.split(0);
    RngStream train_stream = master.split(1);
    RngStream ray_stream = master.split(2);

    Dataset shell = gen_radial_shell(dim, data_stream, count);
    const TrainedModel trained = train_model(model, shell, cfg, train_stream.seed());
    const NormStats stats = stats_from_json(trained.payload["stats"]);

    // RUB profiles live on the normalized target scale (ideal peak 1/2^D).
    PredictFn fn = [&](const Mat& X) {
        PredictiveDist d = predict_model(trained, X);
        const double s2 = stats.y_sd * stats.y_sd;
        d.mean = (d.mean.array() - stats.y_mean) / stats.y_sd;
        d.total_var /= s2;
        d.epistemic_var /= s2;
        return d;
    };
    RubConfig rc;
    rc.dim = dim;
    rc.rays = rays;
    rc.r_max = r_max;
    rc.radius_steps = steps;
    rc.kind = kind == "total" ? UncertaintyKind::Total : UncertaintyKind::Epistemic;
    const RubReport report = rub_run(fn, rc, ray_stream);
    const RubScore score = rub_ideal_score(report, dim);

    fs::create_directories(a.out_dir);
    ManifestWriter manifest;
    manifest.out_dir = a.out_dir;
    manifest.command = "rub";
    manifest.seed = seed;
    json resolved = cfg;
    resolved["seed"] = seed;
    resolved["model"] = model;
    resolved["dim"] = dim;
    resolved["rays"] = rays;
    resolved["count"] = count;
    resolved["steps"] = steps;
    resolved["r_max"] = r_max;
    resolved["kind"] = kind;
    manifest.resolved_config = resolved;

    std::ostringstream csv;
    csv.precision(17);
    csv << "radius,mean_std,std_std\n";
    for (Eigen::Index i = 0; i < report.radii.size(); ++i) {
        csv << report.radii[i] << ',' << report.mean_std[i] << ',' << report.std_std[i] << '\n';
    }
    json summary;
    summary["dim"] = dim;
    summary["percentile997"] = report.percentile997;
    summary["peak_value"] = report.peak_value;
    summary["peak_radius"] = report.peak_radius;
    summary["ideal"] = score.ideal;
    summary["ratio"] = score.ratio;
    manifest.add_output("rub.csv", csv.str());
    manifest.add_output("rub.json", dump_json(summary));
    manifest.add_output("rub.svg", write_rub_svg(report, score.ideal));
    manifest.finish();
}

struct BoArgs {
    std::string objective = "branin";
    std::string surrogate = "gp";
    std::string config_path;
    std::string out_dir = ".";
    int steps = 50;
    int init_points = 5;
    int restarts = 1;
    int candidates = 2000;
    int jobs = 1;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

SurrogateFactory nlm_bo_factory(const json& cfg, const std::string& kind) {
    return [cfg, kind](const Mat& X, const Vec& y) -> SurrogateFn {
        Dataset raw{X, y};
        json c = cfg;
        if (!c.contains("sigma2")) c["sigma2"] = 1e-3;
        if (!c.contains("epochs")) c["epochs"] = 500;
        if (!c.contains("hidden")) c["hidden"] = std::vector<int>{50, 50};
        const TrainedModel model = train_model(kind, raw, c, c.value("seed", 0ULL));
        return [model](const Mat& Xq) { return predict_model(model, Xq); };
    };
}

void cmd_bayesopt(const BoArgs& a) {
    json cfg = load_config(a.config_path);
    const std::uint64_t seed = resolve_seed(a.seed_given, a.seed, cfg);
    const std::string objective_name =
        cfg_or(cfg, "objective", a.objective, std::string("branin"));
    const std::string surrogate = cfg_or(cfg, "surrogate", a.surrogate, std::string("gp"));
    const int steps = cfg_or(cfg, "steps", a.steps, 50);
    const int init_points = cfg_or(cfg, "init", a.init_points, 5);
    const int restarts = cfg_or(cfg, "restarts", a.restarts, 1);
    const int candidates = cfg_or(cfg, "candidates", a.candidates, 2000);
    for (const char* k : {"objective", "surrogate", "steps", "init", "restarts",
                          "candidates"}) {
        cfg.erase(k);
    }
    // The surrogate trainer keys off the resolved seed, not the raw config.
    cfg["seed"] = seed;

    ObjectiveSpec objective;
    if (objective_name == "branin") objective = branin_objective();
    else if (objective_name == "hartmann6") objective = hartmann6_objective();
    else throw ConfigError("--objective: unknown objective '" + objective_name + "'");

    SurrogateFactory factory;
    if (surrogate == "gp") factory = gp_surrogate_factory();
    else if (surrogate == "nlm") factory = nlm_bo_factory(cfg, "nlm-map");
    else if (surrogate == "luna") factory = nlm_bo_factory(cfg, "luna");
    else throw ConfigError("--surrogate: unknown surrogate '" + surrogate + "'");

    if (restarts < 1) throw ConfigError("--restarts: must be >= 1");
    if (a.jobs < 1) throw ConfigError("--jobs: must be >= 1");
    BoConfig bc;
    bc.init_points = init_points;
    bc.steps = steps;
    bc.candidates = candidates;
    bc.validate();

    RngStream master(seed);
    std::vector<BoResult> results(restarts);
    std::vector<std::exception_ptr> errors(restarts);
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int r = next.fetch_add(1);
            if (r >= restarts) return;
            try {
                RngStream stream = master.split(static_cast<std::uint64_t>(r));
                results[r] = bayesopt_loop(objective, factory, bc, stream);
            } catch (...) {
                errors[r] = std::current_exception();
            }
        }
    };
    const int jobs = std::min(a.jobs, restarts);
    std::vector<std::thread> pool;
    for (int t = 1; t < jobs; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    fs::create_directories(a.out_dir);
    ManifestWriter manifest;
    manifest.out_dir = a.out_dir;
    manifest.command = "bayesopt";
    manifest.seed = seed;
    json resolved = cfg;
    resolved["seed"] = seed;
    resolved["objective"] = objective_name;
    resolved["surrogate"] = surrogate;
    resolved["steps"] = steps;
    resolved["init"] = init_points;
    resolved["restarts"] = restarts;
    resolved["candidates"] = candidates;
    manifest.resolved_config = resolved;

    Vec finals(restarts);
    for (int r = 0; r < restarts; ++r) {
        const BoResult& res = results[r];
        std::ostringstream csv;
        csv.precision(17);
        csv << "step,";
        for (int d = 0; d < objective.dim; ++d) csv << 'x' << (d + 1) << ',';
        csv << "f,best_error\n";
        for (Eigen::Index i = 0; i < res.values.size(); ++i) {
            csv << i << ',';
            for (int d = 0; d < objective.dim; ++d) csv << res.queries(i, d) << ',';
            csv << res.values[i] << ',' << res.best_error[i] << '\n';
        }
        finals[r] = res.best_error[res.best_error.size() - 1];
        manifest.add_output("bo_restart_" + std::to_string(r) + ".csv", csv.str());
    }
    const double mean_final = finals.mean();
    const double std_final =
        std::sqrt((finals.array() - mean_final).square().sum() / restarts);
    json summary;
    summary["objective"] = objective_name;
    summary["surrogate"] = surrogate;
    summary["restarts"] = restarts;
    summary["mean_final_error"] = mean_final;
    summary["std_final_error"] = std_final;
    manifest.add_output("summary.json", dump_json(summary));
    manifest.finish();
}

struct ReportArgs {
    std::vector<std::string> gap_csvs;
    std::vector<std::string> notgap_csvs;
    std::string out_dir = ".";
};

void cmd_report(const ReportArgs& a) {
    if (a.gap_csvs.empty() || a.gap_csvs.size() != a.notgap_csvs.size()) {
        throw ConfigError("--gap/--notgap: need matching non-empty file lists");
    }
    std::vector<double> ratios;
    std::ostringstream csv;
    csv.precision(17);
    csv << "pair,gap_mean_std,notgap_mean_std,percent_increase\n";
    for (std::size_t i = 0; i < a.gap_csvs.size(); ++i) {
        const Mat gap = load_matrix_csv(a.gap_csvs[i], true);
        const Mat notgap = load_matrix_csv(a.notgap_csvs[i], true);
        if (gap.cols() != notgap.cols() || gap.cols() < 4) {
            throw std::runtime_error("report: prediction schemas do not match");
        }
        const double g = gap.col(gap.cols() - 1).mean();
        const double n = notgap.col(notgap.cols() - 1).mean();
        if (n == 0.0) throw std::runtime_error("report: zero not-gap epistemic std");
        const double ratio = 100.0 * (g / n - 1.0);
        ratios.push_back(ratio);
        csv << i << ',' << g << ',' << n << ',' << ratio << '\n';
    }
    const bool detected = gap_detected(ratios);
    json summary;
    summary["pairs"] = ratios.size();
    summary["percent_increases"] = ratios;
    summary["detected"] = detected;

    fs::create_directories(a.out_dir);
    ManifestWriter manifest;
    manifest.out_dir = a.out_dir;
    manifest.command = "report";
    json resolved;
    resolved["gap"] = a.gap_csvs;
    resolved["notgap"] = a.notgap_csvs;
    manifest.resolved_config = resolved;
    manifest.add_output("ratios.csv", csv.str());
    manifest.add_output("report.json", dump_json(summary));
    manifest.finish();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"una_lab: Bayesian deep-regression experiment driver"};
    app.require_subcommand(1);

    DatasetArgs da;
    auto* ds = app.add_subcommand("dataset", "Generate or transform a dataset");
    ds->add_option("--gen", da.gen, "cubic-gap | squiggle | radial-shell | uci-gap");
    ds->add_option("--out", da.out_dir, "Output directory");
    ds->add_option("--in", da.in_csv, "Input CSV (uci-gap)");
    ds->add_option("--feature", da.feature, "Gap feature index (uci-gap)");
    ds->add_option("--target", da.target, "Target column, -1 = last");
    ds->add_flag("--has-header", da.has_header, "Input CSV has a header row");
    ds->add_option("--dim", da.dim, "Dimension (radial-shell)");
    ds->add_option("--count", da.count, "Sample count (radial-shell)");
    ds->add_option("--region", da.region, "gap | notgap (squiggle)");
    ds->add_option("--config", da.config_path, "JSON config or manifest");
    auto* ds_seed = ds->add_option("--seed", da.seed, "Master seed");

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "Train a model and emit predictions");
    tr->add_option("--model", ta.model, "Model kind");
    tr->add_option("--data", ta.data_csv, "Training CSV");
    tr->add_option("--predict", ta.predict_csv, "Inputs-only CSV of query points");
    tr->add_option("--load", ta.load_path, "Reload a serialized model instead of training");
    tr->add_option("--config", ta.config_path, "JSON config or manifest");
    tr->add_option("--out", ta.out_dir, "Output directory");
    tr->add_option("--target", ta.target, "Target column, -1 = last");
    tr->add_flag("--has-header", ta.has_header, "Training CSV has a header row");
    auto* tr_seed = tr->add_option("--seed", ta.seed, "Master seed");

    RubArgs ra;
    auto* ru = app.add_subcommand("rub", "Radial uncertainty benchmark");
    ru->add_option("--model", ra.model, "Model kind");
    ru->add_option("--config", ra.config_path, "JSON config or manifest");
    ru->add_option("--out", ra.out_dir, "Output directory");
    ru->add_option("--dim", ra.dim, "Shell dimension");
    ru->add_option("--rays", ra.rays, "Ray count (ignored in 1D)");
    ru->add_option("--count", ra.count, "Shell sample count, -1 = reference counts");
    ru->add_option("--steps", ra.steps, "Radius grid steps");
    ru->add_option("--rmax", ra.r_max, "Maximum radius");
    ru->add_option("--kind", ra.kind, "epistemic | total");
    auto* ru_seed = ru->add_option("--seed", ra.seed, "Master seed");

    BoArgs ba;
    auto* bo = app.add_subcommand("bayesopt", "Bayesian optimization benchmark");
    bo->add_option("--objective", ba.objective, "branin | hartmann6");
    bo->add_option("--surrogate", ba.surrogate, "gp | nlm | luna");
    bo->add_option("--config", ba.config_path, "JSON config or manifest");
    bo->add_option("--out", ba.out_dir, "Output directory");
    bo->add_option("--steps", ba.steps, "Optimization steps");
    bo->add_option("--init", ba.init_points, "Initial uniform samples");
    bo->add_option("--restarts", ba.restarts, "Independent restarts");
    bo->add_option("--candidates", ba.candidates, "Acquisition candidate count");
    bo->add_option("--jobs", ba.jobs, "Parallel restart workers");
    auto* bo_seed = bo->add_option("--seed", ba.seed, "Master seed");

    ReportArgs ra2;
    auto* re = app.add_subcommand("report", "Epistemic gap-ratio report");
    re->add_option("--gap", ra2.gap_csvs, "Gap prediction CSVs");
    re->add_option("--notgap", ra2.notgap_csvs, "Not-gap prediction CSVs");
    re->add_option("--out", ra2.out_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (ds->parsed()) {
            da.seed_given = ds_seed->count() > 0;
            cmd_dataset(da);
        } else if (tr->parsed()) {
            ta.seed_given = tr_seed->count() > 0;
            cmd_train(ta);
        } else if (ru->parsed()) {
            ra.seed_given = ru_seed->count() > 0;
            cmd_rub(ra);
        } else if (bo->parsed()) {
            ba.seed_given = bo_seed->count() > 0;
            cmd_bayesopt(ba);
        } else if (re->parsed()) {
            cmd_report(ra2);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
