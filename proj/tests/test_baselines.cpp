#include "unalab/baselines.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace unalab;

TEST_SUITE_BEGIN("baselines");

namespace {

Dataset line_data(int n) {
    Dataset data;
    data.X = Mat(n, 1);
    for (int i = 0; i < n; ++i) data.X(i, 0) = -1.0 + 2.0 * i / (n - 1);
    data.y = 2.0 * data.X.col(0);
    return data;
}

}  // namespace

TEST_CASE("ensemble config validation") {
    EnsembleConfig cfg{MlpSpec(1, {4}, Activation::ReLU)};
    cfg.members = 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.members = 2;
    CHECK_NOTHROW(cfg.validate());
    cfg.sigma_prior2 = 0.0;
    cfg.variant = EnsembleVariant::Anchored;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("anchored loss hand values") {
    const MlpSpec spec(1, {3}, Activation::ReLU);
    RngStream stream(1);
    const MlpParams p = mlp_init(spec, stream);
    const Dataset data = line_data(6);
    const Vec out = mlp_forward(spec, p, data.X);
    const double data_term = (data.y - out).squaredNorm() / 6.0;

    SUBCASE("params at the anchor leave the pure data term") {
        CHECK(anchored_loss(spec, p, p, data.X, data.y, 0.7, 0.9) ==
              doctest::Approx(data_term));
    }
    SUBCASE("equal noise and prior variances give Gamma = I") {
        const MlpParams anchor = mlp_init(spec, stream);
        const Vec diff = pack_params(spec, p) - pack_params(spec, anchor);
        const double expected = data_term + diff.squaredNorm() / 6.0;
        CHECK(anchored_loss(spec, p, anchor, data.X, data.y, 1.0, 1.0) ==
              doctest::Approx(expected));
    }
    SUBCASE("general Gamma scales the anchor term by eps2 over prior2") {
        const MlpParams anchor = mlp_init(spec, stream);
        const Vec diff = pack_params(spec, p) - pack_params(spec, anchor);
        const double expected = data_term + (0.25 / 2.0) * diff.squaredNorm() / 6.0;
        CHECK(anchored_loss(spec, p, anchor, data.X, data.y, 0.25, 2.0) ==
              doctest::Approx(expected));
    }
}

TEST_CASE("train_ensemble determinism and variants") {
    const Dataset data = line_data(10);
    EnsembleConfig cfg{MlpSpec(1, {4}, Activation::ReLU)};
    cfg.members = 3;
    cfg.opt.kind = OptKind::Adam;
    cfg.opt.learning_rate = 1e-2;
    cfg.opt.epochs = 30;

    SUBCASE("bootstrap resamples are deterministic per seed") {
        cfg.variant = EnsembleVariant::Bootstrap;
        RngStream a(5), b(5);
        const EnsembleModel m1 = train_ensemble(data, cfg, a);
        const EnsembleModel m2 = train_ensemble(data, cfg, b);
        for (int m = 0; m < 3; ++m)
            CHECK(pack_params(cfg.spec, m1.members[m]) ==
                  pack_params(cfg.spec, m2.members[m]));
    }
    SUBCASE("vanilla members differ across inits") {
        cfg.variant = EnsembleVariant::Vanilla;
        RngStream s(7);
        const EnsembleModel model = train_ensemble(data, cfg, s);
        CHECK(pack_params(cfg.spec, model.members[0]) !=
              pack_params(cfg.spec, model.members[1]));
        CHECK(model.anchors.empty());
    }
    SUBCASE("anchored training records one anchor per member") {
        cfg.variant = EnsembleVariant::Anchored;
        cfg.sigma_prior2 = 1.0;
        cfg.sigma_eps2 = 0.01;
        RngStream s(9);
        const EnsembleModel model = train_ensemble(data, cfg, s);
        CHECK(model.anchors.size() == 3);
    }
}

TEST_CASE("ensemble_predict statistics") {
    // Bias-only nets give constant member predictions we can set by hand.
    const MlpSpec spec(1, {2}, Activation::ReLU);
    EnsembleModel model;
    model.spec = spec;
    for (double value : {1.0, 3.0}) {
        MlpParams p = unpack_params(spec, Vec::Zero(spec.num_params()));
        p.b.back()[0] = value;
        model.members.push_back(p);
    }
    Mat X(2, 1);
    X << 0.0, 5.0;
    const PredictiveDist d = ensemble_predict(model, X);
    CHECK(d.mean[0] == doctest::Approx(2.0));
    CHECK(d.epistemic_var[0] == doctest::Approx(1.0));  // population variance
    CHECK(d.total_var[0] == doctest::Approx(d.epistemic_var[0]));

    SUBCASE("identical members collapse the variance") {
        model.members[1] = model.members[0];
        const PredictiveDist dd = ensemble_predict(model, X);
        CHECK(dd.epistemic_var[0] == doctest::Approx(0.0));
    }
    SUBCASE("member permutation changes nothing") {
        EnsembleModel swapped = model;
        std::swap(swapped.members[0], swapped.members[1]);
        const PredictiveDist dd = ensemble_predict(swapped, X);
        CHECK((dd.mean - d.mean).norm() == 0.0);
        CHECK((dd.epistemic_var - d.epistemic_var).norm() == 0.0);
    }
    SUBCASE("a single member is rejected") {
        model.members.pop_back();
        CHECK_THROWS_AS(ensemble_predict(model, X), std::invalid_argument);
    }
}

TEST_CASE("dropout masks and the no-dropout limit") {
    const MlpSpec spec(1, {50, 50}, Activation::ReLU);
    RngStream init(3);
    const MlpParams p = mlp_init(spec, init);
    Mat X(20, 1);
    X.setRandom();

    SUBCASE("vanishing rate reproduces the deterministic forward pass") {
        RngStream s(4);
        const Vec out = dropout_forward(spec, p, X, 1e-9, s);
        CHECK((out - mlp_forward(spec, p, X)).norm() < 1e-6);
    }
    SUBCASE("mask keep-rate stays within binomial bounds") {
        const double rate = 0.3;
        RngStream s(5);
        DropoutCache cache;
        dropout_forward(spec, p, X, rate, s, &cache);
        int kept = 0, total = 0;
        for (const Mat& mask : cache.masks) {
            kept += (mask.array() > 0.0).count();
            total += static_cast<int>(mask.size());
        }
        const double keep = 1.0 - rate;
        const double sd = std::sqrt(keep * rate / total);
        CHECK(std::abs(static_cast<double>(kept) / total - keep) < 3.0 * sd);
    }
    SUBCASE("backward matches finite differences through fixed masks") {
        const MlpSpec small(1, {4, 3}, Activation::Tanh);
        RngStream si(6);
        const MlpParams sp = mlp_init(small, si);
        Mat Xs(5, 1);
        Xs.setRandom();
        const Vec y = si.standard_normal(5);
        const double rate = 0.25;

        const auto loss_at = [&](const Vec& flat) {
            RngStream mask_stream(42);  // same masks every evaluation
            const Vec out = dropout_forward(small, unpack_params(small, flat), Xs, rate,
                                            mask_stream);
            return (out - y).squaredNorm();
        };
        const Vec flat = pack_params(small, sp);
        RngStream mask_stream(42);
        DropoutCache cache;
        const Vec out = dropout_forward(small, sp, Xs, rate, mask_stream, &cache);
        const Vec analytic = pack_params(
            small, dropout_backward(small, sp, cache, Vec(2.0 * (out - y))));
        CHECK(oracles::max_rel_err(analytic, oracles::fd_grad(loss_at, flat)) < 1e-4);
    }
}

TEST_CASE("mcd train and predict") {
    const Dataset data = line_data(16);
    McdConfig cfg{MlpSpec(1, {16}, Activation::ReLU)};
    cfg.rate = 0.1;
    cfg.passes = 30;
    cfg.sigma2 = 0.05;
    cfg.opt.kind = OptKind::Adam;
    cfg.opt.learning_rate = 1e-2;
    cfg.opt.epochs = 100;

    RngStream t1(8), t2(8);
    const McdModel m1 = mcd_train(data, cfg, t1);
    const McdModel m2 = mcd_train(data, cfg, t2);
    CHECK(pack_params(cfg.spec, m1.params) == pack_params(cfg.spec, m2.params));

    Mat q(3, 1);
    q << -0.5, 0.0, 0.5;
    RngStream p1(9), p2(9);
    const PredictiveDist d1 = mcd_predict(m1, q, p1);
    const PredictiveDist d2 = mcd_predict(m2, q, p2);
    CHECK((d1.mean - d2.mean).norm() == 0.0);
    CHECK((d1.epistemic_var - d2.epistemic_var).norm() == 0.0);
    for (int i = 0; i < 3; ++i)
        CHECK(d1.total_var[i] == doctest::Approx(d1.epistemic_var[i] + cfg.sigma2));

    SUBCASE("near-zero rate gives near-zero epistemic variance") {
        McdModel nodrop = m1;
        nodrop.rate = 1e-9;
        RngStream s(10);
        const PredictiveDist d = mcd_predict(nodrop, q, s);
        CHECK(d.epistemic_var.maxCoeff() < 1e-10);
    }
    SUBCASE("config validation") {
        McdConfig bad = cfg;
        bad.rate = 1.0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = cfg;
        bad.passes = 1;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    }
}

TEST_CASE("spectral_normalize") {
    SUBCASE("identity above the bound is rescaled to the bound") {
        RngStream s(1);
        const Mat W = spectral_normalize(Mat::Identity(3, 3), 0.5, 30, s);
        CHECK((W - 0.5 * Mat::Identity(3, 3)).norm() < 1e-8);
    }
    SUBCASE("small matrices pass through untouched") {
        RngStream s(2);
        const Mat W = 0.1 * Mat::Identity(4, 4);
        CHECK(spectral_normalize(W, 1.0, 30, s) == W);
    }
    SUBCASE("random matrices land at or below the bound (SVD oracle)") {
        RngStream s(3);
        for (int trial = 0; trial < 10; ++trial) {
            Mat W(10, 10);
            for (int i = 0; i < 10; ++i)
                for (int j = 0; j < 10; ++j) W(i, j) = 2.0 * s.next_normal();
            const Mat Wn = spectral_normalize(W, 1.0, 50, s);
            CHECK(oracles::spectral_norm_svd(Wn) <= 1.01);
        }
    }
    SUBCASE("idempotent within 1e-8") {
        RngStream s(4);
        Mat W(6, 6);
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) W(i, j) = 3.0 * s.next_normal();
        const Mat once = spectral_normalize(W, 1.0, 50, s);
        const Mat twice = spectral_normalize(once, 1.0, 50, s);
        CHECK((twice - once).norm() < 1e-8);
    }
}

TEST_CASE("sngp features and training") {
    SUBCASE("rff magnitudes are bounded by sqrt(2 / D_L)") {
        RngStream s(5);
        const int d_l = 64;
        Mat W_L(d_l, 3);
        for (int i = 0; i < d_l; ++i)
            for (int j = 0; j < 3; ++j) W_L(i, j) = s.next_normal();
        const Vec b_L = s.uniform(0.0, 2.0 * M_PI, d_l);
        Mat H(10, 3);
        H.setRandom();
        const Mat phi = rff_features(W_L, b_L, H);
        CHECK(phi.cwiseAbs().maxCoeff() <= std::sqrt(2.0 / d_l) + 1e-12);
    }
    SUBCASE("rff inner products approximate the unit RBF kernel") {
        RngStream s(6);
        Vec x(2), xp(2);
        x << 0.3, -0.2;
        xp << -0.4, 0.5;
        Mat H(2, 2);
        H.row(0) = x.transpose();
        H.row(1) = xp.transpose();
        const int d_l = 8;
        double acc = 0.0;
        const int redraws = 10000;
        for (int r = 0; r < redraws; ++r) {
            Mat W_L(d_l, 2);
            for (int i = 0; i < d_l; ++i)
                for (int j = 0; j < 2; ++j) W_L(i, j) = s.next_normal();
            const Vec b_L = s.uniform(0.0, 2.0 * M_PI, d_l);
            const Mat phi = rff_features(W_L, b_L, H);
            acc += phi.row(0).dot(phi.row(1));
        }
        const double expected = std::exp(-(x - xp).squaredNorm() / 2.0);
        CHECK(std::abs(acc / redraws - expected) < 0.05);
    }
    SUBCASE("trained body obeys the spectral bound everywhere") {
        const Dataset data = line_data(20);
        SngpConfig cfg{MlpSpec(1, {8, 8}, Activation::ReLU)};
        cfg.c = 0.9;
        cfg.rff = 50;
        cfg.sigma2 = 0.05;
        cfg.opt.kind = OptKind::Adam;
        cfg.opt.learning_rate = 1e-2;
        cfg.opt.epochs = 100;
        RngStream s(11);
        const SngpModel model = train_sngp(data, cfg, s);
        for (const Mat& W : model.params.W)
            CHECK(oracles::spectral_norm_svd(W) <= cfg.c * 1.01);
        const PredictiveDist d = sngp_predict(model, data.X);
        CHECK(d.mean.size() == 20);
        for (int i = 0; i < 20; ++i)
            CHECK(d.total_var[i] == doctest::Approx(d.epistemic_var[i] + cfg.sigma2));
    }
}

TEST_CASE("leapfrog and hmc_sample") {
    // Quadratic potential U = ||q||^2 / 2: energy drift bounds the integrator.
    const PotentialFn quad = [](const Vec& q, Vec* grad) {
        if (grad) *grad = q;
        return 0.5 * q.squaredNorm();
    };

    SUBCASE("energy drift on one trajectory is below 1e-3") {
        Vec q(2), p(2);
        q << 1.0, -0.5;
        p << 0.3, 0.8;
        const double h0 = quad(q, nullptr) + 0.5 * p.squaredNorm();
        leapfrog(quad, q, p, 1e-3, 50, 1.0);
        const double h1 = quad(q, nullptr) + 0.5 * p.squaredNorm();
        CHECK(std::abs(h1 - h0) <= 1e-3);
    }
    SUBCASE("vanishing step size accepts essentially always") {
        HmcConfig cfg;
        cfg.step_size = 1e-8;
        cfg.leapfrog = 1;
        cfg.iterations = 200;
        RngStream s(13);
        const Mat trace = hmc_sample(quad, cfg, Vec::Zero(2), s);
        REQUIRE(trace.rows() == 200);
        // Proposals barely move, so the chain stays near the start.
        CHECK(trace.row(199).norm() < 1e-3);
    }
    SUBCASE("2D standard normal moments for 3 fixed seeds") {
        HmcConfig cfg;
        cfg.step_size = 0.1;
        cfg.leapfrog = 20;
        cfg.iterations = 5000;
        cfg.burn_in = 500;
        for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
            RngStream s(seed);
            const Mat trace = hmc_sample(quad, cfg, Vec::Zero(2), s);
            const Mat kept = trace.bottomRows(trace.rows() - cfg.burn_in);
            const Vec mean = kept.colwise().mean();
            CHECK(mean.cwiseAbs().maxCoeff() < 0.1);
            const Mat centered = kept.rowwise() - mean.transpose();
            const Mat cov = centered.transpose() * centered / kept.rows();
            CHECK((cov - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 0.15);
        }
    }
    SUBCASE("non-finite potential rejects and continues") {
        const PotentialFn bad = [](const Vec& q, Vec* grad) {
            if (grad) *grad = Vec::Zero(q.size());
            return q.norm() > 0.5 ? std::numeric_limits<double>::infinity() : 0.0;
        };
        HmcConfig cfg;
        cfg.step_size = 10.0;
        cfg.leapfrog = 5;
        cfg.iterations = 20;
        RngStream s(17);
        const Mat trace = hmc_sample(bad, cfg, Vec::Zero(1), s);
        REQUIRE(trace.rows() == 20);
        CHECK(trace.cwiseAbs().maxCoeff() <= 0.5);
    }
}

TEST_CASE("bnn_hmc_predict") {
    SUBCASE("prior-only single-parameter net samples the prior") {
        // No hidden layer, no data: posterior over the 2 head params is the prior.
        const MlpSpec spec(1, {}, Activation::ReLU);
        Dataset empty;
        empty.X = Mat(0, 1);
        empty.y = Vec(0);
        HmcConfig cfg;
        cfg.step_size = 0.2;
        cfg.leapfrog = 10;
        cfg.iterations = 4000;
        cfg.burn_in = 500;
        cfg.prior_sd = 0.8;
        cfg.noise_sd = 0.1;
        Mat q(1, 1);
        q << 1.0;
        RngStream s(19);
        const PredictiveDist d = bnn_hmc_predict(spec, empty, cfg, s, q);
        // Output = w x + b with w, b ~ N(0, prior_sd^2) at x = 1: var = 2 prior_sd^2.
        CHECK(d.epistemic_var[0] ==
              doctest::Approx(2.0 * 0.8 * 0.8).epsilon(0.10));
        CHECK(std::abs(d.mean[0]) < 0.15);
    }
    SUBCASE("same seed gives identical predictions") {
        const MlpSpec spec(1, {3}, Activation::Tanh);
        const Dataset data = line_data(8);
        HmcConfig cfg;
        cfg.step_size = 0.05;
        cfg.leapfrog = 10;
        cfg.iterations = 300;
        cfg.burn_in = 50;
        Mat q(2, 1);
        q << -0.3, 0.6;
        RngStream a(23), b(23);
        const PredictiveDist d1 = bnn_hmc_predict(spec, data, cfg, a, q);
        const PredictiveDist d2 = bnn_hmc_predict(spec, data, cfg, b, q);
        CHECK((d1.mean - d2.mean).norm() == 0.0);
        CHECK((d1.total_var - d2.total_var).norm() == 0.0);
    }
    SUBCASE("linear data keeps the predictive mean near the targets") {
        const MlpSpec spec(1, {}, Activation::ReLU);
        const Dataset data = line_data(12);
        HmcConfig cfg;
        cfg.step_size = 0.05;
        cfg.leapfrog = 20;
        cfg.iterations = 3000;
        cfg.burn_in = 500;
        cfg.prior_sd = 2.0;
        cfg.noise_sd = 0.1;
        RngStream s(29);
        const PredictiveDist d = bnn_hmc_predict(spec, data, cfg, s, data.X);
        for (int i = 0; i < data.n(); ++i) {
            const double sd = std::sqrt(d.total_var[i]);
            CHECK(std::abs(d.mean[i] - data.y[i]) < 2.0 * sd + 0.05);
        }
    }
}

TEST_SUITE_END();
