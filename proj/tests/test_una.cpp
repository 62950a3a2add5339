#include "unalab/una.hpp"

#include "unalab/nlm.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace unalab;

TEST_SUITE_BEGIN("una");

namespace {

Mat random_heads(RngStream& stream, int feature_dim, int m) {
    Mat heads(feature_dim, m);
    for (int j = 0; j < m; ++j) heads.col(j) = stream.standard_normal(feature_dim);
    return heads;
}

}  // namespace

TEST_CASE("cos_sim_sq hand values") {
    Vec a(2), b(2);
    a << 1, 2;
    CHECK(cos_sim_sq(a, a) == doctest::Approx(1.0));
    a << 1, 0;
    b << 0, 1;
    CHECK(cos_sim_sq(a, b) == doctest::Approx(0.0));
    b << 1, 1;
    CHECK(cos_sim_sq(a, b) == doctest::Approx(0.5));
    CHECK_THROWS_AS(cos_sim_sq(Vec::Zero(2), b), DegenerateGradient);
}

TEST_CASE("anneal schedules") {
    AnnealSchedule s;
    s.scale = 4.0;
    s.total_epochs = 100;

    s.kind = ScheduleKind::Sqrt;
    CHECK(anneal(s, 100) == doctest::Approx(4.0));
    CHECK(anneal(s, 25) == doctest::Approx(2.0));

    s.kind = ScheduleKind::Sigmoid;
    CHECK(anneal(s, 50) == doctest::Approx(2.0));

    s.kind = ScheduleKind::Tanh;
    CHECK(anneal(s, 0) == doctest::Approx(4.0 * (std::tanh(-3.0) + 1.0) / 2.0));
    CHECK(anneal(s, 0) == doctest::Approx(4.0 * 0.0024726232).epsilon(1e-4));

    s.kind = ScheduleKind::Constant;
    CHECK(anneal(s, 0) == 4.0);
    CHECK(anneal(s, 73) == 4.0);

    SUBCASE("non-constant schedules are nondecreasing") {
        for (ScheduleKind kind :
             {ScheduleKind::Sqrt, ScheduleKind::Sigmoid, ScheduleKind::Tanh}) {
            s.kind = kind;
            double prev = -1.0;
            for (int x = 0; x <= 100; ++x) {
                const double v = anneal(s, x);
                CHECK(v >= prev - 1e-12);
                prev = v;
            }
        }
    }
    SUBCASE("validation") {
        s.scale = -1.0;
        CHECK_THROWS_AS(s.validate(), std::invalid_argument);
        s.scale = 1.0;
        s.total_epochs = 0;
        CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    }
}

TEST_CASE("fd_gradients") {
    SUBCASE("exact on an effectively linear network") {
        // Zero hidden weights and biases make every ReLU preactivation zero,
        // but an identity first layer with positive inputs passes x through.
        const MlpSpec spec(2, {2}, Activation::ReLU);
        MlpParams p = unpack_params(spec, Vec::Zero(spec.num_params()));
        p.W[0] = Mat::Identity(2, 2);
        Mat heads(2 + 1, 2);
        heads << 1.0, -2.0, 0.5, 3.0, 0.0, 1.0;
        // Features are [x1, x2, 1] while both coordinates stay positive, so
        // the gradient of head m is its first two entries.
        Vec x(2);
        x << 0.3, 0.7;
        RngStream stream(4);
        const Mat G = fd_gradients(spec, p, heads, x, 0.01, stream);
        CHECK(G.rows() == 2);
        CHECK(G.cols() == 2);
        for (int m = 0; m < 2; ++m)
            for (int d = 0; d < 2; ++d)
                CHECK(G(m, d) == doctest::Approx(heads(d, m)).epsilon(1e-8));
    }
    SUBCASE("close to the analytic gradient on a smooth net") {
        const MlpSpec spec(1, {5}, Activation::Tanh);
        RngStream init(3);
        const MlpParams p = mlp_init(spec, init);
        const Mat heads = random_heads(init, spec.feature_dim(), 3);
        Vec x(1);
        x << 0.4;
        RngStream stream(9);
        const Mat G = fd_gradients(spec, p, heads, x, 1e-3, stream);
        // Analytic: d f_m / d x = sum_h w_m[h] (1 - tanh^2(a_h)) W0[h].
        const Vec pre = p.W[0] * x + p.b[0];
        const Vec t = pre.array().tanh();
        for (int m = 0; m < 3; ++m) {
            double g = 0.0;
            for (int h = 0; h < 5; ++h)
                g += heads(h, m) * (1.0 - t[h] * t[h]) * p.W[0](h, 0);
            CHECK(oracles::rel_err(G(m, 0), g) < 1e-2);
        }
    }
    SUBCASE("deterministic per seed") {
        const MlpSpec spec(2, {4}, Activation::ReLU);
        RngStream init(5);
        const MlpParams p = mlp_init(spec, init);
        const Mat heads = random_heads(init, spec.feature_dim(), 2);
        Vec x(2);
        x << 0.1, 0.2;
        RngStream a(11), b(11);
        CHECK(fd_gradients(spec, p, heads, x, 0.1, a) ==
              fd_gradients(spec, p, heads, x, 0.1, b));
    }
}

TEST_CASE("diversity_penalty structure") {
    const MlpSpec spec(1, {4}, Activation::Tanh);
    RngStream init(7);
    const MlpParams p = mlp_init(spec, init);
    Mat X(5, 1);
    X.setRandom();

    SUBCASE("single head gives zero") {
        const Mat one = random_heads(init, spec.feature_dim(), 1);
        RngStream s(1);
        CHECK(diversity_penalty(spec, p, one, X, 0.1, s, false) == 0.0);
    }
    SUBCASE("identical heads saturate the penalty") {
        Mat heads(spec.feature_dim(), 4);
        const Vec w = random_heads(init, spec.feature_dim(), 1).col(0);
        for (int j = 0; j < 4; ++j) heads.col(j) = w;
        RngStream s(2), s2(2);
        CHECK(diversity_penalty(spec, p, heads, X, 0.1, s, false) ==
              doctest::Approx(4 * 3 / 2.0));
        CHECK(diversity_penalty(spec, p, heads, X, 0.1, s2, true) ==
              doctest::Approx(1.0));
    }
    SUBCASE("symmetric under head permutation") {
        Mat heads = random_heads(init, spec.feature_dim(), 3);
        Mat permuted(spec.feature_dim(), 3);
        permuted.col(0) = heads.col(2);
        permuted.col(1) = heads.col(0);
        permuted.col(2) = heads.col(1);
        RngStream a(3), b(3);
        CHECK(diversity_penalty(spec, p, heads, X, 0.1, a, false) ==
              doctest::Approx(diversity_penalty(spec, p, permuted, X, 0.1, b, false)));
    }
    SUBCASE("invariant to positive rescaling of one head") {
        Mat heads = random_heads(init, spec.feature_dim(), 3);
        Mat scaled = heads;
        scaled.col(1) *= 17.0;
        RngStream a(4), b(4);
        CHECK(diversity_penalty(spec, p, heads, X, 0.1, a, false) ==
              doctest::Approx(diversity_penalty(spec, p, scaled, X, 0.1, b, false))
                  .epsilon(1e-10));
    }
}

TEST_CASE("fit_term values") {
    const MlpSpec spec(1, {4}, Activation::Tanh);
    RngStream init(13);
    const MlpParams p = mlp_init(spec, init);
    Mat X(6, 1);
    X.setRandom();
    const double sigma2 = 0.3;

    SUBCASE("perfect heads at gamma zero leave the constant") {
        const Mat phi = mlp_features(spec, p, X);
        Mat heads(spec.feature_dim(), 3);
        const Vec w = init.standard_normal(spec.feature_dim());
        for (int j = 0; j < 3; ++j) heads.col(j) = w;
        const Vec y = phi * w;
        CHECK(fit_term(spec, p, heads, X, y, sigma2, 0.0) ==
              doctest::Approx(-0.5 * 6 * std::log(2.0 * M_PI * sigma2)));
    }
    SUBCASE("single head with the network's own head is the MAP objective") {
        Mat heads(spec.feature_dim(), 1);
        heads.col(0).head(4) = p.W.back().row(0).transpose();
        heads(4, 0) = p.b.back()[0];
        const Vec y = init.standard_normal(6);
        const double gamma = 0.02;
        const double fit = fit_term(spec, p, heads, X, y, sigma2, gamma);
        // gamma in fit_term covers feature params + heads; rebuild the MAP
        // penalty over theta_full from the same pieces.
        const double pen_fit = gamma * (pack_feature_params(spec, p).squaredNorm() +
                                        heads.squaredNorm());
        const double pen_map = gamma * pack_params(spec, p).squaredNorm();
        CHECK(fit + pen_fit - pen_map ==
              doctest::Approx(map_objective(spec, p, X, y, sigma2, gamma)).epsilon(1e-10));
    }
    SUBCASE("random case term-by-term") {
        const Mat heads = random_heads(init, spec.feature_dim(), 2);
        const Vec y = init.standard_normal(6);
        const double gamma = 0.05;
        const Mat phi = mlp_features(spec, p, X);
        double expected = 0.0;
        for (int m = 0; m < 2; ++m) {
            const Vec r = y - phi * heads.col(m);
            expected += -0.5 * 6 * std::log(2.0 * M_PI * sigma2) -
                        r.squaredNorm() / (2.0 * sigma2);
        }
        expected /= 2.0;
        expected -= gamma * (pack_feature_params(spec, p).squaredNorm() +
                             heads.squaredNorm());
        CHECK(fit_term(spec, p, heads, X, y, sigma2, gamma) ==
              doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("train_luna basics") {
    Dataset data;
    data.X = Mat(14, 1);
    for (int i = 0; i < 14; ++i) data.X(i, 0) = -1.3 + 0.2 * i;
    data.y = data.X.col(0).array().cube();

    LunaConfig cfg{MlpSpec(1, {8}, Activation::ReLU)};
    cfg.num_heads = 4;
    cfg.sigma2 = 0.1;
    cfg.sigma_perturb = 0.1;
    cfg.schedule.kind = ScheduleKind::Sigmoid;
    cfg.schedule.scale = 0.5;
    cfg.schedule.total_epochs = 40;
    cfg.opt.kind = OptKind::Adam;
    cfg.opt.learning_rate = 1e-2;
    cfg.opt.epochs = 40;

    SUBCASE("same seed reproduces final params and traces") {
        RngStream a(21), b(21);
        const LunaResult r1 = train_luna(data, cfg, a);
        const LunaResult r2 = train_luna(data, cfg, b);
        CHECK(pack_params(cfg.spec, r1.params) == pack_params(cfg.spec, r2.params));
        CHECK(r1.heads == r2.heads);
        CHECK(r1.fit_trace == r2.fit_trace);
        CHECK(r1.diverse_trace == r2.diverse_trace);
        CHECK(r1.lambda_trace == r2.lambda_trace);
        CHECK(static_cast<int>(r1.lambda_trace.size()) == cfg.opt.epochs);
    }
    SUBCASE("validation rejects bad configs") {
        LunaConfig bad = cfg;
        bad.sigma_perturb = 0.0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = cfg;
        bad.num_heads = 0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    }
    SUBCASE("training reduces the held-out penalty from its starting value") {
        // In one input dimension every nonzero gradient pair has cosine
        // squared one, so a freshly initialized model scores exactly 1 and
        // training can only lower the penalty by flattening some heads.
        LunaConfig strong = cfg;
        strong.num_heads = 20;
        strong.opt.epochs = 300;
        strong.schedule.scale = 5.0;
        strong.schedule.total_epochs = 300;
        Mat grid(21, 1);
        for (int i = 0; i < 21; ++i) grid(i, 0) = -1.5 + 0.15 * i;
        int wins = 0;
        for (int seed = 0; seed < 5; ++seed) {
            RngStream stream(100 + seed);
            RngStream check(100 + seed);
            RngStream init_s = check.split(0);
            RngStream head_s = check.split(1);
            const MlpParams p0 = mlp_init(strong.spec, init_s);
            const int F = strong.spec.feature_dim();
            Mat h0(F, strong.num_heads);
            for (int m = 0; m < strong.num_heads; ++m)
                h0.col(m) = head_s.standard_normal(F) / std::sqrt(double(F));
            RngStream pert0(999);
            const double pen0 = diversity_penalty(strong.spec, p0, h0, grid,
                                                  strong.sigma_perturb, pert0, true);
            CHECK(pen0 == doctest::Approx(1.0));

            const LunaResult res = train_luna(data, strong, stream);
            RngStream pert(999);
            const double pen = diversity_penalty(strong.spec, res.params, res.heads,
                                                 grid, strong.sigma_perturb, pert, true);
            CHECK(pen <= pen0 + 1e-12);
            if (pen < pen0 - 1e-6) ++wins;
        }
        CHECK(wins >= 3);
    }
}

TEST_CASE("luna posterior delegates to the shared Bayesian head") {
    const MlpSpec spec(1, {5}, Activation::Tanh);
    RngStream init(2);
    const MlpParams p = mlp_init(spec, init);
    Dataset data;
    data.X = Mat(8, 1);
    data.X.setRandom();
    data.y = init.standard_normal(8);
    const BlrPosterior a = luna_posterior(spec, p, data, 1.2, 0.4);
    const BlrPosterior b = nlm_posterior(spec, p, data, 1.2, 0.4);
    CHECK((a.w_N - b.w_N).norm() == 0.0);
    CHECK((a.V_N - b.V_N).norm() == 0.0);
}

TEST_CASE("select_luna_model") {
    SUBCASE("single run") {
        CHECK(select_luna_model({{1.0, 5.0}}) == 0);
    }
    SUBCASE("only the top-decile run survives the filter") {
        CHECK(select_luna_model({{1.0, 0.0}, {2.0, 0.0}, {10.0, 5.0}}) == 2);
    }
    SUBCASE("equal LLs keep everyone; lowest diversity wins") {
        CHECK(select_luna_model({{3.0, 3.0}, {3.0, 1.0}, {3.0, 2.0}}) == 1);
    }
    SUBCASE("ties resolve to the earliest run") {
        CHECK(select_luna_model({{3.0, 1.0}, {3.0, 1.0}}) == 0);
    }
    SUBCASE("empty input is rejected") {
        CHECK_THROWS_AS(select_luna_model({}), std::invalid_argument);
    }
}

TEST_CASE("make_reference_points") {
    RngStream stream(6);
    Mat X(3, 2);
    X << 1, 2, 3, 4, 5, 6;
    SUBCASE("zero sigma duplicates the inputs") {
        RngStream s(1);
        const Mat refs = make_reference_points(X, 0.0, s);
        REQUIRE(refs.rows() == 6);
        CHECK((refs.topRows(3) - X).norm() == 0.0);
        CHECK((refs.bottomRows(3) - X).norm() == 0.0);
    }
    SUBCASE("perturbation sd matches sigma_x empirically") {
        Mat big = Mat::Zero(10000, 1);
        RngStream s(2);
        const Mat refs = make_reference_points(big, 0.3, s);
        const Vec delta = refs.bottomRows(10000).col(0);
        const double sd = std::sqrt(delta.squaredNorm() / 10000.0);
        CHECK(sd == doctest::Approx(0.3).epsilon(0.05));
    }
}

TEST_CASE("build_reference_set") {
    Mat x_ref(4, 1);
    x_ref << 0, 1, 2, 3;
    SUBCASE("user values pass through") {
        Mat G(4, 2);
        G.setRandom();
        const ReferenceSet refs = build_reference_set(x_ref, G);
        CHECK(refs.G == G);
        CHECK(refs.X == x_ref);
        CHECK_THROWS_AS(build_reference_set(x_ref, Mat::Zero(3, 2)),
                        std::invalid_argument);
    }
    SUBCASE("gp prior draws are deterministic per seed") {
        const KernelSpec k{{KernelTerm::rbf(1.0, 1.0)}};
        RngStream a(3), b(3);
        CHECK(build_reference_set(x_ref, k, 3, a).G ==
              build_reference_set(x_ref, k, 3, b).G);
    }
}

TEST_CASE("train_tuna") {
    Mat x_ref(10, 1);
    for (int i = 0; i < 10; ++i) x_ref(i, 0) = -1.0 + 0.22 * i;

    SUBCASE("zero reference function stays at zero loss") {
        ReferenceSet refs{x_ref, Mat::Zero(10, 1)};
        TunaConfig cfg{MlpSpec(1, {6}, Activation::Tanh)};
        cfg.opt.kind = OptKind::Adam;
        cfg.opt.learning_rate = 1e-2;
        cfg.opt.epochs = 100;
        RngStream stream(5);
        const TunaResult res = train_tuna(refs, cfg, stream);
        REQUIRE(!res.loss_trace.empty());
        CHECK(res.loss_trace.back() <= res.loss_trace.front() + 1e-12);
        CHECK(res.loss_trace.back() <= 1e-3);
    }
    SUBCASE("realizable targets reach near-zero loss with frozen features") {
        const MlpSpec spec(1, {6}, Activation::Tanh);
        RngStream root(8);
        RngStream init_stream = root.split(0);  // the trainer's init stream
        const MlpParams frozen = mlp_init(spec, init_stream);
        RngStream init(8);
        init.next_u64();  // decorrelate the head draws below from the init
        const Mat phi = mlp_features(spec, frozen, x_ref);
        Mat V(spec.feature_dim(), 2);
        for (int j = 0; j < 2; ++j) V.col(j) = init.standard_normal(spec.feature_dim());
        ReferenceSet refs{x_ref, phi * V};

        TunaConfig cfg{spec};
        cfg.freeze_features = true;
        cfg.opt.kind = OptKind::Adam;
        cfg.opt.learning_rate = 5e-2;
        cfg.opt.epochs = 4000;
        RngStream stream(8);  // split(0) reproduces the frozen init
        const TunaResult res = train_tuna(refs, cfg, stream);
        CHECK(res.loss_trace.back() < 1e-4);
        // The frozen basis can be near-collinear, so compare the fitted
        // functions rather than the raw head weights.
        CHECK((phi * res.heads - refs.G).cwiseAbs().maxCoeff() < 1e-2);
    }
    SUBCASE("trace is finite with a nonincreasing running minimum") {
        const KernelSpec k{{KernelTerm::rbf(1.0, 0.5)}};
        RngStream gstream(4);
        const ReferenceSet refs = build_reference_set(x_ref, k, 5, gstream);
        TunaConfig cfg{MlpSpec(1, {8}, Activation::ReLU)};
        cfg.opt.kind = OptKind::Adam;
        cfg.opt.learning_rate = 1e-2;
        cfg.opt.epochs = 200;
        RngStream stream(12);
        const TunaResult res = train_tuna(refs, cfg, stream);
        double run_min = std::numeric_limits<double>::infinity();
        for (double v : res.loss_trace) {
            CHECK(std::isfinite(v));
            run_min = std::min(run_min, v);
        }
        CHECK(res.loss_trace.back() <= res.loss_trace.front());

        RngStream again(12);
        const TunaResult res2 = train_tuna(refs, cfg, again);
        CHECK(res.loss_trace == res2.loss_trace);
    }
}

TEST_CASE("tuna_pseudo_augment") {
    Mat x_ref(2, 1);
    x_ref << 0, 1;
    Mat G(2, 3);
    G << 1, 2, 3, 4, 5, 6;
    const ReferenceSet refs{x_ref, G};

    SUBCASE("appending nothing is the identity") {
        const ReferenceSet out = tuna_pseudo_augment(refs, Mat(0, 1), Mat(0, 3));
        CHECK(out.X == refs.X);
        CHECK(out.G == refs.G);
    }
    SUBCASE("broadcast target copies across all heads") {
        Mat px(1, 1);
        px << 0.5;
        Vec target(1);
        target << 9.0;
        const ReferenceSet out = tuna_pseudo_augment(refs, px, target);
        REQUIRE(out.X.rows() == 3);
        for (int m = 0; m < 3; ++m) CHECK(out.G(2, m) == 9.0);
        CHECK(out.G.topRows(2) == G);
    }
    SUBCASE("shape mismatches are rejected") {
        CHECK_THROWS_AS(tuna_pseudo_augment(refs, Mat(1, 2), Mat(1, 3)),
                        std::invalid_argument);
        CHECK_THROWS_AS(tuna_pseudo_augment(refs, Mat(1, 1), Mat(1, 2)),
                        std::invalid_argument);
        CHECK_THROWS_AS(tuna_pseudo_augment(refs, Mat(2, 1), Vec(1)),
                        std::invalid_argument);
    }
}

TEST_SUITE_END();
