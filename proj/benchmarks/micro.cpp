// Microbenchmarks for the numeric hot paths: Cholesky solves, GP prediction,
// MLP forward/backward, and the LUNA diversity penalty.

#include "unalab/gp.hpp"
#include "unalab/net.hpp"
#include "unalab/numkit.hpp"
#include "unalab/una.hpp"

#include <benchmark/benchmark.h>

using namespace unalab;

namespace {

Mat random_psd(RngStream& stream, int n) {
    Mat B(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) B(i, j) = stream.next_normal();
    return B.transpose() * B + 1e-3 * Mat::Identity(n, n);
}

void bm_cholesky(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    RngStream stream(1);
    const Mat A = random_psd(stream, n);
    for (auto _ : state) {
        benchmark::DoNotOptimize(cholesky(A));
    }
}
BENCHMARK(bm_cholesky)->Arg(32)->Arg(128)->Arg(512);

void bm_gp_predict(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    RngStream stream(2);
    Mat X(n, 2);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 2; ++j) X(i, j) = stream.next_normal();
    const Vec y = stream.standard_normal(n);
    const KernelSpec spec{{KernelTerm::matern52(1.0, 1.0)}};
    const GpPosterior post = gp_fit(X, y, spec, 1e-4);
    Mat q(100, 2);
    for (int i = 0; i < 100; ++i)
        for (int j = 0; j < 2; ++j) q(i, j) = stream.next_normal();
    for (auto _ : state) {
        benchmark::DoNotOptimize(gp_predict(post, q));
    }
}
BENCHMARK(bm_gp_predict)->Arg(64)->Arg(256);

void bm_mlp_forward_backward(benchmark::State& state) {
    const MlpSpec spec(1, {50, 20}, Activation::ReLU);
    RngStream stream(3);
    const MlpParams params = mlp_init(spec, stream);
    Mat X(100, 1);
    for (int i = 0; i < 100; ++i) X(i, 0) = stream.next_normal();
    const Vec grad_out = stream.standard_normal(100);
    for (auto _ : state) {
        ForwardCache cache;
        benchmark::DoNotOptimize(mlp_forward(spec, params, X, &cache));
        benchmark::DoNotOptimize(mlp_backward(spec, params, cache, grad_out));
    }
}
BENCHMARK(bm_mlp_forward_backward);

void bm_diversity_penalty(benchmark::State& state) {
    const int m = static_cast<int>(state.range(0));
    const MlpSpec spec(1, {50, 20}, Activation::ReLU);
    RngStream stream(4);
    const MlpParams params = mlp_init(spec, stream);
    Mat heads(spec.feature_dim(), m);
    for (int j = 0; j < m; ++j) heads.col(j) = stream.standard_normal(spec.feature_dim());
    Mat X(100, 1);
    for (int i = 0; i < 100; ++i) X(i, 0) = stream.next_normal();
    for (auto _ : state) {
        RngStream pert(5);
        benchmark::DoNotOptimize(
            diversity_penalty(spec, params, heads, X, 0.1, pert, true));
    }
}
BENCHMARK(bm_diversity_penalty)->Arg(5)->Arg(20);

}  // namespace

BENCHMARK_MAIN();
