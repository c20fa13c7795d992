// Parallel kernels against their serial references.

#include <benchmark/benchmark.h>

#include <random>

#include "iogvqa/kernels.hpp"

namespace {

iog::Matrix random_matrix(std::size_t r, std::size_t c, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  iog::Matrix m(r, c);
  for (double& v : m.values()) v = u(rng);
  return m;
}

template <void (*Gemm)(const iog::Matrix&, const iog::Matrix&, iog::Matrix&)>
void BM_gemm_nn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  iog::Matrix out;
  for (auto _ : state) {
    Gemm(a, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(2 * n * n * n));
}

template <void (*Gemm)(const iog::Matrix&, const iog::Matrix&, iog::Matrix&)>
void BM_gemm_tn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 3), b = random_matrix(n, n, 4);
  iog::Matrix out(n, n);
  for (auto _ : state) {
    Gemm(a, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(2 * n * n * n));
}

template <void (*Softmax)(iog::Matrix&)>
void BM_softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto base = random_matrix(n, n, 5);
  for (auto _ : state) {
    iog::Matrix m = base;
    Softmax(m);
    benchmark::DoNotOptimize(m.data());
  }
}

}  // namespace

BENCHMARK(BM_gemm_nn<iog::kernels::gemm_nn>)->Name("gemm_nn/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm_nn<iog::kernels::reference::gemm_nn>)->Name("gemm_nn/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm_tn<iog::kernels::gemm_tn_acc>)->Name("gemm_tn_acc/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm_tn<iog::kernels::reference::gemm_tn_acc>)->Name("gemm_tn_acc/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm_tn<iog::kernels::gemm_nt_acc>)->Name("gemm_nt_acc/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm_tn<iog::kernels::reference::gemm_nt_acc>)->Name("gemm_nt_acc/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_softmax<iog::kernels::softmax_rows>)->Name("softmax_rows/parallel")->Arg(256);
BENCHMARK(BM_softmax<iog::kernels::reference::softmax_rows>)->Name("softmax_rows/serial")->Arg(256);

BENCHMARK_MAIN();
