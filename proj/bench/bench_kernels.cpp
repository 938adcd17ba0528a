#include <benchmark/benchmark.h>

#include "latprobe/kernels.hpp"
#include "latprobe/rng.hpp"

using namespace latprobe;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  Matrix m(r, c);
  for (double& v : m.data()) v = std::normal_distribution<double>()(rng);
  return m;
}

// Shapes follow the library's hot paths: a probe gram over N x 16 latents and
// an MLP hidden layer on a 256-row batch.
template <Matrix (*Gram)(const Matrix&)>
void gram(benchmark::State& state) {
  const auto a = random_matrix(static_cast<std::size_t>(state.range(0)), 16, 1);
  for (auto _ : state) benchmark::DoNotOptimize(Gram(a));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <Matrix (*Mul)(const Matrix&, const Matrix&)>
void matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, 256, 2), b = random_matrix(256, 256, 3);
  for (auto _ : state) benchmark::DoNotOptimize(Mul(a, b));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <Matrix (*Mul)(const Matrix&, const Matrix&)>
void matmul_tn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, 256, 4), b = random_matrix(n, 256, 5);
  for (auto _ : state) benchmark::DoNotOptimize(Mul(a, b));
}

template <Vector (*Gemv)(const Matrix&, std::span<const double>)>
void gemv_t(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, 16, 6);
  const Vector y(n, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(Gemv(a, y));
}

}  // namespace

BENCHMARK(gram<kernels::ref::gram>)->Name("gram/ref")->Arg(20000)->Arg(200000);
BENCHMARK(gram<kernels::par::gram>)->Name("gram/par")->Arg(20000)->Arg(200000);
BENCHMARK(matmul<kernels::ref::matmul>)->Name("matmul/ref")->Arg(256)->Arg(1024);
BENCHMARK(matmul<kernels::par::matmul>)->Name("matmul/par")->Arg(256)->Arg(1024);
BENCHMARK(matmul_tn<kernels::ref::matmul_tn>)->Name("matmul_tn/ref")->Arg(256)->Arg(1024);
BENCHMARK(matmul_tn<kernels::par::matmul_tn>)->Name("matmul_tn/par")->Arg(256)->Arg(1024);
BENCHMARK(gemv_t<kernels::ref::gemv_t>)->Name("gemv_t/ref")->Arg(200000);
BENCHMARK(gemv_t<kernels::par::gemv_t>)->Name("gemv_t/par")->Arg(200000);

BENCHMARK_MAIN();
