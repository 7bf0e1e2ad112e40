// Serial reference kernels against their OpenMP counterparts.
//
//   OMP_NUM_THREADS=4 ./bench_kernels

#include <benchmark/benchmark.h>

#include <random>

#include "mdid/kernels.hpp"
#include "mdid/matching.hpp"
#include "test_support.hpp"

namespace k = mdid::kernels;

namespace {

const mdid::glm::DesignMatrix& design(std::size_t rows) {
  static std::map<std::size_t, mdid::glm::DesignMatrix> cache;
  auto it = cache.find(rows);
  if (it == cache.end()) it = cache.emplace(rows, mdid::support::random_design(5, rows, 46, 60)).first;
  return it->second;
}

Eigen::VectorXd beta_for(const mdid::glm::DesignMatrix& d) {
  return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d.cols()), 0.01);
}

template <auto Kernel>
void run_design_kernel(benchmark::State& state) {
  const auto& d = design(static_cast<std::size_t>(state.range(0)));
  const auto beta = beta_for(d);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(d, beta));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <auto Kernel>
void run_mahalanobis(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(n, 8), b(4 * n, 8);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = normal(rng);
  const Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(8, 8) * 0.5;
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(a, b, inv));
}

void assignment(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd d(n, 3 * n);
  for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = unit(rng);
  for (auto _ : state) benchmark::DoNotOptimize(mdid::matching::optimal_pair_match(d));
}

}  // namespace

BENCHMARK(run_design_kernel<k::serial::accumulate>)->Name("accumulate/serial")->Arg(20000)->Arg(200000);
BENCHMARK(run_design_kernel<k::omp::accumulate>)->Name("accumulate/omp")->Arg(20000)->Arg(200000);
BENCHMARK(run_design_kernel<k::serial::cluster_scores>)->Name("cluster_scores/serial")->Arg(20000)->Arg(200000);
BENCHMARK(run_design_kernel<k::omp::cluster_scores>)->Name("cluster_scores/omp")->Arg(20000)->Arg(200000);
BENCHMARK(run_design_kernel<k::serial::linear_predictor>)->Name("linear_predictor/serial")->Arg(200000);
BENCHMARK(run_design_kernel<k::omp::linear_predictor>)->Name("linear_predictor/omp")->Arg(200000);
BENCHMARK(run_mahalanobis<k::serial::mahalanobis>)->Name("mahalanobis/serial")->Arg(100)->Arg(400);
BENCHMARK(run_mahalanobis<k::omp::mahalanobis>)->Name("mahalanobis/omp")->Arg(100)->Arg(400);
BENCHMARK(assignment)->Name("optimal_pair_match")->Arg(23)->Arg(100);
BENCHMARK_MAIN();
