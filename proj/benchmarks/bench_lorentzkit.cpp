#include <benchmark/benchmark.h>

#include <vector>

#include "lorentzkit/alignment.hpp"
#include "lorentzkit/frechet.hpp"
#include "lorentzkit/gyro.hpp"
#include "lorentzkit/hyperbolicity.hpp"
#include "lorentzkit/manifold.hpp"
#include "lorentzkit/model.hpp"
#include "lorentzkit/rng.hpp"

namespace lk = lorentzkit;

namespace {

lk::LorentzPoint random_point(std::size_t n, double max_norm, lk::Rng& rng) {
  lk::Vec s(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = rng.normal();
  s *= rng.uniform(0.0, max_norm) / s.norm();
  return lk::exp_map(lk::LorentzPoint::origin(n), lk::tangent_at_origin(s));
}

std::vector<lk::LorentzPoint> random_points(std::size_t count, std::size_t n, std::uint64_t seed) {
  lk::Rng rng(seed);
  std::vector<lk::LorentzPoint> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(random_point(n, 2.0, rng));
  return out;
}

void BM_ExpLogRoundTrip(benchmark::State& state) {
  const auto pts = random_points(2, static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) {
    const lk::TangentVector v = lk::log_map(pts[0], pts[1]);
    benchmark::DoNotOptimize(lk::exp_map(pts[0], v));
  }
}
BENCHMARK(BM_ExpLogRoundTrip)->Arg(8)->Arg(128);

void BM_GyroaddClosed(benchmark::State& state) {
  const auto pts = random_points(2, static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(lk::gyroadd_closed(pts[0], pts[1]));
}
BENCHMARK(BM_GyroaddClosed)->Arg(8)->Arg(128);

void BM_GyroaddRiemannian(benchmark::State& state) {
  const auto pts = random_points(2, static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(lk::gyroadd_riemannian(pts[0], pts[1]));
}
BENCHMARK(BM_GyroaddRiemannian)->Arg(8)->Arg(128);

void BM_FrechetMean(benchmark::State& state) {
  const auto pts = random_points(static_cast<std::size_t>(state.range(0)), 16, 3);
  for (auto _ : state) benchmark::DoNotOptimize(lk::frechet_mean(pts));
}
BENCHMARK(BM_FrechetMean)->Arg(64)->Arg(1024);

void BM_DeltaExact(benchmark::State& state) {
  const auto pts = random_points(static_cast<std::size_t>(state.range(0)), 8, 4);
  const lk::DistanceMatrix d = lk::geodesic_distances(pts);
  for (auto _ : state) benchmark::DoNotOptimize(lk::delta_exact(d, 0));
}
BENCHMARK(BM_DeltaExact)->Arg(100)->Arg(500);

void BM_HhswEstimate(benchmark::State& state) {
  const auto a = random_points(256, 16, 5), b = random_points(256, 16, 6);
  const auto slices = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(lk::hhsw_estimate(a, b, slices, 2.0, 7));
}
BENCHMARK(BM_HhswEstimate)->Arg(100)->Arg(1000);

void BM_TrainingStep(benchmark::State& state) {
  lk::ModelConfig m;
  m.classes = 4;
  lk::HeegnetModel model(m);
  const std::size_t batch = 32;
  lk::Rng rng(8);
  lk::Tensor x(lk::Shape{batch, m.channels, m.times});
  for (double& v : x.storage()) v = rng.normal();
  std::vector<int> labels(batch), domains(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    labels[i] = static_cast<int>(i % 4);
    domains[i] = static_cast<int>(i % 2);
  }
  for (auto _ : state) {
    lk::ad::Tape tape;
    lk::ad::Var loss = model.training_loss(tape, x, labels, domains, rng);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.value().item());
  }
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
