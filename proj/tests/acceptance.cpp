// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers as arguments
// to run a subset; the exit status is nonzero when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "lorentzkit/alignment.hpp"
#include "lorentzkit/config.hpp"
#include "lorentzkit/frechet.hpp"
#include "lorentzkit/gradcheck.hpp"
#include "lorentzkit/gyro.hpp"
#include "lorentzkit/harness.hpp"
#include "lorentzkit/hyperbolicity.hpp"
#include "lorentzkit/manifold.hpp"
#include "lorentzkit/synth.hpp"
#include "lorentzkit/train.hpp"

namespace fs = std::filesystem;
using namespace lorentzkit;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Vec gaussian(std::size_t n, Rng& rng) {
  Vec v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  return v;
}

// exp at the origin of a tangent with uniform direction and norm in [0, max_norm].
LorentzPoint random_point(std::size_t n, double max_norm, Rng& rng, Curvature k = Curvature()) {
  Vec s = gaussian(n, rng);
  s *= rng.uniform(0.0, max_norm) / s.norm();
  const LorentzPoint o = LorentzPoint::origin(n, k);
  return exp_map(o, tangent_at_origin(s, k));
}

// Tangent vector at p with Lorentz norm in [0, max_norm], transported from the origin.
TangentVector random_tangent(const LorentzPoint& p, double max_norm, Rng& rng) {
  const std::size_t n = p.dim();
  Vec s = gaussian(n, rng);
  s *= rng.uniform(0.0, max_norm) / s.norm();
  const LorentzPoint o = LorentzPoint::origin(n, p.curvature());
  return parallel_transport(o, p, tangent_at_origin(s, p.curvature()));
}

double max_abs_diff(const Vec& a, const Vec& b) { return (a - b).cwiseAbs().maxCoeff(); }

// ---------------------------------------------------------------------------

Outcome criterion_geometry() {
  const auto t0 = Clock::now();
  Rng rng(101);
  double rt = 0.0, rt_ambient = 0.0, pt_norm = 0.0, pt_tan = 0.0, tri = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + static_cast<std::size_t>(i % 15);
    const Curvature k(i % 4 == 0 ? -0.5 : -1.0);
    const LorentzPoint p = random_point(n, 5.0, rng, k);
    const TangentVector v = random_tangent(p, 5.0, rng);
    const LorentzPoint q = exp_map(p, v);
    const TangentVector back = log_map(p, q);
    // Error measured with the metric of T_p: the ambient difference projected onto the
    // tangent space, in Lorentz norm, relative to the Lorentz norm of v.
    const Vec diff = back.ambient() - v.ambient();
    const Vec tangential = diff + k.k() * lorentz_inner(p.ambient(), diff) * p.ambient();
    const double vn = std::max(lorentz_norm(v), 1e-300);
    rt = std::max(rt, std::sqrt(std::max(0.0, lorentz_inner(tangential, tangential))) / vn);
    rt_ambient = std::max(rt_ambient, diff.norm() / std::max(v.ambient().norm(), 1e-300));

    const LorentzPoint r = random_point(n, 5.0, rng, k);
    const TangentVector w = parallel_transport(p, r, v);
    const double scale = std::max(1.0, lorentz_norm(v));
    pt_norm = std::max(pt_norm, std::abs(lorentz_norm(w) - lorentz_norm(v)) / scale);
    pt_tan = std::max(pt_tan, std::abs(lorentz_inner(r.ambient(), w.ambient())) /
                                  (scale * std::max(1.0, r.ambient().norm())));

    const double dpq = geodesic_distance(p, q), dqr = geodesic_distance(q, r), dpr = geodesic_distance(p, r);
    tri = std::max({tri, dpr - dpq - dqr, dpq - dpr - dqr, dqr - dpq - dpr});
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = rt < 1e-9 && pt_norm < 1e-9 && pt_tan < 1e-9 && tri <= 1e-9 && secs < 5.0;
  o.detail = "roundtrip " + fmt("%.2e", rt) + " (ambient " + fmt("%.2e", rt_ambient) + ") pt_norm " + fmt("%.2e", pt_norm) + " pt_tangency " +
             fmt("%.2e", pt_tan) + " triangle_slack " + fmt("%.2e", std::max(tri, 0.0)) + " time " +
             fmt("%.2fs", secs);
  return o;
}

Outcome criterion_gyro() {
  Rng rng(202);
  double add_err = 0.0, mul_err = 0.0, axioms = 0.0, iso = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + static_cast<std::size_t>(i % 7);
    const Curvature k(i % 3 == 0 ? -2.0 : -1.0);
    const LorentzPoint p = random_point(n, 2.0, rng, k), q = random_point(n, 2.0, rng, k);
    const LorentzPoint z = random_point(n, 2.0, rng, k);
    add_err = std::max(add_err, max_abs_diff(gyroadd_closed(p, q).ambient(), gyroadd_riemannian(p, q).ambient()));
    const double t = rng.uniform(-3.0, 3.0);
    mul_err = std::max(mul_err, max_abs_diff(gyromul_closed(t, p).ambient(), gyromul_riemannian(t, p).ambient()));

    const LorentzPoint o = LorentzPoint::origin(n, k);
    // G1 left identity, G2 left inverse, G3 left gyroassociativity
    axioms = std::max(axioms, max_abs_diff(gyroadd(o, p).ambient(), p.ambient()));
    axioms = std::max(axioms, max_abs_diff(gyroadd(gyroinverse(p), p).ambient(), o.ambient()));
    const LorentzPoint lhs = gyroadd(p, gyroadd(q, z));
    const LorentzPoint rhs = gyroadd(gyroadd(p, q), gyration(p, q, z));
    axioms = std::max(axioms, max_abs_diff(lhs.ambient(), rhs.ambient()));
    // V1 identity scalar, V2 distributive, V3 associative
    const double s = rng.uniform(-1.5, 1.5), u = rng.uniform(-1.5, 1.5);
    axioms = std::max(axioms, max_abs_diff(gyromul(1.0, p).ambient(), p.ambient()));
    axioms = std::max(axioms,
                      max_abs_diff(gyromul(s + u, p).ambient(), gyroadd(gyromul(s, p), gyromul(u, p)).ambient()));
    axioms = std::max(axioms, max_abs_diff(gyromul(s * u, p).ambient(), gyromul(s, gyromul(u, p)).ambient()));

    const double d0 = geodesic_distance(q, z);
    iso = std::max(iso, std::abs(geodesic_distance(gyroadd(p, q), gyroadd(p, z)) - d0));
  }
  Outcome o;
  o.pass = add_err < 1e-8 && mul_err < 1e-8 && axioms < 1e-7 && iso < 1e-8;
  o.detail = "add " + fmt("%.2e", add_err) + " mul " + fmt("%.2e", mul_err) + " G1-G3/V1-V3 " + fmt("%.2e", axioms) +
             " isometry " + fmt("%.2e", iso);
  return o;
}

double weighted_objective(const std::vector<LorentzPoint>& pts, const std::vector<double>& w, const LorentzPoint& m) {
  double acc = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = geodesic_distance(m, pts[i]);
    acc += w[i] * d * d;
  }
  return acc;
}

Outcome criterion_frechet() {
  Rng rng(303);
  double mid = 0.0;
  for (int i = 0; i < 200; ++i) {
    const LorentzPoint p = random_point(5, 3.0, rng), q = random_point(5, 3.0, rng);
    const std::vector<LorentzPoint> pts{p, q};
    const std::vector<double> w{0.5, 0.5};
    const LorentzPoint m = weighted_frechet_mean(pts, w).mean;
    // The equal-weight Lorentzian centroid of two points is their geodesic midpoint.
    const Vec c = p.ambient() + q.ambient();
    const Vec oracle = c / std::sqrt(-lorentz_inner(c, c));
    mid = std::max(mid, max_abs_diff(m.ambient(), oracle));
  }

  bool minimal = true;
  for (int trial = 0; trial < 5 && minimal; ++trial) {
    std::vector<LorentzPoint> pts;
    std::vector<double> w;
    for (int i = 0; i < 20; ++i) {
      pts.push_back(random_point(4, 1.5, rng));
      w.push_back(rng.uniform(0.1, 1.0));
    }
    const double tot = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& x : w) x /= tot;
    const LorentzPoint m = weighted_frechet_mean(pts, w).mean;
    const double f0 = weighted_objective(pts, w, m);
    for (int j = 0; j < 50; ++j) {
      Vec s = gaussian(4, rng);
      s *= 1e-3 / s.norm();
      const TangentVector v =
          parallel_transport(LorentzPoint::origin(4), m, tangent_at_origin(s));
      if (!(weighted_objective(pts, w, exp_map(m, v)) > f0)) minimal = false;
    }
  }

  double center = 0.0, var_err = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<LorentzPoint> batch;
    const LorentzPoint shift = random_point(6, 1.5, rng);
    for (int i = 0; i < 64; ++i) batch.push_back(gyroadd(shift, random_point(6, 1.2, rng)));
    const double gamma = rng.uniform(0.5, 2.0);
    const FrechetResult in = frechet_mean(batch);
    const auto out = hbn(batch, gamma);
    const FrechetResult res = frechet_mean(out);
    center = std::max(center, geodesic_distance(res.mean, LorentzPoint::origin(6)));
    const double expect = gamma * gamma * in.variance / (in.variance + kBnEpsilon);
    var_err = std::max(var_err, std::abs(res.variance - expect) / expect);
  }
  Outcome o;
  o.pass = mid < 1e-7 && minimal && center < 1e-6 && var_err < 1e-4;
  o.detail = "midpoint " + fmt("%.2e", mid) + " local_min " + (minimal ? "yes" : "no") + " hbn_center " +
             fmt("%.2e", center) + " hbn_var_rel " + fmt("%.2e", var_err);
  return o;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = 0.5 * static_cast<double>(i + j);
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::vector<LorentzPoint> translate(const LorentzPoint& by, const std::vector<LorentzPoint>& pts) {
  std::vector<LorentzPoint> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(gyroadd(by, p));
  return out;
}

Outcome criterion_hhsw() {
  const std::size_t dim = 6, m = 256;
  const auto a = sample_reference(m, dim, Curvature(), 7);
  const double zero = hhsw_estimate(a, a, 1000, 2.0, 1);

  double worst_rho = 1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    Vec dir = gaussian(dim, rng);
    dir /= dir.norm();
    const auto x = sample_reference(m, dim, Curvature(), 100 + seed);
    const auto y = sample_reference(m, dim, Curvature(), 200 + seed);
    std::vector<double> offsets, values;
    for (int i = 1; i <= 10; ++i) {
      const double r = 0.2 * i;
      const LorentzPoint by = exp_map(LorentzPoint::origin(dim), tangent_at_origin(r * dir));
      offsets.push_back(r);
      values.push_back(hhsw_estimate(x, translate(by, y), 1000, 2.0, 300 + seed));
    }
    worst_rho = std::min(worst_rho, spearman(offsets, values));
  }

  double mc = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(50 + seed);
    Vec dir = gaussian(dim, rng);
    dir /= dir.norm();
    const LorentzPoint by = exp_map(LorentzPoint::origin(dim), tangent_at_origin(dir));
    const auto x = sample_reference(m, dim, Curvature(), 400 + seed);
    const auto y = translate(by, sample_reference(m, dim, Curvature(), 500 + seed));
    const double h1 = hhsw_estimate(x, y, 1000, 2.0, 600 + seed), h4 = hhsw_estimate(x, y, 4000, 2.0, 700 + seed);
    mc = std::max(mc, std::abs(h1 - h4) / h4);
  }

  Rng rng(404);
  double lip = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const LorentzPoint p = random_point(dim, 4.0, rng), q = random_point(dim, 4.0, rng);
    Vec v = gaussian(dim, rng);
    v /= v.norm();
    lip = std::max(lip, std::abs(busemann_project(p, v) - busemann_project(q, v)) - geodesic_distance(p, q));
  }
  Outcome o;
  o.pass = zero == 0.0 && worst_rho == 1.0 && mc < 0.05 && lip <= 1e-9;
  o.detail = "identical " + fmt("%.1e", zero) + " min_spearman " + fmt("%.3f", worst_rho) + " S1000_vs_S4000 " +
             fmt("%.2f%%", 100.0 * mc) + " lipschitz_excess " + fmt("%.2e", std::max(lip, 0.0));
  return o;
}

double brute_force_delta(const DistanceMatrix& d) {
  const auto n = static_cast<std::size_t>(d.rows());
  double best = 0.0;
  for (std::size_t w = 0; w < n; ++w)
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t y = 0; y < n; ++y)
        for (std::size_t z = 0; z < n; ++z) {
          const double v = std::min(gromov_product(d, x, z, w), gromov_product(d, z, y, w)) - gromov_product(d, x, y, w);
          best = std::max(best, v);
        }
  return best;
}

// Weighted random tree with integer edge lengths, so path sums are exact.
DistanceMatrix tree_metric(std::size_t n, Rng& rng) {
  std::vector<std::size_t> parent(n, 0);
  std::vector<double> up(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    parent[i] = rng.index(i);
    up[i] = static_cast<double>(1 + rng.index(9));
  }
  std::vector<double> depth(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) depth[i] = depth[parent[i]] + up[i];
  auto lca_depth = [&](std::size_t a, std::size_t b) {
    std::set<std::size_t> anc;
    for (std::size_t v = a;; v = parent[v]) {
      anc.insert(v);
      if (v == 0) break;
    }
    for (std::size_t v = b;; v = parent[v]) {
      if (anc.count(v)) return depth[v];
      if (v == 0) break;
    }
    return 0.0;
  };
  DistanceMatrix d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d(i, j) = depth[i] + depth[j] - 2.0 * lca_depth(i, j);
  return d;
}

Outcome criterion_delta() {
  Rng rng(505);
  double tree = 0.0;
  for (int t = 0; t < 20; ++t) {
    tree = std::max(tree, delta_exact_all_bases(tree_metric(4 + rng.index(40), rng)));
    std::vector<double> x(4 + rng.index(40));
    for (auto& v : x) v = static_cast<double>(rng.index(1000));
    DistanceMatrix line(x.size(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < x.size(); ++j) line(i, j) = std::abs(x[i] - x[j]);
    tree = std::max(tree, delta_exact_all_bases(line));
  }

  bool oracle = true;
  int compared = 0;
  for (std::size_t n = 4; n <= 30; n += 2) {
    std::vector<DistanceMatrix> metrics;
    Eigen::MatrixXd rows(n, 5);
    for (Eigen::Index i = 0; i < rows.size(); ++i) rows.data()[i] = rng.normal();
    metrics.push_back(euclidean_distances(rows));
    std::vector<LorentzPoint> pts;
    for (std::size_t i = 0; i < n; ++i) pts.push_back(random_point(3, 3.0, rng));
    metrics.push_back(geodesic_distances(pts));
    metrics.push_back(tree_metric(n, rng));
    // discrete metric with random jitter in [1, 2): every triangle holds
    DistanceMatrix jitter(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) jitter(i, j) = jitter(j, i) = i == j ? 0.0 : 1.0 + rng.uniform();
    metrics.push_back(jitter);
    for (const auto& d : metrics) {
      ++compared;
      if (delta_exact_all_bases(d) != brute_force_delta(d)) oracle = false;
    }
  }

  double scale_err = 0.0;
  for (int t = 0; t < 10; ++t) {
    std::vector<LorentzPoint> pts;
    for (int i = 0; i < 25; ++i) pts.push_back(random_point(4, 3.0, rng));
    const DistanceMatrix d = geodesic_distances(pts);
    const double c = rng.uniform(0.01, 100.0);
    const DistanceMatrix dc = c * d;
    const double r0 = delta_relative(delta_exact_all_bases(d), d.maxCoeff());
    const double r1 = delta_relative(delta_exact_all_bases(dc), dc.maxCoeff());
    scale_err = std::max(scale_err, std::abs(r1 - r0) / std::max(r0, 1e-300));
  }

  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CloudConfig cc;
    cc.domains = 1;
    cc.per_class = 40;
    cc.seed = seed;
    const CloudSet cloud = gen_manifold_clouds(cc);
    const HyperbolicityReport h = delta_sampled(cloud.points, DeltaSampling{1500, 3, seed});
    Rng nr(1000 + seed);
    Eigen::MatrixXd noise(static_cast<Eigen::Index>(cloud.points.size()), static_cast<Eigen::Index>(cc.dim));
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = nr.normal();
    const HyperbolicityReport e = delta_sampled(noise, DeltaMetric::kEuclidean, DeltaSampling{1500, 3, seed});
    if (h.delta_rel < e.delta_rel) ++wins;
  }
  Outcome o;
  o.pass = tree == 0.0 && oracle && scale_err < 1e-12 && wins == 10;
  o.detail = "tree_line_delta " + fmt("%.1e", tree) + " oracle " + (oracle ? "exact" : "MISMATCH") + " (" +
             std::to_string(compared) + " metrics) scale_rel " + fmt("%.1e", scale_err) + " hierarchical_wins " +
             std::to_string(wins) + "/10";
  return o;
}

fs::path scratch_root() {
  static const fs::path root = fs::temp_directory_path() / ("lorentzkit_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(root);
  return root;
}

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  std::ostringstream log;
  const GradcheckReport report = cmd_gradcheck(GradcheckOptions{}, scratch_root() / "gradcheck", true, log);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_case;
  std::set<std::string> cases;
  for (const auto& r : report.rows) {
    cases.insert(r.name);
    if (r.max_rel_err > worst) {
      worst = r.max_rel_err;
      worst_case = r.name;
    }
  }
  Outcome o;
  o.pass = report.all_passed() && secs < 120.0;
  o.detail = std::to_string(cases.size()) + " cases x " + std::to_string(report.rows.empty() ? 0 : report.rows.front().seeds) + " seeds, worst " + fmt("%.2e", worst) + " (" + worst_case +
             "), exit " + (report.all_passed() ? "0" : "2") + " time " + fmt("%.1fs", secs);
  return o;
}

// Tuned for a single-core budget; dataset parameters are the benchmark's.
const char* kBenchmarkConfig = R"(
[data]
domains = 6
families = 2
variants = 2
channels = 8
times = 256
per_cell = 40
shift_strength = 0.5
snr_db = 0.0

[model]
temporal_kernel = 16

[align]
hhsw_weight = 0.5
hhsw_slices = 100
hhsw_site = "pre_mlr"

[train]
epochs = 6
patience = 2
lr = 1e-2
batch_size = 30
)";

RunConfig benchmark_config(std::uint64_t seed) {
  RunConfig c;
  c.load_text(kBenchmarkConfig, "<acceptance>");
  c.seed = seed;
  return c;
}

double run_variant(const RunConfig& base, const fs::path& data, const fs::path& dir, AlignmentMode mode) {
  RunConfig c = base;
  c.model.alignment = mode;
  std::ostringstream log;
  cmd_train(c, data, dir / "train", true, 1, log);
  cmd_adapt(c, data, dir / "train", dir / "adapt", true, 1, log);
  return cmd_eval(c, data, dir / "adapt", dir / "eval", true, 1, log).mean_balanced_accuracy;
}

double binomial_tail(int wins, int n) {
  double p = 0.0;
  for (int k = wins; k <= n; ++k) {
    double c = 1.0;
    for (int i = 0; i < k; ++i) c = c * (n - i) / (i + 1);
    p += c;
  }
  return p / std::pow(2.0, n);
}

Outcome criterion_adaptation() {
  const auto t0 = Clock::now();
  const int seeds = 10;
  std::vector<double> none, moments, full;
  int wins = 0;
  for (int s = 0; s < seeds; ++s) {
    const RunConfig c = benchmark_config(static_cast<std::uint64_t>(s));
    const fs::path dir = scratch_root() / ("benchmark_seed" + std::to_string(s));
    std::ostringstream log;
    cmd_gen(c, dir / "data", true, log);
    none.push_back(run_variant(c, dir / "data", dir / "none", AlignmentMode::kNone));
    moments.push_back(run_variant(c, dir / "data", dir / "moments", AlignmentMode::kMoments));
    full.push_back(run_variant(c, dir / "data", dir / "full", AlignmentMode::kFull));
    if (full.back() > none.back()) ++wins;
    std::fprintf(stderr, "  seed %d: none %.4f moments %.4f full %.4f (%.0fs)\n", s, none.back(), moments.back(),
                 full.back(), seconds_since(t0));
    fs::remove_all(dir);
  }
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  const double mn = mean(none), mm = mean(moments), mf = mean(full);
  const double p = binomial_tail(wins, seeds);
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = mf >= mm && mm >= mn && (mf - mn) * 100.0 >= 5.0 && p < 0.05 && secs < 1800.0;
  o.detail = "balanced accuracy none " + fmt("%.4f", mn) + " moments " + fmt("%.4f", mm) + " full " + fmt("%.4f", mf) +
             " gap " + fmt("%.2f", (mf - mn) * 100.0) + "pt wins " + std::to_string(wins) + "/10 p " +
             fmt("%.4f", p) + " time " + fmt("%.0fs", secs);
  return o;
}

Outcome criterion_sfuda() {
  RunConfig c = benchmark_config(3);
  c.model.alignment = AlignmentMode::kFull;
  EpochGenConfig g = c.data;
  g.seed = c.seed;
  const EpochDataset data = gen_epochs(g);
  const std::vector<int> source_domains{1, 2, 3, 4, 5}, target_domains{0};
  const EpochData source = data.select(data.rows_in_domains(source_domains));
  const EpochData target = data.select(data.rows_in_domains(target_domains));

  HeegnetModel model(fold_model_config(c, data, 0));
  TrainOptions topt = c.train;
  topt.seed = 11;
  fit(model, source, topt);
  const Tensor before = predict_logits(model, source, 128);
  AdaptOptions aopt = c.adapt;
  aopt.seed = 12;
  sfuda_adapt(model, target, aopt);
  const Tensor after = predict_logits(model, source, 128);
  const bool same = before.storage().size() == after.storage().size() &&
                    std::memcmp(before.data(), after.data(), before.storage().size() * sizeof(double)) == 0;

  const Tensor emb = stage1_embeddings(model, target, 128);
  const auto pts = rows_to_points(emb, model.curvature());
  const FrechetResult m = frechet_mean(pts);
  const double dist = geodesic_distance(m.mean, LorentzPoint::origin(m.mean.dim(), model.curvature()));
  Outcome o;
  o.pass = same && dist < 0.05;
  o.detail = std::string("source logits ") + (same ? "bitwise identical" : "CHANGED") + ", target stage-1 mean " +
             fmt("%.4f", dist) + " from origin";
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Outcome criterion_reproducibility() {
  RunConfig c = benchmark_config(9);
  c.data.domains = 4;
  c.data.per_cell = 12;
  c.train.epochs = 2;
  c.adapt.passes = 3;
  std::vector<std::string> metrics;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = scratch_root() / ("repro" + std::to_string(run));
    std::ostringstream log;
    cmd_gen(c, dir / "data", true, log);
    cmd_train(c, dir / "data", dir / "train", true, 0, log);
    cmd_adapt(c, dir / "data", dir / "train", dir / "adapt", true, 0, log);
    cmd_eval(c, dir / "data", dir / "adapt", dir / "eval", true, 0, log);
    metrics.push_back(slurp(dir / "eval" / "metrics.csv"));
  }
  Outcome o;
  o.pass = !metrics[0].empty() && metrics[0] == metrics[1];
  o.detail = "metrics.csv " + std::to_string(metrics[0].size()) + " bytes, " +
             (o.pass ? "identical across runs" : "DIFFERENT");
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "geometry oracles", criterion_geometry},
      {2, "gyro equivalence", criterion_gyro},
      {3, "frechet statistics", criterion_frechet},
      {4, "hhsw", criterion_hhsw},
      {5, "delta hyperbolicity", criterion_delta},
      {6, "gradient suite", criterion_gradients},
      {7, "domain adaptation benchmark", criterion_adaptation},
      {8, "sfuda contract", criterion_sfuda},
      {9, "reproducibility", criterion_reproducibility},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  bool ok = true;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    ok = ok && o.pass;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::error_code ec;
  fs::remove_all(scratch_root(), ec);
  return ok ? 0 : 1;
}
