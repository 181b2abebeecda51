#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "lorentzkit/error.hpp"
#include "lorentzkit/frechet.hpp"
#include "lorentzkit/alignment.hpp"
#include "lorentzkit/synth.hpp"

namespace lk = lorentzkit;
namespace fs = std::filesystem;

namespace {

lk::EpochGenConfig small_config() {
  lk::EpochGenConfig c;
  c.domains = 3;
  c.per_cell = 5;
  c.times = 64;
  c.channels = 4;
  c.seed = 11;
  return c;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("lorentzkit_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Matched-filter accuracy against the clean templates, maximized over trial latency jitter.
constexpr long kMaxLag = 10;

double matched_filter_accuracy(const lk::EpochDataset& d, const std::vector<Eigen::MatrixXd>& templates) {
  const std::size_t per = d.channels * d.times;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    int best = -1;
    double best_score = -1e300;
    for (std::size_t c = 0; c < templates.size(); ++c) {
      double score = -1e300;
      for (long lag = -kMaxLag; lag <= kMaxLag; ++lag) {
        double dot = 0.0;
        for (std::size_t ch = 0; ch < d.channels; ++ch) {
          for (std::size_t t = 0; t < d.times; ++t) {
            const long src = static_cast<long>(t) - lag;
            if (src < 0 || src >= static_cast<long>(d.times)) continue;
            dot += d.epochs[i * per + ch * d.times + t] *
                   templates[c](static_cast<Eigen::Index>(ch), static_cast<Eigen::Index>(src));
          }
        }
        score = std::max(score, dot / templates[c].norm());
      }
      if (score > best_score) {
        best_score = score;
        best = static_cast<int>(c);
      }
    }
    correct += best == d.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(d.size());
}

// Nearest class centroid fit on domain 0, mean accuracy over the other domains.
double cross_domain_centroid_accuracy(const lk::EpochDataset& d) {
  const std::size_t per = d.channels * d.times;
  const std::size_t classes = d.class_names.size();
  std::vector<std::vector<double>> centroid(classes, std::vector<double>(per, 0.0));
  std::vector<std::size_t> count(classes, 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.domains[i] != 0) continue;
    const auto c = static_cast<std::size_t>(d.labels[i]);
    for (std::size_t j = 0; j < per; ++j) centroid[c][j] += d.epochs[i * per + j];
    ++count[c];
  }
  for (std::size_t c = 0; c < classes; ++c)
    for (double& v : centroid[c]) v /= static_cast<double>(count[c]);
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.domains[i] == 0) continue;
    int best = -1;
    double best_dist = 1e300;
    for (std::size_t c = 0; c < classes; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < per; ++j) {
        const double e = d.epochs[i * per + j] - centroid[c][j];
        s += e * e;
      }
      if (s < best_dist) {
        best_dist = s;
        best = static_cast<int>(c);
      }
    }
    correct += best == d.labels[i];
    ++total;
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

TEST(Synth, DefaultConfigCounts) {
  lk::EpochGenConfig c;
  c.times = 64;  // counts do not depend on T
  const lk::EpochDataset d = lk::gen_epochs(c);
  EXPECT_EQ(d.size(), 960u);
  EXPECT_EQ(d.epochs.size(), 960u * c.channels * c.times);
  EXPECT_EQ(d.class_names.size(), 4u);
  EXPECT_EQ(d.domain_names.size(), 6u);
  std::vector<std::size_t> cells(24, 0);
  for (std::size_t i = 0; i < d.size(); ++i) ++cells[static_cast<std::size_t>(d.domains[i] * 4 + d.labels[i])];
  for (std::size_t n : cells) EXPECT_EQ(n, 40u);
}

TEST(Synth, SameSeedSameBytes) {
  const lk::EpochDataset a = lk::gen_epochs(small_config());
  const lk::EpochDataset b = lk::gen_epochs(small_config());
  EXPECT_EQ(a.epochs, b.epochs);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.domains, b.domains);
  EXPECT_EQ(a.config_hash, b.config_hash);
}

TEST(Synth, SeedChangesDataAndHash) {
  lk::EpochGenConfig c = small_config();
  const lk::EpochDataset a = lk::gen_epochs(c);
  c.seed += 1;
  const lk::EpochDataset b = lk::gen_epochs(c);
  EXPECT_NE(a.epochs, b.epochs);
  EXPECT_NE(a.config_hash, b.config_hash);
}

TEST(Synth, NoiselessUnshiftedMatchedFilterIsPerfect) {
  lk::EpochGenConfig c = small_config();
  c.times = 256;
  c.snr_db = 120.0;
  c.shift_strength = 0.0;
  const lk::EpochDataset d = lk::gen_epochs(c);
  EXPECT_DOUBLE_EQ(matched_filter_accuracy(d, lk::class_templates(c)), 1.0);
}

TEST(Synth, ZeroShiftGivesIdentityShifts) {
  lk::EpochGenConfig c = small_config();
  c.shift_strength = 0.0;
  for (const lk::ShiftSpec& s : lk::make_shifts(c)) {
    EXPECT_LT((s.mixing - Eigen::MatrixXd::Identity(4, 4)).norm(), 1e-12);
    EXPECT_DOUBLE_EQ(s.gain, 1.0);
    EXPECT_EQ(s.latency_shift, 0);
    EXPECT_DOUBLE_EQ(s.noise_sigma, 0.0);
  }
}

TEST(Synth, CrossDomainAccuracyFallsWithShift) {
  std::vector<double> acc;
  for (double s : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      lk::EpochGenConfig c = small_config();
      c.times = 128;
      c.domains = 5;
      c.per_cell = 10;
      c.snr_db = 5.0;
      c.shift_strength = s;
      c.seed = seed;
      total += cross_domain_centroid_accuracy(lk::gen_epochs(c));
    }
    acc.push_back(total / 4.0);
  }
  std::ostringstream trace;
  for (double a : acc) trace << a << " ";
  // Falls until it saturates near chance.
  EXPECT_GT(acc[0], acc[1]) << trace.str();
  EXPECT_GT(acc[1], acc[2]) << trace.str();
  EXPECT_LT(acc[3], acc[1]) << trace.str();
  EXPECT_LT(acc[4], acc[1]) << trace.str();
}

TEST(Synth, ValidateRejectsBadConfig) {
  lk::EpochGenConfig c = small_config();
  c.shift_strength = 1.5;
  EXPECT_THROW(c.validate(), lk::ValidationError);
  c = small_config();
  c.per_cell = 0;
  EXPECT_THROW(c.validate(), lk::ValidationError);
}

TEST(Dataset, RoundTripIsBitExact) {
  TempDir tmp("dataset_rt");
  const lk::EpochDataset a = lk::gen_epochs(small_config());
  lk::write_dataset(a, tmp.path);
  const lk::EpochDataset b = lk::read_dataset(tmp.path);
  EXPECT_EQ(a.epochs, b.epochs);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.domains, b.domains);
  EXPECT_EQ(a.class_names, b.class_names);
  EXPECT_EQ(a.domain_names, b.domain_names);
  EXPECT_EQ(a.config_hash, b.config_hash);
  EXPECT_EQ(a.channels, b.channels);
  EXPECT_EQ(a.times, b.times);
}

TEST(Dataset, WritesAreByteIdentical) {
  TempDir t1("dataset_w1"), t2("dataset_w2");
  const lk::EpochDataset a = lk::gen_epochs(small_config());
  lk::write_dataset(a, t1.path);
  lk::write_dataset(lk::gen_epochs(small_config()), t2.path);
  for (const char* f : {"meta.json", "epochs.bin", "index.csv"})
    EXPECT_EQ(slurp(t1.path / f), slurp(t2.path / f)) << f;
  EXPECT_EQ(fs::file_size(t1.path / "epochs.bin"), a.epochs.size() * sizeof(float));
}

TEST(Dataset, MissingDirectoryIsIoError) {
  EXPECT_THROW(lk::read_dataset("/nonexistent/lorentzkit/dataset"), lk::IoError);
}

TEST(Dataset, TruncatedEpochsIsValidationError) {
  TempDir tmp("dataset_trunc");
  lk::write_dataset(lk::gen_epochs(small_config()), tmp.path);
  fs::resize_file(tmp.path / "epochs.bin", fs::file_size(tmp.path / "epochs.bin") - 4);
  EXPECT_THROW(lk::read_dataset(tmp.path), lk::ValidationError);
}

TEST(Dataset, BadIndexHeaderIsValidationError) {
  TempDir tmp("dataset_hdr");
  lk::write_dataset(lk::gen_epochs(small_config()), tmp.path);
  std::string index = slurp(tmp.path / "index.csv");
  index.replace(0, 5, "bogus");
  std::ofstream(tmp.path / "index.csv", std::ios::binary) << index;
  EXPECT_THROW(lk::read_dataset(tmp.path), lk::ValidationError);
}

TEST(Dataset, FnvHashHandValue) {
  // 64-bit FNV-1a offset basis for the empty string, and the published value for "a".
  EXPECT_EQ(lk::fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(lk::fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(Clouds, CountsAndLabels) {
  lk::CloudConfig c;
  c.domains = 3;
  c.per_class = 10;
  const lk::CloudSet s = lk::gen_manifold_clouds(c);
  EXPECT_EQ(s.points.size(), 3u * 4u * 10u);
  EXPECT_EQ(s.prototypes.size(), 4u);
  EXPECT_EQ(s.domain_offsets.size(), 3u);
  for (const auto& p : s.points) EXPECT_LT(p.constraint_residual(), 1e-9);
}

TEST(Clouds, PrototypesAreCenteredAtOrigin) {
  lk::CloudConfig c;
  const lk::CloudSet s = lk::gen_manifold_clouds(c);
  const lk::FrechetResult m = lk::frechet_mean(s.prototypes);
  EXPECT_LT(lk::geodesic_distance(m.mean, lk::LorentzPoint::origin(c.dim)), 1e-6);
}

TEST(Clouds, SimplexDirectionsAreCenteredUnit) {
  const auto dirs = lk::simplex_directions(4, 8, 2);
  lk::Vec sum = lk::Vec::Zero(8);
  for (const auto& d : dirs) {
    EXPECT_NEAR(d.norm(), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(d[0], 0.0);
    EXPECT_DOUBLE_EQ(d[7], 0.0);
    sum += d;
  }
  EXPECT_LT(sum.norm(), 1e-12);
}

TEST(Clouds, ShiftSeparatesDomains) {
  auto domain_gap = [](double shift) {
    lk::CloudConfig c;
    c.domains = 2;
    c.per_class = 25;
    c.shift = shift;
    const lk::CloudSet s = lk::gen_manifold_clouds(c);
    std::vector<lk::LorentzPoint> a, b;
    for (std::size_t i = 0; i < s.points.size(); ++i) (s.domains[i] == 0 ? a : b).push_back(s.points[i]);
    return lk::hhsw_estimate(a, b, 200, 2.0, 3);
  };
  EXPECT_LT(domain_gap(0.0), domain_gap(1.0));
}
