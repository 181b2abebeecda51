#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "lorentzkit/checkpoint.hpp"
#include "lorentzkit/embedding_io.hpp"
#include "lorentzkit/error.hpp"
#include "lorentzkit/synth.hpp"
#include "lorentzkit/train.hpp"
#include "test_util.hpp"

using namespace lorentzkit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("lorentzkit_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

template <class F>
std::string validation_message(F&& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.channels = 4;
  m.times = 64;
  m.classes = 2;
  m.temporal_filters = 2;
  m.temporal_kernel = 8;
  m.depth_multiplier = 2;
  m.pool1 = 4;
  m.pool2 = 4;
  m.depth_kernel = 4;
  m.hhsw_slices = 8;
  m.seed = 5;
  return m;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(Embedding, RoundTripIsExact) {
  TempDir tmp("emb_rt");
  Rng rng(4);
  Eigen::MatrixXd rows(5, 3);
  for (Eigen::Index i = 0; i < rows.size(); ++i) rows.data()[i] = rng.normal() * 1e3;
  rows(0, 0) = 0.1;
  rows(1, 1) = -1e-300;
  write_embedding(tmp.path / "x.csv", rows);
  const EmbeddingMatrix m = read_embedding(tmp.path / "x.csv");
  EXPECT_EQ(m.rows, rows);
  EXPECT_FALSE(m.curvature.has_value());
  EXPECT_FALSE(fs::exists(sidecar_path(tmp.path / "x.csv")));
}

TEST(Embedding, SidecarCarriesCurvature) {
  TempDir tmp("emb_side");
  Rng rng(5);
  const Curvature k(-0.5);
  Eigen::MatrixXd rows(4, 4);
  for (Eigen::Index i = 0; i < 4; ++i) rows.row(i) = lorentzkit::testing::random_point(3, 2.0, rng, k).ambient().transpose();
  write_embedding(tmp.path / "p.csv", rows, -0.5);
  const EmbeddingMatrix m = read_embedding(tmp.path / "p.csv");
  ASSERT_TRUE(m.curvature.has_value());
  EXPECT_DOUBLE_EQ(*m.curvature, -0.5);
  const auto pts = embedding_points(m);
  ASSERT_EQ(pts.size(), 4u);
  EXPECT_DOUBLE_EQ(pts[2].curvature().k(), -0.5);
}

TEST(Embedding, NonFiniteRowIsNamed) {
  TempDir tmp("emb_nan");
  write_text(tmp.path / "bad.csv", "1,2,3\n4,nan,6\n");
  const std::string msg = validation_message([&] { read_embedding(tmp.path / "bad.csv"); });
  EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
}

TEST(Embedding, RaggedAndTextRowsRejected) {
  TempDir tmp("emb_ragged");
  write_text(tmp.path / "ragged.csv", "1,2,3\n4,5\n");
  EXPECT_NE(validation_message([&] { read_embedding(tmp.path / "ragged.csv"); }).find("row 2"), std::string::npos);
  write_text(tmp.path / "text.csv", "1,2\nx,3\n");
  EXPECT_NE(validation_message([&] { read_embedding(tmp.path / "text.csv"); }).find("row 2"), std::string::npos);
}

TEST(Embedding, MissingFileIsIoError) {
  EXPECT_THROW(read_embedding("/nonexistent/lorentzkit.csv"), IoError);
}

TEST(Embedding, BadSidecarModelRejected) {
  TempDir tmp("emb_model");
  write_text(tmp.path / "p.csv", "1,0\n");
  write_text(sidecar_path(tmp.path / "p.csv"), "{\"model\": \"poincare\", \"curvature\": -1}");
  EXPECT_THROW(read_embedding(tmp.path / "p.csv"), ValidationError);
}

TEST(Embedding, OffManifoldRowsFlagged) {
  Rng rng(6);
  Eigen::MatrixXd rows(4, 3);
  for (Eigen::Index i = 0; i < 4; ++i) rows.row(i) = lorentzkit::testing::random_point(2, 3.0, rng).ambient().transpose();
  rows(1, 0) += 0.01;
  rows(3, 0) = -rows(3, 0);  // lower sheet
  EXPECT_EQ(off_manifold_rows(rows, Curvature(-1.0), 1e-6), (std::vector<std::size_t>{1, 3}));
}

TEST(Checkpoint, ModelConfigJsonRoundTrips) {
  ModelConfig m = tiny_model();
  m.alignment = AlignmentMode::kMoments;
  m.curvature = -0.7;
  const ModelConfig back = model_config_from_json(model_config_to_json(m));
  EXPECT_EQ(model_config_to_json(back), model_config_to_json(m));
}

class CheckpointFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    EpochGenConfig g;
    g.domains = 3;
    g.families = 2;
    g.variants = 1;
    g.channels = 4;
    g.times = 64;
    g.per_cell = 8;
    g.seed = 2;
    ds_ = gen_epochs(g);
    const std::vector<int> src{1, 2}, tgt{0};
    source_ = ds_.select(ds_.rows_in_domains(src));
    target_ = ds_.select(ds_.rows_in_domains(tgt));
    model_ = std::make_unique<HeegnetModel>(tiny_model());
    TrainOptions o;
    o.epochs = 1;
    o.batch_size = 8;
    fit(*model_, source_, o);
    AdaptOptions ao;
    ao.passes = 2;
    sfuda_adapt(*model_, target_, ao);
  }

  EpochDataset ds_;
  EpochData source_, target_;
  std::unique_ptr<HeegnetModel> model_;
};

TEST_F(CheckpointFixture, RoundTripPredictsBitwise) {
  TempDir tmp("ckpt_rt");
  const fs::path file = tmp.path / "m.heeg";
  save_checkpoint(*model_, "{\"fold\": 0}", file);
  LoadedCheckpoint loaded = load_checkpoint(file);
  EXPECT_EQ(loaded.metadata, "{\"fold\": 0}");
  EXPECT_TRUE(bitwise_equal(predict_logits(*model_, target_, 64), predict_logits(loaded.model, target_, 64)));
  EXPECT_TRUE(bitwise_equal(predict_logits(*model_, source_, 64), predict_logits(loaded.model, source_, 64)));
}

TEST_F(CheckpointFixture, TruncationAndCorruptionRejected) {
  TempDir tmp("ckpt_bad");
  const fs::path file = tmp.path / "m.heeg";
  save_checkpoint(*model_, "{}", file);
  const auto size = fs::file_size(file);

  fs::copy_file(file, tmp.path / "trunc.heeg");
  fs::resize_file(tmp.path / "trunc.heeg", size - 9);
  EXPECT_THROW(load_checkpoint(tmp.path / "trunc.heeg"), ValidationError);

  fs::copy_file(file, tmp.path / "trail.heeg");
  std::ofstream(tmp.path / "trail.heeg", std::ios::binary | std::ios::app) << 'x';
  EXPECT_THROW(load_checkpoint(tmp.path / "trail.heeg"), ValidationError);

  write_text(tmp.path / "magic.heeg", "NOTACHECKPOINT");
  EXPECT_THROW(load_checkpoint(tmp.path / "magic.heeg"), ValidationError);

  EXPECT_THROW(load_checkpoint(tmp.path / "missing.heeg"), IoError);
}
