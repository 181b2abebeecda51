#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "lorentzkit/config.hpp"
#include "lorentzkit/error.hpp"

namespace lk = lorentzkit;

TEST(ConfigValue, ParsesScalars) {
  EXPECT_EQ(std::get<std::int64_t>(lk::parse_config_value("42")), 42);
  EXPECT_EQ(std::get<std::int64_t>(lk::parse_config_value("-7")), -7);
  EXPECT_DOUBLE_EQ(std::get<double>(lk::parse_config_value("1e-3")), 1e-3);
  EXPECT_DOUBLE_EQ(std::get<double>(lk::parse_config_value("0.5")), 0.5);
  EXPECT_TRUE(std::isinf(std::get<double>(lk::parse_config_value("inf"))));
  EXPECT_TRUE(std::isnan(std::get<double>(lk::parse_config_value("nan"))));
  EXPECT_EQ(std::get<bool>(lk::parse_config_value("true")), true);
  EXPECT_EQ(std::get<bool>(lk::parse_config_value("false")), false);
  EXPECT_EQ(std::get<std::string>(lk::parse_config_value("\"full\"")), "full");
  EXPECT_EQ(std::get<std::string>(lk::parse_config_value("'pre_mlr'")), "pre_mlr");
}

TEST(Config, SectionsPrefixKeys) {
  lk::RunConfig c;
  c.load_text(
      "seed = 9\n"
      "[train]\n"
      "lr = 0.01  # comment\n"
      "epochs = 3\n"
      "[model]\n"
      "alignment = \"moments\"\n"
      "[data]\n"
      "target_domains = \"1,2\"\n");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_DOUBLE_EQ(c.train.lr, 0.01);
  EXPECT_EQ(c.train.epochs, 3u);
  EXPECT_EQ(c.model.alignment, lk::AlignmentMode::kMoments);
  EXPECT_EQ(c.target_domains, (std::vector<int>{1, 2}));
}

TEST(Config, UnknownKeyNamesLine) {
  lk::RunConfig c;
  try {
    c.load_text("seed = 1\n\n[train]\nlearning_rate = 0.1\n", "run.toml");
    FAIL() << "expected ValidationError";
  } catch (const lk::ValidationError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("run.toml:4"), std::string::npos) << what;
    EXPECT_NE(what.find("train.learning_rate"), std::string::npos) << what;
  }
}

TEST(Config, IllTypedValueRejected) {
  lk::RunConfig c;
  EXPECT_THROW(c.set("train.epochs", lk::ConfigValue(std::string("many"))), lk::ValidationError);
  EXPECT_THROW(c.set("model.alignment", lk::ConfigValue(std::string("partial"))), lk::ValidationError);
  EXPECT_THROW(c.set("train.epochs", lk::ConfigValue(std::int64_t{-1})), lk::ValidationError);
  EXPECT_THROW(c.load_text("train.lr\n"), lk::ValidationError);
  EXPECT_THROW(c.load_text("[train\n"), lk::ValidationError);
}

TEST(Config, SetTextTakesBareWords) {
  lk::RunConfig c;
  c.set_text("model.alignment", "none");
  EXPECT_EQ(c.model.alignment, lk::AlignmentMode::kNone);
  c.set_text("train.lr", "0.25");
  EXPECT_DOUBLE_EQ(c.train.lr, 0.25);
}

TEST(Config, OverlappingDomainsRejected) {
  lk::RunConfig c;
  c.set_text("data.source_domains", "0,1,2");
  c.set_text("data.target_domains", "2");
  EXPECT_THROW(c.validate(), lk::ValidationError);
  c.set_text("data.target_domains", "3");
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ValidateRejectsBadRanges) {
  lk::RunConfig c;
  c.train.lr = 0.0;
  EXPECT_THROW(c.validate(), lk::ValidationError);
  c = lk::RunConfig();
  c.train.val_fraction = 1.0;
  EXPECT_THROW(c.validate(), lk::ValidationError);
  c = lk::RunConfig();
  c.hhsw_exponent = 0.5;
  EXPECT_THROW(c.validate(), lk::ValidationError);
  c = lk::RunConfig();
  c.delta_batch = 3;
  EXPECT_THROW(c.validate(), lk::ValidationError);
}

TEST(Config, TomlEchoRoundTrips) {
  lk::RunConfig a;
  a.seed = 17;
  a.train.lr = 3e-3;
  a.model.alignment = lk::AlignmentMode::kNone;
  a.target_domains = {4};
  lk::RunConfig b;
  b.load_text(a.to_toml());
  EXPECT_EQ(a.entries(), b.entries());
  EXPECT_EQ(a.to_toml(), b.to_toml());
}

TEST(Config, EntriesCoverEveryKey) {
  const lk::RunConfig c;
  const auto entries = c.entries();
  const auto keys = lk::config_keys();
  EXPECT_EQ(entries.size(), keys.size());
  for (std::size_t i = 1; i < entries.size(); ++i) EXPECT_LT(entries[i - 1].first, entries[i].first);
}

TEST(Config, MissingFileIsIoError) {
  lk::RunConfig c;
  EXPECT_THROW(c.load_file("/nonexistent/lorentzkit.toml"), lk::IoError);
}

TEST(Config, TomlHeadedByVersion) {
  const std::string toml = lk::RunConfig().to_toml();
  EXPECT_NE(toml.find(lk::toolkit_version()), std::string::npos);
}
