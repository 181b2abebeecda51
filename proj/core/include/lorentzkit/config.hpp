#pragma once

// Flat run configuration. Files use TOML syntax: `key = value` lines, optional [section]
// headers that prefix keys, '#' comments. Every key is dotted (model.*, align.*, train.*,
// adapt.*, data.*, delta.*, hhsw.*, eval.*) except the top-level `seed`.

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "lorentzkit/dataset.hpp"
#include "lorentzkit/hyperbolicity.hpp"
#include "lorentzkit/model.hpp"
#include "lorentzkit/synth.hpp"
#include "lorentzkit/train.hpp"

namespace lorentzkit {

std::string toolkit_version();

using ConfigValue = std::variant<bool, std::int64_t, double, std::string>;

// Parses one TOML scalar (string, integer, float incl. inf/nan, boolean).
ConfigValue parse_config_value(const std::string& text);

enum class FoldPolicy { kAuto, kLeaveOneOut, kTenGroups };

struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainOptions train;
  AdaptOptions adapt;
  EpochGenConfig data;
  std::vector<int> source_domains;  // empty: every domain not in target_domains
  std::vector<int> target_domains;  // empty: fold policy decides
  FoldPolicy folds = FoldPolicy::kAuto;
  std::size_t eval_batch = 128;
  DeltaMetric delta_metric = DeltaMetric::kEuclidean;
  std::size_t delta_batch = 1500;
  std::size_t delta_batches = 10;
  std::size_t hhsw_slices = 1000;
  double hhsw_exponent = 2.0;

  // Sets one dotted key; unknown keys and ill-typed values throw ValidationError.
  void set(const std::string& key, const ConfigValue& value);
  // Parses the value text before set(); bare words are taken as strings.
  void set_text(const std::string& key, const std::string& text);
  void load_file(const std::filesystem::path& path);
  void load_text(const std::string& text, const std::string& origin = "<config>");
  void validate() const;

  // Sorted `key = value` lines for every known key.
  std::vector<std::pair<std::string, std::string>> entries() const;
  // TOML text headed by the toolkit version.
  std::string to_toml() const;
  std::string to_json() const;
};

std::vector<std::string> config_keys();

void write_resolved_config(const RunConfig& config, const std::filesystem::path& dir);

}  // namespace lorentzkit
