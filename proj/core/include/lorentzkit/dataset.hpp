#pragma once

// Epoch dataset directory: meta.json, epochs.bin (little-endian float32, C-order
// n x P x T) and index.csv (epoch_id,label_id,domain_id).

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lorentzkit/train.hpp"

namespace lorentzkit {

inline constexpr int kDatasetSchemaVersion = 1;

struct EpochDataset {
  std::size_t channels = 0;
  std::size_t times = 0;
  double sampling_rate = 0.0;
  std::vector<std::string> class_names;
  std::vector<std::string> domain_names;
  std::vector<float> epochs;  // n * channels * times
  std::vector<int> labels;
  std::vector<int> domains;
  std::string generator;      // generator configuration, JSON text
  std::string config_hash;    // 16 hex digits of the generator configuration

  std::size_t size() const noexcept { return labels.size(); }
  void validate() const;
  // float64 view of the selected epochs (all when rows is empty).
  EpochData select(std::span<const std::size_t> rows) const;
  EpochData all() const;
  std::vector<std::size_t> rows_in_domains(std::span<const int> domain_ids) const;
};

// 64-bit FNV-1a as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& text);

void write_dataset(const EpochDataset& data, const std::filesystem::path& dir);
EpochDataset read_dataset(const std::filesystem::path& dir);

}  // namespace lorentzkit
