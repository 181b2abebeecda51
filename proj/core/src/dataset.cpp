#include "lorentzkit/dataset.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "lorentzkit/error.hpp"

namespace lorentzkit {

namespace fs = std::filesystem;

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void EpochDataset::validate() const {
  if (channels == 0 || times == 0) throw ValidationError("dataset has zero channels or times");
  if (labels.size() != domains.size()) throw ValidationError("dataset label and domain counts differ");
  if (epochs.size() != labels.size() * channels * times) {
    throw ValidationError("dataset payload holds " + std::to_string(epochs.size()) + " values, expected " +
                          std::to_string(labels.size() * channels * times));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_names.size()) {
      throw ValidationError("epoch " + std::to_string(i) + " has label " + std::to_string(labels[i]) +
                            " outside the class catalog");
    }
    if (domains[i] < 0 || static_cast<std::size_t>(domains[i]) >= domain_names.size()) {
      throw ValidationError("epoch " + std::to_string(i) + " has domain " + std::to_string(domains[i]) +
                            " outside the domain catalog");
    }
  }
}

EpochData EpochDataset::select(std::span<const std::size_t> rows) const {
  const std::size_t pt = channels * times;
  EpochData out;
  out.x = Tensor(Shape{rows.size(), channels, times});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw DimensionError("dataset row out of range");
    const float* src = epochs.data() + rows[i] * pt;
    double* dst = out.x.data() + i * pt;
    for (std::size_t j = 0; j < pt; ++j) dst[j] = static_cast<double>(src[j]);
    out.labels.push_back(labels[rows[i]]);
    out.domains.push_back(domains[rows[i]]);
  }
  return out;
}

EpochData EpochDataset::all() const {
  std::vector<std::size_t> rows(size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return select(rows);
}

std::vector<std::size_t> EpochDataset::rows_in_domains(std::span<const int> domain_ids) const {
  const std::set<int> want(domain_ids.begin(), domain_ids.end());
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < size(); ++i) {
    if (want.count(domains[i])) rows.push_back(i);
  }
  return rows;
}

namespace {

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write " + p.string());
  f << text;
  if (!f) throw IoError("write failed for " + p.string());
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

void write_dataset(const EpochDataset& data, const fs::path& dir) {
  data.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  nlohmann::ordered_json meta;
  meta["schema_version"] = kDatasetSchemaVersion;
  meta["channels"] = data.channels;
  meta["times"] = data.times;
  meta["sampling_rate"] = data.sampling_rate;
  meta["n_epochs"] = data.size();
  meta["dtype"] = "float32";
  meta["byte_order"] = "little";
  meta["layout"] = "n_epochs x channels x times";
  meta["classes"] = data.class_names;
  meta["domains"] = data.domain_names;
  meta["config_hash"] = data.config_hash;
  meta["generator"] = data.generator.empty() ? nlohmann::ordered_json::object() : nlohmann::ordered_json::parse(data.generator);
  write_text(dir / "meta.json", meta.dump(2) + "\n");

  {
    std::ofstream f(dir / "epochs.bin", std::ios::binary);
    if (!f) throw IoError("cannot write " + (dir / "epochs.bin").string());
    std::vector<std::uint32_t> words(data.epochs.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
      std::uint32_t w;
      std::memcpy(&w, &data.epochs[i], 4);
      words[i] = to_little(w);
    }
    f.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
    if (!f) throw IoError("write failed for epochs.bin");
  }

  std::string index = "epoch_id,label_id,domain_id\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    index += std::to_string(i) + "," + std::to_string(data.labels[i]) + "," + std::to_string(data.domains[i]) + "\n";
  }
  write_text(dir / "index.csv", index);
}

EpochDataset read_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  EpochDataset data;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text(dir / "meta.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("meta.json: " + std::string(e.what()));
  }
  try {
    if (meta.at("schema_version").get<int>() != kDatasetSchemaVersion) {
      throw ValidationError("unsupported dataset schema version " + meta.at("schema_version").dump());
    }
    if (meta.at("dtype").get<std::string>() != "float32") throw ValidationError("dataset dtype must be float32");
    data.channels = meta.at("channels").get<std::size_t>();
    data.times = meta.at("times").get<std::size_t>();
    data.sampling_rate = meta.at("sampling_rate").get<double>();
    data.class_names = meta.at("classes").get<std::vector<std::string>>();
    data.domain_names = meta.at("domains").get<std::vector<std::string>>();
    if (meta.contains("config_hash")) data.config_hash = meta["config_hash"].get<std::string>();
    if (meta.contains("generator")) data.generator = meta["generator"].dump();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("meta.json: " + std::string(e.what()));
  }
  const std::size_t n = meta["n_epochs"].get<std::size_t>();

  const std::string raw = read_text(dir / "epochs.bin");
  const std::size_t expect = n * data.channels * data.times;
  if (raw.size() != expect * 4) {
    throw ValidationError("epochs.bin holds " + std::to_string(raw.size()) + " bytes, expected " +
                          std::to_string(expect * 4));
  }
  data.epochs.resize(expect);
  for (std::size_t i = 0; i < expect; ++i) {
    std::uint32_t w;
    std::memcpy(&w, raw.data() + i * 4, 4);
    w = to_little(w);
    std::memcpy(&data.epochs[i], &w, 4);
  }

  std::istringstream index(read_text(dir / "index.csv"));
  std::string line;
  std::getline(index, line);
  if (line.rfind("epoch_id,label_id,domain_id", 0) != 0) throw ValidationError("index.csv: unexpected header");
  std::size_t row = 0;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    long id = 0, label = 0, domain = 0;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%ld,%ld,%ld%c", &id, &label, &domain, &tail) < 3 || id != static_cast<long>(row)) {
      throw ValidationError("index.csv: malformed row " + std::to_string(row + 1));
    }
    data.labels.push_back(static_cast<int>(label));
    data.domains.push_back(static_cast<int>(domain));
    ++row;
  }
  if (row != n) throw ValidationError("index.csv lists " + std::to_string(row) + " epochs, meta.json " + std::to_string(n));
  data.validate();
  return data;
}

}  // namespace lorentzkit
