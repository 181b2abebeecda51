#include "lorentzkit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "lorentzkit/error.hpp"

namespace lorentzkit {

namespace {

constexpr char kMagic[5] = {'H', 'E', 'E', 'G', '1'};

template <typename T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    v = byteswap_if_big(v);
    buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    put<std::uint64_t>(s.size());
    buf_ += s;
  }
  void doubles(const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) put(p[i]);
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : buf_(std::move(bytes)) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return byteswap_if_big(v);
  }
  std::string str() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void doubles(double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) p[i] = get<double>();
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw ValidationError("checkpoint is truncated");
  }
  std::string buf_;
  std::size_t pos_ = 0;
};

void put_point(Writer& w, const LorentzPoint& p) {
  w.put<std::uint64_t>(static_cast<std::uint64_t>(p.ambient().size()));
  w.doubles(p.ambient().data(), static_cast<std::size_t>(p.ambient().size()));
}

LorentzPoint get_point(Reader& r, Curvature k) {
  const auto n = r.get<std::uint64_t>();
  Vec v(static_cast<Eigen::Index>(n));
  r.doubles(v.data(), n);
  return LorentzPoint::unchecked(std::move(v), k);
}

}  // namespace

std::string model_config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["channels"] = c.channels;
  j["times"] = c.times;
  j["classes"] = c.classes;
  j["curvature"] = c.curvature;
  j["temporal_filters"] = c.temporal_filters;
  j["temporal_kernel"] = c.temporal_kernel;
  j["depth_multiplier"] = c.depth_multiplier;
  j["pool1"] = c.pool1;
  j["pool2"] = c.pool2;
  j["depth_kernel"] = c.depth_kernel;
  j["dropout"] = c.dropout;
  j["clamp_norm"] = c.clamp_norm;
  j["lfc_gated"] = c.lfc_gated;
  j["bn_momentum"] = c.bn_momentum;
  j["alignment"] = to_string(c.alignment);
  j["hhsw_weight"] = c.hhsw_weight;
  j["hhsw_slices"] = c.hhsw_slices;
  j["hhsw_exponent"] = c.hhsw_exponent;
  j["reference"] = to_string(c.reference);
  j["hhsw_site"] = to_string(c.hhsw_site);
  j["eta0"] = c.schedule.eta0;
  j["decay_rate"] = c.schedule.decay_rate;
  j["eta_min"] = c.schedule.eta_min;
  j["eta_test"] = c.schedule.eta_test;
  j["epsilon"] = c.epsilon;
  j["seed"] = c.seed;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  ModelConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.channels = j.at("channels").get<std::size_t>();
    c.times = j.at("times").get<std::size_t>();
    c.classes = j.at("classes").get<std::size_t>();
    c.curvature = j.at("curvature").get<double>();
    c.temporal_filters = j.at("temporal_filters").get<std::size_t>();
    c.temporal_kernel = j.at("temporal_kernel").get<std::size_t>();
    c.depth_multiplier = j.at("depth_multiplier").get<std::size_t>();
    c.pool1 = j.at("pool1").get<std::size_t>();
    c.pool2 = j.at("pool2").get<std::size_t>();
    c.depth_kernel = j.at("depth_kernel").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.clamp_norm = j.at("clamp_norm").get<double>();
    c.lfc_gated = j.at("lfc_gated").get<bool>();
    c.bn_momentum = j.at("bn_momentum").get<double>();
    c.alignment = parse_alignment(j.at("alignment").get<std::string>());
    c.hhsw_weight = j.at("hhsw_weight").get<double>();
    c.hhsw_slices = j.at("hhsw_slices").get<std::size_t>();
    c.hhsw_exponent = j.at("hhsw_exponent").get<double>();
    c.reference = parse_reference(j.at("reference").get<std::string>());
    c.hhsw_site = parse_hhsw_site(j.at("hhsw_site").get<std::string>());
    c.schedule.eta0 = j.at("eta0").get<double>();
    c.schedule.decay_rate = j.at("decay_rate").get<double>();
    c.schedule.eta_min = j.at("eta_min").get<double>();
    c.schedule.eta_test = j.at("eta_test").get<double>();
    c.epsilon = j.at("epsilon").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint model configuration: " + std::string(e.what()));
  }
  return c;
}

void save_checkpoint(HeegnetModel& model, const std::string& metadata_json, const std::filesystem::path& path) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.str(model_config_to_json(model.config()));
  w.str(metadata_json);
  const auto params = model.parameters();
  w.put<std::uint64_t>(params.size());
  for (const Parameter* p : params) {
    w.str(p->name);
    w.put<std::uint64_t>(p->value.ndim());
    for (auto d : p->value.shape()) w.put<std::uint64_t>(d);
    w.doubles(p->value.data(), p->value.size());
  }
  for (int which = 0; which < 2; ++which) {
    const EuclideanBnState& s = model.bn_state(which);
    w.put<std::uint64_t>(s.mean.size());
    w.doubles(s.mean.data(), s.mean.size());
    w.doubles(s.var.data(), s.var.size());
  }
  const auto& stats = model.alignment().stats();
  w.put<std::uint64_t>(stats.size());
  for (const auto& [key, st] : stats) {
    w.put<std::int32_t>(key);
    w.put<std::uint64_t>(st.steps);
    put_point(w, st.train_mean);
    put_point(w, st.test_mean);
    w.put(st.train_var);
    w.put(st.test_var);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!f) throw IoError("write failed for checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  Reader r(ss.str());
  if (r.raw(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) {
    throw ValidationError(path.string() + " is not a lorentzkit checkpoint");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  LoadedCheckpoint out{HeegnetModel(model_config_from_json(r.str())), ""};
  out.metadata = r.str();
  HeegnetModel& model = out.model;
  const Curvature k = model.curvature();

  auto params = model.parameters();
  const auto count = r.get<std::uint64_t>();
  if (count != params.size()) throw ValidationError("checkpoint parameter count does not match its configuration");
  for (Parameter* p : params) {
    const std::string name = r.str();
    if (name != p->name) throw ValidationError("checkpoint parameter '" + name + "' where '" + p->name + "' was expected");
    Shape shape(r.get<std::uint64_t>());
    for (auto& d : shape) d = r.get<std::uint64_t>();
    if (shape != p->value.shape()) throw ValidationError("checkpoint parameter " + name + " has shape " + shape_str(shape));
    r.doubles(p->value.data(), p->value.size());
    p->zero_grad();
  }
  for (int which = 0; which < 2; ++which) {
    EuclideanBnState& s = model.bn_state(which);
    if (r.get<std::uint64_t>() != s.mean.size()) throw ValidationError("checkpoint BN state size mismatch");
    r.doubles(s.mean.data(), s.mean.size());
    r.doubles(s.var.data(), s.var.size());
  }
  auto& stats = model.alignment().stats();
  stats.clear();
  const auto entries = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < entries; ++i) {
    const int key = r.get<std::int32_t>();
    const auto steps = r.get<std::uint64_t>();
    LorentzPoint train_mean = get_point(r, k);
    LorentzPoint test_mean = get_point(r, k);
    const double train_var = r.get<double>();
    const double test_var = r.get<double>();
    stats.emplace(key, DomainStats{train_mean, test_mean, train_var, test_var, static_cast<std::size_t>(steps)});
  }
  if (!r.done()) throw ValidationError("checkpoint has trailing bytes");
  return out;
}

}  // namespace lorentzkit
