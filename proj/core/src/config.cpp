#include "lorentzkit/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "lorentzkit/error.hpp"

namespace lorentzkit {

std::string toolkit_version() { return LORENTZKIT_VERSION; }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

ConfigValue parse_config_value(const std::string& raw) {
  const std::string t = trim(raw);
  if (t.empty()) throw ValidationError("missing value");
  if (t.front() == '"' || t.front() == '\'') {
    const char q = t.front();
    if (t.size() < 2 || t.back() != q) throw ValidationError("unterminated string " + t);
    std::string out;
    for (std::size_t i = 1; i + 1 < t.size(); ++i) {
      char c = t[i];
      if (q == '"' && c == '\\' && i + 2 < t.size()) {
        c = t[++i];
        if (c == 'n') c = '\n';
        else if (c == 't') c = '\t';
      }
      out += c;
    }
    return out;
  }
  if (t == "true") return true;
  if (t == "false") return false;
  if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  if (t == "nan" || t == "+nan" || t == "-nan") return std::numeric_limits<double>::quiet_NaN();
  std::string num;
  for (char c : t) {
    if (c != '_') num += c;
  }
  const bool is_float = num.find_first_of(".eE") != std::string::npos;
  const char* first = num.data() + (num.front() == '+' ? 1 : 0);
  const char* last = num.data() + num.size();
  if (!is_float) {
    std::int64_t v = 0;
    auto r = std::from_chars(first, last, v);
    if (r.ec == std::errc() && r.ptr == last) return v;
  } else {
    double v = 0.0;
    auto r = std::from_chars(first, last, v);
    if (r.ec == std::errc() && r.ptr == last) return v;
  }
  throw ValidationError("cannot parse value '" + t + "'");
}

namespace {

struct KeyDef {
  std::string name;
  std::function<void(RunConfig&, const ConfigValue&)> set;
  std::function<std::string(const RunConfig&)> get;
};

[[noreturn]] void type_error(const std::string& key, const char* want) {
  throw ValidationError("config key " + key + " expects " + want);
}

double as_double(const std::string& key, const ConfigValue& v) {
  if (auto d = std::get_if<double>(&v)) return *d;
  if (auto i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  type_error(key, "a number");
}

std::size_t as_size(const std::string& key, const ConfigValue& v) {
  auto i = std::get_if<std::int64_t>(&v);
  if (!i || *i < 0) type_error(key, "a nonnegative integer");
  return static_cast<std::size_t>(*i);
}

bool as_bool(const std::string& key, const ConfigValue& v) {
  auto b = std::get_if<bool>(&v);
  if (!b) type_error(key, "true or false");
  return *b;
}

std::string as_string(const std::string& key, const ConfigValue& v) {
  auto s = std::get_if<std::string>(&v);
  if (!s) type_error(key, "a string");
  return *s;
}

std::vector<int> parse_domain_list(const std::string& key, const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    int v = 0;
    auto r = std::from_chars(item.data(), item.data() + item.size(), v);
    if (r.ec != std::errc() || r.ptr != item.data() + item.size() || v < 0) {
      throw ValidationError("config key " + key + ": bad domain id '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::string domain_list(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

KeyDef size_key(std::string name, std::size_t RunConfig::*outer) {
  return {name, [name, outer](RunConfig& c, const ConfigValue& v) { c.*outer = as_size(name, v); },
          [outer](const RunConfig& c) { return std::to_string(c.*outer); }};
}

template <typename S>
KeyDef nested_size(std::string name, S RunConfig::*group, std::size_t S::*field) {
  return {name, [name, group, field](RunConfig& c, const ConfigValue& v) { (c.*group).*field = as_size(name, v); },
          [group, field](const RunConfig& c) { return std::to_string((c.*group).*field); }};
}

template <typename S>
KeyDef nested_double(std::string name, S RunConfig::*group, double S::*field) {
  return {name, [name, group, field](RunConfig& c, const ConfigValue& v) { (c.*group).*field = as_double(name, v); },
          [group, field](const RunConfig& c) { return format_double((c.*group).*field); }};
}

KeyDef schedule_key(std::string name, double MomentumSchedule::*field) {
  return {name, [name, field](RunConfig& c, const ConfigValue& v) { c.model.schedule.*field = as_double(name, v); },
          [field](const RunConfig& c) { return format_double(c.model.schedule.*field); }};
}

const std::vector<KeyDef>& registry() {
  static const std::vector<KeyDef> keys = [] {
    std::vector<KeyDef> k;
    k.push_back({"seed",
                 [](RunConfig& c, const ConfigValue& v) {
                   auto i = std::get_if<std::int64_t>(&v);
                   if (!i || *i < 0) type_error("seed", "a nonnegative integer");
                   c.seed = static_cast<std::uint64_t>(*i);
                 },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});

    k.push_back(nested_size("model.temporal_filters", &RunConfig::model, &ModelConfig::temporal_filters));
    k.push_back(nested_size("model.temporal_kernel", &RunConfig::model, &ModelConfig::temporal_kernel));
    k.push_back(nested_size("model.depth_multiplier", &RunConfig::model, &ModelConfig::depth_multiplier));
    k.push_back(nested_size("model.pool1", &RunConfig::model, &ModelConfig::pool1));
    k.push_back(nested_size("model.pool2", &RunConfig::model, &ModelConfig::pool2));
    k.push_back(nested_size("model.depth_kernel", &RunConfig::model, &ModelConfig::depth_kernel));
    k.push_back(nested_double("model.dropout", &RunConfig::model, &ModelConfig::dropout));
    k.push_back(nested_double("model.curvature", &RunConfig::model, &ModelConfig::curvature));
    k.push_back(nested_double("model.clamp_norm", &RunConfig::model, &ModelConfig::clamp_norm));
    k.push_back({"model.lfc_gated",
                 [](RunConfig& c, const ConfigValue& v) { c.model.lfc_gated = as_bool("model.lfc_gated", v); },
                 [](const RunConfig& c) { return std::string(c.model.lfc_gated ? "true" : "false"); }});
    k.push_back({"model.alignment",
                 [](RunConfig& c, const ConfigValue& v) {
                   c.model.alignment = parse_alignment(as_string("model.alignment", v));
                 },
                 [](const RunConfig& c) { return quote(to_string(c.model.alignment)); }});

    k.push_back(nested_double("align.hhsw_weight", &RunConfig::model, &ModelConfig::hhsw_weight));
    k.push_back(nested_size("align.hhsw_slices", &RunConfig::model, &ModelConfig::hhsw_slices));
    k.push_back(nested_double("align.exponent", &RunConfig::model, &ModelConfig::hhsw_exponent));
    k.push_back({"align.reference",
                 [](RunConfig& c, const ConfigValue& v) {
                   c.model.reference = parse_reference(as_string("align.reference", v));
                 },
                 [](const RunConfig& c) { return quote(to_string(c.model.reference)); }});
    k.push_back({"align.hhsw_site",
                 [](RunConfig& c, const ConfigValue& v) {
                   c.model.hhsw_site = parse_hhsw_site(as_string("align.hhsw_site", v));
                 },
                 [](const RunConfig& c) { return quote(to_string(c.model.hhsw_site)); }});
    k.push_back(schedule_key("align.eta0", &MomentumSchedule::eta0));
    k.push_back(schedule_key("align.decay_rate", &MomentumSchedule::decay_rate));
    k.push_back(schedule_key("align.eta_min", &MomentumSchedule::eta_min));
    k.push_back(schedule_key("align.eta_test", &MomentumSchedule::eta_test));
    k.push_back(nested_double("align.epsilon", &RunConfig::model, &ModelConfig::epsilon));

    k.push_back(nested_size("train.epochs", &RunConfig::train, &TrainOptions::epochs));
    k.push_back(nested_size("train.batch_size", &RunConfig::train, &TrainOptions::batch_size));
    k.push_back(nested_size("train.patience", &RunConfig::train, &TrainOptions::patience));
    k.push_back(nested_double("train.lr", &RunConfig::train, &TrainOptions::lr));
    k.push_back(nested_double("train.val_fraction", &RunConfig::train, &TrainOptions::val_fraction));
    k.push_back(nested_double("train.bn_momentum", &RunConfig::model, &ModelConfig::bn_momentum));

    k.push_back(nested_size("adapt.passes", &RunConfig::adapt, &AdaptOptions::passes));
    k.push_back(nested_size("adapt.batch_size", &RunConfig::adapt, &AdaptOptions::batch_size));

    k.push_back(nested_size("data.domains", &RunConfig::data, &EpochGenConfig::domains));
    k.push_back(nested_size("data.families", &RunConfig::data, &EpochGenConfig::families));
    k.push_back(nested_size("data.variants", &RunConfig::data, &EpochGenConfig::variants));
    k.push_back(nested_size("data.channels", &RunConfig::data, &EpochGenConfig::channels));
    k.push_back(nested_size("data.times", &RunConfig::data, &EpochGenConfig::times));
    k.push_back(nested_size("data.per_cell", &RunConfig::data, &EpochGenConfig::per_cell));
    k.push_back(nested_double("data.sampling_rate", &RunConfig::data, &EpochGenConfig::sampling_rate));
    k.push_back(nested_double("data.snr_db", &RunConfig::data, &EpochGenConfig::snr_db));
    k.push_back(nested_double("data.shift_strength", &RunConfig::data, &EpochGenConfig::shift_strength));
    k.push_back({"data.source_domains",
                 [](RunConfig& c, const ConfigValue& v) {
                   c.source_domains = parse_domain_list("data.source_domains", as_string("data.source_domains", v));
                 },
                 [](const RunConfig& c) { return quote(domain_list(c.source_domains)); }});
    k.push_back({"data.target_domains",
                 [](RunConfig& c, const ConfigValue& v) {
                   c.target_domains = parse_domain_list("data.target_domains", as_string("data.target_domains", v));
                 },
                 [](const RunConfig& c) { return quote(domain_list(c.target_domains)); }});

    k.push_back({"eval.folds",
                 [](RunConfig& c, const ConfigValue& v) {
                   const std::string s = as_string("eval.folds", v);
                   if (s == "auto") c.folds = FoldPolicy::kAuto;
                   else if (s == "leave_one_out") c.folds = FoldPolicy::kLeaveOneOut;
                   else if (s == "ten_groups") c.folds = FoldPolicy::kTenGroups;
                   else throw ValidationError("eval.folds must be auto, leave_one_out or ten_groups");
                 },
                 [](const RunConfig& c) {
                   switch (c.folds) {
                     case FoldPolicy::kLeaveOneOut:
                       return quote("leave_one_out");
                     case FoldPolicy::kTenGroups:
                       return quote("ten_groups");
                     default:
                       return quote("auto");
                   }
                 }});
    k.push_back(size_key("eval.batch_size", &RunConfig::eval_batch));

    k.push_back({"delta.metric",
                 [](RunConfig& c, const ConfigValue& v) {
                   const std::string s = as_string("delta.metric", v);
                   if (s == "euclidean") c.delta_metric = DeltaMetric::kEuclidean;
                   else if (s == "lorentz") c.delta_metric = DeltaMetric::kLorentz;
                   else throw ValidationError("delta.metric must be euclidean or lorentz");
                 },
                 [](const RunConfig& c) {
                   return quote(c.delta_metric == DeltaMetric::kEuclidean ? "euclidean" : "lorentz");
                 }});
    k.push_back(size_key("delta.batch", &RunConfig::delta_batch));
    k.push_back(size_key("delta.batches", &RunConfig::delta_batches));
    k.push_back(size_key("hhsw.slices", &RunConfig::hhsw_slices));
    k.push_back({"hhsw.exponent",
                 [](RunConfig& c, const ConfigValue& v) { c.hhsw_exponent = as_double("hhsw.exponent", v); },
                 [](const RunConfig& c) { return format_double(c.hhsw_exponent); }});
    std::sort(k.begin(), k.end(), [](const KeyDef& a, const KeyDef& b) { return a.name < b.name; });
    return k;
  }();
  return keys;
}

const KeyDef& find_key(const std::string& key) {
  for (const auto& k : registry()) {
    if (k.name == key) return k;
  }
  throw ValidationError("unknown config key '" + key + "'");
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : registry()) out.push_back(k.name);
  return out;
}

void RunConfig::set(const std::string& key, const ConfigValue& value) { find_key(key).set(*this, value); }

void RunConfig::set_text(const std::string& key, const std::string& text) {
  const KeyDef& k = find_key(key);
  ConfigValue v;
  try {
    v = parse_config_value(text);
  } catch (const ValidationError&) {
    v = trim(text);
  }
  // Bare words and numbers may stand for strings (e.g. target domain "5").
  if (!std::holds_alternative<std::string>(v)) {
    try {
      k.set(*this, v);
      return;
    } catch (const ValidationError&) {
      v = trim(text);
    }
  }
  k.set(*this, v);
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // strip comments outside strings
    bool in_str = false;
    char q = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (in_str) {
        if (c == '\\' && q == '"') ++i;
        else if (c == q) in_str = false;
      } else if (c == '"' || c == '\'') {
        in_str = true;
        q = c;
      } else if (c == '#') {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(where + "expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (key.size() >= 2 && key.front() == '"' && key.back() == '"') key = key.substr(1, key.size() - 2);
    if (!section.empty()) key = section + "." + key;
    try {
      set(key, parse_config_value(line.substr(eq + 1)));
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  load_text(ss.str(), path.string());
}

void RunConfig::validate() const {
  data.validate();
  ModelConfig m = model;
  m.channels = data.channels;
  m.times = data.times;
  m.classes = data.classes();
  m.validate();
  if (train.epochs == 0 || train.batch_size == 0) throw ValidationError("train.epochs and train.batch_size must be positive");
  if (!(train.lr > 0.0)) throw ValidationError("train.lr must be positive");
  if (!(train.val_fraction > 0.0 && train.val_fraction < 1.0)) throw ValidationError("train.val_fraction must lie in (0, 1)");
  if (adapt.passes == 0 || adapt.batch_size == 0) throw ValidationError("adapt.passes and adapt.batch_size must be positive");
  if (eval_batch == 0) throw ValidationError("eval.batch_size must be positive");
  if (delta_batch < 4 || delta_batches == 0) throw ValidationError("delta.batch must be >= 4 and delta.batches >= 1");
  if (hhsw_slices == 0) throw ValidationError("hhsw.slices must be positive");
  if (!(hhsw_exponent >= 1.0)) throw ValidationError("hhsw.exponent must be >= 1");
  for (int s : source_domains) {
    if (std::find(target_domains.begin(), target_domains.end(), s) != target_domains.end()) {
      throw ValidationError("domain " + std::to_string(s) + " is listed as both source and target");
    }
  }
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : registry()) out.emplace_back(k.name, k.get(*this));
  return out;
}

std::string RunConfig::to_toml() const {
  std::string out = "# lorentzkit " + toolkit_version() + " resolved configuration\n";
  for (const auto& [k, v] : entries()) out += k + " = " + v + "\n";
  return out;
}

std::string RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["toolkit_version"] = toolkit_version();
  for (const auto& [k, v] : entries()) {
    const ConfigValue cv = parse_config_value(v);
    std::visit([&](const auto& x) {
      using T = std::decay_t<decltype(x)>;
      if constexpr (std::is_same_v<T, double>) {
        if (std::isfinite(x)) j[k] = x;
        else j[k] = v;
      } else {
        j[k] = x;
      }
    }, cv);
  }
  return j.dump();
}

void write_resolved_config(const RunConfig& config, const std::filesystem::path& dir) {
  std::ofstream f(dir / "config.resolved.toml", std::ios::binary);
  if (!f) throw IoError("cannot write " + (dir / "config.resolved.toml").string());
  f << config.to_toml();
}

}  // namespace lorentzkit
