// lorentzkit command-line entry point.

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lorentzkit/config.hpp"
#include "lorentzkit/error.hpp"
#include "lorentzkit/harness.hpp"

namespace lk = lorentzkit;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
  std::size_t threads = 0;
  std::vector<std::string> sets;
};

// Subcommand flags collected as (key, text) pairs and applied after the file and --set.
using Overrides = std::vector<std::pair<std::string, std::string>>;

template <typename T>
void flag(CLI::App* app, Overrides& o, const std::string& name, const std::string& key, const std::string& help) {
  app->add_option_function<T>(name, [&o, key](const T& v) {
    std::ostringstream ss;
    ss << v;
    o.emplace_back(key, ss.str());
  }, help);
}

lk::RunConfig resolve(const Globals& g, const Overrides& o) {
  lk::RunConfig c;
  if (!g.config.empty()) c.load_file(g.config);
  for (const auto& s : g.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw lk::ValidationError("--set expects KEY=VALUE, got '" + s + "'");
    c.set_text(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [k, v] : o) c.set_text(k, v);
  if (g.seed) c.set("seed", static_cast<std::int64_t>(*g.seed));
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lorentzkit: hyperbolic deep learning on the Lorentz model"};
  app.set_version_flag("--version", lk::toolkit_version());
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "TOML configuration file");
  app.add_option("--seed", g.seed, "Run seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--force", g.force, "Write into a non-empty output directory");
  app.add_option("--threads", g.threads, "Worker threads (fallback: LORENTZKIT_THREADS)");
  app.add_option("--set", g.sets, "Override a configuration key, KEY=VALUE (repeatable)");

  Overrides over;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic pseudo-EEG dataset");
  flag<std::size_t>(gen, over, "--domains", "data.domains", "Number of domains");
  std::optional<std::size_t> classes;
  gen->add_option("--classes", classes, "Number of classes (families x variants; even counts use 2 variants)");
  flag<std::size_t>(gen, over, "--per-cell", "data.per_cell", "Epochs per (domain, class)");
  flag<std::size_t>(gen, over, "--channels", "data.channels", "Channels P");
  flag<std::size_t>(gen, over, "--times", "data.times", "Samples T");
  flag<double>(gen, over, "--shift", "data.shift_strength", "Domain shift strength in [0, 1]");
  flag<double>(gen, over, "--snr-db", "data.snr_db", "Template to noise ratio (dB)");

  std::string data, checkpoints;
  auto* train = app.add_subcommand("train", "Train one model per fold on the source domains");
  train->add_option("--data", data, "Dataset directory")->required();
  flag<std::string>(train, over, "--target", "data.target_domains", "Comma-separated target domains");
  flag<std::string>(train, over, "--source", "data.source_domains", "Comma-separated source domains");
  flag<std::string>(train, over, "--alignment", "model.alignment", "full | moments | none");
  flag<std::size_t>(train, over, "--epochs", "train.epochs", "Maximum training epochs");

  auto* adapt = app.add_subcommand("adapt", "Source-free adaptation of trained checkpoints");
  adapt->add_option("--data", data, "Dataset directory")->required();
  adapt->add_option("--checkpoints", checkpoints, "Directory with fold_<k>.heeg")->required();

  auto* eval = app.add_subcommand("eval", "Balanced accuracy per target domain");
  eval->add_option("--data", data, "Dataset directory")->required();
  eval->add_option("--checkpoints", checkpoints, "Directory with fold_<k>.heeg")->required();

  std::string input;
  auto* delta = app.add_subcommand("delta", "Gromov delta-hyperbolicity of an embedding or dataset");
  delta->add_option("input", input, "Embedding CSV or dataset directory")->required();
  flag<std::string>(delta, over, "--metric", "delta.metric", "euclidean | lorentz");
  flag<std::size_t>(delta, over, "--batch", "delta.batch", "Points per batch");
  flag<std::size_t>(delta, over, "--batches", "delta.batches", "Number of batches");

  std::string first, second;
  auto* hhsw = app.add_subcommand("hhsw", "Horospherical sliced Wasserstein between two embeddings");
  hhsw->add_option("a", first, "First embedding CSV")->required();
  hhsw->add_option("b", second, "Second embedding CSV")->required();
  flag<std::size_t>(hhsw, over, "--slices", "hhsw.slices", "Projection directions");
  flag<double>(hhsw, over, "--exponent", "hhsw.exponent", "Wasserstein exponent p");

  lk::GradcheckOptions gopt;
  std::size_t gseeds = 3;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every layer");
  grad->add_option("--seeds", gseeds, "Number of seeds (>= 1)");
  grad->add_option("--filter", gopt.filter, "Only cases whose name contains this text");
  grad->add_option("--inject-sign-flip", gopt.inject_sign_flip, "Negate the backward pass of a case (or *)");
  grad->add_option("--tolerance", gopt.tolerance, "Relative error tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(lk::ExitCode::kValidation);
  }

  try {
    if (classes) {
      const std::size_t n = *classes;
      const bool pairs = n >= 4 && n % 2 == 0;
      over.emplace_back("data.families", std::to_string(pairs ? n / 2 : n));
      over.emplace_back("data.variants", pairs ? "2" : "1");
    }
    std::ostream& log = std::cout;
    if (grad->parsed()) {
      gopt.seeds.clear();
      const std::uint64_t base = g.seed.value_or(0);
      for (std::size_t i = 0; i < gseeds; ++i) gopt.seeds.push_back(base + i);
      const lk::GradcheckReport r = lk::cmd_gradcheck(gopt, g.out, g.force, log);
      return r.all_passed() ? 0 : static_cast<int>(lk::ExitCode::kNumeric);
    }
    const lk::RunConfig c = resolve(g, over);
    if (gen->parsed()) {
      lk::cmd_gen(c, g.out, g.force, log);
    } else if (train->parsed()) {
      lk::cmd_train(c, data, g.out, g.force, g.threads, log);
    } else if (adapt->parsed()) {
      lk::cmd_adapt(c, data, checkpoints, g.out, g.force, g.threads, log);
    } else if (eval->parsed()) {
      const auto s = lk::cmd_eval(c, data, checkpoints, g.out, g.force, g.threads, log);
      if (s.fallback) std::cerr << "warning: some target domains were evaluated without adapted statistics\n";
    } else if (delta->parsed()) {
      lk::cmd_delta(c, input, g.out, g.force, log);
    } else if (hhsw->parsed()) {
      lk::cmd_hhsw(c, first, second, g.out, g.force, log);
    }
  } catch (const lk::Error& e) {
    std::cerr << "lorentzkit: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "lorentzkit: internal error: " << e.what() << "\n";
    return static_cast<int>(lk::ExitCode::kNumeric);
  }
  return 0;
}
