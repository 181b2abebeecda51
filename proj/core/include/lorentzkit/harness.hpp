#pragma once

// Experiment orchestration behind the CLI subcommands. Each cmd_* writes into an output
// directory (refusing a non-empty one unless forced), echoes the resolved configuration
// and toolkit version there, and throws lorentzkit::Error subclasses on failure.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lorentzkit/config.hpp"
#include "lorentzkit/dataset.hpp"
#include "lorentzkit/gradcheck.hpp"
#include "lorentzkit/hyperbolicity.hpp"
#include "lorentzkit/model.hpp"
#include "lorentzkit/train.hpp"

namespace lorentzkit {

// Explicit value when positive, else LORENTZKIT_THREADS, else the hardware concurrency.
std::size_t resolve_threads(std::size_t requested);

// Creates dir; a non-empty existing dir is refused without force.
void prepare_output_dir(const std::filesystem::path& dir, bool force);

// Runs fn(0..n-1) on up to `threads` workers; rethrows the exception of the lowest index.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

struct Fold {
  std::size_t index = 0;
  std::vector<int> source;
  std::vector<int> target;
};

// Explicit targets give one fold. Otherwise leave-one-domain-out for <= 10 domains and
// 10 seeded groups beyond that (FoldPolicy can force either).
std::vector<Fold> plan_folds(const RunConfig& config, std::size_t domains);

ModelConfig fold_model_config(const RunConfig& config, const EpochDataset& data, std::size_t fold);
std::uint64_t fold_seed(std::uint64_t seed, std::uint64_t role, std::size_t fold);

struct TrainedFold {
  Fold fold;
  FitResult fit;
};

// Trains every fold; writes fold_<k>.heeg, history_fold_<k>.csv, folds.csv, train_summary.csv.
std::vector<TrainedFold> cmd_train(const RunConfig& config, const std::filesystem::path& data,
                                   const std::filesystem::path& out, bool force, std::size_t threads, std::ostream& log);

// Source-free adaptation of every fold checkpoint in `checkpoints` to its target domains.
void cmd_adapt(const RunConfig& config, const std::filesystem::path& data, const std::filesystem::path& checkpoints,
               const std::filesystem::path& out, bool force, std::size_t threads, std::ostream& log);

struct DomainScore {
  std::size_t fold = 0;
  int domain = 0;
  std::size_t epochs = 0;
  double balanced_accuracy = 0.0;
  bool fallback = false;
};

struct EvalSummary {
  std::vector<DomainScore> rows;
  double mean_balanced_accuracy = 0.0;
  bool fallback = false;
};

// Balanced accuracy per target domain and the grand mean: metrics.csv and report.txt.
EvalSummary cmd_eval(const RunConfig& config, const std::filesystem::path& data,
                     const std::filesystem::path& checkpoints, const std::filesystem::path& out, bool force,
                     std::size_t threads, std::ostream& log);

void cmd_gen(const RunConfig& config, const std::filesystem::path& out, bool force, std::ostream& log);

// Input is an embedding CSV or a dataset directory (epochs flattened to rows). When out is
// empty only the text report is printed.
HyperbolicityReport cmd_delta(const RunConfig& config, const std::filesystem::path& input,
                              const std::filesystem::path& out, bool force, std::ostream& log);

double cmd_hhsw(const RunConfig& config, const std::filesystem::path& a, const std::filesystem::path& b,
                const std::filesystem::path& out, bool force, std::ostream& log);

GradcheckReport cmd_gradcheck(const GradcheckOptions& options, const std::filesystem::path& out, bool force,
                              std::ostream& log);

}  // namespace lorentzkit
