#pragma once

// Training with early stopping, source-free adaptation and balanced-accuracy evaluation.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lorentzkit/model.hpp"

namespace lorentzkit {

// Epochs as float64 [n, P, T] with one label and one domain per epoch.
struct EpochData {
  Tensor x;
  std::vector<int> labels;
  std::vector<int> domains;

  std::size_t size() const noexcept { return labels.size(); }
  EpochData subset(std::span<const std::size_t> rows) const;
  void validate() const;
};

struct TrainOptions {
  std::size_t epochs = 100;
  std::size_t batch_size = 60;
  std::size_t patience = 10;
  double lr = 1e-3;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double cross_entropy = 0.0;
  double hhsw = 0.0;
  double val_balanced_accuracy = 0.0;
};

struct FitResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_balanced_accuracy = 0.0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Stratified (domain, class) split: returns {train rows, validation rows}.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(const EpochData& data,
                                                                                double val_fraction, Rng& rng);

// Round-robin minibatches: each step takes ceil(batch / domains) samples from every domain
// that still has at least 2 left.
std::vector<std::vector<std::size_t>> domain_batches(std::span<const int> domains, std::span<const std::size_t> rows,
                                                     std::size_t batch_size, Rng& rng);

// Adam on the composite loss; keeps the model state with the best inner-validation
// balanced accuracy (earliest on ties) and restores it before returning.
FitResult fit(HeegnetModel& model, const EpochData& source, const TrainOptions& options,
              const EpochCallback& on_epoch = {});

struct AdaptOptions {
  std::size_t passes = 20;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

// Re-estimates the test-track statistics of each target domain from unlabeled epochs,
// leaving every parameter and all other domains untouched. Existing entries for the
// target domains are reset first.
void sfuda_adapt(HeegnetModel& model, const EpochData& target, const AdaptOptions& options);

struct EvalResult {
  double balanced_accuracy = 0.0;
  std::vector<double> recall;       // per class; NaN where the class is absent
  std::vector<bool> class_present;
  bool absent_class = false;
  bool fallback = false;            // some domain was evaluated without statistics
  std::vector<int> predictions;
};

// Mean recall over the classes present in truth.
EvalResult balanced_accuracy(std::span<const int> truth, std::span<const int> predicted, std::size_t classes);

EvalResult evaluate(HeegnetModel& model, const EpochData& data, std::size_t batch_size = 128);

// Eval-mode logits [n, C].
Tensor predict_logits(HeegnetModel& model, const EpochData& data, std::size_t batch_size, bool* fallback = nullptr);

// Eval-mode post-normalization rows [n * stage1_steps, n+1].
Tensor stage1_embeddings(HeegnetModel& model, const EpochData& data, std::size_t batch_size = 128);

}  // namespace lorentzkit
