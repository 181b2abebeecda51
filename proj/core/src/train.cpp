#include "lorentzkit/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "lorentzkit/error.hpp"
#include "lorentzkit/optim.hpp"

namespace lorentzkit {

EpochData EpochData::subset(std::span<const std::size_t> rows) const {
  EpochData out;
  const std::size_t row = x.size() / std::max<std::size_t>(size(), 1);
  Shape s = x.shape();
  s[0] = rows.size();
  out.x = Tensor(s);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw DimensionError("EpochData::subset: row out of range");
    std::copy_n(x.data() + rows[i] * row, row, out.x.data() + i * row);
    out.labels.push_back(labels[rows[i]]);
    out.domains.push_back(domains[rows[i]]);
  }
  return out;
}

void EpochData::validate() const {
  if (x.ndim() != 3) throw DimensionError("epochs must be [n, P, T], got " + shape_str(x.shape()));
  if (x.shape()[0] != labels.size() || labels.size() != domains.size()) {
    throw DimensionError("epoch, label and domain counts differ");
  }
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(const EpochData& data,
                                                                                double val_fraction, Rng& rng) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ValidationError("train.val_fraction must lie in (0, 1)");
  std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < data.size(); ++i) cells[{data.domains[i], data.labels[i]}].push_back(i);
  std::vector<std::size_t> train, val;
  for (auto& [key, rows] : cells) {
    rng.shuffle(rows);
    std::size_t nv = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(rows.size())));
    if (rows.size() >= 2) nv = std::clamp<std::size_t>(nv, 1, rows.size() - 1);
    else nv = 0;
    val.insert(val.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(nv));
    train.insert(train.end(), rows.begin() + static_cast<std::ptrdiff_t>(nv), rows.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {train, val};
}

std::vector<std::vector<std::size_t>> domain_batches(std::span<const int> domains, std::span<const std::size_t> rows,
                                                     std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ValidationError("batch size must be positive");
  std::map<int, std::vector<std::size_t>> by_domain;
  for (auto r : rows) by_domain[domains[r]].push_back(r);
  if (by_domain.empty()) return {};
  for (auto& [d, v] : by_domain) rng.shuffle(v);
  const std::size_t per =
      std::max<std::size_t>(2, (batch_size + by_domain.size() - 1) / by_domain.size());
  std::map<int, std::size_t> cursor;
  std::vector<std::vector<std::size_t>> batches;
  for (;;) {
    std::vector<std::size_t> batch;
    for (auto& [d, v] : by_domain) {
      std::size_t& c = cursor[d];
      const std::size_t left = v.size() - c;
      if (left < 2) continue;
      const std::size_t take = std::min(per, left);
      batch.insert(batch.end(), v.begin() + static_cast<std::ptrdiff_t>(c), v.begin() + static_cast<std::ptrdiff_t>(c + take));
      c += take;
    }
    if (batch.empty()) break;
    batches.push_back(std::move(batch));
  }
  return batches;
}

namespace {

void require_cells(const EpochData& data, std::size_t classes) {
  std::set<int> doms(data.domains.begin(), data.domains.end());
  if (doms.size() < 2) throw ValidationError("training needs at least 2 source domains");
  std::set<std::pair<int, int>> cells;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] < 0 || static_cast<std::size_t>(data.labels[i]) >= classes) {
      throw ValidationError("label " + std::to_string(data.labels[i]) + " outside [0, " + std::to_string(classes) + ")");
    }
    cells.insert({data.domains[i], data.labels[i]});
  }
  for (int d : doms) {
    for (std::size_t c = 0; c < classes; ++c) {
      if (!cells.count({d, static_cast<int>(c)})) {
        throw ValidationError("empty (domain, class) cell (" + std::to_string(d) + ", " + std::to_string(c) + ")");
      }
    }
  }
}

}  // namespace

FitResult fit(HeegnetModel& model, const EpochData& source, const TrainOptions& options, const EpochCallback& on_epoch) {
  source.validate();
  if (options.epochs == 0) throw ValidationError("train.epochs must be positive");
  require_cells(source, model.config().classes);
  Rng rng(mix_seed(options.seed, 0x545241494eULL));
  const auto [train_rows, val_rows] = stratified_split(source, options.val_fraction, rng);
  const EpochData val = source.subset(val_rows);

  std::vector<Parameter*> params = model.parameters();
  AdamState adam;
  AdamOptions adam_opt;
  adam_opt.lr = options.lr;

  FitResult result;
  HeegnetModel best = model;
  double best_score = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    const auto batches = domain_batches(source.domains, train_rows, options.batch_size, rng);
    EpochRecord rec;
    rec.epoch = epoch;
    for (const auto& rows : batches) {
      const EpochData b = source.subset(rows);
      ad::Tape tape;
      LossParts parts;
      ad::Var loss = model.training_loss(tape, b.x, b.labels, b.domains, rng, &parts);
      if (!std::isfinite(loss.value().item())) throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
      zero_grads(params);
      tape.backward(loss);
      adam_step(params, adam, adam_opt);
      rec.loss += loss.value().item();
      rec.cross_entropy += parts.cross_entropy;
      rec.hhsw += parts.hhsw;
    }
    const double nb = static_cast<double>(std::max<std::size_t>(batches.size(), 1));
    rec.loss /= nb;
    rec.cross_entropy /= nb;
    rec.hhsw /= nb;
    rec.val_balanced_accuracy = evaluate(model, val).balanced_accuracy;
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_balanced_accuracy > best_score) {
      best_score = rec.val_balanced_accuracy;
      best = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= options.patience) {
      result.stopped_early = epoch < options.epochs;
      break;
    }
  }
  result.best_val_balanced_accuracy = best_score;
  model = best;
  return result;
}

void sfuda_adapt(HeegnetModel& model, const EpochData& target, const AdaptOptions& options) {
  target.validate();
  if (options.passes == 0 || options.batch_size == 0) throw ValidationError("adapt.passes and adapt.batch_size must be positive");
  DomainBatchNorm& norm = model.alignment();
  // A shared track has no per-domain entries to add; adapting it would touch source statistics.
  if (!norm.domain_specific()) return;

  std::map<int, std::vector<std::size_t>> by_domain;
  for (std::size_t i = 0; i < target.size(); ++i) by_domain[target.domains[i]].push_back(i);
  for (const auto& [d, rows] : by_domain) norm.stats().erase(norm.key(d));

  const std::size_t steps = model.config().stage1_steps();
  const std::size_t width = model.config().spatial_maps() + 1;
  Tensor features(Shape{target.size() * steps, width});
  for (std::size_t start = 0; start < target.size(); start += 128) {
    std::vector<std::size_t> rows;
    for (std::size_t i = start; i < std::min(target.size(), start + 128); ++i) rows.push_back(i);
    const Tensor f = model.pre_alignment_features(target.subset(rows).x);
    std::copy(f.values().begin(), f.values().end(), features.data() + start * steps * width);
  }

  Rng rng(mix_seed(options.seed, 0x4144415054ULL));
  for (std::size_t pass = 0; pass < options.passes; ++pass) {
    for (auto& [d, rows] : by_domain) {
      std::vector<std::size_t> order = rows;
      rng.shuffle(order);
      for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
        const std::size_t count = std::min(options.batch_size, order.size() - start);
        Tensor batch(Shape{count * steps, width});
        for (std::size_t i = 0; i < count; ++i) {
          std::copy_n(features.data() + order[start + i] * steps * width, steps * width,
                      batch.data() + i * steps * width);
        }
        const std::vector<int> tags(count * steps, d);
        norm.observe(batch, tags, BnMode::kAdapt);
      }
    }
  }
}

EvalResult balanced_accuracy(std::span<const int> truth, std::span<const int> predicted, std::size_t classes) {
  if (truth.size() != predicted.size()) throw DimensionError("balanced_accuracy: length mismatch");
  std::vector<std::size_t> hits(classes, 0), counts(classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || static_cast<std::size_t>(truth[i]) >= classes) throw ValidationError("label outside class range");
    ++counts[static_cast<std::size_t>(truth[i])];
    if (truth[i] == predicted[i]) ++hits[static_cast<std::size_t>(truth[i])];
  }
  EvalResult r;
  r.recall.assign(classes, std::numeric_limits<double>::quiet_NaN());
  r.class_present.assign(classes, false);
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] == 0) {
      r.absent_class = true;
      continue;
    }
    r.class_present[c] = true;
    r.recall[c] = static_cast<double>(hits[c]) / static_cast<double>(counts[c]);
    sum += r.recall[c];
    ++present;
  }
  r.balanced_accuracy = present ? sum / static_cast<double>(present) : 0.0;
  r.predictions.assign(predicted.begin(), predicted.end());
  return r;
}

Tensor predict_logits(HeegnetModel& model, const EpochData& data, std::size_t batch_size, bool* fallback) {
  data.validate();
  const std::size_t c = model.config().classes;
  Tensor out(Shape{data.size(), c});
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> rows;
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) rows.push_back(i);
    const EpochData b = data.subset(rows);
    ad::Tape tape;
    const ForwardResult r = model.forward(tape, b.x, b.domains, BnMode::kEval, nullptr);
    if (fallback && r.fallback) *fallback = true;
    std::copy(r.logits.value().values().begin(), r.logits.value().values().end(), out.data() + start * c);
  }
  return out;
}

EvalResult evaluate(HeegnetModel& model, const EpochData& data, std::size_t batch_size) {
  bool fallback = false;
  const Tensor logits = predict_logits(model, data, batch_size, &fallback);
  const std::size_t c = model.config().classes;
  std::vector<int> pred(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double* row = logits.data() + i * c;
    pred[i] = static_cast<int>(std::max_element(row, row + c) - row);
  }
  EvalResult r = balanced_accuracy(data.labels, pred, c);
  r.fallback = fallback;
  return r;
}

Tensor stage1_embeddings(HeegnetModel& model, const EpochData& data, std::size_t batch_size) {
  data.validate();
  const std::size_t steps = model.config().stage1_steps(), width = model.config().spatial_maps() + 1;
  Tensor out(Shape{data.size() * steps, width});
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> rows;
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) rows.push_back(i);
    const EpochData b = data.subset(rows);
    ad::Tape tape;
    const ForwardResult r = model.forward(tape, b.x, b.domains, BnMode::kEval, nullptr);
    std::copy(r.stage1.value().values().begin(), r.stage1.value().values().end(), out.data() + start * steps * width);
  }
  return out;
}

}  // namespace lorentzkit
