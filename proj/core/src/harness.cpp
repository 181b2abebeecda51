#include "lorentzkit/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <json.hpp>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "lorentzkit/alignment.hpp"
#include "lorentzkit/checkpoint.hpp"
#include "lorentzkit/embedding_io.hpp"
#include "lorentzkit/error.hpp"
#include "lorentzkit/synth.hpp"

namespace lorentzkit {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write " + p.string());
  f << text;
  if (!f) throw IoError("write failed for " + p.string());
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string join(const std::vector<int>& v, const char* sep = ";") {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + std::to_string(v[i]);
  return s;
}

fs::path fold_checkpoint(const fs::path& dir, std::size_t k) { return dir / ("fold_" + std::to_string(k) + ".heeg"); }

std::size_t count_checkpoints(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("checkpoint directory not found: " + dir.string());
  std::size_t n = 0;
  while (fs::exists(fold_checkpoint(dir, n))) ++n;
  if (n == 0) throw IoError("no fold_0.heeg in " + dir.string());
  return n;
}

struct FoldMeta {
  Fold fold;
  std::string dataset_hash;
  bool adapted = false;
};

std::string fold_metadata(const Fold& f, const EpochDataset& data, bool adapted) {
  nlohmann::ordered_json j;
  j["toolkit_version"] = toolkit_version();
  j["fold"] = f.index;
  j["source_domains"] = f.source;
  j["target_domains"] = f.target;
  j["dataset_hash"] = data.config_hash;
  j["adapted"] = adapted;
  return j.dump();
}

FoldMeta parse_metadata(const std::string& text, const fs::path& origin) {
  FoldMeta m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.fold.index = j.at("fold").get<std::size_t>();
    m.fold.source = j.at("source_domains").get<std::vector<int>>();
    m.fold.target = j.at("target_domains").get<std::vector<int>>();
    m.dataset_hash = j.value("dataset_hash", "");
    m.adapted = j.value("adapted", false);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(origin.string() + ": bad checkpoint metadata: " + e.what());
  }
  return m;
}

void check_dataset(const FoldMeta& m, const EpochDataset& data, const fs::path& origin) {
  if (!m.dataset_hash.empty() && m.dataset_hash != data.config_hash) {
    throw ValidationError(origin.string() + " was trained on dataset " + m.dataset_hash + ", not " + data.config_hash);
  }
}

std::string folds_csv(const std::vector<Fold>& folds) {
  std::string s = "fold,role,domain\n";
  for (const auto& f : folds) {
    for (int d : f.source) s += std::to_string(f.index) + ",source," + std::to_string(d) + "\n";
    for (int d : f.target) s += std::to_string(f.index) + ",target," + std::to_string(d) + "\n";
  }
  return s;
}

void echo_config(const RunConfig& config, const fs::path& out) { write_resolved_config(config, out); }

}  // namespace

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("LORENTZKIT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v <= 0) throw ValidationError("LORENTZKIT_THREADS must be a positive integer");
    return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void prepare_output_dir(const fs::path& dir, bool force) {
  if (dir.empty()) throw ValidationError("an output directory is required (--out)");
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir)) throw IoError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw ValidationError("output directory " + dir.string() + " is not empty (pass --force to overwrite)");
    }
    return;
  }
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard<std::mutex> lock(mu);
            if (next >= n) return;
            i = next++;
          }
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::uint64_t fold_seed(std::uint64_t seed, std::uint64_t role, std::size_t fold) {
  return mix_seed(mix_seed(seed, role), fold);
}

std::vector<Fold> plan_folds(const RunConfig& config, std::size_t domains) {
  auto check = [&](const std::vector<int>& ids, const char* key) {
    for (int d : ids) {
      if (d < 0 || static_cast<std::size_t>(d) >= domains) {
        throw ValidationError(std::string(key) + " names domain " + std::to_string(d) + " but the dataset has " +
                              std::to_string(domains));
      }
    }
  };
  check(config.source_domains, "data.source_domains");
  check(config.target_domains, "data.target_domains");
  for (int s : config.source_domains) {
    if (std::count(config.target_domains.begin(), config.target_domains.end(), s)) {
      throw ValidationError("domain " + std::to_string(s) + " is listed as both source and target");
    }
  }
  auto complement = [&](const std::vector<int>& target) {
    std::vector<int> src;
    for (std::size_t d = 0; d < domains; ++d) {
      if (!std::count(target.begin(), target.end(), static_cast<int>(d))) src.push_back(static_cast<int>(d));
    }
    return src;
  };
  std::vector<Fold> folds;
  if (!config.target_domains.empty()) {
    Fold f;
    f.target = config.target_domains;
    std::sort(f.target.begin(), f.target.end());
    f.target.erase(std::unique(f.target.begin(), f.target.end()), f.target.end());
    f.source = config.source_domains.empty() ? complement(f.target) : config.source_domains;
    std::sort(f.source.begin(), f.source.end());
    folds.push_back(f);
    return folds;
  }
  if (!config.source_domains.empty()) {
    throw ValidationError("data.source_domains requires data.target_domains");
  }
  if (domains < 3) throw ValidationError("cross-validation needs at least 3 domains (2 sources per fold)");
  FoldPolicy policy = config.folds;
  if (policy == FoldPolicy::kAuto) policy = domains <= 10 ? FoldPolicy::kLeaveOneOut : FoldPolicy::kTenGroups;
  std::vector<std::vector<int>> groups;
  if (policy == FoldPolicy::kLeaveOneOut) {
    for (std::size_t d = 0; d < domains; ++d) groups.push_back({static_cast<int>(d)});
  } else {
    if (domains < 10) throw ValidationError("eval.folds = ten_groups needs at least 10 domains");
    std::vector<int> ids(domains);
    for (std::size_t d = 0; d < domains; ++d) ids[d] = static_cast<int>(d);
    Rng rng(mix_seed(config.seed, 0x464f4c44ULL));
    rng.shuffle(ids);
    groups.resize(10);
    for (std::size_t i = 0; i < ids.size(); ++i) groups[i % 10].push_back(ids[i]);
    for (auto& g : groups) std::sort(g.begin(), g.end());
  }
  for (std::size_t k = 0; k < groups.size(); ++k) {
    Fold f;
    f.index = k;
    f.target = groups[k];
    f.source = complement(f.target);
    folds.push_back(f);
  }
  return folds;
}

ModelConfig fold_model_config(const RunConfig& config, const EpochDataset& data, std::size_t fold) {
  ModelConfig m = config.model;
  m.channels = data.channels;
  m.times = data.times;
  m.classes = data.class_names.size();
  m.seed = fold_seed(config.seed, 1, fold);
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------

void cmd_gen(const RunConfig& config, const fs::path& out, bool force, std::ostream& log) {
  config.validate();
  EpochGenConfig g = config.data;
  g.seed = config.seed;
  const EpochDataset data = gen_epochs(g);
  prepare_output_dir(out, force);
  write_dataset(data, out);
  echo_config(config, out);
  log << "lorentzkit " << toolkit_version() << ": wrote " << data.size() << " epochs (" << g.domains << " domains, "
      << g.classes() << " classes, " << g.channels << " x " << g.times << ") to " << out.string() << "\n"
      << "config_hash " << data.config_hash << "\n";
}

std::vector<TrainedFold> cmd_train(const RunConfig& config, const fs::path& data_dir, const fs::path& out, bool force,
                                   std::size_t threads, std::ostream& log) {
  config.validate();
  const EpochDataset data = read_dataset(data_dir);
  const std::vector<Fold> folds = plan_folds(config, data.domain_names.size());
  for (std::size_t k = 0; k < folds.size(); ++k) fold_model_config(config, data, k);
  prepare_output_dir(out, force);
  echo_config(config, out);
  write_text(out / "folds.csv", folds_csv(folds));

  std::vector<TrainedFold> results(folds.size());
  std::mutex log_mu;
  parallel_for(folds.size(), resolve_threads(threads), [&](std::size_t k) {
    const Fold& f = folds[k];
    HeegnetModel model(fold_model_config(config, data, k));
    const EpochData source = data.select(data.rows_in_domains(f.source));
    TrainOptions opt = config.train;
    opt.seed = fold_seed(config.seed, 2, k);
    FitResult fit_result = fit(model, source, opt);
    save_checkpoint(model, fold_metadata(f, data, false), fold_checkpoint(out, k));
    std::string hist = "epoch,loss,cross_entropy,hhsw,val_balanced_accuracy\n";
    for (const auto& r : fit_result.history) {
      hist += std::to_string(r.epoch) + "," + general(r.loss) + "," + general(r.cross_entropy) + "," + general(r.hhsw) +
              "," + fixed(r.val_balanced_accuracy) + "\n";
    }
    write_text(out / ("history_fold_" + std::to_string(k) + ".csv"), hist);
    {
      std::lock_guard<std::mutex> lock(log_mu);
      log << "fold " << k << " (target " << join(f.target, ",") << "): best epoch " << fit_result.best_epoch
          << ", inner-val balanced accuracy " << fixed(fit_result.best_val_balanced_accuracy, 4) << "\n";
    }
    results[k] = TrainedFold{f, std::move(fit_result)};
  });

  std::string summary = "fold,target_domains,epochs_run,best_epoch,best_val_balanced_accuracy,stopped_early\n";
  for (const auto& r : results) {
    summary += std::to_string(r.fold.index) + "," + join(r.fold.target) + "," + std::to_string(r.fit.history.size()) + "," +
               std::to_string(r.fit.best_epoch) + "," + fixed(r.fit.best_val_balanced_accuracy) + "," +
               (r.fit.stopped_early ? "1" : "0") + "\n";
  }
  write_text(out / "train_summary.csv", summary);
  return results;
}

void cmd_adapt(const RunConfig& config, const fs::path& data_dir, const fs::path& checkpoints, const fs::path& out,
               bool force, std::size_t threads, std::ostream& log) {
  config.validate();
  const EpochDataset data = read_dataset(data_dir);
  const std::size_t n = count_checkpoints(checkpoints);
  prepare_output_dir(out, force);
  echo_config(config, out);
  std::vector<Fold> folds(n);
  std::mutex log_mu;
  parallel_for(n, resolve_threads(threads), [&](std::size_t k) {
    LoadedCheckpoint ck = load_checkpoint(fold_checkpoint(checkpoints, k));
    const FoldMeta meta = parse_metadata(ck.metadata, fold_checkpoint(checkpoints, k));
    check_dataset(meta, data, fold_checkpoint(checkpoints, k));
    const EpochData target = data.select(data.rows_in_domains(meta.fold.target));
    AdaptOptions opt = config.adapt;
    opt.seed = fold_seed(config.seed, 3, k);
    sfuda_adapt(ck.model, target, opt);
    save_checkpoint(ck.model, fold_metadata(meta.fold, data, true), fold_checkpoint(out, k));
    folds[k] = meta.fold;
    std::lock_guard<std::mutex> lock(log_mu);
    log << "fold " << k << ": adapted statistics for target domains " << join(meta.fold.target, ",")
        << (ck.model.alignment().domain_specific() ? "" : " (shared statistics; adaptation skipped)") << "\n";
  });
  write_text(out / "folds.csv", folds_csv(folds));
}

EvalSummary cmd_eval(const RunConfig& config, const fs::path& data_dir, const fs::path& checkpoints, const fs::path& out,
                     bool force, std::size_t threads, std::ostream& log) {
  config.validate();
  const EpochDataset data = read_dataset(data_dir);
  const std::size_t n = count_checkpoints(checkpoints);
  prepare_output_dir(out, force);
  echo_config(config, out);
  std::vector<std::vector<DomainScore>> per_fold(n);
  parallel_for(n, resolve_threads(threads), [&](std::size_t k) {
    LoadedCheckpoint ck = load_checkpoint(fold_checkpoint(checkpoints, k));
    const FoldMeta meta = parse_metadata(ck.metadata, fold_checkpoint(checkpoints, k));
    check_dataset(meta, data, fold_checkpoint(checkpoints, k));
    for (int d : meta.fold.target) {
      const std::vector<int> one{d};
      const auto rows = data.rows_in_domains(one);
      if (rows.empty()) continue;
      const EvalResult r = evaluate(ck.model, data.select(rows), config.eval_batch);
      per_fold[k].push_back(DomainScore{k, d, rows.size(), r.balanced_accuracy, r.fallback});
    }
  });

  EvalSummary s;
  for (auto& v : per_fold) s.rows.insert(s.rows.end(), v.begin(), v.end());
  if (s.rows.empty()) throw ValidationError("no target epochs to evaluate");
  std::size_t total = 0;
  for (const auto& r : s.rows) {
    s.mean_balanced_accuracy += r.balanced_accuracy;
    s.fallback = s.fallback || r.fallback;
    total += r.epochs;
  }
  s.mean_balanced_accuracy /= static_cast<double>(s.rows.size());

  std::string csv = "fold,domain,n_epochs,balanced_accuracy,fallback\n";
  for (const auto& r : s.rows) {
    csv += std::to_string(r.fold) + "," + std::to_string(r.domain) + "," + std::to_string(r.epochs) + "," +
           fixed(r.balanced_accuracy) + "," + (r.fallback ? "1" : "0") + "\n";
  }
  csv += "mean,," + std::to_string(total) + "," + fixed(s.mean_balanced_accuracy) + "," + (s.fallback ? "1" : "0") + "\n";
  write_text(out / "metrics.csv", csv);

  std::ostringstream rep;
  rep << "lorentzkit " << toolkit_version() << " evaluation report\n\n";
  rep << "fold  domain  epochs  balanced_accuracy\n";
  for (const auto& r : s.rows) {
    char line[128];
    std::snprintf(line, sizeof line, "%4zu  %6d  %6zu  %17.4f%s\n", r.fold, r.domain, r.epochs, r.balanced_accuracy,
                  r.fallback ? "  *" : "");
    rep << line;
  }
  char mean_line[128];
  std::snprintf(mean_line, sizeof mean_line, "mean          %6zu  %17.4f\n", total, s.mean_balanced_accuracy);
  rep << mean_line;
  if (s.fallback) {
    rep << "\nWARNING: rows marked * were evaluated on domains without adapted statistics "
           "(origin/unit fallback). Run `adapt` first.\n";
  }
  rep << "\n# resolved configuration\n" << config.to_toml();
  write_text(out / "report.txt", rep.str());
  log << rep.str();
  return s;
}

// ---------------------------------------------------------------------------

HyperbolicityReport cmd_delta(const RunConfig& config, const fs::path& input, const fs::path& out, bool force,
                              std::ostream& log) {
  config.validate();
  DeltaSampling sampling{config.delta_batch, config.delta_batches, config.seed};
  HyperbolicityReport rep;
  std::string source;
  if (fs::is_directory(input)) {
    if (config.delta_metric == DeltaMetric::kLorentz) throw ValidationError("raw epochs have no Lorentz metric; use delta.metric = \"euclidean\"");
    const EpochDataset data = read_dataset(input);
    if (data.size() < 4) throw ValidationError("delta needs at least 4 points, got " + std::to_string(data.size()));
    const std::size_t w = data.channels * data.times;
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(w));
    for (std::size_t i = 0; i < data.size(); ++i) {
      for (std::size_t j = 0; j < w; ++j) rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data.epochs[i * w + j];
    }
    rep = delta_sampled(rows, DeltaMetric::kEuclidean, sampling);
    source = "dataset (euclidean on flattened epochs)";
  } else {
    const EmbeddingMatrix m = read_embedding(input);
    if (m.rows.rows() < 4) throw ValidationError("delta needs at least 4 points, got " + std::to_string(m.rows.rows()));
    const bool lorentz = m.curvature.has_value() || config.delta_metric == DeltaMetric::kLorentz;
    if (lorentz) {
      const Curvature k(m.curvature.value_or(-1.0));
      const auto bad = off_manifold_rows(m.rows, k, 1e-5);
      if (!bad.empty()) throw ValidationError("row " + std::to_string(bad.front() + 1) + " is not on the hyperboloid");
      rep = delta_sampled(m.rows, DeltaMetric::kLorentz, sampling, k);
      source = "embedding (lorentz, K = " + general(k.k()) + ")";
    } else {
      rep = delta_sampled(m.rows, DeltaMetric::kEuclidean, sampling);
      source = "embedding (euclidean)";
    }
  }
  std::ostringstream text;
  text << "lorentzkit " << toolkit_version() << " delta-hyperbolicity of " << input.string() << "\n"
       << "input      " << source << "\n"
       << "sample     " << rep.sample_size << " points x " << rep.batches << " batches\n"
       << "delta      " << general(rep.delta) << " +- " << general(rep.delta_std) << "\n"
       << "diameter   " << general(rep.diameter) << " +- " << general(rep.diameter_std) << "\n"
       << "delta_rel  " << general(rep.delta_rel) << " +- " << general(rep.delta_rel_std) << "\n";
  log << text.str();
  if (!out.empty()) {
    prepare_output_dir(out, force);
    echo_config(config, out);
    std::string csv = "statistic,mean,std\n";
    csv += "delta," + general(rep.delta) + "," + general(rep.delta_std) + "\n";
    csv += "diameter," + general(rep.diameter) + "," + general(rep.diameter_std) + "\n";
    csv += "delta_rel," + general(rep.delta_rel) + "," + general(rep.delta_rel_std) + "\n";
    csv += "sample_size," + std::to_string(rep.sample_size) + ",0\n";
    csv += "batches," + std::to_string(rep.batches) + ",0\n";
    write_text(out / "delta.csv", csv);
    write_text(out / "report.txt", text.str() + "\n# resolved configuration\n" + config.to_toml());
  }
  return rep;
}

double cmd_hhsw(const RunConfig& config, const fs::path& a_path, const fs::path& b_path, const fs::path& out, bool force,
                std::ostream& log) {
  config.validate();
  auto load = [](const fs::path& p) {
    EmbeddingMatrix m = read_embedding(p);
    if (!m.curvature) m.curvature = -1.0;
    if (m.rows.cols() < 2) throw ValidationError(p.string() + ": Lorentz rows need at least 2 columns");
    const auto bad = off_manifold_rows(m.rows, Curvature(*m.curvature), 1e-5);
    if (!bad.empty()) {
      std::string list;
      for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 20); ++i) list += (i ? ", " : "") + std::to_string(bad[i] + 1);
      if (bad.size() > 20) list += ", ...";
      throw ValidationError(p.string() + ": " + std::to_string(bad.size()) + " off-manifold rows beyond 1e-5: " + list);
    }
    return m;
  };
  const EmbeddingMatrix a = load(a_path), b = load(b_path);
  if (*a.curvature != *b.curvature) throw ValidationError("embedding files declare different curvatures");
  if (a.rows.cols() != b.rows.cols()) throw ValidationError("embedding files have different dimensions");
  std::vector<double> per_slice;
  const double est = hhsw_estimate(embedding_points(a), embedding_points(b), config.hhsw_slices, config.hhsw_exponent,
                                   config.seed, &per_slice);
  log << "lorentzkit " << toolkit_version() << " hhsw (slices " << config.hhsw_slices << ", exponent "
      << general(config.hhsw_exponent) << ", seed " << config.seed << "): " << general(est) << "\n";
  if (!out.empty()) {
    prepare_output_dir(out, force);
    echo_config(config, out);
    std::string csv = "slice,value\n";
    for (std::size_t s = 0; s < per_slice.size(); ++s) csv += std::to_string(s) + "," + general(per_slice[s]) + "\n";
    write_text(out / "per_slice.csv", csv);
    write_text(out / "hhsw.csv", "slices,exponent,seed,estimate\n" + std::to_string(config.hhsw_slices) + "," +
                                     general(config.hhsw_exponent) + "," + std::to_string(config.seed) + "," + general(est) + "\n");
  }
  return est;
}

GradcheckReport cmd_gradcheck(const GradcheckOptions& options, const fs::path& out, bool force, std::ostream& log) {
  const GradcheckReport rep = run_gradcheck(options);
  std::ostringstream text;
  text << "lorentzkit " << toolkit_version() << " gradient check (tolerance " << general(options.tolerance) << ", "
       << options.seeds.size() << " seeds)\n";
  std::string csv = "layer,max_rel_err,seeds,coords,status\n";
  for (const auto& r : rep.rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-26s %12.3e  %s\n", r.name.c_str(), r.max_rel_err, r.passed ? "PASS" : "FAIL");
    text << line;
    char num[32];
    std::snprintf(num, sizeof num, "%.6e", r.max_rel_err);
    csv += r.name + "," + num + "," + std::to_string(r.seeds) + "," + std::to_string(r.coords) + "," +
           (r.passed ? "PASS" : "FAIL") + "\n";
  }
  text << (rep.all_passed() ? "all layers PASS\n" : "gradient check FAILED\n");
  log << text.str();
  if (!out.empty()) {
    prepare_output_dir(out, force);
    write_text(out / "gradcheck.csv", csv);
  }
  return rep;
}

}  // namespace lorentzkit
