#include "sgir/selftrain.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <nlohmann/json.hpp>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "sgir/confidence.hpp"
#include "sgir/mixup.hpp"
#include "sgir/pseudo_label.hpp"

namespace sgir {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Small utilities

std::string num(Real v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Index-based worker pool for read-only fan-out phases.  Work items write
// disjoint slots, so the schedule never changes the result.  The first
// exception wins and is rethrown after all workers stop.
template <typename Fn>
void parallel_for(size_t n, int threads, Fn fn) {
  const int workers = static_cast<int>(std::min<size_t>(std::max(threads, 1), n));
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        if (failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!failed.exchange(true)) error = std::current_exception();
          return;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

void split_labeled(const Dataset& ds, std::vector<const Graph*>& gs, std::vector<Real>& ys) {
  gs.clear();
  ys.clear();
  gs.reserve(ds.labeled.size());
  ys.reserve(ds.labeled.size());
  for (const Graph& g : ds.labeled) {
    gs.push_back(&g);
    ys.push_back(*g.label);
  }
}

void check_labeled_split(const Dataset* ds, const char* what) {
  if (ds == nullptr) throw ValidationError(std::string(what) + " split missing");
  if (ds->labeled.empty())
    throw ValidationError(std::string(what) + " split has no labeled graphs");
  if (!ds->unlabeled.empty())
    throw ValidationError(std::string(what) + " split contains unlabeled graphs");
}

IntervalPartition make_part(const std::vector<Real>& labels, int count,
                            const std::vector<Real>& boundaries) {
  return boundaries.empty() ? build_partition(labels, count)
                            : build_partition_explicit(labels, boundaries);
}

// ---------------------------------------------------------------------------
// Prediction / evaluation

std::vector<Real> predict_all(const GreaModel& model, const std::vector<const Graph*>& gs,
                              int threads) {
  std::vector<Real> out(gs.size());
  parallel_for(gs.size(), threads, [&](size_t i) {
    NoGradGuard ng;
    out[i] = predict(model, *gs[i]);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Embedding cache: one encoder pass per graph feeding confidence scoring,
// pseudo-label prediction, anchors, and mixup pools within one iteration.

struct EmbeddingCache {
  std::vector<const Graph*> graphs;
  Eigen::MatrixXd h;    // n x d, pooled representation
  Eigen::MatrixXd h_r;  // n x d, rationale part
  std::vector<Real> pred;  // decoder on the rationale part
  std::unordered_map<const Graph*, size_t> row_of;
};

EmbeddingCache build_cache(const GreaModel& model, std::vector<const Graph*> graphs,
                           int threads) {
  EmbeddingCache cache;
  cache.graphs = std::move(graphs);
  const auto n = static_cast<Eigen::Index>(cache.graphs.size());
  cache.h.resize(n, model.cfg.hidden_dim);
  cache.h_r.resize(n, model.cfg.hidden_dim);
  cache.pred.resize(cache.graphs.size());
  parallel_for(cache.graphs.size(), threads, [&](size_t i) {
    NoGradGuard ng;
    RationaleOutput out = encode_with_rationale(model, *cache.graphs[i]);
    const auto r = static_cast<Eigen::Index>(i);
    cache.h.row(r) = out.h.value().row(0);
    cache.h_r.row(r) = out.h_r.value().row(0);
    cache.pred[i] = model.decoder.forward(out.h_r).item();
  });
  cache.row_of.reserve(cache.graphs.size());
  for (size_t i = 0; i < cache.graphs.size(); ++i) cache.row_of[cache.graphs[i]] = i;
  return cache;
}

// ---------------------------------------------------------------------------
// Best-validation snapshot within one training phase

struct BestSnapshot {
  Real valid_mae = std::numeric_limits<Real>::infinity();
  std::vector<Eigen::MatrixXd> values;
  long adam_t = 0;
  std::vector<Eigen::MatrixXd> m, v;
};

void capture(BestSnapshot& best, const std::vector<NamedParam<Real>>& params,
             const Adam<Real>& adam, Real valid_mae) {
  best.valid_mae = valid_mae;
  best.values.clear();
  for (const auto& p : params) best.values.push_back(p.tensor.value());
  best.adam_t = adam.t;
  best.m = adam.m;
  best.v = adam.v;
}

void restore(const BestSnapshot& best, std::vector<NamedParam<Real>>& params, Adam<Real>& adam) {
  for (size_t i = 0; i < params.size(); ++i) params[i].tensor.raw() = best.values[i];
  adam.t = best.adam_t;
  adam.m = best.m;
  adam.v = best.v;
}

// ---------------------------------------------------------------------------
// Training phase: the epoch loop shared by every self-training iteration and
// by standalone supervised training (which is exactly iteration 0).

struct RealExample {
  const Graph* g = nullptr;
  Real y = 0.0;
};

struct TrainPhaseResult {
  std::vector<Real> epoch_losses;
  Real best_valid_mae = 0.0;
};

Real valid_mae_of(const GreaModel& model, const std::vector<const Graph*>& gs,
                  const std::vector<Real>& ys) {
  NoGradGuard ng;
  std::vector<Real> preds(gs.size());
  for (size_t i = 0; i < gs.size(); ++i) preds[i] = predict(model, *gs[i]);
  return mae_metric(preds, ys);
}

TrainPhaseResult train_phase(GreaModel& model, Adam<Real>& adam,
                             const std::vector<RealExample>& reals,
                             const std::vector<AugExample>& aug,
                             const std::vector<const Graph*>& valid_gs,
                             const std::vector<Real>& valid_ys, const RunConfig& cfg, int k) {
  if (reals.empty()) throw ValidationError("training phase: no real examples");
  auto params = model.params();
  Rng real_rng = substream(cfg.seed, "train", static_cast<uint64_t>(k));
  Rng aug_rng = substream(cfg.seed, "train-aug", static_cast<uint64_t>(k));
  const GreaLossHyper hyper{cfg.gamma_size, cfg.temperature, cfg.regu_coeff};
  const size_t bs = static_cast<size_t>(cfg.batch_size);

  std::vector<size_t> ridx(reals.size());
  std::iota(ridx.begin(), ridx.end(), 0);
  std::vector<size_t> aidx(aug.size());
  std::iota(aidx.begin(), aidx.end(), 0);
  const size_t rbatches = (reals.size() + bs - 1) / bs;
  const size_t abatches = aug.empty() ? 0 : (aug.size() + bs - 1) / bs;

  BestSnapshot best;
  TrainPhaseResult result;
  for (int e = 0; e < cfg.epochs; ++e) {
    real_rng.shuffle(ridx);
    if (!aidx.empty()) aug_rng.shuffle(aidx);
    Real loss_sum = 0.0;
    size_t rdone = 0, adone = 0;
    // Round-robin interleave: real, aug, real, aug, ... with leftovers of the
    // longer stream running out the tail.  Each batch is one optimizer step.
    for (size_t step = 0; step < rbatches + abatches; ++step) {
      const bool take_real =
          rdone < rbatches && (adone >= abatches || rdone * abatches <= adone * rbatches);
      TensorD loss;
      if (take_real) {
        const size_t lo = rdone * bs, hi = std::min(reals.size(), lo + bs);
        std::vector<RationaleOutput> batch;
        std::vector<Real> ys;
        batch.reserve(hi - lo);
        ys.reserve(hi - lo);
        for (size_t t = lo; t < hi; ++t) {
          batch.push_back(encode_with_rationale(model, *reals[ridx[t]].g));
          ys.push_back(reals[ridx[t]].y);
        }
        loss = grea_loss(model, batch, ys, hyper).total;
        ++rdone;
      } else {
        const size_t lo = adone * bs, hi = std::min(aug.size(), lo + bs);
        Eigen::MatrixXd rows(static_cast<Eigen::Index>(hi - lo), model.cfg.hidden_dim);
        Eigen::MatrixXd yv(static_cast<Eigen::Index>(hi - lo), 1);
        for (size_t t = lo; t < hi; ++t) {
          rows.row(static_cast<Eigen::Index>(t - lo)) = aug[aidx[t]].h_tilde;
          yv(static_cast<Eigen::Index>(t - lo), 0) = aug[aidx[t]].y_tilde;
        }
        loss = mae(model.decoder.forward(TensorD::constant(std::move(rows))),
                   TensorD::constant(std::move(yv)));
        ++adone;
      }
      loss_sum += loss.item();
      backward(loss);
      adam.step(params);
      adam.zero_grads(params);
    }
    result.epoch_losses.push_back(loss_sum / static_cast<Real>(rbatches + abatches));
    if ((e + 1) % cfg.valid_every == 0 || e + 1 == cfg.epochs) {
      const Real vmae = valid_mae_of(model, valid_gs, valid_ys);
      if (vmae < best.valid_mae) capture(best, params, adam, vmae);
    }
  }
  restore(best, params, adam);
  result.best_valid_mae = best.valid_mae;
  return result;
}

// ---------------------------------------------------------------------------
// Iteration inputs: what one self-training iteration trains on, plus the dump
// payloads describing how it was selected.

struct IterationInputs {
  std::vector<RealExample> reals;  // labeled + pseudo-labeled
  std::vector<AugExample> aug;
  GconfResult gconf;
  std::vector<ConfidenceScore> unlabeled_scores;  // aligned with scored graphs
  std::vector<char> kept;                         // per scored graph
  Real tau = 0.0;
  std::optional<Real> pseudo_mae;
};

std::vector<LatentEntry> source_entries(MixSource src, const EmbeddingCache& cache,
                                        size_t n_labeled, const GconfResult& gconf) {
  std::vector<LatentEntry> entries;
  for (size_t i = 0; i < n_labeled; ++i) {
    const Graph* g = cache.graphs[i];
    entries.push_back({g->id, *g->label, cache.h.row(static_cast<Eigen::Index>(i))});
  }
  if (src == MixSource::ImbConf) {
    for (const PseudoLabeled& p : gconf.selected) {
      const size_t row = cache.row_of.at(p.graph);
      entries.push_back(
          {p.graph->id, p.pseudo_label, cache.h.row(static_cast<Eigen::Index>(row))});
    }
  } else if (src == MixSource::ImbUnlabeled) {
    for (size_t i = n_labeled; i < cache.graphs.size(); ++i)
      entries.push_back({cache.graphs[i]->id, cache.pred[i],
                         cache.h.row(static_cast<Eigen::Index>(i))});
  }
  return entries;
}

IterationInputs build_iteration_inputs(const GreaModel& model, const RunConfig& cfg,
                                       const std::vector<const Graph*>& train_gs,
                                       const std::vector<Real>& train_ys,
                                       const std::vector<const Graph*>& unlabeled_gs,
                                       const IntervalPartition& pseudo_part,
                                       const IntervalPartition& mixup_part,
                                       const ShotRegionMap& shot,
                                       const std::vector<Real>& prev_pseudo_labels, int k) {
  IterationInputs inputs;
  for (size_t i = 0; i < train_gs.size(); ++i) inputs.reals.push_back({train_gs[i], train_ys[i]});
  if (k == 0) return inputs;  // no pseudo-labels exist yet; labeled data only

  const long n_aug =
      cfg.ablate_no_mixup ? 0
                          : (cfg.n_aug < 0 ? static_cast<long>(train_gs.size()) : cfg.n_aug);
  const bool want_unlabeled = !unlabeled_gs.empty();
  if (!want_unlabeled && n_aug == 0) return inputs;

  std::vector<const Graph*> all;
  all.reserve(train_gs.size() + unlabeled_gs.size());
  all.insert(all.end(), train_gs.begin(), train_gs.end());
  all.insert(all.end(), unlabeled_gs.begin(), unlabeled_gs.end());
  const EmbeddingCache cache = build_cache(model, std::move(all), cfg.threads);

  if (want_unlabeled) {
    // Shared environment pool for this iteration's confidence pass.
    EnvPool pool;
    if (cfg.confidence == ConfidenceMethod::GRation) {
      std::vector<size_t> order(train_gs.size());
      std::iota(order.begin(), order.end(), 0);
      Rng env_rng = substream(cfg.seed, "env", static_cast<uint64_t>(k));
      env_rng.shuffle(order);
      std::vector<const Graph*> env_graphs;
      const size_t take = std::min<size_t>(order.size(), static_cast<size_t>(cfg.env_batch));
      for (size_t i = 0; i < take; ++i) env_graphs.push_back(train_gs[order[i]]);
      pool = build_env_pool(model, env_graphs);
    }

    auto score_one = [&](const Graph* g, size_t cache_row, const char* tag,
                         size_t i) -> ConfidenceScore {
      if (cfg.confidence == ConfidenceMethod::GRation)
        return score_gration_cached(model.decoder, g->id,
                                    cache.h_r.row(static_cast<Eigen::Index>(cache_row)), pool);
      Rng rng = substream(cfg.seed, tag, static_cast<uint64_t>(k), static_cast<uint64_t>(i));
      return score_dropout(model, *g, cfg.dropout_samples, cfg.dropout_rate, rng);
    };

    std::vector<Real> labeled_sigmas(train_gs.size());
    parallel_for(train_gs.size(), cfg.threads, [&](size_t i) {
      labeled_sigmas[i] = score_one(train_gs[i], i, "dropout-lab", i).sigma;
    });
    inputs.tau = cfg.ablate_no_sigma ? -std::numeric_limits<Real>::infinity()
                                     : compute_threshold(labeled_sigmas, cfg.tau_pct);

    inputs.unlabeled_scores.resize(unlabeled_gs.size());
    parallel_for(unlabeled_gs.size(), cfg.threads, [&](size_t i) {
      inputs.unlabeled_scores[i] =
          score_one(unlabeled_gs[i], train_gs.size() + i, "dropout-unl", i);
    });

    IntervalPartition sampling_part = pseudo_part;
    if (cfg.rates_include_pseudo && !prev_pseudo_labels.empty()) {
      std::vector<Real> expanded = train_ys;
      expanded.insert(expanded.end(), prev_pseudo_labels.begin(), prev_pseudo_labels.end());
      sampling_part = recount_partition(pseudo_part, expanded);
    }
    inputs.gconf = build_gconf(inputs.unlabeled_scores, unlabeled_gs, inputs.tau, sampling_part,
                               cfg.ablate_no_sampling);
    inputs.kept.assign(unlabeled_gs.size(), 0);
    {
      std::unordered_map<const Graph*, size_t> row;
      for (size_t i = 0; i < unlabeled_gs.size(); ++i) row[unlabeled_gs[i]] = i;
      for (const PseudoLabeled& p : inputs.gconf.selected) inputs.kept[row.at(p.graph)] = 1;
    }
    for (const PseudoLabeled& p : inputs.gconf.selected)
      inputs.reals.push_back({p.graph, p.pseudo_label});

    const bool all_hidden =
        std::all_of(inputs.gconf.selected.begin(), inputs.gconf.selected.end(),
                    [](const PseudoLabeled& p) { return p.graph->hidden_label.has_value(); });
    if (all_hidden && !inputs.gconf.selected.empty())
      inputs.pseudo_mae = pseudo_label_quality(inputs.gconf.selected, pseudo_part, shot).mae;
  }

  if (n_aug > 0) {
    // Apportionment counts what is still rare after pseudo-labels joined the
    // training set, so the recount runs over labeled + pseudo labels.
    std::vector<Real> expanded = train_ys;
    for (const PseudoLabeled& p : inputs.gconf.selected) expanded.push_back(p.pseudo_label);
    IntervalPartition aug_part = recount_partition(mixup_part, expanded);
    if (cfg.ablate_no_sampling) std::fill(aug_part.rates.begin(), aug_part.rates.end(), 1.0);
    const std::vector<LatentEntry> z_entries =
        source_entries(cfg.z_source, cache, train_gs.size(), inputs.gconf);
    const std::vector<LatentEntry> pool_entries =
        source_entries(cfg.h_source, cache, train_gs.size(), inputs.gconf);
    const AnchorTable anchors = build_anchor_table(z_entries, aug_part);
    inputs.aug = build_haug(anchors, aug_part, pool_entries, n_aug, cfg.beta_mix, cfg.seed,
                            static_cast<uint64_t>(k));
  }
  return inputs;
}

// ---------------------------------------------------------------------------
// JSON (de)serialization of the metric history for manifests, reports, and
// checkpoint metadata

json stats_json(const RegionStats& s) {
  return json{{"count", s.count}, {"mae", s.mae}, {"gm", s.gm}, {"gm_clamped", s.gm_clamped}};
}

RegionStats stats_from(const json& j) {
  RegionStats s;
  s.count = j.at("count").get<size_t>();
  s.mae = j.at("mae").get<Real>();
  s.gm = j.at("gm").get<Real>();
  s.gm_clamped = j.at("gm_clamped").get<size_t>();
  return s;
}

json report_json(const RegionReport& r) {
  json j;
  j["all"] = stats_json(r.all);
  if (r.many) j["many"] = stats_json(*r.many);
  if (r.medium) j["medium"] = stats_json(*r.medium);
  if (r.few) j["few"] = stats_json(*r.few);
  return j;
}

RegionReport report_from(const json& j) {
  RegionReport r;
  r.all = stats_from(j.at("all"));
  if (j.contains("many")) r.many = stats_from(j.at("many"));
  if (j.contains("medium")) r.medium = stats_from(j.at("medium"));
  if (j.contains("few")) r.few = stats_from(j.at("few"));
  return r;
}

json record_json(const IterationRecord& rec) {
  json j;
  j["iteration"] = rec.iteration;
  j["epoch_losses"] = rec.epoch_losses;
  j["best_valid_mae"] = rec.best_valid_mae;
  j["valid"] = report_json(rec.valid);
  j["test"] = report_json(rec.test);
  j["gconf"] = rec.gconf_size;
  j["haug"] = rec.haug_size;
  j["tau"] = rec.tau;
  if (rec.pseudo_mae) j["pseudo_mae"] = *rec.pseudo_mae;
  if (rec.bound_correlation) j["bound_correlation"] = *rec.bound_correlation;
  return j;
}

IterationRecord record_from(const json& j) {
  IterationRecord rec;
  rec.iteration = j.at("iteration").get<int>();
  rec.epoch_losses = j.at("epoch_losses").get<std::vector<Real>>();
  rec.best_valid_mae = j.at("best_valid_mae").get<Real>();
  rec.valid = report_from(j.at("valid"));
  rec.test = report_from(j.at("test"));
  rec.gconf_size = j.at("gconf").get<size_t>();
  rec.haug_size = j.at("haug").get<size_t>();
  rec.tau = j.at("tau").get<Real>();
  if (j.contains("pseudo_mae")) rec.pseudo_mae = j.at("pseudo_mae").get<Real>();
  if (j.contains("bound_correlation"))
    rec.bound_correlation = j.at("bound_correlation").get<Real>();
  return rec;
}

json history_json(const std::vector<IterationRecord>& history) {
  json arr = json::array();
  for (const auto& rec : history) arr.push_back(record_json(rec));
  return arr;
}

json part_summary(const IntervalPartition& part) {
  return json{{"intervals", part.size()},
              {"lo", part.boundaries.front()},
              {"hi", part.boundaries.back()},
              {"boundaries", part.boundaries},
              {"frequencies", part.frequencies}};
}

// ---------------------------------------------------------------------------
// Artifact writers

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
}

void write_confidence_csv(const std::string& dir, int k, const IterationInputs& in,
                          const std::vector<const Graph*>& unlabeled_gs) {
  std::string csv = "graph_id,predicted,sigma,kept\n";
  for (size_t i = 0; i < in.unlabeled_scores.size(); ++i) {
    const ConfidenceScore& s = in.unlabeled_scores[i];
    csv += unlabeled_gs[i]->id + "," + num(s.predicted) + "," + num(s.sigma) + "," +
           (in.kept[i] ? "1" : "0") + "\n";
  }
  write_text(dir + "/confidence_iter_" + std::to_string(k) + ".csv", csv);
}

void write_gconf_csv(const std::string& dir, int k, const GconfResult& gconf) {
  std::string csv = "graph_id,pseudo_label,sigma,interval\n";
  for (const PseudoLabeled& p : gconf.selected)
    csv += p.graph->id + "," + num(p.pseudo_label) + "," + num(p.sigma) + "," +
           std::to_string(p.interval) + "\n";
  write_text(dir + "/gconf_iter_" + std::to_string(k) + ".csv", csv);
}

void write_haug_csv(const std::string& dir, int k, const std::vector<AugExample>& aug) {
  std::string csv = "anchor_interval,partner_id,lambda,y_tilde\n";
  for (const AugExample& a : aug)
    csv += std::to_string(a.anchor_interval) + "," + a.partner_id + "," + num(a.lambda) + "," +
           num(a.y_tilde) + "\n";
  write_text(dir + "/haug_iter_" + std::to_string(k) + ".csv", csv);
}

void append_region_rows(std::string& csv, int iteration, const char* split,
                        const RegionReport& r) {
  auto row = [&](const char* region, const RegionStats& s) {
    csv += std::to_string(iteration) + "," + split + "," + region + "," +
           std::to_string(s.count) + "," + num(s.mae) + "," + num(s.gm) + "," +
           std::to_string(s.gm_clamped) + "\n";
  };
  row("all", r.all);
  if (r.many) row("many", *r.many);
  if (r.medium) row("medium", *r.medium);
  if (r.few) row("few", *r.few);
}

std::string curve_csv(const std::vector<IterationRecord>& history) {
  std::string csv = "iteration,split,region,count,mae,gm,gm_clamped\n";
  for (const auto& rec : history) {
    append_region_rows(csv, rec.iteration, "valid", rec.valid);
    append_region_rows(csv, rec.iteration, "test", rec.test);
  }
  return csv;
}

std::string interval_error_csv(const MarginDiagnostics& margins, const IntervalPartition& part) {
  std::string csv = "interval,center,train_count,members,min_margin,error_rate,proxy\n";
  for (const MarginRow& row : margins.rows)
    csv += std::to_string(row.interval) + "," + num(part.centers[row.interval]) + "," +
           std::to_string(part.frequencies[row.interval]) + "," + std::to_string(row.members) +
           "," + num(row.min_margin) + "," + num(row.error_rate) + "," + num(row.proxy) + "\n";
  return csv;
}

void append_report_text(std::string& text, const char* name, const RegionReport& r) {
  char line[160];
  text += std::string(name) + "\n";
  std::snprintf(line, sizeof(line), "  %-8s %8s %12s %12s %s\n", "region", "count", "mae", "gm",
                "gm_clamped");
  text += line;
  auto row = [&](const char* region, const RegionStats& s) {
    std::snprintf(line, sizeof(line), "  %-8s %8zu %12.6f %12.6f %zu\n", region, s.count, s.mae,
                  s.gm, s.gm_clamped);
    text += line;
  };
  row("all", r.all);
  if (r.many) row("many", *r.many);
  if (r.medium) row("medium", *r.medium);
  if (r.few) row("few", *r.few);
}

std::string report_text(const std::vector<IterationRecord>& history, const BoundTrend& trend) {
  std::string text;
  char line[200];
  std::snprintf(line, sizeof(line), "%-10s %10s %10s %12s %12s %12s %12s\n", "iteration",
                "gconf", "haug", "valid_mae", "test_mae", "test_few", "tau");
  text += line;
  for (const auto& rec : history) {
    const Real few = rec.test.few ? rec.test.few->mae : std::nan("");
    std::snprintf(line, sizeof(line), "%-10d %10zu %10zu %12.6f %12.6f %12.6f %12.4g\n",
                  rec.iteration, rec.gconf_size, rec.haug_size, rec.valid.all.mae,
                  rec.test.all.mae, few, rec.tau);
    text += line;
  }
  text += "\nfinal model\n";
  append_report_text(text, "validation split", history.back().valid);
  append_report_text(text, "test split", history.back().test);
  if (trend.correlation) {
    std::snprintf(line, sizeof(line),
                  "\ninterval count vs error rank correlation: %.6f over %zu intervals\n",
                  *trend.correlation, trend.rows.size());
    text += line;
  } else {
    text += "\ninterval count vs error rank correlation: not defined (too few intervals)\n";
  }
  return text;
}

}  // namespace

// ---------------------------------------------------------------------------

EvalOutput evaluate_model(const GreaModel& model, const RunConfig& cfg, const Dataset& train,
                          const Dataset& split) {
  check_labeled_split(&train, "train");
  check_labeled_split(&split, split.split_tag.empty() ? "eval" : split.split_tag.c_str());
  std::vector<const Graph*> train_gs, eval_gs;
  std::vector<Real> train_ys, eval_ys;
  split_labeled(train, train_gs, train_ys);
  split_labeled(split, eval_gs, eval_ys);
  const IntervalPartition eval_part = make_part(train_ys, cfg.eval_bins, cfg.eval_boundaries);
  const ShotRegionMap shot(cfg.t_many, cfg.t_few);
  const std::vector<Real> preds = predict_all(model, eval_gs, cfg.threads);
  EvalOutput out;
  out.report = region_report(preds, eval_ys, eval_part, shot);
  out.margins = margin_diagnostics(preds, eval_ys, eval_part);
  out.trend = bound_trend(out.margins, eval_part);
  return out;
}

RunResult run_selftrain(const RunConfig& cfg, const RunInputs& data, const std::string& out_dir,
                        const std::string& resume_from) {
  validate_run_config(cfg);
  check_labeled_split(data.train, "train");
  check_labeled_split(data.valid, "valid");
  check_labeled_split(data.test, "test");
  std::vector<const Graph*> train_gs, valid_gs, test_gs;
  std::vector<Real> train_ys, valid_ys, test_ys;
  split_labeled(*data.train, train_gs, train_ys);
  split_labeled(*data.valid, valid_gs, valid_ys);
  split_labeled(*data.test, test_gs, test_ys);

  std::vector<const Graph*> unlabeled_gs;
  if (data.unlabeled != nullptr && !cfg.ablate_no_unlabeled) {
    if (!data.unlabeled->labeled.empty())
      throw ValidationError("unlabeled split contains labeled graphs");
    for (const Graph& g : data.unlabeled->unlabeled) unlabeled_gs.push_back(&g);
  }

  const int feature_dim = train_gs.front()->feature_dim();
  for (const Graph* g : valid_gs)
    if (g->feature_dim() != feature_dim)
      throw ValidationError("graph '" + g->id + "': feature dimension differs from train split");
  for (const Graph* g : test_gs)
    if (g->feature_dim() != feature_dim)
      throw ValidationError("graph '" + g->id + "': feature dimension differs from train split");
  for (const Graph* g : unlabeled_gs)
    if (g->feature_dim() != feature_dim)
      throw ValidationError("graph '" + g->id + "': feature dimension differs from train split");

  const IntervalPartition pseudo_part = make_part(train_ys, cfg.c_pseudo, cfg.pseudo_boundaries);
  const IntervalPartition mixup_part = make_part(train_ys, cfg.c_mixup, cfg.mixup_boundaries);
  const IntervalPartition eval_part = make_part(train_ys, cfg.eval_bins, cfg.eval_boundaries);
  const ShotRegionMap shot(cfg.t_many, cfg.t_few);

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  auto eval_record = [&](const GreaModel& model, int iteration) {
    IterationRecord rec;
    rec.iteration = iteration;
    const std::vector<Real> vp = predict_all(model, valid_gs, cfg.threads);
    const std::vector<Real> tp = predict_all(model, test_gs, cfg.threads);
    rec.valid = region_report(vp, valid_ys, eval_part, shot);
    rec.test = region_report(tp, test_ys, eval_part, shot);
    const MarginDiagnostics diag = margin_diagnostics(tp, test_ys, eval_part);
    rec.bound_correlation = bound_trend(diag, eval_part).correlation;
    return rec;
  };

  // Model + optimizer state: fresh, or restored from a checkpoint.
  GreaModel model;
  Adam<Real> adam;
  adam.lr = cfg.lr;
  std::vector<IterationRecord> history;
  int start_k = 0;
  if (resume_from.empty()) {
    Rng init_rng = substream(cfg.seed, "init");
    model = GreaModel::make({feature_dim, cfg.hidden_dim, cfg.gin_layers}, init_rng);
    adam.init(model.params());
    IterationRecord initial = eval_record(model, -1);
    initial.best_valid_mae = initial.valid.all.mae;
    history.push_back(std::move(initial));
  } else {
    const Checkpoint ck = load_checkpoint(resume_from);
    json meta;
    try {
      meta = json::parse(ck.meta_json);
    } catch (const json::exception& e) {
      throw ConfigError("checkpoint '" + resume_from + "': bad metadata: " + e.what());
    }
    const std::string want = run_config_hash(cfg);
    const std::string got = meta.value("config_hash", "");
    if (got != want)
      throw ConfigError("checkpoint '" + resume_from + "' was written under config hash " + got +
                        ", current config hashes to " + want);
    if (ck.model_cfg.feature_dim != feature_dim)
      throw ValidationError("checkpoint feature dimension " +
                            std::to_string(ck.model_cfg.feature_dim) +
                            " does not match the dataset's " + std::to_string(feature_dim));
    model = model_from_checkpoint(ck);
    adam.init(model.params());
    adam.lr = cfg.lr;
    if (ck.has_adam) apply_checkpoint(ck, model, &adam);
    start_k = ck.completed_iterations;
    try {
      for (const auto& item : meta.at("history")) history.push_back(record_from(item));
    } catch (const json::exception& e) {
      throw ConfigError("checkpoint '" + resume_from + "': bad metadata: " + e.what());
    }
  }

  auto checkpoint_meta = [&](const std::vector<IterationRecord>& recs) {
    json meta;
    meta["config_hash"] = run_config_hash(cfg);
    meta["config"] = json::parse(run_config_json(cfg));
    meta["history"] = history_json(recs);
    return meta.dump();
  };

  std::vector<Real> prev_pseudo_labels;
  for (int k = start_k; k < cfg.iterations; ++k) {
    try {
      IterationInputs inputs =
          build_iteration_inputs(model, cfg, train_gs, train_ys, unlabeled_gs, pseudo_part,
                                 mixup_part, shot, prev_pseudo_labels, k);
      if (!out_dir.empty() && k > 0) {
        write_confidence_csv(out_dir, k, inputs, unlabeled_gs);
        write_gconf_csv(out_dir, k, inputs.gconf);
        write_haug_csv(out_dir, k, inputs.aug);
      }
      const TrainPhaseResult phase =
          train_phase(model, adam, inputs.reals, inputs.aug, valid_gs, valid_ys, cfg, k);
      IterationRecord rec = eval_record(model, k);
      rec.epoch_losses = phase.epoch_losses;
      rec.best_valid_mae = phase.best_valid_mae;
      rec.gconf_size = inputs.gconf.selected.size();
      rec.haug_size = inputs.aug.size();
      rec.tau = std::isfinite(inputs.tau) ? inputs.tau : 0.0;
      rec.pseudo_mae = inputs.pseudo_mae;
      history.push_back(std::move(rec));
      prev_pseudo_labels.clear();
      for (const PseudoLabeled& p : inputs.gconf.selected)
        prev_pseudo_labels.push_back(p.pseudo_label);
      if (!out_dir.empty()) {
        const Checkpoint ck = snapshot_model(model, &adam, k + 1, checkpoint_meta(history));
        save_checkpoint(ck, out_dir + "/ckpt_iter_" + std::to_string(k) + ".bin");
      }
    } catch (const NumericFault&) {
      if (!out_dir.empty()) {
        const Checkpoint ck = snapshot_model(model, &adam, k, checkpoint_meta(history));
        save_checkpoint(ck, out_dir + "/ckpt_fault.bin");
      }
      throw;
    }
  }

  RunResult result;
  result.history = std::move(history);
  const std::vector<Real> final_preds = predict_all(model, test_gs, cfg.threads);
  result.final_margins = margin_diagnostics(final_preds, test_ys, eval_part);
  result.final_trend = bound_trend(result.final_margins, eval_part);
  for (auto& p : model.params()) result.final_params.emplace_back(p.name, p.tensor.value());

  json manifest;
  manifest["format"] = "sgir-run-manifest-v1";
  manifest["code_version"] = kVersion;
  manifest["config"] = json::parse(run_config_json(cfg));
  manifest["config_hash"] = run_config_hash(cfg);
  manifest["seed"] = cfg.seed;
  manifest["threads"] = cfg.threads;
  manifest["dataset_hashes"] = data.dataset_hashes;
  manifest["partitions"] =
      json{{"pseudo", part_summary(pseudo_part)},
           {"mixup", json{{"intervals", mixup_part.size()},
                          {"lo", mixup_part.boundaries.front()},
                          {"hi", mixup_part.boundaries.back()}}},
           {"eval", part_summary(eval_part)}};
  manifest["deviations"] = json::array(
      {"batch reweighting resolves the loss weights as the softmax over per-example summed "
       "label distances, computed per batch outside the gradient",
       "environment expectation and variance terms aggregate by batch mean, so the loss scale "
       "does not grow with batch size",
       "mixup apportionment recounts interval frequencies over labeled plus pseudo-labeled "
       "data each iteration; pseudo-label sampling keeps labeled-only frequencies unless "
       "rates_include_pseudo is set",
       "geometric-mean errors are clamped at 1e-8 and reports carry the clamp count"});
  manifest["iterations"] = history_json(result.history);
  if (result.final_trend.correlation)
    manifest["bound_correlation"] = *result.final_trend.correlation;
  result.manifest_json = manifest.dump(2);

  if (!out_dir.empty()) {
    const Checkpoint ck =
        snapshot_model(model, &adam, cfg.iterations, checkpoint_meta(result.history));
    save_checkpoint(ck, out_dir + "/ckpt_final.bin");
    write_text(out_dir + "/manifest.json", result.manifest_json);
    write_text(out_dir + "/curve.csv", curve_csv(result.history));
    write_text(out_dir + "/interval_error.csv",
               interval_error_csv(result.final_margins, eval_part));
    json report;
    report["final_valid"] = report_json(result.history.back().valid);
    report["final_test"] = report_json(result.history.back().test);
    json margin_rows = json::array();
    for (const MarginRow& row : result.final_margins.rows)
      margin_rows.push_back(json{{"interval", row.interval},
                                 {"members", row.members},
                                 {"min_margin", row.min_margin},
                                 {"error_rate", row.error_rate},
                                 {"proxy", row.proxy}});
    report["margins"] = margin_rows;
    if (result.final_trend.correlation)
      report["bound_correlation"] = *result.final_trend.correlation;
    write_text(out_dir + "/report.json", report.dump(2));
    write_text(out_dir + "/report.txt", report_text(result.history, result.final_trend));
  }
  return result;
}

SupervisedResult train_grea_supervised(const RunConfig& cfg, const Dataset& train,
                                       const Dataset& valid) {
  validate_run_config(cfg);
  check_labeled_split(&train, "train");
  check_labeled_split(&valid, "valid");
  std::vector<const Graph*> train_gs, valid_gs;
  std::vector<Real> train_ys, valid_ys;
  split_labeled(train, train_gs, train_ys);
  split_labeled(valid, valid_gs, valid_ys);

  Rng init_rng = substream(cfg.seed, "init");
  SupervisedResult result{
      {}, 0.0, GreaModel::make({train_gs.front()->feature_dim(), cfg.hidden_dim, cfg.gin_layers},
                               init_rng),
      {}};
  Adam<Real> adam;
  adam.lr = cfg.lr;
  adam.init(result.model.params());
  std::vector<RealExample> reals;
  for (size_t i = 0; i < train_gs.size(); ++i) reals.push_back({train_gs[i], train_ys[i]});
  const TrainPhaseResult phase =
      train_phase(result.model, adam, reals, {}, valid_gs, valid_ys, cfg, 0);
  result.epoch_losses = phase.epoch_losses;
  result.best_valid_mae = phase.best_valid_mae;
  for (auto& p : result.model.params()) result.final_params.emplace_back(p.name, p.tensor.value());
  return result;
}

}  // namespace sgir
