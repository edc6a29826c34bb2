#include "sgir/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sgir {

namespace {

void check_pair(const std::vector<Real>& preds, const std::vector<Real>& truths,
                const char* what) {
  if (preds.size() != truths.size())
    throw ShapeError(std::string(what) + ": prediction/truth count mismatch");
  if (preds.empty()) throw ShapeError(std::string(what) + ": empty input");
}

}  // namespace

Real mae_metric(const std::vector<Real>& preds, const std::vector<Real>& truths) {
  check_pair(preds, truths, "mae");
  Real sum = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) sum += std::abs(preds[i] - truths[i]);
  return sum / static_cast<Real>(preds.size());
}

Real gm_metric(const std::vector<Real>& preds, const std::vector<Real>& truths,
               size_t* clamped_out) {
  check_pair(preds, truths, "gm");
  Real log_sum = 0.0;
  size_t clamped = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    Real e = std::abs(preds[i] - truths[i]);
    if (e < kGmErrorFloor) {
      e = kGmErrorFloor;
      ++clamped;
    }
    log_sum += std::log(e);
  }
  if (clamped_out) *clamped_out = clamped;
  return std::exp(log_sum / static_cast<Real>(preds.size()));
}

RegionReport region_report(const std::vector<Real>& preds, const std::vector<Real>& truths,
                           const IntervalPartition& part, const ShotRegionMap& shot) {
  check_pair(preds, truths, "region report");
  std::vector<Real> p_region[3], t_region[3];
  for (size_t i = 0; i < preds.size(); ++i) {
    const int interval = assign_interval(part, truths[i]);
    const auto r = static_cast<int>(shot.region(part.frequencies[interval]));
    p_region[r].push_back(preds[i]);
    t_region[r].push_back(truths[i]);
  }
  RegionReport rep;
  rep.all.count = preds.size();
  rep.all.mae = mae_metric(preds, truths);
  rep.all.gm = gm_metric(preds, truths, &rep.all.gm_clamped);
  auto fill = [&](ShotRegion r) -> std::optional<RegionStats> {
    const auto idx = static_cast<int>(r);
    if (p_region[idx].empty()) return std::nullopt;
    RegionStats s;
    s.count = p_region[idx].size();
    s.mae = mae_metric(p_region[idx], t_region[idx]);
    s.gm = gm_metric(p_region[idx], t_region[idx], &s.gm_clamped);
    return s;
  };
  rep.many = fill(ShotRegion::Many);
  rep.medium = fill(ShotRegion::Medium);
  rep.few = fill(ShotRegion::Few);
  return rep;
}

Real interval_similarity(Real pred, Real center, Real eps) {
  return 1.0 / std::max(std::abs(pred - center), eps);
}

Real prediction_margin(Real pred, int true_interval, const IntervalPartition& part, Real eps) {
  if (true_interval < 0 || true_interval >= part.size())
    throw ShapeError("margin: interval index out of range");
  const Real s_true = interval_similarity(pred, part.centers[true_interval], eps);
  Real best_other = 0.0;
  for (int j = 0; j < part.size(); ++j) {
    if (j == true_interval) continue;
    best_other = std::max(best_other, interval_similarity(pred, part.centers[j], eps));
  }
  return s_true - best_other;
}

MarginDiagnostics margin_diagnostics(const std::vector<Real>& preds,
                                     const std::vector<Real>& truths,
                                     const IntervalPartition& part, Real eps) {
  check_pair(preds, truths, "margin diagnostics");
  std::vector<std::vector<Real>> margins(part.size());
  for (size_t i = 0; i < preds.size(); ++i) {
    const int interval = assign_interval(part, truths[i]);
    margins[interval].push_back(prediction_margin(preds[i], interval, part, eps));
  }
  MarginDiagnostics diag;
  for (int i = 0; i < part.size(); ++i) {
    if (margins[i].empty()) continue;
    MarginRow row;
    row.interval = i;
    row.members = margins[i].size();
    row.min_margin = *std::min_element(margins[i].begin(), margins[i].end());
    size_t wrong = 0;
    for (Real g : margins[i])
      if (g <= 0.0) ++wrong;
    row.error_rate = static_cast<Real>(wrong) / static_cast<Real>(row.members);
    row.proxy = 1.0 / (std::max(row.min_margin, eps) * std::sqrt(static_cast<Real>(row.members)));
    diag.rows.push_back(row);
  }
  return diag;
}

Real spearman(const std::vector<Real>& xs, const std::vector<Real>& ys) {
  if (xs.size() != ys.size()) throw ShapeError("spearman: length mismatch");
  if (xs.size() < 2) throw ShapeError("spearman: needs at least two points");
  auto ranks = [](const std::vector<Real>& v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<Real> r(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const Real avg = 0.5 * static_cast<Real>(i + j) + 1.0;  // average 1-based rank
      for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<Real> rx = ranks(xs);
  const std::vector<Real> ry = ranks(ys);
  const auto n = static_cast<Real>(xs.size());
  Real mx = 0.0, my = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  Real sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const Real dx = rx[i] - mx;
    const Real dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;  // constant input carries no order
  return sxy / std::sqrt(sxx * syy);
}

BoundTrend bound_trend(const MarginDiagnostics& diag, const IntervalPartition& part) {
  BoundTrend trend;
  std::vector<Real> counts, errors;
  for (const auto& row : diag.rows) {
    BoundTrendRow r;
    r.interval = row.interval;
    r.train_count = part.frequencies[row.interval];
    r.error_rate = row.error_rate;
    trend.rows.push_back(r);
    counts.push_back(static_cast<Real>(r.train_count));
    errors.push_back(r.error_rate);
  }
  if (trend.rows.size() >= 2) trend.correlation = spearman(counts, errors);
  return trend;
}

}  // namespace sgir
