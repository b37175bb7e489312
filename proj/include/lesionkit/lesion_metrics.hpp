#pragma once

// Lesion-wise detection metrics.
//
// Predicted lesions are the connected components of the probability map
// strictly above 0.5; a component's certainty is its maximum probability.
// A predicted and a ground-truth lesion hit each other when they share at
// least one voxel (pairwise Dice > 0). The precision-recall curve sweeps a
// certainty threshold tau and keeps predictions with certainty > tau.
//
// Hit accounting is per pair: one prediction overlapping two ground-truth
// lesions detects both, and two predictions on one lesion are both true
// positives while the lesion counts once.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lesionkit/error.hpp"
#include "lesionkit/labeling.hpp"
#include "lesionkit/random.hpp"
#include "lesionkit/stats.hpp"
#include "lesionkit/volume.hpp"

namespace lesionkit {

inline constexpr double kLesionCut = 0.5;

struct PredictedLesion {
  std::int32_t label = 0;
  double certainty = 0.0;
  std::size_t voxels = 0;
};

struct PredictionSet {
  LabelMap labels;
  std::vector<PredictedLesion> lesions;  // lesions[i].label == i + 1
};

template <typename T>
PredictionSet extract_predicted_lesions(const Volume<T>& prob,
                                        Connectivity connectivity = Connectivity::k26) {
  PredictionSet out{label_components(binarize(prob, kLesionCut), connectivity), {}};
  const std::size_t k = out.labels.component_count();
  out.lesions.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    out.lesions[i] = {static_cast<std::int32_t>(i + 1), 0.0, out.labels.sizes[i + 1]};
  }
  for (std::size_t j = 0; j < prob.size(); ++j) {
    const std::int32_t l = out.labels.labels[j];
    if (l == 0) continue;
    auto& les = out.lesions[static_cast<std::size_t>(l - 1)];
    les.certainty = std::max(les.certainty, static_cast<double>(prob[j]));
  }
  return out;
}

struct MatchTable {
  std::string case_id;
  std::vector<double> gt_diameters;      // mm, index i -> gt lesion i + 1
  std::vector<double> pred_certainties;  // index p -> predicted lesion p + 1
  std::vector<std::pair<std::int32_t, std::int32_t>> overlaps;  // (gt_id, pred_id), sorted

  std::size_t gt_count() const { return gt_diameters.size(); }
  std::size_t pred_count() const { return pred_certainties.size(); }
};

namespace detail {

inline std::vector<std::pair<std::int32_t, std::int32_t>> overlap_pairs(
    const Volume<std::int32_t>& gt, const Volume<std::int32_t>& pred) {
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
  for (std::size_t j = 0; j < gt.size(); ++j) {
    if (gt[j] != 0 && pred[j] != 0) pairs.emplace_back(gt[j], pred[j]);
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

}  // namespace detail

inline MatchTable match_lesions(const PredictionSet& pred, const LabelMap& gt,
                                std::string case_id = {}) {
  require_same_geometry(pred.labels.labels, gt.labels, "match_lesions");
  MatchTable t;
  t.case_id = std::move(case_id);
  const auto diam = equivalent_diameters(gt);
  t.gt_diameters.assign(diam.begin() + 1, diam.end());
  for (const auto& l : pred.lesions) t.pred_certainties.push_back(l.certainty);
  t.overlaps = detail::overlap_pairs(gt.labels, pred.labels.labels);
  return t;
}

// Ground-truth lesions counted for recall: equivalent diameter in [min_mm, max_mm).
struct Stratum {
  double min_mm = 0.0;
  double max_mm = std::numeric_limits<double>::infinity();

  bool contains(double d) const { return d >= min_mm && d < max_mm; }
  static Stratum all() { return {}; }
  static Stratum below(double cut_mm) { return {0.0, cut_mm}; }
};

inline constexpr double kDefaultSmallCutMm = 10.0;

struct PrcPoint {
  double threshold = 0.0;
  std::size_t tp = 0;       // detected gt lesions
  std::size_t fp = 0;       // surviving predictions without any hit
  std::size_t fn = 0;       // missed gt lesions
  std::size_t tp_pred = 0;  // surviving predictions with a hit
  double precision = 1.0;
  double recall = 0.0;
};

struct BandPoint {
  double recall_lo = 0.0;
  double recall_hi = 0.0;
  double precision_lo = 0.0;
  double precision_hi = 0.0;
};

struct LesionPRC {
  std::vector<PrcPoint> points;  // threshold ascending
  std::optional<std::vector<BandPoint>> band;
};

namespace detail {

// Per-case summary that makes a threshold evaluation O(lesions).
struct CaseSweep {
  std::vector<double> gt_best;   // max certainty over overlapping predictions, -inf if none
  std::vector<bool> gt_counted;  // in the stratum
  std::vector<double> pred_cert;
  std::vector<bool> pred_hit;
};

inline CaseSweep make_sweep(const MatchTable& t, const Stratum& s) {
  CaseSweep c;
  c.gt_best.assign(t.gt_count(), -std::numeric_limits<double>::infinity());
  c.gt_counted.resize(t.gt_count());
  for (std::size_t i = 0; i < t.gt_count(); ++i) c.gt_counted[i] = s.contains(t.gt_diameters[i]);
  c.pred_cert = t.pred_certainties;
  c.pred_hit.assign(t.pred_count(), false);
  for (const auto& [g, p] : t.overlaps) {
    if (g < 1 || p < 1 || static_cast<std::size_t>(g) > t.gt_count() ||
        static_cast<std::size_t>(p) > t.pred_count()) {
      throw ArgumentError("match table overlap ids out of range");
    }
    auto& best = c.gt_best[static_cast<std::size_t>(g - 1)];
    best = std::max(best, t.pred_certainties[static_cast<std::size_t>(p - 1)]);
    c.pred_hit[static_cast<std::size_t>(p - 1)] = true;
  }
  return c;
}

inline std::vector<CaseSweep> make_sweeps(std::span<const MatchTable> cases, const Stratum& s) {
  std::vector<CaseSweep> out;
  out.reserve(cases.size());
  for (const auto& t : cases) out.push_back(make_sweep(t, s));
  return out;
}

inline std::size_t counted_gt(const std::vector<CaseSweep>& sweeps,
                              std::span<const std::size_t> subset) {
  std::size_t n = 0;
  for (std::size_t ci : subset) {
    for (bool b : sweeps[ci].gt_counted) n += b ? 1 : 0;
  }
  return n;
}

inline PrcPoint evaluate_at(const std::vector<CaseSweep>& sweeps,
                            std::span<const std::size_t> subset, double tau) {
  PrcPoint pt;
  pt.threshold = tau;
  std::size_t total = 0;
  for (std::size_t ci : subset) {
    const CaseSweep& c = sweeps[ci];
    for (std::size_t i = 0; i < c.gt_best.size(); ++i) {
      if (!c.gt_counted[i]) continue;
      ++total;
      if (c.gt_best[i] > tau) ++pt.tp;
    }
    for (std::size_t p = 0; p < c.pred_cert.size(); ++p) {
      if (!(c.pred_cert[p] > tau)) continue;
      if (c.pred_hit[p]) {
        ++pt.tp_pred;
      } else {
        ++pt.fp;
      }
    }
  }
  pt.fn = total - pt.tp;
  const std::size_t kept = pt.tp_pred + pt.fp;
  pt.precision = kept == 0 ? 1.0 : static_cast<double>(pt.tp_pred) / static_cast<double>(kept);
  pt.recall = total == 0 ? std::numeric_limits<double>::quiet_NaN()
                         : static_cast<double>(pt.tp) / static_cast<double>(total);
  return pt;
}

inline std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace detail

// Thresholds: the base cut 0.5 plus every distinct prediction certainty.
inline std::vector<double> sweep_thresholds(std::span<const MatchTable> cases) {
  std::vector<double> t{kLesionCut};
  for (const auto& c : cases) t.insert(t.end(), c.pred_certainties.begin(), c.pred_certainties.end());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

inline LesionPRC lesion_prc(std::span<const MatchTable> cases, const Stratum& stratum = Stratum::all()) {
  if (cases.empty()) throw ArgumentError("lesion_prc: no cases");
  const auto sweeps = detail::make_sweeps(cases, stratum);
  const auto all = detail::iota_indices(cases.size());
  if (detail::counted_gt(sweeps, all) == 0) {
    throw ArgumentError("lesion_prc: no ground-truth lesions, recall undefined");
  }
  LesionPRC prc;
  for (double tau : sweep_thresholds(cases)) prc.points.push_back(detail::evaluate_at(sweeps, all, tau));
  return prc;
}

// Point of the curve at an arbitrary threshold.
inline PrcPoint prc_point_at(std::span<const MatchTable> cases, double tau,
                             const Stratum& stratum = Stratum::all()) {
  const auto sweeps = detail::make_sweeps(cases, stratum);
  return detail::evaluate_at(sweeps, detail::iota_indices(cases.size()), tau);
}

struct BootstrapOptions {
  std::size_t iterations = 100;
  double fraction = 0.8;
};

// Each iteration keeps ceil(fraction * n) cases drawn without replacement and
// re-evaluates the curve on the thresholds of the full-sample curve. The band
// holds the 2.5 and 97.5 percentiles per threshold. Iterations whose subset
// has no ground-truth lesion in the stratum contribute precision only.
inline LesionPRC bootstrap_prc(std::span<const MatchTable> cases, const BootstrapOptions& opt,
                               Rng& rng, const Stratum& stratum = Stratum::all()) {
  if (!(opt.fraction > 0.0 && opt.fraction <= 1.0)) {
    throw ArgumentError("bootstrap fraction must lie in (0, 1]");
  }
  if (cases.size() < 2) throw ArgumentError("bootstrap_prc needs at least 2 cases");
  if (opt.iterations == 0) throw ArgumentError("bootstrap_prc needs at least one iteration");
  LesionPRC prc = lesion_prc(cases, stratum);
  const auto sweeps = detail::make_sweeps(cases, stratum);
  const std::size_t n = cases.size();
  const auto k = static_cast<std::size_t>(std::ceil(opt.fraction * static_cast<double>(n) - 1e-9));
  const std::size_t grid = prc.points.size();

  std::vector<std::vector<double>> recalls(grid), precisions(grid);
  std::vector<std::size_t> order = detail::iota_indices(n);
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(order[i], order[pick(rng)]);
    }
    std::span<const std::size_t> subset(order.data(), k);
    const bool has_gt = detail::counted_gt(sweeps, subset) > 0;
    for (std::size_t g = 0; g < grid; ++g) {
      const PrcPoint pt = detail::evaluate_at(sweeps, subset, prc.points[g].threshold);
      precisions[g].push_back(pt.precision);
      if (has_gt) recalls[g].push_back(pt.recall);
    }
  }

  std::vector<BandPoint> band(grid);
  for (std::size_t g = 0; g < grid; ++g) {
    band[g].precision_lo = stats::percentile(precisions[g], 2.5);
    band[g].precision_hi = stats::percentile(precisions[g], 97.5);
    if (!recalls[g].empty()) {
      band[g].recall_lo = stats::percentile(recalls[g], 2.5);
      band[g].recall_hi = stats::percentile(recalls[g], 97.5);
    } else {
      band[g].recall_lo = band[g].recall_hi = prc.points[g].recall;
    }
  }
  prc.band = std::move(band);
  return prc;
}

// Dice of each gt lesion against the union of the predicted components that
// overlap it; 0 for missed lesions.
inline std::vector<std::pair<std::int32_t, double>> lesion_dice(const Mask& pred_mask, const LabelMap& gt,
                                                                Connectivity connectivity = Connectivity::k26) {
  require_same_geometry(pred_mask, gt.labels, "lesion_dice");
  const LabelMap pred = label_components(pred_mask, connectivity);
  const auto pairs = detail::overlap_pairs(gt.labels, pred.labels);
  const std::size_t k = gt.component_count();
  std::vector<std::size_t> inter(k + 1, 0), pred_union(k + 1, 0);
  for (std::size_t j = 0; j < pred_mask.size(); ++j) {
    if (gt.labels[j] != 0 && pred.labels[j] != 0) ++inter[static_cast<std::size_t>(gt.labels[j])];
  }
  for (const auto& [g, p] : pairs) pred_union[static_cast<std::size_t>(g)] += pred.sizes[static_cast<std::size_t>(p)];
  std::vector<std::pair<std::int32_t, double>> out;
  out.reserve(k);
  for (std::size_t i = 1; i <= k; ++i) {
    const double denom = static_cast<double>(gt.sizes[i] + pred_union[i]);
    out.emplace_back(static_cast<std::int32_t>(i), 2.0 * static_cast<double>(inter[i]) / denom);
  }
  return out;
}

// 2|a & b| / (|a| + |b|); 1.0 when both are empty.
inline double volumetric_dice(const Mask& a, const Mask& b) {
  require_same_geometry(a, b, "volumetric_dice");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    na += a[j] ? 1 : 0;
    nb += b[j] ? 1 : 0;
    both += (a[j] && b[j]) ? 1 : 0;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

// Operating point: lowest threshold whose overall precision reaches `target`;
// the highest-precision point when no threshold does.
struct OperatingPoint {
  PrcPoint overall;
  PrcPoint stratum;
};

inline OperatingPoint operating_point(std::span<const MatchTable> cases, double target_precision,
                                      const Stratum& stratum) {
  const LesionPRC all = lesion_prc(cases);
  const PrcPoint* chosen = nullptr;
  for (const auto& p : all.points) {
    if (p.precision >= target_precision) {
      chosen = &p;
      break;
    }
  }
  if (chosen == nullptr) {
    chosen = &all.points.front();
    for (const auto& p : all.points) {
      if (p.precision > chosen->precision) chosen = &p;
    }
  }
  return {*chosen, prc_point_at(cases, chosen->threshold, stratum)};
}

// Compares two models on the same cases at a shared precision level: the
// higher of the two base-cut (tau = 0.5) precisions.
struct MatchedComparison {
  double target_precision = 0.0;
  OperatingPoint a;
  OperatingPoint b;
};

inline MatchedComparison compare_at_matched_precision(std::span<const MatchTable> a,
                                                      std::span<const MatchTable> b,
                                                      const Stratum& stratum) {
  const double pa = prc_point_at(a, kLesionCut).precision;
  const double pb = prc_point_at(b, kLesionCut).precision;
  MatchedComparison m;
  m.target_precision = std::max(pa, pb);
  m.a = operating_point(a, m.target_precision, stratum);
  m.b = operating_point(b, m.target_precision, stratum);
  return m;
}

}  // namespace lesionkit
