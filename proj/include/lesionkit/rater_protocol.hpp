#pragma once

// Multi-rater contouring comparison.
//
// Settings, for rater u against the other raters of the same case:
//   1v3      manual_u   vs consensus(manual of others)
//   1p_v3    cnn_init_u vs consensus(manual of others)
//   1p_v3p   cnn_init_u vs consensus(cnn_init of others)
// Dice values are paired per (case, rater) across settings; pooled figures
// use every (case, rater) pair.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "lesionkit/error.hpp"
#include "lesionkit/lesion_metrics.hpp"
#include "lesionkit/stats.hpp"
#include "lesionkit/volume.hpp"

namespace lesionkit {

// Per-voxel mean of the binary masks, positive when >= 0.5. With three
// raters this is a 2-of-3 majority; an exact tie (even count) is positive.
inline Mask consensus(std::span<const Mask> masks) {
  if (masks.size() < 2) throw ArgumentError("consensus needs at least 2 masks");
  for (const Mask& m : masks) require_same_geometry(masks[0], m, "consensus");
  Mask out(masks[0].dims(), masks[0].spacing(), std::uint8_t{0});
  const std::size_t r = masks.size();
  for (std::size_t j = 0; j < out.size(); ++j) {
    std::size_t votes = 0;
    for (const Mask& m : masks) votes += m[j] ? 1 : 0;
    out[j] = 2 * votes >= r ? 1 : 0;
  }
  return out;
}

struct RaterRecord {
  std::optional<Mask> manual;
  std::optional<Mask> cnn_init;
  double manual_time = 0.0;  // seconds
  double adjust_time = 0.0;  // seconds
};

struct CaseStudy {
  std::string case_id;
  std::vector<RaterRecord> raters;
};

enum class Setting { k1v3, k1pV3, k1pV3p };

inline constexpr std::array<Setting, 3> kAllSettings = {Setting::k1v3, Setting::k1pV3, Setting::k1pV3p};

inline std::string to_string(Setting s) {
  switch (s) {
    case Setting::k1v3: return "1v3";
    case Setting::k1pV3: return "1p_v3";
    case Setting::k1pV3p: return "1p_v3p";
  }
  return "1v3";
}

struct RaterDice {
  std::string case_id;
  std::size_t rater = 0;  // 0-based
  double dice = 0.0;
};

namespace detail {

inline const Mask& require_mask(const CaseStudy& c, std::size_t rater, bool cnn) {
  const auto& slot = cnn ? c.raters[rater].cnn_init : c.raters[rater].manual;
  if (!slot) {
    throw DataError("case '" + c.case_id + "' rater " + std::to_string(rater + 1) + ": missing " +
                    (cnn ? "cnn_init" : "manual") + " mask");
  }
  return *slot;
}

}  // namespace detail

// One Dice per (case, rater), ordered by case then rater.
inline std::vector<RaterDice> evaluate_setting(std::span<const CaseStudy> study, Setting setting) {
  const bool probe_cnn = setting != Setting::k1v3;
  const bool ref_cnn = setting == Setting::k1pV3p;
  std::vector<RaterDice> out;
  for (const auto& c : study) {
    const std::size_t r = c.raters.size();
    if (r < 2) throw DataError("case '" + c.case_id + "' needs at least 2 raters");
    for (std::size_t u = 0; u < r; ++u) {
      std::vector<Mask> others;
      others.reserve(r - 1);
      for (std::size_t v = 0; v < r; ++v) {
        if (v != u) others.push_back(detail::require_mask(c, v, ref_cnn));
      }
      const Mask& probe = detail::require_mask(c, u, probe_cnn);
      // A single other rater is its own reference.
      const Mask ref = others.size() == 1 ? others[0] : consensus(others);
      out.push_back({c.case_id, u, volumetric_dice(probe, ref)});
    }
  }
  return out;
}

// Exact two-sided sign test. Zero differences are dropped; with n nonzero
// differences and s positive ones, p = 2 min(P[X <= s], P[X >= s]) for
// X ~ Binomial(n, 1/2), capped at 1.
inline double sign_test(std::span<const double> diffs) {
  std::size_t n = 0, s = 0;
  for (double d : diffs) {
    if (d == 0.0) continue;
    ++n;
    if (d > 0.0) ++s;
  }
  if (n == 0) throw DegenerateInputError("sign test: no nonzero differences");
  const double nn = static_cast<double>(n);
  auto pmf = [&](std::size_t k) {
    const double kk = static_cast<double>(k);
    return std::exp(std::lgamma(nn + 1.0) - std::lgamma(kk + 1.0) - std::lgamma(nn - kk + 1.0) -
                    nn * std::log(2.0));
  };
  double lower = 0.0, upper = 0.0;
  for (std::size_t k = 0; k <= s; ++k) lower += pmf(k);
  for (std::size_t k = s; k <= n; ++k) upper += pmf(k);
  return std::min(1.0, 2.0 * std::min(lower, upper));
}

struct SettingMedians {
  std::array<double, 3> median_dice{};  // indexed like kAllSettings
  std::optional<double> p_case1;        // 1v3 vs 1p_v3
  std::optional<double> p_case2;        // 1v3 vs 1p_v3p
  std::size_t pairs = 0;
};

struct ComparisonReport {
  std::vector<SettingMedians> per_rater;
  SettingMedians pooled;
};

namespace detail {

inline SettingMedians summarize_settings(const std::array<std::vector<double>, 3>& dice) {
  SettingMedians m;
  m.pairs = dice[0].size();
  for (std::size_t s = 0; s < 3; ++s) m.median_dice[s] = stats::median(dice[s]);
  auto p_for = [&](std::size_t other) -> std::optional<double> {
    std::vector<double> diffs(dice[0].size());
    for (std::size_t i = 0; i < diffs.size(); ++i) diffs[i] = dice[other][i] - dice[0][i];
    try {
      return sign_test(diffs);
    } catch (const DegenerateInputError&) {
      return std::nullopt;
    }
  };
  m.p_case1 = p_for(1);
  m.p_case2 = p_for(2);
  return m;
}

}  // namespace detail

inline ComparisonReport compare_settings(std::span<const CaseStudy> study) {
  if (study.empty()) throw ArgumentError("compare_settings: empty study");
  std::array<std::vector<RaterDice>, 3> per_setting;
  for (std::size_t s = 0; s < 3; ++s) per_setting[s] = evaluate_setting(study, kAllSettings[s]);

  std::size_t raters = 0;
  for (const auto& c : study) raters = std::max(raters, c.raters.size());
  std::vector<std::array<std::vector<double>, 3>> by_rater(raters);
  std::array<std::vector<double>, 3> pooled;
  for (std::size_t s = 0; s < 3; ++s) {
    for (const auto& rd : per_setting[s]) {
      by_rater[rd.rater][s].push_back(rd.dice);
      pooled[s].push_back(rd.dice);
    }
  }
  ComparisonReport report;
  for (const auto& r : by_rater) report.per_rater.push_back(detail::summarize_settings(r));
  report.pooled = detail::summarize_settings(pooled);
  return report;
}

// ---------------------------------------------------------------------------
// Timing

// median(manual) / (median(manual) - median(reduction)).
inline double speedup_from_medians(double median_manual, double median_reduction) {
  const double remaining = median_manual - median_reduction;
  if (remaining <= 0.0) return std::numeric_limits<double>::infinity();
  return median_manual / remaining;
}

struct TimingStats {
  std::size_t pairs = 0;
  double median_manual = 0.0;
  double manual_min = 0.0;
  double manual_max = 0.0;
  double median_reduction = 0.0;
  double reduction_min = 0.0;
  double reduction_max = 0.0;
  double speedup = 1.0;              // ratio of medians
  double median_case_speedup = 1.0;  // median of per-pair manual / adjust
};

struct TimingSummary {
  std::vector<TimingStats> per_rater;
  TimingStats pooled;
};

inline TimingStats timing_stats(std::span<const double> manual, std::span<const double> adjust) {
  if (manual.empty() || manual.size() != adjust.size()) {
    throw ArgumentError("timing_stats: need equal-length, non-empty time lists");
  }
  std::vector<double> reduction(manual.size()), ratio(manual.size());
  for (std::size_t i = 0; i < manual.size(); ++i) {
    if (!(manual[i] > 0.0) || !(adjust[i] > 0.0)) throw DataError("delineation times must be > 0");
    reduction[i] = manual[i] - adjust[i];
    ratio[i] = manual[i] / adjust[i];
  }
  TimingStats t;
  t.pairs = manual.size();
  t.median_manual = stats::median(manual);
  std::tie(t.manual_min, t.manual_max) = stats::range(manual);
  t.median_reduction = stats::median(reduction);
  std::tie(t.reduction_min, t.reduction_max) = stats::range(reduction);
  t.speedup = speedup_from_medians(t.median_manual, t.median_reduction);
  t.median_case_speedup = stats::median(ratio);
  return t;
}

inline TimingSummary timing_summary(std::span<const CaseStudy> study) {
  if (study.empty()) throw ArgumentError("timing_summary: empty study");
  std::size_t raters = 0;
  for (const auto& c : study) raters = std::max(raters, c.raters.size());
  std::vector<std::vector<double>> manual(raters), adjust(raters);
  std::vector<double> all_manual, all_adjust;
  for (const auto& c : study) {
    for (std::size_t u = 0; u < c.raters.size(); ++u) {
      const auto& r = c.raters[u];
      if (!(r.manual_time > 0.0) || !(r.adjust_time > 0.0)) {
        throw DataError("case '" + c.case_id + "' rater " + std::to_string(u + 1) +
                        ": delineation times must be > 0");
      }
      manual[u].push_back(r.manual_time);
      adjust[u].push_back(r.adjust_time);
      all_manual.push_back(r.manual_time);
      all_adjust.push_back(r.adjust_time);
    }
  }
  TimingSummary s;
  for (std::size_t u = 0; u < raters; ++u) s.per_rater.push_back(timing_stats(manual[u], adjust[u]));
  s.pooled = timing_stats(all_manual, all_adjust);
  return s;
}

// Seconds rendered as mm:ss (rounded to the nearest second; negative values
// keep their sign).
inline std::string format_mmss(double seconds) {
  const bool negative = seconds < 0.0;
  const auto total = static_cast<long long>(std::llround(std::fabs(seconds)));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%02lld:%02lld", negative ? "-" : "", total / 60, total % 60);
  return buf;
}

}  // namespace lesionkit
