#pragma once

// Inverse-volume weight grids and the three segmentation losses (BCE,
// inversely weighted BCE, Dice) with analytic gradients with respect to the
// per-voxel probabilities.
//
// All reductions are plain sequential sums in double over the x-fastest voxel
// order, so results are reproducible bit-for-bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lesionkit/error.hpp"
#include "lesionkit/labeling.hpp"
#include "lesionkit/volume.hpp"

namespace lesionkit {

// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before logs.
inline constexpr double kProbClamp = 1e-7;
// Additive smoothing of the Dice loss.
inline constexpr double kDiceSmooth = 1.0;

struct WeightGrid {
  VoxelGrid weights;
  double beta = 0.0;
  std::vector<double> component_weights;  // w_0 .. w_K, w_0 = 1
};

// w_0 = 1 and, for i >= 1, w_i = beta * sum_{k=0..K} |C_k| / |C_i|. The sum
// includes the background component, so it is the total voxel count.
inline WeightGrid build_weight_grid(const LabelMap& labels, double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) {
    throw ArgumentError("beta must lie in (0, 1], got " + std::to_string(beta));
  }
  double total = 0.0;
  for (std::size_t s : labels.sizes) total += static_cast<double>(s);

  WeightGrid out;
  out.beta = beta;
  out.component_weights.assign(labels.sizes.size(), 1.0);
  for (std::size_t i = 1; i < labels.sizes.size(); ++i) {
    out.component_weights[i] = beta * total / static_cast<double>(labels.sizes[i]);
  }
  std::vector<float> voxels(labels.labels.size());
  for (std::size_t j = 0; j < voxels.size(); ++j) {
    voxels[j] = static_cast<float>(out.component_weights[static_cast<std::size_t>(labels.labels[j])]);
  }
  out.weights = VoxelGrid(labels.dims(), labels.spacing(), std::move(voxels));
  return out;
}

enum class LossKind { kBce, kIwBce, kDice };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::kBce: return "bce";
    case LossKind::kIwBce: return "iwbce";
    case LossKind::kDice: return "dice";
  }
  return "bce";
}

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "bce") return LossKind::kBce;
  if (s == "iwbce") return LossKind::kIwBce;
  if (s == "dice") return LossKind::kDice;
  throw ArgumentError("unknown loss kind '" + std::string(s) + "' (expected bce, iwbce or dice)");
}

struct LossReport {
  LossKind kind = LossKind::kBce;
  double value = 0.0;
  std::optional<Volume<double>> gradient;  // dLoss/dp_j
};

namespace losses {

// Span-level kernels. `grad`, when non-empty, receives dLoss/dp_j and must
// have the same length as `p`.

namespace detail {

template <typename P, typename WeightAt>
double weighted_bce(std::span<const P> p, std::span<const std::uint8_t> y, WeightAt weight_at,
                    std::span<double> grad) {
  const double inv_n = 1.0 / static_cast<double>(p.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double raw = static_cast<double>(p[j]);
    const double pc = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
    const double w = weight_at(j);
    const double term = y[j] ? std::log(pc) : std::log(1.0 - pc);
    sum += w * term;
    if (!grad.empty()) {
      const bool clamped = raw < kProbClamp || raw > 1.0 - kProbClamp;
      const double g = y[j] ? 1.0 / pc : -1.0 / (1.0 - pc);
      grad[j] = clamped ? 0.0 : w * (-inv_n * g);
    }
  }
  return -sum * inv_n;
}

inline void check_lengths(std::size_t p, std::size_t y, std::size_t grad) {
  if (p != y) throw ArgumentError("loss: probability and mask lengths differ");
  if (p == 0) throw ArgumentError("loss: empty input");
  if (grad != 0 && grad != p) throw ArgumentError("loss: gradient buffer has wrong length");
}

}  // namespace detail

template <typename P>
double bce(std::span<const P> p, std::span<const std::uint8_t> y, std::span<double> grad = {}) {
  detail::check_lengths(p.size(), y.size(), grad.size());
  return detail::weighted_bce(p, y, [](std::size_t) { return 1.0; }, grad);
}

template <typename P, typename W>
double iwbce(std::span<const P> p, std::span<const std::uint8_t> y, std::span<const W> w,
             std::span<double> grad = {}) {
  detail::check_lengths(p.size(), y.size(), grad.size());
  if (w.size() != p.size()) throw ArgumentError("iwbce: weight length differs from probabilities");
  return detail::weighted_bce(p, y, [&](std::size_t j) { return static_cast<double>(w[j]); }, grad);
}

// 1 - (2 sum p y + s) / (sum p^2 + sum y^2 + s), s = kDiceSmooth.
template <typename P>
double dice(std::span<const P> p, std::span<const std::uint8_t> y, std::span<double> grad = {}) {
  detail::check_lengths(p.size(), y.size(), grad.size());
  double inter = 0.0;
  double denom = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double pj = static_cast<double>(p[j]);
    const double yj = y[j] ? 1.0 : 0.0;
    inter += pj * yj;
    denom += pj * pj + yj;
  }
  const double num = 2.0 * inter + kDiceSmooth;
  const double den = denom + kDiceSmooth;
  if (!grad.empty()) {
    const double inv_den2 = 1.0 / (den * den);
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double pj = static_cast<double>(p[j]);
      const double yj = y[j] ? 1.0 : 0.0;
      grad[j] = -(2.0 * yj * den - num * 2.0 * pj) * inv_den2;
    }
  }
  return 1.0 - num / den;
}

}  // namespace losses

namespace detail {

template <typename P>
LossReport make_report(LossKind kind, const Volume<P>& p, bool with_gradient) {
  LossReport r;
  r.kind = kind;
  if (with_gradient) r.gradient.emplace(p.dims(), p.spacing(), 0.0);
  return r;
}

inline std::span<double> grad_span(LossReport& r) {
  return r.gradient ? r.gradient->values() : std::span<double>{};
}

}  // namespace detail

template <typename P>
LossReport bce(const Volume<P>& p, const Mask& y, bool with_gradient = true) {
  require_same_dims(p, y, "bce");
  LossReport r = detail::make_report(LossKind::kBce, p, with_gradient);
  r.value = losses::bce<P>(p.values(), y.values(), detail::grad_span(r));
  return r;
}

template <typename P>
LossReport iwbce(const Volume<P>& p, const Mask& y, const VoxelGrid& weights,
                 bool with_gradient = true) {
  require_same_dims(p, y, "iwbce");
  require_same_dims(p, weights, "iwbce weights");
  LossReport r = detail::make_report(LossKind::kIwBce, p, with_gradient);
  r.value = losses::iwbce<P, float>(p.values(), y.values(), weights.values(), detail::grad_span(r));
  return r;
}

template <typename P>
LossReport iwbce(const Volume<P>& p, const Mask& y, const WeightGrid& w, bool with_gradient = true) {
  return iwbce(p, y, w.weights, with_gradient);
}

template <typename P>
LossReport dice_loss(const Volume<P>& p, const Mask& y, bool with_gradient = true) {
  require_same_dims(p, y, "dice_loss");
  LossReport r = detail::make_report(LossKind::kDice, p, with_gradient);
  r.value = losses::dice<P>(p.values(), y.values(), detail::grad_span(r));
  return r;
}

}  // namespace lesionkit
