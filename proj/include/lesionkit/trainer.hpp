#pragma once

// A per-voxel logistic classifier over local intensity statistics, trained by
// plain SGD on sampled patches. It stands in for a segmentation network so
// the losses, the sampler and the lesion metrics can be exercised end to end.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lesionkit/error.hpp"
#include "lesionkit/imbalance.hpp"
#include "lesionkit/labeling.hpp"
#include "lesionkit/lesion_metrics.hpp"
#include "lesionkit/parallel.hpp"
#include "lesionkit/random.hpp"
#include "lesionkit/sampler.hpp"
#include "lesionkit/volume.hpp"

namespace lesionkit {

// ---------------------------------------------------------------------------
// Features

// Raw intensity, then local mean and local standard deviation for each radius
// over cubic (2r+1)^3 windows. Out-of-volume window positions take the value
// of the nearest edge voxel.
struct FeatureSpec {
  std::vector<std::size_t> radii{1, 2, 4};

  std::size_t count() const { return 1 + 2 * radii.size(); }
};

// Feature-major storage: value of feature f at voxel j is data[f * N + j].
struct FeatureVolume {
  Dims dims;
  std::size_t count = 0;
  std::vector<float> data;

  std::size_t voxels() const { return dims.size(); }
  std::span<const float> feature(std::size_t f) const {
    return std::span<const float>(data).subspan(f * voxels(), voxels());
  }
};

namespace detail {

// In-place clamped box sum of half-width r along one axis.
inline void box_sum_axis(std::vector<double>& v, const Dims& d, std::size_t axis, std::size_t r) {
  const std::size_t n = d[axis];
  const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? d.nx : d.nx * d.ny);
  const std::size_t lines = d.size() / n;
  std::vector<double> prefix(n + 2 * r + 1);
  std::vector<double> line(n);
  for (std::size_t l = 0; l < lines; ++l) {
    std::size_t base = 0;
    if (axis == 0) {
      base = l * n;
    } else if (axis == 1) {
      base = (l / d.nx) * d.nx * d.ny + (l % d.nx);
    } else {
      base = l;
    }
    // prefix over the edge-extended line of length n + 2r
    prefix[0] = 0.0;
    for (std::size_t e = 0; e < n + 2 * r; ++e) {
      const std::ptrdiff_t src = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(e) - static_cast<std::ptrdiff_t>(r), 0,
                                                            static_cast<std::ptrdiff_t>(n) - 1);
      prefix[e + 1] = prefix[e] + v[base + static_cast<std::size_t>(src) * stride];
    }
    for (std::size_t i = 0; i < n; ++i) line[i] = prefix[i + 2 * r + 1] - prefix[i];
    for (std::size_t i = 0; i < n; ++i) v[base + i * stride] = line[i];
  }
}

inline std::vector<double> box_mean(std::vector<double> v, const Dims& d, std::size_t r) {
  for (std::size_t a = 0; a < 3; ++a) box_sum_axis(v, d, a, r);
  const double inv = 1.0 / std::pow(static_cast<double>(2 * r + 1), 3.0);
  for (double& x : v) x *= inv;
  return v;
}

}  // namespace detail

inline FeatureVolume extract_features(const VoxelGrid& image, const FeatureSpec& spec = {}) {
  const Dims& d = image.dims();
  const std::size_t n = d.size();
  FeatureVolume fv{d, spec.count(), std::vector<float>(spec.count() * n)};
  std::vector<double> x(n), x2(n);
  for (std::size_t j = 0; j < n; ++j) {
    x[j] = image[j];
    x2[j] = x[j] * x[j];
    fv.data[j] = image[j];
  }
  for (std::size_t k = 0; k < spec.radii.size(); ++k) {
    const std::size_t r = spec.radii[k];
    const auto mean = detail::box_mean(x, d, r);
    const auto mean2 = detail::box_mean(x2, d, r);
    float* m = fv.data.data() + (1 + 2 * k) * n;
    float* sd = fv.data.data() + (2 + 2 * k) * n;
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = static_cast<float>(mean[j]);
      sd[j] = static_cast<float>(std::sqrt(std::max(0.0, mean2[j] - mean[j] * mean[j])));
    }
  }
  return fv;
}

inline FeatureVolume crop_features(const FeatureVolume& fv, const std::array<std::size_t, 3>& origin,
                                   const Dims& size) {
  const Dims& d = fv.dims;
  if (origin[0] + size.nx > d.nx || origin[1] + size.ny > d.ny || origin[2] + size.nz > d.nz) {
    throw ArgumentError("feature crop exceeds volume");
  }
  FeatureVolume out{size, fv.count, {}};
  out.data.reserve(fv.count * size.size());
  for (std::size_t f = 0; f < fv.count; ++f) {
    const float* src = fv.data.data() + f * d.size();
    for (std::size_t z = 0; z < size.nz; ++z) {
      for (std::size_t y = 0; y < size.ny; ++y) {
        const float* row = src + d.index(origin[0], origin[1] + y, origin[2] + z);
        out.data.insert(out.data.end(), row, row + size.nx);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model

struct VoxelModel {
  std::vector<double> weights;  // one per feature
  double bias = 0.0;
  FeatureSpec features;

  static VoxelModel zeros(const FeatureSpec& spec = {}) {
    return {std::vector<double>(spec.count(), 0.0), 0.0, spec};
  }
  std::size_t parameter_count() const { return weights.size() + 1; }
};

inline void validate(const VoxelModel& m) {
  if (m.weights.size() != m.features.count()) {
    throw ValidationError("model has " + std::to_string(m.weights.size()) + " weights for " +
                          std::to_string(m.features.count()) + " features");
  }
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline std::vector<double> logits(const VoxelModel& m, const FeatureVolume& fv) {
  validate(m);
  if (fv.count != m.weights.size()) throw ArgumentError("feature count does not match the model");
  std::vector<double> z(fv.voxels(), m.bias);
  for (std::size_t f = 0; f < fv.count; ++f) {
    const double w = m.weights[f];
    const auto col = fv.feature(f);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] += w * col[j];
  }
  return z;
}

inline std::vector<double> forward_probabilities(const VoxelModel& m, const FeatureVolume& fv) {
  std::vector<double> p = logits(m, fv);
  for (double& v : p) v = sigmoid(v);
  return p;
}

inline ProbabilityMap forward(const VoxelModel& m, const FeatureVolume& fv, const Spacing& spacing) {
  const auto p = forward_probabilities(m, fv);
  std::vector<float> out(p.begin(), p.end());
  return ProbabilityMap(fv.dims, spacing, std::move(out));
}

inline ProbabilityMap predict(const VoxelModel& m, const VoxelGrid& image) {
  return forward(m, extract_features(image, m.features), image.spacing());
}

struct LossGrad {
  double value = 0.0;
  std::vector<double> gradient;  // weights..., bias
};

// Chain rule through the sigmoid: dL/dtheta = sum_j dL/dp_j p_j (1 - p_j) f_j.
inline LossGrad loss_and_grad(const VoxelModel& m, const FeatureVolume& fv, std::span<const std::uint8_t> gt,
                              std::span<const float> weights, LossKind kind) {
  if (gt.size() != fv.voxels()) throw ArgumentError("loss_and_grad: gt size does not match features");
  if (kind == LossKind::kIwBce && weights.empty()) {
    throw ArgumentError("loss_and_grad: iwbce requested without a weight grid");
  }
  const auto p = forward_probabilities(m, fv);
  std::vector<double> dp(p.size());
  LossGrad out;
  switch (kind) {
    case LossKind::kBce: out.value = losses::bce<double>(p, gt, dp); break;
    case LossKind::kIwBce: out.value = losses::iwbce<double, float>(p, gt, weights, dp); break;
    case LossKind::kDice: out.value = losses::dice<double>(p, gt, dp); break;
  }
  for (std::size_t j = 0; j < p.size(); ++j) dp[j] *= p[j] * (1.0 - p[j]);
  out.gradient.assign(m.parameter_count(), 0.0);
  for (std::size_t f = 0; f < fv.count; ++f) {
    const auto col = fv.feature(f);
    double g = 0.0;
    for (std::size_t j = 0; j < dp.size(); ++j) g += dp[j] * col[j];
    out.gradient[f] = g;
  }
  double gb = 0.0;
  for (double v : dp) gb += v;
  out.gradient.back() = gb;
  return out;
}

inline LossGrad loss_and_grad(const VoxelModel& m, const Patch& patch, LossKind kind) {
  const FeatureVolume fv = extract_features(patch.image, m.features);
  std::span<const float> w;
  if (patch.weights) w = patch.weights->values();
  return loss_and_grad(m, fv, patch.gt.values(), w, kind);
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  LossKind loss = LossKind::kIwBce;
  std::size_t epochs = 20;
  std::size_t iterations_per_epoch = 50;
  std::size_t batch_size = 12;
  Dims patch_size{32, 32, 32};
  double lr = 0.1;
  double lr_dropped = 0.01;
  std::optional<std::size_t> lr_drop_epoch;  // default: floor(0.9 * epochs)
  double tumor_prob = 0.5;
  std::uint64_t seed = 0;

  std::size_t drop_epoch() const {
    return lr_drop_epoch.value_or(epochs * 9 / 10);
  }
  double lr_at(std::size_t epoch) const { return epoch < drop_epoch() ? lr : lr_dropped; }
};

inline void validate(const TrainConfig& c) {
  if (c.epochs == 0 || c.iterations_per_epoch == 0 || c.batch_size == 0) {
    throw ValidationError("train config counts must be positive");
  }
  if (c.patch_size.size() == 0) throw ValidationError("train patch size must be positive");
  if (c.drop_epoch() >= c.epochs) throw ValidationError("lr drop epoch must be below the epoch count");
  if (!(c.lr > 0.0 && c.lr_dropped > 0.0)) throw ValidationError("learning rates must be positive");
  if (!(c.tumor_prob >= 0.0 && c.tumor_prob <= 1.0)) throw ValidationError("tumor_prob must lie in [0, 1]");
}

// A training case: sampling data plus full-volume features. Patch features
// are cropped from the full volume so window statistics near patch borders
// see the real neighborhood.
struct TrainingCase {
  SampleCase sample;
  FeatureVolume features;
};

inline TrainingCase make_training_case(SampleCase sc, const FeatureSpec& spec = {}) {
  FeatureVolume fv = extract_features(sc.image, spec);
  return {std::move(sc), std::move(fv)};
}

// Builds the training set for a loss: beta is the positive fraction over all
// training ground truths, and weight grids are computed once per case.
inline std::vector<TrainingCase> prepare_training_cases(std::vector<SampleCase> cases, LossKind kind,
                                                        Connectivity connectivity = Connectivity::k26,
                                                        const FeatureSpec& spec = {}) {
  if (kind == LossKind::kIwBce) {
    std::vector<Mask> gts;
    gts.reserve(cases.size());
    for (const auto& c : cases) gts.push_back(c.gt);
    const double beta = positive_fraction(gts);
    if (!(beta > 0.0)) throw ArgumentError("iwbce needs a training set with positive voxels");
    for (auto& c : cases) {
      if (!c.weights) c.weights = build_weight_grid(label_components(c.gt, connectivity), beta).weights;
    }
  }
  std::vector<TrainingCase> out(cases.size());
  parallel_for(cases.size(), [&](std::size_t i) { out[i] = make_training_case(std::move(cases[i]), spec); });
  return out;
}

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
};

struct TrainResult {
  VoxelModel model;
  std::vector<EpochLog> log;
};

inline TrainResult train(std::span<const TrainingCase> cases, const TrainConfig& config,
                         const FeatureSpec& spec = {}) {
  validate(config);
  if (cases.empty()) throw ArgumentError("train: no training cases");
  TrainResult result{VoxelModel::zeros(spec), {}};
  Rng rng(config.seed);
  const PatchSpec pspec{config.patch_size, config.tumor_prob, config.seed};

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.lr_at(epoch);
    double loss_sum = 0.0;
    for (std::size_t it = 0; it < config.iterations_per_epoch; ++it) {
      std::vector<BatchEntry> batch;
      batch.reserve(config.batch_size);
      std::uniform_int_distribution<std::size_t> pick(0, cases.size() - 1);
      for (std::size_t b = 0; b < config.batch_size; ++b) {
        const std::size_t ci = pick(rng);
        batch.push_back({ci, draw_window(cases[ci].sample, pspec, rng)});
      }
      std::vector<LossGrad> parts(batch.size());
      parallel_for(batch.size(), [&](std::size_t b) {
        const TrainingCase& tc = cases[batch[b].case_index];
        const auto& origin = batch[b].window.origin;
        const FeatureVolume fv = crop_features(tc.features, origin, config.patch_size);
        const Mask gt = crop(tc.sample.gt, origin, config.patch_size);
        std::optional<VoxelGrid> w;
        if (tc.sample.weights) w = crop(*tc.sample.weights, origin, config.patch_size);
        parts[b] = loss_and_grad(result.model, fv, gt.values(),
                                 w ? w->values() : std::span<const float>{}, config.loss);
      });
      std::vector<double> grad(result.model.parameter_count(), 0.0);
      double loss = 0.0;
      for (const auto& p : parts) {
        loss += p.value;
        for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += p.gradient[k];
      }
      const double inv_b = 1.0 / static_cast<double>(parts.size());
      for (std::size_t k = 0; k + 1 < grad.size(); ++k) result.model.weights[k] -= lr * grad[k] * inv_b;
      result.model.bias -= lr * grad.back() * inv_b;
      loss_sum += loss * inv_b;
    }
    result.log.push_back({epoch, lr, loss_sum / static_cast<double>(config.iterations_per_epoch)});
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalCase {
  std::string id;
  VoxelGrid image;
  Mask gt;
};

struct EvalResult {
  std::vector<MatchTable> tables;
  LesionPRC overall;
  LesionPRC small;
  std::vector<double> lesion_dice;  // every gt lesion of every case
};

// Metric evaluation of probability maps already computed for each case.
inline EvalResult evaluate_predictions(std::span<const ProbabilityMap> probs, std::span<const Mask> gts,
                                       Connectivity connectivity, double small_cut_mm,
                                       std::span<const std::string> ids = {}) {
  if (probs.size() != gts.size() || probs.empty()) throw ArgumentError("evaluate: need one prediction per case");
  EvalResult r;
  r.tables.resize(probs.size());
  std::vector<std::vector<double>> dice(probs.size());
  parallel_for(probs.size(), [&](std::size_t i) {
    const LabelMap gt = label_components(gts[i], connectivity);
    const PredictionSet pred = extract_predicted_lesions(probs[i], connectivity);
    r.tables[i] = match_lesions(pred, gt, ids.empty() ? std::to_string(i) : ids[i]);
    for (const auto& [id, d] : lesion_dice(binarize(probs[i], kLesionCut), gt, connectivity)) dice[i].push_back(d);
  });
  for (const auto& d : dice) r.lesion_dice.insert(r.lesion_dice.end(), d.begin(), d.end());
  r.overall = lesion_prc(r.tables);
  bool any_small = false;
  for (const auto& t : r.tables) {
    for (double d : t.gt_diameters) any_small = any_small || d < small_cut_mm;
  }
  if (any_small) r.small = lesion_prc(r.tables, Stratum::below(small_cut_mm));
  return r;
}

inline EvalResult evaluate(const VoxelModel& model, std::span<const EvalCase> cases,
                           Connectivity connectivity = Connectivity::k26,
                           double small_cut_mm = kDefaultSmallCutMm) {
  std::vector<ProbabilityMap> probs(cases.size());
  std::vector<Mask> gts;
  std::vector<std::string> ids;
  for (const auto& c : cases) {
    gts.push_back(c.gt);
    ids.push_back(c.id);
  }
  parallel_for(cases.size(), [&](std::size_t i) { probs[i] = predict(model, cases[i].image); });
  return evaluate_predictions(probs, gts, connectivity, small_cut_mm, ids);
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const VoxelModel& m) {
  return {{"weights", m.weights}, {"bias", m.bias}, {"radii", m.features.radii}};
}

inline VoxelModel model_from_json(const nlohmann::json& j) {
  VoxelModel m;
  try {
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    if (j.contains("radii")) m.features.radii = j["radii"].get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model: ") + e.what());
  }
  validate(m);
  return m;
}

}  // namespace lesionkit
