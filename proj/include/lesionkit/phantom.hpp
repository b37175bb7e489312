#pragma once

// Synthetic multi-lesion phantoms: ground truths, noisy images, simulated
// raters and simulated probability-map predictors.
//
// Lesions are axis-aligned ellipsoids. A voxel belongs to a lesion when its
// physical offset v from the lesion center satisfies sum (v_k / a_k)^2 <= 1
// (a_k the semi-axes); the center voxel is always set, so even sub-voxel
// lesions occupy one voxel. Lesions are placed with at least one voxel of
// clearance (26-neighborhood), which makes every lesion its own connected
// component.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lesionkit/error.hpp"
#include "lesionkit/random.hpp"
#include "lesionkit/volume.hpp"

namespace lesionkit {

struct PhantomParams {
  Dims dims{96, 96, 96};
  Spacing spacing{0.94, 0.94, 1.0};
  double lesion_count_mean = 4.5;  // Poisson mean
  std::size_t min_lesions = 1;
  std::size_t max_lesions = 0;  // 0 = no cap
  double diameter_min_mm = 1.3;
  double diameter_max_mm = 42.0;  // drawn log-uniformly
  double axis_ratio_min = 0.7;
  double axis_ratio_max = 1.3;
  double background = 0.0;
  double contrast = 1.0;
  double noise_sigma = 0.25;
  std::uint64_t seed = 0;
};

inline void validate(const PhantomParams& p) {
  if (p.dims.size() == 0) throw ValidationError("phantom dims must be positive");
  if (!(p.spacing.sx > 0 && p.spacing.sy > 0 && p.spacing.sz > 0)) {
    throw ValidationError("phantom spacing must be positive");
  }
  if (!(p.lesion_count_mean > 0.0)) throw ValidationError("phantom lesion_count_mean must be > 0");
  if (p.max_lesions != 0 && p.max_lesions < p.min_lesions) {
    throw ValidationError("phantom max_lesions below min_lesions");
  }
  if (!(p.diameter_min_mm > 0.0 && p.diameter_min_mm <= p.diameter_max_mm)) {
    throw ValidationError("phantom diameter range must satisfy 0 < min <= max");
  }
  if (!(p.axis_ratio_min > 0.0 && p.axis_ratio_min <= p.axis_ratio_max)) {
    throw ValidationError("phantom axis ratio range must satisfy 0 < min <= max");
  }
  const double extent = std::min({p.dims.nx * p.spacing.sx, p.dims.ny * p.spacing.sy, p.dims.nz * p.spacing.sz});
  if (p.diameter_max_mm * p.axis_ratio_max > extent) {
    throw ValidationError("phantom max lesion diameter exceeds the grid's physical extent");
  }
  if (!(p.noise_sigma >= 0.0)) throw ValidationError("phantom noise_sigma must be >= 0");
}

struct LesionRecord {
  std::array<std::size_t, 3> center{};
  double diameter_mm = 0.0;
  std::array<double, 3> semi_axes_mm{};
  std::size_t voxels = 0;
};

struct PhantomCase {
  VoxelGrid image;
  Mask gt;
  std::vector<LesionRecord> catalog;
};

namespace detail {

inline double ellipsoid_q(const std::array<double, 3>& v, const std::array<double, 3>& axes) {
  double q = 0.0;
  for (std::size_t k = 0; k < 3; ++k) q += (v[k] / axes[k]) * (v[k] / axes[k]);
  return q;
}

// Visits every voxel of the box of half-width `reach_mm` around `center`,
// clipped to the grid, passing its linear index and physical offset.
template <typename Fn>
void for_each_near(const Dims& d, const Spacing& s, const std::array<std::size_t, 3>& center,
                   double reach_mm, Fn&& fn) {
  std::array<std::size_t, 3> lo{}, hi{};
  for (std::size_t k = 0; k < 3; ++k) {
    const auto half = static_cast<std::size_t>(std::ceil(reach_mm / s[k]));
    lo[k] = center[k] > half ? center[k] - half : 0;
    hi[k] = std::min(d[k] - 1, center[k] + half);
  }
  for (std::size_t z = lo[2]; z <= hi[2]; ++z) {
    for (std::size_t y = lo[1]; y <= hi[1]; ++y) {
      for (std::size_t x = lo[0]; x <= hi[0]; ++x) {
        const std::array<double, 3> v{(static_cast<double>(x) - static_cast<double>(center[0])) * s.sx,
                                      (static_cast<double>(y) - static_cast<double>(center[1])) * s.sy,
                                      (static_cast<double>(z) - static_cast<double>(center[2])) * s.sz};
        fn(d.index(x, y, z), v);
      }
    }
  }
}

inline std::vector<std::size_t> lesion_voxels(const Dims& d, const Spacing& s, const LesionRecord& l) {
  std::vector<std::size_t> out;
  const double reach = std::max({l.semi_axes_mm[0], l.semi_axes_mm[1], l.semi_axes_mm[2]});
  const std::size_t center = d.index(l.center[0], l.center[1], l.center[2]);
  for_each_near(d, s, l.center, reach, [&](std::size_t i, const std::array<double, 3>& v) {
    if (i == center || ellipsoid_q(v, l.semi_axes_mm) <= 1.0) out.push_back(i);
  });
  return out;
}

inline double log_uniform(Rng& rng, double lo, double hi) {
  if (lo == hi) return lo;
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

}  // namespace detail

inline PhantomCase gen_case(const PhantomParams& params, Rng& rng) {
  validate(params);
  const Dims& d = params.dims;
  const Spacing& s = params.spacing;

  std::poisson_distribution<std::size_t> count_dist(params.lesion_count_mean);
  std::size_t count = std::max(params.min_lesions, count_dist(rng));
  if (params.max_lesions != 0) count = std::min(count, params.max_lesions);

  PhantomCase out{VoxelGrid(d, s, 0.0f), Mask(d, s, std::uint8_t{0}), {}};
  Mask blocked(d, s, std::uint8_t{0});  // lesion voxels dilated by one voxel

  // Largest lesions are placed first; they are the hardest to fit.
  std::vector<double> diameters(count);
  for (double& dm : diameters) dm = detail::log_uniform(rng, params.diameter_min_mm, params.diameter_max_mm);
  std::sort(diameters.begin(), diameters.end(), std::greater<>());

  std::uniform_real_distribution<double> ratio(params.axis_ratio_min, params.axis_ratio_max);
  for (std::size_t n = 0; n < count; ++n) {
    LesionRecord les;
    les.diameter_mm = diameters[n];
    for (std::size_t k = 0; k < 3; ++k) les.semi_axes_mm[k] = 0.5 * les.diameter_mm * ratio(rng);

    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      for (std::size_t k = 0; k < 3; ++k) {
        const auto margin = static_cast<std::size_t>(std::ceil(les.semi_axes_mm[k] / s[k])) + 1;
        if (2 * margin >= d[k]) throw GenerationError("lesion does not fit the phantom grid");
        std::uniform_int_distribution<std::size_t> pos(margin, d[k] - 1 - margin);
        les.center[k] = pos(rng);
      }
      const auto voxels = detail::lesion_voxels(d, s, les);
      if (std::any_of(voxels.begin(), voxels.end(), [&](std::size_t i) { return blocked[i] != 0; })) {
        continue;
      }
      for (std::size_t i : voxels) {
        out.gt[i] = 1;
        const auto [x, y, z] = d.coords(i);
        for (std::size_t zz = z > 0 ? z - 1 : 0; zz <= std::min(d.nz - 1, z + 1); ++zz) {
          for (std::size_t yy = y > 0 ? y - 1 : 0; yy <= std::min(d.ny - 1, y + 1); ++yy) {
            for (std::size_t xx = x > 0 ? x - 1 : 0; xx <= std::min(d.nx - 1, x + 1); ++xx) {
              blocked[d.index(xx, yy, zz)] = 1;
            }
          }
        }
      }
      les.voxels = voxels.size();
      placed = true;
    }
    if (!placed) {
      throw GenerationError("could not place lesion " + std::to_string(n + 1) + " of " +
                            std::to_string(count) + " after 1000 attempts");
    }
    out.catalog.push_back(les);
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t j = 0; j < out.image.size(); ++j) {
    double v = params.background + params.contrast * out.gt[j];
    if (params.noise_sigma > 0.0) v += params.noise_sigma * noise(rng);
    out.image[j] = static_cast<float>(v);
  }
  return out;
}

inline PhantomCase gen_case(const PhantomParams& params) {
  Rng rng(params.seed);
  return gen_case(params, rng);
}

// ---------------------------------------------------------------------------
// Boundary perturbation

// Smooth random radial field on the unit sphere with unit mean-square value:
// (g0 + sqrt(3) g . u) / sqrt(2), g ~ N(0, I4).
struct RadialField {
  std::array<double, 4> g{};

  double operator()(const std::array<double, 3>& u) const {
    return (g[0] + std::sqrt(3.0) * (g[1] * u[0] + g[2] * u[1] + g[3] * u[2])) / std::sqrt(2.0);
  }
  double bound() const {
    return (std::fabs(g[0]) + std::sqrt(3.0) * std::sqrt(g[1] * g[1] + g[2] * g[2] + g[3] * g[3])) /
           std::sqrt(2.0);
  }
  static RadialField draw(Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    RadialField f;
    for (double& x : f.g) x = n(rng);
    return f;
  }
};

namespace detail {

// Renders the lesion with its boundary radius along direction u moved by
// offset_mm(u) into `out`. A zero offset reproduces the ground-truth
// rasterization exactly.
template <typename OffsetFn>
void render_perturbed(Mask& out, const LesionRecord& l, OffsetFn&& offset_mm, double max_offset_mm) {
  const Dims& d = out.dims();
  const Spacing& s = out.spacing();
  const double reach = std::max({l.semi_axes_mm[0], l.semi_axes_mm[1], l.semi_axes_mm[2]}) +
                       std::max(0.0, max_offset_mm);
  const std::size_t center = d.index(l.center[0], l.center[1], l.center[2]);
  for_each_near(d, s, l.center, reach, [&](std::size_t i, const std::array<double, 3>& v) {
    if (i == center) {
      out[i] = 1;
      return;
    }
    const double q = ellipsoid_q(v, l.semi_axes_mm);
    const double r = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    const std::array<double, 3> u{v[0] / r, v[1] / r, v[2] / r};
    const double base = r / std::sqrt(q);  // boundary radius along u
    const double moved = base + offset_mm(u);
    const double scale = moved / base;
    if (moved > 0.0 && q <= scale * scale) out[i] = 1;
  });
}

}  // namespace detail

struct RaterModel {
  double jitter_sigma_mm = 1.0;
  double bias_mm = 0.0;  // > 0 dilates, < 0 erodes
  double miss_prob = 0.0;
  double miss_below_mm = 0.0;  // only lesions smaller than this can be missed
  std::uint64_t seed = 0;
};

inline void validate(const RaterModel& m) {
  if (!(m.jitter_sigma_mm >= 0.0)) throw ValidationError("rater jitter sigma must be >= 0");
  if (!(m.miss_prob >= 0.0 && m.miss_prob <= 1.0)) throw ValidationError("rater miss probability must lie in [0, 1]");
}

inline Mask simulate_rater(const Mask& gt, std::span<const LesionRecord> catalog, const RaterModel& model,
                           Rng& rng) {
  validate(model);
  Mask out(gt.dims(), gt.spacing(), std::uint8_t{0});
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (const auto& les : catalog) {
    const double coin = u01(rng);
    const RadialField field = RadialField::draw(rng);
    if (les.diameter_mm < model.miss_below_mm && coin < model.miss_prob) continue;
    const double sigma = model.jitter_sigma_mm;
    const double bias = model.bias_mm;
    detail::render_perturbed(
        out, les, [&](const std::array<double, 3>& u) { return bias + sigma * field(u); },
        std::fabs(bias) + sigma * field.bound() + 1.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulated predictor

struct PredictorModel {
  // Detection probability: ceiling / (1 + exp(-slope (d - midpoint))).
  double detect_midpoint_mm = 5.0;
  double detect_slope_per_mm = 1.0;
  double detect_ceiling = 1.0;
  double blur_sigma_mm = 1.0;
  double background_prob = 0.05;
  double certainty_mean = 0.85;
  double certainty_noise = 0.08;
  double fp_rate = 1.0;  // Poisson mean of false positives per volume
  double fp_diameter_min_mm = 1.3;
  double fp_diameter_max_mm = 6.0;
  double fp_certainty_mean = 0.65;
  std::uint64_t seed = 0;
};

inline void validate(const PredictorModel& m) {
  if (!(m.detect_slope_per_mm >= 0.0)) {
    throw ValidationError("predictor detection slope must be >= 0 (non-decreasing in diameter)");
  }
  if (!(m.detect_ceiling >= 0.0 && m.detect_ceiling <= 1.0)) {
    throw ValidationError("predictor detection ceiling must lie in [0, 1]");
  }
  if (!(m.background_prob >= 0.0 && m.background_prob < 0.5)) {
    throw ValidationError("predictor background probability must lie in [0, 0.5)");
  }
  if (!(m.blur_sigma_mm >= 0.0 && m.certainty_noise >= 0.0 && m.fp_rate >= 0.0)) {
    throw ValidationError("predictor blur, certainty noise and fp rate must be >= 0");
  }
  if (!(m.fp_diameter_min_mm > 0.0 && m.fp_diameter_min_mm <= m.fp_diameter_max_mm)) {
    throw ValidationError("predictor fp diameter range must satisfy 0 < min <= max");
  }
}

inline double detection_probability(const PredictorModel& m, double diameter_mm) {
  return m.detect_ceiling / (1.0 + std::exp(-m.detect_slope_per_mm * (diameter_mm - m.detect_midpoint_mm)));
}

namespace detail {

inline double draw_certainty(Rng& rng, double mean, double noise) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double c = mean + noise * n(rng);
  return std::clamp(c, 0.501, 1.0);
}

// Blob at `certainty` inside the ellipsoid, decaying as a Gaussian of the
// distance outside it. Keeps the per-voxel maximum.
inline void render_blob(VoxelGrid& out, const LesionRecord& l, double certainty, double blur_mm,
                        double background) {
  const Dims& d = out.dims();
  const Spacing& s = out.spacing();
  const double reach = std::max({l.semi_axes_mm[0], l.semi_axes_mm[1], l.semi_axes_mm[2]}) + 4.0 * blur_mm;
  const std::size_t center = d.index(l.center[0], l.center[1], l.center[2]);
  for_each_near(d, s, l.center, reach, [&](std::size_t i, const std::array<double, 3>& v) {
    const double q = ellipsoid_q(v, l.semi_axes_mm);
    double value = background;
    if (i == center || q <= 1.0) {
      value = certainty;
    } else if (blur_mm > 0.0) {
      const double r = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
      const double outside = r * (1.0 - 1.0 / std::sqrt(q));
      value = background + (certainty - background) * std::exp(-outside * outside / (2.0 * blur_mm * blur_mm));
    }
    out[i] = std::max(out[i], static_cast<float>(value));
  });
}

}  // namespace detail

inline ProbabilityMap simulate_predictor(const Mask& gt, std::span<const LesionRecord> catalog,
                                         const PredictorModel& model, Rng& rng) {
  validate(model);
  ProbabilityMap out(gt.dims(), gt.spacing(), static_cast<float>(model.background_prob));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (const auto& les : catalog) {
    const double coin = u01(rng);
    const double certainty = detail::draw_certainty(rng, model.certainty_mean, model.certainty_noise);
    if (coin >= detection_probability(model, les.diameter_mm)) continue;
    detail::render_blob(out, les, certainty, model.blur_sigma_mm, model.background_prob);
  }
  std::poisson_distribution<std::size_t> fp_count(model.fp_rate > 0.0 ? model.fp_rate : 1.0);
  const std::size_t fps = model.fp_rate > 0.0 ? fp_count(rng) : 0;
  const Dims& d = gt.dims();
  for (std::size_t f = 0; f < fps; ++f) {
    LesionRecord fp;
    fp.diameter_mm = detail::log_uniform(rng, model.fp_diameter_min_mm, model.fp_diameter_max_mm);
    fp.semi_axes_mm = {0.5 * fp.diameter_mm, 0.5 * fp.diameter_mm, 0.5 * fp.diameter_mm};
    for (std::size_t k = 0; k < 3; ++k) {
      std::uniform_int_distribution<std::size_t> pos(0, d[k] - 1);
      fp.center[k] = pos(rng);
    }
    const double certainty = detail::draw_certainty(rng, model.fp_certainty_mean, model.certainty_noise);
    detail::render_blob(out, fp, certainty, model.blur_sigma_mm, model.background_prob);
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const std::vector<LesionRecord>& catalog) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& l : catalog) {
    arr.push_back({{"center", l.center},
                   {"diameter_mm", l.diameter_mm},
                   {"semi_axes_mm", l.semi_axes_mm},
                   {"voxels", l.voxels}});
  }
  return arr;
}

inline std::vector<LesionRecord> catalog_from_json(const nlohmann::json& j) {
  std::vector<LesionRecord> out;
  try {
    for (const auto& e : j) {
      LesionRecord l;
      l.center = e.at("center").get<std::array<std::size_t, 3>>();
      l.diameter_mm = e.at("diameter_mm").get<double>();
      l.semi_axes_mm = e.at("semi_axes_mm").get<std::array<double, 3>>();
      l.voxels = e.value("voxels", std::size_t{0});
      out.push_back(l);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed lesion catalog: ") + e.what());
  }
  return out;
}

}  // namespace lesionkit
