#pragma once

// Training patch extraction: uniform sampling and Tumor Sampling (the patch
// center lands on a ground-truth voxel with probability tumor_prob).

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lesionkit/error.hpp"
#include "lesionkit/random.hpp"
#include "lesionkit/volume.hpp"

namespace lesionkit {

struct PatchSpec {
  Dims size{32, 32, 32};
  double tumor_prob = 0.5;
  std::uint64_t rng_seed = 0;
};

inline void validate(const PatchSpec& spec, const Dims& volume) {
  for (std::size_t a = 0; a < 3; ++a) {
    if (spec.size[a] < 1 || spec.size[a] > volume[a]) {
      throw ArgumentError("patch size " + to_string(spec.size) + " does not fit volume " +
                          to_string(volume));
    }
  }
  if (!(spec.tumor_prob >= 0.0 && spec.tumor_prob <= 1.0)) {
    throw ArgumentError("tumor_prob must lie in [0, 1]");
  }
}

// A case prepared for repeated sampling; `positives` caches the linear indices
// of ground-truth voxels.
struct SampleCase {
  std::string id;
  VoxelGrid image;
  Mask gt;
  std::optional<VoxelGrid> weights;
  std::vector<std::size_t> positives;
};

inline SampleCase make_sample_case(std::string id, VoxelGrid image, Mask gt,
                                   std::optional<VoxelGrid> weights = std::nullopt) {
  require_same_dims(image, gt, "sample case");
  if (weights) require_same_dims(image, *weights, "sample case weights");
  SampleCase c{std::move(id), std::move(image), std::move(gt), std::move(weights), {}};
  for (std::size_t i = 0; i < c.gt.size(); ++i) {
    if (c.gt[i]) c.positives.push_back(i);
  }
  return c;
}

// Where a patch sits, and how its center was chosen.
struct PatchWindow {
  std::array<std::size_t, 3> origin{};
  std::array<std::size_t, 3> center{};  // drawn center, before shifting
  bool tumor_draw = false;               // center drawn from the gt voxels
  bool center_positive = false;          // gt at the drawn center
  bool shifted_center_positive = false;  // gt at origin + size/2
};

struct Patch {
  std::size_t case_index = 0;
  PatchWindow window;
  VoxelGrid image;
  Mask gt;
  std::optional<VoxelGrid> weights;
};

// Window of `size` centered on `center`, shifted minimally to fit in `dims`.
inline std::array<std::size_t, 3> fit_window(const std::array<std::size_t, 3>& center,
                                             const Dims& size, const Dims& dims) {
  std::array<std::size_t, 3> origin{};
  for (std::size_t a = 0; a < 3; ++a) {
    const std::size_t half = size[a] / 2;
    const std::size_t start = center[a] > half ? center[a] - half : 0;
    origin[a] = std::min(start, dims[a] - size[a]);
  }
  return origin;
}

inline PatchWindow draw_window(const SampleCase& c, const PatchSpec& spec, Rng& rng) {
  const Dims& dims = c.gt.dims();
  validate(spec, dims);
  PatchWindow w;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const bool want_tumor = spec.tumor_prob > 0.0 && coin(rng) < spec.tumor_prob;
  std::size_t linear = 0;
  if (want_tumor && !c.positives.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, c.positives.size() - 1);
    linear = c.positives[pick(rng)];
    w.tumor_draw = true;
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, c.gt.size() - 1);
    linear = pick(rng);
  }
  w.center = dims.coords(linear);
  w.center_positive = c.gt[linear] != 0;
  w.origin = fit_window(w.center, spec.size, dims);
  w.shifted_center_positive = c.gt.at(w.origin[0] + spec.size.nx / 2, w.origin[1] + spec.size.ny / 2,
                                      w.origin[2] + spec.size.nz / 2) != 0;
  return w;
}

inline Patch extract_patch(const SampleCase& c, const PatchWindow& w, const Dims& size,
                           std::size_t case_index = 0) {
  Patch p{case_index, w, crop(c.image, w.origin, size), crop(c.gt, w.origin, size), std::nullopt};
  if (c.weights) p.weights = crop(*c.weights, w.origin, size);
  return p;
}

inline Patch sample_patch(const SampleCase& c, const PatchSpec& spec, Rng& rng) {
  return extract_patch(c, draw_window(c, spec, rng), spec.size);
}

// Convenience form over bare grids. Weight grids are cropped from the
// full-volume grid, never recomputed for the patch.
inline Patch sample_patch(const VoxelGrid& image, const Mask& gt, const VoxelGrid* weights,
                          const PatchSpec& spec, Rng& rng) {
  SampleCase c = make_sample_case("", image, gt,
                                  weights ? std::optional<VoxelGrid>(*weights) : std::nullopt);
  return sample_patch(c, spec, rng);
}

struct BatchEntry {
  std::size_t case_index = 0;
  PatchWindow window;
};

// Case per patch drawn uniformly with replacement.
inline std::vector<BatchEntry> draw_batch(std::span<const SampleCase> cases, const PatchSpec& spec,
                                          std::size_t batch_size, Rng& rng) {
  if (cases.empty()) throw ArgumentError("sample_batch: empty manifest");
  std::vector<BatchEntry> out;
  out.reserve(batch_size);
  std::uniform_int_distribution<std::size_t> pick(0, cases.size() - 1);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::size_t ci = pick(rng);
    out.push_back({ci, draw_window(cases[ci], spec, rng)});
  }
  return out;
}

inline std::vector<Patch> sample_batch(std::span<const SampleCase> cases, const PatchSpec& spec,
                                       std::size_t batch_size, Rng& rng) {
  std::vector<Patch> out;
  out.reserve(batch_size);
  for (const auto& e : draw_batch(cases, spec, batch_size, rng)) {
    out.push_back(extract_patch(cases[e.case_index], e.window, spec.size, e.case_index));
  }
  return out;
}

// Loads every case of a manifest. `weights_for` maps a loaded gt mask to its
// weight grid (or nullopt when weights are not needed).
template <typename WeightFn>
std::vector<SampleCase> load_sample_cases(const DatasetManifest& manifest, WeightFn weights_for) {
  std::vector<SampleCase> out;
  out.reserve(manifest.cases.size());
  for (const auto& mc : manifest.cases) {
    VoxelGrid image = read_grid(mc.image);
    Mask gt = read_mask(mc.gt);
    std::optional<VoxelGrid> w = weights_for(gt);
    out.push_back(make_sample_case(mc.id, std::move(image), std::move(gt), std::move(w)));
  }
  return out;
}

}  // namespace lesionkit
