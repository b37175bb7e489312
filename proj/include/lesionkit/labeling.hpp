#pragma once

// Connected-component labeling of binary masks and probability thresholding.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <vector>

#include "lesionkit/error.hpp"
#include "lesionkit/volume.hpp"

namespace lesionkit {

enum class Connectivity : int { k6 = 6, k26 = 26 };

inline Connectivity parse_connectivity(int n) {
  if (n == 6) return Connectivity::k6;
  if (n == 26) return Connectivity::k26;
  throw ArgumentError("connectivity must be 6 or 26, got " + std::to_string(n));
}

// Label 0 is the background component; 1..K are the positive components in
// the order their first voxel is met by an x-fastest scan.
struct LabelMap {
  Volume<std::int32_t> labels;
  std::vector<std::size_t> sizes;  // sizes[i] = |C_i|, i = 0..K
  Connectivity connectivity = Connectivity::k26;

  std::size_t component_count() const { return sizes.empty() ? 0 : sizes.size() - 1; }
  const Dims& dims() const { return labels.dims(); }
  const Spacing& spacing() const { return labels.spacing(); }
};

namespace detail {

inline std::vector<std::array<int, 3>> neighbor_offsets(Connectivity c) {
  std::vector<std::array<int, 3>> out;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (manhattan == 0) continue;
        if (c == Connectivity::k6 && manhattan != 1) continue;
        out.push_back({dx, dy, dz});
      }
    }
  }
  return out;
}

}  // namespace detail

template <typename T>
LabelMap label_components(const Volume<T>& mask, Connectivity connectivity = Connectivity::k26) {
  const Dims& d = mask.dims();
  LabelMap out{Volume<std::int32_t>(d, mask.spacing(), 0), {0}, connectivity};
  const auto offsets = detail::neighbor_offsets(connectivity);
  std::vector<std::size_t> stack;
  std::int32_t next = 0;

  for (std::size_t seed = 0; seed < mask.size(); ++seed) {
    if (mask[seed] == T(0) || out.labels[seed] != 0) continue;
    const std::int32_t label = ++next;
    std::size_t size = 0;
    out.labels[seed] = label;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      ++size;
      const auto [x, y, z] = d.coords(cur);
      for (const auto& o : offsets) {
        const auto nx = static_cast<std::ptrdiff_t>(x) + o[0];
        const auto ny = static_cast<std::ptrdiff_t>(y) + o[1];
        const auto nz = static_cast<std::ptrdiff_t>(z) + o[2];
        if (nx < 0 || ny < 0 || nz < 0 || nx >= static_cast<std::ptrdiff_t>(d.nx) ||
            ny >= static_cast<std::ptrdiff_t>(d.ny) || nz >= static_cast<std::ptrdiff_t>(d.nz)) {
          continue;
        }
        const std::size_t ni = d.index(nx, ny, nz);
        if (mask[ni] != T(0) && out.labels[ni] == 0) {
          out.labels[ni] = label;
          stack.push_back(ni);
        }
      }
    }
    out.sizes.push_back(size);
  }

  std::size_t positives = 0;
  for (std::size_t i = 1; i < out.sizes.size(); ++i) positives += out.sizes[i];
  out.sizes[0] = mask.size() - positives;
  return out;
}

// Positive iff probability > threshold. Strict, so a voxel at exactly 0.5 is
// background under the default cut.
template <typename T>
Mask binarize(const Volume<T>& prob, double threshold = 0.5) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ArgumentError("binarize threshold must lie in [0, 1]");
  }
  Mask out(prob.dims(), prob.spacing(), std::uint8_t{0});
  for (std::size_t i = 0; i < prob.size(); ++i) {
    out[i] = static_cast<double>(prob[i]) > threshold ? 1 : 0;
  }
  return out;
}

// Sphere-equivalent diameter (mm) of each component, index i -> C_i.
inline std::vector<double> equivalent_diameters(const LabelMap& lm) {
  constexpr double kPi = 3.14159265358979323846;
  std::vector<double> out(lm.sizes.size(), 0.0);
  const double voxel = lm.spacing().voxel_volume();
  for (std::size_t i = 1; i < lm.sizes.size(); ++i) {
    out[i] = std::cbrt(6.0 * static_cast<double>(lm.sizes[i]) * voxel / kPi);
  }
  return out;
}

}  // namespace lesionkit
