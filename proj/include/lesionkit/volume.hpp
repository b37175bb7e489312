#pragma once

// Volumetric containers shared by every module, the RVOL file format and
// dataset manifests.
//
// RVOL layout (little-endian):
//   offset  size  field
//        0     6  magic "RVOL1\0"
//        6     1  dtype (0 = mask byte, 1 = float32)
//        7    12  dims nx, ny, nz as u32
//       19    24  spacing sx, sy, sz as f64 (mm)
//       43     -  payload, x-fastest (x, then y, then z)

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <unordered_set>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "lesionkit/error.hpp"

namespace lesionkit {

struct Dims {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nz = 0;

  constexpr std::size_t size() const { return nx * ny * nz; }
  constexpr std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return x + nx * (y + ny * z);
  }
  constexpr std::array<std::size_t, 3> coords(std::size_t i) const {
    return {i % nx, (i / nx) % ny, i / (nx * ny)};
  }
  constexpr std::size_t operator[](std::size_t axis) const {
    return axis == 0 ? nx : (axis == 1 ? ny : nz);
  }
  friend constexpr bool operator==(const Dims&, const Dims&) = default;
};

struct Spacing {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;

  constexpr double voxel_volume() const { return sx * sy * sz; }
  constexpr double operator[](std::size_t axis) const {
    return axis == 0 ? sx : (axis == 1 ? sy : sz);
  }
  friend constexpr bool operator==(const Spacing&, const Spacing&) = default;
};

inline std::string to_string(const Dims& d) {
  std::ostringstream os;
  os << d.nx << "x" << d.ny << "x" << d.nz;
  return os.str();
}

// Dense 3D field with physical spacing. Immutable in spirit: modules build a
// new volume rather than editing a shared one.
template <typename T>
class Volume {
 public:
  using value_type = T;

  Volume() = default;

  Volume(Dims dims, Spacing spacing, T fill = T{})
      : dims_(dims), spacing_(spacing), values_(dims.size(), fill) {
    check_geometry();
  }

  Volume(Dims dims, Spacing spacing, std::vector<T> values)
      : dims_(dims), spacing_(spacing), values_(std::move(values)) {
    check_geometry();
    if (values_.size() != dims_.size()) {
      throw ValidationError("volume payload has " + std::to_string(values_.size()) +
                            " values, dims " + to_string(dims_) + " need " +
                            std::to_string(dims_.size()));
    }
  }

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::size_t size() const { return values_.size(); }

  std::span<const T> values() const { return values_; }
  std::span<T> values() { return values_; }

  const T& operator[](std::size_t i) const { return values_[i]; }
  T& operator[](std::size_t i) { return values_[i]; }

  const T& at(std::size_t x, std::size_t y, std::size_t z) const {
    return values_[dims_.index(x, y, z)];
  }
  T& at(std::size_t x, std::size_t y, std::size_t z) { return values_[dims_.index(x, y, z)]; }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  void check_geometry() const {
    if (dims_.nx == 0 || dims_.ny == 0 || dims_.nz == 0) {
      throw ValidationError("volume dims must be positive, got " + to_string(dims_));
    }
    if (!(spacing_.sx > 0.0 && spacing_.sy > 0.0 && spacing_.sz > 0.0)) {
      throw ValidationError("volume spacing must be positive");
    }
  }

  Dims dims_;
  Spacing spacing_;
  std::vector<T> values_;
};

using VoxelGrid = Volume<float>;
using Mask = Volume<std::uint8_t>;
// A VoxelGrid whose values all lie in [0, 1]; see validate_probability().
using ProbabilityMap = VoxelGrid;

template <typename A, typename B>
bool same_geometry(const Volume<A>& a, const Volume<B>& b) {
  return a.dims() == b.dims() && a.spacing() == b.spacing();
}

template <typename A, typename B>
void require_same_dims(const Volume<A>& a, const Volume<B>& b, std::string_view what) {
  if (a.dims() != b.dims()) {
    throw ArgumentError(std::string(what) + ": dims mismatch " + to_string(a.dims()) + " vs " +
                        to_string(b.dims()));
  }
}

template <typename A, typename B>
void require_same_geometry(const Volume<A>& a, const Volume<B>& b, std::string_view what) {
  require_same_dims(a, b, what);
  if (a.spacing() != b.spacing()) {
    throw ArgumentError(std::string(what) + ": spacing mismatch");
  }
}

inline void validate_mask(const Mask& m) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] > 1) {
      throw ValidationError("mask value " + std::to_string(int{m[i]}) + " at voxel " +
                            std::to_string(i) + " is not 0 or 1");
    }
  }
}

template <typename T>
void validate_probability(const Volume<T>& p) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= T(0) && p[i] <= T(1))) {
      throw ValidationError("probability at voxel " + std::to_string(i) + " outside [0, 1]");
    }
  }
}

template <typename T>
std::size_t count_positive(const Volume<T>& m) {
  return static_cast<std::size_t>(
      std::count_if(m.values().begin(), m.values().end(), [](T v) { return v != T(0); }));
}

// Copy of the box [origin, origin + size) of `src`.
template <typename T>
Volume<T> crop(const Volume<T>& src, std::array<std::size_t, 3> origin, Dims size) {
  const Dims& d = src.dims();
  if (origin[0] + size.nx > d.nx || origin[1] + size.ny > d.ny || origin[2] + size.nz > d.nz) {
    throw ArgumentError("crop window exceeds volume " + to_string(d));
  }
  std::vector<T> out;
  out.reserve(size.size());
  for (std::size_t z = 0; z < size.nz; ++z) {
    for (std::size_t y = 0; y < size.ny; ++y) {
      const T* row = &src.at(origin[0], origin[1] + y, origin[2] + z);
      out.insert(out.end(), row, row + size.nx);
    }
  }
  return Volume<T>(size, src.spacing(), std::move(out));
}

// Fraction of positive voxels over a whole set of masks (the beta of the
// inverse-volume weights).
inline double positive_fraction(std::span<const Mask> masks) {
  if (masks.empty()) {
    throw ArgumentError("positive_fraction needs at least one mask");
  }
  std::size_t positives = 0;
  std::size_t total = 0;
  for (const Mask& m : masks) {
    validate_mask(m);
    positives += count_positive(m);
    total += m.size();
  }
  return static_cast<double>(positives) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// RVOL I/O

enum class VolumeDtype : std::uint8_t { kMask = 0, kFloat32 = 1 };

namespace rvol {

inline constexpr std::array<char, 6> kMagic = {'R', 'V', 'O', 'L', '1', '\0'};
inline constexpr std::size_t kHeaderSize = 6 + 1 + 3 * 4 + 3 * 8;

template <typename U>
void put_le(std::string& out, U value) {
  static_assert(std::is_trivially_copyable_v<U>);
  std::array<char, sizeof(U)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  out.append(bytes.data(), bytes.size());
}

template <typename U>
U get_le(const char* p) {
  std::array<char, sizeof(U)> bytes;
  std::memcpy(bytes.data(), p, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  U value;
  std::memcpy(&value, bytes.data(), sizeof(U));
  return value;
}

template <typename T>
std::string encode(const Volume<T>& v) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, std::uint8_t>);
  std::string out;
  constexpr std::size_t item = sizeof(T);
  out.reserve(kHeaderSize + v.size() * item);
  out.append(kMagic.data(), kMagic.size());
  out.push_back(static_cast<char>(std::is_same_v<T, float> ? VolumeDtype::kFloat32 : VolumeDtype::kMask));
  for (std::size_t a = 0; a < 3; ++a) {
    const std::size_t n = v.dims()[a];
    if (n > UINT32_MAX) throw ValidationError("volume dim exceeds u32");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(n));
  }
  for (std::size_t a = 0; a < 3; ++a) put_le<double>(out, v.spacing()[a]);
  if constexpr (std::is_same_v<T, std::uint8_t>) {
    out.append(reinterpret_cast<const char*>(v.values().data()), v.size());
  } else {
    for (float f : v.values()) put_le<float>(out, f);
  }
  return out;
}

}  // namespace rvol

using AnyVolume = std::variant<VoxelGrid, Mask>;

inline AnyVolume decode_volume(std::string_view bytes) {
  using namespace rvol;
  if (bytes.size() < kHeaderSize || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw FormatError("not an RVOL file (bad magic or short header)");
  }
  const auto dtype = static_cast<std::uint8_t>(bytes[6]);
  if (dtype > 1) {
    throw FormatError("unknown RVOL dtype code " + std::to_string(dtype));
  }
  Dims dims{get_le<std::uint32_t>(bytes.data() + 7), get_le<std::uint32_t>(bytes.data() + 11),
            get_le<std::uint32_t>(bytes.data() + 15)};
  Spacing spacing{get_le<double>(bytes.data() + 19), get_le<double>(bytes.data() + 27),
                  get_le<double>(bytes.data() + 35)};
  const std::size_t item = dtype == 0 ? 1 : 4;
  const std::size_t payload = bytes.size() - kHeaderSize;
  if (payload != dims.size() * item) {
    throw TruncationError("RVOL header promises " + std::to_string(dims.size()) +
                          " voxels but payload holds " + std::to_string(payload) + " bytes");
  }
  const char* data = bytes.data() + kHeaderSize;
  if (dtype == 0) {
    std::vector<std::uint8_t> values(data, data + dims.size());
    Mask m(dims, spacing, std::move(values));
    validate_mask(m);
    return m;
  }
  std::vector<float> values(dims.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = get_le<float>(data + 4 * i);
  return VoxelGrid(dims, spacing, std::move(values));
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline AnyVolume read_volume(const std::filesystem::path& path) {
  return decode_volume(read_file(path));
}

inline VoxelGrid read_grid(const std::filesystem::path& path) {
  AnyVolume v = read_volume(path);
  if (auto* g = std::get_if<VoxelGrid>(&v)) return std::move(*g);
  throw FormatError(path.string() + " holds a mask, expected a float grid");
}

inline Mask read_mask(const std::filesystem::path& path) {
  AnyVolume v = read_volume(path);
  if (auto* m = std::get_if<Mask>(&v)) return std::move(*m);
  throw FormatError(path.string() + " holds a float grid, expected a mask");
}

template <typename T>
void write_volume(const Volume<T>& v, const std::filesystem::path& path) {
  if constexpr (std::is_same_v<T, std::uint8_t>) validate_mask(v);
  write_file(path, rvol::encode(v));
}

// ---------------------------------------------------------------------------
// Dataset manifests

enum class Split { kTrain, kHoldout, kClinical };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kHoldout: return "holdout";
    case Split::kClinical: return "clinical";
  }
  return "train";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "holdout") return Split::kHoldout;
  if (s == "clinical") return Split::kClinical;
  throw ValidationError("unknown split '" + std::string(s) + "'");
}

struct ManifestCase {
  std::string id;
  std::filesystem::path image;
  std::filesystem::path gt;
  std::optional<std::filesystem::path> prob;
};

struct DatasetManifest {
  Split split = Split::kTrain;
  std::vector<ManifestCase> cases;
};

inline void validate(const DatasetManifest& m) {
  std::unordered_set<std::string> seen;
  for (const auto& c : m.cases) {
    if (!seen.insert(c.id).second) {
      throw ValidationError("duplicate case id '" + c.id + "' in manifest");
    }
  }
}

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : m.cases) {
    nlohmann::json j = {{"id", c.id}, {"image", c.image.generic_string()}, {"gt", c.gt.generic_string()}};
    if (c.prob) j["prob"] = c.prob->generic_string();
    cases.push_back(std::move(j));
  }
  return {{"split", to_string(m.split)}, {"cases", std::move(cases)}};
}

// Relative paths are resolved against `base_dir`.
inline DatasetManifest manifest_from_json(const nlohmann::json& j,
                                          const std::filesystem::path& base_dir = {}) {
  DatasetManifest m;
  try {
    m.split = parse_split(j.at("split").get<std::string>());
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };
    for (const auto& c : j.at("cases")) {
      ManifestCase mc;
      mc.id = c.at("id").get<std::string>();
      mc.image = resolve(c.at("image").get<std::string>());
      mc.gt = resolve(c.at("gt").get<std::string>());
      if (c.contains("prob") && !c["prob"].is_null()) mc.prob = resolve(c["prob"].get<std::string>());
      m.cases.push_back(std::move(mc));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  }
  validate(m);
  return m;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  write_file(path, j.dump(2) + "\n");
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  return manifest_from_json(read_json(path), path.parent_path());
}

}  // namespace lesionkit
