#pragma once

// Experiment configuration: one JSON document holding every generator,
// training and metric parameter. Unknown keys are rejected so that typos
// cannot silently fall back to defaults.

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lesionkit/error.hpp"
#include "lesionkit/labeling.hpp"
#include "lesionkit/lesion_metrics.hpp"
#include "lesionkit/phantom.hpp"
#include "lesionkit/rater_study.hpp"
#include "lesionkit/trainer.hpp"
#include "lesionkit/volume.hpp"

namespace lesionkit {

struct MetricOptions {
  Connectivity connectivity = Connectivity::k26;
  double small_cut_mm = kDefaultSmallCutMm;
  std::size_t bootstrap_iters = 100;
  double bootstrap_frac = 0.8;
};

inline void validate(const MetricOptions& m) {
  if (!(m.small_cut_mm > 0.0)) throw ValidationError("small_cut_mm must be > 0");
  if (!(m.bootstrap_frac > 0.0 && m.bootstrap_frac <= 1.0)) {
    throw ValidationError("bootstrap_frac must lie in (0, 1]");
  }
}

// Size of the synthetic loss benchmark.
struct BenchmarkOptions {
  std::size_t train_cases = 40;
  std::size_t test_cases = 10;
  std::vector<LossKind> losses{LossKind::kBce, LossKind::kIwBce, LossKind::kDice};
};

inline void validate(const BenchmarkOptions& b) {
  if (b.train_cases == 0 || b.test_cases == 0) throw ValidationError("benchmark case counts must be positive");
  if (b.losses.empty()) throw ValidationError("benchmark needs at least one loss");
}

struct ExperimentConfig {
  std::uint64_t seed = 7;
  PhantomParams phantom;
  RaterModel rater;
  PredictorModel predictor;
  RaterStudyParams rater_study;
  TrainConfig train;
  MetricOptions metrics;
  BenchmarkOptions benchmark;
};

namespace detail {

// Reads known keys from one JSON object and rejects the rest.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ValidationError(where_ + ": expected a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where_ + "." + key + ": " + e.what());
    }
  }

  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ValidationError(where_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline Dims dims_from(const std::array<std::size_t, 3>& a) { return {a[0], a[1], a[2]}; }
inline std::array<std::size_t, 3> dims_array(const Dims& d) { return {d.nx, d.ny, d.nz}; }

}  // namespace detail

inline void read_into(const nlohmann::json& j, PhantomParams& p) {
  detail::ObjectReader r(j, "phantom");
  auto dims = detail::dims_array(p.dims);
  std::array<double, 3> spacing{p.spacing.sx, p.spacing.sy, p.spacing.sz};
  r.get("dims", dims);
  r.get("spacing", spacing);
  r.get("lesion_count_mean", p.lesion_count_mean);
  r.get("min_lesions", p.min_lesions);
  r.get("max_lesions", p.max_lesions);
  r.get("diameter_min_mm", p.diameter_min_mm);
  r.get("diameter_max_mm", p.diameter_max_mm);
  r.get("axis_ratio_min", p.axis_ratio_min);
  r.get("axis_ratio_max", p.axis_ratio_max);
  r.get("background", p.background);
  r.get("contrast", p.contrast);
  r.get("noise_sigma", p.noise_sigma);
  r.finish();
  p.dims = detail::dims_from(dims);
  p.spacing = {spacing[0], spacing[1], spacing[2]};
}

inline void read_into(const nlohmann::json& j, RaterModel& m) {
  detail::ObjectReader r(j, "rater");
  r.get("jitter_sigma_mm", m.jitter_sigma_mm);
  r.get("bias_mm", m.bias_mm);
  r.get("miss_prob", m.miss_prob);
  r.get("miss_below_mm", m.miss_below_mm);
  r.finish();
}

inline void read_into(const nlohmann::json& j, PredictorModel& m) {
  detail::ObjectReader r(j, "predictor");
  r.get("detect_midpoint_mm", m.detect_midpoint_mm);
  r.get("detect_slope_per_mm", m.detect_slope_per_mm);
  r.get("detect_ceiling", m.detect_ceiling);
  r.get("blur_sigma_mm", m.blur_sigma_mm);
  r.get("background_prob", m.background_prob);
  r.get("certainty_mean", m.certainty_mean);
  r.get("certainty_noise", m.certainty_noise);
  r.get("fp_rate", m.fp_rate);
  r.get("fp_diameter_min_mm", m.fp_diameter_min_mm);
  r.get("fp_diameter_max_mm", m.fp_diameter_max_mm);
  r.get("fp_certainty_mean", m.fp_certainty_mean);
  r.finish();
}

inline void read_into(const nlohmann::json& j, RaterStudyParams& p) {
  detail::ObjectReader r(j, "rater_study");
  r.get("cases", p.cases);
  r.get("raters", p.raters);
  r.get("rater_bias_sd_mm", p.rater_bias_sd_mm);
  r.get("seed_sigma_mm", p.seed_sigma_mm);
  r.get("adjust_sigma_mm", p.adjust_sigma_mm);
  r.get("base_time_s", p.base_time_s);
  r.get("per_lesion_time_s", p.per_lesion_time_s);
  r.get("time_noise", p.time_noise);
  r.get("adjust_fraction_min", p.adjust_fraction_min);
  r.get("adjust_fraction_max", p.adjust_fraction_max);
  r.finish();
}

inline void read_into(const nlohmann::json& j, TrainConfig& c) {
  detail::ObjectReader r(j, "train");
  std::string loss = to_string(c.loss);
  auto patch = detail::dims_array(c.patch_size);
  r.get("loss", loss);
  r.get("epochs", c.epochs);
  r.get("iterations_per_epoch", c.iterations_per_epoch);
  r.get("batch_size", c.batch_size);
  r.get("patch_size", patch);
  r.get("lr", c.lr);
  r.get("lr_dropped", c.lr_dropped);
  if (const auto* e = r.child("lr_drop_epoch"); e && !e->is_null()) {
    try {
      c.lr_drop_epoch = e->get<std::size_t>();
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError(std::string("train.lr_drop_epoch: ") + ex.what());
    }
  }
  r.get("tumor_prob", c.tumor_prob);
  r.finish();
  try {
    c.loss = parse_loss_kind(loss);
  } catch (const ArgumentError& e) {
    throw ValidationError(std::string("train.loss: ") + e.what());
  }
  c.patch_size = detail::dims_from(patch);
}

inline void read_into(const nlohmann::json& j, MetricOptions& m) {
  detail::ObjectReader r(j, "metrics");
  int conn = static_cast<int>(m.connectivity);
  r.get("connectivity", conn);
  r.get("small_cut_mm", m.small_cut_mm);
  r.get("bootstrap_iters", m.bootstrap_iters);
  r.get("bootstrap_frac", m.bootstrap_frac);
  r.finish();
  try {
    m.connectivity = parse_connectivity(conn);
  } catch (const ArgumentError& e) {
    throw ValidationError(std::string("metrics.connectivity: ") + e.what());
  }
}

inline void read_into(const nlohmann::json& j, BenchmarkOptions& b) {
  detail::ObjectReader r(j, "benchmark");
  std::vector<std::string> losses;
  for (LossKind k : b.losses) losses.push_back(to_string(k));
  r.get("train_cases", b.train_cases);
  r.get("test_cases", b.test_cases);
  r.get("losses", losses);
  r.finish();
  b.losses.clear();
  for (const auto& s : losses) {
    try {
      b.losses.push_back(parse_loss_kind(s));
    } catch (const ArgumentError& e) {
      throw ValidationError(std::string("benchmark.losses: ") + e.what());
    }
  }
}

inline void validate(const ExperimentConfig& c) {
  validate(c.phantom);
  validate(c.rater);
  validate(c.predictor);
  validate(c.rater_study);
  validate(c.train);
  validate(c.metrics);
  validate(c.benchmark);
  for (std::size_t a = 0; a < 3; ++a) {
    if (c.train.patch_size[a] > c.phantom.dims[a]) {
      throw ValidationError("train.patch_size " + to_string(c.train.patch_size) + " exceeds phantom dims " +
                            to_string(c.phantom.dims));
    }
  }
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  detail::ObjectReader r(j, "config");
  r.get("seed", c.seed);
  if (const auto* p = r.child("phantom")) read_into(*p, c.phantom);
  if (const auto* p = r.child("rater")) read_into(*p, c.rater);
  if (const auto* p = r.child("predictor")) read_into(*p, c.predictor);
  if (const auto* p = r.child("rater_study")) read_into(*p, c.rater_study);
  if (const auto* p = r.child("train")) read_into(*p, c.train);
  if (const auto* p = r.child("metrics")) read_into(*p, c.metrics);
  if (const auto* p = r.child("benchmark")) read_into(*p, c.benchmark);
  r.finish();
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) { return config_from_json(read_json(path)); }

// Fully resolved configuration, suitable for replaying a run.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  const auto& p = c.phantom;
  const auto& t = c.train;
  std::vector<std::string> losses;
  for (LossKind k : c.benchmark.losses) losses.push_back(to_string(k));
  nlohmann::json drop = t.lr_drop_epoch ? nlohmann::json(*t.lr_drop_epoch) : nlohmann::json(nullptr);
  return {
      {"seed", c.seed},
      {"phantom",
       {{"dims", detail::dims_array(p.dims)},
        {"spacing", {p.spacing.sx, p.spacing.sy, p.spacing.sz}},
        {"lesion_count_mean", p.lesion_count_mean},
        {"min_lesions", p.min_lesions},
        {"max_lesions", p.max_lesions},
        {"diameter_min_mm", p.diameter_min_mm},
        {"diameter_max_mm", p.diameter_max_mm},
        {"axis_ratio_min", p.axis_ratio_min},
        {"axis_ratio_max", p.axis_ratio_max},
        {"background", p.background},
        {"contrast", p.contrast},
        {"noise_sigma", p.noise_sigma}}},
      {"rater",
       {{"jitter_sigma_mm", c.rater.jitter_sigma_mm},
        {"bias_mm", c.rater.bias_mm},
        {"miss_prob", c.rater.miss_prob},
        {"miss_below_mm", c.rater.miss_below_mm}}},
      {"predictor",
       {{"detect_midpoint_mm", c.predictor.detect_midpoint_mm},
        {"detect_slope_per_mm", c.predictor.detect_slope_per_mm},
        {"detect_ceiling", c.predictor.detect_ceiling},
        {"blur_sigma_mm", c.predictor.blur_sigma_mm},
        {"background_prob", c.predictor.background_prob},
        {"certainty_mean", c.predictor.certainty_mean},
        {"certainty_noise", c.predictor.certainty_noise},
        {"fp_rate", c.predictor.fp_rate},
        {"fp_diameter_min_mm", c.predictor.fp_diameter_min_mm},
        {"fp_diameter_max_mm", c.predictor.fp_diameter_max_mm},
        {"fp_certainty_mean", c.predictor.fp_certainty_mean}}},
      {"rater_study",
       {{"cases", c.rater_study.cases},
        {"raters", c.rater_study.raters},
        {"rater_bias_sd_mm", c.rater_study.rater_bias_sd_mm},
        {"seed_sigma_mm", c.rater_study.seed_sigma_mm},
        {"adjust_sigma_mm", c.rater_study.adjust_sigma_mm},
        {"base_time_s", c.rater_study.base_time_s},
        {"per_lesion_time_s", c.rater_study.per_lesion_time_s},
        {"time_noise", c.rater_study.time_noise},
        {"adjust_fraction_min", c.rater_study.adjust_fraction_min},
        {"adjust_fraction_max", c.rater_study.adjust_fraction_max}}},
      {"train",
       {{"loss", to_string(t.loss)},
        {"epochs", t.epochs},
        {"iterations_per_epoch", t.iterations_per_epoch},
        {"batch_size", t.batch_size},
        {"patch_size", detail::dims_array(t.patch_size)},
        {"lr", t.lr},
        {"lr_dropped", t.lr_dropped},
        {"lr_drop_epoch", drop},
        {"tumor_prob", t.tumor_prob}}},
      {"metrics",
       {{"connectivity", static_cast<int>(c.metrics.connectivity)},
        {"small_cut_mm", c.metrics.small_cut_mm},
        {"bootstrap_iters", c.metrics.bootstrap_iters},
        {"bootstrap_frac", c.metrics.bootstrap_frac}}},
      {"benchmark",
       {{"train_cases", c.benchmark.train_cases}, {"test_cases", c.benchmark.test_cases}, {"losses", losses}}},
  };
}

}  // namespace lesionkit
