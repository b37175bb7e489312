#pragma once

// Simulated multi-rater contouring study.
//
// Manual contours come from the rater model, with a per-rater systematic
// bias added to its own bias. CNN-initialized contours share one seed contour per case (the
// "network output") and each rater adds a smaller adjustment on top of it.
// Times follow a per-lesion workload with lognormal noise; adjusting a
// CNN-initialized contour takes a random fraction of the manual time.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lesionkit/error.hpp"
#include "lesionkit/phantom.hpp"
#include "lesionkit/random.hpp"
#include "lesionkit/rater_protocol.hpp"

namespace lesionkit {

struct RaterStudyParams {
  std::size_t cases = 12;
  std::size_t raters = 4;
  double rater_bias_sd_mm = 0.3;  // per-rater systematic dilation/erosion
  double seed_sigma_mm = 0.5;     // shared CNN contour vs ground truth
  double adjust_sigma_mm = 0.2;   // rater edits on top of the CNN contour
  double base_time_s = 240.0;
  double per_lesion_time_s = 90.0;
  double time_noise = 0.3;  // lognormal sigma
  double adjust_fraction_min = 0.3;
  double adjust_fraction_max = 0.6;
};

inline void validate(const RaterStudyParams& p) {
  if (p.cases == 0) throw ValidationError("rater study needs at least one case");
  if (p.raters < 2) throw ValidationError("rater study needs at least two raters");
  if (!(p.seed_sigma_mm >= 0 && p.adjust_sigma_mm >= 0 && p.rater_bias_sd_mm >= 0)) {
    throw ValidationError("rater study sigmas must be >= 0");
  }
  if (!(p.base_time_s > 0 && p.per_lesion_time_s >= 0 && p.time_noise >= 0)) {
    throw ValidationError("rater study time model must be positive");
  }
  if (!(p.adjust_fraction_min > 0 && p.adjust_fraction_min <= p.adjust_fraction_max)) {
    throw ValidationError("rater study adjust fraction range must satisfy 0 < min <= max");
  }
}

struct SimulatedStudyCase {
  PhantomCase phantom;
  CaseStudy study;
};

inline std::vector<SimulatedStudyCase> simulate_rater_study(const PhantomParams& phantom, const RaterModel& manual,
                                                            const RaterStudyParams& params, Rng& rng) {
  validate(params);
  validate(manual);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> rater_bias(params.raters);
  for (double& b : rater_bias) b = params.rater_bias_sd_mm * normal(rng);

  std::vector<SimulatedStudyCase> out;
  out.reserve(params.cases);
  for (std::size_t c = 0; c < params.cases; ++c) {
    SimulatedStudyCase sc;
    sc.phantom = gen_case(phantom, rng);
    sc.study.case_id = "case_" + std::to_string(c + 1);
    const auto& catalog = sc.phantom.catalog;
    const Mask& gt = sc.phantom.gt;

    std::vector<RadialField> seed_fields;
    for (std::size_t l = 0; l < catalog.size(); ++l) seed_fields.push_back(RadialField::draw(rng));

    std::lognormal_distribution<double> time_noise(0.0, params.time_noise);
    std::uniform_real_distribution<double> adjust_frac(params.adjust_fraction_min, params.adjust_fraction_max);
    for (std::size_t u = 0; u < params.raters; ++u) {
      RaterRecord rec;
      RaterModel model = manual;
      model.bias_mm += rater_bias[u];
      rec.manual = simulate_rater(gt, catalog, model, rng);
      Mask cnn(gt.dims(), gt.spacing(), std::uint8_t{0});
      for (std::size_t l = 0; l < catalog.size(); ++l) {
        const RadialField adjust = RadialField::draw(rng);
        const RadialField& seed = seed_fields[l];
        const double ss = params.seed_sigma_mm;
        const double as = params.adjust_sigma_mm;
        detail::render_perturbed(
            cnn, catalog[l], [&](const std::array<double, 3>& dir) { return ss * seed(dir) + as * adjust(dir); },
            ss * seed.bound() + as * adjust.bound() + 1.0);
      }
      rec.cnn_init = std::move(cnn);
      rec.manual_time = (params.base_time_s + params.per_lesion_time_s * static_cast<double>(catalog.size())) *
                        time_noise(rng);
      rec.adjust_time = rec.manual_time * adjust_frac(rng);
      sc.study.raters.push_back(std::move(rec));
    }
    out.push_back(std::move(sc));
  }
  return out;
}

}  // namespace lesionkit
