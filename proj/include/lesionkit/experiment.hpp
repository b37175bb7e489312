#pragma once

// The two end-to-end experiments and their report writers.
//   A. loss benchmark: train one model per loss on phantoms, compare
//      lesion-wise PRCs overall and for small lesions.
//   B. rater study: simulated 4-rater contouring study, agreement and timing
//      tables.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lesionkit/config.hpp"
#include "lesionkit/lesion_metrics.hpp"
#include "lesionkit/parallel.hpp"
#include "lesionkit/phantom.hpp"
#include "lesionkit/random.hpp"
#include "lesionkit/rater_protocol.hpp"
#include "lesionkit/rater_study.hpp"
#include "lesionkit/stats.hpp"
#include "lesionkit/trainer.hpp"
#include "lesionkit/volume.hpp"

namespace lesionkit {

// Seed purposes under one run seed.
namespace seeds {
inline constexpr std::uint64_t kTrainCases = 1;
inline constexpr std::uint64_t kTestCases = 2;
inline constexpr std::uint64_t kTraining = 3;
inline constexpr std::uint64_t kBootstrap = 4;
inline constexpr std::uint64_t kRaterStudy = 5;
inline constexpr std::uint64_t kPredictor = 6;
}  // namespace seeds

// ---------------------------------------------------------------------------
// Formatting

inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline nlohmann::json json_num(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline std::string prc_csv(const LesionPRC& prc) {
  std::string out = "threshold,tp,fp,fn,precision,recall";
  if (prc.band) out += ",recall_lo,recall_hi,precision_lo,precision_hi";
  out += "\n";
  for (std::size_t i = 0; i < prc.points.size(); ++i) {
    const auto& p = prc.points[i];
    out += fmt_num(p.threshold) + "," + std::to_string(p.tp) + "," + std::to_string(p.fp) + "," +
           std::to_string(p.fn) + "," + fmt_num(p.precision) + "," + fmt_num(p.recall);
    if (prc.band) {
      const auto& b = (*prc.band)[i];
      out += "," + fmt_num(b.recall_lo) + "," + fmt_num(b.recall_hi) + "," + fmt_num(b.precision_lo) + "," +
             fmt_num(b.precision_hi);
    }
    out += "\n";
  }
  return out;
}

inline nlohmann::json to_json(const PrcPoint& p) {
  return {{"threshold", p.threshold}, {"tp", p.tp},
          {"fp", p.fp},               {"fn", p.fn},
          {"tp_pred", p.tp_pred},     {"precision", json_num(p.precision)},
          {"recall", json_num(p.recall)}};
}

inline nlohmann::json to_json(const OperatingPoint& op) {
  return {{"overall", to_json(op.overall)}, {"small", to_json(op.stratum)}};
}

// ---------------------------------------------------------------------------
// Metric evaluation of a set of predictions (shared by `prc` and the loss benchmark)

struct PrcReport {
  EvalResult eval;
  LesionPRC overall;                // with band when bootstrapped
  std::optional<LesionPRC> small;   // absent when no gt lesion is small
  double median_lesion_dice = 0.0;
};

inline PrcReport prc_report(EvalResult eval, const MetricOptions& opt, std::uint64_t bootstrap_seed) {
  PrcReport r;
  const Stratum small = Stratum::below(opt.small_cut_mm);
  const bool any_small = !eval.small.points.empty();
  if (opt.bootstrap_iters > 0 && eval.tables.size() >= 2) {
    const BootstrapOptions bo{opt.bootstrap_iters, opt.bootstrap_frac};
    Rng rng(bootstrap_seed);
    r.overall = bootstrap_prc(eval.tables, bo, rng);
    if (any_small) {
      Rng rng_small(bootstrap_seed + 1);
      r.small = bootstrap_prc(eval.tables, bo, rng_small, small);
    }
  } else {
    r.overall = eval.overall;
    if (any_small) r.small = eval.small;
  }
  r.median_lesion_dice = eval.lesion_dice.empty() ? 0.0 : stats::median(eval.lesion_dice);
  r.eval = std::move(eval);
  return r;
}

// Summary of one prediction set; `target_precision` defaults to its own
// precision at the base cut.
inline nlohmann::json prc_summary(const PrcReport& r, const MetricOptions& opt,
                                  std::optional<double> target_precision = std::nullopt) {
  std::size_t gt_total = 0, small_total = 0;
  for (const auto& t : r.eval.tables) {
    gt_total += t.gt_diameters.size();
    for (double d : t.gt_diameters) small_total += d < opt.small_cut_mm ? 1 : 0;
  }
  const double target = target_precision.value_or(prc_point_at(r.eval.tables, kLesionCut).precision);
  const OperatingPoint op = operating_point(r.eval.tables, target, Stratum::below(opt.small_cut_mm));
  return {{"cases", r.eval.tables.size()},
          {"gt_lesions", gt_total},
          {"small_gt_lesions", small_total},
          {"small_cut_mm", opt.small_cut_mm},
          {"connectivity", static_cast<int>(opt.connectivity)},
          {"median_lesion_dice", r.median_lesion_dice},
          {"base_cut", to_json(r.overall.points.front())},
          {"target_precision", target},
          {"operating_point", to_json(op)},
          {"small_recall_at_target", json_num(op.stratum.recall)}};
}

inline void write_prc_report(const PrcReport& r, const MetricOptions& opt, const std::filesystem::path& dir,
                             const std::string& stem, std::optional<double> target_precision = std::nullopt) {
  write_file(dir / (stem + ".csv"), prc_csv(r.overall));
  if (r.small) write_file(dir / (stem + "_small.csv"), prc_csv(*r.small));
  write_json(prc_summary(r, opt, target_precision), dir / (stem + "_summary.json"));
}

// ---------------------------------------------------------------------------
// Loss benchmark

struct Benchmark {
  std::vector<TrainingCase> train;  // without weights; prepared per loss
  std::vector<EvalCase> test;
};

inline Benchmark make_benchmark(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::vector<PhantomCase> train(cfg.benchmark.train_cases), test(cfg.benchmark.test_cases);
  const std::uint64_t train_base = derive_seed(seed, seeds::kTrainCases);
  const std::uint64_t test_base = derive_seed(seed, seeds::kTestCases);
  parallel_for(train.size(), [&](std::size_t i) {
    Rng rng = stream(train_base, i);
    train[i] = gen_case(cfg.phantom, rng);
  });
  parallel_for(test.size(), [&](std::size_t i) {
    Rng rng = stream(test_base, i);
    test[i] = gen_case(cfg.phantom, rng);
  });
  Benchmark b;
  std::vector<SampleCase> samples;
  for (std::size_t i = 0; i < train.size(); ++i) {
    samples.push_back(make_sample_case("train_" + std::to_string(i), std::move(train[i].image),
                                       std::move(train[i].gt)));
  }
  b.train.resize(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) { b.train[i] = make_training_case(std::move(samples[i])); });
  for (std::size_t i = 0; i < test.size(); ++i) {
    b.test.push_back({"test_" + std::to_string(i), std::move(test[i].image), std::move(test[i].gt)});
  }
  return b;
}

// Adds inverse-size weight grids (beta over the whole training split) in place.
inline double attach_weights(std::vector<TrainingCase>& cases, Connectivity conn) {
  std::vector<Mask> gts;
  for (const auto& c : cases) gts.push_back(c.sample.gt);
  const double beta = positive_fraction(gts);
  if (!(beta > 0.0)) throw DataError("training split has no positive voxels; iwbce weights undefined");
  parallel_for(cases.size(), [&](std::size_t i) {
    cases[i].sample.weights = build_weight_grid(label_components(cases[i].sample.gt, conn), beta).weights;
  });
  return beta;
}

struct LossRun {
  LossKind kind = LossKind::kBce;
  TrainResult trained;
  PrcReport prc;
};

struct Comparison {
  LossKind baseline = LossKind::kBce;
  LossKind candidate = LossKind::kIwBce;
  MatchedComparison matched;
};

struct LossBenchmarkResult {
  std::uint64_t seed = 0;
  double beta = 0.0;
  std::vector<LossRun> runs;
  std::vector<Comparison> comparisons;  // every other loss against bce
};

inline LossBenchmarkResult run_loss_benchmark(const ExperimentConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Benchmark bench = make_benchmark(cfg, seed);
  LossBenchmarkResult res;
  res.seed = seed;
  const bool need_weights =
      std::find(cfg.benchmark.losses.begin(), cfg.benchmark.losses.end(), LossKind::kIwBce) != cfg.benchmark.losses.end();
  if (need_weights) res.beta = attach_weights(bench.train, cfg.metrics.connectivity);

  for (std::size_t k = 0; k < cfg.benchmark.losses.size(); ++k) {
    TrainConfig tc = cfg.train;
    tc.loss = cfg.benchmark.losses[k];
    tc.seed = derive_seed(seed, seeds::kTraining);  // same patch windows for every loss
    LossRun run;
    run.kind = tc.loss;
    run.trained = train(bench.train, tc);
    EvalResult ev = evaluate(run.trained.model, bench.test, cfg.metrics.connectivity, cfg.metrics.small_cut_mm);
    run.prc = prc_report(std::move(ev), cfg.metrics, derive_seed(seed, seeds::kBootstrap) + 2 * k);
    res.runs.push_back(std::move(run));
  }

  const auto base = std::find_if(res.runs.begin(), res.runs.end(), [](const LossRun& r) { return r.kind == LossKind::kBce; });
  if (base != res.runs.end()) {
    for (const auto& r : res.runs) {
      if (r.kind == LossKind::kBce) continue;
      res.comparisons.push_back({LossKind::kBce, r.kind,
                                 compare_at_matched_precision(base->prc.eval.tables, r.prc.eval.tables,
                                                              Stratum::below(cfg.metrics.small_cut_mm))});
    }
  }
  return res;
}

inline std::string train_log_csv(const TrainResult& t) {
  std::string out = "epoch,lr,mean_loss\n";
  for (const auto& e : t.log) out += std::to_string(e.epoch) + "," + fmt_num(e.lr) + "," + fmt_num(e.mean_loss) + "\n";
  return out;
}

inline nlohmann::json to_json(const LossBenchmarkResult& r, const MetricOptions& opt) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : r.runs) {
    runs.push_back({{"loss", to_string(run.kind)},
                    {"first_epoch_loss", run.trained.log.front().mean_loss},
                    {"last_epoch_loss", run.trained.log.back().mean_loss},
                    {"model", to_json(run.trained.model)},
                    {"summary", prc_summary(run.prc, opt)}});
  }
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : r.comparisons) {
    const std::size_t missed_base = c.matched.a.stratum.fn;
    const std::size_t missed_cand = c.matched.b.stratum.fn;
    comps.push_back({{"baseline", to_string(c.baseline)},
                     {"candidate", to_string(c.candidate)},
                     {"target_precision", c.matched.target_precision},
                     {"baseline_point", to_json(c.matched.a)},
                     {"candidate_point", to_json(c.matched.b)},
                     {"small_missed_baseline", missed_base},
                     {"small_missed_candidate", missed_cand},
                     {"miss_ratio", missed_cand == 0 ? nlohmann::json(nullptr)
                                                     : nlohmann::json(static_cast<double>(missed_base) /
                                                                      static_cast<double>(missed_cand))}});
  }
  return {{"seed", r.seed}, {"beta", r.beta}, {"runs", runs}, {"matched_precision", comps}};
}

inline void write_loss_benchmark(const LossBenchmarkResult& r, const MetricOptions& opt,
                                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& run : r.runs) {
    const std::string name = to_string(run.kind);
    write_file(dir / ("prc_" + name + ".csv"), prc_csv(run.prc.overall));
    if (run.prc.small) write_file(dir / ("prc_" + name + "_small.csv"), prc_csv(*run.prc.small));
    write_file(dir / ("train_log_" + name + ".csv"), train_log_csv(run.trained));
    write_json(to_json(run.trained.model), dir / ("model_" + name + ".json"));
  }
  write_json(to_json(r, opt), dir / "loss_benchmark.json");
}

// ---------------------------------------------------------------------------
// Rater study

struct RaterStudyReport {
  ComparisonReport agreement;
  TimingSummary timing;
};

inline RaterStudyReport rater_study_report(std::span<const CaseStudy> study) {
  return {compare_settings(study), timing_summary(study)};
}

inline std::vector<CaseStudy> run_rater_study(const ExperimentConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng(derive_seed(seed, seeds::kRaterStudy));
  std::vector<CaseStudy> out;
  for (auto& s : simulate_rater_study(cfg.phantom, cfg.rater, cfg.rater_study, rng)) out.push_back(std::move(s.study));
  return out;
}

namespace detail {

inline std::string opt_num(const std::optional<double>& v) { return v ? fmt_num(*v) : ""; }

inline std::string group_name(std::size_t i, std::size_t n) {
  return i < n ? "rater_" + std::to_string(i + 1) : "all";
}

}  // namespace detail

// Agreement table: median Dice per setting and sign-test p-values.
inline std::string table1_csv(const ComparisonReport& r) {
  std::string out = "group,pairs,dice_1v3,dice_1p_v3,dice_1p_v3p,p_1v3_vs_1p_v3,p_1v3_vs_1p_v3p\n";
  const std::size_t n = r.per_rater.size();
  for (std::size_t i = 0; i <= n; ++i) {
    const SettingMedians& m = i < n ? r.per_rater[i] : r.pooled;
    out += detail::group_name(i, n) + "," + std::to_string(m.pairs) + "," + fmt_num(m.median_dice[0]) + "," +
           fmt_num(m.median_dice[1]) + "," + fmt_num(m.median_dice[2]) + "," + detail::opt_num(m.p_case1) + "," +
           detail::opt_num(m.p_case2) + "\n";
  }
  return out;
}

// Timing table, times as mm:ss.
inline std::string table2_csv(const TimingSummary& t) {
  std::string out =
      "group,pairs,median_manual,manual_min,manual_max,median_reduction,reduction_min,reduction_max,speedup,"
      "median_case_speedup\n";
  const std::size_t n = t.per_rater.size();
  for (std::size_t i = 0; i <= n; ++i) {
    const TimingStats& s = i < n ? t.per_rater[i] : t.pooled;
    out += detail::group_name(i, n) + "," + std::to_string(s.pairs) + "," + format_mmss(s.median_manual) + "," +
           format_mmss(s.manual_min) + "," + format_mmss(s.manual_max) + "," + format_mmss(s.median_reduction) +
           "," + format_mmss(s.reduction_min) + "," + format_mmss(s.reduction_max) + "," + fmt_num(s.speedup) + "," +
           fmt_num(s.median_case_speedup) + "\n";
  }
  return out;
}

inline nlohmann::json to_json(const SettingMedians& m) {
  auto p = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json dice;
  for (std::size_t s = 0; s < 3; ++s) dice[to_string(kAllSettings[s])] = m.median_dice[s];
  return {{"pairs", m.pairs}, {"median_dice", dice}, {"p_1v3_vs_1p_v3", p(m.p_case1)}, {"p_1v3_vs_1p_v3p", p(m.p_case2)}};
}

inline nlohmann::json to_json(const TimingStats& s) {
  return {{"pairs", s.pairs},
          {"median_manual_s", s.median_manual},
          {"manual_range_s", {s.manual_min, s.manual_max}},
          {"median_reduction_s", s.median_reduction},
          {"reduction_range_s", {s.reduction_min, s.reduction_max}},
          {"speedup", json_num(s.speedup)},
          {"median_case_speedup", json_num(s.median_case_speedup)}};
}

inline nlohmann::json to_json(const RaterStudyReport& r) {
  nlohmann::json agreement = nlohmann::json::array(), timing = nlohmann::json::array();
  for (const auto& m : r.agreement.per_rater) agreement.push_back(to_json(m));
  for (const auto& s : r.timing.per_rater) timing.push_back(to_json(s));
  return {{"agreement", {{"per_rater", agreement}, {"pooled", to_json(r.agreement.pooled)}}},
          {"timing", {{"per_rater", timing}, {"pooled", to_json(r.timing.pooled)}}}};
}

inline void write_rater_report(const RaterStudyReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "agreement.csv", table1_csv(r.agreement));
  write_file(dir / "timing.csv", table2_csv(r.timing));
  write_json(to_json(r), dir / "rater_study.json");
}

// ---------------------------------------------------------------------------
// Study manifests: {"cases": [{"id", "raters": [{"manual", "cnn_init",
// "manual_time", "adjust_time"}]}]}, paths relative to the manifest.

inline std::vector<CaseStudy> load_study(const std::filesystem::path& path) {
  const nlohmann::json j = read_json(path);
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path q(p);
    return q.is_absolute() || base.empty() ? q : base / q;
  };
  std::vector<CaseStudy> out;
  try {
    for (const auto& c : j.at("cases")) {
      CaseStudy cs;
      cs.case_id = c.at("id").get<std::string>();
      std::size_t u = 0;
      for (const auto& r : c.at("raters")) {
        ++u;
        RaterRecord rec;
        if (r.contains("manual") && !r["manual"].is_null()) {
          rec.manual = read_mask(resolve(r["manual"].get<std::string>()));
        }
        if (r.contains("cnn_init") && !r["cnn_init"].is_null()) {
          rec.cnn_init = read_mask(resolve(r["cnn_init"].get<std::string>()));
        }
        if (!r.contains("manual_time") || !r.contains("adjust_time")) {
          throw DataError("case '" + cs.case_id + "' rater " + std::to_string(u) + ": missing delineation time");
        }
        rec.manual_time = r["manual_time"].get<double>();
        rec.adjust_time = r["adjust_time"].get<double>();
        cs.raters.push_back(std::move(rec));
      }
      out.push_back(std::move(cs));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed study manifest: ") + e.what());
  }
  if (out.empty()) throw ValidationError("study manifest lists no cases");
  return out;
}

// Writes every mask under `dir` and a study manifest `dir/study.json`.
inline void save_study(std::span<const CaseStudy> study, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : study) {
    nlohmann::json raters = nlohmann::json::array();
    for (std::size_t u = 0; u < c.raters.size(); ++u) {
      const auto& r = c.raters[u];
      const std::string stem = c.case_id + "_rater" + std::to_string(u + 1);
      nlohmann::json e = {{"manual_time", r.manual_time}, {"adjust_time", r.adjust_time}};
      if (r.manual) {
        write_volume(*r.manual, dir / (stem + "_manual.rvol"));
        e["manual"] = stem + "_manual.rvol";
      }
      if (r.cnn_init) {
        write_volume(*r.cnn_init, dir / (stem + "_cnn_init.rvol"));
        e["cnn_init"] = stem + "_cnn_init.rvol";
      }
      raters.push_back(std::move(e));
    }
    cases.push_back({{"id", c.case_id}, {"raters", std::move(raters)}});
  }
  write_json({{"cases", std::move(cases)}}, dir / "study.json");
}

}  // namespace lesionkit
