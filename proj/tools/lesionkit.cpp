// lesionkit: command-line front end.
//
// Exit codes: 0 success, 1 validation/argument error, 2 I/O error,
// 64 unknown subcommand.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lesionkit/config.hpp"
#include "lesionkit/error.hpp"
#include "lesionkit/experiment.hpp"
#include "lesionkit/imbalance.hpp"
#include "lesionkit/labeling.hpp"
#include "lesionkit/lesion_metrics.hpp"
#include "lesionkit/phantom.hpp"
#include "lesionkit/random.hpp"
#include "lesionkit/rater_study.hpp"
#include "lesionkit/sampler.hpp"
#include "lesionkit/trainer.hpp"
#include "lesionkit/volume.hpp"

namespace fs = std::filesystem;
using namespace lesionkit;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;
constexpr int kExitUsage = 64;

const std::vector<std::string> kSubcommands = {"phantom", "label",   "weights", "loss",       "sample",
                                               "train",   "predict", "prc",     "rater-eval", "repro"};

const char* kUsage =
    "usage: lesionkit <subcommand> [options]\n"
    "\n"
    "subcommands:\n"
    "  phantom gen   generate synthetic cases (or a simulated rater study)\n"
    "  label         connected components of a mask\n"
    "  weights       inverse-size voxel weights for a mask\n"
    "  loss          bce / iwbce / dice loss of a probability map\n"
    "  sample        draw training patches from a manifest\n"
    "  train         fit the voxel classifier on a manifest\n"
    "  predict       apply a trained model to an image\n"
    "  prc           lesion-wise precision-recall curve of a manifest\n"
    "  rater-eval    agreement and timing tables of a rater study\n"
    "  repro         loss benchmark and rater study from one config\n"
    "\n"
    "run 'lesionkit <subcommand> --help' for options\n";

// Options shared by several subcommands.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> connectivity;
  std::optional<double> small_cut_mm;
  std::optional<std::size_t> bootstrap_iters;
  std::optional<double> bootstrap_frac;
};

void add_out(CLI::App* app, Common& c) { app->add_option("--out", c.out, "output directory")->required(); }
void add_config(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "experiment config JSON")->check(CLI::ExistingFile);
}
void add_seed(CLI::App* app, Common& c) { app->add_option("--seed", c.seed, "run seed (overrides config)"); }
void add_connectivity(CLI::App* app, Common& c) {
  app->add_option("--connectivity", c.connectivity, "6 or 26")->check(CLI::IsMember({6, 26}));
}
void add_metrics(CLI::App* app, Common& c) {
  add_connectivity(app, c);
  app->add_option("--small-cut-mm", c.small_cut_mm, "small-lesion diameter cut (mm)");
  app->add_option("--bootstrap-iters", c.bootstrap_iters, "bootstrap iterations (0 disables)");
  app->add_option("--bootstrap-frac", c.bootstrap_frac, "fraction of cases per bootstrap iteration");
}

ExperimentConfig resolve_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.connectivity) cfg.metrics.connectivity = parse_connectivity(*c.connectivity);
  if (c.small_cut_mm) cfg.metrics.small_cut_mm = *c.small_cut_mm;
  if (c.bootstrap_iters) cfg.metrics.bootstrap_iters = *c.bootstrap_iters;
  if (c.bootstrap_frac) cfg.metrics.bootstrap_frac = *c.bootstrap_frac;
  validate(cfg);
  return cfg;
}

Connectivity resolve_connectivity(const Common& c) {
  return c.connectivity ? parse_connectivity(*c.connectivity) : Connectivity::k26;
}

fs::path prepare_out(const Common& c) {
  const fs::path out(c.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

// Replay record. Output locations are left out so that identical runs into
// different directories produce identical files.
void write_run(const fs::path& out, const std::string& command, json inputs, json extra = json::object()) {
  json run = {{"tool", "lesionkit"}, {"version", LESIONKIT_VERSION}, {"command", command}, {"inputs", std::move(inputs)}};
  for (auto& [k, v] : extra.items()) run[k] = v;
  write_json(run, out / "run.json");
}

Dims parse_dims(const std::vector<std::size_t>& v, const char* what) {
  if (v.size() == 1) return {v[0], v[0], v[0]};
  if (v.size() == 3) return {v[0], v[1], v[2]};
  throw ArgumentError(std::string(what) + " takes 1 or 3 values");
}

// ---------------------------------------------------------------------------

struct PhantomArgs {
  Common c;
  std::size_t cases = 10;
  std::string split = "train";
  bool predictions = false;
  bool study = false;
};

int run_phantom_gen(const PhantomArgs& a) {
  ExperimentConfig cfg = resolve_config(a.c);
  const Split split = parse_split(a.split);
  if (a.cases == 0) throw ArgumentError("--cases must be positive");
  const fs::path out = prepare_out(a.c);
  json inputs = {{"config", a.c.config}, {"cases", a.cases}};

  if (a.study) {
    cfg.rater_study.cases = a.cases;
    const auto study = run_rater_study(cfg, cfg.seed);
    save_study(study, out);
    inputs["study"] = true;
    write_run(out, "phantom gen", inputs, {{"seed", cfg.seed}, {"config", to_json(cfg)}});
    return kExitOk;
  }

  std::vector<PhantomCase> cases(a.cases);
  std::vector<std::optional<ProbabilityMap>> probs(a.cases);
  const std::uint64_t case_base = derive_seed(cfg.seed, seeds::kTrainCases);
  const std::uint64_t pred_base = derive_seed(cfg.seed, seeds::kPredictor);
  parallel_for(a.cases, [&](std::size_t i) {
    Rng rng = stream(case_base, i);
    cases[i] = gen_case(cfg.phantom, rng);
    if (a.predictions) {
      Rng prng = stream(pred_base, i);
      probs[i] = simulate_predictor(cases[i].gt, cases[i].catalog, cfg.predictor, prng);
    }
  });

  DatasetManifest manifest;
  manifest.split = split;
  for (std::size_t i = 0; i < a.cases; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "case_%03zu", i);
    const std::string stem(id);
    write_volume(cases[i].image, out / (stem + "_image.rvol"));
    write_volume(cases[i].gt, out / (stem + "_gt.rvol"));
    write_json(to_json(cases[i].catalog), out / (stem + "_catalog.json"));
    ManifestCase mc{stem, stem + "_image.rvol", stem + "_gt.rvol", std::nullopt};
    if (probs[i]) {
      write_volume(*probs[i], out / (stem + "_prob.rvol"));
      mc.prob = stem + "_prob.rvol";
    }
    manifest.cases.push_back(std::move(mc));
  }
  write_json(to_json(manifest), out / "manifest.json");
  inputs["split"] = a.split;
  inputs["predictions"] = a.predictions;
  write_run(out, "phantom gen", inputs, {{"seed", cfg.seed}, {"config", to_json(cfg)}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct LabelArgs {
  Common c;
  std::string mask;
};

int run_label(const LabelArgs& a) {
  const Connectivity conn = resolve_connectivity(a.c);
  const Mask mask = read_mask(a.mask);
  const fs::path out = prepare_out(a.c);
  const LabelMap lm = label_components(mask, conn);
  std::vector<float> coded(lm.labels.size());
  for (std::size_t i = 0; i < coded.size(); ++i) coded[i] = static_cast<float>(lm.labels[i]);
  write_volume(VoxelGrid(mask.dims(), mask.spacing(), std::move(coded)), out / "labels.rvol");
  write_json({{"components", lm.component_count()},
              {"connectivity", static_cast<int>(conn)},
              {"sizes", lm.sizes},
              {"diameters_mm", equivalent_diameters(lm)}},
             out / "labels.json");
  write_run(out, "label", {{"mask", a.mask}, {"connectivity", static_cast<int>(conn)}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct WeightsArgs {
  Common c;
  std::string mask;
  std::optional<double> beta;
};

int run_weights(const WeightsArgs& a) {
  const Connectivity conn = resolve_connectivity(a.c);
  const Mask mask = read_mask(a.mask);
  // Without --beta the mask stands in for the whole training split.
  const double beta = a.beta.value_or(positive_fraction(std::span<const Mask>(&mask, 1)));
  if (!(beta > 0.0)) throw ArgumentError("mask has no positive voxels; pass --beta");
  const fs::path out = prepare_out(a.c);
  const LabelMap lm = label_components(mask, conn);
  const WeightGrid w = build_weight_grid(lm, beta);
  write_volume(w.weights, out / "weights.rvol");
  write_json({{"beta", w.beta}, {"component_weights", w.component_weights}, {"sizes", lm.sizes}},
             out / "weights.json");
  write_run(out, "weights",
            {{"mask", a.mask}, {"beta", a.beta ? json(*a.beta) : json(nullptr)}, {"connectivity", static_cast<int>(conn)}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct LossArgs {
  Common c;
  std::string kind;
  std::string prob;
  std::string mask;
  std::string weights;
  bool write_gradient = false;
};

int run_loss(const LossArgs& a) {
  const LossKind kind = parse_loss_kind(a.kind);
  if (kind == LossKind::kIwBce && a.weights.empty()) {
    throw ArgumentError("loss --kind iwbce requires --weights (weight grid RVOL)");
  }
  const VoxelGrid p = read_grid(a.prob);
  validate_probability(p);
  const Mask y = read_mask(a.mask);
  const fs::path out = prepare_out(a.c);
  LossReport r;
  switch (kind) {
    case LossKind::kBce: r = bce(p, y); break;
    case LossKind::kIwBce: r = iwbce(p, y, read_grid(a.weights)); break;
    case LossKind::kDice: r = dice_loss(p, y); break;
  }
  double norm = 0.0, gmin = 0.0, gmax = 0.0;
  const auto g = r.gradient->values();
  if (!g.empty()) gmin = gmax = g[0];
  for (double v : g) {
    norm += v * v;
    gmin = std::min(gmin, v);
    gmax = std::max(gmax, v);
  }
  write_json({{"kind", to_string(kind)},
              {"value", r.value},
              {"gradient", {{"l2_norm", std::sqrt(norm)}, {"min", gmin}, {"max", gmax}}}},
             out / "loss.json");
  if (a.write_gradient) {
    std::vector<float> gf(g.begin(), g.end());
    write_volume(VoxelGrid(p.dims(), p.spacing(), std::move(gf)), out / "gradient.rvol");
  }
  write_run(out, "loss",
            {{"kind", to_string(kind)},
             {"prob", a.prob},
             {"mask", a.mask},
             {"weights", a.weights.empty() ? json(nullptr) : json(a.weights)}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SampleArgs {
  Common c;
  std::string manifest;
  std::size_t count = 12;
  std::vector<std::size_t> patch{32};
  double tumor_prob = 0.5;
  bool with_weights = false;
};

int run_sample(const SampleArgs& a) {
  const Connectivity conn = resolve_connectivity(a.c);
  const DatasetManifest m = load_manifest(a.manifest);
  if (m.cases.empty()) throw ArgumentError("sample: empty manifest");
  std::vector<SampleCase> cases = load_sample_cases(m, [](const Mask&) { return std::optional<VoxelGrid>{}; });
  double beta = 0.0;
  if (a.with_weights) {
    std::vector<Mask> gts;
    for (const auto& c : cases) gts.push_back(c.gt);
    beta = positive_fraction(gts);
    if (!(beta > 0.0)) throw DataError("manifest has no positive voxels; weights undefined");
    for (auto& c : cases) c.weights = build_weight_grid(label_components(c.gt, conn), beta).weights;
  }
  const std::uint64_t seed = a.c.seed.value_or(0);
  const PatchSpec spec{parse_dims(a.patch, "--patch"), a.tumor_prob, seed};
  Rng rng(seed);
  const auto batch = sample_batch(cases, spec, a.count, rng);
  const fs::path out = prepare_out(a.c);
  json index = json::array();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Patch& p = batch[i];
    char stem[32];
    std::snprintf(stem, sizeof(stem), "patch_%04zu", i);
    write_volume(p.image, out / (std::string(stem) + "_image.rvol"));
    write_volume(p.gt, out / (std::string(stem) + "_gt.rvol"));
    json e = {{"patch", stem},
              {"case", cases[p.case_index].id},
              {"origin", p.window.origin},
              {"center", p.window.center},
              {"tumor_draw", p.window.tumor_draw},
              {"center_positive", p.window.center_positive},
              {"shifted_center_positive", p.window.shifted_center_positive}};
    if (p.weights) {
      write_volume(*p.weights, out / (std::string(stem) + "_weights.rvol"));
      e["weights"] = std::string(stem) + "_weights.rvol";
    }
    index.push_back(std::move(e));
  }
  write_json({{"patch_size", a.patch.size() == 1 ? std::vector<std::size_t>(3, a.patch[0]) : a.patch},
              {"tumor_prob", a.tumor_prob},
              {"beta", a.with_weights ? json(beta) : json(nullptr)},
              {"patches", index}},
             out / "index.json");
  write_run(out, "sample",
            {{"manifest", a.manifest}, {"count", a.count}, {"tumor_prob", a.tumor_prob}, {"with_weights", a.with_weights}},
            {{"seed", seed}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  Common c;
  std::string manifest;
  std::string loss;
};

int run_train(const TrainArgs& a) {
  ExperimentConfig cfg = resolve_config(a.c);
  TrainConfig tc = cfg.train;
  if (!a.loss.empty()) tc.loss = parse_loss_kind(a.loss);
  tc.seed = derive_seed(cfg.seed, seeds::kTraining);
  const DatasetManifest m = load_manifest(a.manifest);
  std::vector<SampleCase> samples = load_sample_cases(m, [](const Mask&) { return std::optional<VoxelGrid>{}; });
  for (const auto& s : samples) {
    for (std::size_t k = 0; k < 3; ++k) {
      if (tc.patch_size[k] > s.gt.dims()[k]) {
        throw ValidationError("train.patch_size " + to_string(tc.patch_size) + " exceeds case '" + s.id +
                              "' dims " + to_string(s.gt.dims()));
      }
    }
  }
  const auto cases = prepare_training_cases(std::move(samples), tc.loss, cfg.metrics.connectivity);
  const TrainResult r = train(cases, tc);
  const fs::path out = prepare_out(a.c);
  write_json(to_json(r.model), out / "model.json");
  write_file(out / "train_log.csv", train_log_csv(r));
  json cj = to_json(cfg);
  cj["train"]["loss"] = to_string(tc.loss);
  write_run(out, "train", {{"manifest", a.manifest}, {"config", a.c.config}}, {{"seed", cfg.seed}, {"config", cj}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct PredictArgs {
  Common c;
  std::string model;
  std::string image;
};

int run_predict(const PredictArgs& a) {
  const VoxelModel model = model_from_json(read_json(a.model));
  const VoxelGrid image = read_grid(a.image);
  const fs::path out = prepare_out(a.c);
  write_volume(predict(model, image), out / "prob.rvol");
  write_run(out, "predict", {{"model", a.model}, {"image", a.image}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct PrcArgs {
  Common c;
  std::string manifest;
  std::optional<double> target_precision;
};

int run_prc(const PrcArgs& a) {
  const ExperimentConfig cfg = resolve_config(a.c);
  const DatasetManifest m = load_manifest(a.manifest);
  if (m.cases.empty()) throw ArgumentError("prc: empty manifest");
  std::vector<ProbabilityMap> probs;
  std::vector<Mask> gts;
  std::vector<std::string> ids;
  for (const auto& c : m.cases) {
    if (!c.prob) throw DataError("case '" + c.id + "' has no 'prob' entry in the manifest");
    probs.push_back(read_grid(*c.prob));
    validate_probability(probs.back());
    gts.push_back(read_mask(c.gt));
    require_same_geometry(probs.back(), gts.back(), "case '" + c.id + "'");
    ids.push_back(c.id);
  }
  EvalResult ev = evaluate_predictions(probs, gts, cfg.metrics.connectivity, cfg.metrics.small_cut_mm, ids);
  const PrcReport r = prc_report(std::move(ev), cfg.metrics, derive_seed(cfg.seed, seeds::kBootstrap));
  const fs::path out = prepare_out(a.c);
  write_prc_report(r, cfg.metrics, out, "prc", a.target_precision);
  write_run(out, "prc",
            {{"manifest", a.manifest},
             {"config", a.c.config},
             {"target_precision", a.target_precision ? json(*a.target_precision) : json(nullptr)}},
            {{"seed", cfg.seed}, {"metrics", to_json(cfg)["metrics"]}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct RaterEvalArgs {
  Common c;
  std::string study;
};

int run_rater_eval(const RaterEvalArgs& a) {
  const auto study = load_study(a.study);
  const RaterStudyReport r = rater_study_report(study);
  const fs::path out = prepare_out(a.c);
  write_rater_report(r, out);
  write_run(out, "rater-eval", {{"study", a.study}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ReproArgs {
  Common c;
  bool skip_benchmark = false;
  bool skip_study = false;
};

int run_repro(const ReproArgs& a) {
  const ExperimentConfig cfg = resolve_config(a.c);
  const fs::path out = prepare_out(a.c);
  if (!a.skip_benchmark) {
    const LossBenchmarkResult res = run_loss_benchmark(cfg, cfg.seed);
    write_loss_benchmark(res, cfg.metrics, out / "loss_benchmark");
  }
  if (!a.skip_study) {
    const auto study = run_rater_study(cfg, cfg.seed);
    write_rater_report(rater_study_report(study), out / "rater_study");
  }
  write_run(out, "repro",
            {{"config", a.c.config}, {"skip_benchmark", a.skip_benchmark}, {"skip_study", a.skip_study}},
            {{"seed", cfg.seed}, {"config", to_json(cfg)}});
  return kExitOk;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"lesionkit: lesion-wise evaluation and class-imbalance training toolkit"};
  app.set_version_flag("--version", LESIONKIT_VERSION);
  app.require_subcommand(1);

  PhantomArgs phantom;
  auto* ph = app.add_subcommand("phantom", "synthetic data");
  ph->require_subcommand(1);
  auto* gen = ph->add_subcommand("gen", "generate phantom cases");
  gen->add_option("--cases", phantom.cases, "number of cases");
  gen->add_option("--split", phantom.split, "manifest split (train, holdout, clinical)");
  gen->add_flag("--predictions", phantom.predictions, "also write simulated probability maps");
  gen->add_flag("--study", phantom.study, "write a simulated rater study instead of a dataset");
  add_config(gen, phantom.c);
  add_seed(gen, phantom.c);
  add_out(gen, phantom.c);

  LabelArgs label;
  auto* lb = app.add_subcommand("label", "connected components of a mask");
  lb->add_option("--mask", label.mask, "mask RVOL")->required();
  add_connectivity(lb, label.c);
  add_out(lb, label.c);

  WeightsArgs weights;
  auto* wt = app.add_subcommand("weights", "inverse-size voxel weights");
  wt->add_option("--mask", weights.mask, "mask RVOL")->required();
  wt->add_option("--beta", weights.beta, "positive fraction of the training split (default: of this mask)");
  add_connectivity(wt, weights.c);
  add_out(wt, weights.c);

  LossArgs loss;
  auto* ls = app.add_subcommand("loss", "loss value and gradient");
  ls->add_option("--kind", loss.kind, "bce, iwbce or dice")->required();
  ls->add_option("--prob", loss.prob, "probability RVOL")->required();
  ls->add_option("--mask", loss.mask, "ground-truth mask RVOL")->required();
  ls->add_option("--weights", loss.weights, "weight grid RVOL (iwbce)");
  ls->add_flag("--write-gradient", loss.write_gradient, "also write dLoss/dp as RVOL");
  add_out(ls, loss.c);

  SampleArgs sample;
  auto* sp = app.add_subcommand("sample", "draw training patches");
  sp->add_option("--manifest", sample.manifest, "dataset manifest JSON")->required();
  sp->add_option("--count", sample.count, "number of patches");
  sp->add_option("--patch", sample.patch, "patch size (1 or 3 values)");
  sp->add_option("--tumor-prob", sample.tumor_prob, "probability of a lesion-centered patch");
  sp->add_flag("--with-weights", sample.with_weights, "crop weight grids too");
  add_seed(sp, sample.c);
  add_connectivity(sp, sample.c);
  add_out(sp, sample.c);

  TrainArgs trn;
  auto* tr = app.add_subcommand("train", "fit the voxel classifier");
  tr->add_option("--manifest", trn.manifest, "training manifest JSON")->required();
  tr->add_option("--loss", trn.loss, "override train.loss");
  add_config(tr, trn.c);
  add_seed(tr, trn.c);
  add_connectivity(tr, trn.c);
  add_out(tr, trn.c);

  PredictArgs pred;
  auto* pr = app.add_subcommand("predict", "probability map from a trained model");
  pr->add_option("--model", pred.model, "model JSON")->required();
  pr->add_option("--image", pred.image, "image RVOL")->required();
  add_out(pr, pred.c);

  PrcArgs prc;
  auto* pc = app.add_subcommand("prc", "lesion-wise precision-recall curve");
  pc->add_option("--manifest", prc.manifest, "manifest with prob entries")->required();
  pc->add_option("--target-precision", prc.target_precision, "operating precision for the summary");
  add_config(pc, prc.c);
  add_seed(pc, prc.c);
  add_metrics(pc, prc.c);
  add_out(pc, prc.c);

  RaterEvalArgs rater;
  auto* re = app.add_subcommand("rater-eval", "rater agreement and timing tables");
  re->add_option("--study", rater.study, "study manifest JSON")->required();
  add_out(re, rater.c);

  ReproArgs repro;
  auto* rp = app.add_subcommand("repro", "run both experiments");
  rp->add_flag("--skip-benchmark", repro.skip_benchmark, "skip the loss benchmark");
  rp->add_flag("--skip-study", repro.skip_study, "skip the rater study");
  add_config(rp, repro.c);
  add_seed(rp, repro.c);
  add_metrics(rp, repro.c);
  add_out(rp, repro.c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  if (*gen) return run_phantom_gen(phantom);
  if (*lb) return run_label(label);
  if (*wt) return run_weights(weights);
  if (*ls) return run_loss(loss);
  if (*sp) return run_sample(sample);
  if (*tr) return run_train(trn);
  if (*pr) return run_predict(pred);
  if (*pc) return run_prc(prc);
  if (*re) return run_rater_eval(rater);
  if (*rp) return run_repro(repro);
  std::cerr << kUsage;
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc >= 2) {
    const std::string first = argv[1];
    const bool flag = !first.empty() && first[0] == '-';
    if (!flag && std::find(kSubcommands.begin(), kSubcommands.end(), first) == kSubcommands.end()) {
      std::cerr << "lesionkit: unknown subcommand '" << first << "'\n\n" << kUsage;
      return kExitUsage;
    }
  } else {
    std::cerr << kUsage;
    return kExitUsage;
  }
  try {
    return dispatch(argc, argv);
  } catch (const IoError& e) {
    std::cerr << "lesionkit: I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "lesionkit: I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "lesionkit: error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "lesionkit: error: " << e.what() << "\n";
    return kExitValidation;
  }
}
