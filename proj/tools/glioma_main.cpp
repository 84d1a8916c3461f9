// Operator surface for the glioma pipeline:
//   phantom-gen -> preprocess -> train -> segment -> evaluate
// plus the survival chain and report rendering. Every command writes a
// manifest next to its outputs with the full config snapshot and seed.

#include <omp.h>

#include <chrono>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "glioma/checkpoint.hpp"
#include "glioma/config.hpp"
#include "glioma/kernels.hpp"
#include "glioma/manifest.hpp"
#include "glioma/metrics.hpp"
#include "glioma/phantom.hpp"
#include "glioma/preprocess.hpp"
#include "glioma/report.hpp"
#include "glioma/survival.hpp"
#include "glioma/train.hpp"
#include "glioma/volume_io.hpp"

namespace fs = std::filesystem;
using namespace glioma;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec && !fs::is_directory(p)) {
    fail(ErrorCode::IoError, "cannot create directory " + p.string());
  }
}

void finish_manifest(RunManifest& m, const fs::path& out_dir,
                     const Timer& timer) {
  m.wall_time_s = timer.seconds();
  write_manifest(out_dir / ("manifest_" + m.command + ".json"), m);
}

std::map<std::string, std::string> snapshot(const KeyValueConfig& cfg) {
  return cfg.entries();
}

// --- phantom-gen -------------------------------------------------------------

PhantomSpec phantom_spec_from_config(const KeyValueConfig& cfg) {
  PhantomSpec spec;
  int64_t d = cfg.get_int("dims", 64);
  spec.dims = {int32_t(cfg.get_int("dims_x", d)), int32_t(cfg.get_int("dims_y", d)),
               int32_t(cfg.get_int("dims_z", d))};
  spec.seed = uint64_t(cfg.get_int("seed", 0));
  spec.tumor_count = int(cfg.get_int("tumor_count", 1));
  spec.tumor_radius_min = cfg.get_double("tumor_radius_min", 7.0);
  spec.tumor_radius_max = cfg.get_double("tumor_radius_max", 14.0);
  spec.tc_ratio = cfg.get_double("tc_ratio", 0.70);
  spec.et_ratio = cfg.get_double("et_ratio", 0.45);
  spec.noise_std = cfg.get_double("noise_std", 0.02);
  spec.bias_field = cfg.get_bool("bias_field", false);
  spec.bias_degree = int(cfg.get_int("bias_degree", 2));
  spec.bias_amplitude = cfg.get_double("bias_amplitude", 0.25);
  spec.survival_intercept = cfg.get_double("survival_intercept", 100.0);
  spec.survival_slope = cfg.get_double("survival_slope", 2800.0);
  spec.survival_noise_std = cfg.get_double("survival_noise_std", 30.0);
  return spec;
}

int cmd_phantom_gen(const fs::path& out_dir, int count,
                    KeyValueConfig cfg) {
  Timer timer;
  ensure_dir(out_dir);
  PhantomSpec spec = phantom_spec_from_config(cfg);
  generate_dataset(spec, count, out_dir);
  RunManifest m;
  m.command = "phantom-gen";
  m.seed = spec.seed;
  cfg.set("count", std::to_string(count));
  m.config = snapshot(cfg);
  m.outputs.push_back(out_dir.string());
  finish_manifest(m, out_dir, timer);
  return 0;
}

// --- preprocess ---------------------------------------------------------------

int cmd_preprocess(const fs::path& data_dir, const fs::path& out_dir,
                   KeyValueConfig cfg, int jobs) {
  Timer timer;
  ensure_dir(out_dir);
  auto ids = list_case_ids(data_dir);
  if (ids.empty()) fail(ErrorCode::DataError, "no cases in " + data_dir.string());

  PreprocessConfig pp;
  pp.reference_case = cfg.get_string("reference_case", ids.front());
  pp.histogram_bins = int(cfg.get_int("histogram_bins", 256));
  pp.bias_degree = int(cfg.get_int("bias_degree", 3));
  pp.enable_bias_correction = cfg.get_bool("enable_bias_correction", true);
  pp.enable_histogram_match = cfg.get_bool("enable_histogram_match", true);

  // the reference case is bias-corrected first so everyone matches against
  // corrected intensities
  MultimodalCase reference = load_case(data_dir, pp.reference_case);
  if (pp.enable_bias_correction) {
    BrainMask ref_mask = compute_brain_mask(reference);
    for (int mod = 0; mod < kModalityCount; ++mod) {
      reference.modality(mod) =
          bias_correct(reference.modality(mod), ref_mask, pp.bias_degree);
    }
  }

  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
  for (int64_t i = 0; i < int64_t(ids.size()); ++i) {
    try {
      MultimodalCase c = load_case(data_dir, ids[size_t(i)]);
      MultimodalCase out = preprocess_case(c, reference, pp);
      fs::path case_dir = out_dir / out.case_id;
      ensure_dir(case_dir);
      for (int mod = 0; mod < kModalityCount; ++mod) {
        write_nifti_file(
            case_dir / (out.case_id + "_" + kModalityNames[mod] + ".nii.gz"),
            out.modality(mod));
      }
      if (c.labels) {
        write_nifti_file(case_dir / (out.case_id + "_seg.nii.gz"),
                         labels_to_grid(*c.labels));
      }
      nlohmann::json prov;
      prov["case_id"] = out.case_id;
      prov["steps"] = nlohmann::json::array();
      if (pp.enable_bias_correction) {
        prov["steps"].push_back(
            {{"step", "bias_correct"}, {"degree", pp.bias_degree}});
      }
      if (pp.enable_histogram_match && out.case_id != pp.reference_case) {
        prov["steps"].push_back({{"step", "histogram_match"},
                                 {"bins", pp.histogram_bins},
                                 {"reference_case", pp.reference_case}});
      }
      prov["steps"].push_back({{"step", "zscore_normalize"}});
      std::string s = prov.dump(2);
      s.push_back('\n');
      write_file_bytes(case_dir / (out.case_id + "_provenance.json"),
                       std::vector<uint8_t>(s.begin(), s.end()));
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  RunManifest m;
  m.command = "preprocess";
  cfg.set("reference_case", pp.reference_case);
  m.config = snapshot(cfg);
  m.inputs.push_back(data_dir.string());
  m.outputs.push_back(out_dir.string());
  finish_manifest(m, out_dir, timer);
  return 0;
}

// --- train ---------------------------------------------------------------------

int cmd_train(const fs::path& data_dir, const fs::path& out_dir,
              KeyValueConfig cfg) {
  Timer timer;
  ensure_dir(out_dir);
  auto ids = list_case_ids(data_dir);
  if (ids.empty()) fail(ErrorCode::EmptyDataset, "no cases in " + data_dir.string());

  std::vector<MultimodalCase> dataset;
  for (const auto& id : ids) dataset.push_back(load_case(data_dir, id));

  TrainConfig tc;
  tc.epochs = int(cfg.get_int("epochs"));
  tc.lr = cfg.get_double("lr", 1e-3);
  tc.seed = uint64_t(cfg.get_int("seed", 1));
  int64_t vd = cfg.get_int("volume_dims", 64);
  tc.volume_dims = {int32_t(vd), int32_t(vd), int32_t(vd)};
  tc.checkpoint_cadence = int(cfg.get_int("checkpoint_cadence", 0));
  tc.aux_loss_weight = cfg.get_double("aux_loss_weight", 0.5);
  tc.early_stop_loss = cfg.get_double("early_stop_loss", 0.0);
  for (int c = 0; c < 4; ++c) {
    tc.class_weights[size_t(c)] =
        cfg.get_double("class_weight_" + std::to_string(c), 1.0);
  }

  PathConfig local{int(cfg.get_int("local_levels", 3)),
                   int(cfg.get_int("local_base_channels", 8)),
                   InputResolution::Original};
  PathConfig global_cfg{int(cfg.get_int("global_levels", 2)),
                        int(cfg.get_int("global_base_channels", 8)),
                        InputResolution::Half};
  FusionMode fusion = cfg.get_string("fusion_mode", "concat_conv") == "average"
                          ? FusionMode::Average
                          : FusionMode::ConcatConv;

  DualPathModel model =
      build_model<float>(local, global_cfg, tc.seed, fusion);
  TrainResult result = train(model, dataset, tc, out_dir);

  std::string curve = "epoch,mean_loss\n";
  for (size_t e = 0; e < result.epoch_loss.size(); ++e) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", e + 1, result.epoch_loss[e]);
    curve += buf;
  }
  write_file_bytes(out_dir / "loss_curve.csv",
                   std::vector<uint8_t>(curve.begin(), curve.end()));

  RunManifest m;
  m.command = "train";
  m.seed = tc.seed;
  m.config = snapshot(cfg);
  m.inputs.push_back(data_dir.string());
  m.outputs.push_back((out_dir / "checkpoint_final.ckpt").string());
  m.outputs.push_back((out_dir / "loss_curve.csv").string());
  finish_manifest(m, out_dir, timer);
  return 0;
}

// --- segment --------------------------------------------------------------------

int cmd_segment(const fs::path& model_path, const fs::path& data_dir,
                const fs::path& out_dir, std::vector<std::string> cases,
                const std::string& path_sel) {
  Timer timer;
  ensure_dir(out_dir);
  DualPathModel model = load_checkpoint(model_path);
  if (cases.empty()) cases = list_case_ids(data_dir);
  if (cases.empty()) fail(ErrorCode::DataError, "no cases in " + data_dir.string());
  PathSelector sel = path_sel == "local"    ? PathSelector::LocalOnly
                     : path_sel == "global" ? PathSelector::GlobalOnly
                                            : PathSelector::Fused;

  RunManifest m;
  m.command = "segment";
  m.seed = model.seed;
  m.config["model"] = model_path.string();
  m.config["path"] = path_sel;
  m.inputs.push_back(data_dir.string());
  for (const auto& id : cases) {
    MultimodalCase c = load_case(data_dir, id);
    LabelVolume pred = predict_labels(model, c, sel);
    fs::path out = out_dir / (id + ".nii.gz");
    write_nifti_file(out, labels_to_grid(pred));
    m.outputs.push_back(out.string());
  }
  finish_manifest(m, out_dir, timer);
  return 0;
}

// --- evaluate --------------------------------------------------------------------

int cmd_evaluate(const fs::path& pred_dir, const fs::path& truth_dir,
                 const fs::path& out_dir, int jobs) {
  Timer timer;
  ensure_dir(out_dir);
  auto ids = list_case_ids(truth_dir);
  if (ids.empty()) fail(ErrorCode::DataError, "no cases in " + truth_dir.string());

  std::vector<CaseEvaluation> evals(ids.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
  for (int64_t i = 0; i < int64_t(ids.size()); ++i) {
    try {
      const std::string& id = ids[size_t(i)];
      MultimodalCase c = load_case(truth_dir, id);
      if (!c.labels) {
        fail(ErrorCode::DataError, "case " + id + " has no _seg ground truth");
      }
      fs::path pred_path = pred_dir / (id + ".nii.gz");
      if (!fs::exists(pred_path)) pred_path = pred_dir / (id + ".nii");
      LabelVolume pred = grid_to_labels(read_nifti_file(pred_path));
      evals[size_t(i)] = {id, evaluate_case(pred, *c.labels,
                                            c.flair.header.spacing)};
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  write_evaluation_csv(out_dir / "per_case.csv", evals);
  write_evaluation_json(out_dir / "aggregate.json", evals);

  RunManifest m;
  m.command = "evaluate";
  m.inputs = {pred_dir.string(), truth_dir.string()};
  m.outputs = {(out_dir / "per_case.csv").string(),
               (out_dir / "aggregate.json").string()};
  finish_manifest(m, out_dir, timer);
  return 0;
}

// --- survival chain -----------------------------------------------------------

std::vector<SurvivalTrainRecord> collect_features(
    const fs::path& data_dir, const fs::path& labels_dir,
    const std::vector<std::pair<std::string, double>>* truth) {
  auto ids = list_case_ids(data_dir);
  if (ids.empty()) fail(ErrorCode::DataError, "no cases in " + data_dir.string());
  std::vector<SurvivalTrainRecord> records;
  for (const auto& id : ids) {
    MultimodalCase c = load_case(data_dir, id);
    LabelVolume labels;
    if (!labels_dir.empty()) {
      fs::path p = labels_dir / (id + ".nii.gz");
      if (!fs::exists(p)) p = labels_dir / (id + ".nii");
      labels = grid_to_labels(read_nifti_file(p));
    } else if (c.labels) {
      labels = *c.labels;
    } else {
      fail(ErrorCode::DataError, "case " + id + " has no labels");
    }
    BrainMask brain = compute_brain_mask(c);
    SurvivalTrainRecord rec;
    rec.case_id = id;
    rec.features = extract_features(c, labels, brain);
    if (truth) {
      auto it = std::find_if(truth->begin(), truth->end(),
                             [&](const auto& kv) { return kv.first == id; });
      if (it == truth->end()) continue;  // cases without survival info are skipped
      rec.true_days = it->second;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

int cmd_survival_train(const fs::path& data_dir, const fs::path& labels_dir,
                       const fs::path& truth_csv, const fs::path& out_dir,
                       KeyValueConfig cfg) {
  Timer timer;
  ensure_dir(out_dir);
  auto truth = read_truth_csv(truth_csv);
  auto records = collect_features(data_dir, labels_dir, &truth);

  ForestConfig fc;
  fc.tree_count = int(cfg.get_int("tree_count", 30));
  fc.max_depth = int(cfg.get_int("max_depth", 10));
  fc.seed = uint64_t(cfg.get_int("seed", 0));

  if (cfg.get_bool("cross_validate", false)) {
    std::vector<std::pair<int, int>> grid;
    for (int trees : {10, 20, 30, 50}) {
      for (int depth : {4, 6, 8, 10}) grid.emplace_back(trees, depth);
    }
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (const auto& r : records) {
      X.push_back(r.features.vector());
      y.push_back(r.true_days);
    }
    CvResult cv = cross_validate(X, y, int(cfg.get_int("cv_folds", 5)), grid,
                                 fc.seed, bucket_accuracy_scorer());
    fc.tree_count = cv.best.tree_count;
    fc.max_depth = cv.best.max_depth;
  }

  ForestModel model = train_survival(records, fc);
  save_forest(out_dir / "forest.json", model);
  write_features_csv(out_dir / "features.csv", records, /*with_days=*/true);

  RunManifest m;
  m.command = "survival-train";
  m.seed = fc.seed;
  cfg.set("tree_count", std::to_string(fc.tree_count));
  cfg.set("max_depth", std::to_string(fc.max_depth));
  m.config = snapshot(cfg);
  m.inputs = {data_dir.string(), truth_csv.string()};
  m.outputs = {(out_dir / "forest.json").string(),
               (out_dir / "features.csv").string()};
  finish_manifest(m, out_dir, timer);
  return 0;
}

int cmd_survival_predict(const fs::path& model_path, const fs::path& data_dir,
                         const fs::path& labels_dir, const fs::path& out_dir) {
  Timer timer;
  ensure_dir(out_dir);
  ForestModel model = load_forest(model_path);
  auto records = collect_features(data_dir, labels_dir, nullptr);
  std::vector<SurvivalRecord> predictions;
  for (const auto& r : records) {
    SurvivalRecord p;
    p.case_id = r.case_id;
    p.predicted_days = model.predict(r.features.vector());
    p.predicted_class = bucketize_days(p.predicted_days);
    predictions.push_back(std::move(p));
  }
  write_predictions_csv(out_dir / "predictions.csv", predictions);

  RunManifest m;
  m.command = "survival-predict";
  m.config["model"] = model_path.string();
  m.inputs = {data_dir.string()};
  m.outputs = {(out_dir / "predictions.csv").string()};
  finish_manifest(m, out_dir, timer);
  return 0;
}

int cmd_survival_evaluate(const fs::path& pred_csv, const fs::path& truth_csv,
                          const fs::path& out_dir) {
  Timer timer;
  ensure_dir(out_dir);
  auto predictions = read_predictions_csv(pred_csv);
  auto truth = read_truth_csv(truth_csv);
  for (auto& p : predictions) {
    auto it = std::find_if(truth.begin(), truth.end(),
                           [&](const auto& kv) { return kv.first == p.case_id; });
    if (it != truth.end()) p.true_days = it->second;
  }
  SurvivalReport report = evaluate_survival(predictions);
  write_survival_report_json(out_dir / "survival_report.json", report);

  RunManifest m;
  m.command = "survival-evaluate";
  m.inputs = {pred_csv.string(), truth_csv.string()};
  m.outputs = {(out_dir / "survival_report.json").string()};
  finish_manifest(m, out_dir, timer);
  return 0;
}

// --- report ----------------------------------------------------------------------

int cmd_report(const fs::path& eval_dir, const fs::path& survival_json,
               const fs::path& data_dir, const fs::path& pred_dir,
               std::vector<std::string> cases, const fs::path& out_dir) {
  Timer timer;
  ensure_dir(out_dir);
  std::string text;
  RunManifest m;
  m.command = "report";

  if (!eval_dir.empty()) {
    auto evals = read_evaluation_csv(eval_dir / "per_case.csv");
    text += render_segmentation_table(evals);
    text += "\n";
    m.inputs.push_back(eval_dir.string());
  }
  if (!survival_json.empty()) {
    auto bytes = read_file_bytes(survival_json);
    nlohmann::json j = nlohmann::json::parse(bytes.begin(), bytes.end());
    SurvivalReport rep;
    rep.cases = j.value("cases", 0);
    rep.accuracy = j.value("accuracy", 0.0);
    rep.mse = j.value("mse", 0.0);
    rep.median_se = j.value("median_se", 0.0);
    rep.std_se = j.value("std_se", 0.0);
    rep.spearman_r = j.value("spearman_r", 0.0);
    text += render_survival_table(rep);
    text += "\n";
    m.inputs.push_back(survival_json.string());
  }
  if (!text.empty()) {
    write_file_bytes(out_dir / "report.txt",
                     std::vector<uint8_t>(text.begin(), text.end()));
    m.outputs.push_back((out_dir / "report.txt").string());
    std::cout << text;
  }

  if (!data_dir.empty() && !pred_dir.empty()) {
    if (cases.empty()) {
      cases = list_case_ids(data_dir);
      if (cases.size() > 3) cases.resize(3);  // a few representative overlays
    }
    for (const auto& id : cases) {
      MultimodalCase c = load_case(data_dir, id);
      fs::path p = pred_dir / (id + ".nii.gz");
      if (!fs::exists(p)) p = pred_dir / (id + ".nii");
      LabelVolume pred = grid_to_labels(read_nifti_file(p));
      write_overlay_pngs(c, pred, out_dir, id);
      for (const char* view : {"axial", "sagittal", "coronal"}) {
        m.outputs.push_back((out_dir / (id + "_" + view + ".png")).string());
      }
    }
    m.inputs.push_back(data_dir.string());
    m.inputs.push_back(pred_dir.string());
  }
  finish_manifest(m, out_dir, timer);
  return 0;
}

KeyValueConfig load_config_opt(const std::string& path) {
  return path.empty() ? KeyValueConfig() : KeyValueConfig::parse_file(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-resolution glioma segmentation and survival prediction"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  int jobs = 0;
  bool serial_kernels = false;
  app.add_option("--jobs", jobs, "worker threads (0 = hardware default)");
  app.add_flag("--serial-kernels", serial_kernels,
               "run the serial reference kernels instead of OpenMP");

  std::string out, data, config_path, model, pred, truth, labels, eval_dir,
      survival_json, path_sel = "fused";
  std::vector<std::string> cases;
  int count = 10;

  auto* gen = app.add_subcommand("phantom-gen", "generate synthetic cases");
  gen->add_option("--out", out)->required();
  gen->add_option("--count", count);
  gen->add_option("--config", config_path);

  auto* prep = app.add_subcommand("preprocess", "bias correct, match, z-score");
  prep->add_option("--data", data)->required();
  prep->add_option("--out", out)->required();
  prep->add_option("--config", config_path);

  auto* tr = app.add_subcommand("train", "train the dual-path model");
  tr->add_option("--data", data)->required();
  tr->add_option("--out", out)->required();
  tr->add_option("--config", config_path)->required();

  auto* seg = app.add_subcommand("segment", "predict label volumes");
  seg->add_option("--model", model)->required();
  seg->add_option("--data", data)->required();
  seg->add_option("--out", out)->required();
  seg->add_option("--cases", cases);
  seg->add_option("--path", path_sel)
      ->check(CLI::IsMember({"fused", "local", "global"}));

  auto* ev = app.add_subcommand("evaluate", "score predictions against truth");
  ev->add_option("--pred", pred)->required();
  ev->add_option("--truth-data", data)->required();
  ev->add_option("--out", out)->required();

  auto* st = app.add_subcommand("survival-train", "fit the survival forest");
  st->add_option("--data", data)->required();
  st->add_option("--labels", labels);
  st->add_option("--truth", truth)->required();
  st->add_option("--out", out)->required();
  st->add_option("--config", config_path);

  auto* sp = app.add_subcommand("survival-predict", "predict survival days");
  sp->add_option("--model", model)->required();
  sp->add_option("--data", data)->required();
  sp->add_option("--labels", labels);
  sp->add_option("--out", out)->required();

  auto* se = app.add_subcommand("survival-evaluate", "score survival predictions");
  se->add_option("--pred", pred)->required();
  se->add_option("--truth", truth)->required();
  se->add_option("--out", out)->required();

  auto* rep = app.add_subcommand("report", "render tables and overlays");
  rep->add_option("--eval", eval_dir);
  rep->add_option("--survival-report", survival_json);
  rep->add_option("--data", data);
  rep->add_option("--pred", pred);
  rep->add_option("--cases", cases);
  rep->add_option("--out", out)->required();

  CLI11_PARSE(app, argc, argv);

  if (jobs > 0) omp_set_num_threads(jobs);
  kernels::set_parallel(!serial_kernels);
  int case_jobs = jobs > 0 ? jobs : omp_get_max_threads();

  try {
    if (gen->parsed()) return cmd_phantom_gen(out, count, load_config_opt(config_path));
    if (prep->parsed()) {
      return cmd_preprocess(data, out, load_config_opt(config_path), case_jobs);
    }
    if (tr->parsed()) {
      return cmd_train(data, out, KeyValueConfig::parse_file(config_path));
    }
    if (seg->parsed()) return cmd_segment(model, data, out, cases, path_sel);
    if (ev->parsed()) return cmd_evaluate(pred, data, out, case_jobs);
    if (st->parsed()) {
      return cmd_survival_train(data, labels, truth, out,
                                load_config_opt(config_path));
    }
    if (sp->parsed()) return cmd_survival_predict(model, data, labels, out);
    if (se->parsed()) return cmd_survival_evaluate(pred, truth, out);
    if (rep->parsed()) {
      return cmd_report(eval_dir, survival_json, data, pred, cases, out);
    }
  } catch (const Error& e) {
    std::cerr << "ERROR " << error_code_name(e.code()) << ": " << e.what()
              << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "ERROR Internal: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
