#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "attrenh/dataset.hpp"
#include "attrenh/pipeline.hpp"
#include "attrenh/report.hpp"
#include "attrenh/synth.hpp"
#include "attrenh/train.hpp"

namespace attrenh {

namespace fs = std::filesystem;

namespace {

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", path, "TOML config (defaults to the desk preset)");
    cmd->add_option("--set", overrides, "dotted override, e.g. classifier.epochs=3")->take_all();
  }
  RunConfig resolve() const {
    return resolve_config(path.empty() ? RunConfig::desk() : load_config(path), overrides);
  }
};

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write " + path.string());
  f << text;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot read " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

void snapshot(const fs::path& dir, const std::string& name, const RunConfig& cfg) {
  write_file(dir / (name + "_config.toml"), cfg.to_toml());
}

/// Snapshot beside a single output file: report.json -> report_config.toml.
void snapshot_beside(const fs::path& file, const RunConfig& cfg) {
  const fs::path dir = file.has_parent_path() ? file.parent_path() : fs::path(".");
  snapshot(dir, file.stem().string(), cfg);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"People-attribute classification with de-occlusion and super-resolution networks", "attrenh"};
  app.require_subcommand(1);

  // dataset build
  auto* dataset = app.add_subcommand("dataset", "synthetic dataset tools")->require_subcommand(1);
  auto* build = dataset->add_subcommand("build", "render train/test people and their corrupted variants");
  ConfigArgs build_cfg;
  build_cfg.attach(build);
  std::string build_out;
  bool overwrite = false;
  build->add_option("--out", build_out, "dataset directory")->required();
  build->add_flag("--overwrite", overwrite, "replace an existing dataset in --out");

  // train classifier / train gan
  auto* train = app.add_subcommand("train", "train a network")->require_subcommand(1);
  auto* train_clf = train->add_subcommand("classifier", "part-based attribute classifier");
  auto* train_gan_cmd = train->add_subcommand("gan", "reconstruction or super-resolution network");
  ConfigArgs train_cfg;
  std::string data_dir, train_out, which = "reconstruction";
  bool resume = false;
  for (auto* cmd : {train_clf, train_gan_cmd}) {
    train_cfg.attach(cmd);
    cmd->add_option("--data", data_dir, "dataset directory from `dataset build`")->required();
    cmd->add_option("--out", train_out, "models directory")->required();
    cmd->add_flag("--resume", resume, "continue from checkpoints in --out");
  }
  train_gan_cmd->add_option("--which", which, "reconstruction or sr")->check(CLI::IsMember({"reconstruction", "sr"}));

  // eval
  auto* eval = app.add_subcommand("eval", "classify a manifest and report the five metrics");
  ConfigArgs eval_cfg;
  eval_cfg.attach(eval);
  std::string models_dir, manifest, report_out = "report.json", enhance = "none";
  eval->add_option("--models", models_dir, "models directory")->required();
  eval->add_option("--manifest", manifest, "manifest .jsonl")->required();
  eval->add_option("--out", report_out, "report path");
  eval->add_option("--enhance", enhance, "apply a generator first: none, reconstruction or sr")
      ->check(CLI::IsMember({"none", "reconstruction", "sr"}));

  // pipeline run
  auto* pipeline = app.add_subcommand("pipeline", "complete model")->require_subcommand(1);
  auto* prun = pipeline->add_subcommand("run", "direct versus restored evaluation of a manifest");
  ConfigArgs pipe_cfg;
  pipe_cfg.attach(prun);
  double trigger = -1;
  prun->add_option("--models", models_dir, "models directory")->required();
  prun->add_option("--manifest", manifest, "manifest .jsonl")->required();
  prun->add_option("--out", report_out, "report path");
  prun->add_option("--trigger", trigger, "occlusion_down probability that triggers reconstruction");

  // report plot / table2
  auto* report = app.add_subcommand("report", "plots and tables")->require_subcommand(1);
  auto* plot = report->add_subcommand("plot", "SVG curves of a training history");
  std::string history, plot_out;
  plot->add_option("--history", history, "history .jsonl")->required();
  plot->add_option("--out", plot_out, "SVG path (a .csv is written beside it)")->required();
  auto* table = report->add_subcommand("table2", "corrupted versus enhanced comparison on the test sets");
  ConfigArgs table_cfg;
  table_cfg.attach(table);
  std::string table_out;
  table->add_option("--models", models_dir, "models directory")->required();
  table->add_option("--data", data_dir, "dataset directory")->required();
  table->add_option("--out", table_out, "output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (build->parsed()) {
      const RunConfig cfg = build_cfg.resolve();
      const auto summary = build_dataset(cfg, build_out, overwrite);
      snapshot(build_out, "dataset", cfg);
      for (const auto& [file, n] : summary.counts) out << file << ": " << n << "\n";
      out << "schema: " << summary.schema.size() << " attributes\n";
    } else if (train_clf->parsed() || train_gan_cmd->parsed()) {
      const RunConfig cfg = train_cfg.resolve();
      fs::create_directories(train_out);
      const std::string run = train_clf->parsed() ? std::string(kinds::kClassifier) : which;
      snapshot(train_out, run, cfg);
      std::ofstream log(fs::path(train_out) / (run + "_run.log"), std::ios::trunc);
      TrainOptions opts{train_out, resume, &log};
      const fs::path data(data_dir);
      TrainResult result;
      if (train_clf->parsed()) {
        const LoadedSet tr = load_set(data / manifests::kTrainClassifier);
        const LoadedSet te = load_set(data / manifests::kTestClean);
        result = train_classifier(cfg, tr, &te, opts);
      } else {
        const EnhancerKind kind = enhancer_from_string(which);
        const bool rec = kind == EnhancerKind::Reconstruction;
        const LoadedSet clean = load_set(data / manifests::kTrainClean);
        const LoadedSet corrupted = load_set(data / (rec ? manifests::kTrainOccluded : manifests::kTrainLowres));
        const LoadedSet test_clean = load_set(data / manifests::kTestClean);
        const LoadedSet test_corrupted = load_set(data / (rec ? manifests::kTestOccluded : manifests::kTestLowres));
        result = train_gan(cfg, kind, corrupted, clean, &test_corrupted, &test_clean, opts);
      }
      if (!result.history.empty()) out << result.history.back() << "\n";
      for (const auto& p : result.checkpoints) out << "wrote " << p.string() << "\n";
    } else if (eval->parsed()) {
      const RunConfig cfg = eval_cfg.resolve();
      ClassifierModel clf = load_classifier(fs::path(models_dir) / checkpoint_file(kinds::kClassifier));
      LoadedSet set = load_set(manifest);
      std::vector<Tensor<float>> images = set.images;
      if (enhance != "none") {
        const EnhancerKind kind = enhancer_from_string(enhance);
        GeneratorModel g = load_generator(fs::path(models_dir) / checkpoint_file(generator_kind(kind)), kind,
                                          clf.config_hash);
        images = generate(*g.net, images);
      }
      for (auto& img : images) {
        const Shape s = img.shape();
        if (s.h * 4 == clf.net->spec().height && s.w * 4 == clf.net->spec().width) img = upsample_bilinear(img, 4);
      }
      if (set.schema.names != clf.schema.names) throw ConfigError("manifest schema differs from the classifier's");
      auto probs = predict_probs(*clf.net, images);
      if (enhance == "reconstruction") {
        // occlusion bit from the unreconstructed input, as in the pipeline
        const auto before = predict_probs(*clf.net, set.images);
        const std::size_t a = set.schema.names.size();
        const auto occ = static_cast<std::size_t>(set.schema.occlusion_down_index);
        for (std::size_t i = 0; i < set.images.size(); ++i) probs[i * a + occ] = before[i * a + occ];
      }
      const auto report = evaluate(probs, set.label_matrix(), set.schema.names, cfg.classifier.threshold);
      write_file(report_out, report_to_json(report) + "\n");
      snapshot_beside(report_out, cfg);
      out << "mA " << report.mA << " accuracy " << report.accuracy << " precision " << report.precision << " recall "
          << report.recall << " f1 " << report.f1 << "\n";
    } else if (prun->parsed()) {
      RunConfig cfg = pipe_cfg.resolve();
      if (trigger >= 0) cfg.set("pipeline.trigger", std::to_string(trigger));
      cfg.validate();
      PipelineModels models = load_models(models_dir, cfg.pipeline.trigger);
      const LoadedSet set = load_set(manifest);
      const BatchOutcome o = run_batch(set, models, cfg.classifier.threshold);
      write_file(report_out, outcome_to_json(o));
      fs::path csv = report_out;
      csv.replace_extension(".csv");
      write_file(csv, delta_csv(o.delta));
      snapshot_beside(report_out, cfg);
      out << "corrupted mA " << o.corrupted.mA << " restored mA " << o.restored.mA << " (sr " << o.sr_runs
          << ", reconstruction " << o.reconstruction_runs << ", false triggers " << o.false_triggers << ")\n";
    } else if (plot->parsed()) {
      std::string csv;
      const std::string svg = plot_history_svg(read_lines(history), &csv);
      write_file(plot_out, svg);
      fs::path csv_path = plot_out;
      csv_path.replace_extension(".csv");
      write_file(csv_path, csv);
      out << "wrote " << plot_out << " and " << csv_path.string() << "\n";
    } else if (table->parsed()) {
      const RunConfig cfg = table_cfg.resolve();
      PipelineModels models = load_models(models_dir, cfg.pipeline.trigger);
      const Table2 t = reproduce_table2(models, data_dir, cfg.classifier.threshold);
      const fs::path dir(table_out);
      write_file(dir / "table2.csv", table2_csv(t));
      write_file(dir / "table2.json", table2_json(t));
      write_file(dir / "table2.md", table2_markdown(t));
      snapshot(dir, "table2", cfg);
      out << table2_markdown(t);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const SizeError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace attrenh
