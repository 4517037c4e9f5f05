#include "mctangent/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "mctangent/errors.hpp"
#include "mctangent/experiment.hpp"
#include "mctangent/io.hpp"

namespace mct {

namespace fs = std::filesystem;

namespace {

// Schema flags of one subcommand; only flags given on the command line count.
struct Overrides {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App& app) {
    for (const auto& key : config_keys()) {
      options[key] = app.add_option("--" + key, values[key], "config key " + key);
    }
  }

  Config collect() const {
    Config c;
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) c.set(key, values.at(key));
    }
    return c;
  }
};

// defaults < base (manifest echo) < --config file < flags; output.dir falls
// back to MCT_OUTPUT_DIR when no layer sets it.
ExperimentConfig resolve(const Config& base, const std::string& config_file, const Overrides& flags) {
  Config merged = schema_subset(base);
  if (!config_file.empty()) merged.merge(Config::load(config_file));
  merged.merge(flags.collect());
  if (!merged.has("output.dir")) {
    if (const char* env = std::getenv("MCT_OUTPUT_DIR"); env && *env) merged.set("output.dir", env);
  }
  return ExperimentConfig::from_config(merged);
}

fs::path or_default(const std::string& given, const fs::path& fallback) {
  return given.empty() ? fallback : fs::path(given);
}

Config checkpoint_meta(const ExperimentConfig& cfg, const TrainReport& report) {
  Config meta = cfg.to_config(false);
  meta.set_size("result.best_epoch", report.best_epoch);
  meta.set_double("result.best_ckpt_mse", report.best_ckpt_mse);
  meta.set_double("result.sigma_ref", report.sigma_ref);
  return meta;
}

int cmd_gen_data(const std::string& config_file, const Overrides& flags, const std::string& out) {
  const ExperimentConfig cfg = resolve({}, config_file, flags);
  cfg.validate();
  const fs::path dir = or_default(out, fs::path(cfg.output_dir) / "data");
  const Dataset data = generate_data(cfg);
  write_dataset(dir, cfg, data);
  std::cout << "wrote " << data.train.size() << " train and " << data.test.size() << " test trajectories to "
            << dir.string() << "\n";
  return kExitOk;
}

int cmd_train(const std::string& config_file, const Overrides& flags, const std::string& data_dir,
              const std::string& ckpt_dir, const std::string& report_path) {
  // The dataset manifest supplies the problem and discretization unless overridden.
  Config manifest;
  const ExperimentConfig probe = resolve({}, config_file, flags);
  const fs::path ddir = or_default(data_dir, fs::path(probe.output_dir) / "data");
  const Dataset data = read_dataset(ddir, &manifest);
  const ExperimentConfig cfg = resolve(manifest, config_file, flags);
  const fs::path cdir = or_default(ckpt_dir, fs::path(cfg.output_dir) / "checkpoint");
  const fs::path rpath = or_default(report_path, fs::path(cfg.output_dir) / "train_report.csv");
  try {
    const TrainResult res = run_training(cfg, data);
    train_report_csv(res.report).save(rpath);
    save_checkpoint(cdir, res.net, checkpoint_meta(cfg, res.report));
    std::cout << "trained " << res.report.epochs.size() << " epochs, best epoch " << res.report.best_epoch
              << ", checkpoint metric " << format_double(res.report.best_ckpt_mse) << "\n";
  } catch (const TrainingFailure& e) {
    train_report_csv(e.report()).save(rpath);
    throw;
  }
  return kExitOk;
}

int cmd_predict(const std::string& config_file, const Overrides& flags, const std::string& ckpt_dir,
                const std::string& initial, std::size_t index, const std::string& out) {
  const Checkpoint ck = load_checkpoint(ckpt_dir);
  const ExperimentConfig cfg = resolve(ck.manifest, config_file, flags);
  const Tensor init = read_array(initial);
  Field u0;
  if (init.rank() == 1) {
    if (index != 0) throw ValidationError("--index must be 0 for a single-state file");
    u0.assign(init.data().begin(), init.data().end());
  } else if (init.rank() == 2) {
    if (index >= init.rows()) {
      throw ValidationError("--index " + std::to_string(index) + " is out of range for " +
                            std::to_string(init.rows()) + " states");
    }
    const auto row = init.data().subspan(index * init.cols(), init.cols());
    u0.assign(row.begin(), row.end());
  } else {
    throw DimensionError("initial state file must hold a rank-1 or rank-2 array");
  }
  const double dt = cfg.predict_dt > 0.0 ? cfg.predict_dt : cfg.coarse_dt();
  const SchemeSpec scheme{cfg.scheme, cfg.newton};
  const RolloutResult res = predict(ck.net, u0, scheme, dt, cfg.predict_steps, cfg.coarse_grid());
  write_trajectory(out, res.trajectory);
  Config m;
  m.set("predict.scheme", std::string(scheme_name(cfg.scheme)));
  m.set_double("predict.dt", dt);
  m.set_size("predict.steps", cfg.predict_steps);
  m.set_size("predict.states", res.trajectory.states.size());
  m.set("predict.diverged_at", res.diverged_at ? std::to_string(*res.diverged_at) : "none");
  double worst = 0.0;
  for (double r : res.residuals) worst = std::max(worst, r);
  if (!res.residuals.empty()) m.set_double("predict.max_newton_residual", worst);
  m.save(out + ".manifest.txt");
  if (res.diverged_at) {
    std::cerr << "prediction diverged at step " << *res.diverged_at << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_eval(const std::string& pred_path, const std::string& truth_path, const std::string& out,
             const std::string& summary) {
  const Trajectory pred = tensor_to_trajectory(read_array(pred_path), 0.0, {});
  const Trajectory truth = tensor_to_trajectory(read_array(truth_path), 0.0, {});
  if (pred.state_size() != truth.state_size()) {
    throw DimensionError("prediction states have " + std::to_string(pred.state_size()) + " entries, truth has " +
                         std::to_string(truth.state_size()));
  }
  const EvalSummary s = evaluate(pred, truth);
  eval_csv(s).save(out);
  fs::path spath = summary;
  if (spath.empty()) {
    spath = fs::path(out);
    spath.replace_filename(spath.stem().string() + "_summary.csv");
  }
  eval_summary_csv(s).save(spath);
  std::cout << "final mse " << format_double(s.final_mse) << ", max " << format_double(s.max_mse) << " at step "
            << s.argmax << "\n";
  return kExitOk;
}

int cmd_diagnose(const std::string& config_file, const Overrides& flags, const std::string& ckpt_dir,
                 const std::string& data_dir, const std::string& out) {
  const Checkpoint ck = load_checkpoint(ckpt_dir);
  const ExperimentConfig cfg = resolve(ck.manifest, config_file, flags);
  const fs::path ddir = or_default(data_dir, fs::path(cfg.output_dir) / "data");
  const Dataset data = read_dataset(ddir);
  const fs::path opath =
      or_default(out, fs::path(cfg.output_dir) / ("diagnose_" + std::string(diagnose_kind_name(cfg.diagnose_kind)) + ".csv"));
  switch (cfg.diagnose_kind) {
    case DiagnoseKind::Lemma: diagnose_lemma(ck.net, cfg, data).save(opath); break;
    case DiagnoseKind::Randomization: diagnose_randomization(ck.net, cfg, data).save(opath); break;
    case DiagnoseKind::Bound: diagnose_bound(ck.net, cfg, data).save(opath); break;
  }
  std::cout << "wrote " << opath.string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"mcTangent: learned tangent slopes for PDE surrogates"};
  app.require_subcommand(1);

  std::string config_file, out, data_dir, ckpt_dir, report, initial, pred, truth, summary;
  std::size_t index = 0;

  auto* gen = app.add_subcommand("gen-data", "generate downsampled reference trajectories");
  auto* trn = app.add_subcommand("train", "train a tangent network");
  auto* prd = app.add_subcommand("predict", "roll out a checkpoint");
  auto* evl = app.add_subcommand("eval", "per-step MSE of a prediction against a truth trajectory");
  auto* dgn = app.add_subcommand("diagnose", "analysis diagnostics for a checkpoint");

  Overrides gen_flags, trn_flags, prd_flags, dgn_flags;
  for (auto [sub, flags] : {std::pair{gen, &gen_flags}, {trn, &trn_flags}, {prd, &prd_flags}, {dgn, &dgn_flags}}) {
    sub->add_option("--config", config_file, "key = value config file");
    flags->attach(*sub);
  }
  gen->add_option("--out", out, "dataset directory (default <output.dir>/data)");
  trn->add_option("--data", data_dir, "dataset directory (default <output.dir>/data)");
  trn->add_option("--checkpoint", ckpt_dir, "checkpoint directory (default <output.dir>/checkpoint)");
  trn->add_option("--report", report, "report CSV (default <output.dir>/train_report.csv)");
  prd->add_option("--checkpoint", ckpt_dir, "checkpoint directory")->required();
  prd->add_option("--initial", initial, "array file with the initial state")->required();
  prd->add_option("--index", index, "row of a trajectory file to start from");
  prd->add_option("--out", out, "output trajectory file")->required();
  evl->add_option("--pred", pred, "predicted trajectory file")->required();
  evl->add_option("--truth", truth, "truth trajectory file")->required();
  evl->add_option("--out", out, "per-step MSE CSV")->required();
  evl->add_option("--summary", summary, "summary CSV (default <out stem>_summary.csv)");
  dgn->add_option("--checkpoint", ckpt_dir, "checkpoint directory")->required();
  dgn->add_option("--data", data_dir, "dataset directory (default <output.dir>/data)");
  dgn->add_option("--out", out, "output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(config_file, gen_flags, out);
    if (trn->parsed()) return cmd_train(config_file, trn_flags, data_dir, ckpt_dir, report);
    if (prd->parsed()) return cmd_predict(config_file, prd_flags, ckpt_dir, initial, index, out);
    if (evl->parsed()) return cmd_eval(pred, truth, out, summary);
    if (dgn->parsed()) return cmd_diagnose(config_file, dgn_flags, ckpt_dir, data_dir, out);
  } catch (const TrainingFailure& e) {
    std::cerr << "error: training failed: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ImplicitSolveError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const LinearSolveError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"mctangent"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace mct
