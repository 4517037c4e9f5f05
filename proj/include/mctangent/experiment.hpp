#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mctangent/analysis.hpp"
#include "mctangent/field.hpp"
#include "mctangent/integrators.hpp"
#include "mctangent/io.hpp"
#include "mctangent/network.hpp"
#include "mctangent/pde.hpp"
#include "mctangent/training.hpp"

namespace mct {

enum class DiagnoseKind { Lemma, Randomization, Bound };

std::string_view diagnose_kind_name(DiagnoseKind k) noexcept;
DiagnoseKind parse_diagnose_kind(std::string_view name);

/// Everything one experiment needs. Keys of the flat config are listed by
/// config_keys(); the coarse step is (T / fine_steps) * time_stride.
struct ExperimentConfig {
  Problem problem = Problem::Transport;

  std::size_t fine_n = 1000;
  std::size_t space_stride = 10;
  std::size_t fine_steps = 400;
  double T = 0.2;
  std::size_t time_stride = 4;
  std::size_t test_steps = 0;  // coarse steps of test trajectories; 0 means the training length

  double speed = 1.0;
  double nu = 0.0;

  std::size_t train_samples = 100;
  std::size_t test_samples = 10;
  std::uint64_t data_seed = 0;

  Architecture arch = Architecture::Linear;
  std::size_t hidden = 0;
  bool use_bias = true;
  double init_std = 0.1;

  TrainConfig train;

  Scheme scheme = Scheme::FE;
  std::size_t predict_steps = 100;
  double predict_dt = 0.0;  // 0: the coarse training step
  NewtonOptions newton;

  DiagnoseKind diagnose_kind = DiagnoseKind::Bound;
  std::size_t diagnose_samples = 10000;
  double diagnose_delta = 0.02;
  std::size_t diagnose_steps = 50;
  RemainderPolicy diagnose_policy = RemainderPolicy::FiniteDifference;
  std::uint64_t diagnose_seed = 3;
  std::size_t diagnose_states = 5;

  std::string output_dir = "mct_out";
  std::size_t threads = 0;

  static ExperimentConfig defaults(Problem p);
  /// Defaults for the config's problem, overridden by every key present.
  /// Unknown keys and malformed values raise ValidationError naming the key.
  static ExperimentConfig from_config(const Config& cfg);
  /// All schema keys. `runtime` adds output.dir and threads, which never
  /// influence results and are left out of echoed manifests.
  Config to_config(bool runtime = true) const;

  Grid fine_grid() const;
  Grid coarse_grid() const;
  double fine_dt() const;
  double coarse_dt() const;
  std::size_t coarse_train_steps() const;
  std::size_t coarse_test_steps() const;

  void validate() const;
};

/// Every key understood by ExperimentConfig::from_config.
const std::vector<std::string>& config_keys();
/// The schema keys of `cfg`; manifests carry extra keys that this drops.
Config schema_subset(const Config& cfg);

struct Dataset {
  std::vector<Trajectory> train;
  std::vector<Trajectory> test;
};

TruthTangent fine_truth(const ExperimentConfig& cfg);
TruthTangent coarse_truth(const ExperimentConfig& cfg);

/// Initial condition for one sample on the fine grid.
Field sample_initial(const ExperimentConfig& cfg, Rng& rng);

/// Fine reference solves downsampled to the coarse discretization. Sample i
/// of the train (test) split draws from stream (data_seed, "data") split
/// (0 (1), i), so results do not depend on the thread count.
Dataset generate_data(const ExperimentConfig& cfg);

void write_dataset(const std::filesystem::path& dir, const ExperimentConfig& cfg, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& dir, Config* manifest = nullptr);

TangentNetwork initial_network(const ExperimentConfig& cfg);

TrainResult run_training(const ExperimentConfig& cfg, const Dataset& data, const EpochCallback& on_epoch = {});

CsvWriter train_report_csv(const TrainReport& report);

/// Rollout of a checkpoint: the chosen scheme for tangent nets, the iterated
/// map for direct nets (FE only).
RolloutResult predict(const TangentNetwork& net, std::span<const double> u0, const SchemeSpec& scheme, double dt,
                      std::size_t steps, Grid grid = {});

struct EvalSummary {
  std::vector<double> mse;
  double final_mse = 0.0;
  double max_mse = 0.0;
  std::size_t argmax = 0;
};

EvalSummary evaluate(const Trajectory& pred, const Trajectory& truth);
CsvWriter eval_csv(const EvalSummary& s);
CsvWriter eval_summary_csv(const EvalSummary& s);

/// CSV columns: param,row,col,trained,optimum,abs_diff. Linear tangent nets
/// on the transport problem only.
CsvWriter diagnose_lemma(const TangentNetwork& net, const ExperimentConfig& cfg, const Dataset& data);
/// CSV columns: state,term,base,trace,exact,mc_estimate,stderr,residual, one
/// ml and one mc row per test state; exact = base + noise_std^2 trace / n.
CsvWriter diagnose_randomization(const TangentNetwork& net, const ExperimentConfig& cfg, const Dataset& data);
/// CSV columns: state,step,e,f,g,c,B along coarse forward-Euler truth rollouts.
CsvWriter diagnose_bound(const TangentNetwork& net, const ExperimentConfig& cfg, const Dataset& data);

}  // namespace mct
