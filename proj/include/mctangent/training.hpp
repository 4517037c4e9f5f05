#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mctangent/autodiff.hpp"
#include "mctangent/errors.hpp"
#include "mctangent/field.hpp"
#include "mctangent/network.hpp"
#include "mctangent/pde.hpp"
#include "mctangent/rng.hpp"
#include "mctangent/tensor.hpp"

namespace mct {

enum class CheckpointSource { Test, Validation };

struct TrainSeeds {
  std::uint64_t noise = 1;
  std::uint64_t init = 0;
  std::uint64_t shuffle = 2;
};

struct TrainConfig {
  double alpha = 0.0;
  double delta = 0.0;  // noise level relative to the dataset RMS
  std::size_t S = 0;
  std::size_t R = 1;
  double dt = 1e-3;
  double learning_rate = 1e-3;
  std::size_t batch_size = 40;  // windows per ADAM step; 0 means full batch
  std::size_t epochs = 1;
  std::size_t n_ckpt = 100;
  TrainSeeds seeds;
  NetMode mode = NetMode::Tangent;
  CheckpointSource checkpoint_source = CheckpointSource::Test;
  double validation_fraction = 0.2;
  std::size_t threads = 0;     // 0: hardware concurrency
  std::size_t chunk_size = 64; // windows per tape

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

/// Window k of sample s covers states start..start+S+1.
struct Window {
  std::size_t sample = 0;
  std::size_t start = 0;
};

struct WindowSet {
  std::size_t S = 0;
  std::vector<Window> windows;
};

WindowSet make_windows(std::span<const Trajectory> data, std::size_t S);

/// RMS over every entry of every state.
double dataset_rms(std::span<const Trajectory> data);

/// u + eps with eps ~ N(0, (delta sigma_ref)^2 I).
Field randomize_input(std::span<const double> u, double delta, double sigma_ref, Rng& rng);

/// Noise added to the first state of `w` in `epoch`; depends only on
/// (seed, epoch, sample, start) so it is independent of batching.
Field window_noise(const TrainConfig& cfg, double sigma_ref, std::size_t epoch, const Window& w, std::size_t n);

struct LossParts {
  double total = 0.0;
  double ml = 0.0;
  double mc = 0.0;
};

/// Tape-recorded mean loss over `windows`. `noise` is [n x B] (columns match
/// windows) or empty for no randomization. `vars` are the tape handles of
/// net.params().
ad::Var batch_loss(ad::Tape& tape, std::span<const ad::Var> vars, const TangentNetwork& net,
                   const TruthTangent& truth, const TrainConfig& cfg, std::span<const Trajectory> data,
                   std::span<const Window> windows, const Tensor& noise, LossParts* parts = nullptr);

/// Loss of a single window (value only).
double window_loss(const TangentNetwork& net, std::span<const Trajectory> data, const Window& window,
                   const TruthTangent& truth, const TrainConfig& cfg, std::span<const double> noise = {});

struct LossGradient {
  LossParts loss;
  std::vector<Tensor> grads;  // aligned with net.params()
};

/// Mean loss and parameter gradients over `windows`, evaluated in chunks on
/// independent tapes and reduced in chunk order (thread-count independent).
/// `noise` holds one column per window or is empty.
LossGradient loss_and_gradient(const TangentNetwork& net, const TruthTangent& truth, const TrainConfig& cfg,
                               std::span<const Trajectory> data, std::span<const Window> windows,
                               const Tensor& noise);

struct AdamState {
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps = 1e-8;

  std::vector<Tensor> m, v;
  std::size_t step = 0;

  static AdamState zeros_like(const std::vector<Tensor>& params);
};

void adam_step(AdamState& state, std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double ckpt_mse = 0.0;  // +inf when the checkpoint rollout diverged
  double wall_seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 0: initialization kept
  double best_ckpt_mse = 0.0;
  double sigma_ref = 0.0;
  double wall_seconds = 0.0;
  std::string note;
};

/// Raised when no epoch produced a usable network.
class TrainingFailure : public Error {
 public:
  TrainingFailure(const std::string& what, TrainReport report) : Error(what), report_(std::move(report)) {}
  const TrainReport& report() const noexcept { return report_; }

 private:
  TrainReport report_;
};

/// Sum over steps 1..n_ckpt of the per-step MSE between the network rollout
/// (FE for tangent nets, iterated map for direct nets) and each checkpoint
/// trajectory, averaged over trajectories. +inf on divergence.
double checkpoint_metric(const TangentNetwork& net, std::span<const Trajectory> checkpoint_data, double dt,
                         std::size_t n_ckpt);

struct TrainResult {
  TangentNetwork net;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const TangentNetwork& init, const TruthTangent& truth, std::span<const Trajectory> train_data,
                  std::span<const Trajectory> test_data, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Tape op evaluating the truth tangent column-wise on [n] or [n x B]; its
/// backward rule is the exact vector-Jacobian product.
ad::Var truth_op(const TruthTangent& truth, const ad::Var& x);

}  // namespace mct
