#include "mctangent/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "mctangent/integrators.hpp"
#include "mctangent/parallel.hpp"

namespace mct {

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ValidationError("train." + field + " " + why);
  };
  if (!(alpha >= 0.0)) fail("alpha", "must be >= 0");
  if (!(delta >= 0.0)) fail("delta", "must be >= 0");
  if (R < 1) fail("R", "must be >= 1");
  if (!(dt > 0.0)) fail("dt", "must be > 0");
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be > 0");
  if (n_ckpt < 1) fail("n_ckpt", "must be >= 1");
  if (chunk_size < 1) fail("chunk_size", "must be >= 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) fail("validation_fraction", "must lie in (0, 1)");
}

WindowSet make_windows(std::span<const Trajectory> data, std::size_t S) {
  WindowSet set;
  set.S = S;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const std::size_t len = data[s].states.size();
    if (len < S + 2) {
      throw ValidationError("sample " + std::to_string(s) + " has " + std::to_string(len) + " states but S = " +
                            std::to_string(S) + " needs at least " + std::to_string(S + 2));
    }
    for (std::size_t k = 0; k + S + 1 < len; ++k) set.windows.push_back({s, k});
  }
  return set;
}

double dataset_rms(std::span<const Trajectory> data) {
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& t : data) {
    for (const auto& u : t.states) {
      acc += dot(u, u);
      count += u.size();
    }
  }
  return count == 0 ? 0.0 : std::sqrt(acc / static_cast<double>(count));
}

Field randomize_input(std::span<const double> u, double delta, double sigma_ref, Rng& rng) {
  if (delta < 0.0) throw ValidationError("noise level must be non-negative");
  Field out(u.begin(), u.end());
  if (delta == 0.0) return out;
  Field eps(u.size());
  rng.fill_normal(eps, delta * sigma_ref);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += eps[i];
  return out;
}

Field window_noise(const TrainConfig& cfg, double sigma_ref, std::size_t epoch, const Window& w, std::size_t n) {
  Field eps(n, 0.0);
  if (cfg.delta == 0.0) return eps;
  Rng rng = Rng::stream(cfg.seeds.noise, "noise").split(epoch).split(w.sample).split(w.start);
  rng.fill_normal(eps, cfg.delta * sigma_ref);
  return eps;
}

ad::Var truth_op(const TruthTangent& truth, const ad::Var& x) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows();
  const std::size_t b = xv.cols();
  Tensor out(xv.shape());
  Field col(n);
  for (std::size_t c = 0; c < b; ++c) {
    for (std::size_t r = 0; r < n; ++r) col[r] = xv[r * b + c];
    const Field g = truth.eval(col);
    for (std::size_t r = 0; r < n; ++r) out[r * b + c] = g[r];
  }
  const TruthTangent* t = &truth;
  return x.tape()->custom({x}, std::move(out), [t, x, n, b](const Tensor& up) {
    const Tensor& xv = x.value();
    Tensor gx(xv.shape());
    Field col(n), g(n);
    for (std::size_t c = 0; c < b; ++c) {
      for (std::size_t r = 0; r < n; ++r) {
        col[r] = xv[r * b + c];
        g[r] = up[r * b + c];
      }
      const Field v = t->vjp(col, g);
      for (std::size_t r = 0; r < n; ++r) gx[r * b + c] = v[r];
    }
    return std::vector<Tensor>{std::move(gx)};
  });
}

namespace {

Tensor gather(std::span<const Trajectory> data, std::span<const Window> windows, std::size_t offset, std::size_t n) {
  const std::size_t b = windows.size();
  Tensor m({n, b});
  for (std::size_t c = 0; c < b; ++c) {
    const auto& w = windows[c];
    if (w.sample >= data.size() || w.start + offset >= data[w.sample].states.size()) {
      throw ValidationError("window (" + std::to_string(w.sample) + ", " + std::to_string(w.start) +
                            ") runs past its trajectory");
    }
    const Field& u = data[w.sample].states[w.start + offset];
    if (u.size() != n) throw DimensionError("training state length does not match the network");
    for (std::size_t r = 0; r < n; ++r) m[r * b + c] = u[r];
  }
  return m;
}

}  // namespace

ad::Var batch_loss(ad::Tape& tape, std::span<const ad::Var> vars, const TangentNetwork& net,
                   const TruthTangent& truth, const TrainConfig& cfg, std::span<const Trajectory> data,
                   std::span<const Window> windows, const Tensor& noise, LossParts* parts) {
  if (windows.empty()) throw ContractError("batch_loss needs at least one window");
  const std::size_t n = net.input_size();
  const std::size_t S = cfg.S;
  const double dt = cfg.dt;

  Tensor x0 = gather(data, windows, 0, n);
  if (noise.size() != 0) {
    if (noise.size() != x0.size()) throw DimensionError("noise does not match the batch");
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] += noise[i];
  }

  auto net_step = [&](const ad::Var& x) {
    ad::Var y = net.forward(vars, x);
    return cfg.mode == NetMode::Tangent ? ad::add(x, ad::scale(y, dt)) : y;
  };
  auto truth_step = [&](const ad::Var& x) { return ad::add(x, ad::scale(truth_op(truth, x), dt)); };

  std::vector<ad::Var> tilde{tape.constant(std::move(x0))};
  ad::Var ml;
  for (std::size_t i = 1; i <= S + 1; ++i) {
    tilde.push_back(net_step(tilde.back()));
    ad::Var term = ad::mse(ad::sub(tape.constant(gather(data, windows, i, n)), tilde.back()));
    ml = ml.valid() ? ad::add(ml, term) : term;
  }
  ml = ad::scale(ml, 1.0 / static_cast<double>(S + 1));
  ad::Var total = ml;

  double mc_value = 0.0;
  if (cfg.alpha > 0.0) {
    ad::Var mc;
    for (std::size_t i = 0; i <= S; ++i) {
      ad::Var bar = tilde[i];
      ad::Var hat = tilde[i];
      for (std::size_t r = 1; r <= cfg.R; ++r) {
        bar = truth_step(bar);
        hat = r == 1 ? tilde[i + 1] : net_step(hat);
        ad::Var term = ad::mse(ad::sub(bar, hat));
        mc = mc.valid() ? ad::add(mc, term) : term;
      }
    }
    mc = ad::scale(mc, cfg.alpha / (static_cast<double>(cfg.R) * static_cast<double>(S + 1)));
    mc_value = mc.value().item();
    total = ad::add(ml, mc);
  }
  if (parts) *parts = {total.value().item(), ml.value().item(), mc_value};
  return total;
}

double window_loss(const TangentNetwork& net, std::span<const Trajectory> data, const Window& window,
                   const TruthTangent& truth, const TrainConfig& cfg, std::span<const double> noise) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const auto& p : net.params()) vars.push_back(tape.constant(p));
  Tensor eps;
  if (!noise.empty()) eps = Tensor({noise.size(), 1}, std::vector<double>(noise.begin(), noise.end()));
  const Window ws[] = {window};
  return batch_loss(tape, vars, net, truth, cfg, data, ws, eps).value().item();
}

LossGradient loss_and_gradient(const TangentNetwork& net, const TruthTangent& truth, const TrainConfig& cfg,
                               std::span<const Trajectory> data, std::span<const Window> windows,
                               const Tensor& noise) {
  const std::size_t total = windows.size();
  if (total == 0) throw ContractError("loss_and_gradient needs at least one window");
  const std::size_t n = net.input_size();
  const std::size_t chunk = std::max<std::size_t>(1, cfg.chunk_size);
  const std::size_t chunks = (total + chunk - 1) / chunk;

  struct ChunkResult {
    LossParts loss;
    std::vector<Tensor> grads;
  };
  std::vector<ChunkResult> results(chunks);

  parallel_for(chunks, cfg.threads, [&](std::size_t c) {
    const std::size_t begin = c * chunk;
    const std::size_t end = std::min(total, begin + chunk);
    const std::size_t b = end - begin;
    Tensor eps;
    if (noise.size() != 0) {
      eps = Tensor({n, b});
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < b; ++k) eps[r * b + k] = noise[r * total + begin + k];
    }
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& p : net.params()) vars.push_back(tape.leaf(p));
    LossParts parts;
    ad::Var loss = batch_loss(tape, vars, net, truth, cfg, data, windows.subspan(begin, b), eps, &parts);
    auto g = tape.backward(loss, vars);
    const double w = static_cast<double>(b) / static_cast<double>(total);
    for (auto& t : g.tensors())
      for (double& x : t.data()) x *= w;
    results[c] = {{parts.total * w, parts.ml * w, parts.mc * w}, std::move(g.tensors())};
  });

  LossGradient out;
  out.grads = std::move(results[0].grads);
  out.loss = results[0].loss;
  for (std::size_t c = 1; c < chunks; ++c) {
    out.loss.total += results[c].loss.total;
    out.loss.ml += results[c].loss.ml;
    out.loss.mc += results[c].loss.mc;
    for (std::size_t p = 0; p < out.grads.size(); ++p) {
      auto dst = out.grads[p].data();
      auto src = results[c].grads[p].data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  return out;
}

AdamState AdamState::zeros_like(const std::vector<Tensor>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.shape());
    s.v.emplace_back(p.shape());
  }
  return s;
}

void adam_step(AdamState& state, std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr) {
  if (state.m.size() != params.size() || grads.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and moment lists differ in length");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(AdamState::beta1, t);
  const double c2 = 1.0 - std::pow(AdamState::beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (grads[p].shape() != params[p].shape() || state.m[p].shape() != params[p].shape()) {
      throw DimensionError("adam_step: shape mismatch for parameter " + std::to_string(p));
    }
    auto x = params[p].data();
    auto g = grads[p].data();
    auto m = state.m[p].data();
    auto v = state.v[p].data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = AdamState::beta1 * m[i] + (1.0 - AdamState::beta1) * g[i];
      v[i] = AdamState::beta2 * v[i] + (1.0 - AdamState::beta2) * g[i] * g[i];
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + AdamState::eps);
    }
  }
}

double checkpoint_metric(const TangentNetwork& net, std::span<const Trajectory> checkpoint_data, double dt,
                         std::size_t n_ckpt) {
  const std::size_t b = checkpoint_data.size();
  if (b == 0) throw ValidationError("checkpoint data is empty");
  const std::size_t n = net.input_size();
  for (std::size_t s = 0; s < b; ++s) {
    if (checkpoint_data[s].states.size() < n_ckpt + 1) {
      throw ValidationError("checkpoint sample " + std::to_string(s) + " has fewer than n_ckpt + 1 = " +
                            std::to_string(n_ckpt + 1) + " states");
    }
  }
  Tensor u({n, b});
  for (std::size_t c = 0; c < b; ++c) {
    const Field& u0 = checkpoint_data[c].states[0];
    if (u0.size() != n) throw DimensionError("checkpoint state length does not match the network");
    for (std::size_t r = 0; r < n; ++r) u[r * b + c] = u0[r];
  }
  double acc = 0.0;
  for (std::size_t k = 1; k <= n_ckpt; ++k) {
    Tensor f = net.forward_batch(u);
    if (net.mode() == NetMode::Tangent) {
      for (std::size_t i = 0; i < u.size(); ++i) u[i] += dt * f[i];
    } else {
      u = std::move(f);
    }
    for (std::size_t c = 0; c < b; ++c) {
      const Field& truth = checkpoint_data[c].states[k];
      double se = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        const double x = u[r * b + c];
        if (!std::isfinite(x) || std::abs(x) > kDivergenceThreshold) return std::numeric_limits<double>::infinity();
        const double d = x - truth[r];
        se += d * d;
      }
      acc += se / static_cast<double>(n);
    }
  }
  return acc / static_cast<double>(b);
}

TrainResult train(const TangentNetwork& init, const TruthTangent& truth, std::span<const Trajectory> train_data,
                  std::span<const Trajectory> test_data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (init.mode() != cfg.mode) throw ValidationError("train.mode does not match the network mode");
  if (init.mode() == NetMode::Tangent && truth.state_size() != init.input_size()) {
    throw DimensionError("truth tangent state size does not match the network");
  }
  const auto clock_start = std::chrono::steady_clock::now();

  std::span<const Trajectory> fit = train_data;
  std::span<const Trajectory> ckpt = test_data;
  if (cfg.checkpoint_source == CheckpointSource::Validation) {
    const auto count = train_data.size();
    auto held = static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(count)));
    held = std::max<std::size_t>(1, held);
    if (held >= count) throw ValidationError("validation split leaves no training samples");
    fit = train_data.first(count - held);
    ckpt = train_data.subspan(count - held);
  }
  if (ckpt.empty()) throw ValidationError("checkpoint selection needs a nonempty test set");
  if (fit.empty()) throw ValidationError("training set is empty");

  const WindowSet ws = make_windows(fit, cfg.S);
  const std::size_t total = ws.windows.size();
  const std::size_t n = init.input_size();

  TrainResult result{init, {}};
  TrainReport& report = result.report;
  report.sigma_ref = dataset_rms(fit);
  report.best_ckpt_mse = std::numeric_limits<double>::infinity();

  TangentNetwork net = init;
  AdamState adam = AdamState::zeros_like(net.params());
  const std::size_t batch = cfg.batch_size == 0 ? total : std::min(cfg.batch_size, total);
  const Rng shuffle_root = Rng::stream(cfg.seeds.shuffle, "shuffle");

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    Rng shuffle = shuffle_root.split(epoch);
    const auto order = permutation(total, shuffle);
    double epoch_loss = 0.0;
    bool diverged = false;

    for (std::size_t begin = 0; begin < total && !diverged; begin += batch) {
      const std::size_t b = std::min(batch, total - begin);
      std::vector<Window> windows(b);
      for (std::size_t k = 0; k < b; ++k) windows[k] = ws.windows[order[begin + k]];
      Tensor noise;
      if (cfg.delta > 0.0) {
        noise = Tensor({n, b});
        for (std::size_t k = 0; k < b; ++k) {
          const Field eps = window_noise(cfg, report.sigma_ref, epoch, windows[k], n);
          for (std::size_t r = 0; r < n; ++r) noise[r * b + k] = eps[r];
        }
      }
      LossGradient lg = loss_and_gradient(net, truth, cfg, fit, windows, noise);
      if (!std::isfinite(lg.loss.total)) {
        diverged = true;
        break;
      }
      epoch_loss += lg.loss.total * static_cast<double>(b) / static_cast<double>(total);
      adam_step(adam, net.params(), lg.grads, cfg.learning_rate);
      if (!net.all_finite()) diverged = true;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    if (diverged) {
      rec.train_loss = std::numeric_limits<double>::quiet_NaN();
      rec.ckpt_mse = std::numeric_limits<double>::infinity();
    } else {
      rec.train_loss = epoch_loss;
      rec.ckpt_mse = checkpoint_metric(net, ckpt, cfg.dt, cfg.n_ckpt);
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.ckpt_mse < report.best_ckpt_mse) {
      report.best_ckpt_mse = rec.ckpt_mse;
      report.best_epoch = epoch;
      result.net = net;
    }
    if (diverged) {
      report.note = "training loss became non-finite in epoch " + std::to_string(epoch);
      break;
    }
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  if (cfg.epochs > 0 && report.best_epoch == 0) {
    if (report.note.empty()) report.note = "every checkpoint rollout diverged";
    throw TrainingFailure("training failed: " + report.note, report);
  }
  return result;
}

}  // namespace mct
