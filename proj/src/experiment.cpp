#include "mctangent/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "mctangent/errors.hpp"
#include "mctangent/parallel.hpp"

namespace mct {

namespace fs = std::filesystem;

std::string_view diagnose_kind_name(DiagnoseKind k) noexcept {
  switch (k) {
    case DiagnoseKind::Lemma: return "lemma";
    case DiagnoseKind::Randomization: return "randomization";
    case DiagnoseKind::Bound: return "bound";
  }
  return "bound";
}

DiagnoseKind parse_diagnose_kind(std::string_view name) {
  if (name == "lemma") return DiagnoseKind::Lemma;
  if (name == "randomization") return DiagnoseKind::Randomization;
  if (name == "bound") return DiagnoseKind::Bound;
  throw ValidationError("unknown diagnose kind '" + std::string(name) + "' (expected lemma, randomization, bound)");
}

namespace {

std::string_view source_name(CheckpointSource s) { return s == CheckpointSource::Test ? "test" : "validation"; }

CheckpointSource parse_source(std::string_view s) {
  if (s == "test") return CheckpointSource::Test;
  if (s == "validation") return CheckpointSource::Validation;
  throw ValidationError("unknown checkpoint source '" + std::string(s) + "' (expected test, validation)");
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

struct Key {
  std::string name;
  bool runtime;
  std::function<void(ExperimentConfig&, const Config&, const std::string&)> read;
  std::function<void(const ExperimentConfig&, Config&, const std::string&)> write;
};

template <typename M>
Key size_key(std::string name, M member, bool runtime = false) {
  return {std::move(name), runtime,
          [member](ExperimentConfig& e, const Config& c, const std::string& k) { e.*member = c.get_size(k); },
          [member](const ExperimentConfig& e, Config& c, const std::string& k) { c.set_size(k, e.*member); }};
}

template <typename M>
Key double_key(std::string name, M member) {
  return {std::move(name), false,
          [member](ExperimentConfig& e, const Config& c, const std::string& k) { e.*member = c.get_double(k); },
          [member](const ExperimentConfig& e, Config& c, const std::string& k) { c.set_double(k, e.*member); }};
}

template <typename M>
Key u64_key(std::string name, M member) {
  return {std::move(name), false,
          [member](ExperimentConfig& e, const Config& c, const std::string& k) { e.*member = c.get_u64(k); },
          [member](const ExperimentConfig& e, Config& c, const std::string& k) { c.set(k, std::to_string(e.*member)); }};
}

template <typename M>
Key train_size(std::string name, M member) {
  return {std::move(name), false,
          [member](ExperimentConfig& e, const Config& c, const std::string& k) { e.train.*member = c.get_size(k); },
          [member](const ExperimentConfig& e, Config& c, const std::string& k) { c.set_size(k, e.train.*member); }};
}

template <typename M>
Key train_double(std::string name, M member) {
  return {std::move(name), false,
          [member](ExperimentConfig& e, const Config& c, const std::string& k) { e.train.*member = c.get_double(k); },
          [member](const ExperimentConfig& e, Config& c, const std::string& k) { c.set_double(k, e.train.*member); }};
}

template <typename M>
Key seed_key(std::string name, M member) {
  return {std::move(name), false,
          [member](ExperimentConfig& e, const Config& c, const std::string& k) { e.train.seeds.*member = c.get_u64(k); },
          [member](const ExperimentConfig& e, Config& c, const std::string& k) {
            c.set(k, std::to_string(e.train.seeds.*member));
          }};
}

template <typename T, typename Parse, typename Name>
Key enum_key(std::string name, T ExperimentConfig::*member, Parse parse, Name to_name) {
  return {std::move(name), false,
          [member, parse](ExperimentConfig& e, const Config& c, const std::string& k) {
            e.*member = parse(lower(c.get(k)));
          },
          [member, to_name](const ExperimentConfig& e, Config& c, const std::string& k) {
            c.set(k, std::string(to_name(e.*member)));
          }};
}

const std::vector<Key>& schema() {
  using E = ExperimentConfig;
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    k.push_back(enum_key("problem", &E::problem, parse_problem, problem_name));
    k.push_back(size_key("grid.fine_n", &E::fine_n));
    k.push_back(size_key("grid.space_stride", &E::space_stride));
    k.push_back(size_key("time.fine_steps", &E::fine_steps));
    k.push_back(double_key("time.T", &E::T));
    k.push_back(size_key("time.time_stride", &E::time_stride));
    k.push_back(size_key("time.test_steps", &E::test_steps));
    k.push_back(double_key("physics.speed", &E::speed));
    k.push_back(double_key("physics.nu", &E::nu));
    k.push_back(size_key("data.train_samples", &E::train_samples));
    k.push_back(size_key("data.test_samples", &E::test_samples));
    k.push_back(u64_key("data.seed", &E::data_seed));
    k.push_back(enum_key("net.arch", &E::arch, parse_architecture, architecture_name));
    k.push_back(size_key("net.hidden", &E::hidden));
    k.push_back({"net.bias", false,
                 [](E& e, const Config& c, const std::string& key) { e.use_bias = c.get_bool(key); },
                 [](const E& e, Config& c, const std::string& key) { c.set_bool(key, e.use_bias); }});
    k.push_back(double_key("net.init_std", &E::init_std));
    k.push_back(train_double("train.alpha", &TrainConfig::alpha));
    k.push_back(train_double("train.delta", &TrainConfig::delta));
    k.push_back(train_size("train.S", &TrainConfig::S));
    k.push_back(train_size("train.R", &TrainConfig::R));
    k.push_back(train_double("train.learning_rate", &TrainConfig::learning_rate));
    k.push_back(train_size("train.batch_size", &TrainConfig::batch_size));
    k.push_back(train_size("train.epochs", &TrainConfig::epochs));
    k.push_back(train_size("train.n_ckpt", &TrainConfig::n_ckpt));
    k.push_back({"train.mode", false,
                 [](E& e, const Config& c, const std::string& key) { e.train.mode = parse_mode(lower(c.get(key))); },
                 [](const E& e, Config& c, const std::string& key) { c.set(key, std::string(mode_name(e.train.mode))); }});
    k.push_back({"train.checkpoint", false,
                 [](E& e, const Config& c, const std::string& key) {
                   e.train.checkpoint_source = parse_source(lower(c.get(key)));
                 },
                 [](const E& e, Config& c, const std::string& key) {
                   c.set(key, std::string(source_name(e.train.checkpoint_source)));
                 }});
    k.push_back(train_double("train.validation_fraction", &TrainConfig::validation_fraction));
    k.push_back(seed_key("train.seed_noise", &TrainSeeds::noise));
    k.push_back(seed_key("train.seed_init", &TrainSeeds::init));
    k.push_back(seed_key("train.seed_shuffle", &TrainSeeds::shuffle));
    k.push_back(train_size("train.chunk_size", &TrainConfig::chunk_size));
    k.push_back(enum_key("predict.scheme", &E::scheme, parse_scheme, scheme_name));
    k.push_back(size_key("predict.steps", &E::predict_steps));
    k.push_back(double_key("predict.dt", &E::predict_dt));
    k.push_back({"predict.newton_max_iterations", false,
                 [](E& e, const Config& c, const std::string& key) { e.newton.max_iterations = c.get_size(key); },
                 [](const E& e, Config& c, const std::string& key) { c.set_size(key, e.newton.max_iterations); }});
    k.push_back({"predict.newton_tolerance", false,
                 [](E& e, const Config& c, const std::string& key) { e.newton.tolerance = c.get_double(key); },
                 [](const E& e, Config& c, const std::string& key) { c.set_double(key, e.newton.tolerance); }});
    k.push_back(enum_key("diagnose.kind", &E::diagnose_kind, parse_diagnose_kind, diagnose_kind_name));
    k.push_back(size_key("diagnose.samples", &E::diagnose_samples));
    k.push_back(double_key("diagnose.delta", &E::diagnose_delta));
    k.push_back(size_key("diagnose.steps", &E::diagnose_steps));
    k.push_back(enum_key("diagnose.policy", &E::diagnose_policy, parse_remainder_policy, remainder_policy_name));
    k.push_back(u64_key("diagnose.seed", &E::diagnose_seed));
    k.push_back(size_key("diagnose.states", &E::diagnose_states));
    k.push_back({"output.dir", true,
                 [](E& e, const Config& c, const std::string& key) { e.output_dir = c.get(key); },
                 [](const E& e, Config& c, const std::string& key) { c.set(key, e.output_dir); }});
    k.push_back(size_key("threads", &E::threads, true));
    return k;
  }();
  return keys;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& k : schema()) out.push_back(k.name);
    return out;
  }();
  return names;
}

Config schema_subset(const Config& cfg) {
  Config out;
  const auto& keys = config_keys();
  for (const auto& [k, v] : cfg.values()) {
    if (std::find(keys.begin(), keys.end(), k) != keys.end()) out.set(k, v);
  }
  return out;
}

ExperimentConfig ExperimentConfig::defaults(Problem p) {
  ExperimentConfig c;
  c.problem = p;
  switch (p) {
    case Problem::Transport:
      c.fine_n = 1000;
      c.space_stride = 10;
      c.fine_steps = 1000;
      c.T = 0.5;
      c.time_stride = 10;
      c.test_steps = 2000;
      c.speed = 1.0;
      c.train_samples = 100;
      c.test_samples = 10;
      c.arch = Architecture::Linear;
      c.hidden = 0;
      c.init_std = 0.1;
      c.train.alpha = 1e5;
      c.train.delta = 0.01;
      c.train.learning_rate = 1e-2;
      c.train.epochs = 600;
      c.train.n_ckpt = 500;
      c.predict_steps = 2000;
      break;
    case Problem::Burgers:
      c.fine_n = 64;
      c.space_stride = 4;
      c.fine_steps = 600;
      c.T = 0.06;
      c.time_stride = 10;
      c.test_steps = 200;
      c.nu = 1e-2;
      c.train_samples = 50;
      c.test_samples = 5;
      c.arch = Architecture::Mlp;
      c.hidden = 256;
      c.init_std = 0.1;
      c.train.alpha = 1e5;
      c.train.delta = 0.02;
      c.train.S = 1;
      c.train.learning_rate = 1e-4;
      c.train.epochs = 200;
      c.train.n_ckpt = 200;
      c.predict_steps = 200;
      break;
    case Problem::NavierStokes:
      c.fine_n = 64;
      c.space_stride = 2;
      c.fine_steps = 400;
      c.T = 1.0;
      c.time_stride = 4;
      c.test_steps = 200;
      c.nu = 1e-3;
      c.train_samples = 50;
      c.test_samples = 5;
      c.arch = Architecture::Mlp;
      c.hidden = 256;
      c.init_std = 0.1;
      c.train.alpha = 1e5;
      c.train.delta = 0.02;
      c.train.S = 1;
      c.train.learning_rate = 2e-4;
      c.train.epochs = 100;
      c.train.n_ckpt = 200;
      c.predict_steps = 200;
      break;
  }
  c.train.dt = c.coarse_dt();
  return c;
}

ExperimentConfig ExperimentConfig::from_config(const Config& cfg) {
  const Problem p = cfg.has("problem") ? parse_problem(lower(cfg.get("problem"))) : Problem::Transport;
  ExperimentConfig e = defaults(p);
  const auto& keys = schema();
  for (const auto& [name, value] : cfg.values()) {
    const auto it = std::find_if(keys.begin(), keys.end(), [&](const Key& k) { return k.name == name; });
    if (it == keys.end()) throw ValidationError("unknown config key '" + name + "'");
    try {
      it->read(e, cfg, name);
    } catch (const Error& err) {
      const std::string what = err.what();
      if (what.rfind(name, 0) == 0) throw ValidationError(what);
      throw ValidationError(name + ": " + what);
    }
  }
  e.train.dt = e.fine_steps > 0 && e.time_stride > 0 ? e.coarse_dt() : 0.0;
  return e;
}

Config ExperimentConfig::to_config(bool runtime) const {
  Config c;
  for (const auto& k : schema()) {
    if (k.runtime && !runtime) continue;
    k.write(*this, c, k.name);
  }
  return c;
}

Grid ExperimentConfig::fine_grid() const { return Grid{problem == Problem::Transport ? 1 : 2, fine_n}; }

Grid ExperimentConfig::coarse_grid() const {
  return Grid{problem == Problem::Transport ? 1 : 2, space_stride == 0 ? 0 : fine_n / space_stride};
}

double ExperimentConfig::fine_dt() const { return T / static_cast<double>(fine_steps); }

double ExperimentConfig::coarse_dt() const { return fine_dt() * static_cast<double>(time_stride); }

std::size_t ExperimentConfig::coarse_train_steps() const { return fine_steps / time_stride; }

std::size_t ExperimentConfig::coarse_test_steps() const {
  return test_steps == 0 ? coarse_train_steps() : test_steps;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) { throw ValidationError(key + " " + why); };
  const bool spectral = problem == Problem::NavierStokes;
  if (fine_n < 4) fail("grid.fine_n", "must be >= 4");
  if (space_stride < 1) fail("grid.space_stride", "must be >= 1");
  if (fine_n % space_stride != 0) fail("grid.space_stride", "must divide grid.fine_n");
  try {
    fine_grid().validate(spectral);
  } catch (const ValidationError& e) {
    fail("grid.fine_n", e.what());
  }
  try {
    coarse_grid().validate(spectral);
  } catch (const ValidationError& e) {
    fail("grid.space_stride", std::string("gives an invalid coarse grid: ") + e.what());
  }
  if (fine_steps < 1) fail("time.fine_steps", "must be >= 1");
  if (time_stride < 1) fail("time.time_stride", "must be >= 1");
  if (fine_steps % time_stride != 0) fail("time.time_stride", "must divide time.fine_steps");
  if (!(T > 0.0) || !std::isfinite(T)) fail("time.T", "must be positive");
  if (!std::isfinite(speed)) fail("physics.speed", "must be finite");
  if (problem != Problem::Transport && !(nu > 0.0 && std::isfinite(nu))) fail("physics.nu", "must be positive");
  if (train_samples < 1) fail("data.train_samples", "must be >= 1");
  if (arch == Architecture::Mlp && hidden < 1) fail("net.hidden", "must be >= 1 for an mlp");
  if (!(init_std >= 0.0) || !std::isfinite(init_std)) fail("net.init_std", "must be >= 0");
  train.validate();
  if (train.S + 1 > coarse_train_steps()) fail("train.S", "needs S + 2 states per training trajectory");
  if (train.checkpoint_source == CheckpointSource::Test) {
    if (test_samples < 1) fail("data.test_samples", "must be >= 1 when train.checkpoint is test");
    if (train.n_ckpt > coarse_test_steps()) fail("train.n_ckpt", "exceeds the test trajectory length");
  } else {
    if (train_samples < 2) fail("data.train_samples", "must be >= 2 for a validation split");
    if (train.n_ckpt > coarse_train_steps()) fail("train.n_ckpt", "exceeds the training trajectory length");
  }
  if (!(predict_dt >= 0.0) || !std::isfinite(predict_dt)) fail("predict.dt", "must be >= 0");
  if (newton.max_iterations < 1) fail("predict.newton_max_iterations", "must be >= 1");
  if (!(newton.tolerance > 0.0)) fail("predict.newton_tolerance", "must be positive");
  if (diagnose_samples < 2) fail("diagnose.samples", "must be >= 2");
  if (!(diagnose_delta >= 0.0)) fail("diagnose.delta", "must be >= 0");
  if (diagnose_steps < 1) fail("diagnose.steps", "must be >= 1");
  if (diagnose_states < 1) fail("diagnose.states", "must be >= 1");
}

TruthTangent fine_truth(const ExperimentConfig& cfg) {
  const Grid g = cfg.fine_grid();
  switch (cfg.problem) {
    case Problem::Transport: return TruthTangent::advection(g, cfg.speed);
    case Problem::Burgers: return TruthTangent::burgers(g, cfg.nu);
    case Problem::NavierStokes: return TruthTangent::navier_stokes(g, cfg.nu, ns_forcing(g));
  }
  throw ContractError("unhandled problem");
}

TruthTangent coarse_truth(const ExperimentConfig& cfg) {
  const Grid g = cfg.coarse_grid();
  switch (cfg.problem) {
    case Problem::Transport: return TruthTangent::advection(g, cfg.speed);
    case Problem::Burgers: return TruthTangent::burgers(g, cfg.nu);
    case Problem::NavierStokes: return TruthTangent::navier_stokes(g, cfg.nu, ns_forcing(g));
  }
  throw ContractError("unhandled problem");
}

Field sample_initial(const ExperimentConfig& cfg, Rng& rng) {
  const Grid g = cfg.fine_grid();
  if (cfg.problem == Problem::Transport) return sample_initial_transport(g, rng);
  KLSampler::Options opt;
  opt.exponentiate = cfg.problem == Problem::Burgers;
  return KLSampler(g, opt).sample(rng);
}

Dataset generate_data(const ExperimentConfig& cfg) {
  cfg.validate();
  const TruthTangent truth = fine_truth(cfg);
  const std::size_t n_train = cfg.train_samples;
  const std::size_t total = n_train + cfg.test_samples;
  const std::size_t test_fine = cfg.coarse_test_steps() * cfg.time_stride;
  const double test_T = cfg.fine_dt() * static_cast<double>(test_fine);
  std::vector<Trajectory> out(total);
  const Rng base = Rng::stream(cfg.data_seed, "data");
  parallel_for(total, cfg.threads, [&](std::size_t i) {
    const bool is_train = i < n_train;
    const std::size_t idx = is_train ? i : i - n_train;
    Rng rng = base.split(is_train ? 0 : 1).split(idx);
    const Field u0 = sample_initial(cfg, rng);
    try {
      const auto fine = is_train ? solve_reference(truth, u0, cfg.fine_steps, cfg.T)
                                 : solve_reference(truth, u0, test_fine, test_T);
      out[i] = downsample(fine, cfg.space_stride, cfg.time_stride);
    } catch (const StabilityError& e) {
      throw StabilityError(std::string(is_train ? "train" : "test") + " sample " + std::to_string(idx) + ": " +
                           e.what());
    }
  });
  Dataset d;
  d.train.assign(std::make_move_iterator(out.begin()), std::make_move_iterator(out.begin() + n_train));
  d.test.assign(std::make_move_iterator(out.begin() + n_train), std::make_move_iterator(out.end()));
  return d;
}

namespace {

std::string sample_file(const char* split, std::size_t i) {
  std::string num = std::to_string(i);
  if (num.size() < 4) num.insert(0, 4 - num.size(), '0');
  return std::string(split) + "_" + num + ".mct";
}

}  // namespace

void write_dataset(const fs::path& dir, const ExperimentConfig& cfg, const Dataset& data) {
  fs::create_directories(dir);
  Config m = cfg.to_config(false);
  const Grid g = cfg.coarse_grid();
  m.set_double("dataset.dt", cfg.coarse_dt());
  m.set_size("dataset.grid_dim", static_cast<std::size_t>(g.dim));
  m.set_size("dataset.grid_n", g.n);
  m.set_size("dataset.train_count", data.train.size());
  m.set_size("dataset.test_count", data.test.size());
  for (std::size_t i = 0; i < data.train.size(); ++i) write_trajectory(dir / sample_file("train", i), data.train[i]);
  for (std::size_t i = 0; i < data.test.size(); ++i) write_trajectory(dir / sample_file("test", i), data.test[i]);
  m.save(dir / "manifest.txt");
}

Dataset read_dataset(const fs::path& dir, Config* manifest) {
  if (!fs::exists(dir / "manifest.txt")) throw IoError("no dataset manifest in " + dir.string());
  const Config m = Config::load(dir / "manifest.txt");
  const double dt = m.get_double("dataset.dt");
  const Grid g{static_cast<int>(m.get_size("dataset.grid_dim")), m.get_size("dataset.grid_n")};
  Dataset d;
  for (std::size_t i = 0; i < m.get_size("dataset.train_count"); ++i) {
    d.train.push_back(read_trajectory(dir / sample_file("train", i), dt, g));
  }
  for (std::size_t i = 0; i < m.get_size("dataset.test_count"); ++i) {
    d.test.push_back(read_trajectory(dir / sample_file("test", i), dt, g));
  }
  if (manifest) *manifest = m;
  return d;
}

TangentNetwork initial_network(const ExperimentConfig& cfg) {
  const std::size_t n = cfg.coarse_grid().size();
  return TangentNetwork::init({cfg.init_std, 0.0, cfg.train.seeds.init}, cfg.arch, cfg.train.mode, n, cfg.hidden,
                              cfg.use_bias);
}

TrainResult run_training(const ExperimentConfig& cfg, const Dataset& data, const EpochCallback& on_epoch) {
  cfg.validate();
  const std::size_t n = cfg.coarse_grid().size();
  auto check = [&](const std::vector<Trajectory>& set, const char* what) {
    for (const auto& t : set) {
      if (t.state_size() != n) {
        throw ValidationError(std::string(what) + " data has states of length " + std::to_string(t.state_size()) +
                              " but the configured coarse grid has " + std::to_string(n));
      }
    }
  };
  check(data.train, "training");
  check(data.test, "test");
  TrainConfig tc = cfg.train;
  tc.threads = cfg.threads;
  return train(initial_network(cfg), coarse_truth(cfg), data.train, data.test, tc, on_epoch);
}

CsvWriter train_report_csv(const TrainReport& report) {
  CsvWriter csv({"epoch", "train_loss", "ckpt_mse", "wall_seconds"});
  for (const auto& r : report.epochs) {
    csv.row({std::to_string(r.epoch), format_double(r.train_loss), format_double(r.ckpt_mse),
             format_double(r.wall_seconds)});
  }
  return csv;
}

RolloutResult predict(const TangentNetwork& net, std::span<const double> u0, const SchemeSpec& scheme, double dt,
                      std::size_t steps, Grid grid) {
  if (u0.size() != net.input_size()) {
    throw DimensionError("initial state has " + std::to_string(u0.size()) + " entries but the checkpoint expects " +
                         std::to_string(net.input_size()));
  }
  if (!(dt > 0.0)) throw ValidationError("predict.dt must be positive");
  if (net.mode() == NetMode::Direct) {
    if (scheme.kind != Scheme::FE) throw ValidationError("predict.scheme must be fe for a direct checkpoint");
    return rollout_map([&](std::span<const double> u) { return net.direct_step(u); }, u0, steps, dt, grid);
  }
  return rollout(
      scheme, [&](std::span<const double> u) { return net.forward(u); },
      [&](std::span<const double> u) { return net.jacobian(u); }, u0, dt, steps, grid);
}

EvalSummary evaluate(const Trajectory& pred, const Trajectory& truth) {
  if (pred.states.size() != truth.states.size()) {
    throw DimensionError("prediction has " + std::to_string(pred.states.size()) + " states but truth has " +
                         std::to_string(truth.states.size()));
  }
  EvalSummary s;
  s.mse = rollout_mse(pred, truth);
  if (s.mse.empty()) return s;
  s.final_mse = s.mse.back();
  for (std::size_t k = 0; k < s.mse.size(); ++k) {
    if (s.mse[k] > s.max_mse || std::isnan(s.mse[k])) {
      s.max_mse = s.mse[k];
      s.argmax = k;
      if (std::isnan(s.mse[k])) break;
    }
  }
  return s;
}

CsvWriter eval_csv(const EvalSummary& s) {
  CsvWriter csv({"step", "mse"});
  for (std::size_t k = 0; k < s.mse.size(); ++k) csv.row({std::to_string(k), format_double(s.mse[k])});
  return csv;
}

CsvWriter eval_summary_csv(const EvalSummary& s) {
  CsvWriter csv({"final_mse", "max_mse", "step_of_max"});
  csv.row({format_double(s.final_mse), format_double(s.max_mse), std::to_string(s.argmax)});
  return csv;
}

CsvWriter diagnose_lemma(const TangentNetwork& net, const ExperimentConfig& cfg, const Dataset& data) {
  if (net.architecture() != Architecture::Linear || net.mode() != NetMode::Tangent) {
    throw ValidationError("diagnose.kind lemma needs a linear tangent checkpoint");
  }
  if (cfg.problem != Problem::Transport) throw ValidationError("diagnose.kind lemma needs the transport problem");
  const TruthTangent truth = coarse_truth(cfg);
  const std::size_t n = truth.state_size();
  if (net.input_size() != n) throw DimensionError("checkpoint size does not match the coarse grid");
  std::size_t cols = 0;
  for (const auto& t : data.train) cols += t.steps();
  if (cols == 0) throw ValidationError("diagnose.kind lemma needs training snapshots");
  Tensor u0({n, cols});
  std::size_t c = 0;
  for (const auto& t : data.train) {
    for (std::size_t k = 0; k < t.steps(); ++k, ++c) {
      for (std::size_t r = 0; r < n; ++r) u0.at(r, c) = t.states[k][r];
    }
  }
  const auto opt = linear_optimum(truth.jacobian(Field(n, 0.0)), u0);
  CsvWriter csv({"param", "row", "col", "trained", "optimum", "abs_diff"});
  const Tensor& w = net.params()[0];
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double a = w.at(i, j), b = opt.W.at(i, j);
      csv.row({"W", std::to_string(i), std::to_string(j), format_double(a), format_double(b),
               format_double(std::abs(a - b))});
    }
  }
  const Tensor& bias = net.params()[1];
  for (std::size_t i = 0; i < n; ++i) {
    const double a = bias.data()[i], b = opt.b.data()[i];
    csv.row({"b", std::to_string(i), "0", format_double(a), format_double(b), format_double(std::abs(a - b))});
  }
  return csv;
}

namespace {

void require_tangent(const TangentNetwork& net, const char* kind) {
  if (net.mode() != NetMode::Tangent) {
    throw ValidationError(std::string("diagnose.kind ") + kind + " needs a tangent-mode checkpoint");
  }
}

std::size_t diagnose_state_count(const ExperimentConfig& cfg, const Dataset& data) {
  if (data.test.empty()) throw ValidationError("diagnostics need test trajectories");
  return std::min(cfg.diagnose_states, data.test.size());
}

}  // namespace

CsvWriter diagnose_randomization(const TangentNetwork& net, const ExperimentConfig& cfg, const Dataset& data) {
  require_tangent(net, "randomization");
  const TruthTangent truth = coarse_truth(cfg);
  const double noise_std = cfg.diagnose_delta * dataset_rms(data.train);
  const double dt = cfg.coarse_dt();
  const Rng seeds = Rng::stream(cfg.diagnose_seed, "diagnose");
  CsvWriter csv({"state", "term", "base", "trace", "exact", "mc_estimate", "stderr", "residual"});
  const std::size_t count = diagnose_state_count(cfg, data);
  for (std::size_t s = 0; s < count; ++s) {
    Rng r = seeds.split(s);
    const auto d = randomization_check(net, truth, data.test[s].states.front(), noise_std, cfg.diagnose_samples, dt,
                                       r.next_u64(), cfg.threads);
    const double n = static_cast<double>(net.input_size());
    const double scale = noise_std * noise_std / n;
    csv.row({std::to_string(s), "ml", format_double(d.ml_base), format_double(d.p1),
             format_double(d.ml_base + scale * d.p1), format_double(d.ml_mean), format_double(d.ml_stderr),
             format_double(d.ml_residual)});
    csv.row({std::to_string(s), "mc", format_double(d.mc_base), format_double(d.q1),
             format_double(d.mc_base + scale * d.q1), format_double(d.mc_mean), format_double(d.mc_stderr),
             format_double(d.mc_residual)});
  }
  return csv;
}

CsvWriter diagnose_bound(const TangentNetwork& net, const ExperimentConfig& cfg, const Dataset& data) {
  require_tangent(net, "bound");
  const TruthTangent truth = coarse_truth(cfg);
  const double dt = cfg.coarse_dt();
  const std::size_t steps = cfg.diagnose_steps;
  CsvWriter csv({"state", "step", "e", "f", "g", "c", "B"});
  const std::size_t count = diagnose_state_count(cfg, data);
  for (std::size_t s = 0; s < count; ++s) {
    const auto truth_run = rollout(
        SchemeSpec{}, [&](std::span<const double> u) { return truth.eval(u); }, {}, data.test[s].states.front(), dt,
        steps, truth.grid());
    if (truth_run.diverged_at) throw DivergenceError("coarse truth rollout diverged", *truth_run.diverged_at);
    const auto rep = gronwall_bound(net, truth, truth_run.trajectory, dt, steps, cfg.diagnose_policy);
    for (std::size_t k = 0; k <= steps; ++k) {
      const double c = k < rep.c.size() ? rep.c[k] : 0.0;
      csv.row({std::to_string(s), std::to_string(k), format_double(rep.e[k]), format_double(rep.f[k]),
               format_double(rep.g[k]), format_double(c), format_double(rep.B[k])});
    }
  }
  return csv;
}

}  // namespace mct
