#include <Eigen/Dense>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include "doctest.h"
#include "mctangent/cli.hpp"
#include "mctangent/experiment.hpp"
#include "mctangent/io.hpp"
#include "oracles.hpp"

using namespace mct;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mct_cli_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(std::vector<std::string> args) { return run_cli(args); }

// Small transport problem: 2 training and 1 test trajectory on 100 points.
std::vector<std::string> small_transport(const fs::path& out) {
  return {"--grid.fine_n", "400", "--time.fine_steps", "200", "--time.T", "0.4", "--grid.space_stride", "4",
          "--time.time_stride", "2", "--data.train_samples", "2", "--data.test_samples", "1",
          "--time.test_steps", "200", "--train.n_ckpt", "50", "--output.dir", out.string()};
}

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<double> csv_column(const fs::path& path, std::size_t col) {
  const std::string text = read_text(path);
  std::vector<double> out;
  std::size_t pos = text.find('\n') + 1;
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    std::string line = text.substr(pos, end - pos);
    for (std::size_t c = 0; c < col; ++c) line = line.substr(line.find(',') + 1);
    out.push_back(std::stod(line.substr(0, line.find(','))));
    pos = end + 1;
  }
  return out;
}

std::size_t csv_rows(const fs::path& path) {
  const std::string text = read_text(path);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) - 1;
}

// Linear tangent checkpoint with the given W and b on a transport grid of n points.
fs::path linear_checkpoint(const fs::path& dir, const Tensor& w, const Tensor& b, double dt) {
  const std::size_t n = w.rows();
  TangentNetwork net(Architecture::Linear, NetMode::Tangent, n, 0);
  net.params()[0] = w;
  net.params()[1] = b;
  auto cfg = ExperimentConfig::defaults(Problem::Transport);
  cfg.fine_n = n;
  cfg.space_stride = 1;
  cfg.time_stride = 1;
  cfg.T = dt * static_cast<double>(cfg.fine_steps);
  save_checkpoint(dir, net, cfg.to_config(false));
  return dir;
}

}  // namespace

TEST_SUITE("cli_io") {
  TEST_CASE("usage errors exit with code 2") {
    CHECK(run({}) == 2);
    CHECK(run({"bogus"}) == 2);
    CHECK(run({"--help"}) == 0);
    CHECK(run({"gen-data", "--no-such-flag", "1"}) == 2);
    CHECK(run({"gen-data", "--grid.space_stride", "3", "--output.dir", scratch("usage").string()}) == 2);
    CHECK(run({"gen-data", "--train.alpha", "-1", "--output.dir", scratch("usage2").string()}) == 2);
    CHECK(run({"gen-data", "--config", (scratch("usage3") / "missing.cfg").string()}) == 2);
    CHECK(run({"train", "--output.dir", scratch("nodata").string()}) == 2);
    CHECK(run({"predict", "--checkpoint", "x"}) == 2);
  }

  TEST_CASE("gen-data writes downsampled trajectories deterministically") {
    const auto a = scratch("gen_a"), b = scratch("gen_b");
    REQUIRE(run(cat({"gen-data"}, small_transport(a))) == 0);
    REQUIRE(run(cat({"gen-data", "--threads", "3"}, small_transport(b))) == 0);
    for (const char* f : {"train_0000.mct", "train_0001.mct", "test_0000.mct", "manifest.txt"}) {
      CHECK(read_text(a / "data" / f) == read_text(b / "data" / f));
    }
    for (const char* f : {"train_0000.mct", "train_0001.mct"}) {
      CHECK(read_array(a / "data" / f).shape() == Shape{101, 100});
    }
    CHECK_FALSE(fs::exists(a / "data" / "train_0002.mct"));
    CHECK(read_array(a / "data" / "test_0000.mct").shape() == Shape{201, 100});
    CHECK(Config::load(a / "data" / "manifest.txt").get_double("dataset.dt") == doctest::Approx(0.004));
  }

  TEST_CASE("config file precedence and output directory environment") {
    const auto dir = scratch("prec");
    write_text(dir / "exp.cfg", "[data]\ntrain_samples = 3\ntest_samples = 1\n[grid]\nfine_n = 200\nspace_stride = 2\n"
                                "[time]\nfine_steps = 40\nT = 0.1\ntime_stride = 2\n[train]\nn_ckpt = 10\n");
    ::setenv("MCT_OUTPUT_DIR", (dir / "env").string().c_str(), 1);
    REQUIRE(run({"gen-data", "--config", (dir / "exp.cfg").string(), "--data.train_samples", "2"}) == 0);
    ::unsetenv("MCT_OUTPUT_DIR");
    const auto m = Config::load(dir / "env" / "data" / "manifest.txt");
    CHECK(m.get_size("data.train_samples") == 2);
    CHECK(m.get_size("grid.fine_n") == 200);
    CHECK(m.get_size("dataset.grid_n") == 100);
    CHECK(m.get_size("time.fine_steps") == 40);

    write_text(dir / "out.cfg", "output.dir = " + (dir / "file").string() + "\n" + read_text(dir / "exp.cfg"));
    ::setenv("MCT_OUTPUT_DIR", (dir / "env2").string().c_str(), 1);
    REQUIRE(run({"gen-data", "--config", (dir / "out.cfg").string()}) == 0);
    ::unsetenv("MCT_OUTPUT_DIR");
    CHECK(fs::exists(dir / "file" / "data" / "manifest.txt"));
    CHECK_FALSE(fs::exists(dir / "env2"));
  }

  TEST_CASE("train, predict, eval and diagnose pipeline") {
    const auto out = scratch("pipe");
    REQUIRE(run(cat({"gen-data"}, small_transport(out))) == 0);

    SUBCASE("zero epochs keeps the initialization") {
      REQUIRE(run({"train", "--output.dir", out.string(), "--train.epochs", "0"}) == 0);
      const auto ck = load_checkpoint(out / "checkpoint");
      auto cfg = ExperimentConfig::from_config(schema_subset(ck.manifest));
      CHECK(ck.net == initial_network(cfg));
      CHECK(csv_rows(out / "train_report.csv") == 0);
      CHECK(ck.manifest.get_size("result.best_epoch") == 0);
    }

    SUBCASE("report rows, determinism and downstream commands") {
      const auto other = scratch("pipe_b");
      REQUIRE(run(cat({"gen-data"}, small_transport(other))) == 0);
      REQUIRE(run({"train", "--output.dir", out.string(), "--train.epochs", "3"}) == 0);
      REQUIRE(run({"train", "--output.dir", other.string(), "--train.epochs", "3", "--threads", "2"}) == 0);
      CHECK(csv_rows(out / "train_report.csv") == 3);
      for (std::size_t col : {0u, 1u, 2u}) {
        CHECK(csv_column(out / "train_report.csv", col) == csv_column(other / "train_report.csv", col));
      }
      for (const char* f : {"W.mct", "b.mct", "manifest.txt"}) {
        CHECK(read_text(out / "checkpoint" / f) == read_text(other / "checkpoint" / f));
      }

      const auto test0 = (out / "data" / "test_0000.mct").string();
      REQUIRE(run({"predict", "--checkpoint", (out / "checkpoint").string(), "--initial", test0, "--predict.steps",
                   "0", "--out", (out / "p0.mct").string()}) == 0);
      const Tensor p0 = read_array(out / "p0.mct");
      CHECK(p0.shape() == Shape{1, 100});
      CHECK(std::equal(p0.data().begin(), p0.data().end(), read_array(test0).data().begin()));

      REQUIRE(run({"predict", "--checkpoint", (out / "checkpoint").string(), "--initial", test0, "--predict.steps",
                   "200", "--out", (out / "p.mct").string()}) == 0);
      CHECK(Config::load(out / "p.mct.manifest.txt").get("predict.diverged_at") == "none");
      REQUIRE(run({"eval", "--pred", (out / "p.mct").string(), "--truth", test0, "--out",
                   (out / "eval.csv").string()}) == 0);
      const auto mse = csv_column(out / "eval.csv", 1);
      CHECK(mse.size() == 201);
      CHECK(mse[0] == 0.0);
      CHECK(csv_column(out / "eval_summary.csv", 0)[0] == mse.back());
      CHECK(run({"eval", "--pred", (out / "p0.mct").string(), "--truth", test0, "--out",
                 (out / "bad.csv").string()}) == 2);
      CHECK(run({"predict", "--checkpoint", (out / "checkpoint").string(), "--initial",
                 (out / "data" / "test_0000.mct").string(), "--index", "999", "--out", (out / "x.mct").string()}) == 2);

      REQUIRE(run({"diagnose", "--checkpoint", (out / "checkpoint").string(), "--data", (out / "data").string(),
                   "--diagnose.kind", "lemma", "--out", (out / "lemma.csv").string()}) == 0);
      CHECK(csv_rows(out / "lemma.csv") == 100 * 100 + 100);
      const auto trained = csv_column(out / "lemma.csv", 3), opt = csv_column(out / "lemma.csv", 4),
                 diff = csv_column(out / "lemma.csv", 5);
      for (std::size_t i = 0; i < diff.size(); i += 97) CHECK(diff[i] == std::abs(trained[i] - opt[i]));

      REQUIRE(run({"diagnose", "--checkpoint", (out / "checkpoint").string(), "--data", (out / "data").string(),
                   "--diagnose.kind", "randomization", "--diagnose.delta", "0", "--diagnose.samples", "50",
                   "--diagnose.states", "1", "--out", (out / "rand.csv").string()}) == 0);
      for (double r : csv_column(out / "rand.csv", 7)) CHECK(r == 0.0);
      CHECK(csv_rows(out / "rand.csv") == 2);
    }

    SUBCASE("divergent training exits with code 3 and still writes the report") {
      CHECK(run({"train", "--output.dir", out.string(), "--train.epochs", "2", "--train.learning_rate", "1e7"}) == 3);
      CHECK(csv_rows(out / "train_report.csv") == 2);
      CHECK_FALSE(fs::exists(out / "checkpoint"));
    }
  }

  TEST_CASE("diagnose kinds on hand-built checkpoints") {
    const auto out = scratch("diag");
    REQUIRE(run(cat({"gen-data"}, small_transport(out))) == 0);
    const auto cfg = ExperimentConfig::from_config(schema_subset(Config::load(out / "data" / "manifest.txt")));
    const auto truth = coarse_truth(cfg);
    const std::size_t n = truth.state_size();

    // Psi = G: the bound and the measured error vanish.
    TangentNetwork exact(Architecture::Linear, NetMode::Tangent, n, 0);
    exact.params()[0] = truth.jacobian(Field(n, 0.0));
    save_checkpoint(out / "exact", exact, Config::load(out / "data" / "manifest.txt"));
    REQUIRE(run({"diagnose", "--checkpoint", (out / "exact").string(), "--data", (out / "data").string(),
                 "--diagnose.kind", "bound", "--diagnose.steps", "20", "--out", (out / "bound.csv").string()}) == 0);
    CHECK(csv_rows(out / "bound.csv") == 21);
    for (double b : csv_column(out / "bound.csv", 6)) CHECK(b < 1e-12);
    for (double e : csv_column(out / "bound.csv", 2)) CHECK(e < 1e-12);

    const auto mlp = TangentNetwork::init({0.01, 0.0, 1}, Architecture::Mlp, NetMode::Tangent, n, 8);
    save_checkpoint(out / "mlp", mlp, Config::load(out / "data" / "manifest.txt"));
    CHECK(run({"diagnose", "--checkpoint", (out / "mlp").string(), "--data", (out / "data").string(),
               "--diagnose.kind", "lemma", "--out", (out / "l.csv").string()}) == 2);
    CHECK(run({"diagnose", "--checkpoint", (out / "mlp").string(), "--data", (out / "data").string(),
               "--diagnose.kind", "nonsense"}) == 2);
  }

  TEST_CASE("backward Euler prediction matches the closed-form linear solve") {
    const std::size_t n = 12;
    const double dt = 0.05;
    const auto dir = scratch("be");
    Rng rng(17);
    Tensor w({n, n}), b({n});
    rng.fill_normal(w.data(), 2.0);
    rng.fill_normal(b.data());
    linear_checkpoint(dir / "ck", w, b, dt);
    Tensor u0({n});
    rng.fill_normal(u0.data());
    write_array(dir / "u0.mct", u0);
    const std::size_t steps = 30;
    REQUIRE(run({"predict", "--checkpoint", (dir / "ck").string(), "--initial", (dir / "u0.mct").string(),
                 "--predict.scheme", "be", "--predict.steps", std::to_string(steps), "--out",
                 (dir / "be.mct").string()}) == 0);
    const Tensor got = read_array(dir / "be.mct");
    REQUIRE(got.shape() == Shape{steps + 1, n});

    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd bias(n), u(n);
    for (std::size_t i = 0; i < n; ++i) {
      bias(i) = b.data()[i];
      u(i) = u0.data()[i];
      for (std::size_t j = 0; j < n; ++j) a(i, j) -= dt * w.at(i, j);
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    double worst = 0.0;
    for (std::size_t k = 1; k <= steps; ++k) {
      u = lu.solve(u + dt * bias);
      for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(u(i) - got.at(k, i)) / (1.0 + std::abs(u(i))));
    }
    CHECK(worst < 1e-10);
  }

  TEST_CASE("halving the prediction step halves the deviation") {
    const std::size_t n = 32;
    const double dt = 0.01;
    const auto dir = scratch("halving");
    const auto truth = TruthTangent::advection(Grid{1, n}, 1.0);
    Tensor w = truth.jacobian(Field(n, 0.0));
    Rng rng(23);
    for (double& x : w.data()) x += 0.3 * rng.normal();
    linear_checkpoint(dir / "ck", w, Tensor({n}), dt);
    Tensor u0({n});
    for (std::size_t i = 0; i < n; ++i) u0.data()[i] = std::sin(2.0 * M_PI * static_cast<double>(i) / n);
    write_array(dir / "u0.mct", u0);
    const double T = 0.4;
    std::vector<Field> finals;
    for (std::size_t level = 0; level < 3; ++level) {
      const double h = dt / std::pow(2.0, static_cast<double>(level));
      const auto steps = static_cast<std::size_t>(std::llround(T / h));
      const auto path = dir / ("p" + std::to_string(level) + ".mct");
      REQUIRE(run({"predict", "--checkpoint", (dir / "ck").string(), "--initial", (dir / "u0.mct").string(),
                   "--predict.dt", format_double(h), "--predict.steps", std::to_string(steps), "--out",
                   path.string()}) == 0);
      const Tensor t = read_array(path);
      const auto last = t.data().subspan((t.rows() - 1) * n, n);
      finals.emplace_back(last.begin(), last.end());
    }
    const double ratio = norm2(difference(finals[0], finals[1])) / norm2(difference(finals[1], finals[2]));
    CHECK(ratio >= 1.5);
    CHECK(ratio <= 2.5);
  }

  TEST_CASE("prediction divergence exits with code 3 and records the step") {
    const std::size_t n = 8;
    const auto dir = scratch("diverge");
    linear_checkpoint(dir / "ck", Tensor::identity(n), Tensor({n}), 0.1);
    Tensor u0({n});
    u0.data()[0] = 1.0;
    write_array(dir / "u0.mct", u0);
    CHECK(run({"predict", "--checkpoint", (dir / "ck").string(), "--initial", (dir / "u0.mct").string(),
               "--predict.dt", "100", "--predict.steps", "50", "--out", (dir / "p.mct").string()}) == 3);
    CHECK(Config::load(dir / "p.mct.manifest.txt").get("predict.diverged_at") == "3");
    Tensor wrong({n + 1});
    write_array(dir / "bad.mct", wrong);
    CHECK(run({"predict", "--checkpoint", (dir / "ck").string(), "--initial", (dir / "bad.mct").string(), "--out",
               (dir / "q.mct").string()}) == 2);
  }

  TEST_CASE("eval per-step errors") {
    const auto dir = scratch("eval");
    write_array(dir / "a.mct", Tensor::matrix(2, 3, {1, 2, 3, 0, 0, 0}));
    write_array(dir / "b.mct", Tensor::matrix(2, 3, {1.5, 2.5, 3.5, 0.5, 0.5, 0.5}));
    write_array(dir / "c.mct", Tensor::matrix(3, 3, {1, 2, 3, 0, 0, 0, 0, 0, 0}));
    REQUIRE(run({"eval", "--pred", (dir / "a.mct").string(), "--truth", (dir / "a.mct").string(), "--out",
                 (dir / "same.csv").string()}) == 0);
    for (double x : csv_column(dir / "same.csv", 1)) CHECK(x == 0.0);
    REQUIRE(run({"eval", "--pred", (dir / "a.mct").string(), "--truth", (dir / "b.mct").string(), "--out",
                 (dir / "off.csv").string(), "--summary", (dir / "s.csv").string()}) == 0);
    for (double x : csv_column(dir / "off.csv", 1)) CHECK(x == 0.25);
    CHECK(read_text(dir / "s.csv") == "final_mse,max_mse,step_of_max\n0.25,0.25,0\n");
    CHECK(run({"eval", "--pred", (dir / "a.mct").string(), "--truth", (dir / "c.mct").string(), "--out",
               (dir / "x.csv").string()}) == 2);
  }
}
