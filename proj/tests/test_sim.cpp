#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "rdps/rng.hpp"
#include "rdps/sim.hpp"
#include "rdps/parallel.hpp"

using namespace rdps;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.setting = SimSetting{SimSetting::Kind::linear, 30};
  cfg.replications = 12;
  cfg.master_seed = 77;
  GridStrategy grid;
  grid.points = 101;
  cfg.methods = {
      {"lspm", FullCpsMethod{RegressorSpec(OlsSpec{}), ConformityKind::studentised}},
      {"rdps-ols", FullRdpsMethod{RegressorSpec(OlsSpec{}), 0.1, grid}},
      {"split-ols", SplitCpsMethod{15, RegressorSpec(OlsSpec{}),
                                   ResidualTransform::identity()}},
  };
  return cfg;
}

}  // namespace

TEST_SUITE("sim") {

TEST_CASE("inverse normal cdf hits known quantiles") {
  CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-9));
  CHECK(inverse_normal_cdf(0.0013498980316300933) ==
        doctest::Approx(-3.0).epsilon(1e-9));
}

TEST_CASE("generators are deterministic") {
  const GeneratedInstance a = gen_linear(50, 123);
  const GeneratedInstance b = gen_linear(50, 123);
  CHECK(a.train.covariates() == b.train.covariates());
  CHECK(a.train.outcomes() == b.train.outcomes());
  CHECK(a.x_new == b.x_new);
  CHECK(a.y_new == b.y_new);
  const GeneratedInstance c = gen_linear(50, 124);
  CHECK(a.train.outcomes() != c.train.outcomes());
}

TEST_CASE("linear generator moments") {
  const int n = 100000;
  const GeneratedInstance inst = gen_linear(n, 9001);
  const Eigen::VectorXd& x = inst.train.covariates().col(0);
  CHECK(std::abs(x.mean()) < 0.02);
  const Eigen::VectorXd noise = inst.train.outcomes() - x;
  const double var = (noise.array() - noise.mean()).square().sum() / (n - 1);
  CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("nonlinear generator moments and degenerate noise") {
  const int n = 1000000;
  const GeneratedInstance inst = gen_nonlinear(n, 9002);
  const Eigen::VectorXd& x = inst.train.covariates().col(0);
  // Binned residual spread around x = 5: noise sd there is 1.
  std::vector<double> bin;
  for (int i = 0; i < n; ++i) {
    if (x(i) >= 4.9 && x(i) <= 5.1) {
      const double resid =
          inst.train.outcome(i) - (2.0 * x(i) + 5.0 * std::sin(x(i)));
      bin.push_back(resid);
    }
  }
  REQUIRE(bin.size() > 1000);
  double mean = 0.0;
  for (double v : bin) mean += v;
  mean /= static_cast<double>(bin.size());
  double ss = 0.0;
  for (double v : bin) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(bin.size() - 1));
  CHECK(std::abs(sd - 1.0) < 0.02);

  // The conditional mean at x = pi is 2 pi, and noise vanishes as x -> 0.
  for (int i = 0; i < 200; ++i) {
    const double xi = x(i);
    const double mean_at = 2.0 * xi + 5.0 * std::sin(xi);
    CHECK(std::abs(inst.train.outcome(i) - mean_at) <= 6.0 * (xi / 5.0) + 1e-12);
  }
}

TEST_CASE("experiment runner is deterministic and thread-count independent") {
  ExperimentConfig cfg = tiny_config();
  const ExperimentResult serial = run_experiment_serial(cfg);
  cfg.threads = 4;
  const ExperimentResult parallel = run_experiment(cfg);
  CHECK(serial == parallel);
  CHECK(serial.failure_fraction() == 0.0);

  const std::string p1 = "/tmp/rdps_test_serial.csv";
  const std::string p2 = "/tmp/rdps_test_parallel.csv";
  emit_csv(serial, p1);
  emit_csv(parallel, p2);
  CHECK(slurp(p1) == slurp(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("split conformity and residual construction give identical records") {
  ExperimentConfig cfg;
  cfg.setting = SimSetting{SimSetting::Kind::linear, 30};
  cfg.replications = 20;
  cfg.master_seed = 31337;
  cfg.methods = {
      {"system", SplitCpsMethod{15, RegressorSpec(OlsSpec{}),
                                ResidualTransform::identity()}},
      {"conformity", SplitCpsMethod{15, RegressorSpec(OlsSpec{}),
                                    ResidualTransform::identity()}},
  };
  ExperimentResult res = run_experiment_serial(cfg);
  // Rebuild every record through the conformity-count construction: the
  // score records must match the runner's rows exactly.
  for (int r = 0; r < cfg.replications; ++r) {
    const uint64_t rep_seed = derive_seed(cfg.master_seed, r);
    const GeneratedInstance inst =
        generate(cfg.setting, derive_seed(rep_seed, 1));
    const SplitConfig sc{15, RegressorSpec(OlsSpec{}),
                         ResidualTransform::identity()};
    const PredictiveSystem sys = split_cps_via_conformity(inst.train, sc, inst.x_new);
    const ReplicationCell& cell = res.cells[0][r];
    REQUIRE(thickness(sys) == cell.thickness);
    for (const auto& lc : cell.levels) {
      const PredictionInterval iv = central_interval(sys, 1.0 - lc.level);
      CHECK((iv.hi - iv.lo) == lc.width);
      CHECK(score_interval(iv, inst.y_new).interval_score == lc.score);
      CHECK((iv.lo <= inst.y_new && inst.y_new <= iv.hi) == lc.covered);
    }
  }
}

TEST_CASE("csv round trip") {
  const ExperimentResult res = run_experiment_serial(tiny_config());
  const std::string path = "/tmp/rdps_test_roundtrip.csv";
  emit_csv(res, path);
  const ExperimentResult back = parse_csv(path);
  CHECK(res == back);
  std::remove(path.c_str());
}

TEST_CASE("empty result emits only the header") {
  ExperimentResult res;
  const std::string path = "/tmp/rdps_test_empty.csv";
  emit_csv(res, path);
  CHECK(slurp(path) ==
        "method,replication,level,covered,width,interval_score,thickness\n");
  std::remove(path.c_str());
}

TEST_CASE("bounds csv shows the plateaus of a small split system") {
  // Calibration residuals {1, 0, -1} around yhat = 1: atoms at 0, 1, 2.
  Eigen::MatrixXd x(6, 1);
  x << 0.0, 1.0, 2.0, 0.0, 1.0, 2.0;
  Eigen::VectorXd y(6);
  y << 0.0, 1.0, 2.0, 1.0, 1.0, 1.0;
  Eigen::RowVectorXd x_new(1);
  x_new << 1.0;
  const SplitConfig cfg{3, RegressorSpec(OlsSpec{}), ResidualTransform::identity()};
  const PredictiveSystem sys = split_system(Dataset(x, y), cfg, x_new);

  std::vector<double> grid;
  for (double v = -1.0; v <= 3.0 + 1e-9; v += 0.25) grid.push_back(v);
  const std::string path = "/tmp/rdps_test_bounds.csv";
  emit_bounds_csv(sys, grid, path);

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "y,lower,upper");
  std::set<std::pair<double, double>> plateaus;
  while (std::getline(in, line)) {
    const auto c1 = line.find(','), c2 = line.rfind(',');
    plateaus.insert({std::stod(line.substr(c1 + 1, c2 - c1 - 1)),
                     std::stod(line.substr(c2 + 1))});
  }
  CHECK(plateaus.size() == 4);  // 3 atoms -> 4 distinct (lower, upper) pairs
  std::remove(path.c_str());
}

TEST_CASE("thickness column invariants by method kind") {
  ExperimentConfig cfg = tiny_config();
  cfg.replications = 16;
  const ExperimentResult res = run_experiment_serial(cfg);
  // lspm rows: thickness <= 1/(n+1); split rows: exactly 1/(n-N+1);
  // deleted-rdps rows: covariate-dependent, so they vary across replications.
  std::set<double> rdps_values;
  for (int r = 0; r < cfg.replications; ++r) {
    CHECK(res.cells[0][r].thickness <= 1.0 / 31.0 + 1e-12);
    rdps_values.insert(res.cells[1][r].thickness);
    CHECK(res.cells[2][r].thickness == 1.0 / 16.0);
  }
  CHECK(rdps_values.size() > 1);
}

TEST_CASE("per-replication seeds are independent of the method list") {
  ExperimentConfig one = tiny_config();
  one.methods.resize(1);
  ExperimentConfig all = tiny_config();
  const ExperimentResult r1 = run_experiment_serial(one);
  const ExperimentResult r2 = run_experiment_serial(all);
  // The first method's cells are identical: extending the method list does
  // not perturb the data stream.
  for (int r = 0; r < one.replications; ++r) {
    CHECK(r1.cells[0][r].thickness == r2.cells[0][r].thickness);
    for (std::size_t l = 0; l < r1.levels.size(); ++l)
      CHECK(r1.cells[0][r].levels[l].score == r2.cells[0][r].levels[l].score);
  }
}

TEST_CASE("thread count override through the environment") {
#ifdef _OPENMP
  setenv("RDPS_THREADS", "3", 1);
  CHECK(effective_threads(0) == 3);
  CHECK(effective_threads(5) == 5);  // explicit request wins
  unsetenv("RDPS_THREADS");
  CHECK(effective_threads(0) >= 1);
#else
  CHECK(effective_threads(0) == 1);
#endif
}

TEST_CASE("config parsing") {
  const std::string path = "/tmp/rdps_test_config.cfg";
  {
    std::ofstream out(path);
    out << "# comment\n"
        << "setting = nonlinear\n"
        << "n = 40\n"
        << "replications = 7\n"
        << "seed = 99\n"
        << "levels = 0.5, 0.8, 0.9\n"
        << "method = name=m1 kind=full_cps backend=ols conformity=studentised\n"
        << "method = name=m2 kind=full_rdps backend=auto-krr q=0.05 points=64\n"
        << "method = name=m3 kind=split_cps backend=krr:1.0,0.5 estimation=20 "
           "transform=scale\n";
  }
  const ExperimentConfig cfg = load_config(path);
  CHECK(cfg.setting.kind == SimSetting::Kind::nonlinear);
  CHECK(cfg.setting.n == 40);
  CHECK(cfg.replications == 7);
  CHECK(cfg.master_seed == 99);
  CHECK(cfg.levels.levels == std::vector<double>{0.5, 0.8, 0.9});
  REQUIRE(cfg.methods.size() == 3);
  CHECK(cfg.methods[0].name == "m1");
  CHECK(std::holds_alternative<FullCpsMethod>(cfg.methods[0].op));
  const auto& m2 = std::get<FullRdpsMethod>(cfg.methods[1].op);
  CHECK(m2.trim_fraction == 0.05);
  CHECK(std::holds_alternative<AutoKrr>(m2.backend));
  const auto& m3 = std::get<SplitCpsMethod>(cfg.methods[2].op);
  CHECK(m3.estimation_count == 20);
  CHECK(std::get<KrrSpec>(std::get<RegressorSpec>(m3.backend)).lambda == 0.5);
  std::remove(path.c_str());

  {
    std::ofstream out(path);
    out << "bogus = 1\n";
  }
  CHECK_THROWS_AS(load_config(path), std::invalid_argument);
  std::remove(path.c_str());
}

TEST_CASE("failed replications are recorded and the run continues") {
  ExperimentConfig cfg;
  cfg.setting = SimSetting{SimSetting::Kind::linear, 12};
  cfg.replications = 5;
  cfg.master_seed = 5150;
  // Trimming 90% of 13 samples leaves a single survivor: every cell fails.
  GridStrategy grid;
  grid.points = 33;
  cfg.methods = {
      {"doomed", FullRdpsMethod{RegressorSpec(OlsSpec{}), 0.9, grid}},
      {"fine", FullCpsMethod{RegressorSpec(OlsSpec{}), ConformityKind::studentised}},
  };
  const ExperimentResult res = run_experiment_serial(cfg);
  CHECK(res.failure_fraction() == 0.5);
  for (int r = 0; r < 5; ++r) {
    CHECK(res.cells[0][r].failed);
    CHECK(!res.cells[0][r].reason.empty());
    CHECK(!res.cells[1][r].failed);
  }
  // Failed cells survive the csv round trip.
  const std::string path = "/tmp/rdps_test_failures.csv";
  emit_csv(res, path);
  CHECK(parse_csv(path) == res);
  std::remove(path.c_str());
}

}  // TEST_SUITE
