// Benchmark: serial reference loop vs OpenMP replications, with an equality
// check so the parallel path can never drift from the reference.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "rdps/full.hpp"
#include "rdps/parallel.hpp"
#include "rdps/sim.hpp"

using namespace rdps;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

ExperimentConfig bench_config(int reps) {
  ExperimentConfig cfg = reproduce_config(SimSetting::Kind::linear, reps, 42);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 50;
  std::vector<int> thread_counts{1, 2, 4, 8};
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--reps" && i + 1 < argc) {
      reps = std::atoi(argv[++i]);
    } else if (arg == "--threads" && i + 1 < argc) {
      thread_counts.clear();
      std::string list = argv[++i];
      std::size_t pos = 0;
      while (pos < list.size()) {
        const std::size_t comma = list.find(',', pos);
        thread_counts.push_back(std::atoi(list.substr(pos, comma - pos).c_str()));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
    } else {
      std::printf("usage: rdps_bench [--reps N] [--threads 1,2,4,8]\n");
      return 1;
    }
  }

  ExperimentConfig cfg = bench_config(reps);
  std::printf("experiment: linear setting, %d replications, %zu methods\n\n",
              reps, cfg.methods.size());

  auto t0 = std::chrono::steady_clock::now();
  const ExperimentResult reference = run_experiment_serial(cfg);
  const double serial_s = seconds_since(t0);
  std::printf("%8s  %10s  %8s  %s\n", "threads", "seconds", "speedup", "matches serial");
  std::printf("%8s  %10.3f  %8.2f  %s\n", "serial", serial_s, 1.0, "-");

  bool all_match = true;
  for (int t : thread_counts) {
    cfg.threads = t;
    t0 = std::chrono::steady_clock::now();
    const ExperimentResult result = run_experiment(cfg);
    const double s = seconds_since(t0);
    const bool match = result == reference;
    all_match = all_match && match;
    std::printf("%8d  %10.3f  %8.2f  %s\n", t, s, serial_s / s,
                match ? "yes" : "NO");
  }

  // The candidate-grid loop inside one full RDPS is the second parallel axis.
  const GeneratedInstance inst = gen_linear(100, 7);
  GridStrategy grid;
  grid.points = 2048;
  grid.parallel = false;
  t0 = std::chrono::steady_clock::now();
  const PredictiveSystem serial_sys =
      full_rdps(inst.train, KrrSpec{1.0, 0.5}, inst.x_new, grid);
  const double grid_serial = seconds_since(t0);
  grid.parallel = true;
  t0 = std::chrono::steady_clock::now();
  const PredictiveSystem parallel_sys =
      full_rdps(inst.train, KrrSpec{1.0, 0.5}, inst.x_new, grid);
  const double grid_parallel = seconds_since(t0);
  const bool grid_match = serial_sys == parallel_sys;
  all_match = all_match && grid_match;
  std::printf("\ncandidate grid (%d fits): serial %.3fs, parallel %.3fs "
              "(x%.2f), matches: %s\n",
              grid.points, grid_serial, grid_parallel,
              grid_serial / grid_parallel, grid_match ? "yes" : "NO");

  return all_match ? 0 : 1;
}
