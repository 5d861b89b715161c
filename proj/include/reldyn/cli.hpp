#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace reldyn::cli {

// Verb runners shared by the binary, the tests, and the python module.
// Each returns a process exit code.

struct GenDataOptions {
  int episodes = 100;
  int min_objects = 2;
  int max_objects = 5;
  int min_horizon = 1;
  int max_horizon = 1;
  double push_fraction = 0.5;
  uint64_t seed = 0;
  int threads = 1;
  double train_frac = 0.8, val_frac = 0.1, test_frac = 0.1;
  std::string out;
};
int run_gen_data(const GenDataOptions& opts);

struct TrainOptions {
  std::string data;
  std::string out_dir;
  std::string config_path;  // optional train-config JSON
  std::string ablation;     // overrides config when non-empty
  int epochs = -1;          // <0: keep config value
  double learning_rate = -1.0;
  int64_t seed = -1;
  bool quiet = false;
};
int run_train(const TrainOptions& opts);

struct EvalOptions {
  std::string ckpt;
  std::string data;
  std::string split = "test";  // train | val | test
  std::string out;             // empty: stdout
};
int run_eval(const EvalOptions& opts);

struct PlanOptions {
  std::string ckpt;
  std::string scene_path;
  std::string skeleton_path;
  std::string report_path;
  uint64_t seed = 0;
  int threads = 1;
  std::string execution = "mean";  // mean | sample_3sigma
  std::vector<std::string> skills;  // empty: both
  bool quiet = false;
};
int run_plan(const PlanOptions& opts);

struct SweepOptions {
  std::string ckpt;
  std::string axis = "n_objects";
  std::vector<int> values;
  int trials = 20;
  uint64_t seed = 0;
  int threads = 1;
  int default_objects = 3;
  int default_relations = 2;
  int default_steps = 1;
  std::vector<std::string> skills = {"push"};
  std::string out;  // CSV path
  bool quiet = false;
};
int run_sweep(const SweepOptions& opts);

struct ReportOptions {
  std::string sweep_csv;
  std::string out;  // SVG path
};
int run_report(const ReportOptions& opts);

int main(int argc, const char* const* argv);

}  // namespace reldyn::cli
