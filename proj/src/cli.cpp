#include "reldyn/cli.hpp"

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "reldyn/eval.hpp"

namespace reldyn::cli {

namespace {
std::string slurp(const std::string& path) {
  std::ifstream is(path);
  check(is.good(), "cannot open ", path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void spit(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::trunc);
  check(os.good(), "cannot write ", path);
  os << content;
  check(os.good(), "short write to ", path);
}

std::vector<Skill> parse_skills(const std::vector<std::string>& names) {
  std::vector<Skill> out;
  for (const std::string& n : names) out.push_back(skill_from_name(n));
  if (out.empty()) out = {Skill::Push, Skill::PickPlace};
  return out;
}
}  // namespace

int run_gen_data(const GenDataOptions& opts) {
  check(!opts.out.empty(), "gen-data needs --out");
  DataGenConfig cfg;
  cfg.min_objects = opts.min_objects;
  cfg.max_objects = opts.max_objects;
  cfg.min_horizon = opts.min_horizon;
  cfg.max_horizon = opts.max_horizon;
  cfg.push_fraction = opts.push_fraction;

  Rng rng(opts.seed);
  std::vector<Episode> episodes =
      generate_dataset(rng, opts.episodes, cfg, opts.threads);

  CorpusManifest manifest;
  manifest.seed = opts.seed;
  manifest.n_episodes = opts.episodes;
  manifest.generation_config = cfg.to_json();
  split_corpus(manifest, opts.train_frac, opts.val_frac, opts.test_frac,
               opts.seed);
  write_corpus(episodes, opts.out, manifest);
  std::cout << "wrote " << episodes.size() << " episodes to " << opts.out
            << "\n";
  return 0;
}

int run_train(const TrainOptions& opts) {
  check(!opts.data.empty(), "train needs --data");
  check(!opts.out_dir.empty(), "train needs --out");
  TrainConfig cfg;
  if (!opts.config_path.empty())
    cfg = TrainConfig::from_json(nlohmann::json::parse(slurp(opts.config_path)));
  if (!opts.ablation.empty()) cfg.ablation = opts.ablation;
  if (opts.epochs >= 0) cfg.epochs = opts.epochs;
  if (opts.learning_rate > 0) cfg.learning_rate = opts.learning_rate;
  if (opts.seed >= 0) cfg.seed = static_cast<uint64_t>(opts.seed);

  CorpusManifest manifest;
  std::vector<Episode> corpus = read_corpus(opts.data, &manifest);
  TrainResult result = train(corpus, manifest, cfg, opts.out_dir);
  if (!opts.quiet) {
    std::cout << "trained " << cfg.ablation << " for " << cfg.epochs
              << " epochs; best val total " << result.best_val_total
              << " at epoch " << result.best_epoch << "\n";
    std::cout << "checkpoint: " << result.checkpoint_path << "\n";
    std::cout << "metrics:    " << result.metrics_path << "\n";
  }
  return 0;
}

int run_eval(const EvalOptions& opts) {
  check(!opts.ckpt.empty(), "eval needs --ckpt");
  check(!opts.data.empty(), "eval needs --data");
  auto model = RdGnnModel::load(opts.ckpt);
  CorpusManifest manifest;
  std::vector<Episode> corpus = read_corpus(opts.data, &manifest);
  std::vector<int> indices;
  if (opts.split == "train")
    indices = manifest.train;
  else if (opts.split == "val")
    indices = manifest.val;
  else if (opts.split == "test")
    indices = manifest.test;
  else
    fail("unknown split \"", opts.split, "\"");
  F1Report report = f1_eval(corpus, indices, *model);
  nlohmann::json j = report.to_json();
  j["split"] = opts.split;
  j["episodes"] = indices.size();
  std::string text = j.dump(2) + "\n";
  if (opts.out.empty())
    std::cout << text;
  else
    spit(opts.out, text);
  return 0;
}

int run_plan(const PlanOptions& opts) {
  check(!opts.ckpt.empty(), "plan needs --ckpt");
  check(!opts.scene_path.empty(), "plan needs --scene");
  check(!opts.skeleton_path.empty(), "plan needs --skeleton");
  auto model = RdGnnModel::load(opts.ckpt);
  Scene scene = scene_from_json(nlohmann::json::parse(slurp(opts.scene_path)));
  scene = settle(scene);
  PlanSkeleton skeleton =
      skeleton_from_json(nlohmann::json::parse(slurp(opts.skeleton_path)));

  CemConfig cem;
  cem.bounds = model->config().bounds;
  cem.n_threads = opts.threads;
  cem.skills = parse_skills(opts.skills);
  if (opts.execution == "sample_3sigma")
    cem.execution_mode = CemConfig::ExecutionMode::Sample3Sigma;
  else
    check(opts.execution == "mean", "unknown execution mode \"",
          opts.execution, "\"");

  Rng rng(opts.seed);
  Rng plan_rng = rng.child(0);
  Rng exec_rng = rng.child(1);
  SegmentedCloud cloud = render_cloud(scene);
  PlanResult plan = plan_skeleton(*model, cloud, skeleton, cem, plan_rng);
  plan = execute_and_verify(*model, scene, skeleton, std::move(plan), cem,
                            exec_rng);

  nlohmann::json j = plan_result_to_json(plan, skeleton);
  j["seed"] = opts.seed;
  std::string text = j.dump(2) + "\n";
  if (opts.report_path.empty())
    std::cout << text;
  else
    spit(opts.report_path, text);
  if (!opts.quiet) {
    int achieved = 0;
    for (const PlanStep& s : plan.steps) achieved += s.achieved_analytic;
    std::cout << "achieved " << achieved << "/" << plan.steps.size()
              << " subgoals (analytic)\n";
  }
  return 0;
}

int run_sweep(const SweepOptions& opts) {
  check(!opts.ckpt.empty(), "sweep needs --ckpt");
  check(!opts.out.empty(), "sweep needs --out");
  auto model = RdGnnModel::load(opts.ckpt);
  SweepSpec spec;
  spec.axis = opts.axis;
  spec.values = opts.values;
  spec.trials = opts.trials;
  spec.seed = opts.seed;
  spec.default_objects = opts.default_objects;
  spec.default_relations = opts.default_relations;
  spec.default_steps = opts.default_steps;
  spec.skills = parse_skills(opts.skills);
  spec.n_threads = opts.threads;

  CemConfig cem;
  cem.bounds = model->config().bounds;

  SweepResult result = run_sweep(spec, *model, cem);
  spit(opts.out, result.to_csv());
  if (!opts.quiet) {
    for (int v : spec.values)
      std::cout << spec.axis << "=" << v << ": success rate "
                << result.success_rate(v) << "\n";
  }
  return 0;
}

int run_report(const ReportOptions& opts) {
  check(!opts.sweep_csv.empty(), "report needs --sweep");
  check(!opts.out.empty(), "report needs --out");
  spit(opts.out, sweep_csv_to_svg(slurp(opts.sweep_csv)));
  return 0;
}

int main(int argc, const char* const* argv) {
  CLI::App app{"relational-dynamics learning and planning for blocks scenes"};
  app.require_subcommand(1);

  uint64_t g_seed = 0;
  int g_threads = 1;
  std::string g_config;
  app.add_option("--seed", g_seed, "default seed for subcommands");
  app.add_option("--threads", g_threads, "default worker thread count");
  app.add_option("--config", g_config, "train-config JSON path");

  GenDataOptions gen;
  auto* c_gen = app.add_subcommand("gen-data", "generate an episode corpus");
  c_gen->add_option("--episodes", gen.episodes);
  c_gen->add_option("--min-objects", gen.min_objects);
  c_gen->add_option("--max-objects", gen.max_objects);
  std::string horizon = "1";
  c_gen->add_option("--horizon", horizon, "fixed H or range like 1..3");
  c_gen->add_option("--push-fraction", gen.push_fraction);
  c_gen->add_option("--seed", gen.seed);
  c_gen->add_option("--threads", gen.threads);
  c_gen->add_option("--out", gen.out)->required();
  c_gen->add_option("--train-frac", gen.train_frac);
  c_gen->add_option("--val-frac", gen.val_frac);
  c_gen->add_option("--test-frac", gen.test_frac);

  TrainOptions tr;
  auto* c_train = app.add_subcommand("train", "train a model on a corpus");
  c_train->add_option("--data", tr.data)->required();
  c_train->add_option("--out", tr.out_dir)->required();
  c_train->add_option("--config", tr.config_path);
  c_train->add_option("--ablation", tr.ablation);
  c_train->add_option("--epochs", tr.epochs);
  c_train->add_option("--learning-rate", tr.learning_rate);
  c_train->add_option("--seed", tr.seed);

  EvalOptions ev;
  auto* c_eval = app.add_subcommand("eval", "relation F1 on a corpus split");
  c_eval->add_option("--ckpt", ev.ckpt)->required();
  c_eval->add_option("--data", ev.data)->required();
  c_eval->add_option("--split", ev.split);
  c_eval->add_option("--out", ev.out);

  PlanOptions pl;
  auto* c_plan = app.add_subcommand("plan", "plan and execute a skeleton");
  c_plan->add_option("--ckpt", pl.ckpt)->required();
  c_plan->add_option("--scene", pl.scene_path)->required();
  c_plan->add_option("--skeleton", pl.skeleton_path)->required();
  c_plan->add_option("--report", pl.report_path);
  c_plan->add_option("--seed", pl.seed);
  c_plan->add_option("--threads", pl.threads);
  c_plan->add_option("--execution", pl.execution);
  c_plan->add_option("--skills", pl.skills);

  SweepOptions sw;
  auto* c_sweep = app.add_subcommand("sweep", "planning-success sweep");
  c_sweep->add_option("--ckpt", sw.ckpt)->required();
  c_sweep->add_option("--axis", sw.axis);
  c_sweep->add_option("--values", sw.values)->required();
  c_sweep->add_option("--trials", sw.trials);
  c_sweep->add_option("--seed", sw.seed);
  c_sweep->add_option("--threads", sw.threads);
  c_sweep->add_option("--objects", sw.default_objects);
  c_sweep->add_option("--relations", sw.default_relations);
  c_sweep->add_option("--steps", sw.default_steps);
  c_sweep->add_option("--skills", sw.skills);
  c_sweep->add_option("--out", sw.out)->required();

  ReportOptions rp;
  auto* c_report = app.add_subcommand("report", "render a sweep CSV to SVG");
  c_report->add_option("--sweep", rp.sweep_csv)->required();
  c_report->add_option("--out", rp.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*c_gen) {
      if (!c_gen->count("--seed")) gen.seed = g_seed;
      if (!c_gen->count("--threads")) gen.threads = g_threads;
      size_t dots = horizon.find("..");
      if (dots == std::string::npos) {
        gen.min_horizon = gen.max_horizon = std::stoi(horizon);
      } else {
        gen.min_horizon = std::stoi(horizon.substr(0, dots));
        gen.max_horizon = std::stoi(horizon.substr(dots + 2));
      }
      return run_gen_data(gen);
    }
    if (*c_train) {
      if (!c_train->count("--seed") && g_seed) tr.seed = static_cast<int64_t>(g_seed);
      if (tr.config_path.empty()) tr.config_path = g_config;
      return run_train(tr);
    }
    if (*c_eval) return run_eval(ev);
    if (*c_plan) {
      if (!c_plan->count("--seed")) pl.seed = g_seed;
      if (!c_plan->count("--threads")) pl.threads = g_threads;
      return run_plan(pl);
    }
    if (*c_sweep) {
      if (!c_sweep->count("--seed")) sw.seed = g_seed;
      if (!c_sweep->count("--threads")) sw.threads = g_threads;
      return run_sweep(sw);
    }
    if (*c_report) return run_report(rp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace reldyn::cli
