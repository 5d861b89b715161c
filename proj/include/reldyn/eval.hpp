#pragma once

#include <string>
#include <vector>

#include "reldyn/dataset.hpp"
#include "reldyn/planner.hpp"
#include "reldyn/train.hpp"

namespace reldyn {

// Threshold-0.5 F1 over a corpus split. The detect path re-encodes each
// post-action observation; the predict path rolls the pre-action latent
// through the dynamics. Both score against the post-action labels.
F1Report f1_eval(const std::vector<Episode>& corpus,
                 const std::vector<int>& indices, RdGnnModel& model);

// Reachable-by-construction goal: applies random feasible actions in the
// simulator and selects conjuncts from the resulting relation matrix,
// preferring ones that differ from the current scene. `trivial` reports
// when the goal had to fall back to already-true conjuncts (or is empty).
Goal goal_sampler(const Scene& scene, int n_relations, Rng& rng,
                  const DataGenConfig& action_cfg, int n_actions = 1,
                  bool* trivial = nullptr);

// H-step skeleton sampled from one simulated action sequence; subgoal k is
// drawn from the state after action k.
PlanSkeleton sample_skeleton(const Scene& scene, int n_steps, int n_relations,
                             Rng& rng, const DataGenConfig& action_cfg,
                             bool* trivial = nullptr);

struct SweepSpec {
  std::string axis;  // n_objects | n_goal_relations | n_steps
  std::vector<int> values;
  int trials = 20;
  uint64_t seed = 0;
  int default_objects = 3;
  int default_relations = 2;
  int default_steps = 1;
  std::vector<Skill> skills = {Skill::Push};
  int n_threads = 1;

  void validate() const;
};

struct TrialRow {
  int value = 0;
  int trial = 0;
  uint64_t seed = 0;
  bool success = false;      // every subgoal achieved, analytic verdict
  int subgoals_achieved = 0;
  int n_steps = 1;
  bool trivial_goal = false;
};

struct SweepResult {
  SweepSpec spec;
  std::vector<TrialRow> rows;

  double success_rate(int value) const;
  std::string to_csv() const;
};

// Planning trials across the axis; scenes, goals, and planning are seeded
// per trial, so trials with equal (seed, trial) share scenes across values
// of the n_steps / n_goal_relations axes.
SweepResult run_sweep(const SweepSpec& spec, RdGnnModel& model,
                      const CemConfig& cem);

// Minimal line plot of success rate vs axis value.
std::string sweep_svg(const SweepResult& result);
std::string sweep_csv_to_svg(const std::string& csv_text);

}  // namespace reldyn
