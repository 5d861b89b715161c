#pragma once

#include <optional>
#include <string>
#include <vector>

#include "reldyn/dataset.hpp"
#include "reldyn/metrics.hpp"
#include "reldyn/model.hpp"

namespace reldyn {

struct LossWeights {
  double rel = 1.0;
  double dyn = 1.0;
  double rel_prime = 1.0;
  double pose = 0.0;

  void validate() const {
    check(rel >= 0 && dyn >= 0 && rel_prime >= 0 && pose >= 0,
          "loss weights must be non-negative");
    check(rel + dyn + rel_prime + pose > 0, "at least one loss weight must be positive");
  }
};

// Which pieces of the episode graph to build.
struct ForwardOptions {
  bool rel = true;
  bool dyn = true;
  bool rel_prime = true;
  bool pose = false;
  bool collect_metrics = false;  // snapshot probabilities / centers for F1
};

// One episode's losses and metric snapshots, all living on the caller's
// tape. Term counts follow the multi-step index structure: rel has one term
// per observation; dyn and rel_prime have one term per (start, offset)
// rollout comparison, H(H+1)/2 in total.
struct EpisodeLosses {
  GraphSpec spec;
  Var rel, dyn, rel_prime, pose;  // scalar Vars; invalid when not requested
  int rel_terms = 0, dyn_terms = 0, rel_prime_terms = 0, pose_terms = 0;

  // detection snapshots per observation, prediction snapshots per action
  // (one-step rollout t -> t+1), aligned with spec.pairs
  std::vector<std::vector<Tensor>> detect_probs, predict_probs;
  std::vector<std::vector<Vec3>> detect_centers, predict_centers;
};

EpisodeLosses episode_forward(Tape& tape, RdGnnModel& model,
                              const Episode& episode, const GraphSpec& spec,
                              const ForwardOptions& opts);

// Weighted total; terms with zero weight never enter the graph, so their
// gradient contribution is exactly zero.
Var weighted_total(Tape& tape, const EpisodeLosses& losses,
                   const LossWeights& w);

// Threshold the episode's metric snapshots into confusion counts. Detection
// is scored on post-action observations, prediction on one-step rollouts,
// both against the post-action labels.
void accumulate_episode_metrics(ConfusionCounts& detect,
                                ConfusionCounts& predict, const Episode& ep,
                                const EpisodeLosses& losses,
                                const RdGnnModel& model);

// Spec-level convenience wrappers (evaluation ids, value results).
double loss_rel(RdGnnModel& model, const Episode& episode);
double loss_dyn(RdGnnModel& model, const Episode& episode);
double loss_rel_prime(RdGnnModel& model, const Episode& episode);
double loss_pose(RdGnnModel& model, const Episode& episode);

// Ablation table: every named configuration maps to a unique
// (architecture, loss weights, relation readout) triple.
struct AblationSetup {
  Architecture architecture = Architecture::Gnn;
  LossWeights weights;
  RelationReadout readout = RelationReadout::Learned;
};
AblationSetup ablation_setup(const std::string& name);
std::vector<std::string> ablation_names();

struct TrainConfig {
  std::string ablation = "rd_gnn";
  double learning_rate = 1e-4;
  int epochs = 40;
  uint64_t seed = 0;
  int message_rounds = 1;
  std::optional<LossWeights> weights_override;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochRow {
  int epoch = 0;
  std::string split;  // "train" or "val"
  double loss_rel = 0, loss_dyn = 0, loss_rel_prime = 0, loss_pose = 0,
         total = 0;
  double f1_detect = 0, f1_predict = 0;
};

struct TrainResult {
  std::vector<EpochRow> log;
  int best_epoch = -1;
  double best_val_total = 0;
  std::string checkpoint_path;
  std::string metrics_path;
};

// Per-episode (batch 1) Adam over the manifest's train split; ids
// re-randomized each episode; best-val checkpoint written to
// out_dir/checkpoint.ckpt and the log to out_dir/metrics.csv.
TrainResult train(const std::vector<Episode>& corpus,
                  const CorpusManifest& manifest, const TrainConfig& cfg,
                  const std::string& out_dir);

std::string metrics_csv(const std::vector<EpochRow>& log);

}  // namespace reldyn
