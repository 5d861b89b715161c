#include "reldyn/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace reldyn {

namespace {

Tensor labels_tensor(const RelationMatrix& m, const GraphSpec& spec) {
  Tensor t = Tensor::zeros({spec.n_pairs(), kNumRelations});
  for (int k = 0; k < spec.n_pairs(); ++k) {
    auto [i, j] = spec.pairs[static_cast<size_t>(k)];
    const RelationVector& v = m.at(spec.object_ids[static_cast<size_t>(i)],
                                   spec.object_ids[static_cast<size_t>(j)]);
    for (int r = 0; r < kNumRelations; ++r)
      t.data[static_cast<size_t>(k) * kNumRelations + r] = v[r] ? 1.0 : 0.0;
  }
  return t;
}

Tensor pose_target(const Cuboid& c) {
  return Tensor::row({c.center.x, c.center.y, c.center.z});
}

const Tensor& identity_rotation9() {
  static const Tensor t({1, 9}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  return t;
}

// poses listed in node order for this spec
std::vector<const Cuboid*> node_poses(const EpisodeStep& step,
                                      const GraphSpec& spec) {
  std::vector<const Cuboid*> out;
  for (int i = 0; i < spec.n(); ++i) {
    int oid = spec.object_ids[static_cast<size_t>(i)];
    const Cuboid* found = nullptr;
    for (const Cuboid& c : step.poses)
      if (c.object_id == oid) found = &c;
    check(found != nullptr, "episode step lacks pose for object ", oid);
    out.push_back(found);
  }
  return out;
}

std::vector<Vec3> snapshot_centers(const Tape& tape,
                                   const std::vector<Var>& positions) {
  std::vector<Vec3> out;
  for (const Var& v : positions) {
    const Tensor& t = tape.value(v);
    out.push_back({t.data[0], t.data[1], t.data[2]});
  }
  return out;
}

std::vector<Tensor> snapshot_probs(const Tape& tape,
                                   const std::vector<Var>& probs) {
  std::vector<Tensor> out;
  for (const Var& v : probs) out.push_back(tape.value(v));
  return out;
}

}  // namespace

EpisodeLosses episode_forward(Tape& tape, RdGnnModel& model,
                              const Episode& episode, const GraphSpec& spec,
                              const ForwardOptions& opts) {
  check(!episode.steps.empty(), "episode has no observations");
  const int H = episode.horizon();
  const bool learned = model.config().readout == RelationReadout::Learned;
  const bool gnn = model.config().architecture == Architecture::Gnn;

  EpisodeLosses out;
  out.spec = spec;

  std::vector<LatentVars> encoded;
  std::vector<Tensor> labels;
  for (const EpisodeStep& step : episode.steps) {
    encoded.push_back(model.encode(tape, step.cloud, spec));
    labels.push_back(labels_tensor(step.relations, spec));
  }

  auto bce_against = [&](const std::vector<Var>& pair_probs, const Tensor& lab) {
    return tape.bce(tape.concat_rows(pair_probs), lab);
  };
  auto accumulate = [&](Var& slot, Var term) {
    slot = slot.valid() ? tape.add(slot, term) : term;
  };
  auto pose_term = [&](const PoseVars& pv, const EpisodeStep& step) {
    std::vector<const Cuboid*> targets = node_poses(step, spec);
    Var term;
    for (int i = 0; i < spec.n(); ++i) {
      Var pc = tape.squared_l2(pv.positions[static_cast<size_t>(i)],
                               tape.constant(pose_target(*targets[static_cast<size_t>(i)])));
      Var rc = tape.squared_l2(pv.rotations[static_cast<size_t>(i)],
                               tape.constant(identity_rotation9()));
      accumulate(term, tape.add(pc, rc));
    }
    return term;
  };

  // detect path over every observation
  const bool want_detect_probs = opts.rel || (opts.collect_metrics && learned);
  const bool want_detect_pose =
      opts.pose || (opts.collect_metrics && !learned && gnn);
  for (int t = 0; t <= H; ++t) {
    if (want_detect_probs) {
      std::vector<Var> probs =
          model.classify_relations(tape, encoded[static_cast<size_t>(t)], spec);
      if (opts.rel) {
        accumulate(out.rel, bce_against(probs, labels[static_cast<size_t>(t)]));
        out.rel_terms += 1;
      }
      if (opts.collect_metrics && learned)
        out.detect_probs.push_back(snapshot_probs(tape, probs));
    }
    if (want_detect_pose) {
      PoseVars pv = model.regress_pose(tape, encoded[static_cast<size_t>(t)], spec);
      if (opts.pose) {
        accumulate(out.pose, pose_term(pv, episode.steps[static_cast<size_t>(t)]));
        out.pose_terms += 1;
      }
      if (opts.collect_metrics && !learned)
        out.detect_centers.push_back(snapshot_centers(tape, pv.positions));
    }
  }

  // delta rollouts: start at every t, roll to the end of the episode
  const bool want_rollouts =
      H > 0 && (opts.dyn || opts.rel_prime || opts.pose || opts.collect_metrics);
  if (want_rollouts) {
    for (int t = 0; t < H; ++t) {
      LatentVars x = encoded[static_cast<size_t>(t)];
      for (int k = t; k < H; ++k) {
        x = model.dynamics(tape, x, episode.actions[static_cast<size_t>(k)], spec);
        const bool first_offset = (k == t);
        if (opts.dyn) {
          const LatentVars& target = encoded[static_cast<size_t>(k + 1)];
          Var term;
          for (size_t i = 0; i < x.nodes.size(); ++i)
            accumulate(term, tape.squared_l2(x.nodes[i], target.nodes[i]));
          for (size_t i = 0; i < x.edges.size(); ++i)
            accumulate(term, tape.squared_l2(x.edges[i], target.edges[i]));
          accumulate(out.dyn, term);
          out.dyn_terms += 1;
        }
        const bool want_probs =
            opts.rel_prime ||
            (opts.collect_metrics && learned && first_offset);
        if (want_probs) {
          std::vector<Var> probs = model.classify_relations(tape, x, spec);
          if (opts.rel_prime) {
            accumulate(out.rel_prime,
                       bce_against(probs, labels[static_cast<size_t>(k + 1)]));
            out.rel_prime_terms += 1;
          }
          if (opts.collect_metrics && learned && first_offset)
            out.predict_probs.push_back(snapshot_probs(tape, probs));
        }
        const bool want_pose =
            (opts.pose || (opts.collect_metrics && !learned && first_offset)) &&
            gnn;
        if (want_pose) {
          PoseVars pv = model.regress_pose(tape, x, spec);
          if (opts.pose) {
            accumulate(out.pose,
                       pose_term(pv, episode.steps[static_cast<size_t>(k + 1)]));
            out.pose_terms += 1;
          }
          if (opts.collect_metrics && !learned && first_offset)
            out.predict_centers.push_back(snapshot_centers(tape, pv.positions));
        }
      }
    }
  }
  return out;
}

Var weighted_total(Tape& tape, const EpisodeLosses& losses,
                   const LossWeights& w) {
  w.validate();
  Var total;
  auto addw = [&](Var term, double weight) {
    if (weight <= 0.0 || !term.valid()) return;
    Var scaled = weight == 1.0 ? term : tape.scale(term, weight);
    total = total.valid() ? tape.add(total, scaled) : scaled;
  };
  addw(losses.rel, w.rel);
  addw(losses.dyn, w.dyn);
  addw(losses.rel_prime, w.rel_prime);
  addw(losses.pose, w.pose);
  check(total.valid(), "no loss terms were built");
  return total;
}

namespace {
double single_loss(RdGnnModel& model, const Episode& ep, ForwardOptions opts,
                   Var EpisodeLosses::*slot) {
  Tape tape;
  GraphSpec spec = GraphSpec::for_cloud(ep.steps.front().cloud);
  EpisodeLosses l = episode_forward(tape, model, ep, spec, opts);
  Var v = l.*slot;
  return v.valid() ? tape.value(v).data[0] : 0.0;
}
}  // namespace

double loss_rel(RdGnnModel& model, const Episode& ep) {
  return single_loss(model, ep, {true, false, false, false, false},
                     &EpisodeLosses::rel);
}
double loss_dyn(RdGnnModel& model, const Episode& ep) {
  return single_loss(model, ep, {false, true, false, false, false},
                     &EpisodeLosses::dyn);
}
double loss_rel_prime(RdGnnModel& model, const Episode& ep) {
  return single_loss(model, ep, {false, false, true, false, false},
                     &EpisodeLosses::rel_prime);
}
double loss_pose(RdGnnModel& model, const Episode& ep) {
  return single_loss(model, ep, {false, false, false, true, false},
                     &EpisodeLosses::pose);
}

AblationSetup ablation_setup(const std::string& name) {
  using A = Architecture;
  using R = RelationReadout;
  if (name == "rd_gnn") return {A::Gnn, {1, 1, 1, 0}, R::Learned};
  if (name == "rd_pe_gnn") return {A::Gnn, {1, 1, 1, 1}, R::Learned};
  if (name == "pe_gnn") return {A::Gnn, {0, 1, 0, 1}, R::AnalyticPose};
  if (name == "dpd_gnn") return {A::Gnn, {0, 0, 0, 1}, R::AnalyticPose};
  if (name == "mlp") return {A::PairwiseMlp, {1, 1, 1, 0}, R::Learned};
  if (name == "rd_gnn_wo_lr") return {A::Gnn, {1, 0, 1, 0}, R::Learned};
  if (name == "relations_only") return {A::Gnn, {1, 0, 0, 0}, R::Learned};
  fail("unknown ablation \"", name, "\"");
}

std::vector<std::string> ablation_names() {
  return {"rd_gnn", "rd_pe_gnn", "pe_gnn",       "dpd_gnn",
          "mlp",    "rd_gnn_wo_lr", "relations_only"};
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = {{"ablation", ablation},
                      {"learning_rate", learning_rate},
                      {"epochs", epochs},
                      {"seed", seed},
                      {"message_rounds", message_rounds}};
  if (weights_override) {
    j["weights"] = {{"rel", weights_override->rel},
                    {"dyn", weights_override->dyn},
                    {"rel_prime", weights_override->rel_prime},
                    {"pose", weights_override->pose}};
  }
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.ablation = j.value("ablation", c.ablation);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.message_rounds = j.value("message_rounds", c.message_rounds);
  if (j.contains("weights")) {
    LossWeights w;
    w.rel = j["weights"].value("rel", w.rel);
    w.dyn = j["weights"].value("dyn", w.dyn);
    w.rel_prime = j["weights"].value("rel_prime", w.rel_prime);
    w.pose = j["weights"].value("pose", w.pose);
    c.weights_override = w;
  }
  (void)ablation_setup(c.ablation);  // validate the name early
  return c;
}

namespace {

struct EpochAccumulator {
  double rel = 0, dyn = 0, rel_prime = 0, pose = 0, total = 0;
  long episodes = 0;
  ConfusionCounts detect, predict;

  void add_losses(const Tape& tape, const EpisodeLosses& l, double total_value) {
    auto val = [&](Var v) { return v.valid() ? tape.value(v).data[0] : 0.0; };
    rel += val(l.rel);
    dyn += val(l.dyn);
    rel_prime += val(l.rel_prime);
    pose += val(l.pose);
    total += total_value;
    episodes += 1;
  }

  EpochRow row(int epoch, const std::string& split) const {
    EpochRow r;
    r.epoch = epoch;
    r.split = split;
    double n = episodes > 0 ? static_cast<double>(episodes) : 1.0;
    r.loss_rel = rel / n;
    r.loss_dyn = dyn / n;
    r.loss_rel_prime = rel_prime / n;
    r.loss_pose = pose / n;
    r.total = total / n;
    r.f1_detect = detect.macro_f1();
    r.f1_predict = predict.macro_f1();
    return r;
  }
};

}  // namespace

void accumulate_episode_metrics(ConfusionCounts& detect,
                                ConfusionCounts& predict, const Episode& ep,
                                const EpisodeLosses& l,
                                const RdGnnModel& model) {
  const GraphSpec& spec = l.spec;
  const bool learned = model.config().readout == RelationReadout::Learned;
  auto label_of = [&](int step, int k) {
    auto [i, j] = spec.pairs[static_cast<size_t>(k)];
    return ep.steps[static_cast<size_t>(step)].relations.at(
        spec.object_ids[static_cast<size_t>(i)],
        spec.object_ids[static_cast<size_t>(j)]);
  };
  auto analytic_row = [&](const std::vector<Vec3>& centers, int k) {
    auto [i, j] = spec.pairs[static_cast<size_t>(k)];
    std::vector<const Cuboid*> ref = node_poses(ep.steps.front(), spec);
    return analytic_pair_relations(centers[static_cast<size_t>(i)],
                                   ref[static_cast<size_t>(i)]->half_extents,
                                   centers[static_cast<size_t>(j)],
                                   ref[static_cast<size_t>(j)]->half_extents,
                                   ep.camera);
  };

  // detection scored on post-action observations
  if (learned) {
    for (size_t t = 1; t < l.detect_probs.size(); ++t)
      for (int k = 0; k < spec.n_pairs(); ++k)
        detect.add_vector(threshold_probs(l.detect_probs[t][static_cast<size_t>(k)]),
                          label_of(static_cast<int>(t), k));
    for (size_t a = 0; a < l.predict_probs.size(); ++a)
      for (int k = 0; k < spec.n_pairs(); ++k)
        predict.add_vector(threshold_probs(l.predict_probs[a][static_cast<size_t>(k)]),
                           label_of(static_cast<int>(a) + 1, k));
  } else {
    for (size_t t = 1; t < l.detect_centers.size(); ++t)
      for (int k = 0; k < spec.n_pairs(); ++k)
        detect.add_vector(analytic_row(l.detect_centers[t], k),
                          label_of(static_cast<int>(t), k));
    for (size_t a = 0; a < l.predict_centers.size(); ++a)
      for (int k = 0; k < spec.n_pairs(); ++k)
        predict.add_vector(analytic_row(l.predict_centers[a], k),
                           label_of(static_cast<int>(a) + 1, k));
  }
}

std::string metrics_csv(const std::vector<EpochRow>& log) {
  std::ostringstream os;
  os << "epoch,split,loss_rel,loss_dyn,loss_rel_prime,loss_pose,total,"
        "f1_detect,f1_predict\n";
  os.precision(17);
  for (const EpochRow& r : log)
    os << r.epoch << "," << r.split << "," << r.loss_rel << "," << r.loss_dyn
       << "," << r.loss_rel_prime << "," << r.loss_pose << "," << r.total
       << "," << r.f1_detect << "," << r.f1_predict << "\n";
  return os.str();
}

TrainResult train(const std::vector<Episode>& corpus,
                  const CorpusManifest& manifest, const TrainConfig& cfg,
                  const std::string& out_dir) {
  check(!corpus.empty(), "training corpus is empty");
  AblationSetup setup = ablation_setup(cfg.ablation);
  LossWeights weights = cfg.weights_override.value_or(setup.weights);
  weights.validate();

  ModelConfig mc;
  mc.architecture = setup.architecture;
  mc.readout = setup.readout;
  mc.message_rounds = cfg.message_rounds;
  if (!manifest.generation_config.is_null() &&
      manifest.generation_config.is_object()) {
    DataGenConfig gen = DataGenConfig::from_json(manifest.generation_config);
    mc.bounds = gen.bounds;
  }

  Rng master(cfg.seed);
  RdGnnModel model(mc, master.next_u64());
  Rng ids_rng = master.child(1);
  Rng shuffle_rng = master.child(2);

  nn::AdamState adam;
  adam.learning_rate = cfg.learning_rate;

  std::vector<int> train_idx = manifest.train;
  if (train_idx.empty())
    for (size_t i = 0; i < corpus.size(); ++i)
      train_idx.push_back(static_cast<int>(i));

  ForwardOptions opts;
  opts.rel = weights.rel > 0;
  opts.dyn = weights.dyn > 0;
  opts.rel_prime = weights.rel_prime > 0;
  opts.pose = weights.pose > 0;
  opts.collect_metrics = true;

  std::filesystem::create_directories(out_dir);
  TrainResult result;
  result.checkpoint_path = out_dir + "/checkpoint.ckpt";
  result.metrics_path = out_dir + "/metrics.csv";

  double best = std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> order = train_idx;
    shuffle_rng.shuffle(order);

    EpochAccumulator train_acc;
    for (int idx : order) {
      const Episode& ep = corpus[static_cast<size_t>(idx)];
      Tape tape;
      GraphSpec spec = GraphSpec::for_cloud(ep.steps.front().cloud, ids_rng);
      EpisodeLosses l = episode_forward(tape, model, ep, spec, opts);
      Var total = weighted_total(tape, l, weights);
      double value = tape.value(total).data[0];
      check(std::isfinite(value), "training diverged: loss ", value,
            " at epoch ", epoch, " episode ", idx);
      tape.backward(total);
      nn::adam_step(adam, model.params(), tape);
      train_acc.add_losses(tape, l, value);
      accumulate_episode_metrics(train_acc.detect, train_acc.predict, ep, l, model);
    }
    result.log.push_back(train_acc.row(epoch, "train"));

    EpochAccumulator val_acc;
    for (int idx : manifest.val) {
      const Episode& ep = corpus[static_cast<size_t>(idx)];
      Tape tape;
      GraphSpec spec = GraphSpec::for_cloud(ep.steps.front().cloud);
      EpisodeLosses l = episode_forward(tape, model, ep, spec, opts);
      Var total = weighted_total(tape, l, weights);
      val_acc.add_losses(tape, l, tape.value(total).data[0]);
      accumulate_episode_metrics(val_acc.detect, val_acc.predict, ep, l, model);
    }
    bool has_val = !manifest.val.empty();
    if (has_val) result.log.push_back(val_acc.row(epoch, "val"));

    double score = has_val ? val_acc.row(epoch, "val").total
                           : train_acc.row(epoch, "train").total;
    if (score < best) {
      best = score;
      result.best_epoch = epoch;
      result.best_val_total = score;
      nlohmann::json extra = {{"ablation", cfg.ablation},
                              {"train_config", cfg.to_json()},
                              {"best_epoch", epoch}};
      model.save(result.checkpoint_path, extra);
    }
  }

  std::ofstream ms(result.metrics_path, std::ios::trunc);
  check(ms.good(), "cannot write metrics to ", result.metrics_path);
  ms << metrics_csv(result.log);
  return result;
}

}  // namespace reldyn
