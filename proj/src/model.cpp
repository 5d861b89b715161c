#include "reldyn/model.hpp"

#include <algorithm>

namespace reldyn {

const char* architecture_name(Architecture a) {
  return a == Architecture::Gnn ? "gnn" : "pairwise_mlp";
}

Architecture architecture_from_name(const std::string& s) {
  if (s == "gnn") return Architecture::Gnn;
  if (s == "pairwise_mlp") return Architecture::PairwiseMlp;
  fail("unknown architecture \"", s, "\"");
}

void ModelConfig::validate() const {
  check(point_feature_width > 0 && id_width > 0 && latent_width > 0 &&
            graph_hidden > 0 && relation_hidden > 0 && pose_hidden > 0 &&
            action_hidden > 0,
        "model widths must be strictly positive");
  check(n_relations == kNumRelations, "relation count ", n_relations,
        " does not match the labeler's ", kNumRelations);
  check(message_rounds >= 1, "message_rounds must be >= 1");
  check(id_width == kMaxObjectIds, "id width ", id_width,
        " must match the object-id space ", kMaxObjectIds);
}

nlohmann::json ModelConfig::to_json() const {
  return {{"point_feature_width", point_feature_width},
          {"id_width", id_width},
          {"latent_width", latent_width},
          {"graph_hidden", graph_hidden},
          {"relation_hidden", relation_hidden},
          {"pose_hidden", pose_hidden},
          {"action_hidden", action_hidden},
          {"n_relations", n_relations},
          {"message_rounds", message_rounds},
          {"architecture", architecture_name(architecture)},
          {"readout",
           readout == RelationReadout::Learned ? "learned" : "analytic_pose"},
          {"push_axis_bound", bounds.push_axis_bound},
          {"pick_place_axis_bound", bounds.pick_place_axis_bound}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.point_feature_width = j.value("point_feature_width", c.point_feature_width);
  c.id_width = j.value("id_width", c.id_width);
  c.latent_width = j.value("latent_width", c.latent_width);
  c.graph_hidden = j.value("graph_hidden", c.graph_hidden);
  c.relation_hidden = j.value("relation_hidden", c.relation_hidden);
  c.pose_hidden = j.value("pose_hidden", c.pose_hidden);
  c.action_hidden = j.value("action_hidden", c.action_hidden);
  c.n_relations = j.value("n_relations", c.n_relations);
  c.message_rounds = j.value("message_rounds", c.message_rounds);
  c.architecture =
      architecture_from_name(j.value("architecture", std::string("gnn")));
  c.readout = j.value("readout", std::string("learned")) == "analytic_pose"
                  ? RelationReadout::AnalyticPose
                  : RelationReadout::Learned;
  c.bounds.push_axis_bound = j.value("push_axis_bound", c.bounds.push_axis_bound);
  c.bounds.pick_place_axis_bound =
      j.value("pick_place_axis_bound", c.bounds.pick_place_axis_bound);
  c.validate();
  return c;
}

int GraphSpec::node_of(int object_id) const {
  for (size_t i = 0; i < object_ids.size(); ++i)
    if (object_ids[i] == object_id) return static_cast<int>(i);
  fail("object id ", object_id, " is not a node of this graph");
}

int GraphSpec::pair_index(int node_i, int node_j) const {
  for (size_t k = 0; k < pairs.size(); ++k)
    if (pairs[k].first == node_i && pairs[k].second == node_j)
      return static_cast<int>(k);
  fail("pair (", node_i, ",", node_j, ") is not in this graph");
}

namespace {
GraphSpec spec_base(const SegmentedCloud& cloud) {
  GraphSpec s;
  s.object_ids = cloud.object_ids();  // map iteration: ascending object id
  int n = static_cast<int>(s.object_ids.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) s.pairs.emplace_back(i, j);
  return s;
}
}  // namespace

GraphSpec GraphSpec::for_cloud(const SegmentedCloud& cloud) {
  GraphSpec s = spec_base(cloud);
  for (int i = 0; i < s.n(); ++i) s.graph_ids.push_back(i);
  return s;
}

GraphSpec GraphSpec::for_cloud(const SegmentedCloud& cloud, Rng& rng) {
  GraphSpec s = spec_base(cloud);
  std::vector<int> all(kMaxObjectIds);
  for (int i = 0; i < kMaxObjectIds; ++i) all[static_cast<size_t>(i)] = i;
  rng.shuffle(all);
  s.graph_ids.assign(all.begin(), all.begin() + s.n());
  return s;
}

GraphSpec GraphSpec::with_ids(const SegmentedCloud& cloud,
                              const std::vector<int>& graph_ids) {
  GraphSpec s = spec_base(cloud);
  check(graph_ids.size() == s.object_ids.size(), "got ", graph_ids.size(),
        " graph ids for ", s.object_ids.size(), " objects");
  for (size_t i = 0; i < graph_ids.size(); ++i) {
    check(graph_ids[i] >= 0 && graph_ids[i] < kMaxObjectIds, "graph id ",
          graph_ids[i], " out of [0,16)");
    for (size_t j = i + 1; j < graph_ids.size(); ++j)
      check(graph_ids[i] != graph_ids[j], "duplicate graph id ", graph_ids[i]);
  }
  s.graph_ids = graph_ids;
  return s;
}

RdGnnModel::RdGnnModel(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(init_seed);
  const int pf = cfg_.point_feature_width;
  const int node_w = cfg_.node_input_width();
  const int lat = cfg_.latent_width;
  const int gh = cfg_.graph_hidden;
  using nn::Activation;
  using nn::Mlp;

  point_mlp_ = Mlp::make({6, gh, pf}, Activation::Relu, rng);
  post_pool_mlp_ = Mlp::make({pf, pf}, Activation::None, rng);
  params_.add_mlp("phi_pc.point_mlp", point_mlp_);
  params_.add_mlp("phi_pc.post_mlp", post_pool_mlp_);

  if (cfg_.architecture == Architecture::Gnn) {
    message_mlp_ = Mlp::make({2 * node_w, gh, lat}, Activation::None, rng);
    node_mlp_ = Mlp::make({node_w + lat, gh, lat}, Activation::None, rng);
    edge_mlp_ = Mlp::make({2 * node_w + 2 * lat, gh, lat}, Activation::None, rng);
    params_.add_mlp("phi_g.message_mlp", message_mlp_);
    params_.add_mlp("phi_g.node_mlp", node_mlp_);
    params_.add_mlp("phi_g.edge_mlp", edge_mlp_);
    if (cfg_.message_rounds > 1) {
      extra_message_mlp_ = Mlp::make({3 * lat, gh, lat}, Activation::None, rng);
      extra_node_mlp_ = Mlp::make({2 * lat, gh, lat}, Activation::None, rng);
      extra_edge_mlp_ = Mlp::make({5 * lat, gh, lat}, Activation::None, rng);
      params_.add_mlp("phi_g.extra_round.message_mlp", extra_message_mlp_);
      params_.add_mlp("phi_g.extra_round.node_mlp", extra_node_mlp_);
      params_.add_mlp("phi_g.extra_round.edge_mlp", extra_edge_mlp_);
    }
    latent_message_mlp_ = Mlp::make({3 * lat, gh, lat}, Activation::None, rng);
    params_.add_mlp("latent.message_mlp", latent_message_mlp_);
    relation_mlp_ = Mlp::make({5 * lat, cfg_.relation_hidden, cfg_.n_relations},
                              Activation::Sigmoid, rng);
    params_.add_mlp("psi_r.mlp", relation_mlp_);
    pose_mlp_ = Mlp::make({2 * lat, cfg_.pose_hidden, 9}, Activation::None, rng);
    params_.add_mlp("psi_p.mlp", pose_mlp_);
  } else {
    pair_mlp_ = Mlp::make({2 * node_w, gh, lat}, Activation::None, rng);
    params_.add_mlp("pair.encoder_mlp", pair_mlp_);
    pair_relation_mlp_ =
        Mlp::make({lat, cfg_.relation_hidden, cfg_.n_relations},
                  Activation::Sigmoid, rng);
    params_.add_mlp("pair.relation_mlp", pair_relation_mlp_);
  }

  action_mlp_ = Mlp::make({cfg_.action_input_width(), cfg_.action_hidden, lat},
                          Activation::None, rng);
  params_.add_mlp("phi_a.mlp", action_mlp_);

  for (int s = 0; s < kNumSkills; ++s) {
    std::string name = skill_name(static_cast<Skill>(s));
    if (cfg_.architecture == Architecture::Gnn) {
      delta_node_[s] = Mlp::make({2 * lat, gh, lat}, Activation::None, rng);
      delta_edge_[s] = Mlp::make({2 * lat, gh, lat}, Activation::None, rng);
      params_.add_mlp("delta." + name + ".node_mlp", delta_node_[s]);
      params_.add_mlp("delta." + name + ".edge_mlp", delta_edge_[s]);
    } else {
      pair_delta_[s] = Mlp::make({2 * lat, gh, lat}, Activation::None, rng);
      params_.add_mlp("delta." + name + ".pair_mlp", pair_delta_[s]);
    }
  }
}

Var RdGnnModel::encode_points(Tape& tape, const std::vector<Vec3>& points) {
  check(static_cast<int>(points.size()) == kPointsPerObject,
        "encode_points needs exactly ", kPointsPerObject, " points, got ",
        points.size());
  Tensor pts = Tensor::zeros({kPointsPerObject, 3});
  for (int i = 0; i < kPointsPerObject; ++i) {
    pts.data[static_cast<size_t>(i) * 3 + 0] = points[static_cast<size_t>(i)].x;
    pts.data[static_cast<size_t>(i) * 3 + 1] = points[static_cast<size_t>(i)].y;
    pts.data[static_cast<size_t>(i) * 3 + 2] = points[static_cast<size_t>(i)].z;
  }
  Var p = tape.constant(pts);
  Var centroid = tape.mean_rows(p);                       // [1,3]
  Var centered = tape.add(p, tape.scale(centroid, -1.0));  // row broadcast
  Var tiled = tape.add(tape.constant(Tensor::zeros({kPointsPerObject, 3})),
                       centroid);
  Var input6 = tape.concat_cols({centered, tiled});
  Var feats = nn::mlp_forward(tape, point_mlp_, input6);
  Var pooled = tape.max_rows(feats);
  return nn::mlp_forward(tape, post_pool_mlp_, pooled);
}

std::vector<Var> RdGnnModel::build_input_nodes(Tape& tape,
                                               const SegmentedCloud& cloud,
                                               const GraphSpec& spec) {
  std::vector<Var> nodes;
  for (int i = 0; i < spec.n(); ++i) {
    int oid = spec.object_ids[static_cast<size_t>(i)];
    auto it = cloud.per_object.find(oid);
    check(it != cloud.per_object.end(), "cloud lacks object ", oid);
    Var feat = encode_points(tape, it->second);
    Tensor onehot = Tensor::zeros({1, cfg_.id_width});
    onehot.data[static_cast<size_t>(spec.graph_ids[static_cast<size_t>(i)])] = 1.0;
    nodes.push_back(tape.concat_cols({feat, tape.constant(onehot)}));
  }
  return nodes;
}

LatentVars RdGnnModel::gnn_encode(Tape& tape, const std::vector<Var>& nodes,
                                  const GraphSpec& spec) {
  const int n = spec.n();
  auto aggregate = [&](const std::vector<Var>& messages_by_pair) {
    // y_i = mean of incoming messages m_ji; zero vector when alone.
    std::vector<Var> y(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      std::vector<Var> incoming;
      for (int k = 0; k < spec.n_pairs(); ++k)
        if (spec.pairs[static_cast<size_t>(k)].second == i)
          incoming.push_back(messages_by_pair[static_cast<size_t>(k)]);
      if (incoming.empty())
        y[static_cast<size_t>(i)] =
            tape.constant(Tensor::zeros({1, cfg_.latent_width}));
      else
        y[static_cast<size_t>(i)] = tape.mean_rows(tape.concat_rows(incoming));
    }
    return y;
  };

  // input round: edge features are empty and omitted
  std::vector<Var> messages;
  for (const auto& [i, j] : spec.pairs)
    messages.push_back(nn::mlp_forward(
        tape, message_mlp_,
        tape.concat_cols({nodes[static_cast<size_t>(i)], nodes[static_cast<size_t>(j)]})));
  std::vector<Var> y = aggregate(messages);

  LatentVars out;
  for (int i = 0; i < n; ++i)
    out.nodes.push_back(nn::mlp_forward(
        tape, node_mlp_,
        tape.concat_cols({nodes[static_cast<size_t>(i)], y[static_cast<size_t>(i)]})));
  for (const auto& [i, j] : spec.pairs)
    out.edges.push_back(nn::mlp_forward(
        tape, edge_mlp_,
        tape.concat_cols({nodes[static_cast<size_t>(i)], nodes[static_cast<size_t>(j)],
                          y[static_cast<size_t>(i)], y[static_cast<size_t>(j)]})));

  for (int round = 1; round < cfg_.message_rounds; ++round) {
    std::vector<Var> msgs;
    for (int k = 0; k < spec.n_pairs(); ++k) {
      auto [i, j] = spec.pairs[static_cast<size_t>(k)];
      msgs.push_back(nn::mlp_forward(
          tape, extra_message_mlp_,
          tape.concat_cols({out.nodes[static_cast<size_t>(i)],
                            out.nodes[static_cast<size_t>(j)],
                            out.edges[static_cast<size_t>(k)]})));
    }
    std::vector<Var> ye = aggregate(msgs);
    LatentVars next;
    for (int i = 0; i < n; ++i)
      next.nodes.push_back(nn::mlp_forward(
          tape, extra_node_mlp_,
          tape.concat_cols({out.nodes[static_cast<size_t>(i)], ye[static_cast<size_t>(i)]})));
    for (int k = 0; k < spec.n_pairs(); ++k) {
      auto [i, j] = spec.pairs[static_cast<size_t>(k)];
      next.edges.push_back(nn::mlp_forward(
          tape, extra_edge_mlp_,
          tape.concat_cols({out.nodes[static_cast<size_t>(i)],
                            out.nodes[static_cast<size_t>(j)],
                            ye[static_cast<size_t>(i)], ye[static_cast<size_t>(j)],
                            out.edges[static_cast<size_t>(k)]})));
    }
    out = std::move(next);
  }
  return out;
}

LatentVars RdGnnModel::pairwise_encode(Tape& tape, const std::vector<Var>& nodes,
                                       const GraphSpec& spec) {
  LatentVars out;
  for (const auto& [i, j] : spec.pairs)
    out.edges.push_back(nn::mlp_forward(
        tape, pair_mlp_,
        tape.concat_cols({nodes[static_cast<size_t>(i)], nodes[static_cast<size_t>(j)]})));
  return out;
}

LatentVars RdGnnModel::graph_encode(Tape& tape,
                                    const std::vector<Var>& input_nodes,
                                    const GraphSpec& spec) {
  return cfg_.architecture == Architecture::Gnn
             ? gnn_encode(tape, input_nodes, spec)
             : pairwise_encode(tape, input_nodes, spec);
}

LatentVars RdGnnModel::encode(Tape& tape, const SegmentedCloud& cloud,
                              const GraphSpec& spec) {
  return graph_encode(tape, build_input_nodes(tape, cloud, spec), spec);
}

std::vector<Var> RdGnnModel::latent_aggregate(Tape& tape,
                                              const LatentVars& latent,
                                              const GraphSpec& spec) {
  const int n = spec.n();
  std::vector<Var> messages;
  for (int k = 0; k < spec.n_pairs(); ++k) {
    auto [i, j] = spec.pairs[static_cast<size_t>(k)];
    messages.push_back(nn::mlp_forward(
        tape, latent_message_mlp_,
        tape.concat_cols({latent.nodes[static_cast<size_t>(i)],
                          latent.nodes[static_cast<size_t>(j)],
                          latent.edges[static_cast<size_t>(k)]})));
  }
  std::vector<Var> y(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<Var> incoming;
    for (int k = 0; k < spec.n_pairs(); ++k)
      if (spec.pairs[static_cast<size_t>(k)].second == i)
        incoming.push_back(messages[static_cast<size_t>(k)]);
    if (incoming.empty())
      y[static_cast<size_t>(i)] =
          tape.constant(Tensor::zeros({1, cfg_.latent_width}));
    else
      y[static_cast<size_t>(i)] = tape.mean_rows(tape.concat_rows(incoming));
  }
  return y;
}

std::vector<Var> RdGnnModel::classify_relations(Tape& tape,
                                                const LatentVars& latent,
                                                const GraphSpec& spec) {
  std::vector<Var> out;
  if (cfg_.architecture == Architecture::PairwiseMlp) {
    for (int k = 0; k < spec.n_pairs(); ++k)
      out.push_back(nn::mlp_forward(tape, pair_relation_mlp_,
                                    latent.edges[static_cast<size_t>(k)]));
    return out;
  }
  std::vector<Var> y = latent_aggregate(tape, latent, spec);
  for (int k = 0; k < spec.n_pairs(); ++k) {
    auto [i, j] = spec.pairs[static_cast<size_t>(k)];
    out.push_back(nn::mlp_forward(
        tape, relation_mlp_,
        tape.concat_cols({latent.nodes[static_cast<size_t>(i)],
                          latent.nodes[static_cast<size_t>(j)],
                          y[static_cast<size_t>(i)], y[static_cast<size_t>(j)],
                          latent.edges[static_cast<size_t>(k)]})));
  }
  return out;
}

PoseVars RdGnnModel::regress_pose(Tape& tape, const LatentVars& latent,
                                  const GraphSpec& spec) {
  check(cfg_.architecture == Architecture::Gnn,
        "pose regression requires the gnn architecture");
  std::vector<Var> y = latent_aggregate(tape, latent, spec);
  PoseVars out;
  for (int i = 0; i < spec.n(); ++i) {
    Var raw = nn::mlp_forward(
        tape, pose_mlp_,
        tape.concat_cols({latent.nodes[static_cast<size_t>(i)], y[static_cast<size_t>(i)]}));
    out.positions.push_back(tape.slice_cols(raw, 0, 3));
    out.rotations.push_back(tape.rot6d(tape.slice_cols(raw, 3, 6)));
  }
  return out;
}

Var RdGnnModel::encode_action(Tape& tape, const SkillAction& action,
                              const GraphSpec& spec) {
  validate_action(action);
  int node = spec.node_of(action.target);
  int gid = spec.graph_ids[static_cast<size_t>(node)];
  Tensor in = Tensor::zeros({1, cfg_.action_input_width()});
  in.data[static_cast<size_t>(action.skill)] = 1.0;
  in.data[static_cast<size_t>(kNumSkills + gid)] = 1.0;
  double bound = cfg_.bounds.axis_bound(action.skill);
  in.data[static_cast<size_t>(kNumSkills + cfg_.id_width + 0)] = action.dx / bound;
  in.data[static_cast<size_t>(kNumSkills + cfg_.id_width + 1)] = action.dy / bound;
  return nn::mlp_forward(tape, action_mlp_, tape.constant(in));
}

LatentVars RdGnnModel::dynamics(Tape& tape, const LatentVars& latent,
                                const SkillAction& action,
                                const GraphSpec& spec) {
  Var a = encode_action(tape, action, spec);
  int s = static_cast<int>(action.skill);
  check(s >= 0 && s < kNumSkills, "unknown skill index ", s);
  LatentVars out;
  if (cfg_.architecture == Architecture::Gnn) {
    for (const Var& v : latent.nodes)
      out.nodes.push_back(tape.add(
          v, nn::mlp_forward(tape, delta_node_[s], tape.concat_cols({v, a}))));
    for (const Var& e : latent.edges)
      out.edges.push_back(tape.add(
          e, nn::mlp_forward(tape, delta_edge_[s], tape.concat_cols({e, a}))));
  } else {
    for (const Var& e : latent.edges)
      out.edges.push_back(tape.add(
          e, nn::mlp_forward(tape, pair_delta_[s], tape.concat_cols({e, a}))));
  }
  return out;
}

LatentState RdGnnModel::snapshot(const Tape& tape, const LatentVars& latent,
                                 const GraphSpec& spec) const {
  LatentState s;
  s.spec = spec;
  for (const Var& v : latent.nodes) s.nodes.push_back(tape.value(v));
  for (const Var& e : latent.edges) s.edges.push_back(tape.value(e));
  return s;
}

LatentVars RdGnnModel::restore(Tape& tape, const LatentState& state) const {
  LatentVars out;
  for (const Tensor& t : state.nodes) out.nodes.push_back(tape.constant(t));
  for (const Tensor& t : state.edges) out.edges.push_back(tape.constant(t));
  return out;
}

void RdGnnModel::save(const std::string& path,
                      const nlohmann::json& extra) const {
  nlohmann::json meta = extra.is_null() ? nlohmann::json::object() : extra;
  meta["model"] = cfg_.to_json();
  nn::save_checkpoint(path, params_, meta.dump());
}

std::unique_ptr<RdGnnModel> RdGnnModel::load(const std::string& path,
                                             nlohmann::json* metadata) {
  nlohmann::json meta =
      nlohmann::json::parse(nn::read_checkpoint_metadata(path));
  ModelConfig cfg = ModelConfig::from_json(meta.at("model"));
  auto model = std::make_unique<RdGnnModel>(cfg, /*init_seed=*/0);
  nn::load_checkpoint(path, model->params());
  if (metadata) *metadata = meta;
  return model;
}

}  // namespace reldyn
