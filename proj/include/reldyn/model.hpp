#pragma once

#include <memory>
#include <string>
#include <vector>

#include "reldyn/nn.hpp"
#include "reldyn/sim.hpp"

namespace reldyn {

using ad::Tape;
using ad::Tensor;
using ad::Var;

enum class Architecture { Gnn, PairwiseMlp };
enum class RelationReadout { Learned, AnalyticPose };

const char* architecture_name(Architecture a);
Architecture architecture_from_name(const std::string& s);

struct ModelConfig {
  int point_feature_width = 128;
  int id_width = 16;
  int latent_width = 128;
  int graph_hidden = 64;
  int relation_hidden = 64;
  int pose_hidden = 64;
  int action_hidden = 128;
  int n_relations = kNumRelations;
  int message_rounds = 1;
  Architecture architecture = Architecture::Gnn;
  RelationReadout readout = RelationReadout::Learned;
  SkillBounds bounds;

  int node_input_width() const { return point_feature_width + id_width; }
  int action_input_width() const { return kNumSkills + id_width + 2; }

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Node ordering and id assignment for one forward pass. Nodes follow the
// cloud's ascending object-id order; pairs enumerate ordered (i, j), i != j,
// lexicographically by node index.
struct GraphSpec {
  std::vector<int> object_ids;  // node index -> scene object id
  std::vector<int> graph_ids;   // node index -> assigned one-hot id in [0,16)
  std::vector<std::pair<int, int>> pairs;  // node index pairs

  int n() const { return static_cast<int>(object_ids.size()); }
  int n_pairs() const { return static_cast<int>(pairs.size()); }
  int node_of(int object_id) const;
  int pair_index(int node_i, int node_j) const;

  // Training draws ids uniformly without replacement from [0,16);
  // evaluation assigns 0..N-1.
  static GraphSpec for_cloud(const SegmentedCloud& cloud);          // eval ids
  static GraphSpec for_cloud(const SegmentedCloud& cloud, Rng& rng);  // random ids
  static GraphSpec with_ids(const SegmentedCloud& cloud,
                            const std::vector<int>& graph_ids);
};

// Tape-level latent state: per-node and per-ordered-pair feature Vars.
// The pairwise-MLP architecture keeps only pair features.
struct LatentVars {
  std::vector<Var> nodes;
  std::vector<Var> edges;  // aligned with GraphSpec::pairs
};

// Value snapshot of a latent graph, used to carry planner state across
// tapes. Layout mirrors LatentVars.
struct LatentState {
  GraphSpec spec;
  std::vector<Tensor> nodes;
  std::vector<Tensor> edges;
};

struct PoseVars {
  std::vector<Var> positions;  // [1x3] per node
  std::vector<Var> rotations;  // [1x9] per node, row-major
};

// The relational-dynamics network: a shared point-cloud + latent-graph
// encoder, relation and pose heads over the latent graph, and per-skill
// residual dynamics conditioned on an encoded action.
class RdGnnModel {
 public:
  RdGnnModel(const ModelConfig& cfg, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // Set encoder over one object's points: center on the centroid, append
  // the centroid, per-point MLP, coordinate-wise max, post MLP.
  Var encode_points(Tape& tape, const std::vector<Vec3>& points);

  // Node features phi_pc(O_i) (+) onehot16(graph id).
  std::vector<Var> build_input_nodes(Tape& tape, const SegmentedCloud& cloud,
                                     const GraphSpec& spec);

  // One round of message passing over the input graph (plus optional extra
  // latent rounds), or the pairwise baseline's per-pair encoder.
  LatentVars graph_encode(Tape& tape, const std::vector<Var>& input_nodes,
                          const GraphSpec& spec);

  // Full encoder Phi.
  LatentVars encode(Tape& tape, const SegmentedCloud& cloud,
                    const GraphSpec& spec);

  // psi_R over the latent graph; one [1 x 7] sigmoid Var per ordered pair.
  std::vector<Var> classify_relations(Tape& tape, const LatentVars& latent,
                                      const GraphSpec& spec);

  // psi_P: per-node centroid and 6d-reconstructed rotation.
  PoseVars regress_pose(Tape& tape, const LatentVars& latent,
                        const GraphSpec& spec);

  // phi_A(skill onehot (+) target-id onehot (+) params normalized to [-1,1]).
  Var encode_action(Tape& tape, const SkillAction& action,
                    const GraphSpec& spec);

  // Residual latent dynamics with the skill's own delta networks.
  LatentVars dynamics(Tape& tape, const LatentVars& latent,
                      const SkillAction& action, const GraphSpec& spec);

  LatentState snapshot(const Tape& tape, const LatentVars& latent,
                       const GraphSpec& spec) const;
  LatentVars restore(Tape& tape, const LatentState& state) const;

  // Checkpoint I/O; metadata carries the config and extra fields.
  void save(const std::string& path, const nlohmann::json& extra = {}) const;
  static std::unique_ptr<RdGnnModel> load(const std::string& path,
                                          nlohmann::json* metadata = nullptr);

 private:
  LatentVars gnn_encode(Tape& tape, const std::vector<Var>& nodes,
                        const GraphSpec& spec);
  LatentVars pairwise_encode(Tape& tape, const std::vector<Var>& nodes,
                             const GraphSpec& spec);
  // Mean of incoming latent-layer messages per node (zero vector for N=1).
  std::vector<Var> latent_aggregate(Tape& tape, const LatentVars& latent,
                                    const GraphSpec& spec);

  ModelConfig cfg_;
  nn::ParamStore params_;

  nn::Mlp point_mlp_, post_pool_mlp_;
  nn::Mlp message_mlp_, node_mlp_, edge_mlp_;            // phi_g (input layer)
  nn::Mlp latent_message_mlp_;                           // f_m' over x^L
  nn::Mlp extra_message_mlp_, extra_node_mlp_, extra_edge_mlp_;  // rounds > 1
  nn::Mlp relation_mlp_;                                 // psi_R
  nn::Mlp pose_mlp_;                                     // psi_P
  nn::Mlp action_mlp_;                                   // phi_A
  nn::Mlp delta_node_[kNumSkills], delta_edge_[kNumSkills];
  nn::Mlp pair_mlp_, pair_relation_mlp_;                 // pairwise baseline
  nn::Mlp pair_delta_[kNumSkills];
};

}  // namespace reldyn
