#pragma once

#include <map>
#include <string>
#include <vector>

#include "reldyn/rng.hpp"
#include "reldyn/tensor.hpp"

namespace reldyn::nn {

using ad::Tape;
using ad::Tensor;
using ad::Var;

enum class Activation { None, Relu, Sigmoid };

// Stack of affine layers: y = act(x W^T + b), weights stored [out x in].
struct Mlp {
  struct Layer {
    Tensor weight;  // [out x in]
    Tensor bias;    // [1 x out]
  };
  std::vector<Layer> layers;
  Activation hidden_activation = Activation::Relu;
  Activation output_activation = Activation::None;

  // widths = {in, h1, ..., out}; Glorot-uniform weights, zero biases.
  static Mlp make(const std::vector<int>& widths, Activation output_act,
                  Rng& rng);

  int in_width() const { return layers.front().weight.shape[1]; }
  int out_width() const { return layers.back().weight.shape[0]; }
};

// Forward pass for a [B x in] batch; parameters are watched on the tape so
// gradients land on the Mlp's own tensors after backward().
Var mlp_forward(Tape& tape, Mlp& params, Var input);

// Named registry over every trainable tensor of a model. Paths look like
// "phi_g.node_mlp.layer0.weight"; iteration order is insertion order and is
// the canonical order for optimizer state and checkpoints.
class ParamStore {
 public:
  void add(const std::string& path, Tensor& t);
  void add_mlp(const std::string& prefix, Mlp& mlp);

  size_t size() const { return entries_.size(); }
  const std::string& path(size_t i) const { return entries_[i].path; }
  Tensor& tensor(size_t i) const { return *entries_[i].tensor; }
  Tensor* find(const std::string& path) const;

  long total_parameters() const;

 private:
  struct Entry {
    std::string path;
    Tensor* tensor;
  };
  std::vector<Entry> entries_;
};

// Adam with bias correction; moments allocated on first use per parameter.
struct AdamState {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step_count = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

// One update over all parameters in the store; grads fetched from the tape.
// Parameters without a gradient on this tape are skipped (their moments
// still decay on steps where they do appear, matching per-step semantics).
void adam_step(AdamState& state, const ParamStore& params, const Tape& tape);

// Low-level single-tensor update, exposed for tests.
void adam_update(AdamState& state, size_t index, Tensor& param,
                 const Tensor& grad);

// Checkpoint archive: magic "RDGNN-CKPT-1", a JSON header (metadata +
// entry table), then raw little-endian float64 payloads in table order.
inline constexpr const char* kCheckpointMagic = "RDGNN-CKPT-1";

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& metadata_json);
// Loads into an existing store (shapes must match); returns the metadata.
std::string load_checkpoint(const std::string& path, const ParamStore& params);
// Reads only the metadata header.
std::string read_checkpoint_metadata(const std::string& path);

}  // namespace reldyn::nn
