#include "reldyn/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace reldyn::nn {

Mlp Mlp::make(const std::vector<int>& widths, Activation output_act,
              Rng& rng) {
  check(widths.size() >= 2, "mlp needs at least in/out widths");
  Mlp m;
  m.output_activation = output_act;
  for (size_t k = 0; k + 1 < widths.size(); ++k) {
    int in = widths[k], out = widths[k + 1];
    check(in > 0 && out > 0, "mlp widths must be positive");
    Layer layer;
    layer.weight = Tensor::zeros({out, in});
    double bound = std::sqrt(6.0 / (in + out));
    for (double& w : layer.weight.data) w = rng.uniform(-bound, bound);
    layer.bias = Tensor::zeros({1, out});
    layer.weight.requires_grad = true;
    layer.bias.requires_grad = true;
    m.layers.push_back(std::move(layer));
  }
  return m;
}

Var mlp_forward(Tape& tape, Mlp& params, Var input) {
  const Tensor& x = tape.value(input);
  check(x.shape.size() == 2, "mlp input must be rank-2, got ",
        ad::shape_str(x.shape));
  check(x.shape[1] == params.in_width(), "mlp input width mismatch: input ",
        ad::shape_str(x.shape), " vs first layer ",
        ad::shape_str(params.layers.front().weight.shape));
  Var h = input;
  for (size_t k = 0; k < params.layers.size(); ++k) {
    Mlp::Layer& layer = params.layers[k];
    Var w = tape.watch(layer.weight);
    Var b = tape.watch(layer.bias);
    h = tape.add(tape.matmul(h, w, /*transpose_b=*/true), b);
    bool last = (k + 1 == params.layers.size());
    Activation act = last ? params.output_activation : params.hidden_activation;
    if (act == Activation::Relu) h = tape.relu(h);
    if (act == Activation::Sigmoid) h = tape.sigmoid(h);
  }
  return h;
}

void ParamStore::add(const std::string& path, Tensor& t) {
  check(find(path) == nullptr, "duplicate parameter path ", path);
  t.requires_grad = true;
  entries_.push_back({path, &t});
}

void ParamStore::add_mlp(const std::string& prefix, Mlp& mlp) {
  for (size_t k = 0; k < mlp.layers.size(); ++k) {
    add(prefix + ".layer" + std::to_string(k) + ".weight",
        mlp.layers[k].weight);
    add(prefix + ".layer" + std::to_string(k) + ".bias", mlp.layers[k].bias);
  }
}

Tensor* ParamStore::find(const std::string& path) const {
  for (const Entry& e : entries_)
    if (e.path == path) return e.tensor;
  return nullptr;
}

long ParamStore::total_parameters() const {
  long n = 0;
  for (const Entry& e : entries_) n += e.tensor->size();
  return n;
}

void adam_update(AdamState& state, size_t index, Tensor& param,
                 const Tensor& grad) {
  check(param.shape == grad.shape, "adam shape mismatch: param ",
        ad::shape_str(param.shape), " vs grad ", ad::shape_str(grad.shape));
  if (state.first_moment.size() <= index) {
    state.first_moment.resize(index + 1);
    state.second_moment.resize(index + 1);
  }
  Tensor& m = state.first_moment[index];
  Tensor& v = state.second_moment[index];
  if (m.size() == 0) m = Tensor::zeros(param.shape);
  if (v.size() == 0) v = Tensor::zeros(param.shape);
  check(m.shape == param.shape, "adam state shape mismatch at index ", index);

  double b1t = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  double b2t = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (long i = 0; i < param.size(); ++i) {
    size_t s = static_cast<size_t>(i);
    m.data[s] = state.beta1 * m.data[s] + (1.0 - state.beta1) * grad.data[s];
    v.data[s] =
        state.beta2 * v.data[s] + (1.0 - state.beta2) * grad.data[s] * grad.data[s];
    double mhat = m.data[s] / b1t;
    double vhat = v.data[s] / b2t;
    param.data[s] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
  }
}

void adam_step(AdamState& state, const ParamStore& params, const Tape& tape) {
  state.step_count += 1;
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.tensor(i);
    if (p.tape_serial != tape.serial() || p.tape_id < 0) continue;
    adam_update(state, i, p, tape.grad(p));
  }
}

namespace {
void write_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}
uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

nlohmann::json open_header(std::ifstream& is, const std::string& path,
                           std::string* metadata) {
  check(is.good(), "cannot open checkpoint ", path);
  std::string magic(std::strlen(kCheckpointMagic), '\0');
  is.read(magic.data(), static_cast<long>(magic.size()));
  check(is.good() && magic == kCheckpointMagic,
        "bad checkpoint magic in ", path, " (expected ", kCheckpointMagic, ")");
  uint64_t hlen = read_u64(is);
  std::string header(hlen, '\0');
  is.read(header.data(), static_cast<long>(hlen));
  check(is.good(), "truncated checkpoint header in ", path);
  nlohmann::json j = nlohmann::json::parse(header);
  if (metadata) *metadata = j.at("metadata").dump();
  return j;
}
}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& metadata_json) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  check(os.good(), "cannot write checkpoint ", path);
  nlohmann::json header;
  header["metadata"] = metadata_json.empty()
                           ? nlohmann::json::object()
                           : nlohmann::json::parse(metadata_json);
  nlohmann::json table = nlohmann::json::array();
  for (size_t i = 0; i < params.size(); ++i) {
    nlohmann::json e;
    e["name"] = params.path(i);
    e["shape"] = params.tensor(i).shape;
    table.push_back(e);
  }
  header["params"] = table;
  std::string hs = header.dump();
  os.write(kCheckpointMagic, static_cast<long>(std::strlen(kCheckpointMagic)));
  write_u64(os, hs.size());
  os.write(hs.data(), static_cast<long>(hs.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const Tensor& t = params.tensor(i);
    // assumes little-endian host, as documented
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<long>(t.data.size() * sizeof(double)));
  }
  check(os.good(), "short write to checkpoint ", path);
}

std::string load_checkpoint(const std::string& path, const ParamStore& params) {
  std::ifstream is(path, std::ios::binary);
  std::string metadata;
  nlohmann::json header = open_header(is, path, &metadata);
  const nlohmann::json& table = header.at("params");
  check(table.size() == params.size(), "checkpoint ", path, " has ",
        table.size(), " parameters, model expects ", params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    std::string name = table[i].at("name").get<std::string>();
    check(name == params.path(i), "checkpoint parameter order mismatch: ",
          name, " vs ", params.path(i));
    std::vector<int> shape = table[i].at("shape").get<std::vector<int>>();
    Tensor& t = params.tensor(i);
    check(shape == t.shape, "checkpoint shape mismatch for ", name, ": ",
          ad::shape_str(shape), " vs ", ad::shape_str(t.shape));
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<long>(t.data.size() * sizeof(double)));
    check(is.good(), "truncated checkpoint payload for ", name);
  }
  return metadata;
}

std::string read_checkpoint_metadata(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::string metadata;
  open_header(is, path, &metadata);
  return metadata;
}

}  // namespace reldyn::nn
