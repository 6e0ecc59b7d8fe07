#include "pga/net.hpp"

#include <cmath>

#include "pga/errors.hpp"

namespace pga {

MlpNet MlpNet::init(std::vector<size_t> widths, Activation act, ParamGroup group,
                    rng::Stream& stream) {
  if (widths.size() < 2) throw ConfigError("MlpNet: need at least input and output widths");
  for (size_t w : widths)
    if (w == 0) throw ConfigError("MlpNet: zero layer width");
  MlpNet net;
  net.widths = std::move(widths);
  net.act = act;
  net.group = group;
  for (size_t l = 0; l + 1 < net.widths.size(); ++l) {
    const size_t fan_in = net.widths[l], fan_out = net.widths[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Matrix w(fan_in, fan_out);
    for (auto& x : w.v) x = stream.uniform(-bound, bound);
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(1, fan_out);
  }
  return net;
}

MlpNet MlpNet::init(std::vector<size_t> widths, Activation act, ParamGroup group, uint64_t seed) {
  rng::Stream stream(seed, "init", 0);
  return init(std::move(widths), act, group, stream);
}

MlpNet MlpNet::zeros(std::vector<size_t> widths, Activation act, ParamGroup group) {
  rng::Stream dummy(0);
  MlpNet net = init(std::move(widths), act, group, dummy);
  for (auto& w : net.weights) std::fill(w.v.begin(), w.v.end(), 0.0);
  return net;
}

size_t MlpNet::param_count() const {
  size_t n = 0;
  for (size_t l = 0; l + 1 < widths.size(); ++l) n += widths[l] * widths[l + 1] + widths[l + 1];
  return n;
}

static void apply_activation(Matrix& m, Activation act) {
  if (act == Activation::tanh_fn)
    for (auto& x : m.v) x = std::tanh(x);
  else
    for (auto& x : m.v)
      if (x < 0.0) x = 0.0;
}

Matrix MlpNet::forward_values(const Matrix& x) const {
  if (x.cols != in_dim())
    throw DimensionError("forward: input width " + std::to_string(x.cols) + " != " +
                         std::to_string(in_dim()));
  Matrix h = x;
  for (size_t l = 0; l < n_layers(); ++l) {
    Matrix y = matmul_values(h, weights[l]);
    for (size_t i = 0; i < y.rows; ++i)
      for (size_t j = 0; j < y.cols; ++j) y.at(i, j) += biases[l].at(0, j);
    if (l + 1 < n_layers()) apply_activation(y, act);
    h = std::move(y);
  }
  return h;
}

PgaModel PgaModel::init(size_t data_dim, size_t latent_dim, const std::vector<size_t>& hidden,
                        Activation act, bool var_head, uint64_t seed) {
  rng::Stream stream(seed, "init", 0);
  std::vector<size_t> enc_w{data_dim};
  enc_w.insert(enc_w.end(), hidden.begin(), hidden.end());
  enc_w.push_back(latent_dim);
  std::vector<size_t> dec_w{latent_dim};
  dec_w.insert(dec_w.end(), hidden.begin(), hidden.end());
  dec_w.push_back(data_dim);

  PgaModel m;
  m.enc = MlpNet::init(enc_w, act, ParamGroup::phi, stream);
  if (var_head) {
    m.has_var_head = true;
    const size_t fan_in = enc_w[enc_w.size() - 2];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    m.head_W = Matrix(fan_in, latent_dim);
    for (auto& x : m.head_W.v) x = stream.uniform(-bound, bound);
    m.head_b = Matrix(1, latent_dim);
  }
  m.dec = MlpNet::init(dec_w, act, ParamGroup::theta, stream);
  return m;
}

Matrix PgaModel::encode_values(const Matrix& x) const { return enc.forward_values(x); }
Matrix PgaModel::decode_values(const Matrix& z) const { return dec.forward_values(z); }
Matrix PgaModel::composite_values(const Matrix& z) const {
  return enc.forward_values(dec.forward_values(z));
}

std::vector<ParamRef> params_of(PgaModel& model) {
  std::vector<ParamRef> out;
  auto add_net = [&out](MlpNet& net, const std::string& prefix) {
    for (size_t l = 0; l < net.n_layers(); ++l) {
      out.push_back({&net.weights[l], net.group, prefix + ".W" + std::to_string(l)});
      out.push_back({&net.biases[l], net.group, prefix + ".b" + std::to_string(l)});
    }
  };
  add_net(model.enc, "enc");
  if (model.has_var_head) {
    out.push_back({&model.head_W, ParamGroup::phi, "head.W"});
    out.push_back({&model.head_b, ParamGroup::phi, "head.b"});
  }
  add_net(model.dec, "dec");
  return out;
}

// ---- bound forms ------------------------------------------------------------

static Tensor maybe_freeze(const Tensor& t, bool freeze) {
  return freeze ? stop_gradient(t) : t;
}

static Tensor activate(const Tensor& t, Activation act) {
  return act == Activation::tanh_fn ? tanh(t) : relu(t);
}

Tensor BoundMlp::forward(const Tensor& x, bool freeze_params) const {
  if (x.cols() != net->in_dim())
    throw DimensionError("forward: input width " + std::to_string(x.cols()) + " != " +
                         std::to_string(net->in_dim()));
  Tensor h = x;
  for (size_t l = 0; l < W.size(); ++l) {
    Tensor y = add(matmul(h, maybe_freeze(W[l], freeze_params)),
                   maybe_freeze(b[l], freeze_params));
    h = (l + 1 < W.size()) ? activate(y, net->act) : y;
  }
  return h;
}

Tensor BoundMlp::forward_hidden(const Tensor& x, bool freeze_params) const {
  Tensor h = x;
  for (size_t l = 0; l + 1 < W.size(); ++l) {
    Tensor y = add(matmul(h, maybe_freeze(W[l], freeze_params)),
                   maybe_freeze(b[l], freeze_params));
    h = activate(y, net->act);
  }
  return h;
}

Tensor BoundModel::encode(const Tensor& x, bool freeze_phi) const {
  return enc.forward(x, freeze_phi);
}

Tensor BoundModel::decode(const Tensor& z, bool freeze_theta) const {
  return dec.forward(z, freeze_theta);
}

Tensor BoundModel::composite(const Tensor& z, bool freeze_phi, bool freeze_theta) const {
  return enc.forward(dec.forward(z, freeze_theta), freeze_phi);
}

Tensor BoundModel::log_var(const Tensor& x, bool freeze_phi) const {
  if (!model->has_var_head) throw ConfigError("log_var: model has no variational head");
  Tensor hidden = enc.forward_hidden(x, freeze_phi);
  Tensor raw = add(matmul(hidden, maybe_freeze(head_W, freeze_phi)),
                   maybe_freeze(head_b, freeze_phi));
  if (!model->var_floor) return raw;
  const double lo = 2.0 * std::log(model->floor_epsilon);
  // lo + softplus(min(raw, 4) - lo): smooth floor at lo, capped at ~4.
  return shift(softplus(shift(min_const(raw, 4.0), -lo)), lo);
}

StochasticCode BoundModel::encode_stochastic(const Tensor& x, uint64_t seed, uint64_t step) const {
  if (!model->has_var_head) throw ConfigError("encode_stochastic: model has no variational head");
  StochasticCode code;
  code.mean = encode(x);
  code.log_var = log_var(x);
  rng::Stream noise_stream(seed, "reparam", step);
  Matrix noise(x.rows(), model->latent_dim());
  for (auto& v : noise.v) v = noise_stream.normal();
  Tensor sigma = exp(scale(code.log_var, 0.5));
  code.sample = add(code.mean, mul(sigma, Tensor(std::move(noise))));
  return code;
}

BoundModel bind(Tape& tape, const PgaModel& model) {
  BoundModel bm;
  bm.model = &model;
  auto bind_net = [&tape, &bm](const MlpNet& net, BoundMlp& slot) {
    slot.net = &net;
    for (size_t l = 0; l < net.n_layers(); ++l) {
      slot.W.push_back(tape.leaf(net.weights[l]));
      slot.b.push_back(tape.leaf(net.biases[l]));
      bm.leaves.push_back(slot.W.back());
      bm.leaves.push_back(slot.b.back());
    }
  };
  bind_net(model.enc, bm.enc);
  if (model.has_var_head) {
    bm.head_W = tape.leaf(model.head_W);
    bm.head_b = tape.leaf(model.head_b);
    bm.leaves.push_back(bm.head_W);
    bm.leaves.push_back(bm.head_b);
  }
  bind_net(model.dec, bm.dec);
  return bm;
}

}  // namespace pga
