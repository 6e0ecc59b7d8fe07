#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pga/rng.hpp"
#include "pga/tensor.hpp"

namespace pga {

enum class Activation { tanh_fn, relu_fn };
enum class ParamGroup { phi, theta };

// Fully connected net: widths [in, hidden..., out], activation on hidden
// layers, identity on the output layer.
struct MlpNet {
  std::vector<size_t> widths;
  Activation act = Activation::tanh_fn;
  ParamGroup group = ParamGroup::phi;
  std::vector<Matrix> weights;  // layer l: widths[l] x widths[l+1]
  std::vector<Matrix> biases;   // layer l: 1 x widths[l+1]

  // Fan-in scaled uniform init U(-sqrt(6/fan_in), +sqrt(6/fan_in)), zero biases.
  static MlpNet init(std::vector<size_t> widths, Activation act, ParamGroup group,
                     rng::Stream& stream);
  static MlpNet init(std::vector<size_t> widths, Activation act, ParamGroup group, uint64_t seed);
  static MlpNet zeros(std::vector<size_t> widths, Activation act, ParamGroup group);

  size_t n_layers() const { return weights.size(); }
  size_t in_dim() const { return widths.front(); }
  size_t out_dim() const { return widths.back(); }
  size_t param_count() const;

  Matrix forward_values(const Matrix& x) const;
};

// Encoder f (group phi), decoder g (group theta), and optionally a second
// output projection from the encoder's last hidden layer producing
// log-variances for the stochastic encoder. The mean path of the stochastic
// encoder is literally f.
struct PgaModel {
  MlpNet enc;
  MlpNet dec;
  bool has_var_head = false;
  Matrix head_W, head_b;  // phi group

  // When the variance floor is active, log_var is clamped to
  // [2 log(floor_epsilon), 4] with a smooth softplus lower clamp.
  bool var_floor = false;
  double floor_epsilon = 1e-4;

  static PgaModel init(size_t data_dim, size_t latent_dim, const std::vector<size_t>& hidden,
                       Activation act, bool var_head, uint64_t seed);

  size_t data_dim() const { return enc.in_dim(); }
  size_t latent_dim() const { return enc.out_dim(); }

  Matrix encode_values(const Matrix& x) const;
  Matrix decode_values(const Matrix& z) const;
  Matrix composite_values(const Matrix& z) const;  // h = f(g(z))
};

// Stable enumeration of all parameters; checkpoint layout and the optimizer
// both follow this order.
struct ParamRef {
  Matrix* m;
  ParamGroup group;
  std::string name;
};
std::vector<ParamRef> params_of(PgaModel& model);

struct StochasticCode {
  Tensor mean;     // mu_phi(x) = f(x)
  Tensor log_var;  // log sigma_phi^2(x), clamped when the floor is active
  Tensor sample;   // mean + exp(log_var / 2) * noise
};

// Network parameters bound to a tape as leaves. Leaves follow params_of order.
struct BoundMlp {
  const MlpNet* net = nullptr;
  std::vector<Tensor> W, b;

  Tensor forward(const Tensor& x, bool freeze_params = false) const;
  // Activation output feeding the final layer (x itself when depth is 1).
  Tensor forward_hidden(const Tensor& x, bool freeze_params = false) const;
};

struct BoundModel {
  const PgaModel* model = nullptr;
  BoundMlp enc, dec;
  Tensor head_W, head_b;
  std::vector<Tensor> leaves;  // parallel to params_of(model)

  Tensor encode(const Tensor& x, bool freeze_phi = false) const;
  Tensor decode(const Tensor& z, bool freeze_theta = false) const;
  Tensor composite(const Tensor& z, bool freeze_phi = false, bool freeze_theta = false) const;
  // Clamped log-variance head; requires has_var_head.
  Tensor log_var(const Tensor& x, bool freeze_phi = false) const;
  StochasticCode encode_stochastic(const Tensor& x, uint64_t seed, uint64_t step = 0) const;
};

BoundModel bind(Tape& tape, const PgaModel& model);

}  // namespace pga
