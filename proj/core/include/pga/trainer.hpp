#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pga/data.hpp"
#include "pga/losses.hpp"
#include "pga/net.hpp"

namespace pga::trainer {

struct DatasetSpec {
  bool from_file = false;
  std::string path;  // PGAD file when from_file
  data::SyntheticSpec synthetic;
};

struct TrainConfig {
  Objective objective = Objective::lpga;
  size_t latent_dim = 2;
  std::vector<size_t> hidden = {256, 256};
  Activation activation = Activation::tanh_fn;
  LossWeights weights;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  size_t batch_size = 128;
  size_t steps = 5000;
  uint64_t seed = 1;
  DatasetSpec dataset;
  size_t eval_every = 250;
  size_t metrics_every = 1;
  size_t mmd_samples = 500;
  size_t nll_samples = 256;
  std::string out_dir = "runs/out";
  bool var_floor = false;  // forced on for the lvpga objective

  // Flat "key = value" text, '#' comments, unknown keys are hard errors.
  static TrainConfig parse_file(const std::string& path);
  static TrainConfig parse_text(const std::string& text);
  void apply_override(const std::string& key, const std::string& value);
  std::string emit() const;  // canonical key order; emit(parse(emit())) is stable
  void validate() const;

  bool needs_var_head() const { return objective != Objective::lpga; }
  bool floor_active() const { return var_floor || objective == Objective::lvpga; }
};

struct OptimizerState {
  std::vector<Matrix> velocity;
};

// Classical momentum: v <- momentum * v + g; p <- p - lr * v.
void sgd_momentum_step(const std::vector<ParamRef>& params, const std::vector<Matrix>& grads,
                       OptimizerState& state, double lr, double momentum);

struct Checkpoint {
  PgaModel model;
  std::optional<OptimizerState> opt;
  uint64_t step = 0;
};

// Little-endian binary: "PGA1", flags, floor epsilon, activation, encoder and
// decoder widths, raw f64 parameters in layer order, then an optional "OPT1"
// optimizer trailer (step + velocities).
void save_checkpoint(const std::string& path, const PgaModel& model,
                     const OptimizerState* opt = nullptr, uint64_t step = 0);
Checkpoint load_checkpoint(const std::string& path);

PgaModel init_model(const TrainConfig& config);

struct TrainResult {
  PgaModel model;
  OptimizerState opt;
  uint64_t steps_done = 0;
  std::string metrics_path;
  std::string final_checkpoint;
};

// Runs the full loop: deterministic batches, per-step loss bundles, periodic
// evaluation (exact NLL when H <= 32, MMD always) and checkpoints at eval
// points. A non-finite total aborts with the last-good checkpoint on disk.
TrainResult train(const TrainConfig& config, const std::string& resume_checkpoint = "");

// The datasets the given config trains and evaluates on.
data::Dataset load_train_split(const TrainConfig& config);
data::Dataset load_heldout_split(const TrainConfig& config);

}  // namespace pga::trainer
