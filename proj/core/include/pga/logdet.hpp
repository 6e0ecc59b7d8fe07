#pragma once

#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "pga/losses.hpp"
#include "pga/net.hpp"
#include "pga/tensor.hpp"

namespace pga::logdet {

// A differentiable map R^H -> R^H presented both as a batched value
// evaluator and as a graph builder for exact Jacobians.
struct LatentMap {
  virtual ~LatentMap() = default;
  virtual size_t dim() const = 0;
  virtual Matrix eval(const Matrix& z) const = 0;  // rows are points
  virtual Tensor apply(Tape& tape, const Tensor& z) const = 0;
};

class ScaledIdentityMap final : public LatentMap {
 public:
  ScaledIdentityMap(size_t dim, double c) : dim_(dim), c_(c) {}
  size_t dim() const override { return dim_; }
  Matrix eval(const Matrix& z) const override;
  Tensor apply(Tape& tape, const Tensor& z) const override;

 private:
  size_t dim_;
  double c_;
};

// y = A z (rows of the batch are points; A is dim x dim).
class LinearMap final : public LatentMap {
 public:
  explicit LinearMap(Matrix a);
  size_t dim() const override { return a_.rows; }
  Matrix eval(const Matrix& z) const override;
  Tensor apply(Tape& tape, const Tensor& z) const override;
  const Matrix& matrix() const { return a_; }

 private:
  Matrix a_;
  Matrix a_t_;
};

// A standalone MLP as the map (its parameters enter as constants).
class MlpMap final : public LatentMap {
 public:
  explicit MlpMap(const MlpNet& net);
  size_t dim() const override { return net_->in_dim(); }
  Matrix eval(const Matrix& z) const override { return net_->forward_values(z); }
  Tensor apply(Tape& tape, const Tensor& z) const override;

 private:
  const MlpNet* net_;
};

// h = f(g(z)) of an autoencoder model.
class CompositeMap final : public LatentMap {
 public:
  explicit CompositeMap(const PgaModel& model) : model_(&model) {}
  size_t dim() const override { return model_->latent_dim(); }
  Matrix eval(const Matrix& z) const override { return model_->composite_values(z); }
  Tensor apply(Tape& tape, const Tensor& z) const override;

 private:
  const PgaModel* model_;
};

inline constexpr double kSingular = -std::numeric_limits<double>::infinity();
inline constexpr double kPivotTol = 1e-12;

// Jacobian of h at a single point (1 x H row); one backward pass per output
// coordinate. Guarded to H <= 32.
Matrix exact_jacobian(const LatentMap& h, const Matrix& z);

// Per-sample Jacobians for a batch (N x H), H backward passes total.
std::vector<Matrix> batched_jacobians(const LatentMap& h, const Matrix& z_batch);

// log |det J| via LU with partial pivoting; kSingular when a pivot falls
// below kPivotTol in magnitude.
double exact_logabsdet(Matrix j);

struct JacobianReport {
  Matrix z;
  Matrix jacobian;
  double exact_logabsdet = 0;
  double estimator_mean = 0;
  double estimator_std = 0;
  size_t probes_used = 0;
  double epsilon = 0;

  double standard_error() const {
    return probes_used ? estimator_std / std::sqrt(static_cast<double>(probes_used)) : 0.0;
  }
};

// Probe estimate of log|det J(z)| next to the exact value. Probe i draws
// from the stream (seed, "probe", i).
JacobianReport estimator_stats(const LatentMap& h, const Matrix& z, double epsilon, Probe kind,
                               size_t n_probes, uint64_t seed);

struct ExactNll {
  double nll = 0;        // mean over included samples
  size_t excluded = 0;   // samples whose Jacobian was singular
  size_t total = 0;
};

// Mean over the batch of 1/2 ||f(x)||^2 + (H/2) log 2 pi + log|det J(f(x))|.
// Evaluation-only; never part of a training gradient.
ExactNll exact_nll(const PgaModel& model, const Matrix& x_batch);

enum class Verdict { pass, fail, singular };

struct CertEntry {
  double epsilon = 0;
  size_t probes = 0;
  double exact = 0;
  double est_mean = 0;
  double est_se = 0;
  double gap = 0;  // est_mean - exact
};

struct CertRecord {
  size_t dim = 0;
  std::string label;
  std::vector<CertEntry> entries;  // ordered as given
  Verdict verdict = Verdict::fail;
};

// PASS iff gap >= -3 se at the smallest epsilon and the gap does not grow by
// more than 1 nat between consecutive shrinking epsilons. A singular exact
// log-determinant yields the SINGULAR verdict (the estimator stays finite).
CertRecord certify_prop1(const LatentMap& h, const Matrix& z, const std::vector<double>& epsilons,
                         Probe kind, size_t n_probes, uint64_t seed, const std::string& label = "");

std::string verdict_name(Verdict v);

// CSV rows (H, epsilon, probes, exact, est_mean, est_se, gap, verdict).
void write_cert_csv(std::ostream& os, const std::vector<CertRecord>& records);

}  // namespace pga::logdet
