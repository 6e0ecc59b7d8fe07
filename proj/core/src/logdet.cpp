#include "pga/logdet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pga/errors.hpp"

namespace pga::logdet {

Matrix ScaledIdentityMap::eval(const Matrix& z) const {
  Matrix out = z;
  for (auto& x : out.v) x *= c_;
  return out;
}

Tensor ScaledIdentityMap::apply(Tape&, const Tensor& z) const { return scale(z, c_); }

LinearMap::LinearMap(Matrix a) : a_(std::move(a)) {
  if (a_.rows != a_.cols) throw DimensionError("LinearMap: matrix must be square");
  a_t_ = transpose_values(a_);
}

Matrix LinearMap::eval(const Matrix& z) const { return matmul_values(z, a_t_); }

Tensor LinearMap::apply(Tape&, const Tensor& z) const { return matmul(z, Tensor(a_t_)); }

MlpMap::MlpMap(const MlpNet& net) : net_(&net) {
  if (net.in_dim() != net.out_dim()) throw DimensionError("MlpMap: net must map H to H");
}

static Tensor mlp_apply_const_params(const MlpNet& net, const Tensor& z) {
  Tensor h = z;
  for (size_t l = 0; l < net.n_layers(); ++l) {
    Tensor y = add(matmul(h, Tensor(net.weights[l])), Tensor(net.biases[l]));
    if (l + 1 < net.n_layers())
      h = net.act == Activation::tanh_fn ? tanh(y) : relu(y);
    else
      h = y;
  }
  return h;
}

Tensor MlpMap::apply(Tape&, const Tensor& z) const { return mlp_apply_const_params(*net_, z); }

Tensor CompositeMap::apply(Tape&, const Tensor& z) const {
  return mlp_apply_const_params(model_->enc, mlp_apply_const_params(model_->dec, z));
}

std::vector<Matrix> batched_jacobians(const LatentMap& h, const Matrix& z_batch) {
  const size_t dim = h.dim();
  if (dim > 32) throw ConfigError("exact_jacobian: H > 32 exceeds the cost guard");
  if (z_batch.cols != dim)
    throw DimensionError("exact_jacobian: point width " + std::to_string(z_batch.cols) +
                         " != " + std::to_string(dim));
  const size_t n = z_batch.rows;
  std::vector<Matrix> jacobians(n, Matrix(dim, dim));
  for (size_t j = 0; j < dim; ++j) {
    Tape tape;
    Tensor z = tape.leaf(z_batch);
    Tensor y = h.apply(tape, z);
    Matrix mask(n, dim);
    for (size_t i = 0; i < n; ++i) mask.at(i, j) = 1.0;
    Tensor s = sum(mul(y, Tensor(std::move(mask))));
    Gradients grads = tape.backward(s);
    Matrix gz = grads.wrt(z);
    for (size_t i = 0; i < n; ++i)
      for (size_t k = 0; k < dim; ++k) jacobians[i].at(j, k) = gz.at(i, k);
  }
  return jacobians;
}

Matrix exact_jacobian(const LatentMap& h, const Matrix& z) {
  if (z.rows != 1) throw DimensionError("exact_jacobian: expected a single 1 x H point");
  return batched_jacobians(h, z)[0];
}

double exact_logabsdet(Matrix j) {
  if (j.rows != j.cols) throw DimensionError("exact_logabsdet: matrix must be square");
  const size_t n = j.rows;
  double acc = 0.0;
  for (size_t k = 0; k < n; ++k) {
    size_t piv = k;
    double best = std::fabs(j.at(k, k));
    for (size_t i = k + 1; i < n; ++i) {
      double cand = std::fabs(j.at(i, k));
      if (cand > best) {
        best = cand;
        piv = i;
      }
    }
    if (best <= kPivotTol) return kSingular;
    if (piv != k)
      for (size_t c = 0; c < n; ++c) std::swap(j.at(k, c), j.at(piv, c));
    acc += std::log(best);
    const double inv = 1.0 / j.at(k, k);
    for (size_t i = k + 1; i < n; ++i) {
      const double factor = j.at(i, k) * inv;
      if (factor == 0.0) continue;
      for (size_t c = k + 1; c < n; ++c) j.at(i, c) -= factor * j.at(k, c);
    }
  }
  return acc;
}

JacobianReport estimator_stats(const LatentMap& h, const Matrix& z, double epsilon, Probe kind,
                               size_t n_probes, uint64_t seed) {
  if (n_probes < 1) throw ConfigError("estimator_stats: n_probes must be >= 1");
  const size_t dim = h.dim();
  JacobianReport report;
  report.z = z;
  report.epsilon = epsilon;
  report.probes_used = n_probes;
  report.jacobian = exact_jacobian(h, z);
  report.exact_logabsdet = exact_logabsdet(report.jacobian);

  Matrix hz = h.eval(z);
  Matrix probes(n_probes, dim);
  for (size_t i = 0; i < n_probes; ++i) {
    rng::Stream stream(seed, "probe", i);
    Matrix row = losses::sample_probe_rows(1, dim, epsilon, kind, stream);
    for (size_t j = 0; j < dim; ++j) probes.at(i, j) = row.at(0, j);
  }
  Matrix shifted(n_probes, dim);
  for (size_t i = 0; i < n_probes; ++i)
    for (size_t j = 0; j < dim; ++j) shifted.at(i, j) = z.at(0, j) + probes.at(i, j);
  Matrix hs = h.eval(shifted);

  std::vector<double> vals(n_probes);
  const double half_dim = 0.5 * static_cast<double>(dim);
  for (size_t i = 0; i < n_probes; ++i) {
    double num = 0.0, den = 0.0;
    for (size_t j = 0; j < dim; ++j) {
      const double d = hs.at(i, j) - hz.at(0, j);
      num += d * d;
      den += probes.at(i, j) * probes.at(i, j);
    }
    if (num < kLogFloor) num = kLogFloor;
    vals[i] = half_dim * (std::log(num) - std::log(den));
  }
  double avg = 0.0;
  for (double v : vals) avg += v;
  avg /= static_cast<double>(n_probes);
  double var = 0.0;
  for (double v : vals) var += (v - avg) * (v - avg);
  report.estimator_mean = avg;
  report.estimator_std = n_probes > 1 ? std::sqrt(var / static_cast<double>(n_probes - 1)) : 0.0;
  return report;
}

ExactNll exact_nll(const PgaModel& model, const Matrix& x_batch) {
  const size_t dim = model.latent_dim();
  if (dim > 32) throw ConfigError("exact_nll: H > 32 exceeds the cost guard");
  ExactNll out;
  out.total = x_batch.rows;
  Matrix z = model.encode_values(x_batch);
  CompositeMap h(model);
  std::vector<Matrix> jacobians = batched_jacobians(h, z);
  const double norm_const = 0.5 * static_cast<double>(dim) * std::log(2.0 * 3.14159265358979323846);
  double acc = 0.0;
  size_t included = 0;
  for (size_t i = 0; i < z.rows; ++i) {
    const double ld = exact_logabsdet(jacobians[i]);
    if (ld == kSingular) {
      ++out.excluded;
      continue;
    }
    double sq = 0.0;
    for (size_t j = 0; j < dim; ++j) sq += z.at(i, j) * z.at(i, j);
    acc += 0.5 * sq + norm_const + ld;
    ++included;
  }
  out.nll = included ? acc / static_cast<double>(included)
                     : std::numeric_limits<double>::quiet_NaN();
  return out;
}

CertRecord certify_prop1(const LatentMap& h, const Matrix& z, const std::vector<double>& epsilons,
                         Probe kind, size_t n_probes, uint64_t seed, const std::string& label) {
  CertRecord record;
  record.dim = h.dim();
  record.label = label;
  for (double eps : epsilons) {
    JacobianReport rep = estimator_stats(h, z, eps, kind, n_probes, seed);
    CertEntry e;
    e.epsilon = eps;
    e.probes = n_probes;
    e.exact = rep.exact_logabsdet;
    e.est_mean = rep.estimator_mean;
    e.est_se = rep.standard_error();
    e.gap = rep.estimator_mean - rep.exact_logabsdet;
    record.entries.push_back(e);
  }

  bool singular = std::any_of(record.entries.begin(), record.entries.end(),
                              [](const CertEntry& e) { return e.exact == kSingular; });
  if (singular) {
    record.verdict = Verdict::singular;
    return record;
  }

  std::vector<CertEntry> by_eps = record.entries;
  std::sort(by_eps.begin(), by_eps.end(),
            [](const CertEntry& a, const CertEntry& b) { return a.epsilon > b.epsilon; });
  const CertEntry& smallest = by_eps.back();
  bool ok = smallest.gap >= -3.0 * smallest.est_se;
  for (size_t i = 0; i + 1 < by_eps.size(); ++i)
    if (by_eps[i + 1].gap > by_eps[i].gap + 1.0) ok = false;
  record.verdict = ok ? Verdict::pass : Verdict::fail;
  return record;
}

std::string verdict_name(Verdict v) {
  switch (v) {
    case Verdict::pass: return "PASS";
    case Verdict::fail: return "FAIL";
    default: return "SINGULAR";
  }
}

void write_cert_csv(std::ostream& os, const std::vector<CertRecord>& records) {
  os << "H,epsilon,probes,exact,est_mean,est_se,gap,verdict\n";
  char buf[512];
  for (const auto& r : records)
    for (const auto& e : r.entries) {
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%zu,%.17g,%.17g,%.17g,%.17g,%s\n", r.dim,
                    e.epsilon, e.probes, e.exact, e.est_mean, e.est_se, e.gap,
                    verdict_name(r.verdict).c_str());
      os << buf;
    }
}

}  // namespace pga::logdet
