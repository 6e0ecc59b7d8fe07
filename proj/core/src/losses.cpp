#include "pga/losses.hpp"

#include <cmath>

#include "pga/errors.hpp"

namespace pga {

void LossWeights::validate() const {
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ConfigError(std::string("LossWeights: ") + name + " must be finite and >= 0");
  };
  nonneg(alpha, "alpha");
  nonneg(beta, "beta");
  nonneg(gamma, "gamma");
  nonneg(gamma_prime, "gamma_prime");
  nonneg(eta, "eta");
  if (!(sigma_coeff > 0.0)) throw ConfigError("LossWeights: sigma_coeff must be > 0");
  if (!(epsilon > 0.0)) throw ConfigError("LossWeights: epsilon must be > 0");
  if (probes_per_sample < 1) throw ConfigError("LossWeights: probes_per_sample must be >= 1");
}

namespace losses {

namespace {

Tensor half_mean_ssr(const Tensor& diff) { return scale(mean(sum_sq_rows(diff)), 0.5); }

// h with the encoder's parameters frozen: theta stays live, phi gets zero.
Tensor h_frozen_phi(const BoundModel& bm, const Tensor& z) {
  return bm.enc.forward(bm.dec.forward(z), /*freeze_params=*/true);
}

Tensor recon_from(const BoundModel& bm, const Tensor& x, const Tensor& z_live) {
  return half_mean_ssr(sub(bm.decode(z_live), x));
}

Matrix log_rows(const Matrix& m) {
  Matrix out(m.rows, m.cols);
  for (size_t i = 0; i < m.v.size(); ++i)
    out.v[i] = std::log(m.v[i] < kLogFloor ? kLogFloor : m.v[i]);
  return out;
}

Matrix row_sum_sq(const Matrix& m) {
  Matrix out(m.rows, 1);
  for (size_t i = 0; i < m.rows; ++i) {
    double s = 0.0;
    for (size_t j = 0; j < m.cols; ++j) s += m.at(i, j) * m.at(i, j);
    out.at(i, 0) = s;
  }
  return out;
}

}  // namespace

Tensor recon_loss(const BoundModel& bm, const Tensor& x) {
  return recon_from(bm, x, bm.encode(x));
}

Tensor latent_recon_prior(const BoundModel& bm, const Tensor& z_prior,
                          LatentReconRouting routing) {
  Tensor u = routing == LatentReconRouting::truncate_decoder
                 ? frozen(bm.model->decode_values(z_prior.values()))
                 : bm.decode(z_prior, /*freeze_theta=*/true);
  return half_mean_ssr(sub(bm.encode(u), z_prior));
}

Tensor latent_recon_aggregate(const BoundModel& bm, const Tensor& z_live,
                              LatentReconRouting routing) {
  Tensor target = stop_gradient(z_live);
  Tensor u = routing == LatentReconRouting::truncate_decoder
                 ? frozen(bm.model->decode_values(z_live.values()))
                 : bm.decode(z_live, /*freeze_theta=*/true);
  return half_mean_ssr(sub(bm.encode(u), target));
}

Tensor nll_encoder(const Tensor& z_live) { return half_mean_ssr(z_live); }

Matrix sample_probe_rows(size_t n, size_t latent_dim, double epsilon, Probe kind,
                         rng::Stream& stream) {
  Matrix d(n, latent_dim);
  for (size_t i = 0; i < n; ++i) {
    double norm_sq = 0.0;
    do {
      norm_sq = 0.0;
      for (size_t j = 0; j < latent_dim; ++j) {
        double v = stream.normal();
        d.at(i, j) = v;
        norm_sq += v * v;
      }
    } while (kind == Probe::sphere && norm_sq == 0.0);
    const double s = kind == Probe::sphere ? epsilon / std::sqrt(norm_sq) : epsilon;
    for (size_t j = 0; j < latent_dim; ++j) d.at(i, j) *= s;
  }
  return d;
}

Matrix sample_probe(size_t latent_dim, double epsilon, Probe kind, uint64_t seed) {
  rng::Stream stream(seed, "probe", 0);
  return sample_probe_rows(1, latent_dim, epsilon, kind, stream);
}

Tensor nll_decoder(const BoundModel& bm, const Matrix& z_codes, const LossWeights& w,
                   uint64_t seed, uint64_t step) {
  const size_t latent = bm.model->latent_dim();
  Tensor z = frozen(z_codes);
  Tensor hz = h_frozen_phi(bm, z);
  rng::Stream stream(seed, "probe", step);
  Tensor acc;
  for (int p = 0; p < w.probes_per_sample; ++p) {
    Matrix d = sample_probe_rows(z_codes.rows, latent, w.epsilon, w.probe, stream);
    Tensor log_den(log_rows(row_sum_sq(d)));
    Tensor hzd = h_frozen_phi(bm, add(z, Tensor(std::move(d))));
    Tensor num = sum_sq_rows(sub(hzd, hz));
    Tensor term = mean(sub(log(num), log_den));
    acc = p == 0 ? term : add(acc, term);
  }
  return scale(acc, 0.5 * static_cast<double>(latent) / w.probes_per_sample);
}

VaeTerms vae_losses(const BoundModel& bm, const Tensor& x, const LossWeights& w, uint64_t seed,
                    uint64_t step) {
  StochasticCode code = bm.encode_stochastic(x, seed, step);
  const size_t batch = x.rows();
  const size_t latent = bm.model->latent_dim();

  // KL(N(mu, diag(sigma^2)) || N(0, I)) averaged over the batch.
  Tensor gap = shift(sub(add(square(code.mean), exp(code.log_var)), code.log_var), -1.0);
  Tensor vkl = scale(sum(gap), 0.5 / static_cast<double>(batch));

  // Frozen latent target z_hat = h(f(x)) and frozen per-sample scale
  // 1/(2 sigma^2) with sigma = c ||f(x)|| / sqrt(H).
  const Matrix& z_vals = code.mean.values();
  Tensor target = frozen(bm.model->composite_values(z_vals));
  Matrix inv_two_sigma_sq(batch, 1);
  const double c2 = w.sigma_coeff * w.sigma_coeff;
  for (size_t i = 0; i < batch; ++i) {
    double norm_sq = 0.0;
    for (size_t j = 0; j < latent; ++j) norm_sq += z_vals.at(i, j) * z_vals.at(i, j);
    if (norm_sq < 1e-12) norm_sq = 1e-12;
    inv_two_sigma_sq.at(i, 0) = static_cast<double>(latent) / (2.0 * c2 * norm_sq);
  }
  Tensor weight = frozen(std::move(inv_two_sigma_sq));

  Tensor pred = bm.enc.forward(bm.dec.forward(code.sample));
  Tensor vr = mean(mul(sum_sq_rows(sub(target, pred)), weight));
  return {vr, vkl};
}

Tensor unified_vr(const BoundModel& bm, const Tensor& x, const Matrix& z_codes,
                  const LossWeights& w, uint64_t seed, uint64_t step) {
  const size_t latent = bm.model->latent_dim();
  const size_t batch = z_codes.rows;
  Tensor z = frozen(z_codes);
  Tensor lv = bm.log_var(x);
  Tensor sigma = exp(scale(lv, 0.5));
  Tensor hz = h_frozen_phi(bm, z);
  rng::Stream stream(seed, "probe", step);
  Tensor acc;
  for (int p = 0; p < w.probes_per_sample; ++p) {
    Matrix noise(batch, latent);
    for (auto& v : noise.v) v = stream.normal();
    Tensor delta = mul(sigma, Tensor(std::move(noise)));
    Tensor hzd = h_frozen_phi(bm, add(z, delta));
    Tensor num = sum_sq_rows(sub(hzd, hz));
    Tensor den = sum_sq_rows(delta);
    Tensor term = mean(sub(log(num), log(den)));
    acc = p == 0 ? term : add(acc, term);
  }
  return scale(acc, 0.5 * static_cast<double>(latent) / w.probes_per_sample);
}

LossBundle assemble(const BoundModel& bm, Objective objective, const Matrix& x,
                    const Matrix& z_prior, const LossWeights& w, uint64_t seed, uint64_t step) {
  w.validate();
  if (!x.all_finite()) throw NumericError("assemble: non-finite value in input batch");

  // Evaluates a zero-weight term on a scratch tape so it is reported without
  // contributing gradients; draws the same streams the live form would.
  auto value_only = [&](auto&& builder) -> double {
    Tape scratch;
    BoundModel sbm = bind(scratch, *bm.model);
    return builder(sbm).scalar();
  };

  Tensor xt(x);
  Tensor zpt(z_prior);
  Tensor z_live = bm.encode(xt);

  LossBundle out;
  out.objective = objective;

  Tensor total = recon_from(bm, xt, z_live);
  out.L_r = total.scalar();
  auto add_weighted = [&total](const Tensor& term, double weight) {
    total = add(total, scale(term, weight));
  };

  if (w.alpha > 0.0) {
    Tensor t = latent_recon_prior(bm, zpt, w.lr_routing);
    out.L_lr_N = t.scalar();
    add_weighted(t, w.alpha);
  } else {
    out.L_lr_N = value_only(
        [&](BoundModel& sbm) { return latent_recon_prior(sbm, zpt, w.lr_routing); });
  }

  if (w.beta > 0.0) {
    Tensor t = latent_recon_aggregate(bm, z_live, w.lr_routing);
    out.L_lr_H = t.scalar();
    add_weighted(t, w.beta);
  } else {
    out.L_lr_H = value_only([&](BoundModel& sbm) {
      return latent_recon_aggregate(sbm, sbm.encode(xt), w.lr_routing);
    });
  }

  // Costless given z_live; always reported.
  Tensor nll_phi = nll_encoder(z_live);
  out.L_nll_phi = nll_phi.scalar();

  const Matrix& z_codes = z_live.values();

  if (objective == Objective::lpga) {
    if (w.gamma > 0.0) {
      add_weighted(nll_phi, w.gamma);
      Tensor nll_theta = nll_decoder(bm, z_codes, w, seed, step);
      out.L_nll_theta = nll_theta.scalar();
      add_weighted(nll_theta, w.gamma);
    } else {
      out.L_nll_theta = value_only([&](BoundModel& sbm) {
        return nll_decoder(sbm, sbm.encode(xt).values(), w, seed, step);
      });
    }
  } else if (objective == Objective::vpga) {
    if (w.eta > 0.0) {
      VaeTerms vt = vae_losses(bm, xt, w, seed, step);
      out.L_vr = vt.vr.scalar();
      out.L_vkl = vt.vkl.scalar();
      add_weighted(vt.vr, w.eta);
      add_weighted(vt.vkl, w.eta);
    } else {
      Tape scratch;
      BoundModel sbm = bind(scratch, *bm.model);
      VaeTerms vt = vae_losses(sbm, xt, w, seed, step);
      out.L_vr = vt.vr.scalar();
      out.L_vkl = vt.vkl.scalar();
    }
  } else {  // lvpga
    if (w.gamma > 0.0) add_weighted(nll_phi, w.gamma);
    if (w.gamma_prime > 0.0) {
      Tensor uvr = unified_vr(bm, xt, z_codes, w, seed, step);
      out.L_vr = uvr.scalar();
      add_weighted(uvr, w.gamma_prime);
    } else {
      out.L_vr = value_only([&](BoundModel& sbm) {
        return unified_vr(sbm, xt, sbm.encode(xt).values(), w, seed, step);
      });
    }
    if (w.eta > 0.0) {
      VaeTerms vt = vae_losses(bm, xt, w, seed, step);
      out.L_vkl = vt.vkl.scalar();
      add_weighted(vt.vkl, w.eta);
    } else {
      Tape scratch;
      BoundModel sbm = bind(scratch, *bm.model);
      VaeTerms vt = vae_losses(sbm, xt, w, seed, step);
      out.L_vkl = vt.vkl.scalar();
    }
  }

  out.total = total;
  out.total_value = total.scalar();
  return out;
}

std::string objective_name(Objective o) {
  switch (o) {
    case Objective::lpga: return "lpga";
    case Objective::vpga: return "vpga";
    default: return "lvpga";
  }
}

}  // namespace losses
}  // namespace pga
