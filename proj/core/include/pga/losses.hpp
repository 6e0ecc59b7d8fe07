#pragma once

#include <cstdint>
#include <string>

#include "pga/net.hpp"
#include "pga/rng.hpp"
#include "pga/tensor.hpp"

namespace pga {

enum class Objective { lpga, vpga, lvpga };

// Perturbation distribution S(eps): uniform on the radius-eps sphere, or
// N(0, eps^2 I).
enum class Probe { sphere, gaussian };

// How the latent reconstruction losses keep gradients away from the decoder.
// truncate_decoder stops the gradient at the decoder output (theta frozen and
// no path back through g's input); freeze_decoder_params freezes only theta,
// leaving the input path alive. The first is the default reading.
enum class LatentReconRouting { truncate_decoder, freeze_decoder_params };

struct LossWeights {
  double alpha = 0.05;        // weight of the prior latent reconstruction loss
  double beta = 0.0;          // weight of the aggregate latent reconstruction loss
  double gamma = 0.02;        // weight of the likelihood pair (encoder + decoder)
  double gamma_prime = 0.02;  // weight of the unified variational reconstruction
  double eta = 1.0;           // weight of the VAE pair
  double sigma_coeff = 0.1;   // c in sigma = c * ||z||_2 / sqrt(H)
  double epsilon = 1e-4;      // probe radius
  Probe probe = Probe::sphere;
  int probes_per_sample = 1;
  LatentReconRouting lr_routing = LatentReconRouting::truncate_decoder;

  void validate() const;  // throws ConfigError
};

// Every named term is populated (terms outside the objective's formula are
// computed value-only or reported as zero); `total` is the weighted sum the
// objective prescribes and is the only tensor meant for backward.
struct LossBundle {
  Objective objective = Objective::lpga;
  Tensor total;
  double L_r = 0, L_lr_N = 0, L_lr_H = 0;
  double L_nll_phi = 0, L_nll_theta = 0;
  double L_vr = 0, L_vkl = 0;
  double total_value = 0;
};

namespace losses {

// 1/2 E ||g(f(x)) - x||^2; gradients reach both phi and theta.
Tensor recon_loss(const BoundModel& bm, const Tensor& x);

// 1/2 E ||h(z) - z||^2 over prior draws; phi only.
Tensor latent_recon_prior(const BoundModel& bm, const Tensor& z_prior, LatentReconRouting routing);

// 1/2 E ||h(z) - z||^2 at z = f(x) with the target frozen; phi only.
// z_live must be the tracked encoder output for the batch.
Tensor latent_recon_aggregate(const BoundModel& bm, const Tensor& z_live,
                              LatentReconRouting routing);

// 1/2 E ||f(x)||^2; phi only. z_live as above.
Tensor nll_encoder(const Tensor& z_live);

// (H/2) E log(||h(z+delta) - h(z)||^2 / ||delta||^2) with z frozen at the
// given codes and the encoder inside h parameter-frozen; theta only.
Tensor nll_decoder(const BoundModel& bm, const Matrix& z_codes, const LossWeights& w,
                   uint64_t seed, uint64_t step);

// One probe from S(eps). Sphere draws are normalized to length exactly eps.
Matrix sample_probe(size_t latent_dim, double epsilon, Probe kind, uint64_t seed);
// n probes stacked row-wise, consuming `stream` in a fixed order.
Matrix sample_probe_rows(size_t n, size_t latent_dim, double epsilon, Probe kind,
                         rng::Stream& stream);

struct VaeTerms {
  Tensor vr;
  Tensor vkl;
};

// Latent-target VAE pair. vkl is the standard N(mu, sigma^2) vs N(0, I)
// divergence and reaches phi only. vr reaches phi and theta through h(z');
// the target h(f(x)) and the per-sample scale sigma = c ||f(x)|| / sqrt(H)
// are both frozen.
VaeTerms vae_losses(const BoundModel& bm, const Tensor& x, const LossWeights& w, uint64_t seed,
                    uint64_t step);

// Eq-7-shaped ratio with delta' reparameterized from the clamped variance
// head; theta through h, phi through sigma_phi only.
Tensor unified_vr(const BoundModel& bm, const Tensor& x, const Matrix& z_codes,
                  const LossWeights& w, uint64_t seed, uint64_t step);

LossBundle assemble(const BoundModel& bm, Objective objective, const Matrix& x,
                    const Matrix& z_prior, const LossWeights& w, uint64_t seed, uint64_t step);

std::string objective_name(Objective o);

}  // namespace losses
}  // namespace pga
