#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "pga/net.hpp"
#include "pga/tensor.hpp"

namespace pga::data {

struct Dataset {
  std::string name;
  size_t dim = 0;
  Matrix samples;  // N x dim
  std::string tag = "train";
  bool image_typed = false;

  size_t size() const { return samples.rows; }
};

enum class SyntheticKind { gauss2d, ring8, checkerboard, manifold };

SyntheticKind parse_kind(const std::string& name);
std::string kind_name(SyntheticKind kind);

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::gauss2d;
  size_t n = 10000;
  size_t dim = 2;        // ambient dimension (manifold only; others are 2-D)
  size_t intrinsic = 2;  // intrinsic dimension (manifold only)
};

// Deterministic generators. gauss2d is N(0, Sigma) with
// Sigma = R(30 deg) diag(sqrt(10), 1/sqrt(10)) R(30 deg)^T: condition number
// 10, unit determinant. ring8 places 3-sigma-truncated Gaussian clusters
// (sigma 0.15) on a radius-2 circle. checkerboard fills the 8 black cells of
// a 4x4 grid over [-2,2]^2. manifold embeds N(0, I_d) through the fixed
// smooth map x = A z + 0.1 sin(B z).
Dataset make_synthetic(const SyntheticSpec& spec, uint64_t seed, const std::string& tag = "train");

Matrix gauss2d_covariance();
std::vector<Matrix> ring8_centers();  // eight 1x2 rows
double ring8_cluster_sigma();

// PGAD container: magic "PGAD", u32 N, u32 D, then N*D little-endian f32.
void save_pgad(const std::string& path, const Dataset& dataset);
Dataset load_pgad(const std::string& path, bool image_typed = false);

struct MmdReport {
  double statistic = 0;
  std::vector<double> bandwidths;
  size_t n_x = 0, n_y = 0;
  double threshold = std::numeric_limits<double>::quiet_NaN();
  std::string verdict;  // "below" / "above" once a threshold is attached
};

// Sum-of-Gaussians kernel k(a,b) = sum_w exp(-||a-b||^2 / (2 w^2)) with the
// unbiased U-statistic (diagonal excluded; may be slightly negative).
MmdReport mmd_unbiased(const Matrix& x, const Matrix& y, const std::vector<double>& bandwidths);

// Median pairwise distance of the pooled sample, times {0.5, 1, 2}.
std::vector<double> median_heuristic_bandwidths(const Matrix& x, const Matrix& y);

// Quantile of the MMD null distribution under label permutation.
double mmd_permutation_threshold(const Matrix& x, const Matrix& y,
                                 const std::vector<double>& bandwidths, size_t n_permutations,
                                 double quantile, uint64_t seed);

// n decoder outputs from fresh prior draws.
Matrix generate_samples(const PgaModel& model, size_t n, uint64_t seed);

// g((1-t) f(a) + t f(b)) on a uniform t-grid including both endpoints.
Matrix interpolate(const PgaModel& model, const Matrix& x_a, const Matrix& x_b, size_t steps);

// PGM (P5) grid when D is a perfect square, PPM (P6) when D = 3 k^2.
// Values clamped to [0,1], scaled to 0..255, tiles separated by one black
// pixel. Byte-exact for given inputs.
void emit_grid(const Matrix& samples, size_t rows, size_t cols, const std::string& path);

}  // namespace pga::data
