#include "pga/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "pga/errors.hpp"
#include "pga/rng.hpp"

namespace pga::data {

SyntheticKind parse_kind(const std::string& name) {
  if (name == "gauss2d") return SyntheticKind::gauss2d;
  if (name == "ring8") return SyntheticKind::ring8;
  if (name == "checkerboard") return SyntheticKind::checkerboard;
  if (name == "manifold") return SyntheticKind::manifold;
  throw ConfigError("unknown dataset kind '" + name + "'");
}

std::string kind_name(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::gauss2d: return "gauss2d";
    case SyntheticKind::ring8: return "ring8";
    case SyntheticKind::checkerboard: return "checkerboard";
    default: return "manifold";
  }
}

Matrix gauss2d_covariance() {
  const double theta = 3.14159265358979323846 / 6.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double l1 = std::sqrt(10.0), l2 = 1.0 / std::sqrt(10.0);
  Matrix sigma(2, 2);
  sigma.at(0, 0) = c * c * l1 + s * s * l2;
  sigma.at(0, 1) = c * s * (l1 - l2);
  sigma.at(1, 0) = sigma.at(0, 1);
  sigma.at(1, 1) = s * s * l1 + c * c * l2;
  return sigma;
}

static Matrix gauss2d_sqrt_covariance() {
  const double theta = 3.14159265358979323846 / 6.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double r1 = std::pow(10.0, 0.25), r2 = std::pow(10.0, -0.25);
  Matrix m(2, 2);
  m.at(0, 0) = c * c * r1 + s * s * r2;
  m.at(0, 1) = c * s * (r1 - r2);
  m.at(1, 0) = m.at(0, 1);
  m.at(1, 1) = s * s * r1 + c * c * r2;
  return m;
}

std::vector<Matrix> ring8_centers() {
  std::vector<Matrix> centers;
  for (int k = 0; k < 8; ++k) {
    const double a = 2.0 * 3.14159265358979323846 * k / 8.0;
    Matrix c(1, 2);
    c.at(0, 0) = 2.0 * std::cos(a);
    c.at(0, 1) = 2.0 * std::sin(a);
    centers.push_back(std::move(c));
  }
  return centers;
}

double ring8_cluster_sigma() { return 0.15; }

Dataset make_synthetic(const SyntheticSpec& spec, uint64_t seed, const std::string& tag) {
  if (spec.n == 0) throw ConfigError("make_synthetic: n must be > 0");
  Dataset out;
  out.tag = tag;
  out.name = kind_name(spec.kind);
  rng::Stream stream(seed, "data:" + out.name + ":" + tag, 0);

  switch (spec.kind) {
    case SyntheticKind::gauss2d: {
      out.dim = 2;
      out.samples = Matrix(spec.n, 2);
      const Matrix root = gauss2d_sqrt_covariance();
      for (size_t i = 0; i < spec.n; ++i) {
        const double n0 = stream.normal(), n1 = stream.normal();
        out.samples.at(i, 0) = root.at(0, 0) * n0 + root.at(0, 1) * n1;
        out.samples.at(i, 1) = root.at(1, 0) * n0 + root.at(1, 1) * n1;
      }
      break;
    }
    case SyntheticKind::ring8: {
      out.dim = 2;
      out.samples = Matrix(spec.n, 2);
      const auto centers = ring8_centers();
      const double sigma = ring8_cluster_sigma();
      for (size_t i = 0; i < spec.n; ++i) {
        const size_t k = std::min<size_t>(7, static_cast<size_t>(stream.uniform() * 8.0));
        double n0, n1;
        do {
          n0 = stream.normal();
          n1 = stream.normal();
        } while (n0 * n0 + n1 * n1 > 9.0);
        out.samples.at(i, 0) = centers[k].at(0, 0) + sigma * n0;
        out.samples.at(i, 1) = centers[k].at(0, 1) + sigma * n1;
      }
      break;
    }
    case SyntheticKind::checkerboard: {
      out.dim = 2;
      out.samples = Matrix(spec.n, 2);
      // Black cells of a 4x4 grid over [-2,2]^2: (i+j) even.
      std::vector<std::pair<int, int>> cells;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          if ((i + j) % 2 == 0) cells.emplace_back(i, j);
      for (size_t i = 0; i < spec.n; ++i) {
        const size_t c = std::min<size_t>(7, static_cast<size_t>(stream.uniform() * 8.0));
        out.samples.at(i, 0) = -2.0 + cells[c].first + stream.uniform();
        out.samples.at(i, 1) = -2.0 + cells[c].second + stream.uniform();
      }
      break;
    }
    case SyntheticKind::manifold: {
      if (spec.intrinsic > spec.dim)
        throw ConfigError("make_synthetic: intrinsic dimension exceeds ambient dimension");
      out.dim = spec.dim;
      out.samples = Matrix(spec.n, spec.dim);
      // The embedding map is fixed per (D, d), independent of the sample seed,
      // so train and heldout splits live on the same manifold.
      rng::Stream map_stream(0x9e3779b97f4a7c15ULL + spec.dim * 131 + spec.intrinsic,
                             "manifold-map", 0);
      const double scale = 1.0 / std::sqrt(static_cast<double>(spec.intrinsic));
      Matrix a(spec.dim, spec.intrinsic), b(spec.dim, spec.intrinsic);
      for (auto& v : a.v) v = map_stream.normal() * scale;
      for (auto& v : b.v) v = map_stream.normal() * scale;
      std::vector<double> z(spec.intrinsic);
      for (size_t i = 0; i < spec.n; ++i) {
        for (auto& v : z) v = stream.normal();
        for (size_t r = 0; r < spec.dim; ++r) {
          double lin = 0.0, arg = 0.0;
          for (size_t c = 0; c < spec.intrinsic; ++c) {
            lin += a.at(r, c) * z[c];
            arg += b.at(r, c) * z[c];
          }
          out.samples.at(i, r) = lin + 0.1 * std::sin(arg);
        }
      }
      break;
    }
  }
  return out;
}

// ---- PGAD io ----------------------------------------------------------------

void save_pgad(const std::string& path, const Dataset& dataset) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("save_pgad: cannot open '" + path + "'");
  os.write("PGAD", 4);
  const uint32_t n = static_cast<uint32_t>(dataset.samples.rows);
  const uint32_t d = static_cast<uint32_t>(dataset.samples.cols);
  os.write(reinterpret_cast<const char*>(&n), 4);
  os.write(reinterpret_cast<const char*>(&d), 4);
  std::vector<float> row(dataset.samples.cols);
  for (size_t i = 0; i < dataset.samples.rows; ++i) {
    for (size_t j = 0; j < dataset.samples.cols; ++j)
      row[j] = static_cast<float>(dataset.samples.at(i, j));
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!os) throw FormatError("save_pgad: write failed for '" + path + "'");
}

Dataset load_pgad(const std::string& path, bool image_typed) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("load_pgad: cannot open '" + path + "'");
  long long offset = 0;
  auto read_exact = [&](void* dst, size_t bytes) {
    is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(bytes));
    if (static_cast<size_t>(is.gcount()) != bytes)
      throw FormatError("load_pgad: truncated file", offset + is.gcount());
    offset += static_cast<long long>(bytes);
  };
  char magic[4];
  read_exact(magic, 4);
  if (std::memcmp(magic, "PGAD", 4) != 0) throw FormatError("load_pgad: bad magic", 0);
  uint32_t n = 0, d = 0;
  read_exact(&n, 4);
  read_exact(&d, 4);
  Dataset out;
  out.name = path;
  out.dim = d;
  out.image_typed = image_typed;
  out.samples = Matrix(n, d);
  std::vector<float> row(d);
  for (uint32_t i = 0; i < n; ++i) {
    read_exact(row.data(), row.size() * sizeof(float));
    for (uint32_t j = 0; j < d; ++j) out.samples.at(i, j) = row[j];
  }
  is.peek();
  if (!is.eof()) throw FormatError("load_pgad: trailing bytes", offset);
  if (!out.samples.all_finite()) throw FormatError("load_pgad: non-finite sample values");
  if (image_typed && out.samples.numel() > 0) {
    double lo = out.samples.v[0], hi = out.samples.v[0];
    for (double v : out.samples.v) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (lo < 0.0 || hi > 1.0) {
      const double span = hi > lo ? hi - lo : 1.0;
      for (auto& v : out.samples.v) v = (v - lo) / span;
    }
  }
  return out;
}

// ---- MMD ---------------------------------------------------------------------

static double kernel_sum(const double* a, const double* b, size_t d,
                         const std::vector<double>& inv_two_bw_sq) {
  double sq = 0.0;
  for (size_t j = 0; j < d; ++j) {
    const double diff = a[j] - b[j];
    sq += diff * diff;
  }
  double k = 0.0;
  for (double inv : inv_two_bw_sq) k += std::exp(-sq * inv);
  return k;
}

static std::vector<double> inv_two_bw_sq(const std::vector<double>& bandwidths) {
  std::vector<double> out;
  out.reserve(bandwidths.size());
  for (double w : bandwidths) out.push_back(1.0 / (2.0 * w * w));
  return out;
}

MmdReport mmd_unbiased(const Matrix& x, const Matrix& y, const std::vector<double>& bandwidths) {
  if (x.rows < 2 || y.rows < 2) throw ConfigError("mmd_unbiased: need at least 2 samples per side");
  if (x.cols != y.cols) throw DimensionError("mmd_unbiased: dimension mismatch");
  if (bandwidths.empty()) throw ConfigError("mmd_unbiased: no bandwidths");
  const auto inv = inv_two_bw_sq(bandwidths);
  const size_t n = x.rows, m = y.rows, d = x.cols;

  double xx = 0.0, yy = 0.0, xy = 0.0;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j)
      xx += kernel_sum(&x.v[i * d], &x.v[j * d], d, inv);
  for (size_t i = 0; i < m; ++i)
    for (size_t j = i + 1; j < m; ++j)
      yy += kernel_sum(&y.v[i * d], &y.v[j * d], d, inv);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < m; ++j) xy += kernel_sum(&x.v[i * d], &y.v[j * d], d, inv);

  MmdReport report;
  report.bandwidths = bandwidths;
  report.n_x = n;
  report.n_y = m;
  report.statistic = 2.0 * xx / (static_cast<double>(n) * (n - 1)) +
                     2.0 * yy / (static_cast<double>(m) * (m - 1)) -
                     2.0 * xy / (static_cast<double>(n) * m);
  return report;
}

std::vector<double> median_heuristic_bandwidths(const Matrix& x, const Matrix& y) {
  const size_t n = x.rows + y.rows, d = x.cols;
  std::vector<double> dists;
  dists.reserve(n * (n - 1) / 2);
  auto row = [&](size_t i) { return i < x.rows ? &x.v[i * d] : &y.v[(i - x.rows) * d]; };
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      double sq = 0.0;
      const double *a = row(i), *b = row(j);
      for (size_t k = 0; k < d; ++k) {
        const double diff = a[k] - b[k];
        sq += diff * diff;
      }
      dists.push_back(std::sqrt(sq));
    }
  if (dists.empty()) return {1.0};
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  double med = dists[dists.size() / 2];
  if (!(med > 0.0)) med = 1.0;
  return {0.5 * med, med, 2.0 * med};
}

double mmd_permutation_threshold(const Matrix& x, const Matrix& y,
                                 const std::vector<double>& bandwidths, size_t n_permutations,
                                 double quantile, uint64_t seed) {
  if (n_permutations == 0) throw ConfigError("mmd_permutation_threshold: need permutations");
  const auto inv = inv_two_bw_sq(bandwidths);
  const size_t n = x.rows, m = y.rows, total = n + m, d = x.cols;

  // Pooled kernel matrix once; each permutation only re-reads it.
  std::vector<double> pooled(total * d);
  std::memcpy(pooled.data(), x.v.data(), n * d * sizeof(double));
  std::memcpy(pooled.data() + n * d, y.v.data(), m * d * sizeof(double));
  std::vector<double> k(total * total, 0.0);
  for (size_t i = 0; i < total; ++i)
    for (size_t j = i + 1; j < total; ++j) {
      const double v = kernel_sum(&pooled[i * d], &pooled[j * d], d, inv);
      k[i * total + j] = v;
      k[j * total + i] = v;
    }

  std::vector<size_t> idx(total);
  std::vector<double> stats(n_permutations);
  for (size_t p = 0; p < n_permutations; ++p) {
    rng::Stream stream(seed, "permute", p);
    for (size_t i = 0; i < total; ++i) idx[i] = i;
    for (size_t i = total - 1; i > 0; --i) {
      const size_t j = std::min(i, static_cast<size_t>(stream.uniform() * (i + 1)));
      std::swap(idx[i], idx[j]);
    }
    double xx = 0.0, yy = 0.0, xy = 0.0;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = i + 1; j < n; ++j) xx += k[idx[i] * total + idx[j]];
    for (size_t i = n; i < total; ++i)
      for (size_t j = i + 1; j < total; ++j) yy += k[idx[i] * total + idx[j]];
    for (size_t i = 0; i < n; ++i)
      for (size_t j = n; j < total; ++j) xy += k[idx[i] * total + idx[j]];
    stats[p] = 2.0 * xx / (static_cast<double>(n) * (n - 1)) +
               2.0 * yy / (static_cast<double>(m) * (m - 1)) -
               2.0 * xy / (static_cast<double>(n) * m);
  }
  std::sort(stats.begin(), stats.end());
  size_t rank = static_cast<size_t>(std::ceil(quantile * n_permutations));
  if (rank == 0) rank = 1;
  if (rank > n_permutations) rank = n_permutations;
  return stats[rank - 1];
}

// ---- model-side sampling ------------------------------------------------------

Matrix generate_samples(const PgaModel& model, size_t n, uint64_t seed) {
  rng::Stream stream(seed, "sample", 0);
  Matrix z(n, model.latent_dim());
  for (auto& v : z.v) v = stream.normal();
  return model.decode_values(z);
}

Matrix interpolate(const PgaModel& model, const Matrix& x_a, const Matrix& x_b, size_t steps) {
  if (steps < 2) throw ConfigError("interpolate: steps must be >= 2");
  if (x_a.rows != 1 || x_b.rows != 1)
    throw DimensionError("interpolate: endpoints must be single rows");
  const Matrix za = model.encode_values(x_a);
  const Matrix zb = model.encode_values(x_b);
  const size_t h = model.latent_dim();
  Matrix z(steps, h);
  for (size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(steps - 1);
    for (size_t j = 0; j < h; ++j)
      z.at(k, j) = za.at(0, j) + t * (zb.at(0, j) - za.at(0, j));
  }
  return model.decode_values(z);
}

// ---- grids ---------------------------------------------------------------------

void emit_grid(const Matrix& samples, size_t rows, size_t cols, const std::string& path) {
  if (rows == 0 || cols == 0) throw ConfigError("emit_grid: empty grid");
  if (samples.rows < rows * cols)
    throw ConfigError("emit_grid: " + std::to_string(rows * cols) + " tiles requested, only " +
                      std::to_string(samples.rows) + " samples");
  const size_t d = samples.cols;
  size_t side = static_cast<size_t>(std::lround(std::sqrt(static_cast<double>(d))));
  size_t channels = 1;
  if (side * side != d) {
    side = static_cast<size_t>(std::lround(std::sqrt(static_cast<double>(d) / 3.0)));
    channels = 3;
    if (3 * side * side != d)
      throw ConfigError("emit_grid: sample dimension " + std::to_string(d) +
                        " is neither k^2 nor 3 k^2");
  }
  const size_t width = cols * side + (cols - 1);
  const size_t height = rows * side + (rows - 1);
  std::vector<unsigned char> canvas(width * height * channels, 0);

  auto to_byte = [](double v) {
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    return static_cast<unsigned char>(std::lround(v * 255.0));
  };
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < cols; ++c) {
      const double* tile = &samples.v[(r * cols + c) * d];
      const size_t y0 = r * (side + 1), x0 = c * (side + 1);
      for (size_t y = 0; y < side; ++y)
        for (size_t x = 0; x < side; ++x)
          for (size_t ch = 0; ch < channels; ++ch)
            canvas[((y0 + y) * width + (x0 + x)) * channels + ch] =
                to_byte(tile[(y * side + x) * channels + ch]);
    }

  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("emit_grid: cannot open '" + path + "'");
  os << (channels == 1 ? "P5" : "P6") << "\n" << width << " " << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(canvas.data()),
           static_cast<std::streamsize>(canvas.size()));
  if (!os) throw FormatError("emit_grid: write failed for '" + path + "'");
}

}  // namespace pga::data
