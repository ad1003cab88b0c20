#include "specden/preprocess.hpp"

#include <cmath>

#include "specden/errors.hpp"
#include "specden/parallel.hpp"

namespace specden {

WeightModel WeightModel::identity(Index m, Index n) {
  WeightModel w;
  w.g = Vector::Ones(m);
  w.h = Vector::Ones(n);
  w.mode = WeightMode::full;
  return w;
}

BinResult bin2x2(const SpectrumImage& cube) {
  cube.validate_shape();
  BinResult result;
  result.rows_truncated = (cube.rows % 2) != 0;
  result.cols_truncated = (cube.cols % 2) != 0;
  const Index out_rows = cube.rows / 2;
  const Index out_cols = cube.cols / 2;
  if (out_rows < 1 || out_cols < 1) throw ValueError("bin2x2: image smaller than 2x2");
  const Index n = cube.axis.n_channels;
  result.image = SpectrumImage::zeros(out_rows, out_cols, cube.axis);
  result.image.provenance = cube.provenance;
  for (Index r = 0; r < out_rows; ++r) {
    for (Index c = 0; c < out_cols; ++c) {
      double* dst = result.image.counts.data() + (r * out_cols + c) * n;
      for (Index dr = 0; dr < 2; ++dr) {
        for (Index dc = 0; dc < 2; ++dc) {
          const double* src = cube.counts.data() + ((2 * r + dr) * cube.cols + 2 * c + dc) * n;
          for (Index j = 0; j < n; ++j) dst[j] += src[j];
        }
      }
    }
  }
  return result;
}

std::vector<std::pair<std::pair<Index, Index>, double>> gaussian_kernel_taps(double sigma_px) {
  if (!(sigma_px > 0.0)) throw ValueError("gaussian filter: sigma must be positive");
  // Keep taps where exp(-r^2 / 2 sigma^2) >= 0.1, i.e. r^2 <= 2 ln(10) sigma^2.
  const double r2_max = 2.0 * std::log(10.0) * sigma_px * sigma_px;
  const Index radius = static_cast<Index>(std::floor(std::sqrt(r2_max)));
  std::vector<std::pair<std::pair<Index, Index>, double>> taps;
  double sum = 0.0;
  for (Index dy = -radius; dy <= radius; ++dy) {
    for (Index dx = -radius; dx <= radius; ++dx) {
      const double r2 = static_cast<double>(dx * dx + dy * dy);
      if (r2 > r2_max) continue;
      const double w = std::exp(-0.5 * r2 / (sigma_px * sigma_px));
      taps.push_back({{dy, dx}, w});
      sum += w;
    }
  }
  for (auto& tap : taps) tap.second /= sum;
  return taps;
}

SpectrumImage gaussian_filter_spatial(const SpectrumImage& cube, double sigma_px) {
  cube.validate_shape();
  const auto taps = gaussian_kernel_taps(sigma_px);
  const Index n = cube.axis.n_channels;
  SpectrumImage out = SpectrumImage::zeros(cube.rows, cube.cols, cube.axis);
  out.provenance = cube.provenance;
  parallel_for(n, [&](std::int64_t ch) {
    for (Index r = 0; r < cube.rows; ++r) {
      for (Index c = 0; c < cube.cols; ++c) {
        double acc = 0.0, norm = 0.0;
        for (const auto& [offset, w] : taps) {
          const Index rr = r + offset.first;
          const Index cc = c + offset.second;
          if (rr < 0 || rr >= cube.rows || cc < 0 || cc >= cube.cols) continue;
          acc += w * cube.counts[static_cast<std::size_t>((rr * cube.cols + cc) * n + ch)];
          norm += w;
        }
        out.counts[static_cast<std::size_t>((r * cube.cols + c) * n + ch)] = acc / norm;
      }
    }
  });
  return out;
}

WeightModel compute_weights(const Matrix& matrix, WeightMode mode) {
  if (matrix.size() == 0) throw ValueError("compute_weights: empty matrix");
  if (matrix.minCoeff() < 0.0) throw ValueError("compute_weights: matrix must be non-negative");
  if (!(matrix.sum() > 0.0)) throw ValueError("compute_weights: all-zero matrix");

  WeightModel w;
  w.mode = mode;
  w.h = matrix.colwise().mean();
  if (mode == WeightMode::full) {
    w.g = matrix.rowwise().mean();
    w.g /= w.g.mean(); // keeps the weighted scale comparable to spectrum-only
    for (Index i = 0; i < w.g.size(); ++i) {
      if (w.g(i) == 0.0) w.zero_rows.push_back(i);
    }
  } else {
    w.g = Vector::Ones(matrix.rows());
  }
  for (Index j = 0; j < w.h.size(); ++j) {
    if (w.h(j) == 0.0) w.zero_cols.push_back(j);
  }
  return w;
}

namespace {

void check_dims(const Matrix& matrix, const WeightModel& w, const char* op) {
  if (matrix.rows() != w.g.size() || matrix.cols() != w.h.size()) {
    throw DimensionError(std::string(op) + ": matrix shape does not match weight model");
  }
}

Vector inv_sqrt_or_zero(const Vector& v) {
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i) out(i) = v(i) > 0.0 ? 1.0 / std::sqrt(v(i)) : 0.0;
  return out;
}

Vector sqrt_or_zero(const Vector& v) {
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i) out(i) = v(i) > 0.0 ? std::sqrt(v(i)) : 0.0;
  return out;
}

} // namespace

Matrix apply_weighting(const Matrix& matrix, const WeightModel& w) {
  check_dims(matrix, w, "apply_weighting");
  const Vector isg = inv_sqrt_or_zero(w.g);
  const Vector ish = inv_sqrt_or_zero(w.h);
  return isg.asDiagonal() * matrix * ish.asDiagonal();
}

Matrix invert_weighting(const Matrix& matrix, const WeightModel& w) {
  check_dims(matrix, w, "invert_weighting");
  const Vector sg = sqrt_or_zero(w.g);
  const Vector sh = sqrt_or_zero(w.h);
  return sg.asDiagonal() * matrix * sh.asDiagonal();
}

CenterResult center(const Matrix& matrix) {
  CenterResult result;
  result.model.mean_spectrum = matrix.colwise().mean();
  result.centered = matrix.rowwise() - result.model.mean_spectrum.transpose();
  return result;
}

Matrix uncenter(const Matrix& matrix, const CenterModel& model) {
  if (matrix.cols() != model.mean_spectrum.size()) {
    throw DimensionError("uncenter: matrix columns do not match mean spectrum");
  }
  return matrix.rowwise() + model.mean_spectrum.transpose();
}

ResidualVariance weighted_residual_variance(const Matrix& noisy, const Matrix& truth,
                                            const WeightModel& w) {
  if (noisy.rows() != truth.rows() || noisy.cols() != truth.cols()) {
    throw DimensionError("weighted_residual_variance: twin shapes differ");
  }
  const Matrix residual = apply_weighting(noisy, w) - apply_weighting(truth, w);
  ResidualVariance out;
  out.per_channel = residual.array().square().colwise().mean();
  out.global = out.per_channel.mean();
  return out;
}

double mean_weighted_column_variance(const Matrix& matrix, const WeightModel& w) {
  const Matrix weighted = apply_weighting(matrix, w);
  const double m = static_cast<double>(weighted.rows());
  double sum = 0.0;
  for (Index j = 0; j < weighted.cols(); ++j) {
    const double mean = weighted.col(j).mean();
    sum += (weighted.col(j).array() - mean).square().sum() / m;
  }
  return sum / static_cast<double>(weighted.cols());
}

} // namespace specden
