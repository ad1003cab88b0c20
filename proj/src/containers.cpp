#include "specden/containers.hpp"

#include <cmath>

#include "specden/errors.hpp"

namespace specden {

void EnergyAxis::validate() const {
  if (!(dispersion_kev > 0.0)) throw ValueError("energy axis: dispersion must be > 0");
  if (n_channels < 1) throw ValueError("energy axis: need at least one channel");
  if (!std::isfinite(offset_kev) || !std::isfinite(dispersion_kev)) {
    throw ValueError("energy axis: calibration must be finite");
  }
}

SpectrumImage SpectrumImage::zeros(Index rows, Index cols, const EnergyAxis& axis) {
  axis.validate();
  if (rows < 1 || cols < 1) throw ValueError("spectrum image: grid dimensions must be positive");
  SpectrumImage img;
  img.rows = rows;
  img.cols = cols;
  img.axis = axis;
  img.counts.assign(static_cast<std::size_t>(rows * cols * axis.n_channels), 0.0);
  return img;
}

double SpectrumImage::total_counts() const {
  double total = 0.0;
  for (double v : counts) total += v;
  return total;
}

void SpectrumImage::validate_shape() const {
  axis.validate();
  if (rows < 1 || cols < 1) throw ValueError("spectrum image: grid dimensions must be positive");
  if (counts.size() != static_cast<std::size_t>(rows * cols * axis.n_channels)) {
    throw DimensionError("spectrum image: payload length does not match dimensions");
  }
}

void SpectrumImage::validate_counts() const {
  validate_shape();
  for (double v : counts) {
    if (!std::isfinite(v)) throw ValueError("spectrum image: counts must be finite");
    if (v < 0.0) throw ValueError("spectrum image: counts must be non-negative");
  }
}

DataMatrix flatten(const SpectrumImage& cube) {
  cube.validate_shape();
  const Index m = cube.n_pixels();
  const Index n = cube.axis.n_channels;
  DataMatrix out;
  out.values.resize(m, n);
  out.pixel_map.reserve(static_cast<std::size_t>(m));
  Index i = 0;
  for (Index r = 0; r < cube.rows; ++r) {
    for (Index c = 0; c < cube.cols; ++c, ++i) {
      out.pixel_map.emplace_back(r, c);
      const double* src = cube.counts.data() + (r * cube.cols + c) * n;
      for (Index j = 0; j < n; ++j) out.values(i, j) = src[j];
    }
  }
  return out;
}

SpectrumImage unflatten(const DataMatrix& matrix, Index rows, Index cols,
                        const EnergyAxis& axis) {
  if (rows * cols != matrix.m()) {
    throw DimensionError("unflatten: rows*cols does not match pixel count");
  }
  if (axis.n_channels != matrix.n()) {
    throw DimensionError("unflatten: axis channel count does not match matrix columns");
  }
  if (matrix.pixel_map.size() != static_cast<std::size_t>(matrix.m())) {
    throw DimensionError("unflatten: pixel map length does not match pixel count");
  }
  SpectrumImage out = SpectrumImage::zeros(rows, cols, axis);
  const Index n = matrix.n();
  for (Index i = 0; i < matrix.m(); ++i) {
    const auto [r, c] = matrix.pixel_map[static_cast<std::size_t>(i)];
    if (r < 0 || r >= rows || c < 0 || c >= cols) {
      throw DimensionError("unflatten: pixel map entry outside the target grid");
    }
    double* dst = out.counts.data() + (r * cols + c) * n;
    for (Index j = 0; j < n; ++j) dst[j] = matrix.values(i, j);
  }
  return out;
}

double sparsity(const DataMatrix& matrix) {
  const Index total = matrix.values.size();
  if (total == 0) return 0.0;
  Index nonzero = 0;
  const double* p = matrix.values.data();
  for (Index i = 0; i < total; ++i) {
    if (p[i] != 0.0) ++nonzero;
  }
  return static_cast<double>(nonzero) / static_cast<double>(total);
}

double sparsity(const SpectrumImage& cube) {
  if (cube.counts.empty()) return 0.0;
  std::size_t nonzero = 0;
  for (double v : cube.counts) {
    if (v != 0.0) ++nonzero;
  }
  return static_cast<double>(nonzero) / static_cast<double>(cube.counts.size());
}

} // namespace specden
