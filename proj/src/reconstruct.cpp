#include "specden/reconstruct.hpp"

#include <cmath>
#include <limits>

#include "specden/errors.hpp"
#include "specden/preprocess.hpp"

namespace specden {

Matrix reconstruct_matrix(const PcaModel& model, int k) {
  if (k < 0 || k > model.r) throw ValueError("reconstruct: k out of range");
  Matrix d;
  if (k == 0) {
    d = Matrix::Zero(model.m, model.n);
  } else {
    d = model.scores.leftCols(k) * model.loadings.leftCols(k).transpose();
  }
  d = uncenter(d, model.center);
  return invert_weighting(d, model.weights);
}

SpectrumImage reconstruct(const PcaModel& model, int k, const GridInfo& grid) {
  if (grid.rows * grid.cols != model.m) {
    throw DimensionError("reconstruct: grid pixel count does not match the model");
  }
  if (grid.axis.n_channels != model.n) {
    throw DimensionError("reconstruct: grid channel count does not match the model");
  }
  DataMatrix dm;
  dm.values = reconstruct_matrix(model, k);
  dm.pixel_map = grid.pixel_map;
  return unflatten(dm, grid.rows, grid.cols, grid.axis);
}

Matrix elemental_map(const SpectrumImage& cube, const EnergyWindow& window) {
  cube.validate_shape();
  if (!(window.lo_kev < window.hi_kev)) {
    throw ValueError("elemental_map: window must satisfy lo < hi");
  }
  std::vector<Index> channels;
  for (Index i = 0; i < cube.axis.n_channels; ++i) {
    const double e = cube.axis.energy_of(i);
    if (e >= window.lo_kev && e < window.hi_kev) channels.push_back(i);
  }
  if (channels.empty()) {
    throw ValueError("elemental_map: window '" + window.label + "' covers no channels");
  }
  Matrix map = Matrix::Zero(cube.rows, cube.cols);
  for (Index r = 0; r < cube.rows; ++r) {
    for (Index c = 0; c < cube.cols; ++c) {
      double sum = 0.0;
      for (Index ch : channels) sum += cube.at(r, c, ch);
      map(r, c) = sum;
    }
  }
  return map;
}

std::vector<EnergyWindow> default_windows(const SpectrumModel& model, const EnergyAxis& axis) {
  std::vector<EnergyWindow> windows;
  const double half = 0.5 * axis.dispersion_kev;
  for (const auto& [element, lines] : model.lines) {
    const XrayLine* best = nullptr;
    for (const XrayLine& line : lines) {
      if (line.energy_kev < model.cutoff_kev) continue;
      if (line.energy_kev < axis.min_kev() - half || line.energy_kev > axis.max_kev() + half) {
        continue;
      }
      if (!best || line.weight > best->weight) best = &line;
    }
    if (!best) continue;
    const double fwhm_kev = model.fwhm_ev(best->energy_kev) / 1000.0;
    windows.push_back({best->energy_kev - fwhm_kev, best->energy_kev + fwhm_kev, element});
  }
  return windows;
}

QualityReport quality(const SpectrumImage& recon, const SpectrumImage& raw,
                      const SpectrumImage& truth, int k_used) {
  if (recon.rows != truth.rows || recon.cols != truth.cols ||
      recon.axis.n_channels != truth.axis.n_channels || raw.rows != truth.rows ||
      raw.cols != truth.cols || raw.axis.n_channels != truth.axis.n_channels) {
    throw DimensionError("quality: shapes differ");
  }
  QualityReport report;
  report.k_used = k_used;
  const std::size_t n = truth.counts.size();
  double mse_raw = 0.0, mse_recon = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dr = raw.counts[i] - truth.counts[i];
    const double dc = recon.counts[i] - truth.counts[i];
    mse_raw += dr * dr;
    mse_recon += dc * dc;
  }
  report.mse_raw_vs_truth = mse_raw / static_cast<double>(n);
  report.mse_recon_vs_truth = mse_recon / static_cast<double>(n);
  if (report.mse_recon_vs_truth > 0.0) {
    report.improvement_factor = report.mse_raw_vs_truth / report.mse_recon_vs_truth;
  } else {
    report.improvement_factor = std::numeric_limits<double>::infinity();
    report.improvement_saturated = true;
  }
  return report;
}

double negative_fraction(const SpectrumImage& cube) {
  if (cube.counts.empty()) return 0.0;
  std::size_t negative = 0;
  for (double v : cube.counts) {
    if (v < 0.0) ++negative;
  }
  return static_cast<double>(negative) / static_cast<double>(cube.counts.size());
}

SpectrumImage clamp_negative(SpectrumImage cube) {
  for (double& v : cube.counts) v = std::max(0.0, v);
  return cube;
}

} // namespace specden
