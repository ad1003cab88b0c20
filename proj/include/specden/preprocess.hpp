#pragma once

#include <vector>

#include "specden/containers.hpp"

namespace specden {

enum class WeightMode { full, spectrum_only };

/// Elementwise noise-equalization weights W = sqrt(G (x) H) for Poisson
/// data (Keenan & Kotula style): H is the mean spectrum, G the mean image.
/// In full mode G is normalized to unit mean so both modes share the same
/// weighted scale; spectrum-only mode fixes G = 1. Rows/columns whose mean
/// is zero are recorded and forced to zero by apply/invert.
struct WeightModel {
  Vector g; // m
  Vector h; // n
  WeightMode mode = WeightMode::full;
  std::vector<Index> zero_rows;
  std::vector<Index> zero_cols;

  static WeightModel identity(Index m, Index n);
};

/// Mean spectrum removed by centering; needed to undo it.
struct CenterModel {
  Vector mean_spectrum; // n
};

struct BinResult {
  SpectrumImage image;
  bool rows_truncated = false; // odd trailing row dropped
  bool cols_truncated = false; // odd trailing column dropped
};

/// 2x2 spatial binning: each output pixel is the sum of its input block,
/// so counts are conserved on the retained region. Channels untouched.
BinResult bin2x2(const SpectrumImage& cube);

/// Per-channel 2D convolution with a Gaussian kernel truncated where it
/// falls below 10% of its peak (13 taps at sigma = 1), renormalized to
/// unit sum; at borders the kernel is renormalized over in-bounds taps.
/// Applied to the cube before flattening.
SpectrumImage gaussian_filter_spatial(const SpectrumImage& cube, double sigma_px = 1.0);

/// Kernel offsets and weights used by gaussian_filter_spatial (exposed for
/// verification).
std::vector<std::pair<std::pair<Index, Index>, double>> gaussian_kernel_taps(double sigma_px);

/// Builds the weight model from a non-negative matrix. Throws ValueError
/// if the matrix is all zero or has negative entries.
WeightModel compute_weights(const Matrix& matrix, WeightMode mode);

/// out(i,j) = in(i,j) / sqrt(g_i h_j); zero-set rows/columns are set to 0.
Matrix apply_weighting(const Matrix& matrix, const WeightModel& w);

/// Exact elementwise inverse of apply_weighting where W > 0; zero-set
/// entries are restored to 0.
Matrix invert_weighting(const Matrix& matrix, const WeightModel& w);

struct CenterResult {
  Matrix centered;
  CenterModel model;
};

/// Subtracts the mean spectrum (column means). When combined with
/// weighting, weighting runs first.
CenterResult center(const Matrix& matrix);
Matrix uncenter(const Matrix& matrix, const CenterModel& model);

struct ResidualVariance {
  double global = 0.0;   // mean squared weighted residual over all cells
  Vector per_channel;    // per-column mean squared weighted residual
};

/// Weighted noise variance measured from a twin pair: both cubes are
/// weighted with the same model, subtracted, and the residual's second
/// moment taken per channel and globally (zero-set columns contribute 0).
ResidualVariance weighted_residual_variance(const Matrix& noisy, const Matrix& truth,
                                            const WeightModel& w);

/// Mean over all columns of the per-column population variance of the
/// weighted matrix (zero columns count as 0). In the diluted limit of at
/// most one count per column this equals total_counts / n.
double mean_weighted_column_variance(const Matrix& matrix, const WeightModel& w);

} // namespace specden
