#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace specden {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Linear energy calibration of a spectral axis: channel i is centered at
/// offset_kev + i * dispersion_kev.
struct EnergyAxis {
  double offset_kev = 0.0;
  double dispersion_kev = 1.0;
  Index n_channels = 1;

  double energy_of(Index channel) const {
    return offset_kev + static_cast<double>(channel) * dispersion_kev;
  }

  /// Nearest-channel inverse of energy_of; exact on grid energies.
  Index channel_of(double energy_kev) const {
    return static_cast<Index>(std::llround((energy_kev - offset_kev) / dispersion_kev));
  }

  bool contains_channel(Index channel) const {
    return channel >= 0 && channel < n_channels;
  }

  double min_kev() const { return energy_of(0); }
  double max_kev() const { return energy_of(n_channels - 1); }

  /// Throws ValueError unless dispersion > 0 and n_channels >= 1.
  void validate() const;

  bool operator==(const EnergyAxis&) const = default;
};

/// A spectrum image: a rows x cols pixel grid where every pixel holds a
/// full spectrum of n_channels count values. Counts are stored as doubles
/// (noise-free synthesized data is not integral), channel index fastest,
/// then column, then row.
struct SpectrumImage {
  Index rows = 0;
  Index cols = 0;
  EnergyAxis axis;
  std::vector<double> counts;
  std::string provenance;

  static SpectrumImage zeros(Index rows, Index cols, const EnergyAxis& axis);

  std::size_t size() const { return counts.size(); }

  double& at(Index r, Index c, Index ch) {
    return counts[static_cast<std::size_t>((r * cols + c) * axis.n_channels + ch)];
  }
  double at(Index r, Index c, Index ch) const {
    return counts[static_cast<std::size_t>((r * cols + c) * axis.n_channels + ch)];
  }

  Index n_pixels() const { return rows * cols; }
  double total_counts() const;

  /// Throws unless dimensions are positive, the axis is valid and the
  /// payload length matches rows*cols*n_channels.
  void validate_shape() const;
  /// Additionally requires every count to be finite and non-negative
  /// (holds for acquired/synthesized data; reconstructions may violate it).
  void validate_counts() const;
};

/// Pixel-by-channel matrix view of a spectrum image: m = rows*cols pixels
/// on the rows, n channels on the columns, plus the pixel -> (row, col)
/// mapping needed to undo the flattening.
struct DataMatrix {
  Matrix values;                                // m x n
  std::vector<std::pair<Index, Index>> pixel_map; // length m

  Index m() const { return values.rows(); }
  Index n() const { return values.cols(); }
};

/// Recasts the cube into an m x n matrix, row-major pixel order (row index
/// varies slowest). Total function on valid cubes.
DataMatrix flatten(const SpectrumImage& cube);

/// Inverse of flatten. Throws DimensionError when rows*cols != matrix.m()
/// or axis.n_channels != matrix.n().
SpectrumImage unflatten(const DataMatrix& matrix, Index rows, Index cols,
                        const EnergyAxis& axis);

/// Fraction of strictly nonzero entries, in [0, 1].
double sparsity(const DataMatrix& matrix);
double sparsity(const SpectrumImage& cube);

} // namespace specden
