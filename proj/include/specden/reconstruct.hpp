#pragma once

#include <string>
#include <vector>

#include "specden/containers.hpp"
#include "specden/decomposition.hpp"
#include "specden/phantom.hpp"

namespace specden {

/// Grid bookkeeping required to fold a pixel-by-channel matrix back into a
/// spectrum image.
struct GridInfo {
  Index rows = 0;
  Index cols = 0;
  EnergyAxis axis;
  std::vector<std::pair<Index, Index>> pixel_map;
};

/// Rank-k reconstruction in the matrix domain: T[:, :k] P[:, :k]^T, the
/// mean spectrum re-added (centering was applied after weighting, so its
/// inverse runs first), then un-weighted by elementwise multiplication
/// with sqrt(g_i h_j). k = r reproduces the preprocessed input; k = 0
/// yields the un-weighted mean-spectrum baseline. Throws ValueError when k
/// is out of [0, r].
Matrix reconstruct_matrix(const PcaModel& model, int k);

/// Same, reshaped onto the original grid.
SpectrumImage reconstruct(const PcaModel& model, int k, const GridInfo& grid);

/// Energy window for map extraction; a channel belongs to the window when
/// its center lies in [lo_kev, hi_kev), so adjacent windows partition the
/// axis.
struct EnergyWindow {
  double lo_kev = 0.0;
  double hi_kev = 0.0;
  std::string label;
};

/// Per-pixel sum of counts over the window's channels. Throws ValueError
/// when no channel center falls inside the window.
Matrix elemental_map(const SpectrumImage& cube, const EnergyWindow& window);

/// One window per element of the model with lines on the axis, centered on
/// the element's strongest in-range line, width 2x the detector FWHM
/// there.
std::vector<EnergyWindow> default_windows(const SpectrumModel& model, const EnergyAxis& axis);

struct QualityReport {
  double mse_raw_vs_truth = 0.0;
  double mse_recon_vs_truth = 0.0;
  double improvement_factor = 0.0; // mse_raw / mse_recon; +inf flagged below
  bool improvement_saturated = false;
  int k_used = 0;
};

/// Mean squared error of reconstruction and raw data against the
/// noise-free reference. Shapes must match.
QualityReport quality(const SpectrumImage& recon, const SpectrumImage& raw,
                      const SpectrumImage& truth, int k_used);

/// Fraction of cells below zero (reconstruction may produce them; they are
/// preserved unless explicitly clamped).
double negative_fraction(const SpectrumImage& cube);

/// Presentation-layer clamp of negative cells to zero.
SpectrumImage clamp_negative(SpectrumImage cube);

} // namespace specden
