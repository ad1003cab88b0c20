#pragma once

#include <optional>
#include <string>
#include <vector>

#include "specden/containers.hpp"
#include "specden/decomposition.hpp"

namespace specden {

/// Spiked-covariance retrievability bound (Nadler 2008): a component with
/// true variance lambda* survives decomposition iff
/// lambda*/sigma^2 >= sqrt(n/m). Boundary inclusive.
bool nadler_retrievable(double lambda_true, double sigma2, Index m, Index n);

/// p-quantile of the Marchenko-Pastur eigenvalue distribution for unit
/// noise variance and aspect ratio `ratio` = n_variables / n_samples
/// (0 < ratio <= 1), computed by numeric integration of the density.
double mp_quantile(double ratio, double p);

/// Noise level estimate from the variance spectrum: median of the tail
/// (components with index > r/2) divided by the Marchenko-Pastur factor
/// for aspect ratio n/m. An estimator, not truth: it assumes the tail is
/// an uncorrelated-noise bulk, which pixel-correlating filters (e.g.
/// Gaussian smoothing) violate. Requires at least 10 components.
double estimate_noise_sigma2(const Vector& variances, Index m, Index n);

/// Optimal hard threshold on component variances (Gavish & Donoho 2014)
/// for known noise level: lambda >= coefficient(beta)^2 * sigma^2 with
/// beta = min(m,n)/max(m,n); equals (16/3) sigma^2 at m = n.
double gavish_donoho_threshold(double sigma2, Index m, Index n);

/// Number of components whose variance meets the threshold.
int gavish_donoho_cutoff(const Vector& variances, double sigma2, Index m, Index n);

/// Digitized joint distribution of two score vectors on a t x t grid over
/// the symmetric square [-r, r]^2, r = max absolute variance-normalized
/// score. Cells sum to the number of pixels.
struct ScatterGrid {
  Index t = 0;
  Eigen::MatrixX<std::int64_t> cells; // [t1 bin][t2 bin]
  double range = 0.0;                 // grid spans [-range, range] on both axes
};

ScatterGrid scatter_grid(const Vector& t1, const Vector& t2, Index t);

/// Covariance of two score vectors, (1/m) sum T1(i) T2(i). Scores of a
/// centered decomposition already have zero mean.
double aniso_cov(const Vector& t1, const Vector& t2);

/// Mardia-style bivariate skewness with the pair covariance in the
/// denominator. Evaluated through the exact expansion of the cube
/// ((sum a^3)^2 + 3 (sum a^2 b)^2 + 3 (sum a b^2)^2 + (sum b^3)^2) / (m^2 Cov^3),
/// which avoids the O(m^2) double sum. Empty when |Cov| underflows.
std::optional<double> aniso_skew(const Vector& t1, const Vector& t2);

/// Grid purity sum (s_lq / tr S)^2; 1 for an ideal dyad, larger when the
/// distribution is correlated. Empty when the grid trace is zero.
std::optional<double> aniso_purity(const ScatterGrid& grid);

/// Projected-histogram anisotropy: histograms of the variance-normalized
/// scores under p projection angles spanning [-pi/2, pi/2), s bins on a
/// fixed symmetric range; returns the mean Poisson-scaled squared
/// deviation from the rotational average, minus 1. Near zero for an
/// isotropic scatter plot; bins whose rotational average is below one
/// count are excluded. Throws ValueError when either score variance is 0.
double aniso_hist(const Vector& t1, const Vector& t2, int p = 16, int s = 64);

enum class AnisoCriterion { cov, skew, purity, hist };

const char* aniso_criterion_name(AnisoCriterion c);

/// Anisotropy values over sequential component couples (1,2), (2,3), ...;
/// values[i] belongs to the couple with lower index i+1.
struct AnisotropySeries {
  AnisoCriterion criterion = AnisoCriterion::hist;
  std::vector<double> values;
  double threshold = 0.5;
};

struct AnisoOptions {
  AnisoCriterion criterion = AnisoCriterion::hist;
  double threshold = 0.5;
  int max_scan = 30;
  Index grid_t = 64;
  int projections = 16;
  int hist_bins = 64;
  // Sparsity guard: selection refuses sparse data that was never filtered
  // (anisotropy is unreliable there) unless force is set.
  std::optional<double> raw_nonzero_fraction;
  bool filtered = true;
  bool force = false;
};

struct CutoffResult {
  int k = 0;
  AnisotropySeries series;
};

/// Criterion values over sequential couples, without selecting a cutoff.
AnisotropySeries compute_anisotropy_series(const PcaModel& model, const AnisoOptions& opts = {});

/// Scans sequential couples and returns k = (lower index of the first
/// couple of the maximal all-below-threshold suffix) - 1, i.e. the last
/// component before the scatter plots turn persistently isotropic.
/// Throws ValueError when no suffix stays below the threshold within the
/// scan range, or when the sparsity guard triggers.
CutoffResult select_cutoff_anisotropy(const PcaModel& model, const AnisoOptions& opts = {});

/// Non-normative scree knee heuristic: the component before the largest
/// second difference of log variance. Manual scree reading stays the
/// documented procedure; this only seeds the hint range.
int scree_knee_hint(const Vector& variances);

struct TruncationReport {
  int k_scree_lo = 0;
  int k_scree_hi = 0;
  int k_gd = 0;
  int k_aniso = 0;
  double sigma2_est = 0.0;                 // used for the Gavish-Donoho column
  std::optional<double> sigma2_twin;       // twin-measured noise level, when available
  AnisotropySeries series;
  std::optional<std::vector<bool>> nadler_flags; // per true component, when a twin exists
};

/// Table comparing the truncation methods on one decomposition.
/// sigma2_override replaces the spectrum-based noise estimate. Twin-based
/// fields (sigma2_twin, nadler_flags) are attached by callers that hold a
/// noise-free reference.
TruncationReport build_truncation_report(const PcaModel& model, const AnisoOptions& opts,
                                         std::optional<double> sigma2_override = std::nullopt);

/// Human-readable summary block listing k per method.
std::string truncation_summary_text(const TruncationReport& report);

/// Per-component retrievability table for known true variances; flags
/// borderline components (within 20% below the threshold) since the bound
/// is sharp only asymptotically.
std::string nadler_report_text(const Vector& lambda_true, double sigma2, Index m, Index n);

} // namespace specden
