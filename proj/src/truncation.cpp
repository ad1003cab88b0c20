#include "specden/truncation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "specden/container_io.hpp"
#include "specden/errors.hpp"

namespace specden {

bool nadler_retrievable(double lambda_true, double sigma2, Index m, Index n) {
  if (!(sigma2 > 0.0)) throw ValueError("nadler_retrievable: sigma^2 must be positive");
  if (m < 1 || n < 1) throw ValueError("nadler_retrievable: dimensions must be positive");
  const double threshold = std::sqrt(static_cast<double>(n) / static_cast<double>(m));
  return lambda_true / sigma2 >= threshold;
}

namespace {

// Marchenko-Pastur CDF via the substitution x = a + (b - a) sin^2(theta),
// which removes both square-root endpoint singularities:
//   f(x) dx = (b - a)^2 sin^2(theta) cos^2(theta) / (pi q x) dtheta.
double mp_cdf_theta(double q, double theta_hi) {
  const double sq = std::sqrt(q);
  const double a = (1.0 - sq) * (1.0 - sq);
  const double b = (1.0 + sq) * (1.0 + sq);
  const double span = b - a;
  auto integrand = [&](double theta) {
    const double st = std::sin(theta);
    const double ct = std::cos(theta);
    const double x = a + span * st * st;
    return span * span * st * st * ct * ct / (M_PI * q * x);
  };
  // Composite Simpson; the integrand is smooth on [0, pi/2].
  const int steps = 4096;
  const double h = theta_hi / steps;
  double sum = integrand(0.0) + integrand(theta_hi);
  for (int i = 1; i < steps; ++i) {
    sum += integrand(i * h) * ((i % 2) ? 4.0 : 2.0);
  }
  return sum * h / 3.0;
}

} // namespace

double mp_quantile(double ratio, double p) {
  if (!(ratio > 0.0) || ratio > 1.0) {
    throw ValueError("mp_quantile: aspect ratio must be in (0, 1]");
  }
  if (!(p > 0.0) || !(p < 1.0)) throw ValueError("mp_quantile: p must be in (0, 1)");
  const double total = mp_cdf_theta(ratio, M_PI_2);
  double lo = 0.0, hi = M_PI_2;
  for (int iter = 0; iter < 60; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mp_cdf_theta(ratio, mid) / total < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double sq = std::sqrt(ratio);
  const double a = (1.0 - sq) * (1.0 - sq);
  const double b = (1.0 + sq) * (1.0 + sq);
  const double st = std::sin(0.5 * (lo + hi));
  return a + (b - a) * st * st;
}

double estimate_noise_sigma2(const Vector& variances, Index m, Index n) {
  const Index r = variances.size();
  if (r < 10) throw ValueError("estimate_noise_sigma2: need at least 10 components");
  if (m < 2 || n < 1) throw ValueError("estimate_noise_sigma2: bad dimensions");

  std::vector<double> tail;
  for (Index i = r / 2; i < r; ++i) tail.push_back(variances(i));
  std::sort(tail.begin(), tail.end());
  const std::size_t mid = tail.size() / 2;
  const double median = (tail.size() % 2) ? tail[mid] : 0.5 * (tail[mid - 1] + tail[mid]);

  const double ratio = static_cast<double>(n) / static_cast<double>(m);
  double factor;
  if (ratio <= 1.0) {
    factor = mp_quantile(ratio, 0.25);
  } else {
    // Wide matrices: the min(m,n) nonzero eigenvalues follow the dual law
    // scaled by (n-1)/(m-1) under the lambda = s^2/(m-1) convention.
    factor = mp_quantile(1.0 / ratio, 0.25) * static_cast<double>(n - 1) /
             static_cast<double>(m - 1);
  }
  return median / factor;
}

double gavish_donoho_threshold(double sigma2, Index m, Index n) {
  if (!(sigma2 > 0.0)) throw ValueError("gavish_donoho_threshold: sigma^2 must be positive");
  if (m < 1 || n < 1) throw ValueError("gavish_donoho_threshold: dimensions must be positive");
  const double beta = static_cast<double>(std::min(m, n)) / static_cast<double>(std::max(m, n));
  const double coeff2 =
      2.0 * (beta + 1.0) + 8.0 * beta / ((beta + 1.0) + std::sqrt(beta * beta + 14.0 * beta + 1.0));
  return coeff2 * sigma2; // 16/3 * sigma^2 at beta = 1
}

int gavish_donoho_cutoff(const Vector& variances, double sigma2, Index m, Index n) {
  const double threshold = gavish_donoho_threshold(sigma2, m, n);
  int k = 0;
  for (Index i = 0; i < variances.size(); ++i) {
    if (variances(i) >= threshold) ++k;
  }
  return k;
}

namespace {

double sample_std(const Vector& v) {
  const double mean = v.mean();
  const double var = (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
  return std::sqrt(var);
}

} // namespace

ScatterGrid scatter_grid(const Vector& t1, const Vector& t2, Index t) {
  if (t1.size() != t2.size()) throw DimensionError("scatter_grid: score lengths differ");
  if (t1.size() < 2) throw ValueError("scatter_grid: need at least 2 points");
  if (t < 2) throw ValueError("scatter_grid: grid size must be at least 2");
  const double s1 = sample_std(t1);
  const double s2 = sample_std(t2);
  if (!(s1 > 0.0) || !(s2 > 0.0)) throw ValueError("scatter_grid: zero-variance score");

  const Vector a = t1 / s1;
  const Vector b = t2 / s2;
  const double range = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());

  ScatterGrid grid;
  grid.t = t;
  grid.range = range;
  grid.cells = Eigen::MatrixX<std::int64_t>::Zero(t, t);
  const double scale = static_cast<double>(t) / (2.0 * range);
  auto bin_of = [&](double v) {
    const auto bin = static_cast<Index>(std::floor((v + range) * scale));
    return std::clamp<Index>(bin, 0, t - 1);
  };
  for (Index i = 0; i < a.size(); ++i) {
    ++grid.cells(bin_of(a(i)), bin_of(b(i)));
  }
  return grid;
}

double aniso_cov(const Vector& t1, const Vector& t2) {
  if (t1.size() != t2.size()) throw DimensionError("aniso_cov: score lengths differ");
  if (t1.size() < 1) throw ValueError("aniso_cov: empty scores");
  return t1.dot(t2) / static_cast<double>(t1.size());
}

std::optional<double> aniso_skew(const Vector& t1, const Vector& t2) {
  if (t1.size() != t2.size()) throw DimensionError("aniso_skew: score lengths differ");
  const auto m = static_cast<double>(t1.size());
  if (t1.size() < 2) throw ValueError("aniso_skew: need at least 2 points");
  const double cov = aniso_cov(t1, t2);
  if (std::abs(cov) < 1e-300) return std::nullopt;

  const double a3 = t1.array().cube().sum();
  const double b3 = t2.array().cube().sum();
  const double a2b = (t1.array().square() * t2.array()).sum();
  const double ab2 = (t1.array() * t2.array().square()).sum();
  const double numerator = a3 * a3 + 3.0 * a2b * a2b + 3.0 * ab2 * ab2 + b3 * b3;
  return numerator / (m * m * cov * cov * cov);
}

std::optional<double> aniso_purity(const ScatterGrid& grid) {
  const double trace = static_cast<double>(grid.cells.diagonal().sum());
  if (trace == 0.0) return std::nullopt;
  double sum = 0.0;
  for (Index l = 0; l < grid.t; ++l) {
    for (Index q = 0; q < grid.t; ++q) {
      const double s = static_cast<double>(grid.cells(l, q)) / trace;
      sum += s * s;
    }
  }
  return sum;
}

double aniso_hist(const Vector& t1, const Vector& t2, int p, int s) {
  if (t1.size() != t2.size()) throw DimensionError("aniso_hist: score lengths differ");
  if (t1.size() < 2) throw ValueError("aniso_hist: need at least 2 points");
  if (p < 2 || s < 2) throw ValueError("aniso_hist: need at least 2 projections and 2 bins");
  const double s1 = sample_std(t1);
  const double s2 = sample_std(t2);
  if (!(s1 > 0.0) || !(s2 > 0.0)) throw ValueError("aniso_hist: zero-variance score");

  const Vector a = t1 / s1;
  const Vector b = t2 / s2;
  const Index m = a.size();

  // Fixed histogram range at the 99.5th-percentile radius: the bulk of the
  // distribution carries the isotropy information, while a handful of
  // extreme pixels (single photons blown up by the weighting) would
  // otherwise mimic anisotropy deep in the noise domain. The cut is radial,
  // hence rotation-invariant, and the retained point count is the same for
  // every projection angle.
  Vector radius = (a.array().square() + b.array().square()).sqrt();
  std::vector<double> sorted(radius.data(), radius.data() + m);
  std::sort(sorted.begin(), sorted.end());
  const auto keep = static_cast<std::size_t>(
      std::min<double>(static_cast<double>(m) - 1, std::ceil(0.995 * static_cast<double>(m))));
  const double range = std::max(sorted[keep], 1e-12);

  Matrix hist = Matrix::Zero(p, s);
  const double scale = static_cast<double>(s) / (2.0 * range);
  for (int ip = 0; ip < p; ++ip) {
    const double phi = -M_PI_2 + M_PI * static_cast<double>(ip) / static_cast<double>(p);
    const double c = std::cos(phi);
    const double d = std::sin(phi);
    for (Index i = 0; i < m; ++i) {
      if (radius(i) > range) continue;
      const double u = a(i) * c + b(i) * d;
      const auto bin = std::clamp<Index>(static_cast<Index>(std::floor((u + range) * scale)),
                                         0, s - 1);
      hist(ip, bin) += 1.0;
    }
  }

  const Vector mean = hist.colwise().mean();
  double sum = 0.0;
  int included = 0;
  for (int l = 0; l < s; ++l) {
    if (mean(l) < 1.0) continue; // too few events for the Poisson-ratio argument
    ++included;
    for (int ip = 0; ip < p; ++ip) {
      const double d = hist(ip, l) - mean(l);
      sum += d * d / mean(l);
    }
  }
  if (included == 0) return 0.0;
  return sum / (static_cast<double>(p) * static_cast<double>(included)) - 1.0;
}

const char* aniso_criterion_name(AnisoCriterion c) {
  switch (c) {
    case AnisoCriterion::cov: return "cov";
    case AnisoCriterion::skew: return "skew";
    case AnisoCriterion::purity: return "purity";
    case AnisoCriterion::hist: return "hist";
  }
  return "?";
}

namespace {

double couple_value(const PcaModel& model, Index lower, const AnisoOptions& opts) {
  const Vector t1 = model.scores.col(lower - 1);
  const Vector t2 = model.scores.col(lower);
  switch (opts.criterion) {
    case AnisoCriterion::hist:
      return aniso_hist(t1, t2, opts.projections, opts.hist_bins);
    case AnisoCriterion::cov: {
      // Correlation-scaled so one threshold applies to every couple.
      const double s1 = sample_std(t1);
      const double s2 = sample_std(t2);
      if (!(s1 > 0.0) || !(s2 > 0.0)) throw ValueError("aniso cov: zero-variance score");
      return std::abs(aniso_cov(t1, t2)) / (s1 * s2);
    }
    case AnisoCriterion::skew: {
      const auto v = aniso_skew(t1, t2);
      return v ? std::abs(*v) : std::numeric_limits<double>::quiet_NaN();
    }
    case AnisoCriterion::purity: {
      const auto v = aniso_purity(scatter_grid(t1, t2, opts.grid_t));
      // Deviation from the ideal-dyad baseline of 1.
      return v ? std::abs(*v - 1.0) : std::numeric_limits<double>::quiet_NaN();
    }
  }
  throw ValueError("unknown anisotropy criterion");
}

} // namespace

AnisotropySeries compute_anisotropy_series(const PcaModel& model, const AnisoOptions& opts) {
  if (model.r < 2) throw ValueError("anisotropy series: need at least 2 components");
  AnisotropySeries series;
  series.criterion = opts.criterion;
  series.threshold = opts.threshold;
  Index n_couples = std::min<Index>(opts.max_scan, model.r - 1);
  // Components at the numerical-noise floor (exact low-rank data) carry no
  // scatter information; the scan ends before them.
  const double floor_variance = model.variances(0) * 1e-20;
  while (n_couples >= 1 && model.variances(n_couples) <= floor_variance) --n_couples;
  if (n_couples < 1) {
    throw ValueError("anisotropy series: fewer than 2 components above the numerical floor");
  }
  series.values.reserve(static_cast<std::size_t>(n_couples));
  for (Index i = 1; i <= n_couples; ++i) {
    series.values.push_back(couple_value(model, i, opts));
  }
  return series;
}

CutoffResult select_cutoff_anisotropy(const PcaModel& model, const AnisoOptions& opts) {
  if (opts.raw_nonzero_fraction && !opts.filtered && !opts.force &&
      (1.0 - *opts.raw_nonzero_fraction) > 0.5) {
    throw ValueError(
        "anisotropy selection refused: input is sparse (most matrix elements are zero) and "
        "was not filtered; apply binning/smoothing first or override with force");
  }

  CutoffResult result;
  result.series = compute_anisotropy_series(model, opts);
  const auto n_couples = static_cast<Index>(result.series.values.size());

  // Last couple index such that every couple from it onward stays below the
  // threshold; a NaN (flagged criterion value) never counts as isotropic.
  Index suffix_start = -1;
  for (Index i = n_couples; i >= 1; --i) {
    const double v = result.series.values[static_cast<std::size_t>(i - 1)];
    if (!(v < opts.threshold)) break;
    suffix_start = i;
  }
  if (suffix_start < 0) {
    throw ValueError("select_cutoff_anisotropy: no isotropic noise domain found within " +
                     std::to_string(n_couples) + " couples");
  }
  result.k = static_cast<int>(suffix_start) - 1;
  return result;
}

int scree_knee_hint(const Vector& variances) {
  const Index r = variances.size();
  if (r < 3) return static_cast<int>(r);
  double best = -std::numeric_limits<double>::infinity();
  Index best_i = 1;
  const double floor_value = std::max(variances.maxCoeff() * 1e-300, 1e-300);
  for (Index i = 1; i + 1 < r && i <= 40; ++i) {
    const double prev = std::log(std::max(variances(i - 1), floor_value));
    const double curr = std::log(std::max(variances(i), floor_value));
    const double next = std::log(std::max(variances(i + 1), floor_value));
    const double curvature = prev - 2.0 * curr + next;
    if (curvature > best) {
      best = curvature;
      best_i = i;
    }
  }
  return static_cast<int>(best_i); // components retained before the kink
}

TruncationReport build_truncation_report(const PcaModel& model, const AnisoOptions& opts,
                                         std::optional<double> sigma2_override) {
  TruncationReport report;
  report.sigma2_est = sigma2_override ? *sigma2_override
                                      : estimate_noise_sigma2(model.variances, model.m, model.n);
  report.k_gd = gavish_donoho_cutoff(model.variances, report.sigma2_est, model.m, model.n);

  const int knee = scree_knee_hint(model.variances);
  report.k_scree_lo = std::max(0, knee - 1);
  report.k_scree_hi = std::min(static_cast<int>(model.r), knee + 1);

  const CutoffResult aniso = select_cutoff_anisotropy(model, opts);
  report.k_aniso = aniso.k;
  report.series = aniso.series;
  return report;
}

std::string truncation_summary_text(const TruncationReport& report) {
  std::ostringstream out;
  out << "truncation methods\n";
  out << "  scree hint:     " << report.k_scree_lo << "-" << report.k_scree_hi
      << " (manual scree reading is the normative procedure)\n";
  out << "  gavish-donoho:  " << report.k_gd << " (sigma^2 = " << format_double(report.sigma2_est)
      << ")\n";
  out << "  anisotropy:     " << report.k_aniso << " ("
      << aniso_criterion_name(report.series.criterion)
      << ", threshold = " << format_double(report.series.threshold) << ")\n";
  if (report.nadler_flags) {
    int retrievable = 0;
    for (bool f : *report.nadler_flags) retrievable += f ? 1 : 0;
    out << "  retrievability: " << retrievable << " components pass the spiked-model bound\n";
  }
  return out.str();
}

std::string nadler_report_text(const Vector& lambda_true, double sigma2, Index m, Index n) {
  const double threshold = std::sqrt(static_cast<double>(n) / static_cast<double>(m));
  std::ostringstream out;
  out << "retrievability bound: lambda*/sigma^2 >= sqrt(n/m) = " << format_double(threshold)
      << "  (m = " << m << ", n = " << n << ", sigma^2 = " << format_double(sigma2) << ")\n";
  for (Index i = 0; i < lambda_true.size(); ++i) {
    const double ratio = lambda_true(i) / sigma2;
    const bool ok = nadler_retrievable(lambda_true(i), sigma2, m, n);
    out << "  component " << (i + 1) << ": lambda* = " << format_double(lambda_true(i))
        << ", ratio = " << format_double(ratio) << (ok ? "  retrievable" : "  -");
    if (!ok && ratio >= 0.8 * threshold) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "  (borderline: ratio %.3f vs threshold %.3f, at the limit of detectability)",
                    ratio, threshold);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

} // namespace specden
