#include <doctest.h>

#include <algorithm>

#include "specden/errors.hpp"
#include "specden/pipeline.hpp"
#include "specden/rng.hpp"
#include "specden/truncation.hpp"

using namespace specden;

namespace {

// True component variances and noise level of the reference retrievability
// fixture (spiked-model check, m = 19920 pixels, n = 1200 channels).
const double kFixtureLambda[] = {1214.0, 906.4,   482.2,   422.8,   214.6,  40.05,
                                 6.571,  0.5804, 0.04119, 5.13e-6, 1.63e-6};
constexpr double kFixtureSigma2 = 28.07;
constexpr Index kFixtureM = 19920;
constexpr Index kFixtureN = 1200;

Vector gaussian_couple(Index m, std::uint64_t seed) {
  RandomStream stream(seed);
  Vector v(m);
  for (Index i = 0; i < m; ++i) v(i) = stream.next_normal();
  return v;
}

} // namespace

TEST_CASE("retrievability bound on the reference fixture") {
  for (int i = 0; i < 6; ++i) {
    CHECK(nadler_retrievable(kFixtureLambda[i], kFixtureSigma2, kFixtureM, kFixtureN));
  }
  // component 7 sits just below the bound (ratio 0.234 vs threshold 0.245)
  CHECK_FALSE(nadler_retrievable(kFixtureLambda[6], kFixtureSigma2, kFixtureM, kFixtureN));
  for (int i = 7; i < 11; ++i) {
    CHECK_FALSE(nadler_retrievable(kFixtureLambda[i], kFixtureSigma2, kFixtureM, kFixtureN));
  }
}

TEST_CASE("retrievability boundary is inclusive") {
  const Index m = 5000, n = 800;
  const double sigma2 = 3.0;
  const double boundary = sigma2 * std::sqrt(static_cast<double>(n) / m);
  CHECK(nadler_retrievable(boundary, sigma2, m, n));
  CHECK_FALSE(nadler_retrievable(boundary * (1.0 - 1e-12), sigma2, m, n));
  CHECK_THROWS_AS(nadler_retrievable(1.0, 0.0, m, n), ValueError);
}

TEST_CASE("retrievability report marks the borderline component") {
  Vector lambda(11);
  for (int i = 0; i < 11; ++i) lambda(i) = kFixtureLambda[i];
  const std::string text = nadler_report_text(lambda, kFixtureSigma2, kFixtureM, kFixtureN);
  CHECK(text.find("component 7") != std::string::npos);
  CHECK(text.find("borderline: ratio 0.234 vs threshold 0.245") != std::string::npos);
  // only component 7 is borderline
  CHECK(text.find("borderline") == text.rfind("borderline"));
}

TEST_CASE("marchenko-pastur quantile matches empirical noise eigenvalues") {
  const Index m = 2000, n = 400;
  Matrix noise(m, n);
  RandomStream stream(31);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) noise(i, j) = stream.next_normal();
  const PcaModel model = pca_decompose(center(noise).centered);
  std::vector<double> lambdas(model.variances.data(), model.variances.data() + n);
  std::sort(lambdas.begin(), lambdas.end());
  const double q25_empirical = lambdas[static_cast<std::size_t>(0.25 * n)];
  const double q25 = mp_quantile(static_cast<double>(n) / m, 0.25);
  CHECK(q25 == doctest::Approx(q25_empirical).epsilon(0.03));
  const double q75 = mp_quantile(static_cast<double>(n) / m, 0.75);
  CHECK(q75 == doctest::Approx(lambdas[static_cast<std::size_t>(0.75 * n)]).epsilon(0.03));
  CHECK(q25 < q75);
  CHECK_THROWS_AS(mp_quantile(1.5, 0.5), ValueError);
  CHECK_THROWS_AS(mp_quantile(0.5, 1.0), ValueError);
}

TEST_CASE("noise level estimate recovers unit variance on pure noise") {
  const Index m = 2000, n = 400;
  Matrix noise(m, n);
  RandomStream stream(32);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) noise(i, j) = stream.next_normal();
  const PcaModel model = pca_decompose(center(noise).centered);
  const double estimate = estimate_noise_sigma2(model.variances, m, n);
  CHECK(estimate >= 0.9);
  CHECK(estimate <= 1.1);
}

TEST_CASE("noise level estimate is tiny for a near-noiseless low-rank matrix") {
  RandomStream stream(33);
  Matrix d = Matrix::Zero(300, 60);
  for (int comp = 0; comp < 5; ++comp) {
    Vector u(300), v(60);
    for (Index i = 0; i < 300; ++i) u(i) = stream.next_normal();
    for (Index j = 0; j < 60; ++j) v(j) = stream.next_normal();
    d += (u * v.transpose()) * std::pow(2.0, -comp);
  }
  for (Index i = 0; i < d.size(); ++i) d(i / 60, i % 60) += 1e-9 * stream.next_normal();
  const PcaModel model = pca_decompose(center(d).centered);
  CHECK(estimate_noise_sigma2(model.variances, 300, 60) <= 1e-6 * model.variances(0));

  Vector too_short(5);
  too_short << 5, 4, 3, 2, 1;
  CHECK_THROWS_AS(estimate_noise_sigma2(too_short, 100, 5), ValueError);
}

TEST_CASE("noise level estimate tracks the twin measurement on binned data") {
  // Binning keeps the noise uncorrelated across pixels, so the spectral
  // estimator and the twin-residual measurement agree. (Gaussian smoothing
  // correlates pixels and breaks the estimator's bulk model; the pipeline
  // therefore prefers the twin measurement when truth is available.)
  PhantomSpec spec = PhantomSpec::desk_default();
  spec.rows = 64;
  spec.cols = 80;
  spec.dose = 16.0;
  spec.seed = 13;
  const TwinPair twins = make_twins(spec, SpectrumModel::defaults());
  PreprocessOptions opts;
  opts.gauss_sigma = 0.0; // bin-only filtering
  const PreprocessedData pre = preprocess_image(twins.noisy, opts);
  const PcaModel model = decompose_preprocessed(pre);
  Matrix truth_filtered;
  preprocess_twin_with(pre, twins.noise_free, opts, &truth_filtered);
  const double measured =
      weighted_residual_variance(pre.filtered_matrix, truth_filtered, pre.weights).global;
  const double estimated = estimate_noise_sigma2(model.variances, model.m, model.n);
  CHECK(estimated == doctest::Approx(measured).epsilon(0.2));
}

TEST_CASE("optimal hard threshold hits the square anchor") {
  const double sigma2 = 2.5;
  CHECK(gavish_donoho_threshold(sigma2, 777, 777) ==
        doctest::Approx(16.0 / 3.0 * sigma2).epsilon(1e-6));

  Vector lambdas(3);
  lambdas << 6.0 * sigma2, 5.0 * sigma2, sigma2;
  CHECK(gavish_donoho_cutoff(lambdas, sigma2, 777, 777) == 1);

  Vector low(3);
  low << 1.0, 0.5, 0.1;
  CHECK(gavish_donoho_cutoff(low, sigma2, 777, 777) == 0);
}

TEST_CASE("optimal hard threshold cutoff is non-increasing in the noise level") {
  RandomStream stream(34);
  Vector lambdas(40);
  for (Index i = 0; i < 40; ++i) lambdas(i) = std::exp(4.0 - 0.2 * static_cast<double>(i));
  int previous = 41;
  for (double sigma2 : {0.1, 0.3, 1.0, 3.0, 10.0}) {
    const int k = gavish_donoho_cutoff(lambdas, sigma2, 3000, 600);
    CHECK(k <= previous);
    previous = k;
  }
}

TEST_CASE("scatter grid: point placement and totals") {
  Vector t1(4), t2(4);
  t1 << 1, 1, -1, -1;
  t2 << 1, -1, 1, -1;
  const ScatterGrid grid = scatter_grid(t1, t2, 2);
  CHECK(grid.cells.sum() == 4);
  CHECK(grid.cells(0, 0) == 1);
  CHECK(grid.cells(0, 1) == 1);
  CHECK(grid.cells(1, 0) == 1);
  CHECK(grid.cells(1, 1) == 1);

  Vector constant = Vector::Ones(5);
  CHECK_THROWS_AS(scatter_grid(constant, constant, 8), ValueError);
}

TEST_CASE("scatter grid marginals match gaussian expectations") {
  const Index m = 100000;
  const Vector a = gaussian_couple(m, 41);
  const Vector b = gaussian_couple(m, 42);
  const ScatterGrid grid = scatter_grid(a, b, 64);
  CHECK(grid.cells.sum() == m);

  // chi-square of the T1 marginal against the normal CDF over the grid bins
  const double width = 2.0 * grid.range / 64.0;
  auto normal_cdf = [](double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); };
  double chi2 = 0.0;
  int dof = 0;
  for (Index l = 0; l < 64; ++l) {
    const double lo = -grid.range + static_cast<double>(l) * width;
    const double expected = (normal_cdf(lo + width) - normal_cdf(lo)) * static_cast<double>(m);
    if (expected < 5.0) continue;
    const double observed = static_cast<double>(grid.cells.row(l).sum());
    chi2 += (observed - expected) * (observed - expected) / expected;
    ++dof;
  }
  // 1% critical value for dof ~ 40-50 bins
  CHECK(chi2 < dof + 2.33 * std::sqrt(2.0 * dof) + 10.0);
}

TEST_CASE("pair covariance basics and the independence bound") {
  const Index m = 10000;
  const Vector a = gaussian_couple(m, 43);
  const Vector b = gaussian_couple(m, 44);
  CHECK(aniso_cov(a, a) == doctest::Approx(a.squaredNorm() / m));
  CHECK(std::abs(aniso_cov(a, b)) <= 5.0 / std::sqrt(static_cast<double>(m)));

  Vector c(2), d(2);
  c << 1, -1;
  d << 1, 1; // exactly orthogonal
  CHECK(aniso_cov(c, d) == doctest::Approx(0.0));
}

TEST_CASE("bivariate skewness: expansion matches the direct double sum") {
  const Index m = 60;
  Vector a = gaussian_couple(m, 45);
  Vector b = gaussian_couple(m, 46);
  b += 0.5 * a; // give the couple a nonzero covariance

  const double cov = aniso_cov(a, b);
  double direct = 0.0;
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < m; ++j) {
      const double term = (a(i) * a(j) + b(i) * b(j)) / cov;
      direct += term * term * term;
    }
  }
  direct /= static_cast<double>(m) * static_cast<double>(m);
  const auto fast = aniso_skew(a, b);
  REQUIRE(fast.has_value());
  CHECK(*fast == doctest::Approx(direct).epsilon(1e-10));
}

TEST_CASE("bivariate skewness symmetries and guard") {
  const Index m = 500;
  Vector a = gaussian_couple(m, 47);
  Vector b = gaussian_couple(m, 48);
  b += 0.3 * a;
  const auto base = aniso_skew(a, b);
  REQUIRE(base.has_value());

  // mirror symmetry: negating both scores leaves the value unchanged
  const auto mirrored = aniso_skew(Vector(-a), Vector(-b));
  REQUIRE(mirrored.has_value());
  CHECK(*mirrored == doctest::Approx(*base).epsilon(1e-12));

  // duplicating the dataset leaves the value unchanged
  Vector a2(2 * m), b2(2 * m);
  a2 << a, a;
  b2 << b, b;
  const auto doubled = aniso_skew(a2, b2);
  REQUIRE(doubled.has_value());
  CHECK(*doubled == doctest::Approx(*base).epsilon(1e-10));

  // vanishing covariance is flagged, not divided by
  Vector c(4), d(4);
  c << 1, 1, -1, -1;
  d << 1, -1, 1, -1;
  CHECK_FALSE(aniso_skew(c, d).has_value());
}

TEST_CASE("grid purity: dyad baseline and flags") {
  ScatterGrid one_cell;
  one_cell.t = 4;
  one_cell.cells = Eigen::MatrixX<std::int64_t>::Zero(4, 4);
  one_cell.cells(2, 2) = 31;
  auto v = aniso_purity(one_cell);
  REQUIRE(v.has_value());
  CHECK(*v == doctest::Approx(1.0));

  ScatterGrid uniform;
  uniform.t = 2;
  uniform.cells = Eigen::MatrixX<std::int64_t>::Constant(2, 2, 7);
  v = aniso_purity(uniform);
  REQUIRE(v.has_value());
  CHECK(*v == doctest::Approx(1.0));

  ScatterGrid off_diagonal;
  off_diagonal.t = 2;
  off_diagonal.cells = Eigen::MatrixX<std::int64_t>::Zero(2, 2);
  off_diagonal.cells(0, 1) = 5;
  CHECK_FALSE(aniso_purity(off_diagonal).has_value());
}

TEST_CASE("projected histograms: calibration on isotropic and anisotropic inputs") {
  const Index m = 100000;
  const Vector a = gaussian_couple(m, 49);
  const Vector b = gaussian_couple(m, 50);
  CHECK(std::abs(aniso_hist(a, b)) < 0.5);

  RandomStream stream(51);
  Vector line_a(m), line_b(m);
  for (Index i = 0; i < m; ++i) {
    line_a(i) = (i % 2 ? 1.0 : -1.0) + 0.05 * stream.next_normal();
    line_b(i) = 0.1 * stream.next_normal();
  }
  CHECK(aniso_hist(line_a, line_b) > 0.5);

  Vector flat = Vector::Zero(10);
  CHECK_THROWS_AS(aniso_hist(flat, flat), ValueError);
}

TEST_CASE("projected histograms are permutation and rotation tolerant") {
  const Index m = 20000;
  const Vector a = gaussian_couple(m, 52);
  const Vector b = gaussian_couple(m, 53);

  // permutation invariance is exact: the statistic sees only the point set
  Vector pa(m), pb(m);
  for (Index i = 0; i < m; ++i) {
    pa(i) = a(m - 1 - i);
    pb(i) = b(m - 1 - i);
  }
  CHECK(aniso_hist(pa, pb) == aniso_hist(a, b));

  // swapping the two scores is a 90-degree rotation
  const double swapped = aniso_hist(b, a, 64);
  const double base64 = aniso_hist(a, b, 64);
  CHECK(std::abs(swapped - base64) <= 0.2 * std::max(std::abs(base64), 0.25));

  // a global rotation changes the value only within angle-sampling noise
  const double angle = 0.41;
  const Vector ra = std::cos(angle) * a + std::sin(angle) * b;
  const Vector rb = -std::sin(angle) * a + std::cos(angle) * b;
  const double rotated = aniso_hist(ra, rb, 64);
  CHECK(std::abs(rotated - base64) <= 0.2 * std::max(std::abs(base64), 0.25));
}

TEST_CASE("cutoff selection: pure noise truncates everything") {
  const Index m = 4000, n = 30;
  Matrix noise(m, n);
  RandomStream stream(54);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) noise(i, j) = stream.next_normal();
  const PcaModel model = pca_decompose(center(noise).centered);
  const CutoffResult cut = select_cutoff_anisotropy(model);
  CHECK(cut.k == 0);
}

TEST_CASE("cutoff selection: a rank-2 spike is found exactly") {
  const Index m = 10000, n = 40;
  RandomStream stream(55);
  Matrix d(m, n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) d(i, j) = stream.next_normal();
  // two strong factors with bimodal spatial amplitudes
  Vector u1(m), u2(m), v1 = Vector::Zero(n), v2 = Vector::Zero(n);
  for (Index i = 0; i < m; ++i) {
    u1(i) = (stream.next_unit() < 0.5 ? 1.0 : -1.0) * (1.0 + 0.1 * stream.next_normal());
    u2(i) = (stream.next_unit() < 0.3 ? 2.0 : -0.5) * (1.0 + 0.1 * stream.next_normal());
  }
  v1.head(8).setConstant(3.0);
  v2.segment(10, 8).setConstant(2.5);
  d += u1 * v1.transpose() + u2 * v2.transpose();

  const PcaModel model = pca_decompose(center(d).centered);
  const CutoffResult cut = select_cutoff_anisotropy(model);
  CHECK(cut.k == 2);
  CHECK(cut.series.values[0] >= cut.series.threshold);
  CHECK(cut.series.values[1] >= cut.series.threshold);
  for (std::size_t i = 2; i < cut.series.values.size(); ++i) {
    CHECK(cut.series.values[i] < cut.series.threshold);
  }
}

TEST_CASE("cutoff selection refuses sparse unfiltered input unless forced") {
  const Index m = 3000, n = 25;
  Matrix noise(m, n);
  RandomStream stream(56);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) noise(i, j) = stream.next_normal();
  const PcaModel model = pca_decompose(center(noise).centered);

  AnisoOptions opts;
  opts.raw_nonzero_fraction = 0.01; // almost everything zero before filtering
  opts.filtered = false;
  CHECK_THROWS_AS(select_cutoff_anisotropy(model, opts), ValueError);

  opts.force = true;
  CHECK_NOTHROW(select_cutoff_anisotropy(model, opts));
  opts.force = false;
  opts.filtered = true;
  CHECK_NOTHROW(select_cutoff_anisotropy(model, opts));
}

TEST_CASE("cutoff selection reports a missing noise domain") {
  // A staircase of strong factors: every scanned couple stays anisotropic.
  const Index m = 5000, n = 12;
  RandomStream stream(57);
  Matrix d(m, n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) d(i, j) = 0.01 * stream.next_normal();
  for (Index comp = 0; comp < 6; ++comp) {
    Vector u(m), v = Vector::Zero(n);
    for (Index i = 0; i < m; ++i) u(i) = (stream.next_unit() < 0.5 ? 1.0 : -1.0);
    v(2 * comp) = 10.0 * std::pow(1.5, -static_cast<double>(comp));
    d += u * v.transpose();
  }
  const PcaModel model = pca_decompose(center(d).centered);
  AnisoOptions opts;
  opts.max_scan = 4;
  CHECK_THROWS_AS(select_cutoff_anisotropy(model, opts), ValueError);
}

TEST_CASE("scree knee hint finds the cliff") {
  Vector lambdas(8);
  lambdas << 100.0, 90.0, 1.0, 0.9, 0.8, 0.7, 0.6, 0.5;
  CHECK(scree_knee_hint(lambdas) == 2);
}

TEST_CASE("truncation report compares the methods on a spiked matrix") {
  const Index m = 6000, n = 50;
  RandomStream stream(58);
  Matrix d(m, n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) d(i, j) = stream.next_normal();
  for (Index comp = 0; comp < 3; ++comp) {
    Vector u(m), v = Vector::Zero(n);
    for (Index i = 0; i < m; ++i) u(i) = (stream.next_unit() < 0.5 ? 1.0 : -1.0);
    v.segment(5 * comp, 5).setConstant(4.0 - static_cast<double>(comp));
    d += u * v.transpose();
  }
  const PcaModel model = pca_decompose(center(d).centered);
  const TruncationReport report = build_truncation_report(model, {});
  CHECK(report.k_aniso == 3);
  CHECK(report.k_gd >= 3);
  CHECK(report.sigma2_est == doctest::Approx(1.0).epsilon(0.15));
  const std::string text = truncation_summary_text(report);
  CHECK(text.find("anisotropy") != std::string::npos);
  CHECK(text.find("gavish-donoho") != std::string::npos);
  CHECK(text.find("scree hint") != std::string::npos);
}
