#include <doctest.h>

#include <cstdlib>
#include <numeric>

#include "specden/errors.hpp"
#include "specden/phantom.hpp"
#include "specden/rng.hpp"

using namespace specden;

namespace {

Phase two_layer_a() { return Phase{"A", {{"Si", 1.0}}}; }
Phase two_layer_b() { return Phase{"B", {{"O", 1.0}}}; }

PhantomSpec tiny_two_layer(double smear) {
  PhantomSpec spec;
  spec.rows = 3;
  spec.cols = 4;
  spec.axis = {0.2, 0.02, 16};
  spec.layers = {{two_layer_a(), 0.5}, {two_layer_b(), 0.5}};
  spec.boundary_smear_px = smear;
  return spec;
}

} // namespace

TEST_CASE("phase composition must be positive and sum to one") {
  Phase bad{"bad", {{"Si", 0.5}, {"O", 0.4}}};
  CHECK_THROWS_AS(bad.validate(), ValueError);
  Phase good{"good", {{"Si", 0.5}, {"O", 0.5}}};
  CHECK_NOTHROW(good.validate());
  for (const Phase& p : builtin_phases()) CHECK_NOTHROW(p.validate());
  CHECK(builtin_phases().size() == 11);
}

TEST_CASE("phase maps: hard masks without smearing") {
  const auto maps = build_phase_maps(tiny_two_layer(0.0));
  REQUIRE(maps.size() == 2);
  for (Index r = 0; r < 3; ++r) {
    CHECK(maps[0](r, 0) == 1.0);
    CHECK(maps[0](r, 1) == 1.0);
    CHECK(maps[0](r, 2) == 0.0);
    CHECK(maps[0](r, 3) == 0.0);
    CHECK(maps[1](r, 2) == 1.0);
    CHECK(maps[1](r, 3) == 1.0);
  }
}

TEST_CASE("phase maps: per-pixel fractions sum to one after smearing") {
  PhantomSpec spec = PhantomSpec::desk_default();
  spec.rows = 24;
  spec.cols = 48;
  const auto maps = build_phase_maps(spec);
  REQUIRE(maps.size() == 11);
  Matrix total = Matrix::Zero(spec.rows, spec.cols);
  for (const auto& map : maps) total += map;
  CHECK((total.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("phase maps: equal-width stack keeps pure interiors under mild smearing") {
  PhantomSpec spec;
  spec.rows = 8;
  spec.cols = 121; // 11 px per layer
  spec.axis = {0.2, 0.02, 16};
  for (const Phase& p : builtin_phases()) {
    spec.layers.emplace_back(p, 1.0 / 11.0);
  }
  spec.boundary_smear_px = 1.0;
  const auto maps = build_phase_maps(spec);
  REQUIRE(maps.size() == 11);
  for (std::size_t l = 0; l < 11; ++l) {
    const Index center_col = static_cast<Index>(11 * l + 5);
    CHECK(maps[l](4, center_col) >= 0.99);
  }
}

TEST_CASE("phase spectrum is a unit-total non-negative vector for all phases") {
  const SpectrumModel model = SpectrumModel::defaults();
  const EnergyAxis axis{0.2, 0.02, 600};
  for (const Phase& p : builtin_phases()) {
    const Vector s = phase_spectrum(p, model, axis);
    CHECK(s.minCoeff() >= 0.0);
    CHECK(std::abs(s.sum() - 1.0) <= 1e-9);
  }
}

TEST_CASE("pure silicon peaks at its main line energy") {
  SpectrumModel model = SpectrumModel::defaults();
  model.background_coeff = 0.0;
  const EnergyAxis axis{0.2, 0.02, 600};
  const Vector s = phase_spectrum(builtin_phase("Si"), model, axis);
  Index argmax = 0;
  s.maxCoeff(&argmax);
  CHECK(argmax == axis.channel_of(1.740));
}

TEST_CASE("mixed-phase peak areas follow fraction times line weight") {
  // Two far-apart single-line elements, no background, no absorption: the
  // integrated peak areas must sit in the configured proportion.
  SpectrumModel model;
  model.lines["Si"] = {{1.740, 0.8}};
  model.lines["O"] = {{0.525, 0.6}};
  model.background_coeff = 0.0;
  model.absorption_scale = 0.0;
  const EnergyAxis axis{0.2, 0.005, 2400};
  const Phase sio_a = builtin_phase("SiO-A");
  const Vector s = phase_spectrum(sio_a, model, axis);

  auto window_sum = [&](double center) {
    const double sigma = model.fwhm_ev(center) / 2.3548 / 1000.0;
    double sum = 0.0;
    for (Index i = 0; i < axis.n_channels; ++i) {
      if (std::abs(axis.energy_of(i) - center) <= 8.0 * sigma) sum += s(i);
    }
    return sum;
  };
  const double ratio = window_sum(1.740) / window_sum(0.525);
  const double expected = (0.33 * 0.8) / (0.67 * 0.6);
  CHECK(ratio == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("a phase with no spectral content on the axis is rejected") {
  SpectrumModel model;
  model.lines["Si"] = {{20.0, 1.0}}; // outside the axis
  model.background_coeff = 0.0;
  const EnergyAxis axis{0.2, 0.02, 600};
  CHECK_THROWS_AS(phase_spectrum(builtin_phase("Si"), model, axis), ValueError);
}

TEST_CASE("synthesize hits the dose scaling contract") {
  PhantomSpec spec = tiny_two_layer(1.0);
  spec.rows = 16;
  spec.cols = 16;
  spec.reference_total = 5000.0;
  const SpectrumModel model = SpectrumModel::defaults();

  SpectrumImage d1 = synthesize(spec, model);
  CHECK(d1.total_counts() == doctest::Approx(5000.0).epsilon(1e-12));

  spec.dose = 2.0;
  SpectrumImage d2 = synthesize(spec, model);
  REQUIRE(d2.counts.size() == d1.counts.size());
  for (std::size_t i = 0; i < d1.counts.size(); ++i) {
    CHECK(d2.counts[i] == doctest::Approx(2.0 * d1.counts[i]).epsilon(1e-12));
  }
}

TEST_CASE("a uniform single-phase object has identical pixel spectra") {
  PhantomSpec spec;
  spec.rows = 5;
  spec.cols = 7;
  spec.axis = {0.2, 0.02, 64};
  spec.layers = {{builtin_phase("SiN"), 1.0}};
  spec.boundary_smear_px = 2.0;
  const SpectrumImage cube = synthesize(spec, SpectrumModel::defaults());
  for (Index r = 0; r < spec.rows; ++r) {
    for (Index c = 0; c < spec.cols; ++c) {
      for (Index ch = 0; ch < 64; ++ch) {
        CHECK(cube.at(r, c, ch) == doctest::Approx(cube.at(0, 0, ch)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("poisson sampling: zeros stay zero, large means stay within 5 sigma") {
  SpectrumImage zeros = SpectrumImage::zeros(4, 4, {0.0, 1.0, 8});
  SpectrumImage sampled = add_poisson(zeros, 9);
  CHECK(sampled.total_counts() == 0.0);

  SpectrumImage big = SpectrumImage::zeros(1, 1, {0.0, 1.0, 1});
  big.at(0, 0, 0) = 1e6;
  const double x = add_poisson(big, 1234).at(0, 0, 0);
  CHECK(std::abs(x - 1e6) <= 5e3);
  CHECK(x == std::floor(x));

  SpectrumImage negative = zeros;
  negative.at(0, 0, 0) = -1.0;
  CHECK_THROWS_AS(add_poisson(negative, 1), ValueError);
}

TEST_CASE("poisson sampling: per-channel variance matches the mean") {
  const EnergyAxis axis{0.0, 1.0, 3};
  SpectrumImage cube = SpectrumImage::zeros(60, 60, axis);
  const double means[3] = {150.0, 400.0, 2500.0};
  for (Index r = 0; r < 60; ++r) {
    for (Index c = 0; c < 60; ++c) {
      for (Index ch = 0; ch < 3; ++ch) cube.at(r, c, ch) = means[ch];
    }
  }
  SpectrumImage noisy = add_poisson(cube, 77);
  for (Index ch = 0; ch < 3; ++ch) {
    double sum = 0.0, sum2 = 0.0;
    for (Index r = 0; r < 60; ++r) {
      for (Index c = 0; c < 60; ++c) {
        const double d = noisy.at(r, c, ch) - means[ch];
        sum += d;
        sum2 += d * d;
      }
    }
    const double variance = sum2 / 3600.0 - (sum / 3600.0) * (sum / 3600.0);
    CHECK(variance == doctest::Approx(means[ch]).epsilon(0.10));
  }
}

TEST_CASE("poisson sampling is independent of the worker count") {
  SpectrumImage cube = SpectrumImage::zeros(8, 8, {0.0, 1.0, 5});
  RandomStream stream(5);
  for (double& v : cube.counts) v = stream.next_unit() * 30.0;

  setenv("SPECDEN_THREADS", "1", 1);
  SpectrumImage serial = add_poisson(cube, 42);
  setenv("SPECDEN_THREADS", "3", 1);
  SpectrumImage threaded = add_poisson(cube, 42);
  unsetenv("SPECDEN_THREADS");
  CHECK(serial.counts == threaded.counts);

  CHECK(add_poisson(cube, 42).counts == serial.counts);
  CHECK(add_poisson(cube, 43).counts != serial.counts);
}

TEST_CASE("poisson replicate means converge to the expectation") {
  SpectrumImage cube = SpectrumImage::zeros(4, 4, {0.0, 1.0, 3});
  RandomStream stream(6);
  for (double& v : cube.counts) v = 1.0 + stream.next_unit() * 6.0;

  const int reps = 300;
  std::vector<double> accum(cube.counts.size(), 0.0);
  for (int rep = 0; rep < reps; ++rep) {
    const SpectrumImage s = add_poisson(cube, 1000 + rep);
    for (std::size_t i = 0; i < accum.size(); ++i) accum[i] += s.counts[i];
  }
  double z2 = 0.0, zsum = 0.0;
  for (std::size_t i = 0; i < accum.size(); ++i) {
    const double mean = accum[i] / reps;
    const double z = (mean - cube.counts[i]) / std::sqrt(cube.counts[i] / reps);
    z2 += z * z;
    zsum += z;
  }
  const auto cells = static_cast<double>(accum.size());
  CHECK(std::abs(zsum / std::sqrt(cells)) < 3.0);      // aggregate bias at 3 sigma
  CHECK(z2 / cells == doctest::Approx(1.0).epsilon(0.5)); // per-cell scatter is Poisson-scaled
}

TEST_CASE("two-phase object: endpoints are the pure spectra, middle is their mean") {
  const TwinPair twins = two_phase_object(1.0, 3, 20, 101);
  const SpectrumImage& truth = twins.noise_free;
  const EnergyAxis axis = truth.axis;
  CHECK(axis.n_channels == 300);

  const SpectrumModel model = two_phase_model();
  const Vector si = phase_spectrum(builtin_phase("Si"), model, axis);
  const Phase sio2{"SiO2", {{"Si", 1.0 / 3.0}, {"O", 2.0 / 3.0}}};
  const Vector sio2_spec = phase_spectrum(sio2, model, axis);

  Vector left(300), right(300), middle(300);
  for (Index ch = 0; ch < 300; ++ch) {
    left(ch) = truth.at(10, 0, ch);
    right(ch) = truth.at(10, 100, ch);
    middle(ch) = truth.at(10, 50, ch);
  }
  CHECK(((left / left.sum()) - si).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(((right / right.sum()) - sio2_spec).cwiseAbs().maxCoeff() < 1e-9);
  const Vector mean_ends = 0.5 * (left + right);
  CHECK(((middle - mean_ends).cwiseAbs().maxCoeff()) <= 1e-9 * mean_ends.maxCoeff());
}

TEST_CASE("two-phase dose series doubles the noise-free totals exactly") {
  double previous = 0.0;
  for (double dose : {0.5, 1.0, 2.0, 4.0}) {
    const SpectrumImage truth = two_phase_expectation(dose, 16, 16, 4000.0);
    const double total = truth.total_counts();
    if (previous > 0.0) CHECK(total == doctest::Approx(2.0 * previous).epsilon(1e-9));
    previous = total;
  }
}

TEST_CASE("twins share the expectation: noisy total within 5 sigma") {
  PhantomSpec spec = PhantomSpec::desk_default();
  spec.rows = 32;
  spec.cols = 32;
  spec.reference_total = 20000.0;
  const TwinPair twins = make_twins(spec, SpectrumModel::defaults());
  const double truth_total = twins.noise_free.total_counts();
  CHECK(std::abs(twins.noisy.total_counts() - truth_total) <= 5.0 * std::sqrt(truth_total));
  for (double v : twins.noisy.counts) CHECK(v == std::floor(v));
}

TEST_CASE("default phantom phases give distinct spectra") {
  const SpectrumModel model = SpectrumModel::defaults();
  const EnergyAxis axis{0.2, 0.02, 600};
  std::vector<Vector> spectra;
  for (const Phase& p : builtin_phases()) spectra.push_back(phase_spectrum(p, model, axis));
  for (std::size_t a = 0; a < spectra.size(); ++a) {
    for (std::size_t b = a + 1; b < spectra.size(); ++b) {
      const double cosine =
          spectra[a].dot(spectra[b]) / (spectra[a].norm() * spectra[b].norm());
      CHECK(1.0 - cosine > 1e-8); // pairwise cosine distance strictly positive
    }
  }
}

TEST_CASE("phantom spec text round-trips through the parser") {
  PhantomSpec spec = PhantomSpec::desk_default();
  spec.dose = 2.5;
  spec.seed = 99;
  const std::string text = spec.normalized_text();
  std::istringstream in(text);
  const PhantomSpec parsed = PhantomSpec::parse(in);
  CHECK(parsed.normalized_text() == text);

  std::istringstream custom(
      "grid = 4 6\nchannels = 32\noffset_kev = 0.2\ndispersion_kev = 0.05\n"
      "phase X = Si:0.25,O:0.75\nlayers = X,Si\nwidths = 0.5,0.5\n"
      "smear = 0\ndose = 1\nseed = 7\nreference_total = 100\n");
  const PhantomSpec custom_spec = PhantomSpec::parse(custom);
  CHECK(custom_spec.layers[0].first.composition[1].second == doctest::Approx(0.75));

  std::istringstream bad("layers = Si\nwidths = 0.5,0.5\n");
  CHECK_THROWS_AS(PhantomSpec::parse(bad), FormatError);
  std::istringstream unknown("bogus_key = 1\nlayers = Si\nwidths = 1\n");
  CHECK_THROWS_AS(PhantomSpec::parse(unknown), FormatError);
}
