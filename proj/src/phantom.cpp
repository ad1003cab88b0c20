#include "specden/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "specden/container_io.hpp"
#include "specden/errors.hpp"
#include "specden/parallel.hpp"
#include "specden/rng.hpp"

namespace specden {

namespace {

constexpr double kFwhmToSigma = 1.0 / 2.3548200450309493; // FWHM = 2 sqrt(2 ln 2) sigma

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }

} // namespace

void Phase::validate() const {
  if (name.empty()) throw ValueError("phase: name must not be empty");
  if (composition.empty()) throw ValueError("phase '" + name + "': empty composition");
  double sum = 0.0;
  for (const auto& [element, fraction] : composition) {
    if (element.empty()) throw ValueError("phase '" + name + "': empty element symbol");
    if (!(fraction > 0.0)) {
      throw ValueError("phase '" + name + "': atomic fractions must be positive");
    }
    sum += fraction;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValueError("phase '" + name + "': atomic fractions must sum to 1");
  }
}

double SpectrumModel::fwhm_ev(double energy_kev) const {
  const double sq =
      fwhm_ref_ev * fwhm_ref_ev + fwhm_slope_ev * (energy_kev - e_ref_kev) * 1000.0;
  return sq > 0.0 ? std::sqrt(sq) : 0.0;
}

double SpectrumModel::absorption_factor(double tau, double energy_kev) const {
  if (absorption_scale <= 0.0 || tau <= 0.0) return 1.0;
  const double a = absorption_ref_kev / (energy_kev + absorption_floor_kev);
  return std::exp(-tau * absorption_scale * a * a);
}

SpectrumModel SpectrumModel::defaults() {
  SpectrumModel m;
  m.lines["Si"] = {{1.740, 1.00}, {1.836, 0.02}};
  m.lines["O"] = {{0.525, 0.50}};
  m.lines["N"] = {{0.392, 0.50}};
  m.lines["Al"] = {{1.487, 0.90}, {1.557, 0.012}};
  m.lines["Ti"] = {{4.511, 1.00}, {4.932, 0.13}, {0.452, 0.45}};
  m.lines["Hf"] = {{7.899, 0.75}, {9.023, 0.41}, {9.347, 0.15},
                   {10.516, 0.09}, {6.960, 0.05}, {1.645, 0.38}};
  m.lines["Ta"] = {{8.146, 1.20}, {9.343, 0.66}, {9.652, 0.25},
                   {10.895, 0.14}, {7.173, 0.07}, {1.710, 0.62}};
  m.absorption = {{"O", 0.30}, {"N", 0.25}, {"Si", 0.50}, {"Al", 0.45},
                  {"Ti", 1.00}, {"Hf", 2.40}, {"Ta", 2.50}};
  return m;
}

const std::vector<Phase>& builtin_phases() {
  static const std::vector<Phase> phases = {
      {"Si", {{"Si", 1.0}}},
      {"SiO-A", {{"Si", 0.33}, {"O", 0.67}}},
      {"SiO-B", {{"Si", 0.29}, {"O", 0.57}, {"N", 0.14}}},
      {"HfO", {{"Hf", 0.33}, {"O", 0.67}}},
      {"TiN-A", {{"Ti", 0.50}, {"N", 0.50}}},
      {"TiN-B", {{"Ti", 0.50}, {"N", 0.40}, {"O", 0.10}}},
      {"TiN-C", {{"Ti", 0.45}, {"N", 0.45}, {"Al", 0.10}}},
      {"TaN", {{"Ta", 0.50}, {"N", 0.50}}},
      {"Al", {{"Al", 0.80}, {"Ti", 0.20}}},
      {"AlO", {{"Al", 0.40}, {"O", 0.60}}},
      {"SiN", {{"Si", 0.43}, {"N", 0.57}}},
  };
  return phases;
}

const Phase& builtin_phase(const std::string& name) {
  for (const Phase& p : builtin_phases()) {
    if (p.name == name) return p;
  }
  throw ValueError("unknown phase: " + name);
}

void PhantomSpec::validate() const {
  axis.validate();
  if (rows < 1 || cols < 1) throw ValueError("phantom: grid dimensions must be positive");
  if (layers.empty()) throw ValueError("phantom: need at least one layer");
  double width_sum = 0.0;
  for (const auto& [phase, width] : layers) {
    phase.validate();
    if (!(width > 0.0)) throw ValueError("phantom: layer widths must be positive");
    width_sum += width;
  }
  if (std::abs(width_sum - 1.0) > 1e-9) {
    throw ValueError("phantom: layer width fractions must sum to 1");
  }
  if (!(dose > 0.0)) throw ValueError("phantom: dose must be positive");
  if (boundary_smear_px < 0.0) throw ValueError("phantom: smear must be non-negative");
  if (!(reference_total > 0.0)) throw ValueError("phantom: reference_total must be positive");
}

PhantomSpec PhantomSpec::desk_default() {
  PhantomSpec spec;
  spec.rows = 96;
  spec.cols = 128;
  spec.axis = {0.2, 0.02, 600};
  static const std::vector<std::pair<const char*, double>> stack = {
      {"Si", 0.30},     {"SiO-A", 0.10}, {"SiO-B", 0.06},  {"HfO", 0.025},
      {"TiN-A", 0.065}, {"TiN-B", 0.03}, {"TiN-C", 0.025}, {"TaN", 0.075},
      {"Al", 0.15},     {"AlO", 0.06},   {"SiN", 0.11},
  };
  for (const auto& [name, width] : stack) {
    spec.layers.emplace_back(builtin_phase(name), width);
  }
  spec.boundary_smear_px = 1.0;
  spec.dose = 1.0;
  spec.seed = 1;
  spec.reference_total = 20000.0;
  return spec;
}

PhantomSpec PhantomSpec::full_default() {
  PhantomSpec spec = desk_default();
  spec.rows = 244;
  spec.cols = 336;
  spec.axis = {0.2, 0.01, 1200};
  spec.reference_total = 130000.0;
  return spec;
}

std::string PhantomSpec::normalized_text() const {
  std::ostringstream out;
  out << "format = phantom-spec-1\n";
  out << "grid = " << rows << ' ' << cols << '\n';
  out << "channels = " << axis.n_channels << '\n';
  out << "offset_kev = " << format_double(axis.offset_kev) << '\n';
  out << "dispersion_kev = " << format_double(axis.dispersion_kev) << '\n';
  out << "layers =";
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out << (i ? "," : " ") << layers[i].first.name;
  }
  out << '\n';
  out << "widths =";
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out << (i ? "," : " ") << format_double(layers[i].second);
  }
  out << '\n';
  out << "smear = " << format_double(boundary_smear_px) << '\n';
  out << "dose = " << format_double(dose) << '\n';
  out << "seed = " << seed << '\n';
  out << "reference_total = " << format_double(reference_total) << '\n';
  std::vector<std::string> emitted;
  for (const auto& [phase, width] : layers) {
    if (std::find(emitted.begin(), emitted.end(), phase.name) != emitted.end()) continue;
    emitted.push_back(phase.name);
    out << "phase " << phase.name << " =";
    for (std::size_t i = 0; i < phase.composition.size(); ++i) {
      out << (i ? "," : " ") << phase.composition[i].first << ':'
          << format_double(phase.composition[i].second);
    }
    out << '\n';
  }
  return out.str();
}

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(trim(item));
  return parts;
}

double parse_real(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("phantom spec: bad numeric value for '" + key + "': " + s);
  }
}

} // namespace

PhantomSpec PhantomSpec::parse(std::istream& in) {
  PhantomSpec spec = desk_default();
  spec.layers.clear();
  std::vector<std::string> layer_names;
  std::vector<double> widths;
  std::map<std::string, Phase> custom;
  Index n_channels = spec.axis.n_channels;
  double offset = spec.axis.offset_kev;
  double dispersion = spec.axis.dispersion_kev;

  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("phantom spec: expected key = value: " + line);
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (key.rfind("phase ", 0) == 0) {
      Phase p;
      p.name = trim(key.substr(6));
      for (const std::string& part : split(value, ',')) {
        const auto colon = part.find(':');
        if (colon == std::string::npos) {
          throw FormatError("phantom spec: bad composition entry: " + part);
        }
        p.composition.emplace_back(trim(part.substr(0, colon)),
                                   parse_real(trim(part.substr(colon + 1)), key));
      }
      p.validate();
      custom[p.name] = p;
    } else if (key == "format") {
      if (value != "phantom-spec-1") throw FormatError("phantom spec: unknown format: " + value);
    } else if (key == "grid") {
      std::istringstream gs(value);
      if (!(gs >> spec.rows >> spec.cols)) {
        throw FormatError("phantom spec: grid expects two integers: " + value);
      }
    } else if (key == "channels") {
      n_channels = static_cast<Index>(parse_real(value, key));
    } else if (key == "offset_kev") {
      offset = parse_real(value, key);
    } else if (key == "dispersion_kev") {
      dispersion = parse_real(value, key);
    } else if (key == "layers") {
      layer_names = split(value, ',');
    } else if (key == "widths") {
      for (const std::string& w : split(value, ',')) widths.push_back(parse_real(w, key));
    } else if (key == "smear") {
      spec.boundary_smear_px = parse_real(value, key);
    } else if (key == "dose") {
      spec.dose = parse_real(value, key);
    } else if (key == "seed") {
      spec.seed = static_cast<std::uint64_t>(std::strtoull(value.c_str(), nullptr, 10));
    } else if (key == "reference_total") {
      spec.reference_total = parse_real(value, key);
    } else {
      throw FormatError("phantom spec: unknown key: " + key);
    }
  }

  spec.axis = {offset, dispersion, n_channels};
  if (layer_names.empty()) throw FormatError("phantom spec: missing 'layers'");
  if (widths.size() != layer_names.size()) {
    throw FormatError("phantom spec: 'widths' must list one value per layer");
  }
  for (std::size_t i = 0; i < layer_names.size(); ++i) {
    const auto it = custom.find(layer_names[i]);
    const Phase& phase = it != custom.end() ? it->second : builtin_phase(layer_names[i]);
    spec.layers.emplace_back(phase, widths[i]);
  }
  spec.validate();
  return spec;
}

PhantomSpec PhantomSpec::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open phantom spec: " + path);
  return parse(in);
}

namespace {

/// Separable Gaussian blur of one rows x cols map; taps outside the image
/// are dropped and the kernel renormalized over the in-bounds ones.
Matrix gaussian_blur_map(const Matrix& map, double sigma) {
  if (sigma <= 0.0) return map;
  const Index radius = static_cast<Index>(std::ceil(4.0 * sigma));
  Vector weights(2 * radius + 1);
  for (Index d = -radius; d <= radius; ++d) {
    weights(d + radius) = std::exp(-0.5 * static_cast<double>(d * d) / (sigma * sigma));
  }
  auto blur_axis = [&](const Matrix& in, bool along_cols) {
    Matrix out = in;
    const Index outer = along_cols ? in.rows() : in.cols();
    const Index inner = along_cols ? in.cols() : in.rows();
    for (Index o = 0; o < outer; ++o) {
      for (Index i = 0; i < inner; ++i) {
        double acc = 0.0, norm = 0.0;
        for (Index d = -radius; d <= radius; ++d) {
          const Index j = i + d;
          if (j < 0 || j >= inner) continue;
          const double w = weights(d + radius);
          acc += w * (along_cols ? in(o, j) : in(j, o));
          norm += w;
        }
        (along_cols ? out(o, i) : out(i, o)) = acc / norm;
      }
    }
    return out;
  };
  return blur_axis(blur_axis(map, true), false);
}

} // namespace

std::vector<Matrix> build_phase_maps(const PhantomSpec& spec) {
  spec.validate();
  const std::size_t n_layers = spec.layers.size();
  std::vector<Matrix> maps(n_layers, Matrix::Zero(spec.rows, spec.cols));

  // Hard vertical bands; a pixel belongs to the layer whose fractional
  // interval contains its column center.
  double cum = 0.0;
  std::vector<double> upper(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    cum += spec.layers[l].second;
    upper[l] = cum * static_cast<double>(spec.cols);
  }
  upper.back() = static_cast<double>(spec.cols); // guard against rounding
  for (Index c = 0; c < spec.cols; ++c) {
    const double center = static_cast<double>(c) + 0.5;
    std::size_t l = 0;
    while (l + 1 < n_layers && center >= upper[l]) ++l;
    maps[l].col(c).setOnes();
  }

  if (spec.boundary_smear_px > 0.0) {
    for (auto& map : maps) map = gaussian_blur_map(map, spec.boundary_smear_px);
  }

  Matrix total = Matrix::Zero(spec.rows, spec.cols);
  for (const auto& map : maps) total += map;
  for (auto& map : maps) map = map.cwiseQuotient(total);
  return maps;
}

Vector phase_emission(const Phase& phase, const SpectrumModel& model,
                      const EnergyAxis& axis) {
  phase.validate();
  axis.validate();
  const Index n = axis.n_channels;
  const double half = 0.5 * axis.dispersion_kev;

  for (Index i = 0; i < n; ++i) {
    const double e = axis.energy_of(i);
    if (e >= model.cutoff_kev && model.fwhm_ev(e) <= 0.0) {
      throw ValueError("spectrum model: detector FWHM not positive at " +
                       std::to_string(e) + " keV");
    }
  }

  Vector out = Vector::Zero(n);
  for (const auto& [element, fraction] : phase.composition) {
    const auto it = model.lines.find(element);
    if (it == model.lines.end()) continue;
    for (const XrayLine& line : it->second) {
      if (line.energy_kev < model.cutoff_kev) continue;
      if (line.energy_kev < axis.min_kev() - half || line.energy_kev > axis.max_kev() + half) {
        continue; // outside the recorded range: dropped
      }
      const double sigma = model.fwhm_ev(line.energy_kev) * kFwhmToSigma / 1000.0;
      for (Index i = 0; i < n; ++i) {
        const double e = axis.energy_of(i);
        if (e < model.cutoff_kev) continue;
        const double area = std_normal_cdf((e + half - line.energy_kev) / sigma) -
                            std_normal_cdf((e - half - line.energy_kev) / sigma);
        out(i) += fraction * line.weight * area;
      }
    }
  }

  if (model.background_coeff > 0.0) {
    Vector bg = Vector::Zero(n);
    for (Index i = 0; i < n; ++i) {
      const double e = axis.energy_of(i);
      if (e < model.cutoff_kev || e <= 0.0) continue;
      bg(i) = std::max(0.0, (model.beam_kev - e) / e);
    }
    const double bg_sum = bg.sum();
    if (bg_sum > 0.0) out += (model.background_coeff / bg_sum) * bg;
  }

  if (model.absorption_scale > 0.0 && !model.absorption.empty()) {
    double tau = 0.0;
    for (const auto& [element, fraction] : phase.composition) {
      const auto it = model.absorption.find(element);
      if (it != model.absorption.end()) tau += fraction * it->second;
    }
    if (tau > 0.0) {
      for (Index i = 0; i < n; ++i) {
        out(i) *= model.absorption_factor(tau, axis.energy_of(i));
      }
    }
  }

  if (out.sum() <= 0.0) {
    throw ValueError("phase '" + phase.name + "' has no spectral content on this axis");
  }
  return out;
}

Vector phase_spectrum(const Phase& phase, const SpectrumModel& model,
                      const EnergyAxis& axis) {
  Vector out = phase_emission(phase, model, axis);
  return out / out.sum();
}

SpectrumImage synthesize(const PhantomSpec& spec, const SpectrumModel& model) {
  spec.validate();
  const std::vector<Matrix> maps = build_phase_maps(spec);
  const std::size_t n_layers = spec.layers.size();
  const Index n = spec.axis.n_channels;
  const Index m = spec.rows * spec.cols;

  Matrix emissions(static_cast<Index>(n_layers), n);
  for (std::size_t l = 0; l < n_layers; ++l) {
    emissions.row(static_cast<Index>(l)) =
        phase_emission(spec.layers[l].first, model, spec.axis).transpose();
  }

  Matrix fractions(m, static_cast<Index>(n_layers));
  for (std::size_t l = 0; l < n_layers; ++l) {
    for (Index r = 0; r < spec.rows; ++r) {
      for (Index c = 0; c < spec.cols; ++c) {
        fractions(r * spec.cols + c, static_cast<Index>(l)) = maps[l](r, c);
      }
    }
  }

  Matrix expected = fractions * emissions; // m x n
  const double total = expected.sum();
  if (!(total > 0.0)) throw ValueError("phantom: expected cube has no counts");
  const double scale = spec.dose * spec.reference_total / total;

  SpectrumImage cube = SpectrumImage::zeros(spec.rows, spec.cols, spec.axis);
  for (Index i = 0; i < m; ++i) {
    double* dst = cube.counts.data() + i * n;
    for (Index j = 0; j < n; ++j) dst[j] = expected(i, j) * scale;
  }
  return cube;
}

SpectrumImage add_poisson(const SpectrumImage& noise_free, std::uint64_t seed) {
  noise_free.validate_counts();
  SpectrumImage noisy = noise_free;
  double* data = noisy.counts.data();
  const auto n = static_cast<std::int64_t>(noisy.counts.size());
  parallel_for(n, [&](std::int64_t i) {
    RandomStream stream(seed, static_cast<std::uint64_t>(i));
    data[i] = static_cast<double>(stream.next_poisson(data[i]));
  });
  return noisy;
}

TwinPair make_twins(const PhantomSpec& spec, const SpectrumModel& model) {
  TwinPair twins;
  twins.noise_free = synthesize(spec, model);
  twins.noise_free.provenance = spec.normalized_text();
  twins.noisy = add_poisson(twins.noise_free, spec.seed);
  twins.noisy.provenance = twins.noise_free.provenance;
  return twins;
}

SpectrumModel two_phase_model() {
  SpectrumModel model = SpectrumModel::defaults();
  model.beam_kev = 3.05; // low-voltage acquisition: background spans decades
  return model;
}

SpectrumImage two_phase_expectation(double dose, Index rows, Index cols,
                                    double reference_total) {
  if (rows < 1 || cols < 2) throw ValueError("two-phase object: need at least 2 columns");
  if (!(dose > 0.0)) throw ValueError("two-phase object: dose must be positive");
  const EnergyAxis axis{0.005, 0.01, 300}; // 300 channels covering 0-3 keV
  const SpectrumModel model = two_phase_model();
  const Phase si = builtin_phase("Si");
  const Phase sio2{"SiO2", {{"Si", 1.0 / 3.0}, {"O", 2.0 / 3.0}}};
  const Vector e_si = phase_emission(si, model, axis);
  const Vector e_sio2 = phase_emission(sio2, model, axis);

  const Index n = axis.n_channels;
  SpectrumImage cube = SpectrumImage::zeros(rows, cols, axis);
  double total = 0.0;
  std::vector<Vector> column_spectra(static_cast<std::size_t>(cols));
  for (Index c = 0; c < cols; ++c) {
    const double x = static_cast<double>(c) / static_cast<double>(cols - 1);
    column_spectra[static_cast<std::size_t>(c)] = (1.0 - x) * e_si + x * e_sio2;
    total += column_spectra[static_cast<std::size_t>(c)].sum() * static_cast<double>(rows);
  }
  const double scale = dose * reference_total / total;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const Vector& s = column_spectra[static_cast<std::size_t>(c)];
      double* dst = cube.counts.data() + (r * cols + c) * n;
      for (Index j = 0; j < n; ++j) dst[j] = s(j) * scale;
    }
  }
  return cube;
}

TwinPair two_phase_object(double dose, std::uint64_t seed, Index rows, Index cols,
                          double reference_total) {
  TwinPair twins;
  twins.noise_free = two_phase_expectation(dose, rows, cols, reference_total);
  std::ostringstream prov;
  prov << "object = two-phase-ramp\ngrid = " << rows << ' ' << cols
       << "\ndose = " << format_double(dose) << "\nseed = " << seed
       << "\nreference_total = " << format_double(reference_total) << '\n';
  twins.noise_free.provenance = prov.str();
  twins.noisy = add_poisson(twins.noise_free, seed);
  twins.noisy.provenance = twins.noise_free.provenance;
  return twins;
}

} // namespace specden
