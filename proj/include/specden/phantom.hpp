#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "specden/containers.hpp"

namespace specden {

/// A chemical phase: named composition as (element symbol, atomic fraction)
/// pairs. Fractions must be positive and sum to 1 within 1e-9.
struct Phase {
  std::string name;
  std::vector<std::pair<std::string, double>> composition;

  void validate() const;
};

/// One characteristic X-ray line: energy and relative emission weight.
/// Weights are comparable across elements, so the per-element weight sum
/// sets how brightly that element emits.
struct XrayLine {
  double energy_kev = 0.0;
  double weight = 0.0;
};

/// Parametric emission model: Gaussian characteristic lines over a
/// bremsstrahlung-shaped background (E0 - E)/E clipped at zero, folded
/// with a square-root detector resolution curve and a composition-dependent
/// self-absorption factor. A stand-in for full Monte-Carlo spectrum
/// simulation; every parameter is configuration.
struct SpectrumModel {
  std::map<std::string, std::vector<XrayLine>> lines;
  double fwhm_ref_ev = 125.0;   // detector FWHM at the reference energy
  double e_ref_kev = 5.895;
  double fwhm_slope_ev = 2.46;  // slope of FWHM^2 in eV^2 per eV
  double background_coeff = 1.2; // background mass relative to unit line weight
  double beam_kev = 300.0;      // E0 in the background shape
  double cutoff_kev = 0.1;      // detector low-energy cutoff; no emission below

  // Self-absorption: emitted intensity at energy E is attenuated by
  // exp(-tau * scale * (ref/(E + floor))^2) with tau the composition mean
  // of the per-element strengths. This is the nonlinearity that makes each
  // mixed phase a genuinely independent spectral direction rather than a
  // linear combination of element spectra.
  std::map<std::string, double> absorption;
  double absorption_scale = 1.0; // 0 disables absorption entirely
  double absorption_ref_kev = 0.8;
  double absorption_floor_kev = 0.25;

  /// FWHM(E) = sqrt(fwhm_ref^2 + slope * (E - E_ref)), in eV.
  double fwhm_ev(double energy_kev) const;

  /// Attenuation factor for a phase with mean absorption strength tau.
  double absorption_factor(double tau, double energy_kev) const;

  /// Built-in line list for Si, O, N, Al, Ti, Hf, Ta (K/L/M lines inside
  /// 0.2-12.2 keV; energies from standard X-ray reference tables).
  static SpectrumModel defaults();
};

/// Geometry + acquisition settings for the layered phantom.
struct PhantomSpec {
  Index rows = 96;
  Index cols = 128;
  EnergyAxis axis{0.2, 0.02, 600};
  std::vector<std::pair<Phase, double>> layers; // (phase, width fraction)
  double boundary_smear_px = 1.0;
  double dose = 1.0;
  std::uint64_t seed = 1;
  double reference_total = 20000.0; // total counts at dose 1

  void validate() const;

  /// Desk-scale default: the 11-phase stack on a 96x128 grid, 600 channels
  /// over 0.2-12.2 keV.
  static PhantomSpec desk_default();
  /// Full-scale variant: 244x336 pixels, 1200 channels, same energy range.
  static PhantomSpec full_default();

  /// Plain-text key/value form; parse(normalized_text()) round-trips.
  std::string normalized_text() const;
  static PhantomSpec parse(std::istream& in);
  static PhantomSpec parse_file(const std::string& path);
};

/// The named phases of the built-in multilayer stack.
const std::vector<Phase>& builtin_phases();
const Phase& builtin_phase(const std::string& name);

/// Per-phase fraction maps: hard vertical-layer masks by width fraction,
/// Gaussian-blurred with sigma = boundary_smear_px, renormalized so each
/// pixel's fractions sum to exactly 1.
std::vector<Matrix> build_phase_maps(const PhantomSpec& spec);

/// Expected-counts spectrum of a single phase, normalized to unit total.
/// Throws ValueError if the phase has no spectral content on the axis.
Vector phase_spectrum(const Phase& phase, const SpectrumModel& model,
                      const EnergyAxis& axis);

/// Un-normalized emission spectrum (line weights plus background mass);
/// its sum is the phase's relative brightness. synthesize() mixes these so
/// pixel totals vary with composition, as they do in measured data.
Vector phase_emission(const Phase& phase, const SpectrumModel& model,
                      const EnergyAxis& axis);

/// Noise-free expectation cube: per pixel the fraction-weighted mix of
/// phase emission spectra, globally scaled so the cube total equals
/// dose * reference_total.
SpectrumImage synthesize(const PhantomSpec& spec, const SpectrumModel& model);

/// Independent Poisson sample of every cell (mean = expected value).
/// Counter-based per-element seeding: output depends only on (cube, seed),
/// not on the worker count. Requires non-negative finite expectations.
SpectrumImage add_poisson(const SpectrumImage& noise_free, std::uint64_t seed);

struct TwinPair {
  SpectrumImage noisy;
  SpectrumImage noise_free;
};

/// Noisy + noise-free twins of the layered phantom.
TwinPair make_twins(const PhantomSpec& spec, const SpectrumModel& model);

/// Two-phase ramp object: left edge pure Si, right edge pure SiO2, linear
/// composition ramp across columns; defaults to 100x100 pixels and 300
/// channels over 0-3 keV. The model is tuned for a low-voltage acquisition
/// (beam at 3.05 keV) so channel intensities span several decades.
TwinPair two_phase_object(double dose, std::uint64_t seed, Index rows = 100,
                          Index cols = 100, double reference_total = 6000.0);

/// The spectrum model used by two_phase_object.
SpectrumModel two_phase_model();

/// Expected (noise-free) two-phase cube only; shared by the dose study so
/// Poisson increments can be layered on top of one expectation.
SpectrumImage two_phase_expectation(double dose, Index rows, Index cols,
                                    double reference_total);

} // namespace specden
