#include "specden/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "specden/container_io.hpp"
#include "specden/errors.hpp"
#include "specden/rng.hpp"

namespace specden {

namespace {

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(std::string("stage ") + name + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void write_manifest(const std::filesystem::path& out_dir, const std::string& text) {
  write_text(out_dir / "manifest.txt", text);
}

void write_scree_csv(const PcaModel& model, const std::filesystem::path& path) {
  std::vector<std::pair<double, double>> rows;
  for (const auto& [index, variance] : scree(model)) {
    rows.emplace_back(static_cast<double>(index), variance);
  }
  write_series_csv(rows, "component,variance", path);
}

void write_aniso_csv(const AnisotropySeries& series, const std::filesystem::path& path) {
  std::vector<std::pair<double, double>> rows;
  for (std::size_t i = 0; i < series.values.size(); ++i) {
    rows.emplace_back(static_cast<double>(i + 1), series.values[i]);
  }
  write_series_csv(rows, "couple_index,criterion_value", path);
}

std::string on_off(bool v) { return v ? "on" : "off"; }

bool parse_on_off(const std::string& v, const std::string& key) {
  if (v == "on") return true;
  if (v == "off") return false;
  throw FormatError("expected on/off for " + key + ", got: " + v);
}

} // namespace

const char* weight_choice_name(WeightChoice w) {
  switch (w) {
    case WeightChoice::full: return "full";
    case WeightChoice::spectrum: return "spectrum";
    case WeightChoice::none: return "none";
  }
  return "?";
}

WeightChoice weight_choice_from(const std::string& name) {
  if (name == "full") return WeightChoice::full;
  if (name == "spectrum") return WeightChoice::spectrum;
  if (name == "none") return WeightChoice::none;
  throw FormatError("unknown weight mode: " + name);
}

SvdMethod svd_method_from(const std::string& name) {
  if (name == "auto") return SvdMethod::automatic;
  if (name == "bdcsvd") return SvdMethod::bdcsvd;
  if (name == "gram") return SvdMethod::gram;
  throw FormatError("unknown svd method: " + name);
}

AnisoCriterion aniso_criterion_from(const std::string& name) {
  if (name == "cov") return AnisoCriterion::cov;
  if (name == "skew") return AnisoCriterion::skew;
  if (name == "purity") return AnisoCriterion::purity;
  if (name == "hist") return AnisoCriterion::hist;
  throw FormatError("unknown anisotropy criterion: " + name);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt_a, std::uint64_t salt_b) {
  RandomStream stream(seed, salt_a * 0x100000001b3ull + salt_b + 1);
  return stream.next_u64();
}

PreprocessedData preprocess_image(const SpectrumImage& cube, const PreprocessOptions& opts) {
  cube.validate_shape();
  if (opts.bin != 1 && opts.bin != 2) throw ValueError("preprocess: bin must be 1 or 2");
  if (opts.gauss_sigma < 0.0) throw ValueError("preprocess: gauss sigma must be >= 0");

  PreprocessedData out;
  out.raw_nonzero_fraction = sparsity(cube);

  SpectrumImage binned, smoothed;
  const SpectrumImage* current = &cube;
  if (opts.bin == 2) {
    BinResult br = bin2x2(*current);
    out.rows_truncated = br.rows_truncated;
    out.cols_truncated = br.cols_truncated;
    binned = std::move(br.image);
    current = &binned;
    out.filtered = true;
  }
  if (opts.gauss_sigma > 0.0) {
    smoothed = gaussian_filter_spatial(*current, opts.gauss_sigma);
    current = &smoothed;
    out.filtered = true;
  }

  DataMatrix dm = flatten(*current);
  out.grid = {current->rows, current->cols, current->axis, std::move(dm.pixel_map)};
  out.filtered_matrix = std::move(dm.values);

  switch (opts.weight) {
    case WeightChoice::full:
      out.weights = compute_weights(out.filtered_matrix, WeightMode::full);
      break;
    case WeightChoice::spectrum:
      out.weights = compute_weights(out.filtered_matrix, WeightMode::spectrum_only);
      break;
    case WeightChoice::none:
      out.weights = WeightModel::identity(out.filtered_matrix.rows(), out.filtered_matrix.cols());
      break;
  }

  Matrix weighted = apply_weighting(out.filtered_matrix, out.weights);
  if (opts.center) {
    CenterResult cr = center(weighted);
    out.matrix = std::move(cr.centered);
    out.center = std::move(cr.model);
  } else {
    out.matrix = std::move(weighted);
    out.center.mean_spectrum = Vector::Zero(out.filtered_matrix.cols());
  }
  return out;
}

PcaModel decompose_preprocessed(const PreprocessedData& data, SvdMethod method) {
  PcaModel model = pca_decompose(data.matrix, method);
  model.center = data.center;
  model.weights = data.weights;
  return model;
}

Matrix preprocess_twin_with(const PreprocessedData& data, const SpectrumImage& cube,
                            const PreprocessOptions& opts, Matrix* filtered_out) {
  SpectrumImage binned, smoothed;
  const SpectrumImage* current = &cube;
  if (opts.bin == 2) {
    BinResult br = bin2x2(*current);
    binned = std::move(br.image);
    current = &binned;
  }
  if (opts.gauss_sigma > 0.0) {
    smoothed = gaussian_filter_spatial(*current, opts.gauss_sigma);
    current = &smoothed;
  }
  DataMatrix dm = flatten(*current);
  if (dm.values.rows() != data.filtered_matrix.rows() ||
      dm.values.cols() != data.filtered_matrix.cols()) {
    throw DimensionError("twin preprocessing: shapes do not match the primary dataset");
  }
  if (filtered_out) *filtered_out = dm.values;
  Matrix weighted = apply_weighting(dm.values, data.weights);
  if (opts.center) return center(weighted).centered;
  return weighted;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

std::string GenerateConfig::normalized_text() const {
  std::ostringstream out;
  out << "format = generate-manifest-1\n";
  out << "defaults_version = 1\n";
  out << "dose = " << (dose ? format_double(*dose) : std::string("default")) << '\n';
  out << "full_scale = " << on_off(full_scale) << '\n';
  out << "noise = " << noise << '\n';
  out << "object = " << object << '\n';
  out << "out_dir = " << out_dir.string() << '\n';
  out << "seed = " << (seed ? std::to_string(*seed) : std::string("default")) << '\n';
  out << "spec = " << spec_path << '\n';
  return out.str();
}

GenerateResult cmd_generate(const GenerateConfig& config) {
  if (config.noise != "on" && config.noise != "off" && config.noise != "both") {
    throw ValueError("generate: noise must be on, off or both");
  }
  std::filesystem::create_directories(config.out_dir);

  TwinPair twins = stage("generate", [&] {
    if (config.object == "two-phase") {
      return two_phase_object(config.dose.value_or(1.0), config.seed.value_or(1));
    }
    if (config.object != "layers") throw ValueError("unknown object: " + config.object);
    PhantomSpec spec = config.spec_path.empty()
                           ? (config.full_scale ? PhantomSpec::full_default()
                                                : PhantomSpec::desk_default())
                           : PhantomSpec::parse_file(config.spec_path);
    if (config.dose) spec.dose = *config.dose;
    if (config.seed) spec.seed = *config.seed;
    return make_twins(spec, SpectrumModel::defaults());
  });

  GenerateResult result;
  stage("write", [&] {
    if (config.noise == "on" || config.noise == "both") {
      result.noisy_path = config.out_dir / "noisy.sic";
      save_container(twins.noisy, result.noisy_path);
    }
    if (config.noise == "off" || config.noise == "both") {
      result.noise_free_path = config.out_dir / "noise_free.sic";
      save_container(twins.noise_free, result.noise_free_path);
    }
    write_manifest(config.out_dir, config.normalized_text());
    return 0;
  });
  return result;
}

// ---------------------------------------------------------------------------
// denoise
// ---------------------------------------------------------------------------

std::string DenoiseConfig::normalized_text() const {
  std::ostringstream out;
  out << "format = denoise-manifest-1\n";
  out << "defaults_version = 1\n";
  out << "bin = " << pre.bin << '\n';
  out << "center = " << on_off(pre.center) << '\n';
  out << "clamp = " << on_off(clamp) << '\n';
  out << "criterion = " << aniso_criterion_name(criterion) << '\n';
  out << "force = " << on_off(force) << '\n';
  out << "gauss_sigma = " << format_double(pre.gauss_sigma) << '\n';
  out << "input = " << input << '\n';
  out << "k_manual = " << k_manual << '\n';
  out << "maps = " << on_off(maps) << '\n';
  out << "max_scan = " << max_scan << '\n';
  out << "method = " << method << '\n';
  out << "out_dir = " << out_dir.string() << '\n';
  out << "sigma2 = " << (sigma2 ? format_double(*sigma2) : std::string("auto")) << '\n';
  out << "svd = " << svd << '\n';
  out << "threshold = " << format_double(threshold) << '\n';
  out << "truth = " << truth << '\n';
  out << "weight = " << weight_choice_name(pre.weight) << '\n';
  return out.str();
}

DenoiseConfig DenoiseConfig::from_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  DenoiseConfig config;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("manifest: expected key = value: " + line);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "format") {
      if (value != "denoise-manifest-1") throw FormatError("manifest: unknown format " + value);
    } else if (key == "defaults_version") {
      if (value != "1") throw FormatError("manifest: unsupported defaults_version " + value);
    } else if (key == "bin") {
      config.pre.bin = std::stoi(value);
    } else if (key == "center") {
      config.pre.center = parse_on_off(value, key);
    } else if (key == "clamp") {
      config.clamp = parse_on_off(value, key);
    } else if (key == "criterion") {
      config.criterion = aniso_criterion_from(value);
    } else if (key == "force") {
      config.force = parse_on_off(value, key);
    } else if (key == "gauss_sigma") {
      config.pre.gauss_sigma = std::stod(value);
    } else if (key == "input") {
      config.input = value;
    } else if (key == "k_manual") {
      config.k_manual = std::stoi(value);
    } else if (key == "maps") {
      config.maps = parse_on_off(value, key);
    } else if (key == "max_scan") {
      config.max_scan = std::stoi(value);
    } else if (key == "method") {
      config.method = value;
    } else if (key == "out_dir") {
      config.out_dir = value;
    } else if (key == "sigma2") {
      if (value != "auto") config.sigma2 = std::stod(value);
    } else if (key == "svd") {
      config.svd = value;
    } else if (key == "threshold") {
      config.threshold = std::stod(value);
    } else if (key == "truth") {
      config.truth = value;
    } else if (key == "weight") {
      config.pre.weight = weight_choice_from(value);
    } else {
      throw FormatError("manifest: unknown key " + key);
    }
  }
  return config;
}

namespace {

void write_window_maps(const SpectrumImage& cube, const EnergyAxis& axis,
                       const std::filesystem::path& out_dir, const std::string& prefix) {
  for (const EnergyWindow& window : default_windows(SpectrumModel::defaults(), axis)) {
    const Matrix map = elemental_map(cube, window);
    write_map_csv(map, out_dir / (prefix + "_" + window.label + ".csv"));
    write_map_pgm(map, out_dir / (prefix + "_" + window.label + ".pgm"));
  }
}

} // namespace

DenoiseResult cmd_denoise(const DenoiseConfig& config) {
  std::filesystem::create_directories(config.out_dir);
  const SpectrumImage noisy = stage("load", [&] { return load_container(config.input); });

  std::optional<SpectrumImage> truth;
  if (!config.truth.empty()) {
    truth = stage("load-truth", [&] { return load_container(config.truth); });
    if (truth->rows != noisy.rows || truth->cols != noisy.cols ||
        truth->axis.n_channels != noisy.axis.n_channels) {
      throw Error("stage load-truth: twin shapes differ from the input");
    }
  }

  PreprocessedData pre =
      stage("preprocess", [&] { return preprocess_image(noisy, config.pre); });
  const SvdMethod svd = svd_method_from(config.svd);
  PcaModel model = stage("decompose", [&] { return decompose_preprocessed(pre, svd); });

  AnisoOptions aniso;
  aniso.criterion = config.criterion;
  aniso.threshold = config.threshold;
  aniso.max_scan = config.max_scan;
  aniso.raw_nonzero_fraction = pre.raw_nonzero_fraction;
  aniso.filtered = pre.filtered;
  aniso.force = config.force;

  DenoiseResult result;
  result.report = stage("truncate", [&] {
    return build_truncation_report(model, aniso, config.sigma2);
  });

  // Twin-based oracle columns: true variances in the noisy pipeline's
  // coordinates and the measured weighted noise level.
  std::optional<Vector> lambda_true;
  if (truth) {
    stage("twin-oracle", [&] {
      Matrix truth_filtered;
      const Matrix truth_weighted =
          preprocess_twin_with(pre, *truth, config.pre, &truth_filtered);
      const PcaModel truth_model = pca_decompose(truth_weighted, svd);
      lambda_true = truth_model.variances;
      result.report.sigma2_twin =
          weighted_residual_variance(pre.filtered_matrix, truth_filtered, pre.weights).global;
      std::vector<bool> flags;
      for (Index i = 0; i < lambda_true->size(); ++i) {
        flags.push_back(
            nadler_retrievable((*lambda_true)(i), *result.report.sigma2_twin, model.m, model.n));
      }
      result.report.nadler_flags = std::move(flags);
      return 0;
    });
  }

  result.k_used = stage("truncate", [&] {
    if (config.method == "aniso") return result.report.k_aniso;
    if (config.method == "gd") return result.report.k_gd;
    if (config.method == "manual") {
      if (config.k_manual < 0 || config.k_manual > model.r) {
        throw ValueError("manual k out of range");
      }
      return config.k_manual;
    }
    throw ValueError("unknown truncation method: " + config.method);
  });

  SpectrumImage denoised = stage("reconstruct", [&] {
    return reconstruct(model, result.k_used, pre.grid);
  });
  result.negative_fraction = negative_fraction(denoised);
  if (config.clamp) denoised = clamp_negative(denoised);
  denoised.provenance = config.normalized_text();

  stage("write", [&] {
    result.denoised_path = config.out_dir / "denoised.sic";
    save_container(denoised, result.denoised_path);
    write_scree_csv(model, config.out_dir / "scree.csv");
    write_aniso_csv(result.report.series, config.out_dir / "anisotropy.csv");

    std::ostringstream report;
    report << truncation_summary_text(result.report);
    report << "selected method: " << config.method << ", k = " << result.k_used << '\n';
    report << "negative cell fraction after reconstruction: "
           << format_double(result.negative_fraction) << (config.clamp ? " (clamped)" : "")
           << '\n';
    if (lambda_true && result.report.sigma2_twin) {
      const Index show = std::min<Index>(lambda_true->size(), 2 * config.max_scan);
      report << '\n'
             << nadler_report_text(lambda_true->head(show), *result.report.sigma2_twin, model.m,
                                   model.n);
    }
    write_text(config.out_dir / "truncation_report.txt", report.str());
    write_manifest(config.out_dir, config.normalized_text());
    return 0;
  });

  if (truth) {
    stage("quality", [&] {
      // Compare in the binned domain so shapes match the reconstruction;
      // the smoothing stage stays part of the pipeline under test.
      SpectrumImage raw_cmp = noisy;
      SpectrumImage truth_cmp = *truth;
      if (config.pre.bin == 2) {
        raw_cmp = bin2x2(raw_cmp).image;
        truth_cmp = bin2x2(truth_cmp).image;
      }
      result.quality = quality(denoised, raw_cmp, truth_cmp, result.k_used);
      std::ostringstream q;
      q << "k_used = " << result.k_used << '\n';
      q << "mse_raw_vs_truth = " << format_double(result.quality->mse_raw_vs_truth) << '\n';
      q << "mse_recon_vs_truth = " << format_double(result.quality->mse_recon_vs_truth) << '\n';
      q << "improvement_factor = " << format_double(result.quality->improvement_factor)
        << (result.quality->improvement_saturated ? " (saturated)" : "") << '\n';
      q << "negative_fraction = " << format_double(result.negative_fraction) << '\n';
      write_text(config.out_dir / "quality.txt", q.str());
      if (config.maps) {
        write_window_maps(raw_cmp, raw_cmp.axis, config.out_dir, "map_raw");
        write_window_maps(denoised, denoised.axis, config.out_dir, "map_denoised");
      }
      return 0;
    });
  } else if (config.maps) {
    stage("maps", [&] {
      write_window_maps(denoised, denoised.axis, config.out_dir, "map_denoised");
      return 0;
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

std::string AnalyzeConfig::normalized_text() const {
  std::ostringstream out;
  out << "format = analyze-manifest-1\n";
  out << "defaults_version = 1\n";
  out << "bin = " << pre.bin << '\n';
  out << "center = " << on_off(pre.center) << '\n';
  out << "criterion = " << aniso_criterion_name(criterion) << '\n';
  out << "gauss_sigma = " << format_double(pre.gauss_sigma) << '\n';
  out << "grid_max = " << grid_max << '\n';
  out << "grids = " << on_off(grids) << '\n';
  out << "input = " << input << '\n';
  out << "max_scan = " << max_scan << '\n';
  out << "out_dir = " << out_dir.string() << '\n';
  out << "proximity_components = " << proximity_components << '\n';
  out << "reference = " << reference << '\n';
  out << "svd = " << svd << '\n';
  out << "threshold = " << format_double(threshold) << '\n';
  out << "weight = " << weight_choice_name(pre.weight) << '\n';
  return out.str();
}

AnalyzeResult cmd_analyze(const AnalyzeConfig& config) {
  std::filesystem::create_directories(config.out_dir);
  const SpectrumImage input = stage("load", [&] { return load_container(config.input); });
  PreprocessedData pre =
      stage("preprocess", [&] { return preprocess_image(input, config.pre); });
  const SvdMethod svd = svd_method_from(config.svd);
  const PcaModel model = stage("decompose", [&] { return decompose_preprocessed(pre, svd); });

  AnisoOptions aniso;
  aniso.criterion = config.criterion;
  aniso.threshold = config.threshold;
  aniso.max_scan = config.max_scan;

  AnalyzeResult result;
  result.series = stage("anisotropy", [&] { return compute_anisotropy_series(model, aniso); });

  stage("write", [&] {
    write_scree_csv(model, config.out_dir / "scree.csv");
    write_aniso_csv(result.series, config.out_dir / "anisotropy.csv");
    write_manifest(config.out_dir, config.normalized_text());
    return 0;
  });

  if (!config.reference.empty()) {
    stage("proximity", [&] {
      const SpectrumImage ref_cube = load_container(config.reference);
      if (ref_cube.rows != input.rows || ref_cube.cols != input.cols ||
          ref_cube.axis.n_channels != input.axis.n_channels) {
        throw DimensionError("reference shape differs from the input");
      }
      const PreprocessedData ref_pre = preprocess_image(ref_cube, config.pre);
      const PcaModel ref_model = decompose_preprocessed(ref_pre, svd);
      const int n_prox = std::min<int>(config.proximity_components,
                                       static_cast<int>(ref_model.r));
      std::vector<std::pair<double, double>> summary_rows;
      for (int k = 1; k <= n_prox; ++k) {
        const ProximitySeries series = proximity(model, ref_model, k);
        std::vector<std::pair<double, double>> rows;
        int argmax = 1;
        double best = -1.0;
        for (std::size_t l = 0; l < series.phi.size(); ++l) {
          rows.emplace_back(static_cast<double>(l + 1), series.phi[l]);
          if (series.phi[l] > best) {
            best = series.phi[l];
            argmax = static_cast<int>(l + 1);
          }
        }
        write_series_csv(rows, "component,phi",
                         config.out_dir / ("proximity_k" + std::to_string(k) + ".csv"));
        result.proximity_argmax.push_back(argmax);
        result.proximity_max.push_back(best);
        summary_rows.emplace_back(static_cast<double>(k), best);
      }
      write_series_csv(summary_rows, "reference_component,max_phi",
                       config.out_dir / "proximity_max.csv");
      return 0;
    });
  }

  if (config.grids) {
    stage("grids", [&] {
      const Index limit = std::min<Index>(config.grid_max, model.r);
      for (Index a = 1; a <= limit; ++a) {
        for (Index b = a + 1; b <= limit; ++b) {
          const ScatterGrid grid =
              scatter_grid(model.scores.col(a - 1), model.scores.col(b - 1), 64);
          write_map_csv(grid.cells.cast<double>(),
                        config.out_dir / ("scatter_" + std::to_string(a) + "_" +
                                          std::to_string(b) + ".csv"));
        }
      }
      return 0;
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// dose study
// ---------------------------------------------------------------------------

std::string DoseStudyConfig::normalized_text() const {
  std::ostringstream out;
  out << "format = dose-study-manifest-1\n";
  out << "defaults_version = 1\n";
  out << "doses =";
  for (std::size_t i = 0; i < doses.size(); ++i) out << (i ? "," : " ") << format_double(doses[i]);
  out << '\n';
  out << "grid = " << rows << ' ' << cols << '\n';
  out << "out_dir = " << out_dir.string() << '\n';
  out << "reference_total = " << format_double(reference_total) << '\n';
  out << "replicates = " << replicates << '\n';
  out << "seed = " << seed << '\n';
  return out.str();
}

std::vector<DoseStudyRow> cmd_dose_study(const DoseStudyConfig& config) {
  if (config.doses.empty()) throw ValueError("dose study: empty dose list");
  if (config.replicates < 1) throw ValueError("dose study: need at least one replicate");
  std::vector<double> doses = config.doses;
  std::sort(doses.begin(), doses.end());
  if (!(doses.front() > 0.0)) throw ValueError("dose study: doses must be positive");

  std::filesystem::create_directories(config.out_dir);

  const SpectrumImage base = stage("generate", [&] {
    return two_phase_expectation(1.0, config.rows, config.cols, config.reference_total);
  });
  const Matrix base_mat = flatten(base).values;

  const std::size_t n_doses = doses.size();
  std::vector<double> sum_true(n_doses, 0.0), sum_est(n_doses, 0.0);

  stage("measure", [&] {
    SpectrumImage increment = base;
    for (int rep = 0; rep < config.replicates; ++rep) {
      Matrix noisy_mat = Matrix::Zero(base_mat.rows(), base_mat.cols());
      double prev_dose = 0.0;
      for (std::size_t k = 0; k < n_doses; ++k) {
        // Poisson increments: the marginal at each dose is exactly
        // Poisson(dose * expectation) while consecutive doses share their
        // noise, so the reported trend is not washed out by per-dose
        // sampling scatter.
        const double delta = doses[k] - prev_dose;
        prev_dose = doses[k];
        for (std::size_t i = 0; i < increment.counts.size(); ++i) {
          increment.counts[i] = base.counts[i] * delta;
        }
        const SpectrumImage sampled = add_poisson(
            increment, derive_seed(config.seed, static_cast<std::uint64_t>(rep),
                                   static_cast<std::uint64_t>(k)));
        noisy_mat += flatten(sampled).values;

        const Matrix truth_mat = base_mat * doses[k];
        const WeightModel w_true = compute_weights(truth_mat, WeightMode::spectrum_only);
        const WeightModel w_est = compute_weights(noisy_mat, WeightMode::spectrum_only);
        sum_true[k] += weighted_residual_variance(noisy_mat, truth_mat, w_true).global;
        sum_est[k] += weighted_residual_variance(noisy_mat, truth_mat, w_est).global;
      }
    }
    return 0;
  });

  std::vector<DoseStudyRow> rows;
  rows.reserve(n_doses);
  for (std::size_t k = 0; k < n_doses; ++k) {
    rows.push_back({doses[k], sum_true[k] / config.replicates, sum_est[k] / config.replicates});
  }

  stage("write", [&] {
    std::ofstream out(config.out_dir / "dose_study.csv", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open dose_study.csv");
    out << "dose,var_true_w,var_est_w\n";
    for (const DoseStudyRow& row : rows) {
      out << format_double(row.dose) << ',' << format_double(row.var_true_w) << ','
          << format_double(row.var_est_w) << '\n';
    }
    if (!out) throw IoError("write failed: dose_study.csv");
    write_manifest(config.out_dir, config.normalized_text());
    return 0;
  });
  return rows;
}

// ---------------------------------------------------------------------------
// truncation report
// ---------------------------------------------------------------------------

std::string TruncationReportConfig::normalized_text() const {
  std::ostringstream out;
  out << "format = truncation-report-manifest-1\n";
  out << "defaults_version = 1\n";
  out << "bin = " << pre.bin << '\n';
  out << "center = " << on_off(pre.center) << '\n';
  out << "criterion = " << aniso_criterion_name(criterion) << '\n';
  out << "fixture = " << fixture << '\n';
  out << "fixture_m = " << fixture_m << '\n';
  out << "fixture_n = " << fixture_n << '\n';
  out << "fixture_sigma2 = " << format_double(fixture_sigma2) << '\n';
  out << "force = " << on_off(force) << '\n';
  out << "gauss_sigma = " << format_double(pre.gauss_sigma) << '\n';
  out << "input = " << input << '\n';
  out << "max_scan = " << max_scan << '\n';
  out << "out_dir = " << out_dir.string() << '\n';
  out << "sigma2 = " << (sigma2 ? format_double(*sigma2) : std::string("auto")) << '\n';
  out << "svd = " << svd << '\n';
  out << "threshold = " << format_double(threshold) << '\n';
  out << "truth = " << truth << '\n';
  out << "weight = " << weight_choice_name(pre.weight) << '\n';
  return out.str();
}

TruncationReportResult cmd_truncation_report(const TruncationReportConfig& config) {
  std::filesystem::create_directories(config.out_dir);
  TruncationReportResult result;

  if (!config.fixture.empty()) {
    stage("fixture", [&] {
      std::ifstream in(config.fixture);
      if (!in) throw IoError("cannot open fixture: " + config.fixture);
      std::vector<double> values;
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
          values.push_back(std::stod(line));
        } catch (const std::exception&) {
          if (values.empty()) continue; // header line
          throw FormatError("fixture: bad value: " + line);
        }
      }
      if (values.empty()) throw FormatError("fixture: no variances found");
      if (!(config.fixture_sigma2 > 0.0) || config.fixture_m < 1 || config.fixture_n < 1) {
        throw ValueError("fixture mode needs sigma2 > 0 and positive m, n");
      }
      Vector lambda(static_cast<Index>(values.size()));
      for (std::size_t i = 0; i < values.size(); ++i) lambda(static_cast<Index>(i)) = values[i];
      result.report_text = nadler_report_text(lambda, config.fixture_sigma2, config.fixture_m,
                                              config.fixture_n);
      return 0;
    });
    stage("write", [&] {
      write_text(config.out_dir / "truncation_report.txt", result.report_text);
      write_manifest(config.out_dir, config.normalized_text());
      return 0;
    });
    return result;
  }

  DenoiseConfig denoise;
  denoise.input = config.input;
  denoise.truth = config.truth;
  denoise.out_dir = config.out_dir;
  denoise.pre = config.pre;
  denoise.method = "manual";
  denoise.k_manual = 0;
  denoise.criterion = config.criterion;
  denoise.threshold = config.threshold;
  denoise.max_scan = config.max_scan;
  denoise.sigma2 = config.sigma2;
  denoise.force = config.force;
  denoise.svd = config.svd;

  // Reuse the denoise pipeline for the shared stages, then keep only the
  // report artifacts (the rank-0 reconstruction is discarded).
  const DenoiseResult dres = cmd_denoise(denoise);
  result.report = dres.report;
  std::error_code ec;
  std::filesystem::remove(config.out_dir / "denoised.sic", ec);
  std::filesystem::remove(config.out_dir / "quality.txt", ec);
  stage("write", [&] {
    result.report_text = truncation_summary_text(dres.report);
    write_manifest(config.out_dir, config.normalized_text());
    return 0;
  });
  return result;
}

} // namespace specden
