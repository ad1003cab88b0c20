#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "specden/container_io.hpp"
#include "specden/errors.hpp"
#include "specden/pipeline.hpp"

namespace {

using namespace specden;

double parse_dose(const std::string& text) {
  const auto slash = text.find('/');
  if (slash == std::string::npos) return std::stod(text);
  return std::stod(text.substr(0, slash)) / std::stod(text.substr(slash + 1));
}

void add_preprocess_flags(CLI::App* app, PreprocessOptions& pre, std::string& weight,
                          std::string& center) {
  app->add_option("--bin", pre.bin, "Spatial binning factor (1 = off)")
      ->check(CLI::IsMember({1, 2}))
      ->capture_default_str();
  app->add_option("--gauss-sigma", pre.gauss_sigma,
                  "Gaussian smoothing sigma in pixels (0 = off)")
      ->capture_default_str();
  app->add_option("--weight", weight, "Weighting mode: full, spectrum or none")
      ->check(CLI::IsMember({"full", "spectrum", "none"}))
      ->capture_default_str();
  app->add_option("--center", center, "Mean-spectrum centering: on or off")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
}

void finish_preprocess_flags(PreprocessOptions& pre, const std::string& weight,
                             const std::string& center) {
  pre.weight = weight_choice_from(weight);
  pre.center = center == "on";
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "specden: PCA denoising of sparse spectrum-image datacubes with "
      "automatic component-count selection"};
  app.require_subcommand(1);

  // generate ----------------------------------------------------------------
  GenerateConfig gen;
  std::string gen_dose;
  auto* generate = app.add_subcommand(
      "generate",
      "Synthesize twin (noisy / noise-free) spectrum images. Writes "
      "noisy.sic, noise_free.sic and manifest.txt under --out");
  generate->add_option("--spec", gen.spec_path, "Phantom spec file (key = value text)");
  generate->add_flag("--full-scale", gen.full_scale,
                     "Use the full-scale built-in phantom (244x336, 1200 channels)");
  generate->add_option("--object", gen.object, "Object: layers or two-phase")
      ->check(CLI::IsMember({"layers", "two-phase"}))
      ->capture_default_str();
  generate->add_option("--dose", gen_dose, "Dose multiplier (accepts fractions like 1/16)");
  std::uint64_t gen_seed = 0;
  auto* gen_seed_opt = generate->add_option("--seed", gen_seed, "Poisson sampling seed");
  generate->add_option("--noise", gen.noise, "Which variants to write: on, off or both")
      ->check(CLI::IsMember({"on", "off", "both"}))
      ->capture_default_str();
  generate->add_option("--out", gen.out_dir, "Output directory")->required();

  // denoise -----------------------------------------------------------------
  DenoiseConfig den;
  std::string den_weight = "full", den_center = "on", den_criterion = "hist";
  std::string den_manifest;
  double den_sigma2 = 0.0;
  auto* denoise = app.add_subcommand(
      "denoise",
      "Full pipeline: filter, weight, decompose, select k, reconstruct. "
      "Writes denoised.sic, scree.csv, anisotropy.csv, truncation_report.txt, "
      "manifest.txt and (with --truth) quality.txt under --out");
  denoise->add_option("--in", den.input, "Input SIC container");
  denoise->add_option("--truth", den.truth, "Noise-free twin for oracle columns and quality");
  denoise->add_option("--out", den.out_dir, "Output directory");
  add_preprocess_flags(denoise, den.pre, den_weight, den_center);
  denoise->add_option("--method", den.method, "Truncation method: aniso, gd or manual")
      ->check(CLI::IsMember({"aniso", "gd", "manual"}))
      ->capture_default_str();
  denoise->add_option("--k", den.k_manual, "Component count for --method manual");
  denoise->add_option("--criterion", den_criterion,
                      "Anisotropy criterion: hist, cov, skew or purity")
      ->check(CLI::IsMember({"hist", "cov", "skew", "purity"}))
      ->capture_default_str();
  denoise->add_option("--threshold", den.threshold, "Anisotropy threshold")
      ->capture_default_str();
  denoise->add_option("--max-scan", den.max_scan, "Couples scanned for the cutoff")
      ->capture_default_str();
  auto* den_sigma_opt =
      denoise->add_option("--sigma2", den_sigma2, "Noise level override for Gavish-Donoho");
  denoise->add_flag("--force", den.force, "Bypass the sparse-unfiltered selection guard");
  denoise->add_option("--svd", den.svd, "SVD route: auto, bdcsvd or gram")
      ->check(CLI::IsMember({"auto", "bdcsvd", "gram"}))
      ->capture_default_str();
  denoise->add_flag("--maps", den.maps, "Export elemental maps (CSV + PGM)");
  denoise->add_flag("--clamp-negative", den.clamp, "Clamp negative reconstructed counts to 0");
  denoise->add_option("--manifest", den_manifest,
                      "Re-run from a previously written manifest (other flags ignored)");

  // analyze -----------------------------------------------------------------
  AnalyzeConfig ana;
  std::string ana_weight = "full", ana_center = "on", ana_criterion = "hist";
  auto* analyze = app.add_subcommand(
      "analyze",
      "Export plot data under --out: scree.csv, anisotropy.csv, and with "
      "--reference proximity_k<K>.csv / proximity_max.csv; --grids adds "
      "scatter_<a>_<b>.csv dumps");
  analyze->add_option("--in", ana.input, "Input SIC container")->required();
  analyze->add_option("--reference", ana.reference,
                      "Reference SIC container for proximity (e.g. the noise-free twin)");
  analyze->add_option("--out", ana.out_dir, "Output directory")->required();
  add_preprocess_flags(analyze, ana.pre, ana_weight, ana_center);
  analyze->add_option("--criterion", ana_criterion, "Anisotropy criterion")
      ->check(CLI::IsMember({"hist", "cov", "skew", "purity"}))
      ->capture_default_str();
  analyze->add_option("--threshold", ana.threshold, "Anisotropy threshold")
      ->capture_default_str();
  analyze->add_option("--max-scan", ana.max_scan, "Couples to evaluate")->capture_default_str();
  analyze->add_option("--proximity-components", ana.proximity_components,
                      "Reference components for the proximity export")
      ->capture_default_str();
  analyze->add_flag("--grids", ana.grids, "Dump the pairwise scatter-grid tableau");
  analyze->add_option("--grid-max", ana.grid_max, "Tableau size limit")->capture_default_str();
  analyze->add_option("--svd", ana.svd, "SVD route")->check(CLI::IsMember({"auto", "bdcsvd", "gram"}))
      ->capture_default_str();

  // dose-study ----------------------------------------------------------------
  DoseStudyConfig dose_cfg;
  std::vector<std::string> dose_list;
  auto* dose_study = app.add_subcommand(
      "dose-study",
      "Weighted noise variance vs dose on the two-phase ramp object; writes "
      "dose_study.csv and manifest.txt under --out");
  dose_study->add_option("--doses", dose_list,
                         "Comma-free dose list (fractions allowed), default 1/16..64");
  dose_study->add_option("--seed", dose_cfg.seed, "Base seed")->capture_default_str();
  dose_study->add_option("--replicates", dose_cfg.replicates, "Noise replicates averaged")
      ->capture_default_str();
  dose_study->add_option("--reference-total", dose_cfg.reference_total,
                         "Total counts at dose 1")
      ->capture_default_str();
  dose_study->add_option("--out", dose_cfg.out_dir, "Output directory")->required();

  // truncation-report ---------------------------------------------------------
  TruncationReportConfig rep;
  std::string rep_weight = "full", rep_center = "on", rep_criterion = "hist";
  double rep_sigma2 = 0.0;
  auto* report = app.add_subcommand(
      "truncation-report",
      "Per-method cutoff table for a dataset or a variance fixture; writes "
      "truncation_report.txt (plus scree.csv / anisotropy.csv in SIC mode) "
      "under --out");
  report->add_option("--in", rep.input, "Input SIC container");
  report->add_option("--truth", rep.truth, "Noise-free twin");
  report->add_option("--fixture", rep.fixture, "CSV of true component variances");
  report->add_option("--fixture-sigma2", rep.fixture_sigma2, "Noise level for the fixture");
  report->add_option("--fixture-m", rep.fixture_m, "Pixel count for the fixture");
  report->add_option("--fixture-n", rep.fixture_n, "Channel count for the fixture");
  report->add_option("--out", rep.out_dir, "Output directory")->required();
  add_preprocess_flags(report, rep.pre, rep_weight, rep_center);
  report->add_option("--criterion", rep_criterion, "Anisotropy criterion")
      ->check(CLI::IsMember({"hist", "cov", "skew", "purity"}))
      ->capture_default_str();
  report->add_option("--threshold", rep.threshold, "Anisotropy threshold")->capture_default_str();
  report->add_option("--max-scan", rep.max_scan, "Couples scanned")->capture_default_str();
  auto* rep_sigma_opt = report->add_option("--sigma2", rep_sigma2, "Noise level override");
  report->add_flag("--force", rep.force, "Bypass the sparse-unfiltered selection guard");
  report->add_option("--svd", rep.svd, "SVD route")->check(CLI::IsMember({"auto", "bdcsvd", "gram"}))
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) {
      if (!gen_dose.empty()) gen.dose = parse_dose(gen_dose);
      if (gen_seed_opt->count()) gen.seed = gen_seed;
      cmd_generate(gen);
    } else if (denoise->parsed()) {
      if (!den_manifest.empty()) {
        den = DenoiseConfig::from_manifest(den_manifest);
      } else {
        if (den.input.empty() || den.out_dir.empty()) {
          throw ValueError("denoise requires --in and --out (or --manifest)");
        }
        finish_preprocess_flags(den.pre, den_weight, den_center);
        den.criterion = aniso_criterion_from(den_criterion);
        if (den_sigma_opt->count()) den.sigma2 = den_sigma2;
      }
      const DenoiseResult r = cmd_denoise(den);
      std::printf("k = %d (method %s); outputs in %s\n", r.k_used, den.method.c_str(),
                  den.out_dir.string().c_str());
    } else if (analyze->parsed()) {
      finish_preprocess_flags(ana.pre, ana_weight, ana_center);
      ana.criterion = aniso_criterion_from(ana_criterion);
      cmd_analyze(ana);
    } else if (dose_study->parsed()) {
      if (!dose_list.empty()) {
        dose_cfg.doses.clear();
        for (const std::string& d : dose_list) dose_cfg.doses.push_back(parse_dose(d));
      }
      cmd_dose_study(dose_cfg);
    } else if (report->parsed()) {
      finish_preprocess_flags(rep.pre, rep_weight, rep_center);
      rep.criterion = aniso_criterion_from(rep_criterion);
      if (rep_sigma_opt->count()) rep.sigma2 = rep_sigma2;
      const TruncationReportResult r = cmd_truncation_report(rep);
      std::fputs(r.report_text.c_str(), stdout);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
