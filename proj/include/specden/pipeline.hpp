#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "specden/containers.hpp"
#include "specden/decomposition.hpp"
#include "specden/phantom.hpp"
#include "specden/preprocess.hpp"
#include "specden/reconstruct.hpp"
#include "specden/truncation.hpp"

namespace specden {

enum class WeightChoice { full, spectrum, none };

struct PreprocessOptions {
  int bin = 2;               // 1 = off, 2 = 2x2 binning
  double gauss_sigma = 1.0;  // 0 = off
  WeightChoice weight = WeightChoice::full;
  bool center = true;
};

/// Everything the downstream stages need from the pre-treatment:
/// the weighted+centered matrix, the filtered-but-unweighted matrix (for
/// twin residual measurements), the models to invert the treatment, and
/// the grid the reconstruction folds back onto.
struct PreprocessedData {
  Matrix matrix;          // weighted + centered
  Matrix filtered_matrix; // after bin/smooth + flatten, before weighting
  WeightModel weights;
  CenterModel center;
  GridInfo grid;
  double raw_nonzero_fraction = 0.0; // sparsity of the raw input
  bool filtered = false;
  bool rows_truncated = false;
  bool cols_truncated = false;
};

/// bin -> gaussian smooth -> flatten -> weight -> center, per the fixed
/// pipeline order.
PreprocessedData preprocess_image(const SpectrumImage& cube, const PreprocessOptions& opts);

/// Decomposes preprocessed data and embeds its weight/center state so
/// reconstruction can invert the whole chain.
PcaModel decompose_preprocessed(const PreprocessedData& data,
                                SvdMethod method = SvdMethod::automatic);

/// Applies the same filtering as `data` to another cube of the raw shape
/// and returns its filtered matrix weighted by `data`'s weight model and
/// centered on its own mean. Used to put a noise-free twin into the noisy
/// decomposition's coordinates.
Matrix preprocess_twin_with(const PreprocessedData& data, const SpectrumImage& cube,
                            const PreprocessOptions& opts, Matrix* filtered_out = nullptr);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt_a, std::uint64_t salt_b = 0);

// ---------------------------------------------------------------------------
// CLI command configurations and runners. Every runner writes a normalized
// manifest (manifest.txt) sufficient to re-run bit-identically, never
// embeds timestamps, and throws Error with the failing stage's name.
// ---------------------------------------------------------------------------

struct GenerateConfig {
  std::string spec_path;          // empty = built-in default
  bool full_scale = false;        // built-in default at full scale
  std::string object = "layers";  // "layers" or "two-phase"
  std::optional<double> dose;     // overrides the spec's dose
  std::optional<std::uint64_t> seed;
  std::string noise = "both";     // "on", "off", "both"
  std::filesystem::path out_dir;

  std::string normalized_text() const;
};

struct GenerateResult {
  std::filesystem::path noisy_path;      // empty unless written
  std::filesystem::path noise_free_path; // empty unless written
};

GenerateResult cmd_generate(const GenerateConfig& config);

struct DenoiseConfig {
  std::string input;
  std::string truth; // optional noise-free twin
  std::filesystem::path out_dir;
  PreprocessOptions pre;
  std::string method = "aniso"; // "aniso", "gd", "manual"
  int k_manual = 0;
  AnisoCriterion criterion = AnisoCriterion::hist;
  double threshold = 0.5;
  int max_scan = 30;
  std::optional<double> sigma2; // override for the gd method / report
  bool force = false;
  std::string svd = "auto"; // "auto", "bdcsvd", "gram"
  bool maps = false;
  bool clamp = false;

  std::string normalized_text() const;
  static DenoiseConfig from_manifest(const std::filesystem::path& path);
};

struct DenoiseResult {
  int k_used = 0;
  TruncationReport report;
  std::optional<QualityReport> quality;
  double negative_fraction = 0.0;
  std::filesystem::path denoised_path;
};

DenoiseResult cmd_denoise(const DenoiseConfig& config);

struct AnalyzeConfig {
  std::string input;
  std::string reference; // optional second dataset for proximity
  std::filesystem::path out_dir;
  PreprocessOptions pre;
  AnisoCriterion criterion = AnisoCriterion::hist;
  double threshold = 0.5;
  int max_scan = 30;
  int proximity_components = 10;
  bool grids = false; // dump the pairwise scatter-grid tableau
  int grid_max = 8;
  std::string svd = "auto";

  std::string normalized_text() const;
};

struct AnalyzeResult {
  AnisotropySeries series;
  std::vector<int> proximity_argmax; // per reference component, 1-based
  std::vector<double> proximity_max;
};

AnalyzeResult cmd_analyze(const AnalyzeConfig& config);

struct DoseStudyConfig {
  std::vector<double> doses = {1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2, 1, 2, 4, 8, 16, 32, 64};
  std::uint64_t seed = 1;
  int replicates = 8;
  Index rows = 100;
  Index cols = 100;
  double reference_total = 6000.0;
  std::filesystem::path out_dir;

  std::string normalized_text() const;
};

struct DoseStudyRow {
  double dose = 0.0;
  double var_true_w = 0.0; // weights from the noise-free twin
  double var_est_w = 0.0;  // weights from the noisy data itself
};

/// Appendix-style sparsity/weighting study on the two-phase ramp object.
/// Noise is layered as Poisson increments across the ascending dose list
/// (marginals stay exactly Poisson) and averaged over replicates, so the
/// reported curves carry the systematic weighting bias rather than
/// per-dose sampling scatter.
std::vector<DoseStudyRow> cmd_dose_study(const DoseStudyConfig& config);

struct TruncationReportConfig {
  std::string input;        // SIC mode
  std::string truth;        // optional twin for the retrievability column
  std::string fixture;      // CSV of true variances (one per line) instead of SIC
  double fixture_sigma2 = 0.0;
  Index fixture_m = 0;
  Index fixture_n = 0;
  std::filesystem::path out_dir;
  PreprocessOptions pre;
  AnisoCriterion criterion = AnisoCriterion::hist;
  double threshold = 0.5;
  int max_scan = 30;
  std::optional<double> sigma2;
  bool force = false;
  std::string svd = "auto";

  std::string normalized_text() const;
};

struct TruncationReportResult {
  std::string report_text;
  std::optional<TruncationReport> report; // SIC mode only
};

TruncationReportResult cmd_truncation_report(const TruncationReportConfig& config);

const char* weight_choice_name(WeightChoice w);
WeightChoice weight_choice_from(const std::string& name);
SvdMethod svd_method_from(const std::string& name);
AnisoCriterion aniso_criterion_from(const std::string& name);

} // namespace specden
