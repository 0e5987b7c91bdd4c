#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>

#include "phasecycle/config.hpp"

namespace phasecycle {

/// Number of sampling masks the model expects (1, echoes or encodes).
std::size_t acquisition_count(const ExperimentConfig& config);

/// One mask per acquisition; acquisition e uses sampling seed + e.
std::vector<RealVec> make_masks(const ExperimentConfig& config);

ForwardModel build_model(const ExperimentConfig& config, const Shape& image_shape,
                         const std::vector<RealVec>& masks, const std::vector<CxVec>& maps);

/// (g_m, g_p) for the model layout. Water-fat phase terms act per component, with
/// field_lambda (default: the phase lambda) on the field map. Flow "divfree" applies
/// the phase lambda to the background and projects the velocities; flow "none" keeps
/// the background term and leaves the velocities free.
std::pair<Regularizer, Regularizer> build_regularizers(const ExperimentConfig& config, const ForwardModel& model);

/// Files in a dataset directory written by cmd_simulate.
struct Dataset {
  Shape image_shape;
  std::vector<RealVec> masks;
  std::vector<CxVec> maps;
  CxVec kspace;
  std::optional<RealVec> truth_m;
  std::optional<RealVec> truth_p;
  std::optional<RealVec> truth_support;
};

Dataset load_dataset(const std::filesystem::path& dir);

/// Writes truth_m, truth_p, truth_support, kspace, masks, maps and manifest.json into `out`,
/// which must exist. The manifest holds the canonical config, its hash, seeds and
/// payload hashes, and is byte-identical for identical inputs.
void cmd_simulate(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream* log = nullptr);

struct ReconOutputs {
  ReconResult result;
  /// PSNR of |m| per component vs. truth_m, empty without truth.
  std::vector<std::pair<std::string, double>> psnr;
  double final_objective = 0.0;
  double wall_time_s = 0.0;
};

/// Zero-filled start, solve, optional fold of negative magnitudes.
ReconOutputs run_reconstruction(const ExperimentConfig& config, const Dataset& data);

/// Writes m, p, robust_objective_outer (and the per-step histories when recording)
/// plus report.json into `out`.
ReconOutputs cmd_reconstruct(const ExperimentConfig& config, const std::filesystem::path& data_dir,
                             const std::filesystem::path& out, std::ostream* log = nullptr);

/// JSON report comparing two arrays of equal size: psnr, psnr_normalized, rmse, and
/// per-component PSNR when the leading axis is labelled "component". Complex arrays
/// are compared by modulus; `modulus` does the same for real arrays.
std::string cmd_metrics(const std::filesystem::path& ref, const std::filesystem::path& rec, bool modulus = false);

enum class RenderWindow { Auto, Phase, Fixed };

struct RenderOptions {
  RenderWindow window = RenderWindow::Auto;
  double lo = 0.0;  // Fixed window
  double hi = 1.0;
  /// Flattened index over the leading axes; the image is the last two axes.
  std::size_t slice = 0;
  /// Complex arrays: render the phase instead of the modulus.
  bool phase = false;
  /// Blank the floor(threshold * count) smallest-magnitude pixels. 0 disables.
  double mask_threshold = 0.0;
  /// Magnitude source for the mask; the rendered array itself when empty. Uses the same
  /// slice when the source has it, else the root-sum-of-squares over its slices.
  std::filesystem::path mask_path;
};

/// 8-bit binary portable graymap. Constant images in the auto window render mid-gray.
std::vector<unsigned char> render_gray(std::span<const double> image, std::size_t width, std::size_t height,
                                       const RenderOptions& options, std::span<const double> mask_source = {});
void cmd_render(const std::filesystem::path& array, const std::filesystem::path& out_image,
                const RenderOptions& options = {});

/// Two-stage lambda search scored by mean magnitude PSNR vs. truth. Writes gridsearch.json.
std::pair<double, double> cmd_gridsearch(const ExperimentConfig& config, const std::filesystem::path& data_dir,
                                         const std::filesystem::path& out, std::ostream* log = nullptr);

}  // namespace phasecycle
