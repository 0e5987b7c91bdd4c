#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "phasecycle/models.hpp"
#include "phasecycle/phantom.hpp"
#include "phasecycle/solver.hpp"
#include "phasecycle/wavelet.hpp"

namespace phasecycle {

struct SamplingConfig {
  double accel = 1.0;  // Poisson-disk acceleration, 1 = fully sampled
  std::size_t calib = 24;
  double partial_fourier = 1.0;
  std::size_t pf_axis = 0;
  std::optional<std::uint64_t> seed;
};

struct ModelConfig {
  ModelKind kind = ModelKind::PartialFourier;
  int coils = 8;
  std::optional<std::uint64_t> coil_seed;
  WaterFatSpec waterfat;
  FlowEncodingSpec flow;
  SamplingConfig sampling;
};

struct PhantomConfig {
  PhantomKind kind = PhantomKind::PfBrainLike;
  Shape shape = {64, 64};
  double phase_range = 0.0;
  std::optional<std::uint64_t> seed;
  PhantomOptions options;
};

struct NoiseConfig {
  double sigma = 0.0;
  std::optional<std::uint64_t> seed;
};

enum class RegKind { None, L2, L1Wavelet, DivFree };

std::string reg_kind_name(RegKind kind);
RegKind parse_reg_kind(const std::string& name);

struct RegTerm {
  RegKind kind = RegKind::None;
  double lambda = 0.0;
};

struct RegularizationConfig {
  WaveletSpec wavelet;
  RegTerm magnitude;
  RegTerm phase;
  /// Water-fat field map weight; defaults to the phase weight.
  std::optional<double> field_lambda;
};

struct GridSearchConfig {
  RealVec lambda_m = {1e-4, 1e-3, 1e-2};
  RealVec lambda_p = {1e-4, 1e-3, 1e-2};
  /// Second stage: refine_points log-spaced values per axis within a factor
  /// refine_factor of the first-stage optimum.
  int refine_points = 3;
  double refine_factor = 3.0;
  std::optional<int> outer_iters;
};

struct PathsConfig {
  std::filesystem::path data;
  std::filesystem::path out;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  PhantomConfig phantom;
  NoiseConfig noise;
  RegularizationConfig regularization;
  SolverConfig solver;
  bool solver_seed_set = false;
  GridSearchConfig gridsearch;
  PathsConfig paths;
  /// Rewrite m < 0 as (|m|, p + pi) after reconstruction.
  bool fold_negative = false;

  std::uint64_t phantom_seed() const { return phantom.seed.value_or(seed); }
  std::uint64_t coil_seed() const { return model.coil_seed.value_or(seed + 1); }
  std::uint64_t sampling_seed() const { return model.sampling.seed.value_or(seed + 2); }
  std::uint64_t noise_seed() const { return noise.seed.value_or(seed + 3); }
  std::uint64_t solver_seed() const { return solver_seed_set ? solver.seed : seed + 4; }

  void validate() const;
};

/// Throws ConfigError naming the offending key for unknown keys, wrong types or bad values.
ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON with every field resolved (seeds included). Stable across runs.
std::string dump_config(const ExperimentConfig& config);

}  // namespace phasecycle
