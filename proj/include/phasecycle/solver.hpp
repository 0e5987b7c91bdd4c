#pragma once

#include <cstdint>
#include <random>

#include "phasecycle/models.hpp"
#include "phasecycle/regularizers.hpp"

namespace phasecycle {

/// How a constant offset c becomes the wrap field added before the phase prox.
enum class WrapMode {
  /// w = wrap(p0 + c) - p0 on cycled components: moves the wrap contours of the
  /// initial phase. Zero offset gives w = 0 when p0 is principal-valued.
  InitialRelative,
  /// w = c everywhere on cycled components.
  Constant,
};

struct PhaseWrapSet {
  RealVec offsets;  // constant phase offsets c_k, first entry 0
};

/// Offsets {2 pi k / count : k = 0..count-1}.
PhaseWrapSet make_phase_wrap_set(int count);

/// Index into a uniform offset set nearest below the global phase of p0 (the angle of
/// sum exp(i p0) over cycled components). Shifting p0 by 2 pi j / count shifts it by j.
std::size_t wrap_anchor_index(const ForwardModel& model, const PhaseVec& p0, std::size_t count);

/// Materialize one wrap field per offset for the phase layout of `model`. Entry j uses
/// offset (j + wrap_anchor_index) mod count, so the draw sequence follows the global
/// phase of p0.
std::vector<RealVec> realize_wraps(const PhaseWrapSet& set, const ForwardModel& model, const PhaseVec& p0,
                                   WrapMode mode = WrapMode::InitialRelative);

/// Uniform draw of a wrap index in [0, count).
std::size_t draw_wrap_index(std::mt19937_64& rng, std::size_t count);

struct SolverConfig {
  int outer_iters = 100;
  int inner_iters = 10;
  std::uint64_t seed = 0;
  int wrap_count = 8;
  WrapMode wrap_mode = WrapMode::InitialRelative;
  double step_safety = 1.0;
  bool record_history = false;
  /// Multiplier on lambda_max estimates before inverting them into step sizes.
  double spectral_safety = 1.01;
  int power_iters = 30;
  double power_tol = 1e-6;
  /// Abort when the data term exceeds this multiple of its initial value.
  double divergence_factor = 10.0;

  void validate() const;
};

/// lambda_max(A^*A), lambda_max(M^*M), lambda_max(P^*P).
struct SpectralConstants {
  double a = 1.0;
  double m = 1.0;
  double p = 1.0;
};

SpectralConstants estimate_spectral_constants(const ForwardModel& model, int max_iters = 30, double tol = 1e-6,
                                              std::uint64_t seed = 0);

struct StepSizes {
  double magnitude = 0.0;
  double phase = 0.0;
};

/// alpha_m = 1 / (s lambda_A lambda_M), alpha_p = 1 / (s lambda_A lambda_P max|M m|^2), s = safety.
/// Throws NumericalError when M m vanishes.
StepSizes default_step_sizes(const ForwardModel& model, const SpectralConstants& constants, const MagnitudeVec& m,
                             double safety = 1.01);
StepSizes default_step_sizes(const ForwardModel& model, const MagnitudeVec& m);

/// Per-step trace of an update loop. Entries are after each step.
struct StepTrace {
  RealVec objective;
  RealVec robust_objective;
  RealVec residual_norm;
};

/// K proximal-gradient steps on m with p fixed.
MagnitudeVec magnitude_update(const ForwardModel& model, const MagnitudeVec& m, const PhaseVec& p,
                              std::span<const Cx> y, const Regularizer& g_m, double alpha, int steps,
                              StepTrace* trace = nullptr, const Regularizer* g_p = nullptr,
                              std::span<const RealVec> wraps = {});

/// K phase-cycled steps: p <- prox(p + w - alpha grad) - w with w drawn uniformly
/// from `wraps` at every step.
PhaseVec phase_update_cycled(const ForwardModel& model, const MagnitudeVec& m, const PhaseVec& p,
                             std::span<const Cx> y, const Regularizer& g_p, double alpha, int steps,
                             std::span<const RealVec> wraps, std::mt19937_64& rng, StepTrace* trace = nullptr,
                             const Regularizer* g_m = nullptr);

struct ReconResult {
  MagnitudeVec m;
  PhaseVec p;
  /// One entry per inner step (magnitude and phase), when recording.
  RealVec objective_history;
  RealVec robust_objective_history;
  RealVec residual_history;
  /// Robust objective at the start and after each outer iteration (always recorded).
  RealVec robust_objective_outer;
  SpectralConstants constants;
  int outer_iterations = 0;
};

ReconResult reconstruct(const ForwardModel& model, std::span<const Cx> y, const MagnitudeVec& m0,
                        const PhaseVec& p0, const Regularizer& g_m, const Regularizer& g_p,
                        const SolverConfig& config);

/// Zero-filled start: partial Fourier m = |A^* y|, p = angle(A^* y); water-fat
/// (m_w, m_f) = |M^* A^* y|, phases from angle(M^* A^* y), zero field; flow
/// m = mean over encodes of |A^* y|, p_bg = angle of the first encode, zero velocity.
std::pair<MagnitudeVec, PhaseVec> init_zero_filled(const ForwardModel& model, std::span<const Cx> y);

/// Replace negative magnitudes by |m| and shift the partner phase by pi (wrapped).
/// The complex image is unchanged.
void fold_negative_magnitude(const ForwardModel& model, MagnitudeVec& m, PhaseVec& p);

}  // namespace phasecycle
