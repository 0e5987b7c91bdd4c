#pragma once

#include <cstdint>
#include <string>

#include "phasecycle/models.hpp"
#include "phasecycle/types.hpp"

namespace phasecycle {

enum class PhantomKind { PfBrainLike, WaterFat2Compartment, FlowTube };

std::string phantom_kind_name(PhantomKind kind);
PhantomKind parse_phantom_kind(const std::string& name);

struct PhantomOptions {
  /// Water-fat: field map spans [-field_peak_hz, field_peak_hz].
  double field_peak_hz = 60.0;
  /// Water-fat: time unit of the field component (matches WaterFatSpec::field_unit()).
  double field_unit_s = 1e-3;
  /// Flow: largest velocity component magnitude, in radians of encoded phase.
  double velocity_peak = 0.8;
};

/// Ground truth laid out like the matching ForwardModel: m and p are stacked components.
struct Phantom {
  PhantomKind kind;
  Shape shape;
  std::vector<std::string> m_labels;
  RealVec m;
  std::vector<std::string> p_labels;
  RealVec p;
  /// 1 inside the object (vessel for flow-tube), 0 elsewhere.
  RealVec support;
  double phase_range = 0.0;

  std::size_t image_size() const { return shape_size(shape); }
  std::span<const double> m_component(std::size_t k) const;
  std::span<const double> p_component(std::size_t k) const;
};

/// Shapes need >= 16 samples per axis; flow-tube needs a 3-D shape.
Phantom make_phantom(PhantomKind kind, const Shape& shape, double phase_range, std::uint64_t seed,
                     const PhantomOptions& options = {});

/// Smooth complex coil maps with unit sum of squares at every voxel. One coil gives all ones.
std::vector<CxVec> make_sens_maps(const Shape& shape, int coils, std::uint64_t seed);

enum class MaskKind { Full, PoissonDisk, PartialFourier, Combined };

struct SamplingMask {
  MaskKind kind = MaskKind::Full;
  Shape shape;
  RealVec values;  // 0 or 1
  double acceleration = 1.0;  // size / count
  std::size_t calib_size = 0;
  double r_min = 0.0;  // Poisson disk: radius at the k-space center

  std::size_t count() const;
};

SamplingMask full_mask(const Shape& shape);

/// Variable-density Poisson disk on the first two axes, replicated along the rest.
/// Radius r(k) = r_min (1 + 2 |k| / k_max), r_min bisected to hit size / accel samples.
/// A calib_size^2 block at the k-space center is always sampled.
SamplingMask poisson_disk_mask(const Shape& shape, double accel, std::size_t calib_size, std::uint64_t seed);

/// Local disk radius used by poisson_disk_mask for the given r_min.
double poisson_radius(const Shape& shape, double r_min, double k0, double k1);

/// Keeps indices [0, floor(fraction * n)) along `axis`.
SamplingMask partial_fourier_mask(const Shape& shape, double fraction, std::size_t axis);

/// Element-wise AND.
SamplingMask combine_masks(const SamplingMask& a, const SamplingMask& b);

/// y = forward(model, truth) + complex white Gaussian noise with per-part std sigma.
CxVec simulate_acquisition(const ForwardModel& model, const Phantom& phantom, double noise_sigma,
                           std::uint64_t seed);

/// 20 log10(max|ref| / |ref - rec|_2). Identical inputs give +inf.
double psnr(std::span<const double> ref, std::span<const double> rec);
/// Same with the root-mean-square error in the denominator.
double psnr_normalized(std::span<const double> ref, std::span<const double> rec);

}  // namespace phasecycle
