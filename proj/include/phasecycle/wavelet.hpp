#pragma once

#include "phasecycle/types.hpp"

namespace phasecycle {

/// Daubechies orthonormal families, named by filter length.
enum class WaveletFamily { Daubechies4, Daubechies6 };

struct WaveletSpec {
  WaveletFamily family = WaveletFamily::Daubechies4;
  int levels = 4;
};

/// Low-pass analysis filter taps, sum = sqrt(2), unit energy.
const RealVec& wavelet_lowpass(WaveletFamily family);
/// High-pass taps g[k] = (-1)^k h[L-1-k].
RealVec wavelet_highpass(WaveletFamily family);

WaveletFamily parse_wavelet_family(const std::string& name);
std::string wavelet_family_name(WaveletFamily family);

/// Throws ShapeError naming the first axis (extent > 1) not divisible by 2^levels.
void check_wavelet_shape(const Shape& shape, const WaveletSpec& spec);

/// Largest level count usable on `shape` (axes of extent 1 are ignored).
int max_wavelet_levels(const Shape& shape);

/// Separable periodic multi-level DWT over every axis of extent > 1. Coefficients
/// use the in-place pyramid layout: at each level the current approximation block
/// (the low-index corner) is split into [approx | detail] along each axis.
RealVec dwt(std::span<const double> x, const Shape& shape, const WaveletSpec& spec);
RealVec idwt(std::span<const double> coeffs, const Shape& shape, const WaveletSpec& spec);
CxVec dwt(std::span<const Cx> x, const Shape& shape, const WaveletSpec& spec);
CxVec idwt(std::span<const Cx> coeffs, const Shape& shape, const WaveletSpec& spec);

}  // namespace phasecycle
