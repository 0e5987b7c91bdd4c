#pragma once

#include "phasecycle/types.hpp"

namespace phasecycle::fft {

enum class Direction { Forward, Inverse };

/// In-place orthonormal N-d DFT of a row-major block of shape `shape`.
/// Zero frequency sits at index 0.
void transform(std::span<Cx> data, const Shape& shape, Direction dir);

/// Centered orthonormal DFT: fftshift(F(ifftshift(x))), zero frequency at index n/2.
void centered(std::span<Cx> data, const Shape& shape, Direction dir);

/// Circular shift of a row-major block, out[i + shift] = in[i] per axis.
void circshift(std::span<const Cx> in, std::span<Cx> out, const Shape& shape,
               const std::vector<std::ptrdiff_t>& shift);

}  // namespace phasecycle::fft
