#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "phasecycle/types.hpp"

namespace phasecycle {

/// Linear map between complex vector spaces with an analytically defined adjoint.
///
/// A LinOp is an immutable value: copies share the same kernels, and apply /
/// adjoint_apply are pure, so one operator can be used from several threads.
/// Kernels receive an output buffer of the right size and must overwrite all
/// of it.
class LinOp {
 public:
  using Kernel = std::function<void(std::span<const Cx>, std::span<Cx>)>;

  LinOp(std::string name, Shape in_shape, Shape out_shape, Kernel forward, Kernel adjoint);

  const std::string& name() const { return name_; }
  const Shape& in_shape() const { return in_shape_; }
  const Shape& out_shape() const { return out_shape_; }
  std::size_t in_size() const { return in_size_; }
  std::size_t out_size() const { return out_size_; }

  CxVec apply(std::span<const Cx> x) const;
  CxVec adjoint_apply(std::span<const Cx> y) const;
  void apply_into(std::span<const Cx> x, std::span<Cx> out) const;
  void adjoint_into(std::span<const Cx> y, std::span<Cx> out) const;

  /// Real-coefficient convenience: applies to a real vector and keeps the real part.
  RealVec apply_real(std::span<const double> x) const;
  RealVec adjoint_real(std::span<const double> y) const;

  /// The adjoint as an operator in its own right.
  LinOp adjoint() const;

 private:
  std::string name_;
  Shape in_shape_, out_shape_;
  std::size_t in_size_, out_size_;
  std::shared_ptr<const Kernel> forward_, adjoint_;
};

LinOp identity_op(const Shape& shape);
LinOp scale_op(Cx c, const Shape& shape);

/// Element-wise multiplication by fixed complex weights.
LinOp diag_op(CxVec weights, const Shape& shape);

/// Centered orthonormal DFT of each of `batch` stacked images followed by
/// element-wise masking. Input and output shape are {batch, image...}
/// (just image_shape when batch == 1).
LinOp make_fft_sampling_op(const Shape& image_shape, std::span<const double> sample_mask,
                           std::size_t batch = 1);

/// x -> (map_c * x)_c over coils; output shape {coils, image...}.
LinOp make_sens_op(const std::vector<CxVec>& maps, const Shape& image_shape);

/// compose({A, B, C}) applies C first: A(B(C(x))).
LinOp compose(const std::vector<LinOp>& ops);
LinOp block_diag(const std::vector<LinOp>& ops);
/// All ops share the input; outputs are concatenated. Adjoint sums the adjoints.
LinOp vstack(const std::vector<LinOp>& ops);
/// Inputs are concatenated; outputs summed. hstack(ops) == vstack(adjoints)^*.
LinOp hstack(const std::vector<LinOp>& ops);

/// Block matrix of scaled identities: out_r = sum_c coeffs[r * cols + c] * x_c,
/// each block acting on one image of `image_shape`.
LinOp scalar_block_op(std::size_t rows, std::size_t cols, CxVec coeffs, const Shape& image_shape);

struct SpectralEstimate {
  double lambda_max = 0.0;
  int iterations_used = 0;
  double residual = 0.0;
  bool converged = false;
};

/// Largest eigenvalue of G^* G by power iteration on the normal operator,
/// started from a seeded complex Gaussian vector. The residual is the relative
/// change of the Rayleigh quotient at the last iteration; `converged` is false
/// when it is still above `tol` after `max_iters` iterations.
SpectralEstimate max_eigenvalue(const LinOp& op, int max_iters = 30, double tol = 1e-6,
                                std::uint64_t seed = 0);

}  // namespace phasecycle
