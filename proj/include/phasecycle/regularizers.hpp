#pragma once

#include <functional>
#include <memory>
#include <string>

#include "phasecycle/types.hpp"
#include "phasecycle/wavelet.hpp"

namespace phasecycle {

/// Penalty g with its proximal map prox_{alpha g}(x) = argmin_z 1/2|z - x|^2 + alpha g(z).
class Regularizer {
 public:
  using ValueFn = std::function<double(std::span<const double>)>;
  using ProxFn = std::function<RealVec(std::span<const double>, double)>;
  using ComplexProxFn = std::function<CxVec(std::span<const Cx>, double)>;

  Regularizer(std::string name, double lambda, ValueFn value, ProxFn prox, ComplexProxFn complex_prox = {});

  const std::string& name() const { return name_; }
  double lambda() const { return lambda_; }

  double value(std::span<const double> x) const { return (*value_)(x); }
  RealVec prox(std::span<const double> x, double alpha) const;
  /// Complex-valued prox. Throws ConfigError when the penalty has no complex form.
  CxVec prox(std::span<const Cx> x, double alpha) const;

 private:
  std::string name_;
  double lambda_;
  std::shared_ptr<const ValueFn> value_;
  std::shared_ptr<const ProxFn> prox_;
  std::shared_ptr<const ComplexProxFn> complex_prox_;
};

/// y_i = phase(x_i) * max(|x_i| - t, 0).
RealVec soft_threshold(std::span<const double> x, double t);
CxVec soft_threshold(std::span<const Cx> x, double t);

Regularizer make_zero_reg();

/// (lambda / 2) |x|^2.
Regularizer make_l2_reg(double lambda);

/// lambda * |W x|_1 with W the orthonormal DWT, applied to each image of
/// `image_shape` in a stacked vector. The prox is exact.
Regularizer make_l1_wavelet_reg(double lambda, const WaveletSpec& spec, const Shape& image_shape);

/// Applies parts[k] to the k-th block of `component_size` entries.
/// Value is the sum of the part values.
Regularizer make_separable_reg(std::vector<Regularizer> parts, std::size_t component_size);

/// Periodic central-difference divergence of a 3-component field on a 3-D grid;
/// component j is differentiated along axis j.
RealVec central_divergence(std::span<const double> v, const Shape& shape);

/// Orthogonal projection onto fields with zero central-difference divergence.
/// `v` stacks (v_0, v_1, v_2), each of `shape` (rank 3, every extent >= 2).
/// Works in the Fourier domain with the central-difference wavenumbers
/// k_j = sin(2 pi f_j / n_j): v^ - k (k . v^) / |k|^2; modes with k = 0 pass through.
RealVec divfree_project(std::span<const double> v, const Shape& shape);

/// Flow phase penalty for p = (p_bg, p_x, p_y, p_z): lambda_smooth_bg * |W p_bg|_1
/// plus the indicator of divergence-free (p_x, p_y, p_z). The prox is the wavelet
/// prox on p_bg and divfree_project on the velocity part.
Regularizer make_divfree_reg(double lambda_smooth_bg, const WaveletSpec& spec, const Shape& image_shape);

}  // namespace phasecycle
