#include "phasecycle/regularizers.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "phasecycle/fft.hpp"

namespace phasecycle {

Regularizer::Regularizer(std::string name, double lambda, ValueFn value, ProxFn prox,
                         ComplexProxFn complex_prox)
    : name_(std::move(name)),
      lambda_(lambda),
      value_(std::make_shared<const ValueFn>(std::move(value))),
      prox_(std::make_shared<const ProxFn>(std::move(prox))),
      complex_prox_(complex_prox ? std::make_shared<const ComplexProxFn>(std::move(complex_prox)) : nullptr) {
  if (lambda < 0.0) throw ConfigError(name_ + ": regularization weight must be >= 0");
}

RealVec Regularizer::prox(std::span<const double> x, double alpha) const {
  if (alpha < 0.0) throw ConfigError(name_ + ": prox step must be >= 0");
  return (*prox_)(x, alpha);
}

CxVec Regularizer::prox(std::span<const Cx> x, double alpha) const {
  if (!complex_prox_) throw ConfigError(name_ + ": no complex-valued proximal operator");
  if (alpha < 0.0) throw ConfigError(name_ + ": prox step must be >= 0");
  return (*complex_prox_)(x, alpha);
}

RealVec soft_threshold(std::span<const double> x, double t) {
  if (t < 0.0) throw ConfigError("soft_threshold: threshold must be >= 0");
  RealVec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = std::abs(x[i]) - t;
    y[i] = a > 0.0 ? std::copysign(a, x[i]) : 0.0;
  }
  return y;
}

CxVec soft_threshold(std::span<const Cx> x, double t) {
  if (t < 0.0) throw ConfigError("soft_threshold: threshold must be >= 0");
  CxVec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double mag = std::abs(x[i]);
    y[i] = mag > t ? x[i] * ((mag - t) / mag) : Cx{};
  }
  return y;
}

Regularizer make_zero_reg() {
  return Regularizer(
      "zero", 0.0, [](std::span<const double>) { return 0.0; },
      [](std::span<const double> x, double) { return RealVec(x.begin(), x.end()); },
      [](std::span<const Cx> x, double) { return CxVec(x.begin(), x.end()); });
}

Regularizer make_l2_reg(double lambda) {
  return Regularizer(
      "l2", lambda,
      [lambda](std::span<const double> x) {
        const double n = norm2(x);
        return 0.5 * lambda * n * n;
      },
      [lambda](std::span<const double> x, double alpha) {
        RealVec y(x.begin(), x.end());
        for (auto& v : y) v /= 1.0 + alpha * lambda;
        return y;
      },
      [lambda](std::span<const Cx> x, double alpha) {
        CxVec y(x.begin(), x.end());
        for (auto& v : y) v /= 1.0 + alpha * lambda;
        return y;
      });
}

namespace {

template <class T>
std::vector<T> l1_wavelet_prox(std::span<const T> x, double t, const WaveletSpec& spec, const Shape& shape) {
  const std::size_t n = shape_size(shape);
  if (x.size() % n != 0)
    throw ShapeError("l1_wavelet: length " + std::to_string(x.size()) + " is not a multiple of image size " +
                     std::to_string(n));
  std::vector<T> out(x.size());
  for (std::size_t off = 0; off < x.size(); off += n) {
    if (t == 0.0) {
      std::copy(x.begin() + off, x.begin() + off + n, out.begin() + off);
      continue;
    }
    auto c = dwt(x.subspan(off, n), shape, spec);
    auto s = soft_threshold(std::span<const T>(c), t);
    auto r = idwt(std::span<const T>(s), shape, spec);
    std::copy(r.begin(), r.end(), out.begin() + off);
  }
  return out;
}

}  // namespace

Regularizer make_l1_wavelet_reg(double lambda, const WaveletSpec& spec, const Shape& image_shape) {
  check_wavelet_shape(image_shape, spec);
  return Regularizer(
      "l1_wavelet", lambda,
      [lambda, spec, image_shape](std::span<const double> x) {
        if (lambda == 0.0) return 0.0;
        const std::size_t n = shape_size(image_shape);
        if (x.size() % n != 0) throw ShapeError("l1_wavelet: length is not a multiple of image size");
        double s = 0.0;
        for (std::size_t off = 0; off < x.size(); off += n)
          for (double c : dwt(x.subspan(off, n), image_shape, spec)) s += std::abs(c);
        return lambda * s;
      },
      [lambda, spec, image_shape](std::span<const double> x, double alpha) {
        return l1_wavelet_prox<double>(x, lambda * alpha, spec, image_shape);
      },
      [lambda, spec, image_shape](std::span<const Cx> x, double alpha) {
        return l1_wavelet_prox<Cx>(x, lambda * alpha, spec, image_shape);
      });
}

Regularizer make_separable_reg(std::vector<Regularizer> parts, std::size_t component_size) {
  if (parts.empty()) throw ConfigError("separable regularizer needs at least one part");
  auto p = std::make_shared<const std::vector<Regularizer>>(std::move(parts));
  const std::size_t total = p->size() * component_size;
  double lam = 0.0;
  std::string name = "separable(";
  for (std::size_t i = 0; i < p->size(); ++i) {
    lam = std::max(lam, (*p)[i].lambda());
    name += (i ? "," : "") + (*p)[i].name();
  }
  auto check = [total](std::size_t size) {
    if (size != total)
      throw ShapeError("separable regularizer: expected length " + std::to_string(total) + ", got " +
                       std::to_string(size));
  };
  return Regularizer(
      name + ")", lam,
      [p, component_size, check](std::span<const double> x) {
        check(x.size());
        double s = 0.0;
        for (std::size_t i = 0; i < p->size(); ++i) s += (*p)[i].value(x.subspan(i * component_size, component_size));
        return s;
      },
      [p, component_size, check](std::span<const double> x, double alpha) {
        check(x.size());
        RealVec out(x.size());
        for (std::size_t i = 0; i < p->size(); ++i) {
          auto r = (*p)[i].prox(x.subspan(i * component_size, component_size), alpha);
          std::copy(r.begin(), r.end(), out.begin() + static_cast<std::ptrdiff_t>(i * component_size));
        }
        return out;
      });
}

namespace {

void check_flow_shape(const Shape& shape, const char* who) {
  if (shape.size() != 3) throw ShapeError(std::string(who) + ": velocity grid must be 3-D");
  for (std::size_t a = 0; a < 3; ++a)
    if (shape[a] < 2)
      throw ShapeError(std::string(who) + ": axis " + std::to_string(a) + " needs at least 2 samples");
}

}  // namespace

RealVec central_divergence(std::span<const double> v, const Shape& shape) {
  check_flow_shape(shape, "central_divergence");
  const std::size_t n = shape_size(shape);
  if (v.size() != 3 * n) throw ShapeError("central_divergence: expected 3 stacked components");
  const std::size_t n0 = shape[0], n1 = shape[1], n2 = shape[2];
  RealVec div(n, 0.0);
  auto at = [&](std::size_t c, std::size_t i, std::size_t j, std::size_t k) {
    return v[c * n + (i * n1 + j) * n2 + k];
  };
  for (std::size_t i = 0; i < n0; ++i)
    for (std::size_t j = 0; j < n1; ++j)
      for (std::size_t k = 0; k < n2; ++k) {
        const double d0 = at(0, (i + 1) % n0, j, k) - at(0, (i + n0 - 1) % n0, j, k);
        const double d1 = at(1, i, (j + 1) % n1, k) - at(1, i, (j + n1 - 1) % n1, k);
        const double d2 = at(2, i, j, (k + 1) % n2) - at(2, i, j, (k + n2 - 1) % n2);
        div[(i * n1 + j) * n2 + k] = 0.5 * (d0 + d1 + d2);
      }
  return div;
}

RealVec divfree_project(std::span<const double> v, const Shape& shape) {
  check_flow_shape(shape, "divfree_project");
  const std::size_t n = shape_size(shape);
  if (v.size() != 3 * n) throw ShapeError("divfree_project: expected 3 stacked velocity components");

  std::array<CxVec, 3> spec;
  for (std::size_t c = 0; c < 3; ++c) {
    spec[c] = to_complex(v.subspan(c * n, n));
    fft::transform(spec[c], shape, fft::Direction::Forward);
  }

  std::array<RealVec, 3> wavenumber;
  for (std::size_t a = 0; a < 3; ++a) {
    wavenumber[a].resize(shape[a]);
    for (std::size_t f = 0; f < shape[a]; ++f)
      wavenumber[a][f] = std::sin(kTwoPi * static_cast<double>(f) / static_cast<double>(shape[a]));
  }

  const std::size_t n1 = shape[1], n2 = shape[2];
  for (std::size_t i = 0; i < shape[0]; ++i)
    for (std::size_t j = 0; j < n1; ++j)
      for (std::size_t k = 0; k < n2; ++k) {
        const std::size_t idx = (i * n1 + j) * n2 + k;
        const double kx = wavenumber[0][i], ky = wavenumber[1][j], kz = wavenumber[2][k];
        const double kk = kx * kx + ky * ky + kz * kz;
        if (kk < 1e-24) continue;
        const Cx kv = kx * spec[0][idx] + ky * spec[1][idx] + kz * spec[2][idx];
        spec[0][idx] -= kx * kv / kk;
        spec[1][idx] -= ky * kv / kk;
        spec[2][idx] -= kz * kv / kk;
      }

  RealVec out(3 * n);
  for (std::size_t c = 0; c < 3; ++c) {
    fft::transform(spec[c], shape, fft::Direction::Inverse);
    for (std::size_t i = 0; i < n; ++i) out[c * n + i] = spec[c][i].real();
  }
  return out;
}

Regularizer make_divfree_reg(double lambda_smooth_bg, const WaveletSpec& spec, const Shape& image_shape) {
  check_flow_shape(image_shape, "make_divfree_reg");
  const Regularizer bg = make_l1_wavelet_reg(lambda_smooth_bg, spec, image_shape);
  const std::size_t n = shape_size(image_shape);
  auto check = [n](std::size_t size) {
    if (size != 4 * n)
      throw ShapeError("divfree regularizer: expected 4 components (p_bg, p_x, p_y, p_z), got " +
                       std::to_string(static_cast<double>(size) / static_cast<double>(n)));
  };
  return Regularizer(
      "divfree", lambda_smooth_bg,
      [bg, n, image_shape, check](std::span<const double> p) {
        check(p.size());
        auto vel = p.subspan(n, 3 * n);
        const double div = norm2(central_divergence(vel, image_shape));
        if (div > 1e-8 * std::max(1.0, norm2(vel))) return std::numeric_limits<double>::infinity();
        return bg.value(p.subspan(0, n));
      },
      [bg, n, image_shape, check](std::span<const double> p, double alpha) {
        check(p.size());
        RealVec out(4 * n);
        auto b = bg.prox(p.subspan(0, n), alpha);
        auto v = divfree_project(p.subspan(n, 3 * n), image_shape);
        std::copy(b.begin(), b.end(), out.begin());
        std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(n));
        return out;
      });
}

}  // namespace phasecycle
