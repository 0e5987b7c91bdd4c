#include "phasecycle/linops.hpp"

#include <algorithm>
#include <random>

#include "phasecycle/fft.hpp"

namespace phasecycle {

LinOp::LinOp(std::string name, Shape in_shape, Shape out_shape, Kernel forward, Kernel adjoint)
    : name_(std::move(name)),
      in_shape_(std::move(in_shape)),
      out_shape_(std::move(out_shape)),
      in_size_(shape_size(in_shape_)),
      out_size_(shape_size(out_shape_)),
      forward_(std::make_shared<const Kernel>(std::move(forward))),
      adjoint_(std::make_shared<const Kernel>(std::move(adjoint))) {}

void LinOp::apply_into(std::span<const Cx> x, std::span<Cx> out) const {
  if (x.size() != in_size_ || out.size() != out_size_)
    throw ShapeError(name_ + ": apply expects input of size " + std::to_string(in_size_) +
                     ", got " + std::to_string(x.size()));
  (*forward_)(x, out);
}

void LinOp::adjoint_into(std::span<const Cx> y, std::span<Cx> out) const {
  if (y.size() != out_size_ || out.size() != in_size_)
    throw ShapeError(name_ + ": adjoint expects input of size " + std::to_string(out_size_) +
                     ", got " + std::to_string(y.size()));
  (*adjoint_)(y, out);
}

CxVec LinOp::apply(std::span<const Cx> x) const {
  CxVec out(out_size_);
  apply_into(x, out);
  return out;
}

CxVec LinOp::adjoint_apply(std::span<const Cx> y) const {
  CxVec out(in_size_);
  adjoint_into(y, out);
  return out;
}

RealVec LinOp::apply_real(std::span<const double> x) const {
  return real_part(apply(to_complex(x)));
}

RealVec LinOp::adjoint_real(std::span<const double> y) const {
  return real_part(adjoint_apply(to_complex(y)));
}

LinOp LinOp::adjoint() const {
  auto fwd = forward_;
  auto adj = adjoint_;
  return LinOp(name_ + "^H", out_shape_, in_shape_,
               [adj](std::span<const Cx> y, std::span<Cx> out) { (*adj)(y, out); },
               [fwd](std::span<const Cx> x, std::span<Cx> out) { (*fwd)(x, out); });
}

LinOp identity_op(const Shape& shape) {
  auto copy = [](std::span<const Cx> x, std::span<Cx> out) { std::copy(x.begin(), x.end(), out.begin()); };
  return LinOp("I", shape, shape, copy, copy);
}

LinOp scale_op(Cx c, const Shape& shape) {
  return LinOp(
      "scale", shape, shape,
      [c](std::span<const Cx> x, std::span<Cx> out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = c * x[i];
      },
      [c](std::span<const Cx> y, std::span<Cx> out) {
        const Cx cc = std::conj(c);
        for (std::size_t i = 0; i < y.size(); ++i) out[i] = cc * y[i];
      });
}

LinOp diag_op(CxVec weights, const Shape& shape) {
  if (weights.size() != shape_size(shape))
    throw ShapeError("diag_op: weight count does not match shape " + shape_str(shape));
  auto w = std::make_shared<const CxVec>(std::move(weights));
  return LinOp(
      "diag", shape, shape,
      [w](std::span<const Cx> x, std::span<Cx> out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = (*w)[i] * x[i];
      },
      [w](std::span<const Cx> y, std::span<Cx> out) {
        for (std::size_t i = 0; i < y.size(); ++i) out[i] = std::conj((*w)[i]) * y[i];
      });
}

LinOp make_fft_sampling_op(const Shape& image_shape, std::span<const double> sample_mask,
                           std::size_t batch) {
  const std::size_t n = shape_size(image_shape);
  if (sample_mask.size() != n)
    throw ShapeError("make_fft_sampling_op: mask has " + std::to_string(sample_mask.size()) +
                     " entries, image shape " + shape_str(image_shape) + " needs " + std::to_string(n));
  if (batch == 0) throw ShapeError("make_fft_sampling_op: batch must be >= 1");
  auto mask = std::make_shared<const RealVec>(sample_mask.begin(), sample_mask.end());
  Shape shape = image_shape;
  if (batch > 1) shape.insert(shape.begin(), batch);

  auto fwd = [mask, image_shape, n, batch](std::span<const Cx> x, std::span<Cx> out) {
    std::copy(x.begin(), x.end(), out.begin());
    for (std::size_t b = 0; b < batch; ++b) {
      auto block = out.subspan(b * n, n);
      fft::centered(block, image_shape, fft::Direction::Forward);
      for (std::size_t i = 0; i < n; ++i) block[i] *= (*mask)[i];
    }
  };
  auto adj = [mask, image_shape, n, batch](std::span<const Cx> y, std::span<Cx> out) {
    for (std::size_t b = 0; b < batch; ++b) {
      auto block = out.subspan(b * n, n);
      for (std::size_t i = 0; i < n; ++i) block[i] = (*mask)[i] * y[b * n + i];
      fft::centered(block, image_shape, fft::Direction::Inverse);
    }
  };
  return LinOp("fft_sampling", shape, shape, fwd, adj);
}

LinOp make_sens_op(const std::vector<CxVec>& maps, const Shape& image_shape) {
  if (maps.empty()) throw ShapeError("make_sens_op: at least one coil map is required");
  const std::size_t n = shape_size(image_shape);
  for (const auto& m : maps)
    if (m.size() != n) throw ShapeError("make_sens_op: coil maps must match image shape " + shape_str(image_shape));
  auto data = std::make_shared<const std::vector<CxVec>>(maps);
  Shape out_shape = image_shape;
  out_shape.insert(out_shape.begin(), maps.size());
  const std::size_t coils = maps.size();

  auto fwd = [data, n, coils](std::span<const Cx> x, std::span<Cx> out) {
    for (std::size_t c = 0; c < coils; ++c) {
      const auto& m = (*data)[c];
      for (std::size_t i = 0; i < n; ++i) out[c * n + i] = m[i] * x[i];
    }
  };
  auto adj = [data, n, coils](std::span<const Cx> y, std::span<Cx> out) {
    std::fill(out.begin(), out.end(), Cx{});
    for (std::size_t c = 0; c < coils; ++c) {
      const auto& m = (*data)[c];
      for (std::size_t i = 0; i < n; ++i) out[i] += std::conj(m[i]) * y[c * n + i];
    }
  };
  return LinOp("sens", image_shape, out_shape, fwd, adj);
}

LinOp compose(const std::vector<LinOp>& ops) {
  if (ops.empty()) throw ShapeError("compose: empty operator list");
  for (std::size_t i = 0; i + 1 < ops.size(); ++i) {
    if (ops[i].in_size() != ops[i + 1].out_size())
      throw ShapeError("compose: " + ops[i].name() + " expects " + shape_str(ops[i].in_shape()) +
                       " but " + ops[i + 1].name() + " produces " + shape_str(ops[i + 1].out_shape()));
  }
  if (ops.size() == 1) return ops.front();
  auto chain = std::make_shared<const std::vector<LinOp>>(ops);

  auto fwd = [chain](std::span<const Cx> x, std::span<Cx> out) {
    CxVec cur(x.begin(), x.end());
    for (std::size_t i = chain->size(); i-- > 1;) cur = (*chain)[i].apply(cur);
    chain->front().apply_into(cur, out);
  };
  auto adj = [chain](std::span<const Cx> y, std::span<Cx> out) {
    CxVec cur(y.begin(), y.end());
    for (std::size_t i = 0; i + 1 < chain->size(); ++i) cur = (*chain)[i].adjoint_apply(cur);
    chain->back().adjoint_into(cur, out);
  };
  std::string name = "(";
  for (std::size_t i = 0; i < ops.size(); ++i) name += (i ? "*" : "") + ops[i].name();
  return LinOp(name + ")", ops.back().in_shape(), ops.front().out_shape(), fwd, adj);
}

namespace {

// Shape of a concatenation: stacked along a new leading axis when all parts agree.
Shape stacked_shape(const std::vector<LinOp>& ops, bool use_input) {
  const Shape& first = use_input ? ops.front().in_shape() : ops.front().out_shape();
  bool uniform = std::all_of(ops.begin(), ops.end(), [&](const LinOp& op) {
    return (use_input ? op.in_shape() : op.out_shape()) == first;
  });
  if (uniform) {
    Shape s = first;
    s.insert(s.begin(), ops.size());
    return s;
  }
  std::size_t total = 0;
  for (const auto& op : ops) total += use_input ? op.in_size() : op.out_size();
  return Shape{total};
}

std::vector<std::size_t> offsets(const std::vector<LinOp>& ops, bool use_input) {
  std::vector<std::size_t> off(ops.size() + 1, 0);
  for (std::size_t i = 0; i < ops.size(); ++i)
    off[i + 1] = off[i] + (use_input ? ops[i].in_size() : ops[i].out_size());
  return off;
}

}  // namespace

LinOp block_diag(const std::vector<LinOp>& ops) {
  if (ops.empty()) throw ShapeError("block_diag: empty operator list");
  auto parts = std::make_shared<const std::vector<LinOp>>(ops);
  auto in_off = offsets(ops, true);
  auto out_off = offsets(ops, false);
  auto fwd = [parts, in_off, out_off](std::span<const Cx> x, std::span<Cx> out) {
    for (std::size_t i = 0; i < parts->size(); ++i)
      (*parts)[i].apply_into(x.subspan(in_off[i], in_off[i + 1] - in_off[i]),
                             out.subspan(out_off[i], out_off[i + 1] - out_off[i]));
  };
  auto adj = [parts, in_off, out_off](std::span<const Cx> y, std::span<Cx> out) {
    for (std::size_t i = 0; i < parts->size(); ++i)
      (*parts)[i].adjoint_into(y.subspan(out_off[i], out_off[i + 1] - out_off[i]),
                               out.subspan(in_off[i], in_off[i + 1] - in_off[i]));
  };
  return LinOp("block_diag", stacked_shape(ops, true), stacked_shape(ops, false), fwd, adj);
}

LinOp vstack(const std::vector<LinOp>& ops) {
  if (ops.empty()) throw ShapeError("vstack: empty operator list");
  for (const auto& op : ops)
    if (op.in_size() != ops.front().in_size())
      throw ShapeError("vstack: operators must share the input shape, got " + shape_str(op.in_shape()) +
                       " and " + shape_str(ops.front().in_shape()));
  auto parts = std::make_shared<const std::vector<LinOp>>(ops);
  auto out_off = offsets(ops, false);
  auto fwd = [parts, out_off](std::span<const Cx> x, std::span<Cx> out) {
    for (std::size_t i = 0; i < parts->size(); ++i)
      (*parts)[i].apply_into(x, out.subspan(out_off[i], out_off[i + 1] - out_off[i]));
  };
  auto adj = [parts, out_off](std::span<const Cx> y, std::span<Cx> out) {
    std::fill(out.begin(), out.end(), Cx{});
    CxVec tmp(out.size());
    for (std::size_t i = 0; i < parts->size(); ++i) {
      (*parts)[i].adjoint_into(y.subspan(out_off[i], out_off[i + 1] - out_off[i]), tmp);
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += tmp[k];
    }
  };
  return LinOp("vstack", ops.front().in_shape(), stacked_shape(ops, false), fwd, adj);
}

LinOp hstack(const std::vector<LinOp>& ops) {
  if (ops.empty()) throw ShapeError("hstack: empty operator list");
  std::vector<LinOp> adjoints;
  adjoints.reserve(ops.size());
  for (const auto& op : ops) {
    if (op.out_size() != ops.front().out_size())
      throw ShapeError("hstack: operators must share the output shape, got " + shape_str(op.out_shape()) +
                       " and " + shape_str(ops.front().out_shape()));
    adjoints.push_back(op.adjoint());
  }
  return vstack(adjoints).adjoint();
}

LinOp scalar_block_op(std::size_t rows, std::size_t cols, CxVec coeffs, const Shape& image_shape) {
  if (rows == 0 || cols == 0 || coeffs.size() != rows * cols)
    throw ShapeError("scalar_block_op: need rows*cols coefficients");
  const std::size_t n = shape_size(image_shape);
  auto c = std::make_shared<const CxVec>(std::move(coeffs));
  Shape in_shape = image_shape, out_shape = image_shape;
  in_shape.insert(in_shape.begin(), cols);
  out_shape.insert(out_shape.begin(), rows);

  auto fwd = [c, rows, cols, n](std::span<const Cx> x, std::span<Cx> out) {
    std::fill(out.begin(), out.end(), Cx{});
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < cols; ++k) {
        const Cx w = (*c)[r * cols + k];
        if (w == Cx{}) continue;
        for (std::size_t i = 0; i < n; ++i) out[r * n + i] += w * x[k * n + i];
      }
  };
  auto adj = [c, rows, cols, n](std::span<const Cx> y, std::span<Cx> out) {
    std::fill(out.begin(), out.end(), Cx{});
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < cols; ++k) {
        const Cx w = std::conj((*c)[r * cols + k]);
        if (w == Cx{}) continue;
        for (std::size_t i = 0; i < n; ++i) out[k * n + i] += w * y[r * n + i];
      }
  };
  return LinOp("block", in_shape, out_shape, fwd, adj);
}

SpectralEstimate max_eigenvalue(const LinOp& op, int max_iters, double tol, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  CxVec x(op.in_size());
  for (auto& v : x) v = Cx(gauss(rng), gauss(rng));
  double nx = norm2(x);
  for (auto& v : x) v /= nx;

  SpectralEstimate est;
  double prev = 0.0;
  for (int it = 1; it <= max_iters; ++it) {
    CxVec y = op.adjoint_apply(op.apply(x));
    const double lambda = dot(x, y).real();
    const double ny = norm2(y);
    est.iterations_used = it;
    est.lambda_max = std::max(lambda, 0.0);
    if (ny == 0.0) {
      est.residual = 0.0;
      est.converged = true;
      return est;
    }
    est.residual = it == 1 ? 1.0 : std::abs(lambda - prev) / std::max(std::abs(lambda), 1e-300);
    prev = lambda;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = y[i] / ny;
    if (it > 1 && est.residual <= tol) {
      est.converged = true;
      return est;
    }
  }
  return est;
}

}  // namespace phasecycle
