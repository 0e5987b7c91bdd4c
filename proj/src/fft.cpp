#include "phasecycle/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <utility>

namespace phasecycle {

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

CxVec to_complex(std::span<const double> x) { return CxVec(x.begin(), x.end()); }

RealVec real_part(std::span<const Cx> x) {
  RealVec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i].real();
  return out;
}

double norm2(std::span<const Cx> x) {
  double s = 0.0;
  for (const auto& v : x) s += std::norm(v);
  return std::sqrt(s);
}

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

Cx dot(std::span<const Cx> x, std::span<const Cx> y) {
  if (x.size() != y.size()) throw ShapeError("dot: size mismatch");
  Cx s{0.0, 0.0};
  for (std::size_t i = 0; i < x.size(); ++i) s += std::conj(x[i]) * y[i];
  return s;
}

namespace fft {
namespace {

// FFTW planning is not thread-safe; execution of an existing plan on new
// arrays is. Plans are created once per (shape, direction) and never freed.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(const Shape& shape, Direction dir) {
    std::lock_guard lock(mutex_);
    auto key = std::make_pair(shape, dir);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;

    std::vector<int> dims(shape.begin(), shape.end());
    const std::size_t n = shape_size(shape);
    auto* buf = fftw_alloc_complex(n);
    const int sign = dir == Direction::Forward ? FFTW_FORWARD : FFTW_BACKWARD;
    fftw_plan plan = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), buf, buf, sign,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(buf);
    if (!plan) throw Error("fft: FFTW failed to plan transform of shape " + shape_str(shape));
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::pair<Shape, Direction>, fftw_plan> plans_;
};

}  // namespace

void transform(std::span<Cx> data, const Shape& shape, Direction dir) {
  const std::size_t n = shape_size(shape);
  if (data.size() != n) throw ShapeError("fft: buffer size does not match shape " + shape_str(shape));
  if (n == 0) return;
  fftw_plan plan = PlanCache::instance().get(shape, dir);
  auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plan, ptr, ptr);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (auto& v : data) v *= scale;
}

void circshift(std::span<const Cx> in, std::span<Cx> out, const Shape& shape,
               const std::vector<std::ptrdiff_t>& shift) {
  const std::size_t rank = shape.size();
  const std::size_t n = shape_size(shape);
  if (in.size() != n || out.size() != n || shift.size() != rank)
    throw ShapeError("circshift: operand sizes do not match shape " + shape_str(shape));

  std::vector<std::size_t> stride(rank, 1);
  for (std::size_t a = rank; a-- > 1;) stride[a - 1] = stride[a] * shape[a];

  // destination offset contributed by each axis coordinate
  std::vector<std::vector<std::size_t>> dest(rank);
  for (std::size_t a = 0; a < rank; ++a) {
    const auto len = static_cast<std::ptrdiff_t>(shape[a]);
    dest[a].resize(shape[a]);
    for (std::ptrdiff_t i = 0; i < len; ++i) {
      std::ptrdiff_t j = ((i + shift[a]) % len + len) % len;
      dest[a][static_cast<std::size_t>(i)] = static_cast<std::size_t>(j) * stride[a];
    }
  }

  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t lin = 0; lin < n; ++lin) {
    std::size_t d = 0;
    for (std::size_t a = 0; a < rank; ++a) d += dest[a][idx[a]];
    out[d] = in[lin];
    for (std::size_t a = rank; a-- > 0;) {
      if (++idx[a] < shape[a]) break;
      idx[a] = 0;
    }
  }
}

void centered(std::span<Cx> data, const Shape& shape, Direction dir) {
  const std::size_t rank = shape.size();
  std::vector<std::ptrdiff_t> pre(rank), post(rank);
  for (std::size_t a = 0; a < rank; ++a) {
    const auto half = static_cast<std::ptrdiff_t>(shape[a] / 2);
    pre[a] = -half;  // ifftshift
    post[a] = half;  // fftshift
  }
  CxVec tmp(data.size());
  circshift(data, tmp, shape, pre);
  transform(tmp, shape, dir);
  circshift(tmp, data, shape, post);
}

}  // namespace fft
}  // namespace phasecycle
