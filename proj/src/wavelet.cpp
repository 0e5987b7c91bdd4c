#include "phasecycle/wavelet.hpp"

#include <algorithm>
#include <cmath>

namespace phasecycle {

namespace {

RealVec make_d4() {
  const double s3 = std::sqrt(3.0);
  const double d = 4.0 * std::sqrt(2.0);
  return {(1 + s3) / d, (3 + s3) / d, (3 - s3) / d, (1 - s3) / d};
}

RealVec make_d6() {
  const double s10 = std::sqrt(10.0);
  const double r = std::sqrt(5.0 + 2.0 * s10);
  const double d = 16.0 * std::sqrt(2.0);
  return {(1 + s10 + r) / d,           (5 + s10 + 3 * r) / d, (10 - 2 * s10 + 2 * r) / d,
          (10 - 2 * s10 - 2 * r) / d, (5 + s10 - 3 * r) / d, (1 + s10 - r) / d};
}

// One analysis step on a strided line of even length n.
template <class T>
void analyze_line(std::span<T> data, std::size_t n, std::size_t stride, const RealVec& h,
                  const RealVec& g, std::vector<T>& line, std::vector<T>& out) {
  line.resize(n);
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) line[i] = data[i * stride];
  const std::size_t half = n / 2;
  const std::size_t taps = h.size();
  for (std::size_t i = 0; i < half; ++i) {
    T a{}, d{};
    for (std::size_t k = 0; k < taps; ++k) {
      const T& v = line[(2 * i + k) % n];
      a += h[k] * v;
      d += g[k] * v;
    }
    out[i] = a;
    out[half + i] = d;
  }
  for (std::size_t i = 0; i < n; ++i) data[i * stride] = out[i];
}

template <class T>
void synthesize_line(std::span<T> data, std::size_t n, std::size_t stride, const RealVec& h,
                     const RealVec& g, std::vector<T>& line, std::vector<T>& out) {
  line.resize(n);
  out.assign(n, T{});
  for (std::size_t i = 0; i < n; ++i) line[i] = data[i * stride];
  const std::size_t half = n / 2;
  const std::size_t taps = h.size();
  for (std::size_t i = 0; i < half; ++i) {
    const T a = line[i];
    const T d = line[half + i];
    for (std::size_t k = 0; k < taps; ++k) out[(2 * i + k) % n] += h[k] * a + g[k] * d;
  }
  for (std::size_t i = 0; i < n; ++i) data[i * stride] = out[i];
}

// Visit every line along `axis` inside the corner block of extents `ext`.
template <class F>
void for_each_line(const Shape& shape, const Shape& ext, std::size_t axis, F&& f) {
  const std::size_t rank = shape.size();
  std::vector<std::size_t> stride(rank, 1);
  for (std::size_t a = rank; a-- > 1;) stride[a - 1] = stride[a] * shape[a];
  std::vector<std::size_t> idx(rank, 0);
  while (true) {
    std::size_t base = 0;
    for (std::size_t a = 0; a < rank; ++a) base += idx[a] * stride[a];
    f(base, stride[axis]);
    bool advanced = false;
    for (std::size_t a = rank; a-- > 0;) {
      if (a == axis) continue;
      if (++idx[a] < ext[a]) {
        advanced = true;
        break;
      }
      idx[a] = 0;
    }
    if (!advanced) return;
  }
}

template <class T>
std::vector<T> transform(std::span<const T> x, const Shape& shape, const WaveletSpec& spec, bool forward) {
  if (x.size() != shape_size(shape))
    throw ShapeError("dwt: input size does not match shape " + shape_str(shape));
  check_wavelet_shape(shape, spec);
  const RealVec& h = wavelet_lowpass(spec.family);
  const RealVec g = wavelet_highpass(spec.family);
  std::vector<T> data(x.begin(), x.end());
  std::span<T> view(data);
  std::vector<T> line, out;

  auto run_level = [&](int level) {
    Shape ext = shape;
    for (auto& e : ext)
      if (e > 1) e >>= level;
    std::vector<std::size_t> axes;
    for (std::size_t a = 0; a < shape.size(); ++a)
      if (shape[a] > 1) axes.push_back(a);
    if (!forward) std::reverse(axes.begin(), axes.end());
    for (std::size_t axis : axes) {
      const std::size_t n = ext[axis];
      for_each_line(shape, ext, axis, [&](std::size_t base, std::size_t stride) {
        auto sub = view.subspan(base);
        if (forward)
          analyze_line<T>(sub, n, stride, h, g, line, out);
        else
          synthesize_line<T>(sub, n, stride, h, g, line, out);
      });
    }
  };

  if (forward) {
    for (int l = 0; l < spec.levels; ++l) run_level(l);
  } else {
    for (int l = spec.levels; l-- > 0;) run_level(l);
  }
  return data;
}

}  // namespace

const RealVec& wavelet_lowpass(WaveletFamily family) {
  static const RealVec d4 = make_d4();
  static const RealVec d6 = make_d6();
  return family == WaveletFamily::Daubechies4 ? d4 : d6;
}

RealVec wavelet_highpass(WaveletFamily family) {
  const RealVec& h = wavelet_lowpass(family);
  const std::size_t L = h.size();
  RealVec g(L);
  for (std::size_t k = 0; k < L; ++k) g[k] = (k % 2 ? -1.0 : 1.0) * h[L - 1 - k];
  return g;
}

WaveletFamily parse_wavelet_family(const std::string& name) {
  if (name == "db4" || name == "daubechies4") return WaveletFamily::Daubechies4;
  if (name == "db6" || name == "daubechies6") return WaveletFamily::Daubechies6;
  throw ConfigError("unknown wavelet family '" + name + "' (expected db4 or db6)");
}

std::string wavelet_family_name(WaveletFamily family) {
  return family == WaveletFamily::Daubechies4 ? "db4" : "db6";
}

void check_wavelet_shape(const Shape& shape, const WaveletSpec& spec) {
  if (spec.levels < 1) throw ShapeError("wavelet: levels must be >= 1");
  const std::size_t block = std::size_t{1} << spec.levels;
  for (std::size_t a = 0; a < shape.size(); ++a) {
    if (shape[a] > 1 && shape[a] % block != 0)
      throw ShapeError("wavelet: axis " + std::to_string(a) + " has extent " + std::to_string(shape[a]) +
                       ", not divisible by 2^" + std::to_string(spec.levels));
  }
}

int max_wavelet_levels(const Shape& shape) {
  int levels = 64;
  for (std::size_t e : shape) {
    if (e <= 1) continue;
    int l = 0;
    while (e % 2 == 0) {
      e /= 2;
      ++l;
    }
    levels = std::min(levels, l);
  }
  return levels == 64 ? 0 : levels;
}

RealVec dwt(std::span<const double> x, const Shape& shape, const WaveletSpec& spec) {
  return transform<double>(x, shape, spec, true);
}
RealVec idwt(std::span<const double> c, const Shape& shape, const WaveletSpec& spec) {
  return transform<double>(c, shape, spec, false);
}
CxVec dwt(std::span<const Cx> x, const Shape& shape, const WaveletSpec& spec) {
  return transform<Cx>(x, shape, spec, true);
}
CxVec idwt(std::span<const Cx> c, const Shape& shape, const WaveletSpec& spec) {
  return transform<Cx>(c, shape, spec, false);
}

}  // namespace phasecycle
