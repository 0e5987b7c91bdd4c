#include "phasecycle/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace phasecycle {

std::string phantom_kind_name(PhantomKind kind) {
  switch (kind) {
    case PhantomKind::PfBrainLike: return "pf-brain-like";
    case PhantomKind::WaterFat2Compartment: return "waterfat-2compartment";
    case PhantomKind::FlowTube: return "flow-tube";
  }
  return "unknown";
}

PhantomKind parse_phantom_kind(const std::string& name) {
  if (name == "pf-brain-like") return PhantomKind::PfBrainLike;
  if (name == "waterfat-2compartment") return PhantomKind::WaterFat2Compartment;
  if (name == "flow-tube") return PhantomKind::FlowTube;
  throw ConfigError("unknown phantom kind '" + name +
                    "' (expected pf-brain-like, waterfat-2compartment or flow-tube)");
}

std::span<const double> Phantom::m_component(std::size_t k) const {
  return std::span<const double>(m).subspan(k * image_size(), image_size());
}

std::span<const double> Phantom::p_component(std::size_t k) const {
  return std::span<const double>(p).subspan(k * image_size(), image_size());
}

namespace {

// Normalized coordinate of index i on an axis of n samples, in [-1, 1).
double coord(std::size_t i, std::size_t n) { return (2.0 * static_cast<double>(i) - static_cast<double>(n)) / n; }

void for_each_voxel(const Shape& shape, const std::function<void(std::size_t, std::span<const double>)>& fn) {
  const std::size_t n = shape_size(shape);
  std::vector<std::size_t> idx(shape.size(), 0);
  RealVec x(shape.size());
  for (std::size_t flat = 0; flat < n; ++flat) {
    for (std::size_t a = 0; a < shape.size(); ++a) x[a] = coord(idx[a], shape[a]);
    fn(flat, x);
    for (std::size_t a = shape.size(); a-- > 0;) {
      if (++idx[a] < shape[a]) break;
      idx[a] = 0;
    }
  }
}

struct Ellipse {
  double c0, c1, a0, a1, angle;
};

bool inside(const Ellipse& e, std::span<const double> x) {
  const double d0 = x[0] - e.c0, d1 = x[1] - e.c1;
  const double ca = std::cos(e.angle), sa = std::sin(e.angle);
  const double u = (ca * d0 + sa * d1) / e.a0, v = (-sa * d0 + ca * d1) / e.a1;
  double r = u * u + v * v;
  for (std::size_t a = 2; a < x.size(); ++a) r += (x[a] / 0.9) * (x[a] / 0.9);
  return r <= 1.0;
}

// Polynomial plus sinusoid on the first two axes, rescaled so max - min = range.
RealVec smooth_field(const Shape& shape, double range, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double c1 = 1.0 + 0.5 * std::abs(u(rng)), c2 = 0.6 * u(rng), c3 = 0.5 * u(rng);
  const double c4 = 0.4 * u(rng), c5 = 0.4 * u(rng), w0 = 0.5 + 0.25 * u(rng), w1 = 0.5 + 0.25 * u(rng);
  const double phi = kPi * u(rng), c6 = 0.3 * u(rng);
  RealVec f(shape_size(shape));
  for_each_voxel(shape, [&](std::size_t i, std::span<const double> x) {
    const double z = x.size() > 2 ? x[2] : 0.0;
    f[i] = c1 * x[0] + c2 * x[1] + c3 * x[0] * x[1] + c4 * x[0] * x[0] + c5 * x[1] * x[1] + c6 * z +
           0.5 * std::sin(kPi * (w0 * x[0] + w1 * x[1]) + phi);
  });
  const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
  const double mn = *lo, span = *hi - *lo;
  for (auto& v : f) v = span > 0.0 ? range * (v - mn) / span - 0.5 * range : 0.0;
  return f;
}

void check_phantom_shape(const Shape& shape) {
  if (shape.size() < 2) throw ShapeError("phantom: shape must have at least 2 axes");
  for (std::size_t a = 0; a < shape.size(); ++a)
    if (shape[a] < 16) throw ShapeError("phantom: axis " + std::to_string(a) + " has fewer than 16 samples");
}

Phantom brain_like(const Shape& shape, double range, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> jitter(-0.02, 0.02);
  std::uniform_real_distribution<double> level(0.9, 1.1);
  struct Region {
    Ellipse e;
    double value;
  };
  std::vector<Region> regions = {
      {{0.0, 0.0, 0.92, 0.69, 0.0}, 0.6},
      {{-0.02, 0.0, 0.86, 0.63, 0.0}, 0.9},
      {{0.0, 0.22, 0.31, 0.11, -0.31}, 0.4},
      {{0.0, -0.22, 0.41, 0.16, 0.31}, 0.4},
      {{0.35, 0.0, 0.25, 0.21, 0.0}, 1.0},
      {{-0.6, 0.05, 0.06, 0.05, 0.0}, 0.7},
      {{-0.45, -0.2, 0.08, 0.06, 0.5}, 1.0},
  };
  for (std::size_t r = 2; r < regions.size(); ++r) {
    regions[r].e.c0 += jitter(rng);
    regions[r].e.c1 += jitter(rng);
    regions[r].value = std::min(1.0, regions[r].value * level(rng));
  }
  Phantom ph{PhantomKind::PfBrainLike, shape, {"m"}, RealVec(shape_size(shape), 0.0), {"p"}, {}, {}, range};
  for_each_voxel(shape, [&](std::size_t i, std::span<const double> x) {
    double v = 0.0;
    for (const auto& reg : regions)
      if (inside(reg.e, x)) v = reg.value;
    ph.m[i] = v * (1.0 - 0.08 * x[1]);
  });
  ph.p = smooth_field(shape, range, rng);
  ph.support.resize(ph.m.size());
  for (std::size_t i = 0; i < ph.m.size(); ++i) ph.support[i] = ph.m[i] > 0.0 ? 1.0 : 0.0;
  return ph;
}

Phantom waterfat(const Shape& shape, double range, std::mt19937_64& rng, const PhantomOptions& opt) {
  std::uniform_real_distribution<double> jitter(-0.03, 0.03);
  struct Region {
    Ellipse e;
    double water, fat;
  };
  std::vector<Region> regions = {
      {{0.0, 0.0, 0.9, 0.75, 0.0}, 0.0, 0.9},
      {{0.0, 0.0, 0.78, 0.63, 0.0}, 0.7, 0.0},
      {{0.1, -0.3, 0.2, 0.25, 0.3}, 1.0, 0.0},
      {{-0.2, 0.35, 0.12, 0.15, 0.0}, 0.0, 0.8},
      {{0.35, 0.1, 0.1, 0.1, 0.0}, 0.0, 0.6},
  };
  for (std::size_t r = 2; r < regions.size(); ++r) {
    regions[r].e.c0 += jitter(rng);
    regions[r].e.c1 += jitter(rng);
  }
  const std::size_t n = shape_size(shape);
  Phantom ph{PhantomKind::WaterFat2Compartment,
             shape,
             {"m_water", "m_fat"},
             RealVec(2 * n, 0.0),
             {"p_water", "p_fat", "p_field"},
             RealVec(3 * n, 0.0),
             RealVec(n, 0.0),
             range};
  for_each_voxel(shape, [&](std::size_t i, std::span<const double> x) {
    for (const auto& reg : regions)
      if (inside(reg.e, x)) {
        ph.m[i] = reg.water;
        ph.m[n + i] = reg.fat;
        ph.support[i] = 1.0;
      }
  });
  const RealVec phase = smooth_field(shape, range, rng);
  const RealVec field_hz = smooth_field(shape, 2.0 * opt.field_peak_hz, rng);
  for (std::size_t i = 0; i < n; ++i) {
    ph.p[i] = phase[i];
    ph.p[n + i] = phase[i];
    ph.p[2 * n + i] = kTwoPi * field_hz[i] * opt.field_unit_s;
  }
  return ph;
}

Phantom flow_tube(const Shape& shape, double range, std::mt19937_64& rng, const PhantomOptions& opt) {
  if (shape.size() != 3) throw ShapeError("phantom: flow-tube needs a 3-D shape");
  std::uniform_real_distribution<double> jitter(-0.03, 0.03);
  const std::size_t n0 = shape[0], n1 = shape[1], n2 = shape[2], n = shape_size(shape);
  const double radius = 0.4 + jitter(rng), c0 = jitter(rng), c1 = jitter(rng);
  auto rel = [&](std::size_t i, std::size_t j) {
    const double d0 = coord(i, n0) - c0, d1 = coord(j, n1) - c1;
    return (d0 * d0 + d1 * d1) / (radius * radius);
  };

  // Stream function on the cross-section; its discrete curl is divergence free.
  RealVec psi(n0 * n1, 0.0), axial(n0 * n1, 0.0);
  for (std::size_t i = 0; i < n0; ++i)
    for (std::size_t j = 0; j < n1; ++j) {
      const double s = rel(i, j);
      if (s < 1.0) {
        psi[i * n1 + j] = (1.0 - s) * (1.0 - s);
        axial[i * n1 + j] = 1.0 - s;
      }
    }
  RealVec vx(n0 * n1), vy(n0 * n1);
  double peak = 0.0;
  for (std::size_t i = 0; i < n0; ++i)
    for (std::size_t j = 0; j < n1; ++j) {
      vx[i * n1 + j] = 0.5 * (psi[i * n1 + (j + 1) % n1] - psi[i * n1 + (j + n1 - 1) % n1]);
      vy[i * n1 + j] = -0.5 * (psi[((i + 1) % n0) * n1 + j] - psi[((i + n0 - 1) % n0) * n1 + j]);
      peak = std::max({peak, std::abs(vx[i * n1 + j]), std::abs(vy[i * n1 + j])});
    }
  const double swirl = peak > 0.0 ? opt.velocity_peak / peak : 0.0;

  Phantom ph{PhantomKind::FlowTube, shape, {"m"}, RealVec(n, 0.0), {"p_bg", "p_x", "p_y", "p_z"},
             RealVec(4 * n, 0.0), RealVec(n, 0.0), range};
  const Ellipse body{0.0, 0.0, 0.9, 0.9, 0.0};
  for (std::size_t i = 0; i < n0; ++i)
    for (std::size_t j = 0; j < n1; ++j)
      for (std::size_t k = 0; k < n2; ++k) {
        const std::size_t v = (i * n1 + j) * n2 + k, c = i * n1 + j;
        const double x[2] = {coord(i, n0), coord(j, n1)};
        const bool vessel = rel(i, j) < 1.0;
        ph.m[v] = vessel ? 1.0 : (inside(body, x) ? 0.4 * (1.0 + 0.1 * x[0]) : 0.0);
        ph.support[v] = vessel ? 1.0 : 0.0;
        ph.p[n + v] = swirl * vx[c];
        ph.p[2 * n + v] = swirl * vy[c];
        ph.p[3 * n + v] = opt.velocity_peak * axial[c];
      }
  const RealVec bg = smooth_field(shape, range, rng);
  std::copy(bg.begin(), bg.end(), ph.p.begin());
  return ph;
}

}  // namespace

Phantom make_phantom(PhantomKind kind, const Shape& shape, double phase_range, std::uint64_t seed,
                     const PhantomOptions& options) {
  check_phantom_shape(shape);
  if (!(phase_range >= 0.0) || !std::isfinite(phase_range)) throw ConfigError("phantom: phase_range must be >= 0");
  std::mt19937_64 rng(seed);
  switch (kind) {
    case PhantomKind::PfBrainLike: return brain_like(shape, phase_range, rng);
    case PhantomKind::WaterFat2Compartment: return waterfat(shape, phase_range, rng, options);
    case PhantomKind::FlowTube: return flow_tube(shape, phase_range, rng, options);
  }
  throw ConfigError("phantom: unknown kind");
}

std::vector<CxVec> make_sens_maps(const Shape& shape, int coils, std::uint64_t seed) {
  if (coils < 1) throw ConfigError("sensitivity maps: coils must be >= 1");
  if (shape.size() < 2) throw ShapeError("sensitivity maps: shape must have at least 2 axes");
  const std::size_t n = shape_size(shape);
  if (coils == 1) return {CxVec(n, Cx{1.0})};

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<CxVec> maps(static_cast<std::size_t>(coils), CxVec(n));
  for (int c = 0; c < coils; ++c) {
    const double theta = kTwoPi * c / coils + 0.2 * u(rng);
    const double q0 = 0.1 * u(rng), q1 = 0.1 * u(rng), tilt = 0.3 + 0.1 * u(rng);
    const Cx rot = std::polar(1.0, kPi * u(rng));
    const double ct = std::cos(theta), st = std::sin(theta);
    for_each_voxel(shape, [&](std::size_t i, std::span<const double> x) {
      const double along = ct * x[0] + st * x[1], across = -st * x[0] + ct * x[1];
      // sixth power of a linear profile: localized toward the coil, still polynomial
      const Cx base(1.0 + along + q0 * x[0] * x[0] + q1 * x[1] * x[1], tilt * across);
      const Cx b2 = base * base;
      maps[c][i] = rot * b2 * b2 * b2;
    });
  }
  for (std::size_t i = 0; i < n; ++i) {
    double sos = 0.0;
    for (const auto& m : maps) sos += std::norm(m[i]);
    const double s = 1.0 / std::sqrt(sos);
    for (auto& m : maps) m[i] *= s;
  }
  return maps;
}

std::size_t SamplingMask::count() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](double v) { return v != 0.0; }));
}

SamplingMask full_mask(const Shape& shape) {
  return {MaskKind::Full, shape, RealVec(shape_size(shape), 1.0), 1.0, 0};
}

double poisson_radius(const Shape& shape, double r_min, double k0, double k1) {
  const double h0 = 0.5 * static_cast<double>(shape[0]), h1 = 0.5 * static_cast<double>(shape[1]);
  const double kmax = std::hypot(h0, h1);
  return r_min * (1.0 + 2.0 * std::hypot(k0 - h0, k1 - h1) / kmax);
}

namespace {

struct DiskSampler {
  Shape shape;
  std::size_t n0, n1;
  std::vector<std::size_t> order;  // candidate points, calibration excluded
  std::vector<char> calib;
  std::size_t calib_count = 0;

  std::vector<char> run(double r_min) const {
    std::vector<char> on(calib.begin(), calib.end());
    const double cell = r_min;
    const std::size_t g0 = static_cast<std::size_t>(std::ceil(n0 / cell)) + 1;
    const std::size_t g1 = static_cast<std::size_t>(std::ceil(n1 / cell)) + 1;
    std::vector<std::vector<std::size_t>> grid(g0 * g1);
    const int reach = 3;
    for (std::size_t idx : order) {
      const std::size_t i = idx / n1, j = idx % n1;
      const double ri = poisson_radius(shape, r_min, static_cast<double>(i), static_cast<double>(j));
      const auto ci = static_cast<long>(i / cell), cj = static_cast<long>(j / cell);
      bool ok = true;
      for (long a = ci - reach; ok && a <= ci + reach; ++a)
        for (long b = cj - reach; ok && b <= cj + reach; ++b) {
          if (a < 0 || b < 0 || a >= static_cast<long>(g0) || b >= static_cast<long>(g1)) continue;
          for (std::size_t q : grid[static_cast<std::size_t>(a) * g1 + static_cast<std::size_t>(b)]) {
            const double qi = static_cast<double>(q / n1), qj = static_cast<double>(q % n1);
            const double d = std::hypot(qi - static_cast<double>(i), qj - static_cast<double>(j));
            if (d < std::max(ri, poisson_radius(shape, r_min, qi, qj))) {
              ok = false;
              break;
            }
          }
        }
      if (!ok) continue;
      on[idx] = 1;
      grid[static_cast<std::size_t>(ci) * g1 + static_cast<std::size_t>(cj)].push_back(idx);
    }
    return on;
  }
};

}  // namespace

SamplingMask poisson_disk_mask(const Shape& shape, double accel, std::size_t calib_size, std::uint64_t seed) {
  if (shape.size() < 2) throw ShapeError("poisson_disk_mask: shape must have at least 2 axes");
  if (!(accel >= 1.0)) throw ConfigError("poisson_disk_mask: acceleration must be >= 1");
  const std::size_t n0 = shape[0], n1 = shape[1];
  if (calib_size > std::min(n0, n1)) throw ConfigError("poisson_disk_mask: calibration region larger than the grid");
  if (accel == 1.0) {
    auto m = full_mask(shape);
    m.calib_size = calib_size;
    return m;
  }

  DiskSampler s{shape, n0, n1, {}, std::vector<char>(n0 * n1, 0)};
  const std::size_t lo0 = n0 / 2 - calib_size / 2, lo1 = n1 / 2 - calib_size / 2;
  for (std::size_t i = lo0; i < lo0 + calib_size; ++i)
    for (std::size_t j = lo1; j < lo1 + calib_size; ++j) s.calib[i * n1 + j] = 1;
  s.calib_count = calib_size * calib_size;
  const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(n0 * n1) / accel));
  if (s.calib_count > target)
    throw ConfigError("poisson_disk_mask: acceleration " + std::to_string(accel) +
                      " is infeasible, the calibration region alone holds " + std::to_string(s.calib_count) +
                      " of the " + std::to_string(target) + " allowed samples");
  for (std::size_t i = 0; i < n0 * n1; ++i)
    if (!s.calib[i]) s.order.push_back(i);
  std::mt19937_64 rng(seed);
  std::shuffle(s.order.begin(), s.order.end(), rng);

  auto count = [](const std::vector<char>& on) {
    return static_cast<std::size_t>(std::count(on.begin(), on.end(), 1));
  };
  double lo = 0.25, hi = static_cast<double>(std::max(n0, n1));
  std::vector<char> best = s.run(lo);
  double best_r = lo;
  std::size_t best_err = count(best) > target ? count(best) - target : target - count(best);
  for (int it = 0; it < 40 && best_err > 0; ++it) {
    const double mid = 0.5 * (lo + hi);
    auto on = s.run(mid);
    const std::size_t c = count(on);
    const std::size_t err = c > target ? c - target : target - c;
    if (err < best_err) {
      best_err = err;
      best = on;
      best_r = mid;
    }
    if (c > target)
      lo = mid;
    else
      hi = mid;
  }

  SamplingMask mask{MaskKind::PoissonDisk, shape, RealVec(shape_size(shape), 0.0), 1.0, calib_size, best_r};
  const std::size_t rest = shape_size(shape) / (n0 * n1);
  for (std::size_t p = 0; p < n0 * n1; ++p)
    if (best[p])
      for (std::size_t r = 0; r < rest; ++r) mask.values[p * rest + r] = 1.0;
  mask.acceleration = static_cast<double>(mask.values.size()) / static_cast<double>(mask.count());
  return mask;
}

SamplingMask partial_fourier_mask(const Shape& shape, double fraction, std::size_t axis) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("partial_fourier_mask: fraction must be in (0, 1]");
  if (axis >= shape.size()) throw ShapeError("partial_fourier_mask: axis out of range for shape " + shape_str(shape));
  const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(shape[axis]) + 1e-9));
  if (keep == 0) throw ConfigError("partial_fourier_mask: fraction keeps no samples");
  std::size_t stride = 1;
  for (std::size_t a = axis + 1; a < shape.size(); ++a) stride *= shape[a];
  SamplingMask mask{MaskKind::PartialFourier, shape, RealVec(shape_size(shape), 0.0), 1.0, 0};
  for (std::size_t i = 0; i < mask.values.size(); ++i)
    if ((i / stride) % shape[axis] < keep) mask.values[i] = 1.0;
  mask.acceleration = static_cast<double>(mask.values.size()) / static_cast<double>(mask.count());
  return mask;
}

SamplingMask combine_masks(const SamplingMask& a, const SamplingMask& b) {
  if (a.shape != b.shape)
    throw ShapeError("combine_masks: shapes " + shape_str(a.shape) + " and " + shape_str(b.shape) + " differ");
  SamplingMask out{MaskKind::Combined, a.shape, RealVec(a.values.size(), 0.0), 1.0,
                   std::max(a.calib_size, b.calib_size), std::max(a.r_min, b.r_min)};
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = (a.values[i] != 0.0 && b.values[i] != 0.0) ? 1.0 : 0.0;
  const std::size_t c = out.count();
  out.acceleration = c ? static_cast<double>(out.values.size()) / static_cast<double>(c)
                       : std::numeric_limits<double>::infinity();
  return out;
}

CxVec simulate_acquisition(const ForwardModel& model, const Phantom& phantom, double noise_sigma,
                           std::uint64_t seed) {
  if (!(noise_sigma >= 0.0)) throw ConfigError("simulate_acquisition: noise sigma must be >= 0");
  if (phantom.shape != model.image_shape)
    throw ShapeError("simulate_acquisition: phantom shape " + shape_str(phantom.shape) + " does not match model " +
                     shape_str(model.image_shape));
  CxVec y = forward(model, model.magnitude(phantom.m), model.phase(phantom.p));
  if (noise_sigma > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, noise_sigma);
    for (auto& v : y) {
      const double re = g(rng);
      v += Cx(re, g(rng));
    }
  }
  return y;
}

namespace {

std::pair<double, double> peak_and_error(std::span<const double> ref, std::span<const double> rec) {
  if (ref.size() != rec.size())
    throw ShapeError("psnr: reference has " + std::to_string(ref.size()) + " entries, reconstruction " +
                     std::to_string(rec.size()));
  if (ref.empty()) throw DataError("psnr: empty input");
  double peak = 0.0, err = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    peak = std::max(peak, std::abs(ref[i]));
    err += (ref[i] - rec[i]) * (ref[i] - rec[i]);
  }
  if (peak == 0.0) throw DataError("psnr: reference is identically zero");
  return {peak, std::sqrt(err)};
}

}  // namespace

double psnr(std::span<const double> ref, std::span<const double> rec) {
  const auto [peak, err] = peak_and_error(ref, rec);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(peak / err);
}

double psnr_normalized(std::span<const double> ref, std::span<const double> rec) {
  const auto [peak, err] = peak_and_error(ref, rec);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(peak / (err / std::sqrt(static_cast<double>(ref.size()))));
}

}  // namespace phasecycle
