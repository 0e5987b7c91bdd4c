#pragma once

#include <random>

#include <Eigen/Dense>

#include "phasecycle/linops.hpp"
#include "phasecycle/models.hpp"
#include "phasecycle/phantom.hpp"

namespace testutil {

using namespace phasecycle;

inline CxVec random_cx(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CxVec v(n);
  for (auto& x : v) x = Cx(g(rng), g(rng));
  return v;
}

inline RealVec random_real(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  RealVec v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline RealVec random_mask(std::size_t n, std::mt19937_64& rng, double keep = 0.5) {
  std::bernoulli_distribution b(keep);
  RealVec v(n);
  for (auto& x : v) x = b(rng) ? 1.0 : 0.0;
  return v;
}

inline std::vector<CxVec> random_maps(std::size_t coils, std::size_t n, std::mt19937_64& rng) {
  std::vector<CxVec> maps;
  for (std::size_t c = 0; c < coils; ++c) maps.push_back(random_cx(n, rng));
  return maps;
}

/// Worst |<Ax, y> - <x, A^* y>| / (|x||y|) over `pairs` random draws.
inline double dot_test(const LinOp& op, int pairs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int t = 0; t < pairs; ++t) {
    const CxVec x = random_cx(op.in_size(), rng), y = random_cx(op.out_size(), rng);
    const Cx lhs = dot(op.apply(x), y);
    const Cx rhs = dot(x, op.adjoint_apply(y));
    worst = std::max(worst, std::abs(lhs - rhs) / (norm2(x) * norm2(y)));
  }
  return worst;
}

inline Eigen::MatrixXcd dense(const LinOp& op) {
  Eigen::MatrixXcd out(op.out_size(), op.in_size());
  CxVec e(op.in_size(), Cx{0.0});
  for (std::size_t j = 0; j < op.in_size(); ++j) {
    e[j] = 1.0;
    const CxVec col = op.apply(e);
    for (std::size_t i = 0; i < col.size(); ++i) out(i, j) = col[i];
    e[j] = 0.0;
  }
  return out;
}

inline Eigen::VectorXcd to_eigen(const CxVec& v) {
  Eigen::VectorXcd out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out(i) = v[i];
  return out;
}

inline double rel_diff(std::span<const Cx> a, std::span<const Cx> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

inline double rel_diff(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

/// Small instances of the three model kinds with random masks and coil maps.
inline ForwardModel small_partial_fourier(std::uint64_t seed, const Shape& shape = {8, 8}, std::size_t coils = 3) {
  std::mt19937_64 rng(seed);
  const std::size_t n = shape_size(shape);
  return build_partial_fourier(shape, random_mask(n, rng, 0.6), random_maps(coils, n, rng));
}

inline WaterFatSpec paper_waterfat_spec() {
  return WaterFatSpec{{2.184e-3, 2.978e-3, 3.772e-3}, {FatPeak{1.0, -428.0}}, 0.0};
}

inline ForwardModel small_waterfat(std::uint64_t seed, const Shape& shape = {8, 8}, std::size_t coils = 2) {
  std::mt19937_64 rng(seed);
  const std::size_t n = shape_size(shape);
  std::vector<RealVec> masks;
  for (int e = 0; e < 3; ++e) masks.push_back(random_mask(n, rng, 0.6));
  return build_waterfat(paper_waterfat_spec(), shape, masks, random_maps(coils, n, rng));
}

inline ForwardModel small_flow(std::uint64_t seed, const Shape& shape = {4, 4, 4}, std::size_t coils = 2) {
  std::mt19937_64 rng(seed);
  const std::size_t n = shape_size(shape);
  std::vector<RealVec> masks;
  for (int v = 0; v < 4; ++v) masks.push_back(random_mask(n, rng, 0.6));
  return build_flow(FlowEncodingSpec{}, shape, masks, random_maps(coils, n, rng));
}

}  // namespace testutil
