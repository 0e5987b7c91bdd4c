#include <catch2/catch.hpp>

#include "helpers.hpp"
#include "phasecycle/solver.hpp"

using namespace phasecycle;
using namespace testutil;

namespace {

ForwardModel unit_pf(const Shape& shape) {
  const std::size_t n = shape_size(shape);
  return build_partial_fourier(shape, RealVec(n, 1.0), {CxVec(n, Cx{1.0})});
}

PhaseVec shifted(const ForwardModel& model, const PhaseVec& p, double c) {
  RealVec q = p.data;
  for (double& v : q) v = wrap_phase(v + c);
  return model.phase(q);
}

}  // namespace

TEST_CASE("phase wrap sets", "[solver]") {
  CHECK(make_phase_wrap_set(1).offsets == RealVec{0.0});
  const auto four = make_phase_wrap_set(4).offsets;
  REQUIRE(four.size() == 4);
  for (int k = 0; k < 4; ++k) CHECK(four[k] == Approx(k * kPi / 2).margin(1e-15));
  CHECK_THROWS_AS(make_phase_wrap_set(0), ConfigError);
}

TEST_CASE("wrap draws are uniform", "[solver]") {
  std::mt19937_64 rng(51);
  const std::size_t count = 8, draws = 10000;
  std::vector<std::size_t> hist(count, 0);
  for (std::size_t t = 0; t < draws; ++t) ++hist[draw_wrap_index(rng, count)];
  const double expect = double(draws) / count, sd = std::sqrt(draws * (1.0 / count) * (1.0 - 1.0 / count));
  double chi2 = 0.0;
  for (auto h : hist) {
    CHECK(std::abs(double(h) - expect) <= 3.0 * sd);
    chi2 += (h - expect) * (h - expect) / expect;
  }
  CHECK(chi2 < 24.32);  // 99.9% quantile, 7 degrees of freedom
}

TEST_CASE("realized wraps", "[solver]") {
  std::mt19937_64 rng(52);
  const auto wf = small_waterfat(53);
  const std::size_t n = wf.image_size();
  const auto p0 = wf.phase(random_real(wf.p_size(), rng, -kPi, kPi));
  const auto wraps = realize_wraps(make_phase_wrap_set(8), wf, p0);
  REQUIRE(wraps.size() == 8);
  const std::size_t anchor = wrap_anchor_index(wf, p0, 8);
  for (std::size_t j = 0; j < 8; ++j) {
    const double c = kTwoPi * double((j + anchor) % 8) / 8.0;
    for (std::size_t i = 0; i < 2 * n; ++i) {
      const double w = wraps[j][i];
      // an integer multiple of 2 pi away from the constant offset
      const double k = (w - c) / kTwoPi;
      CHECK(std::abs(k - std::round(k)) <= 1e-12);
      CHECK(std::abs(wrap_phase(p0.data[i] + w) - wrap_phase(p0.data[i] + c)) <= 1e-12);
    }
    for (std::size_t i = 2 * n; i < 3 * n; ++i) CHECK(wraps[j][i] == 0.0);
  }
  // the zero offset leaves a principal-valued p0 unchanged
  const std::size_t zero_entry = (8 - anchor) % 8;
  for (double v : wraps[zero_entry]) CHECK(v == 0.0);

  const auto constant = realize_wraps(make_phase_wrap_set(4), wf, p0, WrapMode::Constant);
  const std::size_t a4 = wrap_anchor_index(wf, p0, 4);
  CHECK(constant[1][0] == Approx(kTwoPi * double((1 + a4) % 4) / 4.0).margin(1e-15));
}

TEST_CASE("wrap anchor follows a global phase shift", "[solver]") {
  std::mt19937_64 rng(54);
  const auto model = small_partial_fourier(55);
  RealVec p = random_real(64, rng, -0.5, 0.5);
  const auto p0 = model.phase(p);
  const std::size_t a = wrap_anchor_index(model, p0, 8);
  for (int j = 1; j < 8; ++j)
    CHECK(wrap_anchor_index(model, shifted(model, p0, kTwoPi * j / 8.0 + 1e-9), 8) == (a + j) % 8);
  CHECK(wrap_anchor_index(model, p0, 1) == 0);
}

TEST_CASE("default step sizes", "[solver]") {
  const auto model = unit_pf({8, 8});
  const auto c = estimate_spectral_constants(model);
  CHECK(c.a == Approx(1.0).margin(1e-8));
  CHECK(c.m == Approx(1.0).margin(1e-8));
  CHECK(c.p == Approx(1.0).margin(1e-8));
  std::mt19937_64 rng(56);
  RealVec m = random_real(64, rng, 0.0, 1.0);
  m[5] = 1.0;
  const auto s = default_step_sizes(model, c, model.magnitude(m));
  CHECK(s.magnitude == Approx(1.0 / 1.01).epsilon(1e-8));
  CHECK(s.phase == Approx(1.0 / 1.01).epsilon(1e-8));
  RealVec m2 = m;
  for (double& v : m2) v *= 2.0;
  CHECK(default_step_sizes(model, c, model.magnitude(m2)).phase == Approx(s.phase / 4.0).epsilon(1e-12));
  CHECK_THROWS_WITH(default_step_sizes(model, c, model.magnitude(RealVec(64, 0.0))),
                    Catch::Contains("zero magnitude; cannot set phase step"));

  const auto flow = small_flow(57);
  const auto fc = estimate_spectral_constants(flow, 200, 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(dense(flow.P).adjoint() * dense(flow.P));
  CHECK(fc.p == Approx(es.eigenvalues().maxCoeff()).epsilon(1e-8));
  CHECK(fc.p == Approx(4.0).epsilon(1e-8));
  const auto fm = flow.magnitude(RealVec(flow.m_size(), 1.0));
  const auto fs = default_step_sizes(flow, fc, fm);
  CHECK(fs.phase == Approx(1.0 / (1.01 * fc.a * 4.0)).epsilon(1e-8));
}

TEST_CASE("one magnitude step on a single voxel is the hand-computed gradient step", "[solver]") {
  const auto model = unit_pf({1, 1});
  const double mt = 0.8, pt = 0.6, m0 = 0.3, alpha = 0.5;
  const CxVec y{std::polar(mt, pt)};
  const auto p = model.phase({pt + 0.2});
  const auto m1 = magnitude_update(model, model.magnitude({m0}), p, y, make_zero_reg(), alpha, 1);
  const double expect = m0 + alpha * (y[0] * std::polar(1.0, -(pt + 0.2)) - m0).real();
  CHECK(m1.data[0] == Approx(expect).epsilon(1e-14));
}

TEST_CASE("magnitude update keeps an optimum fixed", "[solver]") {
  std::mt19937_64 rng(58);
  const auto model = small_partial_fourier(59);
  const auto m = model.magnitude(random_real(64, rng, 0.1, 1.0));
  const auto p = model.phase(random_real(64, rng, -kPi, kPi));
  const CxVec y = forward(model, m, p);
  const auto out = magnitude_update(model, m, p, y, make_zero_reg(), 0.9, 5);
  CHECK(rel_diff(out.data, m.data) <= 1e-13);
}

TEST_CASE("phase updates", "[solver]") {
  std::mt19937_64 rng(60);
  const auto model = small_partial_fourier(61);
  const auto m = model.magnitude(random_real(64, rng, 0.2, 1.0));
  const auto p = model.phase(random_real(64, rng, -kPi, kPi));
  const CxVec y = random_cx(model.y_size(), rng);
  const double alpha = 0.3;

  SECTION("without a penalty the wraps cancel") {
    std::mt19937_64 r1(1), r2(1);
    const std::vector<RealVec> zero{RealVec(64, 0.0)};
    const auto wraps = realize_wraps(make_phase_wrap_set(8), model, p);
    const auto a = phase_update_cycled(model, m, p, y, make_zero_reg(), alpha, 3, zero, r1);
    const auto b = phase_update_cycled(model, m, p, y, make_zero_reg(), alpha, 3, wraps, r2);
    double worst = 0.0;
    for (std::size_t i = 0; i < 64; ++i) worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    CHECK(worst <= 1e-12);
  }

  SECTION("a single zero wrap is the plain proximal gradient step") {
    const auto g = make_l1_wavelet_reg(0.05, {WaveletFamily::Daubechies4, 2}, {8, 8});
    std::mt19937_64 r(2);
    const auto out = phase_update_cycled(model, m, p, y, g, alpha, 1, std::vector<RealVec>{RealVec(64, 0.0)}, r);
    const RealVec grad = phase_gradient(model, m, p, y);
    RealVec step = p.data;
    for (std::size_t i = 0; i < 64; ++i) step[i] -= alpha * grad[i];
    CHECK(rel_diff(out.data, g.prox(step, alpha)) <= 1e-13);
  }

  SECTION("cycled step against its definition") {
    const auto g = make_l1_wavelet_reg(0.05, {WaveletFamily::Daubechies4, 2}, {8, 8});
    const auto wraps = realize_wraps(make_phase_wrap_set(4), model, p);
    std::mt19937_64 r(3), mirror(3);
    const auto out = phase_update_cycled(model, m, p, y, g, alpha, 1, wraps, r);
    const auto& w = wraps[draw_wrap_index(mirror, wraps.size())];
    const RealVec grad = phase_gradient(model, m, p, y);
    RealVec step(64);
    for (std::size_t i = 0; i < 64; ++i) step[i] = p.data[i] + w[i] - alpha * grad[i];
    RealVec expect = g.prox(step, alpha);
    for (std::size_t i = 0; i < 64; ++i) expect[i] -= w[i];
    CHECK(rel_diff(out.data, expect) <= 1e-13);
  }
}

TEST_CASE("single-voxel phase iteration converges monotonically", "[solver]") {
  const auto model = unit_pf({1, 1});
  const double target = 0.4;
  const CxVec y{std::polar(1.0, target)};
  const auto m = model.magnitude({1.0});
  for (double start : {target - 1.5, target + 1.2, target + 0.1}) {
    auto p = model.phase({start});
    double err = std::abs(start - target);
    std::mt19937_64 rng(4);
    for (int k = 0; k < 60; ++k) {
      p = phase_update_cycled(model, m, p, y, make_zero_reg(), 1.0 / 1.01, 1, std::vector<RealVec>{RealVec{0.0}}, rng);
      const double e = std::abs(p.data[0] - target);
      CHECK(e <= err + 1e-15);
      err = e;
    }
    CHECK(err <= 1e-8);
  }
}

TEST_CASE("noiseless fully sampled reconstruction from the true phase", "[solver]") {
  const Shape sh{16, 16};
  const auto model = unit_pf(sh);
  const auto ph = make_phantom(PhantomKind::PfBrainLike, sh, 2.0, 71);
  const CxVec y = simulate_acquisition(model, ph, 0.0, 72);
  SolverConfig cfg;
  cfg.wrap_count = 1;
  cfg.outer_iters = 100;
  const auto r = reconstruct(model, y, model.magnitude(RealVec(256, 0.5)), model.phase(ph.p), make_zero_reg(),
                             make_zero_reg(), cfg);
  RealVec mod = r.m.data;
  for (double& v : mod) v = std::abs(v);
  CHECK(rel_diff(mod, ph.m) < 1e-6);
  CHECK(r.outer_iterations == 100);
  CHECK(r.robust_objective_outer.size() == 101);
}

TEST_CASE("uncycled solve descends at every inner step and is deterministic", "[solver]") {
  const Shape sh{16, 16};
  const std::size_t n = 256;
  std::mt19937_64 rng(73);
  const auto ph = make_phantom(PhantomKind::PfBrainLike, sh, kTwoPi, 74);
  const auto maps = make_sens_maps(sh, 4, 75);
  const auto mask = combine_masks(poisson_disk_mask(sh, 2.0, 4, 76), partial_fourier_mask(sh, 0.75, 0));
  const auto model = build_partial_fourier(sh, mask.values, maps);
  const CxVec y = simulate_acquisition(model, ph, 0.01, 77);
  const WaveletSpec ws{WaveletFamily::Daubechies4, 2};
  const auto gm = make_l1_wavelet_reg(1e-3, ws, sh), gp = make_l1_wavelet_reg(5e-3, ws, sh);
  auto [m0, p0] = init_zero_filled(model, y);
  SolverConfig cfg;
  cfg.wrap_count = 1;
  cfg.outer_iters = 20;
  cfg.inner_iters = 5;
  cfg.record_history = true;
  cfg.power_iters = 300;
  cfg.power_tol = 1e-12;
  const auto a = reconstruct(model, y, m0, p0, gm, gp, cfg);
  REQUIRE(a.objective_history.size() == 20u * 2u * 5u);
  CHECK(a.robust_objective_history.size() == a.objective_history.size());
  CHECK(a.residual_history.size() == a.objective_history.size());
  double prev = objective(model, m0, p0, y, gm, gp);
  for (double v : a.objective_history) {
    CHECK(v <= prev + 1e-9);
    prev = v;
  }
  CHECK(a.robust_objective_history == a.objective_history);

  const auto b = reconstruct(model, y, m0, p0, gm, gp, cfg);
  CHECK(a.objective_history == b.objective_history);
  CHECK(a.m.data == b.m.data);
  CHECK(a.p.data == b.p.data);
  (void)n;
  (void)rng;
}

TEST_CASE("cycled solve: robust objective trend and seed dependence", "[solver]") {
  const Shape sh{32, 32};
  const auto ph = make_phantom(PhantomKind::PfBrainLike, sh, 3 * kPi, 81);
  const auto maps = make_sens_maps(sh, 4, 82);
  const auto mask = combine_masks(poisson_disk_mask(sh, 2.0, 8, 83), partial_fourier_mask(sh, 0.75, 0));
  const auto model = build_partial_fourier(sh, mask.values, maps);
  const CxVec y = simulate_acquisition(model, ph, 0.0, 84);
  const WaveletSpec ws{WaveletFamily::Daubechies4, 3};
  const auto gm = make_l1_wavelet_reg(1e-3, ws, sh), gp = make_l1_wavelet_reg(5e-3, ws, sh);
  auto [m0, p0] = init_zero_filled(model, y);
  SolverConfig cfg;
  cfg.outer_iters = 40;
  cfg.seed = 9;
  const auto r = reconstruct(model, y, m0, p0, gm, gp, cfg);
  const auto& h = r.robust_objective_outer;
  REQUIRE(h.size() == 41);
  CHECK(h.back() <= h.front());
  cfg.seed = 10;
  const auto other = reconstruct(model, y, m0, p0, gm, gp, cfg);
  CHECK(other.m.data != r.m.data);
}

TEST_CASE("solver error paths", "[solver]") {
  const auto model = small_partial_fourier(91);
  std::mt19937_64 rng(92);
  const auto m = model.magnitude(random_real(64, rng, 0.5, 1.0));
  const auto p = model.phase(random_real(64, rng, -1.0, 1.0));
  const CxVec y = forward(model, m, p);
  SolverConfig cfg;
  cfg.outer_iters = 0;
  CHECK_THROWS_AS(reconstruct(model, y, m, p, make_zero_reg(), make_zero_reg(), cfg), ConfigError);
  cfg = SolverConfig{};
  cfg.wrap_count = 0;
  CHECK_THROWS_AS(reconstruct(model, y, m, p, make_zero_reg(), make_zero_reg(), cfg), ConfigError);
  cfg = SolverConfig{};
  CHECK_THROWS_AS(reconstruct(model, CxVec(3), m, p, make_zero_reg(), make_zero_reg(), cfg), ShapeError);
  CHECK_THROWS_AS(
      reconstruct(model, y, model.magnitude(RealVec(64, 0.0)), p, make_zero_reg(), make_zero_reg(), cfg),
      NumericalError);
  // far too large steps blow up the data term
  cfg.step_safety = 40.0;
  CxVec noisy = random_cx(model.y_size(), rng);
  CHECK_THROWS_AS(reconstruct(model, noisy, m, p, make_zero_reg(), make_zero_reg(), cfg), NumericalError);
  cfg.step_safety = 1.0;
  CxVec bad = y;
  bad[0] = Cx(std::nan(""), 0.0);
  CHECK_THROWS_AS(reconstruct(model, bad, m, p, make_zero_reg(), make_zero_reg(), cfg), NumericalError);
}

TEST_CASE("zero-filled initialization", "[solver]") {
  std::mt19937_64 rng(93);
  SECTION("full mask, unit coil: modulus and angle of the image") {
    const auto model = unit_pf({8, 8});
    const CxVec x = random_cx(64, rng);
    const CxVec y = model.A.apply(x);
    const auto [m0, p0] = init_zero_filled(model, y);
    for (std::size_t i = 0; i < 64; ++i) {
      CHECK(m0.data[i] == Approx(std::abs(x[i])).epsilon(1e-12));
      CHECK(std::abs(wrap_phase(p0.data[i] - std::arg(x[i]))) <= 1e-12);
    }
  }
  SECTION("zero data gives zero images") {
    for (const auto& model : {small_partial_fourier(94), small_waterfat(95), small_flow(96)}) {
      const auto [m0, p0] = init_zero_filled(model, CxVec(model.y_size(), Cx{0.0}));
      for (double v : m0.data) CHECK(v == 0.0);
      for (double v : p0.data) CHECK(v == 0.0);
    }
  }
  SECTION("water-fat matches the dense oracle") {
    const auto model = small_waterfat(97, {4, 4});
    const CxVec y = random_cx(model.y_size(), rng);
    const Eigen::VectorXcd u = dense(model.M).adjoint() * dense(model.A).adjoint() * to_eigen(y);
    const auto [m0, p0] = init_zero_filled(model, y);
    REQUIRE(m0.data.size() == static_cast<std::size_t>(u.size()));
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      CHECK(std::abs(m0.data[i] - std::abs(u(i))) <= 1e-10);
      CHECK(std::abs(wrap_phase(p0.data[i] - std::arg(u(i)))) <= 1e-10);
    }
    for (std::size_t i = 32; i < 48; ++i) CHECK(p0.data[i] == 0.0);
  }
  SECTION("flow: mean modulus over encodes, zero velocity") {
    const auto model = small_flow(98);
    const CxVec y = random_cx(model.y_size(), rng);
    const CxVec x = model.A.adjoint_apply(y);
    const auto [m0, p0] = init_zero_filled(model, y);
    const std::size_t n = model.image_size();
    for (std::size_t i = 0; i < n; i += 7) {
      double s = 0.0;
      for (int v = 0; v < 4; ++v) s += std::abs(x[v * n + i]);
      CHECK(m0.data[i] == Approx(s / 4.0).epsilon(1e-12));
    }
    for (std::size_t i = n; i < 4 * n; ++i) CHECK(p0.data[i] == 0.0);
  }
}

TEST_CASE("folding negative magnitudes keeps the complex image", "[solver]") {
  std::mt19937_64 rng(99);
  for (const auto& model : {small_partial_fourier(100), small_waterfat(101), small_flow(102)}) {
    auto m = model.magnitude(random_real(model.m_size(), rng, -1.0, 1.0));
    auto p = model.phase(random_real(model.p_size(), rng, -kPi, kPi));
    const CxVec before = complex_image(model, m, p);
    fold_negative_magnitude(model, m, p);
    for (double v : m.data) CHECK(v >= 0.0);
    CHECK(rel_diff(complex_image(model, m, p), before) <= 1e-13);
  }
}
