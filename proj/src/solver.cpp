#include "phasecycle/solver.hpp"

#include <algorithm>
#include <cmath>

namespace phasecycle {

PhaseWrapSet make_phase_wrap_set(int count) {
  if (count < 1) throw ConfigError("phase wrap set: count must be >= 1");
  PhaseWrapSet set;
  for (int k = 0; k < count; ++k) set.offsets.push_back(kTwoPi * k / count);
  return set;
}

std::vector<RealVec> realize_wraps(const PhaseWrapSet& set, const ForwardModel& model, const PhaseVec& p0,
                                   WrapMode mode) {
  if (set.offsets.empty()) throw ConfigError("phase wrap set is empty");
  if (p0.data.size() != model.p_size()) throw ShapeError("realize_wraps: phase does not match model");
  const std::size_t n = model.image_size();
  const std::size_t count = set.offsets.size();
  const std::size_t anchor = wrap_anchor_index(model, p0, count);
  std::vector<RealVec> fields;
  for (std::size_t j = 0; j < count; ++j) {
    const double c = set.offsets[(j + anchor) % count];
    RealVec w(p0.data.size(), 0.0);
    for (std::size_t k = 0; k < model.wrap_cycled.size(); ++k) {
      if (!model.wrap_cycled[k]) continue;
      for (std::size_t i = k * n; i < (k + 1) * n; ++i)
        w[i] = mode == WrapMode::Constant ? c : wrap_phase(p0.data[i] + c) - wrap_phase(p0.data[i]);
    }
    fields.push_back(std::move(w));
  }
  return fields;
}

std::size_t wrap_anchor_index(const ForwardModel& model, const PhaseVec& p0, std::size_t count) {
  const std::size_t n = model.image_size();
  Cx sum{};
  for (std::size_t k = 0; k < model.wrap_cycled.size(); ++k)
    if (model.wrap_cycled[k])
      for (std::size_t i = k * n; i < (k + 1) * n; ++i) sum += std::polar(1.0, p0.data[i]);
  if (std::abs(sum) < 1e-12 * static_cast<double>(p0.data.size())) return 0;
  double turn = std::arg(sum) / kTwoPi;
  if (turn < 0.0) turn += 1.0;
  return static_cast<std::size_t>(std::floor(turn * static_cast<double>(count))) % count;
}

std::size_t draw_wrap_index(std::mt19937_64& rng, std::size_t count) {
  std::uniform_int_distribution<std::size_t> pick(0, count - 1);
  return pick(rng);
}

void SolverConfig::validate() const {
  if (outer_iters < 1 || inner_iters < 1) throw ConfigError("solver: outer_iters and inner_iters must be >= 1");
  if (wrap_count < 1) throw ConfigError("solver: wrap_count must be >= 1");
  if (!(step_safety > 0.0)) throw ConfigError("solver: step_safety must be positive");
  if (!(spectral_safety >= 1.0)) throw ConfigError("solver: spectral_safety must be >= 1");
  if (power_iters < 1) throw ConfigError("solver: power_iters must be >= 1");
}

SpectralConstants estimate_spectral_constants(const ForwardModel& model, int max_iters, double tol,
                                              std::uint64_t seed) {
  SpectralConstants c;
  c.a = max_eigenvalue(model.A, max_iters, tol, seed).lambda_max;
  c.m = max_eigenvalue(model.M, max_iters, tol, seed + 1).lambda_max;
  c.p = max_eigenvalue(model.P, max_iters, tol, seed + 2).lambda_max;
  return c;
}

StepSizes default_step_sizes(const ForwardModel& model, const SpectralConstants& constants, const MagnitudeVec& m,
                             double safety) {
  const RealVec mm = model.M.apply_real(m.data);
  double peak = 0.0;
  for (double v : mm) peak = std::max(peak, v * v);
  if (peak == 0.0) throw NumericalError("zero magnitude; cannot set phase step");
  if (constants.a <= 0.0 || constants.m <= 0.0 || constants.p <= 0.0)
    throw NumericalError("step sizes: operator has zero spectral norm");
  return {1.0 / (safety * constants.a * constants.m), 1.0 / (safety * constants.a * constants.p * peak)};
}

StepSizes default_step_sizes(const ForwardModel& model, const MagnitudeVec& m) {
  return default_step_sizes(model, estimate_spectral_constants(model), m);
}

namespace {

double half_sq_diff(std::span<const Cx> y, std::span<const Cx> Az) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::norm(y[i] - Az[i]);
  return 0.5 * s;
}

double averaged_penalty(const Regularizer& g_p, std::span<const double> p, std::span<const RealVec> wraps) {
  if (wraps.empty()) return g_p.value(p);
  RealVec shifted(p.size());
  double s = 0.0;
  for (const auto& w : wraps) {
    for (std::size_t i = 0; i < p.size(); ++i) shifted[i] = p[i] + w[i];
    s += g_p.value(shifted);
  }
  return s / static_cast<double>(wraps.size());
}

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericalError(std::string("reconstruct: non-finite value in ") + what);
}

CxVec modulate(std::span<const double> amplitude, std::span<const double> phase) {
  CxVec z(amplitude.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = std::polar(1.0, phase[i]) * amplitude[i];
  return z;
}

// State shared by the update loops: the current complex image's k-space is kept
// so each step needs one forward and one adjoint application.
struct Workspace {
  CxVec Az;
};

CxVec residual_from(const ForwardModel& model, std::span<const Cx> y, std::span<const Cx> Az) {
  CxVec diff(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) diff[i] = y[i] - Az[i];
  return model.A.adjoint_apply(diff);
}

MagnitudeVec magnitude_loop(const ForwardModel& model, const MagnitudeVec& m_in, const PhaseVec& p,
                            std::span<const Cx> y, const Regularizer& g_m, double alpha, int steps, Workspace& ws,
                            StepTrace* trace, const Regularizer* g_p, std::span<const RealVec> wraps) {
  MagnitudeVec m = m_in;
  const RealVec q = model.P.apply_real(p.data);
  CxVec phasor(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) phasor[i] = std::polar(1.0, q[i]);
  double gp_value = 0.0, gp_robust = 0.0;
  if (trace && g_p) {
    gp_value = g_p->value(p.data);
    gp_robust = averaged_penalty(*g_p, p.data, wraps);
  }

  for (int k = 0; k < steps; ++k) {
    if (ws.Az.empty()) ws.Az = model.A.apply(modulate(model.M.apply_real(m.data), q));
    const CxVec r = residual_from(model, y, ws.Az);
    RealVec back(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) back[i] = (std::conj(phasor[i]) * r[i]).real();
    const RealVec g = model.M.adjoint_real(back);
    RealVec step(m.data.size());
    for (std::size_t i = 0; i < step.size(); ++i) step[i] = m.data[i] + alpha * g[i];
    m.data = g_m.prox(step, alpha);
    check_finite(m.data, "magnitude");

    const RealVec mm = model.M.apply_real(m.data);
    CxVec z(mm.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = phasor[i] * mm[i];
    ws.Az = model.A.apply(z);
    if (trace) {
      const double base = half_sq_diff(y, ws.Az) + g_m.value(m.data);
      trace->objective.push_back(base + gp_value);
      trace->robust_objective.push_back(base + gp_robust);
      trace->residual_norm.push_back(norm2(r));
    }
  }
  return m;
}

PhaseVec phase_loop(const ForwardModel& model, const MagnitudeVec& m, const PhaseVec& p_in, std::span<const Cx> y,
                    const Regularizer& g_p, double alpha, int steps, std::span<const RealVec> wraps,
                    std::mt19937_64& rng, Workspace& ws, StepTrace* trace, const Regularizer* g_m,
                    std::span<const RealVec> trace_wraps) {
  if (wraps.empty()) throw ConfigError("phase update: wrap set must not be empty");
  PhaseVec p = p_in;
  const RealVec mm = model.M.apply_real(m.data);
  const double gm_value = (trace && g_m) ? g_m->value(m.data) : 0.0;

  for (int k = 0; k < steps; ++k) {
    const std::size_t pick = draw_wrap_index(rng, wraps.size());
    const RealVec& w = wraps[pick];
    const RealVec q = model.P.apply_real(p.data);
    const CxVec z = modulate(mm, q);
    if (ws.Az.empty()) ws.Az = model.A.apply(z);
    const CxVec r = residual_from(model, y, ws.Az);
    RealVec back(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) back[i] = (std::conj(z[i]) * r[i]).imag();
    const RealVec g = model.P.adjoint_real(back);
    RealVec shifted(p.data.size());
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] = p.data[i] + w[i] + alpha * g[i];
    RealVec next = g_p.prox(shifted, alpha);
    for (std::size_t i = 0; i < next.size(); ++i) next[i] -= w[i];
    p.data = std::move(next);
    check_finite(p.data, "phase");

    ws.Az = model.A.apply(modulate(mm, model.P.apply_real(p.data)));
    if (trace) {
      const double base = half_sq_diff(y, ws.Az) + gm_value;
      trace->objective.push_back(base + g_p.value(p.data));
      trace->robust_objective.push_back(base + averaged_penalty(g_p, p.data, trace_wraps));
      trace->residual_norm.push_back(norm2(r));
    }
  }
  return p;
}

}  // namespace

MagnitudeVec magnitude_update(const ForwardModel& model, const MagnitudeVec& m, const PhaseVec& p,
                              std::span<const Cx> y, const Regularizer& g_m, double alpha, int steps,
                              StepTrace* trace, const Regularizer* g_p, std::span<const RealVec> wraps) {
  if (!(alpha > 0.0)) throw ConfigError("magnitude update: step size must be positive");
  if (y.size() != model.y_size()) throw ShapeError("magnitude update: k-space size mismatch");
  Workspace ws;
  return magnitude_loop(model, m, p, y, g_m, alpha, steps, ws, trace, g_p, wraps);
}

PhaseVec phase_update_cycled(const ForwardModel& model, const MagnitudeVec& m, const PhaseVec& p,
                             std::span<const Cx> y, const Regularizer& g_p, double alpha, int steps,
                             std::span<const RealVec> wraps, std::mt19937_64& rng, StepTrace* trace,
                             const Regularizer* g_m) {
  if (!(alpha > 0.0)) throw ConfigError("phase update: step size must be positive");
  if (y.size() != model.y_size()) throw ShapeError("phase update: k-space size mismatch");
  Workspace ws;
  return phase_loop(model, m, p, y, g_p, alpha, steps, wraps, rng, ws, trace, g_m, wraps);
}

ReconResult reconstruct(const ForwardModel& model, std::span<const Cx> y, const MagnitudeVec& m0, const PhaseVec& p0,
                        const Regularizer& g_m, const Regularizer& g_p, const SolverConfig& config) {
  config.validate();
  if (y.size() != model.y_size())
    throw ShapeError("reconstruct: k-space has " + std::to_string(y.size()) + " entries, model expects " +
                     std::to_string(model.y_size()));
  if (m0.data.size() != model.m_size() || p0.data.size() != model.p_size())
    throw ShapeError("reconstruct: initial images do not match the model");

  ReconResult result;
  result.constants = estimate_spectral_constants(model, config.power_iters, config.power_tol, config.seed);
  const auto wraps = realize_wraps(make_phase_wrap_set(config.wrap_count), model, p0, config.wrap_mode);
  std::mt19937_64 rng(config.seed);

  const StepSizes initial_steps = default_step_sizes(model, result.constants, m0, config.spectral_safety);
  const double alpha_m = config.step_safety * initial_steps.magnitude;

  MagnitudeVec m = m0;
  PhaseVec p = p0;
  const double initial_data = data_term(model, m, p, y);
  result.robust_objective_outer.push_back(robust_objective(model, m, p, y, g_m, g_p, wraps));

  StepTrace trace;
  StepTrace* tp = config.record_history ? &trace : nullptr;
  Workspace ws;
  for (int n = 0; n < config.outer_iters; ++n) {
    m = magnitude_loop(model, m, p, y, g_m, alpha_m, config.inner_iters, ws, tp, &g_p, wraps);
    const double alpha_p =
        config.step_safety * default_step_sizes(model, result.constants, m, config.spectral_safety).phase;
    p = phase_loop(model, m, p, y, g_p, alpha_p, config.inner_iters, wraps, rng, ws, tp, &g_m, wraps);

    const double current = half_sq_diff(y, ws.Az);
    if (!std::isfinite(current)) throw NumericalError("reconstruct: data term became non-finite");
    if (current > config.divergence_factor * std::max(initial_data, 1e-300))
      throw NumericalError("reconstruct: data term grew past " + std::to_string(config.divergence_factor) +
                           "x its initial value at outer iteration " + std::to_string(n));
    result.robust_objective_outer.push_back(current + g_m.value(m.data) + averaged_penalty(g_p, p.data, wraps));
    result.outer_iterations = n + 1;
  }

  result.m = std::move(m);
  result.p = std::move(p);
  result.objective_history = std::move(trace.objective);
  result.robust_objective_history = std::move(trace.robust_objective);
  result.residual_history = std::move(trace.residual_norm);
  return result;
}

std::pair<MagnitudeVec, PhaseVec> init_zero_filled(const ForwardModel& model, std::span<const Cx> y) {
  if (y.size() != model.y_size()) throw ShapeError("init_zero_filled: k-space size mismatch");
  const std::size_t n = model.image_size();
  const CxVec x = model.A.adjoint_apply(y);
  RealVec m, p(model.p_size(), 0.0);

  switch (model.kind) {
    case ModelKind::PartialFourier: {
      const CxVec u = model.M.adjoint_apply(x);
      m.resize(u.size());
      for (std::size_t i = 0; i < u.size(); ++i) {
        m[i] = std::abs(u[i]);
        p[i] = std::arg(u[i]);
      }
      break;
    }
    case ModelKind::WaterFat: {
      const CxVec u = model.M.adjoint_apply(x);  // (water, fat)
      m.resize(u.size());
      for (std::size_t i = 0; i < u.size(); ++i) {
        m[i] = std::abs(u[i]);
        p[i] = std::arg(u[i]);
      }
      break;
    }
    case ModelKind::Flow: {
      const std::size_t encodes = x.size() / n;
      m.assign(n, 0.0);
      for (std::size_t v = 0; v < encodes; ++v)
        for (std::size_t i = 0; i < n; ++i) m[i] += std::abs(x[v * n + i]) / static_cast<double>(encodes);
      for (std::size_t i = 0; i < n; ++i) p[i] = std::arg(x[i]);
      break;
    }
  }
  return {model.magnitude(std::move(m)), model.phase(std::move(p))};
}

void fold_negative_magnitude(const ForwardModel& model, MagnitudeVec& m, PhaseVec& p) {
  if (m.data.size() != model.m_size() || p.data.size() != model.p_size())
    throw ShapeError("fold_negative_magnitude: images do not match the model");
  const std::size_t n = model.image_size();
  for (std::size_t k = 0; k < model.sign_partner.size(); ++k) {
    const std::size_t j = model.sign_partner[k];
    for (std::size_t i = 0; i < n; ++i)
      if (m.data[k * n + i] < 0.0) {
        m.data[k * n + i] = -m.data[k * n + i];
        p.data[j * n + i] = wrap_phase(p.data[j * n + i] + kPi);
      }
  }
}

}  // namespace phasecycle
