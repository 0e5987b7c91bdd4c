#include "phasecycle/models.hpp"

#include <cmath>

namespace phasecycle {

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::PartialFourier: return "partial_fourier";
    case ModelKind::WaterFat: return "waterfat";
    case ModelKind::Flow: return "flow";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "partial_fourier") return ModelKind::PartialFourier;
  if (name == "waterfat") return ModelKind::WaterFat;
  if (name == "flow") return ModelKind::Flow;
  throw ConfigError("unknown model kind '" + name + "' (expected partial_fourier, waterfat or flow)");
}

CxVec WaterFatSpec::fat_weights() const {
  CxVec w(echo_times_s.size());
  for (std::size_t e = 0; e < echo_times_s.size(); ++e) {
    Cx s{};
    for (const auto& peak : peaks) s += peak.amplitude * std::polar(1.0, kTwoPi * peak.shift_hz * echo_times_s[e]);
    w[e] = s;
  }
  return w;
}

void WaterFatSpec::validate() const {
  if (echo_times_s.size() < 2)
    throw ConfigError("waterfat: need at least 2 echoes to resolve water and fat, got " +
                      std::to_string(echo_times_s.size()));
  for (std::size_t e = 1; e < echo_times_s.size(); ++e)
    if (!(echo_times_s[e] > echo_times_s[e - 1])) throw ConfigError("waterfat: echo times must be strictly increasing");
  if (peaks.empty()) throw ConfigError("waterfat: at least one fat peak is required");
  double sum = 0.0;
  for (const auto& p : peaks) sum += p.amplitude;
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("waterfat: fat peak amplitudes must sum to 1");
  if (!(field_unit_s >= 0.0)) throw ConfigError("waterfat: field_unit_s must be >= 0");
}

double WaterFatSpec::field_unit() const {
  if (field_unit_s > 0.0) return field_unit_s;
  if (echo_times_s.empty()) throw ConfigError("waterfat: no echo times");
  double s = 0.0;
  for (double t : echo_times_s) s += t;
  return s / static_cast<double>(echo_times_s.size());
}

std::vector<std::array<double, 4>> FlowEncodingSpec::scaled_rows() const {
  auto out = rows;
  for (auto& r : out)
    for (std::size_t c = 1; c < 4; ++c) r[c] *= venc_scale;
  return out;
}

void FlowEncodingSpec::validate() const {
  if (rows.size() < 4) throw ConfigError("flow: need at least 4 encodes for 4 phase components");
  // Gaussian elimination on the Gram matrix
  std::array<std::array<double, 4>, 4> g{};
  for (const auto& r : scaled_rows())
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) g[i][j] += r[i] * r[j];
  double scale = 0.0;
  for (std::size_t i = 0; i < 4; ++i) scale = std::max(scale, g[i][i]);
  for (std::size_t col = 0; col < 4; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < 4; ++r)
      if (std::abs(g[r][col]) > std::abs(g[piv][col])) piv = r;
    if (std::abs(g[piv][col]) <= 1e-10 * std::max(scale, 1e-300))
      throw ConfigError("flow: encoding matrix is rank deficient");
    std::swap(g[piv], g[col]);
    for (std::size_t r = col + 1; r < 4; ++r) {
      const double f = g[r][col] / g[col][col];
      for (std::size_t c = col; c < 4; ++c) g[r][c] -= f * g[col][c];
    }
  }
}

namespace {

void check_maps(const std::vector<CxVec>& maps, const Shape& shape) {
  if (maps.empty()) throw ShapeError("model: at least one coil map is required");
  for (const auto& m : maps)
    if (m.size() != shape_size(shape)) throw ShapeError("model: coil map does not match image shape " + shape_str(shape));
}

LinOp coil_sampling(const Shape& shape, std::span<const double> mask, const std::vector<CxVec>& maps) {
  return compose({make_fft_sampling_op(shape, mask, maps.size()), make_sens_op(maps, shape)});
}

}  // namespace

ForwardModel build_partial_fourier(const Shape& image_shape, std::span<const double> mask,
                                   const std::vector<CxVec>& sens_maps) {
  check_maps(sens_maps, image_shape);
  return ForwardModel{ModelKind::PartialFourier,
                      coil_sampling(image_shape, mask, sens_maps),
                      identity_op(image_shape),
                      identity_op(image_shape),
                      image_shape,
                      {"m"},
                      {"p"},
                      {true},
                      {0}};
}

ForwardModel build_waterfat(const WaterFatSpec& spec, const Shape& image_shape, const std::vector<RealVec>& masks,
                            const std::vector<CxVec>& sens_maps) {
  spec.validate();
  check_maps(sens_maps, image_shape);
  const std::size_t echoes = spec.echo_times_s.size();
  if (masks.size() != echoes)
    throw ShapeError("waterfat: " + std::to_string(masks.size()) + " masks for " + std::to_string(echoes) + " echoes");

  const CxVec fat = spec.fat_weights();
  std::vector<LinOp> blocks;
  CxVec m_coeffs, p_coeffs;
  for (std::size_t e = 0; e < echoes; ++e) {
    auto mix = scalar_block_op(1, 2, {Cx{1.0}, fat[e]}, image_shape);
    blocks.push_back(compose({coil_sampling(image_shape, masks[e], sens_maps), mix}));
    const double t = spec.echo_times_s[e] / spec.field_unit();
    m_coeffs.insert(m_coeffs.end(), {1.0, 0.0, 0.0, 1.0});
    p_coeffs.insert(p_coeffs.end(), {1.0, 0.0, t, 0.0, 1.0, t});
  }
  return ForwardModel{ModelKind::WaterFat,
                      block_diag(blocks),
                      scalar_block_op(2 * echoes, 2, m_coeffs, image_shape),
                      scalar_block_op(2 * echoes, 3, p_coeffs, image_shape),
                      image_shape,
                      {"m_water", "m_fat"},
                      {"p_water", "p_fat", "p_field"},
                      {true, true, false},
                      {0, 1}};
}

ForwardModel build_flow(const FlowEncodingSpec& spec, const Shape& image_shape, const std::vector<RealVec>& masks,
                        const std::vector<CxVec>& sens_maps) {
  spec.validate();
  check_maps(sens_maps, image_shape);
  const std::size_t encodes = spec.rows.size();
  if (masks.size() != encodes)
    throw ShapeError("flow: " + std::to_string(masks.size()) + " masks for " + std::to_string(encodes) + " encodes");
  std::vector<LinOp> blocks;
  CxVec p_coeffs;
  for (std::size_t v = 0; v < encodes; ++v) blocks.push_back(coil_sampling(image_shape, masks[v], sens_maps));
  for (const auto& row : spec.scaled_rows())
    for (double c : row) p_coeffs.emplace_back(c);
  return ForwardModel{ModelKind::Flow,
                      block_diag(blocks),
                      scalar_block_op(encodes, 1, CxVec(encodes, Cx{1.0}), image_shape),
                      scalar_block_op(encodes, 4, p_coeffs, image_shape),
                      image_shape,
                      {"m"},
                      {"p_bg", "p_x", "p_y", "p_z"},
                      {true, false, false, false},
                      {0}};
}

namespace {

void check_operands(const ForwardModel& model, const MagnitudeVec& m, const PhaseVec& p) {
  if (m.data.size() != model.m_size())
    throw ShapeError("model: magnitude has " + std::to_string(m.data.size()) + " entries, expected " +
                     std::to_string(model.m_size()));
  if (p.data.size() != model.p_size())
    throw ShapeError("model: phase has " + std::to_string(p.data.size()) + " entries, expected " +
                     std::to_string(model.p_size()));
}

void check_data(const ForwardModel& model, std::span<const Cx> y) {
  if (y.size() != model.y_size())
    throw ShapeError("model: k-space has " + std::to_string(y.size()) + " entries, expected " +
                     std::to_string(model.y_size()));
}

}  // namespace

CxVec complex_image(const ForwardModel& model, const MagnitudeVec& m, const PhaseVec& p) {
  check_operands(model, m, p);
  const RealVec mm = model.M.apply_real(m.data);
  const RealVec pp = model.P.apply_real(p.data);
  CxVec z(mm.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = std::polar(1.0, pp[i]) * mm[i];
  return z;
}

CxVec forward(const ForwardModel& model, const MagnitudeVec& m, const PhaseVec& p) {
  return model.A.apply(complex_image(model, m, p));
}

double data_term(const ForwardModel& model, const MagnitudeVec& m, const PhaseVec& p, std::span<const Cx> y) {
  check_data(model, y);
  const CxVec Az = forward(model, m, p);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::norm(y[i] - Az[i]);
  return 0.5 * s;
}

double objective(const ForwardModel& model, const MagnitudeVec& m, const PhaseVec& p, std::span<const Cx> y,
                 const Regularizer& g_m, const Regularizer& g_p) {
  return data_term(model, m, p, y) + g_m.value(m.data) + g_p.value(p.data);
}

double robust_objective(const ForwardModel& model, const MagnitudeVec& m, const PhaseVec& p, std::span<const Cx> y,
                        const Regularizer& g_m, const Regularizer& g_p, std::span<const RealVec> wraps) {
  if (wraps.empty()) throw ConfigError("robust_objective: wrap set must not be empty");
  double avg = 0.0;
  RealVec shifted(p.data.size());
  for (const auto& w : wraps) {
    if (w.size() != p.data.size()) throw ShapeError("robust_objective: wrap field size mismatch");
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] = p.data[i] + w[i];
    avg += g_p.value(shifted);
  }
  avg /= static_cast<double>(wraps.size());
  return data_term(model, m, p, y) + g_m.value(m.data) + avg;
}

CxVec residual_image(const ForwardModel& model, std::span<const Cx> z, std::span<const Cx> y) {
  check_data(model, y);
  CxVec diff = model.A.apply(z);
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = y[i] - diff[i];
  return model.A.adjoint_apply(diff);
}

RealVec magnitude_gradient(const ForwardModel& model, const MagnitudeVec& m, const PhaseVec& p,
                           std::span<const Cx> y) {
  const CxVec z = complex_image(model, m, p);
  const CxVec r = residual_image(model, z, y);
  const RealVec pp = model.P.apply_real(p.data);
  CxVec w(r.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::polar(1.0, -pp[i]) * r[i];
  RealVec g = model.M.adjoint_real(std::span<const double>(real_part(w)));
  for (auto& v : g) v = -v;
  return g;
}

RealVec phase_gradient(const ForwardModel& model, const MagnitudeVec& m, const PhaseVec& p, std::span<const Cx> y) {
  const CxVec z = complex_image(model, m, p);
  const CxVec r = residual_image(model, z, y);
  RealVec im(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) im[i] = (std::conj(z[i]) * r[i]).imag();
  RealVec g = model.P.adjoint_real(im);
  for (auto& v : g) v = -v;
  return g;
}

}  // namespace phasecycle
