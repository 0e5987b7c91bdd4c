#pragma once

#include <array>
#include <string>

#include "phasecycle/linops.hpp"
#include "phasecycle/regularizers.hpp"
#include "phasecycle/types.hpp"

namespace phasecycle {

enum class ModelKind { PartialFourier, WaterFat, Flow };

std::string model_kind_name(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// Real images stacked per component, e.g. (m_water, m_fat) or (p_bg, p_x, p_y, p_z).
template <class Tag>
struct ComponentStack {
  Shape image_shape;
  std::vector<std::string> labels;
  RealVec data;

  ComponentStack() = default;
  ComponentStack(Shape shape, std::vector<std::string> component_labels, RealVec values)
      : image_shape(std::move(shape)), labels(std::move(component_labels)), data(std::move(values)) {
    if (data.size() != shape_size(image_shape) * labels.size())
      throw ShapeError("component stack: " + std::to_string(data.size()) + " values for " +
                       std::to_string(labels.size()) + " images of shape " + shape_str(image_shape));
    for (double v : data)
      if (!std::isfinite(v)) throw NumericalError("component stack: non-finite entry");
  }

  std::size_t components() const { return labels.size(); }
  std::size_t image_size() const { return shape_size(image_shape); }
  std::span<const double> component(std::size_t k) const {
    return std::span<const double>(data).subspan(k * image_size(), image_size());
  }
};

struct MagnitudeTag {};
struct PhaseTag {};
using MagnitudeVec = ComponentStack<MagnitudeTag>;
using PhaseVec = ComponentStack<PhaseTag>;

/// y = A(M m . exp(i P p)); M and P have real coefficients.
struct ForwardModel {
  ModelKind kind;
  LinOp A;
  LinOp M;
  LinOp P;
  Shape image_shape;
  std::vector<std::string> m_labels;
  std::vector<std::string> p_labels;
  /// Phase components whose data term is 2 pi periodic and that carry wraps
  /// from a zero-filled initialization.
  std::vector<bool> wrap_cycled;
  /// For each magnitude component, the phase component that multiplies it alone,
  /// so (-m_k, p_j + pi) is an equivalent solution.
  std::vector<std::size_t> sign_partner;

  std::size_t image_size() const { return shape_size(image_shape); }
  std::size_t m_size() const { return M.in_size(); }
  std::size_t p_size() const { return P.in_size(); }
  std::size_t y_size() const { return A.out_size(); }
  const Shape& y_shape() const { return A.out_shape(); }

  MagnitudeVec magnitude(RealVec values) const { return {image_shape, m_labels, std::move(values)}; }
  PhaseVec phase(RealVec values) const { return {image_shape, p_labels, std::move(values)}; }
};

struct FatPeak {
  double amplitude = 1.0;  // relative, all peaks sum to 1
  double shift_hz = -428.0;
};

struct WaterFatSpec {
  RealVec echo_times_s;
  std::vector<FatPeak> peaks;
  /// Time unit of the field-map component: p_field is in radians per unit.
  /// 0 selects the mean echo time.
  double field_unit_s = 0.0;

  double field_unit() const;

  /// Complex fat weight sum_j a_j exp(i 2 pi df_j t_e) at each echo.
  CxVec fat_weights() const;
  void validate() const;
};

struct FlowEncodingSpec {
  /// V x 4 rows acting on (p_bg, p_x, p_y, p_z).
  std::vector<std::array<double, 4>> rows = {
      {{+1, -1, -1, -1}}, {{+1, +1, +1, -1}}, {{+1, +1, -1, +1}}, {{+1, -1, +1, +1}}};
  /// Radians per unit velocity, applied to the velocity columns.
  double venc_scale = 1.0;

  /// Rows with the venc scale folded in.
  std::vector<std::array<double, 4>> scaled_rows() const;
  void validate() const;
};

/// M = P = I, A = mask . F . S.
ForwardModel build_partial_fourier(const Shape& image_shape, std::span<const double> mask,
                                   const std::vector<CxVec>& sens_maps);

/// m = (m_water, m_fat), p = (p_water, p_fat, p_field).
ForwardModel build_waterfat(const WaterFatSpec& spec, const Shape& image_shape,
                            const std::vector<RealVec>& masks, const std::vector<CxVec>& sens_maps);

/// m single image, p = (p_bg, p_x, p_y, p_z).
ForwardModel build_flow(const FlowEncodingSpec& spec, const Shape& image_shape,
                        const std::vector<RealVec>& masks, const std::vector<CxVec>& sens_maps);

/// M m . exp(i P p).
CxVec complex_image(const ForwardModel& model, const MagnitudeVec& m, const PhaseVec& p);
CxVec forward(const ForwardModel& model, const MagnitudeVec& m, const PhaseVec& p);

/// 1/2 |y - forward(m, p)|^2.
double data_term(const ForwardModel& model, const MagnitudeVec& m, const PhaseVec& p, std::span<const Cx> y);

double objective(const ForwardModel& model, const MagnitudeVec& m, const PhaseVec& p, std::span<const Cx> y,
                 const Regularizer& g_m, const Regularizer& g_p);

/// Objective with the phase penalty averaged over p + w for each wrap field w.
double robust_objective(const ForwardModel& model, const MagnitudeVec& m, const PhaseVec& p,
                        std::span<const Cx> y, const Regularizer& g_m, const Regularizer& g_p,
                        std::span<const RealVec> wraps);

/// Residual image r = A^*(y - A z) for z = complex_image(m, p).
CxVec residual_image(const ForwardModel& model, std::span<const Cx> z, std::span<const Cx> y);

/// grad_m f = -Re(M^*(exp(-i P p) . r)).
RealVec magnitude_gradient(const ForwardModel& model, const MagnitudeVec& m, const PhaseVec& p,
                           std::span<const Cx> y);
/// grad_p f = -Im(P^*(M m . exp(-i P p) . r)).
RealVec phase_gradient(const ForwardModel& model, const MagnitudeVec& m, const PhaseVec& p,
                       std::span<const Cx> y);

}  // namespace phasecycle
