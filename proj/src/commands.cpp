#include "phasecycle/commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>

#include "phasecycle/array_io.hpp"

namespace phasecycle {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void note(std::ostream* log, const std::string& msg) {
  if (log) *log << msg << '\n';
}

std::vector<std::string> image_axes(std::size_t rank) {
  static const char* names[] = {"x", "y", "z"};
  std::vector<std::string> out;
  for (std::size_t a = 0; a < rank; ++a) out.push_back(a < 3 ? names[a] : "axis" + std::to_string(a));
  return out;
}

Shape stacked_shape(std::size_t count, const Shape& image) {
  Shape s{count};
  s.insert(s.end(), image.begin(), image.end());
  return s;
}

std::vector<std::string> stacked_axes(const std::string& lead, std::size_t rank) {
  auto axes = image_axes(rank);
  axes.insert(axes.begin(), lead);
  return axes;
}

void require_dir(const fs::path& dir, const char* what) {
  if (dir.empty()) throw ConfigError(std::string(what) + ": no output directory given (use --out or paths.out)");
  if (!fs::is_directory(dir)) throw DataError(std::string(what) + ": output directory '" + dir.string() + "' does not exist");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

template <class T>
std::vector<std::vector<T>> split(const std::vector<T>& v, std::size_t parts) {
  std::vector<std::vector<T>> out;
  const std::size_t n = v.size() / parts;
  for (std::size_t k = 0; k < parts; ++k) out.emplace_back(v.begin() + k * n, v.begin() + (k + 1) * n);
  return out;
}

Regularizer simple_reg(RegKind kind, double lambda, const WaveletSpec& spec, const Shape& shape) {
  if (lambda == 0.0) return make_zero_reg();
  switch (kind) {
    case RegKind::None: return make_zero_reg();
    case RegKind::L2: return make_l2_reg(lambda);
    case RegKind::L1Wavelet: return make_l1_wavelet_reg(lambda, spec, shape);
    case RegKind::DivFree: break;
  }
  throw ConfigError("divfree regularization only applies to flow phase");
}

RealVec magnitudes(const ArrayData& d, bool modulus = true) {
  if (d.header.dtype == DType::Real64) {
    RealVec out = d.real;
    if (modulus)
      for (double& v : out) v = std::abs(v);
    return out;
  }
  RealVec out(d.cx.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(d.cx[i]);
  return out;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::size_t acquisition_count(const ExperimentConfig& config) {
  switch (config.model.kind) {
    case ModelKind::PartialFourier: return 1;
    case ModelKind::WaterFat: return config.model.waterfat.echo_times_s.size();
    case ModelKind::Flow: return config.model.flow.rows.size();
  }
  return 1;
}

std::vector<RealVec> make_masks(const ExperimentConfig& config) {
  const auto& s = config.model.sampling;
  const Shape& shape = config.phantom.shape;
  std::vector<RealVec> out;
  for (std::size_t e = 0; e < acquisition_count(config); ++e) {
    SamplingMask mask = s.accel > 1.0 ? poisson_disk_mask(shape, s.accel, s.calib, config.sampling_seed() + e)
                                      : full_mask(shape);
    if (s.partial_fourier < 1.0) mask = combine_masks(mask, partial_fourier_mask(shape, s.partial_fourier, s.pf_axis));
    out.push_back(std::move(mask.values));
  }
  return out;
}

ForwardModel build_model(const ExperimentConfig& config, const Shape& image_shape,
                         const std::vector<RealVec>& masks, const std::vector<CxVec>& maps) {
  switch (config.model.kind) {
    case ModelKind::PartialFourier:
      if (masks.size() != 1) throw ShapeError("partial fourier: expected 1 mask, got " + std::to_string(masks.size()));
      return build_partial_fourier(image_shape, masks[0], maps);
    case ModelKind::WaterFat: return build_waterfat(config.model.waterfat, image_shape, masks, maps);
    case ModelKind::Flow: return build_flow(config.model.flow, image_shape, masks, maps);
  }
  throw ConfigError("unknown model kind");
}

std::pair<Regularizer, Regularizer> build_regularizers(const ExperimentConfig& config, const ForwardModel& model) {
  const auto& r = config.regularization;
  const Shape& shape = model.image_shape;
  const std::size_t n = model.image_size();
  Regularizer gm = simple_reg(r.magnitude.kind, r.magnitude.lambda, r.wavelet, shape);
  const double lp = r.phase.lambda;
  switch (model.kind) {
    case ModelKind::PartialFourier: return {gm, simple_reg(r.phase.kind, lp, r.wavelet, shape)};
    case ModelKind::WaterFat: {
      if (r.phase.kind == RegKind::None) return {gm, make_zero_reg()};
      const double lf = r.field_lambda.value_or(lp);
      return {gm, make_separable_reg({simple_reg(r.phase.kind, lp, r.wavelet, shape),
                                      simple_reg(r.phase.kind, lp, r.wavelet, shape),
                                      simple_reg(r.phase.kind, lf, r.wavelet, shape)},
                                     n)};
    }
    case ModelKind::Flow:
      if (r.phase.kind == RegKind::DivFree) return {gm, make_divfree_reg(lp, r.wavelet, shape)};
      if (r.phase.kind == RegKind::None)
        return {gm, make_separable_reg({simple_reg(RegKind::L1Wavelet, lp, r.wavelet, shape), make_zero_reg(),
                                        make_zero_reg(), make_zero_reg()},
                                       n)};
      return {gm, simple_reg(r.phase.kind, lp, r.wavelet, shape)};
  }
  throw ConfigError("unknown model kind");
}

Dataset load_dataset(const fs::path& dir) {
  if (dir.empty()) throw ConfigError("no data directory given (use --data or paths.data)");
  if (!fs::is_directory(dir)) throw DataError("data directory '" + dir.string() + "' does not exist");
  Dataset d;
  const auto masks = read_real_array(dir / "masks");
  const auto maps = read_complex_array(dir / "maps");
  const auto& ms = masks.header.shape;
  if (ms.size() < 2) throw DataError("masks: expected (acquisition, image...) layout");
  d.image_shape.assign(ms.begin() + 1, ms.end());
  if (maps.header.shape.size() != ms.size() || !std::equal(d.image_shape.begin(), d.image_shape.end(),
                                                           maps.header.shape.begin() + 1))
    throw ShapeError("maps shape " + shape_str(maps.header.shape) + " does not match masks " + shape_str(ms));
  d.masks = split(masks.real, ms[0]);
  d.maps = split(maps.cx, maps.header.shape[0]);
  d.kspace = read_complex_array(dir / "kspace").cx;
  auto optional_real = [&](const char* name, std::optional<RealVec>& out) {
    if (fs::exists(dir / (std::string(name) + ".json"))) out = read_real_array(dir / name).real;
  };
  optional_real("truth_m", d.truth_m);
  optional_real("truth_p", d.truth_p);
  optional_real("truth_support", d.truth_support);
  return d;
}

void cmd_simulate(const ExperimentConfig& config, const fs::path& out, std::ostream* log) {
  config.validate();
  require_dir(out, "simulate");
  const Shape& shape = config.phantom.shape;
  PhantomOptions opts = config.phantom.options;
  if (config.model.kind == ModelKind::WaterFat) opts.field_unit_s = config.model.waterfat.field_unit();
  note(log, "simulate: " + phantom_kind_name(config.phantom.kind) + " " + shape_str(shape));
  const Phantom ph = make_phantom(config.phantom.kind, shape, config.phantom.phase_range, config.phantom_seed(), opts);
  const auto maps = make_sens_maps(shape, config.model.coils, config.coil_seed());
  const auto masks = make_masks(config);
  const ForwardModel model = build_model(config, shape, masks, maps);
  const CxVec y = simulate_acquisition(model, ph, config.noise.sigma, config.noise_seed());

  const std::size_t rank = shape.size();
  write_array(out / "truth_m", ph.m, stacked_shape(ph.m_labels.size(), shape), stacked_axes("component", rank));
  write_array(out / "truth_p", ph.p, stacked_shape(ph.p_labels.size(), shape), stacked_axes("component", rank));
  write_array(out / "truth_support", ph.support, shape, image_axes(rank));
  write_array(out / "kspace", y, model.y_shape());
  RealVec mask_flat;
  for (const auto& m : masks) mask_flat.insert(mask_flat.end(), m.begin(), m.end());
  write_array(out / "masks", mask_flat, stacked_shape(masks.size(), shape), stacked_axes("acquisition", rank));
  CxVec map_flat;
  for (const auto& m : maps) map_flat.insert(map_flat.end(), m.begin(), m.end());
  write_array(out / "maps", map_flat, stacked_shape(maps.size(), shape), stacked_axes("coil", rank));

  const std::string canonical = dump_config(config);
  json manifest;
  manifest["format"] = "phasecycle-dataset";
  manifest["version"] = 1;
  manifest["config"] = json::parse(canonical);
  manifest["config_hash"] = hex64(fnv1a(canonical));
  manifest["seeds"] = {{"phantom", config.phantom_seed()},
                       {"coil", config.coil_seed()},
                       {"sampling", config.sampling_seed()},
                       {"noise", config.noise_seed()},
                       {"solver", config.solver_seed()}};
  manifest["labels"] = {{"m", ph.m_labels}, {"p", ph.p_labels}};
  json files;
  for (const char* name : {"truth_m", "truth_p", "truth_support", "kspace", "masks", "maps"}) {
    const auto h = read_array_header(out / name);
    files[name] = {{"dtype", dtype_name(h.dtype)}, {"shape", h.shape}, {"fnv1a", payload_hash(out / name)}};
  }
  manifest["files"] = files;
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  note(log, "simulate: wrote dataset to " + out.string());
}

ReconOutputs run_reconstruction(const ExperimentConfig& config, const Dataset& data) {
  config.validate();
  if (data.image_shape != config.phantom.shape)
    throw ShapeError("data image shape " + shape_str(data.image_shape) + " does not match config shape " +
                     shape_str(config.phantom.shape));
  if (data.masks.size() != acquisition_count(config))
    throw ShapeError("data holds " + std::to_string(data.masks.size()) + " masks, model '" +
                     model_kind_name(config.model.kind) + "' needs " + std::to_string(acquisition_count(config)));
  const ForwardModel model = build_model(config, data.image_shape, data.masks, data.maps);
  if (data.kspace.size() != model.y_size())
    throw ShapeError("k-space has " + std::to_string(data.kspace.size()) + " samples, model expects " +
                     std::to_string(model.y_size()));
  const auto [gm, gp] = build_regularizers(config, model);
  SolverConfig sc = config.solver;
  sc.seed = config.solver_seed();

  const auto t0 = std::chrono::steady_clock::now();
  auto [m0, p0] = init_zero_filled(model, data.kspace);
  ReconOutputs out{reconstruct(model, data.kspace, m0, p0, gm, gp, sc), {}, 0.0, 0.0};
  if (config.fold_negative) fold_negative_magnitude(model, out.result.m, out.result.p);
  out.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.final_objective = objective(model, out.result.m, out.result.p, data.kspace, gm, gp);

  if (data.truth_m) {
    if (data.truth_m->size() != out.result.m.data.size())
      throw DataError("truth_m has " + std::to_string(data.truth_m->size()) + " values, reconstruction has " +
                      std::to_string(out.result.m.data.size()));
    const auto truth = model.magnitude(*data.truth_m);
    for (std::size_t k = 0; k < model.m_labels.size(); ++k) {
      const auto mk = out.result.m.component(k);
      RealVec mod(mk.size());
      for (std::size_t i = 0; i < mk.size(); ++i) mod[i] = std::abs(mk[i]);
      out.psnr.emplace_back(model.m_labels[k], psnr(truth.component(k), mod));
    }
  }
  return out;
}

ReconOutputs cmd_reconstruct(const ExperimentConfig& config, const fs::path& data_dir, const fs::path& out,
                             std::ostream* log) {
  config.validate();
  require_dir(out, "reconstruct");
  const Dataset data = load_dataset(data_dir);
  note(log, "reconstruct: " + model_kind_name(config.model.kind) + " " + shape_str(data.image_shape) + ", " +
                std::to_string(config.solver.outer_iters) + " outer iterations, " +
                std::to_string(config.solver.wrap_count) + " wraps");
  ReconOutputs r = run_reconstruction(config, data);
  const auto& res = r.result;
  const std::size_t rank = data.image_shape.size();
  write_array(out / "m", res.m.data, stacked_shape(res.m.components(), data.image_shape),
              stacked_axes("component", rank));
  write_array(out / "p", res.p.data, stacked_shape(res.p.components(), data.image_shape),
              stacked_axes("component", rank));
  write_array(out / "robust_objective_outer", res.robust_objective_outer, {res.robust_objective_outer.size()},
              {"iteration"});
  if (config.solver.record_history) {
    write_array(out / "objective_history", res.objective_history, {res.objective_history.size()}, {"step"});
    write_array(out / "robust_objective_history", res.robust_objective_history,
                {res.robust_objective_history.size()}, {"step"});
    write_array(out / "residual_history", res.residual_history, {res.residual_history.size()}, {"step"});
  }
  json report;
  report["model"] = model_kind_name(config.model.kind);
  report["image_shape"] = data.image_shape;
  report["m_labels"] = res.m.labels;
  report["p_labels"] = res.p.labels;
  report["iterations"] = res.outer_iterations;
  report["inner_iterations"] = config.solver.inner_iters;
  report["wrap_count"] = config.solver.wrap_count;
  report["solver_seed"] = config.solver_seed();
  report["final_objective"] = r.final_objective;
  report["initial_robust_objective"] = res.robust_objective_outer.front();
  report["final_robust_objective"] = res.robust_objective_outer.back();
  report["spectral"] = {{"a", res.constants.a}, {"m", res.constants.m}, {"p", res.constants.p}};
  report["wall_time_s"] = r.wall_time_s;
  report["psnr_of"] = "modulus";
  report["folded"] = config.fold_negative;
  report["config_hash"] = hex64(fnv1a(dump_config(config)));
  if (!r.psnr.empty()) {
    json ps;
    for (const auto& [label, v] : r.psnr) ps[label] = number_or_null(v);
    report["psnr"] = ps;
  }
  write_text(out / "report.json", report.dump(2) + "\n");
  for (const auto& [label, v] : r.psnr) note(log, "reconstruct: psnr " + label + " = " + std::to_string(v) + " dB");
  note(log, "reconstruct: wrote results to " + out.string());
  return r;
}

std::string cmd_metrics(const fs::path& ref_path, const fs::path& rec_path, bool modulus) {
  const auto ref = read_array(ref_path);
  const auto rec = read_array(rec_path);
  const RealVec a = magnitudes(ref, modulus), b = magnitudes(rec, modulus);
  if (a.size() != b.size())
    throw ShapeError("metrics: reference has " + std::to_string(a.size()) + " values, reconstruction has " +
                     std::to_string(b.size()));
  json report;
  report["reference"] = ref_path.string();
  report["reconstruction"] = rec_path.string();
  report["count"] = a.size();
  report["modulus"] = modulus;
  report["psnr"] = number_or_null(psnr(a, b));
  report["psnr_normalized"] = number_or_null(psnr_normalized(a, b));
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  report["rmse"] = a.empty() ? 0.0 : std::sqrt(se / static_cast<double>(a.size()));
  const auto& ax = ref.header.axes;
  if (!ax.empty() && ax[0] == "component" && ref.header.shape == rec.header.shape && ref.header.shape[0] > 0) {
    const std::size_t k = ref.header.shape[0], n = a.size() / k;
    json per = json::array();
    for (std::size_t c = 0; c < k; ++c) {
      std::span<const double> ra(a.data() + c * n, n), rb(b.data() + c * n, n);
      double v = std::numeric_limits<double>::quiet_NaN();
      try {
        v = psnr(ra, rb);
      } catch (const DataError&) {
        // zero reference component
      }
      per.push_back(number_or_null(v));
    }
    report["psnr_components"] = per;
  }
  return report.dump(2);
}

std::vector<unsigned char> render_gray(std::span<const double> image, std::size_t width, std::size_t height,
                                       const RenderOptions& options, std::span<const double> mask_source) {
  const std::size_t n = width * height;
  if (image.size() != n) throw ShapeError("render: image has " + std::to_string(image.size()) + " pixels");
  if (!mask_source.empty() && mask_source.size() != n) throw ShapeError("render: mask source size mismatch");
  if (options.mask_threshold < 0.0 || options.mask_threshold > 1.0)
    throw ConfigError("render: mask threshold must be in [0, 1]");
  RealVec v(image.begin(), image.end());
  double lo = options.lo, hi = options.hi;
  if (options.window == RenderWindow::Phase) {
    for (double& x : v) x = wrap_phase(x);
    lo = -kPi;
    hi = kPi;
  } else if (options.window == RenderWindow::Auto && n) {
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    lo = *mn;
    hi = *mx;
  }
  if (options.window == RenderWindow::Fixed && !(hi > lo)) throw ConfigError("render: window needs lo < hi");

  std::string head = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<unsigned char> out(head.begin(), head.end());
  std::vector<unsigned char> px(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(hi > lo)) {
      px[i] = 128;
      continue;
    }
    const double t = std::clamp((v[i] - lo) / (hi - lo), 0.0, 1.0);
    px[i] = static_cast<unsigned char>(std::lround(255.0 * t));
  }
  if (options.mask_threshold > 0.0) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto mag = [&](std::size_t i) { return std::abs(mask_source.empty() ? image[i] : mask_source[i]); };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mag(a) < mag(b); });
    const auto k = static_cast<std::size_t>(std::floor(options.mask_threshold * static_cast<double>(n) + 1e-9));
    for (std::size_t j = 0; j < k; ++j) px[order[j]] = 0;
  }
  out.insert(out.end(), px.begin(), px.end());
  return out;
}

void cmd_render(const fs::path& array, const fs::path& out_image, const RenderOptions& options) {
  const auto data = read_array(array);
  const Shape& s = data.header.shape;
  if (s.size() < 2) throw DataError("render: '" + array.string() + "' has rank " + std::to_string(s.size()) + ", need >= 2");
  const std::size_t w = s.back(), h = s[s.size() - 2], n = w * h;
  const std::size_t slices = n ? data.size() / n : 0;
  if (options.slice >= slices)
    throw ConfigError("render: slice " + std::to_string(options.slice) + " out of range (" + std::to_string(slices) +
                      " slices)");
  RealVec img(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = options.slice * n + i;
    if (data.header.dtype == DType::Real64)
      img[i] = data.real[j];
    else
      img[i] = options.phase ? std::arg(data.cx[j]) : std::abs(data.cx[j]);
  }
  RealVec mask;
  if (!options.mask_path.empty()) {
    const auto md = read_array(options.mask_path);
    const RealVec mv = magnitudes(md);
    if (n == 0 || mv.size() % n != 0)
      throw ShapeError("render: mask source '" + options.mask_path.string() + "' does not match the image");
    const std::size_t mslices = mv.size() / n;
    if (options.slice < mslices) {
      mask.assign(mv.begin() + options.slice * n, mv.begin() + (options.slice + 1) * n);
    } else {
      mask.assign(n, 0.0);
      for (std::size_t k = 0; k < mslices; ++k)
        for (std::size_t i = 0; i < n; ++i) mask[i] += mv[k * n + i] * mv[k * n + i];
      for (double& v : mask) v = std::sqrt(v);
    }
  } else if (data.header.dtype == DType::Complex128 && options.phase) {
    mask.resize(n);
    for (std::size_t i = 0; i < n; ++i) mask[i] = std::abs(data.cx[options.slice * n + i]);
  }
  const auto bytes = render_gray(img, w, h, options, mask);
  const fs::path dir = out_image.parent_path();
  if (!dir.empty() && !fs::is_directory(dir)) throw DataError("render: directory '" + dir.string() + "' does not exist");
  std::ofstream out(out_image, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("render: cannot write '" + out_image.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::pair<double, double> cmd_gridsearch(const ExperimentConfig& config, const fs::path& data_dir, const fs::path& out,
                                         std::ostream* log) {
  config.validate();
  require_dir(out, "gridsearch");
  const Dataset data = load_dataset(data_dir);
  if (!data.truth_m) throw DataError("gridsearch: data directory has no truth_m to score against");
  const auto& g = config.gridsearch;

  std::set<std::pair<double, double>> seen;
  double best_score = -std::numeric_limits<double>::infinity();
  std::pair<double, double> best{g.lambda_m.front(), g.lambda_p.front()};
  auto evaluate = [&](const RealVec& lms, const RealVec& lps, json& entries) {
    for (double lm : lms)
      for (double lp : lps) {
        if (!seen.insert({lm, lp}).second) continue;
        ExperimentConfig c = config;
        c.regularization.magnitude.lambda = lm;
        c.regularization.phase.lambda = lp;
        if (c.regularization.magnitude.kind == RegKind::None && lm > 0) c.regularization.magnitude.kind = RegKind::L1Wavelet;
        if (c.regularization.phase.kind == RegKind::None && lp > 0) c.regularization.phase.kind = RegKind::L1Wavelet;
        if (g.outer_iters) c.solver.outer_iters = *g.outer_iters;
        c.solver.record_history = false;
        const auto r = run_reconstruction(c, data);
        double score = 0.0;
        for (const auto& pr : r.psnr) score += pr.second;
        score /= static_cast<double>(r.psnr.size());
        entries.push_back({{"lambda_m", lm}, {"lambda_p", lp}, {"score", number_or_null(score)}});
        note(log, "gridsearch: lambda_m " + std::to_string(lm) + " lambda_p " + std::to_string(lp) + " -> " +
                      std::to_string(score) + " dB");
        if (score > best_score) {
          best_score = score;
          best = {lm, lp};
        }
      }
  };
  auto refine = [&](double center) {
    if (center <= 0.0 || g.refine_points == 1) return RealVec{center};
    RealVec v;
    const double lo = std::log(center / g.refine_factor), hi = std::log(center * g.refine_factor);
    for (int k = 0; k < g.refine_points; ++k) v.push_back(std::exp(lo + (hi - lo) * k / (g.refine_points - 1)));
    return v;
  };

  json stage1 = json::array(), stage2 = json::array();
  evaluate(g.lambda_m, g.lambda_p, stage1);
  const auto coarse = best;
  evaluate(refine(coarse.first), refine(coarse.second), stage2);

  json report;
  report["stage1"] = stage1;
  report["stage2"] = stage2;
  report["best"] = {{"lambda_m", best.first}, {"lambda_p", best.second}, {"score", number_or_null(best_score)}};
  write_text(out / "gridsearch.json", report.dump(2) + "\n");
  return best;
}

}  // namespace phasecycle
