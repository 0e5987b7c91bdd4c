#include "phasecycle/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace phasecycle {

using nlohmann::json;
namespace fs = std::filesystem;

std::string reg_kind_name(RegKind kind) {
  switch (kind) {
    case RegKind::None: return "none";
    case RegKind::L2: return "l2";
    case RegKind::L1Wavelet: return "l1_wavelet";
    case RegKind::DivFree: return "divfree";
  }
  return "none";
}

RegKind parse_reg_kind(const std::string& name) {
  if (name == "none") return RegKind::None;
  if (name == "l2") return RegKind::L2;
  if (name == "l1_wavelet") return RegKind::L1Wavelet;
  if (name == "divfree") return RegKind::DivFree;
  throw ConfigError("unknown regularizer '" + name + "' (expected none, l2, l1_wavelet or divfree)");
}

namespace {

std::string join(const std::string& where, const std::string& key) { return where.empty() ? key : where + "." + key; }

void check_object(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError("config: '" + (where.empty() ? "<root>" : where) + "' must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ConfigError("config: unknown key '" + join(where, k) + "' (allowed: " + list + ")");
    }
}

template <class T>
T as(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("");
      if constexpr (std::is_unsigned_v<T>)
        if (v.get<long long>() < 0) throw ConfigError("");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    const char* want = std::is_same_v<T, bool>             ? "a boolean"
                       : std::is_unsigned_v<T>             ? "a non-negative integer"
                       : std::is_integral_v<T>             ? "an integer"
                       : std::is_floating_point_v<T>       ? "a number"
                       : std::is_same_v<T, std::string>    ? "a string"
                                                           : "a list";
    throw ConfigError("config: '" + key + "' must be " + want);
  }
}

template <class T>
void read(const json& j, const std::string& where, const char* key, T& out) {
  if (j.contains(key)) out = as<T>(j.at(key), join(where, key));
}

template <class T>
void read_opt(const json& j, const std::string& where, const char* key, std::optional<T>& out) {
  if (j.contains(key)) out = as<T>(j.at(key), join(where, key));
}

RealVec read_numbers(const json& v, const std::string& key) {
  if (!v.is_array()) throw ConfigError("config: '" + key + "' must be a list of numbers");
  RealVec out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as<double>(v[i], key + "[" + std::to_string(i) + "]"));
  return out;
}

void parse_model(const json& j, ModelConfig& m) {
  const std::string w = "model";
  check_object(j, w,
               {"kind", "coils", "coil_seed", "echo_times_ms", "fat_peaks", "field_unit_ms", "encoding", "venc_scale",
                "sampling"});
  if (j.contains("kind")) m.kind = parse_model_kind(as<std::string>(j["kind"], "model.kind"));
  read(j, w, "coils", m.coils);
  read_opt(j, w, "coil_seed", m.coil_seed);
  if (j.contains("echo_times_ms")) {
    m.waterfat.echo_times_s.clear();
    for (double t : read_numbers(j["echo_times_ms"], "model.echo_times_ms")) m.waterfat.echo_times_s.push_back(t * 1e-3);
  }
  if (j.contains("fat_peaks")) {
    const auto& peaks = j["fat_peaks"];
    if (!peaks.is_array()) throw ConfigError("config: 'model.fat_peaks' must be a list");
    m.waterfat.peaks.clear();
    for (std::size_t i = 0; i < peaks.size(); ++i) {
      const std::string pw = "model.fat_peaks[" + std::to_string(i) + "]";
      check_object(peaks[i], pw, {"amplitude", "shift_hz"});
      FatPeak pk;
      read(peaks[i], pw, "amplitude", pk.amplitude);
      read(peaks[i], pw, "shift_hz", pk.shift_hz);
      m.waterfat.peaks.push_back(pk);
    }
  }
  if (j.contains("field_unit_ms")) m.waterfat.field_unit_s = as<double>(j["field_unit_ms"], "model.field_unit_ms") * 1e-3;
  if (j.contains("encoding")) {
    const auto& rows = j["encoding"];
    if (!rows.is_array()) throw ConfigError("config: 'model.encoding' must be a list of 4-element rows");
    m.flow.rows.clear();
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto vals = read_numbers(rows[r], "model.encoding[" + std::to_string(r) + "]");
      if (vals.size() != 4) throw ConfigError("config: 'model.encoding' rows must have 4 entries");
      m.flow.rows.push_back({vals[0], vals[1], vals[2], vals[3]});
    }
  }
  read(j, w, "venc_scale", m.flow.venc_scale);
  if (j.contains("sampling")) {
    const auto& s = j["sampling"];
    const std::string sw = "model.sampling";
    check_object(s, sw, {"accel", "calib", "partial_fourier", "pf_axis", "seed"});
    read(s, sw, "accel", m.sampling.accel);
    read(s, sw, "calib", m.sampling.calib);
    read(s, sw, "partial_fourier", m.sampling.partial_fourier);
    read(s, sw, "pf_axis", m.sampling.pf_axis);
    read_opt(s, sw, "seed", m.sampling.seed);
  }
}

void parse_phantom(const json& j, PhantomConfig& p) {
  const std::string w = "phantom";
  check_object(j, w, {"kind", "shape", "phase_range", "seed", "field_peak_hz", "velocity_peak"});
  if (j.contains("kind")) p.kind = parse_phantom_kind(as<std::string>(j["kind"], "phantom.kind"));
  if (j.contains("shape")) {
    const auto& s = j["shape"];
    if (!s.is_array() || s.empty()) throw ConfigError("config: 'phantom.shape' must be a non-empty list");
    p.shape.clear();
    for (std::size_t i = 0; i < s.size(); ++i)
      p.shape.push_back(as<std::size_t>(s[i], "phantom.shape[" + std::to_string(i) + "]"));
  }
  read(j, w, "phase_range", p.phase_range);
  read_opt(j, w, "seed", p.seed);
  read(j, w, "field_peak_hz", p.options.field_peak_hz);
  read(j, w, "velocity_peak", p.options.velocity_peak);
}

RegTerm parse_term(const json& j, const std::string& w) {
  check_object(j, w, {"kind", "lambda"});
  RegTerm t;
  if (j.contains("kind")) t.kind = parse_reg_kind(as<std::string>(j["kind"], w + ".kind"));
  read(j, w, "lambda", t.lambda);
  return t;
}

void parse_regularization(const json& j, RegularizationConfig& r) {
  const std::string w = "regularization";
  check_object(j, w, {"wavelet", "levels", "magnitude", "phase", "field_lambda"});
  if (j.contains("wavelet")) r.wavelet.family = parse_wavelet_family(as<std::string>(j["wavelet"], "regularization.wavelet"));
  read(j, w, "levels", r.wavelet.levels);
  if (j.contains("magnitude")) r.magnitude = parse_term(j["magnitude"], "regularization.magnitude");
  if (j.contains("phase")) r.phase = parse_term(j["phase"], "regularization.phase");
  read_opt(j, w, "field_lambda", r.field_lambda);
}

void parse_solver(const json& j, SolverConfig& s, bool& seed_set) {
  const std::string w = "solver";
  check_object(j, w,
               {"outer_iters", "inner_iters", "seed", "wrap_count", "wrap_mode", "step_safety", "record_history",
                "power_iters", "power_tol", "divergence_factor"});
  read(j, w, "outer_iters", s.outer_iters);
  read(j, w, "inner_iters", s.inner_iters);
  if (j.contains("seed")) {
    s.seed = as<std::uint64_t>(j["seed"], "solver.seed");
    seed_set = true;
  }
  read(j, w, "wrap_count", s.wrap_count);
  if (j.contains("wrap_mode")) {
    const auto mode = as<std::string>(j["wrap_mode"], "solver.wrap_mode");
    if (mode == "initial_relative")
      s.wrap_mode = WrapMode::InitialRelative;
    else if (mode == "constant")
      s.wrap_mode = WrapMode::Constant;
    else
      throw ConfigError("config: 'solver.wrap_mode' must be initial_relative or constant");
  }
  read(j, w, "step_safety", s.step_safety);
  read(j, w, "record_history", s.record_history);
  read(j, w, "power_iters", s.power_iters);
  read(j, w, "power_tol", s.power_tol);
  read(j, w, "divergence_factor", s.divergence_factor);
}

void parse_gridsearch(const json& j, GridSearchConfig& g) {
  const std::string w = "gridsearch";
  check_object(j, w, {"lambda_m", "lambda_p", "refine_points", "refine_factor", "outer_iters"});
  if (j.contains("lambda_m")) g.lambda_m = read_numbers(j["lambda_m"], "gridsearch.lambda_m");
  if (j.contains("lambda_p")) g.lambda_p = read_numbers(j["lambda_p"], "gridsearch.lambda_p");
  read(j, w, "refine_points", g.refine_points);
  read(j, w, "refine_factor", g.refine_factor);
  read_opt(j, w, "outer_iters", g.outer_iters);
}

void parse_paths(const json& j, PathsConfig& p, const fs::path& base) {
  const std::string w = "paths";
  check_object(j, w, {"data", "out"});
  auto resolve = [&](const char* key, fs::path& out) {
    if (!j.contains(key)) return;
    fs::path v = as<std::string>(j[key], join(w, key));
    out = v.is_relative() && !base.empty() ? base / v : v;
  };
  resolve("data", p.data);
  resolve("out", p.out);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (model.coils < 1) throw ConfigError("config: 'model.coils' must be >= 1");
  if (!(model.sampling.accel >= 1.0)) throw ConfigError("config: 'model.sampling.accel' must be >= 1");
  if (!(model.sampling.partial_fourier > 0.0 && model.sampling.partial_fourier <= 1.0))
    throw ConfigError("config: 'model.sampling.partial_fourier' must be in (0, 1]");
  if (model.sampling.pf_axis >= phantom.shape.size())
    throw ConfigError("config: 'model.sampling.pf_axis' exceeds the phantom rank");
  if (!(noise.sigma >= 0.0)) throw ConfigError("config: 'noise.sigma' must be >= 0");
  if (!(phantom.phase_range >= 0.0)) throw ConfigError("config: 'phantom.phase_range' must be >= 0");
  if (regularization.magnitude.lambda < 0.0 || regularization.phase.lambda < 0.0 ||
      regularization.field_lambda.value_or(0.0) < 0.0)
    throw ConfigError("config: regularization weights must be >= 0");
  if (regularization.magnitude.kind == RegKind::DivFree)
    throw ConfigError("config: 'regularization.magnitude.kind' cannot be divfree");
  if (regularization.phase.kind == RegKind::DivFree && model.kind != ModelKind::Flow)
    throw ConfigError("config: divfree phase regularization needs the flow model");
  if (regularization.wavelet.levels < 1) throw ConfigError("config: 'regularization.levels' must be >= 1");
  const bool wavelet_used = regularization.magnitude.kind == RegKind::L1Wavelet ||
                            regularization.phase.kind == RegKind::L1Wavelet ||
                            regularization.phase.kind == RegKind::DivFree ||
                            (model.kind == ModelKind::Flow && regularization.phase.kind == RegKind::None);
  if (wavelet_used) try {
      check_wavelet_shape(phantom.shape, regularization.wavelet);
    } catch (const ShapeError& e) {
      throw ConfigError(std::string("config: 'regularization.levels': ") + e.what());
    }
  if (model.kind == ModelKind::WaterFat) model.waterfat.validate();
  if (model.kind == ModelKind::Flow) model.flow.validate();
  const bool phantom_matches = (model.kind == ModelKind::PartialFourier && phantom.kind == PhantomKind::PfBrainLike) ||
                               (model.kind == ModelKind::WaterFat && phantom.kind == PhantomKind::WaterFat2Compartment) ||
                               (model.kind == ModelKind::Flow && phantom.kind == PhantomKind::FlowTube);
  if (!phantom_matches)
    throw ConfigError("config: phantom '" + phantom_kind_name(phantom.kind) + "' does not fit model '" +
                      model_kind_name(model.kind) + "'");
  if (gridsearch.lambda_m.empty() || gridsearch.lambda_p.empty())
    throw ConfigError("config: gridsearch lambda lists must not be empty");
  for (double v : gridsearch.lambda_m)
    if (!(v >= 0.0)) throw ConfigError("config: 'gridsearch.lambda_m' entries must be >= 0");
  for (double v : gridsearch.lambda_p)
    if (!(v >= 0.0)) throw ConfigError("config: 'gridsearch.lambda_p' entries must be >= 0");
  if (gridsearch.refine_points < 1) throw ConfigError("config: 'gridsearch.refine_points' must be >= 1");
  if (!(gridsearch.refine_factor >= 1.0)) throw ConfigError("config: 'gridsearch.refine_factor' must be >= 1");
  solver.validate();
}

ExperimentConfig parse_config(const std::string& json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  check_object(j, "",
               {"seed", "model", "phantom", "noise", "regularization", "solver", "gridsearch", "paths", "postprocess"});
  ExperimentConfig c;
  // water-fat defaults follow the three-echo protocol
  c.model.waterfat.echo_times_s = {2.184e-3, 2.978e-3, 3.772e-3};
  c.model.waterfat.peaks = {FatPeak{1.0, -428.0}};
  read(j, "", "seed", c.seed);
  if (j.contains("model")) parse_model(j["model"], c.model);
  if (j.contains("phantom")) parse_phantom(j["phantom"], c.phantom);
  if (j.contains("noise")) {
    check_object(j["noise"], "noise", {"sigma", "seed"});
    read(j["noise"], "noise", "sigma", c.noise.sigma);
    read_opt(j["noise"], "noise", "seed", c.noise.seed);
  }
  if (j.contains("regularization")) parse_regularization(j["regularization"], c.regularization);
  if (j.contains("solver")) parse_solver(j["solver"], c.solver, c.solver_seed_set);
  if (j.contains("gridsearch")) parse_gridsearch(j["gridsearch"], c.gridsearch);
  if (j.contains("postprocess")) {
    check_object(j["postprocess"], "postprocess", {"fold_negative"});
    read(j["postprocess"], "postprocess", "fold_negative", c.fold_negative);
  }
  if (j.contains("paths")) parse_paths(j["paths"], c.paths, base_dir);
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string dump_config(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  json model;
  model["kind"] = model_kind_name(c.model.kind);
  model["coils"] = c.model.coils;
  model["coil_seed"] = c.coil_seed();
  RealVec te_ms;
  for (double t : c.model.waterfat.echo_times_s) te_ms.push_back(t * 1e3);
  model["echo_times_ms"] = te_ms;
  json peaks = json::array();
  for (const auto& p : c.model.waterfat.peaks) peaks.push_back({{"amplitude", p.amplitude}, {"shift_hz", p.shift_hz}});
  model["fat_peaks"] = peaks;
  model["field_unit_ms"] = c.model.waterfat.field_unit_s * 1e3;
  json rows = json::array();
  for (const auto& r : c.model.flow.rows) rows.push_back({r[0], r[1], r[2], r[3]});
  model["encoding"] = rows;
  model["venc_scale"] = c.model.flow.venc_scale;
  model["sampling"] = {{"accel", c.model.sampling.accel},
                       {"calib", c.model.sampling.calib},
                       {"partial_fourier", c.model.sampling.partial_fourier},
                       {"pf_axis", c.model.sampling.pf_axis},
                       {"seed", c.sampling_seed()}};
  j["model"] = model;
  j["phantom"] = {{"kind", phantom_kind_name(c.phantom.kind)},
                  {"shape", c.phantom.shape},
                  {"phase_range", c.phantom.phase_range},
                  {"seed", c.phantom_seed()},
                  {"field_peak_hz", c.phantom.options.field_peak_hz},
                  {"velocity_peak", c.phantom.options.velocity_peak}};
  j["noise"] = {{"sigma", c.noise.sigma}, {"seed", c.noise_seed()}};
  json reg;
  reg["wavelet"] = wavelet_family_name(c.regularization.wavelet.family);
  reg["levels"] = c.regularization.wavelet.levels;
  reg["magnitude"] = {{"kind", reg_kind_name(c.regularization.magnitude.kind)},
                      {"lambda", c.regularization.magnitude.lambda}};
  reg["phase"] = {{"kind", reg_kind_name(c.regularization.phase.kind)}, {"lambda", c.regularization.phase.lambda}};
  if (c.regularization.field_lambda) reg["field_lambda"] = *c.regularization.field_lambda;
  j["regularization"] = reg;
  j["solver"] = {{"outer_iters", c.solver.outer_iters},
                 {"inner_iters", c.solver.inner_iters},
                 {"seed", c.solver_seed()},
                 {"wrap_count", c.solver.wrap_count},
                 {"wrap_mode", c.solver.wrap_mode == WrapMode::Constant ? "constant" : "initial_relative"},
                 {"step_safety", c.solver.step_safety},
                 {"record_history", c.solver.record_history},
                 {"power_iters", c.solver.power_iters},
                 {"power_tol", c.solver.power_tol},
                 {"divergence_factor", c.solver.divergence_factor}};
  json grid = {{"lambda_m", c.gridsearch.lambda_m},
               {"lambda_p", c.gridsearch.lambda_p},
               {"refine_points", c.gridsearch.refine_points},
               {"refine_factor", c.gridsearch.refine_factor}};
  if (c.gridsearch.outer_iters) grid["outer_iters"] = *c.gridsearch.outer_iters;
  j["gridsearch"] = grid;
  j["postprocess"] = {{"fold_negative", c.fold_negative}};
  return j.dump(2);
}

}  // namespace phasecycle
