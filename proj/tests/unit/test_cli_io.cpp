#include <catch2/catch.hpp>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "phasecycle/array_io.hpp"
#include "phasecycle/commands.hpp"

using namespace phasecycle;
using namespace testutil;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("phasecycle_unit_" + name);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path sub(const std::string& name) const {
    fs::create_directories(path / name);
    return path / name;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

json small_config() {
  return json::parse(R"({
    "seed": 5,
    "model": {"kind": "partial_fourier", "coils": 2, "sampling": {"accel": 1, "partial_fourier": 1}},
    "phantom": {"kind": "pf-brain-like", "shape": [32, 32], "phase_range": 1.0},
    "noise": {"sigma": 0},
    "regularization": {"wavelet": "db4", "levels": 2,
                       "magnitude": {"kind": "none", "lambda": 0}, "phase": {"kind": "none", "lambda": 0}},
    "solver": {"outer_iters": 20, "inner_iters": 2, "wrap_count": 1}
  })");
}

json wrapped_config() {
  json j = small_config();
  j["model"]["sampling"] = {{"accel", 2}, {"calib", 8}, {"partial_fourier", 0.625}};
  j["phantom"]["phase_range"] = 3 * kPi;
  j["regularization"]["magnitude"] = {{"kind", "l1_wavelet"}, {"lambda", 1e-3}};
  j["regularization"]["phase"] = {{"kind", "l1_wavelet"}, {"lambda", 5e-3}};
  j["solver"]["outer_iters"] = 15;
  return j;
}

ExperimentConfig cfg(const json& j) { return parse_config(j.dump()); }

std::vector<fs::path> payloads(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".raw") out.push_back(e.path().filename());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("config: defaults, seeds and canonical dump", "[cli_io]") {
  const auto c = cfg(small_config());
  CHECK(c.model.kind == ModelKind::PartialFourier);
  CHECK(c.phantom.shape == Shape{32, 32});
  CHECK(c.phantom_seed() == 5);
  CHECK(c.coil_seed() == 6);
  CHECK(c.sampling_seed() == 7);
  CHECK(c.noise_seed() == 8);
  CHECK(c.solver_seed() == 9);
  CHECK_FALSE(c.fold_negative);

  const auto again = parse_config(dump_config(c));
  CHECK(dump_config(again) == dump_config(c));
  CHECK(again.solver_seed() == 9);

  const auto wf = parse_config(R"({"model": {"kind": "waterfat"}, "phantom": {"kind": "waterfat-2compartment"}})");
  REQUIRE(wf.model.waterfat.echo_times_s.size() == 3);
  CHECK(wf.model.waterfat.echo_times_s[0] == Approx(2.184e-3));
  CHECK(wf.model.waterfat.echo_times_s[2] == Approx(3.772e-3));
}

TEST_CASE("config: unknown keys and bad types are rejected by name", "[cli_io]") {
  auto expect = [](json j, const std::string& needle) {
    try {
      parse_config(j.dump());
      FAIL("accepted " << j.dump());
    } catch (const ConfigError& e) {
      INFO(e.what());
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  json j = small_config();
  j["model"]["foo"] = 1;
  expect(j, "model.foo");
  j = small_config();
  j["bogus"] = true;
  expect(j, "bogus");
  j = small_config();
  j["solver"]["outer_iters"] = "ten";
  expect(j, "solver.outer_iters");
  j = small_config();
  j["solver"]["outer_iters"] = 2.5;
  expect(j, "solver.outer_iters");
  j = small_config();
  j["noise"]["sigma"] = -1;
  expect(j, "noise.sigma");
  j = small_config();
  j["regularization"]["phase"]["kind"] = "tv";
  expect(j, "tv");
  j = small_config();
  j["regularization"]["phase"]["kind"] = "divfree";
  expect(j, "divfree");
  j = small_config();
  j["phantom"]["kind"] = "flow-tube";
  expect(j, "phantom");
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("array files round-trip at the byte level", "[cli_io]") {
  TempDir tmp("array");
  std::mt19937_64 rng(1);
  const RealVec r = random_real(60, rng);
  const CxVec z = random_cx(60, rng);
  write_array(tmp.path / "r", r, {3, 4, 5}, {"a", "b", "c"});
  write_array(tmp.path / "z", z, {6, 10});

  const auto rd = read_real_array(tmp.path / "r.json");
  CHECK(rd.real == r);
  CHECK(rd.header.shape == Shape{3, 4, 5});
  CHECK(rd.header.axes == std::vector<std::string>{"a", "b", "c"});
  CHECK(rd.header.payload_bytes == 480);
  CHECK(fs::file_size(tmp.path / "r.raw") == 480);
  const auto zd = read_complex_array(tmp.path / "z.raw");
  CHECK(zd.cx == z);
  CHECK(fs::file_size(tmp.path / "z.raw") == 960);

  write_array(tmp.path / "r2", rd.real, rd.header.shape, rd.header.axes);
  CHECK(slurp(tmp.path / "r2.raw") == slurp(tmp.path / "r.raw"));
  CHECK(payload_hash(tmp.path / "r2") == payload_hash(tmp.path / "r"));

  const auto h = json::parse(slurp(tmp.path / "r.json"));
  CHECK(h["endianness"] == "little");
  CHECK(h["dtype"] == "real64");

  CHECK_THROWS_AS(read_complex_array(tmp.path / "r"), DataError);
  CHECK_THROWS_AS(read_real_array(tmp.path / "z"), DataError);
  CHECK_THROWS_AS(read_array(tmp.path / "missing"), DataError);
  CHECK_THROWS_AS(write_array(tmp.path / "bad", r, {7, 7}), ShapeError);
  CHECK_THROWS_AS(write_array(tmp.path / "nodir" / "x", r, {60}), DataError);

  SECTION("corrupted headers and payloads") {
    json bad = h;
    bad["dtype"] = "int16";
    spit(tmp.path / "r.json", bad.dump());
    CHECK_THROWS_AS(read_array(tmp.path / "r"), DataError);
    bad = h;
    bad["endianness"] = "big";
    spit(tmp.path / "r.json", bad.dump());
    CHECK_THROWS_AS(read_array(tmp.path / "r"), DataError);
    bad = h;
    bad["shape"] = {3, 4, 6};
    spit(tmp.path / "r.json", bad.dump());
    CHECK_THROWS_AS(read_array(tmp.path / "r"), DataError);
    spit(tmp.path / "r.json", h.dump());
    spit(tmp.path / "r.raw", "short");
    CHECK_THROWS_AS(read_array(tmp.path / "r"), DataError);
    spit(tmp.path / "r.json", "{");
    CHECK_THROWS_AS(read_array(tmp.path / "r"), DataError);
  }
}

TEST_CASE("fnv1a matches published vectors", "[cli_io]") {
  CHECK(fnv1a(std::string()) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a(std::string("a")) == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a(std::string("foobar")) == 0x85944171f73967e8ULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("simulate: manifest is byte-identical across runs", "[cli_io]") {
  TempDir tmp("simulate");
  const auto c = cfg(wrapped_config());
  const auto a = tmp.sub("a"), b = tmp.sub("b");
  cmd_simulate(c, a);
  cmd_simulate(c, b);
  CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
  for (const auto& f : payloads(a)) CHECK(slurp(a / f) == slurp(b / f));

  const auto m = json::parse(slurp(a / "manifest.json"));
  CHECK(m["config_hash"] == hex64(fnv1a(dump_config(c))));
  CHECK(m["seeds"]["phantom"] == 5);
  CHECK(m["files"]["kspace"]["fnv1a"] == payload_hash(a / "kspace"));

  json other = wrapped_config();
  other["seed"] = 6;
  const auto d = tmp.sub("d");
  cmd_simulate(cfg(other), d);
  CHECK(slurp(a / "manifest.json") != slurp(d / "manifest.json"));

  CHECK_THROWS_AS(cmd_simulate(c, tmp.path / "missing"), DataError);
}

TEST_CASE("simulate then reconstruct: noiseless full sampling", "[cli_io]") {
  TempDir tmp("fullsample");
  const auto c = cfg(small_config());
  const auto data = tmp.sub("data"), out = tmp.sub("out");
  cmd_simulate(c, data);
  const auto r = cmd_reconstruct(c, data, out);
  REQUIRE(r.psnr.size() == 1);
  CHECK(r.psnr[0].second > 60.0);

  const auto report = json::parse(slurp(out / "report.json"));
  CHECK(report["iterations"] == 20);
  CHECK(report["wrap_count"] == 1);
  CHECK(report.contains("final_objective"));
  CHECK(report.contains("wall_time_s"));
  CHECK(read_real_array(out / "m").header.shape == Shape{1, 32, 32});
  CHECK(read_real_array(out / "robust_objective_outer").size() == 21);

  json bad = small_config();
  bad["phantom"]["shape"] = {16, 16};
  CHECK_THROWS_AS(cmd_reconstruct(cfg(bad), data, tmp.sub("bad")), ShapeError);
  CHECK_THROWS_AS(cmd_reconstruct(c, tmp.path / "nodata", out), DataError);
}

TEST_CASE("reconstruct: wrap count is one config key, outputs are deterministic", "[cli_io]") {
  TempDir tmp("wraps");
  json j1 = wrapped_config();
  j1["solver"]["record_history"] = true;
  json j8 = j1;
  j8["solver"]["wrap_count"] = 8;
  const auto data = tmp.sub("data");
  cmd_simulate(cfg(j1), data);
  const auto o1 = tmp.sub("w1"), o1b = tmp.sub("w1b"), o8 = tmp.sub("w8");
  cmd_reconstruct(cfg(j1), data, o1);
  cmd_reconstruct(cfg(j1), data, o1b);
  cmd_reconstruct(cfg(j8), data, o8);

  CHECK(json::parse(slurp(o1 / "report.json"))["wrap_count"] == 1);
  CHECK(json::parse(slurp(o8 / "report.json"))["wrap_count"] == 8);
  CHECK(slurp(o1 / "m.raw") != slurp(o8 / "m.raw"));

  const auto files = payloads(o1);
  CHECK(files.size() >= 4);
  for (const auto& f : files) {
    INFO(f);
    CHECK(slurp(o1 / f) == slurp(o1b / f));
  }
}

TEST_CASE("report psnr matches the metrics subcommand", "[cli_io]") {
  TempDir tmp("metrics");
  json jw = wrapped_config();
  const auto data = tmp.sub("data"), out = tmp.sub("out");
  cmd_simulate(cfg(jw), data);
  cmd_reconstruct(cfg(jw), data, out);
  const double reported = json::parse(slurp(out / "report.json"))["psnr"]["m"];
  const auto metrics = json::parse(cmd_metrics(data / "truth_m", out / "m", true));
  CHECK(std::abs(metrics["psnr"].get<double>() - reported) <= 1e-10);
  CHECK(std::abs(metrics["psnr_components"][0].get<double>() - reported) <= 1e-10);
  CHECK(metrics["count"] == 1024);

  // three-component oracle on handwritten arrays
  const RealVec ref{1, 2, 3, 4, 0, 0, 2, 2, 1, 1, 1, 1};
  const RealVec rec{1, 2, 3, 3.5, 0, 0.5, 2, 2, 1, -1, 1, 1};
  write_array(tmp.path / "ref", ref, {3, 2, 2}, {"component", "x", "y"});
  write_array(tmp.path / "rec", rec, {3, 2, 2}, {"component", "x", "y"});
  const auto signed_m = json::parse(cmd_metrics(tmp.path / "ref", tmp.path / "rec"));
  CHECK(std::abs(signed_m["psnr"].get<double>() - 20.0 * std::log10(4.0 / std::sqrt(0.25 + 0.25 + 4.0))) <= 1e-10);
  CHECK(std::abs(signed_m["psnr_components"][0].get<double>() - 20.0 * std::log10(4.0 / 0.5)) <= 1e-10);
  CHECK(std::abs(signed_m["psnr_components"][2].get<double>() - 20.0 * std::log10(1.0 / 2.0)) <= 1e-10);
  const auto mod = json::parse(cmd_metrics(tmp.path / "ref", tmp.path / "rec", true));
  CHECK(mod["psnr_components"][2].is_null());

  CHECK_THROWS_AS(cmd_metrics(tmp.path / "ref", tmp.path / "nope"), DataError);
  write_array(tmp.path / "short", RealVec(5, 1.0), {5});
  CHECK_THROWS_AS(cmd_metrics(tmp.path / "ref", tmp.path / "short"), ShapeError);
}

TEST_CASE("render: pgm output, windows and masks", "[cli_io]") {
  const std::string head4 = "P5\n4 4\n255\n";
  const std::string head = "P5\n10 10\n255\n";
  RenderOptions opt;

  SECTION("constant image is uniform gray") {
    const auto px = render_gray(RealVec(16, 3.7), 4, 4, opt);
    REQUIRE(px.size() == head4.size() + 16);
    CHECK(std::string(px.begin(), px.begin() + head4.size()) == head4);
    for (std::size_t i = head4.size(); i < px.size(); ++i) CHECK(px[i] == 128);
  }

  SECTION("phase of a linear ramp is a sawtooth") {
    const std::size_t w = 64;
    RealVec ramp(w);
    for (std::size_t i = 0; i < w; ++i) ramp[i] = 0.5 * static_cast<double>(i);
    opt.window = RenderWindow::Phase;
    const auto px = render_gray(ramp, w, 1, opt);
    const std::size_t off = px.size() - w;
    std::size_t drops = 0;
    for (std::size_t i = 1; i < w; ++i) {
      const int d = int(px[off + i]) - int(px[off + i - 1]);
      if (d < 0) {
        ++drops;
        CHECK(d < -150);
      } else {
        CHECK(std::abs(d - 20) <= 1);
      }
    }
    // 0.5 * 63 / (2 pi) crosses pi five times
    CHECK(drops == 5);
  }

  SECTION("threshold 0.1 blanks exactly the bottom decile") {
    std::mt19937_64 rng(3);
    RealVec img = random_real(100, rng, 1.0, 2.0);
    opt.mask_threshold = 0.1;
    const auto px = render_gray(img, 10, 10, opt);
    std::vector<std::size_t> order(100);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return img[a] < img[b]; });
    for (std::size_t k = 0; k < 100; ++k) {
      const unsigned char v = px[head.size() + order[k]];
      if (k < 10)
        CHECK(v == 0);
      else
        CHECK(v > 0);
    }
    opt.mask_threshold = 0.2;
    const auto px2 = render_gray(img, 10, 10, opt);
    CHECK(std::count(px2.begin() + head.size(), px2.end(), 0) == 20);
  }

  SECTION("fixed window clamps") {
    opt.window = RenderWindow::Fixed;
    opt.lo = 0.0;
    opt.hi = 1.0;
    const auto px = render_gray(RealVec{-1.0, 0.0, 0.5, 2.0}, 2, 2, opt);
    const std::size_t off = px.size() - 4;
    CHECK(px[off] == 0);
    CHECK(px[off + 1] == 0);
    CHECK(px[off + 2] == 128);
    CHECK(px[off + 3] == 255);
    opt.hi = 0.0;
    CHECK_THROWS_AS(render_gray(RealVec(4, 0.0), 2, 2, opt), ConfigError);
  }

  SECTION("cmd_render writes files from arrays and slices") {
    TempDir tmp("render");
    RealVec stack(2 * 16);
    for (std::size_t i = 0; i < 16; ++i) stack[16 + i] = static_cast<double>(i);
    write_array(tmp.path / "s", stack, {2, 4, 4});
    opt.slice = 1;
    cmd_render(tmp.path / "s", tmp.path / "s.pgm", opt);
    const std::string file = slurp(tmp.path / "s.pgm");
    REQUIRE(file.size() == head4.size() + 16);
    CHECK(static_cast<unsigned char>(file[head4.size()]) == 0);
    CHECK(static_cast<unsigned char>(file.back()) == 255);
    opt.slice = 2;
    CHECK_THROWS_AS(cmd_render(tmp.path / "s", tmp.path / "x.pgm", opt), ConfigError);
    // mask source without slice 2: root-sum-of-squares over its slices
    RealVec mag(2 * 16, 1.0);
    mag[5] = 0.0;
    mag[16 + 5] = 0.0;
    mag[16 + 6] = 0.0;
    write_array(tmp.path / "mag", mag, {2, 4, 4});
    RealVec three(3 * 16, 0.5);
    write_array(tmp.path / "three", three, {3, 4, 4});
    RenderOptions mo;
    mo.window = RenderWindow::Fixed;
    mo.mask_path = tmp.path / "mag";
    mo.mask_threshold = 2.0 / 16.0;
    mo.slice = 2;
    cmd_render(tmp.path / "three", tmp.path / "t.pgm", mo);
    const std::string t = slurp(tmp.path / "t.pgm");
    CHECK(t[head4.size() + 5] == 0);
    CHECK(static_cast<unsigned char>(t[head4.size() + 7]) == 128);
    CHECK(std::count(t.begin() + head4.size(), t.end(), 0) == 2);
    mo.slice = 1;
    cmd_render(tmp.path / "three", tmp.path / "t1.pgm", mo);
    const std::string t1 = slurp(tmp.path / "t1.pgm");
    CHECK(t1[head4.size() + 5] == 0);
    CHECK(t1[head4.size() + 6] == 0);
    write_array(tmp.path / "odd", RealVec(5, 1.0), {5});
    mo.mask_path = tmp.path / "odd";
    CHECK_THROWS_AS(cmd_render(tmp.path / "three", tmp.path / "t2.pgm", mo), ShapeError);

    opt.slice = 0;
    CHECK_THROWS_AS(cmd_render(tmp.path / "missing", tmp.path / "x.pgm", opt), DataError);
    CHECK_THROWS_AS(cmd_render(tmp.path / "s", tmp.path / "no" / "x.pgm", opt), DataError);

    CxVec z(16);
    for (std::size_t i = 0; i < 16; ++i) z[i] = std::polar(2.0, 0.3 * static_cast<double>(i) - 2.0);
    write_array(tmp.path / "z", z, {4, 4});
    cmd_render(tmp.path / "z", tmp.path / "zm.pgm", opt);
    const std::string zm = slurp(tmp.path / "zm.pgm");
    for (std::size_t i = head4.size(); i < zm.size(); ++i) CHECK(static_cast<unsigned char>(zm[i]) == 128);
    opt.phase = true;
    opt.window = RenderWindow::Phase;
    cmd_render(tmp.path / "z", tmp.path / "zp.pgm", opt);
    const std::string zp = slurp(tmp.path / "zp.pgm");
    CHECK(static_cast<unsigned char>(zp[head4.size()]) < static_cast<unsigned char>(zp.back()));
  }
}

TEST_CASE("gridsearch picks the best mean psnr over both stages", "[cli_io]") {
  TempDir tmp("grid");
  json j = wrapped_config();
  j["gridsearch"] = {{"lambda_m", {1e-4, 1e-2}}, {"lambda_p", {1e-3}}, {"refine_points", 2},
                     {"refine_factor", 2.0}, {"outer_iters", 3}};
  const auto data = tmp.sub("data"), out = tmp.sub("out");
  cmd_simulate(cfg(j), data);
  const auto best = cmd_gridsearch(cfg(j), data, out);
  const auto g = json::parse(slurp(out / "gridsearch.json"));
  CHECK(g["stage1"].size() == 2);
  CHECK(g["stage2"].size() == 4);
  double top = -1e300;
  for (const auto& stage : {g["stage1"], g["stage2"]})
    for (const auto& e : stage) top = std::max(top, e["score"].get<double>());
  CHECK(g["best"]["score"].get<double>() == top);
  CHECK(g["best"]["lambda_m"].get<double>() == best.first);
  CHECK(g["best"]["lambda_p"].get<double>() == best.second);
}
