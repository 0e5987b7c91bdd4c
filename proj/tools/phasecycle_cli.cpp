#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "phasecycle/commands.hpp"

using namespace phasecycle;
namespace fs = std::filesystem;

namespace {

ExperimentConfig load(const std::string& path, std::optional<std::uint64_t> seed) {
  if (path.empty()) throw ConfigError("--config is required");
  ExperimentConfig c = load_config(path);
  if (seed) c.seed = *seed;
  return c;
}

fs::path pick(const std::string& flag, const fs::path& from_config) { return flag.empty() ? from_config : fs::path(flag); }

RenderOptions parse_window(const std::string& text, RenderOptions opts) {
  if (text == "auto") {
    opts.window = RenderWindow::Auto;
  } else if (text == "phase") {
    opts.window = RenderWindow::Phase;
  } else {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw ConfigError("--window must be auto, phase or LO:HI");
    try {
      opts.lo = std::stod(text.substr(0, colon));
      opts.hi = std::stod(text.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("--window: cannot parse '" + text + "'");
    }
    opts.window = RenderWindow::Fixed;
  }
  return opts;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phase-cycled nonconvex MRI reconstruction"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;

  auto* sim = app.add_subcommand("simulate", "Write a synthetic phantom dataset");
  auto* rec = app.add_subcommand("reconstruct", "Reconstruct a dataset");
  auto* grid = app.add_subcommand("gridsearch", "Two-stage regularization weight search");
  for (auto* sub : {sim, rec, grid}) {
    sub->add_option("--config", config_path, "Experiment config (JSON)")->required();
    sub->add_option("--seed", seed, "Override the base seed");
    sub->add_option("--out", out_dir, "Output directory (must exist)");
    sub->add_flag("--quiet", quiet, "No progress output");
  }
  for (auto* sub : {rec, grid}) sub->add_option("--data", data_dir, "Dataset directory from simulate");

  std::string ref_path, rec_path, metrics_out;
  auto* met = app.add_subcommand("metrics", "Compare a reconstruction against a reference");
  met->add_option("reference", ref_path, "Reference array")->required();
  met->add_option("reconstruction", rec_path, "Reconstructed array")->required();
  met->add_option("--out", metrics_out, "Write the report here instead of stdout");
  bool modulus = false;
  met->add_flag("--modulus", modulus, "Compare |values| of real arrays");
  met->add_flag("--quiet", quiet);

  std::string array_path, image_path, window = "auto", mask_path;
  RenderOptions ropts;
  auto* ren = app.add_subcommand("render", "Export a 2-D slice as a PGM image");
  ren->add_option("array", array_path, "Array to render")->required();
  ren->add_option("image", image_path, "Output .pgm path")->required();
  ren->add_option("--window", window, "auto, phase or LO:HI");
  ren->add_option("--mask-threshold", ropts.mask_threshold, "Blank this fraction of lowest-magnitude pixels");
  ren->add_option("--mask", mask_path, "Magnitude array for the threshold mask");
  ren->add_option("--slice", ropts.slice, "Flattened index over leading axes");
  ren->add_flag("--phase", ropts.phase, "Render the phase of complex arrays");
  ren->add_flag("--quiet", quiet);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  std::ostream* log = quiet ? nullptr : &std::cerr;
  try {
    if (sim->parsed()) {
      const auto c = load(config_path, seed);
      cmd_simulate(c, pick(out_dir, c.paths.data), log);
    } else if (rec->parsed()) {
      const auto c = load(config_path, seed);
      cmd_reconstruct(c, pick(data_dir, c.paths.data), pick(out_dir, c.paths.out), log);
    } else if (grid->parsed()) {
      const auto c = load(config_path, seed);
      const auto best = cmd_gridsearch(c, pick(data_dir, c.paths.data), pick(out_dir, c.paths.out), log);
      if (!quiet) std::cout << "best lambda_m " << best.first << " lambda_p " << best.second << "\n";
    } else if (met->parsed()) {
      const std::string report = cmd_metrics(ref_path, rec_path, modulus);
      if (metrics_out.empty()) {
        std::cout << report << "\n";
      } else {
        std::ofstream out(metrics_out);
        if (!out) throw DataError("cannot write '" + metrics_out + "'");
        out << report << "\n";
      }
    } else if (ren->parsed()) {
      ropts = parse_window(window, ropts);
      ropts.mask_path = mask_path;
      cmd_render(array_path, image_path, ropts);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
