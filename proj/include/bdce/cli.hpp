#pragma once

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "bdce/experiments.hpp"

namespace bdce::cli {

namespace detail {

inline int write_output(const std::string& path,
                        const std::vector<ResultRow>& rows,
                        bool timing) {
  if (path == "-") {
    write_csv(std::cout, rows, timing);
    return 0;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    std::cerr << "error: cannot open output file: " << path << "\n";
    return 1;
  }
  write_csv(out, rows, timing);
  std::cerr << "wrote " << rows.size() << " rows to " << path << "\n";
  return 0;
}

inline void apply_overrides(SweepConfig& cfg,
                            const std::optional<std::uint64_t>& seed,
                            const std::optional<int>& trials,
                            const std::optional<int>& threads,
                            const std::optional<std::string>& output) {
  if (seed) cfg.seed = *seed;
  if (trials) cfg.trials = *trials;
  if (threads) cfg.threads = *threads;
  if (output) cfg.output = *output;
}

}  // namespace detail

/// Command-line entry point. Subcommands:
///   sweep <config>     run a Monte-Carlo grid and write CSV results
///   validate <config>  identifiability report; nonzero exit on violations
///   design <config>    build a training design and emit its text form
///   figure <name>      run a built-in preset grid (fig4 ... fig11)
inline int run(const std::vector<std::string>& args) {
  CLI::App app{"Tensor-based channel estimation for beyond-diagonal RIS"};
  app.require_subcommand(1);

  std::string config_path, figure_name;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials, threads;
  std::optional<std::string> output;
  bool timing = false;

  CLI::App* sweep = app.add_subcommand("sweep", "run a Monte-Carlo sweep");
  sweep->add_option("config", config_path, "sweep configuration file")
      ->required();
  sweep->add_option("--seed", seed, "override the master seed");
  sweep->add_option("--trials", trials, "override trials per grid point");
  sweep->add_option("--threads", threads, "worker thread count");
  sweep->add_option("--output,-o", output, "output CSV path ('-' for stdout)");
  sweep->add_flag("--timing", timing, "append a wall_ms column (not "
                                      "byte-reproducible)");

  CLI::App* validate =
      app.add_subcommand("validate", "identifiability report for a grid");
  validate->add_option("config", config_path, "sweep configuration file")
      ->required();

  CLI::App* design =
      app.add_subcommand("design", "emit a training design file");
  design->add_option("config", config_path, "design configuration file")
      ->required();
  design->add_option("--output,-o", output, "output path ('-' for stdout)");

  CLI::App* figure = app.add_subcommand("figure", "run a preset grid");
  figure->add_option("name", figure_name, "preset name (fig4 ... fig11)")
      ->required();
  figure->add_option("--seed", seed, "override the master seed");
  figure->add_option("--trials", trials, "override trials per grid point");
  figure->add_option("--threads", threads, "worker thread count");
  figure->add_option("--output,-o", output, "output CSV path ('-' for stdout)");
  figure->add_flag("--timing", timing, "append a wall_ms column");

  std::vector<char*> argv;
  std::vector<std::string> storage = args;
  storage.insert(storage.begin(), "bdce");
  argv.reserve(storage.size());
  for (auto& s : storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (sweep->parsed()) {
      SweepConfig cfg = parse_sweep_config_file(config_path);
      detail::apply_overrides(cfg, seed, trials, threads, output);
      return detail::write_output(cfg.output, run_sweep(cfg), timing);
    }
    if (validate->parsed()) {
      SweepConfig cfg = parse_sweep_config_file(config_path);
      int failures = 0;
      for (int m_t : cfg.m_t)
        for (int m_r : cfg.m_r)
          for (const GeometryPair& geom : cfg.groups)
            for (const KSpec& kspec : cfg.k_list) {
              DesignConfig dc =
                  kspec.kind == KSpec::Kind::Split
                      ? DesignConfig{geom.nbar, geom.q, kspec.k1, kspec.k2,
                                     cfg.theta, false, 0}
                      : DesignConfig::from_total_blocks(
                            geom.nbar, geom.q,
                            kspec.kind == KSpec::Kind::Min
                                ? geom.nbar * geom.nbar * geom.q
                                : kspec.total,
                            cfg.theta);
              for (Algorithm alg : cfg.algorithms) {
                DesignConfig dcopy = dc;
                dcopy.rotated = (alg == Algorithm::Btals);
                dcopy.seed = derive_seed(cfg.seed, {0xd5, 0});
                ValidationReport rep =
                    validate_identifiability(dcopy, m_t, m_r, alg);
                std::cout << "nbar=" << geom.nbar << " q=" << geom.q
                          << " k=" << dc.blocks() << " mt=" << m_t
                          << " mr=" << m_r << " " << rep.summary() << "\n";
                if (!rep.pass) ++failures;
              }
            }
      return failures == 0 ? 0 : 2;
    }
    if (design->parsed()) {
      std::ifstream in(config_path);
      if (!in) {
        std::cerr << "error: cannot open design file: " << config_path << "\n";
        return 1;
      }
      DesignConfig dc = load_design(in);
      TrainingDesign::build(dc);  // construction validates the parameters
      if (!output || *output == "-") {
        save_design(dc, std::cout);
      } else {
        std::ofstream out(*output, std::ios::binary);
        if (!out) {
          std::cerr << "error: cannot open output file: " << *output << "\n";
          return 1;
        }
        save_design(dc, out);
      }
      return 0;
    }
    if (figure->parsed()) {
      SweepConfig cfg = figure_preset(figure_name);
      detail::apply_overrides(cfg, seed, trials, threads, output);
      return detail::write_output(cfg.output, run_sweep(cfg), timing);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace bdce::cli
