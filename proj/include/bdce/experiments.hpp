#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "bdce/channel.hpp"
#include "bdce/design.hpp"
#include "bdce/estimators.hpp"

namespace bdce {

/// Normalized mean squared error ||c - c_hat||_F^2 / ||c||_F^2.
inline double nmse(const ComplexMatrix& c_hat, const ComplexMatrix& c) {
  if (c_hat.rows() != c.rows() || c_hat.cols() != c.cols())
    throw dimension_error("nmse: shape mismatch");
  const double ref = c.squaredNorm();
  if (ref == 0.0) throw std::invalid_argument("nmse: zero reference");
  return (c - c_hat).squaredNorm() / ref;
}

/// Dominant-term operation count with unit constants. The baseline and the
/// closed-form estimator are dominated by the filtering stage
/// M_R*T*K*Nbar^2*Q (with T = M_T); the closed-form estimator adds
/// Q*Nbar^2*M_R*M_T for the rank-one factorizations; the iterative estimator
/// costs Nbar^2*Q*K*(M_R + M_T) per iteration.
inline double flop_estimate(Algorithm algorithm, int m_t, int m_r, int nbar,
                            int q, int k, double iterations) {
  const double nbar2q = static_cast<double>(nbar) * nbar * q;
  switch (algorithm) {
    case Algorithm::Ls:
      return static_cast<double>(m_r) * m_t * k * nbar2q;
    case Algorithm::Btkf:
      return static_cast<double>(m_r) * m_t * k * nbar2q +
             nbar2q * m_r * m_t;
    case Algorithm::Btals:
      return iterations * nbar2q * k * (m_r + m_t);
  }
  return 0.0;
}

struct GeometryPair {
  int nbar = 1;
  int q = 1;
};

/// One entry of the training-length grid: a literal total, an explicit
/// K1 x K2 split, or the per-geometry minimum Nbar^2*Q.
struct KSpec {
  enum class Kind { Min, Total, Split } kind = Kind::Min;
  int total = 0;
  int k1 = 0, k2 = 0;
};

struct SweepConfig {
  std::vector<int> m_t{2};
  std::vector<int> m_r{2};
  std::vector<GeometryPair> groups;
  std::vector<KSpec> k_list{KSpec{}};
  std::vector<double> snr_db{0.0, 10.0, 20.0, 30.0};
  std::vector<Algorithm> algorithms;
  int trials = 200;
  std::uint64_t seed = 1;
  double eta = 1e-6;
  int max_iters = 200;
  ThetaKind theta = ThetaKind::Dft;
  int threads = 0;  // 0: take BDCE_THREADS, then hardware concurrency
  std::string output = "sweep.csv";
};

struct ResultRow {
  Algorithm algorithm = Algorithm::Ls;
  int m_t = 0, m_r = 0, nbar = 0, q = 0, k = 0, k1 = 0, k2 = 0;
  double snr_db = 0.0;
  int trials = 0;
  double nmse = std::numeric_limits<double>::quiet_NaN();
  double nmse_h = std::numeric_limits<double>::quiet_NaN();
  double nmse_g = std::numeric_limits<double>::quiet_NaN();
  double iters_mean = std::numeric_limits<double>::quiet_NaN();
  int iters_max = 0;
  double flops = 0.0;
  double wall_ms = 0.0;
  std::string status = "ok";
};

namespace detail {

inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline std::string csv_safe(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n') c = ';';
  return s;
}

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("BDCE_THREADS")) {
    const int parsed = std::atoi(env);
    if (parsed > 0) return parsed;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// The arithmetic identifiability conditions only; used for operation-count
/// rows that never instantiate a concrete design.
inline ValidationReport validate_structural(const DesignConfig& cfg, int m_t,
                                            int m_r, Algorithm algorithm) {
  ValidationReport rep;
  rep.algorithm = algorithm;
  const int k = cfg.blocks();
  const int n = cfg.elements();
  if (algorithm == Algorithm::Ls || algorithm == Algorithm::Btkf) {
    if (k < cfg.nbar * cfg.nbar * cfg.q)
      rep.violations.push_back("K >= Nbar^2*Q violated");
  } else {
    if (k * m_t < n) rep.violations.push_back("K*M_T >= N violated");
    if (k * m_r < n) rep.violations.push_back("K*M_R >= N violated");
    if (k < 3) rep.violations.push_back("K >= 3 violated");
  }
  rep.pass = rep.violations.empty();
  return rep;
}

struct TrialOutcome {
  bool ok = false;
  std::string error;
  double nmse = 0.0;
  double nmse_h = std::numeric_limits<double>::quiet_NaN();
  double nmse_g = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
};

enum : std::uint64_t {
  kStreamChannel = 1,
  kStreamNoise = 2,
  kStreamInit = 3,
  kStreamDesign = 4,
};

inline std::uint64_t snr_bits(double snr_db) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(snr_db));
  std::memcpy(&bits, &snr_db, sizeof(bits));
  return bits;
}

}  // namespace detail

/// Runs the Monte-Carlo grid. Deterministic for a fixed master seed: channel,
/// noise and initialization streams are derived per (grid point, trial), and
/// per-trial results are reduced in trial order, so the output does not
/// depend on the number of worker threads.
inline std::vector<ResultRow> run_sweep(const SweepConfig& config) {
  if (config.groups.empty())
    throw std::invalid_argument("run_sweep: no geometries configured");
  if (config.algorithms.empty())
    throw std::invalid_argument("run_sweep: no algorithms configured");

  const int n_threads = detail::resolve_threads(config.threads);
  std::vector<ResultRow> rows;

  for (int m_t : config.m_t)
    for (int m_r : config.m_r)
      for (const GeometryPair& geom : config.groups)
        for (const KSpec& kspec : config.k_list) {
          DesignConfig base;
          switch (kspec.kind) {
            case KSpec::Kind::Min:
              base = DesignConfig::from_total_blocks(
                  geom.nbar, geom.q, geom.nbar * geom.nbar * geom.q,
                  config.theta);
              break;
            case KSpec::Kind::Total:
              base = DesignConfig::from_total_blocks(geom.nbar, geom.q,
                                                     kspec.total, config.theta);
              break;
            case KSpec::Kind::Split:
              base.nbar = geom.nbar;
              base.q = geom.q;
              base.k1 = kspec.k1;
              base.k2 = kspec.k2;
              base.theta = config.theta;
              base.validate();
              break;
          }
          const int k_total = base.blocks();

          for (Algorithm alg : config.algorithms) {
            // Iterative estimation defaults to the decorrelating rotated
            // design; the filter-based estimators use the orthogonal one.
            DesignConfig cfg = base;
            cfg.rotated = (alg == Algorithm::Btals);
            cfg.seed = derive_seed(config.seed,
                                   {detail::kStreamDesign,
                                    std::uint64_t(geom.nbar),
                                    std::uint64_t(geom.q),
                                    std::uint64_t(k_total)});

            ValidationReport rep =
                config.trials == 0
                    ? detail::validate_structural(cfg, m_t, m_r, alg)
                    : validate_identifiability(cfg, m_t, m_r, alg);

            std::optional<TrainingDesign> design;
            if (rep.pass && config.trials > 0)
              design = TrainingDesign::build(cfg);

            for (double snr : config.snr_db) {
              ResultRow row;
              row.algorithm = alg;
              row.m_t = m_t;
              row.m_r = m_r;
              row.nbar = geom.nbar;
              row.q = geom.q;
              row.k = k_total;
              row.k1 = cfg.k1;
              row.k2 = cfg.k2;
              row.snr_db = snr;
              row.trials = config.trials;

              if (!rep.pass) {
                row.status = "skipped: " + rep.violations.front();
                rows.push_back(row);
                continue;
              }
              if (config.trials == 0) {
                row.flops = flop_estimate(alg, m_t, m_r, geom.nbar, geom.q,
                                          k_total, config.max_iters);
                rows.push_back(row);
                continue;
              }

              const auto t0 = std::chrono::steady_clock::now();
              std::vector<detail::TrialOutcome> outcomes(config.trials);
              std::atomic<int> next{0};
              auto worker = [&]() {
                for (;;) {
                  const int trial = next.fetch_add(1);
                  if (trial >= config.trials) return;
                  detail::TrialOutcome& out = outcomes[trial];
                  try {
                    const std::uint64_t point[] = {
                        std::uint64_t(m_t),      std::uint64_t(m_r),
                        std::uint64_t(geom.nbar), std::uint64_t(geom.q),
                        std::uint64_t(k_total),  detail::snr_bits(snr),
                        std::uint64_t(trial)};
                    auto stream = [&](std::uint64_t tag) {
                      return derive_seed(config.seed,
                                         {tag, point[0], point[1], point[2],
                                          point[3], point[4], point[5],
                                          point[6],
                                          std::uint64_t(cfg.rotated)});
                    };
                    ChannelPair ch =
                        draw_channels(m_t, m_r, geom.nbar, geom.q,
                                      stream(detail::kStreamChannel));
                    ReceivedPilots pilots = synthesize_pilots(
                        *design, ch, snr, stream(detail::kStreamNoise));
                    const ComplexMatrix truth = combined_channel(ch);

                    EstimationResult est;
                    if (alg == Algorithm::Ls) {
                      est = estimate_ls(pilots, *design);
                    } else if (alg == Algorithm::Btkf) {
                      est = estimate_btkf(pilots, *design);
                    } else {
                      BtalsOptions opts;
                      opts.eta = config.eta;
                      opts.max_iters = config.max_iters;
                      opts.init_seed = stream(detail::kStreamInit);
                      est = estimate_btals(pilots, *design, opts);
                    }
                    out.nmse = nmse(est.t_hat, truth);
                    out.iterations = est.iterations;
                    if (est.h_hat && est.g_hat) {
                      EstimationResult resolved =
                          resolve_scaling(std::move(est), ch);
                      out.nmse_h = nmse(*resolved.h_hat, ch.h);
                      out.nmse_g = nmse(*resolved.g_hat, ch.g);
                    }
                    out.ok = true;
                  } catch (const std::exception& e) {
                    out.error = e.what();
                  }
                }
              };
              std::vector<std::thread> pool;
              const int active = std::min(n_threads, config.trials);
              pool.reserve(active);
              for (int t = 1; t < active; ++t) pool.emplace_back(worker);
              worker();
              for (auto& t : pool) t.join();

              // Trial-ordered reduction keeps the averages independent of
              // thread scheduling.
              int good = 0, failed = 0;
              double sum = 0.0, sum_h = 0.0, sum_g = 0.0, sum_it = 0.0;
              bool have_channels = false;
              std::string first_error;
              for (const auto& out : outcomes) {
                if (!out.ok) {
                  ++failed;
                  if (first_error.empty()) first_error = out.error;
                  continue;
                }
                ++good;
                sum += out.nmse;
                sum_it += out.iterations;
                row.iters_max = std::max(row.iters_max, out.iterations);
                if (!std::isnan(out.nmse_h)) {
                  have_channels = true;
                  sum_h += out.nmse_h;
                  sum_g += out.nmse_g;
                }
              }
              if (good > 0) {
                row.nmse = sum / good;
                if (have_channels) {
                  row.nmse_h = sum_h / good;
                  row.nmse_g = sum_g / good;
                }
                if (alg == Algorithm::Btals) row.iters_mean = sum_it / good;
              }
              if (failed > 0)
                row.status = "error(" + std::to_string(failed) +
                             "): " + first_error;
              row.trials = good;
              row.flops = flop_estimate(
                  alg, m_t, m_r, geom.nbar, geom.q, k_total,
                  alg == Algorithm::Btals
                      ? (good > 0 ? row.iters_mean : config.max_iters)
                      : 1.0);
              row.wall_ms =
                  std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
              rows.push_back(row);
            }
          }
        }
  return rows;
}

/// CSV schema (stable order, one header row):
///   algorithm,m_t,m_r,nbar,q,n,k,k1,k2,snr_db,trials,nmse,nmse_db,
///   nmse_h,nmse_g,iters_mean,iters_max,flops,status
/// Wall time is appended only on request, since it varies between runs.
inline void write_csv(std::ostream& os, const std::vector<ResultRow>& rows,
                      bool include_timing = false) {
  os << "algorithm,m_t,m_r,nbar,q,n,k,k1,k2,snr_db,trials,nmse,nmse_db,"
        "nmse_h,nmse_g,iters_mean,iters_max,flops,status";
  if (include_timing) os << ",wall_ms";
  os << "\n";
  for (const ResultRow& r : rows) {
    const double nmse_db =
        std::isnan(r.nmse) ? std::numeric_limits<double>::quiet_NaN()
                           : 10.0 * std::log10(r.nmse);
    os << to_string(r.algorithm) << ',' << r.m_t << ',' << r.m_r << ','
       << r.nbar << ',' << r.q << ',' << r.nbar * r.q << ',' << r.k << ','
       << r.k1 << ',' << r.k2 << ',' << detail::format_double(r.snr_db) << ','
       << r.trials << ',' << detail::format_double(r.nmse) << ','
       << detail::format_double(nmse_db) << ','
       << detail::format_double(r.nmse_h) << ','
       << detail::format_double(r.nmse_g) << ','
       << detail::format_double(r.iters_mean) << ','
       << (r.iters_max > 0 ? std::to_string(r.iters_max) : "") << ','
       << detail::format_double(r.flops) << ','
       << detail::csv_safe(r.status);
    if (include_timing) os << ',' << detail::format_double(r.wall_ms);
    os << "\n";
  }
}

namespace detail {

inline std::vector<std::string> split_tokens(const std::string& value) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : value) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!current.empty()) tokens.push_back(std::exchange(current, {}));
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) tokens.push_back(current);
  return tokens;
}

inline std::pair<int, int> parse_pair(const std::string& token,
                                      const std::string& what) {
  const auto x = token.find('x');
  if (x == std::string::npos || x == 0 || x + 1 == token.size())
    throw std::invalid_argument(what + ": expected <a>x<b>, got '" + token +
                                "'");
  return {std::stoi(token.substr(0, x)), std::stoi(token.substr(x + 1))};
}

}  // namespace detail

/// Parses the sweep configuration text format: one `key = value` per line,
/// '#' comments, lists separated by commas or spaces. Geometries are
/// `<nbar>x<q>` pairs; training lengths are totals, `k1xk2` splits, or `min`
/// for Nbar^2*Q. Unknown keys are errors.
inline SweepConfig parse_sweep_config(std::istream& is) {
  SweepConfig cfg;
  cfg.m_t.clear();
  cfg.m_r.clear();
  cfg.k_list.clear();
  cfg.snr_db.clear();

  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
      if (blank) continue;
      throw std::invalid_argument("sweep config line " +
                                  std::to_string(lineno) +
                                  ": expected 'key = value'");
    }
    std::string key = line.substr(0, eq);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    const auto tokens = detail::split_tokens(line.substr(eq + 1));
    const auto context = [&](const std::string& msg) {
      return "sweep config line " + std::to_string(lineno) + ": " + msg;
    };
    if (tokens.empty())
      throw std::invalid_argument(context("missing value for '" + key + "'"));

    if (key == "mt") {
      for (const auto& t : tokens) cfg.m_t.push_back(std::stoi(t));
    } else if (key == "mr") {
      for (const auto& t : tokens) cfg.m_r.push_back(std::stoi(t));
    } else if (key == "groups") {
      for (const auto& t : tokens) {
        auto [nbar, q] = detail::parse_pair(t, context("groups"));
        cfg.groups.push_back({nbar, q});
      }
    } else if (key == "k") {
      for (const auto& t : tokens) {
        KSpec spec;
        if (t == "min") {
          spec.kind = KSpec::Kind::Min;
        } else if (t.find('x') != std::string::npos) {
          spec.kind = KSpec::Kind::Split;
          std::tie(spec.k1, spec.k2) = detail::parse_pair(t, context("k"));
        } else {
          spec.kind = KSpec::Kind::Total;
          spec.total = std::stoi(t);
        }
        cfg.k_list.push_back(spec);
      }
    } else if (key == "snr_db") {
      for (const auto& t : tokens)
        cfg.snr_db.push_back(t == "inf"
                                 ? std::numeric_limits<double>::infinity()
                                 : std::stod(t));
    } else if (key == "algorithms") {
      for (const auto& t : tokens) {
        if (t == "ls") cfg.algorithms.push_back(Algorithm::Ls);
        else if (t == "btkf") cfg.algorithms.push_back(Algorithm::Btkf);
        else if (t == "btals") cfg.algorithms.push_back(Algorithm::Btals);
        else throw std::invalid_argument(context("unknown algorithm '" + t +
                                                 "'"));
      }
    } else if (key == "trials") {
      cfg.trials = std::stoi(tokens[0]);
    } else if (key == "seed") {
      cfg.seed = std::stoull(tokens[0]);
    } else if (key == "eta") {
      cfg.eta = std::stod(tokens[0]);
    } else if (key == "max_iters") {
      cfg.max_iters = std::stoi(tokens[0]);
    } else if (key == "theta") {
      if (tokens[0] == "dft") cfg.theta = ThetaKind::Dft;
      else if (tokens[0] == "hadamard") cfg.theta = ThetaKind::Hadamard;
      else throw std::invalid_argument(context("unknown theta kind"));
    } else if (key == "threads") {
      cfg.threads = std::stoi(tokens[0]);
    } else if (key == "output") {
      cfg.output = tokens[0];
    } else {
      throw std::invalid_argument(context("unknown key '" + key + "'"));
    }
  }
  if (cfg.m_t.empty()) cfg.m_t = {2};
  if (cfg.m_r.empty()) cfg.m_r = {2};
  if (cfg.k_list.empty()) cfg.k_list = {KSpec{}};
  if (cfg.snr_db.empty()) cfg.snr_db = {0.0, 10.0, 20.0, 30.0};
  if (cfg.groups.empty())
    throw std::invalid_argument("sweep config: 'groups' is required");
  if (cfg.algorithms.empty())
    throw std::invalid_argument("sweep config: 'algorithms' is required");
  if (cfg.trials < 0)
    throw std::invalid_argument("sweep config: trials must be nonnegative");
  return cfg;
}

inline SweepConfig parse_sweep_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  return parse_sweep_config(in);
}

/// Built-in experiment grids at the geometries of the reference protocols,
/// with reduced trial counts so they run at desk scale. Trial counts and
/// seeds are overridable from the command line.
inline SweepConfig figure_preset(const std::string& name) {
  SweepConfig cfg;
  const auto algs_filter = [&](std::initializer_list<Algorithm> a) {
    cfg.algorithms.assign(a);
  };
  if (name == "fig4" || name == "fig5") {
    // Baseline vs closed-form factorization, N = 64, fixed or minimum K.
    cfg.groups = {{1, 64}, {2, 32}, {4, 16}};
    cfg.k_list = {name == "fig4" ? KSpec{KSpec::Kind::Total, 256, 0, 0}
                                 : KSpec{}};
    algs_filter({Algorithm::Ls, Algorithm::Btkf});
    cfg.trials = 50;
  } else if (name == "fig6") {
    cfg.groups = {{4, 16}};
    cfg.m_t = {2, 4};
    cfg.m_r = {2, 4};
    algs_filter({Algorithm::Ls, Algorithm::Btkf});
    cfg.trials = 50;
  } else if (name == "fig7") {
    cfg.groups = {{1, 64}, {4, 16}, {8, 8}};
    cfg.k_list.clear();
    for (int k : {24, 32, 48, 64, 96, 128})
      cfg.k_list.push_back({KSpec::Kind::Total, k, 0, 0});
    cfg.snr_db = {20.0};
    cfg.m_t = {8};
    cfg.m_r = {8};
    algs_filter({Algorithm::Btals});
    cfg.trials = 20;
    cfg.max_iters = 1000;  // the shortest trainings converge slowly
  } else if (name == "fig8") {
    cfg.groups = {{1, 64}, {2, 32}, {4, 16}, {8, 8}, {16, 4}, {64, 1}};
    cfg.k_list = {KSpec{KSpec::Kind::Total, 64, 0, 0}};
    cfg.snr_db = {20.0};
    cfg.m_t = {2, 4};
    cfg.m_r = {2, 4};
    algs_filter({Algorithm::Btals});
    cfg.trials = 20;
  } else if (name == "fig9") {
    cfg.groups = {{1, 64}, {4, 16}, {8, 8}, {64, 1}};
    cfg.k_list = {KSpec{KSpec::Kind::Total, 32, 0, 0}};
    cfg.snr_db = {0.0, 15.0, 30.0};
    cfg.m_t = {8};
    cfg.m_r = {8};
    algs_filter({Algorithm::Btals});
    cfg.trials = 10;
  } else if (name == "fig10") {
    cfg.groups = {{4, 16}, {8, 8}};
    cfg.k_list.clear();
    for (int k : {16, 24, 32, 48, 64})
      cfg.k_list.push_back({KSpec::Kind::Total, k, 0, 0});
    cfg.snr_db = {20.0};
    cfg.m_t = {8};
    cfg.m_r = {8};
    algs_filter({Algorithm::Btals});
    cfg.trials = 20;
    cfg.max_iters = 1000;
  } else if (name == "fig11") {
    cfg.groups = {{1, 64}, {2, 32}, {4, 16}, {8, 8}, {16, 4}, {32, 2},
                  {64, 1}};
    cfg.snr_db = {20.0};
    cfg.m_t = {4};
    cfg.m_r = {4};
    algs_filter({Algorithm::Ls, Algorithm::Btkf, Algorithm::Btals});
    cfg.trials = 0;  // operation counts only
  } else {
    throw std::invalid_argument("unknown figure preset '" + name + "'");
  }
  cfg.output = name + ".csv";
  return cfg;
}

}  // namespace bdce
