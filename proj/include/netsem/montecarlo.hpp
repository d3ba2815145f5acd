#pragma once

// Replication engine: simulate, estimate, aggregate Bias / RMSE / ESE.
//
// Replication r always uses the dataset seed derive_key(master, {r}), for
// every regime and rho. Cells therefore share random numbers, and results
// never depend on how replications were spread across threads.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "netsem/dgp.hpp"
#include "netsem/estimators.hpp"
#include "netsem/rng.hpp"

namespace netsem {

enum class Regime { weak, strong };

inline std::string_view regime_name(Regime r) noexcept { return r == Regime::weak ? "weak" : "strong"; }

inline Regime parse_regime(std::string_view s) {
  if (s == "weak") return Regime::weak;
  if (s == "strong") return Regime::strong;
  throw DomainError("unknown regime '" + std::string(s) + "' (expected weak or strong)");
}

/// (lambda_T, lambda_S) of a regime.
inline std::pair<double, double> regime_lambdas(Regime r) noexcept {
  return r == Regime::weak ? std::pair{0.3, 0.2} : std::pair{0.6, 0.5};
}

inline constexpr std::size_t kParamCount = 8;

inline const std::array<std::string, kParamCount>& all_parameter_names() {
  static const std::array<std::string, kParamCount> names{"lambda_T", "lambda_TS", "gamma_T1",
                                                         "gamma_T2", "lambda_S", "lambda_ST",
                                                         "gamma_S1", "gamma_S2"};
  return names;
}

struct McConfig {
  DgpConfig base;
  std::vector<Regime> regimes{Regime::weak};
  std::vector<double> rho_grid{0.4, 0.6, 0.8};
  int replications = 500;
  std::vector<EstimatorMode> modes{EstimatorMode::tsls, EstimatorMode::tsls_ec};
  std::uint64_t master_seed = 0;
  /// Worker threads; has no effect on results.
  int jobs = 1;
  EstimateOptions estimate;

  void validate() const {
    if (replications < 2) throw DomainError("replications must be >= 2");
    if (regimes.empty() || rho_grid.empty() || modes.empty())
      throw DomainError("regimes, rho_grid and modes must be non-empty");
    if (jobs < 1) throw DomainError("jobs must be >= 1");
    if (estimate.depth < 1) throw DomainError("iv depth must be >= 1");
    for (double r : rho_grid)
      if (!(std::abs(r) <= 1.0)) throw DomainError("rho values must lie in [-1, 1]");
    base.validate();
  }

  /// DGP configuration of one cell and replication.
  DgpConfig cell_config(Regime regime, double rho, int rep_index) const {
    DgpConfig c = base;
    std::tie(c.lambda_T, c.lambda_S) = regime_lambdas(regime);
    c.rho = rho;
    c.seed = derive_key(master_seed, {static_cast<std::uint64_t>(rep_index)});
    return c;
  }

  EstimateOptions estimate_options() const {
    EstimateOptions o = estimate;
    o.normalization = base.normalization;
    o.similarity_column = base.similarity_column;
    return o;
  }
};

inline Vector truth_vector(const DgpConfig& c) {
  Vector t(kParamCount);
  t << c.lambda_T, c.lambda_TS, c.gamma_T[0], c.gamma_T[1], c.lambda_S, c.lambda_ST, c.gamma_S[0],
      c.gamma_S[1];
  return t;
}

/// One estimator's outcome on one replication. Failures carry a message and
/// no estimates.
struct ModeOutcome {
  EstimatorMode mode = EstimatorMode::tsls;
  bool ok = false;
  std::string error;
  Vector estimate;  // 8 parameters, T equation first
  Vector robust_se;
  std::array<double, 2> oir_p{};
  std::array<double, 2> cd_F{};
};

struct ReplicationResult {
  int rep_index = 0;
  std::uint64_t dataset_seed = 0;
  std::vector<ModeOutcome> modes;
};

inline ReplicationResult run_replication(const McConfig& cfg, Regime regime, double rho, int rep_index) {
  ReplicationResult out;
  out.rep_index = rep_index;
  const DgpConfig dc = cfg.cell_config(regime, rho, rep_index);
  out.dataset_seed = dc.seed;
  std::optional<EstimationData> data;
  std::string sim_error;
  try {
    data = EstimationData::from(simulate(dc));
  } catch (const Error& e) {
    sim_error = std::string("simulate: ") + e.what();
  }
  for (EstimatorMode m : cfg.modes) {
    ModeOutcome mo;
    mo.mode = m;
    if (!data) {
      mo.error = sim_error;
      out.modes.push_back(std::move(mo));
      continue;
    }
    try {
      auto [rT, rS] = estimate_system(*data, m, cfg.estimate_options());
      mo.estimate.resize(kParamCount);
      mo.robust_se.resize(kParamCount);
      mo.estimate << rT.delta, rS.delta;
      mo.robust_se << rT.robust_se, rS.robust_se;
      mo.oir_p = {rT.oir_pvalue, rS.oir_pvalue};
      mo.cd_F = {rT.cragg_donald_F, rS.cragg_donald_F};
      mo.ok = true;
    } catch (const Error& e) {
      mo.error = e.what();
    }
    out.modes.push_back(std::move(mo));
  }
  return out;
}

/// Default regime / rho for a single replication (first grid entries).
inline ReplicationResult run_replication(const McConfig& cfg, int rep_index) {
  return run_replication(cfg, cfg.regimes.front(), cfg.rho_grid.front(), rep_index);
}

struct CellMetrics {
  double bias = 0.0;
  double rmse = 0.0;
  double ese = 0.0;
  int n = 0;
};

/// Bias = mean(e - truth), RMSE with divisor n, ESE with divisor n - 1.
inline CellMetrics aggregate(const std::vector<double>& estimates, double truth) {
  const std::size_t n = estimates.size();
  if (n < 2) throw NumericError("aggregate: need >= 2 successful replications, have " + std::to_string(n));
  CellMetrics m;
  m.n = static_cast<int>(n);
  double sum = 0.0, sq = 0.0;
  for (double e : estimates) {
    sum += e - truth;
    sq += (e - truth) * (e - truth);
  }
  m.bias = sum / static_cast<double>(n);
  m.rmse = std::sqrt(sq / static_cast<double>(n));
  const double mean = m.bias + truth;
  double dev = 0.0;
  for (double e : estimates) dev += (e - mean) * (e - mean);
  m.ese = std::sqrt(dev / static_cast<double>(n - 1));
  return m;
}

struct McCell {
  Regime regime = Regime::weak;
  double rho = 0.0;
  EstimatorMode mode = EstimatorMode::tsls;
  std::string param;
  double bias = 0.0, rmse = 0.0, ese = 0.0;
  int n_ok = 0, n_fail = 0;
};

struct McReport {
  std::vector<McCell> cells;
  std::uint64_t master_seed = 0;
  std::uint64_t config_hash = 0;
  int replications = 0;
  /// Not part of the deterministic outputs.
  double wall_seconds = 0.0;
  /// Raw per-replication results keyed by (regime, rho index), rep-ordered.
  std::map<std::pair<int, std::size_t>, std::vector<ReplicationResult>> replications_by_cell;

  const McCell* find(Regime r, double rho, EstimatorMode m, std::string_view param) const {
    for (const McCell& c : cells)
      if (c.regime == r && std::abs(c.rho - rho) < 1e-12 && c.mode == m && c.param == param) return &c;
    return nullptr;
  }
};

namespace detail {

inline void append_double(std::string& s, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g;", v);
  s += buf;
}

}  // namespace detail

/// FNV-1a over bytes.
inline std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Canonical text of everything that affects results (jobs excluded).
inline std::string canonical_string(const McConfig& cfg) {
  std::string s;
  const DgpConfig& b = cfg.base;
  for (double v : {static_cast<double>(b.n_communities_T), static_cast<double>(b.n_communities_S),
                   static_cast<double>(b.community_size_T), static_cast<double>(b.community_size_S),
                   b.lambda_TS, b.lambda_ST, b.gamma_T[0], b.gamma_T[1], b.gamma_S[0], b.gamma_S[1],
                   b.tau_T[0], b.tau_T[1], b.tau_S[0], b.tau_S[1], b.covariate_sd, b.uniform_low,
                   b.uniform_high, static_cast<double>(b.similarity_column), b.cross_link_probability})
    detail::append_double(s, v);
  for (double k : b.kappa_levels) detail::append_double(s, k);
  s += normalization_name(b.normalization);
  s += '|';
  for (Regime r : cfg.regimes) s += std::string(regime_name(r)) + ";";
  for (double r : cfg.rho_grid) detail::append_double(s, r);
  for (EstimatorMode m : cfg.modes) s += std::string(mode_name(m)) + ";";
  s += std::to_string(cfg.replications) + "|" + std::to_string(cfg.master_seed) + "|" +
       std::to_string(cfg.estimate.depth) + "|" + (cfg.estimate.per_community_logit ? "pc" : "pooled") + "|";
  for (const std::string& d : cfg.estimate.subset) s += d + ";";
  return s;
}

/// Full grid sweep over a pool of cfg.jobs threads. Tasks are
/// (regime, rho, replication) triples; results land in slots keyed by them.
inline McReport run_experiment(const McConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n_reg = cfg.regimes.size(), n_rho = cfg.rho_grid.size();
  const std::size_t reps = static_cast<std::size_t>(cfg.replications);
  const std::size_t tasks = n_reg * n_rho * reps;
  std::vector<ReplicationResult> slots(tasks);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks; t = next++) {
      const std::size_t g = t / (n_rho * reps), k = (t / reps) % n_rho, r = t % reps;
      try {
        slots[t] = run_replication(cfg, cfg.regimes[g], cfg.rho_grid[k], static_cast<int>(r));
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int width = std::min<int>(cfg.jobs, static_cast<int>(std::max<std::size_t>(tasks, 1)));
  std::vector<std::thread> pool;
  for (int w = 1; w < width; ++w) pool.emplace_back(worker);
  worker();
  for (std::thread& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  McReport rep;
  rep.master_seed = cfg.master_seed;
  rep.config_hash = fnv1a64(canonical_string(cfg));
  rep.replications = cfg.replications;
  const auto& names = all_parameter_names();
  for (std::size_t g = 0; g < n_reg; ++g) {
    for (std::size_t k = 0; k < n_rho; ++k) {
      const Vector truth = truth_vector(cfg.cell_config(cfg.regimes[g], cfg.rho_grid[k], 0));
      std::vector<ReplicationResult> cell(slots.begin() + static_cast<std::ptrdiff_t>((g * n_rho + k) * reps),
                                          slots.begin() + static_cast<std::ptrdiff_t>((g * n_rho + k + 1) * reps));
      for (std::size_t mi = 0; mi < cfg.modes.size(); ++mi) {
        int fails = 0;
        std::vector<std::vector<double>> est(kParamCount);
        for (const ReplicationResult& rr : cell) {
          const ModeOutcome& mo = rr.modes[mi];
          if (!mo.ok) {
            ++fails;
            continue;
          }
          for (std::size_t p = 0; p < kParamCount; ++p) est[p].push_back(mo.estimate(static_cast<Index>(p)));
        }
        for (std::size_t p = 0; p < kParamCount; ++p) {
          McCell c{cfg.regimes[g], cfg.rho_grid[k], cfg.modes[mi], names[p]};
          try {
            const CellMetrics m = aggregate(est[p], truth(static_cast<Index>(p)));
            c.bias = m.bias;
            c.rmse = m.rmse;
            c.ese = m.ese;
            c.n_ok = m.n;
          } catch (const NumericError& e) {
            throw NumericError("cell regime=" + std::string(regime_name(c.regime)) +
                               " rho=" + std::to_string(c.rho) + " mode=" + std::string(mode_name(c.mode)) +
                               " param=" + c.param + ": " + e.what());
          }
          c.n_fail = fails;
          rep.cells.push_back(std::move(c));
        }
      }
      rep.replications_by_cell[{static_cast<int>(g), k}] = std::move(cell);
    }
  }
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

// ---------------------------------------------------------------------------
// Reference comparison

struct ReferenceCell {
  std::string regime;
  double rho = 0.0;
  std::string mode;
  std::string param;
  double bias = 0.0, rmse = 0.0, ese = 0.0;
};

struct Tolerances {
  double bias = 0.08;
  double rmse = std::numeric_limits<double>::infinity();
  double ese = std::numeric_limits<double>::infinity();
};

struct Deviation {
  McCell ours;
  ReferenceCell reference;
  double d_bias = 0.0, d_rmse = 0.0, d_ese = 0.0;
  bool pass = false;
};

/// Every report cell must have a reference counterpart; extra reference
/// cells (other regimes, say) are ignored.
inline std::vector<Deviation> compare_to_reference(const McReport& report,
                                                   const std::vector<ReferenceCell>& reference,
                                                   const Tolerances& tol = {}) {
  std::vector<Deviation> out;
  for (const McCell& c : report.cells) {
    const ReferenceCell* match = nullptr;
    for (const ReferenceCell& r : reference)
      if (r.regime == regime_name(c.regime) && std::abs(r.rho - c.rho) < 1e-9 &&
          parse_mode(r.mode) == c.mode && r.param == c.param) {
        match = &r;
        break;
      }
    if (!match)
      throw SchemaError("reference has no cell for regime=" + std::string(regime_name(c.regime)) +
                        " rho=" + std::to_string(c.rho) + " mode=" + std::string(mode_name(c.mode)) +
                        " param=" + c.param);
    Deviation d{c, *match, c.bias - match->bias, c.rmse - match->rmse, c.ese - match->ese, false};
    d.pass = std::abs(d.d_bias) <= tol.bias && std::abs(d.d_rmse) <= tol.rmse &&
             std::abs(d.d_ese) <= tol.ese;
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace netsem
