// Acceptance criteria AC1-AC9. One PASS/FAIL line per criterion; the exit
// status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "../helpers.hpp"

using namespace netsem;
using namespace netsem::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
};

std::string f(const char* format, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

int failures = 0;

void report(const char* id, const char* title, const Outcome& o, double secs) {
  std::printf("%s %s: %s (%.1f s)\n", id, o.pass ? "PASS" : "FAIL", title, secs);
  for (const std::string& n : o.notes) std::printf("    %s\n", n.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

void run(const char* id, const char* title, const std::function<void(Outcome&)>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    body(o);
  } catch (const std::exception& e) {
    o.check(false, std::string("exception: ") + e.what());
  }
  report(id, title, o, seconds_since(t0));
}

Vector irls(const Matrix& x, const Vector& y) {
  Vector b = Vector::Zero(x.cols());
  for (int it = 0; it < 200; ++it) {
    const Vector eta = x * b;
    const Vector p = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
    const Vector w = (p.array() * (1.0 - p.array())).matrix();
    const Vector z = eta + ((y - p).array() / w.array()).matrix();
    const Matrix xtw = x.transpose() * w.asDiagonal();
    const Vector next = (xtw * x).ldlt().solve(xtw * z);
    if ((next - b).cwiseAbs().maxCoeff() < 1e-14) return next;
    b = next;
  }
  return b;
}

double bias_of(const McReport& r, Regime g, double rho, EstimatorMode m, const char* param) {
  const McCell* c = r.find(g, rho, m, param);
  if (!c) throw StateError(std::string("missing report cell for ") + param);
  return c->bias;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Replication-level OIR p-values of one cell, mode and equation.
std::vector<double> oir_pvalues(const McReport& r, int g, std::size_t k, std::size_t mode_index, int eq) {
  std::vector<double> out;
  for (const ReplicationResult& rr : r.replications_by_cell.at({g, k})) {
    const ModeOutcome& mo = rr.modes[mode_index];
    if (mo.ok && std::isfinite(mo.oir_p[static_cast<std::size_t>(eq)])) out.push_back(mo.oir_p[static_cast<std::size_t>(eq)]);
  }
  return out;
}

McConfig default_config(std::vector<Regime> regimes, std::vector<double> rho, std::uint64_t seed) {
  McConfig cfg;
  cfg.regimes = std::move(regimes);
  cfg.rho_grid = std::move(rho);
  cfg.replications = 500;
  cfg.master_seed = seed;
  return cfg;
}

}  // namespace

int main() {
  std::printf("netsem acceptance run\n");

  run("AC1", "equilibrium fixed point on 100 random stable instances", [](Outcome& o) {
    const auto t0 = Clock::now();
    Rng rng(101);
    double worst_resid = 0.0, worst_oracle = 0.0;
    bool resid_ok = true, oracle_ok = true;
    for (int rep = 0; rep < 100; ++rep) {
      const LayeredNetwork net = random_network(rng, 4, 15, 0.3);
      const GameParameters p = random_stable_parameters(net, rng);
      const AgentAbilities a{random_vector(net.n_T(), rng), random_vector(net.n_S(), rng)};
      const EquilibriumResult r = nash_equilibrium(a, p, net);
      const auto [rT, rS] = best_response_residual(r.y_T, r.y_S, a, p, net);
      const double scale = 1.0 + std::max(r.y_T.cwiseAbs().maxCoeff(), r.y_S.cwiseAbs().maxCoeff());
      const double resid = std::max(rT.cwiseAbs().maxCoeff(), rS.cwiseAbs().maxCoeff()) / scale;
      const auto [oT, oS] = damped_best_response(a, p, net, a.alpha_T, a.alpha_S);
      const double gap = std::max((oT - r.y_T).cwiseAbs().maxCoeff(), (oS - r.y_S).cwiseAbs().maxCoeff());
      worst_resid = std::max(worst_resid, resid);
      worst_oracle = std::max(worst_oracle, gap);
      resid_ok = resid_ok && resid <= 1e-8;
      oracle_ok = oracle_ok && gap <= 1e-6;
    }
    o.check(resid_ok, f("max scaled best-response residual %.3g <= 1e-8", worst_resid));
    o.check(oracle_ok, f("max gap to damped iteration %.3g <= 1e-6", worst_oracle));
    const double secs = seconds_since(t0);
    o.check(secs < 10.0, f("runtime %.2f s < 10 s", secs));
  });

  run("AC2", "planner dominates Nash with beta = 0 on 50 instances", [](Outcome& o) {
    const auto t0 = Clock::now();
    Rng rng(202);
    bool weak = true, strict = true;
    int linked = 0;
    for (int rep = 0; rep < 50; ++rep) {
      const LayeredNetwork net = random_network(rng, 3, 12, 0.35);
      GameParameters p = random_stable_parameters(net, rng, 0.8, 2.0);
      p.beta = 0.0;
      const AgentAbilities a{random_vector(net.n_T(), rng), random_vector(net.n_S(), rng)};
      const EquilibriumResult plan = planner_optimum(a, p, net), nash = nash_equilibrium(a, p, net);
      for (Layer l : {Layer::T, Layer::S}) {
        const Vector& yp = l == Layer::T ? plan.y_T : plan.y_S;
        const Vector& yn = l == Layer::T ? nash.y_T : nash.y_S;
        const Matrix& g = net.within(l);
        for (Index i = 0; i < yp.size(); ++i) {
          weak = weak && yp(i) >= yn(i) - 1e-12;
          if (g.row(i).sum() > 0) {
            ++linked;
            strict = strict && yp(i) > yn(i);
          }
        }
      }
    }
    o.check(weak, "planner >= Nash elementwise");
    o.check(strict && linked > 0, "strict for every agent with at least one link (" + std::to_string(linked) + " agents)");
    const double secs = seconds_since(t0);
    o.check(secs < 10.0, f("runtime %.2f s < 10 s", secs));
  });

  run("AC3", "logit matches IRLS oracle and recovers tau", [](Outcome& o) {
    const auto t0 = Clock::now();
    Rng rng(303);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u;
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      const Index n = 30 + 5 * rep;
      DyadDataset d;
      d.features.resize(n, 1);
      d.label.resize(n);
      for (Index r = 0; r < n; ++r) {
        d.community.push_back(0);
        d.i.push_back(0);
        d.j.push_back(1);
        d.features(r, 0) = z(rng);
        d.label(r) = u(rng) < logistic(0.4 - 0.7 * d.features(r, 0)) ? 1.0 : 0.0;
      }
      d.label(0) = 1.0 - d.label(1);
      d.features(0, 0) = d.features(1, 0);  // overlap: a tie with opposite labels
      const LogitFit fit = fit_logit(d);
      Matrix x(n, 2);
      x.col(0).setOnes();
      x.col(1) = d.features.col(0);
      worst = std::max(worst, (fit.coefficients - irls(x, d.label)).cwiseAbs().maxCoeff());
    }
    o.check(worst <= 1e-6, f("max coefficient gap to IRLS %.3g <= 1e-6", worst));

    DgpConfig cfg;
    CounterRng rx(17, Stage::covariates_T), rl(17, Stage::links_T);
    const CommunityPartition part = CommunityPartition::uniform(230, 30);
    const Matrix x = draw_covariates(part.total(), cfg, rx);
    const auto w = dyadic_similarity(x, part);
    DyadDataset d;
    for (Index c = 0; c < part.count(); ++c) {
      const Matrix& wc = w[static_cast<std::size_t>(c)];
      const Matrix g = generate_within_links(wc, cfg.tau_T, Vector::Zero(30), rl);
      const DyadDataset one = build_dyads(g, CommunityPartition({30}), {wc});
      const Index at = d.rows();
      d.features.conservativeResize(at + one.rows(), 1);
      d.label.conservativeResize(at + one.rows());
      d.features.bottomRows(one.rows()) = one.features;
      d.label.tail(one.rows()) = one.label;
      for (std::size_t k = 0; k < one.i.size(); ++k) {
        d.community.push_back(c);
        d.i.push_back(one.i[k] + part.begin(c));
        d.j.push_back(one.j[k] + part.begin(c));
      }
    }
    const LogitFit fit = fit_logit(d);
    const Vector se = fit.standard_errors();
    const double z0 = (fit.coefficients(0) - 1.0) / se(0), z1 = (fit.coefficients(1) - 0.5) / se(1);
    o.check(std::abs(z0) <= 3 && std::abs(z1) <= 3,
            f("tau-hat = (%.4f, %.4f) on %.0f dyads, z = (%.2f", fit.coefficients(0), fit.coefficients(1),
              static_cast<double>(d.rows()), z0) +
                f(", %.2f) within 3 SE", z1));
    const double secs = seconds_since(t0);
    o.check(secs < 30.0, f("runtime %.2f s < 30 s", secs));
  });

  run("AC4", "within transform and 2SLS algebra", [](Outcome& o) {
    Rng rng(404);
    const CommunityPartition p({7, 3, 12, 1});
    const Matrix m = random_matrix(p.total(), 4, rng);
    const Matrix w = within_transform(m, p);
    o.check((within_transform(w, p) - w).cwiseAbs().maxCoeff() <= 1e-12, "J idempotent to 1e-12");
    Matrix constant(p.total(), 2);
    for (Index c = 0; c < p.count(); ++c) constant.middleRows(p.begin(c), p.size(c)).rowwise() = random_matrix(1, 2, rng).row(0);
    o.check(within_transform(constant, p).cwiseAbs().maxCoeff() <= 1e-12, "J annihilates community constants to 1e-12");
    Matrix jm = Matrix::Zero(p.total(), p.total());
    for (Index c = 0; c < p.count(); ++c)
      jm.block(p.begin(c), p.begin(c), p.size(c), p.size(c)) =
          Matrix::Identity(p.size(c), p.size(c)) - Matrix::Constant(p.size(c), p.size(c), 1.0 / p.size(c));
    o.check((jm - jm.transpose()).cwiseAbs().maxCoeff() <= 1e-12 && (w - jm * m).cwiseAbs().maxCoeff() <= 1e-12,
            "J symmetric and equal to the explicit matrix");

    double gap_ols = 0.0, gap_exact = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      const Matrix z = random_matrix(60, 4, rng);
      const Vector y = random_matrix(60, 1, rng).col(0);
      gap_ols = std::max(gap_ols, (two_sls(y, z, z).delta - ols(y, z)).cwiseAbs().maxCoeff());
      const Matrix h = random_matrix(60, 6, rng);
      Matrix zz = h.leftCols(3);
      zz.conservativeResize(60, 4);
      zz.col(3) = h * random_matrix(6, 1, rng).col(0);
      const Vector delta = random_matrix(4, 1, rng).col(0);
      gap_exact = std::max(gap_exact, (two_sls(zz * delta, zz, h).delta - delta).cwiseAbs().maxCoeff());
    }
    o.check(gap_ols <= 1e-10, f("2SLS with H = Z equals OLS, max gap %.3g <= 1e-10", gap_ols));
    o.check(gap_exact <= 1e-10, f("exact data recovered, max gap %.3g <= 1e-10", gap_exact));
  });

  // Shared Monte Carlo runs: AC5/AC9 at rho = 0, AC6/AC9 on the default rho grid.
  McReport null_report, weak_report, strong_report;
  bool mc_ok = true;
  std::string mc_error;
  const auto mc_t0 = Clock::now();
  try {
    null_report = run_experiment(default_config({Regime::weak}, {0.0}, 5005));
    weak_report = run_experiment(default_config({Regime::weak}, {0.4, 0.6, 0.8}, 6006));
    strong_report = run_experiment(default_config({Regime::strong}, {0.8}, 6006));
  } catch (const std::exception& e) {
    mc_ok = false;
    mc_error = e.what();
  }
  const double mc_secs = seconds_since(mc_t0);
  std::printf("Monte Carlo runs: %.1f s\n", mc_secs);

  run("AC5", "exogenous-network consistency at rho = 0 (500 reps)", [&](Outcome& o) {
    if (!mc_ok) throw StateError(mc_error);
    for (EstimatorMode m : {EstimatorMode::tsls, EstimatorMode::tsls_ec})
      for (const char* param : {"lambda_T", "lambda_S"}) {
        const double b = bias_of(null_report, Regime::weak, 0.0, m, param);
        o.check(std::abs(b) <= 0.02, std::string(mode_name(m)) + " " + param + f(": bias %+.4f, |bias| <= 0.02", b));
      }
  });

  run("AC6", "weak/strong regime bias pattern (500 reps)", [&](Outcome& o) {
    if (!mc_ok) throw StateError(mc_error);
    const std::vector<double> grid{0.4, 0.6, 0.8};
    for (const char* param : {"lambda_T", "lambda_S"}) {
      double prev = 0.0;
      for (double rho : grid) {
        const double b2 = bias_of(weak_report, Regime::weak, rho, EstimatorMode::tsls, param);
        const double be = bias_of(weak_report, Regime::weak, rho, EstimatorMode::tsls_ec, param);
        o.check(b2 < 0, std::string("(a) ") + param + f(" rho=%.1f: 2SLS bias %+.4f < 0", rho, b2));
        if (rho > grid.front())
          o.check(std::abs(b2) > std::abs(prev),
                  std::string("(a) ") + param + f(" rho=%.1f: |2SLS bias| %.4f > %.4f at previous rho", rho, std::abs(b2), std::abs(prev)));
        prev = b2;
        o.check(std::abs(be) <= 0.5 * std::abs(b2),
                std::string("(b) ") + param + f(" rho=%.1f: |EC bias| %.4f <= 0.5 x |2SLS bias| %.4f", rho, std::abs(be), std::abs(b2)));
      }
    }
    struct Band {
      Regime g;
      EstimatorMode m;
      const char* param;
      double lo, hi, ref;
    };
    const Band bands[] = {
        {Regime::weak, EstimatorMode::tsls, "lambda_T", -0.30, -0.13, -0.216},
        {Regime::weak, EstimatorMode::tsls_ec, "lambda_T", -0.12, 0.00, -0.057},
        {Regime::weak, EstimatorMode::tsls, "lambda_S", -0.26, -0.11, -0.188},
        {Regime::weak, EstimatorMode::tsls_ec, "lambda_S", -0.13, 0.00, -0.074},
        {Regime::strong, EstimatorMode::tsls, "lambda_T", -0.30, -0.10, -0.198},
        {Regime::strong, EstimatorMode::tsls_ec, "lambda_T", -0.08, 0.04, -0.020},
    };
    for (const Band& b : bands) {
      const McReport& r = b.g == Regime::weak ? weak_report : strong_report;
      const double v = bias_of(r, b.g, 0.8, b.m, b.param);
      o.check(v >= b.lo && v <= b.hi, std::string("(c) ") + std::string(regime_name(b.g)) + " " +
                                          std::string(mode_name(b.m)) + " " + b.param +
                                          f(" rho=0.8: bias %+.4f in [%.2f, %.2f] (ref %+.3f)", v, b.lo, b.hi, b.ref));
    }
    o.check(mc_secs < 45 * 60.0, f("Monte Carlo runtime %.0f s < 2700 s", mc_secs));
  });

  run("AC7", "metric identities", [&](Outcome& o) {
    if (!mc_ok) throw StateError(mc_error);
    double worst = 0.0;
    std::size_t cells = 0;
    for (const McReport* r : {&null_report, &weak_report, &strong_report})
      for (const McCell& c : r->cells) {
        const double n = c.n_ok;
        worst = std::max(worst, std::abs(c.rmse * c.rmse - (c.bias * c.bias + c.ese * c.ese * (n - 1) / n)));
        ++cells;
      }
    o.check(worst <= 1e-10, f("rmse^2 = bias^2 + ese^2 (n-1)/n over %.0f cells, max gap %.3g <= 1e-10",
                              static_cast<double>(cells), worst));
    const CellMetrics a = aggregate({0.4, 0.2}, 0.3);
    const CellMetrics b = aggregate({1.0, 2.0, 4.0}, 2.0);
    // Hand values: mean 7/3, bias 1/3, rmse sqrt(5/3), ese sqrt(7/3).
    const double gap = std::max({std::abs(a.bias), std::abs(a.rmse - 0.1), std::abs(a.ese - std::sqrt(0.02)),
                                 std::abs(b.bias - 1.0 / 3), std::abs(b.rmse - std::sqrt(5.0 / 3)),
                                 std::abs(b.ese - std::sqrt(7.0 / 3))});
    o.check(gap <= 1e-12, f("aggregate matches hand oracle, max gap %.3g <= 1e-12", gap));
  });

  run("AC8", "determinism across reruns and thread counts", [](Outcome& o) {
    DgpConfig cfg;
    cfg.seed = 88;
    const fs::path root = fs::temp_directory_path() / "netsem_acceptance_ac8";
    fs::remove_all(root);
    io::write_dataset(root / "a", simulate(cfg), nlohmann::json::object());
    io::write_dataset(root / "b", simulate(cfg), nlohmann::json::object());
    o.check(io::directory_hash(root / "a") == io::directory_hash(root / "b"), "simulate: identical dataset directories");

    const SimulatedDataset d = simulate(cfg);
    std::string first, second;
    for (std::string* out : {&first, &second})
      for (EstimatorMode m : {EstimatorMode::tsls, EstimatorMode::tsls_ec}) {
        const auto [t, s] = estimate_system(d, m);
        *out += io::estimates_csv_rows(t) + io::estimates_csv_rows(s) + io::estimate_json(t).dump() +
                io::estimate_json(s).dump();
      }
    o.check(first == second, "estimate_system: identical serialized results");

    McConfig mc;
    mc.base.n_communities_T = mc.base.n_communities_S = 4;
    mc.base.community_size_T = mc.base.community_size_S = 12;
    mc.regimes = {Regime::weak, Regime::strong};
    mc.replications = 10;
    mc.master_seed = 8;
    mc.jobs = 1;
    const McReport one = run_experiment(mc);
    mc.jobs = 8;
    const McReport eight = run_experiment(mc);
    o.check(io::report_csv(one) == io::report_csv(eight) && io::report_json(one).dump() == io::report_json(eight).dump(),
            "run_experiment: identical reports for jobs 1 and 8");

    const std::string cli = NETSEM_CLI_PATH;
    const fs::path cfg_file = fs::path(NETSEM_DATA_DIR) / "configs/mc_smoke.json";
    int rc = 0;
    for (const char* jobs : {"1", "8"})
      rc |= std::system((cli + " montecarlo --config '" + cfg_file.string() + "' --jobs " + jobs + " --out '" +
                         (root / (std::string("mc") + jobs)).string() + "' > /dev/null")
                            .c_str());
    o.check(rc == 0 && io::read_text(root / "mc1/report.csv") == io::read_text(root / "mc8/report.csv") &&
                io::read_text(root / "mc1/report.json") == io::read_text(root / "mc8/report.json"),
            "CLI montecarlo: identical report files for --jobs 1 and --jobs 8");
    fs::remove_all(root);
  });

  run("AC9", "OIR diagnostics", [&](Outcome& o) {
    if (!mc_ok) throw StateError(mc_error);
    for (int eq : {0, 1}) {
      const std::vector<double> p = oir_pvalues(null_report, 0, 0, 0, eq);
      const double rate =
          static_cast<double>(std::count_if(p.begin(), p.end(), [](double v) { return v < 0.05; })) / p.size();
      o.check(rate >= 0.02 && rate <= 0.09, std::string(eq == 0 ? "T" : "S") +
                                                f(" equation, 2SLS at rho=0: rejection rate %.3f in [0.02, 0.09] over %.0f reps",
                                                  rate, static_cast<double>(p.size())));
    }
    for (int eq : {0, 1}) {
      const double m2 = median(oir_pvalues(weak_report, 0, 2, 0, eq));
      const double me = median(oir_pvalues(weak_report, 0, 2, 1, eq));
      o.check(m2 < me, std::string(eq == 0 ? "T" : "S") +
                           f(" equation at rho=0.8: median OIR p 2SLS %.3f < 2SLS-EC %.3f", m2, me));
    }
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
