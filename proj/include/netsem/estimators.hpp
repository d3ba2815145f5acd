#pragma once

// Within transformation, Neumann-chain instruments, 2SLS / 2SLS-EC with
// heteroskedasticity-robust inference, Hansen J and Cragg-Donald.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "netsem/dgp.hpp"
#include "netsem/linkform.hpp"
#include "netsem/netcore.hpp"

namespace netsem {

enum class EstimatorMode { tsls, tsls_ec };

inline std::string_view mode_name(EstimatorMode m) noexcept {
  return m == EstimatorMode::tsls ? "2SLS" : "2SLS-EC";
}

/// Accepts "2sls", "2SLS", "2sls-ec", "2SLS-EC", "ec".
inline EstimatorMode parse_mode(std::string_view s) {
  std::string t(s);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "2sls") return EstimatorMode::tsls;
  if (t == "2sls-ec" || t == "2sls_ec" || t == "ec") return EstimatorMode::tsls_ec;
  throw DomainError("unknown estimator mode '" + std::string(s) + "'");
}

/// Subtract each community's mean from every row belonging to it.
inline Matrix within_transform(const Matrix& v, const CommunityPartition& part) {
  if (v.rows() != part.total())
    throw DomainError("within_transform: " + std::to_string(v.rows()) + " rows for a partition of " +
                      std::to_string(part.total()));
  Matrix out = v;
  for (Index c = 0; c < part.count(); ++c) {
    auto block = out.middleRows(part.begin(c), part.size(c));
    const Eigen::RowVectorXd mean = block.colwise().mean();
    block.rowwise() -= mean;
  }
  return out;
}

inline Vector within_transform(const Vector& v, const CommunityPartition& part) {
  return within_transform(Matrix(v), part).col(0);
}

// ---------------------------------------------------------------------------
// Instruments

enum class Block { G_T, G_S, G_TS, G_ST };

inline std::string_view block_name(Block b) noexcept {
  switch (b) {
    case Block::G_T: return "G_T";
    case Block::G_S: return "G_S";
    case Block::G_TS: return "G_TS";
    case Block::G_ST: return "G_ST";
  }
  return "?";
}

inline Layer block_rows(Block b) noexcept {
  return (b == Block::G_T || b == Block::G_TS) ? Layer::T : Layer::S;
}
inline Layer block_cols(Block b) noexcept {
  return (b == Block::G_T || b == Block::G_ST) ? Layer::T : Layer::S;
}

/// A product b_1 b_2 ... b_k applied to X_source.
struct Chain {
  std::vector<Block> blocks;
  Layer source = Layer::T;

  std::string descriptor() const {
    std::string s;
    for (Block b : blocks) {
      s += block_name(b);
      s += '*';
    }
    s += source == Layer::T ? "X_T" : "X_S";
    return s;
  }
  bool operator==(const Chain&) const = default;
};

/// Dimension-consistent chains of length <= depth landing in `target`,
/// ordered by length, then source layer (T first), then lexicographically
/// in the block order G_T < G_S < G_TS < G_ST.
inline std::vector<Chain> enumerate_chains(Layer target, int depth) {
  if (depth < 1) throw DomainError("instrument depth must be >= 1");
  std::vector<Chain> out;
  for (int len = 0; len <= depth; ++len) {
    for (Layer src : {Layer::T, Layer::S}) {
      // Odometer over block sequences of this length.
      std::vector<int> digit(static_cast<std::size_t>(len), 0);
      while (true) {
        Chain ch;
        ch.source = src;
        for (int d : digit) ch.blocks.push_back(static_cast<Block>(d));
        bool ok = true;
        Layer at = target;
        for (Block b : ch.blocks) {
          if (block_rows(b) != at) {
            ok = false;
            break;
          }
          at = block_cols(b);
        }
        if (ok && at == src) out.push_back(std::move(ch));
        int pos = len - 1;
        while (pos >= 0 && ++digit[static_cast<std::size_t>(pos)] == 4) digit[static_cast<std::size_t>(pos--)] = 0;
        if (pos < 0) break;
      }
    }
  }
  return out;
}

/// Adjacency blocks the instruments are built from.
struct InstrumentBlocks {
  Matrix g_T, g_S, g_TS, g_ST;

  const Matrix& get(Block b) const noexcept {
    switch (b) {
      case Block::G_T: return g_T;
      case Block::G_S: return g_S;
      case Block::G_TS: return g_TS;
      case Block::G_ST: return g_ST;
    }
    return g_T;
  }
};

struct InstrumentSet {
  Matrix h_T, h_S;
  /// One name per column, e.g. "G_T*G_TS*X_S[1]" (covariate index in brackets).
  std::vector<std::string> columns_T, columns_S;
  std::vector<Chain> chains_T, chains_S;
  int depth = 0;
};

namespace detail {

inline Matrix apply_chain(const Chain& ch, const InstrumentBlocks& g, const Matrix& x_T,
                          const Matrix& x_S, std::map<std::string, Matrix>& memo) {
  const std::string key = ch.descriptor();
  if (auto it = memo.find(key); it != memo.end()) return it->second;
  Matrix v;
  if (ch.blocks.empty()) {
    v = ch.source == Layer::T ? x_T : x_S;
  } else {
    Chain rest{std::vector<Block>(ch.blocks.begin() + 1, ch.blocks.end()), ch.source};
    v = g.get(ch.blocks.front()) * apply_chain(rest, g, x_T, x_S, memo);
  }
  memo.emplace(key, v);
  return v;
}

inline void fill_layer(Layer target, const InstrumentBlocks& g, const Matrix& x_T, const Matrix& x_S,
                       int depth, const std::vector<std::string>& subset, Matrix& h,
                       std::vector<std::string>& names, std::vector<Chain>& chains,
                       std::map<std::string, Matrix>& memo) {
  std::set<std::string> seen;
  std::vector<Matrix> parts;
  for (Chain& ch : enumerate_chains(target, depth)) {
    const std::string d = ch.descriptor();
    if (!seen.insert(d).second) continue;
    if (!subset.empty() && std::find(subset.begin(), subset.end(), d) == subset.end()) continue;
    Matrix v = apply_chain(ch, g, x_T, x_S, memo);
    for (Index c = 0; c < v.cols(); ++c) names.push_back(d + "[" + std::to_string(c + 1) + "]");
    parts.push_back(std::move(v));
    chains.push_back(std::move(ch));
  }
  if (parts.empty()) throw DomainError("instrument subset selects no chain for layer " +
                                       std::string(layer_name(target)));
  Index cols = 0;
  for (const Matrix& p : parts) cols += p.cols();
  h.resize(parts.front().rows(), cols);
  Index at = 0;
  for (const Matrix& p : parts) {
    h.middleCols(at, p.cols()) = p;
    at += p.cols();
  }
}

}  // namespace detail

/// All chains of depth <= K applied to the covariates, within-transformed.
/// `subset`, when non-empty, lists the chain descriptors to keep.
inline InstrumentSet build_instruments(const InstrumentBlocks& g, const Matrix& x_T,
                                       const Matrix& x_S, int depth,
                                       const CommunityPartition& part_T,
                                       const CommunityPartition& part_S,
                                       const std::vector<std::string>& subset = {}) {
  if (depth < 1) throw DomainError("instrument depth must be >= 1");
  if (x_T.rows() != part_T.total() || x_S.rows() != part_S.total())
    throw DomainError("covariate rows do not match the partitions");
  InstrumentSet s;
  s.depth = depth;
  std::map<std::string, Matrix> memo;
  detail::fill_layer(Layer::T, g, x_T, x_S, depth, subset, s.h_T, s.columns_T, s.chains_T, memo);
  detail::fill_layer(Layer::S, g, x_T, x_S, depth, subset, s.h_S, s.columns_S, s.chains_S, memo);
  s.h_T = within_transform(s.h_T, part_T);
  s.h_S = within_transform(s.h_S, part_S);
  if (!s.h_T.allFinite() || !s.h_S.allFinite()) throw NumericError("instrument columns are not finite");
  return s;
}

inline InstrumentSet build_instruments(const LayeredNetwork& net, const Matrix& x_T,
                                       const Matrix& x_S, int depth) {
  return build_instruments(InstrumentBlocks{net.g_T(), net.g_S(), net.g_TS(), net.g_ST()}, x_T, x_S,
                           depth, net.partition_T(), net.partition_S());
}

/// Columns of h kept by a rank-revealing QR (relative pivot tolerance),
/// in their original order.
struct ColumnSelection {
  std::vector<Index> kept;
  std::vector<Index> dropped;
};

inline ColumnSelection independent_columns(const Matrix& h, double tolerance = 1e-10) {
  Eigen::ColPivHouseholderQR<Matrix> qr(h);
  qr.setThreshold(tolerance);
  const Index r = qr.rank();
  ColumnSelection sel;
  std::vector<char> keep(static_cast<std::size_t>(h.cols()), 0);
  for (Index k = 0; k < r; ++k) keep[static_cast<std::size_t>(qr.colsPermutation().indices()(k))] = 1;
  for (Index c = 0; c < h.cols(); ++c)
    (keep[static_cast<std::size_t>(c)] ? sel.kept : sel.dropped).push_back(c);
  return sel;
}

inline Matrix select_columns(const Matrix& m, const std::vector<Index>& cols) {
  Matrix out(m.rows(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Index>(k)) = m.col(cols[k]);
  return out;
}

// ---------------------------------------------------------------------------
// 2SLS core

struct TwoSlsFit {
  Vector delta;
  Vector residuals;
};

namespace detail {

inline Matrix project_onto(const Matrix& h, const Matrix& z) {
  Eigen::HouseholderQR<Matrix> qr(h);
  const Matrix q = qr.householderQ() * Matrix::Identity(h.rows(), h.cols());
  return q * (q.transpose() * z);
}

inline void require_full_rank(const Matrix& m, std::string_view what) {
  Eigen::ColPivHouseholderQR<Matrix> qr(m);
  qr.setThreshold(1e-10);
  if (qr.rank() < m.cols())
    throw NumericError("singular " + std::string(what) + ": rank " + std::to_string(qr.rank()) +
                       " of " + std::to_string(m.cols()) + " columns");
}

}  // namespace detail

/// delta = (Z' P_H Z)^{-1} Z' P_H y.
inline TwoSlsFit two_sls(const Vector& y, const Matrix& z, const Matrix& h) {
  if (y.size() != z.rows() || z.rows() != h.rows()) throw DomainError("two_sls: row counts differ");
  if (h.cols() < z.cols())
    throw DomainError("two_sls: " + std::to_string(h.cols()) + " instruments for " +
                      std::to_string(z.cols()) + " regressors");
  detail::require_full_rank(h, "instrument matrix H'H");
  const Matrix pz = detail::project_onto(h, z);
  detail::require_full_rank(pz, "Z'P_H Z");
  const Matrix bread = pz.transpose() * z;
  TwoSlsFit fit;
  fit.delta = bread.partialPivLu().solve(pz.transpose() * y);
  fit.residuals = y - z * fit.delta;
  return fit;
}

/// Sandwich with meat H' diag(e^2) H:
/// (A H'Z)^{-1} A S A' (Z'H A')^{-1},  A = Z'H (H'H)^{-1}.
inline Matrix robust_vcov(const Matrix& z, const Matrix& h, const Vector& e) {
  const Matrix hh = h.transpose() * h;
  Eigen::LDLT<Matrix> hh_ldlt(hh);
  if (hh_ldlt.info() != Eigen::Success) throw NumericError("robust_vcov: H'H is singular");
  const Matrix a = hh_ldlt.solve(h.transpose() * z).transpose();
  const Matrix bread = a * h.transpose() * z;
  Eigen::FullPivLU<Matrix> lu(bread);
  if (!lu.isInvertible()) throw NumericError("robust_vcov: bread matrix Z'P_H Z is singular");
  const Matrix bread_inv = lu.inverse();
  const Matrix meat = h.transpose() * e.array().square().matrix().asDiagonal() * h;
  const Matrix v = bread_inv * (a * meat * a.transpose()) * bread_inv.transpose();
  return 0.5 * (v + v.transpose());
}

/// sigma^2 (Z'P_H Z)^{-1} with sigma^2 = e'e / n.
inline Matrix classical_vcov(const Matrix& z, const Matrix& h, const Vector& e) {
  const Matrix pz = detail::project_onto(h, z);
  return (e.squaredNorm() / static_cast<double>(e.size())) *
         (pz.transpose() * z).inverse();
}

struct OirResult {
  double statistic = 0.0;
  int df = 0;
  double pvalue = 1.0;
};

inline double chi2_upper(double x, double df) {
  if (!(x > 0.0)) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), x));
}

/// Hansen J: g = H'e, J = g' (H' diag(e^2) H)^{-1} g, df = cols(H) - cols(Z).
inline OirResult oir_test(const Matrix& z, const Matrix& h, const Vector& e) {
  const Index df = h.cols() - z.cols();
  if (df < 1)
    throw DomainError("OIR test needs more instruments than regressors (df = " + std::to_string(df) + ")");
  const Vector g = h.transpose() * e;
  const Matrix s = h.transpose() * e.array().square().matrix().asDiagonal() * h;
  OirResult r;
  r.df = static_cast<int>(df);
  if (g.cwiseAbs().maxCoeff() == 0.0) return r;
  const Eigen::CompleteOrthogonalDecomposition<Matrix> cod(s);
  r.statistic = std::max(0.0, g.dot(cod.solve(g)));
  r.pvalue = chi2_upper(r.statistic, static_cast<double>(df));
  return r;
}

struct CraggDonald {
  double F = 0.0;
  bool capped = false;
};

inline constexpr double cragg_donald_cap = 1e6;

/// Minimum-eigenvalue first-stage F for the endogenous columns of z, with the
/// remaining (exogenous) columns of z partialled out of both sides.
/// `absorbed_dof` counts parameters removed before estimation (fixed effects).
inline CraggDonald cragg_donald(const Matrix& z, const Matrix& h, const std::vector<Index>& endogenous,
                                Index absorbed_dof = 0) {
  if (endogenous.empty()) throw DomainError("cragg_donald: no endogenous columns");
  std::vector<Index> exog;
  for (Index c = 0; c < z.cols(); ++c)
    if (std::find(endogenous.begin(), endogenous.end(), c) == endogenous.end()) exog.push_back(c);
  Matrix y = select_columns(z, endogenous);
  Matrix hx = h;
  if (!exog.empty()) {
    const Matrix x1 = select_columns(z, exog);
    y -= detail::project_onto(x1, y);
    hx -= detail::project_onto(x1, hx);
  }
  // Instruments left after partialling are the excluded ones.
  const ColumnSelection sel = independent_columns(hx, 1e-8);
  const Matrix h2 = select_columns(hx, sel.kept);
  const Index k2 = h2.cols();
  if (k2 < static_cast<Index>(endogenous.size()))
    throw NumericError("cragg_donald: fewer excluded instruments than endogenous regressors");
  const Matrix py = detail::project_onto(h2, y);
  const Index dof = y.rows() - static_cast<Index>(exog.size()) - k2 - absorbed_dof;
  if (dof < 1) throw NumericError("cragg_donald: no residual degrees of freedom");
  const Matrix resid = y - py;
  const Matrix sigma = resid.transpose() * resid / static_cast<double>(dof);
  const Matrix explained = py.transpose() * py / static_cast<double>(k2);

  CraggDonald out;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
  if (es.eigenvalues().minCoeff() <= 1e-14 * std::max(1.0, es.eigenvalues().maxCoeff())) {
    out.F = cragg_donald_cap;
    out.capped = true;
    return out;
  }
  const Matrix inv_sqrt = es.operatorInverseSqrt();
  Eigen::SelfAdjointEigenSolver<Matrix> concentration(inv_sqrt * explained * inv_sqrt);
  out.F = std::max(0.0, concentration.eigenvalues().minCoeff());
  if (!(out.F < cragg_donald_cap)) {
    out.F = cragg_donald_cap;
    out.capped = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// System estimation

/// Outcomes, covariates and networks of one dataset, simulated or loaded.
struct EstimationData {
  LayeredNetwork net;
  Matrix x_T, x_S;
  Vector y_T, y_S;

  static EstimationData from(const SimulatedDataset& d) {
    return EstimationData{d.net, d.features_T, d.features_S, d.y_T, d.y_S};
  }
};

struct EstimateOptions {
  int depth = 3;
  /// Chain descriptors to keep, e.g. "G_T*X_T"; empty keeps all.
  std::vector<std::string> subset;
  Normalization normalization = Normalization::max_sum;
  /// Covariate column that drives dyadic similarity in the logit.
  Index similarity_column = 1;
  bool per_community_logit = false;
  /// Multiplies the fitted logit coefficients before prediction (stress testing).
  double logit_coefficient_scale = 1.0;
};

struct EstimateResult {
  EstimatorMode mode = EstimatorMode::tsls;
  Layer equation = Layer::T;
  std::vector<std::string> parameter_names;
  Vector delta;
  Vector robust_se;
  Matrix robust_covariance;
  Vector residuals;
  double oir_stat = std::numeric_limits<double>::quiet_NaN();
  int oir_df = 0;
  double oir_pvalue = std::numeric_limits<double>::quiet_NaN();
  double cragg_donald_F = 0.0;
  bool cragg_donald_capped = false;
  Index instrument_count = 0;
  Index n = 0;
  std::vector<std::string> instruments;
  std::vector<std::string> dropped_instruments;
  std::optional<LogitFit> logit;
};

inline std::vector<std::string> parameter_names(Layer eq) {
  if (eq == Layer::T) return {"lambda_T", "lambda_TS", "gamma_T1", "gamma_T2"};
  return {"lambda_S", "lambda_ST", "gamma_S1", "gamma_S2"};
}

/// Regressors [G_own y_own, G_cross y_other, X_own] before the within step.
inline Matrix build_regressors(const Matrix& g_own, const Matrix& g_cross, const Vector& y_own,
                               const Vector& y_other, const Matrix& x_own) {
  Matrix z(y_own.size(), 2 + x_own.cols());
  z.col(0) = g_own * y_own;
  z.col(1) = g_cross * y_other;
  z.rightCols(x_own.cols()) = x_own;
  return z;
}

namespace detail {

inline Matrix predicted_layer(const Matrix& g, const Matrix& x, const CommunityPartition& part,
                              const EstimateOptions& opt, std::optional<LogitFit>& fit_out) {
  const std::vector<Matrix> w = dyadic_similarity(x, part, opt.similarity_column);
  const DyadDataset dyads = build_dyads(g, part, w);
  Matrix g_hat;
  if (opt.per_community_logit) {
    std::vector<LogitFit> fits = fit_logit_by_community(dyads, part.count());
    for (LogitFit& f : fits) f.coefficients *= opt.logit_coefficient_scale;
    g_hat = predict_adjacency(fits, w, part);
  } else {
    LogitFit fit = fit_logit(dyads);
    fit_out = fit;
    fit.coefficients *= opt.logit_coefficient_scale;
    g_hat = predict_adjacency(fit, w, part);
  }
  return normalize_predicted(g_hat);
}

inline EstimateResult estimate_equation(Layer eq, EstimatorMode mode, const Vector& y,
                                        const Matrix& z, const Matrix& h,
                                        const std::vector<std::string>& names,
                                        const CommunityPartition& part) {
  EstimateResult r;
  r.mode = mode;
  r.equation = eq;
  r.parameter_names = parameter_names(eq);
  r.n = y.size();
  const Vector yw = within_transform(y, part);
  const Matrix zw = within_transform(z, part);
  const ColumnSelection sel = independent_columns(h);
  const Matrix hk = select_columns(h, sel.kept);
  for (Index c : sel.kept) r.instruments.push_back(names[static_cast<std::size_t>(c)]);
  for (Index c : sel.dropped) r.dropped_instruments.push_back(names[static_cast<std::size_t>(c)]);
  r.instrument_count = hk.cols();

  const TwoSlsFit fit = two_sls(yw, zw, hk);
  r.delta = fit.delta;
  r.residuals = fit.residuals;
  r.robust_covariance = robust_vcov(zw, hk, fit.residuals);
  r.robust_se = r.robust_covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  if (hk.cols() > zw.cols()) {
    const OirResult oir = oir_test(zw, hk, fit.residuals);
    r.oir_stat = oir.statistic;
    r.oir_df = oir.df;
    r.oir_pvalue = oir.pvalue;
  }
  const CraggDonald cd = cragg_donald(zw, hk, {0, 1}, part.count());
  r.cragg_donald_F = cd.F;
  r.cragg_donald_capped = cd.capped;
  return r;
}

}  // namespace detail

/// Equation-by-equation estimation of the T and S equations.
inline std::pair<EstimateResult, EstimateResult> estimate_system(const EstimationData& data,
                                                                 EstimatorMode mode,
                                                                 const EstimateOptions& opt = {}) {
  const LayeredNetwork& net = data.net;
  const CommunityPartition& pT = net.partition_T();
  const CommunityPartition& pS = net.partition_S();
  if (data.y_T.size() != pT.total() || data.y_S.size() != pS.total() ||
      data.x_T.rows() != pT.total() || data.x_S.rows() != pS.total())
    throw DomainError("estimate_system: dataset dimensions do not match the networks");

  const Matrix gT = normalize(net.g_T(), opt.normalization);
  const Matrix gS = normalize(net.g_S(), opt.normalization);
  const Matrix z_T = build_regressors(gT, net.g_TS(), data.y_T, data.y_S, data.x_T);
  const Matrix z_S = build_regressors(gS, net.g_ST(), data.y_S, data.y_T, data.x_S);

  InstrumentBlocks blocks;
  std::optional<LogitFit> fit_T, fit_S;
  if (mode == EstimatorMode::tsls) {
    blocks = InstrumentBlocks{gT, gS, net.g_TS(), net.g_ST()};
  } else {
    blocks = InstrumentBlocks{detail::predicted_layer(net.g_T(), data.x_T, pT, opt, fit_T),
                              detail::predicted_layer(net.g_S(), data.x_S, pS, opt, fit_S),
                              net.g_TS(), net.g_ST()};
  }
  const InstrumentSet iv = build_instruments(blocks, data.x_T, data.x_S, opt.depth, pT, pS, opt.subset);

  EstimateResult r_T = detail::estimate_equation(Layer::T, mode, data.y_T, z_T, iv.h_T, iv.columns_T, pT);
  EstimateResult r_S = detail::estimate_equation(Layer::S, mode, data.y_S, z_S, iv.h_S, iv.columns_S, pS);
  r_T.logit = std::move(fit_T);
  r_S.logit = std::move(fit_S);
  return {std::move(r_T), std::move(r_S)};
}

inline std::pair<EstimateResult, EstimateResult> estimate_system(const SimulatedDataset& d,
                                                                 EstimatorMode mode,
                                                                 const EstimateOptions& opt = {}) {
  return estimate_system(EstimationData::from(d), mode, opt);
}

}  // namespace netsem
