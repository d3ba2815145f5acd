#pragma once

// Simulation of the two-layer econometric network model with endogenous
// link formation.
//
// Per layer and community: covariates X = [Uniform(lo, hi), Normal(0, sd)],
// a standard-normal community fixed effect, bivariate-normal (nu, u) with
// correlation rho, heteroskedastic errors eps = nu * kappa, and links drawn
// from logistic(tau0 + tau1 w_ij + u_i + u_j) where
// w_ij = 2 - (x_i - x_j)^2 on the similarity column. Cross links put at most
// one link in each row of G_TS (G_ST is its transpose). Outcomes solve
//   y = G(lambda) y + L mu + X gamma + eps
// with the within-layer blocks normalized first.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "netsem/netcore.hpp"
#include "netsem/rng.hpp"

namespace netsem {

struct DgpConfig {
  Index n_communities_T = 10;
  Index n_communities_S = 10;
  Index community_size_T = 30;
  Index community_size_S = 30;
  double lambda_T = 0.3;
  double lambda_S = 0.2;
  double lambda_TS = 0.1;
  double lambda_ST = 0.1;
  std::array<double, 2> gamma_T{1.0, 0.5};
  std::array<double, 2> gamma_S{1.0, 0.5};
  std::array<double, 2> tau_T{1.0, 0.5};
  std::array<double, 2> tau_S{1.0, 0.5};
  double rho = 0.8;
  std::vector<double> kappa_levels{1.0, std::sqrt(2.0), std::sqrt(3.0)};
  std::uint64_t seed = 0;
  Normalization normalization = Normalization::max_sum;
  /// Covariate column 2 is Normal(0, covariate_sd).
  double covariate_sd = 0.5;
  double uniform_low = 3.0;
  double uniform_high = 7.0;
  /// Covariate column (0-based) that drives dyadic similarity.
  Index similarity_column = 1;
  /// Chance that a row of G_TS receives its single cross link.
  double cross_link_probability = 0.5;

  CommunityPartition partition_T() const {
    return CommunityPartition::uniform(n_communities_T, community_size_T);
  }
  CommunityPartition partition_S() const {
    return CommunityPartition::uniform(n_communities_S, community_size_S);
  }
  GameParameters parameters() const {
    return GameParameters{lambda_T, lambda_S, 0.0, lambda_TS, lambda_ST};
  }

  void validate() const {
    if (n_communities_T < 1 || n_communities_S < 1 || community_size_T < 1 ||
        community_size_S < 1)
      throw DomainError("community counts and sizes must be >= 1");
    parameters().validate(ParameterMode::econometric);
    if (!(std::abs(rho) <= 1.0)) throw DomainError("rho must lie in [-1, 1]");
    if (kappa_levels.empty()) throw DomainError("kappa_levels must not be empty");
    for (double k : kappa_levels)
      if (!(k > 0.0) || !std::isfinite(k)) throw DomainError("kappa levels must be positive");
    if (!(covariate_sd > 0.0)) throw DomainError("covariate_sd must be positive");
    if (!(uniform_high > uniform_low)) throw DomainError("uniform bounds are inverted");
    if (similarity_column < 0 || similarity_column > 1)
      throw DomainError("similarity_column must be 0 or 1");
    if (!(cross_link_probability >= 0.0 && cross_link_probability <= 1.0))
      throw DomainError("cross_link_probability must lie in [0, 1]");
  }
};

struct TrueParameters {
  GameParameters lambdas;
  std::array<double, 2> gamma_T{};
  std::array<double, 2> gamma_S{};
};

struct SimulatedDataset {
  DgpConfig config;
  LayeredNetwork net;
  Matrix features_T, features_S;
  std::vector<Matrix> similarity_T, similarity_S;
  /// One fixed effect per community.
  Vector mu_T, mu_S;
  Vector nu_T, nu_S, u_T, u_S;
  Vector kappa_T, kappa_S;
  Vector eps_T, eps_S;
  Vector y_T, y_S;
  TrueParameters truth;
  /// Max-norm of y - (G(lambda) y + L mu + X gamma + eps).
  double structural_residual = 0.0;
  /// 1 - spectral radius of G(lambda).
  double spectral_margin = 0.0;
};

// ---------------------------------------------------------------------------
// Draws

/// n x 2 covariates: Uniform(lo, hi) and Normal(0, covariate_sd).
inline Matrix draw_covariates(Index n, const DgpConfig& cfg, CounterRng& rng) {
  Matrix x(n, 2);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform(cfg.uniform_low, cfg.uniform_high);
    x(i, 1) = rng.normal(0.0, cfg.covariate_sd);
  }
  return x;
}

/// One standard-normal effect per community.
inline Vector draw_fixed_effects(const CommunityPartition& part, CounterRng& rng) {
  Vector mu(part.count());
  for (Index c = 0; c < part.count(); ++c) mu(c) = rng.normal();
  return mu;
}

/// Community effects repeated for every member (L mu).
inline Vector broadcast(const Vector& per_community, const CommunityPartition& part) {
  if (per_community.size() != part.count())
    throw DomainError("one value per community expected");
  Vector out(part.total());
  for (Index c = 0; c < part.count(); ++c)
    out.segment(part.begin(c), part.size(c)).setConstant(per_community(c));
  return out;
}

struct Heterogeneity {
  Vector nu;
  Vector u;
};

/// (nu_i, u_i) bivariate standard normal with correlation rho.
inline Heterogeneity draw_heterogeneity(Index n, double rho, CounterRng& rng) {
  if (!(std::abs(rho) <= 1.0)) throw DomainError("rho must lie in [-1, 1]");
  Heterogeneity h{Vector(n), Vector(n)};
  const double c = std::sqrt(1.0 - rho * rho);
  for (Index i = 0; i < n; ++i) {
    const double a = rng.normal();
    const double b = rng.normal();
    h.nu(i) = a;
    h.u(i) = rho * a + c * b;
  }
  return h;
}

/// w_ij = 2 - (x_i - x_j)^2 for one community.
inline Matrix similarity_block(const Vector& x) {
  const Index n = x.size();
  Matrix w(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) {
      const double d = x(i) - x(j);
      w(i, j) = 2.0 - d * d;
    }
  return w;
}

/// Per-community similarity matrices built from one covariate column.
inline std::vector<Matrix> dyadic_similarity(const Matrix& features, const CommunityPartition& part,
                                             Index column = 1) {
  if (features.rows() != part.total()) throw DomainError("features do not match the partition");
  if (column < 0 || column >= features.cols()) throw DomainError("similarity column out of range");
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(part.count()));
  for (Index c = 0; c < part.count(); ++c)
    out.push_back(similarity_block(features.col(column).segment(part.begin(c), part.size(c))));
  return out;
}

/// Symmetric binary links for one community: each unordered pair i < j is
/// linked with probability logistic(tau0 + tau1 w_ij + u_i + u_j).
inline Matrix generate_within_links(const Matrix& similarity, const std::array<double, 2>& tau,
                                    const Vector& u, CounterRng& rng) {
  const Index n = similarity.rows();
  if (similarity.cols() != n || u.size() != n)
    throw DomainError("similarity and heterogeneity sizes disagree");
  Matrix g = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const double p = logistic(tau[0] + tau[1] * similarity(i, j) + u(i) + u(j));
      if (rng.uniform() < p) g(i, j) = g(j, i) = 1.0;
    }
  return g;
}

/// Each row of G_TS independently gets, with probability `probability`, one
/// link to a uniformly chosen science agent of the same community.
inline std::pair<Matrix, Matrix> generate_cross_links(const CommunityPartition& pT,
                                                      const CommunityPartition& pS,
                                                      double probability, CounterRng& rng) {
  if (pT.count() != pS.count())
    throw DomainError("cross links need the same number of communities in both layers");
  Matrix g_TS = Matrix::Zero(pT.total(), pS.total());
  for (Index c = 0; c < pT.count(); ++c)
    for (Index i = pT.begin(c); i < pT.begin(c) + pT.size(c); ++i) {
      if (rng.uniform() >= probability) continue;
      const Index j = pS.begin(c) + static_cast<Index>(rng.below(static_cast<std::uint64_t>(pS.size(c))));
      g_TS(i, j) = 1.0;
    }
  Matrix g_ST = g_TS.transpose();
  return {std::move(g_TS), std::move(g_ST)};
}

/// kappa for each agent: ascending levels cycled by within-community index.
inline Vector assign_kappa(const CommunityPartition& part, std::vector<double> levels) {
  if (levels.empty()) throw DomainError("kappa_levels must not be empty");
  std::sort(levels.begin(), levels.end());
  Vector k(part.total());
  const auto L = static_cast<Index>(levels.size());
  for (Index c = 0; c < part.count(); ++c)
    for (Index l = 0; l < part.size(c); ++l)
      k(part.begin(c) + l) = levels[static_cast<std::size_t>(l % L)];
  return k;
}

/// eps_i = nu_i * kappa_i.
inline Vector compose_errors(const Vector& nu, const CommunityPartition& part,
                             const std::vector<double>& kappa_levels) {
  if (nu.size() != part.total()) throw DomainError("nu does not match the partition");
  return nu.cwiseProduct(assign_kappa(part, kappa_levels));
}

// ---------------------------------------------------------------------------
// Outcomes

struct OutcomeSolution {
  Vector y_T, y_S;
  double structural_residual = 0.0;
  double spectral_margin = 0.0;
};

/// Reduced-form solve y = (I - G(lambda))^{-1} (L mu + X gamma + eps).
inline OutcomeSolution solve_outcomes(const LayeredNetwork& net, const GameParameters& lambdas,
                                      Normalization normalization, const Vector& exog_T,
                                      const Vector& exog_S) {
  const Matrix A_T = lambdas.lambda_T * normalize(net.g_T(), normalization);
  const Matrix A_S = lambdas.lambda_S * normalize(net.g_S(), normalization);
  const Matrix C_TS = lambdas.lambda_TS * net.g_TS();
  const Matrix C_ST = lambdas.lambda_ST * net.g_ST();
  TwoLayerOperator op{A_T, C_TS, C_ST, A_S, net.partition_T(), net.partition_S()};
  OutcomeSolution out;
  out.spectral_margin = 1.0 - op.radius();
  if (!(out.spectral_margin > 0.0))
    throw NumericError("outcome system unstable: spectral radius of G(lambda) is " +
                       std::to_string(1.0 - out.spectral_margin) + " (margin " +
                       std::to_string(out.spectral_margin) + ")");
  auto [y_T, y_S] = op.solve_identity_minus(exog_T, exog_S);
  auto [gT, gS] = op.apply(y_T, y_S);
  out.structural_residual = std::max((y_T - gT - exog_T).cwiseAbs().maxCoeff(),
                                     (y_S - gS - exog_S).cwiseAbs().maxCoeff());
  out.y_T = std::move(y_T);
  out.y_S = std::move(y_S);
  return out;
}

inline Vector linear_index(const Matrix& x, const std::array<double, 2>& gamma) {
  return x.col(0) * gamma[0] + x.col(1) * gamma[1];
}

/// One full draw. Every stage reads its own stream derived from cfg.seed.
inline SimulatedDataset simulate(const DgpConfig& cfg) {
  cfg.validate();
  const CommunityPartition pT = cfg.partition_T(), pS = cfg.partition_S();
  const Index nT = pT.total(), nS = pS.total();

  CounterRng rng_xT(cfg.seed, Stage::covariates_T), rng_xS(cfg.seed, Stage::covariates_S);
  Matrix x_T = draw_covariates(nT, cfg, rng_xT);
  Matrix x_S = draw_covariates(nS, cfg, rng_xS);

  CounterRng rng_muT(cfg.seed, Stage::fixed_effects_T), rng_muS(cfg.seed, Stage::fixed_effects_S);
  Vector mu_T = draw_fixed_effects(pT, rng_muT);
  Vector mu_S = draw_fixed_effects(pS, rng_muS);

  CounterRng rng_hT(cfg.seed, Stage::heterogeneity_T), rng_hS(cfg.seed, Stage::heterogeneity_S);
  Heterogeneity h_T = draw_heterogeneity(nT, cfg.rho, rng_hT);
  Heterogeneity h_S = draw_heterogeneity(nS, cfg.rho, rng_hS);

  std::vector<Matrix> w_T = dyadic_similarity(x_T, pT, cfg.similarity_column);
  std::vector<Matrix> w_S = dyadic_similarity(x_S, pS, cfg.similarity_column);

  CounterRng rng_lT(cfg.seed, Stage::links_T), rng_lS(cfg.seed, Stage::links_S);
  std::vector<Matrix> blocks_T, blocks_S;
  for (Index c = 0; c < pT.count(); ++c)
    blocks_T.push_back(generate_within_links(w_T[static_cast<std::size_t>(c)], cfg.tau_T,
                                             h_T.u.segment(pT.begin(c), pT.size(c)), rng_lT));
  for (Index c = 0; c < pS.count(); ++c)
    blocks_S.push_back(generate_within_links(w_S[static_cast<std::size_t>(c)], cfg.tau_S,
                                             h_S.u.segment(pS.begin(c), pS.size(c)), rng_lS));

  CounterRng rng_x(cfg.seed, Stage::cross_links);
  auto [g_TS, g_ST] = generate_cross_links(pT, pS, cfg.cross_link_probability, rng_x);

  LayeredNetwork net(assemble_block_diagonal(std::span<const Matrix>(blocks_T)),
                     assemble_block_diagonal(std::span<const Matrix>(blocks_S)), std::move(g_TS),
                     std::move(g_ST), pT, pS);

  Vector kappa_T = assign_kappa(pT, cfg.kappa_levels);
  Vector kappa_S = assign_kappa(pS, cfg.kappa_levels);
  Vector eps_T = h_T.nu.cwiseProduct(kappa_T);
  Vector eps_S = h_S.nu.cwiseProduct(kappa_S);

  const Vector exog_T = broadcast(mu_T, pT) + linear_index(x_T, cfg.gamma_T) + eps_T;
  const Vector exog_S = broadcast(mu_S, pS) + linear_index(x_S, cfg.gamma_S) + eps_S;
  OutcomeSolution sol = solve_outcomes(net, cfg.parameters(), cfg.normalization, exog_T, exog_S);

  SimulatedDataset d{cfg,
                     std::move(net),
                     std::move(x_T),
                     std::move(x_S),
                     std::move(w_T),
                     std::move(w_S),
                     std::move(mu_T),
                     std::move(mu_S),
                     std::move(h_T.nu),
                     std::move(h_S.nu),
                     std::move(h_T.u),
                     std::move(h_S.u),
                     std::move(kappa_T),
                     std::move(kappa_S),
                     std::move(eps_T),
                     std::move(eps_S),
                     std::move(sol.y_T),
                     std::move(sol.y_S),
                     TrueParameters{cfg.parameters(), cfg.gamma_T, cfg.gamma_S},
                     sol.structural_residual,
                     sol.spectral_margin};
  return d;
}

}  // namespace netsem
