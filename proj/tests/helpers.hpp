#pragma once

// Random instances and independent oracles shared by the test suites.

#include <random>
#include <vector>

#include "netsem/netsem.hpp"

namespace netsem::testing {

using Rng = std::mt19937_64;

inline Matrix random_symmetric_binary(Index n, double p, Rng& rng) {
  std::bernoulli_distribution link(p);
  Matrix g = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (link(rng)) g(i, j) = g(j, i) = 1.0;
  return g;
}

inline Matrix random_block_symmetric(const CommunityPartition& part, double p, Rng& rng) {
  std::vector<Matrix> blocks;
  for (Index c = 0; c < part.count(); ++c) blocks.push_back(random_symmetric_binary(part.size(c), p, rng));
  return assemble_block_diagonal(std::span<const Matrix>(blocks));
}

/// Cross block with entries only inside aligned community pairs.
inline Matrix random_cross(const CommunityPartition& rows, const CommunityPartition& cols, double p, Rng& rng) {
  std::bernoulli_distribution link(p);
  Matrix g = Matrix::Zero(rows.total(), cols.total());
  for (Index c = 0; c < rows.count(); ++c)
    for (Index i = 0; i < rows.size(c); ++i)
      for (Index j = 0; j < cols.size(c); ++j)
        if (link(rng)) g(rows.begin(c) + i, cols.begin(c) + j) = 1.0;
  return g;
}

inline LayeredNetwork random_network(Rng& rng, Index communities, Index max_size, double p = 0.3) {
  std::uniform_int_distribution<Index> size(1, max_size);
  std::vector<Index> sT, sS;
  for (Index c = 0; c < communities; ++c) {
    sT.push_back(size(rng));
    sS.push_back(size(rng));
  }
  CommunityPartition pT(sT), pS(sS);
  Matrix gT = random_block_symmetric(pT, p, rng);
  Matrix gS = random_block_symmetric(pS, p, rng);
  Matrix gTS = random_cross(pT, pS, p / 2, rng);
  Matrix gST = random_cross(pS, pT, p / 2, rng);
  return LayeredNetwork(gT, gS, gTS, gST, pT, pS);
}

inline Vector random_vector(Index n, Rng& rng, double lo = 0.5, double hi = 1.5) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

inline Matrix random_matrix(Index r, Index c, Rng& rng) {
  std::normal_distribution<double> z;
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = z(rng);
  return m;
}

/// Largest |eigenvalue| from a general dense eigendecomposition.
inline double oracle_radius(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Damped Jacobi on the best-response map.
inline std::pair<Vector, Vector> damped_best_response(const AgentAbilities& a, const GameParameters& p,
                                                      const LayeredNetwork& net, Vector yT, Vector yS,
                                                      double damping = 0.5, int iters = 20000) {
  for (int k = 0; k < iters; ++k) {
    const Vector bT = a.alpha_T - p.beta * (net.g_TS() * yS) + p.lambda_T * (net.g_T() * yT);
    const Vector bS = a.alpha_S - p.beta * (net.g_ST() * yT) + p.lambda_S * (net.g_S() * yS);
    const double step = std::max((bT - yT).cwiseAbs().maxCoeff(), (bS - yS).cwiseAbs().maxCoeff());
    yT = (1 - damping) * yT + damping * bT;
    yS = (1 - damping) * yS + damping * bS;
    if (step < 1e-13) break;
  }
  return {yT, yS};
}

/// Stability-preserving parameters for a given network.
inline GameParameters random_stable_parameters(const LayeredNetwork& net, Rng& rng, double slack = 0.8,
                                               double peer_scale = 1.0) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  GameParameters p;
  p.beta = 0.4 * (u(rng) - 0.5);
  const double room = (1.0 - std::abs(p.beta)) * slack / peer_scale;
  const double rT = std::max(oracle_radius(net.g_T()), 1e-9), rS = std::max(oracle_radius(net.g_S()), 1e-9);
  p.lambda_T = u(rng) * room / rT;
  p.lambda_S = u(rng) * room / rS;
  return p;
}

/// Textbook two-step 2SLS: first-stage fitted values, then OLS.
inline Vector two_step_oracle(const Vector& y, const Matrix& z, const Matrix& h) {
  const Matrix zhat = h * (h.transpose() * h).ldlt().solve(h.transpose() * z);
  return (zhat.transpose() * zhat).ldlt().solve(zhat.transpose() * y);
}

inline Vector ols(const Vector& y, const Matrix& x) {
  return (x.transpose() * x).ldlt().solve(x.transpose() * y);
}

}  // namespace netsem::testing
