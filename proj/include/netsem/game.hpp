#pragma once

// The two-activity network game: node payoffs, best responses, the Nash
// equilibrium and the planner's welfare optimum.
//
// Conventions. A node is a (layer, index) pair. A dual-role agent appears
// as one technology node and one science node joined by the cross blocks,
// so the interdependence term of a technology node i reads
// beta * y_T[i] * (G_TS y_S)[i]. Both solvers use the cross blocks with a
// +beta sign: beta > 0 means the activities are substitutes.

#include <string>
#include <vector>

#include "netsem/netcore.hpp"

namespace netsem {

struct EquilibriumResult {
  Vector y_T;
  Vector y_S;
  /// Max-norm of the stacked first-order residual at the solution.
  double residual_norm = 0.0;
  StabilityReport stability;
  /// Non-fatal findings (negative efforts).
  std::vector<std::string> warnings;
};

namespace detail {

inline void require_conformable(const Vector& y_T, const Vector& y_S, const LayeredNetwork& net) {
  if (y_T.size() != net.n_T() || y_S.size() != net.n_S())
    throw DomainError("effort vectors do not match the network dimensions");
}

}  // namespace detail

/// Payoff of node `i` in `layer` given all efforts.
inline double utility(Layer layer, Index i, const Vector& y_T, const Vector& y_S,
                      const GameParameters& p, const LayeredNetwork& net,
                      const AgentAbilities& alpha) {
  detail::require_conformable(y_T, y_S, net);
  alpha.validate(net);
  const bool tech = layer == Layer::T;
  const Vector& own = tech ? y_T : y_S;
  const Vector& other_y = tech ? y_S : y_T;
  if (i < 0 || i >= own.size())
    throw DomainError("node index " + std::to_string(i) + " out of range for layer " +
                      std::string(layer_name(layer)));
  const double a = tech ? alpha.alpha_T(i) : alpha.alpha_S(i);
  const double lambda = tech ? p.lambda_T : p.lambda_S;
  const double y = own(i);
  const double peers = net.within(layer).row(i).dot(own);
  const double bridged = net.cross_into(layer).row(i).dot(other_y);
  return a * y - 0.5 * y * y + lambda * y * peers - p.beta * y * bridged;
}

/// y - BR(y) for each layer; zero exactly at a Nash equilibrium.
inline std::pair<Vector, Vector> best_response_residual(const Vector& y_T, const Vector& y_S,
                                                        const AgentAbilities& alpha,
                                                        const GameParameters& p,
                                                        const LayeredNetwork& net) {
  detail::require_conformable(y_T, y_S, net);
  alpha.validate(net);
  Vector r_T = y_T - (alpha.alpha_T - p.beta * (net.g_TS() * y_S) + p.lambda_T * (net.g_T() * y_T));
  Vector r_S = y_S - (alpha.alpha_S - p.beta * (net.g_ST() * y_T) + p.lambda_S * (net.g_S() * y_S));
  return {std::move(r_T), std::move(r_S)};
}

namespace detail {

inline EquilibriumResult solve_game_system(const AgentAbilities& alpha, const GameParameters& p,
                                           const LayeredNetwork& net, double peer_scale,
                                           const char* what) {
  p.validate(ParameterMode::game);
  alpha.validate(net);
  StabilityReport st = check_stability(p, net, peer_scale);
  if (!st.stable)
    throw PreconditionError(std::string(what) + ": stability condition violated (margin " +
                                std::to_string(st.margin) + ")",
                            st.margin);
  const Matrix A_T = peer_scale * p.lambda_T * net.g_T();
  const Matrix A_S = peer_scale * p.lambda_S * net.g_S();
  const Matrix C_TS = -p.beta * net.g_TS();
  const Matrix C_ST = -p.beta * net.g_ST();
  TwoLayerOperator op{A_T, C_TS, C_ST, A_S, net.partition_T(), net.partition_S()};
  auto [y_T, y_S] = op.solve_identity_minus(alpha.alpha_T, alpha.alpha_S);

  EquilibriumResult out;
  auto [aT, aS] = op.apply(y_T, y_S);
  const double rT = (y_T - aT - alpha.alpha_T).cwiseAbs().maxCoeff();
  const double rS = (y_S - aS - alpha.alpha_S).cwiseAbs().maxCoeff();
  out.residual_norm = std::max(y_T.size() ? rT : 0.0, y_S.size() ? rS : 0.0);
  out.stability = st;
  const Index negT = (y_T.array() < 0.0).count(), negS = (y_S.array() < 0.0).count();
  if (negT + negS > 0)
    out.warnings.push_back(std::to_string(negT + negS) +
                           " negative effort component(s); nonnegativity is not imposed");
  out.y_T = std::move(y_T);
  out.y_S = std::move(y_S);
  return out;
}

}  // namespace detail

/// Unique Nash equilibrium: solves
///   [[I - lambda_T G_T, beta G_TS], [beta G_ST, I - lambda_S G_S]] y = alpha.
/// Throws PreconditionError (carrying the margin) when the stability
/// condition fails.
inline EquilibriumResult nash_equilibrium(const AgentAbilities& alpha, const GameParameters& p,
                                          const LayeredNetwork& net) {
  return detail::solve_game_system(alpha, p, net, 1.0, "nash_equilibrium");
}

/// Welfare-maximizing efforts: the same system with both peer parameters
/// doubled, which internalizes the externality each agent exerts on peers.
inline EquilibriumResult planner_optimum(const AgentAbilities& alpha, const GameParameters& p,
                                         const LayeredNetwork& net) {
  return detail::solve_game_system(alpha, p, net, 2.0, "planner_optimum");
}

}  // namespace netsem
