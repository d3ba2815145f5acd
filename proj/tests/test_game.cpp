#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace netsem;
using namespace netsem::testing;

namespace {

/// Utility written as explicit double loops over the adjacency entries.
double utility_oracle(Layer layer, Index i, const Vector& yT, const Vector& yS, const GameParameters& p,
                      const LayeredNetwork& net, const AgentAbilities& a) {
  const bool t = layer == Layer::T;
  const Vector& own = t ? yT : yS;
  const Vector& oth = t ? yS : yT;
  const Matrix& g = t ? net.g_T() : net.g_S();
  const Matrix& x = t ? net.g_TS() : net.g_ST();
  double u = (t ? a.alpha_T(i) : a.alpha_S(i)) * own(i) - 0.5 * own(i) * own(i);
  for (Index j = 0; j < g.cols(); ++j) u += (t ? p.lambda_T : p.lambda_S) * g(i, j) * own(i) * own(j);
  for (Index j = 0; j < x.cols(); ++j) u -= p.beta * x(i, j) * own(i) * oth(j);
  return u;
}

LayeredNetwork linked_pair_T(Index nS = 1) {
  Matrix g(2, 2);
  g << 0, 1, 1, 0;
  return LayeredNetwork(g, Matrix::Zero(nS, nS), Matrix::Zero(2, nS), Matrix::Zero(nS, 2),
                        CommunityPartition({2}), CommunityPartition({nS}));
}

}  // namespace

TEST(Utility, IsolatedAgent) {
  const CommunityPartition p({1});
  const LayeredNetwork net = LayeredNetwork::empty(p, p);
  AgentAbilities a{Vector::Ones(1), Vector::Zero(1)};
  EXPECT_DOUBLE_EQ(utility(Layer::T, 0, Vector::Ones(1), Vector::Zero(1), GameParameters{}, net, a), 0.5);
}

TEST(Utility, ZeroEfforts) {
  Rng rng(1);
  const LayeredNetwork net = random_network(rng, 2, 4);
  AgentAbilities a{random_vector(net.n_T(), rng), random_vector(net.n_S(), rng)};
  EXPECT_EQ(utility(Layer::S, 0, Vector::Zero(net.n_T()), Vector::Zero(net.n_S()), GameParameters{0.1, 0.1, 0.1},
                    net, a),
            0.0);
}

TEST(Utility, MatchesLoopOracle) {
  Rng rng(2);
  for (int rep = 0; rep < 10; ++rep) {
    const LayeredNetwork net = random_network(rng, 1, 4, 0.6);
    AgentAbilities a{random_vector(net.n_T(), rng), random_vector(net.n_S(), rng)};
    const GameParameters p{0.2, 0.3, 0.15};
    const Vector yT = random_vector(net.n_T(), rng), yS = random_vector(net.n_S(), rng);
    for (Index i = 0; i < net.n_T(); ++i)
      EXPECT_NEAR(utility(Layer::T, i, yT, yS, p, net, a), utility_oracle(Layer::T, i, yT, yS, p, net, a), 1e-14);
    for (Index i = 0; i < net.n_S(); ++i)
      EXPECT_NEAR(utility(Layer::S, i, yT, yS, p, net, a), utility_oracle(Layer::S, i, yT, yS, p, net, a), 1e-14);
  }
}

TEST(Utility, IndexOutOfRange) {
  const CommunityPartition p({2});
  const LayeredNetwork net = LayeredNetwork::empty(p, p);
  AgentAbilities a{Vector::Ones(2), Vector::Ones(2)};
  EXPECT_THROW(utility(Layer::T, 2, Vector::Ones(2), Vector::Ones(2), GameParameters{}, net, a), DomainError);
}

TEST(BestResponse, EmptyNetworksAtAbilities) {
  const CommunityPartition p({3});
  const LayeredNetwork net = LayeredNetwork::empty(p, p);
  Rng rng(3);
  AgentAbilities a{random_vector(3, rng), random_vector(3, rng)};
  auto [rT, rS] = best_response_residual(a.alpha_T, a.alpha_S, a, GameParameters{0.3, 0.3, 0.0}, net);
  EXPECT_EQ(rT.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(rS.cwiseAbs().maxCoeff(), 0.0);
}

TEST(BestResponse, DimensionMismatch) {
  const CommunityPartition p({3});
  const LayeredNetwork net = LayeredNetwork::empty(p, p);
  AgentAbilities a{Vector::Ones(3), Vector::Ones(3)};
  EXPECT_THROW(best_response_residual(Vector::Ones(2), Vector::Ones(3), a, GameParameters{}, net), DomainError);
}

TEST(BestResponse, PerturbationPropagatesThroughNeighbours) {
  // T path 0-1-2, no S links, no cross links: a bump of 0.1 on y_T(1) leaves
  // +0.1 on agent 1 and -lambda*0.1 on its two neighbours.
  Matrix g(3, 3);
  g << 0, 1, 0, 1, 0, 1, 0, 1, 0;
  const LayeredNetwork net(g, Matrix::Zero(1, 1), Matrix::Zero(3, 1), Matrix::Zero(1, 3), CommunityPartition({3}),
                           CommunityPartition({1}));
  AgentAbilities a{Vector::Ones(3), Vector::Ones(1)};
  const GameParameters p{0.2, 0.0, 0.0};
  const EquilibriumResult eq = nash_equilibrium(a, p, net);
  Vector yT = eq.y_T;
  yT(1) += 0.1;
  auto [rT, rS] = best_response_residual(yT, eq.y_S, a, p, net);
  EXPECT_NEAR(rT(1), 0.1, 1e-12);
  EXPECT_NEAR(rT(0), -0.02, 1e-12);
  EXPECT_NEAR(rT(2), -0.02, 1e-12);
  EXPECT_NEAR(rS(0), 0.0, 1e-12);
}

TEST(Nash, EmptyNetworksReturnAbilities) {
  const CommunityPartition p({2, 3});
  const LayeredNetwork net = LayeredNetwork::empty(p, p);
  Rng rng(4);
  AgentAbilities a{random_vector(5, rng), random_vector(5, rng)};
  const auto r = nash_equilibrium(a, GameParameters{0.4, 0.4, 0.0}, net);
  EXPECT_EQ(r.y_T, a.alpha_T);
  EXPECT_EQ(r.y_S, a.alpha_S);
}

TEST(Nash, TwoLinkedAgents) {
  AgentAbilities a{Vector::Ones(2), Vector::Zero(1)};
  const auto r = nash_equilibrium(a, GameParameters{0.5, 0.0, 0.0}, linked_pair_T());
  EXPECT_NEAR(r.y_T(0), 2.0, 1e-12);
  EXPECT_NEAR(r.y_T(1), 2.0, 1e-12);
}

TEST(Nash, UnstableInputCarriesMargin) {
  AgentAbilities a{Vector::Ones(2), Vector::Zero(1)};
  try {
    nash_equilibrium(a, GameParameters{1.2, 0.0, 0.0}, linked_pair_T());
    FAIL() << "expected PreconditionError";
  } catch (const PreconditionError& e) {
    EXPECT_NEAR(e.margin(), -0.2, 1e-12);
    EXPECT_EQ(e.exit_code(), 3);
  }
}

TEST(Nash, MatchesDampedBestResponseOracle) {
  Rng rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    const LayeredNetwork net = random_network(rng, 2, 6, 0.4);
    const GameParameters p = random_stable_parameters(net, rng);
    AgentAbilities a{random_vector(net.n_T(), rng), random_vector(net.n_S(), rng)};
    const auto r = nash_equilibrium(a, p, net);
    auto [oT, oS] = damped_best_response(a, p, net, Vector::Zero(net.n_T()), Vector::Zero(net.n_S()));
    EXPECT_LE((r.y_T - oT).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LE((r.y_S - oS).cwiseAbs().maxCoeff(), 1e-6);
    auto [rT, rS] = best_response_residual(r.y_T, r.y_S, a, p, net);
    const double scale = 1.0 + std::max(r.y_T.cwiseAbs().maxCoeff(), r.y_S.cwiseAbs().maxCoeff());
    EXPECT_LE(std::max(rT.cwiseAbs().maxCoeff(), rS.cwiseAbs().maxCoeff()), 1e-8 * scale);
  }
}

TEST(Nash, UniqueFromRandomStarts) {
  Rng rng(6);
  const LayeredNetwork net = random_network(rng, 2, 5, 0.5);
  const GameParameters p = random_stable_parameters(net, rng);
  AgentAbilities a{random_vector(net.n_T(), rng), random_vector(net.n_S(), rng)};
  const auto r = nash_equilibrium(a, p, net);
  for (int s = 0; s < 10; ++s) {
    auto [oT, oS] = damped_best_response(a, p, net, random_vector(net.n_T(), rng, -5, 5),
                                         random_vector(net.n_S(), rng, -5, 5));
    EXPECT_LE((r.y_T - oT).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LE((r.y_S - oS).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Nash, BetaZeroDecouplesLayers) {
  Rng rng(7);
  const LayeredNetwork net = random_network(rng, 2, 5, 0.5);
  GameParameters p = random_stable_parameters(net, rng);
  p.beta = 0.0;
  AgentAbilities a{random_vector(net.n_T(), rng), random_vector(net.n_S(), rng)};
  const auto base = nash_equilibrium(a, p, net);
  LayeredNetwork other(net.g_T(), Matrix::Zero(net.n_S(), net.n_S()), net.g_TS(), net.g_ST(), net.partition_T(),
                       net.partition_S());
  AgentAbilities a2 = a;
  a2.alpha_S *= 3.0;
  GameParameters p2 = p;
  p2.lambda_S *= 0.5;
  const auto moved = nash_equilibrium(a2, p2, other);
  EXPECT_LE((base.y_T - moved.y_T).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Nash, LinearInAbilities) {
  Rng rng(8);
  const LayeredNetwork net = random_network(rng, 3, 4);
  const GameParameters p = random_stable_parameters(net, rng);
  AgentAbilities a{random_vector(net.n_T(), rng), random_vector(net.n_S(), rng)};
  AgentAbilities a2{2.0 * a.alpha_T, 2.0 * a.alpha_S};
  const auto r1 = nash_equilibrium(a, p, net), r2 = nash_equilibrium(a2, p, net);
  EXPECT_LE((2.0 * r1.y_T - r2.y_T).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((2.0 * r1.y_S - r2.y_S).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Nash, UnilateralDeviationDoesNotPay) {
  Rng rng(9);
  const LayeredNetwork net = random_network(rng, 2, 8, 0.4);
  const GameParameters p = random_stable_parameters(net, rng);
  AgentAbilities a{random_vector(net.n_T(), rng), random_vector(net.n_S(), rng)};
  const auto r = nash_equilibrium(a, p, net);
  std::uniform_int_distribution<int> pick_layer(0, 1);
  for (int k = 0; k < 20; ++k) {
    const Layer l = pick_layer(rng) ? Layer::T : Layer::S;
    const Index n = l == Layer::T ? net.n_T() : net.n_S();
    const Index i = std::uniform_int_distribution<Index>(0, n - 1)(rng);
    const double u0 = utility(l, i, r.y_T, r.y_S, p, net, a);
    for (double d : {-0.05, 0.05}) {
      Vector yT = r.y_T, yS = r.y_S;
      (l == Layer::T ? yT : yS)(i) += d;
      EXPECT_LE(utility(l, i, yT, yS, p, net, a), u0 + 1e-12);
    }
  }
}

TEST(Nash, NegativeEffortsAreReportedNotProjected) {
  const CommunityPartition p({1});
  Matrix x = Matrix::Ones(1, 1);
  const LayeredNetwork net(Matrix::Zero(1, 1), Matrix::Zero(1, 1), x, x, p, p);
  AgentAbilities a{Vector::Constant(1, 0.1), Vector::Constant(1, 5.0)};
  const auto r = nash_equilibrium(a, GameParameters{0.0, 0.0, 0.9}, net);
  EXPECT_LT(r.y_T(0), 0.0);
  EXPECT_FALSE(r.warnings.empty());
}

TEST(Planner, EmptyNetworksEqualNash) {
  const CommunityPartition p({4});
  const LayeredNetwork net = LayeredNetwork::empty(p, p);
  AgentAbilities a{Vector::Ones(4), Vector::Constant(4, 2.0)};
  const auto r = planner_optimum(a, GameParameters{0.3, 0.3, 0.0}, net);
  EXPECT_EQ(r.y_T, a.alpha_T);
  EXPECT_EQ(r.y_S, a.alpha_S);
}

TEST(Planner, TwoLinkedAgentsDoubledPeerEffect) {
  AgentAbilities a{Vector::Ones(2), Vector::Zero(1)};
  const GameParameters p{0.25, 0.0, 0.0};
  const auto plan = planner_optimum(a, p, linked_pair_T());
  const auto nash = nash_equilibrium(a, p, linked_pair_T());
  EXPECT_NEAR(plan.y_T(0), 2.0, 1e-12);
  EXPECT_NEAR(nash.y_T(0), 4.0 / 3.0, 1e-12);
}

TEST(Planner, DoubledSystemStabilityRequired) {
  AgentAbilities a{Vector::Ones(2), Vector::Zero(1)};
  // Nash is stable at 0.6 but the planner's 1.2 is not.
  EXPECT_NO_THROW(nash_equilibrium(a, GameParameters{0.6, 0.0, 0.0}, linked_pair_T()));
  EXPECT_THROW(planner_optimum(a, GameParameters{0.6, 0.0, 0.0}, linked_pair_T()), PreconditionError);
}

TEST(Planner, DominatesNashWithoutCrossEffects) {
  Rng rng(10);
  for (int rep = 0; rep < 10; ++rep) {
    const LayeredNetwork net = random_network(rng, 2, 6, 0.5);
    GameParameters p = random_stable_parameters(net, rng, 0.8, 2.0);
    p.beta = 0.0;
    AgentAbilities a{random_vector(net.n_T(), rng), random_vector(net.n_S(), rng)};
    const auto plan = planner_optimum(a, p, net), nash = nash_equilibrium(a, p, net);
    EXPECT_TRUE(((plan.y_T - nash.y_T).array() >= -1e-12).all());
    EXPECT_TRUE(((plan.y_S - nash.y_S).array() >= -1e-12).all());
  }
}

TEST(Nash, SixAgentExampleIsStable) {
  Matrix gT(3, 3), gS = Matrix::Zero(5, 5), gTS = Matrix::Zero(3, 5), gST = Matrix::Zero(5, 3);
  gT << 0, 1, 0, 1, 0, 1, 0, 1, 0;
  for (Index j = 1; j < 5; ++j) gS(0, j) = gS(j, 0) = 1;
  gTS(0, 0) = gTS(2, 1) = 1;
  gST(0, 0) = gST(1, 2) = 1;
  const LayeredNetwork net(gT, gS, gTS, gST, CommunityPartition({3}), CommunityPartition({5}));
  const GameParameters p{0.1, 0.1, 0.05};
  const auto st = check_stability(p, net);
  // r(G_T) = sqrt(2), r(G_S) = 2.
  EXPECT_NEAR(st.radius_T, std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(st.radius_S, 2.0, 1e-12);
  EXPECT_NEAR(st.margin, 0.95 - 0.2, 1e-12);
  AgentAbilities a{Vector::Ones(3), Vector::Ones(5)};
  const auto r = nash_equilibrium(a, p, net);
  auto [rT, rS] = best_response_residual(r.y_T, r.y_S, a, p, net);
  EXPECT_LE(std::max(rT.cwiseAbs().maxCoeff(), rS.cwiseAbs().maxCoeff()), 1e-12);
}
