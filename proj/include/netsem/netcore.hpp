#pragma once

// Core domain types for two-layer (technology / science) networks whose
// agents are grouped into communities, plus the spectral and block-matrix
// helpers the rest of the library is built on.
//
// Agents of a layer are laid out contiguously by community, so every
// adjacency block is block-diagonal with respect to the partition.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "netsem/errors.hpp"

namespace netsem {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class Layer { T, S };

inline constexpr std::string_view layer_name(Layer l) noexcept {
  return l == Layer::T ? "T" : "S";
}

inline constexpr Layer other(Layer l) noexcept { return l == Layer::T ? Layer::S : Layer::T; }

/// Numerically stable logistic function.
inline double logistic(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// CommunityPartition

class CommunityPartition {
 public:
  CommunityPartition() = default;

  explicit CommunityPartition(std::vector<Index> sizes) : sizes_(std::move(sizes)) {
    offsets_.reserve(sizes_.size() + 1);
    offsets_.push_back(0);
    for (Index s : sizes_) {
      if (s < 1) throw DomainError("community sizes must be >= 1");
      offsets_.push_back(offsets_.back() + s);
    }
  }

  /// `count` communities of `size` agents each.
  static CommunityPartition uniform(Index count, Index size) {
    if (count < 1) throw DomainError("community count must be >= 1");
    return CommunityPartition(std::vector<Index>(static_cast<std::size_t>(count), size));
  }

  Index count() const noexcept { return static_cast<Index>(sizes_.size()); }
  Index total() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }
  Index size(Index c) const { return sizes_.at(static_cast<std::size_t>(c)); }
  Index begin(Index c) const { return offsets_.at(static_cast<std::size_t>(c)); }
  const std::vector<Index>& sizes() const noexcept { return sizes_; }

  /// Community index of global agent `i`.
  Index community_of(Index i) const {
    if (i < 0 || i >= total()) throw DomainError("agent index out of range");
    auto it = std::upper_bound(offsets_.begin(), offsets_.end(), i);
    return static_cast<Index>(it - offsets_.begin()) - 1;
  }

  /// Position of agent `i` inside its community.
  Index local_index(Index i) const { return i - begin(community_of(i)); }

  bool operator==(const CommunityPartition& o) const noexcept { return sizes_ == o.sizes_; }

 private:
  std::vector<Index> sizes_;
  std::vector<Index> offsets_;
};

// ---------------------------------------------------------------------------
// LayeredNetwork

enum class NetworkKind { binary, probabilistic };

/// The four adjacency blocks of a two-layer network. Construction validates
/// every structural invariant; instances are immutable afterwards.
class LayeredNetwork {
 public:
  LayeredNetwork(Matrix g_T, Matrix g_S, Matrix g_TS, Matrix g_ST, CommunityPartition partition_T,
                 CommunityPartition partition_S, NetworkKind kind = NetworkKind::binary)
      : g_T_(std::move(g_T)),
        g_S_(std::move(g_S)),
        g_TS_(std::move(g_TS)),
        g_ST_(std::move(g_ST)),
        part_T_(std::move(partition_T)),
        part_S_(std::move(partition_S)),
        kind_(kind) {
    validate();
  }

  /// A network with no links at all.
  static LayeredNetwork empty(const CommunityPartition& pT, const CommunityPartition& pS) {
    const Index nT = pT.total(), nS = pS.total();
    return LayeredNetwork(Matrix::Zero(nT, nT), Matrix::Zero(nS, nS), Matrix::Zero(nT, nS),
                          Matrix::Zero(nS, nT), pT, pS);
  }

  const Matrix& g_T() const noexcept { return g_T_; }
  const Matrix& g_S() const noexcept { return g_S_; }
  const Matrix& g_TS() const noexcept { return g_TS_; }
  const Matrix& g_ST() const noexcept { return g_ST_; }
  const Matrix& within(Layer l) const noexcept { return l == Layer::T ? g_T_ : g_S_; }
  /// Block mapping the other layer's outcomes into layer `l` (G_TS for T).
  const Matrix& cross_into(Layer l) const noexcept { return l == Layer::T ? g_TS_ : g_ST_; }
  const CommunityPartition& partition_T() const noexcept { return part_T_; }
  const CommunityPartition& partition_S() const noexcept { return part_S_; }
  const CommunityPartition& partition(Layer l) const noexcept {
    return l == Layer::T ? part_T_ : part_S_;
  }
  NetworkKind kind() const noexcept { return kind_; }
  Index n_T() const noexcept { return g_T_.rows(); }
  Index n_S() const noexcept { return g_S_.rows(); }

  /// True when both layers have the same number of communities, so the
  /// stacked two-layer system decouples into one block per community pair.
  bool aligned() const noexcept { return part_T_.count() == part_S_.count(); }

 private:
  void validate() const {
    const Index nT = part_T_.total(), nS = part_S_.total();
    auto dims = [](const Matrix& m) {
      std::ostringstream os;
      os << m.rows() << "x" << m.cols();
      return os.str();
    };
    if (g_T_.rows() != nT || g_T_.cols() != nT)
      throw DomainError("g_T is " + dims(g_T_) + ", partition_T expects " + std::to_string(nT));
    if (g_S_.rows() != nS || g_S_.cols() != nS)
      throw DomainError("g_S is " + dims(g_S_) + ", partition_S expects " + std::to_string(nS));
    if (g_TS_.rows() != nT || g_TS_.cols() != nS)
      throw DomainError("g_TS is " + dims(g_TS_) + ", expected n_T x n_S");
    if (g_ST_.rows() != nS || g_ST_.cols() != nT)
      throw DomainError("g_ST is " + dims(g_ST_) + ", expected n_S x n_T");

    check_entries(g_T_, "g_T");
    check_entries(g_S_, "g_S");
    check_entries(g_TS_, "g_TS");
    check_entries(g_ST_, "g_ST");
    check_symmetric(g_T_, "g_T");
    check_symmetric(g_S_, "g_S");
    check_block_diagonal(g_T_, part_T_, part_T_, "g_T");
    check_block_diagonal(g_S_, part_S_, part_S_, "g_S");
    check_block_diagonal(g_TS_, part_T_, part_S_, "g_TS");
    check_block_diagonal(g_ST_, part_S_, part_T_, "g_ST");
  }

  void check_entries(const Matrix& m, const char* name) const {
    if (!m.allFinite()) throw DomainError(std::string(name) + " has non-finite entries");
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) {
        const double v = m(i, j);
        if (v < 0.0) throw DomainError(std::string(name) + " has negative entries");
        if (kind_ == NetworkKind::binary && v != 0.0 && v != 1.0)
          throw DomainError(std::string(name) + " is not binary");
        if (kind_ == NetworkKind::probabilistic && v > 1.0)
          throw DomainError(std::string(name) + " has entries above 1");
      }
  }

  static void check_symmetric(const Matrix& m, const char* name) {
    for (Index i = 0; i < m.rows(); ++i) {
      if (m(i, i) != 0.0) throw DomainError(std::string(name) + " has a nonzero diagonal");
      for (Index j = i + 1; j < m.cols(); ++j)
        if (m(i, j) != m(j, i)) throw DomainError(std::string(name) + " is not symmetric");
    }
  }

  static void check_block_diagonal(const Matrix& m, const CommunityPartition& rows,
                                   const CommunityPartition& cols, const char* name) {
    for (Index i = 0; i < m.rows(); ++i) {
      const Index ci = rows.community_of(i);
      for (Index j = 0; j < m.cols(); ++j)
        if (m(i, j) != 0.0 && cols.community_of(j) != ci)
          throw DomainError(std::string(name) + " links agents in different communities (" +
                            std::to_string(i) + ", " + std::to_string(j) + ")");
    }
  }

  Matrix g_T_, g_S_, g_TS_, g_ST_;
  CommunityPartition part_T_, part_S_;
  NetworkKind kind_;
};

// ---------------------------------------------------------------------------
// Parameters

enum class ParameterMode { game, econometric };

struct GameParameters {
  double lambda_T = 0.0;
  double lambda_S = 0.0;
  double beta = 0.0;
  double lambda_TS = 0.0;
  double lambda_ST = 0.0;

  void validate(ParameterMode mode = ParameterMode::game) const {
    if (!std::isfinite(lambda_T) || !std::isfinite(lambda_S) || !std::isfinite(beta) ||
        !std::isfinite(lambda_TS) || !std::isfinite(lambda_ST))
      throw DomainError("game parameters must be finite");
    if (mode == ParameterMode::game) {
      if (!(std::abs(beta) < 1.0)) throw DomainError("beta must lie in (-1, 1)");
      if (lambda_T < 0.0 || lambda_S < 0.0)
        throw DomainError("lambda_T and lambda_S must be nonnegative");
    } else {
      if (!(std::abs(lambda_T) + std::abs(lambda_TS) < 1.0))
        throw DomainError("|lambda_T| + |lambda_TS| must be < 1");
      if (!(std::abs(lambda_S) + std::abs(lambda_ST) < 1.0))
        throw DomainError("|lambda_S| + |lambda_ST| must be < 1");
    }
  }
};

struct AgentAbilities {
  Vector alpha_T;
  Vector alpha_S;

  void validate(const LayeredNetwork& net) const {
    if (alpha_T.size() != net.n_T() || alpha_S.size() != net.n_S())
      throw DomainError("ability vectors do not match the network dimensions");
  }
};

// ---------------------------------------------------------------------------
// Spectral radius

struct PowerIterationOptions {
  int max_iterations = 20000;
  double tolerance = 1e-13;
};

namespace detail {

inline bool is_nonnegative(const Matrix& m) { return (m.array() >= 0.0).all(); }

inline bool is_symmetric(const Matrix& m) {
  return m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() == 0.0;
}

inline void require_square_finite(const Matrix& m) {
  if (m.rows() != m.cols())
    throw DomainError("spectral_radius needs a square matrix, got " + std::to_string(m.rows()) +
                      "x" + std::to_string(m.cols()));
  if (!m.allFinite()) throw DomainError("spectral_radius needs finite entries");
}

inline double dense_spectral_radius(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  if (is_symmetric(m)) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericError("symmetric eigensolver failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  Eigen::EigenSolver<Matrix> es(m, false);
  if (es.info() != Eigen::Success) throw NumericError("eigensolver failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Power iteration with Rayleigh-quotient convergence.
///
/// Nonnegative matrices are shifted by the identity first: the Perron root
/// of A + I is then the unique dominant eigenvalue, which makes the
/// iteration converge even for bipartite graphs (eigenvalues +r and -r).
/// Signed matrices are iterated unshifted and may fail to converge.
inline double power_iteration_radius(const Matrix& m, const PowerIterationOptions& opt = {}) {
  detail::require_square_finite(m);
  const Index n = m.rows();
  if (n == 0 || m.cwiseAbs().maxCoeff() == 0.0) return 0.0;

  const bool nonneg = detail::is_nonnegative(m);
  const bool sym = detail::is_symmetric(m);
  const double shift = nonneg ? 1.0 : 0.0;

  // Deterministic, strictly positive start vector.
  Vector x(n);
  for (Index i = 0; i < n; ++i) x(i) = 1.0 + 0.01 * static_cast<double>(i % 7);
  x.normalize();

  double estimate = 0.0;
  for (int it = 0; it < opt.max_iterations; ++it) {
    Vector y = m * x + shift * x;
    // Rayleigh quotient only when the shift makes the dominant eigenvalue
    // unique; a +-r pair would cancel in it.
    const double next = sym && nonneg ? x.dot(y) : y.norm();
    const double ny = y.norm();
    if (ny == 0.0) return 0.0;
    x = y / ny;
    if (it > 0 && std::abs(next - estimate) <= opt.tolerance * std::max(1.0, std::abs(next)))
      return std::abs(next - shift);
    estimate = next;
  }
  throw NumericError("power iteration did not converge within " +
                     std::to_string(opt.max_iterations) + " iterations");
}

/// max |eigenvalue(m)|. Matrices below 200x200 go straight to a dense
/// eigensolver; larger ones use power_iteration_radius.
inline double spectral_radius(const Matrix& m, const PowerIterationOptions& opt = {}) {
  detail::require_square_finite(m);
  if (m.rows() < 200) return detail::dense_spectral_radius(m);
  return power_iteration_radius(m, opt);
}

/// Spectral radius of a block-diagonal matrix, computed community by community.
inline double block_spectral_radius(const Matrix& m, const CommunityPartition& p) {
  if (m.rows() != p.total() || m.cols() != p.total())
    throw DomainError("matrix does not match the partition");
  double r = 0.0;
  for (Index c = 0; c < p.count(); ++c) {
    const Index b = p.begin(c), s = p.size(c);
    r = std::max(r, spectral_radius(m.block(b, b, s, s)));
  }
  return r;
}

struct StabilityReport {
  bool stable = false;
  /// (1 - |beta|) - max(lambda_T r(G_T), lambda_S r(G_S)); positive when stable.
  double margin = 0.0;
  double radius_T = 0.0;
  double radius_S = 0.0;
};

/// Checks max(lambda_T r(G_T), lambda_S r(G_S)) < 1 - |beta|. `peer_scale`
/// multiplies both lambdas (2 for the planner's doubled system).
inline StabilityReport check_stability(const GameParameters& p, const LayeredNetwork& net,
                                       double peer_scale = 1.0) {
  StabilityReport r;
  r.radius_T = block_spectral_radius(net.g_T(), net.partition_T());
  r.radius_S = block_spectral_radius(net.g_S(), net.partition_S());
  const double index =
      std::max(peer_scale * p.lambda_T * r.radius_T, peer_scale * p.lambda_S * r.radius_S);
  r.margin = (1.0 - std::abs(p.beta)) - index;
  r.stable = r.margin > 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Normalization and block assembly

/// Divides each nonzero row by its sum; zero rows are left alone.
inline Matrix row_normalize(const Matrix& m) {
  if ((m.array() < 0.0).any()) throw DomainError("row_normalize needs nonnegative entries");
  Matrix out = m;
  for (Index i = 0; i < out.rows(); ++i) {
    const double s = out.row(i).sum();
    if (s > 0.0) out.row(i) /= s;
  }
  return out;
}

/// max(largest row sum, largest column sum).
inline double max_axis_sum(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return std::max(m.rowwise().sum().maxCoeff(), m.colwise().sum().maxCoeff());
}

/// How within-layer adjacency enters the outcome equations.
enum class Normalization {
  none,     // raw adjacency
  row,      // each row sums to one
  max_sum,  // whole matrix divided by max(row sum, column sum)
};

inline std::string_view normalization_name(Normalization n) noexcept {
  switch (n) {
    case Normalization::none: return "none";
    case Normalization::row: return "row";
    case Normalization::max_sum: return "max_sum";
  }
  return "none";
}

inline Normalization parse_normalization(std::string_view s) {
  if (s == "none" || s == "off") return Normalization::none;
  if (s == "row") return Normalization::row;
  if (s == "max_sum" || s == "max-sum" || s == "on") return Normalization::max_sum;
  throw DomainError("unknown normalization '" + std::string(s) + "'");
}

inline Matrix normalize(const Matrix& m, Normalization mode) {
  switch (mode) {
    case Normalization::none: return m;
    case Normalization::row: return row_normalize(m);
    case Normalization::max_sum: {
      if ((m.array() < 0.0).any()) throw DomainError("normalization needs nonnegative entries");
      const double d = max_axis_sum(m);
      return d > 0.0 ? Matrix(m / d) : m;
    }
  }
  return m;
}

inline Matrix assemble_block_diagonal(std::span<const Matrix> blocks) {
  if (blocks.empty()) throw DomainError("assemble_block_diagonal needs at least one block");
  Index rows = 0, cols = 0;
  for (const Matrix& b : blocks) {
    if (!b.allFinite()) throw DomainError("block has non-finite entries");
    rows += b.rows();
    cols += b.cols();
  }
  Matrix out = Matrix::Zero(rows, cols);
  Index r = 0, c = 0;
  for (const Matrix& b : blocks) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

inline Matrix assemble_block_diagonal(std::initializer_list<Matrix> blocks) {
  std::vector<Matrix> v(blocks);
  return assemble_block_diagonal(std::span<const Matrix>(v));
}

// ---------------------------------------------------------------------------
// Stacked two-layer linear systems

/// The operator [[A_T, C_TS], [C_ST, A_S]] over stacked (T, S) vectors.
/// Every block must be block-diagonal with respect to the partitions; when
/// both layers have the same community count the system decouples into one
/// dense block per community pair.
struct TwoLayerOperator {
  const Matrix& A_T;
  const Matrix& C_TS;
  const Matrix& C_ST;
  const Matrix& A_S;
  const CommunityPartition& part_T;
  const CommunityPartition& part_S;

  bool decouples() const noexcept { return part_T.count() == part_S.count(); }
  Index n_T() const noexcept { return part_T.total(); }
  Index n_S() const noexcept { return part_S.total(); }

  /// Dense copy of the sub-operator for community pair c (or the whole
  /// operator when c < 0).
  Matrix dense(Index c = -1) const {
    Index bT = 0, sT = n_T(), bS = 0, sS = n_S();
    if (c >= 0) {
      bT = part_T.begin(c);
      sT = part_T.size(c);
      bS = part_S.begin(c);
      sS = part_S.size(c);
    }
    Matrix m(sT + sS, sT + sS);
    m.topLeftCorner(sT, sT) = A_T.block(bT, bT, sT, sT);
    m.topRightCorner(sT, sS) = C_TS.block(bT, bS, sT, sS);
    m.bottomLeftCorner(sS, sT) = C_ST.block(bS, bT, sS, sT);
    m.bottomRightCorner(sS, sS) = A_S.block(bS, bS, sS, sS);
    return m;
  }

  Index pieces() const noexcept { return decouples() ? part_T.count() : 1; }

  /// Spectral radius of the stacked operator.
  double radius() const {
    double r = 0.0;
    for (Index c = 0; c < pieces(); ++c)
      r = std::max(r, detail::dense_spectral_radius(dense(decouples() ? c : -1)));
    return r;
  }

  /// Solves (I - op) [y_T; y_S] = [rhs_T; rhs_S] by dense LU per piece.
  std::pair<Vector, Vector> solve_identity_minus(const Vector& rhs_T, const Vector& rhs_S) const {
    if (rhs_T.size() != n_T() || rhs_S.size() != n_S())
      throw DomainError("right-hand side does not match the operator dimensions");
    Vector y_T(n_T()), y_S(n_S());
    for (Index c = 0; c < pieces(); ++c) {
      const Index piece = decouples() ? c : -1;
      const Index bT = piece < 0 ? 0 : part_T.begin(c), sT = piece < 0 ? n_T() : part_T.size(c);
      const Index bS = piece < 0 ? 0 : part_S.begin(c), sS = piece < 0 ? n_S() : part_S.size(c);
      Matrix sys = -dense(piece);
      sys.diagonal().array() += 1.0;
      Eigen::PartialPivLU<Matrix> lu(sys);
      const double rcond = lu.rcond();
      if (!(rcond > 1e-13))
        throw NumericError("two-layer system is singular (reciprocal condition " +
                           std::to_string(rcond) + ")");
      Vector rhs(sT + sS);
      rhs << rhs_T.segment(bT, sT), rhs_S.segment(bS, sS);
      const Vector y = lu.solve(rhs);
      y_T.segment(bT, sT) = y.head(sT);
      y_S.segment(bS, sS) = y.tail(sS);
    }
    return {std::move(y_T), std::move(y_S)};
  }

  /// op applied to a stacked vector.
  std::pair<Vector, Vector> apply(const Vector& y_T, const Vector& y_S) const {
    return {A_T * y_T + C_TS * y_S, C_ST * y_T + A_S * y_S};
  }
};

}  // namespace netsem
