#pragma once

// Dyadic link-formation logit and the predicted adjacency it implies.
//
// The fit deliberately leaves out the unobserved heterogeneity u that drove
// link formation: predicted probabilities depend on observables only, which
// is what makes them usable inside instruments.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "netsem/dgp.hpp"
#include "netsem/netcore.hpp"

namespace netsem {

/// One row per unordered within-community pair (i < j, global indices).
struct DyadDataset {
  std::vector<Index> community;
  std::vector<Index> i;
  std::vector<Index> j;
  Matrix features;  // rows x k, intercept not included
  Vector label;     // 0 / 1

  Index rows() const noexcept { return static_cast<Index>(i.size()); }
};

struct LogitFit {
  Vector coefficients;  // intercept first
  Matrix covariance;
  double loglik = 0.0;
  double loglik_null = 0.0;
  double pseudo_r2 = 0.0;
  double aic = 0.0;
  bool converged = false;
  int iterations = 0;
  /// Max-norm of the score at the returned coefficients.
  double score_norm = 0.0;

  Vector standard_errors() const { return covariance.diagonal().cwiseSqrt(); }
};

struct LogitOptions {
  int max_iterations = 100;
  double score_tolerance = 1e-8;
};

namespace detail {

inline void require_binary(const Matrix& g) {
  for (Index c = 0; c < g.cols(); ++c)
    for (Index r = 0; r < g.rows(); ++r)
      if (g(r, c) != 0.0 && g(r, c) != 1.0)
        throw DomainError("dyads need a binary network; found entry " + std::to_string(g(r, c)));
}

/// log(1 + exp(z)) without overflow.
inline double log1pexp(double z) noexcept {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double logit_loglik(const Matrix& x, const Vector& y, const Vector& beta) {
  const Vector eta = x * beta;
  double ll = 0.0;
  for (Index r = 0; r < eta.size(); ++r) ll += y(r) * eta(r) - log1pexp(eta(r));
  return ll;
}

}  // namespace detail

/// All within-community pairs of one layer with w_ij as the single feature.
inline DyadDataset build_dyads(const Matrix& adjacency, const CommunityPartition& part,
                               const std::vector<Matrix>& similarity) {
  if (adjacency.rows() != part.total() || adjacency.cols() != part.total())
    throw DomainError("adjacency does not match the partition");
  if (static_cast<Index>(similarity.size()) != part.count())
    throw DomainError("one similarity block per community expected");
  detail::require_binary(adjacency);

  Index total = 0;
  for (Index c = 0; c < part.count(); ++c) total += part.size(c) * (part.size(c) - 1) / 2;

  DyadDataset d;
  d.community.reserve(static_cast<std::size_t>(total));
  d.i.reserve(static_cast<std::size_t>(total));
  d.j.reserve(static_cast<std::size_t>(total));
  d.features.resize(total, 1);
  d.label.resize(total);
  Index row = 0;
  for (Index c = 0; c < part.count(); ++c) {
    const Index b = part.begin(c), s = part.size(c);
    const Matrix& w = similarity[static_cast<std::size_t>(c)];
    if (w.rows() != s || w.cols() != s) throw DomainError("similarity block has the wrong size");
    for (Index a = 0; a < s; ++a)
      for (Index e = a + 1; e < s; ++e) {
        d.community.push_back(c);
        d.i.push_back(b + a);
        d.j.push_back(b + e);
        d.features(row, 0) = w(a, e);
        d.label(row) = adjacency(b + a, b + e);
        ++row;
      }
  }
  return d;
}

/// Dyads of one layer of `net`, with similarity from a covariate column.
inline DyadDataset build_dyads(const LayeredNetwork& net, Layer layer, const Matrix& features,
                               Index similarity_column = 1) {
  const CommunityPartition& part = net.partition(layer);
  return build_dyads(net.within(layer), part, dyadic_similarity(features, part, similarity_column));
}

/// Maximum-likelihood logit by damped Newton: the step is halved until the
/// log-likelihood does not decrease.
inline LogitFit fit_logit(const DyadDataset& d, const LogitOptions& opt = {}) {
  const Index n = d.rows();
  if (n == 0) throw DomainError("empty dyad dataset");
  const double positives = d.label.sum();
  if (positives < 1.0 || positives > static_cast<double>(n) - 1.0)
    throw SeparationError("labels are all equal; the intercept is not identified");

  Matrix x(n, d.features.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(d.features.cols()) = d.features;
  const Index k = x.cols();
  {
    Eigen::ColPivHouseholderQR<Matrix> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < k)
      throw DesignError("dyad design matrix is rank deficient (rank " + std::to_string(qr.rank()) +
                        " < " + std::to_string(k) + ")");
  }

  const double pbar = positives / static_cast<double>(n);
  Vector beta = Vector::Zero(k);
  beta(0) = std::log(pbar / (1.0 - pbar));
  double ll = detail::logit_loglik(x, d.label, beta);

  LogitFit fit;
  Matrix info(k, k);
  for (int it = 0; it <= opt.max_iterations; ++it) {
    Vector p(n), wts(n);
    const Vector eta = x * beta;
    for (Index r = 0; r < n; ++r) {
      p(r) = logistic(eta(r));
      wts(r) = p(r) * (1.0 - p(r));
    }
    const Vector score = x.transpose() * (d.label - p);
    info = x.transpose() * wts.asDiagonal() * x;
    fit.iterations = it;
    fit.score_norm = score.cwiseAbs().maxCoeff();
    if (fit.score_norm <= opt.score_tolerance) {
      fit.converged = true;
      break;
    }
    if (it == opt.max_iterations) break;
    Eigen::LDLT<Matrix> ldlt(info);
    if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-14))
      throw SeparationError("logit information matrix became singular; probabilities saturate");
    const Vector step = ldlt.solve(score);
    double t = 1.0;
    Vector next = beta + step;
    double ll_next = detail::logit_loglik(x, d.label, next);
    // Near the optimum the gain drops below rounding of ll; allow that much slack.
    const double slack = 1e-12 * (1.0 + std::abs(ll));
    while (!(ll_next >= ll - slack) && t > 1e-10) {
      t *= 0.5;
      next = beta + t * step;
      ll_next = detail::logit_loglik(x, d.label, next);
    }
    beta = next;
    ll = ll_next;
  }

  // Separation shows up as fitted probabilities pinned at 0 or 1 together
  // with diverging coefficients.
  const Vector eta = x * beta;
  const double max_eta = eta.cwiseAbs().maxCoeff();
  if (max_eta > 30.0 || beta.cwiseAbs().maxCoeff() > 1e3)
    throw SeparationError("complete or quasi-complete separation: fitted linear index reaches " +
                          std::to_string(max_eta));

  fit.coefficients = beta;
  fit.loglik = ll;
  fit.loglik_null = positives * std::log(pbar) + (static_cast<double>(n) - positives) * std::log1p(-pbar);
  fit.pseudo_r2 = 1.0 - fit.loglik / fit.loglik_null;
  fit.aic = 2.0 * static_cast<double>(k) - 2.0 * fit.loglik;
  fit.covariance = info.ldlt().solve(Matrix::Identity(k, k));
  return fit;
}

/// Pooled fits per community (each community gets its own coefficients).
inline std::vector<LogitFit> fit_logit_by_community(const DyadDataset& d, Index communities,
                                                    const LogitOptions& opt = {}) {
  std::vector<LogitFit> fits;
  for (Index c = 0; c < communities; ++c) {
    DyadDataset sub;
    std::vector<Index> rows;
    for (Index r = 0; r < d.rows(); ++r)
      if (d.community[static_cast<std::size_t>(r)] == c) rows.push_back(r);
    sub.features.resize(static_cast<Index>(rows.size()), d.features.cols());
    sub.label.resize(static_cast<Index>(rows.size()));
    for (std::size_t q = 0; q < rows.size(); ++q) {
      const Index r = rows[q];
      sub.community.push_back(c);
      sub.i.push_back(d.i[static_cast<std::size_t>(r)]);
      sub.j.push_back(d.j[static_cast<std::size_t>(r)]);
      sub.features.row(static_cast<Index>(q)) = d.features.row(r);
      sub.label(static_cast<Index>(q)) = d.label(r);
    }
    fits.push_back(fit_logit(sub, opt));
  }
  return fits;
}

namespace detail {

inline void predict_block(const LogitFit& fit, const Matrix& w, Matrix& out, Index b) {
  const Index s = w.rows();
  for (Index a = 0; a < s; ++a)
    for (Index e = a + 1; e < s; ++e)
      out(b + a, b + e) = out(b + e, b + a) =
          logistic(fit.coefficients(0) + fit.coefficients(1) * w(a, e));
}

inline void require_usable(const LogitFit& fit) {
  if (!fit.converged) throw StateError("cannot predict from an unconverged logit fit");
  if (fit.coefficients.size() != 2)
    throw DomainError("prediction expects an intercept and one similarity slope");
}

}  // namespace detail

/// g_hat_ij = logistic(tau0 + tau1 w_ij) inside each community, zero
/// elsewhere and on the diagonal.
inline Matrix predict_adjacency(const LogitFit& fit, const std::vector<Matrix>& similarity,
                                const CommunityPartition& part) {
  detail::require_usable(fit);
  if (static_cast<Index>(similarity.size()) != part.count())
    throw DomainError("one similarity block per community expected");
  Matrix g = Matrix::Zero(part.total(), part.total());
  for (Index c = 0; c < part.count(); ++c)
    detail::predict_block(fit, similarity[static_cast<std::size_t>(c)], g, part.begin(c));
  return g;
}

inline Matrix predict_adjacency(const std::vector<LogitFit>& fits,
                                const std::vector<Matrix>& similarity,
                                const CommunityPartition& part) {
  if (static_cast<Index>(fits.size()) != part.count())
    throw DomainError("one fit per community expected");
  Matrix g = Matrix::Zero(part.total(), part.total());
  for (Index c = 0; c < part.count(); ++c) {
    detail::require_usable(fits[static_cast<std::size_t>(c)]);
    detail::predict_block(fits[static_cast<std::size_t>(c)], similarity[static_cast<std::size_t>(c)],
                          g, part.begin(c));
  }
  return g;
}

/// g_hat / d_hat with d_hat = max(largest row sum, largest column sum).
inline Matrix normalize_predicted(const Matrix& g_hat) {
  if ((g_hat.array() < 0.0).any()) throw DomainError("predicted adjacency has negative entries");
  const double d = max_axis_sum(g_hat);
  if (!(d > 0.0)) throw DomainError("degenerate predicted adjacency: all entries are zero");
  return g_hat / d;
}

}  // namespace netsem
