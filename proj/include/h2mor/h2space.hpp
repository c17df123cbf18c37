#ifndef H2MOR_H2SPACE_HPP
#define H2MOR_H2SPACE_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include <h2mor/numkit.hpp>

namespace h2mor::h2space
{

using Complex = std::complex<double>;

// Interpolation points closer than this (relative) are treated as duplicates;
// the Cauchy Gram matrix is exactly singular at a duplicate.
inline constexpr double kDuplicateTol = 1e-12;

inline bool approximately_duplicate(Complex a, Complex b)
{
  return std::abs(a - b) <= kDuplicateTol * std::max({std::abs(a), std::abs(b), 1.0});
}

inline void validate_points(const Eigen::VectorXcd &mu)
{
  for (Eigen::Index j = 0; j < mu.size(); ++j)
  {
    if (!(mu(j).real() > 0.0))
    {
      throw std::invalid_argument("interpolation point not in the open right half plane");
    }
    for (Eigen::Index k = 0; k < j; ++k)
    {
      if (approximately_duplicate(mu(j), mu(k)))
      {
        throw std::invalid_argument("duplicate interpolation points");
      }
    }
  }
}

/// Interpolation points in the open right half plane together with cached
/// transfer function values at those points.
struct SampleSet
{
  Eigen::VectorXcd mu;
  Eigen::VectorXcd values;
  bool closed_under_conjugation = false;

  Eigen::Index size() const { return mu.size(); }

  void validate() const
  {
    validate_points(mu);
    if (values.size() != 0 && values.size() != mu.size())
    {
      throw std::invalid_argument("SampleSet: values/mu length mismatch");
    }
    if (closed_under_conjugation)
    {
      for (Eigen::Index j = 0; j < mu.size(); ++j)
      {
        if (std::abs(mu(j).imag()) == 0.0)
        {
          continue;
        }
        bool found = false;
        for (Eigen::Index k = 0; k < mu.size(); ++k)
        {
          if (approximately_duplicate(mu(k), std::conj(mu(j))))
          {
            found = true;
            break;
          }
        }
        if (!found)
        {
          throw std::invalid_argument("SampleSet: not closed under conjugation");
        }
      }
    }
  }
};

/// Gram matrix of the reproducing kernels, M_jk = (mu_j + conj mu_k)^{-1}.
inline Eigen::MatrixXcd cauchy_gram(const Eigen::VectorXcd &mu)
{
  validate_points(mu);
  const Eigen::Index n = mu.size();
  Eigen::MatrixXcd m(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
  {
    for (Eigen::Index k = 0; k < n; ++k)
    {
      m(j, k) = 1.0 / (mu(j) + std::conj(mu(k)));
    }
  }
  return m;
}

/// Cholesky-like factorization M(mu) = P L D L^* P^* of the Cauchy Gram
/// matrix, computed to high relative accuracy.
///
/// The factorization runs Gaussian elimination with complete pivoting, but
/// never forms the Schur complements: the Cauchy structure makes every
/// update multiplicative,
///
///   M^(k)_ij = M_ij * prod_{m<k} (mu_i - mu_m)(conj mu_j - conj mu_m)
///                                / ((mu_i + conj mu_m)(mu_m + conj mu_j)),
///
/// so the trailing diagonal and each pivot column come from running Hadamard
/// products of the two generator vectors. For the Hermitian positive definite
/// M the complete pivot is always on the diagonal, whose updates depend only
/// on the pivot sequence; this gives the whole factorization in O(n^2)
/// operations with every entry formed from products and quotients of exact
/// data differences.
struct CauchyFactorization
{
  std::vector<int> permutation; // permutation[k] = original index of pivot k
  Eigen::MatrixXcd lower;       // unit lower triangular L
  Eigen::VectorXd diag;         // strictly positive D

  Eigen::Index size() const { return diag.size(); }

  /// w = D^{-1/2} L^{-1} P^T z, so that ||w||_2^2 = z^* M^{-1} z.
  Eigen::VectorXcd whiten(const Eigen::VectorXcd &z) const
  {
    if (z.size() != size())
    {
      throw std::invalid_argument("CauchyFactorization::whiten: length mismatch");
    }
    Eigen::VectorXcd w(size());
    for (Eigen::Index k = 0; k < size(); ++k)
    {
      w(k) = z(permutation[static_cast<std::size_t>(k)]);
    }
    lower.triangularView<Eigen::UnitLower>().solveInPlace(w);
    w.array() /= diag.array().sqrt();
    return w;
  }

  Eigen::MatrixXcd whiten(const Eigen::MatrixXcd &z) const
  {
    Eigen::MatrixXcd w(z.rows(), z.cols());
    for (Eigen::Index c = 0; c < z.cols(); ++c)
    {
      w.col(c) = whiten(Eigen::VectorXcd(z.col(c)));
    }
    return w;
  }

  /// Adjoint of whiten: P L^{-*} D^{-1/2} y.
  Eigen::VectorXcd whiten_adjoint(const Eigen::VectorXcd &y) const
  {
    if (y.size() != size())
    {
      throw std::invalid_argument("CauchyFactorization::whiten_adjoint: length mismatch");
    }
    Eigen::VectorXcd u = y.array() / diag.array().sqrt();
    lower.adjoint().triangularView<Eigen::UnitUpper>().solveInPlace(u);
    Eigen::VectorXcd out(size());
    for (Eigen::Index k = 0; k < size(); ++k)
    {
      out(permutation[static_cast<std::size_t>(k)]) = u(k);
    }
    return out;
  }

  /// Reassemble P L D L^* P^* (test and diagnostic aid).
  Eigen::MatrixXcd reconstruct() const
  {
    const Eigen::Index n = size();
    Eigen::MatrixXcd m(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
    {
      for (Eigen::Index j = 0; j < n; ++j)
      {
        Complex acc(0.0, 0.0);
        const Eigen::Index kmax = std::min(i, j);
        for (Eigen::Index k = 0; k <= kmax; ++k)
        {
          acc += lower(i, k) * diag(k) * std::conj(lower(j, k));
        }
        m(permutation[static_cast<std::size_t>(i)],
          permutation[static_cast<std::size_t>(j)]) = acc;
      }
    }
    return m;
  }
};

inline CauchyFactorization cauchy_cholesky(const Eigen::VectorXcd &mu)
{
  validate_points(mu);
  const Eigen::Index n = mu.size();
  CauchyFactorization fact;
  fact.permutation.resize(static_cast<std::size_t>(n));
  std::iota(fact.permutation.begin(), fact.permutation.end(), 0);
  fact.lower = Eigen::MatrixXcd::Identity(n, n);
  fact.diag.resize(n);

  Eigen::VectorXcd pts = mu;
  Eigen::VectorXcd gen = Eigen::VectorXcd::Ones(n); // running generator products
  Eigen::VectorXd d(n);                             // running Schur-complement diagonal
  for (Eigen::Index i = 0; i < n; ++i)
  {
    d(i) = 0.5 / pts(i).real();
  }

  for (Eigen::Index k = 0; k < n; ++k)
  {
    Eigen::Index piv = k;
    for (Eigen::Index i = k + 1; i < n; ++i)
    {
      if (d(i) > d(piv))
      {
        piv = i;
      }
    }
    if (piv != k)
    {
      std::swap(pts(k), pts(piv));
      std::swap(gen(k), gen(piv));
      std::swap(d(k), d(piv));
      std::swap(fact.permutation[static_cast<std::size_t>(k)],
                fact.permutation[static_cast<std::size_t>(piv)]);
      for (Eigen::Index c = 0; c < k; ++c)
      {
        std::swap(fact.lower(k, c), fact.lower(piv, c));
      }
    }
    if (!(d(k) > 0.0) || !std::isfinite(d(k)))
    {
      throw std::runtime_error("cauchy_cholesky: nonpositive pivot (underflow or duplicates)");
    }
    fact.diag(k) = d(k);
    for (Eigen::Index i = k + 1; i < n; ++i)
    {
      const Complex mik = gen(i) * std::conj(gen(k)) / (pts(i) + std::conj(pts(k)));
      fact.lower(i, k) = mik / d(k);
    }
    for (Eigen::Index i = k + 1; i < n; ++i)
    {
      const Complex num = pts(i) - pts(k);
      const Complex den = pts(i) + std::conj(pts(k));
      gen(i) *= num / den;
      d(i) *= std::norm(num) / std::norm(den);
    }
  }
  return fact;
}

/// || D^{-1/2} L^{-1} P^T (h - rom) ||_2 = || P(mu)[H - H_r] ||_H2.
inline double projected_mismatch(const CauchyFactorization &fact,
                                 const Eigen::VectorXcd &h_values,
                                 const Eigen::VectorXcd &rom_values)
{
  if (h_values.size() != fact.size() || rom_values.size() != fact.size())
  {
    throw std::invalid_argument("projected_mismatch: length mismatch");
  }
  return fact.whiten(Eigen::VectorXcd(h_values - rom_values)).norm();
}

/// Gram matrix of the tangent-space basis {v[-conj l_j], -v[-conj l_j]'}:
/// with s_jk = -(conj l_j + l_k), the blocks are 1/s, 1/s^2, and 2/s^3.
struct TangentGram
{
  Eigen::VectorXcd lambda;
  Eigen::MatrixXcd mhat; // 2r x 2r Hermitian positive definite

  /// mhat^{-1/2} via eigendecomposition; the matrix is tiny (2r x 2r).
  Eigen::MatrixXcd inverse_sqrt() const
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(mhat);
    if (es.info() != Eigen::Success)
    {
      throw std::runtime_error("TangentGram: eigendecomposition failed");
    }
    const double floor = 1e3 * std::numeric_limits<double>::epsilon() *
                         es.eigenvalues().cwiseAbs().maxCoeff();
    if (es.eigenvalues().minCoeff() <= floor)
    {
      throw std::runtime_error("TangentGram: matrix numerically singular");
    }
    return es.eigenvectors() *
           es.eigenvalues().array().rsqrt().matrix().asDiagonal() *
           es.eigenvectors().adjoint();
  }
};

inline TangentGram tangent_gram(const Eigen::VectorXcd &lambda)
{
  const Eigen::Index r = lambda.size();
  if (r == 0)
  {
    throw std::invalid_argument("tangent_gram: empty pole list");
  }
  for (Eigen::Index j = 0; j < r; ++j)
  {
    if (!(lambda(j).real() < 0.0))
    {
      throw std::invalid_argument("tangent_gram: pole not in the open left half plane");
    }
    for (Eigen::Index k = 0; k < j; ++k)
    {
      if (approximately_duplicate(lambda(j), lambda(k)))
      {
        throw std::invalid_argument("tangent_gram: repeated poles");
      }
    }
  }
  TangentGram g;
  g.lambda = lambda;
  g.mhat.resize(2 * r, 2 * r);
  for (Eigen::Index j = 0; j < r; ++j)
  {
    for (Eigen::Index k = 0; k < r; ++k)
    {
      const Complex s = -(std::conj(lambda(j)) + lambda(k));
      const Complex s2 = s * s;
      g.mhat(j, k) = 1.0 / s;
      g.mhat(j, r + k) = 1.0 / s2;
      g.mhat(r + j, k) = 1.0 / s2;
      g.mhat(r + j, r + k) = 2.0 / (s2 * s);
    }
  }
  g.mhat = 0.5 * (g.mhat + g.mhat.adjoint()).eval();
  return g;
}

namespace detail
{

inline double angle_from_cross(const Eigen::MatrixXcd &cross)
{
  // cross = B_V^* B_T; singular values are cosines of the principal angles.
  if (cross.rows() < cross.cols())
  {
    return std::asin(1.0); // some tangent direction is entirely uncovered
  }
  const Eigen::VectorXd sv = numkit::svd_values(cross);
  const double cosphi = std::clamp(sv(sv.size() - 1), 0.0, 1.0);
  return std::acos(cosphi);
}

/// Gram matrix of the tangent basis functions projected orthogonal to
/// V(mu): the trailing Schur complement Mhat - A^* M(mu)^{-1} A of the
/// bordered Gram matrix [[M, A], [A^*, Mhat]].
///
/// Forming that Schur complement from a whitened cross matrix cancels
/// catastrophically once samples cluster at -conj(lambda), which is exactly
/// the regime the outer loop drives toward. Instead the bordered matrix is
/// itself Cauchy with two confluent border nodes per pole, so eliminating
/// the sample rows one at a time keeps the multiplicative displacement
/// update. With row node x = -conj(lambda_a), column node c = -lambda_b and
/// the per-pivot factors
///
///   B = (x - mu_k)/(x + conj mu_k),   B' = dB/dx,
///   F = (c - conj mu_k)/(mu_k + c),   F' = dF/dc,
///
/// the four couplings (value/value, value/derivative, derivative/value,
/// derivative/derivative) update as derivatives of the product G B F. Every
/// operation is a product or quotient of data differences, so each entry of
/// the result keeps high relative accuracy no matter how small it is.
inline Eigen::MatrixXcd projected_tangent_gram(const Eigen::VectorXcd &mu,
                                               const Eigen::VectorXcd &lambda)
{
  const Eigen::Index n = mu.size(), r = lambda.size();
  Eigen::MatrixXcd g(r, r), h(r, r), k(r, r), w(r, r);
  for (Eigen::Index a = 0; a < r; ++a)
  {
    const Complex x = -std::conj(lambda(a));
    for (Eigen::Index b = 0; b < r; ++b)
    {
      const Complex c = -lambda(b);
      const Complex s = x + c;
      g(a, b) = 1.0 / s;
      h(a, b) = 1.0 / (s * s);
      k(a, b) = 1.0 / (s * s);
      w(a, b) = 2.0 / (s * s * s);
    }
  }
  for (Eigen::Index p = 0; p < n; ++p)
  {
    const Complex mk = mu(p), ck = std::conj(mu(p));
    for (Eigen::Index a = 0; a < r; ++a)
    {
      const Complex x = -std::conj(lambda(a));
      const Complex bx = (x - mk) / (x + ck);
      const Complex bpx = (mk + ck) / ((x + ck) * (x + ck));
      for (Eigen::Index b = 0; b < r; ++b)
      {
        const Complex c = -lambda(b);
        const Complex fc = (c - ck) / (mk + c);
        const Complex fpc = (mk + ck) / ((mk + c) * (mk + c));
        const Complex g0 = g(a, b), h0 = h(a, b), k0 = k(a, b), w0 = w(a, b);
        g(a, b) = g0 * bx * fc;
        h(a, b) = (h0 * fc - g0 * fpc) * bx;
        k(a, b) = (k0 * bx - g0 * bpx) * fc;
        w(a, b) = w0 * bx * fc - h0 * bpx * fc - k0 * bx * fpc + g0 * bpx * fpc;
      }
    }
  }
  Eigen::MatrixXcd s(2 * r, 2 * r);
  s.topLeftCorner(r, r) = g;
  s.topRightCorner(r, r) = h;
  s.bottomLeftCorner(r, r) = k;
  s.bottomRightCorner(r, r) = w;
  return 0.5 * (s + s.adjoint()).eval();
}

inline double angle_from_projected_gram(const Eigen::MatrixXcd &schur,
                                        const TangentGram &gram)
{
  // sin^2(phi_max) = lambda_max(Mhat^{-1/2} S Mhat^{-1/2}).
  const Eigen::MatrixXcd isq = gram.inverse_sqrt();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(
      Eigen::MatrixXcd(isq * schur * isq));
  if (es.info() != Eigen::Success)
  {
    throw std::runtime_error("subspace angle: eigendecomposition failed");
  }
  const double s2 = std::clamp(es.eigenvalues().maxCoeff(), 0.0, 1.0);
  return std::asin(std::sqrt(s2));
}

} // namespace detail

/// Largest principal angle between V(mu) and the two-dimensional tangent
/// space T(lambda) of a single pole. The factorization argument pins the
/// sample set; the angle itself comes from the displacement-structured
/// Schur complement, which stays accurate where the whitened cross matrix
/// of eq. (cos phi = sigma_min) loses every digit.
inline double subspace_angle_tangent(const Eigen::VectorXcd &mu,
                                     const CauchyFactorization &fact,
                                     Complex lambda_single)
{
  if (!(lambda_single.real() < 0.0))
  {
    throw std::invalid_argument("subspace_angle_tangent: pole not in C_-");
  }
  if (mu.size() != fact.size())
  {
    throw std::invalid_argument("subspace_angle_tangent: factorization size mismatch");
  }
  Eigen::VectorXcd lam(1);
  lam(0) = lambda_single;
  return detail::angle_from_projected_gram(detail::projected_tangent_gram(mu, lam),
                                           tangent_gram(lam));
}

/// Largest principal angle between V(mu) and T(lambda) for a full pole set.
inline double subspace_angle_full(const Eigen::VectorXcd &mu,
                                  const Eigen::VectorXcd &lambda)
{
  validate_points(mu);
  return detail::angle_from_projected_gram(detail::projected_tangent_gram(mu, lambda),
                                           tangent_gram(lambda));
}

/// Largest principal angle between the kernel spans V(mu) and V(nu).
inline double subspace_angle_kernels(const Eigen::VectorXcd &mu,
                                     const Eigen::VectorXcd &nu)
{
  const CauchyFactorization fmu = cauchy_cholesky(mu);
  const CauchyFactorization fnu = cauchy_cholesky(nu);
  const Eigen::Index n = mu.size(), m = nu.size();
  Eigen::MatrixXcd cross(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
  {
    for (Eigen::Index j = 0; j < m; ++j)
    {
      cross(i, j) = 1.0 / (mu(i) + std::conj(nu(j)));
    }
  }
  // Whiten rows by M(mu)^{-1/2} and columns by M(nu)^{-1/2}.
  Eigen::MatrixXcd w = fmu.whiten(cross);
  w = fnu.whiten(Eigen::MatrixXcd(w.adjoint())).adjoint();
  return detail::angle_from_cross(w);
}

} // namespace h2mor::h2space

#endif // H2MOR_H2SPACE_HPP
