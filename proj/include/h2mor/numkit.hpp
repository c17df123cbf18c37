#ifndef H2MOR_NUMKIT_HPP
#define H2MOR_NUMKIT_HPP

#include <algorithm>
#include <complex>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

// Eigen has no complex-valued generalized eigenvalue solver; use LAPACK.
extern "C"
{
  void zggev_(const char *jobvl, const char *jobvr, const int *n,
              std::complex<double> *a, const int *lda, std::complex<double> *b,
              const int *ldb, std::complex<double> *alpha,
              std::complex<double> *beta, std::complex<double> *vl,
              const int *ldvl, std::complex<double> *vr, const int *ldvr,
              std::complex<double> *work, const int *lwork, double *rwork,
              int *info);
}

namespace h2mor::numkit
{

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

inline constexpr double kRankTol = 1e-14;

/// Column-pivoted QR with rows pre-sorted by descending infinity norm.
///
/// The row sort is internal: `q` is returned in the original row order, so
/// q * r reconstructs the column-permuted input m[:, column_permutation].
/// Rank deficiency (|r_kk| < 1e-14 |r_00|) is reported via a flag, not a
/// failure.
struct QrPivoted
{
  RealMatrix q;                        // orthonormal columns, original row order
  RealMatrix r;                        // upper triangular
  std::vector<int> column_permutation; // q * r == m[:, column_permutation]
  bool rank_deficient = false;
};

inline QrPivoted qr_pivoted_row_sorted(const RealMatrix &m)
{
  const Eigen::Index rows = m.rows(), cols = m.cols();
  if (rows < cols)
  {
    throw std::invalid_argument("qr_pivoted_row_sorted: fewer rows than columns");
  }
  if (!m.allFinite())
  {
    throw std::invalid_argument("qr_pivoted_row_sorted: non-finite entries");
  }

  std::vector<int> row_order(static_cast<std::size_t>(rows));
  std::iota(row_order.begin(), row_order.end(), 0);
  std::stable_sort(row_order.begin(), row_order.end(),
                   [&m](int i, int j)
                   {
                     return m.row(i).lpNorm<Eigen::Infinity>() >
                            m.row(j).lpNorm<Eigen::Infinity>();
                   });

  RealMatrix sorted(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
  {
    sorted.row(i) = m.row(row_order[static_cast<std::size_t>(i)]);
  }

  Eigen::ColPivHouseholderQR<RealMatrix> qr(sorted);
  RealMatrix q_sorted = qr.householderQ() * RealMatrix::Identity(rows, cols);
  QrPivoted out;
  out.r = qr.matrixR().topRows(cols).template triangularView<Eigen::Upper>();
  out.q.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
  {
    out.q.row(row_order[static_cast<std::size_t>(i)]) = q_sorted.row(i);
  }
  const auto &perm = qr.colsPermutation().indices();
  out.column_permutation.resize(static_cast<std::size_t>(cols));
  for (Eigen::Index j = 0; j < cols; ++j)
  {
    out.column_permutation[static_cast<std::size_t>(j)] = perm(j);
  }
  const double lead = std::abs(out.r(0, 0));
  for (Eigen::Index k = 0; k < cols; ++k)
  {
    if (std::abs(out.r(k, k)) < kRankTol * lead)
    {
      out.rank_deficient = true;
      break;
    }
  }
  return out;
}

/// Singular values of a complex matrix in descending order.
inline RealVector svd_values(const ComplexMatrix &m)
{
  if (!m.allFinite())
  {
    throw std::invalid_argument("svd_values: non-finite entries");
  }
  if (m.rows() == 0 || m.cols() == 0)
  {
    return RealVector();
  }
  Eigen::JacobiSVD<ComplexMatrix> svd(m);
  return svd.singularValues();
}

/// Eigenvalues of a complex square matrix (multiset, solver order).
inline ComplexVector eigenvalues(const ComplexMatrix &m)
{
  if (m.rows() != m.cols())
  {
    throw std::invalid_argument("eigenvalues: matrix not square");
  }
  if (!m.allFinite())
  {
    throw std::invalid_argument("eigenvalues: non-finite entries");
  }
  Eigen::ComplexEigenSolver<ComplexMatrix> es(m, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
  {
    throw std::runtime_error("eigenvalues: QR iteration did not converge");
  }
  return es.eigenvalues();
}

/// Eigenvalues and right eigenvectors (columns).
inline std::pair<ComplexVector, ComplexMatrix>
eigen_decomposition(const ComplexMatrix &m)
{
  if (m.rows() != m.cols())
  {
    throw std::invalid_argument("eigen_decomposition: matrix not square");
  }
  Eigen::ComplexEigenSolver<ComplexMatrix> es(m, /*computeEigenvectors=*/true);
  if (es.info() != Eigen::Success)
  {
    throw std::runtime_error("eigen_decomposition: QR iteration did not converge");
  }
  return {es.eigenvalues(), es.eigenvectors()};
}

/// One generalized eigenvalue of a pencil (A, E): either a finite value or
/// the infinite eigenvalue arising from a singular E.
struct GeneralizedEigenvalue
{
  bool finite = true;
  Complex value{}; // meaningful only when finite

  static GeneralizedEigenvalue infinite()
  {
    GeneralizedEigenvalue g;
    g.finite = false;
    return g;
  }
};

struct GeneralizedEigenResult
{
  std::vector<GeneralizedEigenvalue> eigenvalues; // length n
  ComplexMatrix right_vectors;                    // n x n, columns
  ComplexMatrix left_vectors;                     // n x n, columns

  std::vector<Complex> finite_values() const
  {
    std::vector<Complex> out;
    for (const auto &g : eigenvalues)
    {
      if (g.finite)
      {
        out.push_back(g.value);
      }
    }
    return out;
  }
};

/// Generalized eigenvalues of A x = lambda E x via LAPACK zggev.
/// Infinite eigenvalues (beta ~ 0) are tagged, never encoded as a float
/// sentinel. alpha ~ beta ~ 0 indicates a (near) singular pencil.
inline GeneralizedEigenResult generalized_eigenvalues(const ComplexMatrix &a,
                                                      const ComplexMatrix &e)
{
  if (a.rows() != a.cols() || e.rows() != e.cols() || a.rows() != e.rows())
  {
    throw std::invalid_argument("generalized_eigenvalues: size mismatch");
  }
  if (!a.allFinite() || !e.allFinite())
  {
    throw std::invalid_argument("generalized_eigenvalues: non-finite entries");
  }
  const int n = static_cast<int>(a.rows());
  GeneralizedEigenResult res;
  if (n == 0)
  {
    return res;
  }

  ComplexMatrix aw = a, ew = e;
  ComplexVector alpha(n), beta(n);
  res.right_vectors.resize(n, n);
  res.left_vectors.resize(n, n);
  int lwork = std::max(1, 4 * n);
  std::vector<Complex> work(static_cast<std::size_t>(lwork));
  std::vector<double> rwork(static_cast<std::size_t>(8 * n));
  int info = 0;
  const char jobvl = 'V', jobvr = 'V';
  zggev_(&jobvl, &jobvr, &n, aw.data(), &n, ew.data(), &n, alpha.data(),
         beta.data(), res.left_vectors.data(), &n, res.right_vectors.data(),
         &n, work.data(), &lwork, rwork.data(), &info);
  if (info != 0)
  {
    throw std::runtime_error("generalized_eigenvalues: zggev failed, info=" +
                             std::to_string(info));
  }

  const double scale_a = std::max(a.cwiseAbs().maxCoeff(), 1.0);
  const double scale_e = std::max(e.cwiseAbs().maxCoeff(), 1.0);
  res.eigenvalues.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j)
  {
    const double ab = std::abs(alpha(j)), bb = std::abs(beta(j));
    if (bb <= 1e-14 * scale_e * std::max(1.0, ab / scale_a))
    {
      if (ab <= 1e-14 * scale_a)
      {
        throw std::runtime_error("generalized_eigenvalues: singular pencil");
      }
      res.eigenvalues.push_back(GeneralizedEigenvalue::infinite());
    }
    else
    {
      GeneralizedEigenvalue g;
      g.value = alpha(j) / beta(j);
      res.eigenvalues.push_back(g);
    }
  }
  return res;
}

/// Solve A W + W A^T = rhs for symmetric rhs and stable A (Bartels-Stewart
/// via complex Schur). Rejects unstable A.
inline RealMatrix solve_lyapunov(const RealMatrix &a, const RealMatrix &rhs)
{
  const Eigen::Index n = a.rows();
  if (a.cols() != n || rhs.rows() != n || rhs.cols() != n)
  {
    throw std::invalid_argument("solve_lyapunov: size mismatch");
  }
  if (!a.allFinite() || !rhs.allFinite())
  {
    throw std::invalid_argument("solve_lyapunov: non-finite entries");
  }

  Eigen::ComplexSchur<ComplexMatrix> schur(a.cast<Complex>(), /*computeU=*/true);
  if (schur.info() != Eigen::Success)
  {
    throw std::runtime_error("solve_lyapunov: Schur decomposition failed");
  }
  const ComplexMatrix &t = schur.matrixT();
  const ComplexMatrix &u = schur.matrixU();
  for (Eigen::Index k = 0; k < n; ++k)
  {
    if (t(k, k).real() >= 0.0)
    {
      throw std::invalid_argument("solve_lyapunov: A is not stable");
    }
  }

  // T Y + Y T^* = U^* rhs U. T^* is lower triangular, so column k of Y T^*
  // couples to columns j >= k; solve back to front.
  ComplexMatrix c = u.adjoint() * rhs.cast<Complex>() * u;
  ComplexMatrix y = ComplexMatrix::Zero(n, n);
  for (Eigen::Index k = n - 1; k >= 0; --k)
  {
    ComplexVector col = c.col(k);
    for (Eigen::Index j = k + 1; j < n; ++j)
    {
      col -= y.col(j) * std::conj(t(k, j));
    }
    ComplexMatrix shifted = t;
    shifted.diagonal().array() += std::conj(t(k, k));
    y.col(k) = shifted.template triangularView<Eigen::Upper>().solve(col);
  }
  RealMatrix w = (u * y * u.adjoint()).real();
  return 0.5 * (w + w.transpose());
}

/// Minimum-cost assignment for a square cost matrix (Kuhn-Munkres via
/// shortest augmenting paths). Returns perm with row i matched to column
/// perm[i].
inline std::vector<int> linear_assignment(const RealMatrix &cost)
{
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n)
  {
    throw std::invalid_argument("linear_assignment: cost matrix not square");
  }
  if (!cost.allFinite())
  {
    throw std::invalid_argument("linear_assignment: non-finite entries");
  }
  if (n == 0)
  {
    return {};
  }

  // 1-based Jonker-Volgenant style potentials.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> match(static_cast<std::size_t>(n) + 1, 0); // column -> row
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i)
  {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, false);
    do
    {
      used[static_cast<std::size_t>(j0)] = true;
      const int i0 = match[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j)
      {
        if (used[static_cast<std::size_t>(j)])
        {
          continue;
        }
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                           v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)])
        {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta)
        {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j)
      {
        if (used[static_cast<std::size_t>(j)])
        {
          u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        }
        else
        {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do
    {
      const int j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> perm(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j)
  {
    perm[static_cast<std::size_t>(match[static_cast<std::size_t>(j)]) - 1] = j - 1;
  }
  return perm;
}

/// Minimum over x of [x; y]^* [[A, B], [B^*, C]] [x; y] for Hermitian blocks
/// with A positive definite: y^* (C - B^* A^{-1} B) y.
inline double schur_complement_min(const ComplexMatrix &a, const ComplexMatrix &b,
                                   const ComplexMatrix &c, const ComplexVector &y)
{
  if (a.rows() != a.cols() || c.rows() != c.cols() || b.rows() != a.rows() ||
      b.cols() != c.rows() || y.size() != c.rows())
  {
    throw std::invalid_argument("schur_complement_min: block size mismatch");
  }
  if ((a - a.adjoint()).cwiseAbs().maxCoeff() >
      1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()))
  {
    throw std::invalid_argument("schur_complement_min: A not Hermitian");
  }
  Eigen::LLT<ComplexMatrix> llt(0.5 * (a + a.adjoint()));
  if (llt.info() != Eigen::Success)
  {
    throw std::invalid_argument("schur_complement_min: A not positive definite");
  }
  const ComplexVector by = b * y;
  // dot() conjugates its left argument: y.dot(C y) = y^* C y.
  return std::real(y.dot(c * y)) - std::real(by.dot(llt.solve(by)));
}

} // namespace h2mor::numkit

#endif // H2MOR_NUMKIT_HPP
