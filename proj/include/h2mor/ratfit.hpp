#ifndef H2MOR_RATFIT_HPP
#define H2MOR_RATFIT_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include <h2mor/h2space.hpp>
#include <h2mor/numkit.hpp>
#include <h2mor/systems.hpp>

namespace h2mor::ratfit
{

using Complex = std::complex<double>;

// Lower box bound on the denominator coefficients: closed feasible set for
// the trust-region iteration; b_k >= kBMin > 0 keeps every pole strictly in
// the left half plane.
inline constexpr double kBMin = 1e-10;

/// Real partial fraction parameters: H_r(z) = sum_p (a[2p+1] z + a[2p]) /
/// (z^2 + b[2p+1] z + b[2p]) [+ a[r-1]/(z + b[r-1]) for odd r].
struct PartialFractionParams
{
  Eigen::VectorXd a;
  Eigen::VectorXd b;
};

/// Poles of the denominator parameterized by b (quadratic formula per pair).
inline Eigen::VectorXcd params_to_poles(const Eigen::VectorXd &b)
{
  const Eigen::Index r = b.size();
  Eigen::VectorXcd poles(r);
  for (Eigen::Index k = 0; k + 1 < r; k += 2)
  {
    const double disc = 0.25 * b(k + 1) * b(k + 1) - b(k);
    if (disc < 0.0)
    {
      poles(k) = Complex(-0.5 * b(k + 1), std::sqrt(-disc));
      poles(k + 1) = std::conj(poles(k));
    }
    else
    {
      // Cancellation-free real roots: both strictly negative since b > 0.
      const double big = 0.5 * b(k + 1) + std::sqrt(disc);
      poles(k) = Complex(-b(k) / big, 0.0);
      poles(k + 1) = Complex(-big, 0.0);
    }
  }
  if (r % 2 == 1)
  {
    poles(r - 1) = Complex(-b(r - 1), 0.0);
  }
  return poles;
}

/// Conjugate-closed, strictly stable feasible b from a pole list.
/// Complex conjugate pairs map to quadratic terms (b1 = |l|^2, b2 = -2 Re l);
/// real poles pair up into quadratics, with a single leftover filling the
/// odd first-order slot. Poles on the imaginary axis are clamped to
/// Re l = -kBMin.
inline Eigen::VectorXd poles_to_params(const Eigen::VectorXcd &poles)
{
  const Eigen::Index r = poles.size();
  if (r == 0)
  {
    throw std::invalid_argument("poles_to_params: empty pole list");
  }
  std::vector<Complex> pairs; // representative with Im > 0
  std::vector<double> reals;
  std::vector<bool> used(static_cast<std::size_t>(r), false);
  const double scale = std::max(poles.cwiseAbs().maxCoeff(), 1.0);
  for (Eigen::Index j = 0; j < r; ++j)
  {
    if (used[static_cast<std::size_t>(j)])
    {
      continue;
    }
    Complex lam = poles(j);
    if (lam.real() > -kBMin)
    {
      lam = Complex(-kBMin, lam.imag());
    }
    if (std::abs(lam.imag()) <= 1e-12 * scale)
    {
      used[static_cast<std::size_t>(j)] = true;
      reals.push_back(lam.real());
      continue;
    }
    Eigen::Index partner = -1;
    double best = 1e300;
    for (Eigen::Index k = 0; k < r; ++k)
    {
      if (k == j || used[static_cast<std::size_t>(k)])
      {
        continue;
      }
      const double d = std::abs(poles(k) - std::conj(lam));
      if (d < best)
      {
        best = d;
        partner = k;
      }
    }
    if (partner < 0 || best > 1e-8 * scale)
    {
      throw std::invalid_argument("poles_to_params: pole set not closed under conjugation");
    }
    used[static_cast<std::size_t>(j)] = true;
    used[static_cast<std::size_t>(partner)] = true;
    pairs.push_back(lam.imag() > 0 ? lam : std::conj(lam));
  }
  std::sort(pairs.begin(), pairs.end(),
            [](Complex x, Complex y)
            { return x.real() != y.real() ? x.real() < y.real() : x.imag() < y.imag(); });
  std::sort(reals.begin(), reals.end());

  Eigen::VectorXd b(r);
  Eigen::Index slot = 0;
  for (const Complex lam : pairs)
  {
    b(slot) = std::max(std::norm(lam), kBMin);
    b(slot + 1) = std::max(-2.0 * lam.real(), kBMin);
    slot += 2;
  }
  while (reals.size() >= 2 && slot + 1 < r)
  {
    const double l1 = reals[reals.size() - 2], l2 = reals.back();
    reals.pop_back();
    reals.pop_back();
    b(slot) = std::max(l1 * l2, kBMin);
    b(slot + 1) = std::max(-(l1 + l2), kBMin);
    slot += 2;
  }
  if (slot < r)
  {
    if (reals.size() != 1 || slot + 1 != r)
    {
      throw std::invalid_argument("poles_to_params: pairing failed (odd/even mismatch)");
    }
    b(slot) = std::max(-reals[0], kBMin);
  }
  return b;
}

/// Closes a pole list under conjugation and flips it into the open left
/// half plane. Poles are matched to their nearest conjugate partner with
/// the Kuhn-Munkres assignment on |l_j - conj(l_k)|, each matched pair is
/// averaged, and a self-matched pole is projected onto the real axis.
inline Eigen::VectorXcd realify_poles(const Eigen::VectorXcd &poles)
{
  const Eigen::Index r = poles.size();
  if (r == 0)
  {
    throw std::invalid_argument("realify_poles: empty pole list");
  }
  Eigen::MatrixXd cost(r, r);
  for (Eigen::Index j = 0; j < r; ++j)
  {
    for (Eigen::Index k = 0; k < r; ++k)
    {
      cost(j, k) = std::abs(poles(j) - std::conj(poles(k)));
    }
  }
  const std::vector<int> match = numkit::linear_assignment(cost);

  Eigen::VectorXcd out(r);
  Eigen::Index slot = 0;
  std::vector<bool> used(static_cast<std::size_t>(r), false);
  for (Eigen::Index j = 0; j < r; ++j)
  {
    if (used[static_cast<std::size_t>(j)])
    {
      continue;
    }
    const Eigen::Index k = match[static_cast<std::size_t>(j)];
    if (k == j || used[static_cast<std::size_t>(k)])
    {
      // Self-matched (or partner already consumed): nearest to its own
      // conjugate, so project onto the real axis.
      used[static_cast<std::size_t>(j)] = true;
      out(slot++) = Complex(poles(j).real(), 0.0);
      continue;
    }
    used[static_cast<std::size_t>(j)] = true;
    used[static_cast<std::size_t>(k)] = true;
    const Complex avg = 0.5 * (poles(j) + std::conj(poles(k)));
    out(slot++) = avg;
    out(slot++) = std::conj(avg);
  }
  for (Eigen::Index j = 0; j < r; ++j)
  {
    if (out(j).real() > 0.0)
    {
      out(j) = Complex(-out(j).real(), out(j).imag());
    }
    if (out(j).real() == 0.0)
    {
      out(j) = Complex(-kBMin, out(j).imag());
    }
  }
  return out;
}

/// Columns of the partial-fraction basis evaluated at mu: per quadratic
/// pair the columns [1/d, mu/d] with d = mu^2 + b2 mu + b1, plus the
/// trailing (mu + b_r)^{-1} column when r is odd.
inline Eigen::MatrixXcd build_theta(const Eigen::VectorXd &b, const Eigen::VectorXcd &mu)
{
  const Eigen::Index n = mu.size(), r = b.size();
  Eigen::MatrixXcd theta(n, r);
  for (Eigen::Index k = 0; k + 1 < r; k += 2)
  {
    for (Eigen::Index i = 0; i < n; ++i)
    {
      const Complex d = mu(i) * mu(i) + b(k + 1) * mu(i) + b(k);
      if (d == Complex(0.0, 0.0))
      {
        throw std::runtime_error("build_theta: interpolation point collides with a pole");
      }
      theta(i, k) = 1.0 / d;
      theta(i, k + 1) = mu(i) / d;
    }
  }
  if (r % 2 == 1)
  {
    for (Eigen::Index i = 0; i < n; ++i)
    {
      const Complex d = mu(i) + b(r - 1);
      if (d == Complex(0.0, 0.0))
      {
        throw std::runtime_error("build_theta: interpolation point collides with a pole");
      }
      theta(i, r - 1) = 1.0 / d;
    }
  }
  return theta;
}

/// Weighting operator pair: the action of M^{-1/2} (or a diagonal
/// quadrature weight) and of its adjoint.
struct Weighting
{
  std::function<Eigen::VectorXcd(const Eigen::VectorXcd &)> apply;
  std::function<Eigen::VectorXcd(const Eigen::VectorXcd &)> apply_adjoint;

  static Weighting from_cauchy(const h2space::CauchyFactorization &fact)
  {
    auto shared = std::make_shared<h2space::CauchyFactorization>(fact);
    Weighting w;
    w.apply = [shared](const Eigen::VectorXcd &z) { return shared->whiten(z); };
    w.apply_adjoint = [shared](const Eigen::VectorXcd &z)
    { return shared->whiten_adjoint(z); };
    return w;
  }

  static Weighting from_diagonal(const Eigen::VectorXd &sqrt_weights)
  {
    auto shared = std::make_shared<Eigen::VectorXd>(sqrt_weights);
    Weighting w;
    w.apply = [shared](const Eigen::VectorXcd &z) -> Eigen::VectorXcd
    { return shared->array() * z.array(); };
    w.apply_adjoint = w.apply;
    return w;
  }
};

struct VarproResult
{
  Eigen::VectorXd residual; // stacked [Re; Im], length 2m
  Eigen::MatrixXd jacobian; // 2m x r
  Eigen::VectorXd a;        // linear coefficients for fixed b
  bool rank_deficient = false;
  double residual_norm = 0.0;
};

namespace detail
{

/// Variable-projection residual and Jacobian of the weighted rational fit.
///
/// The residual is (I - Q Q^T) h_w with [Q, R] the column-pivoted
/// row-sorted QR of the stacked whitened basis; its Jacobian combines the
/// two Golub-Pereyra terms
///   J_j = -P_perp (d Theta_j) a - (Theta^+)^T (d Theta_j)^T rho.
/// `extra_rows` appends constant rows to the basis (the QuadVF moment rows),
/// which therefore contribute nothing to d Theta_j.
inline VarproResult varpro_engine(const Eigen::VectorXd &b, const Eigen::VectorXcd &mu,
                                  const Eigen::VectorXcd &h, const Weighting &weight,
                                  const Eigen::MatrixXd &extra_rows)
{
  const Eigen::Index n = mu.size();
  const Eigen::Index r = b.size();
  const Eigen::Index extra = extra_rows.rows();
  const Eigen::Index m = n + extra;
  if (h.size() != m)
  {
    throw std::invalid_argument("varpro: value vector length mismatch");
  }
  if ((b.array() <= 0.0).any())
  {
    throw std::invalid_argument("varpro: infeasible denominator coefficients");
  }

  Eigen::MatrixXcd theta(m, r);
  theta.topRows(n) = build_theta(b, mu);
  if (extra > 0)
  {
    theta.bottomRows(extra) = extra_rows.cast<Complex>();
  }

  Eigen::MatrixXcd wt(m, r);
  for (Eigen::Index j = 0; j < r; ++j)
  {
    wt.col(j) = weight.apply(Eigen::VectorXcd(theta.col(j)));
  }
  Eigen::MatrixXd stacked(2 * m, r);
  stacked.topRows(m) = wt.real();
  stacked.bottomRows(m) = wt.imag();

  // Equilibrate the columns before factoring: whitened basis columns span
  // many orders of magnitude once samples cluster, and the QR roundoff
  // (~eps * column scale) would otherwise drown the projected residual.
  Eigen::VectorXd col_scale(r);
  for (Eigen::Index j = 0; j < r; ++j)
  {
    const double nrm = stacked.col(j).norm();
    col_scale(j) = nrm > 0.0 ? 1.0 / nrm : 1.0;
    stacked.col(j) *= col_scale(j);
  }

  const numkit::QrPivoted qr = numkit::qr_pivoted_row_sorted(stacked);

  const Eigen::VectorXcd wh = weight.apply(h);
  Eigen::VectorXd h_stack(2 * m);
  h_stack.head(m) = wh.real();
  h_stack.tail(m) = wh.imag();

  const Eigen::VectorXd qth = qr.q.transpose() * h_stack;

  VarproResult out;
  out.rank_deficient = qr.rank_deficient;
  out.residual = h_stack - qr.q * qth;
  out.residual_norm = out.residual.norm();

  // Back-substitute R a = Q^T h, truncating past any rank break.
  Eigen::Index rank = r;
  const double lead = std::abs(qr.r(0, 0));
  for (Eigen::Index k = 0; k < r; ++k)
  {
    if (std::abs(qr.r(k, k)) < numkit::kRankTol * lead)
    {
      rank = k;
      break;
    }
  }
  Eigen::VectorXd a_perm = Eigen::VectorXd::Zero(r);
  a_perm.head(rank) = qr.r.topLeftCorner(rank, rank)
                          .triangularView<Eigen::Upper>()
                          .solve(qth.head(rank));
  out.a.resize(r);
  out.a.setZero();
  for (Eigen::Index i = 0; i < r; ++i)
  {
    const Eigen::Index orig = qr.column_permutation[static_cast<std::size_t>(i)];
    out.a(orig) = a_perm(i) * col_scale(orig); // undo the equilibration
  }

  // Complex residual and the adjoint-weighted residual shared by the
  // second VARPRO term.
  Eigen::VectorXcd resid_c(m);
  resid_c.real() = out.residual.head(m);
  resid_c.imag() = out.residual.tail(m);
  const Eigen::VectorXcd w_adj = weight.apply_adjoint(resid_c);

  out.jacobian.resize(2 * m, r);
  Eigen::VectorXcd dcol[2];
  for (Eigen::Index j = 0; j < r; ++j)
  {
    Eigen::Index cols[2] = {-1, -1};
    const bool odd_tail = (r % 2 == 1 && j == r - 1);
    if (odd_tail)
    {
      dcol[0].resize(n);
      for (Eigen::Index i = 0; i < n; ++i)
      {
        const Complex d = mu(i) + b(j);
        dcol[0](i) = -1.0 / (d * d);
      }
      cols[0] = j;
    }
    else
    {
      const Eigen::Index p = j / 2;
      dcol[0].resize(n);
      dcol[1].resize(n);
      for (Eigen::Index i = 0; i < n; ++i)
      {
        const Complex d = mu(i) * mu(i) + b(2 * p + 1) * mu(i) + b(2 * p);
        const Complex d2 = d * d;
        if (j % 2 == 0)
        {
          dcol[0](i) = -1.0 / d2;          // d theta_{2p} / d b1
          dcol[1](i) = -mu(i) / d2;        // d theta_{2p+1} / d b1
        }
        else
        {
          dcol[0](i) = -mu(i) / d2;        // d theta_{2p} / d b2
          dcol[1](i) = -mu(i) * mu(i) / d2; // d theta_{2p+1} / d b2
        }
      }
      cols[0] = 2 * p;
      cols[1] = 2 * p + 1;
    }

    // First term: -P_perp W (dTheta_j a), zero on the constant extra rows.
    Eigen::VectorXcd v1 = Eigen::VectorXcd::Zero(m);
    for (int c = 0; c < 2; ++c)
    {
      if (cols[c] >= 0)
      {
        v1.head(n) += dcol[c] * out.a(cols[c]);
      }
    }
    const Eigen::VectorXcd wv1 = weight.apply(v1);
    Eigen::VectorXd v1_stack(2 * m);
    v1_stack.head(m) = wv1.real();
    v1_stack.tail(m) = wv1.imag();
    Eigen::VectorXd term1 = -(v1_stack - qr.q * (qr.q.transpose() * v1_stack));

    // Second term: -(Theta^+)^T (dTheta_j)^T rho.
    Eigen::VectorXd vvec = Eigen::VectorXd::Zero(r);
    for (int c = 0; c < 2; ++c)
    {
      if (cols[c] >= 0)
      {
        vvec(cols[c]) = dcol[c].dot(w_adj.head(n)).real();
      }
    }
    // (Theta^+)^T = Q R^{-T} Pi^T S with S the equilibration scales.
    Eigen::VectorXd vperm(r);
    for (Eigen::Index i = 0; i < r; ++i)
    {
      const Eigen::Index orig = qr.column_permutation[static_cast<std::size_t>(i)];
      vperm(i) = vvec(orig) * col_scale(orig);
    }
    Eigen::VectorXd y = Eigen::VectorXd::Zero(r);
    y.head(rank) = qr.r.topLeftCorner(rank, rank)
                       .transpose()
                       .triangularView<Eigen::Lower>()
                       .solve(vperm.head(rank));
    out.jacobian.col(j) = term1 - qr.q * y;
  }
  return out;
}

} // namespace detail

/// VARPRO residual/Jacobian under the Cauchy (projected H2) weighting.
inline VarproResult varpro_residual_jacobian(const Eigen::VectorXd &b,
                                             const Eigen::VectorXcd &mu,
                                             const Eigen::VectorXcd &h,
                                             const h2space::CauchyFactorization &fact)
{
  if (mu.size() != fact.size())
  {
    throw std::invalid_argument("varpro: factorization size mismatch");
  }
  return detail::varpro_engine(b, mu, h, Weighting::from_cauchy(fact),
                               Eigen::MatrixXd(0, b.size()));
}

enum class FitInitializer
{
  previous_poles,
  aaa
};

struct FitResult
{
  PartialFractionParams params;
  systems::RationalRom rom;
  double residual_norm = 0.0;
  double jacobian_condition = 0.0;
  int iterations = 0;
  FitInitializer initializer_used = FitInitializer::aaa;
  bool converged = true;
  bool degree_deficient = false;
};

namespace detail
{

struct OptimizerOutcome
{
  Eigen::VectorXd b;
  Eigen::VectorXd a;
  double residual_norm = 0.0;
  double initial_residual_norm = 0.0;
  double jacobian_condition = 0.0;
  int iterations = 0;
  bool converged = false;
  bool degree_deficient = false;
};

/// Box-constrained Gauss-Newton with Levenberg-Marquardt damping. Steps
/// that leave the box are both projected onto it and reflected across the
/// violated bound; the better candidate wins. Stops on the projected
/// gradient (1e-10), the step size (1e-12), a vanishing residual, or the
/// rank-deficiency signal (the rational approximation has degree < r).
inline OptimizerOutcome
optimize_b(Eigen::VectorXd b, const std::function<VarproResult(const Eigen::VectorXd &)> &fn,
           double h_scale, double b_min = kBMin, int max_iter = 200, double gtol = 1e-10,
           double xtol = 1e-12)
{
  OptimizerOutcome out;
  b = b.cwiseMax(b_min);
  VarproResult cur = fn(b);
  out.initial_residual_norm = cur.residual_norm;
  double f = 0.5 * cur.residual_norm * cur.residual_norm;
  double damping = 1e-3;

  const auto finish = [&](bool converged)
  {
    out.b = b;
    out.a = cur.a;
    out.residual_norm = cur.residual_norm;
    out.converged = converged;
    const Eigen::VectorXd sv =
        Eigen::JacobiSVD<Eigen::MatrixXd>(cur.jacobian).singularValues();
    out.jacobian_condition =
        sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : std::numeric_limits<double>::infinity();
    return out;
  };

  for (out.iterations = 0; out.iterations < max_iter; ++out.iterations)
  {
    if (cur.rank_deficient)
    {
      out.degree_deficient = true;
      return finish(false);
    }
    if (cur.residual_norm <= 1e-14 * std::max(1.0, h_scale))
    {
      return finish(true);
    }
    const Eigen::VectorXd grad = cur.jacobian.transpose() * cur.residual;
    Eigen::VectorXd pgrad = grad;
    for (Eigen::Index k = 0; k < b.size(); ++k)
    {
      if (b(k) <= b_min && grad(k) > 0.0)
      {
        pgrad(k) = 0.0; // the active bound blocks this descent direction
      }
    }
    if (pgrad.lpNorm<Eigen::Infinity>() <= gtol * std::max(1.0, cur.residual_norm))
    {
      return finish(true);
    }

    const Eigen::MatrixXd jtj = cur.jacobian.transpose() * cur.jacobian;
    bool stepped = false;
    for (int attempt = 0; attempt < 25 && !stepped; ++attempt)
    {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal() += damping * jtj.diagonal().cwiseMax(1e-12);
      const Eigen::VectorXd delta = Eigen::LDLT<Eigen::MatrixXd>(damped).solve(-grad);

      Eigen::VectorXd cand_proj = (b + delta).cwiseMax(b_min);
      Eigen::VectorXd cand_refl = b + delta;
      for (Eigen::Index k = 0; k < b.size(); ++k)
      {
        if (cand_refl(k) < b_min)
        {
          cand_refl(k) = 2.0 * b_min - cand_refl(k);
        }
      }
      for (const Eigen::VectorXd &cand : {cand_proj, cand_refl})
      {
        VarproResult trial;
        try
        {
          trial = fn(cand);
        }
        catch (const std::runtime_error &)
        {
          continue; // pole collided with a sample; treat as no progress
        }
        const double ft = 0.5 * trial.residual_norm * trial.residual_norm;
        if (ft < f)
        {
          const double step = (cand - b).norm();
          b = cand;
          cur = std::move(trial);
          f = ft;
          damping = std::max(damping / 3.0, 1e-14);
          stepped = true;
          if (step <= xtol * (1.0 + b.norm()))
          {
            return finish(true);
          }
          break;
        }
      }
      if (!stepped)
      {
        damping *= 4.0;
        if (damping > 1e14)
        {
          return finish(false); // no descent direction left
        }
      }
    }
    if (!stepped)
    {
      return finish(false);
    }
  }
  return finish(false);
}

} // namespace detail

/// Greedy barycentric rational approximation (AAA), unweighted. Support
/// points are chosen at the maximum residual; weights solve the Loewner
/// least-squares problem; poles come from the arrowhead generalized
/// eigenvalue problem.
struct AaaResult
{
  Eigen::VectorXcd support;
  Eigen::VectorXcd support_values;
  Eigen::VectorXcd weights;
  Eigen::VectorXcd poles;

  Complex evaluate(Complex z) const
  {
    Complex num(0.0, 0.0), den(0.0, 0.0);
    for (Eigen::Index k = 0; k < support.size(); ++k)
    {
      if (z == support(k))
      {
        return support_values(k);
      }
      const Complex c = weights(k) / (z - support(k));
      num += c * support_values(k);
      den += c;
    }
    return num / den;
  }
};

inline AaaResult aaa(const Eigen::VectorXcd &mu, const Eigen::VectorXcd &h, int degree,
                     double tol = 1e-13)
{
  const Eigen::Index n = mu.size();
  if (h.size() != n || n < 2)
  {
    throw std::invalid_argument("aaa: need at least two samples");
  }
  if (degree < 0 || degree >= n)
  {
    throw std::invalid_argument("aaa: degree must satisfy 0 <= degree < n");
  }
  const int max_terms = std::min<int>(static_cast<int>(n) - 1, degree + 1);
  const double fscale = h.cwiseAbs().maxCoeff();

  std::vector<Eigen::Index> support;
  std::vector<bool> is_support(static_cast<std::size_t>(n), false);
  Eigen::VectorXcd current = Eigen::VectorXcd::Constant(n, h.mean());
  Eigen::VectorXcd weights;

  while (static_cast<int>(support.size()) < max_terms)
  {
    Eigen::Index pick = -1;
    double worst = -1.0;
    for (Eigen::Index i = 0; i < n; ++i)
    {
      if (is_support[static_cast<std::size_t>(i)])
      {
        continue;
      }
      const double e = std::abs(h(i) - current(i));
      if (e > worst)
      {
        worst = e;
        pick = i;
      }
    }
    if (pick < 0 || (worst <= tol * fscale && !support.empty()))
    {
      break;
    }
    support.push_back(pick);
    is_support[static_cast<std::size_t>(pick)] = true;

    const Eigen::Index m = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXcd loewner(n - m, m);
    Eigen::Index row = 0;
    for (Eigen::Index i = 0; i < n; ++i)
    {
      if (is_support[static_cast<std::size_t>(i)])
      {
        continue;
      }
      for (Eigen::Index k = 0; k < m; ++k)
      {
        const Eigen::Index s = support[static_cast<std::size_t>(k)];
        loewner(row, k) = (h(i) - h(s)) / (mu(i) - mu(s));
      }
      ++row;
    }
    if (loewner.rows() == 0)
    {
      weights = Eigen::VectorXcd::Ones(m);
      break;
    }
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(loewner, Eigen::ComputeFullV);
    weights = svd.matrixV().col(m - 1);

    // Update the barycentric approximation at the non-support points.
    for (Eigen::Index i = 0; i < n; ++i)
    {
      if (is_support[static_cast<std::size_t>(i)])
      {
        current(i) = h(i);
        continue;
      }
      Complex num(0.0, 0.0), den(0.0, 0.0);
      for (Eigen::Index k = 0; k < m; ++k)
      {
        const Eigen::Index s = support[static_cast<std::size_t>(k)];
        const Complex c = weights(k) / (mu(i) - mu(s));
        num += c * h(s);
        den += c;
      }
      current(i) = num / den;
    }
  }

  AaaResult out;
  const Eigen::Index m = static_cast<Eigen::Index>(support.size());
  out.support.resize(m);
  out.support_values.resize(m);
  for (Eigen::Index k = 0; k < m; ++k)
  {
    out.support(k) = mu(support[static_cast<std::size_t>(k)]);
    out.support_values(k) = h(support[static_cast<std::size_t>(k)]);
  }
  out.weights = weights;

  if (m >= 2)
  {
    // Arrowhead pencil: finite eigenvalues are the poles of the barycentric
    // denominator.
    Eigen::MatrixXcd arrow = Eigen::MatrixXcd::Zero(m + 1, m + 1);
    Eigen::MatrixXcd mass = Eigen::MatrixXcd::Zero(m + 1, m + 1);
    for (Eigen::Index k = 0; k < m; ++k)
    {
      arrow(0, k + 1) = weights(k);
      arrow(k + 1, 0) = 1.0;
      arrow(k + 1, k + 1) = out.support(k);
      mass(k + 1, k + 1) = 1.0;
    }
    const auto gen = numkit::generalized_eigenvalues(arrow, mass);
    const auto finite = gen.finite_values();
    out.poles.resize(static_cast<Eigen::Index>(finite.size()));
    for (std::size_t k = 0; k < finite.size(); ++k)
    {
      out.poles(static_cast<Eigen::Index>(k)) = finite[k];
    }
  }
  else
  {
    out.poles.resize(0);
  }
  return out;
}

/// Weighted least-squares rational fit of degree (r-1, r) on the sample
/// set, trying the previous-pole initialization (when provided and of
/// matching dimension) and the AAA initialization, and keeping the smaller
/// residual; ties go to the previous poles.
inline FitResult fit(const Eigen::VectorXcd &mu, const Eigen::VectorXcd &h, int r,
                     const h2space::CauchyFactorization &fact,
                     const std::optional<Eigen::VectorXcd> &initial_poles = {},
                     double b_min = kBMin)
{
  const Eigen::Index n = mu.size();
  if (r < 1)
  {
    throw std::invalid_argument("fit: degree must be positive");
  }
  if (h.size() != n || fact.size() != n)
  {
    throw std::invalid_argument("fit: sample set size mismatch");
  }
  if (n < 2 * r)
  {
    throw std::invalid_argument("fit: underdetermined (need n >= 2r); the outer loop "
                                "chooses an intermediate dimension");
  }

  const Weighting weight = Weighting::from_cauchy(fact);
  const Eigen::MatrixXd no_extra(0, r);
  auto objective = [&](const Eigen::VectorXd &b)
  { return detail::varpro_engine(b, mu, h, weight, no_extra); };
  const double h_scale = weight.apply(h).norm();

  struct Candidate
  {
    detail::OptimizerOutcome outcome;
    FitInitializer tag;
  };
  std::vector<Candidate> candidates;

  if (initial_poles && initial_poles->size() == r)
  {
    try
    {
      const Eigen::VectorXd b0 = poles_to_params(realify_poles(*initial_poles));
      candidates.push_back({detail::optimize_b(b0, objective, h_scale, b_min),
                            FitInitializer::previous_poles});
    }
    catch (const std::exception &)
    {
      // previous poles unusable; fall through to AAA
    }
  }

  try
  {
    AaaResult az = aaa(mu, h, r);
    Eigen::VectorXcd poles = az.poles;
    if (poles.size() > r)
    {
      poles = poles.head(r).eval();
    }
    if (poles.size() < r)
    {
      // Degenerate data: pad with well-separated real poles.
      const double scale =
          poles.size() > 0 ? std::max(poles.cwiseAbs().maxCoeff(), 1.0) : 1.0;
      Eigen::VectorXcd padded(r);
      padded.head(poles.size()) = poles;
      for (Eigen::Index k = poles.size(); k < r; ++k)
      {
        padded(k) = Complex(-scale * static_cast<double>(k - poles.size() + 1), 0.0);
      }
      poles = padded;
    }
    const Eigen::VectorXd b0 = poles_to_params(realify_poles(poles));
    candidates.push_back(
        {detail::optimize_b(b0, objective, h_scale, b_min), FitInitializer::aaa});
  }
  catch (const std::exception &)
  {
    // AAA initialization unusable
  }

  if (candidates.empty())
  {
    throw std::runtime_error("fit: all initializations infeasible");
  }

  const Candidate *best = &candidates.front();
  for (const Candidate &c : candidates)
  {
    if (c.outcome.residual_norm < best->outcome.residual_norm)
    {
      best = &c;
    }
  }

  FitResult out;
  out.params.a = best->outcome.a;
  out.params.b = best->outcome.b;
  out.rom = systems::RationalRom::from_partial_fractions(best->outcome.a, best->outcome.b);
  out.residual_norm = best->outcome.residual_norm;
  out.jacobian_condition = best->outcome.jacobian_condition;
  out.iterations = best->outcome.iterations;
  out.initializer_used = best->tag;
  out.converged = best->outcome.converged;
  out.degree_deficient = best->outcome.degree_deficient;
  return out;
}

} // namespace h2mor::ratfit

#endif // H2MOR_RATFIT_HPP
