#ifndef H2MOR_SYSTEMS_HPP
#define H2MOR_SYSTEMS_HPP

#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include <h2mor/numkit.hpp>

namespace h2mor::systems
{

using Complex = std::complex<double>;

/// x' = A x + b u, y = c^T x (optionally E x' = ...). Real SISO realization.
struct StateSpace
{
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  std::optional<Eigen::MatrixXd> e;

  Eigen::Index order() const { return a.rows(); }

  void validate() const
  {
    const Eigen::Index n = a.rows();
    if (a.cols() != n || b.size() != n || c.size() != n)
    {
      throw std::invalid_argument("StateSpace: inconsistent dimensions");
    }
    if (e && (e->rows() != n || e->cols() != n))
    {
      throw std::invalid_argument("StateSpace: mass matrix dimension mismatch");
    }
  }

  /// Equivalent realization with identity mass matrix.
  StateSpace standard_form() const
  {
    validate();
    if (!e)
    {
      return *this;
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(*e);
    StateSpace out;
    out.a = lu.solve(a);
    out.b = lu.solve(b);
    out.c = c;
    return out;
  }
};

/// Delay system H(z) = c^T (z E - A0 - exp(-tau z) A1)^{-1} b built on the
/// tridiagonal template T (ones on the first super/subdiagonal and at the
/// (1,1), (n,n) corners):
///   E  = (2/sqrt(eps)) I + T
///   A0 = ((2+2 rho)/(tau rho)) (T - (2/sqrt(eps)) I)
///   A1 = ((2-2 rho)/(tau rho)) (T - (2/sqrt(eps)) I)
/// with b = e1 + e2 and c = b.
struct DelaySystem
{
  int size_n = 0;
  double delay_tau = 1.0;
  double rho = 0.1;
  double epsilon = 0.01;
  Eigen::MatrixXd e, a0, a1;
  Eigen::VectorXd b, c;

  static DelaySystem make(int n, double tau, double rho, double epsilon)
  {
    if (n < 2 || tau <= 0.0 || rho <= 0.0 || epsilon <= 0.0)
    {
      throw std::invalid_argument("DelaySystem: invalid parameters");
    }
    DelaySystem d;
    d.size_n = n;
    d.delay_tau = tau;
    d.rho = rho;
    d.epsilon = epsilon;
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i)
    {
      t(i, i + 1) = 1.0;
      t(i + 1, i) = 1.0;
    }
    t(0, 0) = 1.0;
    t(n - 1, n - 1) = 1.0;
    const double shift = 2.0 / std::sqrt(epsilon);
    Eigen::MatrixXd core = t - shift * Eigen::MatrixXd::Identity(n, n);
    d.e = shift * Eigen::MatrixXd::Identity(n, n) + t;
    d.a0 = ((2.0 + 2.0 * rho) / (tau * rho)) * core;
    d.a1 = ((2.0 - 2.0 * rho) / (tau * rho)) * core;
    d.b = Eigen::VectorXd::Zero(n);
    d.b(0) = 1.0;
    d.b(1) = 1.0;
    d.c = d.b;
    return d;
  }
};

/// Real rational ROM of degree (r-1, r) in the two-term partial fraction
/// parameterization
///   H_r(z) = sum_k (a_{2k} z + a_{2k-1}) / (z^2 + b_{2k} z + b_{2k-1})
///            [+ a_r / (z + b_r) when r is odd],
/// with every b_k > 0, which is necessary and sufficient for all poles to
/// lie strictly in the left half plane. Pole-residue form is cached lazily.
class RationalRom
{
public:
  RationalRom() = default;

  static RationalRom from_partial_fractions(Eigen::VectorXd a, Eigen::VectorXd b)
  {
    if (a.size() != b.size() || a.size() < 1)
    {
      throw std::invalid_argument("RationalRom: coefficient length mismatch");
    }
    if ((b.array() <= 0.0).any())
    {
      throw std::invalid_argument("RationalRom: denominator coefficients must be positive");
    }
    RationalRom rom;
    rom.a_ = std::move(a);
    rom.b_ = std::move(b);
    return rom;
  }

  /// Build from a conjugate-closed, strictly stable pole-residue list.
  /// Poles are paired (complex conjugates, then reals two at a time); for
  /// odd degree one real pole fills the first-order tail term.
  static RationalRom from_poles_residues(const Eigen::VectorXcd &poles,
                                         const Eigen::VectorXcd &residues,
                                         double closure_tol = 1e-8)
  {
    const Eigen::Index r = poles.size();
    if (residues.size() != r || r < 1)
    {
      throw std::invalid_argument("RationalRom: pole/residue length mismatch");
    }
    for (Eigen::Index k = 0; k < r; ++k)
    {
      if (!(poles(k).real() < 0.0))
      {
        throw std::invalid_argument("RationalRom: pole not strictly stable");
      }
    }
    const double scale = std::max(poles.cwiseAbs().maxCoeff(), 1.0);

    std::vector<std::pair<Complex, Complex>> complex_pairs; // (pole, residue)
    std::vector<std::pair<double, double>> reals;
    std::vector<bool> used(static_cast<std::size_t>(r), false);
    for (Eigen::Index j = 0; j < r; ++j)
    {
      if (used[static_cast<std::size_t>(j)])
      {
        continue;
      }
      if (std::abs(poles(j).imag()) <= closure_tol * scale)
      {
        used[static_cast<std::size_t>(j)] = true;
        reals.emplace_back(poles(j).real(), residues(j).real());
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
        const double d = std::abs(poles(k) - std::conj(poles(j)));
        if (d < best)
        {
          best = d;
          partner = k;
        }
      }
      if (partner < 0 || best > closure_tol * scale)
      {
        throw std::invalid_argument("RationalRom: pole set not closed under conjugation");
      }
      used[static_cast<std::size_t>(j)] = true;
      used[static_cast<std::size_t>(partner)] = true;
      const Complex lam = 0.5 * (poles(j) + std::conj(poles(partner)));
      const Complex rho = 0.5 * (residues(j) + std::conj(residues(partner)));
      complex_pairs.emplace_back(lam.imag() > 0 ? lam : std::conj(lam),
                                 lam.imag() > 0 ? rho : std::conj(rho));
    }
    std::sort(complex_pairs.begin(), complex_pairs.end(),
              [](const auto &x, const auto &y)
              {
                if (x.first.real() != y.first.real())
                {
                  return x.first.real() < y.first.real();
                }
                return x.first.imag() < y.first.imag();
              });
    std::sort(reals.begin(), reals.end());

    Eigen::VectorXd a(r), b(r);
    Eigen::Index slot = 0;
    for (const auto &[lam, rho] : complex_pairs)
    {
      a(slot) = -2.0 * std::real(rho * std::conj(lam)); // a_{2k-1}
      a(slot + 1) = 2.0 * rho.real();                   // a_{2k}
      b(slot) = std::norm(lam);
      b(slot + 1) = -2.0 * lam.real();
      slot += 2;
    }
    while (reals.size() >= 2 && slot + 1 < r)
    {
      const auto [l1, r1] = reals[reals.size() - 2];
      const auto [l2, r2] = reals[reals.size() - 1];
      reals.pop_back();
      reals.pop_back();
      a(slot) = -(r1 * l2 + r2 * l1);
      a(slot + 1) = r1 + r2;
      b(slot) = l1 * l2;
      b(slot + 1) = -(l1 + l2);
      slot += 2;
    }
    if (slot < r)
    {
      if (reals.size() != 1 || slot + 1 != r)
      {
        throw std::invalid_argument("RationalRom: pole pairing failed");
      }
      a(slot) = reals[0].second;
      b(slot) = -reals[0].first;
    }
    return from_partial_fractions(std::move(a), std::move(b));
  }

  int degree() const { return static_cast<int>(a_.size()); }
  const Eigen::VectorXd &pf_a() const { return a_; }
  const Eigen::VectorXd &pf_b() const { return b_; }

  Complex evaluate(Complex z) const
  {
    const Eigen::Index r = a_.size();
    Complex acc(0.0, 0.0);
    for (Eigen::Index k = 0; k + 1 < r; k += 2)
    {
      acc += (a_(k + 1) * z + a_(k)) / (z * z + b_(k + 1) * z + b_(k));
    }
    if (r % 2 == 1)
    {
      acc += a_(r - 1) / (z + b_(r - 1));
    }
    return acc;
  }

  Complex derivative(Complex z) const
  {
    const Eigen::Index r = a_.size();
    Complex acc(0.0, 0.0);
    for (Eigen::Index k = 0; k + 1 < r; k += 2)
    {
      const Complex den = z * z + b_(k + 1) * z + b_(k);
      const Complex num = a_(k + 1) * z + a_(k);
      acc += (a_(k + 1) * den - num * (2.0 * z + b_(k + 1))) / (den * den);
    }
    if (r % 2 == 1)
    {
      const Complex den = z + b_(r - 1);
      acc -= a_(r - 1) / (den * den);
    }
    return acc;
  }

  /// lim_{z->inf} z H(z): the sum of the residues.
  Complex moment_at_infinity() const
  {
    double m = 0.0;
    const Eigen::Index r = a_.size();
    for (Eigen::Index k = 0; k + 1 < r; k += 2)
    {
      m += a_(k + 1);
    }
    if (r % 2 == 1)
    {
      m += a_(r - 1);
    }
    return m;
  }

  const Eigen::VectorXcd &poles() const
  {
    ensure_pole_residue();
    return poles_;
  }

  const Eigen::VectorXcd &residues() const
  {
    ensure_pole_residue();
    return residues_;
  }

private:
  void ensure_pole_residue() const
  {
    if (poles_.size() == degree())
    {
      return;
    }
    const Eigen::Index r = a_.size();
    poles_.resize(r);
    residues_.resize(r);
    for (Eigen::Index k = 0; k + 1 < r; k += 2)
    {
      const double b1 = b_(k), b2 = b_(k + 1);
      const double disc = 0.25 * b2 * b2 - b1;
      if (disc < 0.0)
      {
        const Complex lam(-0.5 * b2, std::sqrt(-disc));
        const Complex rho = (a_(k + 1) * lam + a_(k)) / (lam - std::conj(lam));
        poles_(k) = lam;
        poles_(k + 1) = std::conj(lam);
        residues_(k) = rho;
        residues_(k + 1) = std::conj(rho);
      }
      else
      {
        // Cancellation-free real roots; strictly negative since b > 0.
        const double big = 0.5 * b2 + std::sqrt(disc);
        const double l1 = -b1 / big, l2 = -big;
        if (l1 == l2)
        {
          throw std::runtime_error("RationalRom: repeated real pole, residues undefined");
        }
        poles_(k) = l1;
        poles_(k + 1) = l2;
        residues_(k) = (a_(k + 1) * l1 + a_(k)) / (l1 - l2);
        residues_(k + 1) = (a_(k + 1) * l2 + a_(k)) / (l2 - l1);
      }
    }
    if (r % 2 == 1)
    {
      poles_(r - 1) = -b_(r - 1);
      residues_(r - 1) = a_(r - 1);
    }
  }

  Eigen::VectorXd a_, b_;
  mutable Eigen::VectorXcd poles_, residues_;
};

enum class ModelKind
{
  state_space,
  delay,
  rational,
  tabulated
};

inline const char *to_string(ModelKind k)
{
  switch (k)
  {
  case ModelKind::state_space: return "state_space";
  case ModelKind::delay: return "delay";
  case ModelKind::rational: return "rational";
  case ModelKind::tabulated: return "tabulated";
  }
  return "?";
}

/// Evaluatable full-order model with an evaluation counter.
///
/// Counting rules, shared by every algorithm in the benchmark:
///  - evaluate() increments once per new point; an exact repeat or the
///    conjugate of a cached point is free (real models satisfy
///    H(conj z) = conj H(z), so one solve serves the pair);
///  - evaluate_uncached() and evaluate_derivative() always increment and
///    never touch the cache (IRKA-family accounting: evaluations are
///    discarded between iterations);
///  - solve_shifted()/solve_shifted_adjoint() increment once per linear
///    solve (IRKA's cost unit);
///  - moment_plus()/moment_minus() increment once each, ever.
/// evaluate_unmetered() is for error reporting and diagnostics only.
class TransferFunctionModel
{
public:
  static TransferFunctionModel from_state_space(StateSpace ss)
  {
    ss.validate();
    TransferFunctionModel m(ModelKind::state_space);
    m.state_ = std::make_shared<StateSpace>(std::move(ss));
    return m;
  }

  static TransferFunctionModel from_delay(DelaySystem d)
  {
    TransferFunctionModel m(ModelKind::delay);
    m.delay_ = std::make_shared<DelaySystem>(std::move(d));
    return m;
  }

  static TransferFunctionModel from_rational(RationalRom rom)
  {
    TransferFunctionModel m(ModelKind::rational);
    m.rational_ = std::make_shared<RationalRom>(std::move(rom));
    return m;
  }

  static TransferFunctionModel
  from_table(std::vector<std::pair<Complex, Complex>> samples)
  {
    TransferFunctionModel m(ModelKind::tabulated);
    auto table = std::make_shared<std::map<Complex, Complex, ComplexLess>>();
    for (const auto &[z, v] : samples)
    {
      (*table)[z] = v;
    }
    m.table_ = std::move(table);
    return m;
  }

  ModelKind kind() const { return kind_; }

  const StateSpace &state_space() const
  {
    if (kind_ != ModelKind::state_space)
    {
      throw std::logic_error("model is not a state-space realization");
    }
    return *state_;
  }

  const RationalRom &rational() const
  {
    if (kind_ != ModelKind::rational)
    {
      throw std::logic_error("model is not rational");
    }
    return *rational_;
  }

  const DelaySystem &delay() const
  {
    if (kind_ != ModelKind::delay)
    {
      throw std::logic_error("model is not a delay system");
    }
    return *delay_;
  }

  /// Fresh counter and cache over the same underlying system.
  TransferFunctionModel clone() const
  {
    TransferFunctionModel m(kind_);
    m.state_ = state_;
    m.delay_ = delay_;
    m.rational_ = rational_;
    m.table_ = table_;
    m.moments_ = moments_;
    return m;
  }

  long eval_count() const
  {
    std::lock_guard<std::mutex> lock(sync_->mutex);
    return sync_->count;
  }

  Complex evaluate(Complex z) const
  {
    std::lock_guard<std::mutex> lock(sync_->mutex);
    auto hit = sync_->cache.find(z);
    if (hit != sync_->cache.end())
    {
      return hit->second;
    }
    auto conj_hit = sync_->cache.find(std::conj(z));
    if (conj_hit != sync_->cache.end())
    {
      return std::conj(conj_hit->second);
    }
    const Complex value = compute(z);
    ++sync_->count;
    sync_->cache.emplace(z, value);
    return value;
  }

  Complex evaluate_uncached(Complex z) const
  {
    const Complex value = compute(z);
    std::lock_guard<std::mutex> lock(sync_->mutex);
    ++sync_->count;
    return value;
  }

  Complex evaluate_derivative(Complex z) const
  {
    const Complex value = compute_derivative(z);
    std::lock_guard<std::mutex> lock(sync_->mutex);
    ++sync_->count;
    return value;
  }

  /// Uncounted evaluation for error reporting; never use inside algorithms.
  Complex evaluate_unmetered(Complex z) const { return compute(z); }
  Complex evaluate_derivative_unmetered(Complex z) const
  {
    return compute_derivative(z);
  }

  /// (mu E - A)^{-1} b, the rational Krylov direction. Counted.
  Eigen::VectorXcd solve_shifted(Complex mu) const
  {
    const StateSpace &ss = state_space();
    Eigen::MatrixXcd shifted = build_pencil(ss, mu);
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(shifted);
    Eigen::VectorXcd x = lu.solve(ss.b.cast<Complex>());
    bump();
    return x;
  }

  /// (mu E - A)^{-*} c. Counted.
  Eigen::VectorXcd solve_shifted_adjoint(Complex mu) const
  {
    const StateSpace &ss = state_space();
    Eigen::MatrixXcd shifted = build_pencil(ss, mu).adjoint().eval();
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(shifted);
    Eigen::VectorXcd x = lu.solve(ss.c.cast<Complex>());
    bump();
    return x;
  }

  bool has_moments() const { return static_cast<bool>(moments_); }

  /// Supply M+/- for model kinds without an analytic limit (delay,
  /// tabulated).
  void set_moments(Complex m_plus, Complex m_minus)
  {
    moments_ = std::make_pair(m_plus, m_minus);
  }

  Complex moment_plus() const { return counted_moment(/*plus=*/true); }
  Complex moment_minus() const { return counted_moment(/*plus=*/false); }

  /// Moments without counting, when available.
  std::optional<std::pair<Complex, Complex>> moments_unmetered() const
  {
    if (moments_)
    {
      return *moments_;
    }
    if (kind_ == ModelKind::state_space)
    {
      const StateSpace ss = state_->standard_form();
      const Complex m = ss.c.dot(ss.b);
      return std::make_pair(m, m);
    }
    if (kind_ == ModelKind::rational)
    {
      const Complex m = rational_->moment_at_infinity();
      return std::make_pair(m, m);
    }
    return std::nullopt;
  }

private:
  struct ComplexLess
  {
    bool operator()(Complex a, Complex b) const
    {
      if (a.real() != b.real())
      {
        return a.real() < b.real();
      }
      return a.imag() < b.imag();
    }
  };

  struct Sync
  {
    mutable std::mutex mutex;
    long count = 0;
    std::map<Complex, Complex, ComplexLess> cache;
  };

  explicit TransferFunctionModel(ModelKind kind)
      : kind_(kind), sync_(std::make_shared<Sync>())
  {
  }

  void bump() const
  {
    std::lock_guard<std::mutex> lock(sync_->mutex);
    ++sync_->count;
  }

  Complex counted_moment(bool plus) const
  {
    auto m = moments_unmetered();
    if (!m)
    {
      throw std::runtime_error("model moments at infinity unavailable; supply them "
                               "via set_moments or waive the moment rows");
    }
    {
      std::lock_guard<std::mutex> lock(sync_->mutex);
      bool &counted = plus ? sync_counted_plus_ : sync_counted_minus_;
      if (!counted)
      {
        ++sync_->count;
        counted = true;
      }
    }
    return plus ? m->first : m->second;
  }

  static Eigen::MatrixXcd build_pencil(const StateSpace &ss, Complex z)
  {
    Eigen::MatrixXcd shifted;
    if (ss.e)
    {
      shifted = z * ss.e->cast<Complex>() - ss.a.cast<Complex>();
    }
    else
    {
      shifted = -ss.a.cast<Complex>();
      shifted.diagonal().array() += z;
    }
    return shifted;
  }

  Complex compute(Complex z) const
  {
    switch (kind_)
    {
    case ModelKind::state_space:
    {
      const StateSpace &ss = *state_;
      Eigen::PartialPivLU<Eigen::MatrixXcd> lu(build_pencil(ss, z));
      const Complex h =
          (ss.c.cast<Complex>().transpose() * lu.solve(ss.b.cast<Complex>())).value();
      if (!std::isfinite(h.real()) || !std::isfinite(h.imag()))
      {
        std::ostringstream os;
        os << "evaluate: z = " << z << " is (numerically) a pole of the model";
        throw std::runtime_error(os.str());
      }
      return h;
    }
    case ModelKind::delay:
    {
      const DelaySystem &d = *delay_;
      const Eigen::MatrixXcd k = z * d.e.cast<Complex>() - d.a0.cast<Complex>() -
                                 std::exp(-d.delay_tau * z) * d.a1.cast<Complex>();
      Eigen::PartialPivLU<Eigen::MatrixXcd> lu(k);
      const Complex h =
          (d.c.cast<Complex>().transpose() * lu.solve(d.b.cast<Complex>())).value();
      if (!std::isfinite(h.real()) || !std::isfinite(h.imag()))
      {
        std::ostringstream os;
        os << "evaluate: z = " << z << " is (numerically) a pole of the model";
        throw std::runtime_error(os.str());
      }
      return h;
    }
    case ModelKind::rational:
      return rational_->evaluate(z);
    case ModelKind::tabulated:
    {
      auto hit = table_->find(z);
      if (hit != table_->end())
      {
        return hit->second;
      }
      auto conj_hit = table_->find(std::conj(z));
      if (conj_hit != table_->end())
      {
        return std::conj(conj_hit->second);
      }
      throw std::runtime_error("tabulated model: point not in table");
    }
    }
    throw std::logic_error("unreachable");
  }

  Complex compute_derivative(Complex z) const
  {
    switch (kind_)
    {
    case ModelKind::state_space:
    {
      // H'(z) = -c^T (zE - A)^{-1} E (zE - A)^{-1} b.
      const StateSpace &ss = *state_;
      Eigen::PartialPivLU<Eigen::MatrixXcd> lu(build_pencil(ss, z));
      Eigen::VectorXcd x = lu.solve(ss.b.cast<Complex>());
      if (ss.e)
      {
        x = ss.e->cast<Complex>() * x;
      }
      return -(ss.c.cast<Complex>().transpose() * lu.solve(x)).value();
    }
    case ModelKind::delay:
    {
      // K(z) = zE - A0 - exp(-tau z) A1 has the analytic derivative
      // K'(z) = E + tau exp(-tau z) A1, so H'(z) = -c^T K^{-1} K' K^{-1} b.
      const DelaySystem &d = *delay_;
      const Complex decay = std::exp(-d.delay_tau * z);
      const Eigen::MatrixXcd k =
          z * d.e.cast<Complex>() - d.a0.cast<Complex>() - decay * d.a1.cast<Complex>();
      Eigen::PartialPivLU<Eigen::MatrixXcd> lu(k);
      const Eigen::VectorXcd x = lu.solve(d.b.cast<Complex>());
      const Eigen::VectorXcd kx =
          d.e.cast<Complex>() * x + (d.delay_tau * decay) * (d.a1.cast<Complex>() * x);
      return -(d.c.cast<Complex>().transpose() * lu.solve(kx)).value();
    }
    case ModelKind::rational:
      return rational_->derivative(z);
    case ModelKind::tabulated:
      throw std::runtime_error("tabulated model: derivative unsupported");
    }
    throw std::logic_error("unreachable");
  }

  ModelKind kind_;
  std::shared_ptr<const StateSpace> state_;
  std::shared_ptr<const DelaySystem> delay_;
  std::shared_ptr<const RationalRom> rational_;
  std::shared_ptr<const std::map<Complex, Complex, ComplexLess>> table_;
  std::optional<std::pair<Complex, Complex>> moments_;
  std::shared_ptr<Sync> sync_;
  mutable bool sync_counted_plus_ = false;
  mutable bool sync_counted_minus_ = false;
};

/// ||H||_H2 = sqrt(c^T W_c c), W_c the controllability Gramian.
inline double h2_norm_state_space(const StateSpace &sys)
{
  const StateSpace ss = sys.standard_form();
  const Eigen::MatrixXd wc =
      numkit::solve_lyapunov(ss.a, Eigen::MatrixXd(-ss.b * ss.b.transpose()));
  const double v = ss.c.dot(wc * ss.c);
  return std::sqrt(std::max(v, 0.0));
}

/// Same norm through the observability Gramian (cross-check route).
inline double h2_norm_state_space_observability(const StateSpace &sys)
{
  const StateSpace ss = sys.standard_form();
  const Eigen::MatrixXd wo = numkit::solve_lyapunov(
      Eigen::MatrixXd(ss.a.transpose()), Eigen::MatrixXd(-ss.c * ss.c.transpose()));
  const double v = ss.b.dot(wo * ss.b);
  return std::sqrt(std::max(v, 0.0));
}

namespace detail
{

/// Gram matrix of pole-residue terms: G_jk = -(conj l_j + l_k)^{-1}.
inline Eigen::MatrixXcd pole_gram(const Eigen::VectorXcd &poles)
{
  const Eigen::Index r = poles.size();
  Eigen::MatrixXcd g(r, r);
  for (Eigen::Index j = 0; j < r; ++j)
  {
    for (Eigen::Index k = 0; k < r; ++k)
    {
      g(j, k) = -1.0 / (std::conj(poles(j)) + poles(k));
    }
  }
  return g;
}

inline double pole_residue_norm(const Eigen::VectorXcd &poles,
                                const Eigen::VectorXcd &residues)
{
  const Eigen::MatrixXcd g = pole_gram(poles);
  const double v = std::real(residues.dot(g * residues));
  return std::sqrt(std::max(v, 0.0));
}

} // namespace detail

inline double h2_norm_rom(const RationalRom &rom)
{
  return detail::pole_residue_norm(rom.poles(), rom.residues());
}

namespace detail
{

/// ||sum_k rho_k/(z - l_k) - s_k/(z - n_k)||_H2 for equal-length pole sets,
/// matched by minimum-cost assignment. Every inner product is rearranged
/// into products of the explicit differences (l - n) and (rho - s): the
/// identities are exact for any strictly stable pole sets, and unlike the
/// stacked Gram form the result does not sit on a sqrt(eps) cancellation
/// floor when the two systems nearly coincide. The outer-loop termination
/// test at tolerance 1e-9 depends on resolving exactly that regime.
inline double matched_difference_norm(const Eigen::VectorXcd &pa,
                                      const Eigen::VectorXcd &ra,
                                      const Eigen::VectorXcd &pb_in,
                                      const Eigen::VectorXcd &rb_in)
{
  const Eigen::Index r = pa.size();
  Eigen::MatrixXd cost(r, r);
  for (Eigen::Index j = 0; j < r; ++j)
  {
    for (Eigen::Index k = 0; k < r; ++k)
    {
      cost(j, k) = std::abs(pb_in(k) - pa(j));
    }
  }
  const std::vector<int> assign = numkit::linear_assignment(cost);
  Eigen::VectorXcd pb(r), rb(r);
  for (Eigen::Index j = 0; j < r; ++j)
  {
    pb(j) = pb_in(assign[static_cast<std::size_t>(j)]);
    rb(j) = rb_in(assign[static_cast<std::size_t>(j)]);
  }

  auto g = [](Complex x, Complex y) { return -1.0 / (std::conj(x) + y); };
  Complex total(0.0, 0.0);
  for (Eigen::Index a = 0; a < r; ++a)
  {
    const Complex dl_a = std::conj(pa(a)) - std::conj(pb(a));
    for (Eigen::Index b = 0; b < r; ++b)
    {
      const Complex dr_a = ra(a) - rb(a), dr_b = ra(b) - rb(b);
      const Complex uu = g(pa(a), pa(b));
      const Complex wu =
          dl_a / ((std::conj(pa(a)) + pa(b)) * (std::conj(pb(a)) + pa(b)));
      const Complex dl_b = std::conj(pa(b)) - std::conj(pb(b));
      const Complex uw =
          std::conj(dl_b / ((std::conj(pa(b)) + pa(a)) * (std::conj(pb(b)) + pa(a))));
      const Complex p1 = (std::conj(pa(a)) + pa(b)) * (std::conj(pb(a)) + pa(b));
      const Complex q1 = (std::conj(pa(a)) + pb(b)) * (std::conj(pb(a)) + pb(b));
      const Complex ww = dl_a * (pb(b) - pa(b)) *
                         (std::conj(pa(a)) + std::conj(pb(a)) + pa(b) + pb(b)) /
                         (p1 * q1);
      total += std::conj(dr_a) * dr_b * uu + std::conj(dr_a) * rb(b) * uw +
               std::conj(rb(a)) * dr_b * wu + std::conj(rb(a)) * rb(b) * ww;
    }
  }
  return std::sqrt(std::max(total.real(), 0.0));
}

} // namespace detail

/// ||r1 - r2||_H2 computed exactly from pole-residue data; O(r^3).
inline double rom_difference_norm(const RationalRom &r1, const RationalRom &r2)
{
  if (r1.degree() == r2.degree())
  {
    return detail::matched_difference_norm(r1.poles(), r1.residues(), r2.poles(),
                                           r2.residues());
  }
  const Eigen::Index n1 = r1.poles().size(), n2 = r2.poles().size();
  Eigen::VectorXcd poles(n1 + n2), residues(n1 + n2);
  poles << r1.poles(), r2.poles();
  residues << r1.residues(), -r2.residues();
  return detail::pole_residue_norm(poles, residues);
}

/// Boyd/Clenshaw-Curtis discretization of the H2 norm: nodes on the
/// imaginary axis, weights for |H|^2, and the shared weight of the two
/// moment-at-infinity rows.
struct BccRule
{
  Eigen::VectorXcd nodes;  // i L cot(j pi / (n+1)), j = 1..n
  Eigen::VectorXd weights; // L / (2 (n+1) sin^2(j pi/(n+1)))
  double moment_weight;    // 1 / (4 L (n+1))
};

inline BccRule bcc_rule(double scale_l, int num_nodes)
{
  if (scale_l <= 0.0 || num_nodes < 1)
  {
    throw std::invalid_argument("bcc_rule: need L > 0 and at least one node");
  }
  const double pi = 3.14159265358979323846;
  BccRule rule;
  rule.nodes.resize(num_nodes);
  rule.weights.resize(num_nodes);
  for (int j = 1; j <= num_nodes; ++j)
  {
    const double t = j * pi / (num_nodes + 1);
    rule.nodes(j - 1) = Complex(0.0, scale_l / std::tan(t));
    const double s = std::sin(t);
    rule.weights(j - 1) = scale_l / (2.0 * (num_nodes + 1) * s * s);
  }
  rule.moment_weight = 1.0 / (4.0 * scale_l * (num_nodes + 1));
  return rule;
}

/// Relative H2 error ||H - H_r|| / ||H||. Exact Gramian route when the
/// model is itself rational or state-space; Boyd/Clenshaw-Curtis quadrature
/// (L = 10) otherwise. Uses unmetered evaluations: error reporting never
/// perturbs the benchmark counters.
inline double h2_error(const TransferFunctionModel &model, const RationalRom &rom,
                       int quad_points = 10000)
{
  if (quad_points < 2)
  {
    throw std::invalid_argument("h2_error: need at least two quadrature points");
  }
  switch (model.kind())
  {
  case ModelKind::rational:
  {
    const double denom = h2_norm_rom(model.rational());
    return rom_difference_norm(model.rational(), rom) / denom;
  }
  case ModelKind::state_space:
  {
    const double hnorm = h2_norm_state_space(model.state_space());
    const double rnorm = h2_norm_rom(rom);
    Complex inner(0.0, 0.0); // <H_r, H>
    const Eigen::VectorXcd &poles = rom.poles();
    const Eigen::VectorXcd &res = rom.residues();
    for (Eigen::Index k = 0; k < poles.size(); ++k)
    {
      inner += std::conj(res(k)) * model.evaluate_unmetered(-std::conj(poles(k)));
    }
    const double err2 = hnorm * hnorm - 2.0 * inner.real() + rnorm * rnorm;
    return std::sqrt(std::max(err2, 0.0)) / hnorm;
  }
  case ModelKind::delay:
  case ModelKind::tabulated:
  {
    const BccRule rule = bcc_rule(10.0, quad_points);
    double num = 0.0, den = 0.0;
    for (int j = 0; j < quad_points; ++j)
    {
      const Complex h = model.evaluate_unmetered(rule.nodes(j));
      const Complex hr = rom.evaluate(rule.nodes(j));
      num += rule.weights(j) * std::norm(h - hr);
      den += rule.weights(j) * std::norm(h);
    }
    if (auto m = model.moments_unmetered())
    {
      const Complex rm = rom.moment_at_infinity();
      num += rule.moment_weight * (std::norm(m->first - rm) + std::norm(m->second - rm));
      den += rule.moment_weight * (std::norm(m->first) + std::norm(m->second));
    }
    return std::sqrt(std::max(num, 0.0) / den);
  }
  }
  throw std::logic_error("unreachable");
}

/// Hermite interpolation mismatch at a flipped pole -conj(lambda_k).
struct HermiteMismatch
{
  Complex pole;
  double value_mismatch = 0.0;
  double derivative_mismatch = 0.0;
  bool vacuous = false; // |rho_k| ~ 0: the optimality condition says nothing
};

/// First-order H2 optimality diagnostic: a locally optimal ROM Hermite
/// interpolates the model at its poles reflected across the imaginary axis.
inline std::vector<HermiteMismatch>
check_meier_luenberger(const TransferFunctionModel &model, const RationalRom &rom)
{
  const Eigen::VectorXcd &poles = rom.poles();
  const Eigen::VectorXcd &res = rom.residues();
  for (Eigen::Index j = 0; j < poles.size(); ++j)
  {
    for (Eigen::Index k = 0; k < j; ++k)
    {
      if (poles(j) == poles(k))
      {
        throw std::invalid_argument("check_meier_luenberger: repeated poles");
      }
    }
  }
  const double rho_scale = res.cwiseAbs().maxCoeff();
  std::vector<HermiteMismatch> out;
  out.reserve(static_cast<std::size_t>(poles.size()));
  for (Eigen::Index k = 0; k < poles.size(); ++k)
  {
    HermiteMismatch hm;
    hm.pole = poles(k);
    const Complex w = -std::conj(poles(k));
    hm.value_mismatch = std::abs(model.evaluate(w) - rom.evaluate(w));
    hm.derivative_mismatch = std::abs(model.evaluate_derivative(w) - rom.derivative(w));
    hm.vacuous = std::abs(res(k)) <= 1e-14 * std::max(rho_scale, 1.0);
    out.push_back(hm);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix Market ingestion
// ---------------------------------------------------------------------------

namespace detail
{

inline Eigen::MatrixXd read_matrix_market(const std::string &path)
{
  std::ifstream in(path);
  if (!in)
  {
    throw std::runtime_error(path + ": cannot open file");
  }
  auto fail = [&path](long line, const std::string &msg) -> void
  {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + msg);
  };

  long line_no = 1;
  std::string header;
  if (!std::getline(in, header))
  {
    fail(1, "empty file");
  }
  std::istringstream hs(header);
  std::string banner, object, format, field, symmetry;
  hs >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%MatrixMarket" || object != "matrix")
  {
    fail(1, "malformed MatrixMarket header: '" + header + "'");
  }
  if (format != "coordinate" && format != "array")
  {
    fail(1, "unsupported format '" + format + "' (coordinate or array)");
  }
  if (field != "real" && field != "integer")
  {
    fail(1, "unsupported field '" + field + "' (real or integer)");
  }
  if (symmetry != "general" && symmetry != "symmetric")
  {
    fail(1, "unsupported symmetry '" + symmetry + "'");
  }

  std::string line;
  auto next_data_line = [&]() -> std::string
  {
    while (std::getline(in, line))
    {
      ++line_no;
      if (line.empty() || line[0] == '%')
      {
        continue;
      }
      return line;
    }
    return {};
  };

  std::string dims = next_data_line();
  if (dims.empty())
  {
    fail(line_no, "missing size line");
  }
  std::istringstream ds(dims);
  long rows = 0, cols = 0, nnz = 0;
  if (format == "coordinate")
  {
    if (!(ds >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0)
    {
      fail(line_no, "malformed size line '" + dims + "'");
    }
  }
  else
  {
    if (!(ds >> rows >> cols) || rows < 0 || cols < 0)
    {
      fail(line_no, "malformed size line '" + dims + "'");
    }
  }

  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows, cols);
  if (format == "coordinate")
  {
    for (long e = 0; e < nnz; ++e)
    {
      std::string entry = next_data_line();
      if (entry.empty())
      {
        fail(line_no, "expected " + std::to_string(nnz) + " entries, got " +
                          std::to_string(e));
      }
      std::istringstream es(entry);
      long i = 0, j = 0;
      double v = 0.0;
      if (!(es >> i >> j >> v) || i < 1 || i > rows || j < 1 || j > cols)
      {
        fail(line_no, "malformed coordinate entry '" + entry + "'");
      }
      m(i - 1, j - 1) = v;
      if (symmetry == "symmetric" && i != j)
      {
        m(j - 1, i - 1) = v;
      }
    }
  }
  else
  {
    const bool sym = (symmetry == "symmetric");
    std::vector<double> vals;
    const long expected = sym ? rows * (rows + 1) / 2 : rows * cols;
    while (static_cast<long>(vals.size()) < expected)
    {
      std::string entry = next_data_line();
      if (entry.empty())
      {
        fail(line_no, "expected " + std::to_string(expected) + " array values, got " +
                          std::to_string(vals.size()));
      }
      std::istringstream es(entry);
      double v = 0.0;
      while (es >> v)
      {
        vals.push_back(v);
      }
    }
    long idx = 0;
    for (long j = 0; j < cols; ++j)
    {
      for (long i = sym ? j : 0; i < rows; ++i)
      {
        m(i, j) = vals[static_cast<std::size_t>(idx++)];
        if (sym && i != j)
        {
          m(j, i) = m(i, j);
        }
      }
    }
  }
  return m;
}

inline Eigen::VectorXd read_matrix_market_vector(const std::string &path)
{
  Eigen::MatrixXd m = read_matrix_market(path);
  if (m.cols() == 1)
  {
    return m.col(0);
  }
  if (m.rows() == 1)
  {
    return m.row(0).transpose();
  }
  throw std::runtime_error(path + ": expected a vector (one row or one column)");
}

} // namespace detail

inline StateSpace load_matrix_market(const std::string &path_a, const std::string &path_b,
                                     const std::string &path_c,
                                     const std::optional<std::string> &path_e = {})
{
  StateSpace ss;
  ss.a = detail::read_matrix_market(path_a);
  ss.b = detail::read_matrix_market_vector(path_b);
  ss.c = detail::read_matrix_market_vector(path_c);
  if (path_e)
  {
    ss.e = detail::read_matrix_market(*path_e);
  }
  ss.validate();
  return ss;
}

} // namespace h2mor::systems

#endif // H2MOR_SYSTEMS_HPP
