#ifndef H2MOR_PH2_HPP
#define H2MOR_PH2_HPP

#include <algorithm>
#include <complex>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include <h2mor/h2space.hpp>
#include <h2mor/numkit.hpp>
#include <h2mor/ratfit.hpp>
#include <h2mor/run_record.hpp>
#include <h2mor/systems.hpp>

namespace h2mor::ph2
{

using Complex = std::complex<double>;

struct Ph2Config
{
  int target_r = 2;
  Eigen::VectorXcd initial_mu;
  double tol_term = 1e-9; // tight, to avoid premature termination
  int max_outer_iters = 100;
  double spurious_box_factor = 10.0;
  double b_min = ratfit::kBMin;

  void validate() const
  {
    if (target_r < 1)
    {
      throw std::invalid_argument("Ph2Config: target_r must be positive");
    }
    if (!(tol_term > 0.0) || max_outer_iters < 1 || spurious_box_factor <= 1.0 ||
        !(b_min > 0.0))
    {
      throw std::invalid_argument("Ph2Config: invalid tolerance or limits");
    }
    if (initial_mu.size() == 0)
    {
      throw std::invalid_argument("Ph2Config: initial interpolation points required");
    }
    h2space::validate_points(initial_mu);
  }
};

/// Region of plausible poles: the sample box reflected into the left half
/// plane and enlarged by the configured factor. Poles outside it are
/// treated as spurious artifacts of the inner fit.
struct SpuriousBox
{
  double re_lo = 0.0, re_hi = 0.0;
  double im_lo = 0.0, im_hi = 0.0;

  static SpuriousBox from_samples(const Eigen::VectorXcd &mu, double factor)
  {
    SpuriousBox box;
    box.re_lo = -factor * mu.real().maxCoeff();
    box.re_hi = -mu.real().minCoeff() / factor;
    box.im_lo = factor * mu.imag().minCoeff();
    box.im_hi = factor * mu.imag().maxCoeff();
    return box;
  }

  bool contains(Complex lambda) const
  {
    return lambda.real() >= re_lo && lambda.real() <= re_hi &&
           lambda.imag() >= im_lo && lambda.imag() <= im_hi;
  }
};

/// Replace ROM poles outside the box by their assignment-matched AAA poles
/// (already flipped into the left half plane and ordered). Inside poles are
/// untouched; replaced originals are appended to `replaced`.
inline Eigen::VectorXcd filter_spurious(const Eigen::VectorXcd &rom_poles,
                                        const Eigen::VectorXcd &aaa_poles,
                                        const SpuriousBox &box,
                                        std::vector<Complex> &replaced)
{
  if (aaa_poles.size() != rom_poles.size())
  {
    throw std::invalid_argument("filter_spurious: pole list length mismatch");
  }
  Eigen::VectorXcd out = rom_poles;
  for (Eigen::Index j = 0; j < rom_poles.size(); ++j)
  {
    if (!box.contains(rom_poles(j)))
    {
      out(j) = aaa_poles(j);
      replaced.push_back(rom_poles(j));
    }
  }
  return out;
}

/// New interpolation point(s): the reflection -conj(lambda*) of the pole
/// whose tangent plane makes the largest angle with V(mu), together with
/// its conjugate when non-real. Candidates duplicating an existing sample
/// are skipped; when every pole's reflections are already present, the
/// returned set is empty and `stagnation` is raised.
inline std::vector<Complex> select_new_point(const Eigen::VectorXcd &rom_poles,
                                             const Eigen::VectorXcd &mu,
                                             const h2space::CauchyFactorization &fact,
                                             bool &stagnation)
{
  stagnation = false;
  if (rom_poles.size() == 0)
  {
    throw std::invalid_argument("select_new_point: empty pole list");
  }

  struct Scored
  {
    Complex pole;
    double score;
  };
  std::vector<Scored> scored;
  bool angles_ok = true;
  for (Eigen::Index j = 0; j < rom_poles.size(); ++j)
  {
    bool dup = false;
    for (Eigen::Index k = 0; k < j; ++k)
    {
      if (h2space::approximately_duplicate(rom_poles(j), rom_poles(k)))
      {
        dup = true;
        break;
      }
    }
    if (dup)
    {
      continue;
    }
    double score = 0.0;
    try
    {
      score = std::sin(h2space::subspace_angle_tangent(mu, fact, rom_poles(j)));
    }
    catch (const std::exception &)
    {
      angles_ok = false;
      break;
    }
    scored.push_back({rom_poles(j), score});
  }
  if (!angles_ok)
  {
    // Angle computation failed (ill-conditioned tangent Gram): fall back to
    // the pole least covered by nearby samples.
    scored.clear();
    for (Eigen::Index j = 0; j < rom_poles.size(); ++j)
    {
      double nearest = 1e300;
      for (Eigen::Index i = 0; i < mu.size(); ++i)
      {
        nearest = std::min(nearest, std::abs(mu(i) + std::conj(rom_poles(j))));
      }
      scored.push_back({rom_poles(j), nearest});
    }
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const Scored &x, const Scored &y) { return x.score > y.score; });

  for (const Scored &s : scored)
  {
    std::vector<Complex> candidates;
    const Complex first = -std::conj(s.pole);
    candidates.push_back(first);
    if (s.pole.imag() != 0.0)
    {
      candidates.push_back(std::conj(first));
    }
    std::vector<Complex> fresh;
    for (const Complex c : candidates)
    {
      bool dup = false;
      for (Eigen::Index i = 0; i < mu.size(); ++i)
      {
        if (h2space::approximately_duplicate(c, mu(i)))
        {
          dup = true;
          break;
        }
      }
      for (const Complex f : fresh)
      {
        if (h2space::approximately_duplicate(c, f))
        {
          dup = true;
          break;
        }
      }
      if (!dup)
      {
        fresh.push_back(c);
      }
    }
    if (!fresh.empty())
    {
      return fresh;
    }
  }
  stagnation = true;
  return {};
}

/// Default initial interpolation points for a realization: the r rightmost
/// poles of (A, E) flipped across the imaginary axis (four of them when
/// r = 2, which otherwise could not seed an even-degree fit).
inline Eigen::VectorXcd default_initial_shifts(const systems::StateSpace &sys, int r)
{
  if (r < 1)
  {
    throw std::invalid_argument("default_initial_shifts: r must be positive");
  }
  const systems::StateSpace ss = sys.standard_form();
  Eigen::VectorXcd eigs = numkit::eigenvalues(ss.a.cast<Complex>());
  std::vector<Complex> sorted(eigs.data(), eigs.data() + eigs.size());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](Complex x, Complex y)
                   { return x.real() != y.real() ? x.real() > y.real() : x.imag() > y.imag(); });

  const int want = (r == 2) ? 4 : r;
  std::vector<Complex> shifts;
  for (const Complex lam : sorted)
  {
    if (static_cast<int>(shifts.size()) == want)
    {
      break;
    }
    if (!(lam.real() < 0.0))
    {
      throw std::invalid_argument("default_initial_shifts: system is not stable");
    }
    const Complex mu = -std::conj(lam);
    bool dup = false;
    for (const Complex s : shifts)
    {
      if (h2space::approximately_duplicate(mu, s))
      {
        dup = true;
        break;
      }
    }
    if (!dup)
    {
      shifts.push_back(mu);
    }
  }
  // Repeated eigenvalues can leave us short; spread extra copies slightly.
  double bump = 1.0;
  while (static_cast<int>(shifts.size()) < want && !shifts.empty())
  {
    bump += 1.0;
    const Complex base = shifts[static_cast<std::size_t>(bump) % shifts.size()];
    const Complex candidate = base * (1.0 + 1e-6 * bump);
    bool dup = false;
    for (const Complex s : shifts)
    {
      if (h2space::approximately_duplicate(candidate, s))
      {
        dup = true;
      }
    }
    if (!dup)
    {
      shifts.push_back(candidate);
    }
  }
  Eigen::VectorXcd out(static_cast<Eigen::Index>(shifts.size()));
  for (std::size_t k = 0; k < shifts.size(); ++k)
  {
    out(static_cast<Eigen::Index>(k)) = shifts[k];
  }
  return out;
}

/// Projected nonlinear least squares for real H2 model reduction.
///
/// Each outer iteration solves the weighted rational fit on the current
/// samples (at an intermediate even degree 2 floor(n/4) while n < 2r),
/// stops once consecutive iterates differ by less than tol_term in the H2
/// norm, and otherwise grows the sample set with the reflected pole whose
/// tangent space is worst covered, plus its conjugate (one new model
/// evaluation serves both). Poles escaping the spurious box are replaced by
/// their matched AAA companions before selection.
inline std::pair<systems::RationalRom, RunRecord> run(systems::TransferFunctionModel &model,
                                                      const Ph2Config &cfg)
{
  cfg.validate();
  Eigen::VectorXcd mu = cfg.initial_mu;
  std::vector<Complex> values;
  values.reserve(static_cast<std::size_t>(mu.size()));
  for (Eigen::Index j = 0; j < mu.size(); ++j)
  {
    values.push_back(model.evaluate(mu(j)));
  }

  RunRecord rec;
  rec.status = RunStatus::max_iterations;
  std::optional<systems::RationalRom> prev_rom;
  std::optional<Eigen::VectorXcd> prev_poles;
  std::optional<systems::RationalRom> result;

  for (int iter = 0; iter < cfg.max_outer_iters; ++iter)
  {
    const Eigen::Index n = mu.size();
    const int rdeg = (n < 2 * cfg.target_r) ? 2 * static_cast<int>(n / 4)
                                            : cfg.target_r;
    if (rdeg < 1)
    {
      throw std::invalid_argument("ph2: too few initial samples for the requested order");
    }

    Eigen::VectorXcd h(n);
    for (Eigen::Index j = 0; j < n; ++j)
    {
      h(j) = values[static_cast<std::size_t>(j)];
    }

    h2space::CauchyFactorization fact;
    ratfit::FitResult fit;
    try
    {
      fact = h2space::cauchy_cholesky(mu);
      const std::optional<Eigen::VectorXcd> init =
          (prev_poles && prev_poles->size() == rdeg) ? prev_poles : std::nullopt;
      fit = ratfit::fit(mu, h, rdeg, fact, init, cfg.b_min);
    }
    catch (const std::exception &)
    {
      rec.status = RunStatus::inner_failure;
      break;
    }

    IterationRecord it;
    it.fom_evals = model.eval_count();
    it.rom = fit.rom;
    it.projected_residual = fit.residual_norm;

    if (prev_rom && systems::rom_difference_norm(fit.rom, *prev_rom) < cfg.tol_term)
    {
      rec.iterations.push_back(it);
      result = fit.rom;
      rec.status = RunStatus::converged;
      break;
    }

    // Pole bookkeeping: AAA companions, conjugate flip, assignment order,
    // spurious replacement.
    Eigen::VectorXcd poles = fit.rom.poles();
    Eigen::VectorXcd aaa_poles;
    try
    {
      aaa_poles = ratfit::aaa(mu, h, rdeg).poles;
    }
    catch (const std::exception &)
    {
      aaa_poles.resize(0);
    }
    for (Eigen::Index j = 0; j < aaa_poles.size(); ++j)
    {
      const double re = -std::abs(aaa_poles(j).real());
      aaa_poles(j) = Complex(re == 0.0 ? -cfg.b_min : re, aaa_poles(j).imag());
    }
    Eigen::VectorXcd matched(poles.size());
    if (aaa_poles.size() == 0)
    {
      matched = poles; // no companions available: replacements are no-ops
    }
    else
    {
      // Pad or truncate the AAA list to the ROM pole count, then order it
      // to minimize sum |nu_j - lambda_j|.
      Eigen::VectorXcd nu(poles.size());
      for (Eigen::Index j = 0; j < poles.size(); ++j)
      {
        nu(j) = j < aaa_poles.size() ? aaa_poles(j) : poles(j);
      }
      Eigen::MatrixXd cost(poles.size(), poles.size());
      for (Eigen::Index j = 0; j < poles.size(); ++j)
      {
        for (Eigen::Index k = 0; k < poles.size(); ++k)
        {
          cost(j, k) = std::abs(nu(k) - poles(j));
        }
      }
      const std::vector<int> assign = numkit::linear_assignment(cost);
      for (Eigen::Index j = 0; j < poles.size(); ++j)
      {
        matched(j) = nu(assign[static_cast<std::size_t>(j)]);
      }
    }
    const SpuriousBox box = SpuriousBox::from_samples(mu, cfg.spurious_box_factor);
    const Eigen::VectorXcd repaired =
        filter_spurious(poles, matched, box, it.replaced_spurious);

    bool stagnation = false;
    const std::vector<Complex> fresh = select_new_point(repaired, mu, fact, stagnation);
    it.added_points = fresh;
    rec.iterations.push_back(it);
    result = fit.rom;
    prev_rom = fit.rom;
    prev_poles = repaired;

    if (stagnation)
    {
      rec.status = RunStatus::stagnated;
      break;
    }

    Eigen::VectorXcd grown(n + static_cast<Eigen::Index>(fresh.size()));
    grown.head(n) = mu;
    for (std::size_t k = 0; k < fresh.size(); ++k)
    {
      grown(n + static_cast<Eigen::Index>(k)) = fresh[k];
      values.push_back(model.evaluate(fresh[k]));
    }
    mu = grown;
  }

  if (!result)
  {
    throw std::runtime_error("ph2: no iterate produced a reduced order model");
  }
  return {*result, rec};
}

} // namespace h2mor::ph2

#endif // H2MOR_PH2_HPP
