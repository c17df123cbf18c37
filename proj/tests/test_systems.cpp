#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include <h2mor/systems.hpp>

#include "oracles.hpp"

using namespace h2mor;
using Complex = std::complex<double>;
using Catch::Approx;

namespace
{

systems::TransferFunctionModel scalar_model(double a, double b, double c)
{
  systems::StateSpace ss;
  ss.a = Eigen::MatrixXd::Constant(1, 1, a);
  ss.b = Eigen::VectorXd::Constant(1, b);
  ss.c = Eigen::VectorXd::Constant(1, c);
  return systems::TransferFunctionModel::from_state_space(ss);
}

systems::RationalRom one_over_z_plus(double pole_magnitude)
{
  Eigen::VectorXd a(1), b(1);
  a << 1.0;
  b << pole_magnitude;
  return systems::RationalRom::from_partial_fractions(a, b);
}

// Literal translation of the delay pencil, solved with a different pivoting
// route than the library uses.
Complex delay_oracle(const systems::DelaySystem &d, Complex z)
{
  const int n = d.size_n;
  Eigen::MatrixXcd t = Eigen::MatrixXcd::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i)
  {
    t(i, i + 1) = 1.0;
    t(i + 1, i) = 1.0;
  }
  t(0, 0) = 1.0;
  t(n - 1, n - 1) = 1.0;
  const double shift = 2.0 / std::sqrt(d.epsilon);
  Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(n, n);
  Eigen::MatrixXcd e = shift * eye + t;
  Eigen::MatrixXcd a0 = ((2.0 + 2.0 * d.rho) / (d.delay_tau * d.rho)) * (t - shift * eye);
  Eigen::MatrixXcd a1 = ((2.0 - 2.0 * d.rho) / (d.delay_tau * d.rho)) * (t - shift * eye);
  Eigen::VectorXcd b = Eigen::VectorXcd::Zero(n);
  b(0) = 1.0;
  b(1) = 1.0;
  Eigen::MatrixXcd pencil = z * e - a0 - std::exp(-d.delay_tau * z) * a1;
  Eigen::VectorXcd x = Eigen::FullPivLU<Eigen::MatrixXcd>(pencil).solve(b);
  return (b.transpose() * x).value();
}

} // namespace

TEST_CASE("evaluate on the basic model kinds")
{
  auto ss = scalar_model(-1.0, 1.0, 1.0);
  REQUIRE(std::abs(ss.evaluate(Complex(2.0, 0.0)) - 1.0 / 3.0) < 1e-14);

  auto rat = systems::TransferFunctionModel::from_rational(one_over_z_plus(1.0));
  REQUIRE(std::abs(rat.evaluate(Complex(0.0, 1.0)) - Complex(0.5, -0.5)) < 1e-14);

  auto d = systems::DelaySystem::make(4, 1.0, 0.1, 0.01);
  auto dm = systems::TransferFunctionModel::from_delay(d);
  const Complex z(1.0, 0.0);
  REQUIRE(std::abs(dm.evaluate(z) - delay_oracle(d, z)) < 1e-12 * std::abs(delay_oracle(d, z)));
}

TEST_CASE("evaluate_derivative on the basic model kinds")
{
  auto rat = systems::TransferFunctionModel::from_rational(one_over_z_plus(1.0));
  REQUIRE(std::abs(rat.evaluate_derivative(Complex(0.0, 0.0)) + 1.0) < 1e-14);

  auto ss = scalar_model(-1.0, 1.0, 1.0);
  REQUIRE(std::abs(ss.evaluate_derivative(Complex(1.0, 0.0)) + 0.25) < 1e-14);

  auto d = systems::DelaySystem::make(4, 1.0, 0.1, 0.01);
  auto dm = systems::TransferFunctionModel::from_delay(d);
  for (Complex z : {Complex(1.0, 0.0), Complex(0.4, 2.0)})
  {
    const Complex fd = oracles::central_difference(
        [&](Complex w) { return dm.evaluate_unmetered(w); }, z, 1e-6);
    const Complex an = dm.evaluate_derivative(z);
    REQUIRE(std::abs(an - fd) <= 1e-5 * std::abs(an));
  }
}

TEST_CASE("conjugate symmetry for every model kind")
{
  auto d = systems::DelaySystem::make(6, 1.0, 0.1, 0.01);
  std::vector<systems::TransferFunctionModel> models;
  models.push_back(scalar_model(-1.5, 2.0, 0.7));
  models.push_back(systems::TransferFunctionModel::from_delay(d));
  models.push_back(systems::TransferFunctionModel::from_rational(one_over_z_plus(2.0)));
  for (const auto &m : models)
  {
    for (int t = 0; t < 5; ++t)
    {
      const Complex z(oracles::uniform(0.1, 3.0), oracles::uniform(-3.0, 3.0));
      const Complex a = m.evaluate_unmetered(z);
      const Complex b = m.evaluate_unmetered(std::conj(z));
      REQUIRE(std::abs(b - std::conj(a)) <= 1e-13 * std::max(1.0, std::abs(a)));
    }
  }
}

TEST_CASE("evaluation counter: conjugate pairs and cache hits are free")
{
  auto m = scalar_model(-1.0, 1.0, 1.0);
  REQUIRE(m.eval_count() == 0);
  const Complex z(1.0, 2.0);
  const Complex v = m.evaluate(z);
  REQUIRE(m.eval_count() == 1);
  const Complex vc = m.evaluate(std::conj(z));
  REQUIRE(m.eval_count() == 1);
  REQUIRE(std::abs(vc - std::conj(v)) < 1e-15);
  (void)m.evaluate(z);
  REQUIRE(m.eval_count() == 1);
  (void)m.evaluate(Complex(3.0, 0.0));
  REQUIRE(m.eval_count() == 2);

  (void)m.evaluate_uncached(z); // bypasses the cache by contract
  REQUIRE(m.eval_count() == 3);
  (void)m.evaluate_derivative(z);
  REQUIRE(m.eval_count() == 4);
  (void)m.solve_shifted(Complex(1.0, 0.0));
  REQUIRE(m.eval_count() == 5);
  (void)m.solve_shifted_adjoint(Complex(1.0, 0.0));
  REQUIRE(m.eval_count() == 6);

  auto fresh = m.clone();
  REQUIRE(fresh.eval_count() == 0);
  (void)fresh.evaluate(z);
  REQUIRE(fresh.eval_count() == 1);
  REQUIRE(m.eval_count() == 6);
}

TEST_CASE("tabulated models replay stored points only")
{
  std::vector<std::pair<Complex, Complex>> table{
      {Complex(1.0, 1.0), Complex(0.3, -0.2)}, {Complex(2.0, 0.0), Complex(0.5, 0.0)}};
  auto m = systems::TransferFunctionModel::from_table(table);
  REQUIRE(std::abs(m.evaluate(Complex(1.0, 1.0)) - Complex(0.3, -0.2)) < 1e-15);
  // Conjugate of a tabulated point is served by symmetry.
  REQUIRE(std::abs(m.evaluate_unmetered(Complex(1.0, -1.0)) - Complex(0.3, 0.2)) < 1e-15);
  REQUIRE_THROWS_AS(m.evaluate(Complex(9.0, 0.0)), std::runtime_error);
  REQUIRE_THROWS_AS(m.evaluate_derivative(Complex(2.0, 0.0)), std::runtime_error);
}

TEST_CASE("h2_norm_state_space examples and quadrature oracle")
{
  systems::StateSpace s1;
  s1.a = Eigen::MatrixXd::Constant(1, 1, -1.0);
  s1.b = Eigen::VectorXd::Constant(1, 1.0);
  s1.c = Eigen::VectorXd::Constant(1, 1.0);
  REQUIRE(systems::h2_norm_state_space(s1) == Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

  systems::StateSpace s2;
  s2.a = Eigen::MatrixXd::Zero(2, 2);
  s2.a(0, 0) = -1.0;
  s2.a(1, 1) = -2.0;
  s2.b = Eigen::VectorXd::Zero(2);
  s2.b(0) = 1.0;
  s2.c = s2.b;
  REQUIRE(systems::h2_norm_state_space(s2) == Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

  systems::StateSpace s3;
  s3.a = oracles::random_stable_matrix(5);
  s3.b = oracles::random_real_matrix(5, 1);
  s3.c = oracles::random_real_matrix(5, 1);
  auto model = systems::TransferFunctionModel::from_state_space(s3);
  const double lib = systems::h2_norm_state_space(s3);
  const double quad = oracles::h2_norm_quadrature(
      [&](Complex z) { return model.evaluate_unmetered(z); }, 100000);
  REQUIRE(lib == Approx(quad).epsilon(1e-4));
  // Controllability and observability routes agree.
  REQUIRE(lib == Approx(systems::h2_norm_state_space_observability(s3)).epsilon(1e-10));
}

TEST_CASE("h2_norm_rom examples")
{
  REQUIRE(systems::h2_norm_rom(one_over_z_plus(1.0)) ==
          Approx(1.0 / std::sqrt(2.0)).epsilon(1e-13));

  Eigen::VectorXcd poles(2), res(2);
  poles << Complex(-1.0, 1.0), Complex(-1.0, -1.0);
  res << Complex(0.5, 0.0), Complex(0.5, 0.0);
  auto rom = systems::RationalRom::from_poles_residues(poles, res);
  const double quad = oracles::h2_norm_quadrature(
      [&](Complex z) { return rom.evaluate(z); }, 1000000);
  REQUIRE(systems::h2_norm_rom(rom) == Approx(quad).epsilon(1e-6));

  Eigen::VectorXd a = Eigen::VectorXd::Zero(2), b(2);
  b << 2.0, 2.0;
  REQUIRE(systems::h2_norm_rom(systems::RationalRom::from_partial_fractions(a, b)) == 0.0);
}

TEST_CASE("RationalRom pole-residue round trip")
{
  for (int trial = 0; trial < 5; ++trial)
  {
    const int r = 2 + 2 * (trial % 3);
    Eigen::VectorXd a(r), b(r);
    for (int k = 0; k + 1 < r; k += 2)
    {
      // Well-separated conjugate pairs keep the residue form benign.
      const double re = oracles::uniform(0.3, 2.0) + k;
      const double im = oracles::uniform(0.5, 2.0);
      b(k) = re * re + im * im;
      b(k + 1) = 2.0 * re;
      a(k) = oracles::uniform(-1.0, 1.0);
      a(k + 1) = oracles::uniform(-1.0, 1.0);
    }
    auto rom = systems::RationalRom::from_partial_fractions(a, b);
    const auto &poles = rom.poles();
    const auto &res = rom.residues();
    for (int t = 0; t < 20; ++t)
    {
      const Complex z(oracles::uniform(0.0, 3.0), oracles::uniform(-3.0, 3.0));
      Complex pr(0.0, 0.0);
      for (Eigen::Index k = 0; k < poles.size(); ++k)
      {
        pr += res(k) / (z - poles(k));
      }
      const Complex pf = rom.evaluate(z);
      REQUIRE(std::abs(pr - pf) <= 1e-12 * std::max(1.0, std::abs(pf)));
    }
    // And back: rebuilding from poles/residues reproduces the function.
    // (The stacked-Gram difference norm of two identical roms sits at the
    // sqrt(eps)-level cancellation floor, so compare by evaluation.)
    auto rebuilt = systems::RationalRom::from_poles_residues(poles, res);
    for (int t = 0; t < 5; ++t)
    {
      const Complex z(oracles::uniform(0.5, 3.0), oracles::uniform(-3.0, 3.0));
      const Complex orig = rom.evaluate(z);
      REQUIRE(std::abs(rebuilt.evaluate(z) - orig) <= 1e-10 * std::max(1.0, std::abs(orig)));
    }
    REQUIRE(systems::rom_difference_norm(rom, rebuilt) <
            1e-7 * (1.0 + systems::h2_norm_rom(rom)));
  }
}

TEST_CASE("rom_difference_norm examples and triangle inequality")
{
  auto r1 = one_over_z_plus(1.0);
  REQUIRE(systems::rom_difference_norm(r1, r1) == Approx(0.0).margin(1e-14));

  Eigen::VectorXd za = Eigen::VectorXd::Zero(1), zb(1);
  zb << 1.0;
  auto zero = systems::RationalRom::from_partial_fractions(za, zb);
  REQUIRE(systems::rom_difference_norm(r1, zero) ==
          Approx(1.0 / std::sqrt(2.0)).epsilon(1e-13));

  auto random_rom = [&]()
  {
    Eigen::VectorXd a(2), b(2);
    const double re = oracles::uniform(0.3, 2.0), im = oracles::uniform(0.4, 2.0);
    b << re * re + im * im, 2.0 * re;
    a << oracles::uniform(-1.0, 1.0), oracles::uniform(-1.0, 1.0);
    return systems::RationalRom::from_partial_fractions(a, b);
  };
  auto p = random_rom(), q = random_rom(), s = random_rom();
  const double quad = oracles::h2_norm_quadrature(
      [&](Complex z) { return p.evaluate(z) - q.evaluate(z); }, 1000000);
  REQUIRE(systems::rom_difference_norm(p, q) == Approx(quad).epsilon(1e-6));
  for (int t = 0; t < 3; ++t)
  {
    REQUIRE(systems::rom_difference_norm(p, s) <=
            systems::rom_difference_norm(p, q) + systems::rom_difference_norm(q, s) + 1e-12);
  }
}

TEST_CASE("h2_error examples")
{
  auto rom = one_over_z_plus(1.0);
  auto model = systems::TransferFunctionModel::from_rational(rom);
  REQUIRE(systems::h2_error(model, rom) == Approx(0.0).margin(1e-12));

  Eigen::VectorXd za = Eigen::VectorXd::Zero(1), zb(1);
  zb << 1.0;
  auto zero = systems::RationalRom::from_partial_fractions(za, zb);
  REQUIRE(systems::h2_error(model, zero) == Approx(1.0).epsilon(1e-12));

  // Exact route against an independent dense quadrature.
  auto far = one_over_z_plus(2.0);
  const double exact = systems::h2_error(model, far);
  const double num = oracles::h2_norm_quadrature(
      [&](Complex z) { return rom.evaluate(z) - far.evaluate(z); }, 1000000);
  const double den = oracles::h2_norm_quadrature(
      [&](Complex z) { return rom.evaluate(z); }, 1000000);
  REQUIRE(exact == Approx(num / den).epsilon(1e-6));

  // Quadrature route (tabulated/delay kinds) against the same oracle.
  auto d = systems::DelaySystem::make(8, 1.0, 0.1, 0.01);
  auto dm = systems::TransferFunctionModel::from_delay(d);
  const double bcc = systems::h2_error(dm, far, 20000);
  const double dnum = oracles::h2_norm_quadrature(
      [&](Complex z) { return dm.evaluate_unmetered(z) - far.evaluate(z); }, 200000);
  const double dden = oracles::h2_norm_quadrature(
      [&](Complex z) { return dm.evaluate_unmetered(z); }, 200000);
  REQUIRE(bcc == Approx(dnum / dden).epsilon(1e-3));
}

TEST_CASE("check_meier_luenberger basic behavior")
{
  auto rom = one_over_z_plus(1.0);
  auto model = systems::TransferFunctionModel::from_rational(rom);
  auto report = systems::check_meier_luenberger(model, rom);
  REQUIRE(report.size() == 1);
  REQUIRE(report[0].value_mismatch < 1e-12);
  REQUIRE(report[0].derivative_mismatch < 1e-12);

  auto other = one_over_z_plus(2.0);
  auto report2 = systems::check_meier_luenberger(model, other);
  REQUIRE(report2[0].value_mismatch > 1e-3);
  REQUIRE(report2[0].derivative_mismatch > 1e-3);
}

TEST_CASE("matrix market loader")
{
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "h2mor_mm_test";
  fs::create_directories(dir);
  auto write = [&](const char *name, const char *content)
  {
    std::ofstream out(dir / name);
    out << content;
    return (dir / name).string();
  };

  const auto a_path = write("a.mtx", "%%MatrixMarket matrix coordinate real general\n"
                                     "% identity\n"
                                     "2 2 2\n"
                                     "1 1 1.0\n"
                                     "2 2 1.0\n");
  const auto b_path = write("b.mtx", "%%MatrixMarket matrix array real general\n"
                                     "2 1\n"
                                     "1.0\n"
                                     "1.0\n");
  const auto c_path = write("c.mtx", "%%MatrixMarket matrix array real general\n"
                                     "2 1\n"
                                     "1.0\n"
                                     "0.5\n");
  auto ss = systems::load_matrix_market(a_path, b_path, c_path);
  REQUIRE((ss.a - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(ss.b(1) == 1.0);
  REQUIRE(ss.c(1) == 0.5);

  // Coordinate-format sparse expansion with symmetry.
  const auto s_path = write("s.mtx", "%%MatrixMarket matrix coordinate real symmetric\n"
                                     "2 2 2\n"
                                     "1 1 -2.0\n"
                                     "2 1 0.5\n");
  auto sym = systems::detail::read_matrix_market(s_path);
  REQUIRE(sym(0, 1) == 0.5);
  REQUIRE(sym(1, 0) == 0.5);
  REQUIRE(sym(0, 0) == -2.0);
  REQUIRE(sym(1, 1) == 0.0);

  const auto bad_path = write("bad.mtx", "%%NotMatrixMarket something\n1 1 1\n");
  try
  {
    (void)systems::detail::read_matrix_market(bad_path);
    FAIL("expected parse error");
  }
  catch (const std::runtime_error &err)
  {
    REQUIRE(std::string(err.what()).find(":1:") != std::string::npos);
  }

  const auto trunc_path = write("trunc.mtx", "%%MatrixMarket matrix coordinate real general\n"
                                             "2 2 2\n"
                                             "1 1 1.0\n");
  REQUIRE_THROWS_AS(systems::detail::read_matrix_market(trunc_path), std::runtime_error);
}

TEST_CASE("delay system template structure")
{
  auto d = systems::DelaySystem::make(5, 1.0, 0.1, 0.01);
  // E = 20 I + T for epsilon = 0.01.
  REQUIRE(d.e(0, 0) == Approx(21.0));
  REQUIRE(d.e(1, 1) == Approx(20.0));
  REQUIRE(d.e(0, 1) == Approx(1.0));
  REQUIRE(d.e(4, 4) == Approx(21.0));
  // A0 = 22 (T - 20 I), A1 = 18 (T - 20 I) for tau=1, rho=0.1.
  REQUIRE(d.a0(1, 1) == Approx(-440.0));
  REQUIRE(d.a0(1, 2) == Approx(22.0));
  REQUIRE(d.a1(1, 1) == Approx(-360.0));
  REQUIRE(d.b(0) == 1.0);
  REQUIRE(d.b(1) == 1.0);
  REQUIRE(d.b(2) == 0.0);
  REQUIRE((d.b - d.c).norm() == 0.0);
}
