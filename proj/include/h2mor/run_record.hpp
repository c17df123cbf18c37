#ifndef H2MOR_RUN_RECORD_HPP
#define H2MOR_RUN_RECORD_HPP

#include <complex>
#include <optional>
#include <vector>

#include <h2mor/systems.hpp>

namespace h2mor
{

/// One outer-loop iteration of any of the algorithms, as recorded for the
/// benchmark harness. fom_evals is the cumulative model-counter value at the
/// end of the iteration, never a hand-maintained tally.
struct IterationRecord
{
  long fom_evals = 0;
  std::optional<systems::RationalRom> rom;
  std::optional<double> projected_residual;
  std::optional<double> h2_error_estimate;
  std::vector<std::complex<double>> added_points;
  std::vector<std::complex<double>> replaced_spurious;
  std::vector<std::complex<double>> shifts; // IRKA/TF-IRKA interpolation points
};

enum class RunStatus
{
  converged,
  stagnated, // sample augmentation produced only duplicates
  max_iterations,
  inner_failure
};

struct RunRecord
{
  std::vector<IterationRecord> iterations;
  RunStatus status = RunStatus::max_iterations;

  bool converged() const
  {
    return status == RunStatus::converged || status == RunStatus::stagnated;
  }
  long final_fom_evals() const
  {
    return iterations.empty() ? 0 : iterations.back().fom_evals;
  }
};

} // namespace h2mor

#endif // H2MOR_RUN_RECORD_HPP
