#pragma once

// Central finite-difference checks of every analytic gradient: the three
// loss kernels at the logit level and the full student end to end.

#include <cstdint>
#include <string>
#include <vector>

#include "cusa/core_math.hpp"

namespace cusa {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::uint32_t trials = 20;
  std::uint32_t max_dim = 8;
  std::vector<Index> batch_sizes{2, 3, 5, 8};
  double step = 1e-5;
  double rel_tol = 1e-4;
  double abs_tol = 1e-7;
  /// Flips the sign of the named component's analytic gradient (harness self-test).
  std::string inject_fault;
};

struct ComponentResult {
  std::string name;
  double max_rel_error = 0.0;  ///< over entries whose absolute error exceeds abs_tol
  double max_abs_error = 0.0;
  std::uint64_t checked = 0;
  std::uint64_t failures = 0;

  bool passed() const noexcept { return failures == 0; }
};

struct GradcheckReport {
  std::vector<ComponentResult> components;

  bool passed() const noexcept;
  /// First failing component, or nullptr.
  const ComponentResult* first_failure() const noexcept;
};

/// Component names, in report order.
const std::vector<std::string>& gradcheck_components();

GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace cusa
