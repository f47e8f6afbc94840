#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace icsc {

enum class GradcheckScope { kAll, kGeometry, kLosses, kNn };

GradcheckScope parse_gradcheck_scope(const std::string& name);

struct GradcheckOptions {
  GradcheckScope scope = GradcheckScope::kAll;
  std::uint64_t seed = 1;
  int points = 100;  // random points per component
  /// Name of a component whose analytic gradient is scaled by 1.01 before
  /// comparison (harness sensitivity fixture). Empty for none.
  std::string inject_fault;
};

struct GradcheckEntry {
  std::string scope;
  std::string name;
  int points = 0;
  double worst = 0.0;  // worst relative error
  double tolerance = 0.0;
  std::string status;  // "pass", "fail" or "skipped: non-differentiable region"
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;

  bool passed() const;
  std::string table() const;
};

/// Relative error |a - b| / max(|a|, |b|, 1e-3).
double gradcheck_rel_err(double analytic, double numeric);

/// Finite-difference comparison of every analytic gradient in `scope`.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

/// Component names run_gradcheck() may report, across all scopes.
std::vector<std::string> gradcheck_components();

}  // namespace icsc
