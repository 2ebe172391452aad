#pragma once

// Acceptance criteria as callable checks. Each returns a result whose
// `metrics` are deterministic given the seed; wall-clock measurements are
// kept apart in `timings` so reports can be compared bitwise.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vmamba/config.hpp"

namespace vmamba::checks {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool passed = false;
  std::string summary;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::pair<std::string, double>> timings;
  double seconds = 0;
};

struct CheckOptions {
  std::uint64_t seed = 0;
  /// Criterion 10 runs only when a training configuration is supplied.
  std::optional<RunConfig> training;
  /// Receives per-epoch progress lines during criterion 10.
  std::function<void(const std::string&)> log;
};

CriterionResult discretization(const CheckOptions& o);
CriterionResult lti_equivalence(const CheckOptions& o);
CriterionResult scan_order_goldens(const CheckOptions& o);
CriterionResult frame_reorder_goldens(const CheckOptions& o);
CriterionResult gradient_suite(const CheckOptions& o);
CriterionResult inflation_equivalence(const CheckOptions& o);
CriterionResult cost_model(const CheckOptions& o);
CriterionResult complexity_scaling(const CheckOptions& o);
CriterionResult delta_semantics(const CheckOptions& o);
CriterionResult temporal_order(const CheckOptions& o);

struct CriterionEntry {
  int id;
  const char* name;
  CriterionResult (*run)(const CheckOptions&);
};

/// Criteria 1 to 10 in order. Determinism (11) compares whole runs and lives
/// with the callers.
const std::vector<CriterionEntry>& registry();

/// One line per criterion: "PASS [n] title: summary".
std::string format_line(const CriterionResult& r);

/// JSON report. With include_timings = false the output depends only on the seed.
std::string report_json(const std::vector<CriterionResult>& results, bool include_timings);

}  // namespace vmamba::checks
