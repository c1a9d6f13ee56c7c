#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "singflow/io.hpp"

namespace singflow {

/// Outcome of one acceptance criterion. measured is the headline number the
/// pass decision is made on (a residual, an observed order, a count), with
/// its pinned tolerance and direction recorded in detail. runtime_seconds is
/// wall-clock and therefore excluded from hashed output.
struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  double measured = 0.0;
  double tolerance = 0.0;
  std::string detail;
  std::vector<std::string> notes;
  double runtime_seconds = 0.0;
};

struct VerifyConfig {
  int threads = 0;           // 0 means the default thread count
  std::uint64_t seed = 2026; // base seed; criteria derive their own streams
};

struct VerifySummary {
  std::vector<CriterionResult> criteria;
  bool all_pass = false;
};

/// Runs one acceptance criterion (1 through 10). The tolerances are pinned
/// inside the implementation; the config only controls parallelism and the
/// sampling seed.
CriterionResult run_criterion(int id, const VerifyConfig& cfg);

/// Runs all ten criteria in order. Never throws for a failing criterion; a
/// criterion that raises an unexpected error is reported as failed with the
/// message in its notes.
VerifySummary run_acceptance(const VerifyConfig& cfg);

namespace io {
nlohmann::json to_json(const CriterionResult& res);
/// The summary document separates volatile wall-clock readings from the
/// deterministic payload so canonical_hash covers only the latter.
nlohmann::json to_json(const VerifySummary& summary);
}  // namespace io

}  // namespace singflow
