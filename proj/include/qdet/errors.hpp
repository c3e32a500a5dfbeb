#pragma once

#include <stdexcept>
#include <string>

namespace qdet {

// Numerical / model failures. Each maps to a distinct condition so callers
// (and the CLI exit-code policy) can tell configuration mistakes from
// genuine numerical breakdown.

struct NonPositiveSigma : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SubclassViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct QuadratureFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotInvertible : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoRoot : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoConvergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StiffnessFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StateUnderflow : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateColumn : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Configuration problems (bad JSON, missing/unknown fields). `path` is the
// offending field location, e.g. "/prior/lambda".
struct ConfigError : std::runtime_error {
  std::string path;
  ConfigError(std::string p, const std::string& msg)
      : std::runtime_error(msg + " at " + p), path(std::move(p)) {}
};

// Operation requested on a model that does not support it
// (e.g. boundary solvers on tabulated coefficients).
struct CapabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace qdet
