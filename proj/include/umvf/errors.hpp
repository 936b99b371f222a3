#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace umvf {

enum class ErrorKind {
  NotPositiveDefinite,
  DimensionMismatch,
  NonFinite,
  JointCovarianceIndefinite,
  RankDeficient,
  SingularKkt,
  AssumptionViolated,
  LengthMismatch,
  Config,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::JointCovarianceIndefinite: return "JointCovarianceIndefinite";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::SingularKkt: return "SingularKkt";
    case ErrorKind::AssumptionViolated: return "AssumptionViolated";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

/// Single exception type for the library. `kind()` distinguishes numerical
/// failures from configuration/validation failures; `step()` is set when the
/// failure happened inside the filter recursion.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, std::optional<long> step = std::nullopt)
      : std::runtime_error(format(kind, what, step)), kind_(kind), detail_(what), step_(step) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }
  std::optional<long> step() const noexcept { return step_; }

  /// Copy of this error tagged with a step index.
  Error at_step(long k) const { return Error(kind_, detail_, k); }

  /// Configuration and assumption errors map to exit code 2, the rest to 1.
  bool is_validation_failure() const noexcept {
    return kind_ == ErrorKind::Config || kind_ == ErrorKind::AssumptionViolated ||
           kind_ == ErrorKind::DimensionMismatch || kind_ == ErrorKind::LengthMismatch;
  }

 private:
  static std::string format(ErrorKind kind, const std::string& what, std::optional<long> step) {
    std::string s = std::string(to_string(kind)) + ": " + what;
    if (step) s += " (step " + std::to_string(*step) + ")";
    return s;
  }

  ErrorKind kind_;
  std::string detail_;
  std::optional<long> step_;
};

}  // namespace umvf
