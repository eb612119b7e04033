#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pompkit {

/// Input or configuration failed validation. Carries every violation found.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(std::vector<std::string> violations)
      : std::invalid_argument(join(violations)), violations_(std::move(violations)) {}
  explicit ValidationError(const std::string& violation)
      : ValidationError(std::vector<std::string>{violation}) {}

  [[nodiscard]] const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) {
      if (!out.empty()) out += "; ";
      out += s;
    }
    return out;
  }
  std::vector<std::string> violations_;
};

/// A model hook broke its contract (e.g. dmeasure returned NaN).
class ModelContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The requested operation needs a hook the model does not provide.
class UnsupportedOperation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Every particle received zero weight at one time step.
class FilteringFailure : public std::runtime_error {
 public:
  explicit FilteringFailure(long time_index)
      : std::runtime_error("all particle weights are zero at time index " +
                           std::to_string(time_index)),
        time_index_(time_index) {}
  [[nodiscard]] long time_index() const noexcept { return time_index_; }

 private:
  long time_index_;
};

/// A filter run accumulated more zero-weight steps than allowed.
class FilteringLimitExceeded : public std::runtime_error {
 public:
  FilteringLimitExceeded(long failures, long limit)
      : std::runtime_error("filtering failures (" + std::to_string(failures) +
                           ") exceeded max_fail (" + std::to_string(limit) + ")") {}
};

}  // namespace pompkit
