#pragma once

#include <stdexcept>
#include <string>

namespace crn {

/// Base class for every error raised by the library. `kind()` is a stable
/// machine-readable tag used by the CLI error line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define CRN_DEFINE_ERROR(Name, tag)                                      \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(tag, what) {}         \
  }

CRN_DEFINE_ERROR(DimensionError, "dimension");
CRN_DEFINE_ERROR(NumericError, "numeric");
CRN_DEFINE_ERROR(RangeError, "range");
CRN_DEFINE_ERROR(DataError, "data");
CRN_DEFINE_ERROR(ConfigError, "config");
CRN_DEFINE_ERROR(SchemaError, "schema");
CRN_DEFINE_ERROR(ConstraintError, "constraint");
CRN_DEFINE_ERROR(ConsistencyError, "consistency");
CRN_DEFINE_ERROR(DeterminismError, "determinism");
CRN_DEFINE_ERROR(ProfileError, "profile");

#undef CRN_DEFINE_ERROR

}  // namespace crn
