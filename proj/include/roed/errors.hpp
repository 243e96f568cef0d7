#pragma once

#include <stdexcept>
#include <string>

namespace roed {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ROED_DEFINE_ERROR(Name)                                 \
  class Name : public Error {                                   \
   public:                                                      \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  }

ROED_DEFINE_ERROR(InvalidArgument);
ROED_DEFINE_ERROR(NonPositiveCoefficient);
ROED_DEFINE_ERROR(SingularSystem);
ROED_DEFINE_ERROR(SensorOutsideDomain);
ROED_DEFINE_ERROR(NotPositiveDefinite);
ROED_DEFINE_ERROR(EmptyDesign);
ROED_DEFINE_ERROR(EmptyDistribution);
ROED_DEFINE_ERROR(BreakdownInQR);
ROED_DEFINE_ERROR(ConfigError);
ROED_DEFINE_ERROR(SizeGuard);

#undef ROED_DEFINE_ERROR

}  // namespace roed
