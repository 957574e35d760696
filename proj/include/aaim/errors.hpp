#pragma once

#include <stdexcept>
#include <string>

namespace aaim {

/// Broad failure class; the CLI maps it onto exit codes.
enum class ErrorKind {
  Data,       // bad input values, files or inconsistent descriptors
  Numerical,  // solver did not converge, matrix not positive definite
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define AAIM_DEFINE_ERROR(Name, Kind)                           \
  class Name : public Error {                                   \
   public:                                                      \
    explicit Name(const std::string& what)                      \
        : Error(ErrorKind::Kind, what) {}                       \
  };

AAIM_DEFINE_ERROR(InvalidArgument, Data)
AAIM_DEFINE_ERROR(DegenerateGeometry, Data)
AAIM_DEFINE_ERROR(DegenerateSteering, Data)
AAIM_DEFINE_ERROR(InconsistentInputs, Data)
AAIM_DEFINE_ERROR(InsufficientSamples, Data)
AAIM_DEFINE_ERROR(FormatError, Data)
AAIM_DEFINE_ERROR(NoBinsInBand, Data)
AAIM_DEFINE_ERROR(UnsupportedGrid, Data)
AAIM_DEFINE_ERROR(UndefinedMetric, Numerical)
AAIM_DEFINE_ERROR(NotPositiveDefinite, Numerical)
AAIM_DEFINE_ERROR(NonConvergence, Numerical)

#undef AAIM_DEFINE_ERROR

}  // namespace aaim
