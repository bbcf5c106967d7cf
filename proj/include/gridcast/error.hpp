#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gridcast {

/// Coarse failure class. Maps onto the CLI exit codes.
enum class ErrorKind {
  config,   // exit 2
  data,     // exit 3
  numeric,  // exit 4
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define GRIDCAST_DEFINE_ERROR(Name, Kind)                                    \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  }

// grid-data
GRIDCAST_DEFINE_ERROR(FormatError, data);
GRIDCAST_DEFINE_ERROR(CorruptionError, data);
GRIDCAST_DEFINE_ERROR(WindowRangeError, data);
// calendar
GRIDCAST_DEFINE_ERROR(DomainError, config);
GRIDCAST_DEFINE_ERROR(CoverageError, data);
GRIDCAST_DEFINE_ERROR(ParseError, data);
GRIDCAST_DEFINE_ERROR(ProviderError, data);
// features / models
GRIDCAST_DEFINE_ERROR(ShapeError, data);
GRIDCAST_DEFINE_ERROR(ConfigError, config);
GRIDCAST_DEFINE_ERROR(IoError, data);

#undef GRIDCAST_DEFINE_ERROR

/// Non-finite loss or gradient. Carries the batch that produced it.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::int64_t batch_id = -1)
      : Error(ErrorKind::numeric, what), batch_id_(batch_id) {}
  std::int64_t batch_id() const noexcept { return batch_id_; }

 private:
  std::int64_t batch_id_;
};

int exit_code(ErrorKind kind) noexcept;

}  // namespace gridcast
