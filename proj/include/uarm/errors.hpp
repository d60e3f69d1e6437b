#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace uarm {

// Every error raised by the library derives from Error so callers at the
// process boundary can catch a single type and still report `kind()`.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define UARM_DEFINE_ERROR(Name)                                          \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(#Name, what) {}       \
  }

UARM_DEFINE_ERROR(ConfigNotFound);
UARM_DEFINE_ERROR(ConfigError);
UARM_DEFINE_ERROR(DimensionError);
UARM_DEFINE_ERROR(EncoderRangeError);
UARM_DEFINE_ERROR(FramingError);
UARM_DEFINE_ERROR(ChecksumError);
UARM_DEFINE_ERROR(IncompleteReading);
UARM_DEFINE_ERROR(CalibrationError);
UARM_DEFINE_ERROR(BackendUnavailable);
UARM_DEFINE_ERROR(MetricError);
UARM_DEFINE_ERROR(ReplayError);

#undef UARM_DEFINE_ERROR

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("ParseError", "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace uarm
