#pragma once

#include <stdexcept>
#include <string>

namespace iid {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define IID_DEFINE_ERROR(NAME)                      \
  class NAME : public Error {                       \
   public:                                          \
    using Error::Error;                             \
  }

IID_DEFINE_ERROR(InvalidPose);
IID_DEFINE_ERROR(ShapeError);
IID_DEFINE_ERROR(DegenerateFace);
IID_DEFINE_ERROR(SchemaError);
IID_DEFINE_ERROR(SplitError);
IID_DEFINE_ERROR(MissingGaze);
IID_DEFINE_ERROR(DegenerateLabels);
IID_DEFINE_ERROR(MissingLandmarks);
IID_DEFINE_ERROR(NumericalError);
IID_DEFINE_ERROR(UndefinedMetric);
IID_DEFINE_ERROR(ConfigError);
IID_DEFINE_ERROR(IndexError);
IID_DEFINE_ERROR(IoError);

#undef IID_DEFINE_ERROR

/// Parse failure in a line-oriented file; keeps the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace iid
