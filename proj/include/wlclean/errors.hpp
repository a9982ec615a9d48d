#pragma once

#include <stdexcept>
#include <string>

namespace wlclean {

/// Base for every error raised by the library. The CLI maps subclasses to
/// exit codes (see `exit_code_for`).
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Bad configuration or command-line usage.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// Malformed input row; carries the 1-based line number.
class ParseError : public Error {
  public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

class DimensionError : public Error {
  public:
    using Error::Error;
};

/// Duplicate ids, unknown labels, violated dataset invariants.
class IntegrityError : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

/// Numerical failure: degenerate embeddings, collapsed heads.
class NumericalError : public Error {
  public:
    using Error::Error;
};

class DegenerateEmbedding : public NumericalError {
  public:
    DegenerateEmbedding() : NumericalError("degenerate embedding") {}
};

class TrainingCollapse : public NumericalError {
  public:
    TrainingCollapse(const std::string& what, long iteration)
        : NumericalError("training collapsed at iteration " + std::to_string(iteration) + ": " + what),
          iteration_(iteration) {}
    [[nodiscard]] long iteration() const noexcept { return iteration_; }

  private:
    long iteration_;
};

}  // namespace wlclean
