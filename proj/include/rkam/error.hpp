#pragma once

#include <stdexcept>
#include <string>

namespace rkam {

// Failure classes map one-to-one onto CLI exit codes.
enum class ErrorKind {
  Config = 1,      // malformed input, shape mismatch, violated precondition
  Hypothesis = 2,  // Diophantine / rank / parity hypotheses fail
  Solver = 3,      // Newton or compensation did not converge
  Internal = 4
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string stage, const std::string& what)
      : std::runtime_error(stage.empty() ? what : stage + ": " + what),
        kind_(kind),
        stage_(std::move(stage)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& stage() const noexcept { return stage_; }

 private:
  ErrorKind kind_;
  std::string stage_;
};

inline void require(bool ok, const std::string& stage, const std::string& what) {
  if (!ok) throw Error(ErrorKind::Config, stage, what);
}

}  // namespace rkam
