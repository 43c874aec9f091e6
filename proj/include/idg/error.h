///////////////////////////////////////////////////////////////////////////////
//
// Error type shared by all idg modules. Every failure carries a code so that
// callers (sweeps, pattern search, the CLI) can decide whether to record the
// failure and keep going or to abort.
//
///////////////////////////////////////////////////////////////////////////////

#ifndef IDG_ERROR_H
#define IDG_ERROR_H

#include <stdexcept>
#include <string>
#include <string_view>

namespace idg {

enum class ErrorCode {
  kInvalidArgument,
  kNonFiniteState,
  kNotSymmetric,
  kSingularMatrix,
  kOutOfRange,
  kDegenerateGeometry,
  kNoConvergence,
  kNotApplicable,
  kNoConvergedCandidate,
  kUnboundedOrDegenerate,
  kInfeasibleConstraints,
  kInfeasibleStart,
  kTooFewSamples,
  kParseError,
  kIoError,
};

std::string_view ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace idg

#endif  // IDG_ERROR_H
