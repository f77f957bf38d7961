#pragma once

#include <stdexcept>
#include <string>

namespace flamecam {

enum class Errc {
  kInvalidArgument,
  kShapeMismatch,
  kNonFinite,
  kInvalidGraph,
  kBadMagic,
  kTruncatedPayload,
  kSizeMismatch,
  kMalformedHeader,
  kMissingQuantParams,
  kMissingStats,
  kUnfoldedBatchNorm,
  kProtectedLayer,
  kEmptyLayer,
  kEmptyInput,
  kDivisionByZero,
  kIo,
};

const char* errc_name(Errc code);

// All library failures surface as this exception; code() distinguishes them.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace flamecam
