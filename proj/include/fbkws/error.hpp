#pragma once

#include <stdexcept>
#include <string>

namespace fbkws {

// Error taxonomy mirrored by the CLI exit codes: Config maps to exit 2
// (bad configuration / validation), everything else to exit 1.
class Error : public std::runtime_error {
 public:
  enum class Kind {
    kConfig,    // invalid configuration, spec or CLI arguments
    kShape,     // tensor dimension mismatch
    kFormat,    // file parsing (WAV, CSV, checkpoint)
    kContract,  // violated call contract (negative input to log, non-scalar loss, ...)
    kData,      // degenerate or missing data
    kRuntime,
  };

  Error(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline void require(bool cond, Error::Kind kind, const std::string& msg) {
  if (!cond) throw Error(kind, msg);
}

}  // namespace fbkws
