#pragma once

#include <stdexcept>
#include <string>

namespace wfactor {

enum class ErrorKind {
  InvalidData,
  InvalidLag,
  PreconditionViolated,
  IllConditioned,
  InvalidConfig,
  DegenerateSpectrum,
  IngestError,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidData: return "InvalidData";
    case ErrorKind::InvalidLag: return "InvalidLag";
    case ErrorKind::PreconditionViolated: return "PreconditionViolated";
    case ErrorKind::IllConditioned: return "IllConditioned";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::DegenerateSpectrum: return "DegenerateSpectrum";
    case ErrorKind::IngestError: return "IngestError";
  }
  return "Unknown";
}

// Process exit code for each error class; 0 is success, 1 is reserved for
// unexpected failures.
inline int exit_code(ErrorKind kind) {
  return 10 + static_cast<int>(kind);
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, long detail = -1)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind),
        detail_(detail) {}

  ErrorKind kind() const noexcept { return kind_; }

  // Kind-specific payload: the largest admissible q for IllConditioned
  // weight matrices, the offending slice index for matrix panels, the
  // 1-based row of an IngestError. -1 when unused.
  long detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  long detail_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what, long detail = -1) {
  throw Error(kind, what, detail);
}

}  // namespace wfactor
