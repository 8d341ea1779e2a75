#pragma once

#include <stdexcept>
#include <string>

namespace handvote {

/// Malformed input file (bad magic, truncated payload, schema violation).
class format_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration (unknown key, out-of-range value, bad flag combination).
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem failure, reported with the offending path.
class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A joint has no valid vote-casting pixels; callers flag it instead of fabricating a position.
class no_evidence_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace handvote
