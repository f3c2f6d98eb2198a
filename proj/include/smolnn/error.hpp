#ifndef SMOLNN_ERROR_HPP_
#define SMOLNN_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace smolnn {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, bad arguments, or violated preconditions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or divergence during a numerical procedure.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Missing, unreadable, or malformed files.
class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ConfigError(what);
}

}  // namespace detail
}  // namespace smolnn

#endif  // SMOLNN_ERROR_HPP_
