#ifndef DAD_COMMON_HPP
#define DAD_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dad {

using Index = std::int64_t;

// Error taxonomy. Each failure mode named by the public contracts maps to one
// of these so callers (and the CLI) can distinguish bad configs from bad data
// from genuine bugs.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& msg) : Error("validation error: " + msg) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

struct ResourceError : Error {
  explicit ResourceError(const std::string& msg) : Error("resource error: " + msg) {}
};

struct LoadError : Error {
  explicit LoadError(const std::string& msg) : Error("load error: " + msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

#define DAD_CHECK(cond, etype, msg)      \
  do {                                   \
    if (!(cond)) throw etype(msg);       \
  } while (0)

}  // namespace dad

#endif  // DAD_COMMON_HPP
