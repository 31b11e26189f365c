#pragma once

#include <stdexcept>
#include <string>

namespace holab {

/// Invalid or unknown configuration. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file (trace CSV, event log, checkpoint).
class ParseError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

} // namespace holab
