#ifndef BILEVEL_RL_ERRORS_HPP
#define BILEVEL_RL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bilevel_rl {

// Precondition / dimension-agreement violations.
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed configuration or artifact payloads. Message names the offending key.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite state encountered while integrating; message carries the step index.
struct IntegrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace bilevel_rl

#endif
