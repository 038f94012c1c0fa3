#pragma once

#include <stdexcept>
#include <string>

namespace spherecat {

// Invalid configuration keys or values. CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A required input file or upstream stage artifact is absent. Exit code 3.
struct MissingInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent data (corpus records, taxonomy edges, dumps). Exit code 4.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace spherecat
