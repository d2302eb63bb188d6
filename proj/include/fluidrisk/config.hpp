#pragma once

#include "fluidrisk/errors.hpp"
#include "fluidrisk/model.hpp"

#include <cstdint>
#include <string>
#include <string_view>

namespace fluidrisk {

// Malformed model configuration. line is 1-based, 0 when unknown.
class ConfigError : public ModelError {
 public:
  ConfigError(const std::string& field, int line, const std::string& what);
  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  std::string field_;
  int line_;
};

// Schema (all numbers are JSON numbers):
//   name        string, optional
//   states      [r_1, ..., r_p]           nonzero fluid rates
//   alpha       [p]                       initial law
//   sigma       [p], optional (zeros)     dividend rates, zero on S-
//   cost_matrix [p][p], optional (zeros)  jump costs
//   gamma       number                    uniformization bound
//   kernel      {"type": "constant",  "C": [p][p], "D": [p][p]}
//             | {"type": "piecewise", "breakpoints": [m], "C": [m+1][p][p], "D": [m+1][p][p]}
//             | {"type": "hazard", "routing": [p][p], "hazards": [
//                  {"family": "exponential", "rate": x}
//                | {"family": "pareto", "a": x, "b": y}
//                | {"family": "weibull", "shape": k, "scale": l, "cap": c}]}
// Unknown fields are rejected.
FluidModel parse_model(std::string_view text);
FluidModel load_model(const std::string& path);
std::string model_to_json(const FluidModel& model);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace fluidrisk
