#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "latentkit/tensor.hpp"

namespace latentkit {

// Text checkpoint:
//
//   latentkit-checkpoint 1
//   meta <key> <value>
//   param <name> <rank> <extent>... <value>...
//
// Values are written with 17 significant digits, so a save/load round trip is
// bit-exact. Names and meta values may not contain whitespace.
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> meta;
  ParameterList params;

  const std::string* find_meta(const std::string& key) const;
  const Tensor* find_param(const std::string& name) const;
};

inline constexpr const char* kCheckpointHeader = "latentkit-checkpoint 1";

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

// Copy stored values into live parameters (matched by name, shapes checked).
void assign_parameters(const Checkpoint& checkpoint, const ParameterList& params);

std::string format_double(double value);

}  // namespace latentkit
