#include "latentkit/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "latentkit/error.hpp"

namespace latentkit {

namespace {

void check_token(const std::string& token, const char* what) {
  if (token.empty() || std::any_of(token.begin(), token.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); })) {
    fail(ErrorCode::invalid_argument, std::string("checkpoint ") + what + " must be a non-empty token without whitespace: '" + token + "'");
  }
}

double parse_double(const std::string& token, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') {
    fail(ErrorCode::io, "checkpoint line " + std::to_string(line) + ": bad number '" + token + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

const std::string* Checkpoint::find_meta(const std::string& key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return &v;
  return nullptr;
}

const Tensor* Checkpoint::find_param(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return &p.tensor;
  return nullptr;
}

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  out << kCheckpointHeader << '\n';
  for (const auto& [key, value] : checkpoint.meta) {
    check_token(key, "meta key");
    check_token(value, "meta value");
    out << "meta " << key << ' ' << value << '\n';
  }
  for (const auto& p : checkpoint.params) {
    check_token(p.name, "parameter name");
    out << "param " << p.name << ' ' << p.tensor.rank();
    for (std::size_t e : p.tensor.shape()) out << ' ' << e;
    for (double v : p.tensor.values()) out << ' ' << format_double(v);
    out << '\n';
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointHeader) {
    fail(ErrorCode::io, "not a latentkit checkpoint (missing header '" + std::string(kCheckpointHeader) + "')");
  }
  Checkpoint cp;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string kind;
    fields >> kind;
    if (kind == "meta") {
      std::string key, value;
      if (!(fields >> key >> value)) fail(ErrorCode::io, "checkpoint line " + std::to_string(lineno) + ": malformed meta record");
      cp.meta.emplace_back(key, value);
    } else if (kind == "param") {
      std::string name;
      std::size_t rank = 0;
      if (!(fields >> name >> rank)) fail(ErrorCode::io, "checkpoint line " + std::to_string(lineno) + ": malformed param record");
      Shape shape(rank);
      for (auto& e : shape)
        if (!(fields >> e)) fail(ErrorCode::io, "checkpoint line " + std::to_string(lineno) + ": truncated shape");
      std::vector<double> values;
      std::string token;
      while (fields >> token) values.push_back(parse_double(token, lineno));
      if (values.size() != numel_of(shape)) {
        fail(ErrorCode::io, "checkpoint line " + std::to_string(lineno) + ": parameter '" + name + "' has " +
                                std::to_string(values.size()) + " values for shape " + shape_string(shape));
      }
      cp.params.push_back({name, Tensor::from(std::move(shape), std::move(values))});
    } else {
      fail(ErrorCode::io, "checkpoint line " + std::to_string(lineno) + ": unknown record '" + kind + "'");
    }
  }
  return cp;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write checkpoint '" + path + "'");
  write_checkpoint(out, checkpoint);
  if (!out) fail(ErrorCode::io, "error writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

void assign_parameters(const Checkpoint& checkpoint, const ParameterList& params) {
  for (const auto& p : params) {
    const Tensor* stored = checkpoint.find_param(p.name);
    if (!stored) fail(ErrorCode::io, "checkpoint lacks parameter '" + p.name + "'");
    if (stored->shape() != p.tensor.shape()) {
      fail(ErrorCode::shape_mismatch, "checkpoint parameter '" + p.name + "' has shape " + shape_string(stored->shape()) +
                                          ", model expects " + shape_string(p.tensor.shape()));
    }
    Tensor t = p.tensor;
    auto dst = t.mutable_values();
    const auto src = stored->values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace latentkit
