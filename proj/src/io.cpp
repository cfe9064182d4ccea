#include "latentkit/io.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

#include "latentkit/checkpoint.hpp"
#include "latentkit/error.hpp"

namespace latentkit {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot write '" + path + "'");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "'");
  return in;
}

void expect_header(std::istream& in, const std::string& path, const char* header) {
  std::string line;
  if (!std::getline(in, line) || line != header) {
    fail(ErrorCode::io, path + ":1: missing header '" + std::string(header) + "'");
  }
}

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) fail(ErrorCode::io, "write failed for '" + path + "'");
}

bool is_plain_token(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == '=') return false;
  }
  return true;
}

}  // namespace

void save_vocab(const std::string& path, const Vocab& vocab) {
  auto out = open_out(path);
  out << kVocabHeader << '\n';
  for (const auto& t : vocab.tokens()) out << t << '\n';
  finish(out, path);
}

Vocab load_vocab(const std::string& path) {
  auto in = open_in(path);
  expect_header(in, path, kVocabHeader);
  std::vector<std::string> tokens;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_of(" \t\r") != std::string::npos) {
      fail(ErrorCode::io, path + ":" + std::to_string(lineno) + ": vocab entries must be single non-empty tokens");
    }
    tokens.push_back(line);
  }
  try {
    return Vocab(std::move(tokens));
  } catch (const Error& e) {
    fail(ErrorCode::io, path + ": " + e.what());
  }
}

std::string format_sentence(const Sentence& x, const Vocab& vocab) {
  std::string s;
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (t) s += ' ';
    s += vocab.token(x[t]);
  }
  return s;
}

void save_corpus(const std::string& path, const Corpus& corpus, const Vocab& vocab) {
  auto out = open_out(path);
  out << kCorpusHeader << '\n';
  for (const auto& x : corpus) out << format_sentence(x, vocab) << '\n';
  finish(out, path);
}

Corpus load_corpus(const std::string& path, const Vocab& vocab) {
  auto in = open_in(path);
  expect_header(in, path, kCorpusHeader);
  Corpus corpus;
  std::string line, token;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream words(line);
    Sentence x;
    while (words >> token) {
      auto id = vocab.find(token);
      if (!id) fail(ErrorCode::io, path + ":" + std::to_string(lineno) + ": unknown token '" + token + "'");
      x.push_back(*id);
    }
    if (x.empty()) {
      warn(path + ":" + std::to_string(lineno) + ": empty line skipped");
      continue;
    }
    corpus.push_back(std::move(x));
  }
  return corpus;
}

void save_latents(const std::string& path, const std::vector<Draw>& draws) {
  auto out = open_out(path);
  out << kLatentsHeader << '\n';
  for (const auto& d : draws) {
    std::string line;
    for (auto s : d.states) line += (line.empty() ? "" : " ") + std::to_string(s);
    for (double v : d.z) line += (line.empty() ? "" : " ") + format_double(v);
    out << line << '\n';
  }
  finish(out, path);
}

void ensure_directory(const std::string& path) {
  if (path.empty()) return;
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) fail(ErrorCode::io, "cannot create directory '" + path + "': " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) {
  if (dir.empty()) return name;
  return (fs::path(dir) / name).string();
}

std::string parent_directory(const std::string& path) { return fs::path(path).parent_path().string(); }

MetricsRecord& MetricsRecord::add(const std::string& key, double value) {
  if (!std::isfinite(value)) fail(ErrorCode::numeric, "metric '" + key + "' is not finite in event '" + event_ + "'");
  fields_.emplace_back(key, format_double(value));
  return *this;
}

MetricsRecord& MetricsRecord::add(const std::string& key, std::int64_t value) {
  fields_.emplace_back(key, std::to_string(value));
  return *this;
}

MetricsRecord& MetricsRecord::add(const std::string& key, const std::string& value) {
  if (!is_plain_token(value)) fail(ErrorCode::invalid_argument, "metric '" + key + "' value must be a plain token: '" + value + "'");
  fields_.emplace_back(key, value);
  return *this;
}

MetricsWriter::MetricsWriter(const std::string& path, std::string run_id) : path_(path), run_id_(std::move(run_id)) {
  if (!is_plain_token(run_id_)) fail(ErrorCode::config, "run id must be a plain token: '" + run_id_ + "'");
  out_ = open_out(path);
  out_ << kMetricsHeader << '\n';
  finish(out_, path_);
}

void MetricsWriter::write(const MetricsRecord& record) {
  out_ << "run=" << run_id_ << " event=" << record.event();
  for (const auto& [k, v] : record.fields()) out_ << ' ' << k << '=' << v;
  out_ << '\n';
  finish(out_, path_);
}

std::vector<std::map<std::string, std::string>> read_metrics(const std::string& path) {
  auto in = open_in(path);
  expect_header(in, path, kMetricsHeader);
  std::vector<std::map<std::string, std::string>> records;
  std::string line, field;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::map<std::string, std::string> r;
    while (fields >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) fail(ErrorCode::io, path + ":" + std::to_string(lineno) + ": field without '='");
      r[field.substr(0, eq)] = field.substr(eq + 1);
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::string read_file(const std::string& path) {
  auto in = open_in(path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::string& path, const std::string& content) {
  auto out = open_out(path);
  out << content;
  finish(out, path);
}

}  // namespace latentkit
