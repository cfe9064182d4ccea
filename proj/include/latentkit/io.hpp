#pragma once

// Text file formats. Each starts with a versioned header line.
//
//   vocab:   #latentkit-vocab 1, then one token per line; line i (0-based,
//            after the header) is token id i.
//   corpus:  #latentkit-corpus 1, then one sentence per line, tokens
//            separated by single spaces.
//   latents: #latentkit-latents 1, then one line per sentence: the state
//            indices, or the continuous z values.
//   metrics: #latentkit-metrics 1, then one record per line as
//            space-separated key=value pairs starting with run= and event=.

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "latentkit/exact.hpp"
#include "latentkit/models.hpp"
#include "latentkit/vocab.hpp"

namespace latentkit {

inline constexpr const char* kVocabHeader = "#latentkit-vocab 1";
inline constexpr const char* kCorpusHeader = "#latentkit-corpus 1";
inline constexpr const char* kLatentsHeader = "#latentkit-latents 1";
inline constexpr const char* kMetricsHeader = "#latentkit-metrics 1";

void save_vocab(const std::string& path, const Vocab& vocab);
Vocab load_vocab(const std::string& path);

std::string format_sentence(const Sentence& x, const Vocab& vocab);
void save_corpus(const std::string& path, const Corpus& corpus, const Vocab& vocab);
// Unknown tokens fail naming the line; empty lines are skipped with a warning.
Corpus load_corpus(const std::string& path, const Vocab& vocab);

void save_latents(const std::string& path, const std::vector<Draw>& draws);

// Creates the directory and its parents.
void ensure_directory(const std::string& path);
std::string join_path(const std::string& dir, const std::string& name);
std::string parent_directory(const std::string& path);

class MetricsRecord {
 public:
  explicit MetricsRecord(std::string event) : event_(std::move(event)) {}
  MetricsRecord& add(const std::string& key, double value);
  MetricsRecord& add(const std::string& key, std::int64_t value);
  MetricsRecord& add(const std::string& key, std::size_t value) { return add(key, static_cast<std::int64_t>(value)); }
  MetricsRecord& add(const std::string& key, int value) { return add(key, static_cast<std::int64_t>(value)); }
  MetricsRecord& add(const std::string& key, const std::string& value);
  MetricsRecord& add(const std::string& key, const char* value) { return add(key, std::string(value)); }

  const std::string& event() const { return event_; }
  const std::vector<std::pair<std::string, std::string>>& fields() const { return fields_; }

 private:
  std::string event_;
  std::vector<std::pair<std::string, std::string>> fields_;
};

// Append-only writer; numeric fields must be finite.
class MetricsWriter {
 public:
  MetricsWriter(const std::string& path, std::string run_id);
  void write(const MetricsRecord& record);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::string run_id_;
  std::ofstream out_;
};

// Parsed records, each as a key -> value map (run and event included).
std::vector<std::map<std::string, std::string>> read_metrics(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace latentkit
