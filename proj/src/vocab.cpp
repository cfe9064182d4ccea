#include "latentkit/vocab.hpp"

#include "latentkit/error.hpp"

namespace latentkit {

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 2) fail(ErrorCode::invalid_argument, "vocabulary needs at least the two reserved tokens");
  for (TokenId i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) fail(ErrorCode::invalid_argument, "empty token at id " + std::to_string(i));
    if (!index_.emplace(tokens_[i], i).second) {
      fail(ErrorCode::invalid_argument, "duplicate token '" + tokens_[i] + "' at id " + std::to_string(i));
    }
  }
}

Vocab Vocab::synthetic(std::size_t size) {
  if (size < 2) fail(ErrorCode::invalid_argument, "synthetic vocabulary needs size >= 2");
  std::vector<std::string> tokens{"<s>", "</s>"};
  for (std::size_t i = 2; i < size; ++i) tokens.push_back("w" + std::to_string(i));
  return Vocab(std::move(tokens));
}

const std::string& Vocab::token(TokenId id) const {
  if (id >= tokens_.size()) fail(ErrorCode::out_of_range, "token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::optional<TokenId> Vocab::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void check_sentence(const Sentence& x, std::size_t vocab_size, const char* what) {
  if (x.empty()) fail(ErrorCode::invalid_argument, std::string(what) + ": empty sentence");
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (x[t] >= vocab_size) {
      fail(ErrorCode::out_of_range, std::string(what) + ": token id " + std::to_string(x[t]) + " at position " +
                                        std::to_string(t) + " is outside the vocabulary of size " +
                                        std::to_string(vocab_size));
    }
  }
}

}  // namespace latentkit
