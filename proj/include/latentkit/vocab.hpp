#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace latentkit {

using TokenId = std::size_t;
using Sentence = std::vector<TokenId>;

inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;

// Dense token table; ids 0 and 1 are the reserved sentence-start and
// sentence-end symbols.
class Vocab {
 public:
  Vocab() = default;
  explicit Vocab(std::vector<std::string> tokens);

  // <s>, </s>, w2, ..., w{size-1}
  static Vocab synthetic(std::size_t size);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(const std::string& token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Throws naming `what` when any id is >= vocab_size.
void check_sentence(const Sentence& x, std::size_t vocab_size, const char* what);

}  // namespace latentkit
