#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace oscar {

using TokenId = std::int32_t;

class VocabError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ReservedIds {
  TokenId pad = -1;
  TokenId unk = -1;
  TokenId cls = -1;
  TokenId sep = -1;
  TokenId mask = -1;

  bool contains(TokenId id) const {
    return id == pad || id == unk || id == cls || id == sep || id == mask;
  }
};

// A WordPiece vocabulary. IDs are dense line indices of the vocab file.
class Vocab {
 public:
  static constexpr std::size_t kMaxWordChars = 100;

  Vocab() = default;
  // Throws VocabError on duplicates, empty tokens or missing reserved tokens.
  explicit Vocab(std::vector<std::string> tokens, bool lowercase = true);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const ReservedIds& reserved() const { return reserved_; }
  bool lowercase() const { return lowercase_; }

  // Returns -1 when the piece is not in the vocabulary.
  TokenId find(std::string_view piece) const;
  TokenId id_of(std::string_view piece) const;  // throws when absent
  bool contains(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < tokens_.size(); }

  // FNV-1a over all tokens, used to tie compiled caches to a vocabulary.
  std::uint64_t fingerprint() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> id_of_;
  ReservedIds reserved_;
  bool lowercase_ = true;
};

Vocab load_vocab(const std::filesystem::path& path, bool lowercase = true);

// A sentence at the subword-ID level. Masked positions are 1-based and
// sorted; original_ids[k] is the pre-masking ID at masked_positions[k].
struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<std::size_t> masked_positions;
  std::vector<TokenId> original_ids;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  // IDs with masked positions restored to their originals.
  std::vector<TokenId> unmasked_ids() const;
  bool is_masked(std::size_t position) const;
};

// Throws VocabError when masked positions are out of range, unsorted, or
// do not hold the [MASK] ID.
void validate(const TokenSequence& seq, const Vocab& vocab);

// Lowercases ASCII, Latin-1, Latin Extended-A, Greek and Cyrillic letters.
std::string utf8_lowercase(std::string_view text);

// Greedy longest-match-first WordPiece decomposition of one word.
std::vector<TokenId> wordpiece(const Vocab& vocab, std::string_view word);

// Whitespace-split then WordPiece each word. Lowercases first when the
// vocabulary was loaded with lowercasing on.
TokenSequence tokenize(const Vocab& vocab, std::string_view text);

// Concatenate pieces, dropping "##" continuation prefixes.
std::string detokenize_word(const Vocab& vocab, const std::vector<TokenId>& ids);

}  // namespace oscar
