#include "oscar/vocab.hpp"

#include <algorithm>
#include <fstream>

namespace oscar {

namespace {

constexpr std::string_view kContinuation = "##";

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Decodes one UTF-8 sequence starting at text[i]; advances i. Invalid bytes
// decode as themselves so nothing is lost.
char32_t decode_one(std::string_view text, std::size_t& i) {
  const auto c = static_cast<unsigned char>(text[i]);
  std::size_t extra = 0;
  char32_t cp = c;
  if (c >= 0xC0 && c < 0xE0) {
    extra = 1;
    cp = c & 0x1F;
  } else if (c >= 0xE0 && c < 0xF0) {
    extra = 2;
    cp = c & 0x0F;
  } else if (c >= 0xF0 && c < 0xF8) {
    extra = 3;
    cp = c & 0x07;
  }
  if (extra == 0 || i + extra > text.size() - 1) {
    ++i;
    return c;
  }
  for (std::size_t k = 1; k <= extra; ++k) {
    const auto b = static_cast<unsigned char>(text[i + k]);
    if ((b & 0xC0) != 0x80) {
      ++i;
      return c;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += extra + 1;
  return cp;
}

void encode_one(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if (cp < 0x80) return cp;
  if ((cp >= 0xC0 && cp <= 0xDE) && cp != 0xD7) return cp + 32;
  if (cp >= 0x100 && cp <= 0x137) return cp | 1;
  if (cp >= 0x139 && cp <= 0x148) return (cp % 2 == 1) ? cp + 1 : cp;
  if (cp >= 0x14A && cp <= 0x177) return cp | 1;
  if (cp == 0x178) return 0xFF;
  if (cp >= 0x179 && cp <= 0x17E) return (cp % 2 == 1) ? cp + 1 : cp;
  if (cp >= 0x391 && cp <= 0x3AB && cp != 0x3A2) return cp + 32;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 32;
  return cp;
}

std::size_t count_chars(std::string_view word) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < word.size();) {
    decode_one(word, i);
    ++n;
  }
  return n;
}

// Byte offsets at code point boundaries, including word.size().
std::vector<std::size_t> char_boundaries(std::string_view word) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < word.size();) {
    out.push_back(i);
    decode_one(word, i);
  }
  out.push_back(word.size());
  return out;
}

}  // namespace

Vocab::Vocab(std::vector<std::string> tokens, bool lowercase)
    : tokens_(std::move(tokens)), lowercase_(lowercase) {
  id_of_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& tok = tokens_[i];
    if (tok.empty())
      throw VocabError("empty token at line " + std::to_string(i + 1));
    auto [it, inserted] = id_of_.emplace(tok, static_cast<TokenId>(i));
    if (!inserted)
      throw VocabError("duplicate token '" + tok + "' at lines " + std::to_string(it->second + 1) +
                       " and " + std::to_string(i + 1));
  }
  auto reserved = [&](const char* name) {
    auto it = id_of_.find(name);
    if (it == id_of_.end()) throw VocabError(std::string("missing reserved token ") + name);
    return it->second;
  };
  reserved_.pad = reserved("[PAD]");
  reserved_.unk = reserved("[UNK]");
  reserved_.cls = reserved("[CLS]");
  reserved_.sep = reserved("[SEP]");
  reserved_.mask = reserved("[MASK]");
}

TokenId Vocab::find(std::string_view piece) const {
  auto it = id_of_.find(std::string(piece));
  return it == id_of_.end() ? -1 : it->second;
}

TokenId Vocab::id_of(std::string_view piece) const {
  TokenId id = find(piece);
  if (id < 0) throw VocabError("token not in vocabulary: " + std::string(piece));
  return id;
}

std::uint64_t Vocab::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](unsigned char b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (const auto& tok : tokens_) {
    for (char c : tok) mix(static_cast<unsigned char>(c));
    mix('\n');
  }
  mix(lowercase_ ? 1 : 0);
  return h;
}

Vocab load_vocab(const std::filesystem::path& path, bool lowercase) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VocabError("cannot open vocab file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocab(std::move(tokens), lowercase);
}

std::vector<TokenId> TokenSequence::unmasked_ids() const {
  std::vector<TokenId> out = ids;
  for (std::size_t k = 0; k < masked_positions.size(); ++k)
    out[masked_positions[k] - 1] = original_ids[k];
  return out;
}

bool TokenSequence::is_masked(std::size_t position) const {
  return std::binary_search(masked_positions.begin(), masked_positions.end(), position);
}

void validate(const TokenSequence& seq, const Vocab& vocab) {
  if (seq.masked_positions.size() != seq.original_ids.size())
    throw VocabError("masked_positions and original_ids differ in length");
  std::size_t prev = 0;
  for (std::size_t p : seq.masked_positions) {
    if (p < 1 || p > seq.ids.size()) throw VocabError("masked position out of range");
    if (p <= prev) throw VocabError("masked positions must be strictly increasing");
    if (seq.ids[p - 1] != vocab.reserved().mask) throw VocabError("masked position does not hold [MASK]");
    prev = p;
  }
}

std::string utf8_lowercase(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    std::size_t start = i;
    char32_t cp = decode_one(text, i);
    char32_t lower = to_lower(cp);
    if (lower == cp)
      out.append(text.substr(start, i - start));
    else
      encode_one(lower, out);
  }
  return out;
}

std::vector<TokenId> wordpiece(const Vocab& vocab, std::string_view word) {
  const TokenId unk = vocab.reserved().unk;
  if (word.empty()) return {};
  if (count_chars(word) > Vocab::kMaxWordChars) return {unk};

  const auto bounds = char_boundaries(word);
  std::vector<TokenId> pieces;
  std::string candidate;
  std::size_t begin = 0;  // index into bounds
  const std::size_t last = bounds.size() - 1;
  while (begin < last) {
    TokenId found = -1;
    std::size_t end = last;
    for (; end > begin; --end) {
      candidate.clear();
      if (begin > 0) candidate.append(kContinuation);
      candidate.append(word.substr(bounds[begin], bounds[end] - bounds[begin]));
      found = vocab.find(candidate);
      if (found >= 0) break;
    }
    if (found < 0) return {unk};
    pieces.push_back(found);
    begin = end;
  }
  return pieces;
}

TokenSequence tokenize(const Vocab& vocab, std::string_view text) {
  std::string lowered;
  if (vocab.lowercase()) {
    lowered = utf8_lowercase(text);
    text = lowered;
  }
  TokenSequence seq;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) {
      auto pieces = wordpiece(vocab, text.substr(i, j - i));
      seq.ids.insert(seq.ids.end(), pieces.begin(), pieces.end());
    }
    i = j;
  }
  return seq;
}

std::string detokenize_word(const Vocab& vocab, const std::vector<TokenId>& ids) {
  std::string out;
  for (TokenId id : ids) {
    std::string_view piece = vocab.token(id);
    if (piece.starts_with(kContinuation)) piece.remove_prefix(kContinuation.size());
    out.append(piece);
  }
  return out;
}

}  // namespace oscar
