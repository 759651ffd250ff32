#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "oscar/lexicon.hpp"
#include "oscar/matcher.hpp"

namespace oscar {

// Bad magic, unknown version, truncation or structural corruption.
class CacheFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCacheMagic[4] = {'O', 'S', 'C', '1'};
inline constexpr std::uint8_t kCacheVersion = 1;

// Compiled lexicon + automaton, tied to the vocabulary it was built with.
struct LexiconCache {
  std::uint64_t vocab_fingerprint = 0;
  std::uint64_t vocab_size = 0;
  EntityLexicon lexicon;
  MatchAutomaton automaton;
};

// Layout (little-endian): "OSC1", u8 version, u64 vocab fingerprint,
// u64 vocab size, u64 d_e, u64 K, K x {u32 name length, name bytes,
// u32 surface length, i32 ids, d_e x f64}, u64 pattern count, u64 state
// count, states x {i32 fail, i32 output link, i32 depth, i64 entity,
// u32 edge count, edges x {i32 label, i32 target}}.
void save_cache(const std::filesystem::path& path, const LexiconCache& cache);
LexiconCache load_cache(const std::filesystem::path& path);

LexiconCache make_cache(const Vocab& vocab, EntityLexicon lexicon);

// True when the file starts with the cache magic.
bool is_cache_file(const std::filesystem::path& path);

}  // namespace oscar
