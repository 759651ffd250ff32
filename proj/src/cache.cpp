#include "oscar/cache.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace oscar {

static_assert(std::endian::native == std::endian::little, "cache I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const char*>(&value);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> buf) : buf_(std::move(buf)) {}
  template <typename T>
  T get() {
    T value;
    need(sizeof(T));
    std::memcpy(&value, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string string(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  // Guards element counts read from the file against the bytes left.
  std::size_t count(std::uint64_t n, std::size_t min_elem_bytes) {
    if (min_elem_bytes != 0 && n > (buf_.size() - pos_) / min_elem_bytes)
      throw CacheFormatError("cache truncated or corrupt (count " + std::to_string(n) + ")");
    return static_cast<std::size_t>(n);
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw CacheFormatError("cache file truncated");
  }
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace

LexiconCache make_cache(const Vocab& vocab, EntityLexicon lexicon) {
  LexiconCache cache;
  cache.vocab_fingerprint = vocab.fingerprint();
  cache.vocab_size = vocab.size();
  cache.automaton = compile(lexicon, vocab.size());
  cache.lexicon = std::move(lexicon);
  return cache;
}

void save_cache(const std::filesystem::path& path, const LexiconCache& cache) {
  Writer w;
  w.bytes(kCacheMagic, sizeof kCacheMagic);
  w.put<std::uint8_t>(kCacheVersion);
  w.put<std::uint64_t>(cache.vocab_fingerprint);
  w.put<std::uint64_t>(cache.vocab_size);
  w.put<std::uint64_t>(cache.lexicon.dim());
  w.put<std::uint64_t>(cache.lexicon.size());
  for (const auto& e : cache.lexicon.entries()) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e.surface.size()));
    for (TokenId id : e.surface) w.put<std::int32_t>(id);
    for (double v : e.embedding) w.put<double>(v);
  }
  const auto& states = cache.automaton.states();
  w.put<std::uint64_t>(cache.automaton.pattern_count());
  w.put<std::uint64_t>(states.size());
  for (const auto& s : states) {
    w.put<std::int32_t>(s.fail);
    w.put<std::int32_t>(s.output_link);
    w.put<std::int32_t>(s.depth);
    w.put<std::int64_t>(s.entity);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.edges.size()));
    for (const auto& edge : s.edges) {
      w.put<std::int32_t>(edge.label);
      w.put<std::int32_t>(edge.target);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write cache " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw std::runtime_error("failed writing cache " + path.string());
}

LexiconCache load_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open cache " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(buf));

  if (r.string(4) != std::string(kCacheMagic, 4)) throw CacheFormatError("not an OSC1 cache: bad magic");
  const auto version = r.get<std::uint8_t>();
  if (version != kCacheVersion)
    throw CacheFormatError("unsupported cache version " + std::to_string(version) + " (expected " +
                           std::to_string(kCacheVersion) + ")");

  LexiconCache cache;
  cache.vocab_fingerprint = r.get<std::uint64_t>();
  cache.vocab_size = r.get<std::uint64_t>();
  const auto dim = r.count(r.get<std::uint64_t>(), 0);
  const auto k = r.count(r.get<std::uint64_t>(), 8);
  cache.lexicon = EntityLexicon(dim);
  for (std::size_t i = 0; i < k; ++i) {
    LexiconEntry e;
    e.name = r.string(r.count(r.get<std::uint32_t>(), 1));
    e.surface.resize(r.count(r.get<std::uint32_t>(), 4));
    for (auto& id : e.surface) id = r.get<std::int32_t>();
    e.embedding.resize(r.count(dim, 8));
    for (auto& v : e.embedding) v = r.get<double>();
    try {
      if (!cache.lexicon.add(std::move(e))) throw CacheFormatError("duplicate surface in cache");
    } catch (const LexiconError& err) {
      throw CacheFormatError(std::string("corrupt lexicon in cache: ") + err.what());
    }
  }

  const auto patterns = r.get<std::uint64_t>();
  std::vector<MatchAutomaton::State> states(r.count(r.get<std::uint64_t>(), 24));
  for (auto& s : states) {
    s.fail = r.get<std::int32_t>();
    s.output_link = r.get<std::int32_t>();
    s.depth = r.get<std::int32_t>();
    s.entity = r.get<std::int64_t>();
    s.edges.resize(r.count(r.get<std::uint32_t>(), 8));
    for (auto& edge : s.edges) {
      edge.label = r.get<std::int32_t>();
      edge.target = r.get<std::int32_t>();
    }
    if (s.entity >= static_cast<std::int64_t>(k)) throw CacheFormatError("automaton entity out of range");
  }
  if (!r.done()) throw CacheFormatError("trailing bytes after cache payload");
  try {
    cache.automaton = MatchAutomaton::from_states(std::move(states), patterns, cache.vocab_size);
  } catch (const MatchError& err) {
    throw CacheFormatError(std::string("corrupt automaton in cache: ") + err.what());
  }
  return cache;
}

bool is_cache_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  return in.gcount() == 4 && std::memcmp(magic, kCacheMagic, 4) == 0;
}

}  // namespace oscar
