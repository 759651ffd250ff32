#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oscar/lexicon.hpp"
#include "oscar/matcher.hpp"
#include "oscar/tensor.hpp"
#include "oscar/vocab.hpp"

namespace oscar::testing {

// Unique scratch directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("oscar_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const { return path_ / name; }

  std::filesystem::path write(const std::string& name, const std::string& content) const {
    auto p = file(name);
    std::ofstream out(p, std::ios::binary);
    out << content;
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string join_lines(const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += l + "\n";
  return s;
}

inline const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> r{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  return r;
}

// Reserved tokens, then the given pieces.
inline Vocab make_vocab(const std::vector<std::string>& pieces, bool lowercase = true) {
  std::vector<std::string> tokens = reserved_tokens();
  tokens.insert(tokens.end(), pieces.begin(), pieces.end());
  return Vocab(tokens, lowercase);
}

// A small English-ish vocabulary with whole words and a few split words.
inline std::vector<std::string> desk_pieces() {
  return {"the", "a", "detective", "flashed", "his", "badge", "to", "po", "##lice", "officer",
          "crime", "scene", "let", "enter", "confiscated", "car", "phone", "found", "she", "in",
          "keys", "ran", "outside", "dad", "grand", "##parents", "living", "room", "was", "at",
          "of", "and", "evidence", "authority", "symbol", "hospital", "sep", "##sis", "question", "answer"};
}

// Lexicon built directly from surfaces; embeddings are deterministic.
inline EntityLexicon lexicon_from_surfaces(const std::vector<std::vector<TokenId>>& surfaces, std::size_t dim = 2) {
  EntityLexicon lex(dim);
  for (std::size_t i = 0; i < surfaces.size(); ++i) {
    std::vector<double> emb(dim);
    for (std::size_t k = 0; k < dim; ++k) emb[k] = static_cast<double>(i + 1) + 0.25 * static_cast<double>(k);
    lex.add({"e" + std::to_string(i), surfaces[i], emb});
  }
  return lex;
}

// Brute-force reference: every span of the de-masked sentence that equals a
// surface, sorted by (start, len, entity). No filtering.
inline std::vector<EntityMatch> brute_force_matches(const EntityLexicon& lex, const TokenSequence& seq) {
  std::map<std::vector<TokenId>, std::size_t> table;
  std::size_t max_len = 0;
  for (std::size_t e = 0; e < lex.size(); ++e) {
    table.emplace(lex[e].surface, e);
    max_len = std::max(max_len, lex[e].surface.size());
  }
  std::vector<TokenId> ids = seq.ids;
  for (std::size_t k = 0; k < seq.masked_positions.size(); ++k) ids[seq.masked_positions[k] - 1] = seq.original_ids[k];
  std::vector<EntityMatch> out;
  for (std::size_t s = 0; s < ids.size(); ++s) {
    for (std::size_t len = 1; len <= max_len && s + len <= ids.size(); ++len) {
      std::vector<TokenId> span(ids.begin() + static_cast<std::ptrdiff_t>(s),
                                ids.begin() + static_cast<std::ptrdiff_t>(s + len));
      auto it = table.find(span);
      if (it == table.end()) continue;
      bool masked = false;
      for (std::size_t p : seq.masked_positions) masked = masked || (p >= s + 1 && p <= s + len);
      out.push_back({s + 1, len, it->second, masked});
    }
  }
  return out;
}

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

// Central difference of f with respect to *x.
inline double central_difference(const std::function<double()>& f, double* x, double h = 1e-5) {
  const double saved = *x;
  *x = saved + h;
  const double up = f();
  *x = saved - h;
  const double down = f();
  *x = saved;
  return (up - down) / (2.0 * h);
}

inline double rel_err(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Desk-scale training fixture: vocabulary, a lexicon with random d_e-dim
// embeddings, and sentences sampled from the vocabulary words with entity
// phrases mixed in.
struct Fixture {
  Vocab vocab;
  EntityLexicon lexicon;
  MatchAutomaton automaton;
  std::vector<std::string> lines;
  std::vector<TokenSequence> corpus;
};

inline std::vector<std::string> fixture_entities() {
  return {"police_officer", "police", "officer", "crime_scene", "car", "car_keys", "living_room",
          "grandparents", "badge", "evidence", "hospital", "sepsis", "phone", "detective"};
}

inline Fixture make_fixture(std::size_t sentences, std::uint64_t seed = 5, std::size_t dim = 8) {
  Fixture f;
  f.vocab = make_vocab(desk_pieces());
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::string text;
  for (const auto& name : fixture_entities()) {
    text += name;
    for (std::size_t k = 0; k < dim; ++k) text += " " + std::to_string(normal(rng));
    text += "\n";
  }
  std::istringstream in(text);
  f.lexicon = parse_lexicon(in, f.vocab).lexicon;
  f.automaton = compile(f.lexicon, f.vocab.size());

  std::vector<std::string> words;
  for (const auto& w : desk_pieces())
    if (!w.starts_with("##")) words.push_back(w);
  const std::vector<std::string> phrases{"police officer", "crime scene", "car keys", "living room",
                                         "grandparents", "sepsis", "badge"};
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1), phrase(0, phrases.size() - 1);
  std::uniform_int_distribution<int> len(4, 10);
  for (std::size_t i = 0; i < sentences; ++i) {
    std::string line;
    const int n = len(rng);
    for (int w = 0; w < n; ++w) line += (w ? " " : "") + (w == n / 2 ? phrases[phrase(rng)] : words[pick(rng)]);
    f.lines.push_back(line);
    f.corpus.push_back(tokenize(f.vocab, line));
  }
  return f;
}

}  // namespace oscar::testing
