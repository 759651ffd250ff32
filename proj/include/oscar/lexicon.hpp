#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "oscar/vocab.hpp"

namespace oscar {

class LexiconError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LexiconEntry {
  std::string name;
  std::vector<TokenId> surface;
  std::vector<double> embedding;
};

struct IngestReport {
  std::size_t lines = 0;  // non-comment, non-blank, non-header lines
  std::size_t ingested = 0;
  std::size_t dropped_unk = 0;
  std::size_t collisions = 0;
  std::size_t malformed_skipped = 0;
  std::size_t dim = 0;
  std::size_t entities = 0;

  // key:value lines, one per field.
  std::string to_text() const;
};

// Ontology entities with their subword surfaces and pretrained embeddings.
// Surfaces are unique; entry order is file order of first occurrence.
class EntityLexicon {
 public:
  EntityLexicon() = default;
  explicit EntityLexicon(std::size_t dim) : dim_(dim) {}

  // Returns false (and stores nothing) when the surface is already taken.
  // Throws LexiconError on a dimension mismatch or an empty surface.
  bool add(LexiconEntry entry);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t dim() const { return dim_; }
  const LexiconEntry& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<LexiconEntry>& entries() const { return entries_; }
  // -1 when no entity has this surface.
  long find(const std::vector<TokenId>& surface) const;

 private:
  std::size_t dim_ = 0;
  std::vector<LexiconEntry> entries_;
  std::map<std::vector<TokenId>, std::size_t> index_;
};

struct LoadedLexicon {
  EntityLexicon lexicon;
  IngestReport report;
};

// Reads a word-vector text file: "name v1 ... vd" per line, optional
// "K d" header on the first line, '#' comment lines. Names may carry a
// "/c/<lang>/" prefix and use '_' between words.
LoadedLexicon load_lexicon(const std::filesystem::path& path, const Vocab& vocab);
LoadedLexicon parse_lexicon(std::istream& in, const Vocab& vocab);

// Strips a ConceptNet URI prefix and any trailing "/pos" component.
std::string normalize_entity_name(std::string_view raw);

// Underscore-split, then tokenize each word with the corpus tokenizer.
std::vector<TokenId> tokenize_entity(const Vocab& vocab, std::string_view name);

// K x d_e, row i = entries[i].embedding.
Eigen::MatrixXd embedding_matrix(const EntityLexicon& lex);

}  // namespace oscar
