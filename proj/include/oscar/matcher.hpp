#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "oscar/lexicon.hpp"
#include "oscar/vocab.hpp"

namespace oscar {

class MatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EntityMatch {
  std::size_t start = 0;  // 1-based
  std::size_t len = 0;
  std::size_t entity = 0;
  bool demasked = false;

  std::size_t end() const { return start + len - 1; }  // inclusive
  friend bool operator==(const EntityMatch&, const EntityMatch&) = default;
};

struct MatchOptions {
  bool include_subsumed = false;
  bool include_masked = false;
};

struct MatchStats {
  std::size_t transitions = 0;  // goto + failure + output-link steps
  std::size_t outputs = 0;
};

// Aho-Corasick automaton over subword IDs. Each state that ends a lexicon
// surface emits (depth, entity); output links chain to the nearest proper
// suffix state that also emits.
class MatchAutomaton {
 public:
  struct Edge {
    TokenId label;
    std::int32_t target;
  };
  struct State {
    std::vector<Edge> edges;  // sorted by label
    std::int32_t fail = 0;
    std::int32_t output_link = -1;
    std::int32_t depth = 0;
    std::int64_t entity = -1;
  };

  MatchAutomaton();

  std::size_t state_count() const { return states_.size(); }
  std::size_t pattern_count() const { return patterns_; }
  std::size_t vocab_size() const { return vocab_size_; }
  const std::vector<State>& states() const { return states_; }

  // -1 when there is no edge.
  std::int32_t child(std::int32_t state, TokenId label) const;

  // Rebuilds from raw states, e.g. when loading a cache. Validates shape.
  static MatchAutomaton from_states(std::vector<State> states, std::size_t patterns, std::size_t vocab_size);

 private:
  friend MatchAutomaton compile(const EntityLexicon&, std::size_t);
  std::vector<State> states_;
  std::size_t patterns_ = 0;
  std::size_t vocab_size_ = 0;
};

// vocab_size == 0 disables the upper-bound ID check in find_matches.
MatchAutomaton compile(const EntityLexicon& lex, std::size_t vocab_size = 0);

// Every occurrence of every surface, scanning the de-masked IDs, then
// subsumption and mask filters per opts. Sorted by (start, len, entity).
std::vector<EntityMatch> find_matches(const MatchAutomaton& aut, const TokenSequence& sentence,
                                      const MatchOptions& opts, MatchStats* stats = nullptr);

}  // namespace oscar
