#include "oscar/matcher.hpp"

#include <algorithm>
#include <deque>
#include <string>

namespace oscar {

MatchAutomaton::MatchAutomaton() : states_(1) {}

std::int32_t MatchAutomaton::child(std::int32_t state, TokenId label) const {
  const auto& edges = states_[static_cast<std::size_t>(state)].edges;
  auto it = std::lower_bound(edges.begin(), edges.end(), label,
                             [](const Edge& e, TokenId l) { return e.label < l; });
  return (it != edges.end() && it->label == label) ? it->target : -1;
}

MatchAutomaton MatchAutomaton::from_states(std::vector<State> states, std::size_t patterns,
                                           std::size_t vocab_size) {
  if (states.empty()) throw MatchError("automaton has no root state");
  const auto n = static_cast<std::int64_t>(states.size());
  std::size_t emitting = 0;
  for (const auto& s : states) {
    if (s.fail < 0 || s.fail >= n || s.output_link < -1 || s.output_link >= n)
      throw MatchError("automaton link out of range");
    for (std::size_t k = 0; k < s.edges.size(); ++k) {
      if (s.edges[k].target <= 0 || s.edges[k].target >= n) throw MatchError("automaton edge out of range");
      if (k > 0 && s.edges[k - 1].label >= s.edges[k].label) throw MatchError("automaton edges unsorted");
    }
    if (s.entity >= 0) ++emitting;
  }
  if (emitting != patterns) throw MatchError("automaton pattern count mismatch");
  MatchAutomaton aut;
  aut.states_ = std::move(states);
  aut.patterns_ = patterns;
  aut.vocab_size_ = vocab_size;
  return aut;
}

MatchAutomaton compile(const EntityLexicon& lex, std::size_t vocab_size) {
  MatchAutomaton aut;
  aut.vocab_size_ = vocab_size;
  auto& states = aut.states_;

  for (std::size_t e = 0; e < lex.size(); ++e) {
    const auto& surface = lex[e].surface;
    if (surface.empty()) throw MatchError("entity '" + lex[e].name + "' has an empty surface");
    std::int32_t cur = 0;
    for (TokenId id : surface) {
      auto& edges = states[static_cast<std::size_t>(cur)].edges;
      auto it = std::lower_bound(edges.begin(), edges.end(), id,
                                 [](const MatchAutomaton::Edge& x, TokenId l) { return x.label < l; });
      if (it != edges.end() && it->label == id) {
        cur = it->target;
        continue;
      }
      auto next = static_cast<std::int32_t>(states.size());
      const auto depth = states[static_cast<std::size_t>(cur)].depth + 1;
      edges.insert(it, {id, next});
      states.emplace_back();
      states.back().depth = depth;
      cur = next;
    }
    auto& terminal = states[static_cast<std::size_t>(cur)];
    if (terminal.entity < 0) {
      terminal.entity = static_cast<std::int64_t>(e);
      ++aut.patterns_;
    }
  }

  // Breadth-first failure and output links.
  std::deque<std::int32_t> queue;
  for (const auto& edge : states[0].edges) {
    states[static_cast<std::size_t>(edge.target)].fail = 0;
    queue.push_back(edge.target);
  }
  while (!queue.empty()) {
    const std::int32_t u = queue.front();
    queue.pop_front();
    for (const auto& edge : states[static_cast<std::size_t>(u)].edges) {
      std::int32_t f = states[static_cast<std::size_t>(u)].fail;
      std::int32_t next = aut.child(f, edge.label);
      while (next < 0 && f != 0) {
        f = states[static_cast<std::size_t>(f)].fail;
        next = aut.child(f, edge.label);
      }
      auto& v = states[static_cast<std::size_t>(edge.target)];
      v.fail = (next >= 0 && next != edge.target) ? next : 0;
      const auto& fs = states[static_cast<std::size_t>(v.fail)];
      v.output_link = (fs.entity >= 0) ? v.fail : fs.output_link;
      queue.push_back(edge.target);
    }
  }
  return aut;
}

std::vector<EntityMatch> find_matches(const MatchAutomaton& aut, const TokenSequence& sentence,
                                      const MatchOptions& opts, MatchStats* stats) {
  const auto ids = sentence.unmasked_ids();
  const auto& states = aut.states();
  MatchStats local;

  std::vector<EntityMatch> raw;
  std::int32_t cur = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const TokenId id = ids[i];
    if (id < 0 || (aut.vocab_size() != 0 && static_cast<std::size_t>(id) >= aut.vocab_size()))
      throw MatchError("token ID " + std::to_string(id) + " at position " + std::to_string(i + 1) +
                       " is outside the vocabulary");
    std::int32_t next = aut.child(cur, id);
    while (next < 0 && cur != 0) {
      cur = states[static_cast<std::size_t>(cur)].fail;
      ++local.transitions;
      next = aut.child(cur, id);
    }
    ++local.transitions;
    cur = next < 0 ? 0 : next;

    const std::size_t end = i + 1;  // 1-based inclusive end
    for (std::int32_t s = cur; s > 0;) {
      const auto& st = states[static_cast<std::size_t>(s)];
      if (st.entity >= 0) {
        const auto len = static_cast<std::size_t>(st.depth);
        raw.push_back({end - len + 1, len, static_cast<std::size_t>(st.entity), false});
        ++local.outputs;
      }
      s = st.output_link;
      if (s > 0) ++local.transitions;
    }
  }

  auto by_span = [](const EntityMatch& a, const EntityMatch& b) {
    if (a.start != b.start) return a.start < b.start;
    if (a.len != b.len) return a.len > b.len;
    return a.entity < b.entity;
  };
  std::sort(raw.begin(), raw.end(), by_span);

  // A span is subsumed when an earlier, distinct span (start <= its start,
  // larger end on ties) reaches at least as far.
  std::vector<char> subsumed(raw.size(), 0);
  std::size_t max_end = 0;
  for (std::size_t g = 0; g < raw.size();) {
    std::size_t h = g;
    while (h < raw.size() && raw[h].start == raw[g].start && raw[h].len == raw[g].len) ++h;
    const bool contained = max_end >= raw[g].end();
    for (std::size_t k = g; k < h; ++k) subsumed[k] = contained;
    max_end = std::max(max_end, raw[g].end());
    g = h;
  }

  // masked_before[p] = masked positions in [1, p].
  std::vector<std::size_t> masked_before(ids.size() + 1, 0);
  for (std::size_t p : sentence.masked_positions)
    if (p >= 1 && p <= ids.size()) masked_before[p] = 1;
  for (std::size_t p = 1; p <= ids.size(); ++p) masked_before[p] += masked_before[p - 1];

  std::vector<EntityMatch> out;
  out.reserve(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) {
    if (subsumed[k] && !opts.include_subsumed) continue;
    EntityMatch m = raw[k];
    m.demasked = masked_before[m.end()] - masked_before[m.start - 1] > 0;
    if (m.demasked && !opts.include_masked) continue;
    out.push_back(m);
  }
  std::sort(out.begin(), out.end(), [](const EntityMatch& a, const EntityMatch& b) {
    if (a.start != b.start) return a.start < b.start;
    if (a.len != b.len) return a.len < b.len;
    return a.entity < b.entity;
  });

  if (stats) {
    stats->transitions += local.transitions;
    stats->outputs += local.outputs;
  }
  return out;
}

}  // namespace oscar
