#include "oscar/lexicon.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

namespace oscar {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_size(std::string_view s, std::size_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_real(std::string_view s, double& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

std::string IngestReport::to_text() const {
  std::ostringstream os;
  os << "ingested:" << ingested << "\n"
     << "dropped_unk:" << dropped_unk << "\n"
     << "collisions:" << collisions << "\n"
     << "malformed_skipped:" << malformed_skipped << "\n"
     << "d_e:" << dim << "\n"
     << "K:" << entities << "\n";
  return os.str();
}

bool EntityLexicon::add(LexiconEntry entry) {
  if (entry.surface.empty()) throw LexiconError("entity '" + entry.name + "' has an empty surface");
  if (dim_ == 0) dim_ = entry.embedding.size();
  if (entry.embedding.size() != dim_ || dim_ == 0)
    throw LexiconError("entity '" + entry.name + "' has dimension " +
                       std::to_string(entry.embedding.size()) + ", expected " + std::to_string(dim_));
  auto [it, inserted] = index_.emplace(entry.surface, entries_.size());
  if (!inserted) return false;
  entries_.push_back(std::move(entry));
  return true;
}

long EntityLexicon::find(const std::vector<TokenId>& surface) const {
  auto it = index_.find(surface);
  return it == index_.end() ? -1 : static_cast<long>(it->second);
}

std::string normalize_entity_name(std::string_view raw) {
  if (raw.starts_with("/c/")) {
    raw.remove_prefix(3);
    auto slash = raw.find('/');
    raw = (slash == std::string_view::npos) ? std::string_view{} : raw.substr(slash + 1);
    auto pos = raw.find('/');
    if (pos != std::string_view::npos) raw = raw.substr(0, pos);
  }
  return std::string(raw);
}

std::vector<TokenId> tokenize_entity(const Vocab& vocab, std::string_view name) {
  std::vector<TokenId> surface;
  std::size_t i = 0;
  while (i <= name.size()) {
    std::size_t j = name.find('_', i);
    if (j == std::string_view::npos) j = name.size();
    auto word = tokenize(vocab, name.substr(i, j - i));
    surface.insert(surface.end(), word.ids.begin(), word.ids.end());
    i = j + 1;
  }
  return surface;
}

LoadedLexicon parse_lexicon(std::istream& in, const Vocab& vocab) {
  LoadedLexicon out;
  auto& report = out.report;
  std::size_t dim = 0;
  std::size_t declared_k = 0;
  bool first = true;
  bool any_line = false;
  std::string line;
  std::size_t lineno = 0;

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_fields(line);
    if (fields.empty() || fields.front().starts_with("#")) continue;
    any_line = true;

    if (first) {
      first = false;
      std::size_t k = 0, d = 0;
      if (fields.size() == 2 && parse_size(fields[0], k) && parse_size(fields[1], d)) {
        if (d == 0) throw LexiconError("header declares zero dimension");
        declared_k = k;
        dim = d;
        continue;
      }
    }
    ++report.lines;

    std::string name = normalize_entity_name(fields[0]);
    if (fields.size() < 2 || name.empty()) {
      ++report.malformed_skipped;
      continue;
    }
    std::vector<double> vec(fields.size() - 1);
    for (std::size_t c = 1; c < fields.size(); ++c) {
      if (!parse_real(fields[c], vec[c - 1]))
        throw LexiconError("line " + std::to_string(lineno) + ": non-numeric or non-finite component '" +
                           std::string(fields[c]) + "'");
    }
    if (dim == 0) dim = vec.size();
    if (vec.size() != dim)
      throw LexiconError("line " + std::to_string(lineno) + ": dimension " + std::to_string(vec.size()) +
                         " differs from " + std::to_string(dim));

    auto surface = tokenize_entity(vocab, name);
    if (surface.empty()) {
      ++report.malformed_skipped;
      continue;
    }
    bool has_unk = false, has_reserved = false;
    for (TokenId id : surface) {
      if (id == vocab.reserved().unk)
        has_unk = true;
      else if (vocab.reserved().contains(id))
        has_reserved = true;
    }
    if (has_unk) {
      ++report.dropped_unk;
      continue;
    }
    if (has_reserved) {
      ++report.malformed_skipped;
      continue;
    }
    if (out.lexicon.empty() && out.lexicon.dim() == 0) out.lexicon = EntityLexicon(dim);
    if (out.lexicon.add({std::move(name), std::move(surface), std::move(vec)}))
      ++report.ingested;
    else
      ++report.collisions;
  }

  if (!any_line) throw LexiconError("embedding file is empty");
  if (declared_k != 0 && declared_k != report.lines)
    throw LexiconError("header declares " + std::to_string(declared_k) + " entities but file has " +
                       std::to_string(report.lines));
  if (out.lexicon.dim() == 0) out.lexicon = EntityLexicon(dim);
  report.dim = dim;
  report.entities = out.lexicon.size();
  return out;
}

LoadedLexicon load_lexicon(const std::filesystem::path& path, const Vocab& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LexiconError("cannot open embedding file " + path.string());
  return parse_lexicon(in, vocab);
}

Eigen::MatrixXd embedding_matrix(const EntityLexicon& lex) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(lex.size()), static_cast<Eigen::Index>(lex.dim()));
  for (std::size_t i = 0; i < lex.size(); ++i)
    for (std::size_t j = 0; j < lex.dim(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = lex[i].embedding[j];
  return m;
}

}  // namespace oscar
