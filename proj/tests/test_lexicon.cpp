#include <sstream>

#include "doctest.h"
#include "test_util.hpp"

#include "oscar/cache.hpp"
#include "oscar/lexicon.hpp"
#include "oscar/matcher.hpp"

using namespace oscar;
using namespace oscar::testing;

namespace {

LoadedLexicon parse(const std::string& text, const Vocab& v) {
  std::istringstream in(text);
  return parse_lexicon(in, v);
}

}  // namespace

TEST_CASE("multi-word entity is tokenized word by word") {
  Vocab v = make_vocab(desk_pieces());
  auto loaded = parse("police_officer 0.1 0.2\n", v);
  REQUIRE(loaded.lexicon.size() == 1);
  const auto& e = loaded.lexicon[0];
  CHECK(e.name == "police_officer");
  CHECK(e.embedding == std::vector<double>{0.1, 0.2});
  std::vector<TokenId> expected = tokenize(v, "police").ids;
  const auto officer = tokenize(v, "officer").ids;
  expected.insert(expected.end(), officer.begin(), officer.end());
  CHECK(e.surface == expected);
  CHECK(e.surface.size() == 3);
  CHECK(loaded.report.ingested == 1);
  CHECK(loaded.report.dim == 2);
}

TEST_CASE("entities containing [UNK] are dropped") {
  Vocab v = make_vocab(desk_pieces());
  auto loaded = parse("qzx 0.1 0.2\ncar 1 2\n", v);
  CHECK(loaded.report.dropped_unk == 1);
  CHECK(loaded.report.ingested == 1);
  CHECK(loaded.lexicon.size() == 1);
}

TEST_CASE("first entity wins on surface collision") {
  Vocab v = make_vocab(desk_pieces());
  auto loaded = parse("/c/en/car 1 2\nCar 3 4\n", v);
  CHECK(loaded.report.collisions == 1);
  REQUIRE(loaded.lexicon.size() == 1);
  CHECK(loaded.lexicon[0].name == "car");
  CHECK(loaded.lexicon[0].embedding == std::vector<double>{1, 2});
}

TEST_CASE("header line, comments and URI prefixes") {
  Vocab v = make_vocab(desk_pieces());
  auto loaded = parse("3 2\n# comment\n/c/en/crime_scene/n 1 1\n\n/c/en/badge 2 2\nphone 3 3\n", v);
  CHECK(loaded.report.lines == 3);
  CHECK(loaded.report.ingested == 3);
  CHECK(loaded.lexicon[0].name == "crime_scene");
  CHECK(normalize_entity_name("/c/fr/voiture/n/wn") == "voiture");
  CHECK(normalize_entity_name("/c/en/living_room/n") == "living_room");
  CHECK(normalize_entity_name("plain") == "plain");
}

TEST_CASE("malformed input") {
  Vocab v = make_vocab(desk_pieces());
  CHECK_THROWS_AS(parse("car 1 2\nphone 1 2 3\n", v), LexiconError);
  CHECK_THROWS_AS(parse("car 1 x\n", v), LexiconError);
  CHECK_THROWS_AS(parse("", v), LexiconError);
  CHECK_THROWS_AS(parse("# only a comment\n", v), LexiconError);
  CHECK_THROWS_AS(parse("car 1 nan\n", v), LexiconError);
  CHECK_THROWS_AS(parse("5 2\ncar 1 2\n", v), LexiconError);  // header count mismatch
}

TEST_CASE("lines without a vector are skipped and counted") {
  Vocab v = make_vocab(desk_pieces());
  auto loaded = parse("car 1 2\nphone\n", v);
  CHECK(loaded.report.malformed_skipped == 1);
  CHECK(loaded.report.ingested == 1);
}

TEST_CASE("report lists every field") {
  Vocab v = make_vocab(desk_pieces());
  const std::string text = parse("car 1 2\nqzx 1 2\n", v).report.to_text();
  for (const char* key : {"ingested:1", "dropped_unk:1", "collisions:0", "malformed_skipped:0", "d_e:2", "K:1"})
    CHECK_MESSAGE(text.find(key) != std::string::npos, key);
}

TEST_CASE("ingest counts partition the input lines") {
  Vocab v = make_vocab(desk_pieces());
  const auto words = desk_pieces();
  Rng rng(3);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(words.size()) - 1), parts(1, 3), kind(0, 9);
  for (int trial = 0; trial < 50; ++trial) {
    std::string text = "# header comment\n";
    const int lines = 1 + trial;
    for (int i = 0; i < lines; ++i) {
      std::string name;
      const int k = kind(rng);
      if (k == 0) {
        name = "zzq";  // unknown word
      } else {
        for (int p = parts(rng); p > 0; --p) {
          const auto& w = words[static_cast<std::size_t>(pick(rng))];
          if (w.starts_with("##")) continue;
          name += (name.empty() ? "" : "_") + w;
        }
        if (name.empty()) name = "car";
      }
      text += name + (k == 1 ? "\n" : " 0.5 -1.5\n");
    }
    auto loaded = parse(text, v);
    const auto& r = loaded.report;
    CHECK(r.ingested + r.dropped_unk + r.collisions + r.malformed_skipped == static_cast<std::size_t>(lines));
    CHECK(r.lines == static_cast<std::size_t>(lines));
    CHECK(r.entities == loaded.lexicon.size());

    // Every entry is found as at least its own full span.
    auto aut = compile(loaded.lexicon, v.size());
    for (std::size_t e = 0; e < loaded.lexicon.size(); ++e) {
      TokenSequence seq{loaded.lexicon[e].surface, {}, {}};
      const auto matches = find_matches(aut, seq, {true, true});
      const EntityMatch full{1, seq.size(), e, false};
      CHECK(std::find(matches.begin(), matches.end(), full) != matches.end());
    }
  }
}

TEST_CASE("embedding matrix") {
  EntityLexicon lex = lexicon_from_surfaces({{5}, {6}, {7, 8}}, 2);
  const auto m = embedding_matrix(lex);
  CHECK(m.rows() == 3);
  CHECK(m.cols() == 2);
  for (Index i = 0; i < 3; ++i)
    for (Index k = 0; k < 2; ++k) CHECK(m(i, k) == lex[static_cast<std::size_t>(i)].embedding[static_cast<std::size_t>(k)]);

  const auto empty = embedding_matrix(EntityLexicon(4));
  CHECK(empty.rows() == 0);
  CHECK(empty.cols() == 4);
}

TEST_CASE("embedding values are bit-identical to the file") {
  Vocab v = make_vocab(desk_pieces());
  auto loaded = parse("car 0.1 -3.14159265358979 1e-300 7\n", v);
  const auto m = embedding_matrix(loaded.lexicon);
  CHECK(m(0, 0) == 0.1);
  CHECK(m(0, 1) == -3.14159265358979);
  CHECK(m(0, 2) == 1e-300);
  CHECK(m(0, 3) == 7.0);
}

TEST_CASE("lexicon rejects bad entries") {
  EntityLexicon lex(2);
  CHECK_THROWS_AS(lex.add({"x", {5}, {1.0}}), LexiconError);
  CHECK_THROWS_AS(lex.add({"x", {}, {1.0, 2.0}}), LexiconError);
  CHECK(lex.add({"x", {5}, {1.0, 2.0}}));
  CHECK_FALSE(lex.add({"y", {5}, {3.0, 4.0}}));
  CHECK(lex.find({5}) == 0);
  CHECK(lex.find({6}) == -1);
}

TEST_CASE("cache round trip behaves identically to a fresh load") {
  TempDir dir;
  Vocab v = make_vocab(desk_pieces());
  const std::string text =
      "police_officer 1 2\npolice 3 4\ncrime_scene 5 6\ncar 7 8\ncar_keys 9 10\nliving_room 11 12\ngrandparents 1 1\n";
  auto fresh = parse(text, v);
  const auto fresh_aut = compile(fresh.lexicon, v.size());
  save_cache(dir.file("lex.osc"), make_cache(v, fresh.lexicon));
  CHECK(is_cache_file(dir.file("lex.osc")));

  LexiconCache cache = load_cache(dir.file("lex.osc"));
  CHECK(cache.vocab_fingerprint == v.fingerprint());
  CHECK(cache.vocab_size == v.size());
  REQUIRE(cache.lexicon.size() == fresh.lexicon.size());
  for (std::size_t e = 0; e < fresh.lexicon.size(); ++e) {
    CHECK(cache.lexicon[e].name == fresh.lexicon[e].name);
    CHECK(cache.lexicon[e].surface == fresh.lexicon[e].surface);
    CHECK(cache.lexicon[e].embedding == fresh.lexicon[e].embedding);
  }

  Rng rng(11);
  const auto words = desk_pieces();
  std::uniform_int_distribution<int> pick(0, static_cast<int>(words.size()) - 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::string sentence;
    for (int w = 0; w < 12; ++w) {
      const auto& word = words[static_cast<std::size_t>(pick(rng))];
      if (!word.starts_with("##")) sentence += word + " ";
    }
    const auto seq = tokenize(v, sentence);
    for (bool sub : {false, true})
      CHECK(find_matches(cache.automaton, seq, {sub, false}) == find_matches(fresh_aut, seq, {sub, false}));
  }

  // Re-saving the loaded cache reproduces the same bytes.
  save_cache(dir.file("again.osc"), cache);
  CHECK(read_file(dir.file("again.osc")) == read_file(dir.file("lex.osc")));
}

TEST_CASE("corrupt caches are rejected") {
  TempDir dir;
  Vocab v = make_vocab(desk_pieces());
  auto fresh = parse("police_officer 1 2\ncar 3 4\n", v);
  save_cache(dir.file("ok.osc"), make_cache(v, fresh.lexicon));
  const std::string bytes = read_file(dir.file("ok.osc"));

  SUBCASE("bad magic") {
    std::string b = bytes;
    b[0] = 'X';
    CHECK_THROWS_AS(load_cache(dir.write("bad.osc", b)), CacheFormatError);
    CHECK_FALSE(is_cache_file(dir.file("bad.osc")));
  }
  SUBCASE("unknown version") {
    std::string b = bytes;
    b[4] = static_cast<char>(kCacheVersion + 1);
    CHECK_THROWS_WITH_AS(load_cache(dir.write("bad.osc", b)), doctest::Contains("version"), CacheFormatError);
  }
  SUBCASE("every truncation") {
    for (std::size_t n = 0; n < bytes.size(); n += 7)
      CHECK_THROWS_AS(load_cache(dir.write("bad.osc", bytes.substr(0, n))), CacheFormatError);
  }
  SUBCASE("trailing bytes") { CHECK_THROWS_AS(load_cache(dir.write("bad.osc", bytes + "x")), CacheFormatError); }
  SUBCASE("missing file") { CHECK_THROWS(load_cache(dir.file("absent.osc"))); }
}
