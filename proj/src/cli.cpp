#include "oscar/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "oscar/cache.hpp"
#include "oscar/config.hpp"
#include "oscar/gradcheck.hpp"
#include "oscar/trainer.hpp"

namespace oscar {

namespace {

namespace fs = std::filesystem;

// Raised for version/format problems that map to exit code 2.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Lexicon {
  EntityLexicon lexicon;
  MatchAutomaton automaton;
};

Lexicon load_any_lexicon(const fs::path& path, const Vocab& vocab, std::ostream& err) {
  if (is_cache_file(path)) {
    LexiconCache cache = load_cache(path);
    if (cache.vocab_fingerprint != vocab.fingerprint() || cache.vocab_size != vocab.size())
      throw FormatError("lexicon cache " + path.string() + " was compiled against a different vocabulary");
    return {std::move(cache.lexicon), std::move(cache.automaton)};
  }
  LoadedLexicon loaded = load_lexicon(path, vocab);
  err << loaded.report.to_text();
  auto automaton = compile(loaded.lexicon, vocab.size());
  return {std::move(loaded.lexicon), std::move(automaton)};
}

std::string require(const Config& cfg, const std::string& key) {
  const auto& v = cfg.get(key);
  if (v.empty()) throw ConfigError("missing required setting " + key);
  return v;
}

// Registers --<key> for every config key; values are applied after parsing.
void add_config_flags(CLI::App* cmd, std::map<std::string, std::string>& overrides, std::string& config_path) {
  cmd->add_option("--config", config_path, "key = value configuration file");
  for (const auto& key : Config::keys()) {
    cmd->add_option_function<std::string>(
        "--" + key.name, [&overrides, name = key.name](const std::string& v) { overrides[name] = v; }, key.help);
  }
}

Config build_config(const std::string& config_path, const std::map<std::string, std::string>& overrides) {
  Config cfg;
  if (!config_path.empty()) cfg.load_file(config_path);
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  return cfg;
}

int cmd_compile_lexicon(const std::string& embeddings, const std::string& vocab_path, const std::string& out_path,
                        bool lowercase, std::ostream& out) {
  Vocab vocab = load_vocab(vocab_path, lowercase);
  LoadedLexicon loaded = load_lexicon(embeddings, vocab);
  LexiconCache cache = make_cache(vocab, std::move(loaded.lexicon));
  save_cache(out_path, cache);
  out << loaded.report.to_text();
  return kExitOk;
}

int cmd_annotate(const std::string& cache_path, const std::string& vocab_path, const std::string& corpus_path,
                 const MatchOptions& opts, bool lowercase, std::ostream& out) {
  LexiconCache cache = load_cache(cache_path);
  Vocab vocab = load_vocab(vocab_path, lowercase);
  if (cache.vocab_fingerprint != vocab.fingerprint() || cache.vocab_size != vocab.size())
    throw FormatError("cache was compiled against a different vocabulary (or lowercase setting)");
  std::ifstream in(corpus_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus " + corpus_path);

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto matches = find_matches(cache.automaton, tokenize(vocab, line), opts);
    nlohmann::ordered_json obj;
    obj["line"] = lineno;
    obj["matches"] = nlohmann::ordered_json::array();
    for (const auto& m : matches) {
      nlohmann::ordered_json jm;
      jm["start"] = m.start;
      jm["len"] = m.len;
      jm["entity"] = cache.lexicon[m.entity].name;
      jm["demasked"] = m.demasked;
      obj["matches"].push_back(std::move(jm));
    }
    out << obj.dump() << '\n';
  }
  return kExitOk;
}

int cmd_gradcheck(const Config& cfg, std::ostream& out) {
  const auto cells = gradcheck_all(cfg.gradcheck());
  bool ok = true;
  out << std::left << std::setw(12) << "method" << std::setw(11) << "energy" << std::setw(9) << "configs"
      << std::setw(12) << "components" << std::setw(15) << "max_rel_error" << "result\n";
  for (const auto& c : cells) {
    ok = ok && c.passed();
    std::ostringstream err;
    err << std::scientific << std::setprecision(3) << c.max_rel_error;
    out << std::left << std::setw(12) << to_string(c.method) << std::setw(11) << to_string(c.energy)
        << std::setw(9) << c.configs << std::setw(12) << c.components << std::setw(15) << err.str()
        << (c.passed() ? "PASS" : "FAIL") << '\n';
  }
  return ok ? kExitOk : kExitVerificationFailure;
}

int cmd_train(const Config& cfg, std::ostream& err) {
  const bool lowercase = cfg.get_bool("data.lowercase");
  Vocab vocab = load_vocab(require(cfg, "data.vocab"), lowercase);
  Lexicon lex = load_any_lexicon(require(cfg, "data.lexicon"), vocab, err);
  EncoderConfig enc = cfg.encoder();
  TrainConfig tc = cfg.train();
  const auto corpus = load_corpus(require(cfg, "data.corpus"), vocab, enc.max_len);

  Trainer trainer(vocab, lex.lexicon, lex.automaton, enc, tc, cfg.oscar());
  const fs::path dir = cfg.get("out.dir");
  fs::create_directories(dir);
  std::ofstream metrics(dir / "metrics.jsonl", std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write " + (dir / "metrics.jsonl").string());
  const auto reports = train(trainer, corpus, &metrics);
  save_checkpoint(dir / "checkpoint.bin", trainer.model(), cfg.echo(), tc.seed);
  err << "trained " << reports.size() << " steps on " << corpus.size() << " sentences; wrote "
      << (dir / "metrics.jsonl").string() << " and " << (dir / "checkpoint.bin").string() << '\n';
  return kExitOk;
}

int cmd_bench(const Config& base, std::ostream& out, std::ostream& err) {
  const bool lowercase = base.get_bool("data.lowercase");
  Vocab vocab = load_vocab(require(base, "data.vocab"), lowercase);
  Lexicon lex = load_any_lexicon(require(base, "data.lexicon"), vocab, err);
  const std::size_t steps = base.get_u64("bench.steps");
  const std::string hidden = base.get("bench.hidden");

  struct Row {
    std::string method;
    double step_ms, oscar_ms;
  };
  std::vector<Row> rows;
  for (const char* method : {"ran", "linear_ran", "linear"}) {
    Config cfg = base;
    cfg.set("composition.method", method);
    cfg.set("encoder.hidden", hidden);
    cfg.set("composition.dim", hidden);
    cfg.set("train.steps", std::to_string(steps));
    cfg.set("train.warmup", std::to_string(std::min<std::uint64_t>(cfg.get_u64("train.warmup"), steps)));
    EncoderConfig enc = cfg.encoder();
    const auto corpus = load_corpus(require(cfg, "data.corpus"), vocab, enc.max_len);
    Trainer trainer(vocab, lex.lexicon, lex.automaton, enc, cfg.train(), cfg.oscar());
    const auto reports = train(trainer, corpus, nullptr);
    double wall = 0.0, oscar = 0.0;
    for (const auto& r : reports) {
      wall += r.wall_ms;
      oscar += r.oscar_ms;
    }
    const double n = reports.empty() ? 1.0 : static_cast<double>(reports.size());
    rows.push_back({method, wall / n, oscar / n});
  }

  const double ran = rows[0].step_ms;
  out << std::left << std::setw(12) << "method" << std::setw(14) << "mean_step_ms" << std::setw(15)
      << "mean_oscar_ms" << "step_vs_ran\n";
  out << std::fixed << std::setprecision(3);
  for (const auto& r : rows)
    out << std::left << std::setw(12) << r.method << std::setw(14) << r.step_ms << std::setw(15) << r.oscar_ms
        << (ran > 0.0 ? r.step_ms / ran : 0.0) << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ontology-regularized masked language model pretraining toolkit", "oscar"};
  app.require_subcommand(1);

  std::string embeddings, vocab_path, out_path, cache_path, corpus_path;
  bool lowercase = true;
  auto* compile_cmd = app.add_subcommand("compile-lexicon", "tokenize an embedding file and write an OSC1 cache");
  compile_cmd->add_option("embeddings", embeddings, "word-vector text file")->required();
  compile_cmd->add_option("vocab", vocab_path, "vocabulary file")->required();
  compile_cmd->add_option("out", out_path, "cache output path")->required();
  compile_cmd->add_option("--data.lowercase", lowercase, "lowercase before tokenization");

  MatchOptions match_opts;
  auto* annotate_cmd = app.add_subcommand("annotate", "print entity matches for each corpus line as JSON");
  annotate_cmd->add_option("cache", cache_path, "OSC1 cache")->required();
  annotate_cmd->add_option("vocab", vocab_path, "vocabulary file")->required();
  annotate_cmd->add_option("corpus", corpus_path, "text, one sentence per line")->required();
  annotate_cmd->add_flag("--include-subsumed", match_opts.include_subsumed, "keep nested matches");
  annotate_cmd->add_flag("--include-masked", match_opts.include_masked, "keep matches over masked positions");
  annotate_cmd->add_option("--data.lowercase", lowercase, "lowercase before tokenization");

  std::map<std::string, std::string> overrides;
  std::string config_path;
  std::string seed;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check of every method x energy cell");
  auto* train_cmd = app.add_subcommand("train", "MLM pretraining with the ontology regularizer");
  auto* bench_cmd = app.add_subcommand("bench", "mean step time per composition method");
  for (auto* cmd : {gradcheck_cmd, train_cmd, bench_cmd}) add_config_flags(cmd, overrides, config_path);
  for (auto* cmd : {train_cmd, bench_cmd}) cmd->add_option("--seed", seed, "shorthand for --train.seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  }

  try {
    if (compile_cmd->parsed()) return cmd_compile_lexicon(embeddings, vocab_path, out_path, lowercase, out);
    if (annotate_cmd->parsed()) return cmd_annotate(cache_path, vocab_path, corpus_path, match_opts, lowercase, out);

    if (!seed.empty()) overrides["train.seed"] = seed;
    const Config cfg = build_config(config_path, overrides);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(cfg, out);
    if (train_cmd->parsed()) return cmd_train(cfg, err);
    if (bench_cmd->parsed()) return cmd_bench(cfg, out, err);
  } catch (const CacheFormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitFormatError;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitFormatError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  }
  return kExitInputError;
}

}  // namespace oscar
