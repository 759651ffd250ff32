#include "oscar/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace oscar {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<Config::Key>& Config::keys() {
  static const std::vector<Key> k = {
      {"composition.method", "linear", "ran | linear_ran | linear"},
      {"composition.dim", "64", "composed entity dimension d_c"},
      {"composition.g", "tanh", "RAN output nonlinearity: tanh | identity"},
      {"composition.seed", "13", "seed for composition and projection initialization"},
      {"energy.kind", "euclidean", "euclidean | absolute | angular"},
      {"energy.epsilon", "1e-12", "angular cosine clamp margin"},
      {"energy.squared", "false", "use squared Euclidean distance"},
      {"match.include_subsumed", "false", "keep matches nested inside longer matches"},
      {"match.include_masked", "false", "keep matches overlapping masked positions"},
      {"encoder.layers", "4", "transformer layers"},
      {"encoder.hidden", "64", "hidden size d_h"},
      {"encoder.heads", "2", "attention heads"},
      {"encoder.ff", "256", "feed-forward size"},
      {"encoder.max_len", "384", "maximum sequence length in subwords"},
      {"train.batch_size", "8", "sentences per step"},
      {"train.lr", "2e-5", "base learning rate"},
      {"train.warmup", "320", "linear warm-up steps"},
      {"train.steps", "1000", "total optimizer steps"},
      {"train.lambda", "1.0", "regularizer weight"},
      {"train.seed", "42", "seed for encoder initialization and masking"},
      {"train.mask_fraction", "0.15", "fraction of positions selected for MLM"},
      {"train.tap", "final_layer", "input_embeddings | final_layer | layer:<k>"},
      {"train.oscar", "true", "enable the regularizer branch"},
      {"train.log_wall_time", "false", "include wall-clock fields in metrics"},
      {"data.vocab", "", "vocabulary file"},
      {"data.corpus", "", "corpus, one sentence per line"},
      {"data.lexicon", "", "embedding text file or compiled OSC1 cache"},
      {"data.lowercase", "true", "lowercase text before tokenization"},
      {"out.dir", ".", "output directory for metrics and checkpoint"},
      {"gradcheck.repeats", "3", "configurations per (dim, span length)"},
      {"gradcheck.seed", "20190731", "gradient check seed"},
      {"gradcheck.step", "1e-5", "central difference step"},
      {"gradcheck.tolerance", "1e-4", "maximum relative error"},
      {"gradcheck.inject_sign_error", "", "fixture: <method>:<energy> cell to corrupt"},
      {"bench.steps", "100", "timed steps per composition method"},
      {"bench.hidden", "256", "hidden size (and composition dim) for benchmarking"},
  };
  return k;
}

Config::Config() {
  for (const auto& k : keys()) values_[k.name] = k.default_value;
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second = value;
  explicit_[key] = true;
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key) const {
  const auto& s = get(key);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(key + ": not a number: '" + s + "'");
  return v;
}

std::uint64_t Config::get_u64(const std::string& key) const {
  const auto& s = get(key);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError(key + ": not a non-negative integer: '" + s + "'");
  return v;
}

bool Config::get_bool(const std::string& key) const {
  const auto& s = get(key);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key + ": not a boolean: '" + s + "'");
}

void Config::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  load_text(buf.str(), path.string());
}

std::string Config::echo() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

EncoderConfig Config::encoder() const {
  EncoderConfig c;
  c.layers = get_u64("encoder.layers");
  c.hidden = static_cast<Index>(get_u64("encoder.hidden"));
  c.heads = static_cast<Index>(get_u64("encoder.heads"));
  c.feed_forward = static_cast<Index>(get_u64("encoder.ff"));
  c.max_len = get_u64("encoder.max_len");
  return c;
}

TrainConfig Config::train() const {
  TrainConfig c;
  c.batch_size = get_u64("train.batch_size");
  c.learning_rate = get_double("train.lr");
  c.warmup_steps = get_u64("train.warmup");
  c.steps = get_u64("train.steps");
  c.seed = get_u64("train.seed");
  c.mask_fraction = get_double("train.mask_fraction");
  c.log_wall_time = get_bool("train.log_wall_time");
  return c;
}

OscarConfig Config::oscar() const {
  OscarConfig c;
  c.enabled = get_bool("train.oscar");
  c.lambda = get_double("train.lambda");
  c.method = parse_composition_method(get("composition.method"));
  c.dim = static_cast<Index>(get_u64("composition.dim"));
  c.g = parse_nonlinearity(get("composition.g"));
  c.seed = get_u64("composition.seed");
  c.energy = EnergyKind(parse_energy_type(get("energy.kind")), get_double("energy.epsilon"), get_bool("energy.squared"));
  c.match.include_subsumed = get_bool("match.include_subsumed");
  c.match.include_masked = get_bool("match.include_masked");
  c.tap = CompositionTap::parse(get("train.tap"));
  return c;
}

GradcheckOptions Config::gradcheck() const {
  GradcheckOptions o;
  o.repeats = static_cast<int>(get_u64("gradcheck.repeats"));
  o.seed = get_u64("gradcheck.seed");
  o.step = get_double("gradcheck.step");
  o.tolerance = get_double("gradcheck.tolerance");
  o.g = parse_nonlinearity(get("composition.g"));
  const auto& inject = get("gradcheck.inject_sign_error");
  if (!inject.empty()) {
    const auto colon = inject.find(':');
    if (colon == std::string::npos)
      throw ConfigError("gradcheck.inject_sign_error must look like <method>:<energy>");
    o.inject_sign_error = std::make_pair(parse_composition_method(inject.substr(0, colon)),
                                         parse_energy_type(inject.substr(colon + 1)));
  }
  return o;
}

}  // namespace oscar
