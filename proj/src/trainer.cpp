#include "oscar/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>

#include "json.hpp"

namespace oscar {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

void prefix(std::vector<TensorRef>& out, std::vector<TensorRef> in, const std::string& pre) {
  for (auto& t : in) {
    t.name = pre + t.name;
    out.push_back(std::move(t));
  }
}

constexpr char kCheckpointMagic[4] = {'O', 'S', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

CompositionTap CompositionTap::parse(const std::string& s) {
  if (s == "input_embeddings") return {Kind::InputEmbeddings, 0};
  if (s == "final_layer") return {Kind::FinalLayer, 0};
  if (s.starts_with("layer:")) {
    const std::string num = s.substr(6);
    if (!num.empty() && std::all_of(num.begin(), num.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      const auto k = std::stoul(num);
      if (k >= 1) return {Kind::Layer, k};
    }
  }
  throw TrainingError("invalid composition tap '" + s + "' (expected input_embeddings, final_layer or layer:<k>)");
}

std::string CompositionTap::to_string() const {
  switch (kind) {
    case Kind::InputEmbeddings: return "input_embeddings";
    case Kind::FinalLayer: return "final_layer";
    case Kind::Layer: return "layer:" + std::to_string(layer);
  }
  return "?";
}

std::size_t CompositionTap::resolve(std::size_t layers) const {
  switch (kind) {
    case Kind::InputEmbeddings: return 0;
    case Kind::FinalLayer: return layers;
    case Kind::Layer:
      if (layer < 1 || layer > layers)
        throw TrainingError("composition tap layer " + std::to_string(layer) + " outside 1.." + std::to_string(layers));
      return layer;
  }
  return layers;
}

void TrainConfig::validate() const {
  if (!(mask_fraction > 0.0 && mask_fraction < 1.0)) throw TrainingError("train.mask_fraction must be in (0, 1)");
  if (batch_size == 0) throw TrainingError("train.batch_size must be positive");
  if (warmup_steps > steps && steps > 0) throw TrainingError("train.warmup must not exceed train.steps");
  if (!(learning_rate > 0.0)) throw TrainingError("train.lr must be positive");
}

std::size_t mask_count(double fraction, std::size_t n) {
  if (n == 0) return 0;
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

MaskedSentence mask_sentence(const TokenSequence& seq, double fraction, Rng& rng, const Vocab& vocab) {
  const std::size_t n = seq.size();
  if (n == 0) throw TrainingError("cannot mask an empty sentence");
  MaskedSentence out;
  out.original = seq.unmasked_ids();
  out.input.ids = out.original;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  const std::size_t k = mask_count(fraction, n);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(chosen.begin(), chosen.end());

  const auto& reserved = vocab.reserved();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> any(0, vocab.size() - 1);
  for (std::size_t idx : chosen) {
    out.targets.push_back(idx + 1);
    out.target_ids.push_back(out.original[idx]);
    const double u = unit(rng);
    if (u < 0.8) {
      out.input.ids[idx] = reserved.mask;
    } else if (u < 0.9) {
      TokenId replacement = reserved.mask;
      if (vocab.size() > 5) {
        do {
          replacement = static_cast<TokenId>(any(rng));
        } while (reserved.contains(replacement));
      }
      out.input.ids[idx] = replacement;
    }
    if (out.input.ids[idx] == reserved.mask) {
      out.input.masked_positions.push_back(idx + 1);
      out.input.original_ids.push_back(out.original[idx]);
    }
  }
  return out;
}

TokenSequence matching_view(const MaskedSentence& m, const Vocab& vocab) {
  TokenSequence view;
  view.ids = m.original;
  for (std::size_t i = 0; i < m.original.size(); ++i) {
    if (m.input.ids[i] != m.original[i]) {
      view.masked_positions.push_back(i + 1);
      view.original_ids.push_back(m.original[i]);
      view.ids[i] = vocab.reserved().mask;
    }
  }
  return view;
}

std::string StepReport::to_json(bool with_wall_time) const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["mlm_loss"] = mlm_loss;
  j["reg_value"] = reg_value;
  j["total_loss"] = total_loss;
  j["entities_matched"] = entities;
  if (with_wall_time) {
    j["wall_ms"] = wall_ms;
    j["oscar_ms"] = oscar_ms;
  }
  return j.dump();
}

std::vector<TensorRef> Model::tensors() {
  std::vector<TensorRef> out;
  prefix(out, encoder.params().tensors(), "encoder.");
  prefix(out, composition.tensors(), "composition.");
  prefix(out, projection.tensors(), "");
  return out;
}

std::vector<TensorRef> Gradients::tensors() {
  std::vector<TensorRef> out;
  prefix(out, encoder.tensors(), "encoder.");
  prefix(out, composition.tensors(), "composition.");
  prefix(out, projection.tensors(), "");
  return out;
}

Trainer::Trainer(const Vocab& vocab, const EntityLexicon& lexicon, const MatchAutomaton& automaton,
                 EncoderConfig enc, TrainConfig train, OscarConfig oscar)
    : vocab_(vocab),
      lexicon_(lexicon),
      automaton_(automaton),
      enc_(enc),
      train_(train),
      oscar_(oscar),
      optimizer_(AdamWConfig{train.learning_rate, 0.9, 0.999, 1e-6, 0.01, train.warmup_steps}),
      mask_rng_(train.seed ^ 0x9E3779B97F4A7C15ULL) {
  enc_.vocab_size = vocab.size();
  enc_.validate();
  train_.validate();
  if (oscar_.lambda < 0.0) throw TrainingError("train.lambda must be non-negative");
  if (oscar_.enabled && lexicon.dim() == 0) throw TrainingError("lexicon has no embedding dimension");
  if (oscar_.dim <= 0) throw TrainingError("composition.dim must be positive");
  oscar_.tap.resolve(enc_.layers);
  if (automaton.vocab_size() != 0 && automaton.vocab_size() != vocab.size())
    throw TrainingError("lexicon automaton was compiled for a different vocabulary");

  Rng init(train_.seed);
  model_.encoder = Encoder(enc_, EncoderParams::random(enc_, init));
  Rng comp_rng(oscar_.seed);
  model_.composition = Composition::random(oscar_.method, oscar_.dim, enc_.hidden, comp_rng, oscar_.g);
  model_.projection = ProjectionParams::random(static_cast<Index>(std::max<std::size_t>(lexicon.dim(), 1)),
                                               oscar_.dim, comp_rng);
  targets_ = embedding_matrix(lexicon).transpose();
}

Gradients Trainer::zero_gradients() const {
  return {EncoderParams::zeros(enc_), model_.composition.zeros_like(),
          ProjectionParams::zeros(model_.projection.out_dim(), model_.projection.in_dim())};
}

StepReport Trainer::compute_gradients(const std::vector<TokenSequence>& batch, Gradients& grads) {
  const auto started = Clock::now();
  if (batch.empty()) throw TrainingError("empty batch");
  StepReport report;
  report.step = optimizer_.steps_taken() + 1;

  std::vector<MaskedSentence> masked;
  masked.reserve(batch.size());
  std::size_t total_targets = 0;
  for (const auto& seq : batch) {
    if (seq.size() > enc_.max_len)
      throw TrainingError("sequence of length " + std::to_string(seq.size()) + " exceeds encoder.max_len");
    masked.push_back(mask_sentence(seq, train_.mask_fraction, mask_rng_, vocab_));
    total_targets += masked.back().targets.size();
  }

  const double batch_size = static_cast<double>(batch.size());
  const double reg_scale = oscar_.lambda / batch_size;
  const std::size_t tap = oscar_.tap.resolve(enc_.layers);
  const auto& model = model_;
  double mlm_sum = 0.0, reg_sum = 0.0;
  EncoderCache cache;

  for (const auto& m : masked) {
    model.encoder.forward(m.input.ids, cache);
    std::vector<std::size_t> positions;
    for (std::size_t p : m.targets) positions.push_back(p - 1);
    Matrix d_logits;
    mlm_sum += cross_entropy(model.encoder.logits(cache, positions), m.target_ids, d_logits);
    d_logits *= 1.0 / static_cast<double>(total_targets);

    std::vector<Matrix> hidden_grads;
    if (oscar_.enabled) {
      const auto oscar_started = Clock::now();
      const auto matches = find_matches(automaton_, matching_view(m, vocab_), oscar_.match);
      if (!matches.empty()) {
        const Matrix& states = cache.hidden[tap];
        const auto count = static_cast<Index>(matches.size());
        Matrix composed(model.composition.out_dim(), count);
        Matrix targets(targets_.rows(), count);
        std::vector<CompositionCache> comp_caches(matches.size());
        for (Index i = 0; i < count; ++i) {
          const auto& match = matches[static_cast<std::size_t>(i)];
          composed.col(i) = model.composition.forward(
              states.middleCols(static_cast<Index>(match.start - 1), static_cast<Index>(match.len)),
              &comp_caches[static_cast<std::size_t>(i)]);
          targets.col(i) = targets_.col(static_cast<Index>(match.entity));
        }
        const RegularizerResult reg = regularizer(model.projection, composed, targets, oscar_.energy);
        reg_sum += reg.value;
        report.entities += matches.size();

        // At lambda = 0 the branch is reported but contributes no gradient at
        // all, so the run is bitwise identical to one without the branch.
        if (reg_scale != 0.0) {
          grads.projection.weight += reg_scale * reg.grad.weight;
          grads.projection.bias += reg_scale * reg.grad.bias;
          hidden_grads.assign(enc_.layers + 1, Matrix());
          hidden_grads[tap] = Matrix::Zero(states.rows(), states.cols());
          for (Index i = 0; i < count; ++i) {
            const auto& match = matches[static_cast<std::size_t>(i)];
            const Vector d_out = reg_scale * reg.d_composed.col(i);
            hidden_grads[tap].middleCols(static_cast<Index>(match.start - 1), static_cast<Index>(match.len)) +=
                model.composition.backward(comp_caches[static_cast<std::size_t>(i)], d_out, grads.composition);
          }
        }
      }
      report.oscar_ms += elapsed_ms(oscar_started);
    }
    model.encoder.backward(cache, positions, d_logits, hidden_grads, grads.encoder);
  }

  report.mlm_loss = mlm_sum / static_cast<double>(total_targets);
  report.reg_value = reg_sum / batch_size;
  report.total_loss = report.mlm_loss + oscar_.lambda * report.reg_value;
  if (!std::isfinite(report.total_loss))
    throw TrainingError("non-finite loss at step " + std::to_string(report.step) + " (mlm=" +
                        std::to_string(report.mlm_loss) + ", reg=" + std::to_string(report.reg_value) + ")");
  report.wall_ms = elapsed_ms(started);
  return report;
}

StepReport Trainer::step(const std::vector<TokenSequence>& batch) {
  const auto started = Clock::now();
  Gradients grads = zero_gradients();
  StepReport report = compute_gradients(batch, grads);
  optimizer_.step(model_.tensors(), grads.tensors());
  report.wall_ms = elapsed_ms(started);
  return report;
}

std::vector<TokenSequence> load_corpus(const std::filesystem::path& path, const Vocab& vocab, std::size_t max_len) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TrainingError("cannot open corpus " + path.string());
  std::vector<TokenSequence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto seq = tokenize(vocab, line);
    if (seq.empty()) continue;
    if (seq.size() > max_len)
      throw TrainingError("corpus line " + std::to_string(lineno) + " has " + std::to_string(seq.size()) +
                          " subwords, more than encoder.max_len " + std::to_string(max_len));
    out.push_back(std::move(seq));
  }
  if (out.empty()) throw TrainingError("corpus " + path.string() + " is empty");
  return out;
}

std::vector<StepReport> train(Trainer& trainer, const std::vector<TokenSequence>& corpus, std::ostream* metrics) {
  if (corpus.empty()) throw TrainingError("corpus is empty");
  const auto& cfg = trainer.train_config();
  std::vector<StepReport> reports;
  std::size_t cursor = 0;
  std::vector<TokenSequence> batch;
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    batch.clear();
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
      batch.push_back(corpus[cursor]);
      cursor = (cursor + 1) % corpus.size();
    }
    reports.push_back(trainer.step(batch));
    if (metrics) *metrics << reports.back().to_json(cfg.log_wall_time) << '\n';
  }
  if (metrics) metrics->flush();
  return reports;
}

void save_checkpoint(const std::filesystem::path& path, Model& model, const std::string& config_echo,
                     std::uint64_t seed) {
  static_assert(std::endian::native == std::endian::little);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TrainingError("cannot write checkpoint " + path.string());
  auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  out.write(kCheckpointMagic, 4);
  put_u32(kCheckpointVersion);
  put_u32(static_cast<std::uint32_t>(config_echo.size()));
  out.write(config_echo.data(), static_cast<std::streamsize>(config_echo.size()));
  out.write(reinterpret_cast<const char*>(&seed), 8);
  const auto tensors = model.tensors();
  put_u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u32(static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_u32(static_cast<std::uint32_t>(t.rows));
    put_u32(static_cast<std::uint32_t>(t.cols));
    const auto m = t.map();
    std::vector<float> row_major;
    row_major.reserve(static_cast<std::size_t>(t.size()));
    for (Index r = 0; r < t.rows; ++r)
      for (Index c = 0; c < t.cols; ++c) row_major.push_back(static_cast<float>(m(r, c)));
    out.write(reinterpret_cast<const char*>(row_major.data()),
              static_cast<std::streamsize>(row_major.size() * sizeof(float)));
  }
  if (!out) throw TrainingError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TrainingError("cannot open checkpoint " + path.string());
  auto read = [&](void* dst, std::size_t n) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw TrainingError("checkpoint truncated");
  };
  auto u32 = [&] {
    std::uint32_t v;
    read(&v, 4);
    return v;
  };
  char magic[4];
  read(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw TrainingError("not a checkpoint file");
  if (u32() != kCheckpointVersion) throw TrainingError("unsupported checkpoint version");
  Checkpoint ck;
  ck.config.resize(u32());
  read(ck.config.data(), ck.config.size());
  read(&ck.seed, 8);
  ck.tensors.resize(u32());
  for (auto& t : ck.tensors) {
    t.name.resize(u32());
    read(t.name.data(), t.name.size());
    t.rows = u32();
    t.cols = u32();
    t.values.resize(static_cast<std::size_t>(t.rows) * t.cols);
    read(t.values.data(), t.values.size() * sizeof(float));
  }
  return ck;
}

std::vector<double> fit_regularizer(Composition& composition, ProjectionParams& projection,
                                    const std::vector<Matrix>& spans, const Matrix& targets,
                                    const EnergyKind& kind, double learning_rate, std::size_t steps) {
  AdamW opt(AdamWConfig{learning_rate, 0.9, 0.999, 1e-8, 0.0, 0});
  const auto count = static_cast<Index>(spans.size());
  std::vector<double> values;
  std::vector<CompositionCache> caches(spans.size());
  Matrix composed(composition.out_dim(), count);

  for (std::size_t s = 0; s <= steps; ++s) {
    for (Index i = 0; i < count; ++i)
      composed.col(i) = composition.forward(spans[static_cast<std::size_t>(i)], &caches[static_cast<std::size_t>(i)]);
    const RegularizerResult reg = regularizer(projection, composed, targets, kind);
    values.push_back(reg.value);
    if (s == steps) break;

    Composition comp_grad = composition.zeros_like();
    for (Index i = 0; i < count; ++i)
      composition.backward(caches[static_cast<std::size_t>(i)], reg.d_composed.col(i), comp_grad);
    ProjectionParams proj_grad = reg.grad;

    std::vector<TensorRef> params = composition.tensors(), grads = comp_grad.tensors();
    for (auto& t : projection.tensors()) params.push_back(t);
    for (auto& t : proj_grad.tensors()) grads.push_back(t);
    opt.step(params, grads);
  }
  return values;
}

}  // namespace oscar
