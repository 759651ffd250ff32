#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "oscar/composition.hpp"
#include "oscar/encoder.hpp"
#include "oscar/energy.hpp"
#include "oscar/lexicon.hpp"
#include "oscar/matcher.hpp"
#include "oscar/optimizer.hpp"
#include "oscar/vocab.hpp"

namespace oscar {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Which hidden state the composition reads: embeddings (0), layer k, or top.
struct CompositionTap {
  enum class Kind { InputEmbeddings, Layer, FinalLayer };
  Kind kind = Kind::FinalLayer;
  std::size_t layer = 0;  // 1-based, Kind::Layer only

  static CompositionTap parse(const std::string& s);  // "input_embeddings" | "final_layer" | "layer:<k>"
  std::string to_string() const;
  std::size_t resolve(std::size_t layers) const;  // index into EncoderCache::hidden
};

struct OscarConfig {
  bool enabled = true;
  double lambda = 1.0;
  CompositionMethod method = CompositionMethod::Linear;
  Index dim = 64;  // d_c
  OutputNonlinearity g = OutputNonlinearity::Tanh;
  std::uint64_t seed = 13;
  EnergyKind energy{};
  MatchOptions match{};
  CompositionTap tap{};
};

struct TrainConfig {
  std::size_t batch_size = 8;
  double learning_rate = 2e-5;
  std::size_t warmup_steps = 320;
  std::size_t steps = 1000;
  std::uint64_t seed = 42;
  double mask_fraction = 0.15;
  bool log_wall_time = false;

  void validate() const;
};

struct MaskedSentence {
  TokenSequence input;  // masked_positions = positions that now hold [MASK]
  std::vector<TokenId> original;
  std::vector<std::size_t> targets;  // 1-based, sorted
  std::vector<TokenId> target_ids;
};

// Selects ceil(fraction * N) positions without replacement; each becomes
// [MASK] (80%), a random non-reserved ID (10%) or stays (10%).
MaskedSentence mask_sentence(const TokenSequence& seq, double fraction, Rng& rng, const Vocab& vocab);
std::size_t mask_count(double fraction, std::size_t n);

// Matching view of a masked sentence: original IDs with every corrupted
// position marked masked.
TokenSequence matching_view(const MaskedSentence& m, const Vocab& vocab);

struct StepReport {
  std::size_t step = 0;
  double mlm_loss = 0.0;
  double reg_value = 0.0;
  double total_loss = 0.0;
  std::size_t entities = 0;
  double wall_ms = 0.0;
  double oscar_ms = 0.0;

  std::string to_json(bool with_wall_time) const;
};

struct Model {
  Encoder encoder;
  Composition composition;
  ProjectionParams projection;

  std::vector<TensorRef> tensors();  // encoder.*, composition.*, projection.*
};

struct Gradients {
  EncoderParams encoder;
  Composition composition;
  ProjectionParams projection;

  std::vector<TensorRef> tensors();
};

class Trainer {
 public:
  Trainer(const Vocab& vocab, const EntityLexicon& lexicon, const MatchAutomaton& automaton, EncoderConfig enc,
          TrainConfig train, OscarConfig oscar);

  Model& model() { return model_; }
  const TrainConfig& train_config() const { return train_; }
  const OscarConfig& oscar_config() const { return oscar_; }
  std::size_t steps_taken() const { return optimizer_.steps_taken(); }

  // Masks the batch, runs forward/backward and fills grads. Does not update.
  StepReport compute_gradients(const std::vector<TokenSequence>& batch, Gradients& grads);
  // compute_gradients + one AdamW update.
  StepReport step(const std::vector<TokenSequence>& batch);

  Gradients zero_gradients() const;

 private:
  const Vocab& vocab_;
  const EntityLexicon& lexicon_;
  const MatchAutomaton& automaton_;
  EncoderConfig enc_;
  TrainConfig train_;
  OscarConfig oscar_;
  Model model_;
  AdamW optimizer_;
  Rng mask_rng_;
  Matrix targets_;  // d_e x K
};

// Tokenized non-empty corpus lines. Throws on an empty corpus or a line
// longer than max_len.
std::vector<TokenSequence> load_corpus(const std::filesystem::path& path, const Vocab& vocab, std::size_t max_len);

// Runs train.steps steps cycling through the corpus in order, writing one
// JSON line per step to metrics (when non-null).
std::vector<StepReport> train(Trainer& trainer, const std::vector<TokenSequence>& corpus, std::ostream* metrics);

// Checkpoint layout (little-endian): "OSCK", u32 version, u32 config length,
// config text, u64 seed, u32 tensor count, then per tensor: u32 name
// length, name, u32 rows, u32 cols, rows*cols f32 in row-major order.
void save_checkpoint(const std::filesystem::path& path, Model& model, const std::string& config_echo,
                     std::uint64_t seed);

struct Checkpoint {
  std::string config;
  std::uint64_t seed = 0;
  struct Tensor {
    std::string name;
    std::uint32_t rows = 0, cols = 0;
    std::vector<float> values;  // row-major
  };
  std::vector<Tensor> tensors;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Optimizes composition + projection only, on fixed span inputs, with
// AdamW (no weight decay). Returns the regularizer value before each step
// followed by the final value (steps + 1 entries).
std::vector<double> fit_regularizer(Composition& composition, ProjectionParams& projection,
                                    const std::vector<Matrix>& spans, const Matrix& targets,
                                    const EnergyKind& kind, double learning_rate, std::size_t steps);

}  // namespace oscar
