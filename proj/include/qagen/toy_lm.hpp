#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qagen/lm.hpp"

namespace qagen {

struct ToyLMConfig {
  std::size_t dim = 32;
  std::size_t heads = 2;
  std::size_t encoder_layers = 1;
  std::size_t decoder_layers = 1;
  std::size_t ffn_dim = 64;
  std::size_t max_context = 640;  // encoder positions
  std::size_t max_target = 128;   // decoder positions, BOS included
  std::uint64_t init_seed = 1;

  void validate() const;
};

/// One (context, target) training pair.
struct SeqPair {
  TokenSequence context;
  TokenSequence target;
};

/// Small transformer encoder-decoder: learned token and position embeddings,
/// bidirectional encoder self-attention, causal decoder self-attention,
/// cross-attention, tanh feed-forward blocks with residuals, and a softmax
/// output layer. At most two layers per stack and dim <= 64.
///
/// All parameters live in one flat vector so optimizers, gradient checks,
/// and checkpoints can treat them uniformly.
class ToyEncDecLM final : public ConditionalLM {
 public:
  ToyEncDecLM(Vocabulary vocab, ToyLMConfig config);

  const Vocabulary& vocab() const { return vocab_; }
  const ToyLMConfig& config() const { return config_; }

  std::size_t vocab_size() const override { return vocab_.size(); }
  std::size_t max_context_length() const override { return config_.max_context; }
  std::unique_ptr<EncoderState> encode(std::span<const TokenId> context) const override;
  Distribution next_distribution(const EncoderState& state,
                                 std::span<const TokenId> prefix) const override;

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  /// Summed negative log-likelihood of `target` given `context`; adds its
  /// gradient into `grad` (same length as parameters()).
  double loss_and_gradient(const SeqPair& example, std::span<double> grad) const;
  double loss(const SeqPair& example) const;

  /// Named parameter blocks, in storage order.
  struct Block {
    std::string name;
    std::size_t offset;
    std::size_t rows;
    std::size_t cols;
  };
  const std::vector<Block>& blocks() const { return blocks_; }

  bool all_finite() const;

 private:
  struct Impl;
  friend struct Impl;

  Vocabulary vocab_;
  ToyLMConfig config_;
  std::vector<Block> blocks_;
  std::vector<double> params_;
};

enum class Optimizer { adam, sgd };

struct TrainConfig {
  std::size_t epochs = 100;
  double learning_rate = 1e-2;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::adam;
};

struct TrainResult {
  /// Mean negative log-likelihood per target token, one entry per epoch,
  /// measured on the parameters each batch was evaluated with.
  std::vector<double> loss_trace;
};

/// Minimizes the summed NLL over `data` in place. Deterministic under
/// config.seed. Throws TrainingError naming the batch on a non-finite loss
/// and std::invalid_argument for empty data or over-long sequences.
TrainResult train_mle(ToyEncDecLM& lm, std::span<const SeqPair> data, const TrainConfig& config);

/// Mean NLL per token of `data` under the current parameters.
double mean_token_nll(const ToyEncDecLM& lm, std::span<const SeqPair> data);

inline constexpr int kCheckpointVersion = 1;

/// JSON checkpoint: version, vocabulary, hyperparameters, parameter blocks.
void save_checkpoint(const ToyEncDecLM& lm, const std::filesystem::path& path);
ToyEncDecLM load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_json(const ToyEncDecLM& lm);
ToyEncDecLM checkpoint_from_json(const std::string& json_text);

}  // namespace qagen
