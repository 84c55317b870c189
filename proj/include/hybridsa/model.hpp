#pragma once

// The eight embedding + CNN/Bi-LSTM hybrid classifiers, categorical
// cross-entropy, Adam, and the training loop.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hybridsa/dataset_io.hpp"
#include "hybridsa/encoder.hpp"
#include "hybridsa/layers.hpp"
#include "hybridsa/textprep.hpp"

namespace hybridsa {

struct LabeledExample {
  TokenSequence tokens;
  ClassLabel label;
  std::vector<double> target;  // one-hot of label
};

LabeledExample make_example(TokenSequence tokens, ClassLabel label);

/// Cleans, encodes and labels raw records.
std::vector<LabeledExample> encode_records(std::span<const RawRecord> records,
                                           const CleaningConfig& cleaning, const Vocabulary& vocab,
                                           std::size_t d);

enum class EmbeddingKind { kBert, kGlove };
enum class StackLayer { kCnn, kBiLstm };

/// One of the eight scenarios:
///   1 BERT→CNN→BiLSTM  2 BERT→BiLSTM→CNN  3 BERT→CNN  4 BERT→BiLSTM
///   5 GloVe→CNN→BiLSTM 6 GloVe→BiLSTM→CNN 7 GloVe→CNN 8 GloVe→BiLSTM
/// filter1/filter2 are the conv filter count or BiLSTM units of the first and
/// second stack layer.
struct HybridSpec {
  int scenario_id = 0;
  EmbeddingKind embedding = EmbeddingKind::kBert;
  std::vector<StackLayer> stack;
  std::size_t filter1 = 0;
  std::optional<std::size_t> filter2;

  static HybridSpec for_scenario(int scenario_id, std::size_t filter1,
                                 std::optional<std::size_t> filter2 = std::nullopt);
  /// Throws UsageError when the fields disagree with the scenario table.
  void validate() const;
  bool two_layer() const { return stack.size() == 2; }
};

/// Stack layout of a scenario, without widths.
std::pair<EmbeddingKind, std::vector<StackLayer>> scenario_layout(int scenario_id);
bool scenario_is_two_layer(int scenario_id);
std::string scenario_name(int scenario_id);

/// What the cross-entropy sees. kRescaled divides each output row by its sum
/// before clipping, so per-class sigmoids compete like a distribution;
/// kAsIs clips the raw outputs.
enum class CceInput { kAsIs, kRescaled };

struct ArchitectureOptions {
  std::size_t seq_len = kDefaultSequenceLength;
  std::size_t kernel_width = 10;
  std::size_t pool_size = 2;
  std::size_t pool_stride = 2;
  double dropout = 0.5;
  HeadActivation head = HeadActivation::kSigmoid;
  CceInput cce_input = CceInput::kRescaled;
  EncoderConfig encoder;  // used by the BERT scenarios; vocab_size/max_positions are filled in
};

enum class LayerKind { kEncoder, kGloveEmbedding, kConv1D, kMaxPool, kDropout, kBiLstm, kFlatten, kDense };

struct LayerDesc {
  LayerKind kind;
  std::size_t width = 0;  // filters, units, classes or embedding width; 0 when not applicable
  friend bool operator==(const LayerDesc&, const LayerDesc&) = default;
};

std::string to_string(const LayerDesc& d);

struct EmbeddingSource {
  std::shared_ptr<const Matrix> glove_table;              // vocab x dim, frozen; GloVe scenarios
  std::shared_ptr<const EncoderWeights> pretrained_encoder;  // optional; BERT scenarios
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;  // percent, from the training-mode forward passes
  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

class HybridModel {
 public:
  HybridModel(HybridSpec spec, ArchitectureOptions options, std::size_t vocab_size,
              const EmbeddingSource& source, std::uint64_t seed);
  ~HybridModel();
  HybridModel(HybridModel&&) noexcept;
  HybridModel& operator=(HybridModel&&) noexcept;

  const HybridSpec& spec() const { return spec_; }
  const ArchitectureOptions& options() const { return options_; }
  std::size_t vocab_size() const { return vocab_size_; }
  std::vector<LayerDesc> layers() const;

  /// Per-class outputs (1 x 3) for one sequence.
  Matrix forward(const TokenSequence& tokens, const ForwardContext& ctx);
  /// Back-propagates d loss / d outputs of the last forward call.
  void backward(const Matrix& d_outputs);

  /// Parameters updated by training (GloVe tables are frozen and excluded).
  std::vector<Param*> trainable_params();
  void zero_grad();
  void set_dropout(double rate);

  EncoderWeights* encoder();
  const EncoderWeights* encoder() const;
  const std::shared_ptr<const Matrix>& glove_table() const;

  std::vector<EpochStats>& history() { return history_; }
  const std::vector<EpochStats>& history() const { return history_; }

  struct Stage;

 private:
  HybridSpec spec_;
  ArchitectureOptions options_;
  std::size_t vocab_size_ = 0;
  std::shared_ptr<const Matrix> glove_;
  std::unique_ptr<EncoderWeights> encoder_;
  std::unique_ptr<EncoderCache> encoder_cache_;
  std::vector<std::unique_ptr<Stage>> stages_;
  std::vector<EpochStats> history_;
};

HybridModel compose_model(const HybridSpec& spec, const ArchitectureOptions& options,
                          std::size_t vocab_size, const EmbeddingSource& source, std::uint64_t seed);

// ----------------------------------------------------------------------- loss

inline constexpr double kProbabilityClip = 1e-7;

/// -(1/N) sum_i sum_j y_ij ln clip(p_ij); pred and truth are N x C.
double cce_loss(const Matrix& pred, const Matrix& truth, CceInput input = CceInput::kAsIs);

/// d loss / d pred for one row of a batch of size batch_size. Clipped
/// components get zero gradient.
Matrix cce_loss_gradient(const Matrix& pred_row, std::span<const double> truth_row,
                         std::size_t batch_size, CceInput input = CceInput::kAsIs);

// ----------------------------------------------------------------------- adam

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::size_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

/// One bias-corrected Adam update. Throws NumericError, leaving every
/// parameter untouched, if any gradient is non-finite.
void adam_step(std::span<Param* const> params, AdamState& state, const AdamConfig& cfg);

// ------------------------------------------------------------------- training

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t epochs = 4;
  double dropout = 0.5;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
};

/// Called after every epoch; returning false ends training early.
using EpochCallback = std::function<bool(const EpochStats&, HybridModel&)>;

/// Mini-batch training with per-epoch shuffling. The final short batch is
/// kept. Appends one EpochStats per completed epoch to model.history().
/// Throws NumericError when the loss becomes non-finite.
HybridModel& fit(HybridModel& model, std::span<const LabeledExample> data, const TrainConfig& cfg,
                 const EpochCallback& on_epoch = {});

/// Evaluation-mode outputs, one row per example.
Matrix predict_outputs(HybridModel& model, std::span<const LabeledExample> examples);
Matrix predict_outputs(HybridModel& model, std::span<const TokenSequence> sequences);

/// Argmax with ties going to the lowest class index.
ClassLabel argmax_class(std::span<const double> outputs);

std::vector<ClassLabel> predict(HybridModel& model, std::span<const LabeledExample> examples);

/// correct / total * 100. Throws DataError on empty or mismatched input.
double evaluate_accuracy(std::span<const ClassLabel> pred, std::span<const ClassLabel> truth);

struct Evaluation {
  double accuracy = 0.0;  // percent
  double loss = 0.0;
};

Evaluation evaluate(HybridModel& model, std::span<const LabeledExample> examples);

/// "epoch,loss,accuracy" CSV.
std::string history_csv(const std::vector<EpochStats>& history);

}  // namespace hybridsa
