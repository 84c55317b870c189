#include "hybridsa/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hybridsa/error.hpp"
#include "hybridsa/random.hpp"
#include "hybridsa/text_format.hpp"

namespace hybridsa {

LabeledExample make_example(TokenSequence tokens, ClassLabel label) {
  return {std::move(tokens), label, one_hot(label, kNumClasses)};
}

std::vector<LabeledExample> encode_records(std::span<const RawRecord> records,
                                           const CleaningConfig& cleaning, const Vocabulary& vocab,
                                           std::size_t d) {
  std::vector<LabeledExample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    out.push_back(make_example(encode_pad(clean_text(r.text, cleaning), vocab, d), map_label(r.label)));
  }
  return out;
}

// ------------------------------------------------------------------ scenarios

std::pair<EmbeddingKind, std::vector<StackLayer>> scenario_layout(int scenario_id) {
  using enum StackLayer;
  switch (scenario_id) {
    case 1: return {EmbeddingKind::kBert, {kCnn, kBiLstm}};
    case 2: return {EmbeddingKind::kBert, {kBiLstm, kCnn}};
    case 3: return {EmbeddingKind::kBert, {kCnn}};
    case 4: return {EmbeddingKind::kBert, {kBiLstm}};
    case 5: return {EmbeddingKind::kGlove, {kCnn, kBiLstm}};
    case 6: return {EmbeddingKind::kGlove, {kBiLstm, kCnn}};
    case 7: return {EmbeddingKind::kGlove, {kCnn}};
    case 8: return {EmbeddingKind::kGlove, {kBiLstm}};
    default:
      throw UsageError("scenario must be in 1..8, got " + std::to_string(scenario_id));
  }
}

bool scenario_is_two_layer(int scenario_id) { return scenario_layout(scenario_id).second.size() == 2; }

std::string scenario_name(int scenario_id) {
  const auto [embedding, stack] = scenario_layout(scenario_id);
  std::string name = embedding == EmbeddingKind::kBert ? "BERT" : "GloVe";
  for (StackLayer s : stack) name += s == StackLayer::kCnn ? " -> CNN" : " -> Bi-LSTM";
  return name;
}

HybridSpec HybridSpec::for_scenario(int scenario_id, std::size_t filter1,
                                    std::optional<std::size_t> filter2) {
  auto [embedding, stack] = scenario_layout(scenario_id);
  HybridSpec spec{scenario_id, embedding, std::move(stack), filter1, filter2};
  spec.validate();
  return spec;
}

void HybridSpec::validate() const {
  const auto [expected_embedding, expected_stack] = scenario_layout(scenario_id);
  if (embedding != expected_embedding || stack != expected_stack) {
    throw UsageError("layer stack does not match scenario " + std::to_string(scenario_id));
  }
  if (filter1 < 1) throw UsageError("filter1 must be >= 1");
  if (stack.size() == 1 && filter2) {
    throw UsageError("scenario " + std::to_string(scenario_id) + " has one stack layer; filter2 not allowed");
  }
  if (stack.size() == 2 && (!filter2 || *filter2 < 1)) {
    throw UsageError("scenario " + std::to_string(scenario_id) + " needs filter2 >= 1");
  }
}

std::string to_string(const LayerDesc& d) {
  switch (d.kind) {
    case LayerKind::kEncoder: return "encoder(" + std::to_string(d.width) + ")";
    case LayerKind::kGloveEmbedding: return "glove-embed(" + std::to_string(d.width) + ")";
    case LayerKind::kConv1D: return "conv1d(" + std::to_string(d.width) + ")";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kDropout: return "dropout";
    case LayerKind::kBiLstm: return "bilstm(" + std::to_string(d.width) + ")";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kDense: return "dense(" + std::to_string(d.width) + ")";
  }
  return "?";
}

// --------------------------------------------------------------------- stages

struct HybridModel::Stage {
  virtual ~Stage() = default;
  virtual Matrix forward(const Matrix& x, const ForwardContext& ctx) = 0;
  virtual Matrix backward(const Matrix& dy) = 0;
  virtual void collect(std::vector<Param*>&) {}
  virtual void set_dropout(double) {}
  virtual LayerDesc desc() const = 0;
};

namespace {

using Stage = HybridModel::Stage;

class ConvStage final : public Stage {
 public:
  ConvStage(std::size_t width, std::size_t in_features, std::size_t filters, const std::string& name, Rng& rng)
      : params_(width, in_features, filters, name) {
    params_.init(rng);
  }
  Matrix forward(const Matrix& x, const ForwardContext&) override { return conv1d_forward(x, params_, &cache_); }
  Matrix backward(const Matrix& dy) override { return conv1d_backward(dy, params_, cache_); }
  void collect(std::vector<Param*>& out) override {
    out.push_back(&params_.weight);
    out.push_back(&params_.bias);
  }
  LayerDesc desc() const override { return {LayerKind::kConv1D, params_.filters}; }

 private:
  Conv1DParams params_;
  Conv1DCache cache_;
};

class PoolStage final : public Stage {
 public:
  PoolStage(std::size_t pool, std::size_t stride) : pool_(pool), stride_(stride) {}
  Matrix forward(const Matrix& x, const ForwardContext&) override { return maxpool1d(x, pool_, stride_, &cache_); }
  Matrix backward(const Matrix& dy) override { return maxpool1d_backward(dy, cache_); }
  LayerDesc desc() const override { return {LayerKind::kMaxPool, 0}; }

 private:
  std::size_t pool_;
  std::size_t stride_;
  MaxPoolCache cache_;
};

class DropoutStage final : public Stage {
 public:
  explicit DropoutStage(double rate) : rate_(rate) {}
  Matrix forward(const Matrix& x, const ForwardContext& ctx) override {
    if (!ctx.train) {
      mask_ = Matrix(x.rows(), x.cols(), 1.0);
      return x;
    }
    return dropout(x, rate_, true, *ctx.rng, &mask_);
  }
  Matrix backward(const Matrix& dy) override { return dropout_backward(dy, mask_); }
  void set_dropout(double rate) override { rate_ = rate; }
  LayerDesc desc() const override { return {LayerKind::kDropout, 0}; }

 private:
  double rate_;
  Matrix mask_;
};

/// Bi-LSTM followed by ReLU on the emitted features.
class BiLstmStage final : public Stage {
 public:
  BiLstmStage(std::size_t units, std::size_t in_features, const std::string& name, Rng& rng)
      : fwd_(units, in_features, name + ".fwd"), bwd_(units, in_features, name + ".bwd") {
    fwd_.init(rng);
    bwd_.init(rng);
  }
  Matrix forward(const Matrix& x, const ForwardContext&) override {
    raw_ = bilstm_forward(x, fwd_, bwd_, &cache_);
    return relu(raw_);
  }
  Matrix backward(const Matrix& dy) override {
    return bilstm_backward(relu_backward(dy, raw_), fwd_, bwd_, cache_);
  }
  void collect(std::vector<Param*>& out) override {
    fwd_.collect(out);
    bwd_.collect(out);
  }
  LayerDesc desc() const override { return {LayerKind::kBiLstm, fwd_.units}; }

 private:
  LstmCellParams fwd_;
  LstmCellParams bwd_;
  BiLstmCache cache_;
  Matrix raw_;
};

class FlattenStage final : public Stage {
 public:
  Matrix forward(const Matrix& x, const ForwardContext&) override {
    rows_ = x.rows();
    cols_ = x.cols();
    Matrix y = x;
    y.reshape(1, x.size());
    return y;
  }
  Matrix backward(const Matrix& dy) override {
    Matrix dx = dy;
    dx.reshape(rows_, cols_);
    return dx;
  }
  LayerDesc desc() const override { return {LayerKind::kFlatten, 0}; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
};

class DenseStage final : public Stage {
 public:
  DenseStage(std::size_t k_in, HeadActivation act, Rng& rng) : params_(k_in, kNumClasses, act, "dense") {
    params_.init(rng);
  }
  Matrix forward(const Matrix& x, const ForwardContext&) override { return dense_forward(x, params_, &cache_); }
  Matrix backward(const Matrix& dy) override { return dense_backward(dy, params_, cache_); }
  void collect(std::vector<Param*>& out) override {
    out.push_back(&params_.weight);
    out.push_back(&params_.bias);
  }
  LayerDesc desc() const override { return {LayerKind::kDense, kNumClasses}; }

 private:
  DenseParams params_;
  DenseCache cache_;
};

}  // namespace

// ---------------------------------------------------------------------- model

HybridModel::HybridModel(HybridSpec spec, ArchitectureOptions options, std::size_t vocab_size,
                         const EmbeddingSource& source, std::uint64_t seed)
    : spec_(std::move(spec)), options_(std::move(options)), vocab_size_(vocab_size) {
  spec_.validate();
  if (options_.seq_len < 1) throw UsageError("sequence length must be >= 1");
  if (options_.kernel_width < 1) throw UsageError("kernel width must be >= 1");
  if (options_.pool_size < 1 || options_.pool_stride < 1) throw UsageError("pool size and stride must be >= 1");
  if (!(options_.dropout >= 0.0 && options_.dropout < 1.0)) throw UsageError("dropout must lie in [0, 1)");

  std::size_t width = 0;
  if (spec_.embedding == EmbeddingKind::kGlove) {
    if (!source.glove_table) throw UsageError("GloVe scenario needs an embedding table");
    if (source.glove_table->rows() != vocab_size) {
      throw DataError("GloVe table has " + std::to_string(source.glove_table->rows()) +
                      " rows but the vocabulary has " + std::to_string(vocab_size));
    }
    glove_ = source.glove_table;
    width = glove_->cols();
  } else {
    options_.encoder.vocab_size = vocab_size;
    options_.encoder.max_positions = options_.seq_len;
    if (source.pretrained_encoder) {
      if (!source.pretrained_encoder->config.same_shape(options_.encoder)) {
        throw DataError("pretrained encoder shape does not match the configuration");
      }
      encoder_ = std::make_unique<EncoderWeights>(*source.pretrained_encoder);
      encoder_->config.dropout = options_.encoder.dropout;
    } else {
      encoder_ = std::make_unique<EncoderWeights>(init_encoder_weights(options_.encoder, derive_seed(seed, 2)));
    }
    encoder_cache_ = std::make_unique<EncoderCache>();
    width = options_.encoder.hidden;
  }

  Rng rng(derive_seed(seed, 1));
  std::size_t length = options_.seq_len;
  for (std::size_t i = 0; i < spec_.stack.size(); ++i) {
    const std::size_t filters = i == 0 ? spec_.filter1 : *spec_.filter2;
    const std::string name = "stack" + std::to_string(i + 1);
    if (spec_.stack[i] == StackLayer::kCnn) {
      stages_.push_back(std::make_unique<ConvStage>(options_.kernel_width, width, filters, name + ".conv", rng));
      stages_.push_back(std::make_unique<PoolStage>(options_.pool_size, options_.pool_stride));
      stages_.push_back(std::make_unique<DropoutStage>(options_.dropout));
      width = filters;
      length = pooled_length(length, options_.pool_stride);
    } else {
      stages_.push_back(std::make_unique<BiLstmStage>(filters, width, name + ".bilstm", rng));
      stages_.push_back(std::make_unique<DropoutStage>(options_.dropout));
      width = 2 * filters;
    }
  }
  stages_.push_back(std::make_unique<FlattenStage>());
  stages_.push_back(std::make_unique<DenseStage>(length * width, options_.head, rng));
}

HybridModel::~HybridModel() = default;
HybridModel::HybridModel(HybridModel&&) noexcept = default;

HybridModel& HybridModel::operator=(HybridModel&& other) noexcept {
  if (this != &other) {
    spec_ = std::move(other.spec_);
    options_ = std::move(other.options_);
    vocab_size_ = other.vocab_size_;
    glove_ = std::move(other.glove_);
    encoder_ = std::move(other.encoder_);
    encoder_cache_ = std::move(other.encoder_cache_);
    stages_ = std::move(other.stages_);
    history_ = std::move(other.history_);
  }
  return *this;
}

std::vector<LayerDesc> HybridModel::layers() const {
  std::vector<LayerDesc> out;
  if (encoder_) {
    out.push_back({LayerKind::kEncoder, options_.encoder.hidden});
  } else {
    out.push_back({LayerKind::kGloveEmbedding, glove_->cols()});
  }
  for (const auto& s : stages_) out.push_back(s->desc());
  return out;
}

Matrix HybridModel::forward(const TokenSequence& tokens, const ForwardContext& ctx) {
  if (tokens.ids.size() != options_.seq_len) {
    throw DataError("expected a sequence of length " + std::to_string(options_.seq_len) + ", got " +
                    std::to_string(tokens.ids.size()));
  }
  if (ctx.train && ctx.rng == nullptr) throw std::invalid_argument("training forward pass needs a random stream");
  Matrix x;
  if (encoder_) {
    // An empty text still attends to its first (pad) position.
    const std::size_t mask_length = std::max<std::size_t>(tokens.true_length, 1);
    x = encoder_forward(tokens.ids, mask_length, *encoder_, ctx, encoder_cache_.get()).values;
  } else {
    x = Matrix(tokens.ids.size(), glove_->cols());
    for (std::size_t t = 0; t < tokens.ids.size(); ++t) {
      const std::int32_t id = tokens.ids[t];
      if (id < 0 || static_cast<std::size_t>(id) >= glove_->rows()) {
        throw DataError("token id " + std::to_string(id) + " out of range");
      }
      const auto src = glove_->row(static_cast<std::size_t>(id));
      std::copy(src.begin(), src.end(), x.row(t).begin());
    }
  }
  for (auto& s : stages_) x = s->forward(x, ctx);
  return x;
}

void HybridModel::backward(const Matrix& d_outputs) {
  Matrix g = d_outputs;
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) g = (*it)->backward(g);
  if (encoder_) encoder_backward(g, *encoder_, *encoder_cache_);
}

std::vector<Param*> HybridModel::trainable_params() {
  std::vector<Param*> out;
  if (encoder_) out = encoder_->params();
  for (auto& s : stages_) s->collect(out);
  return out;
}

void HybridModel::zero_grad() {
  for (Param* p : trainable_params()) p->zero_grad();
}

void HybridModel::set_dropout(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw UsageError("dropout must lie in [0, 1)");
  options_.dropout = rate;
  options_.encoder.dropout = rate;
  if (encoder_) encoder_->config.dropout = rate;
  for (auto& s : stages_) s->set_dropout(rate);
}

EncoderWeights* HybridModel::encoder() { return encoder_.get(); }
const EncoderWeights* HybridModel::encoder() const { return encoder_.get(); }
const std::shared_ptr<const Matrix>& HybridModel::glove_table() const { return glove_; }

HybridModel compose_model(const HybridSpec& spec, const ArchitectureOptions& options,
                          std::size_t vocab_size, const EmbeddingSource& source, std::uint64_t seed) {
  return HybridModel(spec, options, vocab_size, source, seed);
}

// ----------------------------------------------------------------------- loss

namespace {

double row_sum(std::span<const double> row) {
  double s = 0.0;
  for (double v : row) s += v;
  return s;
}

}  // namespace

double cce_loss(const Matrix& pred, const Matrix& truth, CceInput input) {
  if (!pred.same_shape(truth)) {
    throw std::invalid_argument("cce_loss shape mismatch: " + shape_string(pred) + " vs " + shape_string(truth));
  }
  if (pred.rows() == 0) throw std::invalid_argument("cce_loss on an empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    const auto p = pred.row(i);
    const auto y = truth.row(i);
    const double scale = input == CceInput::kRescaled ? 1.0 / row_sum(p) : 1.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (y[j] == 0.0) continue;
      total -= y[j] * std::log(std::clamp(p[j] * scale, kProbabilityClip, 1.0 - kProbabilityClip));
    }
  }
  return total / static_cast<double>(pred.rows());
}

Matrix cce_loss_gradient(const Matrix& pred_row, std::span<const double> truth_row, std::size_t batch_size,
                         CceInput input) {
  const std::size_t c = pred_row.size();
  const double inv_batch = 1.0 / static_cast<double>(batch_size);
  const double sum = input == CceInput::kRescaled ? row_sum(pred_row.values()) : 1.0;
  // g = d loss / d q with q = p / sum (q = p when not rescaling).
  std::vector<double> q(c);
  std::vector<double> g(c, 0.0);
  for (std::size_t j = 0; j < c; ++j) {
    q[j] = pred_row[j] / sum;
    if (truth_row[j] == 0.0 || q[j] < kProbabilityClip || q[j] > 1.0 - kProbabilityClip) continue;
    g[j] = -truth_row[j] / q[j] * inv_batch;
  }
  Matrix grad(1, c);
  if (input == CceInput::kAsIs) {
    for (std::size_t j = 0; j < c; ++j) grad[j] = g[j];
    return grad;
  }
  double gq = 0.0;
  for (std::size_t j = 0; j < c; ++j) gq += g[j] * q[j];
  for (std::size_t j = 0; j < c; ++j) grad[j] = (g[j] - gq) / sum;
  return grad;
}

// ----------------------------------------------------------------------- adam

void adam_step(std::span<Param* const> params, AdamState& state, const AdamConfig& cfg) {
  for (const Param* p : params) {
    if (!all_finite(p->grad)) throw NumericError("non-finite gradient in " + p->name + "; Adam step aborted");
  }
  if (state.first_moment.size() != params.size()) {
    state.first_moment.clear();
    state.second_moment.clear();
    for (const Param* p : params) {
      state.first_moment.emplace_back(p->value.rows(), p->value.cols());
      state.second_moment.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      p.value[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

// ------------------------------------------------------------------- training

HybridModel& fit(HybridModel& model, std::span<const LabeledExample> data, const TrainConfig& cfg,
                 const EpochCallback& on_epoch) {
  if (cfg.epochs == 0) return model;
  if (data.empty()) throw DataError("cannot train on an empty dataset");
  if (cfg.batch_size < 1) throw UsageError("batch size must be >= 1");
  model.set_dropout(cfg.dropout);

  const auto params = model.trainable_params();
  AdamState adam;
  const AdamConfig adam_cfg{cfg.learning_rate};
  Rng shuffle_rng(derive_seed(cfg.seed, 2));
  Rng dropout_rng(derive_seed(cfg.seed, 3));
  const ForwardContext ctx{true, &dropout_rng};

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::size_t batch = stop - start;
      for (Param* p : params) p->zero_grad();
      for (std::size_t b = start; b < stop; ++b) {
        const auto& ex = data[order[b]];
        const Matrix out = model.forward(ex.tokens, ctx);
        Matrix truth(1, kNumClasses);
        std::copy(ex.target.begin(), ex.target.end(), truth.values().begin());
        loss_sum += cce_loss(out, truth, model.options().cce_input);
        if (argmax_class(out.values()) == ex.label) ++correct;
        model.backward(cce_loss_gradient(out, ex.target, batch, model.options().cce_input));
      }
      adam_step(params, adam, adam_cfg);
    }
    const auto n = static_cast<double>(data.size());
    EpochStats stats{epoch, loss_sum / n, 100.0 * static_cast<double>(correct) / n};
    if (!std::isfinite(stats.loss)) throw NumericError("training diverged in epoch " + std::to_string(epoch));
    model.history().push_back(stats);
    if (on_epoch && !on_epoch(stats, model)) break;
  }
  return model;
}

Matrix predict_outputs(HybridModel& model, std::span<const TokenSequence> sequences) {
  Matrix out(sequences.size(), kNumClasses);
  const ForwardContext ctx{false, nullptr};
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const Matrix row = model.forward(sequences[i], ctx);
    std::copy(row.values().begin(), row.values().end(), out.row(i).begin());
  }
  return out;
}

Matrix predict_outputs(HybridModel& model, std::span<const LabeledExample> examples) {
  std::vector<TokenSequence> seqs;
  seqs.reserve(examples.size());
  for (const auto& e : examples) seqs.push_back(e.tokens);
  return predict_outputs(model, seqs);
}

ClassLabel argmax_class(std::span<const double> outputs) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < outputs.size(); ++j) {
    if (outputs[j] > outputs[best]) best = j;
  }
  return {static_cast<int>(best)};
}

std::vector<ClassLabel> predict(HybridModel& model, std::span<const LabeledExample> examples) {
  const Matrix outputs = predict_outputs(model, examples);
  std::vector<ClassLabel> labels;
  labels.reserve(examples.size());
  for (std::size_t i = 0; i < outputs.rows(); ++i) labels.push_back(argmax_class(outputs.row(i)));
  return labels;
}

double evaluate_accuracy(std::span<const ClassLabel> pred, std::span<const ClassLabel> truth) {
  if (pred.empty()) throw DataError("accuracy of an empty prediction set");
  if (pred.size() != truth.size()) throw DataError("prediction and truth lengths differ");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i] ? 1 : 0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(pred.size());
}

Evaluation evaluate(HybridModel& model, std::span<const LabeledExample> examples) {
  const Matrix outputs = predict_outputs(model, examples);
  Matrix truth(examples.size(), kNumClasses);
  std::vector<ClassLabel> pred;
  std::vector<ClassLabel> gold;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    std::copy(examples[i].target.begin(), examples[i].target.end(), truth.row(i).begin());
    pred.push_back(argmax_class(outputs.row(i)));
    gold.push_back(examples[i].label);
  }
  return {evaluate_accuracy(pred, gold), cce_loss(outputs, truth, model.options().cce_input)};
}

std::string history_csv(const std::vector<EpochStats>& history) {
  std::string out = "epoch,loss,accuracy\n";
  for (const auto& h : history) {
    out += std::to_string(h.epoch) + "," + format_fixed(h.loss, 6) + "," + format_fixed(h.accuracy, 6) + "\n";
  }
  return out;
}

}  // namespace hybridsa
