#pragma once

// Co-occurrence counting and GloVe training.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "hybridsa/tensor.hpp"
#include "hybridsa/textprep.hpp"

namespace hybridsa {

enum class CooccurrenceWeighting {
  kFlat,      // every pair inside the window adds 1
  kHarmonic,  // a pair at distance r adds 1/r
};

struct CooccurrenceEntry {
  std::uint32_t row;
  std::uint32_t col;
  double count;
  friend bool operator==(const CooccurrenceEntry&, const CooccurrenceEntry&) = default;
};

/// Sparse symmetric word-word counts. Zero entries are never stored.
class CooccurrenceMatrix {
 public:
  CooccurrenceMatrix() = default;
  CooccurrenceMatrix(std::size_t vocab_size, std::size_t window)
      : vocab_size_(vocab_size), window_(window) {}

  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t window() const { return window_; }
  std::size_t nonzeros() const { return counts_.size(); }
  bool empty() const { return counts_.empty(); }

  double at(std::uint32_t row, std::uint32_t col) const;

  /// Adds to (row, col) only; callers keep the matrix symmetric.
  void add(std::uint32_t row, std::uint32_t col, double amount);

  /// Commutative merge of a partial matrix built over another shard.
  void merge(const CooccurrenceMatrix& other);

  /// Entries ordered by (row, col).
  std::vector<CooccurrenceEntry> entries() const;

  bool is_symmetric() const;

  /// "i j count" lines ordered by (row, col), preceded by "# vocab_size window".
  void write_triples(std::ostream& out) const;
  static CooccurrenceMatrix read_triples(std::istream& in);

  friend bool operator==(const CooccurrenceMatrix&, const CooccurrenceMatrix&) = default;

 private:
  std::size_t vocab_size_ = 0;
  std::size_t window_ = 0;
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> counts_;
};

/// Counts every ordered pair of positions at distance <= window inside each
/// sequence. Pad and unk ids contribute nothing.
CooccurrenceMatrix build_cooccurrence(std::span<const TokenSequence> corpus,
                                      std::size_t vocab_size, std::size_t window,
                                      CooccurrenceWeighting weighting = CooccurrenceWeighting::kFlat);

struct GloveConfig {
  std::size_t dim = 50;
  double x_max = 100.0;
  double alpha = 0.75;
  double learning_rate = 0.05;
  std::size_t epochs = 25;
  std::uint64_t seed = 0;
  std::size_t window = 5;
  CooccurrenceWeighting weighting = CooccurrenceWeighting::kFlat;
};

/// Saturating weight: (x / x_max)^alpha below x_max, 1 above.
double weight_fn(double x, double x_max, double alpha);

struct GloveModel {
  Matrix word_vectors;     // N x dim
  Matrix context_vectors;  // N x dim
  Matrix word_bias;        // 1 x N
  Matrix context_bias;     // 1 x N

  std::size_t vocab_size() const { return word_vectors.rows(); }
  std::size_t dim() const { return word_vectors.cols(); }

  /// Per-token embedding V_i + Ṽ_i.
  Matrix embeddings() const;

  friend bool operator==(const GloveModel&, const GloveModel&) = default;
};

GloveModel init_glove(std::size_t vocab_size, const GloveConfig& cfg);

/// Weighted least-squares objective summed over every stored entry.
double glove_objective(const GloveModel& model, const CooccurrenceMatrix& x, const GloveConfig& cfg);

/// One summand f(x)(v_i·ṽ_j + b_i + b̃_j − ln x)^2.
double glove_term(const GloveModel& model, const CooccurrenceEntry& entry, const GloveConfig& cfg);

struct GloveTermGradient {
  std::vector<double> word;     // d/dV_i
  std::vector<double> context;  // d/dṼ_j
  double word_bias = 0.0;
  double context_bias = 0.0;
};

GloveTermGradient glove_term_gradient(const GloveModel& model, const CooccurrenceEntry& entry,
                                      const GloveConfig& cfg);

/// AdaGrad over shuffled entries for cfg.epochs passes. When `objective_trace`
/// is given it receives J before training followed by J after every epoch.
/// Throws NumericError naming the epoch if J becomes non-finite.
GloveModel train_glove(const CooccurrenceMatrix& x, const GloveConfig& cfg,
                       std::vector<double>* objective_trace = nullptr);

/// Text interchange: one "token v1 ... v_dim" line per vocabulary entry.
void write_embeddings_text(std::ostream& out, const Vocabulary& vocab, const Matrix& table);

/// Reads the interchange format into a |vocab| x dim table. Tokens not in the
/// vocabulary are skipped; vocabulary entries absent from the file stay zero.
Matrix read_embeddings_text(std::istream& in, const Vocabulary& vocab);

/// Frozen lookup table for the classifier: embeddings() with the pad and
/// unk rows zeroed.
Matrix glove_lookup_table(const GloveModel& model);

}  // namespace hybridsa
