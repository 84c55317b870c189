#include "hybridsa/glove.hpp"

#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "hybridsa/error.hpp"
#include "hybridsa/random.hpp"
#include "hybridsa/simd/kernels.hpp"
#include "hybridsa/text_format.hpp"

namespace hybridsa {

double CooccurrenceMatrix::at(std::uint32_t row, std::uint32_t col) const {
  const auto it = counts_.find({row, col});
  return it == counts_.end() ? 0.0 : it->second;
}

void CooccurrenceMatrix::add(std::uint32_t row, std::uint32_t col, double amount) {
  if (row >= vocab_size_ || col >= vocab_size_) {
    throw DataError("co-occurrence index out of range");
  }
  if (amount == 0.0) return;
  counts_[{row, col}] += amount;
}

void CooccurrenceMatrix::merge(const CooccurrenceMatrix& other) {
  if (other.vocab_size_ != vocab_size_) throw DataError("co-occurrence vocab size mismatch");
  for (const auto& [key, count] : other.counts_) counts_[key] += count;
}

std::vector<CooccurrenceEntry> CooccurrenceMatrix::entries() const {
  std::vector<CooccurrenceEntry> out;
  out.reserve(counts_.size());
  for (const auto& [key, count] : counts_) out.push_back({key.first, key.second, count});
  return out;
}

bool CooccurrenceMatrix::is_symmetric() const {
  for (const auto& [key, count] : counts_) {
    if (at(key.second, key.first) != count) return false;
  }
  return true;
}

void CooccurrenceMatrix::write_triples(std::ostream& out) const {
  out << "# " << vocab_size_ << ' ' << window_ << '\n';
  for (const auto& [key, count] : counts_) {
    out << key.first << ' ' << key.second << ' ' << format_roundtrip(count) << '\n';
  }
}

CooccurrenceMatrix CooccurrenceMatrix::read_triples(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("#")) {
    throw DataError("co-occurrence file lacks its '# vocab_size window' header");
  }
  std::istringstream header(line.substr(1));
  std::size_t vocab_size = 0;
  std::size_t window = 0;
  if (!(header >> vocab_size >> window)) throw DataError("bad co-occurrence header");
  CooccurrenceMatrix x(vocab_size, window);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::uint32_t i = 0;
    std::uint32_t j = 0;
    double count = 0.0;
    if (!(fields >> i >> j >> count) || count <= 0.0) {
      throw DataError("bad co-occurrence triple on line " + std::to_string(line_no));
    }
    x.add(i, j, count);
  }
  return x;
}

CooccurrenceMatrix build_cooccurrence(std::span<const TokenSequence> corpus,
                                      std::size_t vocab_size, std::size_t window,
                                      CooccurrenceWeighting weighting) {
  if (window < 1) throw UsageError("co-occurrence window must be >= 1");
  CooccurrenceMatrix x(vocab_size, window);
  for (const auto& seq : corpus) {
    const auto& ids = seq.ids;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      if (ids[p] == kPadId || ids[p] == kUnkId) continue;
      const std::size_t last = std::min(ids.size() - 1, p + window);
      for (std::size_t q = p + 1; q <= last; ++q) {
        if (ids[q] == kPadId || ids[q] == kUnkId) continue;
        const double amount =
            weighting == CooccurrenceWeighting::kFlat ? 1.0 : 1.0 / static_cast<double>(q - p);
        const auto a = static_cast<std::uint32_t>(ids[p]);
        const auto b = static_cast<std::uint32_t>(ids[q]);
        x.add(a, b, amount);
        x.add(b, a, amount);
      }
    }
  }
  return x;
}

double weight_fn(double x, double x_max, double alpha) {
  if (x >= x_max) return 1.0;
  return std::pow(x / x_max, alpha);
}

Matrix GloveModel::embeddings() const {
  Matrix out = word_vectors;
  add_in_place(out, context_vectors);
  return out;
}

GloveModel init_glove(std::size_t vocab_size, const GloveConfig& cfg) {
  if (cfg.dim < 1) throw UsageError("GloVe dimension must be >= 1");
  Rng rng(cfg.seed);
  const double bound = 0.5 / static_cast<double>(cfg.dim);
  GloveModel m{Matrix(vocab_size, cfg.dim), Matrix(vocab_size, cfg.dim), Matrix(1, vocab_size),
               Matrix(1, vocab_size)};
  for (double& v : m.word_vectors.values()) v = rng.uniform(-bound, bound);
  for (double& v : m.context_vectors.values()) v = rng.uniform(-bound, bound);
  for (double& v : m.word_bias.values()) v = rng.uniform(-bound, bound);
  for (double& v : m.context_bias.values()) v = rng.uniform(-bound, bound);
  return m;
}

namespace {

double residual(const GloveModel& model, const CooccurrenceEntry& e) {
  const auto& kern = simd::kernels();
  return kern.dot(model.word_vectors.row(e.row).data(), model.context_vectors.row(e.col).data(),
                  model.dim()) +
         model.word_bias[e.row] + model.context_bias[e.col] - std::log(e.count);
}

void check_shapes(const GloveModel& model, std::size_t vocab_size) {
  if (model.vocab_size() != vocab_size || model.context_vectors.rows() != vocab_size ||
      model.word_bias.size() != vocab_size || model.context_bias.size() != vocab_size) {
    throw DataError("GloVe model does not match the co-occurrence vocabulary size");
  }
}

}  // namespace

double glove_term(const GloveModel& model, const CooccurrenceEntry& entry, const GloveConfig& cfg) {
  const double diff = residual(model, entry);
  return weight_fn(entry.count, cfg.x_max, cfg.alpha) * diff * diff;
}

GloveTermGradient glove_term_gradient(const GloveModel& model, const CooccurrenceEntry& entry,
                                      const GloveConfig& cfg) {
  const double scale =
      2.0 * weight_fn(entry.count, cfg.x_max, cfg.alpha) * residual(model, entry);
  GloveTermGradient g;
  const auto wi = model.word_vectors.row(entry.row);
  const auto cj = model.context_vectors.row(entry.col);
  g.word.resize(wi.size());
  g.context.resize(cj.size());
  for (std::size_t k = 0; k < wi.size(); ++k) {
    g.word[k] = scale * cj[k];
    g.context[k] = scale * wi[k];
  }
  g.word_bias = scale;
  g.context_bias = scale;
  return g;
}

double glove_objective(const GloveModel& model, const CooccurrenceMatrix& x,
                       const GloveConfig& cfg) {
  check_shapes(model, x.vocab_size());
  double total = 0.0;
  for (const auto& e : x.entries()) total += glove_term(model, e, cfg);
  return total;
}

GloveModel train_glove(const CooccurrenceMatrix& x, const GloveConfig& cfg,
                       std::vector<double>* objective_trace) {
  if (x.empty()) throw DataError("cannot train GloVe on an empty co-occurrence matrix");
  GloveModel model = init_glove(x.vocab_size(), cfg);
  const std::size_t dim = cfg.dim;

  // AdaGrad accumulators start at 1 so the first steps are lr-sized.
  Matrix word_sq(x.vocab_size(), dim, 1.0);
  Matrix context_sq(x.vocab_size(), dim, 1.0);
  Matrix word_bias_sq(1, x.vocab_size(), 1.0);
  Matrix context_bias_sq(1, x.vocab_size(), 1.0);

  auto entries = x.entries();
  Rng shuffle_rng(derive_seed(cfg.seed, 1));
  if (objective_trace) objective_trace->assign(1, glove_objective(model, x, cfg));

  std::vector<double> grad_word(dim);
  std::vector<double> grad_context(dim);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<CooccurrenceEntry>(entries));
    for (const auto& e : entries) {
      const double scale = 2.0 * weight_fn(e.count, cfg.x_max, cfg.alpha) * residual(model, e);
      auto wi = model.word_vectors.row(e.row);
      auto cj = model.context_vectors.row(e.col);
      auto wsq = word_sq.row(e.row);
      auto csq = context_sq.row(e.col);
      for (std::size_t k = 0; k < dim; ++k) {
        grad_word[k] = scale * cj[k];
        grad_context[k] = scale * wi[k];
      }
      for (std::size_t k = 0; k < dim; ++k) {
        wsq[k] += grad_word[k] * grad_word[k];
        csq[k] += grad_context[k] * grad_context[k];
        wi[k] -= cfg.learning_rate * grad_word[k] / std::sqrt(wsq[k]);
        cj[k] -= cfg.learning_rate * grad_context[k] / std::sqrt(csq[k]);
      }
      word_bias_sq[e.row] += scale * scale;
      context_bias_sq[e.col] += scale * scale;
      model.word_bias[e.row] -= cfg.learning_rate * scale / std::sqrt(word_bias_sq[e.row]);
      model.context_bias[e.col] -= cfg.learning_rate * scale / std::sqrt(context_bias_sq[e.col]);
    }
    const double objective = glove_objective(model, x, cfg);
    if (!std::isfinite(objective)) {
      throw NumericError("GloVe training diverged in epoch " + std::to_string(epoch));
    }
    if (objective_trace) objective_trace->push_back(objective);
  }
  return model;
}

void write_embeddings_text(std::ostream& out, const Vocabulary& vocab, const Matrix& table) {
  if (table.rows() != vocab.size()) throw DataError("embedding table does not match vocabulary");
  for (std::size_t i = 0; i < table.rows(); ++i) {
    out << vocab.token_of(static_cast<std::int32_t>(i));
    for (double v : table.row(i)) out << ' ' << format_roundtrip(v);
    out << '\n';
  }
}

Matrix read_embeddings_text(std::istream& in, const Vocabulary& vocab) {
  Matrix table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_tokens(line);
    if (fields.empty()) continue;
    const std::size_t dim = fields.size() - 1;
    if (dim == 0) throw DataError("embedding line " + std::to_string(line_no) + " has no values");
    if (table.empty()) table = Matrix(vocab.size(), dim);
    if (dim != table.cols()) {
      throw DataError("embedding line " + std::to_string(line_no) + " has dimension " +
                      std::to_string(dim) + ", expected " + std::to_string(table.cols()));
    }
    const std::int32_t id = vocab.id_of(fields[0]);
    if (id == kUnkId && fields[0] != kUnkToken) continue;
    auto row = table.row(static_cast<std::size_t>(id));
    for (std::size_t k = 0; k < dim; ++k) {
      try {
        row[k] = std::stod(fields[k + 1]);
      } catch (const std::exception&) {
        throw DataError("embedding line " + std::to_string(line_no) + " has a bad number");
      }
    }
  }
  if (table.empty()) throw DataError("embedding file is empty");
  return table;
}

Matrix glove_lookup_table(const GloveModel& model) {
  Matrix table = model.embeddings();
  for (std::size_t r : {std::size_t{kPadId}, std::size_t{kUnkId}}) {
    if (r < table.rows()) {
      for (double& v : table.row(r)) v = 0.0;
    }
  }
  return table;
}

}  // namespace hybridsa
