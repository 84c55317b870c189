#pragma once

// Separable three-class micro-benchmark: every text holds exactly one
// class marker word among random filler words.

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "hybridsa/dataset_io.hpp"
#include "hybridsa/glove.hpp"
#include "hybridsa/model.hpp"
#include "hybridsa/random.hpp"
#include "hybridsa/textprep.hpp"

namespace hybridsa::testing {

inline const std::vector<std::string>& marker_words() {
  static const std::vector<std::string> words = {"sunny", "table", "gloomy"};
  return words;
}

inline const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> words = {"vaccine", "city",  "people", "clinic", "week",   "shot",
                                                 "news",    "nurse", "dose",   "health", "report", "street"};
  return words;
}

/// n records, class i % 3, 4..8 fillers plus the marker at a random position.
inline std::vector<RawRecord> marker_records(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const auto& fill = filler_words();
  std::vector<RawRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<int>(i % 3);
    std::vector<std::string> toks;
    const std::size_t len = 4 + rng.below(5);
    for (std::size_t t = 0; t < len; ++t) toks.push_back(fill[rng.below(fill.size())]);
    toks.insert(toks.begin() + static_cast<std::ptrdiff_t>(rng.below(toks.size() + 1)), marker_words()[c]);
    std::string text;
    for (const auto& t : toks) text += (text.empty() ? "" : " ") + t;
    out.push_back({text, std::string(label_name({c}))});
  }
  return out;
}

inline void write_records_csv(const std::filesystem::path& path, const std::vector<RawRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  out << "text,label\n";
  for (const auto& r : records) out << csv_escape(r.text) << "," << r.label << "\n";
}

struct MicroBenchmark {
  Vocabulary vocab;
  std::vector<LabeledExample> examples;
  EmbeddingSource source;  // GloVe table trained on the texts
};

inline MicroBenchmark micro_benchmark(std::size_t n, std::size_t d, std::uint64_t seed, std::size_t glove_dim = 16) {
  const auto records = marker_records(n, seed);
  const CleaningConfig cleaning;
  std::vector<std::string> cleaned;
  for (const auto& r : records) cleaned.push_back(clean_text(r.text, cleaning));
  MicroBenchmark mb;
  mb.vocab = build_vocab(cleaned, 1);
  std::vector<TokenSequence> corpus;
  for (std::size_t i = 0; i < records.size(); ++i) {
    mb.examples.push_back(make_example(encode_pad(cleaned[i], mb.vocab, d), map_label(records[i].label)));
    corpus.push_back(encode_pad(cleaned[i], mb.vocab, split_tokens(cleaned[i]).size()));
  }
  GloveConfig gc;
  gc.dim = glove_dim;
  gc.epochs = 50;
  gc.window = 3;
  gc.seed = seed;
  const auto x = build_cooccurrence(corpus, mb.vocab.size(), gc.window);
  mb.source.glove_table = std::make_shared<Matrix>(glove_lookup_table(train_glove(x, gc)));
  return mb;
}

/// Deterministic 200-token corpus over 20 word ids (2..21): ten sequences of
/// 20 tokens, each drawn mostly from one of four topical clusters.
inline std::vector<TokenSequence> glove_corpus_200(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TokenSequence> corpus;
  for (int s = 0; s < 10; ++s) {
    const int cluster = s % 4;
    TokenSequence seq;
    for (int t = 0; t < 20; ++t) {
      const bool topical = rng.uniform() < 0.8;
      const auto id = topical ? 2 + cluster * 5 + static_cast<std::int32_t>(rng.below(5))
                              : 2 + static_cast<std::int32_t>(rng.below(20));
      seq.ids.push_back(id);
    }
    seq.true_length = seq.ids.size();
    corpus.push_back(std::move(seq));
  }
  return corpus;
}

inline constexpr std::size_t kGloveCorpusVocab = 22;

}  // namespace hybridsa::testing
