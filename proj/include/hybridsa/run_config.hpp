#pragma once

// Flat "key = value" run configuration. Every key has a default; unknown
// keys and malformed values are rejected with UsageError.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "hybridsa/dataset_io.hpp"
#include "hybridsa/glove.hpp"
#include "hybridsa/model.hpp"
#include "hybridsa/search.hpp"
#include "hybridsa/textprep.hpp"

namespace hybridsa {

struct RunConfig {
  // dataset
  std::string data;
  std::string text_column = "text";
  std::string label_column = "label";

  // cleaning
  bool lowercase = true;
  bool strip_urls = true;
  bool strip_mentions = true;
  bool strip_hashmarks = true;
  bool strip_punctuation = true;
  bool strip_digits = true;
  bool remove_stopwords = true;
  std::string stopwords_file;  // empty: built-in English list

  // encoding
  std::size_t seq_len = kDefaultSequenceLength;
  std::size_t min_count = 1;

  // GloVe
  std::size_t glove_dim = 50;
  std::size_t glove_window = 5;
  std::size_t glove_epochs = 25;
  double glove_learning_rate = 0.05;
  double glove_x_max = 100.0;
  double glove_alpha = 0.75;
  std::string glove_weighting = "flat";  // flat | harmonic
  std::string glove_embeddings;          // pre-trained vectors (text); empty: train on the corpus

  // encoder
  std::size_t encoder_layers = 2;
  std::size_t encoder_hidden = 128;
  std::size_t encoder_heads = 2;
  std::size_t encoder_ffn = 512;
  std::string encoder_weights;  // pre-trained weight file; empty: random init

  // classifier
  int scenario = 0;  // 1..8; 0 = not set
  std::size_t filter1 = 128;
  std::size_t filter2 = 64;  // ignored by one-layer scenarios
  std::size_t kernel_width = 10;
  std::size_t pool_size = 2;
  std::size_t pool_stride = 2;
  std::string head = "sigmoid";  // sigmoid | softmax
  bool rescale_outputs = true;   // divide outputs by their row sum before the cross-entropy

  // training
  double learning_rate = 0.001;
  std::size_t epochs = 4;
  double dropout = 0.5;
  std::size_t batch_size = 128;

  // search
  std::vector<std::size_t> grid_batch_sizes;  // empty: scenario defaults
  std::vector<std::size_t> grid_filter1;
  std::vector<std::size_t> grid_filter2;
  std::size_t inner_k = 3;
  std::size_t final_k = 10;
  std::size_t threads = 1;

  // run
  std::uint64_t seed = 0;
  std::string out = "run";

  /// Applies one "key = value" setting.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  /// Range and enum checks that do not depend on the subcommand.
  void validate() const;

  /// Every key in declaration order, one "key = value" line each.
  std::string serialize() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses "key = value" lines; '#' starts a comment line.
RunConfig parse_run_config(std::string_view text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

CsvSchema csv_schema(const RunConfig& cfg);
/// Reads the stopword file when one is configured.
CleaningConfig cleaning_config(const RunConfig& cfg);
GloveConfig glove_config(const RunConfig& cfg);
EncoderConfig encoder_config(const RunConfig& cfg);
ArchitectureOptions architecture_options(const RunConfig& cfg);
TrainConfig train_config(const RunConfig& cfg);
HybridSpec hybrid_spec(const RunConfig& cfg);
GridSpec grid_spec(const RunConfig& cfg);

}  // namespace hybridsa
