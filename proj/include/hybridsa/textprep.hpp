#pragma once

// Tweet cleaning, vocabulary construction and fixed-length encoding.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace hybridsa {

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kUnkId = 1;
inline constexpr std::size_t kDefaultSequenceLength = 100;

std::span<const std::string_view> default_stopwords();

/// Cleaning rules, applied in this order when enabled:
/// lowercase, URLs, @mentions, '#' marks, punctuation, digit-only tokens,
/// stopwords, whitespace collapse.
struct CleaningConfig {
  bool lowercase = true;
  bool strip_urls = true;
  bool strip_mentions = true;
  bool strip_hashmarks = true;
  bool strip_punctuation = true;
  bool strip_digits = true;
  bool remove_stopwords = true;
  std::unordered_set<std::string> stopword_list = default_stopword_set();
  // Optional per-token normalizer (stemming, lemmatization). Unset by default.
  std::function<std::string(std::string_view)> token_normalizer;

  static std::unordered_set<std::string> default_stopword_set();
};

/// One token per line; blank lines and surrounding whitespace are ignored.
std::unordered_set<std::string> load_stopwords(const std::filesystem::path& path);

std::string clean_text(std::string_view raw, const CleaningConfig& cfg);

std::vector<std::string> split_tokens(std::string_view cleaned);

class Vocabulary {
 public:
  /// A vocabulary containing only the pad and unk entries.
  Vocabulary();

  std::int32_t id_of(std::string_view token) const;
  const std::string& token_of(std::int32_t id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Appends a token with the next free id. Returns the existing id if present.
  std::int32_t add(std::string token);

  /// Lines of "token<TAB>id", ordered by id.
  std::string serialize() const;
  static Vocabulary deserialize(std::string_view text);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";

/// Tokens with frequency >= min_count get ids from 2 upward, by descending
/// frequency with lexicographic tie-break.
Vocabulary build_vocab(std::span<const std::string> corpus, std::size_t min_count);

struct TokenSequence {
  std::vector<std::int32_t> ids;  // exactly d entries
  std::size_t true_length = 0;

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

/// Maps tokens through the vocabulary, zero-pads or truncates at the end to length d.
TokenSequence encode_pad(std::string_view cleaned, const Vocabulary& vocab, std::size_t d);

}  // namespace hybridsa
