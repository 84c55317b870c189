#include "hybridsa/textprep.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "hybridsa/error.hpp"

namespace hybridsa {
namespace {

bool is_space(char ch) {
  return ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\v' || ch == '\f';
}

bool is_ascii_alnum(char ch) {
  return (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9');
}

bool is_ascii_punct(char ch) {
  const auto c = static_cast<unsigned char>(ch);
  return c >= 0x21 && c <= 0x7e && !is_ascii_alnum(ch);
}

bool is_word_char(char ch) { return is_ascii_alnum(ch) || ch == '_'; }

std::string remove_urls(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const std::string_view rest = s.substr(i);
    if (rest.starts_with("http://") || rest.starts_with("https://") || rest.starts_with("www.")) {
      while (i < s.size() && !is_space(s[i])) ++i;
      continue;
    }
    out.push_back(s[i++]);
  }
  return out;
}

std::string remove_mentions(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '@' && i + 1 < s.size() && is_word_char(s[i + 1])) {
      ++i;
      while (i < s.size() && is_word_char(s[i])) ++i;
      continue;
    }
    out.push_back(s[i++]);
  }
  return out;
}

bool all_digits(std::string_view token) {
  return !token.empty() &&
         std::all_of(token.begin(), token.end(), [](char ch) { return ch >= '0' && ch <= '9'; });
}

}  // namespace

std::unordered_set<std::string> CleaningConfig::default_stopword_set() {
  std::unordered_set<std::string> words;
  for (std::string_view w : default_stopwords()) words.emplace(w);
  return words;
}

std::unordered_set<std::string> load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stopword file: " + path.string());
  std::unordered_set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    const auto tokens = split_tokens(line);
    for (const auto& t : tokens) words.insert(t);
  }
  return words;
}

std::string clean_text(std::string_view raw, const CleaningConfig& cfg) {
  std::string s(raw);
  if (cfg.lowercase) {
    for (char& ch : s) {
      if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
    }
  }
  if (cfg.strip_urls) s = remove_urls(s);
  if (cfg.strip_mentions) s = remove_mentions(s);
  if (cfg.strip_hashmarks) std::erase(s, '#');
  if (cfg.strip_punctuation) {
    for (char& ch : s) {
      if (is_ascii_punct(ch)) ch = ' ';
    }
  }

  std::string out;
  out.reserve(s.size());
  for (std::string& token : split_tokens(s)) {
    if (cfg.strip_digits && all_digits(token)) continue;
    if (cfg.remove_stopwords && cfg.stopword_list.contains(token)) continue;
    if (cfg.token_normalizer) {
      token = cfg.token_normalizer(token);
      if (token.empty()) continue;
    }
    if (!out.empty()) out.push_back(' ');
    out += token;
  }
  return out;
}

std::vector<std::string> split_tokens(std::string_view cleaned) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < cleaned.size()) {
    while (i < cleaned.size() && is_space(cleaned[i])) ++i;
    const std::size_t start = i;
    while (i < cleaned.size() && !is_space(cleaned[i])) ++i;
    if (i > start) tokens.emplace_back(cleaned.substr(start, i - start));
  }
  return tokens;
}

Vocabulary::Vocabulary() {
  add(std::string(kPadToken));
  add(std::string(kUnkToken));
}

std::int32_t Vocabulary::id_of(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("token id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::int32_t Vocabulary::add(std::string token) {
  if (const auto it = ids_.find(token); it != ids_.end()) return it->second;
  const auto id = static_cast<std::int32_t>(tokens_.size());
  ids_.emplace(token, id);
  tokens_.push_back(std::move(token));
  return id;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out += tokens_[i];
    out += '\t';
    out += std::to_string(i);
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
  Vocabulary vocab;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) {
      throw DataError("vocabulary line " + std::to_string(line_no) + " has no tab");
    }
    std::string token = line.substr(0, tab);
    std::size_t id = 0;
    try {
      id = std::stoul(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw DataError("vocabulary line " + std::to_string(line_no) + " has a bad id");
    }
    if (id < 2) {
      if (token != vocab.tokens_[id]) {
        throw DataError("vocabulary reserves id " + std::to_string(id) + " for " +
                        vocab.tokens_[id]);
      }
      continue;
    }
    if (id != vocab.size() || vocab.ids_.contains(token)) {
      throw DataError("vocabulary ids must be contiguous and unique (line " +
                      std::to_string(line_no) + ")");
    }
    vocab.add(std::move(token));
  }
  return vocab;
}

Vocabulary build_vocab(std::span<const std::string> corpus, std::size_t min_count) {
  if (min_count < 1) throw UsageError("min_count must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& text : corpus) {
    for (auto& token : split_tokens(text)) ++counts[std::move(token)];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [token, count] : counts) {
    if (count >= min_count && token != kPadToken && token != kUnkToken) kept.emplace_back(token, count);
  }
  // std::map iteration is lexicographic, so a stable sort on count keeps the tie order.
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (auto& [token, count] : kept) vocab.add(std::move(token));
  return vocab;
}

TokenSequence encode_pad(std::string_view cleaned, const Vocabulary& vocab, std::size_t d) {
  if (d < 1) throw UsageError("sequence length d must be >= 1");
  TokenSequence seq;
  seq.ids.assign(d, kPadId);
  const auto tokens = split_tokens(cleaned);
  seq.true_length = std::min(tokens.size(), d);
  for (std::size_t i = 0; i < seq.true_length; ++i) seq.ids[i] = vocab.id_of(tokens[i]);
  return seq;
}

}  // namespace hybridsa
