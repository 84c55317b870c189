#include "hybridsa/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <type_traits>

#include "hybridsa/binary_io.hpp"
#include "hybridsa/error.hpp"
#include "hybridsa/random.hpp"
#include "hybridsa/text_format.hpp"

namespace hybridsa {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw UsageError("invalid value '" + std::string(value) + "' for '" + std::string(key) + "': expected " + expected);
}

template <typename T>
T parse_integer(std::string_view key, std::string_view value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
    bad_value(key, value, "a non-negative integer");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  const std::string s(value);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) bad_value(key, value, "a finite number");
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  bad_value(key, value, "true or false");
}

std::vector<std::size_t> parse_list(std::string_view key, std::string_view value) {
  std::vector<std::size_t> out;
  if (trim(value).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = value.find(',', start);
    const auto item = trim(value.substr(start, comma == std::string_view::npos ? comma : comma - start));
    out.push_back(parse_integer<std::size_t>(key, item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string join(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

struct Field {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field field(std::string name, T RunConfig::*member) {
  Field f;
  f.name = name;
  f.set = [name, member](RunConfig& c, std::string_view v) {
    if constexpr (std::is_same_v<T, bool>) {
      c.*member = parse_bool(name, v);
    } else if constexpr (std::is_same_v<T, double>) {
      c.*member = parse_double(name, v);
    } else if constexpr (std::is_same_v<T, std::string>) {
      c.*member = std::string(v);
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      c.*member = parse_list(name, v);
    } else {
      c.*member = parse_integer<T>(name, v);
    }
  };
  f.get = [member](const RunConfig& c) -> std::string {
    if constexpr (std::is_same_v<T, bool>) {
      return c.*member ? "true" : "false";
    } else if constexpr (std::is_same_v<T, double>) {
      return format_roundtrip(c.*member);
    } else if constexpr (std::is_same_v<T, std::string>) {
      return c.*member;
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      return join(c.*member);
    } else {
      return std::to_string(c.*member);
    }
  };
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      field("data", &RunConfig::data),
      field("text_column", &RunConfig::text_column),
      field("label_column", &RunConfig::label_column),
      field("lowercase", &RunConfig::lowercase),
      field("strip_urls", &RunConfig::strip_urls),
      field("strip_mentions", &RunConfig::strip_mentions),
      field("strip_hashmarks", &RunConfig::strip_hashmarks),
      field("strip_punctuation", &RunConfig::strip_punctuation),
      field("strip_digits", &RunConfig::strip_digits),
      field("remove_stopwords", &RunConfig::remove_stopwords),
      field("stopwords_file", &RunConfig::stopwords_file),
      field("seq_len", &RunConfig::seq_len),
      field("min_count", &RunConfig::min_count),
      field("glove_dim", &RunConfig::glove_dim),
      field("glove_window", &RunConfig::glove_window),
      field("glove_epochs", &RunConfig::glove_epochs),
      field("glove_learning_rate", &RunConfig::glove_learning_rate),
      field("glove_x_max", &RunConfig::glove_x_max),
      field("glove_alpha", &RunConfig::glove_alpha),
      field("glove_weighting", &RunConfig::glove_weighting),
      field("glove_embeddings", &RunConfig::glove_embeddings),
      field("encoder_layers", &RunConfig::encoder_layers),
      field("encoder_hidden", &RunConfig::encoder_hidden),
      field("encoder_heads", &RunConfig::encoder_heads),
      field("encoder_ffn", &RunConfig::encoder_ffn),
      field("encoder_weights", &RunConfig::encoder_weights),
      field("scenario", &RunConfig::scenario),
      field("filter1", &RunConfig::filter1),
      field("filter2", &RunConfig::filter2),
      field("kernel_width", &RunConfig::kernel_width),
      field("pool_size", &RunConfig::pool_size),
      field("pool_stride", &RunConfig::pool_stride),
      field("head", &RunConfig::head),
      field("rescale_outputs", &RunConfig::rescale_outputs),
      field("learning_rate", &RunConfig::learning_rate),
      field("epochs", &RunConfig::epochs),
      field("dropout", &RunConfig::dropout),
      field("batch_size", &RunConfig::batch_size),
      field("grid_batch_sizes", &RunConfig::grid_batch_sizes),
      field("grid_filter1", &RunConfig::grid_filter1),
      field("grid_filter2", &RunConfig::grid_filter2),
      field("inner_k", &RunConfig::inner_k),
      field("final_k", &RunConfig::final_k),
      field("threads", &RunConfig::threads),
      field("seed", &RunConfig::seed),
      field("out", &RunConfig::out),
  };
  return table;
}

const Field& find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.name == key) return f;
  }
  throw UsageError("unknown configuration key '" + std::string(key) + "'");
}

void require_positive(std::size_t v, const char* key) {
  if (v == 0) throw UsageError(std::string("'") + key + "' must be >= 1");
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) { find_field(key).set(*this, trim(value)); }

std::string RunConfig::get(std::string_view key) const { return find_field(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.name);
    return out;
  }();
  return names;
}

void RunConfig::validate() const {
  if (text_column.empty() || label_column.empty()) throw UsageError("column names must not be empty");
  if (text_column == label_column) throw UsageError("text and label columns must differ");
  require_positive(seq_len, "seq_len");
  require_positive(min_count, "min_count");
  require_positive(glove_dim, "glove_dim");
  require_positive(glove_window, "glove_window");
  if (!(glove_learning_rate > 0.0)) throw UsageError("'glove_learning_rate' must be > 0");
  if (!(glove_x_max > 0.0)) throw UsageError("'glove_x_max' must be > 0");
  if (!(glove_alpha > 0.0)) throw UsageError("'glove_alpha' must be > 0");
  if (glove_weighting != "flat" && glove_weighting != "harmonic") {
    throw UsageError("'glove_weighting' must be flat or harmonic");
  }
  EncoderConfig enc = encoder_config(*this);
  enc.vocab_size = 2;  // the real size is only known after the vocabulary is built
  enc.validate();
  if (scenario < 0 || scenario > 8) throw UsageError("'scenario' must be between 1 and 8");
  require_positive(filter1, "filter1");
  require_positive(filter2, "filter2");
  require_positive(kernel_width, "kernel_width");
  require_positive(pool_size, "pool_size");
  require_positive(pool_stride, "pool_stride");
  if (head != "sigmoid" && head != "softmax") throw UsageError("'head' must be sigmoid or softmax");
  if (!(learning_rate > 0.0)) throw UsageError("'learning_rate' must be > 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("'dropout' must lie in [0, 1)");
  require_positive(batch_size, "batch_size");
  for (const auto* list : {&grid_batch_sizes, &grid_filter1, &grid_filter2}) {
    for (std::size_t v : *list) {
      if (v == 0) throw UsageError("grid values must be >= 1");
    }
  }
  if (inner_k < 2) throw UsageError("'inner_k' must be >= 2");
  if (final_k == 1) throw UsageError("'final_k' must be 0 (skip) or >= 2");
  require_positive(threads, "threads");
  if (scenario != 0) grid_spec(*this).validate(scenario);
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& f : fields()) out += f.name + " = " + f.get(*this) + "\n";
  return out;
}

RunConfig parse_run_config(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    const auto line = trim(text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
    ++line_no;
    if (!line.empty() && line.front() != '#') {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw UsageError("config line " + std::to_string(line_no) + ": expected 'key = value'");
      }
      base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::string text;
  try {
    text = read_file_bytes(path);
  } catch (const DataError& e) {
    throw UsageError(std::string("cannot read config file: ") + e.what());
  }
  return parse_run_config(text, std::move(base));
}

CsvSchema csv_schema(const RunConfig& cfg) { return {cfg.text_column, cfg.label_column}; }

CleaningConfig cleaning_config(const RunConfig& cfg) {
  CleaningConfig c;
  c.lowercase = cfg.lowercase;
  c.strip_urls = cfg.strip_urls;
  c.strip_mentions = cfg.strip_mentions;
  c.strip_hashmarks = cfg.strip_hashmarks;
  c.strip_punctuation = cfg.strip_punctuation;
  c.strip_digits = cfg.strip_digits;
  c.remove_stopwords = cfg.remove_stopwords;
  if (!cfg.stopwords_file.empty()) c.stopword_list = load_stopwords(cfg.stopwords_file);
  return c;
}

GloveConfig glove_config(const RunConfig& cfg) {
  GloveConfig g;
  g.dim = cfg.glove_dim;
  g.x_max = cfg.glove_x_max;
  g.alpha = cfg.glove_alpha;
  g.learning_rate = cfg.glove_learning_rate;
  g.epochs = cfg.glove_epochs;
  g.seed = derive_seed(cfg.seed, 4);
  g.window = cfg.glove_window;
  g.weighting = cfg.glove_weighting == "harmonic" ? CooccurrenceWeighting::kHarmonic : CooccurrenceWeighting::kFlat;
  return g;
}

EncoderConfig encoder_config(const RunConfig& cfg) {
  EncoderConfig e;
  e.num_layers = cfg.encoder_layers;
  e.hidden = cfg.encoder_hidden;
  e.heads = cfg.encoder_heads;
  e.ffn_dim = cfg.encoder_ffn;
  e.max_positions = cfg.seq_len;
  e.dropout = cfg.dropout;
  e.seed = cfg.seed;
  return e;
}

ArchitectureOptions architecture_options(const RunConfig& cfg) {
  ArchitectureOptions a;
  a.seq_len = cfg.seq_len;
  a.kernel_width = cfg.kernel_width;
  a.pool_size = cfg.pool_size;
  a.pool_stride = cfg.pool_stride;
  a.dropout = cfg.dropout;
  a.head = cfg.head == "softmax" ? HeadActivation::kSoftmax : HeadActivation::kSigmoid;
  a.cce_input = cfg.rescale_outputs ? CceInput::kRescaled : CceInput::kAsIs;
  a.encoder = encoder_config(cfg);
  return a;
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.learning_rate = cfg.learning_rate;
  t.epochs = cfg.epochs;
  t.dropout = cfg.dropout;
  t.batch_size = cfg.batch_size;
  t.seed = cfg.seed;
  return t;
}

HybridSpec hybrid_spec(const RunConfig& cfg) {
  if (cfg.scenario < 1 || cfg.scenario > 8) throw UsageError("a scenario between 1 and 8 is required");
  const bool two = scenario_is_two_layer(cfg.scenario);
  return HybridSpec::for_scenario(cfg.scenario, cfg.filter1, two ? std::optional(cfg.filter2) : std::nullopt);
}

GridSpec grid_spec(const RunConfig& cfg) {
  if (cfg.scenario < 1 || cfg.scenario > 8) throw UsageError("a scenario between 1 and 8 is required");
  GridSpec g = GridSpec::defaults_for(cfg.scenario);
  if (!cfg.grid_batch_sizes.empty()) g.batch_sizes = cfg.grid_batch_sizes;
  if (!cfg.grid_filter1.empty()) g.filter1_values = cfg.grid_filter1;
  if (!cfg.grid_filter2.empty()) {
    if (!scenario_is_two_layer(cfg.scenario)) {
      throw UsageError("scenario " + std::to_string(cfg.scenario) + " has one stack layer; grid_filter2 not allowed");
    }
    g.filter2_values = cfg.grid_filter2;
  }
  return g;
}

}  // namespace hybridsa
