#include "hybridsa/archive.hpp"

#include <algorithm>
#include <map>

#include "hybridsa/binary_io.hpp"
#include "hybridsa/error.hpp"

namespace hybridsa {

namespace {

constexpr std::string_view kMagic = "HSAMODEL";
constexpr const char* kContext = "model archive";

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string architecture_section(const HybridModel& model) {
  const HybridSpec& spec = model.spec();
  const ArchitectureOptions& a = model.options();
  BinaryWriter w;
  w.u32(static_cast<std::uint32_t>(spec.scenario_id));
  w.u64(spec.filter1);
  w.u32(spec.filter2 ? 1 : 0);
  w.u64(spec.filter2.value_or(0));
  w.u64(model.vocab_size());
  w.u64(a.seq_len);
  w.u64(a.kernel_width);
  w.u64(a.pool_size);
  w.u64(a.pool_stride);
  w.f64(a.dropout);
  w.u32(a.head == HeadActivation::kSoftmax ? 1 : 0);
  w.u32(a.cce_input == CceInput::kRescaled ? 1 : 0);
  w.u64(a.encoder.num_layers);
  w.u64(a.encoder.hidden);
  w.u64(a.encoder.heads);
  w.u64(a.encoder.ffn_dim);
  w.f64(a.encoder.dropout);
  w.f64(a.encoder.layer_norm_eps);
  return w.take();
}

struct Architecture {
  HybridSpec spec;
  ArchitectureOptions options;
  std::size_t vocab_size = 0;
};

Architecture read_architecture(std::string_view bytes) {
  BinaryReader r(bytes, kContext);
  Architecture out;
  const auto scenario = static_cast<int>(r.u32());
  const std::size_t filter1 = r.u64();
  const bool has_filter2 = r.u32() != 0;
  const std::size_t filter2 = r.u64();
  out.vocab_size = r.u64();
  auto& a = out.options;
  a.seq_len = r.u64();
  a.kernel_width = r.u64();
  a.pool_size = r.u64();
  a.pool_stride = r.u64();
  a.dropout = r.f64();
  a.head = r.u32() != 0 ? HeadActivation::kSoftmax : HeadActivation::kSigmoid;
  a.cce_input = r.u32() != 0 ? CceInput::kRescaled : CceInput::kAsIs;
  a.encoder.num_layers = r.u64();
  a.encoder.hidden = r.u64();
  a.encoder.heads = r.u64();
  a.encoder.ffn_dim = r.u64();
  a.encoder.dropout = r.f64();
  a.encoder.layer_norm_eps = r.f64();
  r.expect_end();
  if (scenario < 1 || scenario > 8) r.fail("scenario " + std::to_string(scenario) + " out of range");
  try {
    out.spec = HybridSpec::for_scenario(scenario, filter1, has_filter2 ? std::optional(filter2) : std::nullopt);
  } catch (const UsageError& e) {
    r.fail(e.what());
  }
  return out;
}

std::string params_section(HybridModel& model) {
  BinaryWriter w;
  const auto params = model.trainable_params();
  w.u64(params.size());
  for (const Param* p : params) {
    w.string(p->name);
    w.matrix(p->value);
  }
  return w.take();
}

std::string history_section(const HybridModel& model) {
  BinaryWriter w;
  w.u64(model.history().size());
  for (const auto& h : model.history()) {
    w.u64(h.epoch);
    w.f64(h.loss);
    w.f64(h.accuracy);
  }
  return w.take();
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    const auto end = nl == std::string_view::npos ? text.size() : nl;
    out.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

}  // namespace

CleaningConfig ModelArchive::cleaning() const {
  RunConfig flags = config;
  flags.stopwords_file.clear();
  CleaningConfig c = cleaning_config(flags);
  c.stopword_list = {stopwords.begin(), stopwords.end()};
  return c;
}

std::string serialize_model(HybridModel& model, const Vocabulary& vocab, const RunConfig& config,
                            const CleaningConfig& cleaning) {
  if (vocab.size() != model.vocab_size()) throw DataError("vocabulary size does not match the model");
  std::vector<std::string> stopwords(cleaning.stopword_list.begin(), cleaning.stopword_list.end());
  std::sort(stopwords.begin(), stopwords.end());

  std::vector<std::pair<std::string, std::string>> sections;
  sections.emplace_back("config", config.serialize());
  sections.emplace_back("stopwords", join_lines(stopwords));
  sections.emplace_back("vocab", vocab.serialize());
  sections.emplace_back("architecture", architecture_section(model));
  if (model.glove_table()) {
    BinaryWriter w;
    w.matrix(*model.glove_table());
    sections.emplace_back("glove", w.take());
  }
  sections.emplace_back("params", params_section(model));
  sections.emplace_back("history", history_section(model));

  std::size_t toc_size = 0;
  for (const auto& [name, _] : sections) toc_size += 4 + name.size() + 16;
  std::uint64_t offset = kMagic.size() + 8 + toc_size;

  BinaryWriter w;
  w.bytes(kMagic);
  w.u32(kArchiveVersion);
  w.u32(static_cast<std::uint32_t>(sections.size()));
  for (const auto& [name, payload] : sections) {
    w.string(name);
    w.u64(offset);
    w.u64(payload.size());
    offset += payload.size();
  }
  for (const auto& [_, payload] : sections) w.bytes(payload);
  const std::uint64_t checksum = fnv1a(w.buffer());
  w.u64(checksum);
  return w.take();
}

ModelArchive deserialize_model(std::string_view bytes) {
  BinaryReader r(bytes, kContext);
  if (r.bytes(kMagic.size()) != kMagic) r.fail("bad magic");
  const std::uint32_t version = r.u32();
  if (version != kArchiveVersion) {
    throw DataError("unsupported model archive version " + std::to_string(version) + " (this build reads version " +
                    std::to_string(kArchiveVersion) + ")");
  }
  if (bytes.size() < 8 + r.position()) r.fail("truncated");
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  BinaryReader tail(bytes.substr(bytes.size() - 8), kContext);
  if (tail.u64() != fnv1a(body)) r.fail("checksum mismatch (truncated or modified file)");

  std::map<std::string, std::string_view> sections;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.string();
    const std::uint64_t offset = r.u64();
    const std::uint64_t length = r.u64();
    if (offset > body.size() || length > body.size() - offset) r.fail("section '" + name + "' out of bounds");
    sections[std::move(name)] = body.substr(offset, length);
  }
  auto section = [&](const char* name) {
    const auto it = sections.find(name);
    if (it == sections.end()) r.fail(std::string("missing section '") + name + "'");
    return it->second;
  };

  RunConfig config;
  try {
    config = parse_run_config(section("config"));
  } catch (const UsageError& e) {
    r.fail(std::string("config section: ") + e.what());
  }
  std::vector<std::string> stopwords = split_lines(section("stopwords"));
  Vocabulary vocab = Vocabulary::deserialize(section("vocab"));
  const Architecture arch = read_architecture(section("architecture"));
  if (arch.vocab_size != vocab.size()) r.fail("vocabulary size does not match the architecture");

  EmbeddingSource source;
  if (arch.spec.embedding == EmbeddingKind::kGlove) {
    BinaryReader g(section("glove"), kContext);
    auto table = std::make_shared<Matrix>(g.matrix());
    g.expect_end();
    source.glove_table = std::move(table);
  }
  HybridModel model = [&] {
    try {
      return compose_model(arch.spec, arch.options, arch.vocab_size, source, 0);
    } catch (const UsageError& e) {
      r.fail(e.what());
    }
  }();

  BinaryReader p(section("params"), kContext);
  const auto params = model.trainable_params();
  if (p.u64() != params.size()) p.fail("parameter count does not match the architecture");
  for (Param* param : params) {
    const std::string name = p.string();
    if (name != param->name) p.fail("expected parameter '" + param->name + "', found '" + name + "'");
    Matrix value = p.matrix();
    if (!value.same_shape(param->value)) {
      p.fail("parameter '" + name + "' has shape " + shape_string(value) + ", expected " +
             shape_string(param->value));
    }
    param->value = std::move(value);
  }
  p.expect_end();

  BinaryReader h(section("history"), kContext);
  const std::uint64_t epochs = h.u64();
  if (epochs > h.remaining() / 24) h.fail("truncated history");
  for (std::uint64_t i = 0; i < epochs; ++i) {
    EpochStats s;
    s.epoch = h.u64();
    s.loss = h.f64();
    s.accuracy = h.f64();
    model.history().push_back(s);
  }
  h.expect_end();

  return ModelArchive{std::move(config), std::move(stopwords), std::move(vocab), std::move(model)};
}

void save_model(HybridModel& model, const Vocabulary& vocab, const RunConfig& config, const CleaningConfig& cleaning,
                const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(model, vocab, config, cleaning));
}

ModelArchive load_model(const std::filesystem::path& path) { return deserialize_model(read_file_bytes(path)); }

}  // namespace hybridsa
