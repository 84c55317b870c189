#include "hybridsa/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "hybridsa/archive.hpp"
#include "hybridsa/binary_io.hpp"
#include "hybridsa/error.hpp"
#include "hybridsa/glove.hpp"
#include "hybridsa/random.hpp"
#include "hybridsa/run_config.hpp"
#include "hybridsa/search.hpp"
#include "hybridsa/simd/kernels.hpp"
#include "hybridsa/text_format.hpp"

#ifndef HYBRIDSA_VERSION
#define HYBRIDSA_VERSION "unknown"
#endif

namespace hybridsa {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kFinalModelTag = 0x62657374ULL;  // "best"

struct Flags {
  std::string config;
  std::optional<std::string> data;
  std::optional<int> scenario;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> text_column;
  std::optional<std::string> label_column;
  std::vector<std::string> sets;
  std::string model;
  std::optional<std::string> text;
};

RunConfig resolve_config(const Flags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (f.data) cfg.data = *f.data;
  if (f.scenario) cfg.scenario = *f.scenario;
  if (f.seed) cfg.seed = *f.seed;
  if (f.out) cfg.out = *f.out;
  if (f.text_column) cfg.text_column = *f.text_column;
  if (f.label_column) cfg.label_column = *f.label_column;
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void require_data(const RunConfig& cfg) {
  if (cfg.data.empty()) throw UsageError("no dataset given (use --data or 'data = ...')");
}

void require_scenario(const RunConfig& cfg) {
  if (cfg.scenario == 0) throw UsageError("no scenario given (use --scenario 1..8)");
}

fs::path output_dir(const RunConfig& cfg) {
  const fs::path dir = cfg.out;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg) {
  std::string text;
  text += "# hybridsa run manifest\n";
  text += "# version " HYBRIDSA_VERSION "\n";
  text += "# command " + command + "\n";
  text += "# seed " + std::to_string(cfg.seed) + "\n";
  text += "# simd " + std::string(simd::backend_name(simd::active_backend())) + "\n";
  text += "# archive_version " + std::to_string(kArchiveVersion) + "\n";
  text += cfg.serialize();
  write_file_atomic(dir / "manifest.txt", text);
}

struct Corpus {
  std::vector<RawRecord> records;
  std::vector<std::string> cleaned;
  std::vector<ClassLabel> labels;
};

Corpus load_corpus(const RunConfig& cfg, const CleaningConfig& cleaning) {
  Corpus c;
  c.records = load_dataset(cfg.data, csv_schema(cfg));
  if (c.records.empty()) throw DataError("dataset '" + cfg.data + "' has no records");
  for (const auto& r : c.records) {
    c.cleaned.push_back(clean_text(r.text, cleaning));
    c.labels.push_back(map_label(r.label));
  }
  return c;
}

std::vector<LabeledExample> encode_corpus(const Corpus& c, const Vocabulary& vocab, std::size_t d) {
  std::vector<LabeledExample> out;
  out.reserve(c.cleaned.size());
  for (std::size_t i = 0; i < c.cleaned.size(); ++i) {
    out.push_back(make_example(encode_pad(c.cleaned[i], vocab, d), c.labels[i]));
  }
  return out;
}

/// Unpadded, untruncated sequences for co-occurrence counting.
std::vector<TokenSequence> full_sequences(const Corpus& c, const Vocabulary& vocab) {
  std::vector<TokenSequence> out;
  for (const auto& text : c.cleaned) {
    const std::size_t n = split_tokens(text).size();
    if (n > 0) out.push_back(encode_pad(text, vocab, n));
  }
  return out;
}

Matrix train_corpus_glove(const RunConfig& cfg, const Corpus& c, const Vocabulary& vocab,
                          std::vector<double>* trace, GloveModel* model_out = nullptr) {
  const GloveConfig gc = glove_config(cfg);
  const auto x = build_cooccurrence(full_sequences(c, vocab), vocab.size(), gc.window, gc.weighting);
  GloveModel model = train_glove(x, gc, trace);
  Matrix table = glove_lookup_table(model);
  if (model_out) *model_out = std::move(model);
  return table;
}

EmbeddingSource embedding_source(const RunConfig& cfg, const Corpus& c, const Vocabulary& vocab,
                                 const fs::path& out_dir) {
  EmbeddingSource src;
  if (scenario_layout(cfg.scenario).first == EmbeddingKind::kGlove) {
    if (!cfg.glove_embeddings.empty()) {
      std::ifstream in(cfg.glove_embeddings);
      if (!in) throw DataError("cannot open embeddings file '" + cfg.glove_embeddings + "'");
      src.glove_table = std::make_shared<Matrix>(read_embeddings_text(in, vocab));
    } else {
      std::vector<double> trace;
      auto table = std::make_shared<Matrix>(train_corpus_glove(cfg, c, vocab, &trace));
      std::ostringstream text;
      write_embeddings_text(text, vocab, *table);
      write_file_atomic(out_dir / "glove.txt", text.str());
      src.glove_table = std::move(table);
    }
  } else if (!cfg.encoder_weights.empty()) {
    EncoderConfig expected = encoder_config(cfg);
    expected.vocab_size = vocab.size();
    src.pretrained_encoder = std::make_shared<EncoderWeights>(load_encoder_weights(cfg.encoder_weights, expected));
  }
  return src;
}

std::string glove_trace_csv(const std::vector<double>& trace) {
  std::string out = "epoch,objective\n";
  for (std::size_t i = 0; i < trace.size(); ++i) out += std::to_string(i) + "," + format_roundtrip(trace[i]) + "\n";
  return out;
}

// ----------------------------------------------------------------- commands

int cmd_preprocess(const RunConfig& cfg, std::ostream& out) {
  require_data(cfg);
  const fs::path dir = output_dir(cfg);
  write_manifest(dir, "preprocess", cfg);
  const CleaningConfig cleaning = cleaning_config(cfg);
  const Corpus c = load_corpus(cfg, cleaning);
  const Vocabulary vocab = build_vocab(c.cleaned, cfg.min_count);
  std::string csv = csv_escape(cfg.text_column) + "," + csv_escape(cfg.label_column) + "\n";
  for (std::size_t i = 0; i < c.cleaned.size(); ++i) {
    csv += csv_escape(c.cleaned[i]) + "," + std::string(label_name(c.labels[i])) + "\n";
  }
  write_file_atomic(dir / "cleaned.csv", csv);
  write_file_atomic(dir / "vocab.tsv", vocab.serialize());
  out << "records " << c.records.size() << "\nvocabulary " << vocab.size() << "\n";
  return kExitOk;
}

int cmd_train_glove(const RunConfig& cfg, std::ostream& out) {
  require_data(cfg);
  const fs::path dir = output_dir(cfg);
  write_manifest(dir, "train-glove", cfg);
  const Corpus c = load_corpus(cfg, cleaning_config(cfg));
  const Vocabulary vocab = build_vocab(c.cleaned, cfg.min_count);
  std::vector<double> trace;
  GloveModel model;
  const Matrix table = train_corpus_glove(cfg, c, vocab, &trace, &model);
  std::ostringstream text;
  write_embeddings_text(text, vocab, table);
  write_file_atomic(dir / "glove.txt", text.str());
  write_file_atomic(dir / "vocab.tsv", vocab.serialize());
  write_file_atomic(dir / "glove_objective.csv", glove_trace_csv(trace));
  out << "vocabulary " << vocab.size() << "\nobjective " << format_fixed(trace.front(), 6) << " -> "
      << format_fixed(trace.back(), 6) << "\n";
  return kExitOk;
}

struct Prepared {
  CleaningConfig cleaning;
  Vocabulary vocab;
  std::vector<LabeledExample> examples;
  EmbeddingSource source;
};

Prepared prepare(const RunConfig& cfg, const fs::path& dir) {
  Prepared p;
  p.cleaning = cleaning_config(cfg);
  const Corpus c = load_corpus(cfg, p.cleaning);
  p.vocab = build_vocab(c.cleaned, cfg.min_count);
  p.examples = encode_corpus(c, p.vocab, cfg.seq_len);
  p.source = embedding_source(cfg, c, p.vocab, dir);
  return p;
}

int cmd_grid_search(const RunConfig& cfg, std::ostream& out) {
  require_data(cfg);
  require_scenario(cfg);
  const fs::path dir = output_dir(cfg);
  write_manifest(dir, "grid-search", cfg);
  Prepared p = prepare(cfg, dir);

  SearchSetup setup;
  setup.arch = architecture_options(cfg);
  setup.vocab_size = p.vocab.size();
  setup.source = p.source;
  setup.train = train_config(cfg);
  setup.inner_k = cfg.inner_k;
  setup.final_k = cfg.final_k;
  setup.threads = cfg.threads;
  const SearchReport report = run_grid_search(cfg.scenario, grid_spec(cfg), p.examples, setup, cfg.seed);
  emit_report(report, dir / "report.csv");

  const GridResult& best = report.rows[report.best];
  RunConfig best_cfg = cfg;
  best_cfg.batch_size = best.config.batch_size;
  best_cfg.filter1 = best.config.filter1;
  if (best.config.filter2) best_cfg.filter2 = *best.config.filter2;
  TrainConfig tc = train_config(best_cfg);
  tc.seed = derive_seed(cfg.seed, kFinalModelTag);
  HybridModel model = compose_model(hybrid_spec(best_cfg), setup.arch, p.vocab.size(), p.source, tc.seed);
  fit(model, p.examples, tc);
  save_model(model, p.vocab, best_cfg, p.cleaning, dir / "best_model.bin");
  write_file_atomic(dir / "history.csv", history_csv(model.history()));

  std::string summary = "scenario = " + std::to_string(cfg.scenario) + "\n";
  summary += "batch_size = " + std::to_string(best.config.batch_size) + "\n";
  summary += "filter1 = " + std::to_string(best.config.filter1) + "\n";
  if (best.config.filter2) summary += "filter2 = " + std::to_string(*best.config.filter2) + "\n";
  summary += "cv_accuracy = " + format_fixed(best.mean_accuracy / 100.0, 6) + "\n";
  summary += "cv_loss = " + format_fixed(best.mean_loss, 6) + "\n";
  if (report.final_eval) summary += "final_accuracy = " + format_fixed(*report.final_eval / 100.0, 6) + "\n";
  write_file_atomic(dir / "best.txt", summary);
  out << summary;
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  require_data(cfg);
  require_scenario(cfg);
  const fs::path dir = output_dir(cfg);
  write_manifest(dir, "train", cfg);
  Prepared p = prepare(cfg, dir);
  const TrainConfig tc = train_config(cfg);
  HybridModel model = compose_model(hybrid_spec(cfg), architecture_options(cfg), p.vocab.size(), p.source, tc.seed);
  fit(model, p.examples, tc);
  save_model(model, p.vocab, cfg, p.cleaning, dir / "model.bin");
  write_file_atomic(dir / "history.csv", history_csv(model.history()));
  if (!model.history().empty()) {
    const auto& last = model.history().back();
    out << "epochs " << last.epoch << "\nloss " << format_fixed(last.loss, 6) << "\ntraining_accuracy "
        << format_fixed(last.accuracy, 6) << "\n";
  }
  return kExitOk;
}

void require_model(const Flags& f) {
  if (f.model.empty()) throw UsageError("no model archive given (use --model)");
}

int cmd_evaluate(const Flags& f, const RunConfig& cfg, std::ostream& out) {
  require_model(f);
  require_data(cfg);
  write_manifest(output_dir(cfg), "evaluate", cfg);
  ModelArchive archive = load_model(f.model);
  const Corpus c = load_corpus(cfg, archive.cleaning());
  const auto examples = encode_corpus(c, archive.vocab, archive.model.options().seq_len);
  const Evaluation ev = evaluate(archive.model, examples);
  out << "accuracy " << format_fixed(ev.accuracy, 6) << "\nloss " << format_fixed(ev.loss, 6) << "\n";
  return kExitOk;
}

int cmd_predict(const Flags& f, const RunConfig& cfg, std::ostream& out) {
  require_model(f);
  if (!f.text) throw UsageError("no text given (use --text)");
  write_manifest(output_dir(cfg), "predict", cfg);
  ModelArchive archive = load_model(f.model);
  const std::string cleaned = clean_text(*f.text, archive.cleaning());
  const TokenSequence seq = encode_pad(cleaned, archive.vocab, archive.model.options().seq_len);
  const Matrix outputs = predict_outputs(archive.model, std::span<const TokenSequence>(&seq, 1));
  const ClassLabel label = argmax_class(outputs.row(0));
  out << label_name(label) << " " << label.index << "\n";
  return kExitOk;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tweet sentiment classification with embedding + CNN/Bi-LSTM hybrids", "hybridsa"};
  app.require_subcommand(1);
  app.set_version_flag("--version", HYBRIDSA_VERSION);

  Flags flags;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "Run configuration file (key = value)");
    sub->add_option("--set", flags.sets, "Override one configuration key (key=value); repeatable");
    sub->add_option("--seed", flags.seed, "Run seed");
    sub->add_option("--out", flags.out, "Output directory");
  };
  auto data_flags = [&](CLI::App* sub) {
    sub->add_option("--data", flags.data, "Dataset CSV");
    sub->add_option("--text-column", flags.text_column, "Name of the text column");
    sub->add_option("--label-column", flags.label_column, "Name of the label column");
  };

  CLI::App* preprocess = app.add_subcommand("preprocess", "Clean a dataset and build its vocabulary");
  common(preprocess);
  data_flags(preprocess);
  CLI::App* train_glove_cmd = app.add_subcommand("train-glove", "Train GloVe vectors on a dataset's texts");
  common(train_glove_cmd);
  data_flags(train_glove_cmd);
  CLI::App* grid = app.add_subcommand("grid-search", "Grid search with inner cross-validation");
  common(grid);
  data_flags(grid);
  grid->add_option("--scenario", flags.scenario, "Hybrid scenario 1..8");
  CLI::App* train = app.add_subcommand("train", "Train one configuration on a dataset");
  common(train);
  data_flags(train);
  train->add_option("--scenario", flags.scenario, "Hybrid scenario 1..8");
  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "Accuracy and loss of a saved model on a dataset");
  common(evaluate_cmd);
  data_flags(evaluate_cmd);
  evaluate_cmd->add_option("--model", flags.model, "Model archive");
  CLI::App* predict_cmd = app.add_subcommand("predict", "Classify one text with a saved model");
  common(predict_cmd);
  predict_cmd->add_option("--model", flags.model, "Model archive");
  predict_cmd->add_option("--text", flags.text, "Text to classify");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << HYBRIDSA_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    const RunConfig cfg = resolve_config(flags);
    if (preprocess->parsed()) return cmd_preprocess(cfg, out);
    if (train_glove_cmd->parsed()) return cmd_train_glove(cfg, out);
    if (grid->parsed()) return cmd_grid_search(cfg, out);
    if (train->parsed()) return cmd_train(cfg, out);
    if (evaluate_cmd->parsed()) return cmd_evaluate(flags, cfg, out);
    if (predict_cmd->parsed()) return cmd_predict(flags, cfg, out);
    throw UsageError("no subcommand given");
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace hybridsa
