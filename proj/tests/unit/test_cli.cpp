#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "hybridsa/archive.hpp"
#include "hybridsa/cli.hpp"
#include "hybridsa/error.hpp"
#include "hybridsa/run_config.hpp"
#include "synthetic.hpp"
#include "temp_dir.hpp"

namespace hybridsa {
namespace {

using testing::TempDir;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// ---------------------------------------------------------------- RunConfig

TEST(RunConfig, DefaultsMatchTrainingTable) {
  const RunConfig c;
  EXPECT_EQ(c.learning_rate, 0.001);
  EXPECT_EQ(c.epochs, 4u);
  EXPECT_EQ(c.dropout, 0.5);
  EXPECT_EQ(c.seq_len, 100u);
  EXPECT_EQ(c.encoder_layers, 2u);
  EXPECT_EQ(c.encoder_hidden, 128u);
  EXPECT_EQ(c.encoder_heads, 2u);
  EXPECT_EQ(c.inner_k, 3u);
  EXPECT_EQ(c.final_k, 10u);
  EXPECT_NO_THROW(c.validate());
  const auto tc = train_config(c);
  EXPECT_EQ(tc.learning_rate, 0.001);
  EXPECT_EQ(tc.epochs, 4u);
}

TEST(RunConfig, ParseCommentsOverridesAndRoundTrip) {
  const auto c = parse_run_config("# comment\n  scenario = 6 \nfilter1=256\n\ngrid_filter2 = 64, 128\nlowercase = false\n");
  EXPECT_EQ(c.scenario, 6);
  EXPECT_EQ(c.filter1, 256u);
  EXPECT_EQ(c.grid_filter2, (std::vector<std::size_t>{64, 128}));
  EXPECT_FALSE(c.lowercase);
  EXPECT_EQ(parse_run_config(c.serialize()), c);
  for (const auto& key : RunConfig::keys()) EXPECT_EQ(parse_run_config(key + " = " + c.get(key) + "\n", c), c) << key;
}

TEST(RunConfig, UnknownKeysAndBadValuesRejected) {
  EXPECT_THROW(parse_run_config("no_such_key = 1\n"), UsageError);
  EXPECT_THROW(parse_run_config("just a line\n"), UsageError);
  EXPECT_THROW(parse_run_config("epochs = many\n"), UsageError);
  EXPECT_THROW(parse_run_config("lowercase = maybe\n"), UsageError);
  RunConfig c;
  c.set("dropout", "1.5");
  EXPECT_THROW(c.validate(), UsageError);
  c = RunConfig{};
  c.set("encoder_heads", "3");
  EXPECT_THROW(c.validate(), UsageError);
  c = RunConfig{};
  c.scenario = 3;
  c.grid_filter2 = {64};
  EXPECT_THROW(c.validate(), UsageError);
}

TEST(RunConfig, DerivedConfigs) {
  RunConfig c;
  c.scenario = 5;
  c.filter1 = 32;
  c.filter2 = 16;
  c.head = "softmax";
  c.rescale_outputs = false;
  c.grid_batch_sizes = {8};
  const auto spec = hybrid_spec(c);
  EXPECT_EQ(spec.filter1, 32u);
  EXPECT_EQ(spec.filter2, std::optional<std::size_t>(16));
  const auto arch = architecture_options(c);
  EXPECT_EQ(arch.head, HeadActivation::kSoftmax);
  EXPECT_EQ(arch.cce_input, CceInput::kAsIs);
  EXPECT_EQ(grid_spec(c).size(), 12u);
  c.scenario = 7;
  EXPECT_FALSE(hybrid_spec(c).filter2.has_value());
  EXPECT_NE(glove_config(c).seed, c.seed);
}

// ------------------------------------------------------------------ archive

struct Trained {
  testing::MicroBenchmark mb;
  RunConfig cfg;
  HybridModel model;
};

Trained trained(int scenario) {
  auto mb = testing::micro_benchmark(12, 10, 0, 4);
  RunConfig cfg;
  cfg.scenario = scenario;
  cfg.seq_len = 10;
  cfg.glove_dim = 4;
  cfg.encoder_layers = 1;
  cfg.encoder_hidden = 4;
  cfg.encoder_ffn = 8;
  cfg.filter1 = 3;
  cfg.filter2 = 2;
  cfg.kernel_width = 3;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  HybridModel m = compose_model(hybrid_spec(cfg), architecture_options(cfg), mb.vocab.size(), mb.source, 1);
  fit(m, mb.examples, train_config(cfg));
  return {std::move(mb), cfg, std::move(m)};
}

TEST(Archive, RoundTripPredictsBitwiseForEveryScenario) {
  Rng rng(3);
  for (int s = 1; s <= 8; ++s) {
    auto t = trained(s);
    const std::string bytes = serialize_model(t.model, t.mb.vocab, t.cfg, CleaningConfig{});
    ModelArchive back = deserialize_model(bytes);
    EXPECT_EQ(back.config, t.cfg);
    EXPECT_EQ(back.vocab, t.mb.vocab);
    EXPECT_EQ(back.model.layers(), t.model.layers());
    EXPECT_EQ(back.model.history(), t.model.history());
    std::vector<TokenSequence> inputs;
    for (int i = 0; i < 50; ++i) {
      TokenSequence seq;
      seq.true_length = 1 + rng.below(10);
      seq.ids.assign(10, 0);
      for (std::size_t k = 0; k < seq.true_length; ++k) seq.ids[k] = static_cast<std::int32_t>(1 + rng.below(t.mb.vocab.size() - 1));
      inputs.push_back(seq);
    }
    EXPECT_EQ(predict_outputs(back.model, inputs), predict_outputs(t.model, inputs)) << scenario_name(s);
    EXPECT_EQ(serialize_model(back.model, back.vocab, back.config, back.cleaning()), bytes) << scenario_name(s);
  }
}

TEST(Archive, CorruptionAndVersionErrors) {
  TempDir dir("archive");
  auto t = trained(3);
  save_model(t.model, t.mb.vocab, t.cfg, CleaningConfig{}, dir / "m.bin");
  const std::string bytes = slurp(dir / "m.bin");
  EXPECT_NO_THROW(load_model(dir / "m.bin"));

  for (std::size_t cut : {std::size_t{0}, std::size_t{7}, std::size_t{30}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(deserialize_model(std::string_view(bytes).substr(0, cut)), DataError) << cut;
  }
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x40;
  EXPECT_THROW(deserialize_model(flipped), DataError);

  std::string future = bytes;
  future[8] = 2;
  try {
    deserialize_model(future);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_model(dir / "absent.bin"), DataError);
}

TEST(Archive, StoresCleaningStopwords) {
  auto t = trained(7);
  CleaningConfig cleaning;
  cleaning.stopword_list = {"vaccine", "city"};
  ModelArchive back = deserialize_model(serialize_model(t.model, t.mb.vocab, t.cfg, cleaning));
  EXPECT_EQ(clean_text("the vaccine city people", back.cleaning()), "the people");
}

// ---------------------------------------------------------------------- CLI

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_command(args, out, err);
  return {code, out.str(), err.str()};
}

class CliFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    data_ = dir_ / "tweets.csv";
    testing::write_records_csv(data_, testing::marker_records(30, 0));
    std::ofstream cfg(dir_ / "tiny.cfg");
    cfg << "# small shapes for tests\n"
           "seq_len = 12\nglove_dim = 4\nglove_epochs = 5\nencoder_layers = 1\nencoder_hidden = 8\n"
           "encoder_ffn = 16\nfilter1 = 4\nfilter2 = 4\nkernel_width = 3\nepochs = 2\nbatch_size = 8\n"
           "final_k = 3\n";
  }

  std::vector<std::string> base(const std::string& cmd, const std::string& out) const {
    return {cmd, "--config", (dir_ / "tiny.cfg").string(), "--data", data_.string(), "--out", (dir_ / out).string()};
  }

  TempDir dir_{"cli"};
  std::filesystem::path data_;
};

TEST_F(CliFixture, PreprocessWritesCleanedCsvAndVocab) {
  const std::string before = slurp(data_);
  const auto r = run(base("preprocess", "pre"));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(line_count(slurp(dir_ / "pre" / "cleaned.csv")), 31u);
  EXPECT_EQ(slurp(dir_ / "pre" / "vocab.tsv").substr(0, 8), "<pad>\t0\n");
  EXPECT_EQ(slurp(data_), before);
  const std::string manifest = slurp(dir_ / "pre" / "manifest.txt");
  EXPECT_NE(manifest.find("# command preprocess"), std::string::npos);
  EXPECT_NE(manifest.find("seq_len = 12"), std::string::npos);
}

TEST_F(CliFixture, TrainGloveWritesVectorsAndTrace) {
  auto args = base("train-glove", "glove");
  const auto r = run(args);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(line_count(slurp(dir_ / "glove" / "glove_objective.csv")), 7u);
  EXPECT_TRUE(std::filesystem::exists(dir_ / "glove" / "glove.txt"));
  EXPECT_EQ(run(args).out, r.out);
}

TEST_F(CliFixture, GridSearchScenarioThreeAndManifestReplay) {
  auto args = base("grid-search", "s3");
  args.insert(args.end(), {"--scenario", "3", "--seed", "0", "--set", "epochs=1"});
  const auto r = run(args);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const std::string report = slurp(dir_ / "s3" / "report.csv");
  EXPECT_EQ(line_count(report), 13u);
  EXPECT_NE(r.out.find("cv_accuracy"), std::string::npos);
  ASSERT_TRUE(std::filesystem::exists(dir_ / "s3" / "best_model.bin"));
  EXPECT_NO_THROW(load_model(dir_ / "s3" / "best_model.bin"));

  const auto replay = run({"grid-search", "--config", (dir_ / "s3" / "manifest.txt").string(), "--out",
                           (dir_ / "replay").string()});
  ASSERT_EQ(replay.code, kExitOk) << replay.err;
  EXPECT_EQ(slurp(dir_ / "replay" / "report.csv"), report);
  EXPECT_EQ(slurp(dir_ / "replay" / "history.csv"), slurp(dir_ / "s3" / "history.csv"));
}

TEST_F(CliFixture, TrainEvaluatePredict) {
  auto args = base("train", "t7");
  args.insert(args.end(), {"--scenario", "7", "--set", "epochs=30"});
  const auto r = run(args);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto model = (dir_ / "t7" / "model.bin").string();
  EXPECT_EQ(line_count(slurp(dir_ / "t7" / "history.csv")), 31u);

  const auto ev = run({"evaluate", "--model", model, "--data", data_.string(), "--out", (dir_ / "ev").string()});
  ASSERT_EQ(ev.code, kExitOk) << ev.err;
  EXPECT_EQ(ev.out.rfind("accuracy ", 0), 0u) << ev.out;
  const double acc = std::stod(ev.out.substr(9));
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 100.0);

  const auto p = run({"predict", "--model", model, "--text", "vaccines save lives", "--out", (dir_ / "p").string()});
  ASSERT_EQ(p.code, kExitOk) << p.err;
  const bool shaped = p.out == "pos 0\n" || p.out == "neu 1\n" || p.out == "neg 2\n";
  EXPECT_TRUE(shaped) << p.out;
  EXPECT_EQ(run({"predict", "--model", model, "--text", "vaccines save lives", "--out", (dir_ / "p").string()}).out,
            p.out);
}

TEST_F(CliFixture, ExitCodes) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"train", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(run({"train", "--data", data_.string(), "--out", (dir_ / "x").string()}).code, kExitUsage);
  auto bad_key = base("train", "x");
  bad_key.insert(bad_key.end(), {"--scenario", "3", "--set", "nonsense=1"});
  EXPECT_EQ(run(bad_key).code, kExitUsage);
  EXPECT_EQ(run({"train", "--scenario", "3", "--data", (dir_ / "missing.csv").string(), "--out",
                 (dir_ / "x").string()})
                .code,
            kExitData);

  std::ofstream(dir_ / "bad.csv") << "text,label\nhello,positive\n";
  const auto bad_label = run({"preprocess", "--data", (dir_ / "bad.csv").string(), "--out", (dir_ / "x").string()});
  EXPECT_EQ(bad_label.code, kExitData);
  EXPECT_NE(bad_label.err.find("row 1"), std::string::npos) << bad_label.err;

  std::ofstream(dir_ / "trunc.bin", std::ios::binary) << "HSAMODEL\x01";
  const auto corrupt =
      run({"predict", "--model", (dir_ / "trunc.bin").string(), "--text", "hi", "--out", (dir_ / "x").string()});
  EXPECT_EQ(corrupt.code, kExitData);
  EXPECT_FALSE(corrupt.err.empty());

  auto diverge = base("train", "nan");
  diverge.insert(diverge.end(), {"--scenario", "7", "--set", "learning_rate=1e300", "--set", "epochs=3"});
  EXPECT_EQ(run(diverge).code, kExitNumeric);

  const auto help = run({"--help"});
  EXPECT_EQ(help.code, kExitOk);
  EXPECT_NE(help.out.find("grid-search"), std::string::npos);
}

}  // namespace
}  // namespace hybridsa
