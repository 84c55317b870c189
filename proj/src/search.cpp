#include "hybridsa/search.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "hybridsa/binary_io.hpp"
#include "hybridsa/error.hpp"
#include "hybridsa/random.hpp"
#include "hybridsa/text_format.hpp"

namespace hybridsa {

namespace {

constexpr std::uint64_t kFinalEvalTag = 0x66696e616cULL;  // "final"

std::vector<LabeledExample> gather(std::span<const LabeledExample> data, const std::vector<std::size_t>& idx) {
  std::vector<LabeledExample> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(data[i]);
  return out;
}

void require_values(const std::vector<std::size_t>& values, const char* what) {
  if (values.empty()) throw UsageError(std::string("grid list '") + what + "' is empty");
  for (std::size_t v : values) {
    if (v == 0) throw UsageError(std::string("grid list '") + what + "' contains 0");
  }
}

}  // namespace

GridSpec GridSpec::defaults_for(int scenario_id) {
  GridSpec g;
  g.batch_sizes = {128, 256, 512};
  if (scenario_is_two_layer(scenario_id)) {
    g.filter1_values = {128, 256, 512};
    g.filter2_values = std::vector<std::size_t>{64, 128, 256, 512};
  } else {
    g.filter1_values = {64, 128, 256, 512};
  }
  return g;
}

void GridSpec::validate(int scenario_id) const {
  require_values(batch_sizes, "batch_size");
  require_values(filter1_values, "filter1");
  const bool two = scenario_is_two_layer(scenario_id);
  if (two && !filter2_values) {
    throw UsageError("scenario " + std::to_string(scenario_id) + " has two stack layers and needs filter2 values");
  }
  if (!two && filter2_values) {
    throw UsageError("scenario " + std::to_string(scenario_id) + " has one stack layer; filter2 values not allowed");
  }
  if (filter2_values) require_values(*filter2_values, "filter2");
}

std::size_t GridSpec::size() const {
  return batch_sizes.size() * filter1_values.size() * (filter2_values ? filter2_values->size() : 1);
}

std::vector<GridConfig> enumerate_grid(const GridSpec& spec) {
  require_values(spec.batch_sizes, "batch_size");
  require_values(spec.filter1_values, "filter1");
  if (spec.filter2_values) require_values(*spec.filter2_values, "filter2");
  std::vector<GridConfig> out;
  out.reserve(spec.size());
  for (std::size_t b : spec.batch_sizes) {
    for (std::size_t f1 : spec.filter1_values) {
      if (!spec.filter2_values) {
        out.push_back({b, f1, std::nullopt});
        continue;
      }
      for (std::size_t f2 : *spec.filter2_values) out.push_back({b, f1, f2});
    }
  }
  return out;
}

GridResult cross_validate(int scenario_id, const GridConfig& config, std::span<const LabeledExample> data,
                          const SearchSetup& setup, std::uint64_t seed, std::size_t k) {
  if (k < 2) throw UsageError("cross-validation needs at least 2 folds");
  if (data.size() < k) {
    throw DataError("cross-validation with " + std::to_string(k) + " folds needs at least " + std::to_string(k) +
                    " examples, got " + std::to_string(data.size()));
  }
  const HybridSpec spec = HybridSpec::for_scenario(scenario_id, config.filter1, config.filter2);
  const FoldPlan plan = make_folds(data.size(), k, seed);

  GridResult result;
  result.config = config;
  try {
    for (std::size_t fold = 0; fold < k; ++fold) {
      const auto train = gather(data, plan.complement(fold));
      const auto held = gather(data, plan.members(fold));
      TrainConfig tc = setup.train;
      tc.batch_size = config.batch_size;
      tc.seed = seed ^ static_cast<std::uint64_t>(fold);
      HybridModel model = compose_model(spec, setup.arch, setup.vocab_size, setup.source, tc.seed);
      fit(model, train, tc);
      const Evaluation ev = evaluate(model, held);
      if (!std::isfinite(ev.loss)) throw NumericError("non-finite held-out loss in fold " + std::to_string(fold));
      result.per_fold.push_back({ev.accuracy, ev.loss});
    }
  } catch (const NumericError& e) {
    result.failed = true;
    result.failure = e.what();
    result.per_fold.clear();
    result.mean_accuracy = std::numeric_limits<double>::quiet_NaN();
    result.mean_loss = std::numeric_limits<double>::quiet_NaN();
    return result;
  }
  double acc = 0.0;
  double loss = 0.0;
  for (const auto& f : result.per_fold) {
    acc += f.accuracy;
    loss += f.loss;
  }
  result.mean_accuracy = acc / static_cast<double>(k);
  result.mean_loss = loss / static_cast<double>(k);
  return result;
}

std::uint64_t config_seed(std::uint64_t run_seed, std::size_t index) {
  return derive_seed(run_seed, static_cast<std::uint64_t>(index));
}

SearchReport run_grid_search(int scenario_id, const GridSpec& spec, std::span<const LabeledExample> data,
                             const SearchSetup& setup, std::uint64_t seed) {
  spec.validate(scenario_id);
  const auto configs = enumerate_grid(spec);
  SearchReport report;
  report.scenario_id = scenario_id;
  report.rows.resize(configs.size());

  const std::size_t workers = std::max<std::size_t>(1, std::min(setup.threads, configs.size()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        report.rows[i] = cross_validate(scenario_id, configs[i], data, setup, config_seed(seed, i));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  report.best = select_best(report.rows);
  if (setup.final_k > 0) {
    const GridResult final =
        cross_validate(scenario_id, configs[report.best], data, setup, derive_seed(seed, kFinalEvalTag), setup.final_k);
    if (final.failed) throw NumericError("final evaluation of the best configuration failed: " + final.failure);
    report.final_eval = final.mean_accuracy;
  }
  return report;
}

std::size_t select_best(std::span<const GridResult> rows) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.failed) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = rows[*best];
    if (r.mean_accuracy > b.mean_accuracy || (r.mean_accuracy == b.mean_accuracy && r.mean_loss < b.mean_loss)) {
      best = i;
    }
  }
  if (!best) throw NumericError("every grid configuration failed");
  return *best;
}

std::string report_csv(const SearchReport& report) {
  std::string out = "batch_size,filter1,filter2,accuracy,loss,best\n";
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    out += std::to_string(r.config.batch_size) + "," + std::to_string(r.config.filter1) + ",";
    if (r.config.filter2) out += std::to_string(*r.config.filter2);
    out += ",";
    if (r.failed) {
      out += "nan,nan";
    } else {
      out += format_fixed(r.mean_accuracy / 100.0, 6) + "," + format_fixed(r.mean_loss, 6);
    }
    out += i == report.best ? ",1\n" : ",0\n";
  }
  return out;
}

void emit_report(const SearchReport& report, const std::filesystem::path& path) {
  write_file_atomic(path, report_csv(report));
}

}  // namespace hybridsa
