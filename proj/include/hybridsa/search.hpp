#pragma once

// Exhaustive grid search with inner k-fold cross-validation and a final
// k-fold evaluation of the selected configuration.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hybridsa/model.hpp"

namespace hybridsa {

struct GridConfig {
  std::size_t batch_size = 0;
  std::size_t filter1 = 0;
  std::optional<std::size_t> filter2;
  friend bool operator==(const GridConfig&, const GridConfig&) = default;
};

struct GridSpec {
  std::vector<std::size_t> batch_sizes;
  std::vector<std::size_t> filter1_values;
  std::optional<std::vector<std::size_t>> filter2_values;  // two-layer scenarios only

  /// batch {128,256,512}; two-layer: filter1 {128,256,512}, filter2
  /// {64,128,256,512}; one-layer: filter1 {64,128,256,512}.
  static GridSpec defaults_for(int scenario_id);
  /// Throws UsageError on empty lists, zero values, or a filter2 list that
  /// disagrees with the scenario's stack depth.
  void validate(int scenario_id) const;
  std::size_t size() const;
};

/// Cartesian product, batch outermost, then filter1, then filter2.
std::vector<GridConfig> enumerate_grid(const GridSpec& spec);

struct FoldResult {
  double accuracy = 0.0;  // percent
  double loss = 0.0;
  friend bool operator==(const FoldResult&, const FoldResult&) = default;
};

struct GridResult {
  GridConfig config;
  double mean_accuracy = 0.0;
  double mean_loss = 0.0;
  std::vector<FoldResult> per_fold;
  bool failed = false;
  std::string failure;  // reason when failed
};

/// Everything a search needs besides the grid: architecture, embeddings and
/// the fixed training settings. TrainConfig::batch_size and the seed are
/// replaced per configuration and fold.
struct SearchSetup {
  ArchitectureOptions arch;
  std::size_t vocab_size = 0;
  EmbeddingSource source;
  TrainConfig train;
  std::size_t inner_k = 3;
  std::size_t final_k = 10;  // 0 skips the final evaluation
  std::size_t threads = 1;
};

struct SearchReport {
  int scenario_id = 0;
  std::vector<GridResult> rows;
  std::size_t best = 0;
  std::optional<double> final_eval;  // mean accuracy (percent) of the best config
};

/// Trains one fresh model per fold (fold i uses training seed seed ^ i) and
/// evaluates it on the held-out fold. A NumericError marks the result failed.
GridResult cross_validate(int scenario_id, const GridConfig& config, std::span<const LabeledExample> data,
                          const SearchSetup& setup, std::uint64_t seed, std::size_t k);

inline GridResult cross_validate(int scenario_id, const GridConfig& config, std::span<const LabeledExample> data,
                                 const SearchSetup& setup, std::uint64_t seed) {
  return cross_validate(scenario_id, config, data, setup, seed, setup.inner_k);
}

/// Seed of configuration `index` in a run seeded with `run_seed`.
std::uint64_t config_seed(std::uint64_t run_seed, std::size_t index);

/// Cross-validates every configuration (possibly in parallel), selects the
/// best and, when setup.final_k > 0, evaluates it with final_k folds.
/// Throws NumericError when every configuration fails.
SearchReport run_grid_search(int scenario_id, const GridSpec& spec, std::span<const LabeledExample> data,
                             const SearchSetup& setup, std::uint64_t seed);

/// Highest mean accuracy; ties go to the lower mean loss, then to the earlier
/// row. Failed rows are skipped. Throws NumericError if none succeeded.
std::size_t select_best(std::span<const GridResult> rows);

/// "batch_size,filter1,filter2,accuracy,loss,best" with accuracy as a fraction
/// and six decimals; failed rows print "nan".
std::string report_csv(const SearchReport& report);
void emit_report(const SearchReport& report, const std::filesystem::path& path);

}  // namespace hybridsa
