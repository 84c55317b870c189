#pragma once

// Labelled tweet ingestion, label coding and k-fold partitioning.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hybridsa {

inline constexpr std::size_t kNumClasses = 3;

struct RawRecord {
  std::string text;
  std::string label;  // one of "pos", "neu", "neg"
};

/// Class index: 0 = pos, 1 = neu, 2 = neg.
struct ClassLabel {
  int index = 0;
  friend bool operator==(ClassLabel, ClassLabel) = default;
};

struct CsvSchema {
  std::string text_column = "text";
  std::string label_column = "label";
};

/// Splits RFC 4180 CSV content into rows of fields. Throws DataError on an
/// unterminated quoted field.
std::vector<std::vector<std::string>> parse_csv(std::string_view content);

/// Quotes a field for CSV output when it contains a delimiter, quote or newline.
std::string csv_escape(std::string_view field);

/// Reads a CSV file with a header row. Data rows are numbered from 1 in errors.
std::vector<RawRecord> load_dataset(const std::filesystem::path& path, const CsvSchema& schema);

ClassLabel map_label(std::string_view label);
std::string_view label_name(ClassLabel label);

std::vector<double> one_hot(ClassLabel label, std::size_t num_classes);

/// Fold assignment for k-fold cross-validation. A seeded Fisher-Yates
/// permutation (mt19937_64) is cut into k contiguous blocks; the first
/// n mod k blocks receive one extra example.
struct FoldPlan {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> assignments;  // example -> fold

  std::vector<std::size_t> fold_sizes() const;
  std::vector<std::size_t> members(std::size_t fold) const;
  std::vector<std::size_t> complement(std::size_t fold) const;
};

FoldPlan make_folds(std::size_t n, std::size_t k, std::uint64_t seed);

}  // namespace hybridsa
