#include "hybridsa/dataset_io.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hybridsa/error.hpp"
#include "hybridsa/random.hpp"

namespace hybridsa {

std::vector<std::vector<std::string>> parse_csv(std::string_view content) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool row_has_content = false;
  std::size_t i = 0;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
    row_has_content = false;
  };

  // Skip a UTF-8 byte order mark.
  if (content.starts_with("\xEF\xBB\xBF")) i = 3;

  for (; i < content.size(); ++i) {
    const char ch = content[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        in_quotes = true;
        row_has_content = true;
        break;
      case ',':
        end_field();
        row_has_content = true;
        break;
      case '\r':
        if (i + 1 < content.size() && content[i + 1] == '\n') ++i;
        [[fallthrough]];
      case '\n':
        if (row_has_content || !field.empty() || !row.empty()) end_row();
        break;
      default:
        field.push_back(ch);
        row_has_content = true;
    }
  }
  if (in_quotes) throw DataError("CSV: unterminated quoted field");
  if (row_has_content || !field.empty() || !row.empty()) end_row();
  return rows;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

std::vector<RawRecord> load_dataset(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const auto rows = parse_csv(buffer.str());
  if (rows.empty()) throw DataError("dataset has no header row: " + path.string());

  const auto& header = rows.front();
  auto column_of = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw DataError("dataset " + path.string() + " has no column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t text_col = column_of(schema.text_column);
  const std::size_t label_col = column_of(schema.label_column);

  std::vector<RawRecord> records;
  records.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() <= std::max(text_col, label_col)) {
      throw DataError("row " + std::to_string(r) + ": expected at least " +
                      std::to_string(std::max(text_col, label_col) + 1) + " fields, got " +
                      std::to_string(row.size()));
    }
    const std::string& label = row[label_col];
    try {
      map_label(label);
    } catch (const DataError&) {
      throw DataError("row " + std::to_string(r) + ": unknown label '" + label +
                      "' (expected pos, neu or neg)");
    }
    records.push_back({row[text_col], label});
  }
  return records;
}

ClassLabel map_label(std::string_view label) {
  if (label == "pos") return {0};
  if (label == "neu") return {1};
  if (label == "neg") return {2};
  throw DataError("unknown label '" + std::string(label) + "'");
}

std::string_view label_name(ClassLabel label) {
  switch (label.index) {
    case 0:
      return "pos";
    case 1:
      return "neu";
    case 2:
      return "neg";
    default:
      throw DataError("class index out of range: " + std::to_string(label.index));
  }
}

std::vector<double> one_hot(ClassLabel label, std::size_t num_classes) {
  if (label.index < 0 || static_cast<std::size_t>(label.index) >= num_classes) {
    throw DataError("class index " + std::to_string(label.index) + " out of range for " +
                    std::to_string(num_classes) + " classes");
  }
  std::vector<double> v(num_classes, 0.0);
  v[static_cast<std::size_t>(label.index)] = 1.0;
  return v;
}

FoldPlan make_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw UsageError("k-fold needs k >= 2, got " + std::to_string(k));
  if (k > n) {
    throw UsageError("k-fold needs k <= n, got k=" + std::to_string(k) +
                     " n=" + std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  FoldPlan plan{k, seed, std::vector<std::size_t>(n, 0)};
  const std::size_t base = n / k;
  const std::size_t extra = n % k;
  std::size_t pos = 0;
  for (std::size_t fold = 0; fold < k; ++fold) {
    const std::size_t size = base + (fold < extra ? 1 : 0);
    for (std::size_t j = 0; j < size; ++j) plan.assignments[order[pos++]] = fold;
  }
  return plan;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t f : assignments) ++sizes[f];
  return sizes;
}

std::vector<std::size_t> FoldPlan::members(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::complement(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] != fold) out.push_back(i);
  }
  return out;
}

}  // namespace hybridsa
