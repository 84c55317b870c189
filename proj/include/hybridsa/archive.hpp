#pragma once

// Versioned model archive: run configuration, cleaning stopwords,
// vocabulary, architecture, frozen embeddings, every trainable parameter
// and the training history.
//
// Layout (little-endian):
//   "HSAMODEL" | u32 version | u32 section count
//   per section: string name | u64 offset | u64 length   (table of contents)
//   section payloads | u64 FNV-1a checksum of everything before it

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hybridsa/model.hpp"
#include "hybridsa/run_config.hpp"
#include "hybridsa/textprep.hpp"

namespace hybridsa {

inline constexpr std::uint32_t kArchiveVersion = 1;

struct ModelArchive {
  RunConfig config;
  std::vector<std::string> stopwords;  // sorted; the list the texts were cleaned with
  Vocabulary vocab;
  HybridModel model;

  /// Cleaning flags from the stored config with the stored stopword list.
  CleaningConfig cleaning() const;
};

std::string serialize_model(HybridModel& model, const Vocabulary& vocab, const RunConfig& config,
                            const CleaningConfig& cleaning);
ModelArchive deserialize_model(std::string_view bytes);

/// Atomic write (temporary file + rename).
void save_model(HybridModel& model, const Vocabulary& vocab, const RunConfig& config, const CleaningConfig& cleaning,
                const std::filesystem::path& path);
/// Throws DataError on truncation, checksum or shape problems and on a
/// version other than kArchiveVersion.
ModelArchive load_model(const std::filesystem::path& path);

}  // namespace hybridsa
