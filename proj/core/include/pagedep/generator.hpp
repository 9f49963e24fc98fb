#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "pagedep/document.hpp"
#include "pagedep/rng.hpp"

namespace pagedep {

/// Controls the synthetic stream generator. Stream lengths follow a clipped
/// rounded normal; subdocument lengths follow the weight table. Defaults are
/// calibrated to the published corpus statistics.
struct GeneratorConfig {
  int n_documents = 100;
  uint64_t seed = 1;

  double stream_length_mean = 36.6;
  double stream_length_std = 18.2;
  int stream_length_min = 4;
  int stream_length_max = 82;

  std::map<int, double> subdoc_length_weights = {
      {1, 1780}, {2, 845}, {3, 193}, {4, 208}, {5, 26}, {6, 33}, {7, 16}};

  // Segment-boundary behaviour. The published label/tag frequencies are only
  // available graphically, so these are tunable rather than fixed constants.
  double p_copy = 0.15;   // new segment duplicates the previous segment
  double p_atch = 0.25;   // new segment attaches to an enclosing open segment
  double p_empty = 0.05;  // continuation page is blank/mis-scanned

  double ocr_char_error_rate = 0.02;
  bool ocr_block_shuffle = true;

  int n_classes = 8;
  int visual_dim = 64;
};

/// Throws std::invalid_argument when the config violates its invariants.
void validate_config(const GeneratorConfig& config);

/// Generates annotated streams. Every emitted document satisfies the
/// document invariants and has a projective tree; generation is
/// deterministic in the seed.
std::vector<AnnotatedDocument> generate_corpus(const GeneratorConfig& config);

/// Character-level OCR noise: each alphanumeric character is substituted with
/// probability `rate`; with shuffle_blocks the token sequence is cut into 2-6
/// contiguous blocks whose order is permuted.
std::vector<std::string> apply_ocr_noise(const std::vector<std::string>& tokens, double rate,
                                         bool shuffle_blocks, Rng& rng);

/// Document-level k-fold split; fold sizes differ by at most one and the
/// assignment is deterministic in the seed. Returns document indices.
std::vector<std::vector<int>> split_folds(int n_documents, int k, uint64_t seed);

/// The class ids whose subdocuments are scanned two-sided (their even pages
/// are back sides). The last two class ids; empty when fewer than two
/// classes exist.
std::vector<int> two_sided_classes(int n_classes);

}  // namespace pagedep
