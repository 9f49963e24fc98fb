#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pagedep/corpus_io.hpp"
#include "pagedep/document.hpp"
#include "pagedep/embeddings.hpp"
#include "pagedep/parser.hpp"

namespace pagedep {

struct TrainConfig {
  int epochs = 200;
  int batch_size_documents = 4;
  double learning_rate = 0.001;
  double weight_decay = 1e-6;
  double w_seg = 1.0;
  double w_parse = 1.0;
  double w_cls = 1.0;
  uint64_t seed = 1;
  int n_classes = 8;
  double clip_norm = 5.0;
  EmbeddingConfig embedding;
  ParserNetConfig parser;
};

void validate_config(const TrainConfig& config);

/// All learnable tensors: embedding module, parser network, and the two
/// softmax heads. Checkpoints round-trip bit-exactly.
struct ModelParameters {
  int n_classes = 0;
  EmbeddingParams emb;
  ParserNet parser;
  ad::TensorPtr seg_w, seg_b;  // [page_dim, 3], [3]
  ad::TensorPtr cls_w, cls_b;  // [page_dim, n_classes], [n_classes]

  static ModelParameters init(const EmbeddingConfig& embedding, const ParserNetConfig& parser,
                              int n_classes, uint64_t seed);

  std::vector<std::pair<std::string, ad::TensorPtr>> named_parameters() const;
  std::vector<ad::TensorPtr> parameter_list() const;
};

void save_model(const std::filesystem::path& path, const ModelParameters& params);
ModelParameters load_model(const std::filesystem::path& path);

inline constexpr int kSegClasses = 3;
int seg_tag_index(SegTag tag);
SegTag seg_tag_from_index(int index);

struct LossBreakdown {
  double total = 0.0;
  double seg = 0.0;
  double parse = 0.0;
  double cls = 0.0;
  bool parse_skipped = false;  // non-projective gold tree, parse term omitted
  int parse_states = 0;
};

/// Joint multi-task loss of one document on one shared embedding pass.
/// Zero-weight components are omitted exactly. When loss_out is given the
/// taped scalar is returned for backward().
LossBreakdown joint_loss(ad::Tape& tape, const ModelParameters& params,
                         const AnnotatedDocument& doc, const TrainConfig& config,
                         const EncodeContext& ctx, ad::TensorPtr* loss_out = nullptr);

struct TrainResult {
  ModelParameters params;
  std::vector<double> epoch_loss;  // mean document loss per epoch
  int skipped_documents = 0;       // non-projective parse components
};

/// Full training run: seeded document shuffling per epoch, gradient
/// accumulation over batches, global norm clipping, one decoupled-decay Adam
/// step per batch. Deterministic in the seed.
TrainResult train(std::span<const AnnotatedDocument> corpus, const TrainConfig& config);

/// One shared embedding pass feeding all three heads: argmax segmentation
/// tags, greedy-decoded tree (always valid), argmax classes.
DocumentPrediction predict_document(const ModelParameters& params, std::span<const Page> pages);

}  // namespace pagedep
