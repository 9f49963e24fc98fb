#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "pagedep/document.hpp"
#include "pagedep/tensor.hpp"

namespace pagedep {

/// How the two modality embeddings combine into the page embedding, or which
/// single source feeds the pipeline instead.
enum class FusionMethod {
  Concat,          // [w_t || w_v] projected back to page_dim
  Sum,             // w_t + w_v
  ScalarWeighted,  // lambda*w_t + (1-lambda)*w_v, learnable scalar
  VectorWeighted,  // elementwise weight vector
  GatedWeighted,   // scalar weight predicted from w_v
  TextOnly,        // no fusion, textual embedding only
  VisualOnly,      // no fusion, visual embedding only
  BaselineIndex,   // page-position hash embedding, no content at all
};

std::string_view to_string(FusionMethod m);
std::optional<FusionMethod> fusion_from_string(std::string_view s);

/// All eight pipeline variants in report order: baseline, the two unimodal
/// runs, then the five fusion methods.
inline constexpr std::array<FusionMethod, 8> kFusionSweep = {
    FusionMethod::BaselineIndex, FusionMethod::TextOnly,       FusionMethod::VisualOnly,
    FusionMethod::Concat,        FusionMethod::Sum,            FusionMethod::ScalarWeighted,
    FusionMethod::VectorWeighted, FusionMethod::GatedWeighted};

struct EmbeddingConfig {
  int page_dim = 96;
  int word_dim = 100;
  int max_tokens = 512;
  int hash_buckets = 1 << 16;
  int visual_input_dim = 64;
  int visual_hidden = 512;
  FusionMethod fusion = FusionMethod::Sum;
  int window_radius = 1;
  int context_depth = 2;
  int maxout_pieces = 3;
  int position_buckets = 8;  // one-hot positional features appended per token
  double dropout_rate = 0.2;

  int token_dim() const { return word_dim + position_buckets; }

  friend bool operator==(const EmbeddingConfig&, const EmbeddingConfig&) = default;
};

void validate_config(const EmbeddingConfig& config);

/// FNV-1a 64-bit hash; the fixed token/bucket hash of the pipeline.
uint64_t fnv1a64(std::string_view bytes);
uint64_t fnv1a64(uint64_t value);

/// Learnable tensors of the embedding module. Only the tensors the selected
/// fusion method can reach are allocated. The token table starts at zero so
/// buckets never touched during training keep behaving as zero vectors.
struct EmbeddingParams {
  EmbeddingConfig config;

  // textual encoder
  ad::TensorPtr token_table;  // [hash_buckets, word_dim], zero-initialized
  ad::TensorPtr attn_w;       // [token_dim, token_dim]
  ad::TensorPtr attn_u;       // [token_dim]
  ad::TensorPtr text_out_w;   // [token_dim, page_dim]
  ad::TensorPtr text_out_b;   // [page_dim]

  // visual encoder
  ad::TensorPtr vis_w1, vis_b1;  // [V, visual_hidden], [visual_hidden]
  ad::TensorPtr vis_w2, vis_b2;  // [visual_hidden, page_dim], [page_dim]

  // fusion
  ad::TensorPtr fuse_concat_w, fuse_concat_b;  // [2*page_dim, page_dim], [page_dim]
  ad::TensorPtr fuse_scalar_rho;               // [1], lambda = sigmoid(rho)
  ad::TensorPtr fuse_vector_rho;               // [page_dim]
  ad::TensorPtr fuse_gate_u, fuse_gate_b;      // [page_dim, 1], [1]

  // context windowing, one pair per depth layer
  std::vector<ad::TensorPtr> ctx_w;  // [(2r+1)*page_dim, page_dim*pieces]
  std::vector<ad::TensorPtr> ctx_b;  // [page_dim*pieces]

  // position-only baseline
  ad::TensorPtr index_table;  // [hash_buckets, page_dim]

  // instrumentation: counts full-document encoder passes (shared-encoder check)
  std::shared_ptr<std::atomic<long>> document_encodes =
      std::make_shared<std::atomic<long>>(0);

  static EmbeddingParams init(const EmbeddingConfig& config, Rng& rng);
  std::vector<std::pair<std::string, ad::TensorPtr>> named_parameters() const;

  bool uses_text() const;
  bool uses_visual() const;
};

/// Forward-pass context: dropout only fires in training mode.
struct EncodeContext {
  bool training = false;
  Rng* rng = nullptr;
};

/// Textual page embedding: hashed bucket vectors for the first max_tokens
/// tokens plus positional features, attention pooling, linear map to
/// page_dim. An empty page yields exactly the output bias. Returns [1, page_dim].
ad::TensorPtr encode_text(ad::Tape& tape, const EmbeddingParams& params, const Page& page,
                          const EncodeContext& ctx);

/// Visual page embedding: linear V->hidden, relu, linear hidden->page_dim.
/// Returns [1, page_dim].
ad::TensorPtr encode_visual(ad::Tape& tape, const EmbeddingParams& params, const Page& page,
                            const EncodeContext& ctx);

/// Combines per-page text and visual matrices [N, page_dim] by the method.
ad::TensorPtr fuse(ad::Tape& tape, const EmbeddingParams& params, FusionMethod method,
                   const ad::TensorPtr& text, const ad::TensorPtr& visual);

/// Window + maxout + residual context layers; preserves [N, page_dim].
ad::TensorPtr contextualize(ad::Tape& tape, const EmbeddingParams& params,
                            const ad::TensorPtr& embeddings);

/// Position-only baseline embedding of one page index. Returns [1, page_dim].
ad::TensorPtr baseline_index_embed(ad::Tape& tape, const EmbeddingParams& params, int index);

/// Full pipeline for one document: per-page embeddings by the configured
/// method, then contextualization. Returns [N, page_dim].
ad::TensorPtr encode_document(ad::Tape& tape, const EmbeddingParams& params,
                              std::span<const Page> pages, const EncodeContext& ctx);

}  // namespace pagedep
