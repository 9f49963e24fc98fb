#include "pagedep/embeddings.hpp"

#include <cmath>
#include <stdexcept>

namespace pagedep {

namespace {

ad::TensorPtr glorot(Rng& rng, int rows, int cols) {
  double bound = std::sqrt(6.0 / (rows + cols));
  std::vector<double> v(static_cast<size_t>(rows) * cols);
  for (double& x : v) x = rng.uniform(-bound, bound);
  return ad::make_tensor({rows, cols}, std::move(v), true);
}

ad::TensorPtr small_uniform(Rng& rng, std::vector<int> shape, double bound) {
  int n = 1;
  for (int d : shape) n *= d;
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return ad::make_tensor(std::move(shape), std::move(v), true);
}

}  // namespace

std::string_view to_string(FusionMethod m) {
  switch (m) {
    case FusionMethod::Concat: return "concat";
    case FusionMethod::Sum: return "sum";
    case FusionMethod::ScalarWeighted: return "scalar_weighted";
    case FusionMethod::VectorWeighted: return "vector_weighted";
    case FusionMethod::GatedWeighted: return "gated_weighted";
    case FusionMethod::TextOnly: return "none_text";
    case FusionMethod::VisualOnly: return "none_visual";
    case FusionMethod::BaselineIndex: return "baseline_index";
  }
  return "?";
}

std::optional<FusionMethod> fusion_from_string(std::string_view s) {
  for (FusionMethod m : kFusionSweep)
    if (to_string(m) == s) return m;
  return std::nullopt;
}

void validate_config(const EmbeddingConfig& c) {
  if (c.page_dim < 1) throw std::invalid_argument("page_dim must be >= 1");
  if (c.word_dim < 1) throw std::invalid_argument("word_dim must be >= 1");
  if (c.max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
  if (c.hash_buckets < 1) throw std::invalid_argument("hash_buckets must be >= 1");
  if (c.visual_input_dim < 1 || c.visual_hidden < 1)
    throw std::invalid_argument("visual dimensions must be >= 1");
  if (c.window_radius < 0) throw std::invalid_argument("window_radius must be >= 0");
  if (c.context_depth < 0) throw std::invalid_argument("context_depth must be >= 0");
  if (c.maxout_pieces < 2) throw std::invalid_argument("maxout_pieces must be >= 2");
  if (c.position_buckets < 1) throw std::invalid_argument("position_buckets must be >= 1");
  if (c.dropout_rate < 0.0 || c.dropout_rate >= 1.0)
    throw std::invalid_argument("dropout_rate must lie in [0,1)");
}

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 1469598103934665603ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

uint64_t fnv1a64(uint64_t value) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  return fnv1a64(std::string_view(bytes, 8));
}

bool EmbeddingParams::uses_text() const {
  switch (config.fusion) {
    case FusionMethod::VisualOnly:
    case FusionMethod::BaselineIndex: return false;
    default: return true;
  }
}

bool EmbeddingParams::uses_visual() const {
  switch (config.fusion) {
    case FusionMethod::TextOnly:
    case FusionMethod::BaselineIndex: return false;
    default: return true;
  }
}

EmbeddingParams EmbeddingParams::init(const EmbeddingConfig& config, Rng& rng) {
  validate_config(config);
  EmbeddingParams p;
  p.config = config;
  int d = config.page_dim;
  int td = config.token_dim();

  if (p.uses_text()) {
    // Zero start: buckets that never receive an update keep reading as zero
    // vectors, which is the out-of-vocabulary contract.
    p.token_table = ad::make_tensor({config.hash_buckets, config.word_dim}, true);
    p.attn_w = glorot(rng, td, td);
    p.attn_u = small_uniform(rng, {td}, 0.1);
    p.text_out_w = glorot(rng, td, d);
    p.text_out_b = ad::make_tensor({d}, true);
  }
  if (p.uses_visual()) {
    p.vis_w1 = glorot(rng, config.visual_input_dim, config.visual_hidden);
    p.vis_b1 = ad::make_tensor({config.visual_hidden}, true);
    p.vis_w2 = glorot(rng, config.visual_hidden, d);
    p.vis_b2 = ad::make_tensor({d}, true);
  }
  switch (config.fusion) {
    case FusionMethod::Concat:
      p.fuse_concat_w = glorot(rng, 2 * d, d);
      p.fuse_concat_b = ad::make_tensor({d}, true);
      break;
    case FusionMethod::ScalarWeighted:
      p.fuse_scalar_rho = ad::make_tensor({1}, true);
      break;
    case FusionMethod::VectorWeighted:
      p.fuse_vector_rho = ad::make_tensor({d}, true);
      break;
    case FusionMethod::GatedWeighted:
      p.fuse_gate_u = small_uniform(rng, {d, 1}, 0.1);
      p.fuse_gate_b = ad::make_tensor({1}, true);
      break;
    default: break;
  }
  int window = (2 * config.window_radius + 1) * d;
  for (int l = 0; l < config.context_depth; ++l) {
    p.ctx_w.push_back(glorot(rng, window, d * config.maxout_pieces));
    p.ctx_b.push_back(ad::make_tensor({d * config.maxout_pieces}, true));
  }
  if (config.fusion == FusionMethod::BaselineIndex)
    p.index_table = small_uniform(rng, {config.hash_buckets, d}, 0.1);
  return p;
}

std::vector<std::pair<std::string, ad::TensorPtr>> EmbeddingParams::named_parameters() const {
  std::vector<std::pair<std::string, ad::TensorPtr>> out;
  auto push = [&out](const char* name, const ad::TensorPtr& t) {
    if (t) out.push_back({name, t});
  };
  push("emb.token_table", token_table);
  push("emb.attn_w", attn_w);
  push("emb.attn_u", attn_u);
  push("emb.text_out_w", text_out_w);
  push("emb.text_out_b", text_out_b);
  push("emb.vis_w1", vis_w1);
  push("emb.vis_b1", vis_b1);
  push("emb.vis_w2", vis_w2);
  push("emb.vis_b2", vis_b2);
  push("emb.fuse_concat_w", fuse_concat_w);
  push("emb.fuse_concat_b", fuse_concat_b);
  push("emb.fuse_scalar_rho", fuse_scalar_rho);
  push("emb.fuse_vector_rho", fuse_vector_rho);
  push("emb.fuse_gate_u", fuse_gate_u);
  push("emb.fuse_gate_b", fuse_gate_b);
  for (size_t l = 0; l < ctx_w.size(); ++l) {
    out.push_back({"emb.ctx_w" + std::to_string(l), ctx_w[l]});
    out.push_back({"emb.ctx_b" + std::to_string(l), ctx_b[l]});
  }
  push("emb.index_table", index_table);
  return out;
}

ad::TensorPtr encode_text(ad::Tape& tape, const EmbeddingParams& params, const Page& page,
                          const EncodeContext& ctx) {
  const EmbeddingConfig& cfg = params.config;
  int t_count = std::min<int>(static_cast<int>(page.tokens.size()), cfg.max_tokens);
  if (t_count == 0) return tape.reshape(params.text_out_b, {1, cfg.page_dim});

  std::vector<int> ids(static_cast<size_t>(t_count));
  for (int t = 0; t < t_count; ++t)
    ids[static_cast<size_t>(t)] = static_cast<int>(
        fnv1a64(page.tokens[static_cast<size_t>(t)]) % static_cast<uint64_t>(cfg.hash_buckets));
  ad::TensorPtr embedded = tape.rows(params.token_table, ids);  // [T, word_dim]

  // One-hot relative-position bucket per token.
  std::vector<double> pos(static_cast<size_t>(t_count) * cfg.position_buckets, 0.0);
  for (int t = 0; t < t_count; ++t) {
    int bucket = std::min(cfg.position_buckets - 1, t * cfg.position_buckets / t_count);
    pos[static_cast<size_t>(t) * cfg.position_buckets + bucket] = 1.0;
  }
  ad::TensorPtr pos_t = ad::make_tensor({t_count, cfg.position_buckets}, std::move(pos));
  ad::TensorPtr tokens = tape.concat_cols(embedded, pos_t);  // [T, token_dim]
  if (ctx.training && cfg.dropout_rate > 0.0)
    tokens = tape.dropout(tokens, cfg.dropout_rate, *ctx.rng);

  ad::TensorPtr pooled = tape.attention_pool(tokens, params.attn_w, params.attn_u);
  ad::TensorPtr row = tape.reshape(pooled, {1, cfg.token_dim()});
  return tape.add_rows(tape.matmul(row, params.text_out_w), params.text_out_b);
}

namespace {

ad::TensorPtr visual_matrix(std::span<const Page> pages, int dim) {
  std::vector<double> values;
  values.reserve(pages.size() * static_cast<size_t>(dim));
  for (const Page& p : pages) {
    if (static_cast<int>(p.visual.size()) != dim)
      throw ad::ShapeError("encode_visual: page " + std::to_string(p.index) + " has " +
                           std::to_string(p.visual.size()) + " visual features, expected " +
                           std::to_string(dim));
    values.insert(values.end(), p.visual.begin(), p.visual.end());
  }
  return ad::make_tensor({static_cast<int>(pages.size()), dim}, std::move(values));
}

ad::TensorPtr encode_visual_batch(ad::Tape& tape, const EmbeddingParams& params,
                                  std::span<const Page> pages, const EncodeContext& ctx) {
  const EmbeddingConfig& cfg = params.config;
  ad::TensorPtr x = visual_matrix(pages, cfg.visual_input_dim);
  if (ctx.training && cfg.dropout_rate > 0.0) x = tape.dropout(x, cfg.dropout_rate, *ctx.rng);
  ad::TensorPtr h = tape.relu(tape.add_rows(tape.matmul(x, params.vis_w1), params.vis_b1));
  return tape.add_rows(tape.matmul(h, params.vis_w2), params.vis_b2);
}

ad::TensorPtr encode_text_batch(ad::Tape& tape, const EmbeddingParams& params,
                                std::span<const Page> pages, const EncodeContext& ctx) {
  std::vector<ad::TensorPtr> rows;
  rows.reserve(pages.size());
  for (const Page& p : pages) rows.push_back(encode_text(tape, params, p, ctx));
  return tape.concat_rows(rows);
}

}  // namespace

ad::TensorPtr encode_visual(ad::Tape& tape, const EmbeddingParams& params, const Page& page,
                            const EncodeContext& ctx) {
  return encode_visual_batch(tape, params, std::span<const Page>(&page, 1), ctx);
}

ad::TensorPtr fuse(ad::Tape& tape, const EmbeddingParams& params, FusionMethod method,
                   const ad::TensorPtr& text, const ad::TensorPtr& visual) {
  switch (method) {
    case FusionMethod::Concat:
      return tape.add_rows(
          tape.matmul(tape.concat_cols(text, visual), params.fuse_concat_w),
          params.fuse_concat_b);
    case FusionMethod::Sum: return tape.add(text, visual);
    case FusionMethod::ScalarWeighted: {
      ad::TensorPtr lambda = tape.sigmoid(params.fuse_scalar_rho);  // [1]
      ad::TensorPtr complement = tape.add_const(tape.scale(lambda, -1.0), 1.0);
      return tape.add(tape.elementwise_mul(text, lambda),
                      tape.elementwise_mul(visual, complement));
    }
    case FusionMethod::VectorWeighted: {
      ad::TensorPtr lambda = tape.sigmoid(params.fuse_vector_rho);  // [page_dim]
      ad::TensorPtr complement = tape.add_const(tape.scale(lambda, -1.0), 1.0);
      return tape.add(tape.mul_rows(text, lambda), tape.mul_rows(visual, complement));
    }
    case FusionMethod::GatedWeighted: {
      ad::TensorPtr logits =
          tape.add_rows(tape.matmul(visual, params.fuse_gate_u), params.fuse_gate_b);  // [N,1]
      ad::TensorPtr lambda = tape.reshape(tape.sigmoid(logits), {visual->shape[0]});
      ad::TensorPtr complement = tape.add_const(tape.scale(lambda, -1.0), 1.0);
      return tape.add(tape.mul_cols(text, lambda), tape.mul_cols(visual, complement));
    }
    case FusionMethod::TextOnly: return text;
    case FusionMethod::VisualOnly: return visual;
    case FusionMethod::BaselineIndex:
      throw std::invalid_argument("fuse: baseline_index does not fuse modalities");
  }
  throw std::invalid_argument("fuse: unknown fusion method");
}

ad::TensorPtr contextualize(ad::Tape& tape, const EmbeddingParams& params,
                            const ad::TensorPtr& embeddings) {
  const EmbeddingConfig& cfg = params.config;
  if (embeddings->shape.size() != 2 || embeddings->shape[1] != cfg.page_dim)
    throw ad::ShapeError("contextualize: expected [n_pages," + std::to_string(cfg.page_dim) +
                         "], got " + ad::shape_string(embeddings->shape));
  if (embeddings->shape[0] == 0)
    throw ad::ShapeError("contextualize: empty embedding sequence");
  int n = embeddings->shape[0];
  int r = cfg.window_radius;
  ad::TensorPtr x = embeddings;
  for (size_t layer = 0; layer < params.ctx_w.size(); ++layer) {
    ad::TensorPtr padded = x;
    if (r > 0) {
      ad::TensorPtr zeros = ad::make_tensor({r, cfg.page_dim});
      std::array<ad::TensorPtr, 3> parts = {zeros, x, zeros};
      padded = tape.concat_rows(parts);
    }
    ad::TensorPtr window;
    for (int off = 0; off <= 2 * r; ++off) {
      std::vector<int> idx(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i + off;
      ad::TensorPtr shifted = tape.rows(padded, idx);
      window = window ? tape.concat_cols(window, shifted) : shifted;
    }
    ad::TensorPtr pre =
        tape.add_rows(tape.matmul(window, params.ctx_w[layer]), params.ctx_b[layer]);
    ad::TensorPtr pooled = tape.maxout(pre, cfg.maxout_pieces);
    x = tape.add(x, pooled);
  }
  return x;
}

ad::TensorPtr baseline_index_embed(ad::Tape& tape, const EmbeddingParams& params, int index) {
  if (index < 1) throw std::invalid_argument("baseline_index_embed: index must be >= 1");
  int bucket = static_cast<int>(fnv1a64(static_cast<uint64_t>(index)) %
                                static_cast<uint64_t>(params.config.hash_buckets));
  std::array<int, 1> idx = {bucket};
  return tape.rows(params.index_table, idx);
}

ad::TensorPtr encode_document(ad::Tape& tape, const EmbeddingParams& params,
                              std::span<const Page> pages, const EncodeContext& ctx) {
  if (pages.empty()) throw std::invalid_argument("encode_document: no pages");
  params.document_encodes->fetch_add(1, std::memory_order_relaxed);
  ad::TensorPtr per_page;
  switch (params.config.fusion) {
    case FusionMethod::BaselineIndex: {
      std::vector<ad::TensorPtr> rows;
      rows.reserve(pages.size());
      for (const Page& p : pages) rows.push_back(baseline_index_embed(tape, params, p.index));
      per_page = tape.concat_rows(rows);
      break;
    }
    case FusionMethod::TextOnly: per_page = encode_text_batch(tape, params, pages, ctx); break;
    case FusionMethod::VisualOnly: per_page = encode_visual_batch(tape, params, pages, ctx); break;
    default: {
      ad::TensorPtr text = encode_text_batch(tape, params, pages, ctx);
      ad::TensorPtr visual = encode_visual_batch(tape, params, pages, ctx);
      per_page = fuse(tape, params, params.config.fusion, text, visual);
    }
  }
  return contextualize(tape, params, per_page);
}

}  // namespace pagedep
