#include "pagedep/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "pagedep/checkpoint.hpp"
#include "pagedep/optimizer.hpp"

namespace pagedep {

using nlohmann::json;

void validate_config(const TrainConfig& c) {
  if (c.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (c.batch_size_documents < 1) throw std::invalid_argument("batch size must be >= 1");
  if (c.learning_rate <= 0.0) throw std::invalid_argument("learning rate must be > 0");
  if (c.weight_decay < 0.0) throw std::invalid_argument("weight decay must be >= 0");
  if (c.w_seg < 0.0 || c.w_parse < 0.0 || c.w_cls < 0.0)
    throw std::invalid_argument("loss weights must be >= 0");
  if (c.n_classes < 1) throw std::invalid_argument("n_classes must be >= 1");
  if (c.clip_norm <= 0.0) throw std::invalid_argument("clip norm must be > 0");
  validate_config(c.embedding);
}

int seg_tag_index(SegTag tag) {
  switch (tag) {
    case SegTag::Head: return 0;
    case SegTag::Inter: return 1;
    case SegTag::Empty: return 2;
  }
  return -1;
}

SegTag seg_tag_from_index(int index) {
  switch (index) {
    case 0: return SegTag::Head;
    case 1: return SegTag::Inter;
    case 2: return SegTag::Empty;
  }
  throw std::invalid_argument("seg tag index " + std::to_string(index) + " outside [0,3)");
}

ModelParameters ModelParameters::init(const EmbeddingConfig& embedding,
                                      const ParserNetConfig& parser_cfg, int n_classes,
                                      uint64_t seed) {
  if (n_classes < 1) throw std::invalid_argument("n_classes must be >= 1");
  if (parser_cfg.embedding_dim != embedding.page_dim)
    throw std::invalid_argument("parser embedding_dim must equal page_dim");
  Rng rng(derive_seed(seed, 0x9a9a));
  ModelParameters p;
  p.n_classes = n_classes;
  p.emb = EmbeddingParams::init(embedding, rng);
  p.parser = ParserNet::init(parser_cfg, rng);
  auto glorot = [&rng](int rows, int cols) {
    double bound = std::sqrt(6.0 / (rows + cols));
    std::vector<double> v(static_cast<size_t>(rows) * cols);
    for (double& x : v) x = rng.uniform(-bound, bound);
    return ad::make_tensor({rows, cols}, std::move(v), true);
  };
  p.seg_w = glorot(embedding.page_dim, kSegClasses);
  p.seg_b = ad::make_tensor({kSegClasses}, true);
  p.cls_w = glorot(embedding.page_dim, n_classes);
  p.cls_b = ad::make_tensor({n_classes}, true);
  return p;
}

std::vector<std::pair<std::string, ad::TensorPtr>> ModelParameters::named_parameters() const {
  std::vector<std::pair<std::string, ad::TensorPtr>> out = emb.named_parameters();
  for (auto& entry : parser.named_parameters()) out.push_back(std::move(entry));
  out.push_back({"head.seg_w", seg_w});
  out.push_back({"head.seg_b", seg_b});
  out.push_back({"head.cls_w", cls_w});
  out.push_back({"head.cls_b", cls_b});
  return out;
}

std::vector<ad::TensorPtr> ModelParameters::parameter_list() const {
  std::vector<ad::TensorPtr> out;
  for (auto& [name, tensor] : named_parameters()) out.push_back(tensor);
  return out;
}

namespace {

json embedding_config_to_json(const EmbeddingConfig& c) {
  return json{{"page_dim", c.page_dim},
              {"word_dim", c.word_dim},
              {"max_tokens", c.max_tokens},
              {"hash_buckets", c.hash_buckets},
              {"visual_input_dim", c.visual_input_dim},
              {"visual_hidden", c.visual_hidden},
              {"fusion", std::string(to_string(c.fusion))},
              {"window_radius", c.window_radius},
              {"context_depth", c.context_depth},
              {"maxout_pieces", c.maxout_pieces},
              {"position_buckets", c.position_buckets},
              {"dropout_rate", c.dropout_rate}};
}

EmbeddingConfig embedding_config_from_json(const json& j) {
  EmbeddingConfig c;
  c.page_dim = j.at("page_dim").get<int>();
  c.word_dim = j.at("word_dim").get<int>();
  c.max_tokens = j.at("max_tokens").get<int>();
  c.hash_buckets = j.at("hash_buckets").get<int>();
  c.visual_input_dim = j.at("visual_input_dim").get<int>();
  c.visual_hidden = j.at("visual_hidden").get<int>();
  auto fusion = fusion_from_string(j.at("fusion").get<std::string>());
  if (!fusion) throw std::runtime_error("checkpoint names an unknown fusion method");
  c.fusion = *fusion;
  c.window_radius = j.at("window_radius").get<int>();
  c.context_depth = j.at("context_depth").get<int>();
  c.maxout_pieces = j.at("maxout_pieces").get<int>();
  c.position_buckets = j.at("position_buckets").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  return c;
}

}  // namespace

void save_model(const std::filesystem::path& path, const ModelParameters& params) {
  json meta{{"format", "pagedep-model"},
            {"n_classes", params.n_classes},
            {"embedding", embedding_config_to_json(params.emb.config)},
            {"parser",
             {{"embedding_dim", params.parser.config.embedding_dim},
              {"hidden", params.parser.config.hidden},
              {"maxout_pieces", params.parser.config.maxout_pieces}}}};
  save_checkpoint(path, meta.dump(), params.named_parameters());
}

ModelParameters load_model(const std::filesystem::path& path) {
  LoadedCheckpoint ckpt = load_checkpoint(path);
  json meta = json::parse(ckpt.metadata);
  if (meta.value("format", "") != "pagedep-model")
    throw std::runtime_error("'" + path.string() + "' is not a model checkpoint");
  EmbeddingConfig emb_cfg = embedding_config_from_json(meta.at("embedding"));
  ParserNetConfig parser_cfg;
  parser_cfg.embedding_dim = meta.at("parser").at("embedding_dim").get<int>();
  parser_cfg.hidden = meta.at("parser").at("hidden").get<int>();
  parser_cfg.maxout_pieces = meta.at("parser").at("maxout_pieces").get<int>();
  int n_classes = meta.at("n_classes").get<int>();

  ModelParameters params = ModelParameters::init(emb_cfg, parser_cfg, n_classes, /*seed=*/0);
  auto named = params.named_parameters();
  if (named.size() != ckpt.entries.size())
    throw std::runtime_error("checkpoint holds " + std::to_string(ckpt.entries.size()) +
                             " tensors, model expects " + std::to_string(named.size()));
  for (size_t i = 0; i < named.size(); ++i) {
    const CheckpointEntry& entry = ckpt.entries[i];
    auto& [name, tensor] = named[i];
    if (entry.name != name)
      throw std::runtime_error("checkpoint entry '" + entry.name + "' where '" + name +
                               "' was expected");
    if (entry.shape != tensor->shape)
      throw std::runtime_error("checkpoint entry '" + entry.name + "' has shape " +
                               ad::shape_string(entry.shape) + ", expected " +
                               ad::shape_string(tensor->shape));
    tensor->value = entry.values;
  }
  return params;
}

LossBreakdown joint_loss(ad::Tape& tape, const ModelParameters& params,
                         const AnnotatedDocument& doc, const TrainConfig& config,
                         const EncodeContext& ctx, ad::TensorPtr* loss_out) {
  for (int cls : doc.classes)
    if (cls < 0 || cls >= params.n_classes)
      throw std::invalid_argument("document '" + doc.id + "' carries class " +
                                  std::to_string(cls) + " outside [0," +
                                  std::to_string(params.n_classes) + ")");

  LossBreakdown breakdown;
  ad::TensorPtr contextual = encode_document(tape, params.emb, doc.pages, ctx);
  ad::TensorPtr total;
  auto accumulate = [&](double weight, const ad::TensorPtr& component) {
    ad::TensorPtr weighted = weight == 1.0 ? component : tape.scale(component, weight);
    total = total ? tape.add(total, weighted) : weighted;
  };

  if (config.w_seg > 0.0) {
    std::vector<int> targets(doc.seg_tags.size());
    for (size_t i = 0; i < doc.seg_tags.size(); ++i) targets[i] = seg_tag_index(doc.seg_tags[i]);
    ad::TensorPtr logits = tape.add_rows(tape.matmul(contextual, params.seg_w), params.seg_b);
    ad::TensorPtr ce = tape.softmax_cross_entropy(logits, targets);
    breakdown.seg = ce->value[0];
    accumulate(config.w_seg, ce);
  }

  if (config.w_parse > 0.0) {
    try {
      std::vector<OracleStep> steps = oracle_sequence(doc.tree);
      breakdown.parse_states = static_cast<int>(steps.size());
      if (!steps.empty()) {
        ad::TensorPtr logits = score_states(tape, params.parser, contextual, steps);
        std::vector<int> targets(steps.size());
        std::vector<char> valid(steps.size() * kNumActions);
        for (size_t s = 0; s < steps.size(); ++s) {
          targets[s] = steps[s].action;
          for (int a = 0; a < kNumActions; ++a)
            valid[s * kNumActions + static_cast<size_t>(a)] = steps[s].valid[static_cast<size_t>(a)];
        }
        ad::TensorPtr ce = tape.softmax_cross_entropy(logits, targets, &valid);
        breakdown.parse = ce->value[0];
        accumulate(config.w_parse, ce);
      }
    } catch (const NonProjectiveError&) {
      breakdown.parse_skipped = true;
    }
  }

  if (config.w_cls > 0.0) {
    ad::TensorPtr logits = tape.add_rows(tape.matmul(contextual, params.cls_w), params.cls_b);
    ad::TensorPtr ce = tape.softmax_cross_entropy(logits, doc.classes);
    breakdown.cls = ce->value[0];
    accumulate(config.w_cls, ce);
  }

  if (!total) total = ad::make_scalar(0.0);
  breakdown.total = total->value[0];
  if (loss_out) *loss_out = total;
  return breakdown;
}

TrainResult train(std::span<const AnnotatedDocument> corpus, const TrainConfig& config) {
  validate_config(config);
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  for (const AnnotatedDocument& doc : corpus)
    for (int cls : doc.classes)
      if (cls < 0 || cls >= config.n_classes)
        throw std::invalid_argument("train: document '" + doc.id + "' carries class " +
                                    std::to_string(cls) + " outside [0," +
                                    std::to_string(config.n_classes) + ")");

  TrainResult result{
      ModelParameters::init(config.embedding, config.parser, config.n_classes, config.seed),
      {},
      0};
  std::vector<ad::TensorPtr> param_list = result.params.parameter_list();
  ad::AdamW optimizer(
      {config.learning_rate, config.weight_decay, 0.9, 0.999, 1e-8}, param_list);
  ad::zero_grads(param_list);

  std::vector<int> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(config.seed, 0xe90c, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    size_t cursor = 0;
    while (cursor < order.size()) {
      size_t batch_end = std::min(order.size(), cursor + static_cast<size_t>(config.batch_size_documents));
      for (size_t i = cursor; i < batch_end; ++i) {
        const AnnotatedDocument& doc = corpus[static_cast<size_t>(order[i])];
        Rng dropout_rng(derive_seed(config.seed, static_cast<uint64_t>(epoch),
                                    static_cast<uint64_t>(order[i])));
        ad::Tape tape;
        ad::TensorPtr loss;
        LossBreakdown breakdown =
            joint_loss(tape, result.params, doc, config, {true, &dropout_rng}, &loss);
        if (breakdown.parse_skipped && epoch == 0) ++result.skipped_documents;
        tape.backward(loss);
        epoch_loss += breakdown.total;
      }
      clip_global_grad_norm(param_list, config.clip_norm);
      optimizer.step(param_list);
      ad::zero_grads(param_list);
      cursor = batch_end;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(corpus.size()));
  }
  return result;
}

DocumentPrediction predict_document(const ModelParameters& params, std::span<const Page> pages) {
  if (pages.empty()) throw std::invalid_argument("predict_document: no pages");
  ad::Tape tape;
  tape.set_recording(false);
  ad::TensorPtr contextual = encode_document(tape, params.emb, pages, {false, nullptr});
  int n = static_cast<int>(pages.size());
  int d = params.emb.config.page_dim;

  DocumentPrediction pred;
  auto argmax_head = [&](const ad::TensorPtr& w, const ad::TensorPtr& b) {
    ad::TensorPtr logits = tape.add_rows(tape.matmul(contextual, w), b);
    int classes = logits->shape[1];
    std::vector<int> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const double* row = logits->value.data() + static_cast<size_t>(i) * classes;
      int best = 0;
      for (int c = 1; c < classes; ++c)
        if (row[c] > row[best]) best = c;
      out[static_cast<size_t>(i)] = best;
    }
    return out;
  };

  std::vector<int> seg = argmax_head(params.seg_w, params.seg_b);
  pred.seg_tags.reserve(static_cast<size_t>(n));
  for (int tag : seg) pred.seg_tags.push_back(seg_tag_from_index(tag));
  pred.tree = greedy_decode(params.parser,
                            std::span<const double>(contextual->value.data(),
                                                    static_cast<size_t>(n) * static_cast<size_t>(d)),
                            n);
  pred.classes = argmax_head(params.cls_w, params.cls_b);
  return pred;
}

}  // namespace pagedep
