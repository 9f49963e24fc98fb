// pagedep: generate synthetic page streams, train and evaluate the
// multi-task interpage relation parser, parse new streams, and run the
// built-in verification suites.
//
// Exit codes: 0 success, 1 usage error, 2 verification failure, 3 I/O error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pagedep/corpus_io.hpp"
#include "pagedep/generator.hpp"
#include "pagedep/metrics.hpp"
#include "pagedep/model.hpp"
#include "pagedep/verify.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerification = 2;
constexpr int kExitIo = 3;

void print_resolved_config(const CLI::App* cmd) {
  std::cout << "# resolved configuration [" << cmd->get_name() << "]\n";
  for (const CLI::Option* opt : cmd->get_options()) {
    if (opt->get_lnames().empty()) continue;
    std::string name = opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    std::string value = opt->count() ? opt->results().front() : opt->get_default_str();
    if (value.empty()) value = "(unset)";
    std::cout << "  " << name << " = " << value << "\n";
  }
}

struct GeneratorFlags {
  pagedep::GeneratorConfig config;
  std::string out;

  void attach(CLI::App* cmd) {
    cmd->add_option("--docs", config.n_documents, "Number of streams to generate")
        ->capture_default_str();
    cmd->add_option("--seed", config.seed, "Generator seed")->capture_default_str();
    cmd->add_option("--stream-mean", config.stream_length_mean, "Mean stream length")
        ->capture_default_str();
    cmd->add_option("--stream-std", config.stream_length_std, "Stream length std deviation")
        ->capture_default_str();
    cmd->add_option("--stream-min", config.stream_length_min, "Shortest stream")
        ->capture_default_str();
    cmd->add_option("--stream-max", config.stream_length_max, "Longest stream")
        ->capture_default_str();
    cmd->add_option("--p-copy", config.p_copy, "Probability a segment is a copy")
        ->capture_default_str();
    cmd->add_option("--p-atch", config.p_atch, "Probability a segment attaches to an open segment")
        ->capture_default_str();
    cmd->add_option("--p-empty", config.p_empty, "Probability a continuation page is empty")
        ->capture_default_str();
    cmd->add_option("--ocr-rate", config.ocr_char_error_rate, "Per-character OCR error rate")
        ->capture_default_str();
    cmd->add_flag("--ocr-shuffle,!--no-ocr-shuffle", config.ocr_block_shuffle,
                  "Permute OCR block order")
        ->capture_default_str();
    cmd->add_option("--classes", config.n_classes, "Number of semantic classes")
        ->capture_default_str();
    cmd->add_option("--visual-dim", config.visual_dim, "Visual feature vector width")
        ->capture_default_str();
    cmd->add_option("--out", out, "Output corpus file (JSONL)")->required();
  }
};

struct TrainFlags {
  pagedep::TrainConfig config;
  std::string fusion = "sum";

  void attach(CLI::App* cmd) {
    cmd->add_option("--epochs", config.epochs, "Training epochs")->capture_default_str();
    cmd->add_option("--batch", config.batch_size_documents, "Documents per optimizer step")
        ->capture_default_str();
    cmd->add_option("--lr", config.learning_rate, "Learning rate")->capture_default_str();
    cmd->add_option("--weight-decay", config.weight_decay, "Decoupled weight decay")
        ->capture_default_str();
    cmd->add_option("--w-seg", config.w_seg, "Segmentation loss weight")->capture_default_str();
    cmd->add_option("--w-parse", config.w_parse, "Parser loss weight")->capture_default_str();
    cmd->add_option("--w-cls", config.w_cls, "Classification loss weight")->capture_default_str();
    cmd->add_option("--seed", config.seed, "Training seed")->capture_default_str();
    cmd->add_option("--classes", config.n_classes, "Number of semantic classes")
        ->capture_default_str();
    cmd->add_option("--clip-norm", config.clip_norm, "Global gradient norm clip")
        ->capture_default_str();
    cmd->add_option("--fusion", fusion,
                    "Embedding pipeline: concat|sum|scalar_weighted|vector_weighted|"
                    "gated_weighted|none_text|none_visual|baseline_index")
        ->capture_default_str();
    cmd->add_option("--page-dim", config.embedding.page_dim, "Page embedding width")
        ->capture_default_str();
    cmd->add_option("--word-dim", config.embedding.word_dim, "Token embedding width")
        ->capture_default_str();
    cmd->add_option("--max-tokens", config.embedding.max_tokens, "Tokens read per page")
        ->capture_default_str();
    cmd->add_option("--hash-buckets", config.embedding.hash_buckets, "Hash embedding buckets")
        ->capture_default_str();
    cmd->add_option("--visual-dim", config.embedding.visual_input_dim, "Visual input width")
        ->capture_default_str();
    cmd->add_option("--visual-hidden", config.embedding.visual_hidden,
                    "Visual encoder hidden width")
        ->capture_default_str();
    cmd->add_option("--window-radius", config.embedding.window_radius, "Context window radius")
        ->capture_default_str();
    cmd->add_option("--context-depth", config.embedding.context_depth, "Context layers")
        ->capture_default_str();
    cmd->add_option("--context-pieces", config.embedding.maxout_pieces, "Context maxout pieces")
        ->capture_default_str();
    cmd->add_option("--dropout", config.embedding.dropout_rate, "Dropout rate (training only)")
        ->capture_default_str();
    cmd->add_option("--parser-hidden", config.parser.hidden, "Parser lower network width")
        ->capture_default_str();
    cmd->add_option("--parser-pieces", config.parser.maxout_pieces, "Parser maxout pieces")
        ->capture_default_str();
  }

  pagedep::TrainConfig resolve() const {
    pagedep::TrainConfig out = config;
    auto method = pagedep::fusion_from_string(fusion);
    if (!method) throw CLI::ValidationError("--fusion", "unknown fusion method '" + fusion + "'");
    out.embedding.fusion = *method;
    out.parser.embedding_dim = out.embedding.page_dim;
    return out;
  }
};

json report_to_json(const std::string& name, const pagedep::EvalReport& r) {
  return json{{"configuration", name},
              {"seg_accuracy", r.seg_accuracy},
              {"seg_f1_head", r.seg_f1_head},
              {"uas", r.uas},
              {"las", r.las},
              {"per_label_f1", r.per_label_f1},
              {"cls_accuracy", r.cls_accuracy},
              {"cls_macro_f1", r.cls_macro_f1},
              {"pages", r.n_pages},
              {"documents", r.n_documents}};
}

int run_generate(const GeneratorFlags& flags) {
  auto corpus = pagedep::generate_corpus(flags.config);
  pagedep::write_corpus(std::filesystem::path(flags.out), corpus);
  long pages = 0;
  for (const auto& doc : corpus) pages += static_cast<long>(doc.pages.size());
  std::cout << "wrote " << corpus.size() << " documents / " << pages << " pages to " << flags.out
            << "\n";
  return kExitOk;
}

int run_train(const TrainFlags& flags, const std::string& corpus_path, const std::string& out,
              const std::string& trace_path) {
  pagedep::TrainConfig config = flags.resolve();
  auto corpus = pagedep::read_corpus(std::filesystem::path(corpus_path));
  pagedep::TrainResult result = pagedep::train(corpus, config);
  pagedep::save_model(std::filesystem::path(out), result.params);
  std::cout << "trained " << config.epochs << " epochs on " << corpus.size()
            << " documents; final mean loss " << result.epoch_loss.back() << "\n";
  if (result.skipped_documents > 0)
    std::cout << "warning: parse loss skipped for " << result.skipped_documents
              << " non-projective document(s)\n";
  if (!trace_path.empty()) {
    std::ofstream trace(trace_path);
    if (!trace) throw pagedep::CorpusError("cannot open '" + trace_path + "' for writing");
    trace << "epoch loss\n";
    for (size_t e = 0; e < result.epoch_loss.size(); ++e)
      trace << (e + 1) << " " << result.epoch_loss[e] << "\n";
  }
  std::cout << "checkpoint written to " << out << "\n";
  return kExitOk;
}

int run_eval(const TrainFlags& flags, const std::string& corpus_path, int folds, bool sweep,
             const std::string& report_path, const std::string& label_f1_mode, int threads) {
  pagedep::TrainConfig base = flags.resolve();
  auto corpus = pagedep::read_corpus(std::filesystem::path(corpus_path));
  pagedep::LabelF1Mode mode = label_f1_mode == "attachment"
                                  ? pagedep::LabelF1Mode::LabeledAttachment
                                  : pagedep::LabelF1Mode::LabelOnly;

  std::vector<pagedep::FusionMethod> methods;
  if (sweep)
    methods.assign(pagedep::kFusionSweep.begin(), pagedep::kFusionSweep.end());
  else
    methods.push_back(base.embedding.fusion);

  std::vector<std::pair<std::string, pagedep::EvalReport>> rows;
  for (pagedep::FusionMethod method : methods) {
    pagedep::TrainConfig config = base;
    config.embedding.fusion = method;
    pagedep::CrossfoldResult result =
        pagedep::crossfold_report(corpus, folds, config, mode, threads);
    rows.push_back({std::string(pagedep::to_string(method)), result.report});
    std::cout << pagedep::to_string(method) << ": uas " << result.report.uas << " las "
              << result.report.las << " seg_acc " << result.report.seg_accuracy << " cls_acc "
              << result.report.cls_accuracy << "\n";
  }
  std::cout << "\n" << pagedep::format_report_table(rows);
  if (!report_path.empty()) {
    json out = json::array();
    for (const auto& [name, report] : rows) out.push_back(report_to_json(name, report));
    std::ofstream file(report_path);
    if (!file) throw pagedep::CorpusError("cannot open '" + report_path + "' for writing");
    file << out.dump(2) << "\n";
    std::cout << "report written to " << report_path << "\n";
  }
  return kExitOk;
}

int run_parse(const std::string& model_path, const std::string& input_path,
              const std::string& out_path) {
  pagedep::ModelParameters params = pagedep::load_model(std::filesystem::path(model_path));
  auto streams = pagedep::read_page_streams(std::filesystem::path(input_path));
  std::vector<pagedep::DocumentPrediction> predictions;
  predictions.reserve(streams.size());
  for (const pagedep::PageStream& stream : streams) {
    pagedep::DocumentPrediction pred = pagedep::predict_document(params, stream.pages);
    pred.id = stream.id;
    predictions.push_back(std::move(pred));
  }
  pagedep::write_conllp(std::filesystem::path(out_path), predictions);
  std::cout << "parsed " << predictions.size() << " stream(s) to " << out_path << "\n";
  return kExitOk;
}

int run_oracle_check(int max_pages) {
  pagedep::OracleCheckResult result = pagedep::oracle_roundtrip_check(max_pages);
  std::cout << "checked " << result.trees << " labeled projective trees up to " << max_pages
            << " pages: ";
  if (result.ok()) {
    std::cout << "all trees reconstructed\n";
    return kExitOk;
  }
  std::cout << result.failures << " reconstruction failure(s)\n";
  return kExitVerification;
}

int run_gradcheck_cmd(uint64_t seed, double tolerance) {
  pagedep::GradCheckReport report = pagedep::run_gradcheck(seed);
  for (const auto& [op, err] : report.per_op)
    std::cout << "  " << op << ": max relative error " << err << "\n";
  std::cout << "  end-to-end joint loss: max relative error " << report.end_to_end << "\n";
  std::cout << "worst: " << report.worst << " (tolerance " << tolerance << ")\n";
  return report.worst <= tolerance ? kExitOk : kExitVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interpage relation parsing toolkit"};
  app.require_subcommand(1);

  GeneratorFlags gen_flags;
  CLI::App* generate = app.add_subcommand("generate", "Generate a synthetic annotated corpus");
  gen_flags.attach(generate);
  generate->set_config("--config");

  TrainFlags train_flags;
  std::string train_corpus, train_out, train_trace;
  CLI::App* train_cmd = app.add_subcommand("train", "Train the multi-task model on a corpus");
  train_flags.attach(train_cmd);
  train_cmd->add_option("--corpus", train_corpus, "Training corpus (JSONL)")->required();
  train_cmd->add_option("--out", train_out, "Checkpoint output path")->required();
  train_cmd->add_option("--trace", train_trace, "Two-column per-epoch loss trace file");
  train_cmd->set_config("--config");

  TrainFlags eval_flags;
  std::string eval_corpus, eval_report, eval_label_f1 = "label";
  int eval_folds = 3, eval_threads = 0;
  bool eval_sweep = false;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Cross-validated pooled evaluation");
  eval_flags.attach(eval_cmd);
  eval_cmd->add_option("--corpus", eval_corpus, "Corpus to evaluate on (JSONL)")->required();
  eval_cmd->add_option("--folds", eval_folds, "Cross-validation folds")->capture_default_str();
  eval_cmd->add_flag("--fusion-sweep", eval_sweep,
                     "Evaluate baseline, both unimodal runs, and all five fusion methods");
  eval_cmd->add_option("--report", eval_report, "Machine-readable report file (JSON)");
  eval_cmd->add_option("--label-f1", eval_label_f1, "Per-label F1 mode: label|attachment")
      ->capture_default_str();
  eval_cmd->add_option("--threads", eval_threads, "Prediction threads (0 = auto)")
      ->capture_default_str();
  eval_cmd->set_config("--config");

  std::string parse_model, parse_input, parse_out;
  CLI::App* parse_cmd = app.add_subcommand("parse", "Parse page streams with a trained model");
  parse_cmd->add_option("--model", parse_model, "Model checkpoint")->required();
  parse_cmd->add_option("--input", parse_input, "Page streams (JSONL)")->required();
  parse_cmd->add_option("--out", parse_out, "CoNLL-P output path")->required();
  parse_cmd->set_config("--config");

  int oracle_max_pages = 5;
  CLI::App* oracle_cmd =
      app.add_subcommand("oracle-check", "Exhaustive oracle round-trip verification");
  oracle_cmd->add_option("--max-pages", oracle_max_pages, "Largest page count to enumerate")
      ->capture_default_str();
  oracle_cmd->set_config("--config");

  uint64_t gradcheck_seed = 7;
  double gradcheck_tolerance = 1e-4;
  CLI::App* gradcheck_cmd =
      app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  gradcheck_cmd->add_option("--seed", gradcheck_seed, "Random seed")->capture_default_str();
  gradcheck_cmd->add_option("--tolerance", gradcheck_tolerance, "Maximum relative error")
      ->capture_default_str();
  gradcheck_cmd->set_config("--config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* active = app.get_subcommands().front();
  print_resolved_config(active);
  try {
    if (active == generate) return run_generate(gen_flags);
    if (active == train_cmd) return run_train(train_flags, train_corpus, train_out, train_trace);
    if (active == eval_cmd)
      return run_eval(eval_flags, eval_corpus, eval_folds, eval_sweep, eval_report, eval_label_f1,
                      eval_threads);
    if (active == parse_cmd) return run_parse(parse_model, parse_input, parse_out);
    if (active == oracle_cmd) return run_oracle_check(oracle_max_pages);
    if (active == gradcheck_cmd) return run_gradcheck_cmd(gradcheck_seed, gradcheck_tolerance);
  } catch (const pagedep::CorpusError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
