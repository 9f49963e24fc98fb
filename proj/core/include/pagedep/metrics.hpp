#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pagedep/corpus_io.hpp"
#include "pagedep/document.hpp"
#include "pagedep/model.hpp"

namespace pagedep {

struct AttachmentScores {
  double uas = 0.0;
  double las = 0.0;
};

/// Fraction of pages 1..N with the correct head (UAS) and with the correct
/// head and label (LAS); the root is not a scored token. Both trees must be
/// valid and cover the same pages.
AttachmentScores attachment_scores(const PageDependencyTree& gold,
                                   const PageDependencyTree& predicted);

struct ClassF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long gold_count = 0;
  long predicted_count = 0;
};

struct TagMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;  // over classes present in gold or predictions
  std::map<std::string, ClassF1> per_class;
};

/// Accuracy plus per-class precision/recall/F1 over label sequences. A class
/// with no true positives scores F1 = 0; classes absent from both gold and
/// predictions are left out of the macro average.
TagMetrics tag_metrics(std::span<const std::string> gold, std::span<const std::string> predicted);

/// How per-arc-label F1 treats the head: label-only classification per page
/// (the default reading), or requiring the correct head as well.
enum class LabelF1Mode { LabelOnly, LabeledAttachment };

struct EvalReport {
  double seg_accuracy = 0.0;
  double seg_f1_head = 0.0;
  double uas = 0.0;
  double las = 0.0;
  std::map<std::string, double> per_label_f1;  // incl. root
  double cls_accuracy = 0.0;
  double cls_macro_f1 = 0.0;
  long n_pages = 0;
  long n_documents = 0;
};

/// Pooled metrics over prediction/gold pairs (counts aggregate across all
/// pages before any ratio is taken).
EvalReport evaluate(std::span<const AnnotatedDocument> gold,
                    std::span<const DocumentPrediction> predictions,
                    LabelF1Mode label_mode = LabelF1Mode::LabelOnly);

using TrainFn = std::function<ModelParameters(std::span<const AnnotatedDocument>)>;

struct CrossfoldResult {
  EvalReport report;
  std::vector<DocumentPrediction> predictions;  // one per corpus document
};

/// k-fold cross validation: trains on the complement of each fold, predicts
/// the held-out documents, pools every held-out prediction, and computes one
/// report over the pooled set. `threads` parallelizes prediction only.
CrossfoldResult crossfold_report(std::span<const AnnotatedDocument> corpus, int k,
                                 uint64_t fold_seed, const TrainFn& train_fn,
                                 LabelF1Mode label_mode = LabelF1Mode::LabelOnly,
                                 int threads = 0);

/// Convenience wrapper training with `config` on each fold complement
/// (fold assignment seeded by config.seed).
CrossfoldResult crossfold_report(std::span<const AnnotatedDocument> corpus, int k,
                                 const TrainConfig& config,
                                 LabelF1Mode label_mode = LabelF1Mode::LabelOnly,
                                 int threads = 0);

/// Text table of one report line per configuration, plus a per-label block.
std::string format_report_table(const std::vector<std::pair<std::string, EvalReport>>& rows);

}  // namespace pagedep
