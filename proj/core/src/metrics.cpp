#include "pagedep/metrics.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <thread>

#include "pagedep/generator.hpp"

namespace pagedep {

namespace {

struct ArcInfo {
  int head = -1;
  ArcLabel label = ArcLabel::Root;
};

std::vector<ArcInfo> arc_table(const PageDependencyTree& tree) {
  ValidationResult v = validate_tree(tree);
  if (!v.ok) throw std::invalid_argument("attachment_scores: tree fails validation");
  std::vector<ArcInfo> info(static_cast<size_t>(tree.n_pages) + 1);
  for (const Arc& a : tree.arcs) info[static_cast<size_t>(a.dependent)] = {a.head, a.label};
  return info;
}

}  // namespace

AttachmentScores attachment_scores(const PageDependencyTree& gold,
                                   const PageDependencyTree& predicted) {
  if (gold.n_pages != predicted.n_pages)
    throw std::invalid_argument("attachment_scores: trees cover " +
                                std::to_string(gold.n_pages) + " and " +
                                std::to_string(predicted.n_pages) + " pages");
  if (gold.n_pages == 0) return {1.0, 1.0};
  std::vector<ArcInfo> g = arc_table(gold), p = arc_table(predicted);
  long correct_heads = 0, correct_arcs = 0;
  for (int page = 1; page <= gold.n_pages; ++page) {
    const ArcInfo& gi = g[static_cast<size_t>(page)];
    const ArcInfo& pi = p[static_cast<size_t>(page)];
    if (gi.head == pi.head) {
      ++correct_heads;
      if (gi.label == pi.label) ++correct_arcs;
    }
  }
  double n = static_cast<double>(gold.n_pages);
  return {correct_heads / n, correct_arcs / n};
}

TagMetrics tag_metrics(std::span<const std::string> gold, std::span<const std::string> predicted) {
  if (gold.size() != predicted.size())
    throw std::invalid_argument("tag_metrics: " + std::to_string(gold.size()) + " gold vs " +
                                std::to_string(predicted.size()) + " predicted labels");
  TagMetrics out;
  if (gold.empty()) return out;

  long correct = 0;
  std::map<std::string, long> tp, gold_count, pred_count;
  for (size_t i = 0; i < gold.size(); ++i) {
    ++gold_count[gold[i]];
    ++pred_count[predicted[i]];
    if (gold[i] == predicted[i]) {
      ++correct;
      ++tp[gold[i]];
    }
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(gold.size());

  std::set<std::string> classes;
  for (const auto& [label, count] : gold_count) classes.insert(label);
  for (const auto& [label, count] : pred_count) classes.insert(label);
  double f1_sum = 0.0;
  for (const std::string& label : classes) {
    ClassF1 c;
    c.gold_count = gold_count.count(label) ? gold_count[label] : 0;
    c.predicted_count = pred_count.count(label) ? pred_count[label] : 0;
    long hits = tp.count(label) ? tp[label] : 0;
    c.precision = c.predicted_count > 0 ? static_cast<double>(hits) / c.predicted_count : 0.0;
    c.recall = c.gold_count > 0 ? static_cast<double>(hits) / c.gold_count : 0.0;
    c.f1 = (c.precision + c.recall) > 0.0 ? 2.0 * c.precision * c.recall / (c.precision + c.recall)
                                          : 0.0;
    f1_sum += c.f1;
    out.per_class[label] = c;
  }
  out.macro_f1 = classes.empty() ? 0.0 : f1_sum / static_cast<double>(classes.size());
  return out;
}

EvalReport evaluate(std::span<const AnnotatedDocument> gold,
                    std::span<const DocumentPrediction> predictions, LabelF1Mode label_mode) {
  if (gold.size() != predictions.size())
    throw std::invalid_argument("evaluate: " + std::to_string(gold.size()) + " documents vs " +
                                std::to_string(predictions.size()) + " predictions");
  EvalReport report;
  report.n_documents = static_cast<long>(gold.size());

  std::vector<std::string> seg_gold, seg_pred, lab_gold, lab_pred, cls_gold, cls_pred;
  long correct_heads = 0, correct_arcs = 0, total_pages = 0;
  // Labeled-attachment per-label counts.
  std::map<std::string, long> la_tp, la_gold, la_pred;

  for (size_t d = 0; d < gold.size(); ++d) {
    const AnnotatedDocument& doc = gold[d];
    const DocumentPrediction& pred = predictions[d];
    size_t n = doc.pages.size();
    if (pred.seg_tags.size() != n || pred.classes.size() != n ||
        pred.tree.n_pages != static_cast<int>(n))
      throw std::invalid_argument("evaluate: prediction for '" + doc.id +
                                  "' does not cover its " + std::to_string(n) + " pages");
    std::vector<ArcInfo> g = arc_table(doc.tree), p = arc_table(pred.tree);
    total_pages += static_cast<long>(n);
    for (size_t i = 0; i < n; ++i) {
      seg_gold.push_back(std::string(to_string(doc.seg_tags[i])));
      seg_pred.push_back(std::string(to_string(pred.seg_tags[i])));
      cls_gold.push_back(std::to_string(doc.classes[i]));
      cls_pred.push_back(std::to_string(pred.classes[i]));
      const ArcInfo& gi = g[i + 1];
      const ArcInfo& pi = p[i + 1];
      std::string gl(to_string(gi.label)), pl(to_string(pi.label));
      lab_gold.push_back(gl);
      lab_pred.push_back(pl);
      bool head_ok = gi.head == pi.head;
      if (head_ok) {
        ++correct_heads;
        if (gi.label == pi.label) ++correct_arcs;
      }
      ++la_gold[gl];
      ++la_pred[pl];
      if (head_ok && gi.label == pi.label) ++la_tp[gl];
    }
  }
  report.n_pages = total_pages;
  if (total_pages > 0) {
    report.uas = static_cast<double>(correct_heads) / static_cast<double>(total_pages);
    report.las = static_cast<double>(correct_arcs) / static_cast<double>(total_pages);
  }

  TagMetrics seg = tag_metrics(seg_gold, seg_pred);
  report.seg_accuracy = seg.accuracy;
  if (auto it = seg.per_class.find("HEAD"); it != seg.per_class.end())
    report.seg_f1_head = it->second.f1;

  TagMetrics cls = tag_metrics(cls_gold, cls_pred);
  report.cls_accuracy = cls.accuracy;
  report.cls_macro_f1 = cls.macro_f1;

  if (label_mode == LabelF1Mode::LabelOnly) {
    TagMetrics lab = tag_metrics(lab_gold, lab_pred);
    for (const auto& [label, c] : lab.per_class) report.per_label_f1[label] = c.f1;
  } else {
    std::set<std::string> labels;
    for (const auto& [label, count] : la_gold) labels.insert(label);
    for (const auto& [label, count] : la_pred) labels.insert(label);
    for (const std::string& label : labels) {
      long tp = la_tp.count(label) ? la_tp[label] : 0;
      long gc = la_gold.count(label) ? la_gold[label] : 0;
      long pc = la_pred.count(label) ? la_pred[label] : 0;
      double precision = pc > 0 ? static_cast<double>(tp) / pc : 0.0;
      double recall = gc > 0 ? static_cast<double>(tp) / gc : 0.0;
      report.per_label_f1[label] =
          (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    }
  }
  return report;
}

CrossfoldResult crossfold_report(std::span<const AnnotatedDocument> corpus, int k,
                                 uint64_t fold_seed, const TrainFn& train_fn,
                                 LabelF1Mode label_mode, int threads) {
  std::vector<std::vector<int>> folds =
      split_folds(static_cast<int>(corpus.size()), k, fold_seed);
  CrossfoldResult result;
  result.predictions.resize(corpus.size());

  if (threads <= 0)
    threads = std::max(1u, std::thread::hardware_concurrency());

  for (const std::vector<int>& held_out : folds) {
    std::vector<char> in_fold(corpus.size(), 0);
    for (int idx : held_out) in_fold[static_cast<size_t>(idx)] = 1;
    std::vector<AnnotatedDocument> training;
    training.reserve(corpus.size() - held_out.size());
    for (size_t i = 0; i < corpus.size(); ++i)
      if (!in_fold[i]) training.push_back(corpus[i]);

    ModelParameters model = train_fn(training);

    // Held-out prediction fans out across documents; the models and outputs
    // are slot-indexed so the result does not depend on scheduling.
    auto predict_range = [&](size_t begin, size_t end) {
      for (size_t i = begin; i < end; ++i) {
        int doc_idx = held_out[i];
        const AnnotatedDocument& doc = corpus[static_cast<size_t>(doc_idx)];
        DocumentPrediction pred = predict_document(model, doc.pages);
        pred.id = doc.id;
        result.predictions[static_cast<size_t>(doc_idx)] = std::move(pred);
      }
    };
    if (threads == 1 || held_out.size() < 2) {
      predict_range(0, held_out.size());
    } else {
      size_t n_workers = std::min<size_t>(static_cast<size_t>(threads), held_out.size());
      std::vector<std::thread> workers;
      size_t chunk = (held_out.size() + n_workers - 1) / n_workers;
      for (size_t w = 0; w < n_workers; ++w) {
        size_t begin = w * chunk;
        size_t end = std::min(held_out.size(), begin + chunk);
        if (begin >= end) break;
        workers.emplace_back(predict_range, begin, end);
      }
      for (std::thread& t : workers) t.join();
    }
  }
  result.report = evaluate(corpus, result.predictions, label_mode);
  return result;
}

CrossfoldResult crossfold_report(std::span<const AnnotatedDocument> corpus, int k,
                                 const TrainConfig& config, LabelF1Mode label_mode, int threads) {
  TrainFn train_fn = [&config](std::span<const AnnotatedDocument> training) {
    return train(training, config).params;
  };
  return crossfold_report(corpus, k, config.seed, train_fn, label_mode, threads);
}

std::string format_report_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::ostringstream os;
  os << "configuration        seg_acc  seg_f1   uas      las      cls_acc  cls_f1\n";
  auto line = [&os](const std::string& name, const EvalReport& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-20s %-8.4f %-8.4f %-8.4f %-8.4f %-8.4f %-8.4f\n",
                  name.c_str(), r.seg_accuracy, r.seg_f1_head, r.uas, r.las, r.cls_accuracy,
                  r.cls_macro_f1);
    os << buf;
  };
  for (const auto& [name, report] : rows) line(name, report);
  os << "\nper-label F1\n";
  std::set<std::string> labels;
  for (const auto& [name, report] : rows)
    for (const auto& [label, f1] : report.per_label_f1) labels.insert(label);
  os << "configuration       ";
  for (const std::string& label : labels) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), " %-8s", label.c_str());
    os << buf;
  }
  os << "\n";
  for (const auto& [name, report] : rows) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-20s", name.c_str());
    os << buf;
    for (const std::string& label : labels) {
      auto it = report.per_label_f1.find(label);
      std::snprintf(buf, sizeof(buf), " %-8.4f", it == report.per_label_f1.end() ? 0.0 : it->second);
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace pagedep
