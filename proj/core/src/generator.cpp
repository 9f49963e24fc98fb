#include "pagedep/generator.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

namespace pagedep {

namespace {

const char* kConsonants[] = {"b", "c", "d", "f", "g", "h", "k", "l", "m",
                             "n", "p", "r", "s", "t", "v", "z"};
const char* kVowels[] = {"a", "e", "i", "o", "u"};

std::string pseudoword(Rng& rng) {
  int syllables = rng.uniform_int(2, 4);
  std::string w;
  for (int s = 0; s < syllables; ++s) {
    w += kConsonants[rng.uniform_int(0, 15)];
    w += kVowels[rng.uniform_int(0, 4)];
  }
  return w;
}

std::string digit_string(Rng& rng) {
  int len = rng.uniform_int(2, 7);
  std::string s;
  for (int i = 0; i < len; ++i) s += static_cast<char>('0' + rng.uniform_int(0, 9));
  return s;
}

constexpr char kSubstitutionAlphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789";
constexpr int kSubstitutionAlphabetSize = 36;

struct ClassProfile {
  std::vector<std::string> vocab;   // class-owned content tokens
  std::vector<double> prototype;    // visual layout prototype in [0,1]^V
  std::vector<double> back_prototype;  // only for two-sided classes
  bool two_sided = false;
};

struct Vocabulary {
  std::vector<ClassProfile> classes;
  std::vector<std::string> filler;
  std::vector<double> annex_stamp;  // visual component blended into attached heads
};

Vocabulary build_vocabulary(const GeneratorConfig& config, Rng& rng) {
  Vocabulary vocab;
  std::set<std::string> used;
  auto fresh_word = [&] {
    std::string w = pseudoword(rng);
    while (used.count(w)) w = pseudoword(rng);
    used.insert(w);
    return w;
  };
  std::vector<int> two_sided = two_sided_classes(config.n_classes);
  vocab.classes.resize(static_cast<size_t>(config.n_classes));
  for (int c = 0; c < config.n_classes; ++c) {
    ClassProfile& profile = vocab.classes[static_cast<size_t>(c)];
    for (int i = 0; i < 20; ++i) profile.vocab.push_back(fresh_word());
    profile.prototype.resize(static_cast<size_t>(config.visual_dim));
    for (double& v : profile.prototype) v = rng.uniform();
    profile.two_sided = std::find(two_sided.begin(), two_sided.end(), c) != two_sided.end();
    if (profile.two_sided) {
      profile.back_prototype.resize(static_cast<size_t>(config.visual_dim));
      for (double& v : profile.back_prototype) v = rng.uniform();
    }
  }
  for (int i = 0; i < 120; ++i) vocab.filler.push_back(fresh_word());
  vocab.annex_stamp.resize(static_cast<size_t>(config.visual_dim));
  for (double& v : vocab.annex_stamp) v = rng.uniform();
  return vocab;
}

std::vector<double> jitter(const std::vector<double>& prototype, Rng& rng) {
  std::vector<double> v(prototype.size());
  for (size_t i = 0; i < v.size(); ++i)
    v[i] = std::clamp(prototype[i] + rng.uniform(-0.08, 0.08), 0.0, 1.0);
  return v;
}

std::vector<double> near_zero_visual(int dim, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(dim));
  for (double& x : v) x = rng.uniform(0.0, 0.02);
  return v;
}

/// Clean (pre-noise) content of one page of a content segment.
std::vector<std::string> content_tokens(const ClassProfile& profile,
                                        const std::vector<std::string>& filler, Rng& rng) {
  int n = rng.uniform_int(30, 120);
  std::vector<std::string> tokens;
  tokens.reserve(static_cast<size_t>(n) + 6);
  for (int i = 0; i < n; ++i) {
    if (rng.bernoulli(0.55))
      tokens.push_back(profile.vocab[static_cast<size_t>(rng.uniform_int(0, 19))]);
    else
      tokens.push_back(filler[static_cast<size_t>(
          rng.uniform_int(0, static_cast<int>(filler.size()) - 1))]);
  }
  int amounts = rng.uniform_int(2, 6);
  for (int i = 0; i < amounts; ++i) tokens.push_back(digit_string(rng));
  return tokens;
}

std::vector<std::string> sparse_filler_tokens(const std::vector<std::string>& filler, int lo,
                                              int hi, Rng& rng) {
  int n = rng.uniform_int(lo, hi);
  std::vector<std::string> tokens;
  for (int i = 0; i < n; ++i)
    tokens.push_back(
        filler[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(filler.size()) - 1))]);
  return tokens;
}

struct CleanPage {
  std::vector<std::string> tokens;
  std::vector<double> visual_base;  // layout before per-scan jitter
  bool is_back = false;
  bool is_empty = false;
};

struct Segment {
  int class_id = 0;
  std::vector<CleanPage> pages;  // pre-noise content, kept for later copies
};

/// A duplicate marker stamped several times across the page, the way headers
/// and footers repeat it; gives the token channel enough mass to pool.
void stamp_marker(std::vector<std::string>& tokens, const std::string& marker, Rng& rng) {
  tokens.insert(tokens.begin(), marker);
  for (int i = 0; i < 2; ++i) {
    int pos = rng.uniform_int(1, static_cast<int>(tokens.size()));
    tokens.insert(tokens.begin() + pos, marker);
  }
}

/// Builds the clean page contents of a fresh segment of `length` pages.
/// Attached segments carry annex cues, textual and visual, on their head
/// page, the way a real enclosure references its parent document.
Segment make_segment(int class_id, int length, bool attached, const Vocabulary& vocab,
                     const GeneratorConfig& config, Rng& rng) {
  const ClassProfile& profile = vocab.classes[static_cast<size_t>(class_id)];
  Segment seg;
  seg.class_id = class_id;
  for (int j = 1; j <= length; ++j) {
    CleanPage page;
    if (j == 1) {
      page.tokens = content_tokens(profile, vocab.filler, rng);
      if (attached) {
        std::vector<std::string> cues = {"ANNEX", "ENCL", "REF"};
        page.tokens.insert(page.tokens.begin(), cues.begin(), cues.end());
        page.visual_base.resize(profile.prototype.size());
        for (size_t v = 0; v < page.visual_base.size(); ++v)
          page.visual_base[v] = 0.6 * profile.prototype[v] + 0.4 * vocab.annex_stamp[v];
      } else {
        page.visual_base = profile.prototype;
      }
      stamp_marker(page.tokens, "ORIGINAL", rng);
    } else if (rng.bernoulli(config.p_empty)) {
      page.is_empty = true;
      page.tokens = sparse_filler_tokens(vocab.filler, 0, 2, rng);
    } else if (profile.two_sided && j % 2 == 0) {
      page.is_back = true;
      page.tokens = sparse_filler_tokens(vocab.filler, 1, 5, rng);
      page.visual_base = profile.back_prototype;
    } else {
      page.tokens = content_tokens(profile, vocab.filler, rng);
      std::vector<std::string> numbering = {"page", std::to_string(j), "of",
                                            std::to_string(length)};
      page.tokens.insert(page.tokens.begin(), numbering.begin(), numbering.end());
      page.visual_base = profile.prototype;
    }
    seg.pages.push_back(std::move(page));
  }
  return seg;
}

/// Duplicate of `source` truncated to `length` pages: same clean text and
/// visual bases (a photocopy), with the duplicate marker flipped.
Segment make_copy_segment(const Segment& source, int length) {
  Segment seg;
  seg.class_id = source.class_id;
  for (int j = 0; j < length; ++j) seg.pages.push_back(source.pages[static_cast<size_t>(j)]);
  for (std::string& t : seg.pages[0].tokens)
    if (t == "ORIGINAL") t = "COPY";
  return seg;
}

}  // namespace

std::vector<int> two_sided_classes(int n_classes) {
  if (n_classes < 2) return {};
  return {n_classes - 2, n_classes - 1};
}

void validate_config(const GeneratorConfig& config) {
  if (config.n_documents < 0) throw std::invalid_argument("n_documents must be >= 0");
  if (config.stream_length_min < 1 || config.stream_length_min > config.stream_length_max)
    throw std::invalid_argument("stream length bounds must satisfy 1 <= min <= max");
  if (config.stream_length_std < 0.0) throw std::invalid_argument("stream_length_std must be >= 0");
  bool any_positive = false;
  for (const auto& [length, weight] : config.subdoc_length_weights) {
    if (length < 1) throw std::invalid_argument("subdocument lengths must be >= 1");
    if (weight < 0.0) throw std::invalid_argument("subdocument weights must be >= 0");
    any_positive = any_positive || weight > 0.0;
  }
  if (!any_positive) throw std::invalid_argument("at least one subdocument weight must be > 0");
  for (double p : {config.p_copy, config.p_atch, config.p_empty, config.ocr_char_error_rate})
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("probabilities must lie in [0,1]");
  if (config.n_classes < 1) throw std::invalid_argument("n_classes must be >= 1");
  if (config.visual_dim < 1) throw std::invalid_argument("visual_dim must be >= 1");
}

std::vector<std::string> apply_ocr_noise(const std::vector<std::string>& tokens, double rate,
                                         bool shuffle_blocks, Rng& rng) {
  if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("rate must lie in [0,1]");
  std::vector<std::string> noised = tokens;
  if (rate > 0.0) {
    for (std::string& token : noised)
      for (char& c : token) {
        if (!std::isalnum(static_cast<unsigned char>(c))) continue;
        if (!rng.bernoulli(rate)) continue;
        char replacement = c;
        while (replacement == c)
          replacement = kSubstitutionAlphabet[rng.uniform_int(0, kSubstitutionAlphabetSize - 1)];
        c = replacement;
      }
  }
  if (shuffle_blocks && noised.size() >= 2) {
    int n_blocks = rng.uniform_int(2, std::min<int>(6, static_cast<int>(noised.size())));
    // n_blocks - 1 distinct cut positions in [1, size).
    std::set<int> cuts;
    while (static_cast<int>(cuts.size()) < n_blocks - 1)
      cuts.insert(rng.uniform_int(1, static_cast<int>(noised.size()) - 1));
    std::vector<std::pair<int, int>> blocks;
    int start = 0;
    for (int cut : cuts) {
      blocks.push_back({start, cut});
      start = cut;
    }
    blocks.push_back({start, static_cast<int>(noised.size())});
    rng.shuffle(blocks);
    std::vector<std::string> shuffled;
    shuffled.reserve(noised.size());
    for (auto [lo, hi] : blocks)
      for (int i = lo; i < hi; ++i) shuffled.push_back(std::move(noised[static_cast<size_t>(i)]));
    noised = std::move(shuffled);
  }
  return noised;
}

std::vector<AnnotatedDocument> generate_corpus(const GeneratorConfig& config) {
  validate_config(config);
  Rng rng(config.seed);
  Vocabulary vocab = build_vocabulary(config, rng);

  std::vector<int> seg_lengths;
  std::vector<double> seg_weights;
  for (const auto& [length, weight] : config.subdoc_length_weights) {
    seg_lengths.push_back(length);
    seg_weights.push_back(weight);
  }

  std::vector<AnnotatedDocument> corpus;
  corpus.reserve(static_cast<size_t>(config.n_documents));
  for (int doc_idx = 0; doc_idx < config.n_documents; ++doc_idx) {
    AnnotatedDocument doc;
    {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "doc-%04d", doc_idx);
      doc.id = buf;
    }
    int length = static_cast<int>(std::lround(
        rng.normal(config.stream_length_mean, config.stream_length_std)));
    length = std::clamp(length, config.stream_length_min, config.stream_length_max);
    doc.tree.n_pages = length;

    // Stack of open segment head pages (1-based); attaching to an ancestor
    // pops everything above it, which keeps the tree projective. The segment
    // emitted last is always the top of the stack.
    std::vector<int> open_heads;
    std::vector<Segment> segments;
    int pages_done = 0;
    while (pages_done < length) {
      int head_page = pages_done + 1;
      int remaining = length - pages_done;

      bool as_copy = !segments.empty() && rng.bernoulli(config.p_copy);
      Segment seg;
      Arc head_arc;
      if (as_copy) {
        const Segment& source = segments.back();
        int seg_len = std::min(static_cast<int>(source.pages.size()), remaining);
        seg = make_copy_segment(source, seg_len);
        head_arc = {open_heads.back(), ArcLabel::Copy, head_page};
      } else {
        int seg_len = std::min(seg_lengths[rng.discrete(seg_weights)], remaining);
        int class_id = rng.uniform_int(0, config.n_classes - 1);
        if (!open_heads.empty() && rng.bernoulli(config.p_atch)) {
          // Nearest enclosing open segment; the annex cue on the head page is
          // what makes the attachment recoverable from page content.
          seg = make_segment(class_id, seg_len, true, vocab, config, rng);
          head_arc = {open_heads.back(), ArcLabel::Atch, head_page};
        } else {
          open_heads.clear();
          seg = make_segment(class_id, seg_len, false, vocab, config, rng);
          head_arc = {0, ArcLabel::Root, head_page};
        }
      }
      segments.push_back(std::move(seg));
      const Segment& stored = segments.back();
      int seg_len = static_cast<int>(stored.pages.size());
      open_heads.push_back(head_page);

      for (int j = 0; j < seg_len; ++j) {
        const CleanPage& clean = stored.pages[static_cast<size_t>(j)];
        int page_no = head_page + j;
        Page page;
        page.index = page_no;
        page.tokens =
            apply_ocr_noise(clean.tokens, config.ocr_char_error_rate, config.ocr_block_shuffle, rng);
        page.visual =
            clean.is_empty ? near_zero_visual(config.visual_dim, rng) : jitter(clean.visual_base, rng);

        if (j == 0) {
          doc.tree.arcs.push_back(head_arc);
          doc.seg_tags.push_back(SegTag::Head);
        } else if (clean.is_empty) {
          doc.tree.arcs.push_back({page_no - 1, ArcLabel::Next, page_no});
          doc.seg_tags.push_back(SegTag::Empty);
        } else if (clean.is_back) {
          doc.tree.arcs.push_back({page_no - 1, ArcLabel::Back, page_no});
          doc.seg_tags.push_back(SegTag::Inter);
        } else {
          doc.tree.arcs.push_back({page_no - 1, ArcLabel::Next, page_no});
          doc.seg_tags.push_back(SegTag::Inter);
        }
        doc.classes.push_back(stored.class_id);
        doc.pages.push_back(std::move(page));
      }
      pages_done += seg_len;
    }
    corpus.push_back(std::move(doc));
  }
  return corpus;
}

std::vector<std::vector<int>> split_folds(int n_documents, int k, uint64_t seed) {
  if (k < 2) throw std::invalid_argument("split_folds: k must be >= 2");
  if (k > n_documents)
    throw std::invalid_argument("split_folds: k exceeds the number of documents");
  std::vector<int> order(static_cast<size_t>(n_documents));
  for (int i = 0; i < n_documents; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng(derive_seed(seed, static_cast<uint64_t>(k)));
  rng.shuffle(order);
  std::vector<std::vector<int>> folds(static_cast<size_t>(k));
  int base = n_documents / k, extra = n_documents % k;
  size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    int size = base + (f < extra ? 1 : 0);
    for (int i = 0; i < size; ++i) folds[static_cast<size_t>(f)].push_back(order[pos++]);
  }
  return folds;
}

}  // namespace pagedep
