#include "srrdoc/structure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "srrdoc/corpus.hpp"

namespace srrdoc {

void NoiseConfig::validate() const {
  if (split_probability < 0 || split_probability > 1)
    throw InvalidInput("NoiseConfig: split_probability out of range");
  if (boundary_jitter < 0) throw InvalidInput("NoiseConfig: negative jitter");
}

std::vector<Detection> oracle_detect(const Page& page) {
  std::vector<Detection> out;
  out.reserve(page.blocks.size());
  for (const auto& b : page.blocks) {
    if (!b.content)
      throw MissingGroundTruth("oracle_detect: block " + b.id + " of page " + page.id +
                               " has no ground-truth content");
    out.push_back({b.bbox, b.category, 1.0, b.id, false});
  }
  return out;
}

std::vector<int> select_topk_queries(const std::vector<double>& scores, int k) {
  if (k < 0) throw InvalidInput("select_topk_queries: negative K");
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  const size_t take = std::min<size_t>(k, idx.size());
  idx.resize(take);
  return idx;
}

namespace {

struct Interval {
  double lo, hi;
};

// Groups rect extents along one axis, splitting at gaps >= threshold.
// Returns per-rect group ids; group count of 1 means no split.
int project_split(const std::vector<BBox>& rects, bool y_axis, double threshold,
                  std::vector<int>& group_of) {
  const size_t n = rects.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto lo = [&](int i) { return y_axis ? rects[i].y1 : rects[i].x1; };
  auto hi = [&](int i) { return y_axis ? rects[i].y2 : rects[i].x2; };
  std::sort(order.begin(), order.end(), [&](int a, int b) { return lo(a) < lo(b); });

  group_of.assign(n, 0);
  int group = 0;
  double reach = hi(order[0]);
  group_of[order[0]] = 0;
  for (size_t k = 1; k < n; ++k) {
    const int i = order[k];
    if (lo(i) - reach >= threshold) ++group;
    group_of[i] = group;
    reach = std::max(reach, hi(i));
  }
  return group + 1;
}

BBox tight_bound(const std::vector<BBox>& rects) {
  BBox b = rects[0];
  for (const auto& r : rects) {
    b.x1 = std::min(b.x1, r.x1);
    b.y1 = std::min(b.y1, r.y1);
    b.x2 = std::max(b.x2, r.x2);
    b.y2 = std::max(b.y2, r.y2);
  }
  return b;
}

void xycut_recurse(const std::vector<BBox>& rects, bool y_first, double thr_x,
                   double thr_y, std::vector<BBox>& leaves) {
  if (rects.empty()) return;
  if (rects.size() == 1) {
    leaves.push_back(rects[0]);
    return;
  }
  for (int attempt = 0; attempt < 2; ++attempt) {
    const bool y_axis = (attempt == 0) ? y_first : !y_first;
    std::vector<int> group_of;
    const int groups =
        project_split(rects, y_axis, y_axis ? thr_y : thr_x, group_of);
    if (groups > 1) {
      std::vector<std::vector<BBox>> parts(groups);
      for (size_t i = 0; i < rects.size(); ++i) parts[group_of[i]].push_back(rects[i]);
      for (auto& part : parts) xycut_recurse(part, !y_axis, thr_x, thr_y, leaves);
      return;
    }
  }
  leaves.push_back(tight_bound(rects));
}

}  // namespace

std::vector<Detection> xycut_detect(const Page& page, double gap_threshold) {
  std::vector<BBox> rects;
  if (!page.lines.empty()) {
    for (const auto& l : page.lines) rects.push_back(l.bbox);
  } else {
    for (const auto& b : page.blocks) rects.push_back(b.bbox);
  }
  std::vector<BBox> leaves;
  const double thr_x = gap_threshold * page.width / 1000.0;
  const double thr_y = gap_threshold * page.height / 1000.0;
  xycut_recurse(rects, /*y_first=*/true, thr_x, thr_y, leaves);
  // Deterministic output order: top-to-bottom, then left-to-right.
  std::sort(leaves.begin(), leaves.end(), [](const BBox& a, const BBox& b) {
    return a.y1 != b.y1 ? a.y1 < b.y1 : a.x1 < b.x1;
  });
  std::vector<Detection> out;
  for (size_t i = 0; i < leaves.size(); ++i)
    out.push_back({leaves[i], Category::Text, 1.0, "xy" + std::to_string(i), false});
  return out;
}

std::vector<Detection> perturb_detections(const std::vector<Detection>& dets,
                                          const NoiseConfig& cfg, const Page& page) {
  cfg.validate();
  std::vector<Detection> out;
  for (size_t i = 0; i < dets.size(); ++i) {
    const Detection& d = dets[i];
    // Independent substream per detection: jitter draws never shift the
    // split decisions of later detections.
    std::mt19937_64 rng(cfg.seed ^ (0x9E3779B97F4A7C15ull * (i + 1)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const bool split = d.category == Category::Text && unit(rng) < cfg.split_probability;
    if (!split) {
      out.push_back(d);
      continue;
    }
    std::vector<Line> lines;
    for (const auto& l : page.lines)
      if (d.bbox.contains_point(l.bbox.cx(), l.bbox.cy())) lines.push_back(l);
    if (lines.empty()) {
      out.push_back(d);
      continue;
    }
    std::sort(lines.begin(), lines.end(),
              [](const Line& a, const Line& b) { return a.order < b.order; });
    std::uniform_real_distribution<double> jit(-cfg.boundary_jitter, cfg.boundary_jitter);
    int k = 0;
    for (const auto& l : lines) {
      BBox b = l.bbox;
      if (cfg.boundary_jitter > 0) {
        b.x1 = std::clamp(b.x1 + jit(rng), 0.0, page.width);
        b.y1 = std::clamp(b.y1 + jit(rng), 0.0, page.height);
        b.x2 = std::clamp(b.x2 + jit(rng), 0.0, page.width);
        b.y2 = std::clamp(b.y2 + jit(rng), 0.0, page.height);
        if (!(b.x2 > b.x1) || !(b.y2 > b.y1)) b = l.bbox;  // collapsed, keep original
      }
      out.push_back({b, Category::Text, d.score,
                     d.source_id + "#L" + std::to_string(k++), true});
    }
  }
  return out;
}

ExternalDetector::ExternalDetector(const std::string& jsonl_path) {
  const Corpus corpus = load_jsonl(jsonl_path);
  for (const auto& rec : corpus) {
    std::vector<Detection> dets;
    for (const auto& b : rec.page.blocks)
      dets.push_back({b.bbox, b.category, 1.0, b.id, false});
    per_page_.push_back(std::move(dets));
  }
}

std::vector<Detection> ExternalDetector::detect(const Page& page) const {
  // Pages are matched by index: "page-<n>".
  size_t idx = per_page_.size();
  const auto dash = page.id.rfind('-');
  if (dash != std::string::npos) {
    try {
      idx = std::stoul(page.id.substr(dash + 1));
    } catch (...) {
    }
  }
  if (idx >= per_page_.size())
    throw StageError(page.id, "external detector has no detections for this page");
  return per_page_[idx];
}

std::unique_ptr<Detector> make_detector(const std::string& kind,
                                        const std::string& external_path) {
  if (kind == "oracle") return std::make_unique<OracleDetector>();
  if (kind == "xycut") return std::make_unique<XYCutDetector>();
  if (kind == "external") {
    if (external_path.empty())
      throw InvalidInput("external detector requires a detections file");
    return std::make_unique<ExternalDetector>(external_path);
  }
  throw InvalidInput("unknown detector: " + kind);
}

}  // namespace srrdoc
