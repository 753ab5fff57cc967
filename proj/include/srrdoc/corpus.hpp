#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srrdoc/core.hpp"

namespace srrdoc {

enum class LayoutTemplate {
  SingleColumn,
  DoubleColumn,
  FigureWithCaption,
  TableReport,
  ExamPaper,
  Newspaper3Col,
};

std::string template_name(LayoutTemplate t);
std::optional<LayoutTemplate> template_from_name(const std::string& s);
std::vector<LayoutTemplate> all_templates();

struct CaptionLink {
  std::string caption_id;
  std::string target_id;  // empty when unlinked
  bool linked = false;
};

/// A generated page plus its ground truth: reading ranks aligned with
/// page.blocks, and caption links.
struct CorpusRecord {
  Page page;
  std::vector<int> gt_order;  // gt_order[i] = reading rank of page.blocks[i]
  std::vector<CaptionLink> links;
};

using Corpus = std::vector<CorpusRecord>;

// Deterministic for (tmpl, seed). Blocks are non-overlapping, inside the
// page, and every block carries at least one line whose ranks follow the
// ground-truth block order.
CorpusRecord synthesize_page(LayoutTemplate tmpl, uint64_t seed);

// count pages cycling through all templates (or a single one).
Corpus synthesize_corpus(const std::vector<LayoutTemplate>& templates, int count,
                         uint64_t seed);

struct CellMerge {
  int row = 0, col = 0, rowspan = 1, colspan = 1;
};

struct RenderedTable {
  std::string html;
  // grid[r][c] = text of the covering cell; spanned cells repeat the text.
  std::vector<std::vector<std::string>> grid;
};

// ASCII alphanumerics plus a slice of the CJK unified ideographs.
const std::vector<uint32_t>& default_fill_alphabet();

RenderedTable render_table_html(int rows, int cols, const std::vector<CellMerge>& merges,
                                const std::vector<uint32_t>& fill_alphabet, uint64_t seed);

// Tag-balance check for generated table HTML.
bool table_html_well_formed(const std::string& html);

// Drops the smaller of any pair with intersection-over-smaller-area >= 0.95.
std::vector<Block> remove_nested_boxes(const std::vector<Block>& blocks);

// Keep iff union block area / page area >= threshold.
bool coverage_filter(const Page& page, double threshold = 0.35);
double page_coverage(const Page& page);

// Links each caption to the nearest figure/table by center distance,
// preferring candidates directly above the caption.
std::vector<CaptionLink> link_captions(const std::vector<Block>& blocks);

void save_jsonl(const Corpus& corpus, const std::string& path);
Corpus load_jsonl(const std::string& path);

}  // namespace srrdoc
