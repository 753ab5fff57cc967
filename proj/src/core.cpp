#include "srrdoc/core.hpp"

#include <algorithm>
#include <cmath>

namespace srrdoc {

bool BBox::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
         x1 >= 0 && y1 >= 0 && x2 > x1 && y2 > y1;
}

double intersection_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0 || h <= 0) return 0.0;
  return w * h;
}

double iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::string category_name(Category c) {
  switch (c) {
    case Category::Text: return "text";
    case Category::Title: return "title";
    case Category::Table: return "table";
    case Category::Figure: return "figure";
    case Category::Formula: return "formula";
    case Category::Caption: return "caption";
    case Category::Code: return "code";
    case Category::PageHeader: return "page_header";
    case Category::PageFooter: return "page_footer";
  }
  return "text";
}

std::optional<Category> category_from_name(const std::string& s) {
  static const std::pair<const char*, Category> table[] = {
      {"text", Category::Text},       {"title", Category::Title},
      {"table", Category::Table},     {"figure", Category::Figure},
      {"formula", Category::Formula}, {"caption", Category::Caption},
      {"code", Category::Code},       {"page_header", Category::PageHeader},
      {"page_footer", Category::PageFooter},
  };
  for (const auto& [name, cat] : table)
    if (s == name) return cat;
  return std::nullopt;
}

BBox normalize_bbox(const BBox& bbox, double page_w, double page_h) {
  if (!(page_w > 0) || !(page_h > 0))
    throw InvalidInput("normalize_bbox: degenerate page dimensions");
  if (!bbox.valid()) throw InvalidInput("normalize_bbox: invalid bbox");
  auto grid = [](double c, double dim) {
    double g = std::round(c / dim * 1000.0);
    return std::clamp(g, 0.0, 1000.0);
  };
  BBox out{grid(bbox.x1, page_w), grid(bbox.y1, page_h), grid(bbox.x2, page_w),
           grid(bbox.y2, page_h)};
  // Keep positive extent for hairline boxes that round to a single cell.
  if (out.x2 <= out.x1) {
    if (out.x1 >= 1000.0) out.x1 = 999.0;
    out.x2 = out.x1 + 1.0;
  }
  if (out.y2 <= out.y1) {
    if (out.y1 >= 1000.0) out.y1 = 999.0;
    out.y2 = out.y1 + 1.0;
  }
  return out;
}

CropRecord crop_region(const Page& page, const BBox& bbox) {
  if (!bbox.valid()) throw InvalidInput("crop_region: invalid bbox");
  CropRecord rec;
  rec.region = bbox;
  if (bbox.x1 < 0 || bbox.y1 < 0 || bbox.x2 > page.width || bbox.y2 > page.height) {
    rec.clipped = true;
    rec.region.x1 = std::max(0.0, bbox.x1);
    rec.region.y1 = std::max(0.0, bbox.y1);
    rec.region.x2 = std::min(page.width, bbox.x2);
    rec.region.y2 = std::min(page.height, bbox.y2);
  }
  for (const auto& b : page.blocks) {
    const double inter = intersection_area(rec.region, b.bbox);
    if (b.bbox.area() > 0 && inter / b.bbox.area() >= 0.5) rec.blocks.push_back(b);
  }
  for (const auto& l : page.lines) {
    if (rec.region.contains_point(l.bbox.cx(), l.bbox.cy())) rec.lines.push_back(l);
  }
  std::sort(rec.lines.begin(), rec.lines.end(),
            [](const Line& a, const Line& b) { return a.order < b.order; });
  return rec;
}

bool is_permutation_of_n(const std::vector<int>& order) {
  std::vector<char> seen(order.size(), 0);
  for (int r : order) {
    if (r < 0 || r >= static_cast<int>(order.size()) || seen[r]) return false;
    seen[r] = 1;
  }
  return true;
}

static std::string render_block(const Block& block, const std::string& content,
                                const std::string& caption_after) {
  switch (block.category) {
    case Category::Title:
      return "# " + content;
    case Category::Table:
      return content;  // raw HTML
    case Category::Formula:
      return "$$" + content + "$$";
    case Category::Figure:
      return caption_after.empty() ? std::string("![figure]")
                                   : "![figure: " + caption_after + "]";
    default:
      return content;
  }
}

ParsedDocument assemble_document(const std::vector<Block>& blocks,
                                 const std::vector<std::string>& contents,
                                 const std::vector<int>& order) {
  if (blocks.size() != contents.size() || blocks.size() != order.size())
    throw InvalidInput("assemble_document: length mismatch");
  if (!is_permutation_of_n(order))
    throw InvalidInput("assemble_document: order is not a permutation");

  std::vector<int> by_rank(order.size());
  for (size_t i = 0; i < order.size(); ++i) by_rank[order[i]] = static_cast<int>(i);

  ParsedDocument doc;
  std::string md;
  for (size_t r = 0; r < by_rank.size(); ++r) {
    const int i = by_rank[r];
    doc.ordered.emplace_back(blocks[i], contents[i]);
    std::string caption_after;
    if (blocks[i].category == Category::Figure && r + 1 < by_rank.size()) {
      const int j = by_rank[r + 1];
      if (blocks[j].category == Category::Caption) caption_after = contents[j];
    }
    if (r > 0) md += "\n\n";
    md += render_block(blocks[i], contents[i], caption_after);
  }
  md += "\n";
  doc.markdown = std::move(md);
  return doc;
}

}  // namespace srrdoc
