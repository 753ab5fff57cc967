#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace srrdoc {

/// Thrown on precondition violations (bad arguments, malformed configs).
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A pipeline stage failure that carries the page it happened on.
struct StageError : std::runtime_error {
  std::string page_id;
  StageError(std::string page, const std::string& what)
      : std::runtime_error(what), page_id(std::move(page)) {}
};

struct MissingGroundTruth : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Axis-aligned box in pixel coordinates, origin top-left.
struct BBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }

  bool valid() const;
  bool contains_point(double px, double py) const {
    return px >= x1 && px < x2 && py >= y1 && py < y2;
  }
};

double intersection_area(const BBox& a, const BBox& b);
double iou(const BBox& a, const BBox& b);

enum class Category {
  Text,
  Title,
  Table,
  Figure,
  Formula,
  Caption,
  Code,
  PageHeader,
  PageFooter,
};

inline constexpr int kNumCategories = 9;

std::string category_name(Category c);                 // lowercase
std::optional<Category> category_from_name(const std::string& s);

/// A detected or ground-truth layout element; the pipeline's unit of work.
struct Block {
  std::string id;
  BBox bbox;
  Category category = Category::Text;
  std::optional<std::string> content;
};

/// A text line with its ground-truth reading rank, used for auto-labeling
/// and as occupancy evidence for the projection detector.
struct Line {
  BBox bbox;
  int order = 0;
  std::string text;
};

struct Page {
  std::string id;
  double width = 0, height = 0;
  std::vector<Block> blocks;
  std::vector<Line> lines;
  std::string image_ref;  // optional external raster
};

/// Cropped sub-record of a page. Pages here are annotation records, so a
/// crop carries the blocks and lines that fall inside the region.
struct CropRecord {
  BBox region;            // clipped to page bounds
  bool clipped = false;   // requested bbox exceeded the page
  bool perturbed = false; // region came from a noise-injected detection
  std::vector<Block> blocks;  // blocks mostly inside the region
  std::vector<Line> lines;    // lines whose center lies inside

  double width() const { return region.width(); }
  double height() const { return region.height(); }
  // Page coordinates of a crop-local point; (0,0) maps to (x1,y1).
  std::pair<double, double> page_point(double lx, double ly) const {
    return {region.x1 + lx, region.y1 + ly};
  }
};

struct ParsedDocument {
  // Blocks with their recognized content, already in reading order.
  std::vector<std::pair<Block, std::string>> ordered;
  std::string markdown;
};

// Maps a box to the 0..1000 integer grid. Coordinates round to
// round(c / page_dim * 1000) and clamp to [0,1000]; rounding that collapses
// a box to zero extent is widened by one grid cell.
BBox normalize_bbox(const BBox& bbox, double page_w, double page_h);

CropRecord crop_region(const Page& page, const BBox& bbox);

// `order[i]` is the reading rank of blocks[i]. Blocks are rendered in rank
// order: Title -> "#" heading, Table -> raw HTML, Formula -> $$...$$,
// Figure -> placeholder (with the text of an immediately following caption),
// everything else -> plain paragraph. Paragraphs join with blank lines.
ParsedDocument assemble_document(const std::vector<Block>& blocks,
                                 const std::vector<std::string>& contents,
                                 const std::vector<int>& order);

bool is_permutation_of_n(const std::vector<int>& order);

}  // namespace srrdoc
