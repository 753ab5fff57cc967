#include "srrdoc/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "srrdoc/text.hpp"

namespace srrdoc {

using nlohmann::json;

std::string template_name(LayoutTemplate t) {
  switch (t) {
    case LayoutTemplate::SingleColumn: return "single_column";
    case LayoutTemplate::DoubleColumn: return "double_column";
    case LayoutTemplate::FigureWithCaption: return "figure_with_caption";
    case LayoutTemplate::TableReport: return "table_report";
    case LayoutTemplate::ExamPaper: return "exam_paper";
    case LayoutTemplate::Newspaper3Col: return "newspaper_3col";
  }
  return "single_column";
}

std::optional<LayoutTemplate> template_from_name(const std::string& s) {
  for (auto t : all_templates())
    if (template_name(t) == s) return t;
  return std::nullopt;
}

std::vector<LayoutTemplate> all_templates() {
  return {LayoutTemplate::SingleColumn,      LayoutTemplate::DoubleColumn,
          LayoutTemplate::FigureWithCaption, LayoutTemplate::TableReport,
          LayoutTemplate::ExamPaper,         LayoutTemplate::Newspaper3Col};
}

// ---------------------------------------------------------------------------
// seeded content generation

namespace {

constexpr double kLineHeight = 22.0;

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(uint64_t seed) : rng(seed) {}

  int uniform_int(int lo, int hi) {  // inclusive
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  }
  bool chance(double p) { return uniform(0.0, 1.0) < p; }

  std::string word() {
    static const char* syl[] = {"ba", "den", "for", "gra", "hem", "jin", "kol", "lus",
                                "mar", "nep", "oro", "pex", "qua", "rin", "sol", "tam",
                                "urn", "vex", "wil", "xen", "yor", "zeb", "cal", "dru"};
    const int n = uniform_int(1, 3);
    std::string w;
    for (int i = 0; i < n; ++i) w += syl[uniform_int(0, 23)];
    return w;
  }

  std::string words(int n, bool capitalize = false) {
    std::string s;
    for (int i = 0; i < n; ++i) {
      if (i) s += ' ';
      s += word();
    }
    if (capitalize && !s.empty()) s[0] = static_cast<char>(std::toupper(s[0]));
    return s;
  }

  std::string sentence(int n) { return words(n, true) + "."; }

  char letter() { return static_cast<char>('a' + uniform_int(0, 25)); }
  char digit() { return static_cast<char>('0' + uniform_int(0, 9)); }

  std::string formula(int depth = 0) {
    auto atom = [&]() -> std::string {
      return chance(0.7) ? std::string(1, letter()) : std::string(1, digit());
    };
    auto term = [&](auto&& self, int d) -> std::string {
      if (d >= 2) return atom();
      switch (uniform_int(0, 5)) {
        case 0: return "\\frac{" + self(self, d + 1) + "}{" + self(self, d + 1) + "}";
        case 1: return "\\sum_{" + atom() + "=0}^{" + atom() + "} " + self(self, d + 1);
        case 2: return "\\sqrt{" + self(self, d + 1) + "}";
        case 3: return atom() + "^{" + atom() + "}";
        case 4: return atom() + "_{" + atom() + "}";
        default: return atom();
      }
    };
    std::string s = term(term, depth);
    const int extra = uniform_int(0, 2);
    for (int i = 0; i < extra; ++i) {
      s += (chance(0.5) ? " + " : " - ");
      s += term(term, depth + 1);
    }
    if (chance(0.5)) s += " = " + atom();
    return s;
  }

  std::string code_line() {
    switch (uniform_int(0, 3)) {
      case 0: return "for " + word() + " in " + word() + ":";
      case 1: return word() + " = " + word() + "(" + word() + ")";
      case 2: return "return " + word();
      default: return "if " + word() + " > " + std::to_string(uniform_int(0, 99)) + ":";
    }
  }
};

// A block staged in ground-truth rank order; ranks are assigned by push order.
struct PendingBlock {
  Category cat = Category::Text;
  BBox bbox;
  std::string content;
  std::vector<std::pair<BBox, std::string>> lines;
  int caption_target = -1;  // pending index of the figure/table this captions
};

struct PageBuilder {
  double w = 0, h = 0;
  std::vector<PendingBlock> blocks;

  int push(PendingBlock b) {
    blocks.push_back(std::move(b));
    return static_cast<int>(blocks.size()) - 1;
  }
};

double snap(double v) { return std::round(v); }

// Lines tile the block vertically at full width; the last line may be short.
PendingBlock text_like_block(Gen& g, Category cat, double x, double y, double width,
                             int n_lines, double last_line_factor) {
  PendingBlock b;
  b.cat = cat;
  b.bbox = {snap(x), snap(y), snap(x + width), snap(y + n_lines * kLineHeight)};
  std::vector<std::string> parts;
  for (int i = 0; i < n_lines; ++i) {
    const bool last = (i == n_lines - 1);
    const double lw = last ? width * last_line_factor : width;
    BBox lb{b.bbox.x1, snap(b.bbox.y1 + i * kLineHeight), snap(b.bbox.x1 + lw),
            snap(b.bbox.y1 + (i + 1) * kLineHeight)};
    std::string text;
    switch (cat) {
      case Category::Code: text = g.code_line(); break;
      case Category::Title: text = g.words(g.uniform_int(3, 6), true); break;
      default: text = g.sentence(g.uniform_int(5, 9)); break;
    }
    b.lines.emplace_back(lb, text);
    parts.push_back(text);
  }
  std::string sep = (cat == Category::Code) ? "\n" : " ";
  std::string content;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) content += sep;
    content += parts[i];
  }
  b.content = content;
  return b;
}

PendingBlock single_line_block(Gen& g, Category cat, double x, double y, double width,
                               const std::string& text) {
  PendingBlock b;
  b.cat = cat;
  b.bbox = {snap(x), snap(y), snap(x + width), snap(y + kLineHeight)};
  b.content = text;
  b.lines.emplace_back(b.bbox, text);
  return b;
}

PendingBlock opaque_block(Category cat, double x, double y, double width, double height,
                          std::string content, const std::string& line_text) {
  PendingBlock b;
  b.cat = cat;
  b.bbox = {snap(x), snap(y), snap(x + width), snap(y + height)};
  b.content = std::move(content);
  b.lines.emplace_back(b.bbox, line_text);
  return b;
}

PendingBlock make_formula(Gen& g, double x, double y, double width) {
  const std::string f = g.formula();
  const double h = snap(g.uniform(44, 64));
  return opaque_block(Category::Formula, x, y, width, h, f, f);
}

PendingBlock make_table(Gen& g, double x, double y, double width) {
  const int rows = g.uniform_int(2, 4);
  const int cols = g.uniform_int(2, 4);
  std::vector<CellMerge> merges;
  if (g.chance(0.4) && cols >= 2) {
    merges.push_back({g.uniform_int(0, rows - 1), g.uniform_int(0, cols - 2), 1, 2});
  }
  const uint64_t tseed = g.rng();
  RenderedTable t = render_table_html(rows, cols, merges, default_fill_alphabet(), tseed);
  const double h = rows * 30.0 + 12.0;
  return opaque_block(Category::Table, x, y, width, h, t.html, "");
}

PendingBlock make_figure(Gen& g, double x, double y, double width) {
  const double h = snap(g.uniform(160, 300));
  return opaque_block(Category::Figure, x, y, width, h, "", "");
}

double gap(Gen& g) { return snap(g.uniform(24, 40)); }

// Shuffles the listing order, assigns ids and line ranks, builds gt_order.
CorpusRecord finish(PageBuilder& pb, Gen& g, const std::string& page_id) {
  const int n = static_cast<int>(pb.blocks.size());
  std::vector<int> listing(n);
  for (int i = 0; i < n; ++i) listing[i] = i;
  std::shuffle(listing.begin(), listing.end(), g.rng);

  // Line ranks follow block rank order, contiguous within each block.
  std::vector<int> line_start(n, 0);
  int counter = 0;
  for (int rank = 0; rank < n; ++rank) {
    line_start[rank] = counter;
    counter += static_cast<int>(pb.blocks[rank].lines.size());
  }

  CorpusRecord rec;
  rec.page.id = page_id;
  rec.page.width = pb.w;
  rec.page.height = pb.h;
  rec.gt_order.resize(n);
  std::vector<int> listing_pos(n);  // pending index -> listing index
  for (int k = 0; k < n; ++k) listing_pos[listing[k]] = k;

  for (int k = 0; k < n; ++k) {
    const PendingBlock& pbk = pb.blocks[listing[k]];
    Block blk;
    blk.id = "b" + std::to_string(k);
    blk.bbox = pbk.bbox;
    blk.category = pbk.cat;
    blk.content = pbk.content;
    rec.page.blocks.push_back(std::move(blk));
    rec.gt_order[k] = listing[k];
    int lo = line_start[listing[k]];
    for (const auto& [lb, text] : pbk.lines) rec.page.lines.push_back({lb, lo++, text});
  }
  std::sort(rec.page.lines.begin(), rec.page.lines.end(),
            [](const Line& a, const Line& b) { return a.order < b.order; });

  for (int rank = 0; rank < n; ++rank) {
    const PendingBlock& pbk = pb.blocks[rank];
    if (pbk.caption_target >= 0) {
      CaptionLink link;
      link.caption_id = "b" + std::to_string(listing_pos[rank]);
      link.target_id = "b" + std::to_string(listing_pos[pbk.caption_target]);
      link.linked = true;
      rec.links.push_back(link);
    }
  }
  return rec;
}

void fill_text_column(PageBuilder& pb, Gen& g, double x, double width, double y,
                      double y_end, double formula_p, double code_p) {
  while (true) {
    const double r = g.uniform(0, 1);
    PendingBlock b;
    if (r < formula_p) {
      b = make_formula(g, x, y, width);
    } else if (r < formula_p + code_p) {
      b = text_like_block(g, Category::Code, x, y, width, g.uniform_int(2, 4), 1.0);
    } else {
      b = text_like_block(g, Category::Text, x, y, width, g.uniform_int(2, 6),
                          g.uniform(0.85, 1.0));
    }
    if (b.bbox.y2 > y_end) break;
    y = b.bbox.y2 + gap(g);
    pb.push(std::move(b));
  }
}

// One figure (or table) with its caption; the caption sits above the figure
// half the time but always follows it in reading order.
void push_captioned(PageBuilder& pb, Gen& g, Category kind, double x, double width,
                    double& y, int index) {
  const bool caption_above = g.chance(0.5);
  const std::string label =
      (kind == Category::Figure ? "Figure " : "Table ") + std::to_string(index) + ": " +
      g.sentence(g.uniform_int(4, 7));
  const double cap_w = snap(width * g.uniform(0.55, 0.95));

  if (caption_above) {
    const double cap_y = y;
    const double body_y = cap_y + kLineHeight + snap(g.uniform(8, 14));
    PendingBlock body = kind == Category::Figure ? make_figure(g, x, body_y, width)
                                                 : make_table(g, x, body_y, width);
    const double body_y2 = body.bbox.y2;
    const int body_idx = pb.push(std::move(body));
    PendingBlock cap = single_line_block(g, Category::Caption, x, cap_y, cap_w, label);
    cap.caption_target = body_idx;
    pb.push(std::move(cap));
    y = body_y2;
  } else {
    PendingBlock body = kind == Category::Figure ? make_figure(g, x, y, width)
                                                 : make_table(g, x, y, width);
    const double cap_y = body.bbox.y2 + snap(g.uniform(8, 14));
    const int body_idx = pb.push(std::move(body));
    PendingBlock cap = single_line_block(g, Category::Caption, x, cap_y, cap_w, label);
    cap.caption_target = body_idx;
    y = cap.bbox.y2;
    pb.push(std::move(cap));
  }
}

void build_single_column(PageBuilder& pb, Gen& g) {
  pb.w = 1000;
  pb.h = 1400;
  const double margin = 70, width = pb.w - 2 * margin;
  double y = margin;
  if (g.chance(0.8)) {
    auto t = text_like_block(g, Category::Title, margin, y, width * 0.7, 1, 1.0);
    y = t.bbox.y2 + gap(g);
    pb.push(std::move(t));
  }
  fill_text_column(pb, g, margin, width, y, pb.h - margin, 0.15, 0.10);
}

void build_double_column(PageBuilder& pb, Gen& g) {
  pb.w = 1000;
  pb.h = 1400;
  const double margin = 70, gutter = 60;
  const double col_w = (pb.w - 2 * margin - gutter) / 2;
  double y = margin;
  if (g.chance(0.7)) {
    auto t = text_like_block(g, Category::Title, margin, y, pb.w - 2 * margin, 1, 1.0);
    y = t.bbox.y2 + gap(g);
    pb.push(std::move(t));
  }
  fill_text_column(pb, g, margin, col_w, y, pb.h - margin, 0.15, 0.0);
  fill_text_column(pb, g, margin + col_w + gutter, col_w, y, pb.h - margin, 0.15, 0.0);
}

void build_figure_with_caption(PageBuilder& pb, Gen& g) {
  pb.w = 1000;
  pb.h = 1400;
  const double margin = 70, width = pb.w - 2 * margin;
  double y = margin;
  if (g.chance(0.5)) {
    auto t = text_like_block(g, Category::Title, margin, y, width * 0.7, 1, 1.0);
    y = t.bbox.y2 + gap(g);
    pb.push(std::move(t));
  }
  const int n_figs = g.uniform_int(1, 2);
  for (int f = 0; f < n_figs; ++f) {
    auto lead = text_like_block(g, Category::Text, margin, y, width, g.uniform_int(2, 4),
                                g.uniform(0.85, 1.0));
    y = lead.bbox.y2 + gap(g);
    pb.push(std::move(lead));
    // A single-line text neighbor makes the geometry ambiguous with the
    // caption-above case: only the category tells them apart.
    if (g.chance(0.5)) {
      const double tw = snap(width * g.uniform(0.55, 0.95));
      auto stub = single_line_block(g, Category::Text, margin, y, tw,
                                    g.sentence(g.uniform_int(5, 8)));
      y = stub.bbox.y2 + snap(g.uniform(8, 14));
      pb.push(std::move(stub));
    }
    push_captioned(pb, g, Category::Figure, margin, width, y, f + 1);
    y += gap(g);
  }
  fill_text_column(pb, g, margin, width, y, pb.h - margin, 0.0, 0.0);
}

void build_table_report(PageBuilder& pb, Gen& g) {
  pb.w = 1000;
  pb.h = 1400;
  const double margin = 70, width = pb.w - 2 * margin;
  double y = margin;
  auto t = text_like_block(g, Category::Title, margin, y, width * 0.8, 1, 1.0);
  y = t.bbox.y2 + gap(g);
  pb.push(std::move(t));
  auto intro = text_like_block(g, Category::Text, margin, y, width, g.uniform_int(2, 5),
                               g.uniform(0.85, 1.0));
  y = intro.bbox.y2 + gap(g);
  pb.push(std::move(intro));
  const int n_tables = g.uniform_int(1, 2);
  for (int i = 0; i < n_tables; ++i) {
    push_captioned(pb, g, Category::Table, margin, snap(width * g.uniform(0.7, 1.0)), y,
                   i + 1);
    y += gap(g);
  }
  fill_text_column(pb, g, margin, width, y, pb.h - margin, 0.1, 0.0);
}

void build_exam_paper(PageBuilder& pb, Gen& g) {
  pb.w = 1000;
  pb.h = 1400;
  const double margin = 70, width = pb.w - 2 * margin;
  double y = 24;
  pb.push(single_line_block(g, Category::PageHeader, margin, y, width,
                            g.words(4, true) + " " + std::to_string(g.uniform_int(1, 12))));
  y = 24 + kLineHeight + gap(g);
  auto t = text_like_block(g, Category::Title, margin, y, width * 0.6, 1, 1.0);
  y = t.bbox.y2 + gap(g);
  pb.push(std::move(t));
  int q = 0;
  while (true) {
    auto question = text_like_block(g, Category::Text, margin, y, width,
                                    g.uniform_int(2, 5), g.uniform(0.85, 1.0));
    if (question.bbox.y2 > pb.h - margin) break;
    question.content = std::to_string(q + 1) + ". " + question.content;
    question.lines[0].second = std::to_string(q + 1) + ". " + question.lines[0].second;
    y = question.bbox.y2 + gap(g);
    pb.push(std::move(question));
    ++q;
    if (g.chance(0.4)) {
      auto f = make_formula(g, margin + 40, y, width - 80);
      if (f.bbox.y2 > pb.h - margin) break;
      y = f.bbox.y2 + gap(g);
      pb.push(std::move(f));
    }
  }
}

void build_newspaper(PageBuilder& pb, Gen& g) {
  pb.w = 1200;
  pb.h = 1600;
  const double margin = 70, gutter = 40;
  const double col_w = snap((pb.w - 2 * margin - 2 * gutter) / 3);
  double y = 24;
  pb.push(single_line_block(g, Category::PageHeader, margin, y, pb.w - 2 * margin,
                            g.words(3, true) + " Daily"));
  y = 24 + kLineHeight + gap(g);
  auto t = text_like_block(g, Category::Title, margin, y, pb.w - 2 * margin, 1, 1.0);
  const double col_top = t.bbox.y2 + gap(g);
  pb.push(std::move(t));
  const double col_bottom = pb.h - margin - kLineHeight - 30;
  for (int c = 0; c < 3; ++c) {
    fill_text_column(pb, g, margin + c * (col_w + gutter), col_w, col_top, col_bottom,
                     0.0, 0.0);
  }
  pb.push(single_line_block(g, Category::PageFooter, margin, pb.h - margin,
                            pb.w - 2 * margin, "Page " + std::to_string(g.uniform_int(1, 40))));
}

}  // namespace

CorpusRecord synthesize_page(LayoutTemplate tmpl, uint64_t seed) {
  // Decorrelate template streams sharing a seed.
  Gen g(seed * 0x9E3779B97F4A7C15ull + static_cast<uint64_t>(tmpl) + 1);
  PageBuilder pb;
  switch (tmpl) {
    case LayoutTemplate::SingleColumn: build_single_column(pb, g); break;
    case LayoutTemplate::DoubleColumn: build_double_column(pb, g); break;
    case LayoutTemplate::FigureWithCaption: build_figure_with_caption(pb, g); break;
    case LayoutTemplate::TableReport: build_table_report(pb, g); break;
    case LayoutTemplate::ExamPaper: build_exam_paper(pb, g); break;
    case LayoutTemplate::Newspaper3Col: build_newspaper(pb, g); break;
  }
  return finish(pb, g, template_name(tmpl) + "-" + std::to_string(seed));
}

Corpus synthesize_corpus(const std::vector<LayoutTemplate>& templates, int count,
                         uint64_t seed) {
  Corpus corpus(count);
#pragma omp parallel for schedule(dynamic, 8)
  for (int i = 0; i < count; ++i) {
    const LayoutTemplate t = templates[i % templates.size()];
    corpus[i] = synthesize_page(t, seed + static_cast<uint64_t>(i));
    corpus[i].page.id = "page-" + std::to_string(i);
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// table rendering

const std::vector<uint32_t>& default_fill_alphabet() {
  static const std::vector<uint32_t> alphabet = [] {
    std::vector<uint32_t> a;
    for (uint32_t c = 'a'; c <= 'z'; ++c) a.push_back(c);
    for (uint32_t c = 'A'; c <= 'Z'; ++c) a.push_back(c);
    for (uint32_t c = '0'; c <= '9'; ++c) a.push_back(c);
    for (uint32_t c = 0x4E00; c < 0x4E40; ++c) a.push_back(c);  // CJK slice
    return a;
  }();
  return alphabet;
}

RenderedTable render_table_html(int rows, int cols, const std::vector<CellMerge>& merges,
                                const std::vector<uint32_t>& fill_alphabet, uint64_t seed) {
  if (rows < 1 || cols < 1) throw InvalidInput("render_table_html: empty grid");
  if (fill_alphabet.empty()) throw InvalidInput("render_table_html: empty alphabet");

  // owner[r][c] = index into merges, or -1 for a plain cell.
  std::vector<std::vector<int>> owner(rows, std::vector<int>(cols, -1));
  for (size_t m = 0; m < merges.size(); ++m) {
    const auto& mg = merges[m];
    if (mg.row < 0 || mg.col < 0 || mg.rowspan < 1 || mg.colspan < 1 ||
        mg.row + mg.rowspan > rows || mg.col + mg.colspan > cols)
      throw InvalidInput("render_table_html: merge outside grid");
    for (int r = mg.row; r < mg.row + mg.rowspan; ++r)
      for (int c = mg.col; c < mg.col + mg.colspan; ++c) {
        if (owner[r][c] != -1) throw InvalidInput("render_table_html: overlapping merges");
        owner[r][c] = static_cast<int>(m);
      }
  }

  std::mt19937_64 rng(seed);
  auto cell_text = [&]() {
    const int len = std::uniform_int_distribution<int>(1, 4)(rng);
    std::string s;
    for (int i = 0; i < len; ++i) {
      const size_t k =
          std::uniform_int_distribution<size_t>(0, fill_alphabet.size() - 1)(rng);
      utf8_append(s, fill_alphabet[k]);
    }
    return s;
  };

  RenderedTable out;
  out.grid.assign(rows, std::vector<std::string>(cols));
  std::string html = "<table>";
  for (int r = 0; r < rows; ++r) {
    html += "<tr>";
    for (int c = 0; c < cols; ++c) {
      const int m = owner[r][c];
      if (m >= 0 && !(merges[m].row == r && merges[m].col == c)) continue;  // absorbed
      const std::string text = cell_text();
      if (m >= 0) {
        const auto& mg = merges[m];
        html += "<td";
        if (mg.rowspan > 1) html += " rowspan=\"" + std::to_string(mg.rowspan) + "\"";
        if (mg.colspan > 1) html += " colspan=\"" + std::to_string(mg.colspan) + "\"";
        html += ">" + text + "</td>";
        for (int rr = mg.row; rr < mg.row + mg.rowspan; ++rr)
          for (int cc = mg.col; cc < mg.col + mg.colspan; ++cc) out.grid[rr][cc] = text;
      } else {
        html += "<td>" + text + "</td>";
        out.grid[r][c] = text;
      }
    }
    html += "</tr>";
  }
  html += "</table>";
  out.html = std::move(html);
  return out;
}

bool table_html_well_formed(const std::string& html) {
  std::vector<std::string> stack;
  size_t i = 0;
  while (i < html.size()) {
    if (html[i] != '<') {
      ++i;
      continue;
    }
    const size_t end = html.find('>', i);
    if (end == std::string::npos) return false;
    std::string tag = html.substr(i + 1, end - i - 1);
    i = end + 1;
    bool closing = false;
    if (!tag.empty() && tag[0] == '/') {
      closing = true;
      tag = tag.substr(1);
    }
    const size_t sp = tag.find(' ');
    if (sp != std::string::npos) tag = tag.substr(0, sp);
    if (tag.empty()) return false;
    if (closing) {
      if (stack.empty() || stack.back() != tag) return false;
      stack.pop_back();
    } else {
      stack.push_back(tag);
    }
  }
  return stack.empty();
}

// ---------------------------------------------------------------------------
// hygiene

std::vector<Block> remove_nested_boxes(const std::vector<Block>& blocks) {
  const size_t n = blocks.size();
  std::vector<char> dropped(n, 0);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      if (i == j || dropped[i] || dropped[j]) continue;
      const double ai = blocks[i].bbox.area();
      const double aj = blocks[j].bbox.area();
      const double smaller = std::min(ai, aj);
      if (smaller <= 0) continue;
      if (intersection_area(blocks[i].bbox, blocks[j].bbox) / smaller >= 0.95) {
        // Drop the smaller box; on equal areas drop the later one.
        if (ai < aj)
          dropped[i] = 1;
        else if (aj < ai)
          dropped[j] = 1;
        else
          dropped[std::max(i, j)] = 1;
      }
    }
  }
  std::vector<Block> out;
  for (size_t i = 0; i < n; ++i)
    if (!dropped[i]) out.push_back(blocks[i]);
  return out;
}

double page_coverage(const Page& page) {
  if (page.width <= 0 || page.height <= 0 || page.blocks.empty()) return 0.0;
  // Union area via coordinate compression; block counts are small.
  std::vector<double> xs, ys;
  for (const auto& b : page.blocks) {
    xs.push_back(b.bbox.x1);
    xs.push_back(b.bbox.x2);
    ys.push_back(b.bbox.y1);
    ys.push_back(b.bbox.y2);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
  double covered = 0;
  for (size_t i = 0; i + 1 < xs.size(); ++i) {
    for (size_t j = 0; j + 1 < ys.size(); ++j) {
      const double cx = 0.5 * (xs[i] + xs[i + 1]);
      const double cy = 0.5 * (ys[j] + ys[j + 1]);
      for (const auto& b : page.blocks) {
        if (b.bbox.contains_point(cx, cy)) {
          covered += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
          break;
        }
      }
    }
  }
  return covered / (page.width * page.height);
}

bool coverage_filter(const Page& page, double threshold) {
  if (threshold < 0 || threshold > 1) throw InvalidInput("coverage_filter: bad threshold");
  return page_coverage(page) >= threshold;
}

std::vector<CaptionLink> link_captions(const std::vector<Block>& blocks) {
  std::vector<CaptionLink> out;
  for (const auto& cap : blocks) {
    if (cap.category != Category::Caption) continue;
    CaptionLink link;
    link.caption_id = cap.id;
    double best_above = -1, best_any = -1;
    const Block* pick_above = nullptr;
    const Block* pick_any = nullptr;
    for (const auto& cand : blocks) {
      if (cand.category != Category::Figure && cand.category != Category::Table) continue;
      const double dx = cand.bbox.cx() - cap.bbox.cx();
      const double dy = cand.bbox.cy() - cap.bbox.cy();
      const double dist = std::sqrt(dx * dx + dy * dy);
      const bool x_overlap = cand.bbox.x2 > cap.bbox.x1 && cap.bbox.x2 > cand.bbox.x1;
      if (x_overlap && cand.bbox.cy() < cap.bbox.cy()) {
        if (!pick_above || dist < best_above) {
          best_above = dist;
          pick_above = &cand;
        }
      }
      if (!pick_any || dist < best_any) {
        best_any = dist;
        pick_any = &cand;
      }
    }
    const Block* pick = pick_above ? pick_above : pick_any;
    if (pick) {
      link.target_id = pick->id;
      link.linked = true;
    }
    out.push_back(link);
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSONL persistence

static json bbox_to_json(const BBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

static BBox bbox_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw InvalidInput("bbox must be [x1,y1,x2,y2]");
  return BBox{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
              j[3].get<double>()};
}

json record_to_json(const CorpusRecord& rec) {
  json j;
  j["page"] = {{"w", rec.page.width}, {"h", rec.page.height}};
  j["blocks"] = json::array();
  for (const auto& b : rec.page.blocks) {
    json jb = {{"id", b.id},
               {"bbox", bbox_to_json(b.bbox)},
               {"category", category_name(b.category)}};
    if (b.content) jb["content"] = *b.content;
    j["blocks"].push_back(jb);
  }
  j["lines"] = json::array();
  for (const auto& l : rec.page.lines) {
    j["lines"].push_back(
        {{"bbox", bbox_to_json(l.bbox)}, {"order", l.order}, {"text", l.text}});
  }
  j["gt_order"] = rec.gt_order;
  j["links"] = json::array();
  for (const auto& link : rec.links) {
    j["links"].push_back({{"caption", link.caption_id},
                          {"target", link.linked ? link.target_id : ""}});
  }
  return j;
}

CorpusRecord record_from_json(const json& j) {
  CorpusRecord rec;
  rec.page.width = j.at("page").at("w").get<double>();
  rec.page.height = j.at("page").at("h").get<double>();
  for (const auto& jb : j.at("blocks")) {
    Block b;
    b.id = jb.at("id").get<std::string>();
    b.bbox = bbox_from_json(jb.at("bbox"));
    const auto cat = category_from_name(jb.at("category").get<std::string>());
    if (!cat) throw InvalidInput("unknown category: " + jb.at("category").dump());
    b.category = *cat;
    if (jb.contains("content")) b.content = jb.at("content").get<std::string>();
    rec.page.blocks.push_back(std::move(b));
  }
  if (j.contains("lines")) {
    for (const auto& jl : j.at("lines")) {
      Line l;
      l.bbox = bbox_from_json(jl.at("bbox"));
      l.order = jl.at("order").get<int>();
      if (jl.contains("text")) l.text = jl.at("text").get<std::string>();
      rec.page.lines.push_back(std::move(l));
    }
  }
  if (j.contains("gt_order")) rec.gt_order = j.at("gt_order").get<std::vector<int>>();
  if (j.contains("links")) {
    for (const auto& jl : j.at("links")) {
      CaptionLink link;
      link.caption_id = jl.at("caption").get<std::string>();
      link.target_id = jl.at("target").get<std::string>();
      link.linked = !link.target_id.empty();
      rec.links.push_back(std::move(link));
    }
  }
  return rec;
}

void save_jsonl(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot open for writing: " + path);
  for (const auto& rec : corpus) out << record_to_json(rec).dump() << '\n';
}

Corpus load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open: " + path);
  Corpus corpus;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      CorpusRecord rec = record_from_json(json::parse(line));
      rec.page.id = "page-" + std::to_string(corpus.size());
      corpus.push_back(std::move(rec));
    } catch (const std::exception& e) {
      throw InvalidInput(path + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

}  // namespace srrdoc
