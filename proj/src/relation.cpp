#include "srrdoc/relation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "srrdoc/corpus.hpp"

namespace srrdoc {

using nlohmann::json;

namespace {
constexpr double kLnEps = 1e-5;
constexpr int kGrid = 1001;  // 0..1000 inclusive
}  // namespace

void RelationModelConfig::validate() const {
  if (coord_embed_dim < 1) throw InvalidInput("config: coord_embed_dim < 1");
  if (layers < 0) throw InvalidInput("config: negative layer count");
  if (heads < 1 || model_dim() % heads != 0)
    throw InvalidInput("config: model_dim must divide evenly into heads");
  if (ffn_multiplier < 1) throw InvalidInput("config: ffn_multiplier < 1");
  if (max_elements < 1) throw InvalidInput("config: max_elements < 1");
  if (dropout < 0 || dropout >= 1) throw InvalidInput("config: dropout out of range");
}

RelationModelParams init_params(const RelationModelConfig& config, uint64_t seed) {
  config.validate();
  const int d = config.coord_embed_dim;
  const int dim = config.model_dim();
  const int f = config.ffn_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));

  RelationModelParams p;
  p.config = config;
  p.seed = seed;
  std::mt19937_64 rng(seed);

  for (auto& t : p.coord_tables) {
    t = Mat(kGrid, d);
    fill_uniform(t, scale, rng);
  }
  p.cat_table = Mat(kNumCategories, dim);
  if (config.use_category) fill_uniform(p.cat_table, scale, rng);

  p.layers.resize(config.layers);
  for (auto& l : p.layers) {
    for (Mat* w : {&l.wq, &l.wk, &l.wv, &l.wo}) {
      *w = Mat(dim, dim);
      fill_uniform(*w, scale, rng);
    }
    l.w1 = Mat(dim, f);
    fill_uniform(l.w1, scale, rng);
    l.w2 = Mat(f, dim);
    fill_uniform(l.w2, 1.0 / std::sqrt(static_cast<double>(f)), rng);
    l.bq.assign(dim, 0.0);
    l.bk.assign(dim, 0.0);
    l.bv.assign(dim, 0.0);
    l.bo.assign(dim, 0.0);
    l.b1.assign(f, 0.0);
    l.b2.assign(dim, 0.0);
    l.ln1_g.assign(dim, 1.0);
    l.ln1_b.assign(dim, 0.0);
    l.ln2_g.assign(dim, 1.0);
    l.ln2_b.assign(dim, 0.0);
  }
  p.classifier = Mat(dim, config.max_elements);
  fill_uniform(p.classifier, scale, rng);
  return p;
}

RelationModelParams zeros_like(const RelationModelParams& p) {
  RelationModelParams z;
  z.config = p.config;
  for (int t = 0; t < 6; ++t) z.coord_tables[t] = Mat(p.coord_tables[t].rows, p.coord_tables[t].cols);
  z.cat_table = Mat(p.cat_table.rows, p.cat_table.cols);
  z.layers.resize(p.layers.size());
  for (size_t i = 0; i < p.layers.size(); ++i) {
    const auto& l = p.layers[i];
    auto& o = z.layers[i];
    o.wq = Mat(l.wq.rows, l.wq.cols);
    o.wk = Mat(l.wk.rows, l.wk.cols);
    o.wv = Mat(l.wv.rows, l.wv.cols);
    o.wo = Mat(l.wo.rows, l.wo.cols);
    o.w1 = Mat(l.w1.rows, l.w1.cols);
    o.w2 = Mat(l.w2.rows, l.w2.cols);
    o.bq.assign(l.bq.size(), 0.0);
    o.bk.assign(l.bk.size(), 0.0);
    o.bv.assign(l.bv.size(), 0.0);
    o.bo.assign(l.bo.size(), 0.0);
    o.b1.assign(l.b1.size(), 0.0);
    o.b2.assign(l.b2.size(), 0.0);
    o.ln1_g.assign(l.ln1_g.size(), 0.0);
    o.ln1_b.assign(l.ln1_b.size(), 0.0);
    o.ln2_g.assign(l.ln2_g.size(), 0.0);
    o.ln2_b.assign(l.ln2_b.size(), 0.0);
  }
  z.classifier = Mat(p.classifier.rows, p.classifier.cols);
  return z;
}

std::vector<TensorRef> tensor_refs(RelationModelParams& p) {
  std::vector<TensorRef> refs;
  for (auto& t : p.coord_tables) refs.push_back({&t.a, true});
  refs.push_back({&p.cat_table.a, true});
  for (auto& l : p.layers) {
    refs.push_back({&l.wq.a, true});
    refs.push_back({&l.bq, false});
    refs.push_back({&l.wk.a, true});
    refs.push_back({&l.bk, false});
    refs.push_back({&l.wv.a, true});
    refs.push_back({&l.bv, false});
    refs.push_back({&l.wo.a, true});
    refs.push_back({&l.bo, false});
    refs.push_back({&l.ln1_g, false});
    refs.push_back({&l.ln1_b, false});
    refs.push_back({&l.ln2_g, false});
    refs.push_back({&l.ln2_b, false});
    refs.push_back({&l.w1.a, true});
    refs.push_back({&l.b1, false});
    refs.push_back({&l.w2.a, true});
    refs.push_back({&l.b2, false});
  }
  refs.push_back({&p.classifier.a, true});
  return refs;
}

// ---------------------------------------------------------------------------
// embeddings

static std::array<int, 6> grid_indices(const BBox& b) {
  const int x1 = static_cast<int>(std::llround(b.x1));
  const int y1 = static_cast<int>(std::llround(b.y1));
  const int x2 = static_cast<int>(std::llround(b.x2));
  const int y2 = static_cast<int>(std::llround(b.y2));
  const int w = std::clamp(x2 - x1, 0, 1000);
  const int h = std::clamp(y2 - y1, 0, 1000);
  return {x1, y1, x2, y2, w, h};
}

Mat embed_elements(const std::vector<BBox>& grid_boxes,
                   const std::vector<Category>& cats, const RelationModelParams& p) {
  if (grid_boxes.size() != cats.size())
    throw InvalidInput("embed_elements: boxes/categories length mismatch");
  const int n = static_cast<int>(grid_boxes.size());
  if (n > p.config.max_elements) throw InvalidInput("embed_elements: too many elements");
  const int d = p.config.coord_embed_dim;
  Mat out(n, p.config.model_dim());
  for (int i = 0; i < n; ++i) {
    const auto idx = grid_indices(grid_boxes[i]);
    for (int t = 0; t < 6; ++t) {
      if (idx[t] < 0 || idx[t] >= kGrid)
        throw InvalidInput("embed_elements: coordinate outside 0..1000 grid");
      const double* src = p.coord_tables[t].row(idx[t]);
      std::memcpy(out.row(i) + t * d, src, sizeof(double) * d);
    }
    if (p.config.use_category) {
      const double* c = p.cat_table.row(static_cast<int>(cats[i]));
      double* r = out.row(i);
      for (int j = 0; j < out.cols; ++j) r[j] += c[j];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// transformer forward

namespace {

void layernorm_forward(const Mat& x, const std::vector<double>& g,
                       const std::vector<double>& b, Mat& y, Mat& xhat,
                       std::vector<double>& rstd) {
  const int n = x.rows, dim = x.cols;
  y = Mat(n, dim);
  xhat = Mat(n, dim);
  rstd.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* r = x.row(i);
    double mu = 0;
    for (int j = 0; j < dim; ++j) mu += r[j];
    mu /= dim;
    double var = 0;
    for (int j = 0; j < dim; ++j) var += (r[j] - mu) * (r[j] - mu);
    var /= dim;
    const double rs = 1.0 / std::sqrt(var + kLnEps);
    rstd[i] = rs;
    double* xh = xhat.row(i);
    double* yr = y.row(i);
    for (int j = 0; j < dim; ++j) {
      xh[j] = (r[j] - mu) * rs;
      yr[j] = xh[j] * g[j] + b[j];
    }
  }
}

// dgam/dbet accumulate; dx accumulates into dst.
void layernorm_backward(const Mat& dy, const Mat& xhat, const std::vector<double>& rstd,
                        const std::vector<double>& g, Mat& dst,
                        std::vector<double>& dgam, std::vector<double>& dbet) {
  const int n = dy.rows, dim = dy.cols;
  for (int i = 0; i < n; ++i) {
    const double* dyr = dy.row(i);
    const double* xh = xhat.row(i);
    double m1 = 0, m2 = 0;
    for (int j = 0; j < dim; ++j) {
      const double dxh = dyr[j] * g[j];
      m1 += dxh;
      m2 += dxh * xh[j];
      dgam[j] += dyr[j] * xh[j];
      dbet[j] += dyr[j];
    }
    m1 /= dim;
    m2 /= dim;
    double* out = dst.row(i);
    for (int j = 0; j < dim; ++j) {
      const double dxh = dyr[j] * g[j];
      out[j] += rstd[i] * (dxh - m1 - xh[j] * m2);
    }
  }
}

void linear_forward(const Mat& x, const Mat& w, const std::vector<double>& b, Mat& y) {
  matmul(x, w, y);
  for (int i = 0; i < y.rows; ++i) {
    double* r = y.row(i);
    for (int j = 0; j < y.cols; ++j) r[j] += b[j];
  }
}

// dx accumulates; dw/db accumulate.
void linear_backward(const Mat& x, const Mat& w, const Mat& dy, Mat& dx, Mat& dw,
                     std::vector<double>& db) {
  Mat tmp;
  matmul_nt(dy, w, tmp);  // dy * w^T
  for (size_t i = 0; i < dx.a.size(); ++i) dx.a[i] += tmp.a[i];
  matmul_tn(x, dy, tmp);  // x^T * dy
  for (size_t i = 0; i < dw.a.size(); ++i) dw.a[i] += tmp.a[i];
  for (int i = 0; i < dy.rows; ++i) {
    const double* r = dy.row(i);
    for (int j = 0; j < dy.cols; ++j) db[j] += r[j];
  }
}

Mat slice_cols(const Mat& m, int c0, int c1) {
  Mat out(m.rows, c1 - c0);
  for (int i = 0; i < m.rows; ++i)
    std::memcpy(out.row(i), m.row(i) + c0, sizeof(double) * (c1 - c0));
  return out;
}

void add_into_cols(Mat& dst, const Mat& src, int c0) {
  for (int i = 0; i < src.rows; ++i) {
    double* d = dst.row(i) + c0;
    const double* s = src.row(i);
    for (int j = 0; j < src.cols; ++j) d[j] += s[j];
  }
}

void apply_dropout(Mat& m, double rate, std::mt19937_64* rng, std::vector<char>& mask) {
  if (!rng || rate <= 0) {
    mask.clear();
    return;
  }
  mask.assign(m.a.size(), 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (size_t i = 0; i < m.a.size(); ++i) {
    if (unit(*rng) < rate) {
      mask[i] = 0;
      m.a[i] = 0.0;
    } else {
      m.a[i] *= keep_scale;
    }
  }
}

void dropout_backward(Mat& grad, double rate, const std::vector<char>& mask) {
  if (mask.empty() || rate <= 0) return;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (size_t i = 0; i < grad.a.size(); ++i)
    grad.a[i] = mask[i] ? grad.a[i] * keep_scale : 0.0;
}

}  // namespace

Mat encode(const Mat& features, const RelationModelParams& p, EncodeOptions opts,
           ForwardCache* cache) {
  p.config.validate();
  const int n = features.rows;
  const int dim = p.config.model_dim();
  if (features.cols != dim) throw InvalidInput("encode: feature width mismatch");
  if (n > p.config.max_elements)
    throw InvalidInput("encode: more elements than rank columns");
  const int heads = p.config.heads;
  const int dh = dim / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  if (cache) {
    cache->features = features;
    cache->layers.assign(p.layers.size(), {});
  }

  Mat x = features;
  for (size_t li = 0; li < p.layers.size(); ++li) {
    if (opts.skip && (*opts.skip)[li]) {
      if (cache) cache->layers[li].skipped = true;
      continue;
    }
    const LayerWeights& l = p.layers[li];
    LayerCache local;
    LayerCache& c = cache ? cache->layers[li] : local;
    c.x_in = x;

    Mat ln1;
    layernorm_forward(x, l.ln1_g, l.ln1_b, ln1, c.ln1_xhat, c.ln1_rstd);
    linear_forward(ln1, l.wq, l.bq, c.q);
    linear_forward(ln1, l.wk, l.bk, c.k);
    linear_forward(ln1, l.wv, l.bv, c.v);

    c.concat = Mat(n, dim);
    c.att.resize(heads);
    for (int h = 0; h < heads; ++h) {
      const int c0 = h * dh;
      Mat qh = slice_cols(c.q, c0, c0 + dh);
      Mat kh = slice_cols(c.k, c0, c0 + dh);
      Mat vh = slice_cols(c.v, c0, c0 + dh);
      Mat s;
      matmul_nt(qh, kh, s);
      for (auto& e : s.a) e *= inv_sqrt_dh;
      softmax_rows(s);
      c.att[h] = s;
      Mat ah;
      matmul(s, vh, ah);
      for (int i = 0; i < n; ++i)
        std::memcpy(c.concat.row(i) + c0, ah.row(i), sizeof(double) * dh);
    }

    Mat attn;
    linear_forward(c.concat, l.wo, l.bo, attn);
    apply_dropout(attn, p.config.dropout, opts.dropout_rng, c.mask1);

    c.x2 = x;
    for (size_t i = 0; i < c.x2.a.size(); ++i) c.x2.a[i] += attn.a[i];

    Mat ln2;
    layernorm_forward(c.x2, l.ln2_g, l.ln2_b, ln2, c.ln2_xhat, c.ln2_rstd);
    linear_forward(ln2, l.w1, l.b1, c.h_pre);
    c.h = c.h_pre;
    for (auto& e : c.h.a) e = e > 0 ? e : 0.0;
    Mat ffn;
    linear_forward(c.h, l.w2, l.b2, ffn);
    apply_dropout(ffn, p.config.dropout, opts.dropout_rng, c.mask2);

    x = c.x2;
    for (size_t i = 0; i < x.a.size(); ++i) x.a[i] += ffn.a[i];
  }

  if (cache) cache->final_x = x;
  Mat logits;
  matmul(x, p.classifier, logits);
  return logits;
}

void encode_backward(const Mat& dlogits, const ForwardCache& cache,
                     const RelationModelParams& p, RelationModelParams& grads,
                     Mat& dfeatures) {
  const int n = dlogits.rows;
  const int dim = p.config.model_dim();
  const int heads = p.config.heads;
  const int dh = dim / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  // classifier
  Mat tmp;
  matmul_tn(cache.final_x, dlogits, tmp);
  for (size_t i = 0; i < tmp.a.size(); ++i) grads.classifier.a[i] += tmp.a[i];
  Mat dx;
  matmul_nt(dlogits, p.classifier, dx);

  for (int li = static_cast<int>(p.layers.size()) - 1; li >= 0; --li) {
    const LayerCache& c = cache.layers[li];
    if (c.skipped) continue;
    const LayerWeights& l = p.layers[li];
    LayerWeights& g = grads.layers[li];

    // x_out = x2 + dropout(ffn)
    Mat dffn = dx;
    dropout_backward(dffn, p.config.dropout, c.mask2);
    Mat dx2 = dx;

    // ffn = relu(ln2 w1 + b1) w2 + b2
    Mat dh_post(n, c.h.cols);
    linear_backward(c.h, l.w2, dffn, dh_post, g.w2, g.b2);
    for (size_t i = 0; i < dh_post.a.size(); ++i)
      if (c.h_pre.a[i] <= 0) dh_post.a[i] = 0.0;
    // recompute ln2 from xhat
    Mat ln2(n, dim);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < dim; ++j) ln2(i, j) = c.ln2_xhat(i, j) * l.ln2_g[j] + l.ln2_b[j];
    Mat dln2(n, dim);
    linear_backward(ln2, l.w1, dh_post, dln2, g.w1, g.b1);
    layernorm_backward(dln2, c.ln2_xhat, c.ln2_rstd, l.ln2_g, dx2, g.ln2_g, g.ln2_b);

    // x2 = x_in + dropout(attn)
    Mat dattn = dx2;
    dropout_backward(dattn, p.config.dropout, c.mask1);
    Mat dx_in = dx2;

    // attn = concat wo + bo
    Mat dconcat(n, dim);
    linear_backward(c.concat, l.wo, dattn, dconcat, g.wo, g.bo);

    Mat dq(n, dim), dk(n, dim), dv(n, dim);
    for (int h = 0; h < heads; ++h) {
      const int c0 = h * dh;
      Mat qh = slice_cols(c.q, c0, c0 + dh);
      Mat kh = slice_cols(c.k, c0, c0 + dh);
      Mat vh = slice_cols(c.v, c0, c0 + dh);
      Mat dah = slice_cols(dconcat, c0, c0 + dh);
      Mat dp;
      matmul_nt(dah, vh, dp);
      Mat dvh;
      matmul_tn(c.att[h], dah, dvh);
      Mat ds;
      softmax_rows_backward(c.att[h], dp, ds);
      for (auto& e : ds.a) e *= inv_sqrt_dh;
      Mat dqh;
      matmul(ds, kh, dqh);
      Mat dkh;
      matmul_tn(ds, qh, dkh);
      add_into_cols(dq, dqh, c0);
      add_into_cols(dk, dkh, c0);
      add_into_cols(dv, dvh, c0);
    }

    // q/k/v = ln1 w + b
    Mat ln1(n, dim);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < dim; ++j) ln1(i, j) = c.ln1_xhat(i, j) * l.ln1_g[j] + l.ln1_b[j];
    Mat dln1(n, dim);
    linear_backward(ln1, l.wq, dq, dln1, g.wq, g.bq);
    linear_backward(ln1, l.wk, dk, dln1, g.wk, g.bk);
    linear_backward(ln1, l.wv, dv, dln1, g.wv, g.bv);
    layernorm_backward(dln1, c.ln1_xhat, c.ln1_rstd, l.ln1_g, dx_in, g.ln1_g, g.ln1_b);

    dx = dx_in;
  }
  dfeatures = dx;
}

// ---------------------------------------------------------------------------
// decoding

std::vector<int> greedy_decode(const Mat& logits, int n_elements) {
  const int n = n_elements;
  if (n == 0) return {};
  if (n > logits.rows || n > logits.cols)
    throw InvalidInput("greedy_decode: more elements than rank columns");

  std::vector<int> rank(n, -1);
  std::vector<int> col_owner(n, -1);
  std::vector<int> unassigned(n);
  std::iota(unassigned.begin(), unassigned.end(), 0);

  while (!unassigned.empty()) {
    // Every unassigned element claims its best unclaimed column.
    std::vector<std::vector<int>> claimants(n);
    for (int i : unassigned) {
      int best = -1;
      for (int col = 0; col < n; ++col) {
        if (col_owner[col] >= 0) continue;
        if (best < 0 || logits(i, col) > logits(i, best)) best = col;
      }
      claimants[best].push_back(i);
    }
    std::vector<int> still;
    for (int col = 0; col < n; ++col) {
      if (claimants[col].empty()) continue;
      int winner = claimants[col][0];
      for (int i : claimants[col])
        if (logits(i, col) > logits(winner, col)) winner = i;  // tie: lower index
      rank[winner] = col;
      col_owner[col] = winner;
      for (int i : claimants[col])
        if (i != winner) still.push_back(i);
    }
    std::sort(still.begin(), still.end());
    unassigned = std::move(still);
  }
  return rank;
}

// ---------------------------------------------------------------------------
// training

namespace {

double loss_from_logits(const Mat& logits, const std::vector<int>& target, Mat* dlogits) {
  const int n = static_cast<int>(target.size());
  if (dlogits) *dlogits = Mat(logits.rows, logits.cols);
  double loss = 0;
  for (int i = 0; i < n; ++i) {
    const double* row = logits.row(i);
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double z = 0;
    for (int j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    const double logz = std::log(z) + mx;
    loss += logz - row[target[i]];
    if (dlogits) {
      double* dr = dlogits->row(i);
      for (int j = 0; j < n; ++j) dr[j] = std::exp(row[j] - logz) / n;
      dr[target[i]] -= 1.0 / n;
    }
  }
  return loss / n;
}

void validate_example(const TrainingExample& ex, const RelationModelConfig& config) {
  if (ex.grid_boxes.size() != ex.cats.size() || ex.grid_boxes.size() != ex.target.size())
    throw InvalidInput("training example: field lengths differ");
  if (static_cast<int>(ex.grid_boxes.size()) > config.max_elements)
    throw InvalidInput("training example: more elements than max_elements");
  if (!is_permutation_of_n(ex.target))
    throw InvalidInput("training example: target is not a permutation");
}

double example_loss_and_grad(const RelationModelParams& p, const TrainingExample& ex,
                             RelationModelParams& grads, std::mt19937_64* dropout_rng) {
  const Mat features = embed_elements(ex.grid_boxes, ex.cats, p);
  ForwardCache cache;
  EncodeOptions opts;
  opts.dropout_rng = dropout_rng;
  const Mat logits = encode(features, p, opts, &cache);
  Mat dlogits;
  const double loss = loss_from_logits(logits, ex.target, &dlogits);
  Mat dfeat;
  encode_backward(dlogits, cache, p, grads, dfeat);

  const int d = p.config.coord_embed_dim;
  for (int i = 0; i < dfeat.rows; ++i) {
    const auto idx = grid_indices(ex.grid_boxes[i]);
    for (int t = 0; t < 6; ++t) {
      double* dst = grads.coord_tables[t].row(idx[t]);
      const double* src = dfeat.row(i) + t * d;
      for (int j = 0; j < d; ++j) dst[j] += src[j];
    }
    if (p.config.use_category) {
      double* dst = grads.cat_table.row(static_cast<int>(ex.cats[i]));
      const double* src = dfeat.row(i);
      for (int j = 0; j < dfeat.cols; ++j) dst[j] += src[j];
    }
  }
  return loss;
}

struct AdamW {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 0.0;
  long long t = 0;
  RelationModelParams m, v;

  explicit AdamW(const RelationModelParams& p, double wd)
      : weight_decay(wd), m(zeros_like(p)), v(zeros_like(p)) {}

  void step(RelationModelParams& p, RelationModelParams& g, double lr) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    auto pr = tensor_refs(p);
    auto gr = tensor_refs(g);
    auto mr = tensor_refs(m);
    auto vr = tensor_refs(v);
    for (size_t s = 0; s < pr.size(); ++s) {
      auto& pd = *pr[s].data;
      auto& gd = *gr[s].data;
      auto& md = *mr[s].data;
      auto& vd = *vr[s].data;
      const double wd = pr[s].decay ? weight_decay : 0.0;
      for (size_t i = 0; i < pd.size(); ++i) {
        md[i] = beta1 * md[i] + (1 - beta1) * gd[i];
        vd[i] = beta2 * vd[i] + (1 - beta2) * gd[i] * gd[i];
        const double mhat = md[i] / bc1;
        const double vhat = vd[i] / bc2;
        pd[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * pd[i]);
      }
    }
  }
};

void zero_grads(RelationModelParams& g) {
  for (auto& ref : tensor_refs(g)) std::fill(ref.data->begin(), ref.data->end(), 0.0);
}

std::vector<double> run_training(RelationModelParams& params,
                                 const std::vector<TrainingExample>& dataset,
                                 double base_lr, double weight_decay, int batch_size,
                                 long long steps, uint64_t seed) {
  std::mt19937_64 shuffle_rng(seed ^ 0xC0FFEE123456789Aull);
  std::mt19937_64 dropout_rng(seed ^ 0x5EEDD20B0A7ull);
  AdamW opt(params, weight_decay);
  RelationModelParams grads = zeros_like(params);

  std::vector<int> idx(dataset.size());
  std::iota(idx.begin(), idx.end(), 0);

  std::vector<double> curve;
  long long step = 0;
  double epoch_loss = 0;
  long long epoch_count = 0;
  size_t cursor = idx.size();  // force initial shuffle

  while (step < steps) {
    if (cursor >= idx.size()) {
      if (epoch_count > 0) {
        curve.push_back(epoch_loss / static_cast<double>(epoch_count));
        epoch_loss = 0;
        epoch_count = 0;
      }
      std::shuffle(idx.begin(), idx.end(), shuffle_rng);
      cursor = 0;
    }
    zero_grads(grads);
    int taken = 0;
    double batch_loss = 0;
    while (taken < batch_size && cursor < idx.size()) {
      batch_loss += example_loss_and_grad(
          params, dataset[idx[cursor]], grads,
          params.config.dropout > 0 ? &dropout_rng : nullptr);
      ++cursor;
      ++taken;
    }
    if (taken == 0) continue;
    for (auto& ref : tensor_refs(grads))
      for (auto& e : *ref.data) e /= taken;
    const double lr =
        base_lr * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) /
                                        static_cast<double>(std::max<long long>(1, steps))));
    opt.step(params, grads, lr);
    epoch_loss += batch_loss;
    epoch_count += taken;
    ++step;
  }
  if (epoch_count > 0) curve.push_back(epoch_loss / static_cast<double>(epoch_count));
  return curve;
}

}  // namespace

TrainResult train_relation_model(const std::vector<TrainingExample>& dataset,
                                 const RelationModelConfig& config,
                                 const TrainHyperparams& hyper) {
  config.validate();
  if (dataset.empty()) throw InvalidInput("train_relation_model: empty dataset");
  for (const auto& ex : dataset) validate_example(ex, config);
  if (hyper.batch_size < 1) throw InvalidInput("train_relation_model: batch_size < 1");
  if (hyper.epochs < 0) throw InvalidInput("train_relation_model: negative epochs");

  RelationModelParams params = init_params(config, hyper.seed);
  const long long steps_per_epoch =
      (static_cast<long long>(dataset.size()) + hyper.batch_size - 1) / hyper.batch_size;
  const long long total_steps = steps_per_epoch * hyper.epochs;

  TrainResult result;
  result.loss_curve = run_training(params, dataset, hyper.learning_rate,
                                   hyper.weight_decay, hyper.batch_size, total_steps,
                                   hyper.seed);
  params.trained_lr = hyper.learning_rate;
  params.trained_steps = total_steps;
  params.loss_curve = result.loss_curve;
  result.params = std::move(params);
  return result;
}

void train_more(RelationModelParams& params, const std::vector<TrainingExample>& dataset,
                double learning_rate, int steps, int batch_size, uint64_t seed) {
  if (dataset.empty()) throw InvalidInput("train_more: empty dataset");
  for (const auto& ex : dataset) validate_example(ex, params.config);
  auto curve = run_training(params, dataset, learning_rate, 0.01, batch_size, steps, seed);
  params.loss_curve.insert(params.loss_curve.end(), curve.begin(), curve.end());
}

double mean_loss(const RelationModelParams& params,
                 const std::vector<TrainingExample>& dataset) {
  if (dataset.empty()) throw InvalidInput("mean_loss: empty dataset");
  double total = 0;
  for (const auto& ex : dataset) {
    const Mat features = embed_elements(ex.grid_boxes, ex.cats, params);
    const Mat logits = encode(features, params);
    total += loss_from_logits(logits, ex.target, nullptr);
  }
  return total / static_cast<double>(dataset.size());
}

std::vector<int> predict_order(const std::vector<Block>& blocks, double page_w,
                               double page_h, const RelationModelParams& params,
                               const std::vector<char>* skip) {
  if (blocks.empty()) return {};
  std::vector<BBox> boxes;
  std::vector<Category> cats;
  for (const auto& b : blocks) {
    boxes.push_back(normalize_bbox(b.bbox, page_w, page_h));
    cats.push_back(b.category);
  }
  const Mat features = embed_elements(boxes, cats, params);
  EncodeOptions opts;
  opts.skip = skip;
  const Mat logits = encode(features, params, opts);
  return greedy_decode(logits, static_cast<int>(blocks.size()));
}

TrainingExample example_from_page(const Page& page, const std::vector<int>& gt_order) {
  TrainingExample ex;
  for (const auto& b : page.blocks) {
    ex.grid_boxes.push_back(normalize_bbox(b.bbox, page.width, page.height));
    ex.cats.push_back(b.category);
  }
  ex.target = gt_order;
  return ex;
}

// ---------------------------------------------------------------------------
// auto-labeling

std::vector<int> autolabel_block_order(const std::vector<Block>& blocks,
                                       const std::vector<Line>& lines) {
  const int n = static_cast<int>(blocks.size());
  if (n == 0) return {};

  std::vector<double> score(n, 0.0);
  std::vector<bool> scored(n, false);
  for (int i = 0; i < n; ++i) {
    double sum = 0;
    int count = 0;
    for (const auto& l : lines) {
      if (blocks[i].bbox.contains_point(l.bbox.cx(), l.bbox.cy())) {
        sum += l.order;
        ++count;
      }
    }
    if (count > 0) {
      score[i] = sum / count;
      scored[i] = true;
    }
  }

  // Fallbacks for line-free blocks: a caption link pins them right before
  // their caption; otherwise they follow the nearest scored block above.
  const auto links = link_captions(blocks);
  constexpr double kEps = 1e-6;
  for (int i = 0; i < n; ++i) {
    if (scored[i]) continue;
    bool placed = false;
    for (const auto& link : links) {
      if (!link.linked || link.target_id != blocks[i].id) continue;
      for (int j = 0; j < n; ++j) {
        if (blocks[j].id == link.caption_id && scored[j]) {
          score[i] = score[j] - kEps;
          placed = true;
        }
      }
    }
    if (placed) continue;
    int anchor = -1;
    double best = 0;
    for (int j = 0; j < n; ++j) {
      if (!scored[j]) continue;
      if (blocks[j].bbox.cy() > blocks[i].bbox.cy()) continue;  // want above
      const double dx = blocks[j].bbox.cx() - blocks[i].bbox.cx();
      const double dy = blocks[j].bbox.cy() - blocks[i].bbox.cy();
      const double dist = std::sqrt(dx * dx + dy * dy);
      if (anchor < 0 || dist < best) {
        anchor = j;
        best = dist;
      }
    }
    if (anchor >= 0) score[i] = score[anchor] + kEps;
    // else: all-geometric page; score stays 0 and the (y1,x1) tie-break rules.
  }

  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (score[a] != score[b]) return score[a] < score[b];
    if (blocks[a].bbox.y1 != blocks[b].bbox.y1) return blocks[a].bbox.y1 < blocks[b].bbox.y1;
    if (blocks[a].bbox.x1 != blocks[b].bbox.x1) return blocks[a].bbox.x1 < blocks[b].bbox.x1;
    return a < b;
  });
  std::vector<int> rank(n);
  for (int r = 0; r < n; ++r) rank[idx[r]] = r;
  return rank;
}

// ---------------------------------------------------------------------------
// serialization

namespace {
constexpr char kMagic[4] = {'S', 'R', 'R', 'M'};
constexpr uint32_t kFormatVersion = 1;

json config_to_json(const RelationModelConfig& c) {
  return json{{"coord_embed_dim", c.coord_embed_dim},
              {"layers", c.layers},
              {"heads", c.heads},
              {"ffn_multiplier", c.ffn_multiplier},
              {"max_elements", c.max_elements},
              {"dropout", c.dropout},
              {"use_category", c.use_category}};
}

RelationModelConfig config_from_json(const json& j) {
  RelationModelConfig c;
  c.coord_embed_dim = j.at("coord_embed_dim").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ffn_multiplier = j.at("ffn_multiplier").get<int>();
  c.max_elements = j.at("max_elements").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.use_category = j.at("use_category").get<bool>();
  return c;
}
}  // namespace

void save_model(const RelationModelParams& params, const std::string& path) {
  json header;
  header["format"] = "srrdoc-relation";
  header["version"] = kFormatVersion;
  header["config"] = config_to_json(params.config);
  header["seed"] = params.seed;
  header["loss_curve"] = params.loss_curve;
  header["trained_lr"] = params.trained_lr;
  header["trained_steps"] = params.trained_steps;

  auto refs = tensor_refs(const_cast<RelationModelParams&>(params));
  size_t total = 0;
  for (const auto& r : refs) total += r.data->size();
  header["total_values"] = total;

  const std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot open for writing: " + path);
  out.write(kMagic, 4);
  const uint32_t ver = kFormatVersion;
  const uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& r : refs)
    out.write(reinterpret_cast<const char*>(r.data->data()),
              static_cast<std::streamsize>(r.data->size() * sizeof(double)));
  if (!out) throw InvalidInput("failed writing model: " + path);
}

RelationModelParams load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open model: " + path);
  char magic[4];
  uint32_t ver = 0;
  uint64_t hlen = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw InvalidInput("not a relation model file: " + path);
  if (ver != kFormatVersion)
    throw InvalidInput("unsupported model version in " + path);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  const json header = json::parse(hs);

  RelationModelParams params = init_params(config_from_json(header.at("config")), 0);
  params.seed = header.at("seed").get<uint64_t>();
  params.loss_curve = header.at("loss_curve").get<std::vector<double>>();
  params.trained_lr = header.at("trained_lr").get<double>();
  params.trained_steps = header.at("trained_steps").get<long long>();

  auto refs = tensor_refs(params);
  size_t total = 0;
  for (const auto& r : refs) total += r.data->size();
  if (header.at("total_values").get<size_t>() != total)
    throw InvalidInput("model tensor sizes do not match header: " + path);
  for (auto& r : refs) {
    in.read(reinterpret_cast<char*>(r.data->data()),
            static_cast<std::streamsize>(r.data->size() * sizeof(double)));
  }
  if (!in) throw InvalidInput("truncated model file: " + path);
  return params;
}

}  // namespace srrdoc
