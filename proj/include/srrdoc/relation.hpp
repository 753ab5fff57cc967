#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "srrdoc/core.hpp"
#include "srrdoc/mat.hpp"

namespace srrdoc {

struct RelationModelConfig {
  int coord_embed_dim = 32;  // per-coordinate embedding width
  int layers = 4;
  int heads = 4;
  int ffn_multiplier = 4;
  int max_elements = 64;  // P, number of rank columns
  double dropout = 0.1;
  bool use_category = true;  // category-aware embedding on/off

  int model_dim() const { return 6 * coord_embed_dim; }
  int ffn_dim() const { return model_dim() * ffn_multiplier; }
  void validate() const;
};

struct LayerWeights {
  Mat wq, wk, wv, wo;  // D x D
  std::vector<double> bq, bk, bv, bo;
  std::vector<double> ln1_g, ln1_b, ln2_g, ln2_b;
  Mat w1, w2;  // D x F, F x D
  std::vector<double> b1, b2;
};

struct TrainHyperparams {
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  int batch_size = 32;
  int epochs = 30;
  uint64_t seed = 1;
};

/// All learnable tensors of the reading-order model, plus the training
/// record needed to resume or fine-tune.
struct RelationModelParams {
  RelationModelConfig config;
  std::array<Mat, 6> coord_tables;  // x1, y1, x2, y2, w, h — each 1001 x d
  Mat cat_table;                    // kNumCategories x D
  std::vector<LayerWeights> layers;
  Mat classifier;  // D x P, no bias: zero layers reduce to a plain matmul
  uint64_t seed = 0;
  std::vector<double> loss_curve;  // mean loss per epoch
  double trained_lr = 0.0;
  long long trained_steps = 0;
};

RelationModelParams init_params(const RelationModelConfig& config, uint64_t seed);
RelationModelParams zeros_like(const RelationModelParams& p);

struct TensorRef {
  std::vector<double>* data;
  bool decay;  // weight decay applies (matrices and embeddings, not biases/LN)
};
std::vector<TensorRef> tensor_refs(RelationModelParams& p);

// Boxes must already be on the 0..1000 grid (see normalize_bbox).
// Row i = Concat(E_x1,E_y1,E_x2,E_y2,E_w,E_h) + E_cat.
Mat embed_elements(const std::vector<BBox>& grid_boxes,
                   const std::vector<Category>& cats, const RelationModelParams& p);

struct LayerCache {
  Mat x_in;
  Mat ln1_xhat;
  std::vector<double> ln1_rstd;
  Mat q, k, v;
  std::vector<Mat> att;  // per head, post-softmax
  Mat concat;
  std::vector<char> mask1;
  Mat x2;
  Mat ln2_xhat;
  std::vector<double> ln2_rstd;
  Mat h_pre, h;
  std::vector<char> mask2;
  bool skipped = false;
};

struct ForwardCache {
  Mat features;
  std::vector<LayerCache> layers;
  Mat final_x;
};

struct EncodeOptions {
  const std::vector<char>* skip = nullptr;    // bypass layer (residual passthrough)
  std::mt19937_64* dropout_rng = nullptr;     // training mode when set
};

// Pre-norm transformer stack + linear classifier to P rank columns. No
// sequence positional encoding, so the stack is permutation-equivariant.
Mat encode(const Mat& features, const RelationModelParams& p, EncodeOptions opts = {},
           ForwardCache* cache = nullptr);

// Accumulates into grads; writes d(features) for the embedding backward.
void encode_backward(const Mat& dlogits, const ForwardCache& cache,
                     const RelationModelParams& p, RelationModelParams& grads,
                     Mat& dfeatures);

// Iterative conflict resolution: every element claims its best column, the
// highest logit wins each contested column, losers move to their best
// unclaimed one. Ties go to the lower element index. Returns rank per element.
std::vector<int> greedy_decode(const Mat& logits, int n_elements);

struct TrainingExample {
  std::vector<BBox> grid_boxes;
  std::vector<Category> cats;
  std::vector<int> target;  // rank per element
};

struct TrainResult {
  RelationModelParams params;
  std::vector<double> loss_curve;
};

// Mean masked cross-entropy between logit rows and target ranks, AdamW with
// cosine decay. Deterministic for a given seed.
TrainResult train_relation_model(const std::vector<TrainingExample>& dataset,
                                 const RelationModelConfig& config,
                                 const TrainHyperparams& hyper);

// Continues training an existing model (used by fine-tuning).
void train_more(RelationModelParams& params, const std::vector<TrainingExample>& dataset,
                double learning_rate, int steps, int batch_size, uint64_t seed);

double mean_loss(const RelationModelParams& params,
                 const std::vector<TrainingExample>& dataset);

std::vector<int> predict_order(const std::vector<Block>& blocks, double page_w,
                               double page_h, const RelationModelParams& params,
                               const std::vector<char>* skip = nullptr);

TrainingExample example_from_page(const Page& page, const std::vector<int>& gt_order);

// Blocks rank by the mean reading rank of the lines inside them; line-free
// blocks fall back to caption links, then to the nearest scored block above.
std::vector<int> autolabel_block_order(const std::vector<Block>& blocks,
                                       const std::vector<Line>& lines);

void save_model(const RelationModelParams& params, const std::string& path);
RelationModelParams load_model(const std::string& path);

}  // namespace srrdoc
