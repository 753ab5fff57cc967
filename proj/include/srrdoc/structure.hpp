#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "srrdoc/core.hpp"

namespace srrdoc {

struct Detection {
  BBox bbox;
  Category category = Category::Text;
  double score = 1.0;
  std::string source_id;   // ground-truth block id when known, else synthetic
  bool perturbed = false;  // came out of perturb_detections
};

/// Simulates fine-grained text/formula detection stages: text blocks are
/// split into jittered line boxes so downstream errors accumulate.
struct NoiseConfig {
  double split_probability = 0.0;  // in [0,1]
  double boundary_jitter = 0.0;    // px, >= 0
  uint64_t seed = 0;

  void validate() const;
};

/// Stateless after construction; detect() may be called concurrently on
/// different pages unless serial_only() says otherwise.
class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::vector<Detection> detect(const Page& page) const = 0;
  virtual std::string name() const = 0;
  virtual bool serial_only() const { return false; }
};

// Ground-truth passthrough, used to isolate downstream stages.
std::vector<Detection> oracle_detect(const Page& page);

// Recursive alternating projection splits over line/block occupancy.
// gap_threshold is in pixels at a 1000-unit page scale.
std::vector<Detection> xycut_detect(const Page& page, double gap_threshold = 12.0);

// Indices of the min(K,|scores|) largest scores, descending; ties keep the
// lower index first.
std::vector<int> select_topk_queries(const std::vector<double>& scores, int k);

std::vector<Detection> perturb_detections(const std::vector<Detection>& dets,
                                          const NoiseConfig& cfg, const Page& page);

class OracleDetector : public Detector {
 public:
  std::vector<Detection> detect(const Page& page) const override {
    return oracle_detect(page);
  }
  std::string name() const override { return "oracle"; }
};

class XYCutDetector : public Detector {
 public:
  explicit XYCutDetector(double gap_threshold = 12.0) : gap_(gap_threshold) {}
  std::vector<Detection> detect(const Page& page) const override {
    return xycut_detect(page, gap_);
  }
  std::string name() const override { return "xycut"; }

 private:
  double gap_;
};

// Detections supplied by a sidecar process as corpus-schema JSONL; pages are
// matched by line index.
class ExternalDetector : public Detector {
 public:
  explicit ExternalDetector(const std::string& jsonl_path);
  std::vector<Detection> detect(const Page& page) const override;
  std::string name() const override { return "external"; }

 private:
  std::vector<std::vector<Detection>> per_page_;
};

std::unique_ptr<Detector> make_detector(const std::string& kind,
                                        const std::string& external_path = "");

}  // namespace srrdoc
