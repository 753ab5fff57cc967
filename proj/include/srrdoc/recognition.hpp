#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "srrdoc/core.hpp"
#include "srrdoc/structure.hpp"

namespace srrdoc {

struct PromptTemplate {
  Category category = Category::Text;
  std::string prompt_text;
};

/// One instruction per category; Table asks for HTML, Formula for LaTeX,
/// Text for a plain transcription. Editable as a JSON file.
class PromptSet {
 public:
  static PromptSet defaults();
  static PromptSet from_file(const std::string& path);
  PromptTemplate for_category(Category cat) const;

 private:
  std::map<Category, std::string> prompts_;
};

PromptTemplate prompt_for_category(Category cat);

struct RecognitionRequest {
  std::string page_id;
  std::string block_id;
  CropRecord region;
  Category category = Category::Text;
  std::string prompt;
};

struct RecognitionResult {
  std::string block_id;
  std::string content;
  double latency_s = 0;
  int attempts = 1;
  bool failed = false;
  std::string error;
};

struct RecognizeError : std::runtime_error {
  bool retryable;
  RecognizeError(bool retry, const std::string& what)
      : std::runtime_error(what), retryable(retry) {}
};

class Recognizer {
 public:
  virtual ~Recognizer() = default;
  // Throws RecognizeError on failure; the scheduler handles retries.
  virtual RecognitionResult recognize(const RecognitionRequest& req) const = 0;
  virtual bool serial_only() const { return false; }
  virtual std::string name() const = 0;
};

/// Reproduces recognition failure modes deterministically: per-character
/// flips, and spurious superscript tokens on regions cut by noisy detection.
struct ErrorModel {
  double char_error_rate = 0.0;
  bool boundary_artifact = false;
  uint64_t seed = 0;

  void validate() const;
};

class MockRecognizer : public Recognizer {
 public:
  explicit MockRecognizer(ErrorModel err = {}, double latency_base_ms = 0,
                          double latency_per_token_ms = 0)
      : err_(err), base_ms_(latency_base_ms), per_token_ms_(latency_per_token_ms) {
    err_.validate();
  }
  RecognitionResult recognize(const RecognitionRequest& req) const override;
  std::string name() const override { return "mock"; }

 private:
  ErrorModel err_;
  double base_ms_;
  double per_token_ms_;
};

// Ground truth visible inside a crop: the best-matching block's content, or
// the contained line texts joined in reading order.
std::string crop_ground_truth(const CropRecord& crop);

// ~4 characters per token, matching the latency simulation.
int token_count(const std::string& content);

struct RemoteConfig {
  std::string base_url;  // SRRDOC_API_BASE when empty
  std::string api_key;   // SRRDOC_API_KEY when empty
  std::string model = "srrdoc-recognizer";
  double timeout_s = 30.0;
};

/// Chat-completions style HTTP client: POST /v1/chat/completions with the
/// prompt and a base64 image part, reads choices[0].message.content.
class RemoteRecognizer : public Recognizer {
 public:
  explicit RemoteRecognizer(RemoteConfig cfg);
  RecognitionResult recognize(const RecognitionRequest& req) const override;
  std::string name() const override { return "remote"; }

 private:
  RemoteConfig cfg_;
};

std::string base64_encode(const std::string& bytes);

struct RetryPolicy {
  int max_attempts = 3;
  double backoff_base_ms = 200;  // doubles per retry; retryable errors only
};

RecognitionRequest build_request(const Page& page, const Detection& det,
                                 const PromptSet& prompts);

// One result per detection, in detection order. At most `parallelism`
// requests are in flight; results for a deterministic recognizer are
// identical to the serial path.
std::vector<RecognitionResult> recognize_page_blocks(const Page& page,
                                                     const std::vector<Detection>& dets,
                                                     const Recognizer& recognizer,
                                                     int parallelism,
                                                     const RetryPolicy& retry = {});

}  // namespace srrdoc
