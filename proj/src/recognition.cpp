#include "srrdoc/recognition.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "srrdoc/corpus.hpp"
#include "srrdoc/text.hpp"

namespace srrdoc {

using nlohmann::json;

PromptSet PromptSet::defaults() {
  PromptSet p;
  p.prompts_[Category::Text] = "Please transcribe the text in this region exactly.";
  p.prompts_[Category::Title] = "Please transcribe the heading text in this region.";
  p.prompts_[Category::Table] =
      "Reconstruct this table as HTML, preserving merged cells.";
  p.prompts_[Category::Figure] = "Describe the figure briefly.";
  p.prompts_[Category::Formula] = "Write this formula as LaTeX.";
  p.prompts_[Category::Caption] = "Please transcribe the caption text.";
  p.prompts_[Category::Code] = "Please transcribe the code block verbatim.";
  p.prompts_[Category::PageHeader] = "Please transcribe the page header text.";
  p.prompts_[Category::PageFooter] = "Please transcribe the page footer text.";
  return p;
}

PromptSet PromptSet::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open prompt file: " + path);
  json j;
  in >> j;
  PromptSet p = defaults();
  for (auto& [key, value] : j.items()) {
    const auto cat = category_from_name(key);
    if (!cat) throw InvalidInput("prompt file: unknown category " + key);
    const std::string text = value.get<std::string>();
    if (text.empty()) throw InvalidInput("prompt file: empty prompt for " + key);
    p.prompts_[*cat] = text;
  }
  return p;
}

PromptTemplate PromptSet::for_category(Category cat) const {
  return {cat, prompts_.at(cat)};
}

PromptTemplate prompt_for_category(Category cat) {
  static const PromptSet defaults = PromptSet::defaults();
  return defaults.for_category(cat);
}

void ErrorModel::validate() const {
  if (char_error_rate < 0 || char_error_rate > 1)
    throw InvalidInput("ErrorModel: char_error_rate out of range");
}

std::string crop_ground_truth(const CropRecord& crop) {
  // A block that mostly fills the region wins; otherwise stitch line texts.
  const Block* best = nullptr;
  double best_iou = 0;
  for (const auto& b : crop.blocks) {
    const double v = iou(crop.region, b.bbox);
    if (v > best_iou) {
      best_iou = v;
      best = &b;
    }
  }
  if (best && best_iou >= 0.5) return best->content.value_or("");
  std::string out;
  for (const auto& l : crop.lines) {
    if (!out.empty()) out += ' ';
    out += l.text;
  }
  return out;
}

int token_count(const std::string& content) {
  const auto cps = utf8_decode(content);
  return static_cast<int>((cps.size() + 3) / 4);
}

namespace {

uint64_t fnv1a(std::string_view s, uint64_t seed) {
  uint64_t h = 1469598103934665603ull ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

RecognitionResult MockRecognizer::recognize(const RecognitionRequest& req) const {
  const auto start = std::chrono::steady_clock::now();
  std::string content = crop_ground_truth(req.region);

  // Per-request stream: hash(page id, block id, global seed).
  std::mt19937_64 rng(fnv1a(req.page_id + "/" + req.block_id, err_.seed));
  if (err_.char_error_rate > 0) {
    auto cps = utf8_decode(content);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> alt(0, 35);
    for (auto& cp : cps) {
      if (unit(rng) < err_.char_error_rate) {
        const int a = alt(rng);
        cp = a < 26 ? static_cast<uint32_t>('a' + a) : static_cast<uint32_t>('0' + a - 26);
      }
    }
    content = utf8_encode(cps);
  }
  if (err_.boundary_artifact && req.region.perturbed) {
    // The classic cropped-superscript artifact from imprecise detection.
    const int digit = static_cast<int>(rng() % 10);
    content = "^{" + std::to_string(digit) + "} " + content;
  }

  if (base_ms_ > 0 || per_token_ms_ > 0) {
    const double ms = base_ms_ + per_token_ms_ * token_count(content);
    std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
  }

  RecognitionResult res;
  res.block_id = req.block_id;
  res.content = std::move(content);
  res.latency_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

std::string base64_encode(const std::string& bytes) {
  static const char* tbl =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  while (i + 2 < bytes.size()) {
    const uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                       (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                       static_cast<unsigned char>(bytes[i + 2]);
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(tbl[(v >> 6) & 63]);
    out.push_back(tbl[v & 63]);
    i += 3;
  }
  if (i + 1 == bytes.size()) {
    const uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                       (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(tbl[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

RemoteRecognizer::RemoteRecognizer(RemoteConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.base_url.empty()) {
    if (const char* env = std::getenv("SRRDOC_API_BASE")) cfg_.base_url = env;
  }
  if (cfg_.api_key.empty()) {
    if (const char* env = std::getenv("SRRDOC_API_KEY")) cfg_.api_key = env;
  }
  if (cfg_.base_url.empty())
    throw InvalidInput("remote recognizer: no endpoint (set SRRDOC_API_BASE)");
}

static std::string crop_payload(const CropRecord& crop) {
  // Rasterless pages ship the crop record itself as the image payload.
  json j;
  j["region"] = {crop.region.x1, crop.region.y1, crop.region.x2, crop.region.y2};
  j["lines"] = json::array();
  for (const auto& l : crop.lines)
    j["lines"].push_back({{"bbox", {l.bbox.x1, l.bbox.y1, l.bbox.x2, l.bbox.y2}},
                          {"order", l.order},
                          {"text", l.text}});
  return j.dump();
}

RecognitionResult RemoteRecognizer::recognize(const RecognitionRequest& req) const {
  const auto start = std::chrono::steady_clock::now();

  json body;
  body["model"] = cfg_.model;
  body["messages"] = json::array(
      {json{{"role", "user"},
            {"content",
             json::array(
                 {json{{"type", "text"}, {"text", req.prompt}},
                  json{{"type", "image_url"},
                       {"image_url",
                        {{"url", "data:image/png;base64," +
                                     base64_encode(crop_payload(req.region))}}}}})}}});

  // One client per call keeps concurrent scheduler slots independent.
  httplib::Client cli(cfg_.base_url);
  cli.set_connection_timeout(std::chrono::duration<double>(cfg_.timeout_s));
  cli.set_read_timeout(std::chrono::duration<double>(cfg_.timeout_s));
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  auto resp = cli.Post("/v1/chat/completions", headers, body.dump(), "application/json");
  if (!resp)
    throw RecognizeError(true, "transport failure: " + httplib::to_string(resp.error()));
  if (resp->status == 429 || resp->status >= 500)
    throw RecognizeError(true, "server busy, status " + std::to_string(resp->status));
  if (resp->status != 200)
    throw RecognizeError(false, "unexpected status " + std::to_string(resp->status));

  RecognitionResult res;
  res.block_id = req.block_id;
  try {
    const json j = json::parse(resp->body);
    res.content = j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const std::exception& e) {
    throw RecognizeError(false, std::string("malformed response: ") + e.what());
  }
  res.latency_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

RecognitionRequest build_request(const Page& page, const Detection& det,
                                 const PromptSet& prompts) {
  RecognitionRequest req;
  req.page_id = page.id;
  req.block_id = det.source_id;
  req.region = crop_region(page, det.bbox);
  req.region.perturbed = det.perturbed;
  req.category = det.category;
  req.prompt = prompts.for_category(det.category).prompt_text;
  return req;
}

namespace {

RecognitionResult run_with_retries(const Recognizer& recognizer,
                                   const RecognitionRequest& req,
                                   const RetryPolicy& retry) {
  const auto start = std::chrono::steady_clock::now();
  for (int attempt = 1;; ++attempt) {
    try {
      RecognitionResult res = recognizer.recognize(req);
      res.attempts = attempt;
      return res;
    } catch (const RecognizeError& e) {
      if (!e.retryable || attempt >= retry.max_attempts) {
        RecognitionResult res;
        res.block_id = req.block_id;
        res.failed = true;
        res.attempts = attempt;
        res.error = e.what();
        res.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                      start)
                            .count();
        return res;
      }
      const double ms = retry.backoff_base_ms * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
    }
  }
}

}  // namespace

std::vector<RecognitionResult> recognize_page_blocks(const Page& page,
                                                     const std::vector<Detection>& dets,
                                                     const Recognizer& recognizer,
                                                     int parallelism,
                                                     const RetryPolicy& retry) {
  if (parallelism < 1) throw InvalidInput("recognize_page_blocks: parallelism < 1");
  const PromptSet prompts = PromptSet::defaults();
  const int n = static_cast<int>(dets.size());
  std::vector<RecognitionRequest> requests(n);
  for (int i = 0; i < n; ++i) requests[i] = build_request(page, dets[i], recognizer.serial_only() ? prompts : prompts);

  std::vector<RecognitionResult> results(n);
  const bool serial = parallelism == 1 || recognizer.serial_only() || n <= 1;
  if (serial) {
    for (int i = 0; i < n; ++i) results[i] = run_with_retries(recognizer, requests[i], retry);
    return results;
  }
  const int workers = std::min(parallelism, n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
  for (int i = 0; i < n; ++i) {
    results[i] = run_with_retries(recognizer, requests[i], retry);
  }
  return results;
}

}  // namespace srrdoc
