#pragma once

#include "timecap/core.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace timecap::gateway {

enum class PromptRole { contextualize, predict_plain, predict_implicit, predict_explicit };

std::string to_string(PromptRole role);

/// An in-context demonstration: a past summary and its outcome.
struct Demonstration {
  TextSummary summary;
  ClassLabel label;
};

/// Prompt text with {named} placeholders. The contextualize template uses
/// {resolution}, {domain_hint}, {channel_names}, {window_table}; the predict
/// templates use {label_vocabulary}, {in_context_block}, {summary},
/// {evidence_clause} (and {example_range} for the explicit variant). The
/// contextualize template must not reference {label_vocabulary}.
struct PromptTemplate {
  PromptRole role = PromptRole::contextualize;
  std::string text;

  static PromptTemplate default_for(PromptRole role);

  /// Checks that every placeholder the role's builder substitutes exists.
  void validate() const;
};

/// Renders the contextualizer prompt p_C: raw-value table, channel names,
/// resolution, domain hint, and a summarization instruction. Never contains
/// the label vocabulary.
std::string build_contextualize_prompt(const TimeSeriesWindow& window,
                                       const std::string& domain_hint);
std::string build_contextualize_prompt(const TimeSeriesWindow& window,
                                       const std::string& domain_hint,
                                       const PromptTemplate& tpl);

/// Renders the predictor prompt p_P (plain/implicit/explicit variants) with
/// the numbered in-context block ahead of the query summary. The response
/// contract is a final "Answer: <class>" line; the explicit variant adds a
/// "Most relevant example: <number>" line.
std::string build_predict_prompt(const TextSummary& query,
                                 const std::vector<Demonstration>& in_context, PromptRole mode,
                                 const LabelSchema& schema);
std::string build_predict_prompt(const TextSummary& query,
                                 const std::vector<Demonstration>& in_context, PromptRole mode,
                                 const LabelSchema& schema, const PromptTemplate& tpl);

struct LlmRequest {
  std::string prompt;
  double temperature = 0.0;
  int max_tokens = 1024;
};

struct LlmResponse {
  std::string text;
  std::string provider_id;
  std::string model;
  double latency_ms = 0.0;
  bool from_cache = false;
};

/// One completion backend. Implementations throw Error(transport) or
/// Error(rate_limit); the client owns retry and caching.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string id() const = 0;
  virtual std::string model() const = 0;
  virtual std::string complete(const LlmRequest& request) = 0;
};

/// Deterministic offline provider. Behaviour is a pure function of the
/// rendered prompt: contextualize prompts get a stats-and-trend summary,
/// predict prompts get the majority outcome of the in-context block (first
/// vocabulary entry when zero-shot), always in parseable answer format.
class MockProvider : public Provider {
 public:
  explicit MockProvider(std::string model_name = "mock-1") : model_(std::move(model_name)) {}
  std::string id() const override { return "mock"; }
  std::string model() const override { return model_; }
  std::string complete(const LlmRequest& request) override;

 private:
  std::string model_;
};

struct HttpProviderConfig {
  std::string base_url;  // e.g. "http://localhost:8080"
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-4";
  std::string api_key_env = "TIMECAP_API_KEY";
  int timeout_s = 60;
};

/// OpenAI-style chat-completions client (JSON body: model, messages, temperature).
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(HttpProviderConfig config);
  std::string id() const override { return "http:" + config_.base_url; }
  std::string model() const override { return config_.model; }
  std::string complete(const LlmRequest& request) override;

 private:
  HttpProviderConfig config_;
};

struct ClientConfig {
  std::filesystem::path cache_dir;  // empty disables the cache
  int max_retries = 3;
  int backoff_initial_ms = 250;
  int max_concurrency = 4;
  int min_interval_ms = 0;  // shared rate limit between provider calls
};

/// Cache-first completion front end. Cache entries are content-addressed
/// files keyed by sha256(provider id, model, prompt, temperature); the full
/// request is stored alongside and verified on read. Writes are
/// temp-file-plus-rename, and concurrent identical requests share one
/// provider call.
class LlmClient {
 public:
  LlmClient(std::shared_ptr<Provider> provider, ClientConfig config);
  ~LlmClient();
  LlmClient(const LlmClient&) = delete;
  LlmClient& operator=(const LlmClient&) = delete;

  LlmResponse complete(const LlmRequest& request);

  std::string cache_key(const LlmRequest& request) const;
  const ClientConfig& config() const { return config_; }
  Provider& provider() { return *provider_; }

  /// Number of provider invocations (cache misses) since construction.
  long provider_calls() const { return provider_calls_; }

 private:
  std::optional<std::string> cache_lookup(const std::string& key, const LlmRequest& request) const;
  void cache_store(const std::string& key, const LlmRequest& request,
                   const std::string& response_text) const;
  std::string call_with_retry(const LlmRequest& request);

  std::shared_ptr<Provider> provider_;
  ClientConfig config_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<std::pair<std::mutex, std::string>>> in_flight_;
  std::unique_ptr<class Gate> gate_;
  std::mutex rate_mutex_;
  std::chrono::steady_clock::time_point next_call_allowed_{};
  long provider_calls_ = 0;
};

struct ParsedPrediction {
  std::optional<ClassLabel> label;  // nullopt = abstention (unparseable)
  std::string rationale;
  std::optional<int> selected_example;  // 1-based, explicit mode
  std::string raw_text;
};

/// Scans for the final "Answer:" line and matches it (case-insensitively)
/// against the schema. Unparseable text yields an abstention, never a throw.
ParsedPrediction parse_prediction(const std::string& text, const LabelSchema& schema,
                                  PromptRole mode);

/// Text-embedding backend used by the encoder's frozen external text path.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual Vector embed(const std::string& text, int dim) = 0;
};

/// Deterministic pseudo-embedding: token-hash mixture, unit norm.
class MockEmbeddingProvider : public EmbeddingProvider {
 public:
  Vector embed(const std::string& text, int dim) override;
};

struct HttpEmbeddingConfig {
  std::string base_url;
  std::string path = "/v1/embeddings";
  std::string model = "text-embedding-3-small";
  std::string api_key_env = "TIMECAP_API_KEY";
  int timeout_s = 60;
};

class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(HttpEmbeddingConfig config) : config_(std::move(config)) {}
  Vector embed(const std::string& text, int dim) override;

 private:
  HttpEmbeddingConfig config_;
};

}  // namespace timecap::gateway
