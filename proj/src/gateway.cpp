#include "timecap/gateway.hpp"

#include "timecap/digest.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

// vendor/httplib.h
#include <httplib.h>

namespace timecap::gateway {

using nlohmann::json;

std::string to_string(PromptRole role) {
  switch (role) {
    case PromptRole::contextualize: return "contextualize";
    case PromptRole::predict_plain: return "predict";
    case PromptRole::predict_implicit: return "predict_implicit";
    case PromptRole::predict_explicit: return "predict_explicit";
  }
  fail(ErrorCode::internal, "unknown prompt role");
}

namespace {

constexpr const char* kTableHeaderPrefix = "time,";

std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::string render_window_table(const TimeSeriesWindow& window) {
  const Matrix& values = window.raw();
  std::string table = kTableHeaderPrefix + join(window.channel_names, ",") + "\n";
  for (Eigen::Index t = 0; t < values.rows(); ++t) {
    table += format_timestamp(window.timestamp_at(t));
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      table += ',';
      table += format_double(values(t, c), 2);
    }
    table += '\n';
  }
  return table;
}

}  // namespace

namespace {

std::string substitute(std::string text,
                       const std::vector<std::pair<std::string, std::string>>& values) {
  for (const auto& [name, value] : values) {
    const std::string placeholder = "{" + name + "}";
    std::size_t pos = 0;
    while ((pos = text.find(placeholder, pos)) != std::string::npos) {
      text.replace(pos, placeholder.size(), value);
      pos += value.size();
    }
  }
  return text;
}

constexpr const char* kContextualizeTemplate =
    "[task: contextualize]\n"
    "You are looking at {resolution} multivariate time series data for {domain_hint}.\n"
    "Channels: {channel_names}.\n"
    "\n"
    "{window_table}"
    "\n"
    "Summarize the context and trends of this time series in one short "
    "paragraph. Mention notable levels and whether each channel is "
    "increasing, decreasing, or stable over the period. Draw on typical "
    "domain knowledge for this kind of data. Do not predict future "
    "events and do not state an outcome.\n";

constexpr const char* kPredictPlainTemplate =
    "[task: predict]\n"
    "Possible outcomes: {label_vocabulary}\n"
    "\n"
    "{in_context_block}"
    "Summary: {summary}\n"
    "\n"
    "Decide which outcome follows from the summary above{evidence_clause}.\n"
    "End your response with one line in exactly this format:\n"
    "Answer: <outcome>\n";

constexpr const char* kPredictImplicitTemplate =
    "[task: predict_implicit]\n"
    "Possible outcomes: {label_vocabulary}\n"
    "\n"
    "{in_context_block}"
    "Summary: {summary}\n"
    "\n"
    "Decide which outcome follows from the summary above{evidence_clause}.\n"
    "First give a brief rationale for your decision.\n"
    "End your response with one line in exactly this format:\n"
    "Answer: <outcome>\n";

constexpr const char* kPredictExplicitTemplate =
    "[task: predict_explicit]\n"
    "Possible outcomes: {label_vocabulary}\n"
    "\n"
    "{in_context_block}"
    "Summary: {summary}\n"
    "\n"
    "Decide which outcome follows from the summary above{evidence_clause}.\n"
    "{selection_instruction}"
    "End your response with one line in exactly this format:\n"
    "Answer: <outcome>\n";

}  // namespace

PromptTemplate PromptTemplate::default_for(PromptRole role) {
  switch (role) {
    case PromptRole::contextualize: return {role, kContextualizeTemplate};
    case PromptRole::predict_plain: return {role, kPredictPlainTemplate};
    case PromptRole::predict_implicit: return {role, kPredictImplicitTemplate};
    case PromptRole::predict_explicit: return {role, kPredictExplicitTemplate};
  }
  fail(ErrorCode::internal, "unknown prompt role");
}

void PromptTemplate::validate() const {
  auto require = [&](const char* name) {
    if (text.find("{" + std::string(name) + "}") == std::string::npos) {
      fail(ErrorCode::config,
           "prompt template for " + gateway::to_string(role) + " lacks {" + name + "}");
    }
  };
  if (role == PromptRole::contextualize) {
    require("resolution");
    require("domain_hint");
    require("channel_names");
    require("window_table");
    if (text.find("{label_vocabulary}") != std::string::npos) {
      fail(ErrorCode::config,
           "contextualize template must not reference the label vocabulary");
    }
    return;
  }
  require("label_vocabulary");
  require("in_context_block");
  require("summary");
  require("evidence_clause");
  if (role == PromptRole::predict_explicit) require("selection_instruction");
}

std::string build_contextualize_prompt(const TimeSeriesWindow& window,
                                       const std::string& domain_hint,
                                       const PromptTemplate& tpl) {
  if (tpl.role != PromptRole::contextualize) {
    fail(ErrorCode::invalid_input, "build_contextualize_prompt: template role mismatch");
  }
  tpl.validate();
  window.validate();
  return substitute(tpl.text, {{"resolution", to_string(window.resolution)},
                               {"domain_hint", domain_hint},
                               {"channel_names", join(window.channel_names, ", ")},
                               {"window_table", render_window_table(window)}});
}

std::string build_contextualize_prompt(const TimeSeriesWindow& window,
                                       const std::string& domain_hint) {
  return build_contextualize_prompt(window, domain_hint,
                                    PromptTemplate::default_for(PromptRole::contextualize));
}

std::string build_predict_prompt(const TextSummary& query,
                                 const std::vector<Demonstration>& in_context, PromptRole mode,
                                 const LabelSchema& schema, const PromptTemplate& tpl) {
  if (mode == PromptRole::contextualize || tpl.role != mode) {
    fail(ErrorCode::invalid_input, "build_predict_prompt: template/mode mismatch");
  }
  tpl.validate();
  if (trim(query.text).empty()) {
    fail(ErrorCode::invalid_input, "build_predict_prompt: empty query summary");
  }
  for (const Demonstration& demo : in_context) {
    if (demo.label.index < 0 || demo.label.index >= schema.num_classes()) {
      fail(ErrorCode::invalid_input, "build_predict_prompt: example label outside schema");
    }
  }

  std::string in_context_block;
  for (std::size_t i = 0; i < in_context.size(); ++i) {
    in_context_block += "Example " + std::to_string(i + 1) + ":\n";
    in_context_block += "Summary: " + in_context[i].summary.text + "\n";
    in_context_block += "Outcome: " + schema.name_of(in_context[i].label.index) + "\n\n";
  }
  const std::string evidence_clause =
      in_context.empty() ? "" : ", using the examples as past summary-outcome evidence";
  const std::string selection_instruction =
      in_context.empty()
          ? ""
          : "Identify the most relevant example (1.." + std::to_string(in_context.size()) +
                ") on a line in exactly this format:\nMost relevant example: <number>\n";

  return substitute(tpl.text, {{"label_vocabulary", join(schema.class_names(), ", ")},
                               {"in_context_block", in_context_block},
                               {"summary", query.text},
                               {"evidence_clause", evidence_clause},
                               {"selection_instruction", selection_instruction}});
}

std::string build_predict_prompt(const TextSummary& query,
                                 const std::vector<Demonstration>& in_context, PromptRole mode,
                                 const LabelSchema& schema) {
  return build_predict_prompt(query, in_context, mode, schema, PromptTemplate::default_for(mode));
}

// ---------------------------------------------------------------------------
// Mock provider
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream stream(text);
  std::string line;
  while (std::getline(stream, line)) lines.push_back(line);
  return lines;
}

std::string trend_word(const Vector& series) {
  const Eigen::Index n = series.size();
  if (n < 2) return "stable";
  // Least-squares slope against the step index.
  const double t_mean = static_cast<double>(n - 1) / 2.0;
  const double x_mean = series.mean();
  double cov = 0.0, var = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) {
    cov += (static_cast<double>(t) - t_mean) * (series(t) - x_mean);
    var += (static_cast<double>(t) - t_mean) * (static_cast<double>(t) - t_mean);
  }
  const double slope = cov / var;
  if (slope > 1e-12) return "increasing";
  if (slope < -1e-12) return "decreasing";
  return "stable";
}

std::string mock_contextualize(const std::vector<std::string>& lines) {
  // Locate the value table rendered by build_contextualize_prompt.
  std::size_t header = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].rfind(kTableHeaderPrefix, 0) == 0) {
      header = i;
      break;
    }
  }
  if (header == lines.size()) {
    fail(ErrorCode::invalid_input, "mock provider: contextualize prompt without value table");
  }

  std::vector<std::string> channels;
  {
    std::istringstream hs(lines[header].substr(5));
    std::string name;
    while (std::getline(hs, name, ',')) channels.push_back(trim(name));
  }

  std::vector<std::vector<double>> columns(channels.size());
  for (std::size_t i = header + 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) break;
    std::istringstream rs(lines[i]);
    std::string cell;
    std::getline(rs, cell, ',');  // timestamp
    for (std::size_t c = 0; c < channels.size() && std::getline(rs, cell, ','); ++c) {
      columns[c].push_back(std::stod(cell));
    }
  }
  if (columns.empty() || columns[0].empty()) {
    fail(ErrorCode::invalid_input, "mock provider: empty value table");
  }

  std::string summary = "Over the observed period of " + std::to_string(columns[0].size()) +
                        " steps: ";
  for (std::size_t c = 0; c < channels.size(); ++c) {
    Vector v = Eigen::Map<const Vector>(columns[c].data(), static_cast<Eigen::Index>(columns[c].size()));
    summary += channels[c] + " ranged from " + format_double(v.minCoeff(), 2) + " to " +
               format_double(v.maxCoeff(), 2) + " with mean " + format_double(v.mean(), 2) +
               ", ending at " + format_double(v(v.size() - 1), 2) + " (" + trend_word(v) +
               " trend)";
    summary += c + 1 < channels.size() ? "; " : ".";
  }
  return summary;
}

std::string mock_predict(const std::vector<std::string>& lines, PromptRole mode) {
  std::vector<std::string> vocabulary;
  std::vector<std::string> outcomes;
  for (const std::string& line : lines) {
    if (line.rfind("Possible outcomes: ", 0) == 0) {
      std::istringstream vs(line.substr(19));
      std::string name;
      while (std::getline(vs, name, ',')) vocabulary.push_back(to_lower(trim(name)));
    } else if (line.rfind("Outcome: ", 0) == 0) {
      outcomes.push_back(to_lower(trim(line.substr(9))));
    }
  }
  if (vocabulary.empty()) {
    fail(ErrorCode::invalid_input, "mock provider: predict prompt without outcome vocabulary");
  }

  // Majority vote over the in-context outcomes; ties and the zero-shot case
  // resolve to the lowest vocabulary index.
  std::vector<int> counts(vocabulary.size(), 0);
  for (const std::string& outcome : outcomes) {
    for (std::size_t k = 0; k < vocabulary.size(); ++k) {
      if (outcome == vocabulary[k]) {
        ++counts[k];
        break;
      }
    }
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < vocabulary.size(); ++k) {
    if (counts[k] > counts[best]) best = k;
  }

  std::string response;
  if (mode == PromptRole::predict_implicit) {
    if (outcomes.empty()) {
      response += "No past examples were provided; judging from the summary alone.\n";
    } else {
      response += "Rationale: " + std::to_string(counts[best]) + " of " +
                  std::to_string(outcomes.size()) + " similar past cases resulted in " +
                  vocabulary[best] + ".\n";
    }
  }
  if (mode == PromptRole::predict_explicit && !outcomes.empty()) {
    // Examples arrive nearest-first, so the first one is the closest match.
    response += "Most relevant example: 1\n";
  }
  response += "Answer: " + vocabulary[best] + "\n";
  return response;
}

}  // namespace

std::string MockProvider::complete(const LlmRequest& request) {
  const std::vector<std::string> lines = split_lines(request.prompt);
  if (lines.empty() || lines[0].rfind("[task: ", 0) != 0 || lines[0].back() != ']') {
    fail(ErrorCode::invalid_input, "mock provider: prompt without role marker");
  }
  const std::string role = lines[0].substr(7, lines[0].size() - 8);
  if (role == "contextualize") return mock_contextualize(lines);
  if (role == "predict") return mock_predict(lines, PromptRole::predict_plain);
  if (role == "predict_implicit") return mock_predict(lines, PromptRole::predict_implicit);
  if (role == "predict_explicit") return mock_predict(lines, PromptRole::predict_explicit);
  fail(ErrorCode::invalid_input, "mock provider: unrecognized role marker '" + role + "'");
}

// ---------------------------------------------------------------------------
// HTTP provider
// ---------------------------------------------------------------------------

HttpProvider::HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) {
    fail(ErrorCode::config, "http provider: base_url is required");
  }
}

std::string HttpProvider::complete(const LlmRequest& request) {
  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.timeout_s);
  client.set_read_timeout(config_.timeout_s);

  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  const json body = {
      {"model", config_.model},
      {"messages", json::array({json{{"role", "user"}, {"content", request.prompt}}})},
      {"temperature", request.temperature},
      {"max_tokens", request.max_tokens},
  };

  const httplib::Result result = client.Post(config_.path, headers, body.dump(), "application/json");
  if (!result) {
    fail(ErrorCode::transport,
         "http provider: no response from " + config_.base_url + " (" +
             httplib::to_string(result.error()) + ")");
  }
  if (result->status == 429) {
    fail(ErrorCode::rate_limit, "http provider: rate limited (HTTP 429)");
  }
  if (result->status != 200) {
    fail(ErrorCode::transport,
         "http provider: HTTP " + std::to_string(result->status) + ": " + result->body);
  }
  try {
    const json parsed = json::parse(result->body);
    return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::transport, std::string("http provider: malformed response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Client: cache, retry, bounded concurrency
// ---------------------------------------------------------------------------

/// Counting gate bounding concurrent provider calls.
class Gate {
 public:
  explicit Gate(int slots) : slots_(slots > 0 ? slots : 1) {}

  void acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return slots_ > 0; });
    --slots_;
  }

  void release() {
    {
      std::lock_guard lock(mutex_);
      ++slots_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  int slots_;
};

LlmClient::~LlmClient() = default;

LlmClient::LlmClient(std::shared_ptr<Provider> provider, ClientConfig config)
    : provider_(std::move(provider)),
      config_(std::move(config)),
      gate_(std::make_unique<Gate>(config_.max_concurrency)) {
  if (!provider_) {
    fail(ErrorCode::config, "LlmClient: provider is required");
  }
  if (!config_.cache_dir.empty()) {
    std::filesystem::create_directories(config_.cache_dir);
  }
}

std::string LlmClient::cache_key(const LlmRequest& request) const {
  return sha256_hex(provider_->id() + "\x1f" + provider_->model() + "\x1f" + request.prompt +
                    "\x1f" + format_double(request.temperature, 6));
}

std::optional<std::string> LlmClient::cache_lookup(const std::string& key,
                                                   const LlmRequest& request) const {
  if (config_.cache_dir.empty()) return std::nullopt;
  const std::filesystem::path path = config_.cache_dir / (key + ".json");
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    const json entry = json::parse(in);
    // Collision check: the full prompt is stored alongside the digest.
    if (entry.at("prompt").get<std::string>() != request.prompt ||
        entry.at("provider").get<std::string>() != provider_->id() ||
        entry.at("model").get<std::string>() != provider_->model()) {
      return std::nullopt;
    }
    return entry.at("response").get<std::string>();
  } catch (const json::exception&) {
    return std::nullopt;  // torn or foreign file: treat as miss
  }
}

void LlmClient::cache_store(const std::string& key, const LlmRequest& request,
                            const std::string& response_text) const {
  if (config_.cache_dir.empty()) return;
  const json entry = {
      {"key", key},
      {"provider", provider_->id()},
      {"model", provider_->model()},
      {"prompt", request.prompt},
      {"temperature", request.temperature},
      {"response", response_text},
      {"created_at",
       std::chrono::duration_cast<std::chrono::seconds>(
           std::chrono::system_clock::now().time_since_epoch())
           .count()},
  };
  const std::filesystem::path path = config_.cache_dir / (key + ".json");
  const std::filesystem::path tmp =
      config_.cache_dir / (key + ".tmp." +
                           std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())));
  {
    std::ofstream out(tmp);
    if (!out) fail(ErrorCode::internal, "cannot write cache entry " + tmp.string());
    out << entry.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);  // atomic on POSIX: never a torn entry
}

std::string LlmClient::call_with_retry(const LlmRequest& request) {
  int attempt = 0;
  for (;;) {
    // Rate limiter shared by every thread using this client: provider calls
    // keep the configured minimum spacing.
    if (config_.min_interval_ms > 0) {
      std::chrono::steady_clock::time_point wait_until;
      {
        std::lock_guard lock(rate_mutex_);
        const auto now = std::chrono::steady_clock::now();
        wait_until = std::max(now, next_call_allowed_);
        next_call_allowed_ = wait_until + std::chrono::milliseconds(config_.min_interval_ms);
      }
      std::this_thread::sleep_until(wait_until);
    }
    try {
      {
        std::lock_guard lock(mutex_);
        ++provider_calls_;
      }
      return provider_->complete(request);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::transport && e.code() != ErrorCode::rate_limit) throw;
      if (attempt >= config_.max_retries) throw;
      const auto delay = std::chrono::milliseconds(
          static_cast<long>(config_.backoff_initial_ms) * (1L << attempt));
      std::this_thread::sleep_for(delay);
      ++attempt;
    }
  }
}

LlmResponse LlmClient::complete(const LlmRequest& request) {
  if (trim(request.prompt).empty()) {
    fail(ErrorCode::invalid_input, "complete: empty prompt");
  }
  const std::string key = cache_key(request);
  const auto started = std::chrono::steady_clock::now();

  LlmResponse response;
  response.provider_id = provider_->id();
  response.model = provider_->model();

  if (auto cached = cache_lookup(key, request)) {
    response.text = std::move(*cached);
    response.from_cache = true;
    response.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
            .count();
    return response;
  }

  // Single-flight per key: concurrent identical requests share one call.
  std::shared_ptr<std::pair<std::mutex, std::string>> slot;
  {
    std::lock_guard lock(mutex_);
    auto& entry = in_flight_[key];
    if (!entry) entry = std::make_shared<std::pair<std::mutex, std::string>>();
    slot = entry;
  }

  std::lock_guard key_lock(slot->first);
  if (auto cached = cache_lookup(key, request)) {
    response.text = std::move(*cached);
    response.from_cache = true;
  } else {
    gate_->acquire();
    try {
      response.text = call_with_retry(request);
    } catch (...) {
      gate_->release();
      throw;
    }
    gate_->release();
    cache_store(key, request, response.text);
  }
  response.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
          .count();
  return response;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

ParsedPrediction parse_prediction(const std::string& text, const LabelSchema& schema,
                                  PromptRole mode) {
  if (text.empty()) {
    fail(ErrorCode::invalid_input, "parse_prediction: empty text");
  }

  ParsedPrediction parsed;
  parsed.raw_text = text;

  const std::vector<std::string> lines = split_lines(text);
  std::size_t answer_line = lines.size();
  for (std::size_t i = lines.size(); i-- > 0;) {
    if (to_lower(trim(lines[i])).rfind("answer:", 0) == 0) {
      answer_line = i;
      break;
    }
  }
  if (answer_line < lines.size()) {
    std::string value = trim(trim(lines[answer_line]).substr(7));
    while (!value.empty() && (value.back() == '.' || value.back() == '!')) value.pop_back();
    if (const auto index = schema.index_of(value)) {
      parsed.label = ClassLabel{*index};
    }
  }

  if (mode == PromptRole::predict_explicit) {
    for (std::size_t i = lines.size(); i-- > 0;) {
      const std::string lower = to_lower(trim(lines[i]));
      if (lower.rfind("most relevant example:", 0) == 0) {
        try {
          parsed.selected_example = std::stoi(trim(lines[i]).substr(22));
        } catch (const std::exception&) {
        }
        break;
      }
    }
  }

  if (mode == PromptRole::predict_implicit && answer_line < lines.size()) {
    std::string rationale;
    for (std::size_t i = 0; i < answer_line; ++i) {
      if (!rationale.empty()) rationale += '\n';
      rationale += lines[i];
    }
    parsed.rationale = trim(rationale);
  }
  return parsed;
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

Vector MockEmbeddingProvider::embed(const std::string& text, int dim) {
  if (dim <= 0) {
    fail(ErrorCode::invalid_input, "embed: dimension must be positive");
  }
  std::vector<std::string> tokens = tokenize(text);
  if (tokens.empty()) tokens.push_back(text);

  Vector v = Vector::Zero(dim);
  for (const std::string& token : tokens) {
    std::uint64_t state = fnv1a64(token);
    for (int i = 0; i < dim; ++i) {
      // splitmix64 stream per component
      state += 0x9e3779b97f4a7c15ULL;
      std::uint64_t z = state;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      z ^= z >> 31;
      v(i) += static_cast<double>(z >> 11) * 0x1.0p-53 - 0.5;
    }
  }
  const double norm = v.norm();
  return norm > 0 ? Vector(v / norm) : v;
}

Vector HttpEmbeddingProvider::embed(const std::string& text, int dim) {
  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.timeout_s);
  client.set_read_timeout(config_.timeout_s);

  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const json body = {{"model", config_.model}, {"input", text}};
  const httplib::Result result = client.Post(config_.path, headers, body.dump(), "application/json");
  if (!result || result->status != 200) {
    fail(ErrorCode::transport, "embedding endpoint failure" +
                                   (result ? " (HTTP " + std::to_string(result->status) + ")"
                                           : std::string()));
  }
  try {
    const json parsed = json::parse(result->body);
    const auto& data = parsed.at("data").at(0).at("embedding");
    Vector v(static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
      v(static_cast<Eigen::Index>(i)) = data.at(i).get<double>();
    }
    if (v.size() != dim) {
      fail(ErrorCode::invalid_input,
           "embedding endpoint returned dimension " + std::to_string(v.size()) + ", expected " +
               std::to_string(dim));
    }
    return v;
  } catch (const json::exception& e) {
    fail(ErrorCode::transport, std::string("embedding endpoint: malformed response: ") + e.what());
  }
}

}  // namespace timecap::gateway
