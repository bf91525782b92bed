#pragma once

#include "timecap/core.hpp"
#include "timecap/encoder.hpp"
#include "timecap/gateway.hpp"
#include "timecap/retrieval.hpp"

#include <optional>
#include <string>
#include <vector>

namespace timecap::pipeline {

enum class Mode { timecp, timecap };
enum class Sampler { multimodal, time_only, random };
enum class Fusion { aggregate, select_one_llm, select_one_mm };
enum class Interpretation { none, implicit, explicit_selection };

Mode parse_mode(std::string_view s);
Sampler parse_sampler(std::string_view s);
Fusion parse_fusion(std::string_view s);
Interpretation parse_interpretation(std::string_view s);
std::string to_string(Sampler s);
std::string to_string(Fusion f);

struct PipelineConfig {
  Mode mode = Mode::timecap;
  int k = 5;
  double lambda = 0.5;
  Sampler sampler = Sampler::multimodal;
  Fusion fusion = Fusion::aggregate;
  Interpretation interpretation = Interpretation::none;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Shared per-run context: the LLM client plus everything both agents need.
struct Agents {
  gateway::LlmClient* client = nullptr;
  const LabelSchema* schema = nullptr;
  std::string domain_hint;
  ClassLabel fallback_label{0};  // training-majority class, TimeCP abstention fallback
  double temperature = 0.0;      // 0 keeps runs reproducible
};

struct FusedPrediction {
  std::string sample_id;
  std::string summary_text;
  ClassLabel final_label{0};
  Vector fused;         // distribution, sums to 1
  Vector encoder_dist;  // softmax of the encoder logits
  std::optional<ClassLabel> llm_label;  // nullopt = abstention
  bool abstained = false;
  std::vector<std::string> retrieved_ids;
  std::string rationale;                    // implicit mode
  std::optional<int> selected_example;      // explicit mode, 1-based
  std::optional<std::string> selected_id;   // resolved store id
  bool selection_clamped = false;
};

struct TimecpResult {
  ClassLabel label{0};
  TextSummary summary;
  bool abstained = false;
};

/// A_C: contextualize one window into a text summary.
TextSummary contextualize(Agents& agents, const TimeSeriesWindow& window);

/// TimeCP: contextualize then zero-shot predict. Parse failures fall back to
/// the training-majority class and are flagged as abstentions. A precomputed
/// summary (from a prior contextualize run) skips the A_C call.
TimecpResult timecp_predict(Agents& agents, const TimeSeriesWindow& window,
                            const std::optional<TextSummary>& precomputed = std::nullopt);

/// Lambda-weighted fusion of the one-hot LLM answer with the softmaxed
/// encoder logits; on abstention the encoder distribution alone.
PredictionDistribution fuse(const std::optional<ClassLabel>& llm_label, const Vector& mm_logits,
                            double lambda, int num_classes);

/// Trained artifacts the TimeCAP path reads. The sampler pair is only needed
/// when the in-context sampler differs from the predicting encoder.
struct TimecapArtifacts {
  const encoder::EncoderParams* params = nullptr;
  const retrieval::EmbeddingStore* store = nullptr;
  const encoder::EncoderParams* sampler_params = nullptr;   // time_only sampler
  const retrieval::EmbeddingStore* sampler_store = nullptr;
  const std::vector<Sample>* train_samples = nullptr;       // random sampler
  gateway::EmbeddingProvider* text_embedder = nullptr;      // external text backend
};

/// Full TimeCAP step: summary, encoder forward, top-k retrieval, in-context
/// LLM prediction, fusion. The sample's attached summary is used when
/// present; otherwise A_C is called.
FusedPrediction timecap_predict(Agents& agents, const Sample& sample,
                                const TimecapArtifacts& artifacts, const PipelineConfig& config);

std::pair<std::optional<ClassLabel>, std::string> interpret_implicit(
    Agents& agents, const TextSummary& summary,
    const std::vector<gateway::Demonstration>& in_context);

struct ExplicitInterpretation {
  std::optional<ClassLabel> label;
  int selected = 1;  // 1-based index into the in-context block
  bool clamped = false;
};

ExplicitInterpretation interpret_explicit(Agents& agents, const TextSummary& summary,
                                          const std::vector<gateway::Demonstration>& in_context);

}  // namespace timecap::pipeline
