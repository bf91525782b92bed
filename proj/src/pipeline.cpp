#include "timecap/pipeline.hpp"

#include <algorithm>

namespace timecap::pipeline {

Mode parse_mode(std::string_view s) {
  const std::string v = to_lower(trim(s));
  if (v == "timecp") return Mode::timecp;
  if (v == "timecap") return Mode::timecap;
  fail(ErrorCode::config, "unknown pipeline mode: '" + std::string(s) + "'");
}

Sampler parse_sampler(std::string_view s) {
  const std::string v = to_lower(trim(s));
  if (v == "multimodal") return Sampler::multimodal;
  if (v == "time_only") return Sampler::time_only;
  if (v == "random") return Sampler::random;
  fail(ErrorCode::config, "unknown sampler: '" + std::string(s) + "'");
}

Fusion parse_fusion(std::string_view s) {
  const std::string v = to_lower(trim(s));
  if (v == "aggregate") return Fusion::aggregate;
  if (v == "select_one_llm") return Fusion::select_one_llm;
  if (v == "select_one_mm") return Fusion::select_one_mm;
  fail(ErrorCode::config, "unknown fusion: '" + std::string(s) + "'");
}

Interpretation parse_interpretation(std::string_view s) {
  const std::string v = to_lower(trim(s));
  if (v == "none") return Interpretation::none;
  if (v == "implicit") return Interpretation::implicit;
  if (v == "explicit") return Interpretation::explicit_selection;
  fail(ErrorCode::config, "unknown interpretation: '" + std::string(s) + "'");
}

std::string to_string(Sampler s) {
  switch (s) {
    case Sampler::multimodal: return "multimodal";
    case Sampler::time_only: return "time_only";
    case Sampler::random: return "random";
  }
  fail(ErrorCode::internal, "unknown sampler");
}

std::string to_string(Fusion f) {
  switch (f) {
    case Fusion::aggregate: return "aggregate";
    case Fusion::select_one_llm: return "select_one_llm";
    case Fusion::select_one_mm: return "select_one_mm";
  }
  fail(ErrorCode::internal, "unknown fusion");
}

void PipelineConfig::validate() const {
  if (k < 1) fail(ErrorCode::config, "pipeline: k must be >= 1");
  if (lambda < 0.0 || lambda > 1.0) fail(ErrorCode::config, "pipeline: lambda must be in [0,1]");
}

namespace {

void require_agents(const Agents& agents) {
  if (!agents.client || !agents.schema) {
    fail(ErrorCode::config, "pipeline: gateway client and schema are required");
  }
}

gateway::PromptRole predict_role(Interpretation interpretation) {
  switch (interpretation) {
    case Interpretation::none: return gateway::PromptRole::predict_plain;
    case Interpretation::implicit: return gateway::PromptRole::predict_implicit;
    case Interpretation::explicit_selection: return gateway::PromptRole::predict_explicit;
  }
  fail(ErrorCode::internal, "unknown interpretation");
}

}  // namespace

TextSummary contextualize(Agents& agents, const TimeSeriesWindow& window) {
  require_agents(agents);
  const std::string prompt = gateway::build_contextualize_prompt(window, agents.domain_hint);
  const gateway::LlmResponse response = agents.client->complete({prompt, agents.temperature});
  TextSummary summary;
  summary.text = response.text;
  summary.source = response.provider_id == "mock"
                       ? SummarySource::mock
                       : (response.from_cache ? SummarySource::cached : SummarySource::llm);
  return summary;
}

TimecpResult timecp_predict(Agents& agents, const TimeSeriesWindow& window,
                            const std::optional<TextSummary>& precomputed) {
  require_agents(agents);
  TimecpResult result;
  result.summary = precomputed ? *precomputed : contextualize(agents, window);
  const std::string prompt = gateway::build_predict_prompt(
      result.summary, {}, gateway::PromptRole::predict_plain, *agents.schema);
  const gateway::LlmResponse response = agents.client->complete({prompt, agents.temperature});
  const gateway::ParsedPrediction parsed =
      gateway::parse_prediction(response.text, *agents.schema, gateway::PromptRole::predict_plain);
  if (parsed.label) {
    result.label = *parsed.label;
  } else {
    result.label = agents.fallback_label;
    result.abstained = true;
  }
  return result;
}

PredictionDistribution fuse(const std::optional<ClassLabel>& llm_label, const Vector& mm_logits,
                            double lambda, int num_classes) {
  if (lambda < 0.0 || lambda > 1.0) {
    fail(ErrorCode::invalid_input, "fuse: lambda must be in [0,1]");
  }
  if (mm_logits.size() != num_classes) {
    fail(ErrorCode::invalid_input, "fuse: logit dimension mismatch");
  }
  const Vector mm = softmax_vector(mm_logits);
  if (!llm_label) {
    return PredictionDistribution(mm);  // abstention: encoder alone
  }
  const Vector fused = lambda * one_hot(*llm_label, num_classes) + (1.0 - lambda) * mm;
  return PredictionDistribution(fused);
}

FusedPrediction timecap_predict(Agents& agents, const Sample& sample,
                                const TimecapArtifacts& artifacts, const PipelineConfig& config) {
  require_agents(agents);
  config.validate();
  if (!artifacts.params || !artifacts.store) {
    fail(ErrorCode::missing_artifact, "timecap_predict: encoder checkpoint and store required");
  }
  if (artifacts.store->encoder_digest != encoder::params_digest(*artifacts.params)) {
    fail(ErrorCode::missing_artifact, "timecap_predict: store is stale for this checkpoint");
  }
  const int K = agents.schema->num_classes();
  if (artifacts.params->config.num_classes != K) {
    fail(ErrorCode::invalid_input, "timecap_predict: encoder class count != schema");
  }

  FusedPrediction out;
  out.sample_id = sample.id;

  // (1) contextualize
  const TextSummary summary =
      sample.summary ? *sample.summary : contextualize(agents, sample.window);
  out.summary_text = summary.text;

  // (2) multi-modal encoder forward
  const encoder::ForwardTrace trace =
      encoder::forward(sample.window, summary, *artifacts.params, artifacts.text_embedder);
  out.encoder_dist = softmax_vector(trace.logits);

  // (3) in-context sampling, nearest-first
  std::vector<gateway::Demonstration> in_context;
  switch (config.sampler) {
    case Sampler::multimodal: {
      if (artifacts.store->size() == 0) break;  // degrade to zero-shot TimeCP + fusion
      const auto neighbors =
          retrieval::nn_k(*artifacts.store, trace.embedding, config.k, sample.id);
      for (const auto& n : neighbors) {
        const auto j = static_cast<std::size_t>(n.index);
        in_context.push_back({TextSummary{artifacts.store->summaries[j], SummarySource::cached},
                              artifacts.store->labels[j]});
        out.retrieved_ids.push_back(artifacts.store->ids[j]);
      }
      break;
    }
    case Sampler::time_only: {
      if (!artifacts.sampler_params || !artifacts.sampler_store) {
        fail(ErrorCode::missing_artifact, "timecap_predict: time_only sampler artifacts missing");
      }
      if (artifacts.sampler_store->encoder_digest !=
          encoder::params_digest(*artifacts.sampler_params)) {
        fail(ErrorCode::missing_artifact, "timecap_predict: sampler store is stale");
      }
      const encoder::ForwardTrace sampler_trace = encoder::forward(
          sample.window, summary, *artifacts.sampler_params, artifacts.text_embedder);
      const auto neighbors = retrieval::nn_k(*artifacts.sampler_store, sampler_trace.embedding,
                                             config.k, sample.id);
      for (const auto& n : neighbors) {
        const auto j = static_cast<std::size_t>(n.index);
        in_context.push_back(
            {TextSummary{artifacts.sampler_store->summaries[j], SummarySource::cached},
             artifacts.sampler_store->labels[j]});
        out.retrieved_ids.push_back(artifacts.sampler_store->ids[j]);
      }
      break;
    }
    case Sampler::random: {
      if (!artifacts.train_samples || artifacts.train_samples->empty()) {
        fail(ErrorCode::missing_artifact, "timecap_predict: random sampler needs train samples");
      }
      const auto& train = *artifacts.train_samples;
      const int k = std::min<int>(config.k, static_cast<int>(train.size()));
      // Per-sample sub-seed keeps whole runs reproducible.
      const std::uint64_t sub_seed = config.seed ^ fnv1a64(sample.id);
      for (int idx : retrieval::random_k(train.size(), k, sub_seed)) {
        const Sample& t = train[static_cast<std::size_t>(idx)];
        if (!t.summary) {
          fail(ErrorCode::invalid_input, "timecap_predict: train sample without summary");
        }
        in_context.push_back({*t.summary, t.label});
        out.retrieved_ids.push_back(t.id);
      }
      break;
    }
  }

  // (4) in-context LLM prediction
  const gateway::PromptRole role = predict_role(config.interpretation);
  const std::string prompt =
      gateway::build_predict_prompt(summary, in_context, role, *agents.schema);
  const gateway::LlmResponse response = agents.client->complete({prompt, agents.temperature});
  const gateway::ParsedPrediction parsed =
      gateway::parse_prediction(response.text, *agents.schema, role);
  out.llm_label = parsed.label;
  out.abstained = !parsed.label.has_value();
  out.rationale = parsed.rationale;
  if (config.interpretation == Interpretation::explicit_selection && !in_context.empty()) {
    int selected = parsed.selected_example.value_or(1);
    if (selected < 1 || selected > static_cast<int>(in_context.size())) {
      selected = std::clamp(selected, 1, static_cast<int>(in_context.size()));
      out.selection_clamped = true;
    }
    out.selected_example = selected;
    out.selected_id = out.retrieved_ids[static_cast<std::size_t>(selected - 1)];
  }

  // (5) fusion
  switch (config.fusion) {
    case Fusion::aggregate:
      out.fused = fuse(out.llm_label, trace.logits, config.lambda, K).probs();
      break;
    case Fusion::select_one_llm:
      out.fused = out.llm_label ? one_hot(*out.llm_label, K) : Vector(out.encoder_dist);
      break;
    case Fusion::select_one_mm:
      out.fused = out.encoder_dist;
      break;
  }
  out.final_label = argmax_with_tiebreak(out.fused);
  return out;
}

std::pair<std::optional<ClassLabel>, std::string> interpret_implicit(
    Agents& agents, const TextSummary& summary,
    const std::vector<gateway::Demonstration>& in_context) {
  require_agents(agents);
  const std::string prompt = gateway::build_predict_prompt(
      summary, in_context, gateway::PromptRole::predict_implicit, *agents.schema);
  const gateway::LlmResponse response = agents.client->complete({prompt, agents.temperature});
  const gateway::ParsedPrediction parsed = gateway::parse_prediction(
      response.text, *agents.schema, gateway::PromptRole::predict_implicit);
  // Parse failure: rationale falls back to the raw text so nothing is lost.
  return {parsed.label, parsed.label ? parsed.rationale : parsed.raw_text};
}

ExplicitInterpretation interpret_explicit(Agents& agents, const TextSummary& summary,
                                          const std::vector<gateway::Demonstration>& in_context) {
  require_agents(agents);
  if (in_context.empty()) {
    fail(ErrorCode::invalid_input, "interpret_explicit: needs at least one in-context example");
  }
  const std::string prompt = gateway::build_predict_prompt(
      summary, in_context, gateway::PromptRole::predict_explicit, *agents.schema);
  const gateway::LlmResponse response = agents.client->complete({prompt, agents.temperature});
  const gateway::ParsedPrediction parsed = gateway::parse_prediction(
      response.text, *agents.schema, gateway::PromptRole::predict_explicit);

  ExplicitInterpretation out;
  out.label = parsed.label;
  out.selected = parsed.selected_example.value_or(1);
  if (out.selected < 1 || out.selected > static_cast<int>(in_context.size())) {
    out.selected = std::clamp(out.selected, 1, static_cast<int>(in_context.size()));
    out.clamped = true;
  }
  return out;
}

}  // namespace timecap::pipeline
