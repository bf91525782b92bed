#include "timecap/cli.hpp"

#include "timecap/ablation.hpp"
#include "timecap/artifacts.hpp"
#include "timecap/config.hpp"
#include "timecap/digest.hpp"
#include "timecap/similarity.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace timecap::cli {

namespace fs = std::filesystem;

namespace {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::config: return 2;
    case ErrorCode::missing_artifact: return 3;
    case ErrorCode::transport:
    case ErrorCode::rate_limit: return 4;
    case ErrorCode::invalid_input:
    case ErrorCode::internal: return 5;
  }
  return 5;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::missing_artifact, "cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

struct RunContext {
  KeyValueConfig config;
  fs::path config_dir;
  fs::path out_dir;
  std::uint64_t seed = 0;

  fs::path manifest_path() const {
    return config_dir / config.get_string("dataset.manifest");
  }

  ingest::SplitSpec split_spec() const {
    ingest::SplitSpec spec;
    spec.train = config.get_double("split.train", 0.6);
    spec.val = config.get_double("split.val", 0.2);
    spec.test = config.get_double("split.test", 0.2);
    spec.validate();
    return spec;
  }

  bool normalize() const { return config.get_bool("ingest.normalize", true); }

  // --- provenance digests ------------------------------------------------

  std::string data_digest() const {
    const ingest::DatasetManifest manifest = ingest::DatasetManifest::parse_file(manifest_path());
    return sha256_hex(slurp(manifest_path()) + "\x1f" + slurp(manifest.data_path) + "\x1f" +
                      config.canonical("split.") + config.canonical("ingest."));
  }

  std::string provider_canonical() const {
    return "provider.kind=" + config.get_string("provider.kind", "mock") +
           "\nprovider.model=" + config.get_string("provider.model", "mock-1") +
           "\nprovider.base_url=" + config.get_string("provider.base_url", "") +
           "\nprovider.temperature=" +
           format_double(config.get_double("provider.temperature", 0.0), 6) + "\n";
  }

  std::string ctx_digest(const std::string& data) const {
    return sha256_hex(data + "\x1f" + provider_canonical());
  }

  std::string train_digest(const std::string& data, const std::string& ctx,
                           const std::string& variant) const {
    const std::string text_part = variant == "time_only" ? std::string() : ctx;
    return sha256_hex(data + "\x1f" + text_part + "\x1f" + config.canonical("encoder.") +
                      "\x1fseed=" + std::to_string(seed) + "\x1fvariant=" + variant);
  }

  std::string predict_digest() const {
    const std::string data = data_digest();
    const std::string ctx = ctx_digest(data);
    const std::string mode = config.get_string("pipeline.mode", "timecap");
    std::string payload = data + "\x1f" + ctx + "\x1f" + config.canonical("pipeline.") + "\x1f" +
                          provider_canonical() + "\x1fseed=" + std::to_string(seed) +
                          "\x1fmode=" + mode;
    if (mode == "timecap") {
      payload += "\x1f" + train_digest(data, ctx, "multimodal");
      if (config.get_string("pipeline.sampler", "multimodal") == "time_only") {
        payload += "\x1f" + train_digest(data, ctx, "time_only");
      }
    }
    return sha256_hex(payload);
  }

  // --- artifact paths ------------------------------------------------------

  fs::path windows_path() const { return out_dir / "windows.jsonl"; }
  fs::path summaries_path() const { return out_dir / "summaries.jsonl"; }
  fs::path checkpoint_path(const std::string& variant) const {
    return out_dir / (variant == "time_only" ? "checkpoint_time_only.json" : "checkpoint.json");
  }
  fs::path train_log_path(const std::string& variant) const {
    return out_dir / (variant == "time_only" ? "train_log_time_only.jsonl" : "train_log.jsonl");
  }
  fs::path store_path(const std::string& variant) const {
    return out_dir / (variant == "time_only" ? "store_time_only.json" : "store.json");
  }
  fs::path predictions_path() const { return out_dir / "predictions.jsonl"; }
  fs::path metrics_path() const { return out_dir / "metrics.csv"; }
  fs::path interpretations_path() const { return out_dir / "interpretations.jsonl"; }
  fs::path ablation_path() const { return out_dir / "ablation.csv"; }
  fs::path ablation_plot_path() const { return out_dir / "ablation_plot.dat"; }
};

std::shared_ptr<gateway::Provider> make_provider(const RunContext& ctx) {
  const std::string kind = ctx.config.get_string("provider.kind", "mock");
  if (kind == "mock") {
    return std::make_shared<gateway::MockProvider>(
        ctx.config.get_string("provider.model", "mock-1"));
  }
  if (kind == "http") {
    gateway::HttpProviderConfig http;
    http.base_url = ctx.config.get_string("provider.base_url");
    http.path = ctx.config.get_string("provider.path", http.path);
    http.model = ctx.config.get_string("provider.model", http.model);
    http.api_key_env = ctx.config.get_string("provider.api_key_env", http.api_key_env);
    http.timeout_s = static_cast<int>(ctx.config.get_int("provider.timeout_s", http.timeout_s));
    return std::make_shared<gateway::HttpProvider>(http);
  }
  fail(ErrorCode::config, "provider.kind must be mock or http, got '" + kind + "'");
}

/// Embedding backend for encoder.text_backend=external_embedding; null for
/// the default hashed bag-of-words path.
std::unique_ptr<gateway::EmbeddingProvider> make_embedder(const RunContext& ctx) {
  if (ctx.config.get_string("encoder.text_backend", "hashed_bow") != "external_embedding") {
    return nullptr;
  }
  if (ctx.config.get_string("provider.kind", "mock") == "mock") {
    return std::make_unique<gateway::MockEmbeddingProvider>();
  }
  gateway::HttpEmbeddingConfig config;
  config.base_url = ctx.config.get_string("provider.embedding_base_url",
                                          ctx.config.get_string("provider.base_url", ""));
  if (config.base_url.empty()) {
    fail(ErrorCode::config, "external_embedding backend needs provider.embedding_base_url");
  }
  config.path = ctx.config.get_string("provider.embedding_path", config.path);
  config.model = ctx.config.get_string("provider.embedding_model", config.model);
  config.api_key_env = ctx.config.get_string("provider.api_key_env", config.api_key_env);
  return std::make_unique<gateway::HttpEmbeddingProvider>(config);
}

std::unique_ptr<gateway::LlmClient> make_client(const RunContext& ctx) {
  gateway::ClientConfig client_config;
  const std::string cache = ctx.config.get_string("provider.cache_dir", "cache");
  client_config.cache_dir = fs::path(cache).is_absolute() ? fs::path(cache) : ctx.out_dir / cache;
  client_config.max_retries = static_cast<int>(ctx.config.get_int("provider.max_retries", 3));
  client_config.backoff_initial_ms =
      static_cast<int>(ctx.config.get_int("provider.backoff_ms", 250));
  client_config.max_concurrency =
      static_cast<int>(ctx.config.get_int("provider.max_concurrency", 4));
  client_config.min_interval_ms =
      static_cast<int>(ctx.config.get_int("provider.min_interval_ms", 0));
  return std::make_unique<gateway::LlmClient>(make_provider(ctx), client_config);
}

encoder::EncoderConfig encoder_config_for(const RunContext& ctx,
                                          const artifacts::WindowsFile& windows,
                                          const std::string& variant) {
  encoder::EncoderConfig ec;
  ec.window_len = static_cast<int>(windows.samples.front().window.length());
  ec.num_channels = static_cast<int>(windows.channels.size());
  ec.num_classes = static_cast<int>(windows.class_names.size());
  const int default_patch =
      std::max(1, static_cast<int>(std::lround(static_cast<double>(ec.window_len) / 6.0)));
  ec.patch_len = static_cast<int>(ctx.config.get_int("encoder.patch_len", default_patch));
  ec.patch_stride = static_cast<int>(ctx.config.get_int("encoder.patch_stride", ec.patch_len));
  ec.model_dim = static_cast<int>(ctx.config.get_int("encoder.model_dim", 64));
  ec.text_dim = static_cast<int>(ctx.config.get_int("encoder.text_dim", 64));
  ec.heads = static_cast<int>(ctx.config.get_int("encoder.heads", 4));
  ec.epochs = static_cast<int>(ctx.config.get_int("encoder.epochs", 200));
  ec.batch_size = static_cast<int>(ctx.config.get_int("encoder.batch_size", 32));
  ec.learning_rate = ctx.config.get_double("encoder.learning_rate", 0.05);
  ec.momentum = ctx.config.get_double("encoder.momentum", 0.9);
  ec.patience = static_cast<int>(ctx.config.get_int("encoder.patience", 10));
  ec.seed = ctx.seed;
  ec.positional_embedding = ctx.config.get_bool("encoder.positional", true);
  ec.text_enabled = variant != "time_only";
  ec.text_backend =
      encoder::parse_text_backend(ctx.config.get_string("encoder.text_backend", "hashed_bow"));
  ec.hash_vocab = static_cast<int>(ctx.config.get_int("encoder.hash_vocab", 4096));
  ec.validate();
  return ec;
}

pipeline::PipelineConfig pipeline_config_for(const RunContext& ctx) {
  pipeline::PipelineConfig pc;
  pc.mode = pipeline::parse_mode(ctx.config.get_string("pipeline.mode", "timecap"));
  pc.k = static_cast<int>(ctx.config.get_int("pipeline.k", 5));
  pc.lambda = ctx.config.get_double("pipeline.lambda", 0.5);
  pc.sampler = pipeline::parse_sampler(ctx.config.get_string("pipeline.sampler", "multimodal"));
  pc.fusion = pipeline::parse_fusion(ctx.config.get_string("pipeline.fusion", "aggregate"));
  pc.interpretation =
      pipeline::parse_interpretation(ctx.config.get_string("pipeline.interpretation", "none"));
  pc.seed = ctx.seed;
  pc.validate();
  return pc;
}

artifacts::WindowsFile load_checked_windows(const RunContext& ctx, const std::string& expected) {
  artifacts::WindowsFile windows = artifacts::load_windows(ctx.windows_path());
  artifacts::require_digest(windows.config_digest, expected, ctx.windows_path(), "dataset");
  return windows;
}

void attach_summaries(artifacts::WindowsFile& windows, const RunContext& ctx,
                      const std::string& expected_ctx_digest) {
  const artifacts::SummariesFile summaries = artifacts::load_summaries(ctx.summaries_path());
  artifacts::require_digest(summaries.config_digest, expected_ctx_digest, ctx.summaries_path(),
                            "contextualize");
  const auto by_id = summaries.by_id();
  for (Sample& sample : windows.samples) {
    const auto it = by_id.find(sample.id);
    if (it == by_id.end()) {
      fail(ErrorCode::missing_artifact,
           ctx.summaries_path().string() + ": no summary for sample '" + sample.id +
               "' (rerun contextualize)");
    }
    sample.summary = TextSummary{it->second, SummarySource::cached};
  }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_ingest(const RunContext& ctx) {
  ingest::DatasetManifest manifest = ingest::DatasetManifest::parse_file(ctx.manifest_path());
  if (ctx.config.has("ingest.impute")) {
    const std::string impute = ctx.config.get_string("ingest.impute");
    if (impute == "drop") {
      manifest.load.impute = ingest::ImputePolicy::drop;
    } else if (impute == "ffill") {
      manifest.load.impute = ingest::ImputePolicy::ffill;
    } else {
      fail(ErrorCode::config, "ingest.impute must be drop or ffill");
    }
  }
  const ingest::RawSeries raw = ingest::load_table(manifest.data_path, manifest.channels,
                                                   manifest.resolution, manifest.load);
  const LabelSchema schema(manifest.class_names);
  ingest::WindowedDataset dataset =
      ingest::make_windows(raw, manifest.windowing, schema, manifest.name + "-w");
  const ingest::Splits splits = ingest::split_chronological(dataset.samples, ctx.split_spec());

  artifacts::WindowsFile file;
  file.config_digest = ctx.data_digest();
  file.seed = ctx.seed;
  file.dataset_name = manifest.name;
  file.domain_hint = manifest.domain_hint;
  file.channels = manifest.channels.empty() ? raw.channel_names : manifest.channels;
  file.resolution = manifest.resolution;
  file.class_names = manifest.class_names;
  file.threshold_used = dataset.threshold_used;

  auto push = [&](const std::vector<Sample>& part, const std::string& tag) {
    for (const Sample& s : part) {
      file.samples.push_back(s);
      file.split_of.push_back(tag);
    }
  };

  if (ctx.normalize()) {
    const ingest::Normalizer normalizer = ingest::Normalizer::fit(splits.train);
    file.normalized = true;
    file.norm_mean = normalizer.mean();
    file.norm_stddev = normalizer.stddev();
    auto apply_all = [&](const std::vector<Sample>& part) {
      std::vector<Sample> out;
      out.reserve(part.size());
      for (const Sample& s : part) out.push_back(normalizer.apply(s));
      return out;
    };
    push(apply_all(splits.train), "train");
    push(apply_all(splits.val), "val");
    push(apply_all(splits.test), "test");
  } else {
    push(splits.train, "train");
    push(splits.val, "val");
    push(splits.test, "test");
  }

  artifacts::save_windows(file, ctx.windows_path());
  std::cout << "ingest: " << file.samples.size() << " samples (" << splits.train.size() << "/"
            << splits.val.size() << "/" << splits.test.size() << " train/val/test) -> "
            << ctx.windows_path().string() << "\n";

  // label distribution per split, as fractions
  auto report = [&](const char* tag, const std::vector<Sample>& part) {
    std::cout << "  " << tag << " labels:";
    for (int k = 0; k < schema.num_classes(); ++k) {
      int count = 0;
      for (const Sample& s : part) count += s.label.index == k;
      std::cout << " " << schema.name_of(k) << "="
                << format_double(part.empty() ? 0.0
                                              : static_cast<double>(count) /
                                                    static_cast<double>(part.size()),
                                 3);
    }
    std::cout << "\n";
  };
  report("train", splits.train);
  report("val", splits.val);
  report("test", splits.test);
  return 0;
}

int cmd_contextualize(const RunContext& ctx) {
  const std::string data = ctx.data_digest();
  const std::string expected = ctx.ctx_digest(data);
  const artifacts::WindowsFile windows = load_checked_windows(ctx, data);

  auto client = make_client(ctx);

  // Resume: keep records from a digest-matching previous run.
  std::map<std::string, std::string> existing;
  if (fs::exists(ctx.summaries_path())) {
    const artifacts::SummariesFile previous = artifacts::load_summaries(ctx.summaries_path());
    if (previous.config_digest == expected) existing = previous.by_id();
  }

  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < windows.samples.size(); ++i) {
    if (!existing.count(windows.samples[i].id)) todo.push_back(i);
  }

  std::vector<std::string> generated(todo.size());
  const double temperature = ctx.config.get_double("provider.temperature", 0.0);
  if (!todo.empty()) {
    const int workers = std::max(1, client->config().max_concurrency);
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    auto work = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= todo.size()) return;
        try {
          const Sample& sample = windows.samples[todo[i]];
          const std::string prompt =
              gateway::build_contextualize_prompt(sample.window, windows.domain_hint);
          generated[i] = client->complete({prompt, temperature}).text;
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
  }

  artifacts::SummariesFile out;
  out.config_digest = expected;
  out.seed = ctx.seed;
  std::map<std::string, std::string> fresh;
  for (std::size_t i = 0; i < todo.size(); ++i) {
    fresh[windows.samples[todo[i]].id] = generated[i];
  }
  for (const Sample& sample : windows.samples) {
    const auto it = existing.count(sample.id) ? existing.find(sample.id) : fresh.find(sample.id);
    out.records.push_back({sample.id, it->second, client->provider().id(),
                           client->provider().model()});
  }
  artifacts::save_summaries(out, ctx.summaries_path());
  std::cout << "contextualize: " << todo.size() << " new, " << existing.size()
            << " reused -> " << ctx.summaries_path().string() << "\n";
  return 0;
}

int cmd_train(const RunContext& ctx, const std::string& variant) {
  const std::string data = ctx.data_digest();
  const std::string ctx_d = ctx.ctx_digest(data);
  artifacts::WindowsFile windows = load_checked_windows(ctx, data);
  if (variant != "time_only") attach_summaries(windows, ctx, ctx_d);

  const encoder::EncoderConfig config = encoder_config_for(ctx, windows, variant);
  const auto embedder = make_embedder(ctx);
  const encoder::TrainResult result =
      encoder::train(windows.split("train"), windows.split("val"), config, embedder.get());
  if (result.diverged) {
    std::cerr << "train: loss diverged; kept last finite checkpoint\n";
  }

  encoder::save_checkpoint(result.params, ctx.checkpoint_path(variant),
                           ctx.train_digest(data, ctx_d, variant), ctx.seed);
  encoder::write_training_log(result.log, ctx.train_log_path(variant),
                              ctx.train_digest(data, ctx_d, variant), ctx.seed);
  std::cout << "train(" << variant << "): best val macro-F1 "
            << format_double(result.best_val_f1, 4) << " at epoch " << result.best_epoch << " -> "
            << ctx.checkpoint_path(variant).string() << "\n";
  return 0;
}

int cmd_embed(const RunContext& ctx, const std::string& variant) {
  const std::string data = ctx.data_digest();
  const std::string ctx_d = ctx.ctx_digest(data);
  artifacts::WindowsFile windows = load_checked_windows(ctx, data);
  attach_summaries(windows, ctx, ctx_d);

  std::string checkpoint_digest;
  const encoder::EncoderParams params =
      encoder::load_checkpoint(ctx.checkpoint_path(variant), &checkpoint_digest);
  artifacts::require_digest(checkpoint_digest, ctx.train_digest(data, ctx_d, variant),
                            ctx.checkpoint_path(variant), "train");

  const auto embedder = make_embedder(ctx);
  const retrieval::EmbeddingStore store =
      retrieval::build_store(params, windows.split("train"), embedder.get());
  retrieval::save_store(store, ctx.store_path(variant),
                        ctx.train_digest(data, ctx_d, variant), ctx.seed);
  std::cout << "embed(" << variant << "): " << store.size() << " embeddings -> "
            << ctx.store_path(variant).string() << "\n";
  return 0;
}

struct LoadedArtifacts {
  encoder::EncoderParams params;
  retrieval::EmbeddingStore store;
  encoder::EncoderParams sampler_params;
  retrieval::EmbeddingStore sampler_store;
  bool has_sampler = false;
  std::vector<Sample> train_samples;
  std::unique_ptr<gateway::EmbeddingProvider> embedder;
};

LoadedArtifacts load_timecap_artifacts(const RunContext& ctx,
                                       const artifacts::WindowsFile& windows,
                                       const std::string& data, const std::string& ctx_d,
                                       bool need_time_only) {
  LoadedArtifacts loaded;
  std::string checkpoint_digest;
  loaded.params = encoder::load_checkpoint(ctx.checkpoint_path("multimodal"), &checkpoint_digest);
  artifacts::require_digest(checkpoint_digest, ctx.train_digest(data, ctx_d, "multimodal"),
                            ctx.checkpoint_path("multimodal"), "train");
  loaded.store = retrieval::load_store(ctx.store_path("multimodal"),
                                       encoder::params_digest(loaded.params));
  if (need_time_only) {
    std::string sampler_digest;
    loaded.sampler_params =
        encoder::load_checkpoint(ctx.checkpoint_path("time_only"), &sampler_digest);
    artifacts::require_digest(sampler_digest, ctx.train_digest(data, ctx_d, "time_only"),
                              ctx.checkpoint_path("time_only"), "train");
    loaded.sampler_store = retrieval::load_store(ctx.store_path("time_only"),
                                                 encoder::params_digest(loaded.sampler_params));
    loaded.has_sampler = true;
  }
  loaded.train_samples = windows.split("train");
  loaded.embedder = make_embedder(ctx);
  return loaded;
}

pipeline::TimecapArtifacts view_of(const LoadedArtifacts& loaded) {
  pipeline::TimecapArtifacts view;
  view.params = &loaded.params;
  view.store = &loaded.store;
  if (loaded.has_sampler) {
    view.sampler_params = &loaded.sampler_params;
    view.sampler_store = &loaded.sampler_store;
  }
  view.train_samples = &loaded.train_samples;
  view.text_embedder = loaded.embedder.get();
  return view;
}

int cmd_predict(const RunContext& ctx) {
  const std::string data = ctx.data_digest();
  const std::string ctx_d = ctx.ctx_digest(data);
  artifacts::WindowsFile windows = load_checked_windows(ctx, data);
  attach_summaries(windows, ctx, ctx_d);

  const pipeline::PipelineConfig pc = pipeline_config_for(ctx);
  auto client = make_client(ctx);
  const LabelSchema schema = windows.schema();
  pipeline::Agents agents{client.get(), &schema, windows.domain_hint,
                          ingest::majority_label(windows.split("train"), schema.num_classes()),
                          ctx.config.get_double("provider.temperature", 0.0)};

  artifacts::PredictionsFile out;
  out.config_digest = ctx.predict_digest();
  out.seed = ctx.seed;
  const std::vector<Sample> test = windows.split("test");

  if (pc.mode == pipeline::Mode::timecp) {
    out.mode = "timecp";
    for (const Sample& sample : test) {
      const pipeline::TimecpResult r =
          pipeline::timecp_predict(agents, sample.window, sample.summary);
      artifacts::PredictionRecord record;
      record.id = sample.id;
      record.summary = r.summary.text;
      record.abstained = r.abstained;
      if (!r.abstained) record.llm_label = r.label.index;
      record.fused = one_hot(r.label, schema.num_classes());
      record.final_label = r.label.index;
      out.records.push_back(std::move(record));
    }
  } else {
    out.mode = "timecap";
    const LoadedArtifacts loaded = load_timecap_artifacts(
        ctx, windows, data, ctx_d, pc.sampler == pipeline::Sampler::time_only);
    const pipeline::TimecapArtifacts view = view_of(loaded);
    for (const Sample& sample : test) {
      const pipeline::FusedPrediction p = pipeline::timecap_predict(agents, sample, view, pc);
      artifacts::PredictionRecord record;
      record.id = p.sample_id;
      record.summary = p.summary_text;
      record.retrieved_ids = p.retrieved_ids;
      if (p.llm_label) record.llm_label = p.llm_label->index;
      record.abstained = p.abstained;
      record.encoder_dist = p.encoder_dist;
      record.fused = p.fused;
      record.final_label = p.final_label.index;
      record.rationale = p.rationale;
      record.selected_example = p.selected_example;
      record.selected_id = p.selected_id;
      out.records.push_back(std::move(record));
    }
  }

  artifacts::save_predictions(out, ctx.predictions_path());
  std::cout << "predict(" << out.mode << "): " << out.records.size() << " samples -> "
            << ctx.predictions_path().string() << "\n";
  return 0;
}

int cmd_evaluate(const RunContext& ctx) {
  const std::string data = ctx.data_digest();
  artifacts::WindowsFile windows = load_checked_windows(ctx, data);
  const artifacts::PredictionsFile predictions =
      artifacts::load_predictions(ctx.predictions_path());
  artifacts::require_digest(predictions.config_digest, ctx.predict_digest(),
                            ctx.predictions_path(), "predict");

  const LabelSchema schema = windows.schema();
  std::map<std::string, ClassLabel> truth;
  for (const Sample& s : windows.samples) truth[s.id] = s.label;

  std::vector<ClassLabel> predicted;
  std::vector<ClassLabel> actual;
  std::vector<Vector> scores;
  int abstentions = 0;
  for (const artifacts::PredictionRecord& r : predictions.records) {
    const auto it = truth.find(r.id);
    if (it == truth.end()) {
      fail(ErrorCode::invalid_input, "evaluate: prediction for unknown sample '" + r.id + "'");
    }
    predicted.push_back(ClassLabel{r.final_label});
    actual.push_back(it->second);
    scores.push_back(r.fused);  // fused distribution when available, else one-hot
    abstentions += r.abstained ? 1 : 0;
  }

  eval::MetricReport report = eval::f1_scores(predicted, actual, schema);
  report.abstentions = abstentions;
  try {
    report.auroc = eval::auroc(scores, actual, schema.num_classes());
  } catch (const Error&) {
    // degenerate slice: AUROC stays NaN
  }

  std::ofstream out(ctx.metrics_path());
  if (!out) fail(ErrorCode::internal, "cannot write " + ctx.metrics_path().string());
  out << "# timecap metrics v1\n";
  out << "# config_digest=" << predictions.config_digest << "\n";
  out << "# seed=" << ctx.seed << "\n";
  out << "# mode=" << predictions.mode << "\n";
  out << "metric,class,value\n";
  for (int k = 0; k < schema.num_classes(); ++k) {
    out << "precision," << schema.name_of(k) << ',' << format_double(report.precision(k), 6) << '\n';
    out << "recall," << schema.name_of(k) << ',' << format_double(report.recall(k), 6) << '\n';
    out << "f1," << schema.name_of(k) << ',' << format_double(report.f1(k), 6) << '\n';
  }
  out << "macro_f1,," << format_double(report.macro_f1, 6) << '\n';
  out << "auroc,,"
      << (std::isnan(report.auroc) ? std::string("nan") : format_double(report.auroc, 6)) << '\n';
  out << "abstentions,," << report.abstentions << '\n';
  out << "samples,," << report.sample_count() << '\n';
  for (int a = 0; a < schema.num_classes(); ++a) {
    for (int p = 0; p < schema.num_classes(); ++p) {
      out << "confusion," << schema.name_of(a) << "->" << schema.name_of(p) << ','
          << report.confusion(a, p) << '\n';
    }
  }
  out.close();

  if (ctx.config.get_bool("eval.similarity", false)) {
    const std::string ctx_d = ctx.ctx_digest(data);
    attach_summaries(windows, ctx, ctx_d);
    const std::vector<Sample> test = windows.split("test");
    const eval::SimilarityMatrices sims = eval::similarity_matrices(test);
    const std::string comment =
        "config_digest=" + predictions.config_digest + " seed=" + std::to_string(ctx.seed);
    eval::write_matrix(sims.time_sim, ctx.out_dir / "similarity_time.dat", comment);
    eval::write_matrix(sims.text_sim, ctx.out_dir / "similarity_text.dat", comment);
  }

  std::cout << "evaluate: macro-F1 " << format_double(report.macro_f1, 4) << ", AUROC "
            << (std::isnan(report.auroc) ? std::string("nan") : format_double(report.auroc, 4))
            << ", abstentions " << report.abstentions << " -> " << ctx.metrics_path().string()
            << "\n";
  return 0;
}

int cmd_interpret(RunContext& ctx) {
  if (ctx.config.get_string("pipeline.interpretation", "none") == "none") {
    ctx.config.set("pipeline.interpretation", "implicit");
  }
  const std::string data = ctx.data_digest();
  const std::string ctx_d = ctx.ctx_digest(data);
  artifacts::WindowsFile windows = load_checked_windows(ctx, data);
  attach_summaries(windows, ctx, ctx_d);

  const pipeline::PipelineConfig pc = pipeline_config_for(ctx);
  auto client = make_client(ctx);
  const LabelSchema schema = windows.schema();
  pipeline::Agents agents{client.get(), &schema, windows.domain_hint,
                          ingest::majority_label(windows.split("train"), schema.num_classes()),
                          ctx.config.get_double("provider.temperature", 0.0)};

  const LoadedArtifacts loaded = load_timecap_artifacts(
      ctx, windows, data, ctx_d, pc.sampler == pipeline::Sampler::time_only);
  const pipeline::TimecapArtifacts view = view_of(loaded);

  std::ofstream out(ctx.interpretations_path());
  if (!out) fail(ErrorCode::internal, "cannot write " + ctx.interpretations_path().string());
  out << nlohmann::json{{"type", "timecap-interpretations"},
                        {"version", 1},
                        {"config_digest", ctx.predict_digest()},
                        {"seed", ctx.seed},
                        {"interpretation",
                         ctx.config.get_string("pipeline.interpretation", "implicit")}}
             .dump()
      << '\n';
  for (const Sample& sample : windows.split("test")) {
    const pipeline::FusedPrediction p = pipeline::timecap_predict(agents, sample, view, pc);
    nlohmann::json line = {{"id", p.sample_id},
                           {"final_label", p.final_label.index},
                           {"abstained", p.abstained}};
    if (pc.interpretation == pipeline::Interpretation::implicit) {
      line["rationale"] = p.abstained ? p.summary_text : p.rationale;
    } else {
      if (p.selected_example) line["selected_example"] = *p.selected_example;
      if (p.selected_id) line["selected_id"] = *p.selected_id;
      line["selection_clamped"] = p.selection_clamped;
    }
    out << line.dump() << '\n';
  }
  std::cout << "interpret: wrote " << ctx.interpretations_path().string() << "\n";
  return 0;
}

int cmd_ablate(const RunContext& ctx) {
  const std::string data = ctx.data_digest();
  const std::string ctx_d = ctx.ctx_digest(data);
  artifacts::WindowsFile windows = load_checked_windows(ctx, data);
  attach_summaries(windows, ctx, ctx_d);

  auto client = make_client(ctx);
  const LabelSchema schema = windows.schema();
  pipeline::Agents agents{client.get(), &schema, windows.domain_hint,
                          ingest::majority_label(windows.split("train"), schema.num_classes()),
                          ctx.config.get_double("provider.temperature", 0.0)};

  eval::AblationGrid grid;
  for (const std::string& s :
       KeyValueConfig::parse_string(
           "x=" + ctx.config.get_string("ablate.samplers", "random,time_only,multimodal"))
           .get_list("x")) {
    grid.samplers.push_back(pipeline::parse_sampler(s));
  }
  for (const std::string& f :
       KeyValueConfig::parse_string(
           "x=" + ctx.config.get_string("ablate.fusions", "aggregate,select_one_mm"))
           .get_list("x")) {
    grid.fusions.push_back(pipeline::parse_fusion(f));
  }

  const bool need_time_only =
      std::count(grid.samplers.begin(), grid.samplers.end(), pipeline::Sampler::time_only) > 0;
  const LoadedArtifacts loaded =
      load_timecap_artifacts(ctx, windows, data, ctx_d, need_time_only);
  const pipeline::TimecapArtifacts view = view_of(loaded);

  pipeline::PipelineConfig base = pipeline_config_for(ctx);
  base.mode = pipeline::Mode::timecap;

  const std::vector<eval::AblationRow> rows =
      eval::run_ablation(windows.split("test"), agents, view, base, grid);
  eval::write_ablation_csv(rows, ctx.ablation_path(), ctx.predict_digest(), ctx.seed);
  eval::write_ablation_plotdata(rows, ctx.ablation_plot_path(), ctx.predict_digest(), ctx.seed);
  std::cout << "ablate: " << rows.size() << " rows -> " << ctx.ablation_path().string() << "\n";
  return 0;
}

void print_usage() {
  std::cout <<
      "usage: timecap <command> --config <file> [options]\n"
      "\n"
      "commands:\n"
      "  ingest         load the raw table, window, label, split, normalize\n"
      "  contextualize  generate a text summary per sample (cache-backed, resumable)\n"
      "  train          train the multi-modal encoder         [--variant time_only]\n"
      "  embed          build the retrieval store             [--variant time_only]\n"
      "  predict        run TimeCP or TimeCAP over the test split\n"
      "  evaluate       score predictions (F1, AUROC) into metrics.csv\n"
      "  interpret      implicit/explicit interpretation records\n"
      "  ablate         sampler x fusion grid, CSV + plot data\n"
      "\n"
      "options:\n"
      "  --config <file>        flat key=value run configuration (required)\n"
      "  --provider <mock|http> override provider.kind\n"
      "  --model <name>         override provider.model\n"
      "  --cache-dir <dir>      override provider.cache_dir\n"
      "  --max-concurrency <n>  override provider.max_concurrency\n"
      "  --seed <n>             override seed\n"
      "  --mode <timecp|timecap> override pipeline.mode for predict\n"
      "  --impute <drop|ffill>  override the manifest's missing-value policy\n"
      "  --out <dir>            override output directory\n"
      "  --variant <v>          encoder variant for train/embed (multimodal|time_only)\n";
}

}  // namespace

int run(const std::vector<std::string>& args) {
  try {
    if (args.empty() || args[0] == "--help" || args[0] == "-h" || args[0] == "help") {
      print_usage();
      return args.empty() ? 2 : 0;
    }
    const std::string command = args[0];

    std::string config_path;
    std::string variant = "multimodal";
    std::map<std::string, std::string> overrides;
    for (std::size_t i = 1; i < args.size(); ++i) {
      auto next_value = [&](const std::string& flag) -> std::string {
        if (i + 1 >= args.size()) {
          fail(ErrorCode::config, flag + " needs a value");
        }
        return args[++i];
      };
      if (args[i] == "--config") {
        config_path = next_value("--config");
      } else if (args[i] == "--provider") {
        overrides["provider.kind"] = next_value("--provider");
      } else if (args[i] == "--model") {
        overrides["provider.model"] = next_value("--model");
      } else if (args[i] == "--cache-dir") {
        overrides["provider.cache_dir"] = next_value("--cache-dir");
      } else if (args[i] == "--max-concurrency") {
        overrides["provider.max_concurrency"] = next_value("--max-concurrency");
      } else if (args[i] == "--seed") {
        overrides["seed"] = next_value("--seed");
      } else if (args[i] == "--mode") {
        overrides["pipeline.mode"] = next_value("--mode");
      } else if (args[i] == "--impute") {
        overrides["ingest.impute"] = next_value("--impute");
      } else if (args[i] == "--out") {
        overrides["out"] = next_value("--out");
      } else if (args[i] == "--variant") {
        variant = next_value("--variant");
      } else if (args[i] == "--help" || args[i] == "-h") {
        print_usage();
        return 0;
      } else {
        fail(ErrorCode::config, "unknown option: " + args[i]);
      }
    }
    if (config_path.empty()) {
      fail(ErrorCode::config, "--config is required");
    }
    if (variant != "multimodal" && variant != "time_only") {
      fail(ErrorCode::config, "--variant must be multimodal or time_only");
    }

    RunContext ctx;
    ctx.config = KeyValueConfig::parse_file(config_path);
    for (const auto& [key, value] : overrides) ctx.config.set(key, value);
    ctx.config_dir = fs::absolute(fs::path(config_path)).parent_path();
    ctx.out_dir = ctx.config.get_string("out", "runs/default");
    if (ctx.out_dir.is_relative()) ctx.out_dir = fs::current_path() / ctx.out_dir;
    ctx.seed = static_cast<std::uint64_t>(ctx.config.get_int("seed", 0));
    fs::create_directories(ctx.out_dir);

    if (command == "ingest") return cmd_ingest(ctx);
    if (command == "contextualize") return cmd_contextualize(ctx);
    if (command == "train") return cmd_train(ctx, variant);
    if (command == "embed") return cmd_embed(ctx, variant);
    if (command == "predict") return cmd_predict(ctx);
    if (command == "evaluate") return cmd_evaluate(ctx);
    if (command == "interpret") return cmd_interpret(ctx);
    if (command == "ablate") return cmd_ablate(ctx);
    fail(ErrorCode::config, "unknown command: " + command);
  } catch (const Error& e) {
    std::cerr << "timecap: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "timecap: internal error: " << e.what() << "\n";
    return 5;
  }
}

}  // namespace timecap::cli
