#pragma once

#include "timecap/core.hpp"
#include "timecap/gateway.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace timecap::encoder {

enum class TextBackend { hashed_bow, external_embedding };

std::string to_string(TextBackend backend);
TextBackend parse_text_backend(std::string_view s);

struct EncoderConfig {
  int window_len = 24;    // L
  int num_channels = 1;   // C
  int num_classes = 2;    // K
  int patch_len = 4;      // L_p
  int patch_stride = 4;   // L_s
  int model_dim = 64;     // d, divisible by heads
  int text_dim = 64;      // d'
  int heads = 4;          // H
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  int patience = 10;
  std::uint64_t seed = 0;
  bool positional_embedding = true;
  bool text_enabled = true;  // off = "time only" ablation: text path frozen at zero
  TextBackend text_backend = TextBackend::hashed_bow;
  int hash_vocab = 4096;  // V for the hashed bag-of-words table

  void validate() const;

  /// N = ceil((L - L_p) / L_s) + 1
  int num_patches() const;
  int head_dim() const { return model_dim / heads; }
};

/// All trainable matrices. Doubles as the gradient/velocity container.
struct EncoderParams {
  EncoderConfig config;
  Matrix w_time;                // L_p x d
  Matrix w_text;                // d' x d
  std::vector<Matrix> w_query;  // H of d x d/H
  std::vector<Matrix> w_key;
  std::vector<Matrix> w_value;
  Matrix w_heads;               // d x d
  Matrix w_out;                 // dC x K
  Matrix positional;            // N x d when enabled, else 0x0
  Matrix token_table;           // V x d' for hashed_bow, else 0x0

  static EncoderParams init(const EncoderConfig& config);
  static EncoderParams zeros_like(const EncoderConfig& config);

  /// Visits every trainable matrix as (name, matrix). Skips the text-path
  /// matrices when text is disabled and the table for the external backend.
  void for_each_matrix(const std::function<void(const std::string&, Matrix&)>& fn);
  void for_each_matrix(const std::function<void(const std::string&, const Matrix&)>& fn) const;

  bool all_finite() const;
};

struct ForwardTrace {
  Vector logits;     // K
  Vector embedding;  // z, d*C
  std::vector<Matrix> attention;  // C*H row-stochastic (N+1)x(N+1) maps
};

/// Splits one channel into patches; a final patch that overruns the series
/// repeats the last observed value.
Matrix patchify(const Vector& series, int patch_len, int patch_stride);

/// Token buckets plus the embedded vector z-hat. For hashed_bow the buckets
/// drive backprop into the token table; for the external backend z-hat is
/// frozen and only its projection trains.
struct TextFeatures {
  Vector zhat;               // d'
  std::vector<int> buckets;  // empty for external backend
};

TextFeatures text_features(const TextSummary& summary, const EncoderParams& params,
                           gateway::EmbeddingProvider* external = nullptr);

Vector embed_text(const TextSummary& summary, const EncoderParams& params,
                  gateway::EmbeddingProvider* external = nullptr);

ForwardTrace forward(const TimeSeriesWindow& window, const TextFeatures& text,
                     const EncoderParams& params);
ForwardTrace forward(const TimeSeriesWindow& window, const TextSummary& summary,
                     const EncoderParams& params,
                     gateway::EmbeddingProvider* external = nullptr);

/// Mean cross-entropy over the batch plus gradients for every trainable
/// matrix (reverse-mode through the full chain, text table included).
std::pair<double, EncoderParams> loss_and_gradients(std::span<const Sample> batch,
                                                    const EncoderParams& params,
                                                    gateway::EmbeddingProvider* external = nullptr);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_macro_f1 = 0.0;
  bool improved = false;
};

struct TrainResult {
  EncoderParams params;  // best-validation parameters
  std::vector<EpochRecord> log;
  int best_epoch = -1;
  double best_val_f1 = 0.0;
  bool diverged = false;
};

/// Seeded mini-batch SGD with momentum; keeps the best-validation-macro-F1
/// parameters and stops after `patience` epochs without improvement.
TrainResult train(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const EncoderConfig& config,
                  gateway::EmbeddingProvider* external = nullptr);

/// Row i = forward(samples[i]).embedding.
Matrix extract_embeddings(const EncoderParams& params, std::span<const Sample> samples,
                          gateway::EmbeddingProvider* external = nullptr);

/// Digest of config + all matrices; identifies a checkpoint.
std::string params_digest(const EncoderParams& params);

void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path,
                     const std::string& config_digest, std::uint64_t seed);
EncoderParams load_checkpoint(const std::filesystem::path& path,
                              std::string* config_digest = nullptr,
                              std::string* digest = nullptr);

void write_training_log(const std::vector<EpochRecord>& log, const std::filesystem::path& path,
                        const std::string& config_digest = "", std::uint64_t seed = 0);

}  // namespace timecap::encoder
