#include "timecap/encoder.hpp"

#include "timecap/digest.hpp"
#include "timecap/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace timecap::encoder {

using nlohmann::json;

std::string to_string(TextBackend backend) {
  return backend == TextBackend::hashed_bow ? "hashed_bow" : "external_embedding";
}

TextBackend parse_text_backend(std::string_view s) {
  const std::string v = to_lower(trim(s));
  if (v == "hashed_bow") return TextBackend::hashed_bow;
  if (v == "external_embedding") return TextBackend::external_embedding;
  fail(ErrorCode::config, "unknown text backend: '" + std::string(s) + "'");
}

void EncoderConfig::validate() const {
  if (window_len <= 0 || num_channels <= 0) {
    fail(ErrorCode::config, "encoder: window_len and num_channels must be positive");
  }
  if (num_classes < 2) fail(ErrorCode::config, "encoder: num_classes must be >= 2");
  if (patch_len < 1 || patch_len > window_len) {
    fail(ErrorCode::config, "encoder: need 1 <= patch_len <= window_len");
  }
  if (patch_stride < 1 || patch_stride > patch_len) {
    fail(ErrorCode::config, "encoder: need 1 <= patch_stride <= patch_len");
  }
  if (model_dim <= 0 || heads <= 0 || model_dim % heads != 0) {
    fail(ErrorCode::config, "encoder: model_dim must be positive and divisible by heads");
  }
  if (text_dim <= 0) fail(ErrorCode::config, "encoder: text_dim must be positive");
  if (hash_vocab <= 0) fail(ErrorCode::config, "encoder: hash_vocab must be positive");
  if (epochs < 1 || batch_size < 1) {
    fail(ErrorCode::config, "encoder: epochs and batch_size must be >= 1");
  }
  if (!(learning_rate > 0)) fail(ErrorCode::config, "encoder: learning_rate must be > 0");
  if (momentum < 0 || momentum >= 1) fail(ErrorCode::config, "encoder: momentum must be in [0,1)");
  if (patience < 0) fail(ErrorCode::config, "encoder: patience must be >= 0");
}

int EncoderConfig::num_patches() const {
  return (window_len - patch_len + patch_stride - 1) / patch_stride + 1;
}

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = rng.next_normal() * scale;
    }
  }
  return m;
}

}  // namespace

EncoderParams EncoderParams::init(const EncoderConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const int d = config.model_dim;
  const int dh = config.head_dim();
  const int N = config.num_patches();

  EncoderParams p;
  p.config = config;
  p.w_time = random_matrix(rng, config.patch_len, d, 1.0 / std::sqrt(config.patch_len));
  p.w_text = random_matrix(rng, config.text_dim, d, 1.0 / std::sqrt(config.text_dim));
  for (int h = 0; h < config.heads; ++h) {
    p.w_query.push_back(random_matrix(rng, d, dh, 1.0 / std::sqrt(d)));
    p.w_key.push_back(random_matrix(rng, d, dh, 1.0 / std::sqrt(d)));
    p.w_value.push_back(random_matrix(rng, d, dh, 1.0 / std::sqrt(d)));
  }
  p.w_heads = random_matrix(rng, d, d, 1.0 / std::sqrt(d));
  p.w_out = random_matrix(rng, static_cast<Eigen::Index>(d) * config.num_channels,
                          config.num_classes, 1.0 / std::sqrt(d * config.num_channels));
  p.positional = config.positional_embedding ? random_matrix(rng, N, d, 0.02) : Matrix::Zero(N, d);
  p.token_table = config.text_backend == TextBackend::hashed_bow
                      ? random_matrix(rng, config.hash_vocab, config.text_dim,
                                      1.0 / std::sqrt(config.text_dim))
                      : Matrix::Zero(0, 0);
  if (!config.text_enabled) {
    p.w_text.setZero();
    p.token_table.setZero();
  }
  return p;
}

EncoderParams EncoderParams::zeros_like(const EncoderConfig& config) {
  const int d = config.model_dim;
  EncoderParams p;
  p.config = config;
  p.w_time = Matrix::Zero(config.patch_len, d);
  p.w_text = Matrix::Zero(config.text_dim, d);
  for (int h = 0; h < config.heads; ++h) {
    p.w_query.emplace_back(Matrix::Zero(d, config.head_dim()));
    p.w_key.emplace_back(Matrix::Zero(d, config.head_dim()));
    p.w_value.emplace_back(Matrix::Zero(d, config.head_dim()));
  }
  p.w_heads = Matrix::Zero(d, d);
  p.w_out = Matrix::Zero(static_cast<Eigen::Index>(d) * config.num_channels, config.num_classes);
  p.positional = Matrix::Zero(config.num_patches(), d);
  p.token_table = config.text_backend == TextBackend::hashed_bow
                      ? Matrix::Zero(config.hash_vocab, config.text_dim)
                      : Matrix::Zero(0, 0);
  return p;
}

void EncoderParams::for_each_matrix(const std::function<void(const std::string&, Matrix&)>& fn) {
  fn("w_time", w_time);
  if (config.text_enabled) fn("w_text", w_text);
  for (std::size_t h = 0; h < w_query.size(); ++h) {
    fn("w_query." + std::to_string(h), w_query[h]);
    fn("w_key." + std::to_string(h), w_key[h]);
    fn("w_value." + std::to_string(h), w_value[h]);
  }
  fn("w_heads", w_heads);
  fn("w_out", w_out);
  if (config.positional_embedding) fn("positional", positional);
  if (config.text_enabled && config.text_backend == TextBackend::hashed_bow) {
    fn("token_table", token_table);
  }
}

void EncoderParams::for_each_matrix(
    const std::function<void(const std::string&, const Matrix&)>& fn) const {
  const_cast<EncoderParams*>(this)->for_each_matrix(
      [&](const std::string& name, Matrix& m) { fn(name, m); });
}

bool EncoderParams::all_finite() const {
  bool ok = true;
  for_each_matrix([&](const std::string&, const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

Matrix patchify(const Vector& series, int patch_len, int patch_stride) {
  const auto L = static_cast<int>(series.size());
  if (L == 0) fail(ErrorCode::invalid_input, "patchify: empty series");
  if (patch_len < 1 || patch_len > L) {
    fail(ErrorCode::invalid_input, "patchify: need 1 <= patch_len <= series length");
  }
  if (patch_stride < 1 || patch_stride > patch_len) {
    fail(ErrorCode::invalid_input, "patchify: need 1 <= patch_stride <= patch_len");
  }
  const int N = (L - patch_len + patch_stride - 1) / patch_stride + 1;
  Matrix patches(N, patch_len);
  for (int j = 0; j < N; ++j) {
    for (int t = 0; t < patch_len; ++t) {
      const int idx = j * patch_stride + t;
      patches(j, t) = series(std::min(idx, L - 1));  // pad: repeat last value
    }
  }
  return patches;
}

TextFeatures text_features(const TextSummary& summary, const EncoderParams& params,
                           gateway::EmbeddingProvider* external) {
  const EncoderConfig& config = params.config;
  TextFeatures features;
  if (!config.text_enabled) {
    features.zhat = Vector::Zero(config.text_dim);
    return features;
  }
  if (config.text_backend == TextBackend::hashed_bow) {
    const std::vector<std::string> tokens = tokenize(summary.text);
    if (tokens.empty()) {
      fail(ErrorCode::invalid_input, "embed_text: summary has no tokens");
    }
    features.zhat = Vector::Zero(config.text_dim);
    for (const std::string& token : tokens) {
      const int bucket = static_cast<int>(fnv1a64(token) %
                                          static_cast<std::uint64_t>(config.hash_vocab));
      features.buckets.push_back(bucket);
      features.zhat += params.token_table.row(bucket).transpose();
    }
    features.zhat /= static_cast<double>(tokens.size());
    return features;
  }
  if (!external) {
    fail(ErrorCode::config, "embed_text: external_embedding backend needs a provider");
  }
  if (trim(summary.text).empty()) {
    fail(ErrorCode::invalid_input, "embed_text: empty summary");
  }
  features.zhat = external->embed(summary.text, config.text_dim);
  return features;
}

Vector embed_text(const TextSummary& summary, const EncoderParams& params,
                  gateway::EmbeddingProvider* external) {
  return text_features(summary, params, external).zhat;
}

namespace {

Matrix softmax_rows(const Matrix& scores) {
  Matrix out(scores.rows(), scores.cols());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const double m = scores.row(r).maxCoeff();
    Eigen::RowVectorXd e = (scores.row(r).array() - m).exp();
    out.row(r) = e / e.sum();
  }
  return out;
}

struct ChannelActivations {
  Matrix patches;                      // N x L_p
  Matrix tokens;                       // (N+1) x d
  std::vector<Matrix> q, k, v, attn;   // per head
  Matrix head_concat;                  // (N+1) x d
};

struct Activations {
  Vector text_token;  // d
  std::vector<ChannelActivations> channels;
  Vector embedding;
  Vector logits;
};

Activations run_forward(const TimeSeriesWindow& window, const TextFeatures& text,
                        const EncoderParams& params) {
  const EncoderConfig& config = params.config;
  if (window.length() != config.window_len || window.channels() != config.num_channels) {
    fail(ErrorCode::invalid_input,
         "forward: window shape " + std::to_string(window.length()) + "x" +
             std::to_string(window.channels()) + " does not match encoder config " +
             std::to_string(config.window_len) + "x" + std::to_string(config.num_channels));
  }
  if (text.zhat.size() != config.text_dim) {
    fail(ErrorCode::invalid_input, "forward: text embedding dimension mismatch");
  }
  const int d = config.model_dim;
  const int dh = config.head_dim();
  const int N = config.num_patches();
  const double scale = std::sqrt(static_cast<double>(d) / config.heads);

  Activations acts;
  acts.text_token = params.w_text.transpose() * text.zhat;
  acts.embedding = Vector::Zero(static_cast<Eigen::Index>(d) * config.num_channels);

  for (int i = 0; i < config.num_channels; ++i) {
    ChannelActivations ca;
    ca.patches = patchify(window.values.col(i), config.patch_len, config.patch_stride);
    ca.tokens = Matrix(N + 1, d);
    ca.tokens.topRows(N) = ca.patches * params.w_time;
    if (config.positional_embedding) ca.tokens.topRows(N) += params.positional;
    ca.tokens.row(N) = acts.text_token.transpose();

    ca.head_concat = Matrix(N + 1, d);
    for (int h = 0; h < config.heads; ++h) {
      Matrix q = ca.tokens * params.w_query[static_cast<std::size_t>(h)];
      Matrix k = ca.tokens * params.w_key[static_cast<std::size_t>(h)];
      Matrix v = ca.tokens * params.w_value[static_cast<std::size_t>(h)];
      Matrix attn = softmax_rows(q * k.transpose() / scale);
      ca.head_concat.middleCols(static_cast<Eigen::Index>(h) * dh, dh) = attn * v;
      ca.q.push_back(std::move(q));
      ca.k.push_back(std::move(k));
      ca.v.push_back(std::move(v));
      ca.attn.push_back(std::move(attn));
    }
    const Matrix projected = ca.head_concat * params.w_heads;
    // The appended text token attends over every patch; its output row is the
    // channel summary.
    acts.embedding.segment(static_cast<Eigen::Index>(i) * d, d) = projected.row(N).transpose();
    acts.channels.push_back(std::move(ca));
  }

  acts.logits = params.w_out.transpose() * acts.embedding;
  if (!acts.logits.allFinite() || !acts.embedding.allFinite()) {
    fail(ErrorCode::internal, "forward: non-finite intermediate at prediction head");
  }
  return acts;
}

ForwardTrace to_trace(const Activations& acts) {
  ForwardTrace trace;
  trace.logits = acts.logits;
  trace.embedding = acts.embedding;
  for (const ChannelActivations& ca : acts.channels) {
    for (const Matrix& a : ca.attn) trace.attention.push_back(a);
  }
  return trace;
}

double cross_entropy(const Vector& logits, int label, Vector* probs_out) {
  const double m = logits.maxCoeff();
  const double lse = std::log((logits.array() - m).exp().sum()) + m;
  if (probs_out) *probs_out = (logits.array() - lse).exp();
  return lse - logits(label);
}

}  // namespace

ForwardTrace forward(const TimeSeriesWindow& window, const TextFeatures& text,
                     const EncoderParams& params) {
  return to_trace(run_forward(window, text, params));
}

ForwardTrace forward(const TimeSeriesWindow& window, const TextSummary& summary,
                     const EncoderParams& params, gateway::EmbeddingProvider* external) {
  return to_trace(run_forward(window, text_features(summary, params, external), params));
}

namespace {

double accumulate_sample_gradients(const Sample& sample, const TextFeatures& text,
                                   const EncoderParams& params, double inv_batch,
                                   EncoderParams& grads) {
  const EncoderConfig& config = params.config;
  const int d = config.model_dim;
  const int dh = config.head_dim();
  const int N = config.num_patches();
  const double scale = std::sqrt(static_cast<double>(d) / config.heads);

  const Activations acts = run_forward(sample.window, text, params);
  if (sample.label.index < 0 || sample.label.index >= config.num_classes) {
    fail(ErrorCode::invalid_input, "loss: label outside encoder's class count");
  }

  Vector probs;
  const double loss = cross_entropy(acts.logits, sample.label.index, &probs);

  Vector dlogits = probs * inv_batch;
  dlogits(sample.label.index) -= inv_batch;

  grads.w_out += acts.embedding * dlogits.transpose();
  const Vector dz = params.w_out * dlogits;

  Vector dtext_token = Vector::Zero(d);
  for (int i = 0; i < config.num_channels; ++i) {
    const ChannelActivations& ca = acts.channels[static_cast<std::size_t>(i)];
    const Vector dz_i = dz.segment(static_cast<Eigen::Index>(i) * d, d);

    Matrix du = Matrix::Zero(N + 1, d);
    du.row(N) = dz_i.transpose();

    grads.w_heads += ca.head_concat.transpose() * du;
    const Matrix dconcat = du * params.w_heads.transpose();

    Matrix dtokens = Matrix::Zero(N + 1, d);
    for (int h = 0; h < config.heads; ++h) {
      const auto hs = static_cast<std::size_t>(h);
      const Matrix dout_h = dconcat.middleCols(static_cast<Eigen::Index>(h) * dh, dh);
      const Matrix dattn = dout_h * ca.v[hs].transpose();
      const Matrix dv = ca.attn[hs].transpose() * dout_h;

      Matrix dscores(N + 1, N + 1);
      for (Eigen::Index r = 0; r <= N; ++r) {
        const double dot = ca.attn[hs].row(r).dot(dattn.row(r));
        dscores.row(r) =
            ca.attn[hs].row(r).cwiseProduct(dattn.row(r) - Eigen::RowVectorXd::Constant(N + 1, dot));
      }
      dscores /= scale;

      const Matrix dq = dscores * ca.k[hs];
      const Matrix dk = dscores.transpose() * ca.q[hs];

      grads.w_query[hs] += ca.tokens.transpose() * dq;
      grads.w_key[hs] += ca.tokens.transpose() * dk;
      grads.w_value[hs] += ca.tokens.transpose() * dv;

      dtokens += dq * params.w_query[hs].transpose() + dk * params.w_key[hs].transpose() +
                 dv * params.w_value[hs].transpose();
    }

    const Matrix dpatch_tokens = dtokens.topRows(N);
    if (config.positional_embedding) grads.positional += dpatch_tokens;
    grads.w_time += ca.patches.transpose() * dpatch_tokens;
    dtext_token += dtokens.row(N).transpose();
  }

  if (config.text_enabled) {
    grads.w_text += text.zhat * dtext_token.transpose();
    if (config.text_backend == TextBackend::hashed_bow && !text.buckets.empty()) {
      const Vector dzhat = params.w_text * dtext_token / static_cast<double>(text.buckets.size());
      for (int bucket : text.buckets) {
        grads.token_table.row(bucket) += dzhat.transpose();
      }
    }
  }
  return loss;
}

double batch_gradients(std::span<const Sample> batch, std::span<const TextFeatures> features,
                       const EncoderParams& params, EncoderParams& grads) {
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    loss += accumulate_sample_gradients(batch[i], features[i], params, inv_batch, grads);
  }
  return loss * inv_batch;
}

std::vector<TextFeatures> features_for(std::span<const Sample> samples,
                                       const EncoderParams& params,
                                       gateway::EmbeddingProvider* external) {
  std::vector<TextFeatures> features;
  features.reserve(samples.size());
  for (const Sample& sample : samples) {
    if (params.config.text_enabled && !sample.summary) {
      fail(ErrorCode::invalid_input, "encoder: sample '" + sample.id + "' has no summary");
    }
    features.push_back(text_features(sample.summary ? *sample.summary : TextSummary{}, params,
                                     external));
  }
  return features;
}

}  // namespace

std::pair<double, EncoderParams> loss_and_gradients(std::span<const Sample> batch,
                                                    const EncoderParams& params,
                                                    gateway::EmbeddingProvider* external) {
  if (batch.empty()) {
    fail(ErrorCode::invalid_input, "loss_and_gradients: empty batch");
  }
  EncoderParams grads = EncoderParams::zeros_like(params.config);
  const std::vector<TextFeatures> features = features_for(batch, params, external);
  const double loss = batch_gradients(batch, features, params, grads);
  return {loss, std::move(grads)};
}

namespace {

std::vector<Matrix*> matrix_list(EncoderParams& p) {
  std::vector<Matrix*> list;
  p.for_each_matrix([&](const std::string&, Matrix& m) { list.push_back(&m); });
  return list;
}

}  // namespace

TrainResult train(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const EncoderConfig& config, gateway::EmbeddingProvider* external) {
  config.validate();
  if (train_set.empty() || val_set.empty()) {
    fail(ErrorCode::invalid_input, "train: training and validation sets must be non-empty");
  }

  EncoderParams params = EncoderParams::init(config);
  EncoderParams velocity = EncoderParams::zeros_like(config);

  // Hashed-bow z-hat depends on the table being trained, but bucket ids do
  // not; external embeddings are frozen entirely. Either way token work
  // happens once per sample.
  std::vector<TextFeatures> train_features = features_for(train_set, params, external);
  const std::vector<TextFeatures> val_features = features_for(val_set, params, external);

  const bool refresh_bow = config.text_enabled && config.text_backend == TextBackend::hashed_bow;
  auto refresh_zhat = [&](std::vector<TextFeatures>& features) {
    if (!refresh_bow) return;
    for (TextFeatures& f : features) {
      f.zhat = Vector::Zero(config.text_dim);
      for (int bucket : f.buckets) f.zhat += params.token_table.row(bucket).transpose();
      if (!f.buckets.empty()) f.zhat /= static_cast<double>(f.buckets.size());
    }
  };

  TrainResult result;
  result.params = params;

  Rng rng(config.seed + 1);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  int epochs_since_best = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<Sample> batch;
      std::vector<TextFeatures> batch_features;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        batch.push_back(train_set[order[i]]);
        batch_features.push_back(train_features[order[i]]);
      }

      EncoderParams grads = EncoderParams::zeros_like(config);
      double loss = std::numeric_limits<double>::quiet_NaN();
      try {
        loss = batch_gradients(batch, batch_features, params, grads);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::internal) throw;  // overflow inside forward
      }
      if (!std::isfinite(loss)) {
        result.diverged = true;
        return result;  // best finite checkpoint so far
      }
      epoch_loss += loss;
      ++batches;

      const std::vector<Matrix*> ps = matrix_list(params);
      const std::vector<Matrix*> vs = matrix_list(velocity);
      const std::vector<Matrix*> gs = matrix_list(grads);
      for (std::size_t m = 0; m < ps.size(); ++m) {
        *vs[m] = config.momentum * *vs[m] - config.learning_rate * *gs[m];
        *ps[m] += *vs[m];
      }
      refresh_zhat(train_features);

      if (!params.all_finite()) {
        result.diverged = true;
        return result;  // best finite checkpoint so far
      }
    }
    epoch_loss /= static_cast<double>(batches);

    // Validation macro-F1 decides the checkpoint to keep.
    std::vector<TextFeatures> val_now = val_features;
    refresh_zhat(val_now);
    std::vector<ClassLabel> predicted;
    std::vector<ClassLabel> actual;
    predicted.reserve(val_set.size());
    actual.reserve(val_set.size());
    try {
      for (std::size_t i = 0; i < val_set.size(); ++i) {
        const Activations acts = run_forward(val_set[i].window, val_now[i], params);
        predicted.push_back(argmax_with_tiebreak(acts.logits));
        actual.push_back(val_set[i].label);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::internal && e.code() != ErrorCode::invalid_input) throw;
      result.diverged = true;  // overflow on exploded parameters
      return result;
    }
    const double val_f1 = eval::macro_f1(predicted, actual, config.num_classes);

    const bool improved = result.best_epoch < 0 || val_f1 > result.best_val_f1;
    if (improved) {
      result.best_epoch = epoch;
      result.best_val_f1 = val_f1;
      result.params = params;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
    }
    result.log.push_back({epoch, epoch_loss, val_f1, improved});
    if (epochs_since_best > config.patience) break;
  }
  return result;
}

Matrix extract_embeddings(const EncoderParams& params, std::span<const Sample> samples,
                          gateway::EmbeddingProvider* external) {
  const Eigen::Index dim =
      static_cast<Eigen::Index>(params.config.model_dim) * params.config.num_channels;
  Matrix z(static_cast<Eigen::Index>(samples.size()), dim);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (params.config.text_enabled && !samples[i].summary) {
      fail(ErrorCode::invalid_input,
           "extract_embeddings: sample '" + samples[i].id + "' has no summary");
    }
    const ForwardTrace trace =
        forward(samples[i].window,
                samples[i].summary ? *samples[i].summary : TextSummary{}, params, external);
    z.row(static_cast<Eigen::Index>(i)) = trace.embedding.transpose();
  }
  return z;
}

// ---------------------------------------------------------------------------
// Checkpoint container
// ---------------------------------------------------------------------------

namespace {

json matrix_to_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    fail(ErrorCode::invalid_input, "checkpoint: matrix payload size mismatch");
  }
  Matrix m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data.at(i++).get<double>();
  }
  return m;
}

json config_to_json(const EncoderConfig& c) {
  return json{{"window_len", c.window_len},
              {"num_channels", c.num_channels},
              {"num_classes", c.num_classes},
              {"patch_len", c.patch_len},
              {"patch_stride", c.patch_stride},
              {"model_dim", c.model_dim},
              {"text_dim", c.text_dim},
              {"heads", c.heads},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"momentum", c.momentum},
              {"patience", c.patience},
              {"seed", c.seed},
              {"positional_embedding", c.positional_embedding},
              {"text_enabled", c.text_enabled},
              {"text_backend", to_string(c.text_backend)},
              {"hash_vocab", c.hash_vocab}};
}

EncoderConfig config_from_json(const json& j) {
  EncoderConfig c;
  c.window_len = j.at("window_len").get<int>();
  c.num_channels = j.at("num_channels").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.patch_len = j.at("patch_len").get<int>();
  c.patch_stride = j.at("patch_stride").get<int>();
  c.model_dim = j.at("model_dim").get<int>();
  c.text_dim = j.at("text_dim").get<int>();
  c.heads = j.at("heads").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.patience = j.at("patience").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.positional_embedding = j.at("positional_embedding").get<bool>();
  c.text_enabled = j.at("text_enabled").get<bool>();
  c.text_backend = parse_text_backend(j.at("text_backend").get<std::string>());
  c.hash_vocab = j.at("hash_vocab").get<int>();
  c.validate();
  return c;
}

json params_to_json(const EncoderParams& p) {
  json matrices;
  matrices["w_time"] = matrix_to_json(p.w_time);
  matrices["w_text"] = matrix_to_json(p.w_text);
  for (std::size_t h = 0; h < p.w_query.size(); ++h) {
    matrices["w_query." + std::to_string(h)] = matrix_to_json(p.w_query[h]);
    matrices["w_key." + std::to_string(h)] = matrix_to_json(p.w_key[h]);
    matrices["w_value." + std::to_string(h)] = matrix_to_json(p.w_value[h]);
  }
  matrices["w_heads"] = matrix_to_json(p.w_heads);
  matrices["w_out"] = matrix_to_json(p.w_out);
  matrices["positional"] = matrix_to_json(p.positional);
  matrices["token_table"] = matrix_to_json(p.token_table);
  return json{{"format", "timecap-checkpoint"},
              {"version", 1},
              {"config", config_to_json(p.config)},
              {"matrices", std::move(matrices)}};
}

EncoderParams params_from_json(const json& j) {
  if (j.at("format").get<std::string>() != "timecap-checkpoint" || j.at("version").get<int>() != 1) {
    fail(ErrorCode::invalid_input, "checkpoint: unknown container format");
  }
  EncoderParams p;
  p.config = config_from_json(j.at("config"));
  const json& m = j.at("matrices");
  p.w_time = matrix_from_json(m.at("w_time"));
  p.w_text = matrix_from_json(m.at("w_text"));
  for (int h = 0; h < p.config.heads; ++h) {
    p.w_query.push_back(matrix_from_json(m.at("w_query." + std::to_string(h))));
    p.w_key.push_back(matrix_from_json(m.at("w_key." + std::to_string(h))));
    p.w_value.push_back(matrix_from_json(m.at("w_value." + std::to_string(h))));
  }
  p.w_heads = matrix_from_json(m.at("w_heads"));
  p.w_out = matrix_from_json(m.at("w_out"));
  p.positional = matrix_from_json(m.at("positional"));
  p.token_table = matrix_from_json(m.at("token_table"));
  return p;
}

}  // namespace

std::string params_digest(const EncoderParams& params) {
  return sha256_hex(params_to_json(params).dump());
}

void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path,
                     const std::string& config_digest, std::uint64_t seed) {
  json j = params_to_json(params);
  j["digest"] = sha256_hex(params_to_json(params).dump());
  j["config_digest"] = config_digest;
  j["seed"] = seed;
  std::ofstream out(path);
  if (!out) fail(ErrorCode::internal, "cannot write checkpoint " + path.string());
  out << j.dump(1) << '\n';
}

EncoderParams load_checkpoint(const std::filesystem::path& path, std::string* config_digest,
                              std::string* digest) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::missing_artifact, "missing checkpoint file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::invalid_input, "checkpoint " + path.string() + ": " + e.what());
  }
  EncoderParams params = params_from_json(j);
  const std::string recomputed = sha256_hex(params_to_json(params).dump());
  if (j.contains("digest") && j.at("digest").get<std::string>() != recomputed) {
    fail(ErrorCode::invalid_input, "checkpoint " + path.string() + ": digest mismatch");
  }
  if (config_digest && j.contains("config_digest")) {
    *config_digest = j.at("config_digest").get<std::string>();
  }
  if (digest) *digest = recomputed;
  return params;
}

void write_training_log(const std::vector<EpochRecord>& log, const std::filesystem::path& path,
                        const std::string& config_digest, std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::internal, "cannot write training log " + path.string());
  const json header = {{"type", "timecap-train-log"},
                       {"version", 1},
                       {"config_digest", config_digest},
                       {"seed", seed}};
  out << header.dump() << '\n';
  for (const EpochRecord& r : log) {
    const json line = {{"epoch", r.epoch},
                       {"train_loss", r.train_loss},
                       {"val_macro_f1", r.val_macro_f1},
                       {"improved", r.improved}};
    out << line.dump() << '\n';
  }
}

}  // namespace timecap::encoder
