#include "timecap/retrieval.hpp"

#include "timecap/digest.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>

namespace timecap::retrieval {

using nlohmann::json;

void EmbeddingStore::validate() const {
  const auto n = static_cast<std::size_t>(embeddings.rows());
  if (ids.size() != n || summaries.size() != n || labels.size() != n) {
    fail(ErrorCode::invalid_input, "EmbeddingStore: metadata rows do not match embedding rows");
  }
  if (num_classes < 2) {
    fail(ErrorCode::invalid_input, "EmbeddingStore: num_classes must be >= 2");
  }
}

EmbeddingStore build_store(const encoder::EncoderParams& params,
                           const std::vector<Sample>& train_samples,
                           gateway::EmbeddingProvider* external) {
  if (train_samples.empty()) {
    fail(ErrorCode::invalid_input, "build_store: empty training set");
  }
  EmbeddingStore store;
  store.embeddings = encoder::extract_embeddings(params, train_samples, external);
  for (const Sample& s : train_samples) {
    if (!s.summary) {
      fail(ErrorCode::invalid_input, "build_store: sample '" + s.id + "' has no summary");
    }
    store.ids.push_back(s.id);
    store.summaries.push_back(s.summary->text);
    store.labels.push_back(s.label);
  }
  store.encoder_digest = encoder::params_digest(params);
  store.num_classes = params.config.num_classes;
  store.validate();
  return store;
}

std::vector<Neighbor> nn_k(const EmbeddingStore& store, const Vector& query, int k,
                           std::optional<std::string> exclude_id, bool* clamped) {
  store.validate();
  if (k < 1) {
    fail(ErrorCode::invalid_input, "nn_k: k must be >= 1");
  }
  if (query.size() != store.embeddings.cols()) {
    fail(ErrorCode::invalid_input,
         "nn_k: query dimension " + std::to_string(query.size()) + " != store dimension " +
             std::to_string(store.embeddings.cols()));
  }

  std::vector<Neighbor> all;
  all.reserve(static_cast<std::size_t>(store.size()));
  for (Eigen::Index j = 0; j < store.size(); ++j) {
    if (exclude_id && store.ids[static_cast<std::size_t>(j)] == *exclude_id) continue;
    all.push_back({static_cast<int>(j), (query - store.embeddings.row(j).transpose()).norm()});
  }
  if (all.empty()) {
    fail(ErrorCode::invalid_input, "nn_k: store has no eligible entries");
  }

  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
  });

  if (k > static_cast<int>(all.size())) {
    if (clamped) *clamped = true;
    k = static_cast<int>(all.size());
  } else if (clamped) {
    *clamped = false;
  }
  all.resize(static_cast<std::size_t>(k));
  return all;
}

ClassLabel knn_majority(const EmbeddingStore& store, const Vector& query, int k) {
  const std::vector<Neighbor> neighbors = nn_k(store, query, k);
  std::vector<int> counts(static_cast<std::size_t>(store.num_classes), 0);
  for (const Neighbor& n : neighbors) {
    ++counts[static_cast<std::size_t>(store.labels[static_cast<std::size_t>(n.index)].index)];
  }
  int best = 0;
  for (int c = 1; c < store.num_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(best)]) best = c;
  }
  return ClassLabel{best};
}

std::vector<int> random_k(std::size_t n, int k, std::uint64_t seed) {
  if (k < 0 || static_cast<std::size_t>(k) > n) {
    fail(ErrorCode::invalid_input, "random_k: k out of range");
  }
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  Rng rng(seed);
  // Partial Fisher-Yates: the first k entries are a uniform sample.
  for (int i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(i) +
                   static_cast<std::size_t>(rng.next_below(n - static_cast<std::size_t>(i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

void save_store(const EmbeddingStore& store, const std::filesystem::path& path,
                const std::string& config_digest, std::uint64_t seed) {
  store.validate();
  json data = json::array();
  for (Eigen::Index r = 0; r < store.embeddings.rows(); ++r) {
    for (Eigen::Index c = 0; c < store.embeddings.cols(); ++c) {
      data.push_back(store.embeddings(r, c));
    }
  }
  json labels = json::array();
  for (const ClassLabel& l : store.labels) labels.push_back(l.index);
  const json j = {{"format", "timecap-store"},
                  {"version", 1},
                  {"rows", store.embeddings.rows()},
                  {"cols", store.embeddings.cols()},
                  {"embeddings", std::move(data)},
                  {"ids", store.ids},
                  {"summaries", store.summaries},
                  {"labels", std::move(labels)},
                  {"num_classes", store.num_classes},
                  {"encoder_digest", store.encoder_digest},
                  {"config_digest", config_digest},
                  {"seed", seed}};
  std::ofstream out(path);
  if (!out) fail(ErrorCode::internal, "cannot write store " + path.string());
  out << j.dump(1) << '\n';
}

EmbeddingStore load_store(const std::filesystem::path& path,
                          const std::optional<std::string>& expected_encoder_digest,
                          std::string* config_digest) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::missing_artifact, "missing store file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::invalid_input, "store " + path.string() + ": " + e.what());
  }
  if (j.at("format").get<std::string>() != "timecap-store") {
    fail(ErrorCode::invalid_input, "store " + path.string() + ": unknown container format");
  }

  EmbeddingStore store;
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("embeddings");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    fail(ErrorCode::invalid_input, "store " + path.string() + ": embedding payload mismatch");
  }
  store.embeddings.resize(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      store.embeddings(r, c) = data.at(i++).get<double>();
    }
  }
  store.ids = j.at("ids").get<std::vector<std::string>>();
  store.summaries = j.at("summaries").get<std::vector<std::string>>();
  for (const auto& l : j.at("labels")) store.labels.push_back(ClassLabel{l.get<int>()});
  store.num_classes = j.at("num_classes").get<int>();
  store.encoder_digest = j.at("encoder_digest").get<std::string>();
  store.validate();

  if (expected_encoder_digest && store.encoder_digest != *expected_encoder_digest) {
    fail(ErrorCode::missing_artifact,
         "store " + path.string() + " is stale: encoder digest mismatch (store " +
             store.encoder_digest.substr(0, 12) + "..., checkpoint " +
             expected_encoder_digest->substr(0, 12) + "...)");
  }
  if (config_digest && j.contains("config_digest")) {
    *config_digest = j.at("config_digest").get<std::string>();
  }
  return store;
}

}  // namespace timecap::retrieval
