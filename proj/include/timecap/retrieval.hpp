#pragma once

#include "timecap/core.hpp"
#include "timecap/encoder.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace timecap::retrieval {

/// Training-set embeddings with aligned summaries and labels, tied to the
/// encoder checkpoint that produced them.
struct EmbeddingStore {
  Matrix embeddings;  // |T| x (d*C)
  std::vector<std::string> ids;
  std::vector<std::string> summaries;
  std::vector<ClassLabel> labels;
  std::string encoder_digest;
  int num_classes = 0;

  Eigen::Index size() const { return embeddings.rows(); }
  void validate() const;
};

EmbeddingStore build_store(const encoder::EncoderParams& params,
                           const std::vector<Sample>& train_samples,
                           gateway::EmbeddingProvider* external = nullptr);

struct Neighbor {
  int index = 0;        // row in the store
  double distance = 0;  // Euclidean
};

/// Exact exhaustive top-k by ascending Euclidean distance; ties broken by
/// lower store index. k larger than the store is clamped (flagged via
/// `clamped`). `exclude_id` drops the query's own entry when it is a
/// training sample.
std::vector<Neighbor> nn_k(const EmbeddingStore& store, const Vector& query, int k,
                           std::optional<std::string> exclude_id = std::nullopt,
                           bool* clamped = nullptr);

/// Table-5 baseline: modal label of the k nearest neighbors, ties to the
/// lowest class index.
ClassLabel knn_majority(const EmbeddingStore& store, const Vector& query, int k);

/// Seed-deterministic uniform sample of k distinct indices from [0, n).
std::vector<int> random_k(std::size_t n, int k, std::uint64_t seed);

void save_store(const EmbeddingStore& store, const std::filesystem::path& path,
                const std::string& config_digest, std::uint64_t seed);

/// Reload; `expected_encoder_digest` (when given) is the staleness guard.
EmbeddingStore load_store(const std::filesystem::path& path,
                          const std::optional<std::string>& expected_encoder_digest = std::nullopt,
                          std::string* config_digest = nullptr);

}  // namespace timecap::retrieval
