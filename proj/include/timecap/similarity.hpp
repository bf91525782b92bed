#pragma once

#include "timecap/core.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace timecap::eval {

/// Classic dynamic-time-warping distance with cost |a_i - b_j| and
/// steps {down, right, diagonal}; no window constraint.
double dtw_distance(const Vector& a, const Vector& b);

/// Pairwise cosine similarity of tf-idf vectors. tf = raw count,
/// idf = ln(n / df) + 1, vectors L2-normalized. Tokenization matches the
/// hashed bag-of-words backend.
Matrix tfidf_cosine(const std::vector<std::string>& documents);

struct SimilarityMatrices {
  Matrix time_sim;  // negative DTW, averaged over channels; diagonal 0
  Matrix text_sim;  // tf-idf cosine; diagonal 1 for non-empty docs
};

SimilarityMatrices similarity_matrices(std::span<const Sample> samples);

/// Plot-data export: whitespace-delimited matrix rows, with an optional
/// '#'-prefixed provenance comment.
void write_matrix(const Matrix& m, const std::filesystem::path& path,
                  const std::string& comment = "");

}  // namespace timecap::eval
