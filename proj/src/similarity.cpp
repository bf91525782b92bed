#include "timecap/similarity.hpp"

#include <cmath>
#include <fstream>
#include <map>

namespace timecap::eval {

double dtw_distance(const Vector& a, const Vector& b) {
  const Eigen::Index m = a.size();
  const Eigen::Index n = b.size();
  if (m == 0 || n == 0) {
    fail(ErrorCode::invalid_input, "dtw_distance: empty input");
  }
  constexpr double inf = std::numeric_limits<double>::infinity();
  Matrix d = Matrix::Constant(m + 1, n + 1, inf);
  d(0, 0) = 0.0;
  for (Eigen::Index i = 1; i <= m; ++i) {
    for (Eigen::Index j = 1; j <= n; ++j) {
      const double cost = std::abs(a(i - 1) - b(j - 1));
      d(i, j) = cost + std::min({d(i - 1, j), d(i, j - 1), d(i - 1, j - 1)});
    }
  }
  return d(m, n);
}

Matrix tfidf_cosine(const std::vector<std::string>& documents) {
  const std::size_t n = documents.size();
  if (n == 0) {
    fail(ErrorCode::invalid_input, "tfidf_cosine: empty corpus");
  }

  // Vocabulary with document frequencies.
  std::map<std::string, int> df;
  std::vector<std::map<std::string, int>> tf(n);
  bool any_tokens = false;
  for (std::size_t i = 0; i < n; ++i) {
    for (const std::string& tok : tokenize(documents[i])) {
      if (tf[i][tok]++ == 0) ++df[tok];
      any_tokens = true;
    }
  }
  if (!any_tokens) {
    fail(ErrorCode::invalid_input, "tfidf_cosine: all documents empty");
  }

  std::map<std::string, int> vocab_index;
  int next = 0;
  for (const auto& [tok, _] : df) vocab_index[tok] = next++;

  Matrix vectors = Matrix::Zero(static_cast<Eigen::Index>(n), next);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [tok, count] : tf[i]) {
      const double idf = std::log(static_cast<double>(n) / df[tok]) + 1.0;
      vectors(static_cast<Eigen::Index>(i), vocab_index[tok]) = count * idf;
    }
    const double norm = vectors.row(static_cast<Eigen::Index>(i)).norm();
    if (norm > 0) vectors.row(static_cast<Eigen::Index>(i)) /= norm;
  }
  return vectors * vectors.transpose();
}

SimilarityMatrices similarity_matrices(std::span<const Sample> samples) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  if (n == 0) {
    fail(ErrorCode::invalid_input, "similarity_matrices: no samples");
  }

  SimilarityMatrices out;
  out.time_sim = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Matrix& a = samples[static_cast<std::size_t>(i)].window.raw();
      const Matrix& b = samples[static_cast<std::size_t>(j)].window.raw();
      if (a.cols() != b.cols()) {
        fail(ErrorCode::invalid_input, "similarity_matrices: channel mismatch");
      }
      double total = 0.0;
      for (Eigen::Index c = 0; c < a.cols(); ++c) {
        total += dtw_distance(a.col(c), b.col(c));
      }
      const double sim = -total / static_cast<double>(a.cols());
      out.time_sim(i, j) = sim;
      out.time_sim(j, i) = sim;
    }
  }

  std::vector<std::string> docs;
  docs.reserve(samples.size());
  for (const Sample& s : samples) {
    docs.push_back(s.summary ? s.summary->text : std::string());
  }
  out.text_sim = tfidf_cosine(docs);
  return out;
}

void write_matrix(const Matrix& m, const std::filesystem::path& path,
                  const std::string& comment) {
  std::ofstream out(path);
  if (!out) {
    fail(ErrorCode::internal, "cannot write " + path.string());
  }
  if (!comment.empty()) out << "# " << comment << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ' ';
      out << format_double(m(i, j), 9);
    }
    out << '\n';
  }
}

}  // namespace timecap::eval
