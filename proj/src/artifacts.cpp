#include "timecap/artifacts.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace timecap::artifacts {

using nlohmann::json;

namespace {

json matrix_rows(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_rows(const json& rows) {
  if (rows.empty()) fail(ErrorCode::invalid_input, "artifact: empty matrix");
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = static_cast<Eigen::Index>(rows.at(0).size());
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const auto& row = rows.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != c) {
      fail(ErrorCode::invalid_input, "artifact: ragged matrix rows");
    }
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
  }
  return m;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Vector vector_from_json(const json& arr) {
  Vector v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) v(static_cast<Eigen::Index>(i)) = arr.at(i).get<double>();
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::internal, "cannot write " + path.string());
  return out;
}

json read_header(std::ifstream& in, const std::filesystem::path& path, const std::string& type) {
  std::string line;
  if (!std::getline(in, line)) {
    fail(ErrorCode::invalid_input, path.string() + ": empty artifact");
  }
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    fail(ErrorCode::invalid_input, path.string() + ": bad header: " + e.what());
  }
  if (header.value("type", "") != type) {
    fail(ErrorCode::invalid_input, path.string() + ": expected artifact type '" + type + "'");
  }
  return header;
}

}  // namespace

std::vector<Sample> WindowsFile::split(const std::string& name) const {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (split_of[i] == name) out.push_back(samples[i]);
  }
  return out;
}

void save_windows(const WindowsFile& file, const std::filesystem::path& path) {
  if (file.samples.size() != file.split_of.size()) {
    fail(ErrorCode::internal, "save_windows: split tags misaligned");
  }
  json header = {{"type", "timecap-windows"},
                 {"version", 1},
                 {"config_digest", file.config_digest},
                 {"seed", file.seed},
                 {"dataset", file.dataset_name},
                 {"domain_hint", file.domain_hint},
                 {"channels", file.channels},
                 {"resolution", to_string(file.resolution)},
                 {"class_names", file.class_names},
                 {"normalized", file.normalized}};
  if (file.normalized) {
    header["normalizer"] = {{"mean", vector_to_json(file.norm_mean)},
                            {"std", vector_to_json(file.norm_stddev)}};
  }
  if (file.threshold_used) header["threshold_used"] = *file.threshold_used;

  auto out = open_out(path);
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < file.samples.size(); ++i) {
    const Sample& s = file.samples[i];
    json line = {{"id", s.id},
                 {"start", format_timestamp(s.window.start_epoch_s)},
                 {"label", s.label.index},
                 {"split", file.split_of[i]},
                 {"values", matrix_rows(s.window.values)}};
    if (s.window.normalized) line["raw_values"] = matrix_rows(*s.window.raw_values);
    out << line.dump() << '\n';
  }
}

WindowsFile load_windows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::missing_artifact, "missing windows file: " + path.string());
  const json header = read_header(in, path, "timecap-windows");

  WindowsFile file;
  file.config_digest = header.at("config_digest").get<std::string>();
  file.seed = header.at("seed").get<std::uint64_t>();
  file.dataset_name = header.value("dataset", "");
  file.domain_hint = header.value("domain_hint", "");
  file.channels = header.at("channels").get<std::vector<std::string>>();
  file.resolution = parse_resolution(header.at("resolution").get<std::string>());
  file.class_names = header.at("class_names").get<std::vector<std::string>>();
  file.normalized = header.at("normalized").get<bool>();
  if (file.normalized) {
    file.norm_mean = vector_from_json(header.at("normalizer").at("mean"));
    file.norm_stddev = vector_from_json(header.at("normalizer").at("std"));
  }
  if (header.contains("threshold_used")) {
    file.threshold_used = header.at("threshold_used").get<double>();
  }

  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::invalid_input, path.string() + ": bad sample line: " + e.what());
    }
    Sample s;
    s.id = j.at("id").get<std::string>();
    s.label = ClassLabel{j.at("label").get<int>()};
    s.window.values = matrix_from_rows(j.at("values"));
    s.window.channel_names = file.channels;
    s.window.start_epoch_s = parse_timestamp(j.at("start").get<std::string>());
    s.window.resolution = file.resolution;
    if (j.contains("raw_values")) {
      s.window.raw_values = matrix_from_rows(j.at("raw_values"));
      s.window.normalized = true;
    }
    s.window.validate();
    file.samples.push_back(std::move(s));
    file.split_of.push_back(j.at("split").get<std::string>());
  }
  if (file.samples.empty()) {
    fail(ErrorCode::invalid_input, path.string() + ": no samples");
  }
  return file;
}

std::map<std::string, std::string> SummariesFile::by_id() const {
  std::map<std::string, std::string> map;
  for (const SummaryRecord& r : records) map[r.id] = r.summary;
  return map;
}

void save_summaries(const SummariesFile& file, const std::filesystem::path& path) {
  auto out = open_out(path);
  const json header = {{"type", "timecap-summaries"},
                       {"version", 1},
                       {"config_digest", file.config_digest},
                       {"seed", file.seed}};
  out << header.dump() << '\n';
  for (const SummaryRecord& r : file.records) {
    const json line = {
        {"id", r.id}, {"summary", r.summary}, {"provider", r.provider}, {"model", r.model}};
    out << line.dump() << '\n';
  }
}

SummariesFile load_summaries(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::missing_artifact, "missing summaries file: " + path.string());
  const json header = read_header(in, path, "timecap-summaries");

  SummariesFile file;
  file.config_digest = header.at("config_digest").get<std::string>();
  file.seed = header.at("seed").get<std::uint64_t>();
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::invalid_input, path.string() + ": bad summary line: " + e.what());
    }
    file.records.push_back({j.at("id").get<std::string>(), j.at("summary").get<std::string>(),
                            j.value("provider", ""), j.value("model", "")});
  }
  return file;
}

void save_predictions(const PredictionsFile& file, const std::filesystem::path& path) {
  auto out = open_out(path);
  const json header = {{"type", "timecap-predictions"},
                       {"version", 1},
                       {"config_digest", file.config_digest},
                       {"seed", file.seed},
                       {"mode", file.mode}};
  out << header.dump() << '\n';
  for (const PredictionRecord& r : file.records) {
    json line = {{"id", r.id},
                 {"summary", r.summary},
                 {"retrieved", r.retrieved_ids},
                 {"abstained", r.abstained},
                 {"fused", vector_to_json(r.fused)},
                 {"final_label", r.final_label}};
    line["llm_label"] = r.llm_label ? json(*r.llm_label) : json(nullptr);
    if (r.encoder_dist) line["encoder_dist"] = vector_to_json(*r.encoder_dist);
    if (!r.rationale.empty()) line["rationale"] = r.rationale;
    if (r.selected_example) line["selected_example"] = *r.selected_example;
    if (r.selected_id) line["selected_id"] = *r.selected_id;
    out << line.dump() << '\n';
  }
}

PredictionsFile load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::missing_artifact, "missing predictions file: " + path.string());
  const json header = read_header(in, path, "timecap-predictions");

  PredictionsFile file;
  file.config_digest = header.at("config_digest").get<std::string>();
  file.seed = header.at("seed").get<std::uint64_t>();
  file.mode = header.at("mode").get<std::string>();
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::invalid_input, path.string() + ": bad prediction line: " + e.what());
    }
    PredictionRecord r;
    r.id = j.at("id").get<std::string>();
    r.summary = j.value("summary", "");
    r.retrieved_ids = j.value("retrieved", std::vector<std::string>{});
    r.abstained = j.at("abstained").get<bool>();
    if (!j.at("llm_label").is_null()) r.llm_label = j.at("llm_label").get<int>();
    if (j.contains("encoder_dist")) r.encoder_dist = vector_from_json(j.at("encoder_dist"));
    r.fused = vector_from_json(j.at("fused"));
    r.final_label = j.at("final_label").get<int>();
    r.rationale = j.value("rationale", "");
    if (j.contains("selected_example")) r.selected_example = j.at("selected_example").get<int>();
    if (j.contains("selected_id")) r.selected_id = j.at("selected_id").get<std::string>();
    file.records.push_back(std::move(r));
  }
  return file;
}

void require_digest(const std::string& actual, const std::string& expected,
                    const std::filesystem::path& file, const std::string& what) {
  if (actual != expected) {
    fail(ErrorCode::missing_artifact,
         file.string() + ": stale artifact (" + what + " digest " + actual.substr(0, 12) +
             "... does not match current config " + expected.substr(0, 12) + "...)");
  }
}

}  // namespace timecap::artifacts
