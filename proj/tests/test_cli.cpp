#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "timecap/cli.hpp"

#include "timecap/artifacts.hpp"

#include "testutil.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

using namespace timecap;

namespace {

const std::string kConfig = std::string(TIMECAP_SOURCE_DIR) + "/configs/toy_mock.conf";

int run_cli(std::vector<std::string> args, std::string* stderr_text = nullptr) {
  std::stringstream captured_err, captured_out;
  auto* old_err = std::cerr.rdbuf(captured_err.rdbuf());
  auto* old_out = std::cout.rdbuf(captured_out.rdbuf());
  const int code = cli::run(args);
  std::cerr.rdbuf(old_err);
  std::cout.rdbuf(old_out);
  if (stderr_text) *stderr_text = captured_err.str();
  return code;
}

int run_toy(const std::string& command, const std::filesystem::path& out,
            std::vector<std::string> extra = {}, std::string* stderr_text = nullptr) {
  std::vector<std::string> args = {command, "--config", kConfig, "--out", out.string()};
  args.insert(args.end(), extra.begin(), extra.end());
  return run_cli(std::move(args), stderr_text);
}

std::size_t cache_file_count(const std::filesystem::path& out) {
  const auto dir = out / "cache";
  if (!std::filesystem::exists(dir)) return 0;
  std::size_t n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("argument errors exit with code 2") {
  CHECK(run_cli({"ingest"}) == 2);                         // no --config
  CHECK(run_cli({"frobnicate", "--config", kConfig}) == 2);  // unknown command
  CHECK(run_cli({"ingest", "--config", "/nonexistent.conf"}) == 2);
  CHECK(run_cli({}) == 2);
}

TEST_CASE("full mock pipeline produces every artifact") {
  const auto out = testutil::fresh_dir("cli_full");
  CHECK(run_toy("ingest", out) == 0);
  CHECK(run_toy("contextualize", out) == 0);
  CHECK(run_toy("train", out) == 0);
  CHECK(run_toy("embed", out) == 0);
  CHECK(run_toy("predict", out) == 0);
  CHECK(run_toy("evaluate", out) == 0);

  for (const char* name : {"windows.jsonl", "summaries.jsonl", "checkpoint.json",
                           "train_log.jsonl", "store.json", "predictions.jsonl", "metrics.csv"}) {
    CHECK(std::filesystem::exists(out / name));
  }

  const auto windows = artifacts::load_windows(out / "windows.jsonl");
  CHECK(windows.samples.size() == 60);
  CHECK(windows.split("train").size() == 36);
  CHECK(windows.normalized);

  const auto predictions = artifacts::load_predictions(out / "predictions.jsonl");
  CHECK(predictions.records.size() == 12);
  CHECK(predictions.mode == "timecap");
  for (const auto& r : predictions.records) {
    CHECK(r.fused.size() == 2);
    CHECK(std::abs(r.fused.sum() - 1.0) < 1e-9);
  }
}

TEST_CASE("predict without a checkpoint exits 3 and names the missing file") {
  const auto out = testutil::fresh_dir("cli_missing");
  REQUIRE(run_toy("ingest", out) == 0);
  REQUIRE(run_toy("contextualize", out) == 0);

  std::string err;
  CHECK(run_toy("predict", out, {"--mode", "timecap"}, &err) == 3);
  CHECK(err.find("checkpoint.json") != std::string::npos);
}

TEST_CASE("timecp mode needs no trained artifacts") {
  const auto out = testutil::fresh_dir("cli_timecp");
  REQUIRE(run_toy("ingest", out) == 0);
  REQUIRE(run_toy("contextualize", out) == 0);
  CHECK(run_toy("predict", out, {"--mode", "timecp"}) == 0);
  CHECK(run_toy("evaluate", out, {"--mode", "timecp"}) == 0);

  const auto predictions = artifacts::load_predictions(out / "predictions.jsonl");
  CHECK(predictions.mode == "timecp");
  for (const auto& r : predictions.records) {
    CHECK(!r.encoder_dist.has_value());
    CHECK(r.retrieved_ids.empty());
  }
}

TEST_CASE("contextualize resumes from a truncated summaries file using the cache") {
  const auto out = testutil::fresh_dir("cli_resume");
  REQUIRE(run_toy("ingest", out) == 0);
  REQUIRE(run_toy("contextualize", out) == 0);
  const std::string full = testutil::read_file(out / "summaries.jsonl");
  CHECK(cache_file_count(out) == 60);

  // simulate an interrupted run: keep the header and the first 30 records,
  // and wipe the cache so provider calls become observable as cache writes
  std::filesystem::remove_all(out / "cache");
  {
    std::istringstream stream(full);
    std::ofstream truncated(out / "summaries.jsonl");
    std::string line;
    for (int i = 0; i < 31 && std::getline(stream, line); ++i) {
      truncated << line << '\n';
    }
  }

  REQUIRE(run_toy("contextualize", out) == 0);
  CHECK(testutil::read_file(out / "summaries.jsonl") == full);
  // only the 30 missing samples hit the provider
  CHECK(cache_file_count(out) == 30);

  // rerunning with a complete file is a no-op regeneration, byte-identical
  REQUIRE(run_toy("contextualize", out) == 0);
  CHECK(testutil::read_file(out / "summaries.jsonl") == full);
  CHECK(cache_file_count(out) == 30);
}

TEST_CASE("stale upstream artifacts are refused with exit 3") {
  const auto out = testutil::fresh_dir("cli_stale");
  REQUIRE(run_toy("ingest", out) == 0);

  // summaries generated under a different provider model are stale
  REQUIRE(run_toy("contextualize", out) == 0);
  std::string err;
  CHECK(run_toy("train", out, {"--model", "mock-2"}, &err) == 3);
  CHECK(err.find("summaries.jsonl") != std::string::npos);

  // windows generated under a different dataset digest are stale too:
  // regenerate summaries with the new model, then corrupt the windows digest
  REQUIRE(run_toy("contextualize", out, {"--model", "mock-2"}) == 0);
  auto windows = artifacts::load_windows(out / "windows.jsonl");
  windows.config_digest = "stale";
  artifacts::save_windows(windows, out / "windows.jsonl");
  CHECK(run_toy("train", out, {"--model", "mock-2"}, &err) == 3);
}

TEST_CASE("rerunning commands regenerates byte-identical artifacts") {
  const auto out = testutil::fresh_dir("cli_idem");
  REQUIRE(run_toy("ingest", out) == 0);
  const std::string windows_a = testutil::read_file(out / "windows.jsonl");
  REQUIRE(run_toy("ingest", out) == 0);
  CHECK(testutil::read_file(out / "windows.jsonl") == windows_a);

  REQUIRE(run_toy("contextualize", out) == 0);
  REQUIRE(run_toy("train", out) == 0);
  const std::string checkpoint_a = testutil::read_file(out / "checkpoint.json");
  REQUIRE(run_toy("train", out) == 0);
  CHECK(testutil::read_file(out / "checkpoint.json") == checkpoint_a);
}

TEST_CASE("ablate requires the time_only artifacts") {
  const auto out = testutil::fresh_dir("cli_ablate_missing");
  REQUIRE(run_toy("ingest", out) == 0);
  REQUIRE(run_toy("contextualize", out) == 0);
  REQUIRE(run_toy("train", out) == 0);
  REQUIRE(run_toy("embed", out) == 0);

  std::string err;
  CHECK(run_toy("ablate", out, {}, &err) == 3);
  CHECK(err.find("checkpoint_time_only.json") != std::string::npos);

  REQUIRE(run_toy("train", out, {"--variant", "time_only"}) == 0);
  REQUIRE(run_toy("embed", out, {"--variant", "time_only"}) == 0);
  CHECK(run_toy("ablate", out) == 0);
  CHECK(std::filesystem::exists(out / "ablation.csv"));
  CHECK(std::filesystem::exists(out / "ablation_plot.dat"));

  // 3 samplers x 2 fusions = 6 data rows after the 4 header lines
  std::istringstream csv(testutil::read_file(out / "ablation.csv"));
  int rows = 0;
  std::string line;
  while (std::getline(csv, line)) {
    if (!line.empty() && line[0] != '#' && line.rfind("sampler,", 0) != 0) ++rows;
  }
  CHECK(rows == 6);
}

TEST_CASE("interpret writes rationale records") {
  const auto out = testutil::fresh_dir("cli_interpret");
  REQUIRE(run_toy("ingest", out) == 0);
  REQUIRE(run_toy("contextualize", out) == 0);
  REQUIRE(run_toy("train", out) == 0);
  REQUIRE(run_toy("embed", out) == 0);
  CHECK(run_toy("interpret", out) == 0);

  const std::string text = testutil::read_file(out / "interpretations.jsonl");
  CHECK(text.find("rationale") != std::string::npos);
}
