#include "aop/harness.hpp"

#include <doctest.h>

#include <fstream>

#include "aop/errors.hpp"
#include "aop/memory_store.hpp"
#include "support/builders.hpp"

using aop::DurationBucket;
using aop::PredictionRecord;
using aop::QuestionRecord;
using aop::ReasoningType;
using testsupport::TempDir;

namespace {

std::string dataset_line(const std::string& id, const std::string& video_id, int hops,
                         double duration, const std::string& type = "causal",
                         const std::string& answer = "A") {
  nlohmann::json j;
  j["id"] = id;
  j["video_id"] = video_id;
  j["question"] = "what happened?";
  j["options"] = {{{"letter", "A"}, {"text", "one"}}, {{"letter", "B"}, {"text", "two"}}};
  j["answer"] = answer;
  j["reasoning_type"] = type;
  j["hops"] = hops;
  j["video_duration_s"] = duration;
  return j.dump();
}

std::vector<QuestionRecord> synthetic_dataset(int two_hop, int three_hop, int four_hop) {
  std::vector<QuestionRecord> dataset;
  const char* types[] = {"causal", "referential", "hypothetical", "relational", "intent"};
  int i = 0;
  auto add = [&](int hops, int count) {
    for (int n = 0; n < count; ++n, ++i) {
      QuestionRecord q;
      q.id = "q" + std::to_string(i);
      q.video_id = "v" + std::to_string(i % 7);
      q.question = "?";
      q.options = {{'A', "one"}, {'B', "two"}};
      q.answer = 'A';
      q.reasoning_type = aop::reasoning_type_from_string(types[i % 5]);
      q.hops = hops;
      q.video_duration_s = 100.0 + (i % 3) * 120.0;  // spans all three buckets
      dataset.push_back(std::move(q));
    }
  };
  add(2, two_hop);
  add(3, three_hop);
  add(4, four_hop);
  return dataset;
}

}  // namespace

TEST_CASE("a valid dataset file loads record by record") {
  TempDir dir("dataset");
  const std::string path = (dir.path() / "d.jsonl").string();
  std::ofstream(path) << dataset_line("q1", "v1", 2, 100) << "\n"
                      << dataset_line("q2", "v1", 3, 200) << "\n"
                      << dataset_line("q3", "v2", 4, 400) << "\n";
  const auto dataset = aop::load_dataset(path);
  REQUIRE(dataset.size() == 3);
  CHECK(dataset[0].id == "q1");
  CHECK(dataset[2].hops == 4);
}

TEST_CASE("dataset schema violations name the line and field") {
  TempDir dir("dataset2");
  const std::string path = (dir.path() / "d.jsonl").string();

  SUBCASE("hops outside the enum") {
    std::ofstream(path) << dataset_line("q1", "v1", 5, 100) << "\n";
    try {
      aop::load_dataset(path);
      FAIL("expected a parse error");
    } catch (const aop::Error& e) {
      CHECK(std::string(e.what()).find(":1:") != std::string::npos);
      CHECK(std::string(e.what()).find("hops") != std::string::npos);
    }
  }

  SUBCASE("duplicate ids are rejected") {
    std::ofstream(path) << dataset_line("q1", "v1", 2, 100) << "\n"
                        << dataset_line("q1", "v1", 2, 100) << "\n";
    try {
      aop::load_dataset(path);
      FAIL("expected a parse error");
    } catch (const aop::Error& e) {
      CHECK(std::string(e.what()).find("duplicate id") != std::string::npos);
    }
  }

  SUBCASE("answers must be among the options") {
    std::ofstream(path) << dataset_line("q1", "v1", 2, 100, "causal", "Z") << "\n";
    CHECK_THROWS_AS(aop::load_dataset(path), aop::Error);
  }

  SUBCASE("unknown reasoning types are rejected") {
    std::ofstream(path) << dataset_line("q1", "v1", 2, 100, "magical") << "\n";
    CHECK_THROWS_AS(aop::load_dataset(path), aop::Error);
  }
}

TEST_CASE("duration buckets split at 150 and 300 seconds") {
  CHECK(aop::bucket_for_duration(149.9) == DurationBucket::Short);
  CHECK(aop::bucket_for_duration(150.0) == DurationBucket::Medium);
  CHECK(aop::bucket_for_duration(300.0) == DurationBucket::Medium);
  CHECK(aop::bucket_for_duration(300.1) == DurationBucket::Long);
}

TEST_CASE("score counts absent predictions as incorrect") {
  const auto dataset = synthetic_dataset(3, 1, 1);
  std::vector<PredictionRecord> predictions;
  predictions.push_back({"q0", 'A', 1, {}});   // correct
  predictions.push_back({"q1", 'B', 1, {}});   // wrong
  predictions.push_back({"q2", {}, 0, {}});    // unanswered
  // q3 and q4 have no prediction records at all.

  const auto report = aop::score(dataset, predictions);
  CHECK(report.overall.total == 5);
  CHECK(report.overall.correct == 1);

  int type_total = 0, bucket_total = 0, hops_total = 0;
  int type_correct = 0, bucket_correct = 0, hops_correct = 0;
  for (const auto& [_, cell] : report.by_type) {
    type_total += cell.total;
    type_correct += cell.correct;
  }
  for (const auto& [_, cell] : report.by_bucket) {
    bucket_total += cell.total;
    bucket_correct += cell.correct;
  }
  for (const auto& [_, cell] : report.by_hops) {
    hops_total += cell.total;
    hops_correct += cell.correct;
  }
  CHECK(type_total == 5);
  CHECK(bucket_total == 5);
  CHECK(hops_total == 5);
  CHECK(type_correct == 1);
  CHECK(bucket_correct == 1);
  CHECK(hops_correct == 1);
}

TEST_CASE("all-correct predictions report 100.00 in every populated cell") {
  const auto dataset = synthetic_dataset(4, 3, 2);
  std::vector<PredictionRecord> predictions;
  for (const auto& q : dataset) predictions.push_back({q.id, q.answer, 1, {}});
  const auto report = aop::score(dataset, predictions);
  CHECK(aop::format_pct(report.overall.correct, report.overall.total) == "100.00");
  const auto j = report.to_json();
  for (const auto& section : {"by_type", "by_duration", "by_hops"}) {
    for (const auto& [_, cell] : j[section].items()) {
      if (cell["total"].get<int>() > 0) CHECK(cell["accuracy"] == "100.00");
    }
  }
}

TEST_CASE("score is invariant under prediction permutation") {
  const auto dataset = synthetic_dataset(4, 2, 2);
  std::vector<PredictionRecord> predictions;
  for (const auto& q : dataset) {
    predictions.push_back({q.id, q.hops == 2 ? 'A' : 'B', 1, {}});
  }
  const auto report1 = aop::score(dataset, predictions);
  std::reverse(predictions.begin(), predictions.end());
  const auto report2 = aop::score(dataset, predictions);
  CHECK(report1.to_json() == report2.to_json());
}

TEST_CASE("scoring rejects unknown and duplicate prediction ids") {
  const auto dataset = synthetic_dataset(1, 0, 0);
  CHECK_THROWS_AS(aop::score(dataset, {{"nope", 'A', 1, {}}}), aop::Error);
  CHECK_THROWS_AS(
      aop::score(dataset, {{"q0", 'A', 1, {}}, {"q0", 'B', 1, {}}}), aop::Error);
}

TEST_CASE("percentages print with two decimals") {
  CHECK(aop::format_pct(274, 519) == "52.79");
  CHECK(aop::format_pct(519, 519) == "100.00");
  CHECK(aop::format_pct(0, 519) == "0.00");
}

TEST_CASE("dataset_stats reproduces the aggregate hop arithmetic") {
  const auto dataset = synthetic_dataset(295, 138, 86);
  const auto stats = aop::dataset_stats(dataset);
  CHECK(stats.total == 519);
  CHECK(stats.by_hops.at(2) == 295);
  CHECK(stats.by_hops.at(3) == 138);
  CHECK(stats.by_hops.at(4) == 86);
  // (590 + 414 + 344) / 519 = 2.5973... which reports as 2.60.
  CHECK(stats.to_json()["mean_hops"] == "2.60");

  const auto single = dataset_stats(synthetic_dataset(1, 0, 0));
  CHECK(single.to_json()["mean_hops"] == "2.00");

  CHECK_THROWS_AS(aop::dataset_stats({}), aop::Error);
}

TEST_CASE("predictions round-trip through their file format") {
  TempDir dir("pred");
  const std::string path = (dir.path() / "p.jsonl").string();
  std::vector<PredictionRecord> predictions;
  predictions.push_back({"q1", 'C', 2, std::string("traces/q1.json")});
  predictions.push_back({"q2", {}, 0, {}});
  aop::store_predictions(predictions, path);

  const auto loaded = aop::load_predictions(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].predicted == 'C');
  CHECK(loaded[0].trace_ref == std::string("traces/q1.json"));
  CHECK(loaded[1].predicted == std::optional<char>{});
}

namespace {

// A two-video fixture with planted evidence plus scripted chat rules that
// answer correctly whenever the planted content reaches the model.
struct EvalFixture {
  TempDir root{"evalroot"};
  std::vector<QuestionRecord> dataset;
  aop::ScriptedChatBackend chat;

  EvalFixture() {
    for (int v = 0; v < 2; ++v) {
      aop::BagOfWordsEmbedder embedder(256);
      std::vector<testsupport::SegmentSpec> specs;
      for (int s = 0; s < 5; ++s) {
        specs.push_back({"video " + std::to_string(v) + " filler scene " + std::to_string(s),
                         {"filler"},
                         {},
                         {}});
      }
      specs[3] = {"the planted event of video " + std::to_string(v),
                  {"planted", "marker" + std::to_string(v)},
                  {"a marked visual event"},
                  {}};
      auto memory = testsupport::make_memory(specs, embedder, 10.0,
                                             "vid" + std::to_string(v));
      nlohmann::json info;
      info["provider"] = "bag_of_words";
      info["dimension"] = embedder.dimension();
      info["vocabulary"] = embedder.vocabulary();
      memory.embedder_info = info.dump();
      aop::store_memory(memory, (root.path() / memory.video_id).string());

      QuestionRecord q;
      q.id = "q" + std::to_string(v);
      q.video_id = memory.video_id;
      q.question = "where is marker" + std::to_string(v) + "?";
      q.options = {{'A', "segment four"}, {'B', "nowhere"}};
      q.answer = 'A';
      q.reasoning_type = ReasoningType::Referential;
      q.hops = 2;
      q.video_duration_s = 50.0 + v * 300.0;
      dataset.push_back(std::move(q));
    }

    // Each rule keys on a marker unique to one prompt template.
    chat.add_rule("Choose exactly one tool call",
                  testsupport::plan_response("keyword", {{"query", "planted marker"},
                                                         {"k", 1}}));
    chat.add_rule("Evidence segments (temporal order)", "ANSWER: A");
    chat.add_rule("Newly observed segments",
                  testsupport::verdict_response({{4, 9}}, "answer"));
  }

  aop::EmbedderResolver resolver() const {
    return [](const aop::HierarchicalMemory& memory)
               -> std::shared_ptr<aop::EmbeddingBackend> {
      const auto info = nlohmann::json::parse(memory.embedder_info);
      auto embedder =
          std::make_shared<aop::BagOfWordsEmbedder>(info["dimension"].get<int>());
      embedder->preload_vocabulary(info["vocabulary"].get<std::vector<std::string>>());
      return embedder;
    };
  }
};

}  // namespace

TEST_CASE("run_eval answers planted questions deterministically") {
  EvalFixture fixture;
  aop::EvalOptions options;
  options.memory_root = fixture.root.str();
  options.workers = 1;

  const auto predictions =
      aop::run_eval(fixture.dataset, fixture.chat, fixture.resolver(), options);
  REQUIRE(predictions.size() == 2);
  for (const auto& p : predictions) {
    CHECK(p.predicted == 'A');
    CHECK(p.rounds_used == 1);
  }
  const auto report = aop::score(fixture.dataset, predictions);
  CHECK(report.overall.correct == 2);
}

TEST_CASE("a missing memory yields a failure record without aborting") {
  EvalFixture fixture;
  QuestionRecord orphan = fixture.dataset[0];
  orphan.id = "orphan";
  orphan.video_id = "no-such-video";
  auto dataset = fixture.dataset;
  dataset.push_back(orphan);

  aop::EvalOptions options;
  options.memory_root = fixture.root.str();
  const auto predictions = aop::run_eval(dataset, fixture.chat, fixture.resolver(), options);
  REQUIRE(predictions.size() == 3);
  CHECK(predictions[0].predicted == 'A');
  CHECK(predictions[1].predicted == 'A');
  CHECK(predictions[2].predicted == std::optional<char>{});
}

TEST_CASE("worker count does not change the predictions") {
  EvalFixture fixture;
  aop::EvalOptions serial;
  serial.memory_root = fixture.root.str();
  serial.workers = 1;
  const auto p1 = aop::run_eval(fixture.dataset, fixture.chat, fixture.resolver(), serial);

  aop::EvalOptions parallel = serial;
  parallel.workers = 4;
  const auto p2 = aop::run_eval(fixture.dataset, fixture.chat, fixture.resolver(), parallel);

  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i].id == p2[i].id);
    CHECK(p1[i].predicted == p2[i].predicted);
    CHECK(p1[i].rounds_used == p2[i].rounds_used);
  }
}

TEST_CASE("direct mode asks one question with the transcript and no tools") {
  EvalFixture fixture;
  aop::ScriptedChatBackend direct_chat;
  direct_chat.add_rule("Transcript:", "ANSWER: A");

  aop::EvalOptions options;
  options.memory_root = fixture.root.str();
  options.mode = aop::EvalMode::Direct;
  TempDir traces("traces");
  options.trace_dir = traces.str();

  const auto predictions =
      aop::run_eval(fixture.dataset, direct_chat, fixture.resolver(), options);
  REQUIRE(predictions.size() == 2);
  CHECK(predictions[0].predicted == 'A');
  CHECK(predictions[0].rounds_used == 0);
  CHECK(direct_chat.calls() == 2);  // exactly one call per question

  REQUIRE(predictions[0].trace_ref.has_value());
  std::ifstream trace_file(*predictions[0].trace_ref);
  nlohmann::json trace;
  trace_file >> trace;
  CHECK(trace["mode"] == "direct");
  CHECK_FALSE(trace.contains("rounds"));  // no tool calls anywhere
}
