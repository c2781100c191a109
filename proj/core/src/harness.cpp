#include "aop/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "aop/errors.hpp"
#include "aop/memory_store.hpp"
#include "aop/retrieval.hpp"

namespace aop {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr ReasoningType kAllTypes[] = {ReasoningType::Causal, ReasoningType::Referential,
                                       ReasoningType::Hypothetical,
                                       ReasoningType::Relational, ReasoningType::Intent};
constexpr DurationBucket kAllBuckets[] = {DurationBucket::Short, DurationBucket::Medium,
                                          DurationBucket::Long};

[[noreturn]] void dataset_error(const std::string& path, std::size_t line,
                                const std::string& what) {
  std::ostringstream os;
  os << path << ":" << line << ": " << what;
  raise(ErrorKind::Parse, os.str());
}

std::string format_2dp(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.2f", value);
  return buffer;
}

}  // namespace

const char* to_string(ReasoningType type) {
  switch (type) {
    case ReasoningType::Causal: return "causal";
    case ReasoningType::Referential: return "referential";
    case ReasoningType::Hypothetical: return "hypothetical";
    case ReasoningType::Relational: return "relational";
    case ReasoningType::Intent: return "intent";
  }
  return "unknown";
}

const char* to_string(DurationBucket bucket) {
  switch (bucket) {
    case DurationBucket::Short: return "short";
    case DurationBucket::Medium: return "medium";
    case DurationBucket::Long: return "long";
  }
  return "unknown";
}

ReasoningType reasoning_type_from_string(const std::string& name) {
  for (ReasoningType type : kAllTypes) {
    if (name == to_string(type)) return type;
  }
  raise(ErrorKind::Parse, "unknown reasoning_type: \"" + name + "\"");
}

DurationBucket bucket_for_duration(Seconds duration) {
  if (duration < 150.0) return DurationBucket::Short;
  if (duration <= 300.0) return DurationBucket::Medium;
  return DurationBucket::Long;
}

double BreakdownCell::accuracy_pct() const {
  if (total == 0) return 0.0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

std::string format_pct(int correct, int total) {
  if (total == 0) return "0.00";
  return format_2dp(100.0 * static_cast<double>(correct) / static_cast<double>(total));
}

std::vector<QuestionRecord> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Ingestion, "dataset not readable: " + path);

  std::vector<QuestionRecord> records;
  std::set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      dataset_error(path, line_no, std::string("invalid JSON: ") + e.what());
    }

    QuestionRecord record;
    auto require_string = [&](const char* key) -> std::string {
      if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty()) {
        dataset_error(path, line_no, std::string("field \"") + key +
                                         "\" missing or not a non-empty string");
      }
      return j[key].get<std::string>();
    };
    record.id = require_string("id");
    record.video_id = require_string("video_id");
    record.question = require_string("question");

    if (!j.contains("options") || !j["options"].is_array() || j["options"].size() < 2) {
      dataset_error(path, line_no, "field \"options\" must list at least two options");
    }
    for (const json& opt : j["options"]) {
      if (!opt.is_object() || !opt.contains("letter") || !opt.contains("text") ||
          !opt["letter"].is_string() || opt["letter"].get<std::string>().size() != 1 ||
          !opt["text"].is_string()) {
        dataset_error(path, line_no,
                      "field \"options\" entries must be {letter: single char, text}");
      }
      record.options.emplace_back(opt["letter"].get<std::string>()[0],
                                  opt["text"].get<std::string>());
    }

    const std::string answer = require_string("answer");
    if (answer.size() != 1) {
      dataset_error(path, line_no, "field \"answer\" must be a single letter");
    }
    record.answer = answer[0];
    if (std::none_of(record.options.begin(), record.options.end(),
                     [&](const auto& o) { return o.first == record.answer; })) {
      dataset_error(path, line_no, "field \"answer\" is not among the options");
    }

    try {
      record.reasoning_type = reasoning_type_from_string(require_string("reasoning_type"));
    } catch (const Error& e) {
      dataset_error(path, line_no, e.what());
    }

    if (!j.contains("hops") || !j["hops"].is_number_integer()) {
      dataset_error(path, line_no, "field \"hops\" missing or not an integer");
    }
    record.hops = j["hops"].get<int>();
    if (record.hops < 2 || record.hops > 4) {
      dataset_error(path, line_no, "field \"hops\" must be 2, 3 or 4");
    }

    if (!j.contains("video_duration_s") || !j["video_duration_s"].is_number()) {
      dataset_error(path, line_no, "field \"video_duration_s\" missing or not a number");
    }
    record.video_duration_s = j["video_duration_s"].get<double>();
    if (!(record.video_duration_s > 0.0)) {
      dataset_error(path, line_no, "field \"video_duration_s\" must be positive");
    }

    if (!seen_ids.insert(record.id).second) {
      dataset_error(path, line_no, "duplicate id \"" + record.id + "\"");
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<PredictionRecord> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Ingestion, "predictions not readable: " + path);
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      dataset_error(path, line_no, std::string("invalid JSON: ") + e.what());
    }
    PredictionRecord record;
    if (!j.contains("id") || !j["id"].is_string()) {
      dataset_error(path, line_no, "field \"id\" missing or not a string");
    }
    record.id = j["id"].get<std::string>();
    if (j.contains("predicted") && j["predicted"].is_string() &&
        j["predicted"].get<std::string>().size() == 1) {
      record.predicted = j["predicted"].get<std::string>()[0];
    }
    record.rounds_used = j.value("rounds_used", 0);
    if (j.contains("trace_ref") && j["trace_ref"].is_string()) {
      record.trace_ref = j["trace_ref"].get<std::string>();
    }
    out.push_back(std::move(record));
  }
  return out;
}

void store_predictions(const std::vector<PredictionRecord>& predictions,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) raise(ErrorKind::Ingestion, "cannot write predictions: " + path);
  for (const PredictionRecord& p : predictions) {
    json j;
    j["id"] = p.id;
    j["predicted"] = p.predicted ? json(std::string(1, *p.predicted)) : json(nullptr);
    j["rounds_used"] = p.rounds_used;
    if (p.trace_ref) j["trace_ref"] = *p.trace_ref;
    out << j.dump() << '\n';
  }
}

namespace {

struct LoadedVideo {
  std::shared_ptr<HierarchicalMemory> memory;
  std::shared_ptr<EmbeddingBackend> embedder;
  std::shared_ptr<ToolEngine> engine;
  std::string error;  // non-empty when the memory failed to load
};

std::string sanitize_filename(const std::string& id) {
  std::string out;
  for (char c : id) {
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  }
  return out;
}

std::string render_full_transcript(const HierarchicalMemory& memory) {
  std::ostringstream os;
  for (const FineClip& clip : memory.fine_clips) {
    if (clip.is_gap) continue;
    os << "[" << clip.start << "s-" << clip.end << "s] " << clip.text << "\n";
  }
  return os.str();
}

PredictionRecord eval_direct(const QuestionRecord& q, const LoadedVideo& video,
                             ChatBackend& chat, const EvalOptions& options) {
  std::ostringstream options_text;
  for (const auto& [letter, text] : q.options) {
    options_text << letter << ". " << text << "\n";
  }
  const std::string prompt = PromptLibrary::render(
      options.prompts.get("direct_inference"),
      {{"question", q.question},
       {"options", options_text.str()},
       {"global_description", video.memory->global_description},
       {"transcript", render_full_transcript(*video.memory)}});

  ChatRequest request;
  request.temperature = options.loop.planner_temperature;
  request.max_output_tokens = options.loop.max_output_tokens;
  request.messages.push_back({"user", prompt, {}});
  const std::string response = chat.chat(request);

  PredictionRecord record;
  record.id = q.id;
  record.predicted = extract_option_letter(response, q.options);
  record.rounds_used = 0;

  if (options.trace_dir) {
    json trace;
    trace["schema_version"] = "1";
    trace["mode"] = "direct";
    trace["question"] = q.question;
    trace["exchanges"] =
        json::array({{{"stage", "direct"}, {"prompt", prompt}, {"response", response}}});
    trace["extracted_option"] =
        record.predicted ? json(std::string(1, *record.predicted)) : json(nullptr);
    const fs::path path = fs::path(*options.trace_dir) / (sanitize_filename(q.id) + ".trace.json");
    std::ofstream out(path);
    out << trace.dump(2) << '\n';
    record.trace_ref = path.string();
  }
  return record;
}

PredictionRecord eval_agent(const QuestionRecord& q, const LoadedVideo& video,
                            ChatBackend& chat, const EvalOptions& options) {
  AgentLoop loop(*video.engine, chat, options.prompts, options.loop);
  AnswerResult result = loop.run(q.question, q.options);

  PredictionRecord record;
  record.id = q.id;
  record.rounds_used = result.rounds_used;
  if (result.ok) record.predicted = result.extracted_option;

  if (options.trace_dir) {
    const fs::path path = fs::path(*options.trace_dir) / (sanitize_filename(q.id) + ".trace.json");
    std::ofstream out(path);
    out << result.trace.dump(2) << '\n';
    record.trace_ref = path.string();
  }
  return record;
}

}  // namespace

std::vector<PredictionRecord> run_eval(const std::vector<QuestionRecord>& dataset,
                                       ChatBackend& chat, const EmbedderResolver& embedders,
                                       const EvalOptions& options) {
  if (options.workers < 1) raise(ErrorKind::Config, "workers must be >= 1");
  options.loop.validate();
  if (options.trace_dir) fs::create_directories(*options.trace_dir);

  // Load each referenced video once, sequentially, so workers only read.
  std::map<std::string, LoadedVideo> videos;
  for (const QuestionRecord& q : dataset) {
    if (videos.count(q.video_id)) continue;
    LoadedVideo video;
    try {
      const fs::path dir = fs::path(options.memory_root) / q.video_id;
      video.memory = std::make_shared<HierarchicalMemory>(load_memory(dir.string()));
      video.embedder = embedders(*video.memory);
      if (!video.embedder) {
        raise(ErrorKind::Config, "no embedding backend for video " + q.video_id);
      }
      video.engine =
          std::make_shared<ToolEngine>(*video.memory, *video.embedder, options.bm25);
    } catch (const Error& e) {
      video.error = e.what();
    }
    videos.emplace(q.video_id, std::move(video));
  }

  std::vector<PredictionRecord> results(dataset.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= dataset.size()) return;
      const QuestionRecord& q = dataset[i];
      const LoadedVideo& video = videos.at(q.video_id);
      PredictionRecord record;
      record.id = q.id;
      if (video.error.empty()) {
        try {
          record = options.mode == EvalMode::Direct ? eval_direct(q, video, chat, options)
                                                    : eval_agent(q, video, chat, options);
        } catch (const std::exception&) {
          record = PredictionRecord{};
          record.id = q.id;  // per-question failure: predicted stays absent
        }
      }
      results[i] = std::move(record);
    }
  };

  const int workers = std::min<int>(options.workers, static_cast<int>(dataset.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return results;
}

BreakdownReport score(const std::vector<QuestionRecord>& dataset,
                      const std::vector<PredictionRecord>& predictions) {
  std::map<std::string, const QuestionRecord*> by_id;
  for (const QuestionRecord& q : dataset) by_id[q.id] = &q;

  std::map<std::string, std::optional<char>> predicted;
  for (const PredictionRecord& p : predictions) {
    if (!by_id.count(p.id)) {
      raise(ErrorKind::Validation, "prediction for unknown question id \"" + p.id + "\"");
    }
    if (!predicted.emplace(p.id, p.predicted).second) {
      raise(ErrorKind::Validation, "duplicate prediction for id \"" + p.id + "\"");
    }
  }

  BreakdownReport report;
  for (ReasoningType type : kAllTypes) report.by_type[type];
  for (DurationBucket bucket : kAllBuckets) report.by_bucket[bucket];
  for (int hops : {2, 3, 4}) report.by_hops[hops];

  for (const QuestionRecord& q : dataset) {
    bool correct = false;
    auto it = predicted.find(q.id);
    if (it != predicted.end() && it->second && *it->second == q.answer) correct = true;

    auto tally = [&](BreakdownCell& cell) {
      cell.total += 1;
      if (correct) cell.correct += 1;
    };
    tally(report.overall);
    tally(report.by_type[q.reasoning_type]);
    tally(report.by_bucket[bucket_for_duration(q.video_duration_s)]);
    tally(report.by_hops[q.hops]);
  }
  return report;
}

std::string BreakdownReport::to_table() const {
  std::ostringstream os;
  os << "cell                  total  correct  accuracy\n";
  auto row = [&](const std::string& name, const BreakdownCell& cell) {
    char line[96];
    std::snprintf(line, sizeof(line), "%-21s %-6d %-8d %s\n", name.c_str(), cell.total,
                  cell.correct, format_pct(cell.correct, cell.total).c_str());
    os << line;
  };
  row("overall", overall);
  for (const auto& [type, cell] : by_type) row(std::string("type:") + to_string(type), cell);
  for (const auto& [bucket, cell] : by_bucket) {
    row(std::string("duration:") + to_string(bucket), cell);
  }
  for (const auto& [hops, cell] : by_hops) {
    row("hops:" + std::to_string(hops), cell);
  }
  return os.str();
}

nlohmann::json BreakdownReport::to_json() const {
  json j;
  auto cell_json = [](const BreakdownCell& cell) {
    return json{{"total", cell.total},
                {"correct", cell.correct},
                {"accuracy_pct", cell.accuracy_pct()},
                {"accuracy", format_pct(cell.correct, cell.total)}};
  };
  j["overall"] = cell_json(overall);
  for (const auto& [type, cell] : by_type) j["by_type"][to_string(type)] = cell_json(cell);
  for (const auto& [bucket, cell] : by_bucket) {
    j["by_duration"][to_string(bucket)] = cell_json(cell);
  }
  for (const auto& [hops, cell] : by_hops) {
    j["by_hops"][std::to_string(hops)] = cell_json(cell);
  }
  return j;
}

DatasetStats dataset_stats(const std::vector<QuestionRecord>& dataset) {
  if (dataset.empty()) {
    raise(ErrorKind::Precondition, "dataset_stats requires a non-empty dataset");
  }
  DatasetStats stats;
  stats.total = static_cast<int>(dataset.size());
  for (ReasoningType type : kAllTypes) stats.by_type[type] = 0;
  for (DurationBucket bucket : kAllBuckets) stats.by_bucket[bucket] = 0;
  for (int hops : {2, 3, 4}) stats.by_hops[hops] = 0;

  long hop_sum = 0;
  double duration_sum = 0.0;
  for (const QuestionRecord& q : dataset) {
    stats.by_type[q.reasoning_type] += 1;
    stats.by_hops[q.hops] += 1;
    stats.by_bucket[bucket_for_duration(q.video_duration_s)] += 1;
    hop_sum += q.hops;
    duration_sum += q.video_duration_s;
  }
  stats.mean_hops = static_cast<double>(hop_sum) / static_cast<double>(stats.total);
  stats.mean_duration = duration_sum / static_cast<double>(stats.total);
  return stats;
}

std::string DatasetStats::to_table() const {
  std::ostringstream os;
  os << "questions: " << total << "\n";
  os << "mean hops: " << format_2dp(mean_hops) << "\n";
  os << "mean duration: " << format_2dp(mean_duration) << " s\n";
  for (const auto& [type, count] : by_type) {
    os << "type:" << to_string(type) << ": " << count << "\n";
  }
  for (const auto& [hops, count] : by_hops) {
    os << "hops:" << hops << ": " << count << "\n";
  }
  for (const auto& [bucket, count] : by_bucket) {
    os << "duration:" << to_string(bucket) << ": " << count << "\n";
  }
  return os.str();
}

nlohmann::json DatasetStats::to_json() const {
  json j;
  j["total"] = total;
  j["mean_hops"] = format_2dp(mean_hops);
  j["mean_duration_s"] = format_2dp(mean_duration);
  for (const auto& [type, count] : by_type) j["by_type"][to_string(type)] = count;
  for (const auto& [hops, count] : by_hops) j["by_hops"][std::to_string(hops)] = count;
  for (const auto& [bucket, count] : by_bucket) {
    j["by_duration"][to_string(bucket)] = count;
  }
  return j;
}

}  // namespace aop
