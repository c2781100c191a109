#include "aop/run_config.hpp"

#include <fstream>
#include <set>

#include "aop/errors.hpp"

namespace aop {

namespace {

using nlohmann::json;

class SectionReader {
 public:
  SectionReader(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j.is_object()) {
      raise(ErrorKind::Config, "config section \"" + name_ + "\" must be an object");
    }
  }

  ~SectionReader() = default;

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!consumed_.count(key)) {
        raise(ErrorKind::Config, "unknown config key \"" + name_ + "." + key + "\"");
      }
    }
  }

  template <typename T>
  void read(const char* key, T& target) {
    consumed_.insert(key);
    if (!j_.contains(key)) return;
    try {
      target = j_[key].get<T>();
    } catch (const json::exception&) {
      raise(ErrorKind::Config, "config key \"" + name_ + "." + key + "\" has the wrong type");
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> consumed_;
};

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Ingestion, "config file not readable: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    raise(ErrorKind::Config, "config file is not valid JSON: " + std::string(e.what()));
  }
  return from_json(j);
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig config;
  if (!j.is_object()) raise(ErrorKind::Config, "config root must be an object");

  const std::set<std::string> known_sections = {"backend", "segmentation", "build",
                                                "loop", "retrieval", "eval"};
  for (const auto& [key, _] : j.items()) {
    if (!known_sections.count(key)) {
      raise(ErrorKind::Config, "unknown config section \"" + key + "\"");
    }
  }

  if (j.contains("backend")) {
    SectionReader r(j["backend"], "backend");
    r.read("base_url", config.backend.base_url);
    r.read("model_name", config.backend.model_name);
    r.read("api_key_env_var", config.backend.api_key_env_var);
    r.read("timeout_s", config.backend.timeout_s);
    r.read("max_retries", config.backend.max_retries);
    r.read("context_budget_tokens", config.backend.context_budget_tokens);
    r.read("chat_provider", config.provider.chat_provider);
    r.read("script_path", config.provider.script_path);
    r.read("embedding_provider", config.provider.embedding_provider);
    r.read("embedding_dimension", config.provider.embedding_dimension);
    r.read("embedding_seed", config.provider.embedding_seed);
    r.read("embedding_model_name", config.provider.embedding_model_name);
    r.finish();
  }
  if (j.contains("segmentation")) {
    SectionReader r(j["segmentation"], "segmentation");
    r.read("merge_threshold_s", config.segmentation.merge_threshold_s);
    r.read("max_duration_s", config.segmentation.max_duration_s);
    r.read("overlap_s", config.segmentation.overlap_s);
    r.read("gap_fill_threshold_s", config.segmentation.gap_fill_threshold_s);
    r.read("no_speech_window_s", config.segmentation.no_speech_window_s);
    r.finish();
  }
  if (j.contains("build")) {
    SectionReader r(j["build"], "build");
    r.read("annotation_temperature", config.annotation_temperature);
    r.read("workers", config.build_workers);
    r.finish();
  }
  if (j.contains("loop")) {
    SectionReader r(j["loop"], "loop");
    r.read("max_rounds", config.loop.max_rounds);
    r.read("evidence_top_m_for_reasoner", config.loop.evidence_top_m_for_reasoner);
    r.read("planner_temperature", config.loop.planner_temperature);
    std::string mode = config.loop.evidence_mode == EvidenceMode::MediaAttach
                           ? "media_attach"
                           : "text_only";
    r.read("evidence_mode", mode);
    if (mode == "text_only") {
      config.loop.evidence_mode = EvidenceMode::TextOnly;
    } else if (mode == "media_attach") {
      config.loop.evidence_mode = EvidenceMode::MediaAttach;
    } else {
      raise(ErrorKind::Config,
            "loop.evidence_mode must be \"text_only\" or \"media_attach\"");
    }
    r.read("parse_retries", config.loop.parse_retries);
    r.read("default_k", config.loop.default_k);
    r.read("default_lambda", config.loop.default_lambda);
    r.read("max_output_tokens", config.loop.max_output_tokens);
    r.finish();
  }
  if (j.contains("retrieval")) {
    SectionReader r(j["retrieval"], "retrieval");
    r.read("bm25_k1", config.bm25.k1);
    r.read("bm25_b", config.bm25.b);
    r.finish();
  }
  if (j.contains("eval")) {
    SectionReader r(j["eval"], "eval");
    r.read("workers", config.eval_workers);
    r.read("output_dir", config.eval_output_dir);
    r.finish();
  }
  config.validate();
  return config;
}

void RunConfig::validate() const {
  backend.validate();
  segmentation.validate();
  loop.validate();
  if (annotation_temperature < 0.0 || annotation_temperature > 2.0) {
    raise(ErrorKind::Config, "build.annotation_temperature must lie in [0, 2]");
  }
  if (build_workers < 1) raise(ErrorKind::Config, "build.workers must be >= 1");
  if (eval_workers < 1) raise(ErrorKind::Config, "eval.workers must be >= 1");
  if (bm25.k1 <= 0.0 || bm25.b < 0.0 || bm25.b > 1.0) {
    raise(ErrorKind::Config, "retrieval BM25 parameters out of range");
  }
}

nlohmann::json RunConfig::to_json() const {
  json j;
  j["backend"] = {{"base_url", backend.base_url},
                  {"model_name", backend.model_name},
                  {"api_key_env_var", backend.api_key_env_var},
                  {"timeout_s", backend.timeout_s},
                  {"max_retries", backend.max_retries},
                  {"context_budget_tokens", backend.context_budget_tokens},
                  {"chat_provider", provider.chat_provider},
                  {"script_path", provider.script_path},
                  {"embedding_provider", provider.embedding_provider},
                  {"embedding_dimension", provider.embedding_dimension},
                  {"embedding_seed", provider.embedding_seed},
                  {"embedding_model_name", provider.embedding_model_name}};
  j["segmentation"] = {{"merge_threshold_s", segmentation.merge_threshold_s},
                       {"max_duration_s", segmentation.max_duration_s},
                       {"overlap_s", segmentation.overlap_s},
                       {"gap_fill_threshold_s", segmentation.gap_fill_threshold_s},
                       {"no_speech_window_s", segmentation.no_speech_window_s}};
  j["build"] = {{"annotation_temperature", annotation_temperature},
                {"workers", build_workers}};
  j["loop"] = {{"max_rounds", loop.max_rounds},
               {"evidence_top_m_for_reasoner", loop.evidence_top_m_for_reasoner},
               {"planner_temperature", loop.planner_temperature},
               {"evidence_mode", loop.evidence_mode == EvidenceMode::MediaAttach
                                     ? "media_attach"
                                     : "text_only"},
               {"parse_retries", loop.parse_retries},
               {"default_k", loop.default_k},
               {"default_lambda", loop.default_lambda},
               {"max_output_tokens", loop.max_output_tokens}};
  j["retrieval"] = {{"bm25_k1", bm25.k1}, {"bm25_b", bm25.b}};
  j["eval"] = {{"workers", eval_workers}, {"output_dir", eval_output_dir}};
  return j;
}

}  // namespace aop
