#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "aop/agent.hpp"
#include "aop/backends.hpp"
#include "aop/memory_builder.hpp"
#include "aop/retrieval.hpp"

namespace aop {

// Which chat / embedding implementation the CLI should construct.
struct ProviderConfig {
  std::string chat_provider = "openai";  // "openai" | "scripted"
  std::string script_path;               // scripted chat rule file
  std::string embedding_provider = "bag_of_words";  // | "hash" | "openai"
  int embedding_dimension = 512;
  std::uint64_t embedding_seed = 0;
  std::string embedding_model_name;
};

// Configuration surface of the CLI. Precedence: flags > config file >
// built-in defaults. Unknown keys in a config file are rejected.
struct RunConfig {
  BackendConfig backend;
  ProviderConfig provider;
  SegmentationConfig segmentation;
  double annotation_temperature = 1.0;  // memory construction calls
  int build_workers = 1;
  LoopConfig loop;
  Bm25Params bm25;
  int eval_workers = 1;
  std::string eval_output_dir = "eval_out";

  static RunConfig defaults() { return {}; }
  static RunConfig from_file(const std::string& path);
  static RunConfig from_json(const nlohmann::json& j);

  nlohmann::json to_json() const;  // the `inspect` introspection payload
  void validate() const;
};

}  // namespace aop
