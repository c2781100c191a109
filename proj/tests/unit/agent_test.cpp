#include "aop/agent.hpp"

#include <doctest.h>

#include "aop/errors.hpp"
#include "support/builders.hpp"

using aop::AgentLoop;
using aop::BagOfWordsEmbedder;
using aop::EvidenceMemory;
using aop::LoopConfig;
using aop::LoopDecision;
using aop::Observation;
using aop::OptionList;
using aop::ReflectorVerdict;
using aop::ScriptedChatBackend;
using aop::ToolEngine;
using testsupport::plan_response;
using testsupport::verdict_response;

namespace {

const OptionList kOptions = {{'A', "a cooking show"},
                             {'B', "a rocket launch"},
                             {'C', "a galaxy documentary"},
                             {'D', "a football match"}};

aop::HierarchicalMemory test_memory(BagOfWordsEmbedder& embedder) {
  return testsupport::make_memory(
      {{"a chef chops onions in a kitchen", {"chef", "kitchen"}, {"knife cuts"}, {}},
       {"a rocket launches from the pad", {"rocket", "launch"}, {"flame plume"}, {}},
       {"a galaxy image spins slowly", {"galaxy", "cosmos"}, {"spiral arms"}, {}}},
      embedder);
}

Observation observation_for(const ToolEngine& engine, const std::string& query, int k = 2) {
  aop::ToolCall call;
  call.tool = aop::ToolKind::Keyword;
  call.query = query;
  call.k = k;
  return engine.dispatch(call, {});
}

}  // namespace

TEST_CASE("a scripted planner emits exactly the scripted tool call") {
  BagOfWordsEmbedder embedder(128);
  const auto memory = test_memory(embedder);
  const ToolEngine engine(memory, embedder);
  ScriptedChatBackend chat;
  chat.push_response(plan_response(
      "keyword", {{"query", "rocket launch"}, {"k", 2}}, "look for the launch",
      "then check neighbors"));
  AgentLoop loop(engine, chat, aop::PromptLibrary::defaults(), {});

  nlohmann::json trace;
  trace["exchanges"] = nlohmann::json::array();
  const auto step = loop.plan("What launches?", {}, 1, &trace);
  CHECK(step.call.tool == aop::ToolKind::Keyword);
  CHECK(step.call.query == "rocket launch");
  CHECK(step.call.k == 2);
  CHECK(step.rationale == "look for the launch");
  CHECK(step.future_plan == "then check neighbors");
  CHECK_FALSE(step.fallback);
  CHECK(trace["exchanges"].size() == 1);
}

TEST_CASE("doubly malformed planner output falls back to description search") {
  BagOfWordsEmbedder embedder(128);
  const auto memory = test_memory(embedder);
  const ToolEngine engine(memory, embedder);
  ScriptedChatBackend chat;
  chat.push_response("no block here");
  chat.push_response("```json\n{\"tool\": \"telescope\"}\n```");  // unknown tool
  AgentLoop loop(engine, chat, aop::PromptLibrary::defaults(), {});

  const auto step = loop.plan("What is shown?", {}, 1, nullptr);
  CHECK(step.fallback);
  CHECK(step.call.tool == aop::ToolKind::Description);
  CHECK(step.call.query == "What is shown?");
  CHECK(step.call.k == 4);
  CHECK(chat.calls() == 2);  // one retry, then the deterministic fallback
}

TEST_CASE("plan args from other tools are rejected and retried") {
  BagOfWordsEmbedder embedder(128);
  const auto memory = test_memory(embedder);
  const ToolEngine engine(memory, embedder);
  ScriptedChatBackend chat;
  chat.push_response(
      plan_response("keyword", {{"query", "x"}, {"anchor_index", 3}}));  // wrong arg
  chat.push_response(plan_response("keyword", {{"query", "x"}}));
  AgentLoop loop(engine, chat, aop::PromptLibrary::defaults(), {});

  const auto step = loop.plan("q", {}, 1, nullptr);
  CHECK_FALSE(step.fallback);
  CHECK(step.call.query == "x");
  // The retry quotes the parse error.
  CHECK(chat.requests()[1].messages.back().text.find("could not be parsed") !=
        std::string::npos);
}

TEST_CASE("the round-2 planner prompt carries round-1 state verbatim") {
  BagOfWordsEmbedder embedder(128);
  const auto memory = test_memory(embedder);
  const ToolEngine engine(memory, embedder);
  ScriptedChatBackend chat;
  chat.push_response(plan_response("keyword", {{"query", "second round"}}));
  AgentLoop loop(engine, chat, aop::PromptLibrary::defaults(), {});

  aop::WorkingMemory working;
  aop::PlanStep first;
  first.round = 1;
  first.call.tool = aop::ToolKind::Keyword;
  first.call.query = "rocket launch";
  first.rationale = "the question mentions a launch";
  working.past_plans.push_back(first);
  working.reflections.push_back("segment 2 looks decisive but lacks audio proof");
  working.future_plan = "inspect the audio of segment 2";

  loop.plan("What launches?", working, 2, nullptr);
  const std::string prompt = chat.requests()[0].messages[0].text;
  CHECK(prompt.find("rocket launch") != std::string::npos);
  CHECK(prompt.find("the question mentions a launch") != std::string::npos);
  CHECK(prompt.find("segment 2 looks decisive but lacks audio proof") != std::string::npos);
  CHECK(prompt.find("inspect the audio of segment 2") != std::string::npos);
}

TEST_CASE("the reflector verdict is parsed and applied to evidence") {
  BagOfWordsEmbedder embedder(128);
  const auto memory = test_memory(embedder);
  const ToolEngine engine(memory, embedder);
  const Observation obs = observation_for(engine, "rocket launch");
  REQUIRE(obs.segments.size() == 2);

  ScriptedChatBackend chat;
  chat.push_response(verdict_response(
      {{obs.segments[0].segment_index, 9}, {obs.segments[1].segment_index, 2}}, "answer",
      "the launch segment is decisive"));
  AgentLoop loop(engine, chat, aop::PromptLibrary::defaults(), {});

  aop::PlanStep step;
  step.call.tool = aop::ToolKind::Keyword;
  step.call.query = "rocket launch";
  EvidenceMemory evidence;
  const ReflectorVerdict verdict = loop.reflect("q", obs, evidence, step, nullptr);
  CHECK(verdict.decision == LoopDecision::Answer);
  CHECK_FALSE(verdict.fallback);

  evidence.apply(obs, verdict, 1, memory);
  CHECK(evidence.size() == 2);
  CHECK(evidence.entries().at(2).best_reflector_score == 9);
  CHECK(evidence.entries().at(2).description == "a rocket launches from the pad");
}

TEST_CASE("a verdict omitting an observed segment retries then defaults") {
  BagOfWordsEmbedder embedder(128);
  const auto memory = test_memory(embedder);
  const ToolEngine engine(memory, embedder);
  const Observation obs = observation_for(engine, "rocket launch");

  ScriptedChatBackend chat;
  chat.push_response(
      verdict_response({{obs.segments[0].segment_index, 7}}, "answer"));  // missing one
  chat.push_response("garbage");
  AgentLoop loop(engine, chat, aop::PromptLibrary::defaults(), {});

  aop::PlanStep step;
  const ReflectorVerdict verdict = loop.reflect("q", obs, {}, step, nullptr);
  CHECK(verdict.fallback);
  CHECK(verdict.decision == LoopDecision::Continue);
  REQUIRE(verdict.segment_scores.size() == obs.segments.size());
  for (const auto& [_, score] : verdict.segment_scores) CHECK(score == 5);
  CHECK(chat.calls() == 2);
}

TEST_CASE("evidence merging keeps maxima and never shrinks") {
  BagOfWordsEmbedder embedder(128);
  const auto memory = test_memory(embedder);
  const ToolEngine engine(memory, embedder);
  const Observation obs = observation_for(engine, "rocket launch");

  EvidenceMemory evidence;
  ReflectorVerdict high;
  for (const auto& seg : obs.segments) high.segment_scores.emplace_back(seg.segment_index, 8);
  evidence.apply(obs, high, 1, memory);
  const double tool_score = evidence.entries().at(2).best_tool_score;

  // Re-observation with lower reflector scores leaves the stored maxima.
  ReflectorVerdict low;
  for (const auto& seg : obs.segments) low.segment_scores.emplace_back(seg.segment_index, 3);
  evidence.apply(obs, low, 2, memory);
  CHECK(evidence.size() == 2);
  CHECK(evidence.entries().at(2).best_reflector_score == 8);
  CHECK(evidence.entries().at(2).best_tool_score == tool_score);
  CHECK(evidence.entries().at(2).first_round_seen == 1);
}

TEST_CASE("evidence ranking prefers reflector score, then tool score, then index") {
  EvidenceMemory evidence;
  Observation obs;
  obs.tool = aop::ToolKind::Keyword;
  for (int i = 1; i <= 3; ++i) {
    aop::ScoredSegment seg;
    seg.segment_index = i;
    seg.score = i == 2 ? 0.9 : 0.1;
    obs.segments.push_back(seg);
  }
  ReflectorVerdict verdict;
  verdict.segment_scores = {{1, 7}, {2, 7}, {3, 9}};
  aop::HierarchicalMemory empty_memory;
  evidence.apply(obs, verdict, 1, empty_memory);

  const auto ranked = evidence.ranked();
  REQUIRE(ranked.size() == 3);
  CHECK(ranked[0]->segment_index == 3);  // highest reflector score
  CHECK(ranked[1]->segment_index == 2);  // tie broken by tool score
  CHECK(ranked[2]->segment_index == 1);
}

TEST_CASE("answer letters are extracted with the documented fallbacks") {
  CHECK(aop::extract_option_letter("ANSWER: B", kOptions) == 'B');
  CHECK(aop::extract_option_letter("Answer: (C)", kOptions) == 'C');
  CHECK(aop::extract_option_letter("thinking...\nANSWER: A\n", kOptions) == 'A');
  CHECK(aop::extract_option_letter("ANSWER: A then ANSWER: D", kOptions) == 'D');
  CHECK(aop::extract_option_letter("...so the answer is (C).", kOptions) == 'C');
  CHECK(aop::extract_option_letter("I pick B.", kOptions) == 'B');
  CHECK(aop::extract_option_letter("no letter at all", kOptions) ==
        std::optional<char>{});
  CHECK(aop::extract_option_letter("ANSWER: Z", kOptions) == std::optional<char>{});
  // Lowercase articles never match as standalone letters.
  CHECK(aop::extract_option_letter("a galaxy appears", kOptions) ==
        std::optional<char>{});
}

TEST_CASE("a scripted session answers in one round") {
  BagOfWordsEmbedder embedder(128);
  const auto memory = test_memory(embedder);
  const ToolEngine engine(memory, embedder);
  ScriptedChatBackend chat;
  chat.push_response(plan_response("keyword", {{"query", "rocket launch"}, {"k", 1}}));
  chat.push_response(verdict_response({{2, 9}}, "answer"));
  chat.push_response("The rocket launch is decisive. ANSWER: B");
  AgentLoop loop(engine, chat, aop::PromptLibrary::defaults(), {});

  const auto result = loop.run("What event is shown?", kOptions);
  CHECK(result.ok);
  CHECK(result.extracted_option == 'B');
  CHECK(result.rounds_used == 1);
  CHECK(result.trace["rounds"].size() == 1);
  CHECK(chat.calls() == 3);
}

TEST_CASE("a planner that always continues exhausts the round budget") {
  BagOfWordsEmbedder embedder(128);
  const auto memory = test_memory(embedder);
  const ToolEngine engine(memory, embedder);
  ScriptedChatBackend chat;
  chat.add_rule("Choose exactly one tool call",
                plan_response("keyword", {{"query", "rocket launch"}, {"k", 1}}));
  chat.add_rule("decide whether to continue", verdict_response({{2, 6}}, "continue"));
  chat.add_rule("end your reply with a line", "ANSWER: B");
  LoopConfig config;
  config.max_rounds = 3;
  AgentLoop loop(engine, chat, aop::PromptLibrary::defaults(), config);

  const auto result = loop.run("What event is shown?", kOptions);
  CHECK(result.ok);
  CHECK(result.rounds_used == 3);
  CHECK(result.trace["rounds"].size() == 3);
  // Exactly one reasoner call.
  int reason_calls = 0;
  for (const auto& exchange : result.trace["exchanges"]) {
    if (exchange["stage"] == "reason") ++reason_calls;
  }
  CHECK(reason_calls == 1);
}

TEST_CASE("dispatch errors are fed back and the loop degrades gracefully") {
  BagOfWordsEmbedder embedder(128);
  const auto memory = test_memory(embedder);
  const ToolEngine engine(memory, embedder);
  ScriptedChatBackend chat;
  // The planner insists on an out-of-range anchor every round.
  chat.add_rule("Choose exactly one tool call",
                plan_response("neighbor", {{"anchor_index", 99}, {"radius", 1}}));
  chat.add_rule("end your reply with a line", "no evidence, guessing. ANSWER: A");
  LoopConfig config;
  config.max_rounds = 2;
  AgentLoop loop(engine, chat, aop::PromptLibrary::defaults(), config);

  const auto result = loop.run("What event is shown?", kOptions);
  CHECK(result.ok);  // the reasoner still runs over an empty evidence memory
  CHECK(result.extracted_option == 'A');
  CHECK(result.rounds_used == 2);
  bool saw_dispatch_error = false;
  for (const auto& flag : result.trace["flags"]) {
    if (flag == "dispatch_error") saw_dispatch_error = true;
  }
  CHECK(saw_dispatch_error);
  // The failure is visible to the next planner round.
  CHECK(chat.requests()[2].messages[0].text.find("Observation failed") !=
        std::string::npos);
}

TEST_CASE("every fallback path leaves a machine-readable trace flag") {
  BagOfWordsEmbedder embedder(128);
  const auto memory = test_memory(embedder);
  const ToolEngine engine(memory, embedder);
  ScriptedChatBackend chat;
  // Planner garbage twice -> fallback description call; reflector garbage
  // twice -> default verdict; reasoner reply with no letter.
  chat.push_response("planner noise");
  chat.push_response("more planner noise");
  chat.push_response("reflector noise");
  chat.push_response("more reflector noise");
  chat.push_response("I truly cannot tell.");
  LoopConfig config;
  config.max_rounds = 1;
  AgentLoop loop(engine, chat, aop::PromptLibrary::defaults(), config);

  const auto result = loop.run("What event is shown?", kOptions);
  REQUIRE(result.ok);
  CHECK(result.extracted_option == std::optional<char>{});
  std::set<std::string> flags;
  for (const auto& flag : result.trace["flags"]) flags.insert(flag.get<std::string>());
  CHECK(flags.count("planner_fallback") == 1);
  CHECK(flags.count("reflector_fallback") == 1);
  CHECK(flags.count("no_answer_letter") == 1);
}

TEST_CASE("backend failures surface as error results with a partial trace") {
  BagOfWordsEmbedder embedder(128);
  const auto memory = test_memory(embedder);
  const ToolEngine engine(memory, embedder);
  ScriptedChatBackend chat;
  chat.push_response(plan_response("keyword", {{"query", "rocket launch"}, {"k", 1}}));
  // The reflector call hits an exhausted script -> protocol error.
  AgentLoop loop(engine, chat, aop::PromptLibrary::defaults(), {});

  const auto result = loop.run("What event is shown?", kOptions);
  CHECK_FALSE(result.ok);
  CHECK(result.extracted_option == std::optional<char>{});
  CHECK(result.trace.contains("error"));
  CHECK(result.trace["exchanges"].size() == 1);  // the plan exchange survived
}

TEST_CASE("identical scripted runs produce byte-identical traces") {
  BagOfWordsEmbedder embedder(128);
  const auto memory = test_memory(embedder);
  const ToolEngine engine(memory, embedder);

  auto run_once = [&]() {
    ScriptedChatBackend chat;
    chat.push_response(plan_response("keyword", {{"query", "galaxy"}, {"k", 1}}));
    chat.push_response(verdict_response({{3, 4}}, "continue", "need more"));
    chat.push_response(plan_response("neighbor", {{"anchor_index", 3}, {"radius", 1}}));
    chat.push_response(verdict_response({{2, 8}}, "answer", "found it"));
    chat.push_response("ANSWER: C");
    AgentLoop loop(engine, chat, aop::PromptLibrary::defaults(), {});
    return loop.run("What kind of video is this?", kOptions);
  };

  const auto first = run_once();
  const auto second = run_once();
  CHECK(first.ok);
  CHECK(first.rounds_used == 2);
  CHECK(first.trace.dump(2) == second.trace.dump(2));
}

TEST_CASE("replaying the recorded exchanges reproduces the trace") {
  BagOfWordsEmbedder embedder(128);
  const auto memory = test_memory(embedder);
  const ToolEngine engine(memory, embedder);

  ScriptedChatBackend chat;
  chat.push_response(plan_response("keyword", {{"query", "rocket launch"}, {"k", 1}}));
  chat.push_response("mangled reflector output");
  chat.push_response(verdict_response({{2, 9}}, "answer"));
  chat.push_response("ANSWER: B");
  AgentLoop loop(engine, chat, aop::PromptLibrary::defaults(), {});
  const auto original = loop.run("What event is shown?", kOptions);
  REQUIRE(original.ok);

  // Feed the recorded responses back through a fresh scripted backend.
  ScriptedChatBackend replay;
  for (const auto& exchange : original.trace["exchanges"]) {
    replay.push_response(exchange["response"].get<std::string>());
  }
  AgentLoop replay_loop(engine, replay, aop::PromptLibrary::defaults(), {});
  const auto replayed = replay_loop.run("What event is shown?", kOptions);
  CHECK(original.trace.dump(2) == replayed.trace.dump(2));
  CHECK(replayed.extracted_option == 'B');
}

TEST_CASE("media attachments are forwarded in media_attach mode") {
  BagOfWordsEmbedder embedder(128);
  auto memory = test_memory(embedder);
  memory.mid_segments[1].media_ref = "media/seg_0002.mp4";
  const ToolEngine engine(memory, embedder);

  ScriptedChatBackend chat;
  chat.push_response(plan_response("keyword", {{"query", "rocket launch"}, {"k", 1}}));
  chat.push_response(verdict_response({{2, 9}}, "answer"));
  chat.push_response("ANSWER: B");
  LoopConfig config;
  config.evidence_mode = aop::EvidenceMode::MediaAttach;
  AgentLoop loop(engine, chat, aop::PromptLibrary::defaults(), config);
  const auto result = loop.run("What event is shown?", kOptions);
  REQUIRE(result.ok);

  // The reflector call carried the segment's media reference.
  const auto requests = chat.requests();
  REQUIRE(requests.size() == 3);
  REQUIRE(requests[1].messages[0].attachments.size() == 1);
  CHECK(requests[1].messages[0].attachments[0].path == "media/seg_0002.mp4");
  // So does the reasoner call presenting the evidence.
  REQUIRE(requests[2].messages[0].attachments.size() == 1);
}

TEST_CASE("the reasoner runs over the overview when no evidence exists") {
  BagOfWordsEmbedder embedder(128);
  auto memory = test_memory(embedder);
  memory.global_description = "overview text";
  const ToolEngine engine(memory, embedder);
  ScriptedChatBackend chat;
  chat.push_response("ANSWER: D");
  AgentLoop loop(engine, chat, aop::PromptLibrary::defaults(), {});

  aop::WorkingMemory working;
  EvidenceMemory evidence;
  nlohmann::json trace;
  trace["exchanges"] = nlohmann::json::array();
  trace["flags"] = nlohmann::json::array();
  const auto result = loop.reason("q", kOptions, evidence, working, trace, 0);
  CHECK(result.trace["exchanges"].size() == 1);
  CHECK(result.extracted_option == 'D');
  CHECK(chat.requests()[0].messages[0].text.find("overview text") != std::string::npos);
  CHECK(chat.requests()[0].messages[0].text.find("no evidence collected") !=
        std::string::npos);
}
