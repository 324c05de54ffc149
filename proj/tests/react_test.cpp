#include <gtest/gtest.h>

#include "interplan/react.hpp"
#include "interplan/rollout.hpp"
#include "support.hpp"

namespace interplan {
namespace {

using testing::ReferenceParse;
using testing::regex_parse;

std::size_t count(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos;
       pos = haystack.find(needle, pos + needle.size()))
    ++n;
  return n;
}

Trajectory sampled_trajectory(std::uint64_t seed, int max_steps) {
  const auto g = generate_task(seed, TaskType::Clean, Difficulty::Easy);
  Rng rng(seed);
  return run_replica(PolicyParams::zeros(), g.spec, max_steps, rng);
}

TEST(ParseResponse, TemplateInstance) {
  const auto r = parse_response("Thought: the mug may be on the desk.\nAction: go to desk 1");
  EXPECT_EQ(r.thought, "the mug may be on the desk.");
  EXPECT_EQ(r.action_text, "go to desk 1");
}

TEST(ParseResponse, MissingMarker) {
  try {
    parse_response("go to desk 1");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseError::Kind::MissingActionMarker);
  }
}

TEST(ParseResponse, EmptyAction) {
  try {
    parse_response("Thought: hmm\nAction:   \nmore");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseError::Kind::EmptyAction);
  }
}

TEST(ParseResponse, LastMarkerWins) {
  const auto r = parse_response("Thought: a\nAction: b\nThought: c\nAction: take mug 1");
  EXPECT_EQ(r.action_text, "take mug 1");
  EXPECT_EQ(r.thought, "c");
}

TEST(ParseResponse, AgreesWithRegexReferenceOnRandomText) {
  const std::vector<std::string> pieces = {
      "Thought:", "Action:", "\n", " ", "\t", "go to desk 1", "take mug 1", "Act", "ion:",
      "Th", "ought", ":", "x", "\r", "done", "  Action: ", "\n\n"};
  Rng rng(77);
  for (int i = 0; i < 100000; ++i) {
    std::string text;
    const auto len = uniform_index(rng, 12);
    for (std::size_t k = 0; k < len; ++k) text += pieces[uniform_index(rng, pieces.size())];
    const ReferenceParse expected = regex_parse(text);
    try {
      const auto got = parse_response(text);
      ASSERT_EQ(expected.outcome, ReferenceParse::Outcome::Ok) << text;
      ASSERT_EQ(got.action_text, expected.action_text) << text;
      ASSERT_EQ(got.thought, expected.thought) << text;
    } catch (const ParseError& e) {
      const auto kind = e.kind() == ParseError::Kind::MissingActionMarker
                            ? ReferenceParse::Outcome::MissingActionMarker
                            : ReferenceParse::Outcome::EmptyAction;
      ASSERT_EQ(kind, expected.outcome) << text;
    }
  }
}

TEST(ParseAction, Examples) {
  const auto g = generate_task(3, TaskType::Pick, Difficulty::Easy);
  EXPECT_EQ(parse_action("done", g.spec), (ParsedAction{Verb::Done, {}}));
  EXPECT_EQ(parse_action("  Inventory ", g.spec), (ParsedAction{Verb::Inventory, {}}));
  EXPECT_THROW(parse_action("fly to moon", g.spec), GrammarError);
  EXPECT_THROW(parse_action("go to moon 1", g.spec), GrammarError);
  EXPECT_THROW(parse_action("put", g.spec), GrammarError);
}

TEST(ParseAction, PutWithTwoArguments) {
  TaskSpec spec;
  spec.entities = {"desk 1", "mug 1"};
  EXPECT_EQ(parse_action("put mug 1 in desk 1", spec),
            (ParsedAction{Verb::Put, {"mug 1", "desk 1"}}));
  EXPECT_EQ(parse_action("PUT Mug 1 in/on Desk 1", spec),
            (ParsedAction{Verb::Put, {"mug 1", "desk 1"}}));
}

TEST(ParseAction, RenderedActionsRoundTrip) {
  for (auto type : testing::all_task_types()) {
    const auto g = generate_task(17, type, Difficulty::Normal);
    const auto& ents = g.spec.entities;
    for (int v = 0; v < kNumVerbs; ++v) {
      const auto verb = static_cast<Verb>(v);
      std::vector<ParsedAction> actions;
      if (verb_arity(verb) == 0) actions.push_back({verb, {}});
      if (verb_arity(verb) == 1)
        for (const auto& e : ents) actions.push_back({verb, {e}});
      if (verb_arity(verb) == 2)
        for (const auto& a : ents)
          for (const auto& b : ents) actions.push_back({verb, {a, b}});
      for (const auto& a : actions) EXPECT_EQ(parse_action(render_action(a), g.spec), a);
    }
  }
}

TEST(FormatPrompt, EmptyTrajectoryEndsWithFirstObservation) {
  const auto g = generate_task(2, TaskType::Look, Difficulty::Easy);
  Trajectory t;
  t.spec = g.spec;
  t.initial_observation = reset(g.spec).second;
  const std::string p = format_prompt(g.spec, t);
  const std::string tail = "Observation: " + t.initial_observation.text + "\n" +
                           "Your response should use the following format:\n"
                           "Thought: <your thoughts>\nAction: <your next action>\n";
  ASSERT_GE(p.size(), tail.size());
  EXPECT_EQ(p.substr(p.size() - tail.size()), tail);
  EXPECT_EQ(p.rfind(system_prompt(), 0), 0u);
  EXPECT_NE(p.find(g.spec.instruction), std::string::npos);
}

TEST(FormatPrompt, BlockCountsAndDeterminism) {
  Trajectory full;
  for (std::uint64_t seed = 5; full.turns.size() != 2; ++seed) full = sampled_trajectory(seed, 2);
  const std::string p = format_prompt(full.spec, full);
  EXPECT_EQ(count(p, "\nObservation: "), 3u);
  std::size_t responses = 0;
  for (const auto& turn : full.turns) responses += count(p, "\n" + turn.response.text() + "\n");
  EXPECT_EQ(responses, 2u);
  EXPECT_EQ(p, format_prompt(full.spec, full));
}

TEST(FormatPrompt, GrowingHistoryKeepsPrefix) {
  const Trajectory full = sampled_trajectory(8, 12);
  for (std::size_t t = 0; t < full.turns.size(); ++t) {
    const auto a = format_prompt(full.spec, prefix(full, t));
    const auto b = format_prompt(full.spec, prefix(full, t + 1));
    EXPECT_EQ(b.rfind(a, 0), 0u) << t;
    EXPECT_GT(b.size(), a.size());
  }
}

TEST(StepResponse, LogProbsAddUpAndParsedMatchesGrammar) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Trajectory t = sampled_trajectory(seed, 30);
    int invalid = 0;
    for (const auto& turn : t.turns) {
      double sum = 0.0;
      for (double x : turn.response.token_log_probs) sum += x;
      EXPECT_NEAR(sum, turn.response.total_log_prob, 1e-12);
      bool parses = true;
      try {
        parse_action(turn.response.action_text, t.spec);
      } catch (const GrammarError&) {
        parses = false;
      }
      EXPECT_EQ(parses, turn.response.parsed.has_value());
      invalid += !turn.observation.valid;
    }
    EXPECT_EQ(invalid, t.invalid_count);
  }
}

TEST(TrajectoryRecord, CarriesTheLoggedFields) {
  const Trajectory t = sampled_trajectory(4, 6);
  const auto j = trajectory_record(t);
  for (const char* key : {"task_id", "seed", "split", "turns", "reward", "invalid_count",
                          "truncated"})
    EXPECT_TRUE(j.contains(key)) << key;
  ASSERT_EQ(j["turns"].size(), t.turns.size());
  for (const char* key : {"obs", "thought", "action", "valid", "log_prob"})
    EXPECT_TRUE(j["turns"][0].contains(key)) << key;
}

}  // namespace
}  // namespace interplan
