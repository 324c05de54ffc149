#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "interplan/policy.hpp"
#include "interplan/rollout.hpp"
#include "support.hpp"

namespace interplan {
namespace {

using testing::explicit_log_prob;
using testing::explicit_probs;
using testing::random_params;

struct Instance {
  PolicyParams params;
  Trajectory prefix;
  StepResponse response;
};

// A (params, prefix, response) triple drawn from the policy itself.
Instance random_instance(std::uint64_t seed) {
  Rng rng(seed);
  const auto type = testing::all_task_types()[seed % kNumTaskTypes];
  const auto diff = seed % 2 ? Difficulty::Normal : Difficulty::Easy;
  const auto g = generate_task(rng() % 100000, type, diff);
  Instance out{random_params(seed * 31 + 1, 0.3), {}, {}};
  const Trajectory t = run_replica(out.params, g.spec, 12, rng);
  const auto turn = uniform_index(rng, t.turns.size());
  out.prefix = prefix(t, turn);
  out.response = t.turns[turn].response;
  return out;
}

TEST(Distribution, SumsToOneAndStaysPositive) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Instance in = random_instance(seed);
    const auto stages = stages_for(memory_of(in.prefix), *in.response.choices);
    for (const auto& s : stages) {
      const auto d = distribution(in.params, s);
      EXPECT_NEAR(d.probabilities.sum(), 1.0, 1e-9);
      EXPECT_GT(d.probabilities.minCoeff(), 0.0);
      const auto ref = explicit_probs(in.params.weights, s);
      for (std::size_t i = 0; i < ref.size(); ++i)
        EXPECT_NEAR(d.probabilities(static_cast<Eigen::Index>(i)), ref[i], 1e-12);
    }
  }
}

TEST(Sample, UniformWeightsGiveUniformChoices) {
  const auto g = generate_task(4, TaskType::Pick, Difficulty::Easy);
  Trajectory t;
  t.spec = g.spec;
  t.initial_observation = reset(g.spec).second;
  Rng rng(1);
  const auto r = sample_response(PolicyParams::zeros(), t, g.spec, rng);
  ASSERT_GE(r.token_log_probs.size(), 2u);
  EXPECT_DOUBLE_EQ(r.token_log_probs[0], std::log(1.0 / kNumThoughts));
  EXPECT_NEAR(r.token_log_probs[1], std::log(1.0 / 11.0), 1e-15);
}

TEST(Sample, FixedSeedGivesIdenticalResponse) {
  const Instance in = random_instance(3);
  Rng a(99), b(99);
  EXPECT_EQ(sample_response(in.params, in.prefix, in.prefix.spec, a),
            sample_response(in.params, in.prefix, in.prefix.spec, b));
}

TEST(Sample, FrequenciesMatchProbabilities) {
  const Instance in = random_instance(12);
  const AgentMemory memory = memory_of(in.prefix);
  const auto thought_stage = next_stage(memory, ChoiceRecord{});
  ASSERT_TRUE(thought_stage);
  const auto pt = explicit_probs(in.params.weights, *thought_stage);
  std::vector<double> pv(kNumVerbs, 0.0);
  for (int th = 0; th < kNumThoughts; ++th) {
    const auto vs = next_stage(memory, ChoiceRecord{th, -1, {}});
    const auto p = explicit_probs(in.params.weights, *vs);
    for (int v = 0; v < kNumVerbs; ++v) pv[v] += pt[th] * p[v];
  }

  const int n = 100000;
  std::vector<int> ct(kNumThoughts, 0), cv(kNumVerbs, 0);
  Rng rng(2718);
  for (int i = 0; i < n; ++i) {
    const auto r = sample_response(in.params, in.prefix, in.prefix.spec, rng);
    ++ct[r.choices->thought];
    ++cv[r.choices->verb];
  }
  auto check = [n](const std::vector<double>& p, const std::vector<int>& c) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double se = std::sqrt(p[k] * (1.0 - p[k]) / n);
      EXPECT_LE(std::abs(c[k] / double(n) - p[k]), 3.0 * se) << k;
    }
  };
  check(pt, ct);
  check(pv, cv);
}

TEST(LogProb, RescoresTheRecordedValue) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Instance in = random_instance(seed);
    const double lp = log_prob(in.params, in.prefix, in.response);
    EXPECT_NEAR(lp, in.response.total_log_prob, 1e-12);
    EXPECT_LE(lp, 0.0);
    EXPECT_NEAR(lp, explicit_log_prob(in.params, in.prefix, in.response), 1e-10);
    const PolicyParams other = random_params(seed + 500, 0.5);
    EXPECT_LE(log_prob(other, in.prefix, in.response), 0.0);
    EXPECT_NEAR(log_prob(other, in.prefix, in.response),
                explicit_log_prob(other, in.prefix, in.response), 1e-10);
  }
}

TEST(LogProb, UnknownChoicesAreRejected) {
  Instance in = random_instance(7);
  StepResponse bad = in.response;
  bad.choices->verb = kNumVerbs;
  EXPECT_THROW(log_prob(in.params, in.prefix, bad), ChoiceOutOfVocabulary);
  bad = in.response;
  bad.choices->args.push_back("nowhere 9");
  EXPECT_THROW(log_prob(in.params, in.prefix, bad), ChoiceOutOfVocabulary);
  bad = in.response;
  bad.choices.reset();
  EXPECT_THROW(log_prob(in.params, in.prefix, bad), ChoiceOutOfVocabulary);
}

TEST(GradLogProb, MatchesCentralDifferences) {
  const double h = 1e-5;
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Instance in = random_instance(seed);
    const Eigen::MatrixXd g = grad_log_prob(in.params, in.prefix, in.response);
    ASSERT_EQ(g.rows(), in.params.weights.rows());
    ASSERT_EQ(g.cols(), in.params.weights.cols());

    std::vector<Eigen::Index> entries;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(g.size()));
    for (Eigen::Index i = 0; i < g.size(); ++i) order[static_cast<std::size_t>(i)] = i;
    std::partial_sort(order.begin(), order.begin() + 20, order.end(), [&](auto a, auto b) {
      return std::abs(g.data()[a]) > std::abs(g.data()[b]);
    });
    entries.assign(order.begin(), order.begin() + 20);
    Rng rng(seed);
    for (int k = 0; k < 10; ++k) entries.push_back(static_cast<Eigen::Index>(
        uniform_index(rng, static_cast<std::size_t>(g.size()))));

    for (Eigen::Index e : entries) {
      PolicyParams p = in.params;
      const double w = p.weights.data()[e];
      p.weights.data()[e] = w + h;
      const double up = log_prob(p, in.prefix, in.response);
      p.weights.data()[e] = w - h;
      const double down = log_prob(p, in.prefix, in.response);
      const double fd = (up - down) / (2 * h);
      const double a = g.data()[e];
      EXPECT_LE(std::abs(a - fd), 1e-5 * std::max(std::abs(a), std::abs(fd)) + 1e-9)
          << "seed " << seed << " entry " << e << " analytic " << a << " fd " << fd;
      ++checked;
    }
  }
  EXPECT_GE(checked, 3000);
}

TEST(GradLogProb, BinaryChoiceAtUniformWeights) {
  Stage s;
  s.features = Eigen::VectorXd::Zero(features::kTotal);
  s.features(0) = 1.0;
  s.features(5) = -2.5;
  s.features(40) = 0.75;
  s.descriptors = {{3}, {8}};
  s.candidate_ids = {"a", "b"};
  s.chosen = 0;
  const PolicyParams zero = PolicyParams::zeros();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(zero.feature_dim(), zero.choice_vocab());
  add_grad_log_prob(zero, {s}, 1.0, g);
  EXPECT_TRUE(g.col(3).isApprox(0.5 * s.features));
  EXPECT_TRUE(g.col(8).isApprox(-0.5 * s.features));
  EXPECT_DOUBLE_EQ(g.col(3).cwiseAbs().sum(), 0.5 * s.features.cwiseAbs().sum());
}

TEST(GradLogProb, OneHotStageColumnsSumToZero) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Instance in = random_instance(seed);
    const auto stages = stages_for(memory_of(in.prefix), *in.response.choices);
    for (std::size_t k = 0; k < 2; ++k) {
      Eigen::MatrixXd g = Eigen::MatrixXd::Zero(in.params.feature_dim(), in.params.choice_vocab());
      add_grad_log_prob(in.params, {stages[k]}, 1.0, g);
      EXPECT_LT(g.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(KlStep, IdentityAndNonNegativity) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Instance in = random_instance(seed);
    EXPECT_EQ(kl_step(in.params, in.params, in.prefix, in.response), 0.0);
    const PolicyParams q = random_params(seed + 900, 0.4);
    EXPECT_GE(kl_step(in.params, q, in.prefix, in.response), 0.0);
    EXPECT_GE(kl_step(q, in.params, in.prefix, in.response), 0.0);
  }
}

struct Enumerated {
  double p = 0.0;
  double log_ratio = 0.0;
  double kl_conditional = 0.0;
};

void enumerate(const PolicyParams& p, const PolicyParams& q, const AgentMemory& memory,
               const Trajectory& prefix, ChoiceRecord partial, double lp, double lq,
               std::map<std::string, Enumerated>& out) {
  const auto stage = next_stage(memory, partial);
  if (!stage) {
    StepResponse r;
    r.choices = partial;
    std::string key = std::to_string(partial.thought) + "|" + std::to_string(partial.verb);
    for (const auto& a : partial.args) key += "|" + a;
    out[key] = {std::exp(lp), lp - lq, kl_step(p, q, prefix, r)};
    return;
  }
  const auto pp = explicit_probs(p.weights, *stage);
  const auto pq = explicit_probs(q.weights, *stage);
  for (std::size_t c = 0; c < pp.size(); ++c) {
    ChoiceRecord next = partial;
    if (next.thought < 0)
      next.thought = static_cast<int>(c);
    else if (next.verb < 0)
      next.verb = static_cast<int>(c);
    else
      next.args.push_back(stage->candidate_ids[c]);
    enumerate(p, q, memory, prefix, next, lp + std::log(pp[c]), lq + std::log(pq[c]), out);
  }
}

TEST(KlStep, AgreesWithEnumerationAndMonteCarlo) {
  const Instance in = random_instance(21);
  const PolicyParams& p = in.params;
  const PolicyParams q = random_params(4242, 0.3);
  std::map<std::string, Enumerated> table;
  enumerate(p, q, memory_of(in.prefix), in.prefix, ChoiceRecord{}, 0.0, 0.0, table);

  double mass = 0.0, exact = 0.0, chained = 0.0;
  for (const auto& [key, e] : table) {
    mass += e.p;
    exact += e.p * e.log_ratio;
    chained += e.p * e.kl_conditional;
  }
  EXPECT_NEAR(mass, 1.0, 1e-9);
  EXPECT_NEAR(chained, exact, 1e-10);
  EXPECT_GT(exact, 0.0);

  const int n = 1000000;
  Rng rng(31337);
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto r = sample_response(p, in.prefix, in.prefix.spec, rng);
    std::string key = std::to_string(r.choices->thought) + "|" + std::to_string(r.choices->verb);
    for (const auto& a : r.choices->args) key += "|" + a;
    const double x = table.at(key).log_ratio;
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / n);
  EXPECT_LE(std::abs(mean - exact), 3.0 * se) << "mc " << mean << " exact " << exact;
}

TEST(Conditioning, FutureTurnsDoNotChangeEarlierSteps) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = generate_task(seed + 300, TaskType::Cool, Difficulty::Easy);
    const PolicyParams params = random_params(seed, 0.3);
    Rng rng(seed);
    const Trajectory full = run_replica(params, g.spec, 12, rng);
    const auto stages = trajectory_stages(full);
    ASSERT_EQ(stages.size(), full.turns.size());
    for (std::size_t t = 0; t < full.turns.size(); ++t) {
      const double lp = log_prob(params, prefix(full, t), full.turns[t].response);
      EXPECT_NEAR(stages_log_prob(params, stages[t]), lp, 1e-12);
      Trajectory altered = full;
      for (std::size_t k = t + 1; k < altered.turns.size(); ++k) {
        altered.turns[k].observation.text = "Nothing happens";
        altered.turns[k].observation.valid = false;
        altered.turns[k].observation.percept = Percept{};
        altered.turns[k].observation.percept.event = Percept::Event::Invalid;
      }
      EXPECT_EQ(log_prob(params, prefix(altered, t), altered.turns[t].response), lp);
      EXPECT_EQ(stages_log_prob(params, trajectory_stages(prefix(altered, t + 1))[t]), lp);
    }
  }
}

TEST(Featurize, DeterministicAndSized) {
  for (auto diff : {Difficulty::Easy, Difficulty::Normal}) {
    for (auto type : testing::all_task_types()) {
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto g = generate_task(seed * 13, type, diff);
        Rng rng(seed);
        const Trajectory t = run_replica(PolicyParams::zeros(), g.spec, 6, rng);
        const auto x = featurize(t, g.spec);
        EXPECT_EQ(x.size(), PolicyParams::zeros().feature_dim());
        EXPECT_EQ(x, featurize(t, g.spec));
      }
    }
  }
}

TEST(Featurize, HiddenStateDoesNotMatter) {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto g = generate_task(seed, TaskType::Pick, Difficulty::Normal);
    std::vector<std::string> closed;
    for (const auto& [id, r] : g.state.receptacles)
      if (!r.open && !r.contents.empty()) closed.push_back(id);
    if (closed.size() < 2) continue;
    WorldState other = g.state;
    auto& from = other.receptacles.at(closed[0]).contents;
    auto& to = other.receptacles.at(closed[1]).contents;
    to.push_back(from.back());
    from.pop_back();
    std::sort(to.begin(), to.end());

    // Drive both worlds with the same uniform-policy choices.
    Trajectory a, b;
    a.spec = b.spec = g.spec;
    a.initial_observation = b.initial_observation = reset(g.spec).second;
    WorldState sa = g.state, sb = other;
    Rng rng(seed);
    for (int k = 0; k < 4; ++k) {
      auto r = sample_response(PolicyParams::zeros(), a, g.spec, rng);
      if (!r.parsed || r.parsed->verb == Verb::Open || r.parsed->verb == Verb::Done) break;
      const auto oa = step(sa, *r.parsed, g.spec);
      const auto ob = step(sb, *r.parsed, g.spec);
      if (oa.observation.text != ob.observation.text) break;
      a.turns.push_back({r, oa.observation});
      b.turns.push_back({r, ob.observation});
      sa = oa.state;
      sb = ob.state;
    }
    EXPECT_NE(serialize(sa), serialize(sb));
    EXPECT_EQ(featurize(a, g.spec), featurize(b, g.spec));
    ++checked;
  }
  EXPECT_GT(checked, 5);
}

TEST(Checkpoint, RoundTripReproducesLogProbs) {
  const Instance in = random_instance(5);
  const auto path = std::filesystem::temp_directory_path() / "interplan_policy_roundtrip.txt";
  save_checkpoint(path.string(), in.params, 42);
  long step = 0;
  const PolicyParams loaded = load_checkpoint(path.string(), &step);
  EXPECT_EQ(step, 42);
  EXPECT_EQ(loaded.weights, in.params.weights);
  EXPECT_EQ(log_prob(loaded, in.prefix, in.response), log_prob(in.params, in.prefix, in.response));
  std::filesystem::remove(path);
}

TEST(ThoughtText, EveryTemplateRenders) {
  const auto g = generate_task(1, TaskType::Heat, Difficulty::Easy);
  const AgentMemory m = AgentMemory::start(g.spec, reset(g.spec).second);
  for (int k = 0; k < kNumThoughts; ++k) EXPECT_FALSE(thought_text(k, m).empty());
  EXPECT_THROW(thought_text(kNumThoughts, m), ChoiceOutOfVocabulary);
}

}  // namespace
}  // namespace interplan
