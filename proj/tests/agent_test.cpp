#include <gtest/gtest.h>

#include <cmath>

#include "suntrack/agent.hpp"

using namespace suntrack;

namespace {

// Q-network whose outputs are its output biases, whatever the input.
Mlp constant_q(const std::vector<double>& values) {
  Mlp m({kStateSize, kNumActions});
  for (int i = 0; i < kNumActions; ++i) m.params().biases[0][i] = values[i];
  return m;
}

AgentState random_state(Rng& rng) {
  AgentState s;
  for (int i = 0; i < kStateSize; ++i) s[i] = rng.uniform(-1.0, 1.0);
  return s;
}

Transition random_transition(Rng& rng) {
  return {random_state(rng), static_cast<int>(rng.index(kNumActions)), rng.normal(), random_state(rng),
          rng.bernoulli(0.2)};
}

Transition tagged(double r) { return {AgentState::Zero(), 0, r, AgentState::Zero(), false}; }

AgentConfig tiny_config(int episodes) {
  AgentConfig c;
  c.episodes = episodes;
  c.batch_size = 8;
  c.buffer_capacity = 500;
  c.decay_steps = 200;
  c.target_sync_every = 20;
  c.hidden_sizes = {16};
  c.action_delta_rad = 0.1;
  return c;
}

}  // namespace

TEST(AgentConfig, Validation) {
  EXPECT_NO_THROW(AgentConfig{}.validate());
  AgentConfig c;
  c.gamma = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.eps_end = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.buffer_capacity = 10;
  c.batch_size = 11;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.batch_size = 0;
  c.buffer_capacity = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(AgentConfig, EpsilonScheduleIsLinearThenFlat) {
  AgentConfig c;
  EXPECT_EQ(c.epsilon(0), c.eps_start);
  EXPECT_EQ(c.epsilon(c.decay_steps), c.eps_end);
  EXPECT_EQ(c.epsilon(c.decay_steps * 3), c.eps_end);
  EXPECT_NEAR(c.epsilon(c.decay_steps / 2), 0.5 * (c.eps_start + c.eps_end), 1e-12);
  for (long s = 1; s < c.decay_steps + 100; s += 37) EXPECT_LE(c.epsilon(s), c.epsilon(s - 1));
  c.decay_steps = 0;
  EXPECT_EQ(c.epsilon(0), c.eps_end);
}

TEST(QNetwork, OutputsOneValuePerAction) {
  const Mlp q = q_network({64, 64}, 1);
  EXPECT_EQ(q.input_size(), kStateSize);
  EXPECT_EQ(q.output_size(), 13);
  EXPECT_EQ(kNumActions, 13);
}

TEST(SelectAction, UniformWhenFullyExploring) {
  const Mlp q = q_network({8}, 2);
  Rng rng(3);
  std::vector<int> counts(kNumActions, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[select_action(q, AgentState::Zero(), 1.0, rng)];
  const double p = 1.0 / kNumActions;
  const double sigma = std::sqrt(n * p * (1.0 - p));
  for (int c : counts) EXPECT_NEAR(c, n * p, 3.0 * sigma);
}

TEST(SelectAction, GreedyPicksArgmaxLowestOnTies) {
  Rng rng(0);
  std::vector<double> q(kNumActions, 0.0);
  q[1] = 5.0;
  q[2] = 1.0;
  EXPECT_EQ(select_action(constant_q(q), AgentState::Zero(), 0.0, rng), 1);
  EXPECT_EQ(select_action(constant_q(std::vector<double>(kNumActions, 0.7)), AgentState::Zero(), 0.0, rng), 0);
  q.assign(kNumActions, 0.0);
  q[4] = q[9] = 2.0;
  EXPECT_EQ(select_action(constant_q(q), AgentState::Zero(), 0.0, rng), 4);
  EXPECT_THROW(select_action(constant_q(q), AgentState::Zero(), 1.5, rng), std::invalid_argument);
}

TEST(SelectAction, GreedyIsPureFunctionOfObservation) {
  const Mlp q = q_network({16, 16}, 5);
  Rng a(1), b(999), states(2);
  for (int i = 0; i < 100; ++i) {
    const AgentState s = random_state(states);
    EXPECT_EQ(select_action(q, s, 0.0, a), select_action(q, s, 0.0, b));
  }
}

TEST(ReplayBuffer, PushAndEviction) {
  ReplayBuffer one(5);
  one.push(tagged(1.0));
  EXPECT_EQ(one.size(), 1u);

  ReplayBuffer two(2);
  for (double r : {1.0, 2.0, 3.0}) two.push(tagged(r));
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two.at(0).r, 2.0);
  EXPECT_EQ(two.at(1).r, 3.0);

  ReplayBuffer full(7);
  for (int i = 0; i < 7; ++i) full.push(tagged(i));
  EXPECT_EQ(full.size(), 7u);
}

TEST(ReplayBuffer, EvictionIsStrictlyFifo) {
  ReplayBuffer buf(5);
  for (int i = 0; i < 23; ++i) {
    buf.push(tagged(i));
    const int first = std::max(0, i - 4);
    for (std::size_t k = 0; k < buf.size(); ++k) EXPECT_EQ(buf.at(k).r, first + static_cast<double>(k));
  }
  EXPECT_EQ(buf.inserted(), 23u);
}

TEST(ReplayBuffer, RejectsInvalidTransitions) {
  ReplayBuffer buf(3);
  Transition t = tagged(0.0);
  t.a = 13;
  EXPECT_THROW(buf.push(t), std::invalid_argument);
  t = tagged(NAN);
  EXPECT_THROW(buf.push(t), std::invalid_argument);
}

TEST(ReplayBuffer, SampleExamples) {
  ReplayBuffer buf(4);
  EXPECT_THROW(buf.sample(1, *std::make_unique<Rng>(0)), std::logic_error);
  buf.push(tagged(9.0));
  Rng rng(1);
  const auto only = buf.sample(1, rng);
  ASSERT_EQ(only.size(), 1u);
  EXPECT_EQ(only[0].r, 9.0);
  EXPECT_THROW(buf.sample(2, rng), std::logic_error);
  for (double r : {1.0, 2.0, 3.0}) buf.push(tagged(r));
  Rng a(7), b(7);
  const auto x = buf.sample(4, a), y = buf.sample(4, b);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i].r, y[i].r);
}

TEST(ReplayBuffer, SamplingIsUniformWithReplacement) {
  ReplayBuffer buf(4);
  for (int i = 0; i < 4; ++i) buf.push(tagged(i));
  Rng rng(11);
  std::vector<int> counts(4, 0);
  const int n = 100000;
  for (int i = 0; i < n / 4; ++i) {
    for (const auto& t : buf.sample(4, rng)) ++counts[static_cast<int>(t.r)];
  }
  // sd of a frequency is sqrt(0.25 * 0.75 / 1e5) = 0.00137, so 0.01 is > 7 sd.
  for (int c : counts) EXPECT_NEAR(c / static_cast<double>(n), 0.25, 0.01);
}

TEST(TdTargets, Examples) {
  std::vector<double> q(kNumActions, 0.0);
  q[3] = 2.0;
  const Mlp target = constant_q(q);
  Transition done = tagged(2.0);
  done.done = true;
  EXPECT_EQ(td_targets({done}, target, 0.9)[0], 2.0);
  EXPECT_NEAR(td_targets({tagged(1.0)}, target, 0.9)[0], 2.8, 1e-15);
  Rng rng(3);
  std::vector<Transition> batch;
  for (int i = 0; i < 10; ++i) batch.push_back(random_transition(rng));
  const auto y = td_targets(batch, q_network({8}, 4), 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) EXPECT_EQ(y[i], batch[i].r);
  EXPECT_THROW(td_targets({}, target, 0.9), std::invalid_argument);
}

TEST(TdTargets, OnlyTargetParametersMatter) {
  Rng rng(5);
  std::vector<Transition> batch;
  for (int i = 0; i < 16; ++i) batch.push_back(random_transition(rng));
  Mlp online = q_network({16}, 6);
  Mlp target = online;
  OptimState opt = OptimState::sgd(0.05);
  const auto before = td_targets(batch, target, 0.9);
  // Training moves the online weights; the targets must not follow.
  train_step(online, target, opt, batch, 0.9);
  EXPECT_FALSE(online == target);
  EXPECT_EQ(td_targets(batch, target, 0.9), before);
}

TEST(TrainStep, ZeroLossLeavesParametersUnchanged) {
  std::vector<double> q(kNumActions, 0.0);
  q[0] = 20.0;  // = r + 0.9 * max Q(s') with r = 2
  Mlp online = constant_q(q);
  const Mlp target = online;
  const Mlp before = online;
  OptimState sgd = OptimState::sgd(0.1);
  const double loss = train_step(online, target, sgd, {tagged(2.0), tagged(2.0)}, 0.9);
  EXPECT_EQ(loss, 0.0);
  EXPECT_TRUE(online == before);
}

TEST(TrainStep, SmallStepLowersTheLoss) {
  Rng rng(8);
  const Transition t = random_transition(rng);
  Mlp online = mlp_new({kStateSize, kNumActions}, 9);
  const Mlp target = mlp_new({kStateSize, kNumActions}, 10);
  OptimState sgd = OptimState::sgd(1e-3);
  const double pre = train_step(online, target, sgd, {t}, 0.9);
  const double post = td_loss(online, {t}, td_targets({t}, target, 0.9), nullptr);
  EXPECT_LT(post, pre);
}

TEST(TrainStep, ReturnsPreStepLossAndTouchesOnlyTakenAction) {
  Rng rng(12);
  std::vector<Transition> batch{random_transition(rng)};
  Mlp online = mlp_new({kStateSize, kNumActions}, 1);
  const Mlp target = mlp_new({kStateSize, kNumActions}, 2);
  const double expected = td_loss(online, batch, td_targets(batch, target, 0.95), nullptr);
  const Mlp before = online;
  OptimState sgd = OptimState::sgd(0.01);
  EXPECT_EQ(train_step(online, target, sgd, batch, 0.95), expected);
  for (int a = 0; a < kNumActions; ++a) {
    const bool same = online.params().weights[0].row(a) == before.params().weights[0].row(a);
    EXPECT_EQ(same, a != batch[0].a) << a;
  }
}

TEST(TrainStep, GradientMatchesFiniteDifferences) {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Transition> batch;
    for (int i = 0; i < 8; ++i) batch.push_back(random_transition(rng));
    const Mlp online = q_network({12, 10}, 30 + trial);
    const Mlp target = q_network({12, 10}, 40 + trial);
    const auto y = td_targets(batch, target, 0.95);
    Gradients g = online.zero_gradients();
    td_loss(online, batch, y, &g);
    const double err = gradient_check(online, [&](const Mlp& m) { return td_loss(m, batch, y, nullptr); }, g);
    EXPECT_LT(err, 1e-4);
  }
}

TEST(SyncTarget, HardCopy) {
  Mlp online = q_network({16}, 1);
  Mlp target = q_network({16}, 2);
  Rng rng(3);
  const AgentState probe = random_state(rng);
  EXPECT_NE(forward(online, probe), forward(target, probe));
  sync_target(online, target);
  EXPECT_EQ(forward(online, probe), forward(target, probe));
  EXPECT_TRUE(target == online);
  sync_target(online, target);
  EXPECT_TRUE(target == online);
  Mlp other = q_network({8}, 1);
  EXPECT_THROW(sync_target(online, other), std::invalid_argument);
}

TEST(RunTraining, ZeroEpisodes) {
  const auto r = run_training(ToyEnv(ToyConfig{}), tiny_config(0), 4);
  EXPECT_TRUE(r.metrics.empty());
  EXPECT_TRUE(r.qnet == q_network({16}, derive_seed(4, "qnet-init")));
}

TEST(RunTraining, DeterministicPerSeed) {
  ToyConfig toy;
  toy.steps = 40;
  const auto a = run_training(ToyEnv(toy), tiny_config(6), 9);
  const auto b = run_training(ToyEnv(toy), tiny_config(6), 9);
  ASSERT_EQ(a.metrics.size(), 6u);
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    EXPECT_EQ(a.metrics[i].ret, b.metrics[i].ret);
    EXPECT_EQ(a.metrics[i].energy_wh, b.metrics[i].energy_wh);
    EXPECT_EQ(a.metrics[i].epsilon, b.metrics[i].epsilon);
    EXPECT_EQ(a.metrics[i].success, b.metrics[i].success);
  }
  EXPECT_TRUE(a.qnet == b.qnet);
  const auto c = run_training(ToyEnv(toy), tiny_config(6), 10);
  EXPECT_FALSE(c.qnet == a.qnet);
}

TEST(RunTraining, SolarEpisodesReportEnergy) {
  AgentConfig cfg = tiny_config(1);
  const auto r = run_training(SolarEnv(ScenarioConfig{}), cfg, 1);
  ASSERT_EQ(r.metrics.size(), 1u);
  EXPECT_GT(r.metrics[0].energy_wh, 0.0);
  EXPECT_EQ(r.metrics[0].epsilon, 1.0);
  EXPECT_LE(r.metrics[0].ret, r.metrics[0].energy_wh);
}
