#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <set>

#include "evcharge/policy.hpp"

using namespace evcharge;

namespace {

Batch random_batch(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> a(0, 3);
  Batch b;
  b.obs.resize(6, n);
  for (Eigen::Index i = 0; i < b.obs.size(); ++i) b.obs.data()[i] = g(rng);
  b.returns.resize(n);
  b.advantages.resize(n);
  for (int j = 0; j < n; ++j) {
    b.actions.push_back(a(rng));
    b.returns(j) = g(rng);
    b.advantages(j) = g(rng);
  }
  return b;
}

// Central differences of `loss` over every parameter of `net`.
template <class F>
Eigen::VectorXd numeric_gradient(Mlp& net, F&& loss) {
  Eigen::VectorXd theta = net.flat();
  Eigen::VectorXd g(theta.size());
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double t = theta(i);
    theta(i) = t + h;
    net.set_flat(theta);
    const double up = loss();
    theta(i) = t - h;
    net.set_flat(theta);
    const double down = loss();
    theta(i) = t;
    g(i) = (up - down) / (2 * h);
  }
  net.set_flat(theta);
  return g;
}

TrainConfig tiny_train() {
  TrainConfig c;
  c.geometries = {HoleShape::kCircle, HoleShape::kSquare};
  c.total_interactions = 3000;
  return c;
}

}  // namespace

TEST(Reward, LinearInSteps) {
  EXPECT_EQ(episode_reward(0, 300), 1.0);
  EXPECT_EQ(episode_reward(300, 300), 0.0);
  EXPECT_DOUBLE_EQ(episode_reward(75, 300), 0.75);
  EXPECT_THROW(episode_reward(301, 300), Error);
  EXPECT_THROW(episode_reward(1, 0), Error);
}

TEST(Return, DiscountedSum) {
  const std::vector<double> r = {1.0, 2.0, 3.0};
  EXPECT_DOUBLE_EQ(discounted_return(r, 0.5), 1.0 + 1.0 + 0.75);
  EXPECT_DOUBLE_EQ(discounted_return(r, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(discounted_return(r, 1.0), 6.0);
  EXPECT_THROW(discounted_return(r, 1.5), Error);
}

TEST(Action, GreedyTieGoesToLowestIndex) {
  EXPECT_EQ(greedy_action(Eigen::Vector4d(0.0, 0.0, 0.0, 0.0)), 0);
  EXPECT_EQ(greedy_action(Eigen::Vector4d(0.0, 2.0, 2.0, 1.0)), 1);
  EXPECT_EQ(greedy_action(Eigen::Vector4d(-1.0, -1.0, -1.0, 5.0)), 3);
}

TEST(Action, SampleFrequenciesMatchSoftmax) {
  const Eigen::Vector4d z(0.3, -1.0, 1.2, 0.0);
  const Eigen::Vector4d p = softmax_columns(z);
  std::mt19937_64 rng(41);
  std::array<int, 4> count{};
  const int n = 200000;
  for (int i = 0; i < n; ++i) ++count[static_cast<std::size_t>(sample_action(z, rng))];
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(count[static_cast<std::size_t>(k)] / double(n), p(k), 0.01);
}

TEST(Softmax, ColumnsSumToOneAndSurviveLargeLogits) {
  Eigen::MatrixXd z(4, 2);
  z << 1000, 0, 1000, 1, -1000, 2, 0, 3;
  const Eigen::MatrixXd p = softmax_columns(z);
  ASSERT_TRUE(p.allFinite());
  EXPECT_NEAR(p.col(0).sum(), 1.0, 1e-15);
  EXPECT_NEAR(p(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(p.col(1).sum(), 1.0, 1e-15);
}

TEST(A2cGradients, MatchFiniteDifferences) {
  std::mt19937_64 rng(42);
  A2cHyper h;
  h.hidden = 8;
  PolicyParams p = PolicyParams::initialize(h, 7);
  // larger output weights so the softmax is far from uniform
  p.actor.weights.back() *= 100.0;
  for (int trial = 0; trial < 3; ++trial) {
    const Batch b = random_batch(rng, 16);
    const A2cGradients g = a2c_gradients(p, b);
    const Eigen::VectorXd na = numeric_gradient(p.actor, [&] { return a2c_loss(p, b).policy; });
    const Eigen::VectorXd nc = numeric_gradient(p.critic, [&] { return a2c_loss(p, b).value; });
    EXPECT_LT((g.actor.flat() - na).norm() / na.norm(), 1e-4);
    EXPECT_LT((g.critic.flat() - nc).norm() / nc.norm(), 1e-4);
  }
}

// One state, four actions, γ = 0: only action 2 pays. Gradient steps on the
// loss must concentrate the policy on it.
TEST(A2cGradients, BanditConvergesToPayingAction) {
  A2cHyper h;
  h.hidden = 8;
  h.gamma = 0.0;
  PolicyParams p = PolicyParams::initialize(h, 3);
  Observation o;
  o << 0.1, -0.2, 0.3, 0.0, 0.05, 0.0;
  Adam opt_a(p.actor.parameter_count(), 0.01);
  Adam opt_c(p.critic.parameter_count(), 0.01);
  std::mt19937_64 rng(4);
  for (int it = 0; it < 400; ++it) {
    Batch b;
    b.obs.resize(6, 16);
    b.returns.resize(16);
    for (int j = 0; j < 16; ++j) {
      b.obs.col(j) = o;
      const int a = sample_action(p.logits(o), rng);
      b.actions.push_back(a);
      b.returns(j) = a == 2 ? 1.0 : 0.0;
    }
    b.advantages = b.returns - p.critic.forward(b.obs).row(0).transpose();
    const A2cGradients g = a2c_gradients(p, b);
    Eigen::VectorXd ta = p.actor.flat(), tc = p.critic.flat();
    opt_a.step(ta, g.actor.flat());
    opt_c.step(tc, g.critic.flat());
    p.actor.set_flat(ta);
    p.critic.set_flat(tc);
  }
  const Eigen::Vector4d pr = softmax_columns(p.logits(o));
  EXPECT_GT(pr(2), 0.9);
  EXPECT_NEAR(p.value(o), pr(2), 0.1);
}

TEST(Train, SameSeedSamePolicy) {
  TrainReport r1, r2;
  const PolicyParams a = a2c_train(tiny_train(), 5, r1);
  const PolicyParams b = a2c_train(tiny_train(), 5, r2);
  EXPECT_EQ(serialize_policy(a), serialize_policy(b));
  EXPECT_EQ(r1.episode_rewards, r2.episode_rewards);
  TrainReport r3;
  EXPECT_NE(serialize_policy(a2c_train(tiny_train(), 6, r3)), serialize_policy(a));
}

TEST(Train, ReportIsConsistent) {
  TrainReport r;
  a2c_train(tiny_train(), 9, r);
  EXPECT_GE(r.interactions, 3000);
  EXPECT_EQ(r.episode_rewards.size(), r.episode_end_interactions.size());
  EXPECT_EQ(r.moving_average.size(), r.episode_rewards.size());
  EXPECT_TRUE(std::is_sorted(r.episode_end_interactions.begin(), r.episode_end_interactions.end()));
  for (double x : r.episode_rewards) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
  EXPECT_FALSE(r.diverged);
}

TEST(Train, HugeLearningRateDivergesOrStaysFinite) {
  TrainConfig c = tiny_train();
  c.hyper.learning_rate = 1e300;
  TrainReport r;
  try {
    const PolicyParams p = a2c_train(c, 1, r);
    EXPECT_TRUE(p.actor.finite());
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDivergence);
    EXPECT_TRUE(r.diverged);
  }
}

TEST(Train, RejectsBadConfig) {
  TrainConfig c = tiny_train();
  c.geometries.clear();
  TrainReport r;
  EXPECT_THROW(a2c_train(c, 1, r), Error);
  c = tiny_train();
  c.hyper.gamma = 1.5;
  EXPECT_THROW(a2c_train(c, 1, r), Error);
}

TEST(MovingAverage, WindowedMean) {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  const auto m = moving_average(x, 2);
  EXPECT_EQ(m, (std::vector<double>{1.0, 1.5, 2.5, 3.5, 4.5}));
}

TEST(Serialization, RoundTripIsExact) {
  TrainReport r;
  PolicyParams p = a2c_train(tiny_train(), 2, r);
  const std::string s = serialize_policy(p);
  const PolicyParams q = deserialize_policy(s);
  EXPECT_EQ(serialize_policy(q), s);
  EXPECT_EQ(q.geometries, p.geometries);
  EXPECT_EQ(q.actor.flat(), p.actor.flat());
  EXPECT_EQ(q.critic.flat(), p.critic.flat());
  const auto path = (std::filesystem::temp_directory_path() / "evcharge_policy_test.bin").string();
  save_policy(p, path);
  EXPECT_EQ(serialize_policy(load_policy(path)), s);
  std::remove(path.c_str());
}

TEST(Serialization, RejectsCorruptFiles) {
  const PolicyParams p = PolicyParams::initialize(A2cHyper{}, 1);
  const std::string s = serialize_policy(p);
  const auto kind = [](const std::string& data) {
    try {
      deserialize_policy(data);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kInvalidArgument;
  };
  EXPECT_EQ(kind(""), ErrorKind::kIo);
  EXPECT_EQ(kind("XXXXXXXX" + s.substr(8)), ErrorKind::kIo);
  EXPECT_EQ(kind(s.substr(0, s.size() - 3)), ErrorKind::kIo);
  EXPECT_EQ(kind(s + "x"), ErrorKind::kIo);
  std::string v = s;
  v[8] = 9;
  EXPECT_EQ(kind(v), ErrorKind::kIo);
  EXPECT_THROW(load_policy("/nonexistent/policy.bin"), Error);
}

TEST(Spiral, MovesAreUnitStepsCoveringTheDisc) {
  const double step = 0.001;
  const auto moves = spiral_moves(0.001, 0.006, step);
  std::set<std::pair<int, int>> seen{{0, 0}};
  int x = 0, y = 0;
  for (PlanarAction a : moves) {
    const Vec2 d = action_direction(a);
    x += static_cast<int>(std::lround(d.x()));
    y += static_cast<int>(std::lround(d.y()));
    seen.insert({x, y});
    EXPECT_LE(std::hypot(x, y), 6.0 + 1.0);
  }
  int inside = 0, covered = 0;
  for (int i = -5; i <= 5; ++i)
    for (int j = -5; j <= 5; ++j) {
      if (std::hypot(i, j) > 5.0) continue;
      ++inside;
      covered += seen.count({i, j}) ? 1 : 0;
    }
  EXPECT_GE(covered, inside * 9 / 10) << covered << " / " << inside;
  EXPECT_THROW(spiral_moves(0.0, 0.01), Error);
}

TEST(Baselines, SpiralFindsCentredHoleImmediately) {
  InsertionEnv env;
  const InsertOutcome o = spiral_search(env, Vec2::Zero(), 300);
  EXPECT_TRUE(o.success);
  EXPECT_EQ(o.steps, 0);
}

TEST(Baselines, RandomSearchIsSeeded) {
  InsertionEnv e1, e2;
  std::mt19937_64 r1(3), r2(3);
  const InsertOutcome a = random_search(e1, Vec2(0.003, -0.002), 100, r1);
  const InsertOutcome b = random_search(e2, Vec2(0.003, -0.002), 100, r2);
  EXPECT_EQ(a.steps, b.steps);
  EXPECT_EQ(a.success, b.success);
  EXPECT_LE(a.steps, 100);
}

TEST(Action, GreedyIgnoresLogitShift) {
  std::mt19937_64 rng(43);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector4d z(g(rng), g(rng), g(rng), g(rng));
    EXPECT_EQ(greedy_action(z), greedy_action((z.array() + 3.0 * g(rng)).matrix()));
  }
}

TEST(Reward, StrictlyDecreasingInSteps) {
  for (int t = 0; t < 300; ++t) EXPECT_GT(episode_reward(t, 300), episode_reward(t + 1, 300));
}

// Offsets the spiral path passes within half a pitch of are found before the
// radius budget runs out.
TEST(Baselines, SpiralFindsHoleNearItsPath) {
  const auto moves = spiral_moves(0.001, 0.01);
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> jitter(-0.0004, 0.0004);
  std::vector<Vec2> cells{Vec2::Zero()};
  for (PlanarAction a : moves) cells.push_back(cells.back() + 0.001 * action_direction(a));
  std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
  for (int i = 0; i < 40; ++i) {
    const Vec2 c = cells[pick(rng)];
    if (c.norm() > 0.008) continue;
    const Vec2 offset = -c + Vec2(jitter(rng), jitter(rng));
    InsertionEnv env;
    const InsertOutcome o = spiral_search(env, offset, 100000);
    EXPECT_TRUE(o.success) << offset.transpose();
  }
}
