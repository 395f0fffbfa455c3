#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "evcharge/episode_log.hpp"
#include "evcharge/error.hpp"
#include "evcharge/hole_geometry.hpp"
#include "evcharge/simworld.hpp"

namespace evcharge {

using Observation = Eigen::Matrix<double, 6, 1>;

struct ObsScales {
  double force = 20.0;   // N
  double torque = 2.0;   // N·m
};

inline Observation make_observation(const Wrench& w, const ObsScales& s) {
  Observation o;
  o << w.force / s.force, w.torque / s.torque;
  return o;
}

inline double episode_reward(int steps, int t_max) {
  require(t_max > 0, ErrorKind::kInvalidArgument, "T_max must be positive");
  require(steps >= 0 && steps <= t_max, ErrorKind::kInvalidArgument, "step count outside [0, T_max]");
  return 1.0 - static_cast<double>(steps) / static_cast<double>(t_max);
}

inline double discounted_return(std::span<const double> rewards, double gamma) {
  require(gamma >= 0.0 && gamma <= 1.0, ErrorKind::kInvalidArgument, "gamma must lie in [0, 1]");
  double r = 0.0;
  double g = 1.0;
  for (double x : rewards) {
    r += g * x;
    g *= gamma;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Networks

/// Fully connected net with tanh hidden layers and a linear output layer.
/// Batches are column-major: one sample per column.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::vector<int>& sizes, std::mt19937_64& rng, double out_scale = 1.0) {
    require(sizes.size() >= 2, ErrorKind::kInvalidArgument, "network needs at least two layer sizes");
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      const int in = sizes[l], out = sizes[l + 1];
      const double lim = std::sqrt(6.0 / (in + out)) * (l + 2 == sizes.size() ? out_scale : 1.0);
      std::uniform_real_distribution<double> u(-lim, lim);
      Eigen::MatrixXd w(out, in);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
      weights.push_back(w);
      biases.push_back(Eigen::VectorXd::Zero(out));
    }
  }

  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  std::size_t layers() const { return weights.size(); }
  int input_size() const { return static_cast<int>(weights.front().cols()); }
  int output_size() const { return static_cast<int>(weights.back().rows()); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layers(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  /// Activations of every layer; front() is the input, back() the output.
  std::vector<Eigen::MatrixXd> forward_all(const Eigen::MatrixXd& x) const {
    std::vector<Eigen::MatrixXd> a{x};
    for (std::size_t l = 0; l < layers(); ++l) {
      Eigen::MatrixXd z = (weights[l] * a.back()).colwise() + biases[l];
      if (l + 1 < layers()) z = z.array().tanh().matrix();
      a.push_back(std::move(z));
    }
    return a;
  }
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const { return forward_all(x).back(); }

  /// Gradient of a scalar loss given dL/d(output) for the batch.
  Mlp backward(const std::vector<Eigen::MatrixXd>& acts, Eigen::MatrixXd dz) const {
    Mlp g;
    g.weights.resize(layers());
    g.biases.resize(layers());
    for (std::size_t l = layers(); l-- > 0;) {
      g.weights[l] = dz * acts[l].transpose();
      g.biases[l] = dz.rowwise().sum();
      if (l > 0) {
        const Eigen::MatrixXd da = weights[l].transpose() * dz;
        dz = (da.array() * (1.0 - acts[l].array().square())).matrix();
      }
    }
    return g;
  }

  Eigen::VectorXd flat() const {
    Eigen::VectorXd v(parameter_count());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < layers(); ++l) {
      v.segment(k, weights[l].size()) = Eigen::Map<const Eigen::VectorXd>(weights[l].data(), weights[l].size());
      k += weights[l].size();
      v.segment(k, biases[l].size()) = biases[l];
      k += biases[l].size();
    }
    return v;
  }

  void set_flat(const Eigen::VectorXd& v) {
    require(static_cast<std::size_t>(v.size()) == parameter_count(), ErrorKind::kInvalidArgument,
            "parameter vector has the wrong length");
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < layers(); ++l) {
      Eigen::Map<Eigen::VectorXd>(weights[l].data(), weights[l].size()) = v.segment(k, weights[l].size());
      k += weights[l].size();
      biases[l] = v.segment(k, biases[l].size());
      k += biases[l].size();
    }
  }

  bool finite() const {
    for (std::size_t l = 0; l < layers(); ++l)
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return true;
  }
};

inline Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = logits;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    const double m = p.col(j).maxCoeff();
    p.col(j) = (p.col(j).array() - m).exp().matrix();
    p.col(j) /= p.col(j).sum();
  }
  return p;
}

struct A2cHyper {
  double gamma = 0.99;
  double learning_rate = 3e-4;
  double entropy_coef = 0.01;
  int rollout = 32;
  int hidden = 64;
  double max_grad_norm = 0.5;

  void validate() const {
    require(gamma >= 0.0 && gamma <= 1.0, ErrorKind::kConfig, "gamma must lie in [0, 1]");
    require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorKind::kConfig, "learning rate must be positive");
    require(entropy_coef >= 0.0, ErrorKind::kConfig, "entropy coefficient must be non-negative");
    require(rollout >= 1 && hidden >= 1, ErrorKind::kConfig, "rollout and hidden size must be positive");
    require(max_grad_norm > 0.0, ErrorKind::kConfig, "gradient clip must be positive");
  }
};

struct PolicyParams {
  Mlp actor;    // 6 -> hidden -> hidden -> 4 logits
  Mlp critic;   // 6 -> hidden -> hidden -> 1
  ObsScales scales{};
  std::vector<HoleShape> geometries;
  A2cHyper hyper{};

  static PolicyParams initialize(const A2cHyper& h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    PolicyParams p;
    p.hyper = h;
    p.actor = Mlp({6, h.hidden, h.hidden, 4}, rng, 0.01);
    p.critic = Mlp({6, h.hidden, h.hidden, 1}, rng, 1.0);
    return p;
  }

  Eigen::Vector4d logits(const Observation& o) const { return actor.forward(o); }
  double value(const Observation& o) const { return critic.forward(o)(0, 0); }
};

enum class ActMode { kSample, kGreedy };

/// Lowest index wins ties in greedy mode.
inline int greedy_action(const Eigen::Vector4d& logits) {
  int best = 0;
  for (int i = 1; i < 4; ++i)
    if (logits(i) > logits(best)) best = i;
  return best;
}

inline int sample_action(const Eigen::Vector4d& logits, std::mt19937_64& rng) {
  const Eigen::Vector4d p = softmax_columns(logits);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double c = 0.0;
  for (int i = 0; i < 3; ++i) {
    c += p(i);
    if (u < c) return i;
  }
  return 3;
}

inline PlanarAction policy_act(const PolicyParams& params, const Observation& obs, ActMode mode, std::mt19937_64& rng) {
  require(obs.allFinite(), ErrorKind::kInvalidArgument, "observation is not finite");
  const Eigen::Vector4d z = params.logits(obs);
  return static_cast<PlanarAction>(mode == ActMode::kGreedy ? greedy_action(z) : sample_action(z, rng));
}

// ---------------------------------------------------------------------------
// A2C loss and gradients

struct Batch {
  Eigen::MatrixXd obs;           // 6 x N
  std::vector<int> actions;
  Eigen::VectorXd returns;
  Eigen::VectorXd advantages;    // held fixed while differentiating
};

struct A2cLoss {
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double total() const { return policy + value; }
};

/// Policy loss -mean(A log π(a|s)) - β mean(H), value loss 0.5 mean((V-R)²).
inline A2cLoss a2c_loss(const PolicyParams& p, const Batch& b) {
  const Eigen::Index n = b.obs.cols();
  const Eigen::MatrixXd prob = softmax_columns(p.actor.forward(b.obs));
  const Eigen::MatrixXd v = p.critic.forward(b.obs);
  A2cLoss l;
  for (Eigen::Index j = 0; j < n; ++j) {
    l.policy -= b.advantages(j) * std::log(prob(b.actions[j], j));
    double h = 0.0;
    for (int k = 0; k < 4; ++k) h -= prob(k, j) * std::log(prob(k, j));
    l.entropy += h;
    l.value += 0.5 * (v(0, j) - b.returns(j)) * (v(0, j) - b.returns(j));
  }
  l.policy /= n;
  l.entropy /= n;
  l.value /= n;
  l.policy -= p.hyper.entropy_coef * l.entropy;
  return l;
}

struct A2cGradients {
  Mlp actor;
  Mlp critic;
};

inline A2cGradients a2c_gradients(const PolicyParams& p, const Batch& b) {
  const Eigen::Index n = b.obs.cols();
  const auto aa = p.actor.forward_all(b.obs);
  const Eigen::MatrixXd prob = softmax_columns(aa.back());
  Eigen::MatrixXd dz = prob;
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::Vector4d pg = prob.col(j);
    pg(b.actions[j]) -= 1.0;
    pg *= b.advantages(j);
    // d(-βH)/dz_k = β p_k (log p_k + H)
    double h = 0.0;
    for (int k = 0; k < 4; ++k) h -= prob(k, j) * std::log(prob(k, j));
    Eigen::Vector4d ent;
    for (int k = 0; k < 4; ++k) ent(k) = prob(k, j) * (std::log(prob(k, j)) + h);
    dz.col(j) = (pg + p.hyper.entropy_coef * ent) / static_cast<double>(n);
  }
  const auto ca = p.critic.forward_all(b.obs);
  Eigen::MatrixXd dv = (ca.back() - b.returns.transpose()) / static_cast<double>(n);
  return A2cGradients{p.actor.backward(aa, dz), p.critic.backward(ca, dv)};
}

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double lr) : lr_(lr), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& g) {
    ++t_;
    m_ = b1_ * m_ + (1 - b1_) * g;
    v_ = b2_ * v_ + (1 - b2_) * g.cwiseProduct(g);
    const double c1 = 1 - std::pow(b1_, t_);
    const double c2 = 1 - std::pow(b2_, t_);
    theta.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

 private:
  double lr_ = 1e-3, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  int t_ = 0;
  Eigen::VectorXd m_, v_;
};

// ---------------------------------------------------------------------------
// Insertion episodes

struct InsertOutcome {
  bool success = false;
  int steps = 0;
  double time = 0.0;      // simulated seconds
  Vec2 initial_offset = Vec2::Zero();
};

inline Pose peg_pose(const InsertionEnv& env) {
  const auto& s = env.state();
  return Pose(Rotation::identity(), Vec3(s.offset.x(), s.offset.y(), s.height), FrameId::kPort,
              FrameId::kEndEffector);
}

/// Runs `choose` until success, workspace exit, or the step budget.
template <class Choose>
InsertOutcome run_insert_episode(InsertionEnv& env, const Vec2& offset, int budget, Choose&& choose,
                                 EpisodeLog* log = nullptr) {
  InsertOutcome out;
  out.initial_offset = offset;
  env.reset(offset);
  while (!env.done() && env.state().steps < budget) {
    const std::optional<PlanarAction> a = choose(env);
    if (!a) break;
    env.planar_step(*a);
    if (log) log->add(env.state().time, "insert", peg_pose(env), env.last_wrench(), std::string(to_string(*a)));
  }
  out.success = env.state().success;
  out.steps = env.state().steps;
  out.time = env.state().time;
  return out;
}

inline InsertOutcome policy_insert(InsertionEnv& env, const PolicyParams& p, const Vec2& offset, int budget,
                                   ActMode mode, std::mt19937_64& rng, EpisodeLog* log = nullptr) {
  return run_insert_episode(
      env, offset, budget,
      [&](const InsertionEnv& e) -> std::optional<PlanarAction> {
        return policy_act(p, make_observation(e.averaged_wrench(), p.scales), mode, rng);
      },
      log);
}

inline InsertOutcome random_search(InsertionEnv& env, const Vec2& offset, int budget, std::mt19937_64& rng,
                                   EpisodeLog* log = nullptr) {
  std::uniform_int_distribution<int> pick(0, 3);
  return run_insert_episode(
      env, offset, budget, [&](const InsertionEnv&) -> std::optional<PlanarAction> { return static_cast<PlanarAction>(pick(rng)); },
      log);
}

/// Lattice moves tracing an Archimedean spiral r = pitch·θ/2π from the start
/// point out to `max_radius`.
inline std::vector<PlanarAction> spiral_moves(double pitch, double max_radius, double step = 0.001) {
  require(pitch > 0.0 && max_radius > 0.0 && step > 0.0, ErrorKind::kInvalidArgument, "spiral sizes must be positive");
  std::vector<PlanarAction> moves;
  Eigen::Vector2i cur(0, 0);
  const double ds = 0.05 * step;
  double theta = 0.0;
  while (true) {
    const double r = pitch * theta / (2 * kPi);
    if (r > max_radius) break;
    const Eigen::Vector2i cell(static_cast<int>(std::lround(r * std::cos(theta) / step)),
                               static_cast<int>(std::lround(r * std::sin(theta) / step)));
    while (cur.x() != cell.x()) {
      moves.push_back(cell.x() > cur.x() ? PlanarAction::kPlusX : PlanarAction::kMinusX);
      cur.x() += cell.x() > cur.x() ? 1 : -1;
    }
    while (cur.y() != cell.y()) {
      moves.push_back(cell.y() > cur.y() ? PlanarAction::kPlusY : PlanarAction::kMinusY);
      cur.y() += cell.y() > cur.y() ? 1 : -1;
    }
    // arc-length increment of ds, with a floor near the centre
    theta += ds / std::max(std::hypot(r, pitch / (2 * kPi)), 1e-9);
  }
  return moves;
}

inline InsertOutcome spiral_search(InsertionEnv& env, const Vec2& offset, int budget, double pitch = 0.001,
                                   double max_radius = 0.01, EpisodeLog* log = nullptr) {
  const std::vector<PlanarAction> path = spiral_moves(pitch, max_radius, env.config().step_size);
  std::size_t i = 0;
  return run_insert_episode(
      env, offset, budget,
      [&](const InsertionEnv&) -> std::optional<PlanarAction> {
        if (i >= path.size()) return std::nullopt;
        return path[i++];
      },
      log);
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  A2cHyper hyper{};
  std::vector<HoleShape> geometries{kAllHoleShapes.begin(), kAllHoleShapes.end()};
  int envs_per_geometry = 1;
  long total_interactions = 300000;
  int t_max = 300;
  double offset_bound = 0.005;
  int ma_window = 50;
  InsertionConfig insertion{};

  void validate() const {
    hyper.validate();
    require(!geometries.empty() && envs_per_geometry >= 1, ErrorKind::kConfig, "need at least one environment");
    require(total_interactions >= 1 && t_max >= 1 && ma_window >= 1, ErrorKind::kConfig, "invalid training budget");
    require(offset_bound >= 0.0 && offset_bound < insertion.workspace_half, ErrorKind::kConfig,
            "offset bound must lie inside the workspace");
  }
};

struct TrainReport {
  std::vector<double> episode_rewards;
  std::vector<long> episode_end_interactions;
  std::vector<double> moving_average;
  long interactions = 0;
  int updates = 0;
  double wall_seconds = 0.0;
  bool diverged = false;
};

inline std::vector<double> moving_average(std::span<const double> x, int window) {
  std::vector<double> out;
  out.reserve(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sum += x[i];
    if (i >= static_cast<std::size_t>(window)) sum -= x[i - window];
    out.push_back(sum / static_cast<double>(std::min<std::size_t>(i + 1, window)));
  }
  return out;
}

inline Vec2 sample_offset(double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  const double x = u(rng);
  return Vec2(x, u(rng));
}

/// Synchronous advantage actor-critic over one environment per (geometry,
/// copy). Rollouts are collected environment by environment and merged into a
/// single batch per update, so results do not depend on scheduling.
inline PolicyParams a2c_train(const TrainConfig& cfg, std::uint64_t seed, TrainReport& report) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  report = TrainReport{};
  PolicyParams p = PolicyParams::initialize(cfg.hyper, seed);
  p.geometries = cfg.geometries;

  struct Slot {
    InsertionEnv env;
    std::mt19937_64 rng;
    int t = 0;
  };
  std::vector<Slot> slots;
  for (int c = 0; c < cfg.envs_per_geometry; ++c) {
    for (std::size_t g = 0; g < cfg.geometries.size(); ++g) {
      InsertionConfig ic = cfg.insertion;
      ic.hole = HoleGeometry(cfg.geometries[g], ic.hole.inradius(), ic.hole.depth(), ic.hole.chamfer());
      const std::uint64_t k = slots.size() + 1;
      slots.push_back(Slot{InsertionEnv(ic), std::mt19937_64(seed + 0x9E3779B97F4A7C15ULL * k), 0});
    }
  }
  const auto finish_episode = [&](double r) {
    report.episode_rewards.push_back(r);
    report.episode_end_interactions.push_back(report.interactions);
  };
  const auto reset = [&](Slot& s) {
    // offsets that drop straight into the hole while settling teach nothing
    for (int tries = 0; tries < 1000; ++tries) {
      s.env.reset(sample_offset(cfg.offset_bound, s.rng));
      s.t = 0;
      if (!s.env.done()) return;
    }
    fail(ErrorKind::kConfig, "every sampled offset succeeds without a move");
  };
  for (auto& s : slots) reset(s);

  Adam actor_opt(p.actor.parameter_count(), cfg.hyper.learning_rate);
  Adam critic_opt(p.critic.parameter_count(), cfg.hyper.learning_rate);
  const int roll = cfg.hyper.rollout;
  const auto n_total = static_cast<Eigen::Index>(roll * slots.size());

  while (report.interactions < cfg.total_interactions) {
    Batch b;
    b.obs.resize(6, n_total);
    b.actions.resize(n_total);
    b.returns.resize(n_total);
    Eigen::Index col = 0;
    for (auto& s : slots) {
      std::vector<double> rewards;
      std::vector<char> terminal;
      const Eigen::Index first = col;
      for (int t = 0; t < roll; ++t) {
        const Observation o = make_observation(s.env.averaged_wrench(), p.scales);
        const int a = sample_action(p.logits(o), s.rng);
        b.obs.col(col) = o;
        b.actions[col] = a;
        ++col;
        s.env.planar_step(static_cast<PlanarAction>(a));
        ++s.t;
        ++report.interactions;
        double r = 0.0;
        bool term = false;
        if (s.env.state().success) {
          r = episode_reward(s.t, cfg.t_max);
          term = true;
        } else if (s.env.done() || s.t >= cfg.t_max) {
          term = true;
        }
        rewards.push_back(r);
        terminal.push_back(term);
        if (term) {
          finish_episode(r);
          reset(s);
        }
      }
      double ret = terminal.back() ? 0.0 : p.value(make_observation(s.env.averaged_wrench(), p.scales));
      for (int t = roll - 1; t >= 0; --t) {
        if (terminal[t]) ret = 0.0;
        ret = rewards[t] + cfg.hyper.gamma * ret;
        b.returns(first + t) = ret;
      }
    }
    b.advantages = b.returns - p.critic.forward(b.obs).row(0).transpose();

    const A2cGradients g = a2c_gradients(p, b);
    Eigen::VectorXd ga = g.actor.flat();
    Eigen::VectorXd gc = g.critic.flat();
    if (!ga.allFinite() || !gc.allFinite() || !std::isfinite(a2c_loss(p, b).total())) {
      report.diverged = true;
      report.moving_average = moving_average(report.episode_rewards, cfg.ma_window);
      report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
      fail(ErrorKind::kDivergence, "training loss became non-finite");
    }
    for (Eigen::VectorXd* gv : {&ga, &gc}) {
      const double norm = gv->norm();
      if (norm > cfg.hyper.max_grad_norm) *gv *= cfg.hyper.max_grad_norm / norm;
    }
    Eigen::VectorXd ta = p.actor.flat();
    Eigen::VectorXd tc = p.critic.flat();
    actor_opt.step(ta, ga);
    critic_opt.step(tc, gc);
    p.actor.set_flat(ta);
    p.critic.set_flat(tc);
    ++report.updates;
  }
  report.moving_average = moving_average(report.episode_rewards, cfg.ma_window);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return p;
}

// ---------------------------------------------------------------------------
// Serialization: little-endian, versioned

inline constexpr std::array<char, 8> kPolicyMagic = {'E', 'V', 'C', 'P', 'O', 'L', 'I', 'C'};
inline constexpr std::uint32_t kPolicyVersion = 1;

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_f64(std::string& s, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string data) : d_(std::move(data)) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(d_[p_++])) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(d_[p_++])) << (8 * i);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = d_.substr(p_, n);
    p_ += n;
    return s;
  }
  bool at_end() const { return p_ == d_.size(); }

 private:
  void need(std::size_t n) const {
    if (d_.size() - p_ < n) fail(ErrorKind::kIo, "policy file is truncated");
  }
  std::string d_;
  std::size_t p_ = 0;
};

inline void put_mlp(std::string& s, const Mlp& m) {
  put_u32(s, static_cast<std::uint32_t>(m.layers()));
  for (std::size_t l = 0; l < m.layers(); ++l) {
    const Eigen::MatrixXd& w = m.weights[l];
    put_u32(s, static_cast<std::uint32_t>(w.rows()));
    put_u32(s, static_cast<std::uint32_t>(w.cols()));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) put_f64(s, w(i, j));
    for (Eigen::Index i = 0; i < w.rows(); ++i) put_f64(s, m.biases[l](i));
  }
}

inline Mlp get_mlp(Reader& r) {
  Mlp m;
  const std::uint32_t n = r.u32();
  if (n == 0 || n > 16) fail(ErrorKind::kIo, "policy file has an implausible layer count");
  for (std::uint32_t l = 0; l < n; ++l) {
    const std::uint32_t rows = r.u32(), cols = r.u32();
    if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096) fail(ErrorKind::kIo, "policy file has bad layer shape");
    if (l > 0 && static_cast<Eigen::Index>(cols) != m.weights.back().rows())
      fail(ErrorKind::kIo, "policy file layers do not chain");
    Eigen::MatrixXd w(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i)
      for (std::uint32_t j = 0; j < cols; ++j) w(i, j) = r.f64();
    Eigen::VectorXd b(rows);
    for (std::uint32_t i = 0; i < rows; ++i) b(i) = r.f64();
    m.weights.push_back(w);
    m.biases.push_back(b);
  }
  return m;
}

}  // namespace detail

inline std::string serialize_policy(const PolicyParams& p) {
  std::string s(kPolicyMagic.begin(), kPolicyMagic.end());
  detail::put_u32(s, kPolicyVersion);
  detail::put_f64(s, p.scales.force);
  detail::put_f64(s, p.scales.torque);
  detail::put_f64(s, p.hyper.gamma);
  detail::put_f64(s, p.hyper.learning_rate);
  detail::put_f64(s, p.hyper.entropy_coef);
  detail::put_u32(s, static_cast<std::uint32_t>(p.hyper.rollout));
  detail::put_u32(s, static_cast<std::uint32_t>(p.geometries.size()));
  for (auto g : p.geometries) {
    const auto name = to_string(g);
    detail::put_u32(s, static_cast<std::uint32_t>(name.size()));
    s.append(name);
  }
  detail::put_mlp(s, p.actor);
  detail::put_mlp(s, p.critic);
  return s;
}

inline PolicyParams deserialize_policy(const std::string& data) {
  detail::Reader r(data);
  if (r.bytes(kPolicyMagic.size()) != std::string(kPolicyMagic.begin(), kPolicyMagic.end()))
    fail(ErrorKind::kIo, "not a policy file");
  const std::uint32_t version = r.u32();
  if (version != kPolicyVersion) fail(ErrorKind::kIo, "unsupported policy file version " + std::to_string(version));
  PolicyParams p;
  p.scales.force = r.f64();
  p.scales.torque = r.f64();
  p.hyper.gamma = r.f64();
  p.hyper.learning_rate = r.f64();
  p.hyper.entropy_coef = r.f64();
  p.hyper.rollout = static_cast<int>(r.u32());
  const std::uint32_t ng = r.u32();
  if (ng > 64) fail(ErrorKind::kIo, "policy file has an implausible geometry count");
  for (std::uint32_t i = 0; i < ng; ++i) {
    const std::uint32_t len = r.u32();
    if (len > 64) fail(ErrorKind::kIo, "policy file has a bad geometry name");
    const std::string name = r.bytes(len);
    try {
      p.geometries.push_back(hole_shape_from_string(name));
    } catch (const Error&) {
      fail(ErrorKind::kIo, "policy file names unknown geometry '" + name + "'");
    }
  }
  p.actor = detail::get_mlp(r);
  p.critic = detail::get_mlp(r);
  if (!r.at_end()) fail(ErrorKind::kIo, "policy file has trailing bytes");
  if (p.actor.input_size() != 6 || p.actor.output_size() != 4 || p.critic.input_size() != 6 ||
      p.critic.output_size() != 1)
    fail(ErrorKind::kIo, "policy networks have the wrong input or output size");
  if (!(p.scales.force > 0.0) || !(p.scales.torque > 0.0) || !p.actor.finite() || !p.critic.finite())
    fail(ErrorKind::kIo, "policy file holds invalid values");
  p.hyper.hidden = static_cast<int>(p.actor.weights.front().rows());
  return p;
}

inline void save_policy(const PolicyParams& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path);
  const std::string s = serialize_policy(p);
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!out) fail(ErrorKind::kIo, "failed writing " + path);
}

inline PolicyParams load_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot read policy file " + path);
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_policy(data);
}

}  // namespace evcharge
