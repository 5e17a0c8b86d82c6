#pragma once

// DQN controller: epsilon-greedy policy, FIFO replay, hard-synced target
// network, squared TD error on the taken action.

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "suntrack/environment.hpp"
#include "suntrack/neural.hpp"
#include "suntrack/random.hpp"

namespace suntrack {

struct AgentConfig {
  double gamma = 0.95;
  double eps_start = 1.0;
  double eps_end = 0.05;
  long decay_steps = 10000;
  std::size_t buffer_capacity = 20000;
  std::size_t batch_size = 64;
  long target_sync_every = 500;
  double learning_rate = 1e-3;
  double action_delta_rad = 0.02;
  std::vector<int> hidden_sizes{64, 64};
  int episodes = 300;

  void validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be within [0, 1)");
    if (!(eps_start >= 0.0 && eps_start <= 1.0)) throw std::invalid_argument("eps_start must be within [0, 1]");
    if (!(eps_end >= 0.0 && eps_end <= 1.0)) throw std::invalid_argument("eps_end must be within [0, 1]");
    if (decay_steps < 0) throw std::invalid_argument("decay_steps must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (buffer_capacity < batch_size) throw std::invalid_argument("buffer_capacity must be >= batch_size");
    if (target_sync_every < 1) throw std::invalid_argument("target_sync_every must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    if (!(action_delta_rad > 0.0)) throw std::invalid_argument("action_delta_rad must be > 0");
    for (int h : hidden_sizes) {
      if (h < 1) throw std::invalid_argument("hidden_sizes entries must be >= 1");
    }
    if (episodes < 0) throw std::invalid_argument("episodes must be >= 0");
  }

  // Linear from eps_start to eps_end over decay_steps, then flat.
  double epsilon(long step) const {
    if (step >= decay_steps) return eps_end;
    return eps_start + (eps_end - eps_start) * static_cast<double>(step) / static_cast<double>(decay_steps);
  }

  bool operator==(const AgentConfig&) const = default;
};

inline Mlp q_network(const std::vector<int>& hidden, std::uint64_t seed) {
  std::vector<int> sizes{kStateSize};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(kNumActions);
  return mlp_new(sizes, seed);
}

inline int argmax_lowest(const Vector& q) {
  int best = 0;
  for (int i = 1; i < q.size(); ++i) {
    if (q[i] > q[best]) best = i;
  }
  return best;
}

inline int select_action(const Mlp& qnet, const AgentState& s, double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must be within [0, 1]");
  if (epsilon > 0.0 && rng.uniform() < epsilon) return static_cast<int>(rng.index(kNumActions));
  return argmax_lowest(forward(qnet, s));
}

struct Transition {
  AgentState s;
  int a = 0;
  double r = 0.0;
  AgentState s_next;
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ < 1) throw std::invalid_argument("buffer capacity must be >= 1");
    items_.reserve(std::min<std::size_t>(capacity_, 1 << 16));
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }

  void push(const Transition& t) {
    check_action(t.a);
    if (!std::isfinite(t.r)) throw std::invalid_argument("transition reward must be finite");
    if (items_.size() < capacity_) {
      items_.push_back(t);
    } else {
      items_[inserted_ % capacity_] = t;
    }
    ++inserted_;
  }

  // i-th oldest entry.
  const Transition& at(std::size_t i) const {
    if (i >= items_.size()) throw std::out_of_range("replay index out of range");
    const std::size_t head = items_.size() < capacity_ ? 0 : inserted_ % capacity_;
    return items_[(head + i) % items_.size()];
  }

  std::vector<Transition> sample(std::size_t batch_size, Rng& rng) const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (items_.size() < batch_size) {
      throw std::logic_error("replay buffer holds " + std::to_string(items_.size()) +
                             " transitions, fewer than batch_size " + std::to_string(batch_size));
    }
    std::vector<Transition> out;
    out.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) out.push_back(items_[rng.index(items_.size())]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
  std::uint64_t inserted_ = 0;
};

inline std::vector<double> td_targets(const std::vector<Transition>& batch, const Mlp& target_net,
                                      double gamma) {
  if (batch.empty()) throw std::invalid_argument("td_targets needs a nonempty batch");
  std::vector<double> y;
  y.reserve(batch.size());
  for (const auto& t : batch) {
    y.push_back(t.done ? t.r : t.r + gamma * forward(target_net, t.s_next).maxCoeff());
  }
  return y;
}

// Mean squared TD error and its gradient; only the taken action's output
// carries gradient.
inline double td_loss(const Mlp& qnet, const std::vector<Transition>& batch, const std::vector<double>& y,
                      Gradients* grads) {
  const double inv = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vector q = forward(qnet, batch[i].s);
    const double diff = q[batch[i].a] - y[i];
    loss += diff * diff * inv;
    if (grads) {
      Vector d = Vector::Zero(kNumActions);
      d[batch[i].a] = 2.0 * diff * inv;
      backward_accumulate(qnet, batch[i].s, d, *grads);
    }
  }
  return loss;
}

// One optimizer step on the batch; returns the pre-step loss.
inline double train_step(Mlp& qnet, const Mlp& target_net, OptimState& opt,
                         const std::vector<Transition>& batch, double gamma) {
  if (batch.empty()) throw std::invalid_argument("train_step needs a nonempty batch");
  const std::vector<double> y = td_targets(batch, target_net, gamma);
  Gradients g = qnet.zero_gradients();
  const double loss = td_loss(qnet, batch, y, &g);
  step(qnet, g, opt);
  return loss;
}

inline void sync_target(const Mlp& qnet, Mlp& target_net) {
  if (qnet.layer_sizes() != target_net.layer_sizes()) {
    throw std::invalid_argument("target network shape differs from the online network");
  }
  target_net = qnet;
}

struct EpisodeMetrics {
  int episode = 0;
  double ret = 0.0;
  bool success = false;
  double energy_wh = 0.0;
  double epsilon = 0.0;
};

struct AgentTrainResult {
  Mlp qnet;
  std::vector<EpisodeMetrics> metrics;
};

inline constexpr double kSuccessErrorRad = 5.0 * kDegToRad;

namespace detail {


template <class Env>
struct EnvStateOf;
template <>
struct EnvStateOf<SolarEnv> {
  using type = EnvState;
};
template <>
struct EnvStateOf<ToyEnv> {
  using type = ToyState;
};

// Accumulates the success statistic: mean alignment error over steps with
// the sun up.
struct SuccessTally {
  double sum = 0.0;
  int count = 0;
  void add(const StepResult& r, bool sun_up) {
    if (!sun_up) return;
    sum += r.info.alignment_error_rad;
    ++count;
  }
  bool success() const { return count > 0 && sum / count < kSuccessErrorRad; }
};

inline bool sun_up(const EnvState& st) { return st.sun.elevation_deg > 0.0; }
inline bool sun_up(const ToyState&) { return true; }

}  // namespace detail

// Standard DQN loop. Episode e uses environment seed derive_seed(seed,
// "env-episode", e); exploration and replay sampling share one stream.
template <class Env>
AgentTrainResult run_training(Env env, const AgentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  env.set_action_delta(cfg.action_delta_rad);
  AgentTrainResult out{q_network(cfg.hidden_sizes, derive_seed(seed, "qnet-init")), {}};
  Mlp target = out.qnet;
  OptimState opt = OptimState::adam_for(out.qnet, cfg.learning_rate);
  ReplayBuffer buffer(cfg.buffer_capacity);
  Rng rng(derive_seed(seed, "agent"));
  long total_steps = 0, train_steps = 0;
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    typename detail::EnvStateOf<Env>::type st;
    AgentState s = env.reset(st, derive_seed(seed, "env-episode", static_cast<std::uint64_t>(ep)));
    EpisodeMetrics m;
    m.episode = ep;
    m.epsilon = cfg.epsilon(total_steps);
    detail::SuccessTally tally;
    bool done = false;
    while (!done) {
      const int a = select_action(out.qnet, s, cfg.epsilon(total_steps), rng);
      const StepResult r = env.step(st, a);
      ++total_steps;
      buffer.push({s, a, r.reward, r.observation, r.done});
      m.ret += r.reward;
      m.energy_wh += r.energy_wh;
      tally.add(r, detail::sun_up(st));
      s = r.observation;
      done = r.done;
      if (buffer.size() >= cfg.batch_size) {
        train_step(out.qnet, target, opt, buffer.sample(cfg.batch_size, rng), cfg.gamma);
        if (++train_steps % cfg.target_sync_every == 0) sync_target(out.qnet, target);
      }
    }
    m.success = tally.success();
    out.metrics.push_back(m);
  }
  return out;
}

// Greedy rollout of a frozen network.
template <class Env>
EpisodeMetrics evaluate_policy(Env env, const Mlp& qnet, double action_delta_rad, std::uint64_t env_seed) {
  env.set_action_delta(action_delta_rad);
  typename detail::EnvStateOf<Env>::type st;
  AgentState s = env.reset(st, env_seed);
  Rng unused(0);
  EpisodeMetrics m;
  detail::SuccessTally tally;
  bool done = false;
  while (!done) {
    const StepResult r = env.step(st, select_action(qnet, s, 0.0, unused));
    m.ret += r.reward;
    m.energy_wh += r.energy_wh;
    tally.add(r, detail::sun_up(st));
    s = r.observation;
    done = r.done;
  }
  m.success = tally.success();
  return m;
}

}  // namespace suntrack
