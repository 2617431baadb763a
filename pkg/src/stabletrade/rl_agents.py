"""Actor-critic trading with optional floor-strategy supervision, plus baselines.

The continuous learner is DDPG on a box action space: critic regression against
softly-updated targets, deterministic chain-rule actor ascent, and, when an
expert is attached, a large-margin term that ranks the floor strategy's action
above sampled alternatives. Discrete baselines (tabular Q/SARSA, a small DQN,
performance-weighted constant-rebalanced mixtures) and the bandit traders feed
the tournament and backtest tables.
"""

import warnings
from dataclasses import dataclass, field, fields

import numpy as np

from .bandit_envs import RoundContext
from .errors import ConfigError, NumericError, ParamError
from .market_sim import (
    CppiConfig,
    Metrics,
    OhlcvSeries,
    TradingEnv,
    cppi_expert_action,
    metrics,
    split,
    synth_market,
)
from .tinynet import Mlp, adam_init, clip_global_norm, opt_step, soft_update
from .ts_agents import AgentConfig, CtsAgent, PlainAtsAgent


@dataclass
class Experience:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool
    a_exp: np.ndarray = None


class ReplayBuffer:
    """Ring buffer with uniform without-replacement minibatches."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ParamError("capacity must be positive")
        self.capacity = int(capacity)
        self._data = []
        self._head = 0

    def __len__(self):
        return len(self._data)

    def add(self, exp):
        if len(self._data) < self.capacity:
            self._data.append(exp)
        else:
            self._data[self._head] = exp
            self._head = (self._head + 1) % self.capacity

    def sample(self, n, rng):
        if n > len(self._data):
            raise ParamError(f"minibatch {n} exceeds buffer size {len(self._data)}")
        idx = rng.choice(len(self._data), size=n, replace=False)
        return [self._data[i] for i in idx]


@dataclass
class TrainConfig:
    gamma: float = 0.99
    tau: float = 0.01
    buffer_capacity: int = 100_000
    batch: int = 64
    critic_lr: float = 1e-3
    actor_lr: float = 1e-4
    lam_e: float = 0.3
    lam_c: float = 0.9
    k_agents: int = 1
    hidden: tuple = (64, 64)
    noise_scale: float = 0.3
    noise_final: float = 0.01
    noise_kind: str = "gaussian"
    ou_theta: float = 0.15
    margin_m: float = 1.0
    margin_rho: float = 1.0
    n_candidates: int = 8
    pretrain_steps: int = 1000
    pretrain_episodes: int = 5
    warmup_steps: int = 200
    grad_clip: float = 10.0
    divergence_limit: float = 1e6

    def validate(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError("tau must lie in (0, 1]")
        if self.batch < 1 or self.buffer_capacity < self.batch:
            raise ConfigError("need buffer capacity >= batch >= 1")
        if self.lam_e < 0.0:
            raise ConfigError("expert weight must be non-negative")
        if not 0.0 <= self.lam_c <= 1.0:
            raise ConfigError("correlation balance must lie in [0, 1]")
        if self.noise_kind not in ("gaussian", "ou"):
            raise ConfigError(f"unknown noise kind {self.noise_kind!r}")
        if self.margin_rho <= 0.0 or self.margin_m < 0.0:
            raise ConfigError("margin needs rho > 0 and m >= 0")
        if self.k_agents < 1:
            raise ConfigError("ensemble size must be at least 1")
        return self

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown training keys: {sorted(extra)}")
        cfg = cls(**d)
        if isinstance(cfg.hidden, list):
            cfg.hidden = tuple(cfg.hidden)
        return cfg.validate()


# ---------------------------------------------------------------------------
# environments


class VectorMarketEnv:
    """Box actions in [-1, 1]^d traded as asset fractions over a price series.

    State: per-stock window of recent log returns (scaled x10), portfolio
    weights, cash fraction. Rewards reach the learner scaled; the equity curve
    stays in currency.
    """

    def __init__(self, series, window=3, initial_cash=100.0, cost_bps=10.0,
                 trade_scale=1.0, reward_scale=1.0, expert=None):
        self.tenv = TradingEnv(series, initial_cash=initial_cash, cost_bps=cost_bps)
        self.window = int(window)
        self.d = series.n_stocks
        self.trade_scale = float(trade_scale)
        self.reward_scale = float(reward_scale)
        self.expert = expert
        self.state_dim = self.d * self.window + self.d + 1
        self.action_dim = self.d
        self.curve = None

    def reset(self):
        state = self.tenv.reset()
        self.curve = [state.total_asset]
        return self._features()

    @property
    def done(self):
        return self.tenv.done

    def _features(self):
        s = self.tenv.state
        close = self.tenv.series.close
        rets = np.zeros((self.window, self.d))
        for k in range(1, self.window + 1):
            if s.t - k >= 0:
                rets[k - 1] = np.log(close[s.t - k + 1] / close[s.t - k])
        a = s.total_asset
        weights = s.h * s.p / a
        return np.concatenate([10.0 * rets.ravel(), weights, [s.b / a]])

    def expert_action(self):
        """Floor strategy's trade mapped into policy units."""
        if self.expert is None:
            raise ConfigError("no expert attached to this environment")
        s = self.tenv.state
        shares = cppi_expert_action(s, self.expert)
        a = shares * s.p / (s.total_asset * self.trade_scale)
        return np.clip(a, -1.0, 1.0)

    def step(self, action):
        action = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        s = self.tenv.state
        shares = action * self.trade_scale * s.total_asset / s.p
        state, reward, done = self.tenv.step(shares)
        self.curve.append(state.total_asset)
        return self._features(), reward * self.reward_scale, done


class DiscreteTradingEnv:
    """Sell/hold/buy per stock over trend-and-position bucket states."""

    def __init__(self, series, initial_cash=100.0, cost_bps=10.0, reward_scale=1.0):
        self.tenv = TradingEnv(series, initial_cash=initial_cash, cost_bps=cost_bps)
        self.d = series.n_stocks
        self.n_actions = 3 ** self.d
        self.n_states = 9 ** self.d
        self.reward_scale = float(reward_scale)
        self.curve = None

    def reset(self):
        state = self.tenv.reset()
        self.curve = [state.total_asset]
        return self._state_id()

    @property
    def done(self):
        return self.tenv.done

    def _state_id(self):
        s = self.tenv.state
        close = self.tenv.series.close
        a = s.total_asset
        sid = 0
        for j in range(self.d):
            if s.t == 0:
                trend = 1
            else:
                r = close[s.t, j] - close[s.t - 1, j]
                trend = 0 if r < 0 else (2 if r > 0 else 1)
            w = s.h[j] * s.p[j] / a
            pos = 0 if w < 1.0 / 3.0 else (1 if w < 2.0 / 3.0 else 2)
            sid = sid * 9 + trend * 3 + pos
        return sid

    def step(self, action):
        action = int(action)
        if not 0 <= action < self.n_actions:
            raise ParamError(f"action {action} out of range")
        s = self.tenv.state
        moves = np.zeros(self.d)
        codes = []
        a = action
        for _ in range(self.d):
            codes.append(a % 3)
            a //= 3
        codes = codes[::-1]
        buyers = [j for j, c in enumerate(codes) if c == 2]
        for j, c in enumerate(codes):
            if c == 0:
                moves[j] = -s.h[j]
            elif c == 2:
                moves[j] = s.b / len(buyers) / s.p[j]
        state, reward, done = self.tenv.step(moves)
        self.curve.append(state.total_asset)
        return self._state_id(), reward * self.reward_scale, done


def alternating_series(days, lo=10.0, hi=11.0):
    """Deterministic price path lo, hi, lo, hi, ... as a one-stock series."""
    close = np.where(np.arange(days) % 2 == 0, lo, hi)[:, None].astype(float)
    opens = np.vstack([close[:1], close[:-1]])
    return OhlcvSeries(
        dates=[f"d{t:05d}" for t in range(days)],
        tickers=["S0"],
        open=opens,
        high=np.maximum(opens, close),
        low=np.minimum(opens, close),
        close=close,
        volume=np.full((days, 1), 1e6),
    )


def perfect_foresight_curve(series, initial_cash=100.0, cost_bps=0.0):
    """One-stock lookahead policy: all-in before an up day, all-out otherwise."""
    if series.n_stocks != 1:
        raise ParamError("lookahead oracle handles one stock")
    env = TradingEnv(series, initial_cash=initial_cash, cost_bps=cost_bps)
    state = env.reset()
    curve = [state.total_asset]
    while not env.done:
        up = series.close[state.t + 1, 0] > series.close[state.t, 0]
        trade = np.array([state.b / state.p[0] if up else -state.h[0]])
        state, _, _ = env.step(trade)
        curve.append(state.total_asset)
    return np.asarray(curve)


# ---------------------------------------------------------------------------
# DDPG


class DdpgAgent:
    def __init__(self, state_dim, action_dim, config=None, seed=0):
        self.config = (config or TrainConfig()).validate()
        self.state_dim, self.action_dim = int(state_dim), int(action_dim)
        seeder = np.random.default_rng(seed)
        hid = list(self.config.hidden)
        self.actor = Mlp([state_dim] + hid + [action_dim], out_act="tanh",
                         seed=int(seeder.integers(2**31)))
        self.critic = Mlp([state_dim + action_dim] + hid + [1],
                          seed=int(seeder.integers(2**31)))
        self.t_actor = self.actor.copy()
        self.t_critic = self.critic.copy()
        self.opt_actor = adam_init(self.actor)
        self.opt_critic = adam_init(self.critic)
        self.rng = np.random.default_rng(int(seeder.integers(2**31)))
        self._ou = np.zeros(action_dim)

    def reset_noise(self):
        self._ou[:] = 0.0

    def act(self, state, noise_scale=0.0):
        a, _ = self.actor.forward(np.asarray(state, dtype=float))
        if noise_scale > 0.0:
            if self.config.noise_kind == "ou":
                self._ou += -self.config.ou_theta * self._ou \
                    + noise_scale * self.rng.standard_normal(self.action_dim)
                a = a + self._ou
            else:
                a = a + noise_scale * self.rng.standard_normal(self.action_dim)
        return np.clip(a, -1.0, 1.0)

    def soft_updates(self):
        soft_update(self.t_actor, self.actor, self.config.tau)
        soft_update(self.t_critic, self.critic, self.config.tau)


def _stack(batch):
    s = np.stack([e.s for e in batch])
    a = np.stack([e.a for e in batch])
    r = np.array([e.r for e in batch], dtype=float)
    s2 = np.stack([e.s_next for e in batch])
    done = np.array([e.done for e in batch], dtype=float)
    if all(e.a_exp is not None for e in batch):
        ae = np.stack([e.a_exp for e in batch])
    else:
        ae = None
    return s, a, r, s2, done, ae


def _td_value_and_grads(agent, batch, want_grads=True):
    """Mean squared TD error against the target networks."""
    cfg = agent.config
    s, a, r, s2, done, _ = _stack(batch)
    a2, _ = agent.t_actor.forward(s2)
    q2, _ = agent.t_critic.forward(np.hstack([s2, a2]))
    y = r + cfg.gamma * (1.0 - done) * q2[:, 0]
    q, cache = agent.critic.forward(np.hstack([s, a]))
    med = float(np.median(np.abs(q)))
    if med > cfg.divergence_limit:
        raise NumericError(
            f"critic diverged: median |Q| {med:.3g} exceeds {cfg.divergence_limit:.0e}"
        )
    resid = q[:, 0] - y
    loss = float(np.mean(resid**2))
    if not want_grads:
        return loss, None
    gy = (2.0 / len(batch)) * resid[:, None]
    grads, _ = agent.critic.backward(cache, gy)
    return loss, grads


def critic_loss(agent, batch):
    """Scalar TD loss plus critic gradients; terminal rows drop the bootstrap."""
    return _td_value_and_grads(agent, batch)


def margin(a, a_exp, m=1.0, rho=1.0):
    """Zero exactly at the expert action, saturating at m beyond distance rho."""
    dist = float(np.linalg.norm(np.asarray(a, float) - np.asarray(a_exp, float)))
    return m * min(1.0, dist / rho)


def _candidate_set(agent, states, expert_actions, rng):
    pi, _ = agent.actor.forward(states)
    cands = [pi, expert_actions]
    for _ in range(agent.config.n_candidates):
        perturbed = expert_actions + 0.5 * agent.config.margin_rho \
            * rng.standard_normal(expert_actions.shape)
        cands.append(np.clip(perturbed, -1.0, 1.0))
    return np.stack(cands, axis=1)


def cppi_margin_loss(agent, states, expert_actions, candidates=None, rng=None,
                     want_grads=False):
    """Margin-ranking loss max_a [Q(s,a) + l(a_E,a)] - Q(s,a_E).

    Non-negative whenever the expert action sits in the candidate set.
    """
    cfg = agent.config
    states = np.atleast_2d(np.asarray(states, dtype=float))
    expert_actions = np.atleast_2d(np.asarray(expert_actions, dtype=float))
    n = states.shape[0]
    if candidates is None:
        candidates = _candidate_set(agent, states, expert_actions,
                                    rng if rng is not None else agent.rng)
    else:
        candidates = np.asarray(candidates, dtype=float)
    n_cand = candidates.shape[1]
    flat_s = np.repeat(states, n_cand, axis=0)
    flat_a = candidates.reshape(n * n_cand, -1)
    q_flat, _ = agent.critic.forward(np.hstack([flat_s, flat_a]))
    q = q_flat[:, 0].reshape(n, n_cand)
    dist = np.linalg.norm(candidates - expert_actions[:, None, :], axis=2)
    pen = cfg.margin_m * np.minimum(1.0, dist / cfg.margin_rho)
    scores = q + pen
    best = np.argmax(scores, axis=1)
    rows = np.arange(n)
    q_exp, cache_e = agent.critic.forward(np.hstack([states, expert_actions]))
    value = float(np.mean(scores[rows, best] - q_exp[:, 0]))
    if not want_grads:
        return value
    a_best = candidates[rows, best]
    _, cache_b = agent.critic.forward(np.hstack([states, a_best]))
    up = np.full((n, 1), 1.0 / n)
    g_best, _ = agent.critic.backward(cache_b, up)
    g_exp, _ = agent.critic.backward(cache_e, -up)
    grads = [gb + ge for gb, ge in zip(g_best, g_exp)]
    return value, grads


def _pearson(x, y):
    xc = x - np.mean(x)
    yc = y - np.mean(y)
    sx = float(np.sqrt(np.sum(xc**2)))
    sy = float(np.sqrt(np.sum(yc**2)))
    if sx == 0.0 or sy == 0.0:
        return 0.0
    return float(np.sum(xc * yc) / (sx * sy))


@dataclass
class CombinedLoss:
    total: float
    td: float
    j_e: float
    corr_penalty: float


def combined_loss(agent, batch, expert=False, partner_actions=None, rng=None):
    """TD loss, optionally expert-weighted and correlation-balanced.

    partner_actions: per-partner (batch, action_dim) arrays from other ensemble
    members evaluated on the same states; the penalty sums squared Pearson
    correlations of this agent's actions against each partner's.
    """
    cfg = agent.config
    td, _ = _td_value_and_grads(agent, batch, want_grads=False)
    j_e = 0.0
    if expert:
        s, _, _, _, _, ae = _stack(batch)
        if ae is None:
            raise ParamError("expert mode needs expert actions in the minibatch")
        j_e = cppi_margin_loss(agent, s, ae, rng=rng)
    corr = 0.0
    if partner_actions:
        s = np.stack([e.s for e in batch])
        mine, _ = agent.actor.forward(s)
        for other in partner_actions:
            corr += _pearson(mine.ravel(), np.asarray(other, float).ravel()) ** 2
        total = cfg.lam_c * td + (1.0 - cfg.lam_c) * corr + cfg.lam_e * j_e
    else:
        if cfg.k_agents == 1 and cfg.lam_c != 1.0:
            warnings.warn("correlation balance needs an ensemble; term dropped")
        total = td + cfg.lam_e * j_e
    return CombinedLoss(total=total, td=td, j_e=j_e, corr_penalty=corr)


def critic_update(agent, batch, expert=False):
    cfg = agent.config
    td, grads = _td_value_and_grads(agent, batch)
    j_e = 0.0
    if expert:
        s, _, _, _, _, ae = _stack(batch)
        if ae is None:
            raise ParamError("expert mode needs expert actions in the minibatch")
        j_e, mg = cppi_margin_loss(agent, s, ae, want_grads=True)
        grads = [g + cfg.lam_e * m for g, m in zip(grads, mg)]
    clip_global_norm(grads, cfg.grad_clip)
    opt_step(agent.critic, grads, agent.opt_critic, lr=cfg.critic_lr)
    return td, j_e


def actor_loss_grads(agent, states):
    """Loss -mean Q(s, pi(s)) and its actor gradients via the critic's input."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    a, cache_a = agent.actor.forward(states)
    q, cache_c = agent.critic.forward(np.hstack([states, a]))
    up = np.full((states.shape[0], 1), -1.0 / states.shape[0])
    _, gx = agent.critic.backward(cache_c, up)
    ga = gx[:, agent.state_dim:]
    grads, _ = agent.actor.backward(cache_a, ga)
    return float(-np.mean(q)), grads


def actor_update(agent, batch):
    """Chain-rule ascent on Q(s, pi(s)); the critic stays frozen."""
    s = np.stack([e.s for e in batch])
    loss, grads = actor_loss_grads(agent, s)
    clip_global_norm(grads, agent.config.grad_clip)
    opt_step(agent.actor, grads, agent.opt_actor, lr=agent.config.actor_lr)
    return loss


@dataclass
class TrainResult:
    episode_returns: list
    logs: list
    pretrained: int = 0


def _pretrain(agent, env, buffer, cfg):
    for _ in range(cfg.pretrain_episodes):
        s = env.reset()
        done = False
        while not done:
            ae = env.expert_action()
            a = np.clip(ae + 0.05 * agent.rng.standard_normal(ae.shape), -1.0, 1.0)
            s2, r, done = env.step(a)
            buffer.add(Experience(s, a, r, s2, done, a_exp=ae))
            s = s2
    steps = 0
    for _ in range(cfg.pretrain_steps):
        if len(buffer) < cfg.batch:
            break
        batch = buffer.sample(cfg.batch, agent.rng)
        critic_update(agent, batch, expert=True)
        actor_update(agent, batch)
        agent.soft_updates()
        steps += 1
    return steps


def train(agent, env, episodes, config=None):
    """Noise-perturbed interaction with replay updates; deterministic per seed."""
    cfg = (config or agent.config).validate()
    buffer = ReplayBuffer(cfg.buffer_capacity)
    expert_mode = cfg.lam_e > 0.0 and getattr(env, "expert", None) is not None
    pretrained = _pretrain(agent, env, buffer, cfg) if expert_mode and cfg.pretrain_steps else 0
    returns, logs = [], []
    for ep in range(episodes):
        frac = ep / max(1, episodes - 1)
        noise = cfg.noise_scale + frac * (cfg.noise_final - cfg.noise_scale)
        s = env.reset()
        agent.reset_noise()
        done = False
        ep_td, ep_la, ep_je, n_upd = 0.0, 0.0, 0.0, 0
        while not done:
            a_exp = env.expert_action() if expert_mode else None
            a = agent.act(s, noise_scale=noise)
            s2, r, done = env.step(a)
            buffer.add(Experience(s, a, r, s2, done, a_exp=a_exp))
            s = s2
            if len(buffer) >= max(cfg.batch, cfg.warmup_steps):
                batch = buffer.sample(cfg.batch, agent.rng)
                try:
                    td, j_e = critic_update(agent, batch, expert=expert_mode)
                except NumericError as err:
                    raise NumericError(f"episode {ep}: {err}") from None
                la = actor_update(agent, batch)
                agent.soft_updates()
                ep_td += td
                ep_la += la
                ep_je += j_e
                n_upd += 1
        ret = env.curve[-1] - env.curve[0]
        returns.append(ret)
        k = max(1, n_upd)
        logs.append({
            "episode": ep,
            "return": ret,
            "loss_critic": ep_td / k,
            "loss_actor": ep_la / k,
            "j_e": ep_je / k,
            "corr_penalty": 0.0,
        })
    return TrainResult(episode_returns=returns, logs=logs, pretrained=pretrained)


def evaluate(agent, env):
    """Noise-free rollout; returns the currency equity curve."""
    s = env.reset()
    done = False
    while not done:
        s, _, done = env.step(agent.act(s))
    return np.asarray(env.curve)


# ---------------------------------------------------------------------------
# discrete baselines


def _check_discrete(env):
    if not hasattr(env, "n_states") or not hasattr(env, "n_actions"):
        raise ConfigError("tabular control needs a discretized environment")


@dataclass
class TabularResult:
    q: np.ndarray
    episode_returns: list

    def greedy_policy(self):
        table = self.q.argmax(axis=1)
        return lambda s: int(table[s])


def _td_control(env, episodes, on_policy, alpha=0.1, gamma=0.99,
                eps_start=1.0, eps_final=0.05, seed=0):
    _check_discrete(env)
    rng = np.random.default_rng(seed)
    q = np.zeros((env.n_states, env.n_actions))
    returns = []

    def pick(s, eps):
        if rng.random() < eps:
            return int(rng.integers(env.n_actions))
        return int(np.argmax(q[s]))

    for ep in range(episodes):
        eps = eps_start + (ep / max(1, episodes - 1)) * (eps_final - eps_start)
        s = env.reset()
        a = pick(s, eps)
        done = False
        total = 0.0
        while not done:
            s2, r, done = env.step(a)
            total += r
            a2 = pick(s2, eps)
            if on_policy:
                boot = q[s2, a2]
            else:
                boot = float(np.max(q[s2]))
            target = r + gamma * (0.0 if done else boot)
            q[s, a] += alpha * (target - q[s, a])
            s, a = s2, a2
        returns.append(total)
    return TabularResult(q=q, episode_returns=returns)


def tabular_q(env, episodes, **kw):
    return _td_control(env, episodes, on_policy=False, **kw)


def sarsa(env, episodes, **kw):
    return _td_control(env, episodes, on_policy=True, **kw)


@dataclass
class DqnResult:
    net: Mlp
    episode_returns: list

    def greedy_policy(self):
        def policy(s):
            x = np.zeros(self.net.sizes[0])
            x[s] = 1.0
            qv, _ = self.net.forward(x)
            return int(np.argmax(qv))
        return policy


def dqn_lite(env, episodes, seed=0, gamma=0.99, hidden=(32,), batch=32,
             capacity=5000, lr=1e-3, tau=0.05, eps_start=1.0, eps_final=0.05):
    """Small replay-and-target-network Q learner over one-hot states."""
    _check_discrete(env)
    rng = np.random.default_rng(seed)
    net = Mlp([env.n_states] + list(hidden) + [env.n_actions],
              seed=int(rng.integers(2**31)))
    target = net.copy()
    opt = adam_init(net)
    buffer = ReplayBuffer(capacity)
    returns = []

    def onehot(idx):
        x = np.zeros((len(idx), env.n_states))
        x[np.arange(len(idx)), idx] = 1.0
        return x

    for ep in range(episodes):
        eps = eps_start + (ep / max(1, episodes - 1)) * (eps_final - eps_start)
        s = env.reset()
        done = False
        total = 0.0
        while not done:
            if rng.random() < eps:
                a = int(rng.integers(env.n_actions))
            else:
                qv, _ = net.forward(onehot([s])[0])
                a = int(np.argmax(qv))
            s2, r, done = env.step(a)
            total += r
            buffer.add(Experience(s, a, r, s2, done))
            s = s2
            if len(buffer) >= batch:
                sample = buffer.sample(batch, rng)
                si = np.array([e.s for e in sample], dtype=int)
                ai = np.array([e.a for e in sample], dtype=int)
                ri = np.array([e.r for e in sample], dtype=float)
                s2i = np.array([e.s_next for e in sample], dtype=int)
                di = np.array([e.done for e in sample], dtype=float)
                q2, _ = target.forward(onehot(s2i))
                y = ri + gamma * (1.0 - di) * q2.max(axis=1)
                qv, cache = net.forward(onehot(si))
                gy = np.zeros_like(qv)
                rows = np.arange(batch)
                gy[rows, ai] = 2.0 * (qv[rows, ai] - y) / batch
                grads, _ = net.backward(cache, gy)
                clip_global_norm(grads)
                opt_step(net, grads, opt, lr=lr)
                soft_update(target, net, tau)
        returns.append(total)
    return DqnResult(net=net, episode_returns=returns)


def _simplex_grid(d, resolution):
    if d == 1:
        return np.ones((1, 1))
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            out.append(prefix + [remaining])
            return
        for k in range(remaining + 1):
            rec(prefix + [k], remaining - k, slots - 1)

    rec([], resolution, d)
    return np.asarray(out, dtype=float) / resolution


def up_run(series, initial_cash=100.0, resolution=10):
    """Performance-weighted average over a constant-rebalanced-portfolio grid.

    One stock degenerates to buy-and-hold. Costless by construction.
    """
    rel = series.close[1:] / series.close[:-1]
    grid = _simplex_grid(series.n_stocks, resolution)
    wealth = np.ones(grid.shape[0])
    curve = [initial_cash]
    for t in range(rel.shape[0]):
        wealth = wealth * (grid @ rel[t])
        curve.append(initial_cash * float(np.mean(wealth)))
    return np.asarray(curve)


# ---------------------------------------------------------------------------
# bandit traders


class _ArmPullShim:
    """Adapter exposing a discrete trading env through the bandit pull interface."""

    def __init__(self, env, reward_scale):
        self.env = env
        self.reward_scale = reward_scale

    def pull(self, t, arm):
        _, r, _ = self.env.step(arm)
        return r * self.reward_scale


def bandit_trade(kind, series, seed, reward_scale=0.1, initial_cash=100.0,
                 cost_bps=10.0):
    """Run a Thompson-sampling trader over sell/hold/buy combination arms."""
    env = DiscreteTradingEnv(series, initial_cash=initial_cash, cost_bps=cost_bps)
    env.reset()
    shim = _ArmPullShim(env, reward_scale)
    n = env.n_actions
    if kind == "cb_ts":
        agent = CtsAgent(n, n, AgentConfig(algorithm="cts"), seed=seed)
        contexts = np.eye(n)
    elif kind == "ac_ts":
        agent = PlainAtsAgent(n, AgentConfig(algorithm="plain_ats"), seed=seed)
        contexts = np.ones((n, 1))
    else:
        raise ConfigError(f"unknown bandit trader {kind!r}")
    t = 0
    while not env.done:
        agent.step(RoundContext(t=t, contexts=contexts), shim)
        t += 1
    return np.asarray(env.curve)


# ---------------------------------------------------------------------------
# tournament


TOURNAMENT_AGENTS = ("ql", "dqn", "sarsa", "cb_ts", "ac_ts")
_T2_LABELS = {"ql": "QL", "dqn": "DQL", "sarsa": "SARSA",
              "cb_ts": "CB-TS", "ac_ts": "AC-TS"}


@dataclass
class TournamentResult:
    names: list
    wins: np.ndarray
    avg_wins: np.ndarray
    returns: np.ndarray


def _episode_return(curve):
    return curve[-1] / curve[0] - 1.0


def run_trader(name, series, seed, episodes=40):
    """Train the named agent on a series; return its evaluation equity curve."""
    if name in ("ql", "sarsa"):
        env = DiscreteTradingEnv(series)
        fit = tabular_q if name == "ql" else sarsa
        res = fit(env, episodes, seed=seed)
        policy = res.greedy_policy()
    elif name == "dqn":
        env = DiscreteTradingEnv(series)
        res = dqn_lite(env, episodes, seed=seed)
        policy = res.greedy_policy()
    elif name in ("cb_ts", "ac_ts"):
        return bandit_trade(name, series, seed)
    else:
        raise ConfigError(f"unknown tournament agent {name!r}")
    s = env.reset()
    done = False
    while not done:
        s, _, done = env.step(policy(s))
    return np.asarray(env.curve)


def tournament(names=None, rounds=10, seed=0, days=120, episodes=40):
    """Matched-seed pairwise win counts; ties split 50:50 by convention."""
    names = list(names) if names is not None else list(TOURNAMENT_AGENTS)
    if len(names) < 2:
        raise ParamError("a tournament needs at least two agents")
    rets = np.zeros((len(names), rounds))
    for r in range(rounds):
        series = synth_market(1, days, drift=0.05, vol=0.35, seed=seed * 7919 + r,
                              alpha=1.7)
        for i, name in enumerate(names):
            curve = run_trader(name, series, seed=seed * 104729 + r, episodes=episodes)
            rets[i, r] = _episode_return(curve)
    wins = np.full((len(names), len(names)), 50.0)
    for i in range(len(names)):
        for j in range(len(names)):
            if i == j:
                continue
            won = np.sum(rets[i] > rets[j]) + 0.5 * np.sum(rets[i] == rets[j])
            wins[i, j] = 100.0 * won / rounds
    avg = np.array([np.mean([wins[i, j] for j in range(len(names)) if j != i])
                    for i in range(len(names))])
    return TournamentResult(names=names, wins=wins, avg_wins=avg, returns=rets)


def format_table2(result):
    """Pairwise win matrix, one 'w:l' cell per pair, plus average wins."""
    labels = [_T2_LABELS.get(n, n.upper()) for n in result.names]
    width = max(8, max(len(x) for x in labels) + 2)
    head = "".ljust(width) + "".join(x.ljust(width) for x in labels) + "Avg Wins"
    lines = [head]
    for i, lab in enumerate(labels):
        cells = []
        for j in range(len(labels)):
            w = result.wins[i, j]
            cells.append(f"{w:.0f}:{100 - w:.0f}".ljust(width))
        lines.append(lab.ljust(width) + "".join(cells) + f"{result.avg_wins[i]:.1f}%")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# backtest


BACKTEST_AGENTS = ("up", "dqn", "ddpg", "cppi_ddpg", "ad_ts")
_T3_LABELS = {"up": "UP", "dqn": "DQN", "ddpg": "DDPG",
              "cppi_ddpg": "CPPI-DDPG", "ad_ts": "AD-TS"}


@dataclass
class BacktestConfig:
    episodes: int = 30
    split_ratio: float = 0.7
    initial_cash: float = 100.0
    cost_bps: float = 10.0
    floor_frac: float = 0.85
    multiplier: float = 2.0
    window: int = 3
    reward_scale: float = 0.1
    train: TrainConfig = field(default_factory=lambda: TrainConfig(
        noise_scale=0.2, warmup_steps=64, pretrain_steps=300, pretrain_episodes=3))

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        train = d.pop("train", None)
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown backtest keys: {sorted(extra)}")
        cfg = cls(**d)
        if train is not None:
            cfg.train = TrainConfig.from_dict(train)
        return cfg


def _ddpg_curve(train_series, test_series, seed, cfg, supervised):
    expert = None
    if supervised:
        expert = CppiConfig(floor=cfg.floor_frac * cfg.initial_cash,
                            multiplier=cfg.multiplier)
    def make_env(series):
        return VectorMarketEnv(series, window=cfg.window,
                               initial_cash=cfg.initial_cash,
                               cost_bps=cfg.cost_bps,
                               reward_scale=cfg.reward_scale,
                               expert=expert)
    env = make_env(train_series)
    tc = cfg.train if supervised else TrainConfig(**{
        **{f.name: getattr(cfg.train, f.name) for f in fields(TrainConfig)},
        "lam_e": 0.0})
    agent = DdpgAgent(env.state_dim, env.action_dim, config=tc, seed=seed)
    train(agent, env, cfg.episodes)
    return evaluate(agent, make_env(test_series))


def backtest_curve(name, train_series, test_series, seed, cfg):
    """Equity curve of one backtest agent on the held-out series."""
    if name == "up":
        return up_run(test_series, initial_cash=cfg.initial_cash)
    if name == "dqn":
        env = DiscreteTradingEnv(train_series, initial_cash=cfg.initial_cash,
                                 cost_bps=cfg.cost_bps)
        res = dqn_lite(env, cfg.episodes, seed=seed)
        policy = res.greedy_policy()
        test_env = DiscreteTradingEnv(test_series, initial_cash=cfg.initial_cash,
                                      cost_bps=cfg.cost_bps)
        s = test_env.reset()
        done = False
        while not done:
            s, _, done = test_env.step(policy(s))
        return np.asarray(test_env.curve)
    if name == "ddpg":
        return _ddpg_curve(train_series, test_series, seed, cfg, supervised=False)
    if name == "cppi_ddpg":
        return _ddpg_curve(train_series, test_series, seed, cfg, supervised=True)
    if name == "ad_ts":
        return bandit_trade("ac_ts", test_series, seed,
                            initial_cash=cfg.initial_cash, cost_bps=cfg.cost_bps)
    raise ConfigError(f"unknown backtest agent {name!r}")


@dataclass
class BacktestResult:
    names: list
    rows: dict
    per_seed: dict


def backtest(series, agents=None, seeds=(0,), cfg=None):
    """Train on the chronological head, score AR/SR/MaxD on the tail."""
    names = list(agents) if agents is not None else list(BACKTEST_AGENTS)
    cfg = cfg or BacktestConfig()
    train_series, test_series = split(series, ratio=cfg.split_ratio)
    if test_series.n_days < 2:
        raise ConfigError("test split too short to score")
    per_seed = {n: [] for n in names}
    for name in names:
        for seed in seeds:
            curve = backtest_curve(name, train_series, test_series, int(seed), cfg)
            per_seed[name].append(metrics(curve))
    rows = {}
    for name in names:
        ms = per_seed[name]
        rows[name] = Metrics(
            annual_return=float(np.median([m.annual_return for m in ms])),
            sharpe=float(np.median([m.sharpe for m in ms])),
            max_drawdown=float(np.median([m.max_drawdown for m in ms])),
        )
    return BacktestResult(names=names, rows=rows, per_seed=per_seed)


def format_table3(result):
    """AR / SR / MaxD table, one row per strategy."""
    width = max(11, max(len(_T3_LABELS.get(n, n.upper())) for n in result.names) + 2)
    lines = ["".ljust(width) + "AR".ljust(10) + "SR".ljust(10) + "MaxD"]
    for name in result.names:
        m = result.rows[name]
        lab = _T3_LABELS.get(name, name.upper())
        sr = "n/a" if np.isnan(m.sharpe) else f"{m.sharpe * 100:.1f}%"
        lines.append(lab.ljust(width)
                     + f"{m.annual_return * 100:.2f}%".ljust(10)
                     + sr.ljust(10)
                     + f"{m.max_drawdown * 100:.2f}%")
    return "\n".join(lines)
