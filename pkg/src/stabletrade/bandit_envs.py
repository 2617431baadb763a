"""Bandit environment family: plain arms, linear contextual rewards, a
semi-parametric variant with an arm-independent nuisance walk, and finite
adversarial MDPs with deterministic transitions.

Reward noise is alpha-stable, centered to zero mean, so an arm's expected reward
is exactly its model mean. Pseudo-regret is computed from true means, never from
realized rewards.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, ParamError
from .stable_core import StableParams, sample

DEFAULT_CONTEXT_PARAMS = StableParams(1.8, 0.3, 1.0, 0.0)
DEFAULT_NOISE = StableParams(1.8, 0.0, 0.5, 0.0)

_KINDS = ("plain", "linear", "semiparam", "adversarial_mdp")


@dataclass
class MdpTables:
    """Deterministic finite MDP: states and actions are 0-based indices."""

    n_states: int
    n_actions: int
    horizon: int
    transitions: np.ndarray       # (S, A) -> next state
    reward_means: np.ndarray      # (S, A)
    start_states: list

    def validate(self):
        if self.horizon < 1:
            raise DataError(f"horizon must be >= 1, got {self.horizon}")
        if self.transitions.shape != (self.n_states, self.n_actions):
            raise DataError("transition table shape mismatch")
        if self.reward_means.shape != (self.n_states, self.n_actions):
            raise DataError("reward table shape mismatch")
        bad = (self.transitions < 0) | (self.transitions >= self.n_states)
        if np.any(bad):
            s, a = np.argwhere(bad)[0]
            raise DataError(f"transition for state {s}, action {a} leaves the state space")
        if not np.all(np.isfinite(self.reward_means)):
            s, a = np.argwhere(~np.isfinite(self.reward_means))[0]
            raise DataError(f"reward mean for state {s}, action {a} is not finite")
        for s in self.start_states:
            if not (0 <= s < self.n_states):
                raise DataError(f"start state {s} leaves the state space")
        if not self.start_states:
            raise DataError("at least one start state required")
        return self


def load_mdp_tables(path):
    """JSON file with states, actions, transitions, rewards, horizon, start_states."""
    with open(path) as fh:
        raw = json.load(fh)
    try:
        n_states = int(raw["n_states"])
        n_actions = int(raw["n_actions"])
        horizon = int(raw["horizon"])
        trans = np.asarray(raw["transitions"], dtype=int)
        rew = np.asarray(raw["rewards"], dtype=float)
        starts = [int(s) for s in raw["start_states"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed MDP table file {path}: {exc}") from None
    return MdpTables(n_states, n_actions, horizon, trans, rew, starts).validate()


def true_q(tables):
    """Backward-induction optimal Q, shape (H, S, A); the value beyond the horizon is 0."""
    h_, s_, a_ = tables.horizon, tables.n_states, tables.n_actions
    q = np.zeros((h_ + 1, s_, a_))
    for h in range(h_ - 1, -1, -1):
        nxt = q[h + 1].max(axis=1)[tables.transitions]      # (S, A) continuation value
        q[h] = tables.reward_means + (nxt if h + 1 < h_ else 0.0)
    return q[:h_]


@dataclass
class EnvSpec:
    kind: str
    n_arms: int = 2
    dim: int = 1
    horizon: int = 1000
    arm_means: list = None                 # plain kind
    mu: np.ndarray = None                  # linear/semiparam weight; None -> unit sphere draw
    noise: object = None                   # StableParams, or list per arm, or None
    context_params: StableParams = DEFAULT_CONTEXT_PARAMS
    resample_contexts: bool = False
    n_users: int = 1
    user_mode: str = "round_robin"
    v_max: float = 1.0
    v_step: float = 0.1
    mdp: MdpTables = None
    adversary: str = "round_robin"

    def validate(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown environment kind {self.kind!r}")
        if self.kind == "plain":
            if self.arm_means is None:
                raise ConfigError("plain environments need arm_means")
            if self.dim != 1:
                raise ConfigError("plain environments are dimensionless, set dim=1")
        if self.kind in ("linear", "semiparam"):
            if self.mu is not None and len(np.atleast_1d(self.mu)) != self.dim:
                raise ConfigError(
                    f"mu has length {len(np.atleast_1d(self.mu))} but dim is {self.dim}"
                )
        if self.kind == "adversarial_mdp" and self.mdp is None:
            raise ConfigError("adversarial_mdp environments need mdp tables")
        if self.user_mode not in ("round_robin", "random"):
            raise ConfigError(f"unknown user_mode {self.user_mode!r}")
        if self.adversary not in ("round_robin", "greedy"):
            raise ConfigError(f"unknown adversary {self.adversary!r}")
        return self


@dataclass
class RoundContext:
    t: int
    contexts: np.ndarray          # (n_arms, dim)
    user: int = 0
    stage: tuple = None           # (h, state) in MDP settings


@dataclass
class RunTrace:
    seed: int
    arms: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    opt_means: list = field(default_factory=list)
    chosen_means: list = field(default_factory=list)
    contexts: list = field(default_factory=list)
    users: list = field(default_factory=list)

    def record(self, ctx, arm, reward, means):
        self.arms.append(int(arm))
        self.rewards.append(float(reward))
        self.opt_means.append(float(np.max(means)))
        self.chosen_means.append(float(means[arm]))
        self.contexts.append(ctx.contexts)
        self.users.append(ctx.user)


class BanditEnv:
    """plain / linear / semiparam environments behind one pull interface.

    Context, nuisance and user streams are separate rng substreams, so the
    context sequence never depends on which arms get pulled.
    """

    def __init__(self, spec, seed):
        spec.validate()
        self.spec = spec
        self.seed = int(seed)
        ss = np.random.SeedSequence([int(seed), 0xBA4D17])
        ctx_ss, noise_ss, user_ss, mu_ss = ss.spawn(4)
        self._ctx_rng = np.random.default_rng(ctx_ss)
        self._noise_rng = np.random.default_rng(noise_ss)
        self._user_rng = np.random.default_rng(user_ss)

        if spec.kind == "plain":
            self.mu = None
            self.arm_means = np.asarray(spec.arm_means, dtype=float)
            if len(self.arm_means) != spec.n_arms:
                raise ConfigError("arm_means length does not match n_arms")
        else:
            if spec.mu is not None:
                self.mu = np.asarray(spec.mu, dtype=float)
            else:
                g = np.random.default_rng(mu_ss).normal(size=spec.dim)
                self.mu = g / np.linalg.norm(g)
            self.arm_means = None

        noise = spec.noise if spec.noise is not None else DEFAULT_NOISE
        if isinstance(noise, StableParams):
            noise = [noise] * spec.n_arms
        if len(noise) != spec.n_arms:
            raise ConfigError("need one noise parameter set per arm")
        self.noise = list(noise)

        self._fixed_contexts = None
        if spec.kind != "plain" and not spec.resample_contexts:
            self._fixed_contexts = self._draw_contexts()
        self._ctx_cache = []
        self._v_cache = [0.0]
        self._user_cache = []

    def _draw_contexts(self):
        return sample(
            self.spec.context_params,
            self.spec.n_arms * self.spec.dim,
            self._ctx_rng,
        ).reshape(self.spec.n_arms, self.spec.dim)

    def _contexts_at(self, t):
        if self.spec.kind == "plain":
            return np.zeros((self.spec.n_arms, 1))
        if self._fixed_contexts is not None:
            return self._fixed_contexts
        while len(self._ctx_cache) <= t:
            self._ctx_cache.append(self._draw_contexts())
        return self._ctx_cache[t]

    def _v_at(self, t):
        # reflected-bounded nuisance walk, advanced lazily one round at a time
        while len(self._v_cache) <= t:
            w = self._user_rng.uniform(-self.spec.v_step, self.spec.v_step)
            nxt = float(np.clip(self._v_cache[-1] + w, -self.spec.v_max, self.spec.v_max))
            self._v_cache.append(nxt)
        return self._v_cache[t]

    def _user_at(self, t):
        if self.spec.n_users == 1:
            return 0
        if self.spec.user_mode == "round_robin":
            return t % self.spec.n_users
        while len(self._user_cache) <= t:
            self._user_cache.append(int(self._user_rng.integers(self.spec.n_users)))
        return self._user_cache[t]

    def context(self, t):
        return RoundContext(t=t, contexts=self._contexts_at(t), user=self._user_at(t))

    def true_means(self, t):
        """Per-arm expected rewards at round t."""
        if self.spec.kind == "plain":
            return self.arm_means.copy()
        base = self._contexts_at(t) @ self.mu
        if self.spec.kind == "semiparam":
            base = base + self._v_at(t)
        return base

    def optimal_arm(self, t):
        return int(np.argmax(self.true_means(t)))

    def pull(self, t, arm):
        if not (0 <= arm < self.spec.n_arms):
            raise ParamError(f"arm {arm} out of range")
        mean = self.true_means(t)[arm]
        nz = self.noise[arm]
        eps = float(sample(nz, 1, self._noise_rng)[0]) - nz.mean()
        return float(mean + eps)


class MdpEnv:
    """Episodic adversarial MDP with deterministic transitions."""

    def __init__(self, spec, seed):
        spec.validate()
        self.spec = spec
        self.tables = spec.mdp.validate()
        self.seed = int(seed)
        self._noise_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x3D9]))
        self._episode = 0
        noise = spec.noise
        if noise is not None and not isinstance(noise, StableParams):
            raise ConfigError("MDP noise must be a single StableParams or None")
        self.noise = noise

    def start_state(self, values=None):
        """Adversary's pick for the next episode. greedy mode minimizes the
        caller-provided state value estimate; without one it falls back to cycling."""
        starts = self.tables.start_states
        if self.spec.adversary == "greedy" and values is not None:
            vals = [values(s) for s in starts]
            pick = starts[int(np.argmin(vals))]
        else:
            pick = starts[self._episode % len(starts)]
        self._episode += 1
        return pick

    def step(self, state, action):
        if not (0 <= action < self.tables.n_actions):
            raise ParamError(f"action {action} out of range")
        mean = float(self.tables.reward_means[state, action])
        r = mean
        if self.noise is not None:
            r += float(sample(self.noise, 1, self._noise_rng)[0]) - self.noise.mean()
        return int(self.tables.transitions[state, action]), r


@dataclass
class EpisodeTrace:
    start: int
    states: list
    actions: list
    rewards: list
    final_state: int = None


def mdp_episode(env, policy, values=None):
    """Play one episode; policy maps (stage, state) to an action.

    Returns the trace and the episodic pseudo-regret: the optimal start value
    minus the sum of true reward means along the taken trajectory.
    """
    tables = env.tables
    q = true_q(tables)
    s = env.start_state(values=values)
    states, actions, rewards = [], [], []
    mean_total = 0.0
    cur = s
    for h in range(tables.horizon):
        a = int(policy(h, cur))
        nxt, r = env.step(cur, a)
        states.append(cur)
        actions.append(a)
        rewards.append(r)
        mean_total += float(tables.reward_means[cur, a])
        cur = nxt
    regret_ep = float(q[0][s].max() - mean_total)
    trace = EpisodeTrace(start=s, states=states, actions=actions, rewards=rewards,
                         final_state=cur)
    return trace, regret_ep


def make_env(spec, seed):
    spec.validate()
    if spec.kind == "adversarial_mdp":
        return MdpEnv(spec, seed)
    return BanditEnv(spec, seed)


def play(env, agent, rounds):
    """Drive a step-based agent for the given number of rounds, recording a trace."""
    trace = RunTrace(seed=env.seed)
    for t in range(rounds):
        ctx = env.context(t)
        arm, reward = agent.step(ctx, env)
        trace.record(ctx, arm, reward, env.true_means(t))
    return trace


@dataclass
class RegretResult:
    total: float
    prefix: np.ndarray


def regret(trace):
    """Cumulative pseudo-regret sum_t (mu*_t - mu_{a_t}) with its prefix curve."""
    gaps = np.asarray(trace.opt_means) - np.asarray(trace.chosen_means)
    prefix = np.cumsum(gaps)
    total = float(prefix[-1]) if prefix.size else 0.0
    return RegretResult(total=total, prefix=prefix)


@dataclass
class BayesRegretResult:
    mean: float
    half_width: float        # two standard errors
    per_run: np.ndarray


def bayes_regret(spec_or_factory, agent_factory, runs, rounds, base_seed=0):
    """Average regret over environments drawn per run.

    spec_or_factory is either a fixed EnvSpec (mu redrawn per run when None) or a
    callable seed -> EnvSpec. agent_factory maps (env, seed) to a step agent.
    """
    totals = np.empty(runs)
    for i in range(runs):
        seed = base_seed + i
        spec = spec_or_factory(seed) if callable(spec_or_factory) else spec_or_factory
        env = make_env(spec, seed)
        agent = agent_factory(env, seed)
        totals[i] = regret(play(env, agent, rounds)).total
    se = float(np.std(totals, ddof=1) / np.sqrt(runs)) if runs > 1 else 0.0
    return BayesRegretResult(mean=float(np.mean(totals)), half_width=2.0 * se, per_run=totals)


# ----------------------------------------------------------------------------
# offline interaction logs


@dataclass
class InteractionLog:
    users: np.ndarray        # round user ids, 0-based reindexed
    items: np.ndarray        # round item ids, 0-based reindexed
    rewards: np.ndarray
    features: np.ndarray     # (rounds, d) logged pair features
    n_users: int
    n_items: int


def load_interactions(path):
    """CSV with header user_id,item_id,reward,f1..fd."""
    import csv

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["user_id", "item_id", "reward"]:
            raise DataError(f"{path}: header must start with user_id,item_id,reward")
        d = len(header) - 3
        if d < 1 or header[3:] != [f"f{i}" for i in range(1, d + 1)]:
            raise DataError(f"{path}: feature columns must be named f1..fd")
        users, items, rewards, feats = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                users.append(row[0])
                items.append(row[1])
                rewards.append(float(row[2]))
                feats.append([float(v) for v in row[3:]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not users:
        raise DataError(f"{path}: no interaction rows")
    uniq_u = sorted(set(users))
    uniq_i = sorted(set(items))
    umap = {u: k for k, u in enumerate(uniq_u)}
    imap = {i: k for k, i in enumerate(uniq_i)}
    return InteractionLog(
        users=np.array([umap[u] for u in users]),
        items=np.array([imap[i] for i in items]),
        rewards=np.array(rewards),
        features=np.array(feats),
        n_users=len(uniq_u),
        n_items=len(uniq_i),
    )


class ReplayBanditEnv:
    """Offline replay over a logged interaction stream.

    Arms are the distinct items; an arm's feature vector is its latest logged
    row. Round contexts concatenate a one-hot user encoding with each item's
    features. Pulling the logged item reveals the logged reward, any other pull
    reveals nothing (reward 0, unmatched). Standard replay evaluation:
    cumulative reward over matched rounds.
    """

    def __init__(self, log):
        self.log = log
        self.seed = 0
        d = log.features.shape[1]
        self.item_features = np.zeros((log.n_items, d))
        for item, feat in zip(log.items, log.features):
            self.item_features[item] = feat
        self.n_arms = log.n_items
        self.dim = log.n_users + d
        self.matched = 0
        self.matched_reward = 0.0

    def rounds(self):
        return len(self.log.rewards)

    def context(self, t):
        onehot = np.zeros(self.log.n_users)
        onehot[self.log.users[t]] = 1.0
        ctx = np.hstack([np.tile(onehot, (self.n_arms, 1)), self.item_features])
        return RoundContext(t=t, contexts=ctx, user=int(self.log.users[t]))

    def pull(self, t, arm):
        if arm == self.log.items[t]:
            self.matched += 1
            r = float(self.log.rewards[t])
            self.matched_reward += r
            return r
        return 0.0

    def true_means(self, t):
        # offline logs carry no ground truth; exposed for interface parity
        return np.zeros(self.n_arms)
