"""Centralized-training / decentralized-execution MAPPO.

A parameter-shared Gaussian actor acts on local observations; a centralized
critic (classical or quantum-core) values the concatenated global
observation during training only.  Losses follow the clipped-surrogate /
clipped-value scheme with an entropy bonus and a KL penalty against the
rollout policy; two optimizers run side by side (Adam for everything
classical, the SPSA rule inside the quantum critic for circuit weights).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .env import FanetEnv, ScenarioConfig
from .errors import ContractViolation, TrainingError
from .nets import Adam, GaussianPolicyHead

ACTOR_HIDDEN = (64, 64)
EPISODE_SEED_STRIDE = 1_000_003
EVAL_SEED_STRIDE = 7_919


@dataclass
class TrainerConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.99
    clip_eps: float = 0.2
    entropy_coeff: float = 0.01
    kl_coeff: float = 0.2
    lr: float = 1e-4
    rollout_steps: int = 2000
    epochs: int = 5
    minibatch_size: int = 256
    eval_interval: int = 1000
    eval_episodes: int = 5

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise ContractViolation("clip_eps must be in (0, 1)")
        for name in ("gamma", "gae_lambda", "entropy_coeff", "kl_coeff", "lr"):
            if getattr(self, name) < 0:
                raise ContractViolation(f"{name} must be non-negative")


@dataclass
class RolloutBatch:
    """Per-step arrays; the agent axis sits second where it exists."""

    obs: np.ndarray          # (S, n, obs_dim)
    global_obs: np.ndarray   # (S, n * obs_dim)
    actions: np.ndarray      # (S, n, act_dim)
    log_prob_old: np.ndarray # (S, n)
    mu_old: np.ndarray       # (S, n, act_dim)
    log_std_old: np.ndarray  # (act_dim,)
    rewards: np.ndarray      # (S,) global scalar reward
    values: np.ndarray       # (S,)
    dones: np.ndarray        # (S,)
    advantages: np.ndarray = field(default=None)  # type: ignore[assignment]
    returns: np.ndarray = field(default=None)  # type: ignore[assignment]

    @property
    def n_steps(self) -> int:
        return self.obs.shape[0]

    @property
    def n_agents(self) -> int:
        return self.obs.shape[1]


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    bootstrap: float,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over one episode segment.

    delta_t = r_t + gamma V_{t+1} - V_t with V_T = bootstrap;
    A_t = sum_l (gamma lam)^l delta_{t+l}; returns are A + V.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if rewards.shape != values.shape:
        raise ContractViolation("rewards and values must align")
    T = rewards.size
    adv = np.empty(T)
    next_value = bootstrap
    running = 0.0
    for t in range(T - 1, -1, -1):
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


def collect_rollout(
    env: FanetEnv,
    actor: GaussianPolicyHead,
    critic,
    steps: int,
    rng: np.random.Generator,
    base_seed: int,
    episode_counter: int,
    cfg: TrainerConfig,
) -> tuple[RolloutBatch, int]:
    """Gather ``steps`` env steps, computing GAE per completed segment.

    Episodes reset with seeds derived from (base_seed, episode index); a
    segment cut at the rollout boundary bootstraps with the critic value of
    the next observation.  Returns the batch and the new episode counter.
    """
    n = env.cfg.n_aircraft
    obs_l, gobs_l, act_l, lp_l, mu_l, rew_l, done_l = [], [], [], [], [], [], []

    if env.world is None or env.t >= env.cfg.horizon:
        obs = env.reset(base_seed + EPISODE_SEED_STRIDE * episode_counter)
        episode_counter += 1
    else:
        obs = _observe_current(env)

    seg_start = 0
    val_parts, adv_parts, ret_parts = [], [], []

    def close_segment(bootstrap: float) -> None:
        nonlocal seg_start
        seg_val = critic.value(np.stack(gobs_l[seg_start:]))
        seg_rew = np.array(rew_l[seg_start:])
        a, ret = gae(seg_rew, seg_val, bootstrap, cfg.gamma, cfg.gae_lambda)
        val_parts.append(seg_val)
        adv_parts.append(a)
        ret_parts.append(ret)
        seg_start = len(rew_l)

    for _ in range(steps):
        gobs = obs.reshape(-1)
        mu = actor.mean_net.forward(obs)
        std = np.exp(actor.log_std)
        action = mu + std * rng.standard_normal(mu.shape)
        log_prob = actor._log_prob(mu, action)

        next_obs, r, done = env.step(action)

        obs_l.append(obs)
        gobs_l.append(gobs)
        act_l.append(action)
        lp_l.append(log_prob)
        mu_l.append(mu)
        rew_l.append(r)
        done_l.append(done)

        obs = next_obs
        if done:
            close_segment(0.0)
            obs = env.reset(base_seed + EPISODE_SEED_STRIDE * episode_counter)
            episode_counter += 1

    if seg_start < len(rew_l):
        close_segment(float(critic.value(obs.reshape(-1)[None, :])[0]))

    batch = RolloutBatch(
        obs=np.stack(obs_l),
        global_obs=np.stack(gobs_l),
        actions=np.stack(act_l),
        log_prob_old=np.stack(lp_l),
        mu_old=np.stack(mu_l),
        log_std_old=actor.log_std.copy(),
        rewards=np.array(rew_l),
        values=np.concatenate(val_parts),
        dones=np.array(done_l, dtype=bool),
        advantages=np.concatenate(adv_parts),
        returns=np.concatenate(ret_parts),
    )
    return batch, episode_counter


def _observe_current(env: FanetEnv) -> np.ndarray:
    from .env import observe_all

    return observe_all(env.world, env.cfg)


def actor_loss(
    actor: GaussianPolicyHead,
    obs: np.ndarray,
    actions: np.ndarray,
    log_prob_old: np.ndarray,
    advantages: np.ndarray,
    mu_old: np.ndarray,
    log_std_old: np.ndarray,
    cfg: TrainerConfig,
) -> float:
    """Clipped-surrogate actor objective, arranged for descent.

    loss = -mean(min(r A, clip(r) A)) - entropy_coeff * S
           + kl_coeff * mean(KL(old || new)).
    """
    lp_new = actor.log_prob(obs, actions)
    ratio = np.exp(lp_new - log_prob_old)
    clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    surr = np.minimum(ratio * advantages, clipped * advantages)
    mu_new = actor.mean_net.forward(obs)
    kl = actor.kl_divergence(mu_old, log_std_old, mu_new).mean()
    return float(-surr.mean() - cfg.entropy_coeff * actor.entropy() + cfg.kl_coeff * kl)


def _actor_loss_and_grads(actor, obs, actions, log_prob_old, advantages, mu_old, log_std_old, cfg):
    m = obs.shape[0]
    lp_new, mu_new, cache = actor.log_prob_cached(obs, actions)
    ratio = np.exp(lp_new - log_prob_old)
    if not np.all(np.isfinite(ratio)):
        return None  # caller skips this minibatch
    clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    unclipped_term = ratio * advantages
    clipped_term = clipped * advantages
    surr = np.minimum(unclipped_term, clipped_term)
    inside = (ratio > 1.0 - cfg.clip_eps) & (ratio < 1.0 + cfg.clip_eps)
    active = (unclipped_term <= clipped_term) | inside
    d_lp = -(active * ratio * advantages) / m

    var = np.exp(2.0 * actor.log_std)
    var_old = np.exp(2.0 * log_std_old)
    kl = actor.kl_divergence(mu_old, log_std_old, mu_new)
    d_mu_kl = cfg.kl_coeff / m * (mu_new - mu_old) / var

    diff = actions - mu_new
    d_mu = d_lp[:, None] * diff / var + d_mu_kl
    net_grads, _ = actor.mean_net.backward(cache, d_mu)

    z2 = diff * diff / var
    d_log_std = (d_lp[:, None] * (z2 - 1.0)).sum(axis=0)
    d_log_std -= cfg.entropy_coeff
    d_log_std += cfg.kl_coeff / m * (1.0 - (var_old + (mu_old - mu_new) ** 2) / var).sum(axis=0)

    loss = float(-surr.mean() - cfg.entropy_coeff * actor.entropy() + cfg.kl_coeff * kl.mean())
    stats = {"kl": float(kl.mean()), "entropy": actor.entropy(), "clip_frac": float((~active).mean())}
    return loss, net_grads + [d_log_std], stats


def critic_loss(
    critic,
    global_obs: np.ndarray,
    returns: np.ndarray,
    values_old: np.ndarray,
    cfg: TrainerConfig,
) -> float:
    """Clipped value objective: mean of max(unclipped, clipped) squared errors."""
    v = critic.value(global_obs)
    return float(_value_objective(v, returns, values_old, cfg.clip_eps))


def _value_objective(v: np.ndarray, returns: np.ndarray, values_old: np.ndarray, eps: float) -> float:
    clipped = np.clip(v, values_old - eps, values_old + eps)
    return float(np.mean(np.maximum((v - returns) ** 2, (clipped - returns) ** 2)))


def _critic_loss_and_grads(critic, global_obs, returns, values_old, cfg):
    m = global_obs.shape[0]
    v, cache = critic.value_cached(global_obs)
    clipped = np.clip(v, values_old - cfg.clip_eps, values_old + cfg.clip_eps)
    err_unclipped = (v - returns) ** 2
    err_clipped = (clipped - returns) ** 2
    loss = float(np.mean(np.maximum(err_unclipped, err_clipped)))
    take_unclipped = err_unclipped >= err_clipped
    inside = (v > values_old - cfg.clip_eps) & (v < values_old + cfg.clip_eps)
    d_v = np.where(
        take_unclipped,
        2.0 * (v - returns),
        np.where(inside, 2.0 * (clipped - returns), 0.0),
    ) / m

    def loss_fn(values: np.ndarray) -> float:
        return _value_objective(values, returns, values_old, cfg.clip_eps)

    grads = critic.backward(cache, d_v, loss_fn)
    return loss, grads


def evaluate(actor: GaussianPolicyHead, cfg: ScenarioConfig, n_episodes: int, seed: int) -> tuple[float, float]:
    """Deterministic-mean-action episode CR statistics.

    Execution is decentralized: only local observations reach the actor,
    and no critic (hence no global observation) exists here.  CR per
    episode is the sum over steps of connected-aircraft counts.
    """
    env = FanetEnv(cfg)
    crs = np.empty(n_episodes)
    for ep in range(n_episodes):
        obs = env.reset(seed + EVAL_SEED_STRIDE * ep)
        total = 0.0
        for _ in range(cfg.horizon):
            action = actor.mean(obs)
            obs, r, done = env.step(action)
            total += r * cfg.n_aircraft
            if done:
                break
        crs[ep] = total
    return float(crs.mean()), float(crs.std())


@dataclass
class UpdateStats:
    actor_loss: float
    critic_loss: float
    kl: float
    entropy: float
    actor_grad_norm: float
    critic_grad_norm: float
    skipped_minibatches: int = 0
    aborted: bool = False


def _grad_norm(grads: list[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


class Trainer:
    """Owns the actor, critic, optimizers and the training/evaluation loop."""

    def __init__(
        self,
        scenario_cfg: ScenarioConfig,
        critic,
        cfg: TrainerConfig | None = None,
        seed: int = 0,
    ):
        self.scenario_cfg = scenario_cfg
        self.cfg = cfg or TrainerConfig()
        self.seed = seed
        self.env = FanetEnv(scenario_cfg)
        actor_rng = np.random.default_rng([seed, 0])
        self.actor = GaussianPolicyHead.create(
            scenario_cfg.obs_dim, scenario_cfg.action_dim, ACTOR_HIDDEN, actor_rng
        )
        self.critic = critic
        self.actor_opt = Adam(self.actor.params(), lr=self.cfg.lr)
        self.critic_opt = Adam(critic.adam_params(), lr=self.cfg.lr)
        self.rollout_rng = np.random.default_rng([seed, 1])
        self.shuffle_rng = np.random.default_rng([seed, 2])
        self.episode_counter = 0
        self.env_steps = 0
        self.last_stats: UpdateStats | None = None

    def update(self, batch: RolloutBatch) -> UpdateStats:
        """One MAPPO update: epochs of shuffled minibatches on both losses.

        Advantages are normalized once per update.  Non-finite ratios skip a
        minibatch with a warning; a non-finite loss aborts the whole update
        and restores the pre-update parameters.
        """
        cfg = self.cfg
        adv = batch.advantages
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

        S, n = batch.n_steps, batch.n_agents
        obs_flat = batch.obs.reshape(S * n, -1)
        act_flat = batch.actions.reshape(S * n, -1)
        lp_flat = batch.log_prob_old.reshape(S * n)
        mu_flat = batch.mu_old.reshape(S * n, -1)
        adv_flat = np.repeat(adv, n)

        actor_snapshot = [p.copy() for p in self.actor.params()]
        critic_snapshot = [p.copy() for p in self.critic.adam_params()]
        theta_snapshot = (
            self.critic.spec.theta.copy() if self.critic.kind == "quantum" else None
        )

        stats = UpdateStats(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        n_actor_mb = 0
        n_critic_mb = 0
        try:
            for _ in range(cfg.epochs):
                order = self.shuffle_rng.permutation(S * n)
                for lo in range(0, S * n, cfg.minibatch_size):
                    idx = order[lo : lo + cfg.minibatch_size]
                    res = _actor_loss_and_grads(
                        self.actor,
                        obs_flat[idx],
                        act_flat[idx],
                        lp_flat[idx],
                        adv_flat[idx],
                        mu_flat[idx],
                        batch.log_std_old,
                        cfg,
                    )
                    if res is None:
                        stats.skipped_minibatches += 1
                        warnings.warn("skipped actor minibatch: non-finite ratio", RuntimeWarning)
                        continue
                    loss, grads, mb_stats = res
                    if not np.isfinite(loss):
                        raise TrainingError("non-finite actor loss")
                    self.actor_opt.step(self.actor.params(), grads)
                    stats.actor_loss += loss
                    stats.kl += mb_stats["kl"]
                    stats.entropy = mb_stats["entropy"]
                    stats.actor_grad_norm += _grad_norm(grads)
                    n_actor_mb += 1

                step_order = self.shuffle_rng.permutation(S)
                for lo in range(0, S, cfg.minibatch_size):
                    idx = step_order[lo : lo + cfg.minibatch_size]
                    loss, grads = _critic_loss_and_grads(
                        self.critic,
                        batch.global_obs[idx],
                        batch.returns[idx],
                        batch.values[idx],
                        cfg,
                    )
                    if not np.isfinite(loss):
                        raise TrainingError("non-finite critic loss")
                    self.critic_opt.step(self.critic.adam_params(), grads)
                    stats.critic_loss += loss
                    stats.critic_grad_norm += _grad_norm(grads)
                    n_critic_mb += 1
        except TrainingError as exc:
            for p, snap in zip(self.actor.params(), actor_snapshot):
                p[...] = snap
            for p, snap in zip(self.critic.adam_params(), critic_snapshot):
                p[...] = snap
            if theta_snapshot is not None:
                self.critic.spec.theta = theta_snapshot
            warnings.warn(f"update aborted, parameters restored: {exc}", RuntimeWarning)
            stats.aborted = True
            return stats

        if n_actor_mb:
            stats.actor_loss /= n_actor_mb
            stats.kl /= n_actor_mb
            stats.actor_grad_norm /= n_actor_mb
        if n_critic_mb:
            stats.critic_loss /= n_critic_mb
            stats.critic_grad_norm /= n_critic_mb
        return stats

    def train(
        self,
        total_steps: int,
        on_eval=None,
        log_path=None,
    ) -> list[dict]:
        """Run rollout/update cycles for ``total_steps`` env steps.

        Evaluates the deterministic policy every ``eval_interval`` env steps
        (one evaluation per crossed boundary) and returns the curve as a
        list of {env_steps, cr_mean, cr_std, actor_loss, critic_loss} dicts.
        ``on_eval(point)`` is called after each evaluation.  ``log_path``
        additionally appends one CSV row per evaluation with wall_step (the
        update ordinal) in front.
        """
        cfg = self.cfg
        curve: list[dict] = []
        next_eval = cfg.eval_interval
        log_fh = None
        if log_path is not None:
            log_fh = open(log_path, "w", newline="", encoding="utf-8")
            log_fh.write("wall_step,env_steps,eval_cr_mean,eval_cr_std,actor_loss,critic_loss\n")
            log_fh.flush()
        n_updates = 0
        try:
            while self.env_steps < total_steps:
                steps = min(cfg.rollout_steps, total_steps - self.env_steps)
                batch, self.episode_counter = collect_rollout(
                    self.env,
                    self.actor,
                    self.critic,
                    steps,
                    self.rollout_rng,
                    self.seed,
                    self.episode_counter,
                    cfg,
                )
                self.env_steps += steps
                self.last_stats = self.update(batch)
                n_updates += 1
                while next_eval <= self.env_steps:
                    eval_seed = int(
                        np.random.default_rng([self.seed, 3, next_eval]).integers(0, 2**31 - 1)
                    )
                    cr_mean, cr_std = evaluate(self.actor, self.scenario_cfg, cfg.eval_episodes, eval_seed)
                    point = {
                        "env_steps": next_eval,
                        "cr_mean": cr_mean,
                        "cr_std": cr_std,
                        "actor_loss": self.last_stats.actor_loss,
                        "critic_loss": self.last_stats.critic_loss,
                    }
                    curve.append(point)
                    if log_fh is not None:
                        log_fh.write(
                            f"{n_updates},{next_eval},{cr_mean},{cr_std},"
                            f"{self.last_stats.actor_loss},{self.last_stats.critic_loss}\n"
                        )
                        log_fh.flush()
                    if on_eval is not None:
                        on_eval(point)
                    next_eval += cfg.eval_interval
        finally:
            if log_fh is not None:
                log_fh.close()
        return curve
