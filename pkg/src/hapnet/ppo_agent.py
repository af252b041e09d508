"""PPO caching controller with a multivariate-Bernoulli action head.

The agent observes the current cache placement and the per-HAP request
indicators (2*K*C bits), emits one Bernoulli probability per (HAP, content)
cell, and its sampled bit vector is projected to a capacity-feasible
placement by a per-HAP first-fit scan.  Learning follows the clipped
surrogate objective on generalized-advantage estimates, with the critic
regressed onto in-batch discounted reward-to-go.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import yaml

from .traffic import CachePlacement

PROB_FLOOR = 1e-6


@dataclass
class PpoConfig:
    lr_actor: float = 3e-4
    lr_critic: float = 3e-4
    minibatch: int = 32
    discount: float = 0.99
    trace_decay: float = 0.95
    clip_ratio: float = 0.2
    iters_max: int = 300
    iters_minibatch: int = 10
    horizon: int = 64
    hidden: tuple[int, int] = (256, 128)
    normalize_advantages: bool = True
    # Kept for config fidelity; the clipped-surrogate update has no target
    # network, so nothing consumes it.
    soft_update_lr: float = 5e-3

    def __post_init__(self):
        if not (0 < self.discount < 1) or not (0 < self.trace_decay < 1):
            raise ValueError("discount and trace decay must lie in (0, 1)")
        if self.clip_ratio <= 0:
            raise ValueError("clip ratio must be positive")


@dataclass
class Transition:
    """One (state, action, reward, next state) sample; reward is -power cost."""

    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    log_prob: float | None = None


def _trunk(in_dim: int, hidden: tuple[int, int], out_dim: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(in_dim, hidden[0]),
        nn.Tanh(),
        nn.Linear(hidden[0], hidden[1]),
        nn.Tanh(),
        nn.Linear(hidden[1], out_dim),
    )


class ActorCritic(nn.Module):
    """Actor emitting KC Bernoulli parameters and a scalar state-value critic."""

    def __init__(self, n_haps: int, n_contents: int, hidden: tuple[int, int] = (256, 128)):
        super().__init__()
        self.n_haps = n_haps
        self.n_contents = n_contents
        self.state_dim = 2 * n_haps * n_contents
        self.action_dim = n_haps * n_contents
        self.actor = _trunk(self.state_dim, hidden, self.action_dim)
        self.critic = _trunk(self.state_dim, hidden, 1)

    def action_probs(self, state: torch.Tensor) -> torch.Tensor:
        """Bernoulli parameters squashed into [floor, 1 - floor] to keep log-probs finite."""
        return PROB_FLOOR + (1.0 - 2.0 * PROB_FLOOR) * torch.sigmoid(self.actor(state))

    def value(self, state: torch.Tensor) -> torch.Tensor:
        return self.critic(state).squeeze(-1)

    def log_prob(self, states: torch.Tensor, actions: torch.Tensor) -> torch.Tensor:
        p = self.action_probs(states)
        logp = actions * torch.log(p) + (1.0 - actions) * torch.log(1.0 - p)
        return logp.sum(dim=-1)


def encode_state(z: CachePlacement, request_indicator: np.ndarray) -> np.ndarray:
    """Concatenate cache bits and per-HAP request-indicator bits (length 2KC)."""
    ind = np.asarray(request_indicator)
    if ind.shape != z.z.shape:
        raise ValueError("request indicator shape must match the placement")
    return np.concatenate([z.z.ravel(), ind.ravel()]).astype(np.float32)


def proc_act(action: np.ndarray, n_sto: int, n_haps: int, n_contents: int) -> CachePlacement:
    """Project a raw bit vector to a capacity-feasible placement.

    Per HAP, keep the first n_sto set bits in content order and clear the
    rest.  Idempotent on its own outputs.
    """
    bits = np.asarray(action).reshape(n_haps, n_contents).astype(np.int8)
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("action bits must be binary")
    kept = bits * (np.cumsum(bits, axis=1) <= n_sto)
    return CachePlacement(kept, n_sto)


def sample_action(policy: ActorCritic, state: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Draw each bit independently from the actor's Bernoulli parameters."""
    with torch.no_grad():
        p = policy.action_probs(torch.as_tensor(state, dtype=torch.float32)).numpy()
    action = (rng.uniform(size=p.shape) < p).astype(np.int8)
    logp = float(np.sum(action * np.log(p) + (1 - action) * np.log1p(-p)))
    return action, logp


def _values(policy: ActorCritic, batch: list[Transition]) -> tuple[np.ndarray, np.ndarray]:
    states = torch.as_tensor(np.stack([t.state for t in batch]), dtype=torch.float32)
    next_states = torch.as_tensor(np.stack([t.next_state for t in batch]), dtype=torch.float32)
    with torch.no_grad():
        return policy.value(states).numpy(), policy.value(next_states).numpy()


def gae(batch: list[Transition], policy: ActorCritic, config: PpoConfig) -> np.ndarray:
    """Generalized advantage estimates over a time-ordered batch.

    A_n = sum_{i >= n} (discount * trace_decay)^(i-n) * td_i with
    td_i = r_i + discount * V(s_{i+1}) - V(s_i), truncated at the batch end.
    """
    if not batch:
        raise ValueError("empty batch")
    v, v_next = _values(policy, batch)
    rewards = np.array([t.reward for t in batch])
    td = rewards + config.discount * v_next - v
    adv = np.zeros(len(batch))
    acc = 0.0
    for n in reversed(range(len(batch))):
        acc = td[n] + config.discount * config.trace_decay * acc
        adv[n] = acc
    return adv


def value_targets(batch: list[Transition], config: PpoConfig) -> np.ndarray:
    """In-batch discounted reward-to-go: V_hat(s_n) = sum_{i >= n} discount^(i-n) r_i."""
    if not batch:
        raise ValueError("empty batch")
    targets = np.zeros(len(batch))
    acc = 0.0
    for n in reversed(range(len(batch))):
        acc = batch[n].reward + config.discount * acc
        targets[n] = acc
    return targets


def clip(x: float, bounds: tuple[float, float]) -> float:
    """Return x limited to [bounds[0], bounds[1]]."""
    lo, hi = bounds
    return lo if x < lo else hi if x > hi else x


def ppo_update(
    policy: ActorCritic,
    actor_opt: torch.optim.Optimizer,
    critic_opt: torch.optim.Optimizer,
    batch: list[Transition],
    advantages: np.ndarray,
    targets: np.ndarray,
    config: PpoConfig,
) -> dict:
    """One clipped-surrogate actor step and one mean-squared critic step.

    The reported surrogate is evaluated before stepping, so at new = old
    policy (all ratios 1) it equals the mean advantage.  Non-finite losses
    abort the update and leave both networks untouched.
    """
    states = torch.as_tensor(np.stack([t.state for t in batch]), dtype=torch.float32)
    actions = torch.as_tensor(np.stack([t.action for t in batch]), dtype=torch.float32)
    old_logp = torch.as_tensor(
        np.array([t.log_prob for t in batch], dtype=np.float64), dtype=torch.float32
    )
    adv = torch.as_tensor(advantages, dtype=torch.float32)
    tgt = torch.as_tensor(targets, dtype=torch.float32)

    ratio = torch.exp(policy.log_prob(states, actions) - old_logp)
    clipped = torch.clamp(ratio, 1.0 - config.clip_ratio, 1.0 + config.clip_ratio)
    surrogate = torch.mean(torch.minimum(ratio * adv, clipped * adv))
    actor_loss = -surrogate
    critic_loss = torch.mean((policy.value(states) - tgt) ** 2)

    report = {
        "surrogate": float(surrogate.detach()),
        "critic_loss": float(critic_loss.detach()),
        "updated": False,
    }
    if not (torch.isfinite(actor_loss) and torch.isfinite(critic_loss)):
        return report

    actor_opt.zero_grad()
    actor_loss.backward()
    actor_opt.step()
    critic_opt.zero_grad()
    critic_loss.backward()
    critic_opt.step()
    report["updated"] = True
    return report


@dataclass
class RewardScale:
    """Running magnitude estimate used to normalize rewards before updates."""

    mean_abs: float = 0.0
    count: int = 0

    def update(self, rewards) -> None:
        for r in np.atleast_1d(rewards):
            self.count += 1
            self.mean_abs += (abs(float(r)) - self.mean_abs) / self.count

    @property
    def scale(self) -> float:
        return max(self.mean_abs, 1e-12)


@dataclass
class TrainResult:
    policy: ActorCritic
    learning_curve: list[float] = field(default_factory=list)


def train(
    env,
    config: PpoConfig,
    rng: np.random.Generator,
    policy: ActorCritic | None = None,
) -> TrainResult:
    """Run the outer-iteration loop: roll out, estimate advantages, update.

    Each outer iteration collects `horizon` transitions from `env`
    (reset/step protocol; env rewards are the negated per-slot power costs),
    computes advantages and targets over the ordered rollout, then performs
    `iters_minibatch` minibatch update steps.  The learning curve records the
    raw (unnormalized) mean reward per iteration.
    """
    torch.manual_seed(int(rng.integers(2**31 - 1)))
    if policy is None:
        policy = ActorCritic(env.n_haps, env.n_contents, hidden=config.hidden)
    actor_opt = torch.optim.Adam(policy.actor.parameters(), lr=config.lr_actor)
    critic_opt = torch.optim.Adam(policy.critic.parameters(), lr=config.lr_critic)

    reward_scale = RewardScale()
    curve: list[float] = []
    for _ in range(config.iters_max):
        state = env.reset()
        rollout: list[Transition] = []
        for _ in range(config.horizon):
            action, logp = sample_action(policy, state, rng)
            next_state, reward, _info = env.step(action)
            rollout.append(Transition(state, action, float(reward), next_state, logp))
            state = next_state
        raw = np.array([t.reward for t in rollout])
        curve.append(float(raw.mean()))

        reward_scale.update(raw)
        scaled = [
            Transition(t.state, t.action, t.reward / reward_scale.scale, t.next_state, t.log_prob)
            for t in rollout
        ]
        advantages = gae(scaled, policy, config)
        targets = value_targets(scaled, config)
        if config.normalize_advantages and len(advantages) > 1:
            advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

        n_mb = min(config.minibatch, len(scaled))
        for _ in range(config.iters_minibatch):
            idx = rng.choice(len(scaled), size=n_mb, replace=False)
            ppo_update(
                policy, actor_opt, critic_opt,
                [scaled[i] for i in idx], advantages[idx], targets[idx], config,
            )
    return TrainResult(policy=policy, learning_curve=curve)


CHECKPOINT_VERSION = 1


def save_checkpoint(
    policy: ActorCritic,
    path: str | Path,
    config: PpoConfig,
    iteration: int = 0,
    seed: int | None = None,
    config_hash: str = "",
    optimizer_state: dict | None = None,
) -> None:
    """Write the parameter blob plus a structured-text metadata sidecar."""
    path = Path(path)
    blob = {
        "version": CHECKPOINT_VERSION,
        "n_haps": policy.n_haps,
        "n_contents": policy.n_contents,
        "hidden": config.hidden,
        "state_dict": policy.state_dict(),
        "optimizer_state": optimizer_state,
    }
    torch.save(blob, path)
    meta = {
        "version": CHECKPOINT_VERSION,
        "config_hash": config_hash,
        "iteration": iteration,
        "seed": seed,
        "ppo_config": asdict(config),
    }
    path.with_suffix(path.suffix + ".meta.yaml").write_text(yaml.safe_dump(meta))


def load_checkpoint(path: str | Path) -> tuple[ActorCritic, dict]:
    path = Path(path)
    blob = torch.load(path, weights_only=False)
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {blob.get('version')}")
    policy = ActorCritic(blob["n_haps"], blob["n_contents"], hidden=tuple(blob["hidden"]))
    policy.load_state_dict(blob["state_dict"])
    meta_path = path.with_suffix(path.suffix + ".meta.yaml")
    meta = yaml.safe_load(meta_path.read_text()) if meta_path.exists() else {}
    return policy, meta
