"""Pessimistic value iteration with a Bernstein-style lower confidence bonus.

Inner products over next states are accumulated left to right in a fixed order
(see ``_seq_dot``) so a scalar re-implementation reproduces every table
bit-for-bit.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Union

import numpy as np

from .dataset import (
    TransitionCounts,
    TransitionDataset,
    count_transitions,
    empirical_reward_means,
    split_and_subsample,
)
from .mdp import Policy, TabularMdp

TIE_BREAKS = ("lowest-index", "highest-Q-then-lowest-index")


@dataclass(frozen=True)
class SolverConfig:
    c_b: float = 2.0
    delta: float = 0.1
    iota: Union[float, str] = "auto"
    tie_break: str = "lowest-index"
    use_variance: bool = True

    def __post_init__(self):
        if not self.c_b > 0:
            raise ValueError("c_b must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.iota != "auto" and not float(self.iota) > 0:
            raise ValueError("iota must be positive or 'auto'")
        if self.tie_break not in TIE_BREAKS:
            raise ValueError(f"tie_break must be one of {TIE_BREAKS}")

    def resolve_iota(self, H: int, S: int, A: int, N: int) -> float:
        if self.iota == "auto":
            # N = 0 would send the log to -inf; an empty dataset counts as one
            return math.log(2 * H * S * A * max(N, 1) / self.delta)
        return float(self.iota)


@dataclass
class PessimisticSolution:
    q_lower: np.ndarray  # (H, S, A)
    v_lower: np.ndarray  # (H+1, S)
    bonus: np.ndarray  # (H, S, A)
    n_prime: np.ndarray  # (H, S, A)
    p_hat: np.ndarray  # (H, S, A, S)
    policy: Policy
    iota: float
    cfg: SolverConfig
    rewards: np.ndarray  # (H, S, A) rewards the backward pass used
    q_unclipped: np.ndarray  # (H, S, A) r + P_hat V - b before the max with 0
    counts: Optional[TransitionCounts] = None

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.q_lower.shape

    def to_json(self) -> dict:
        return {
            "Q_lower": self.q_lower.tolist(),
            "V_lower": self.v_lower.tolist(),
            "bonus": self.bonus.tolist(),
            "policy": {"kind": "deterministic", "actions": self.policy.table.tolist()},
            "config": {**asdict(self.cfg), "iota_resolved": self.iota},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def empirical_kernel(counts: TransitionCounts) -> np.ndarray:
    """N(s,a,s') / N(s,a) with all-zero rows where N(s,a) = 0."""
    n3 = counts.n3.astype(np.float64)
    n2 = n3.sum(axis=-1, keepdims=True)
    out = np.zeros_like(n3)
    np.divide(n3, n2, out=out, where=n2 > 0)
    return out


def _seq_dot(p: np.ndarray, v: np.ndarray) -> np.ndarray:
    # sum_j p[..., j] * v[j], accumulated in index order
    acc = p[..., 0] * v[0]
    for j in range(1, p.shape[-1]):
        acc = acc + p[..., j] * v[j]
    return acc


def _bonus(p_hat: np.ndarray, v_next: np.ndarray, n_prime: np.ndarray, c_b: float, H: int,
           iota: float, use_variance: bool) -> tuple[np.ndarray, np.ndarray]:
    """Returns (bonus, P_hat . v_next) for any leading shape of ``p_hat``."""
    mean = _seq_dot(p_hat, v_next)
    if use_variance:
        second = _seq_dot(p_hat, v_next * v_next)
        var = np.maximum(second - mean * mean, 0.0)
        b = c_b * np.sqrt(var * iota / n_prime) + c_b * H * iota / n_prime
    else:
        b = c_b * H * iota / n_prime
    return b, mean


def bernstein_bonus(p_hat_row, v_next, n: int, cfg: SolverConfig, H: int, iota: float) -> float:
    """Bonus for a single (h, s, a) cell with N' = max(n, iota)."""
    p = np.asarray(p_hat_row, dtype=np.float64)[None, :]
    v = np.asarray(v_next, dtype=np.float64)
    n_prime = np.array([max(float(n), iota)])
    b, _ = _bonus(p, v, n_prime, cfg.c_b, H, iota, cfg.use_variance)
    return float(b[0])


def _select(q: np.ndarray, q_raw: np.ndarray, tie_break: str) -> np.ndarray:
    if tie_break == "lowest-index":
        return np.argmax(q, axis=-1)
    # among maximizers of q prefer the larger unclipped estimate, then the lower index
    best = q.max(axis=-1, keepdims=True)
    key = np.where(q == best, q_raw, -np.inf)
    return np.argmax(key, axis=-1)


def run_vi_lcb(
    counts: TransitionCounts,
    rewards: np.ndarray,
    cfg: SolverConfig = SolverConfig(),
    n_trajectories: Optional[int] = None,
) -> PessimisticSolution:
    """Backward pass h = H-1..0 computing P_hat, the bonus, clipped Q and greedy policy."""
    H, S, A = counts.dims
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.shape != (H, S, A):
        raise ValueError(f"rewards shape {rewards.shape} does not match counts dims {(H, S, A)}")
    N = counts.n_trajectories if n_trajectories is None else n_trajectories
    iota = cfg.resolve_iota(H, S, A, N)

    p_hat = empirical_kernel(counts)
    n_prime = np.maximum(counts.n2.astype(np.float64), iota)
    q = np.zeros((H, S, A))
    q_raw = np.zeros((H, S, A))
    b = np.zeros((H, S, A))
    v = np.zeros((H + 1, S))
    pi = np.zeros((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        b[h], mean = _bonus(p_hat[h], v[h + 1], n_prime[h], cfg.c_b, H, iota, cfg.use_variance)
        q_raw[h] = rewards[h] + mean - b[h]
        q[h] = np.maximum(q_raw[h], 0.0)
        v[h] = q[h].max(axis=-1)
        pi[h] = _select(q[h], q_raw[h], cfg.tie_break)
    return PessimisticSolution(q, v, b, n_prime, p_hat, Policy.deterministic(pi), iota, cfg,
                               rewards, q_raw, counts)


def solver_rewards(mdp: TabularMdp, d0) -> np.ndarray:
    """Known rewards, except noisy cells, which use the empirical mean in ``d0``.

    A noisy cell with no sample keeps its known mean; it only enters through
    a fully penalized, clipped Q entry.
    """
    if mdp.reward_noise is None:
        return mdp.rewards
    mean, cnt = empirical_reward_means(d0, mdp.dims)
    use = mdp.reward_noise.mask & (cnt > 0)
    return np.where(use, mean, mdp.rewards)


def run_subsampled_vi_lcb(
    data: TransitionDataset, mdp: TabularMdp, cfg: SolverConfig = SolverConfig(), seed: int = 0
) -> PessimisticSolution:
    d0 = split_and_subsample(data, cfg.delta, seed)
    counts = count_transitions(d0, mdp.dims)
    return run_vi_lcb(counts, solver_rewards(mdp, d0), cfg, n_trajectories=data.n)
