"""Offline datasets: trajectory sampling, the split/trim/subsample step, and counts."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.special import ndtri

from . import rng
from .mdp import Policy, TabularMdp, _require

TRIM_CONSTANT = 10.0


class DatasetIndexError(ValueError):
    def __init__(self, trajectory: int, step: int, what: str):
        self.trajectory = trajectory
        self.step = step
        super().__init__(f"trajectory {trajectory}, step {step}: {what}")


@dataclass
class TransitionDataset:
    """N trajectories of length H stored column-wise.

    ``states`` has H+1 columns: column h is s_h and column h+1 is the
    successor recorded with step h.
    """

    states: np.ndarray  # (N, H+1) int
    actions: np.ndarray  # (N, H) int
    rewards: np.ndarray  # (N, H) float
    num_states: int
    num_actions: int
    seed: int = 0
    source: str = ""

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def H(self) -> int:
        return self.actions.shape[1]

    def head(self, n: int) -> "TransitionDataset":
        return TransitionDataset(self.states[:n], self.actions[:n], self.rewards[:n],
                                 self.num_states, self.num_actions, self.seed, self.source)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.H, self.num_states, self.num_actions

    def records(self):
        """Yield (i, h, s, a, r, s') tuples in trajectory order."""
        for i in range(self.n):
            for h in range(self.H):
                yield (i, h, int(self.states[i, h]), int(self.actions[i, h]),
                       float(self.rewards[i, h]), int(self.states[i, h + 1]))

    def transitions(self) -> "TransitionSet":
        N, H = self.actions.shape
        return TransitionSet(
            traj=np.repeat(np.arange(N), H),
            h=np.tile(np.arange(H), N),
            s=self.states[:, :-1].reshape(-1),
            a=self.actions.reshape(-1),
            r=self.rewards.reshape(-1),
            sp=self.states[:, 1:].reshape(-1),
            n_trajectories=N,
        )


@dataclass
class TransitionSet:
    """A flat multiset of (h, s, a, r, s') transitions, e.g. the subsampled D0."""

    traj: np.ndarray
    h: np.ndarray
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    sp: np.ndarray
    n_trajectories: int
    n_main: Optional[np.ndarray] = None  # (H, S)
    n_aux: Optional[np.ndarray] = None
    n_trim: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.h)

    def transitions(self) -> "TransitionSet":
        return self


@dataclass
class TransitionCounts:
    n3: np.ndarray  # (H, S, A, S) int
    n_trajectories: int = 0

    @property
    def n2(self) -> np.ndarray:
        return self.n3.sum(axis=-1)

    @property
    def n1(self) -> np.ndarray:
        return self.n3.sum(axis=(-1, -2))

    @property
    def dims(self) -> tuple[int, int, int]:
        H, S, A, _ = self.n3.shape
        return H, S, A


def _inverse_cdf(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    # index j with cdf[j-1] <= u < cdf[j]; zero-mass entries are never chosen
    return (cdf <= u[:, None]).sum(axis=-1)


def _cdf(probs: np.ndarray) -> np.ndarray:
    c = np.cumsum(probs, axis=-1)
    c[..., -1] = 1.0
    return c


def sample_trajectories(mdp: TabularMdp, mu: Policy, n: int, seed: int) -> TransitionDataset:
    """Roll out ``n`` independent trajectories of ``mu`` in ``mdp``.

    Trajectory i consumes a fixed block of the keyed stream, so the first m
    trajectories of an n-trajectory dataset equal the m-trajectory dataset.
    """
    _require(mdp, mu)
    if n < 0:
        raise ValueError("n must be non-negative")
    H, S, A = mdp.dims
    u = rng.stream(seed, rng.SAMPLE).random((n, H + 1, 3))
    states = np.zeros((n, H + 1), dtype=np.int64)
    actions = np.zeros((n, H), dtype=np.int64)
    rewards = np.zeros((n, H))
    if n == 0:
        return TransitionDataset(states, actions, rewards, S, A, seed, mdp.name)

    kcdf = _cdf(mdp.kernel)
    mcdf = _cdf(mu.probs(A))
    states[:, 0] = _inverse_cdf(np.broadcast_to(_cdf(mdp.p0), (n, S)), u[:, 0, 0])
    noise = mdp.reward_noise
    for h in range(H):
        s = states[:, h]
        a = _inverse_cdf(mcdf[h, s], u[:, h + 1, 0])
        actions[:, h] = a
        states[:, h + 1] = _inverse_cdf(kcdf[h, s, a], u[:, h + 1, 1])
        r = mdp.rewards[h, s, a]
        if noise is not None:
            noisy = noise.mask[h, s, a]
            if noise.kind == "bernoulli":
                draw = (u[:, h + 1, 2] < r).astype(np.float64)
            elif noise.kind == "normal":
                draw = r + ndtri(np.clip(u[:, h + 1, 2], 1e-300, None))
            else:
                raise ValueError(f"unknown reward noise {noise.kind!r}")
            r = np.where(noisy, draw, r)
        rewards[:, h] = r
    return TransitionDataset(states, actions, rewards, S, A, seed, mdp.name)


def trim_log(H: int, S: int, delta: float) -> float:
    return math.log(H * S / delta)


def trim_count(n_aux, log_term: float):
    """max(0, n - 10 sqrt(n * log_term)), vectorized over ``n_aux``."""
    n = np.asarray(n_aux, dtype=np.float64)
    return np.maximum(0.0, n - TRIM_CONSTANT * np.sqrt(n * log_term))


def split_and_subsample(data: TransitionDataset, delta: float, seed: int) -> TransitionSet:
    """Split into main/aux halves and keep min(trim, main) main transitions per (h, s).

    The main half takes the first ceil(N/2) trajectories.  Subsampling at each
    (h, s) is uniform without replacement over all actions jointly, with its
    own keyed stream so cells are independent of visiting order.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    N, H, S = data.n, data.H, data.num_states
    n_main_traj = (N + 1) // 2
    main_states = data.states[:n_main_traj, :H]
    aux_states = data.states[n_main_traj:, :H]

    n_main = np.zeros((H, S), dtype=np.int64)
    n_aux = np.zeros((H, S), dtype=np.int64)
    for h in range(H):
        n_main[h] = np.bincount(main_states[:, h], minlength=S)[:S]
        n_aux[h] = np.bincount(aux_states[:, h], minlength=S)[:S]
    n_trim = trim_count(n_aux, trim_log(H, S, delta))
    keep = np.minimum(np.floor(n_trim).astype(np.int64), n_main)

    picked_traj, picked_h = [], []
    for h in range(H):
        col = main_states[:, h]
        for s in range(S):
            k = int(keep[h, s])
            if k == 0:
                continue
            idx = np.flatnonzero(col == s)
            if k < len(idx):
                chosen = rng.stream(seed, rng.SUBSAMPLE, h, s).choice(len(idx), size=k, replace=False)
                idx = idx[np.sort(chosen)]
            picked_traj.append(idx)
            picked_h.append(np.full(len(idx), h, dtype=np.int64))

    if picked_traj:
        traj = np.concatenate(picked_traj)
        hh = np.concatenate(picked_h)
    else:
        traj = np.zeros(0, dtype=np.int64)
        hh = np.zeros(0, dtype=np.int64)
    return TransitionSet(
        traj=traj,
        h=hh,
        s=data.states[traj, hh],
        a=data.actions[traj, hh],
        r=data.rewards[traj, hh],
        sp=data.states[traj, hh + 1],
        n_trajectories=N,
        n_main=n_main,
        n_aux=n_aux,
        n_trim=n_trim,
        meta={"seed": seed, "delta": delta},
    )


def count_transitions(
    data: Union[TransitionDataset, TransitionSet], dims: tuple[int, int, int]
) -> TransitionCounts:
    H, S, A = dims
    t = data.transitions()
    for arr, hi, what in ((t.h, H, "step"), (t.s, S, "state"), (t.a, A, "action"), (t.sp, S, "next state")):
        bad = np.flatnonzero((arr < 0) | (arr >= hi))
        if bad.size:
            j = bad[0]
            raise DatasetIndexError(int(t.traj[j]), int(t.h[j]), f"{what} {int(arr[j])} outside [0, {hi})")
    flat = ((t.h * S + t.s) * A + t.a) * S + t.sp
    n3 = np.bincount(flat, minlength=H * S * A * S).reshape(H, S, A, S)
    return TransitionCounts(n3, t.n_trajectories)


def empirical_reward_means(data: Union[TransitionDataset, TransitionSet], dims) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell mean of recorded rewards and the cell visit counts."""
    H, S, A = dims
    t = data.transitions()
    flat = (t.h * S + t.s) * A + t.a
    cnt = np.bincount(flat, minlength=H * S * A).reshape(H, S, A)
    tot = np.bincount(flat, weights=t.r, minlength=H * S * A).reshape(H, S, A)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(cnt > 0, tot / np.maximum(cnt, 1), 0.0)
    return mean, cnt
