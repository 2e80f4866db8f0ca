"""Instance generators: the lower-bound family, the necessity instance, chains and random MDPs."""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng
from .mdp import NoPositiveGap, Policy, RewardNoise, TabularMdp, gap_min


class GenerationBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class LowerBoundParams:
    S: int
    A: int
    H: int
    tau: float
    lam: float
    phi: tuple  # H rows of S distinguished actions

    def __post_init__(self):
        if self.S < 1 or self.A < 2 or self.H < 2:
            raise ValueError("need S >= 1, A >= 2, H >= 2")
        if not 0.0 < self.tau < 0.5:
            raise ValueError("tau must lie in (0, 1/2)")
        if not 0.0 < self.lam <= 1.0 / 3.0:
            raise ValueError("lambda must lie in (0, 1/3]")
        phi = np.asarray(self.phi)
        if phi.shape != (self.H, self.S) or phi.min() < 0 or phi.max() >= self.A:
            raise ValueError("phi must be an H x S table of actions in [0, A)")

    @classmethod
    def random(cls, S: int, A: int, H: int, tau: float, lam: float, phi_seed: int) -> "LowerBoundParams":
        phi = rng.stream(phi_seed, rng.INSTANCE).integers(0, A, size=(H, S))
        return cls(S, A, H, tau, lam, tuple(map(tuple, phi.tolist())))

    @property
    def phi_table(self) -> np.ndarray:
        return np.asarray(self.phi, dtype=np.int64)


def make_lower_bound_instance(p: LowerBoundParams, behavior: str = "paper") -> tuple[TabularMdp, Policy]:
    """The family M_phi: S true states plus an absorbing good and bad state, horizon 2H+1.

    True states are 0..S-1, the good state is S and the bad state is S+1.  For
    steps 0..H-1 each true state stays put with probability 1 - 1/H and
    otherwise moves to good/bad with 1/(2H) each, tilted to (1 +- 2 tau)/(2H)
    under the distinguished action.  Step H splits 1/2 to good and bad.  The
    good state pays 1 per step from step H+1 on (H rewarded steps).

    ``behavior="paper"`` is uniform at true states and action 0 at good/bad;
    ``"uniform"`` is uniform everywhere.
    """
    S, A, H, tau, lam = p.S, p.A, p.H, p.tau, p.lam
    phi = p.phi_table
    T = 2 * H + 1
    n = S + 2
    g, b = S, S + 1
    kernel = np.zeros((T, n, A, n))
    for h in range(T):
        for s in range(n):
            kernel[h, s, :, s] = 1.0
    for h in range(H):
        for i in range(S):
            kernel[h, i, :, :] = 0.0
            kernel[h, i, :, i] = 1.0 - 1.0 / H
            kernel[h, i, :, g] = 1.0 / (2 * H)
            kernel[h, i, :, b] = 1.0 / (2 * H)
            a = phi[h, i]
            kernel[h, i, a, g] = (1.0 + 2 * tau) / (2 * H)
            kernel[h, i, a, b] = (1.0 - 2 * tau) / (2 * H)
    for i in range(S):
        kernel[H, i, :, :] = 0.0
        kernel[H, i, :, g] = 0.5
        kernel[H, i, :, b] = 0.5
    rewards = np.zeros((T, n, A))
    rewards[H + 1:, g, :] = 1.0
    p0 = np.zeros(n)
    p0[:S] = lam / S
    p0[g] = p0[b] = (1.0 - lam) / 2.0
    name = f"lb({S},{A},{H},{tau},{lam})"
    mdp = TabularMdp(kernel, rewards, p0, name=name)

    mu = np.full((T, n, A), 1.0 / A)
    if behavior == "paper":
        mu[:, g:, :] = 0.0
        mu[:, g:, 0] = 1.0
    elif behavior != "uniform":
        raise ValueError(f"unknown behavior {behavior!r}")
    return mdp, Policy.stochastic(mu)


@dataclass(frozen=True)
class NecessityParams:
    k: int
    tau: float
    reward_model: str = "bernoulli"

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if not 0.0 < self.tau < 0.5:
            raise ValueError("tau must lie in (0, 1/2)")
        if self.reward_model not in ("bernoulli", "normal"):
            raise ValueError("reward_model must be 'bernoulli' or 'normal'")


# state layout of the necessity instance
NEC_START = 0
NEC_S0 = 1


def nec_state(i: int) -> int:
    """Index of s_i, i = 1..k."""
    return NEC_S0 + i


def make_necessity_instance(p: NecessityParams) -> tuple[TabularMdp, Policy]:
    """Horizon 2, two actions, k+2 states.

    From the start state, action 0 leads to s_0 and action 1 to a uniformly
    random s_1..s_k.  Second-step rewards are 1/2 everywhere except action 0
    at s_k, which pays 1/2 - tau; rewards at s_0 are observed with noise of
    mean 1/2.  Unreachable step/state pairs self-loop with zero reward so they
    carry no gap.  The behavior policy takes action 0 at the start state with
    probability 1/(k+1) and always takes action 0 elsewhere.
    """
    k, tau = p.k, p.tau
    n = k + 2
    kernel = np.zeros((2, n, 2, n))
    for h in range(2):
        for s in range(n):
            kernel[h, s, :, s] = 1.0
    kernel[0, NEC_START, :, :] = 0.0
    kernel[0, NEC_START, 0, NEC_S0] = 1.0
    kernel[0, NEC_START, 1, nec_state(1):] = 1.0 / k
    rewards = np.zeros((2, n, 2))
    rewards[1, NEC_S0:, :] = 0.5
    rewards[1, nec_state(k), 0] = 0.5 - tau
    mask = np.zeros((2, n, 2), dtype=bool)
    mask[1, NEC_S0, :] = True
    p0 = np.zeros(n)
    p0[NEC_START] = 1.0
    mdp = TabularMdp(kernel, rewards, p0, RewardNoise(p.reward_model, mask), name=f"necessity({k},{tau})")

    mu = np.zeros((2, n, 2))
    mu[:, :, 0] = 1.0
    mu[0, NEC_START] = [1.0 / (k + 1), k / (k + 1)]
    return mdp, Policy.stochastic(mu)


def make_random_gap_mdp(S: int, A: int, H: int, gap_floor: float, seed: int,
                        max_attempts: int = 1000) -> TabularMdp:
    """Dirichlet(1) kernel rows and U[0,1] rewards, resampled until gap_min >= gap_floor."""
    if not 0.0 < gap_floor < 1.0:
        raise ValueError("gap_floor must lie in (0, 1)")
    if A < 2:
        raise NoPositiveGap("a single action has no positive gap")
    gen = rng.stream(seed, rng.INSTANCE)
    for _ in range(max_attempts):
        kernel = gen.dirichlet(np.ones(S), size=(H, S, A))
        rewards = gen.random((H, S, A))
        p0 = gen.dirichlet(np.ones(S))
        mdp = TabularMdp(kernel, rewards, p0, name=f"random({S},{A},{H},{gap_floor},{seed})")
        try:
            g, _ = gap_min(mdp)
        except NoPositiveGap:
            continue
        if g >= gap_floor:
            return mdp
    raise GenerationBudgetExceeded(f"no instance with gap_min >= {gap_floor} in {max_attempts} attempts")


def uniform_behavior(mdp: TabularMdp) -> Policy:
    H, S, A = mdp.dims
    return Policy.stochastic(np.full((H, S, A), 1.0 / A))


def instance_hash(mdp: TabularMdp) -> str:
    from .io import mdp_to_json

    blob = json.dumps(mdp_to_json(mdp), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


_SPEC = re.compile(r"^\s*([a-z_]+)\s*\((.*)\)\s*$")


def _num(x: str):
    x = x.strip()
    try:
        return int(x)
    except ValueError:
        return float(x)


def parse_instance(spec: str) -> tuple[TabularMdp, Policy]:
    """Build ``(mdp, mu)`` from a name such as ``lb(3,2,4,0.2,0.3,7)``.

    Names: ``lb(S,A,H,tau,lambda,phi_seed)``, ``necessity(k,tau)``,
    ``random(S,A,H,gap_floor,seed)``, ``chain(gap)`` and
    ``shifted_chain(gap_min)``.  Random and chain instances pair with the
    uniform behavior policy.
    """
    m = _SPEC.match(spec)
    if not m:
        raise ValueError(f"cannot parse instance spec {spec!r}")
    kind = m.group(1)
    args = [_num(a) for a in m.group(2).split(",") if a.strip()]
    if kind == "lb":
        if len(args) != 6:
            raise ValueError("lb expects (S,A,H,tau,lambda,phi_seed)")
        S, A, H, tau, lam, phi_seed = args
        return make_lower_bound_instance(LowerBoundParams.random(int(S), int(A), int(H), tau, lam, int(phi_seed)))
    if kind == "necessity":
        if len(args) not in (2, 3):
            raise ValueError("necessity expects (k,tau)")
        return make_necessity_instance(NecessityParams(int(args[0]), float(args[1])))
    if kind == "random":
        if len(args) != 5:
            raise ValueError("random expects (S,A,H,gap_floor,seed)")
        S, A, H, floor, seed = args
        mdp = make_random_gap_mdp(int(S), int(A), int(H), float(floor), int(seed))
        return mdp, uniform_behavior(mdp)
    if kind in ("chain", "shifted_chain"):
        if len(args) > 1:
            raise ValueError(f"{kind} expects at most one argument")
        make = make_chain_instance if kind == "chain" else make_shifted_chain_instance
        mdp = make(*map(float, args))
        return mdp, uniform_behavior(mdp)
    raise ValueError(f"unknown instance kind {kind!r}")


# ladder chain: per-step next-state rows for the optimal and the other action
_LADDER_P0 = (0.78, 0.11, 0.11, 0.0)
_LADDER_GOOD = (
    (0.91, 0.0, 0.0, 0.09),
    (0.959, 0.0, 0.0, 0.041),
    (0.96, 0.0, 0.0, 0.04),
    (0.25, 0.25, 0.25, 0.25),
    (0.25, 0.25, 0.25, 0.25),
)
_LADDER_BAD = (
    (0.0, 0.0, 0.29, 0.71),
    (0.0, 0.0, 0.641, 0.359),
    (0.0, 0.0, 0.83, 0.17),
    (0.25, 0.25, 0.25, 0.25),
    (0.25, 0.25, 0.25, 0.25),
)
# rung cells, where action 1 is optimal; everywhere else action 0 is
_LADDER_RUNGS = ((0, 0), (1, 3), (2, 3), (3, 3))


def make_chain_instance(gap: float = 0.4) -> TabularMdp:
    """Four states, two actions, horizon 5, every gap equal to ``gap``.

    Next-state rows depend only on the step and on whether the action taken
    is the optimal one.  The optimal action pays 1 and the other 1 - gap, so
    V* is the same at every state of a step and each mistake costs exactly
    gap times the mistaken state's occupancy.

    State 0 is the main lane and state 3 a rung: the optimal policy visits it
    rarely while uniform behavior visits it often.  Rung coverage halves at
    each step (0.78, 0.4, 0.2, 0.105) while the cost of getting it wrong
    roughly halves too, so the data needed for an eps-optimal policy grows
    like 1/eps for eps between gap/32 and gap/4.  State 2 only ever receives
    the non-optimal action's mass, and state 1 is only used at step 0.
    Under uniform behavior the coverage floor P is 0.0525.
    """
    if not 0.0 < gap <= 1.0:
        raise ValueError("gap must lie in (0, 1]")
    H, S, A = 5, 4, 2
    opt = np.zeros((H, S), dtype=np.int64)
    for h, s in _LADDER_RUNGS:
        opt[h, s] = 1
    kernel = np.zeros((H, S, A, S))
    rewards = np.zeros((H, S, A))
    for h in range(H):
        for s in range(S):
            for a in range(A):
                best = a == opt[h, s]
                kernel[h, s, a] = _LADDER_GOOD[h] if best else _LADDER_BAD[h]
                rewards[h, s, a] = 1.0 if best else 1.0 - gap
    return TabularMdp(kernel, rewards, np.array(_LADDER_P0), name=f"chain({gap})")


_SHIFTED_P0 = (0.76, 0.19, 0.05, 0.0)
_SHIFTED_FALL = (0.1, 0.2, 0.75)  # chance that action 0 at step 0 drops into the dead state
SHIFTED_DEAD = 3


def make_shifted_chain_instance(gap_min: float = 0.02) -> TabularMdp:
    """Four states, two actions, horizon 5, with one tiny gap and large ones.

    At step 0, states 0..2 choose between a safe action (1) and one that
    falls into the absorbing zero-reward state 3, with gaps 0.4, 0.8 and 3.
    Initial mass (0.76, 0.19, 0.05) shrinks 4x per state while the cost of a
    mistake only halves, so the data needed for an eps-optimal policy grows
    like 1/eps^2 for eps in 0.1..0.4.  The only other gap is ``gap_min`` at
    the last step of the main state, far below those eps.
    """
    if not 0.0 < gap_min < 0.4:
        raise ValueError("gap_min must lie in (0, 0.4)")
    H, S, A = 5, 4, 2
    dead = SHIFTED_DEAD
    kernel = np.zeros((H, S, A, S))
    kernel[..., 0] = 1.0
    kernel[:, dead] = 0.0
    kernel[:, dead, :, dead] = 1.0
    rewards = np.ones((H, S, A))
    rewards[:, dead] = 0.0
    for s, p in enumerate(_SHIFTED_FALL):
        kernel[0, s, 0] = 0.0
        kernel[0, s, 0, dead] = p
        kernel[0, s, 0, 0] = 1.0 - p
    rewards[H - 1, 0, 1] = 1.0 - gap_min
    return TabularMdp(kernel, rewards, np.array(_SHIFTED_P0), name=f"shifted_chain({gap_min})")
