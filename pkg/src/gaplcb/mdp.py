"""Finite-horizon tabular MDPs and exact dynamic-programming analysis.

Indexing is zero-based throughout: step ``h`` runs over ``0..H-1`` and value
tables carry an extra terminal row ``H`` that is identically zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

ROW_TOL = 1e-12
DEFAULT_OPT_TOL = 1e-9


class ValidationError(ValueError):
    """Raised when an MDP or policy violates its structural invariants."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("; ".join(str(v) for v in report.violations[:5]))


class NoPositiveGap(ValueError):
    """Every action is optimal everywhere, so ``gap_min`` is undefined."""


@dataclass(frozen=True)
class RewardNoise:
    """Observation noise on a subset of reward cells.

    ``rewards`` in the owning MDP hold the means.  ``kind`` is ``"bernoulli"``
    (sample is 1 with probability equal to the mean) or ``"normal"`` (mean plus
    unit-variance Gaussian noise).
    """

    kind: str
    mask: np.ndarray  # (H, S, A) bool


@dataclass
class TabularMdp:
    kernel: np.ndarray  # (H, S, A, S)
    rewards: np.ndarray  # (H, S, A)
    p0: np.ndarray  # (S,)
    reward_noise: Optional[RewardNoise] = None
    name: str = ""

    def __post_init__(self):
        self.kernel = np.asarray(self.kernel, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.p0 = np.asarray(self.p0, dtype=np.float64)

    @property
    def H(self) -> int:
        return self.kernel.shape[0]

    @property
    def S(self) -> int:
        return self.kernel.shape[1]

    @property
    def A(self) -> int:
        return self.kernel.shape[2]

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.H, self.S, self.A

    def with_rewards(self, rewards: np.ndarray, name: str = "") -> "TabularMdp":
        return TabularMdp(self.kernel, rewards, self.p0, None, name or self.name)


@dataclass
class Policy:
    """Per-step action rule; ``table`` is (H, S) ints or (H, S, A) probabilities."""

    kind: str
    table: np.ndarray

    def __post_init__(self):
        if self.kind == "deterministic":
            self.table = np.asarray(self.table, dtype=np.int64)
        elif self.kind == "stochastic":
            self.table = np.asarray(self.table, dtype=np.float64)
        else:
            raise ValueError(f"unknown policy kind {self.kind!r}")

    @classmethod
    def deterministic(cls, actions) -> "Policy":
        return cls("deterministic", actions)

    @classmethod
    def stochastic(cls, probs) -> "Policy":
        return cls("stochastic", probs)

    @property
    def H(self) -> int:
        return self.table.shape[0]

    @property
    def S(self) -> int:
        return self.table.shape[1]

    def probs(self, num_actions: int) -> np.ndarray:
        if self.kind == "stochastic":
            return self.table
        out = np.zeros(self.table.shape + (num_actions,))
        np.put_along_axis(out, self.table[..., None], 1.0, axis=-1)
        return out


@dataclass
class ValueTables:
    V: np.ndarray  # (H+1, S)
    Q: np.ndarray  # (H, S, A)


@dataclass
class OccupancyTable:
    d: np.ndarray  # (H, S, A)

    @property
    def state(self) -> np.ndarray:
        return self.d.sum(axis=-1)


@dataclass
class Violation:
    what: str
    index: tuple
    value: float

    def __str__(self):
        return f"{self.what} at {self.index}: {self.value!r}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_mdp(mdp: TabularMdp, mode: str = "strict") -> ValidationReport:
    """Collect every invariant violation; never raises on bad data."""
    if mode not in ("strict", "relaxed"):
        raise ValueError(f"mode must be 'strict' or 'relaxed', got {mode!r}")
    report = ValidationReport()
    bad = report.violations
    k, r, p0 = mdp.kernel, mdp.rewards, mdp.p0
    if k.ndim != 4 or k.shape[1] != k.shape[3]:
        bad.append(Violation("kernel shape", tuple(k.shape), float("nan")))
        return report
    H, S, A, _ = k.shape
    if H < 1 or S < 1 or A < 1:
        bad.append(Violation("empty dimension", (H, S, A), float("nan")))
        return report
    if r.shape != (H, S, A):
        bad.append(Violation("rewards shape", tuple(r.shape), float("nan")))
    if p0.shape != (S,):
        bad.append(Violation("p0 shape", tuple(p0.shape), float("nan")))
    if not report.ok:
        return report

    for idx in zip(*np.nonzero(~np.isfinite(k) | (k < 0))):
        bad.append(Violation("negative or non-finite kernel entry", tuple(int(i) for i in idx), float(k[idx])))
    sums = k.sum(axis=-1)
    for idx in zip(*np.nonzero(~(np.abs(sums - 1.0) <= ROW_TOL))):
        bad.append(Violation("kernel row does not sum to 1", tuple(int(i) for i in idx), float(sums[idx])))
    if np.any(p0 < 0) or not np.all(np.isfinite(p0)):
        for i in np.nonzero(~np.isfinite(p0) | (p0 < 0))[0]:
            bad.append(Violation("negative or non-finite p0 entry", (int(i),), float(p0[i])))
    if not abs(p0.sum() - 1.0) <= ROW_TOL:
        bad.append(Violation("p0 does not sum to 1", (), float(p0.sum())))
    for idx in zip(*np.nonzero(~np.isfinite(r))):
        bad.append(Violation("non-finite reward", tuple(int(i) for i in idx), float(r[idx])))
    if mode == "strict":
        for idx in zip(*np.nonzero(np.isfinite(r) & ((r < 0) | (r > 1)))):
            bad.append(Violation("reward outside [0,1]", tuple(int(i) for i in idx), float(r[idx])))
    return report


def validate_policy(pi: Policy, mdp: TabularMdp) -> ValidationReport:
    report = ValidationReport()
    H, S, A = mdp.dims
    t = pi.table
    if pi.kind == "deterministic":
        if t.shape != (H, S):
            report.violations.append(Violation("policy shape", tuple(t.shape), float("nan")))
            return report
        for idx in zip(*np.nonzero((t < 0) | (t >= A))):
            report.violations.append(Violation("action out of range", tuple(int(i) for i in idx), float(t[idx])))
    else:
        if t.shape != (H, S, A):
            report.violations.append(Violation("policy shape", tuple(t.shape), float("nan")))
            return report
        for idx in zip(*np.nonzero(t < 0)):
            report.violations.append(Violation("negative action probability", tuple(int(i) for i in idx), float(t[idx])))
        sums = t.sum(axis=-1)
        for idx in zip(*np.nonzero(~(np.abs(sums - 1.0) <= ROW_TOL))):
            report.violations.append(Violation("policy row does not sum to 1", tuple(int(i) for i in idx), float(sums[idx])))
    return report


def _require(mdp: TabularMdp, pi: Optional[Policy] = None, mode: str = "relaxed") -> None:
    report = validate_mdp(mdp, mode)
    if pi is not None and report.ok:
        report = validate_policy(pi, mdp)
    if not report.ok:
        raise ValidationError(report)


def optimal_values(mdp: TabularMdp) -> ValueTables:
    """Backward induction for Q* and V*."""
    _require(mdp)
    H, S, A = mdp.dims
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    for h in range(H - 1, -1, -1):
        Q[h] = mdp.rewards[h] + mdp.kernel[h] @ V[h + 1]
        V[h] = Q[h].max(axis=-1)
    return ValueTables(V, Q)


def policy_values(mdp: TabularMdp, pi: Policy) -> ValueTables:
    _require(mdp, pi)
    H, S, A = mdp.dims
    probs = pi.probs(A)
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    for h in range(H - 1, -1, -1):
        Q[h] = mdp.rewards[h] + mdp.kernel[h] @ V[h + 1]
        V[h] = (probs[h] * Q[h]).sum(axis=-1)
    return ValueTables(V, Q)


def occupancy(mdp: TabularMdp, pi: Policy) -> OccupancyTable:
    """Forward recursion of d_h(s, a) from the initial distribution."""
    _require(mdp, pi)
    H, S, A = mdp.dims
    probs = pi.probs(A)
    d = np.zeros((H, S, A))
    ds = mdp.p0.copy()
    for h in range(H):
        d[h] = ds[:, None] * probs[h]
        ds = np.einsum("sa,sat->t", d[h], mdp.kernel[h])
    return OccupancyTable(d)


def greedy_policy(Q: np.ndarray) -> Policy:
    """Lowest-index argmax at every (h, s)."""
    return Policy.deterministic(np.argmax(Q, axis=-1))


def gap_table(mdp: TabularMdp) -> np.ndarray:
    vt = optimal_values(mdp)
    return vt.V[:-1, :, None] - vt.Q


def gap_min(mdp: TabularMdp, tol: float = DEFAULT_OPT_TOL) -> tuple[float, np.ndarray]:
    """Smallest gap strictly above ``tol``, together with the full gap table."""
    gaps = gap_table(mdp)
    positive = gaps[gaps > tol]
    if positive.size == 0:
        raise NoPositiveGap(f"all gaps are <= {tol}")
    return float(positive.min()), gaps


def optimal_action_sets(mdp: TabularMdp, tol: float = DEFAULT_OPT_TOL) -> np.ndarray:
    """Boolean (H, S, A) mask of actions whose gap is at most ``tol``."""
    return gap_table(mdp) <= tol


def optimal_reachable(mdp: TabularMdp, opt: np.ndarray) -> np.ndarray:
    """(H, S) mask of states reachable when only optimal actions are taken.

    A state is reachable under some optimal policy iff it is reachable along
    optimal actions, since the choice made at (h, s) cannot affect reaching it.
    """
    H, S, _ = mdp.dims
    reach = np.zeros((H, S), dtype=bool)
    reach[0] = mdp.p0 > 0
    for h in range(H - 1):
        allowed = opt[h] & reach[h][:, None]
        reach[h + 1] = (mdp.kernel[h][allowed] > 0).any(axis=0)
    return reach


def max_optimal_reach(mdp: TabularMdp, opt: np.ndarray) -> np.ndarray:
    """max over optimal policies of d_h^pi(s), for every (h, s).

    For each target step the backward recursion W_h(s, t) = max over optimal a
    of P_{h,s,a} . W_{h+1}(., t) maximizes the probability of hitting target t;
    targets are handled in parallel as columns.
    """
    H, S, _ = mdp.dims
    out = np.zeros((H, S))
    for ht in range(H):
        W = np.eye(S)
        for h in range(ht - 1, -1, -1):
            cont = mdp.kernel[h] @ W  # (S, A, T)
            cont = np.where(opt[h][:, :, None], cont, -np.inf)
            W = cont.max(axis=1)
        out[ht] = mdp.p0 @ W
    return out


@dataclass
class CoverageReport:
    gap_min: float
    C_star: float
    P_unif: float
    optimal_action_sets: np.ndarray  # (H, S, A) bool
    optimal_reachable: np.ndarray  # (H, S) bool
    max_reach: np.ndarray  # (H, S)
    behavior_occupancy: np.ndarray  # (H, S, A)


def coverage_coefficients(
    mdp: TabularMdp, mu: Policy, tol: float = DEFAULT_OPT_TOL, state_marginal: bool = False
) -> CoverageReport:
    """Uniform (P) and relative (C*) optimal-policy coverage of ``mu``.

    The extrema over optimal policies are taken over deterministic optimal
    policies.  With ``state_marginal`` the C* ratio uses d_h(s) instead of
    d_h(s, a).  Zero behavior occupancy gives P = 0 and C* = inf.
    """
    gmin, gaps = gap_min(mdp, tol)
    opt = gaps <= tol
    reach = optimal_reachable(mdp, opt)
    maxreach = max_optimal_reach(mdp, opt)
    dmu = occupancy(mdp, mu).d

    cells = opt & reach[:, :, None]
    P = float(dmu[cells].min())

    if state_marginal:
        num = maxreach[reach]
        den = dmu.sum(axis=-1)[reach]
    else:
        num = np.broadcast_to(maxreach[:, :, None], dmu.shape)[cells]
        den = dmu[cells]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num > 0, np.inf, 0.0))
    C = float(ratios.max()) if ratios.size else 0.0
    return CoverageReport(gmin, C, P, opt, reach, maxreach, dmu)


def single_policy_coverage(mdp: TabularMdp, mu: Policy, pi: Policy) -> float:
    """min of d_h^mu(s, a) over the cells that ``pi`` visits with positive probability."""
    dpi = occupancy(mdp, pi).d
    dmu = occupancy(mdp, mu).d
    return float(dmu[dpi > 0].min())


def policy_suboptimality(mdp: TabularMdp, pi: Policy) -> float:
    """V*_0 - V^pi_0, both weighted by the initial distribution."""
    vstar = optimal_values(mdp).V[0]
    vpi = policy_values(mdp, pi).V[0]
    return float(mdp.p0 @ (vstar - vpi))


def initial_value(mdp: TabularMdp, V: np.ndarray) -> float:
    return float(mdp.p0 @ V[0])
