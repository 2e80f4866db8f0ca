"""Certificates for the analysis objects behind a pessimistic solver run.

Given a run, the imaginary MDP keeps the true kernel and uses rewards
r_lower = Q_lower - P V_lower(next), so its optimal Q-function is exactly the
solver's Q_lower.  Deficits E = r - r_lower, their thresholded version
max(0, E - eps), and the value-ranking chain are then checked by exact DP.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .mdp import (
    DEFAULT_OPT_TOL,
    Policy,
    TabularMdp,
    gap_min,
    occupancy,
    optimal_values,
    policy_suboptimality,
    policy_values,
)
from .vi_lcb import PessimisticSolution, _seq_dot

CHECK_TOL = 1e-10


@dataclass(frozen=True)
class ThresholdSpec:
    kind: str = "constant"  # or "variance_adaptive"
    c_pac: float = 1.0 / 16.0
    value: Optional[float] = None  # fixed level for "constant"; default gap_min / (2H)

    def __post_init__(self):
        if self.kind not in ("constant", "variance_adaptive"):
            raise ValueError(f"unknown threshold kind {self.kind!r}")
        if self.c_pac < 0:
            raise ValueError("c_pac must be non-negative")
        if self.value is not None and (self.kind != "constant" or self.value < 0):
            raise ValueError("value applies only to the constant kind and must be non-negative")


@dataclass
class DeficitReport:
    r_lower: np.ndarray
    deficit: np.ndarray
    eps: np.ndarray
    thresholded: np.ndarray
    bound: float
    gap_min: float
    comparator: Policy


def _check_dims(mdp: TabularMdp, sol: PessimisticSolution) -> None:
    if sol.q_lower.shape != mdp.rewards.shape:
        raise ValueError(f"solution dims {sol.q_lower.shape} do not match MDP dims {mdp.rewards.shape}")


def imaginary_mdp(mdp: TabularMdp, sol: PessimisticSolution) -> TabularMdp:
    _check_dims(mdp, sol)
    H = mdp.H
    r_lower = np.empty_like(sol.q_lower)
    for h in range(H):
        r_lower[h] = sol.q_lower[h] - mdp.kernel[h] @ sol.v_lower[h + 1]
    return mdp.with_rewards(r_lower, name=f"{mdp.name}:imaginary" if mdp.name else "imaginary")


def deficits(mdp: TabularMdp, sol: PessimisticSolution) -> tuple[np.ndarray, np.ndarray]:
    """(r_lower, E) with E = r - r_lower."""
    r_lower = imaginary_mdp(mdp, sol).rewards
    return r_lower, mdp.rewards - r_lower


def thresholds(mdp: TabularMdp, sol: PessimisticSolution, spec: ThresholdSpec, gmin: float) -> np.ndarray:
    H, S, A = mdp.dims
    if spec.kind == "constant":
        return np.full((H, S, A), gmin / (2 * H) if spec.value is None else spec.value)
    var = np.empty((H, S, A))
    for h in range(H):
        v = sol.v_lower[h + 1]
        mean = _seq_dot(sol.p_hat[h], v)
        var[h] = np.maximum(_seq_dot(sol.p_hat[h], v * v) - mean * mean, 0.0)
    return spec.c_pac * (var / H**2 + 1.0 / H) * gmin


def comparator_policy(mdp: TabularMdp, sol: PessimisticSolution, mode: str = "lexicographic",
                      tol: float = DEFAULT_OPT_TOL) -> Policy:
    """A deterministic optimal policy used to weight per-cell bounds.

    ``lexicographic`` takes the lowest-index optimal action everywhere;
    ``agreeing`` keeps the solver's action wherever that action is optimal.
    """
    vt = optimal_values(mdp)
    opt = (vt.V[:-1, :, None] - vt.Q) <= tol
    actions = np.argmax(opt, axis=-1)
    if mode == "agreeing":
        mine = sol.policy.table
        keep = np.take_along_axis(opt, mine[..., None], axis=-1)[..., 0]
        actions = np.where(keep, mine, actions)
    elif mode != "lexicographic":
        raise ValueError(f"unknown comparator mode {mode!r}")
    return Policy.deterministic(actions)


def deficit_report(mdp: TabularMdp, sol: PessimisticSolution, spec: ThresholdSpec = ThresholdSpec(),
                   comparator: str = "lexicographic", tol: float = DEFAULT_OPT_TOL) -> DeficitReport:
    """Deficits, thresholds and the bound 2 sum_h E_{pi*}[thresholded deficit]."""
    gmin, _ = gap_min(mdp, tol)
    r_lower, E = deficits(mdp, sol)
    eps = thresholds(mdp, sol, spec, gmin)
    E_thr = np.maximum(0.0, E - eps)
    pistar = comparator_policy(mdp, sol, comparator, tol)
    d = occupancy(mdp, pistar).d
    bound = 2.0 * float((d * E_thr).sum())
    return DeficitReport(r_lower, E, eps, E_thr, bound, gmin, pistar)


@dataclass
class Clause:
    name: str
    passed: bool
    worst_violation: float  # largest amount by which the inequality fails (<= tol when passed)
    witness: Optional[tuple] = None

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed,
                "worst_violation": self.worst_violation,
                "witness": list(self.witness) if self.witness is not None else None}


@dataclass
class CertificateReport:
    clauses: list[Clause] = field(default_factory=list)

    def __getitem__(self, name: str) -> Clause:
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def to_json(self) -> dict:
        return {"passed": self.passed, "clauses": [c.to_json() for c in self.clauses]}

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def _le_clause(name: str, lhs: np.ndarray, rhs: np.ndarray, tol: float = CHECK_TOL) -> Clause:
    """Clause for lhs <= rhs elementwise, reporting the worst cell."""
    excess = np.asarray(lhs - rhs, dtype=np.float64)
    if excess.size == 0:
        return Clause(name, True, 0.0, None)
    idx = np.unravel_index(int(np.argmax(excess)), excess.shape)
    worst = float(excess[idx])
    return Clause(name, worst <= tol, worst, tuple(int(i) for i in idx))


def check_pessimism(mdp: TabularMdp, sol: PessimisticSolution, tol: float = CHECK_TOL) -> CertificateReport:
    """Q_lower <= Q*, 0 <= E <= 2b, and V* >= V^pi >= V_lower^pi >= V_lower*."""
    _check_dims(mdp, sol)
    star = optimal_values(mdp)
    m_lower = imaginary_mdp(mdp, sol)
    E = mdp.rewards - m_lower.rewards
    v_pi = policy_values(mdp, sol.policy).V[:-1]
    v_lower_pi = policy_values(m_lower, sol.policy).V[:-1]
    v_lower_star = optimal_values(m_lower).V[:-1]

    clauses = [
        _le_clause("q_lower_le_qstar", sol.q_lower, star.Q, tol),
        _le_clause("deficit_nonnegative", -E, np.zeros_like(E), tol),
        _le_clause("deficit_le_2b", E, 2.0 * sol.bonus, tol),
        _le_clause("vstar_ge_vpi", v_pi, star.V[:-1], tol),
        _le_clause("vpi_ge_vlower_pi", v_lower_pi, v_pi, tol),
        _le_clause("vlower_pi_ge_vlower_star", v_lower_star, v_lower_pi, tol),
    ]
    return CertificateReport(clauses)


def pessimism_holds(report: CertificateReport) -> bool:
    """Q_lower <= Q* together with 0 <= E <= 2b."""
    return all(report[n].passed for n in ("q_lower_le_qstar", "deficit_nonnegative", "deficit_le_2b"))


@dataclass
class ThresholdCertificate:
    gap_event_holds: bool
    witness: Optional[tuple]
    worst_excess: float  # max over (h, s) of V_thr* - V_lower* - gap_min/2
    gap_min: float
    suboptimality: float
    v0_star: float
    v0_lower_star: float
    v0_thresholded_star: float
    theorem_bound_holds: Optional[bool]  # subopt <= 2 (V*_0 - V_thr*_0), checked when the event holds
    lower_value_bound_holds: bool  # V*_0 - V_lower*_0 <= 2 (V*_0 - V_thr*_0); reported only

    def to_json(self) -> dict:
        out = asdict(self)
        out["witness"] = list(self.witness) if self.witness is not None else None
        return out


def threshold_certificate(mdp: TabularMdp, sol: PessimisticSolution, spec: ThresholdSpec = ThresholdSpec(),
                          tol: float = DEFAULT_OPT_TOL, slack: float = 1e-8) -> ThresholdCertificate:
    """Builds the thresholded MDP and checks V_thr* <= V_lower* + gap_min/2 at every (h, s)."""
    gmin, _ = gap_min(mdp, tol)
    m_lower = imaginary_mdp(mdp, sol)
    E = mdp.rewards - m_lower.rewards
    eps = thresholds(mdp, sol, spec, gmin)
    E_thr = np.maximum(0.0, E - eps)
    m_thr = mdp.with_rewards(mdp.rewards - E_thr)

    v_lower_star = optimal_values(m_lower).V
    v_thr_star = optimal_values(m_thr).V
    v_star = optimal_values(mdp).V

    excess = v_thr_star[:-1] - v_lower_star[:-1] - gmin / 2.0
    idx = np.unravel_index(int(np.argmax(excess)), excess.shape)
    worst = float(excess[idx])
    holds = worst <= CHECK_TOL

    v0 = float(mdp.p0 @ v_star[0])
    v0_lower = float(mdp.p0 @ v_lower_star[0])
    v0_thr = float(mdp.p0 @ v_thr_star[0])
    subopt = policy_suboptimality(mdp, sol.policy)
    rhs = 2.0 * (v0 - v0_thr)
    return ThresholdCertificate(
        gap_event_holds=holds,
        witness=None if holds else tuple(int(i) for i in idx),
        worst_excess=worst,
        gap_min=gmin,
        suboptimality=subopt,
        v0_star=v0,
        v0_lower_star=v0_lower,
        v0_thresholded_star=v0_thr,
        theorem_bound_holds=(subopt <= rhs + slack) if holds else None,
        lower_value_bound_holds=(v0 - v0_lower) <= rhs + slack,
    )
