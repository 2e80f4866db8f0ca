"""Seeded Monte-Carlo trials, sweeps over N, and empirical sample-complexity search."""
from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import binomtest

from . import rng
from .dataset import sample_trajectories
from .diagnostics import ThresholdSpec, check_pessimism, pessimism_holds, threshold_certificate
from .mdp import (
    DEFAULT_OPT_TOL,
    Policy,
    TabularMdp,
    gap_table,
    optimal_reachable,
    policy_suboptimality,
)
from .vi_lcb import SolverConfig, run_subsampled_vi_lcb

MAX_N = 2**30
CSV_COLUMNS = ["point", "n", "eps", "trials", "mean_subopt", "median_subopt", "success_rate",
               "wilson_lo", "wilson_hi", "pessimism_rate"]


class BudgetExhausted(RuntimeError):
    def __init__(self, max_n: int, history: dict):
        self.max_n = max_n
        self.history = history
        super().__init__(f"no N <= {max_n} reached the target success rate")


@dataclass
class InstanceContext:
    """Per-instance quantities shared by every trial."""

    mdp: TabularMdp
    mu: Policy
    opt: np.ndarray  # (H, S, A) optimal-action mask
    reach: np.ndarray  # (H, S) optimal-reachable mask
    has_gap: bool

    @classmethod
    def build(cls, mdp: TabularMdp, mu: Policy, tol: float = DEFAULT_OPT_TOL) -> "InstanceContext":
        gaps = gap_table(mdp)
        opt = gaps <= tol
        return cls(mdp, mu, opt, optimal_reachable(mdp, opt), bool((gaps > tol).any()))

    def exact_optimal(self, pi: Policy) -> bool:
        chosen = np.take_along_axis(self.opt, pi.table[..., None], axis=-1)[..., 0]
        return bool(chosen[self.reach].all())


@dataclass
class TrialResult:
    seed: int
    n_trajectories: int
    suboptimality: float
    exact_optimal: bool
    pessimism_pass: bool
    certificate: dict
    wall_time: float
    start_action: Optional[list] = None  # policy actions at step 0, kept for per-state analyses

    def succeeded(self, eps: Optional[float]) -> bool:
        return self.exact_optimal if eps is None else self.suboptimality <= eps


def run_trial(instance, mu: Optional[Policy], n: int, cfg: SolverConfig = SolverConfig(), seed: int = 0,
              certify: bool = True) -> TrialResult:
    """Sample n trajectories, run subsampled VI-LCB, evaluate the output exactly.

    ``instance`` is an MDP (with ``mu``) or a prebuilt ``InstanceContext``.
    """
    ctx = instance if isinstance(instance, InstanceContext) else InstanceContext.build(instance, mu)
    t0 = time.perf_counter()
    # sampling and subsampling read differently keyed streams of the same seed
    data = sample_trajectories(ctx.mdp, ctx.mu, n, seed)
    sol = run_subsampled_vi_lcb(data, ctx.mdp, cfg, seed)
    subopt = policy_suboptimality(ctx.mdp, sol.policy)
    exact = ctx.exact_optimal(sol.policy)
    cert = {}
    pess = False
    if certify:
        report = check_pessimism(ctx.mdp, sol)
        pess = pessimism_holds(report)
        cert = {c.name: c.passed for c in report.clauses}
        if ctx.has_gap:
            tc = threshold_certificate(ctx.mdp, sol, ThresholdSpec("constant"))
            cert["gap_event"] = tc.gap_event_holds
            cert["theorem_bound"] = tc.theorem_bound_holds
            cert["thresholded_gap"] = 2.0 * (tc.v0_star - tc.v0_thresholded_star)
    return TrialResult(
        seed=seed,
        n_trajectories=n,
        suboptimality=subopt,
        exact_optimal=exact,
        pessimism_pass=pess,
        certificate=cert,
        wall_time=time.perf_counter() - t0,
        start_action=sol.policy.table[0].tolist(),
    )


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class PointStats:
    point: int
    n: int
    eps: Optional[float]
    trials: int
    mean_subopt: float
    median_subopt: float
    success_rate: float
    wilson_lo: float
    wilson_hi: float
    pessimism_rate: float

    @classmethod
    def from_trials(cls, point: int, n: int, eps: Optional[float], results: Sequence[TrialResult]) -> "PointStats":
        sub = np.array([r.suboptimality for r in results])
        wins = sum(r.succeeded(eps) for r in results)
        lo, hi = wilson_interval(wins, len(results))
        return cls(point, n, eps, len(results), float(sub.mean()), float(np.median(sub)),
                   wins / len(results), lo, hi, float(np.mean([r.pessimism_pass for r in results])))


@dataclass
class SweepResult:
    instance: str
    config: dict
    base_seed: int
    points: list[PointStats]
    trials: list[list[TrialResult]] = field(repr=False, default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for p in self.points:
            row = asdict(p)
            row["eps"] = "" if p.eps is None else p.eps
            w.writerow(row)
        return buf.getvalue()


def _run_batch(ctx: InstanceContext, n: int, cfg: SolverConfig, seeds: Sequence[int], certify: bool,
               workers: int) -> list[TrialResult]:
    if workers <= 1 or len(seeds) < 2:
        return [run_trial(ctx, None, n, cfg, s, certify) for s in seeds]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(run_trial, ctx, None, n, cfg, s, certify) for s in seeds]
        # collected in submission order, so results never depend on scheduling
        return [f.result() for f in futures]


def sweep(instance, mu: Optional[Policy], grid: Sequence, trials_per_point: int = 100,
          cfg: SolverConfig = SolverConfig(), base_seed: int = 0, eps: Optional[float] = None,
          certify: bool = True, workers: int = 1) -> SweepResult:
    """Run ``trials_per_point`` trials at each grid point.

    Grid entries are N values, or ``(N, eps)`` pairs to give each point its own
    success threshold; ``eps=None`` means exact identification.  Trial seeds
    are derived from ``(base_seed, point, trial)``.
    """
    if not grid:
        raise ValueError("grid must be non-empty")
    if trials_per_point < 1:
        raise ValueError("trials_per_point must be >= 1")
    ctx = instance if isinstance(instance, InstanceContext) else InstanceContext.build(instance, mu)
    points, raw = [], []
    for j, g in enumerate(grid):
        n, e = (g if isinstance(g, (tuple, list)) else (g, eps))
        seeds = [rng.derive_seed(base_seed, j, t) for t in range(trials_per_point)]
        results = _run_batch(ctx, int(n), cfg, seeds, certify, workers)
        points.append(PointStats.from_trials(j, int(n), e, results))
        raw.append(results)
    return SweepResult(ctx.mdp.name, asdict(cfg), base_seed, points, raw)


@dataclass
class MinNSearch:
    n: int
    rates: dict  # N -> measured success rate
    target_rate: float
    trials: int


def min_n_search(instance, mu: Optional[Policy], eps: Optional[float] = None, target_rate: float = 0.9,
                 cfg: SolverConfig = SolverConfig(), base_seed: int = 0, trials: int = 100,
                 max_n: int = MAX_N, resolution: float = 0.05, workers: int = 1) -> MinNSearch:
    """Doubling search on N, then bisection, for the smallest passing N.

    Every candidate N reuses the same trial seeds.  The returned N passed and
    floor(N/2) failed; if noise makes floor(N/2) pass, the search restarts
    below it.  Bisection stops once the bracket is within ``resolution`` of N.
    """
    if not 0.0 < target_rate < 1.0:
        raise ValueError("target_rate must lie in (0, 1)")
    ctx = instance if isinstance(instance, InstanceContext) else InstanceContext.build(instance, mu)
    seeds = [rng.derive_seed(base_seed, rng.TRIAL, t) for t in range(trials)]
    rates: dict[int, float] = {}

    def passes(n: int) -> bool:
        if n not in rates:
            res = _run_batch(ctx, n, cfg, seeds, False, workers)
            rates[n] = sum(r.succeeded(eps) for r in res) / trials
        return rates[n] >= target_rate

    if passes(0):
        return MinNSearch(0, rates, target_rate, trials)
    hi = 1
    while not passes(hi):
        if hi >= max_n:
            raise BudgetExhausted(max_n, rates)
        hi = min(2 * hi, max_n)
    while True:
        lo = hi // 2
        while hi - lo > max(1, int(resolution * hi)):
            mid = (lo + hi) // 2
            if passes(mid):
                hi = mid
            else:
                lo = mid
        half = hi // 2
        if not passes(half):
            return MinNSearch(hi, rates, target_rate, trials)
        hi = half


def find_min_n(instance, mu: Optional[Policy], eps: Optional[float] = None, target_rate: float = 0.9,
               cfg: SolverConfig = SolverConfig(), base_seed: int = 0, trials: int = 100,
               max_n: int = MAX_N, resolution: float = 0.05, workers: int = 1) -> int:
    """Smallest tested N whose success rate reaches ``target_rate``.

    ``eps=None`` asks for exact identification of an optimal policy; a number
    asks for suboptimality at most ``eps``.  Raises ``BudgetExhausted`` past
    ``max_n``.
    """
    return min_n_search(instance, mu, eps, target_rate, cfg, base_seed, trials, max_n, resolution, workers).n


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])
