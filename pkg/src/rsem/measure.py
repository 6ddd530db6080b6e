"""Empirical invariant measures and the hybrid Wasserstein cost.

The cost between ``(x, i)`` and ``(y, j)`` is ``(|x - y| + 1{i != j})^p`` with
``p`` in ``(0, 1]``; ``wasserstein_p`` is the optimal transport cost itself,
with no outer ``1/p`` root.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist

from . import _rng
from .em import SimulationConfig, simulate_ensemble
from .exceptions import AdmissibilityWarning, DegenerateWindow, EmptySupport


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted atoms on ``R^n x S``; ``weights=None`` means uniform."""

    points: np.ndarray
    states: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        states = np.asarray(self.states, dtype=np.int64).reshape(-1)
        if len(pts) == 0:
            raise EmptySupport("measure has no atoms")
        if len(states) != len(pts):
            raise ValueError("points and states differ in length")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "states", states)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
            if len(w) != len(pts) or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
                raise ValueError("weights must be nonnegative, match the atoms and sum to 1")
            object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.points)

    @property
    def is_uniform(self) -> bool:
        return self.weights is None

    def probabilities(self) -> np.ndarray:
        return np.full(len(self), 1.0 / len(self)) if self.weights is None else self.weights

    def regime_marginal(self, n_states: int) -> np.ndarray:
        return np.bincount(self.states, weights=self.probabilities(), minlength=n_states)

    def take(self, idx) -> "EmpiricalMeasure":
        """Uniform measure on the atoms at ``idx`` (repeats allowed)."""
        return EmpiricalMeasure(self.points[idx], self.states[idx])


def hybrid_distance(a, b, p: float = 1.0) -> float:
    """``(|x - y| + 1{i != j})^p`` for ``a = (x, i)`` and ``b = (y, j)``."""
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    (x, i), (y, j) = a, b
    d = float(np.linalg.norm(np.atleast_1d(np.asarray(x, float) - np.asarray(y, float))))
    return (d + (0.0 if int(i) == int(j) else 1.0)) ** p


def cost_matrix(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: float) -> np.ndarray:
    d = cdist(mu.points, nu.points) + (mu.states[:, None] != nu.states[None, :])
    return d**p


def wasserstein_p(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: float = 1.0) -> float:
    """Exact optimal transport cost under ``hybrid_distance``.

    Equal-size uniform measures go through a linear assignment; anything else
    is solved as a transportation linear program.
    """
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    if len(mu) == 0 or len(nu) == 0:
        raise EmptySupport("empty measure")
    C = cost_matrix(mu, nu, p)
    if mu.is_uniform and nu.is_uniform and len(mu) == len(nu):
        rows, cols = linear_sum_assignment(C)
        return float(C[rows, cols].sum() / len(mu))
    a, b = mu.probabilities(), nu.probabilities()
    n, m = C.shape
    # row-sum and column-sum constraints of the coupling matrix
    A_eq = np.zeros((n + m, n * m))
    for r in range(n):
        A_eq[r, r * m:(r + 1) * m] = 1.0
    for c in range(m):
        A_eq[n + c, c::m] = 1.0
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def block_distance(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: float, max_block: int = 2000) -> float:
    """Average cost over interleaved equal-size blocks of at most ``max_block`` atoms.

    Atom ``j`` goes to block ``j mod n_blocks``; both measures must be uniform
    and of equal size.
    """
    if len(mu) != len(nu):
        raise ValueError("block distance needs equal-size measures")
    n_blocks = max(1, math.ceil(len(mu) / max_block))
    vals = [wasserstein_p(mu.take(np.arange(b, len(mu), n_blocks)), nu.take(np.arange(b, len(nu), n_blocks)), p) for b in range(n_blocks)]
    return float(np.mean(vals))


def default_burn_in(thin: int, n_samples: int) -> int:
    """Burn-in equal to 20% of the total run."""
    return int(math.ceil(thin * n_samples / 4))


def estimate_invariant(model, Q, cfg: SimulationConfig, burn_in=None, thin: int = 10, n_samples: int = 1000,
                       delta_max=None, n_chains: int = 1, first_path_id: int = 0) -> EmpiricalMeasure:
    """Time-average sample of the numerical invariant measure.

    Runs ``n_chains`` independent trajectories (one by default), discards
    ``burn_in`` steps and keeps every ``thin``-th gridpoint after it until
    ``n_samples`` atoms are collected. ``cfg.steps`` and ``cfg.stride`` are
    ignored.
    """
    if n_samples < 1 or thin < 1 or n_chains < 1:
        raise ValueError("n_samples, thin and n_chains must be positive")
    if delta_max is not None and cfg.delta >= delta_max:
        warnings.warn(f"delta = {cfg.delta} is not below the certified bound {delta_max}", AdmissibilityWarning, stacklevel=2)
    if burn_in is None:
        burn_in = default_burn_in(thin, n_samples)
    per_chain = math.ceil(n_samples / n_chains)
    run = SimulationConfig(cfg.delta, burn_in + thin * per_chain, cfg.x0, cfg.i0, cfg.seed, stride=thin)
    ens = simulate_ensemble(model, Q, run, n_chains, first_path_id=first_path_id, offset=burn_in)
    # (records, paths) -> chain-major flattening, trimmed to n_samples
    keep = ens.steps > burn_in
    pts = ens.y[keep, 0].transpose(1, 0, 2).reshape(-1, model.dim)[:n_samples]
    sts = ens.states[keep].T.reshape(-1)[:n_samples]
    return EmpiricalMeasure(pts, sts)


def _slope(x, y):
    return float(np.polyfit(x, y, 1)[0])


@dataclass(frozen=True)
class ContractionResult:
    slope: float
    ci: tuple
    times: np.ndarray = field(repr=False)
    moment: np.ndarray = field(repr=False)
    window: np.ndarray = field(repr=False)


def contraction_experiment(model, Q, cfg: SimulationConfig, x0, y0, p: float, n_paths: int,
                           n_boot: int = 200, floor: float = 1e-12) -> ContractionResult:
    """Decay rate of ``E|Y^x - Y^y|^p`` under synchronous coupling.

    Fits ``log`` of the path-averaged moment against time by least squares
    over the recorded times where it exceeds ``floor``; the confidence
    interval is a percentile bootstrap over paths.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    y0 = np.atleast_1d(np.asarray(y0, dtype=np.float64))
    if np.array_equal(x0, y0):
        raise ValueError("x0 == y0: the coupled difference is identically zero")
    run = SimulationConfig(cfg.delta, cfg.steps, x0, cfg.i0, cfg.seed, cfg.stride)
    ens = simulate_ensemble(model, Q, run, n_paths, x0_b=y0)
    dist_p = np.linalg.norm(ens.y[:, 0] - ens.y[:, 1], axis=2) ** p  # (records, paths)
    moment = dist_p.mean(axis=1)
    window = np.flatnonzero(moment > floor)
    if len(window) < 2:
        raise DegenerateWindow("fewer than two recorded times above the numerical floor")
    t = ens.times[window]
    slope = _slope(t, np.log(moment[window]))

    rng = _rng.stream(cfg.seed, 0, _rng.AUX)
    boot = np.empty(n_boot)
    sub = dist_p[window]
    for b in range(n_boot):
        m = sub[:, rng.integers(0, n_paths, n_paths)].mean(axis=1)
        boot[b] = _slope(t, np.log(np.maximum(m, np.finfo(float).tiny)))
    ci = (float(np.percentile(boot, 2.5)), float(np.percentile(boot, 97.5)))
    return ContractionResult(slope, ci, ens.times, moment, window)


@dataclass(frozen=True)
class StudyBudget:
    """Sampling budget shared by every stepsize in a convergence study.

    Times are in model time units, so each stepsize gets the same burn-in
    horizon and the same spacing between kept samples.
    """

    n_samples: int = 2000
    sample_spacing: float = 0.5
    burn_in_time: float = 20.0
    n_chains: int = 1
    max_block: int = 2000
    n_boot: int = 50

    def thin(self, delta):
        return max(1, int(round(self.sample_spacing / delta)))

    def burn_in(self, delta):
        return int(math.ceil(self.burn_in_time / delta))


@dataclass
class StudyResult:
    deltas: list
    distances: list
    std_errors: list
    noise_floor: float
    slope: float
    slope_ci: tuple
    p: float
    n_samples: int
    seed: int
    monotone: bool
    rate_band: tuple
    rate_in_band: bool
    unresolvable: bool
    passed: bool
    reference_delta: float
    notes: list = field(default_factory=list)

    def rows(self):
        return [(d, w, self.n_samples, self.seed) for d, w in zip(self.deltas, self.distances)]

    def summary(self) -> dict:
        return {
            "p": self.p,
            "reference_delta": self.reference_delta,
            "reference_status": "reference, not ground truth",
            "deltas": list(self.deltas),
            "W_hat": list(self.distances),
            "bootstrap_se": list(self.std_errors),
            "noise_floor": self.noise_floor,
            "slope": self.slope,
            "slope_ci95": list(self.slope_ci),
            "expected_order": self.p / 2,
            "rate_band": list(self.rate_band),
            "monotone_within_1se": self.monotone,
            "rate_in_band": self.rate_in_band,
            "rate_unresolvable": self.unresolvable,
            "passed": self.passed,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "notes": list(self.notes),
        }


def convergence_study(model, Q, deltas, reference_delta, p, budget: StudyBudget, seed: int = 0,
                      x0=None, i0: int = 0) -> StudyResult:
    """Self-convergence of the numerical invariant measure as the stepsize shrinks.

    Each ``pi^delta`` is estimated with the same budget and compared with a
    fine-stepsize reference by ``block_distance``. The noise floor is the
    distance between two independent reference estimates. The log-log slope
    comes with a percentile bootstrap interval.
    """
    deltas = [float(d) for d in deltas]
    if not deltas:
        raise ValueError("empty stepsize list")
    if len(set(deltas)) < 2:
        raise DegenerateWindow("need at least two distinct stepsizes to fit a slope")
    if not reference_delta < min(deltas):
        raise ValueError("reference stepsize must be smaller than every studied stepsize")
    if any(not 0 < d < 1 for d in deltas + [reference_delta]):
        raise ValueError("stepsizes must lie in (0, 1)")
    x0 = np.zeros(model.dim) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=np.float64))

    def estimate(delta, run_index):
        cfg = SimulationConfig(delta, 1, x0, i0, seed)
        return estimate_invariant(model, Q, cfg, budget.burn_in(delta), budget.thin(delta), budget.n_samples,
                                  n_chains=budget.n_chains, first_path_id=run_index * budget.n_chains)

    samples = [estimate(d, k) for k, d in enumerate(deltas)]
    ref = estimate(reference_delta, len(deltas))
    ref2 = estimate(reference_delta, len(deltas) + 1)

    dist = lambda a, b: block_distance(a, b, p, budget.max_block)  # noqa: E731
    distances = [dist(s, ref) for s in samples]
    noise_floor = dist(ref2, ref)

    log_d = np.log(deltas)
    slope = _slope(log_d, np.log(distances))
    rng = _rng.stream(seed, 0, _rng.AUX)
    N = budget.n_samples
    boot = np.empty((budget.n_boot, len(deltas)))
    for b in range(budget.n_boot):
        r = ref.take(rng.integers(0, N, N))
        for k, s in enumerate(samples):
            boot[b, k] = dist(s.take(rng.integers(0, N, N)), r)
    se = boot.std(axis=0, ddof=1) if budget.n_boot > 1 else np.zeros(len(deltas))
    boot_slopes = np.array([_slope(log_d, np.log(row)) for row in boot])
    ci = (float(np.percentile(boot_slopes, 2.5)), float(np.percentile(boot_slopes, 97.5)))

    order = np.argsort(deltas)[::-1]  # coarse to fine
    monotone = all(
        distances[b] <= distances[a] + math.hypot(se[a], se[b])
        for a, b in zip(order[:-1], order[1:])
    )
    band = (p / 2 - 0.2, p / 2 + 0.2)
    in_band = ci[0] <= band[1] and ci[1] >= band[0]
    unresolvable = all(d < noise_floor for d in distances)
    notes = []
    if unresolvable:
        notes.append("all distances below the same-stepsize noise floor: rate unresolvable at this budget")
    return StudyResult(
        deltas, distances, se.tolist(), noise_floor, slope, ci, p, N, seed,
        monotone, band, in_band, unresolvable, monotone and (in_band or unresolvable), reference_delta, notes,
    )
