"""Continuous-time Markov chain core.

Validation of Q-matrices, stationary law, detailed balance, exact
event-driven path simulation, sampling at equidistant gridpoints and the
meeting-time experiment for two independent copies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import _rng
from .exceptions import (
    HorizonExceeded,
    NegativeRate,
    NonConservative,
    Reducible,
    SingularSystem,
)

ROW_SUM_TOL = 1e-12
DETAILED_BALANCE_TOL = 1e-10


@dataclass(frozen=True)
class GeneratorMatrix:
    """Validated conservative, irreducible Q-matrix.

    Build instances with :func:`validate_generator`; the constructor does no
    checking.
    """

    rates: np.ndarray

    @property
    def n(self) -> int:
        return self.rates.shape[0]

    @property
    def q0(self) -> float:
        """Largest total jump rate, ``max_i(-q_ii)``."""
        return float(np.max(-np.diag(self.rates)))

    @property
    def exit_rates(self) -> np.ndarray:
        return -np.diag(self.rates)

    def tolist(self):
        return self.rates.tolist()


def validate_generator(raw, tol: float = ROW_SUM_TOL) -> GeneratorMatrix:
    """Check a dense rate matrix and wrap it; never repairs the input.

    Raises
    ------
    NegativeRate
        An off-diagonal rate is negative.
    NonConservative
        A row does not sum to zero within ``tol`` (scaled by the largest rate).
    Reducible
        The digraph of positive off-diagonal rates is not strongly connected.
    """
    q = np.array(raw, dtype=np.float64)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError(f"generator must be square, got shape {q.shape}")
    n = q.shape[0]
    if n < 2:
        raise ValueError("generator needs at least two states")
    if not np.all(np.isfinite(q)):
        raise ValueError("generator has non-finite entries")

    off = q.copy()
    np.fill_diagonal(off, 0.0)
    if np.any(off < 0):
        i, j = np.argwhere(off < 0)[0]
        raise NegativeRate(f"q[{i},{j}] = {q[i, j]!r} < 0")

    scale = max(1.0, float(np.max(np.abs(q))))
    sums = q.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums) > tol * scale)
    if bad.size:
        i = bad[0]
        raise NonConservative(f"row {i} sums to {sums[i]!r}, not 0")

    n_comp, _ = connected_components(off > 0, directed=True, connection="strong")
    if n_comp != 1:
        raise Reducible(f"positive-rate graph has {n_comp} strongly connected components")

    q.setflags(write=False)
    return GeneratorMatrix(q)


def stationary_distribution(Q: GeneratorMatrix) -> np.ndarray:
    """Solve ``mu Q = 0`` with ``sum(mu) = 1``.

    The last equation of ``Q^T mu = 0`` is replaced by the normalisation and
    the dense system is solved directly.
    """
    n = Q.n
    a = np.array(Q.rates.T, dtype=np.float64)
    a[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        mu = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    residual = np.max(np.abs(mu @ Q.rates))
    if not np.all(mu > 0) or residual >= 1e-10:
        raise SingularSystem(
            f"stationary solve broke down (min mu={mu.min():.3e}, residual={residual:.3e})"
        )
    return mu


def is_reversible(Q: GeneratorMatrix, mu, tol: float = DETAILED_BALANCE_TOL) -> bool:
    """True iff ``mu_i q_ij == mu_j q_ji`` for all pairs, within ``tol``."""
    mu = np.asarray(mu, dtype=np.float64)
    flow = mu[:, None] * Q.rates
    return bool(np.max(np.abs(flow - flow.T)) <= tol)


@dataclass(frozen=True)
class ChainPath:
    """Right-continuous piecewise-constant chain realisation on ``[0, horizon]``."""

    initial_state: int
    jump_times: np.ndarray
    states: np.ndarray
    horizon: float

    def state_at(self, t):
        """Vectorised evaluation; ``t`` may be a scalar or an array."""
        full = np.concatenate(([self.initial_state], self.states))
        return full[np.searchsorted(self.jump_times, t, side="right")]

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)


def simulate_chain(Q: GeneratorMatrix, i0: int, T: float, seed: int, path_id: int = 0) -> ChainPath:
    """Exact event-driven simulation up to horizon ``T``.

    Holding time in state i is Exponential with rate ``-q_ii``; the next state
    is j with probability ``q_ij / (-q_ii)``. Randomness comes from the chain
    stream of ``(seed, path_id)``.
    """
    if not T > 0:
        raise ValueError("horizon T must be positive")
    i0 = int(i0)
    if not 0 <= i0 < Q.n:
        raise ValueError(f"initial state {i0} outside 0..{Q.n - 1}")
    rng = _rng.stream(seed, path_id, _rng.CHAIN)
    rates = Q.rates
    exit_rates = Q.exit_rates
    # jump distribution per state, diagonal removed
    cum, last_target = [], []
    for i in range(Q.n):
        row = rates[i].copy()
        row[i] = 0.0
        cum.append(np.cumsum(row / exit_rates[i]))
        last_target.append(int(np.flatnonzero(row > 0)[-1]))

    times, states = [], []
    t, i = 0.0, i0
    while True:
        t += rng.exponential(1.0 / exit_rates[i])
        if t > T:
            break
        u = rng.random()
        # zero-rate targets (including i itself) are flat steps of cum and never selected
        j = int(np.searchsorted(cum[i], u, side="right"))
        if j >= Q.n:  # u at or past the rounded last partial sum
            j = last_target[i]
        times.append(t)
        states.append(j)
        i = j
    return ChainPath(i0, np.array(times, dtype=np.float64), np.array(states, dtype=np.int64), float(T))


def chain_at_grid(path: ChainPath, delta: float, K: int) -> np.ndarray:
    """States at ``k * delta`` for ``k = 0..K`` (value just after any jump at that time)."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    grid = np.arange(K + 1, dtype=np.float64) * delta
    if grid[-1] > path.horizon * (1 + 1e-12):
        raise HorizonExceeded(f"K*delta = {grid[-1]!r} exceeds horizon {path.horizon!r}")
    return path.state_at(grid)


@dataclass(frozen=True)
class TailCurve:
    """Empirical survival function of the meeting time of two chains."""

    times: np.ndarray
    survival: np.ndarray
    meeting_times: np.ndarray = field(repr=False)

    def log_slope(self) -> float:
        """Least-squares slope of ``log P(tau > t)`` over points with positive mass."""
        keep = self.survival > 0
        if keep.sum() < 2:
            raise ValueError("fewer than two points with positive survival")
        return float(np.polyfit(self.times[keep], np.log(self.survival[keep]), 1)[0])


def meeting_time(a: ChainPath, b: ChainPath) -> float:
    """First time two paths occupy the same state, ``inf`` if never before the horizon."""
    if a.initial_state == b.initial_state:
        return 0.0
    events = np.union1d(a.jump_times, b.jump_times)
    same = a.state_at(events) == b.state_at(events)
    hit = np.flatnonzero(same)
    return float(events[hit[0]]) if hit.size else np.inf


def coupling_tail(Q: GeneratorMatrix, i: int, j: int, T: float, n_paths: int, seed: int, n_grid: int = 101) -> TailCurve:
    """Survival curve of the meeting time of independent chains started at i and j."""
    if i == j:
        raise ValueError("coupling_tail needs distinct initial states")
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    tau = np.empty(n_paths)
    for k in range(n_paths):
        a = simulate_chain(Q, i, T, seed, path_id=2 * k)
        b = simulate_chain(Q, j, T, seed, path_id=2 * k + 1)
        tau[k] = meeting_time(a, b)
    grid = np.linspace(0.0, T, n_grid)
    survival = (tau[None, :] > grid[:, None]).mean(axis=1)
    return TailCurve(grid, survival, tau)
