"""Euler-Maruyama scheme for regime-switching SDEs.

The chain is simulated exactly and read off at the gridpoints ``k * delta``;
Brownian increments are ``N(0, delta I_m)`` draws from a separate
counter-based stream. Every path is keyed by ``(seed, path_id)``, so a path
is bit-identical whether it runs alone or inside an ensemble.

Model callables are batched: ``drift(x, i)`` takes ``x`` of shape ``(N, n)``
and integer regimes ``i`` of shape ``(N,)`` and returns ``(N, n)``;
``diffusion(x, i)`` returns ``(N, n, m)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _rng
from .exceptions import NonFiniteState, ParameterOutOfRange
from .generator import GeneratorMatrix, simulate_chain, validate_generator
from .spectral import RegimeBounds

NOISE_KINDS = ("additive", "multiplicative")


class RegimeModel:
    """SDE coefficients per regime.

    Parameters
    ----------
    drift, diffusion : callable
        Batched coefficient functions (see module docstring).
    dim, noise_dim, n_regimes : int
    noise : {"additive", "multiplicative"}
        Additive means ``diffusion`` ignores ``x``.
    bounds : RegimeBounds, optional
        Declared hypothesis constants.
    """

    def __init__(self, drift, diffusion, dim, noise_dim, n_regimes, noise="multiplicative", bounds=None, name="custom"):
        if noise not in NOISE_KINDS:
            raise ValueError(f"noise must be one of {NOISE_KINDS}")
        self._drift = drift
        self._diffusion = diffusion
        self.dim = int(dim)
        self.noise_dim = int(noise_dim)
        self.n_regimes = int(n_regimes)
        self.noise = noise
        self.bounds = bounds
        self.name = name

    def drift(self, x, i):
        return self._drift(x, i)

    def diffusion(self, x, i):
        return self._diffusion(x, i)

    def increment(self, x, i, delta, dW):
        """``b(x, i) delta + sigma(x, i) dW`` for a batch."""
        return self.drift(x, i) * delta + np.einsum("nij,nj->ni", self.diffusion(x, i), dW)

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, dim={self.dim}, regimes={self.n_regimes}, noise={self.noise!r})"


class LinearRegimeModel(RegimeModel):
    """Linear coefficients ``b(x, i) = A_i x``.

    Additive noise uses constant matrices ``sigma(i) = Sigma_i`` of shape
    ``(n, m)``. Multiplicative noise uses ``sigma(x, i)[:, k] = S_{i,k} x`` with
    ``S`` of shape ``(N, m, n, n)``.
    """

    def __init__(self, A, diffusion, noise, bounds=None, name="linear"):
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValueError("A must have shape (regimes, n, n)")
        D = np.asarray(diffusion, dtype=np.float64)
        n_reg, n = A.shape[0], A.shape[1]
        if noise == "additive":
            if D.ndim != 3 or D.shape[:2] != (n_reg, n):
                raise ValueError("additive diffusion must have shape (regimes, n, m)")
            m = D.shape[2]
        elif noise == "multiplicative":
            if D.ndim != 4 or D.shape[0] != n_reg or D.shape[2:] != (n, n):
                raise ValueError("multiplicative diffusion must have shape (regimes, m, n, n)")
            m = D.shape[1]
        else:
            raise ValueError(f"noise must be one of {NOISE_KINDS}")
        self.A = A
        self.D = D
        self._scalar = n == 1 and m == 1
        if self._scalar:
            self._a = A[:, 0, 0].copy()
            self._s = D.reshape(n_reg).copy()
        super().__init__(None, None, n, m, n_reg, noise, bounds if bounds is not None else linear_bounds(A, D, noise), name)

    @classmethod
    def scalar(cls, alpha, sigma, noise, bounds=None, name="linear"):
        """``dX = alpha_i X dt + sigma_i (X if multiplicative else 1) dW``."""
        alpha = np.asarray(alpha, dtype=np.float64)
        sigma = np.asarray(sigma, dtype=np.float64)
        A = alpha.reshape(-1, 1, 1)
        D = sigma.reshape(-1, 1, 1) if noise == "additive" else sigma.reshape(-1, 1, 1, 1)
        return cls(A, D, noise, bounds, name)

    def drift(self, x, i):
        if self._scalar:
            return self._a[i][:, None] * x
        return np.einsum("nij,nj->ni", self.A[i], x)

    def diffusion(self, x, i):
        if self.noise == "additive":
            return self.D[i]
        return np.einsum("nkij,nj->nik", self.D[i], x)

    def increment(self, x, i, delta, dW):
        if self._scalar:
            if self.noise == "additive":
                return self._a[i][:, None] * x * delta + self._s[i][:, None] * dW
            return x * (self._a[i][:, None] * delta + self._s[i][:, None] * dW)
        return super().increment(x, i, delta, dW)


def linear_bounds(A, D, noise) -> RegimeBounds:
    """Hypothesis constants of a linear model, computed from its matrices.

    ``beta_i`` is the top eigenvalue of ``A_i + A_i^T`` (plus ``sum_k S_k^T S_k``
    for multiplicative noise); ``L`` adds the operator norm of ``A_i`` and the
    Lipschitz constant of ``sigma``; ``c0`` is the largest ``||Sigma_i||^2``.
    """
    A = np.asarray(A, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    beta, lips = [], []
    for r in range(A.shape[0]):
        sym = A[r] + A[r].T
        a_norm = np.linalg.norm(A[r], 2)
        if noise == "multiplicative":
            sym = sym + sum(S.T @ S for S in D[r])
            s_lip = math.sqrt(sum(np.linalg.norm(S, 2) ** 2 for S in D[r]))
        else:
            s_lip = 0.0
        beta.append(float(np.linalg.eigvalsh(sym)[-1]))
        lips.append(a_norm + s_lip)
    if noise == "additive":
        hs2 = [float(np.sum(D[r] ** 2)) for r in range(A.shape[0])]
        c0, L0 = max(hs2), max(math.sqrt(h) for h in hs2)
    else:
        c0, L0 = 0.0, 0.0
    return RegimeBounds(np.array(beta), c0, max(lips), L0)


@dataclass(frozen=True)
class SimulationConfig:
    delta: float
    steps: int
    x0: np.ndarray
    i0: int = 0
    seed: int = 0
    stride: int = 1

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}")
        if int(self.steps) < 1:
            raise ValueError("steps must be at least 1")
        if int(self.stride) < 1:
            raise ValueError("stride must be at least 1")
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=np.float64))
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "stride", int(self.stride))
        object.__setattr__(self, "i0", int(self.i0))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def horizon(self) -> float:
        return self.steps * self.delta


@dataclass(frozen=True)
class Trajectory:
    """Recorded gridpoints ``(k delta, Y_k, Lambda_k)``."""

    times: np.ndarray
    states: np.ndarray
    y: np.ndarray = field(repr=False)

    def write_csv(self, fp):
        n = self.y.shape[1]
        fp.write(",".join(["t", "state"] + [f"y_{j + 1}" for j in range(n)]) + "\n")
        for t, s, row in zip(self.times, self.states, self.y):
            fp.write(f"{t:.16e},{int(s)}," + ",".join(f"{v:.16e}" for v in row) + "\n")


@dataclass(frozen=True)
class CoupledTrajectory:
    times: np.ndarray
    states: np.ndarray
    y: np.ndarray = field(repr=False)
    y_b: np.ndarray = field(repr=False)

    @property
    def difference(self):
        return self.y - self.y_b


@dataclass(frozen=True)
class Ensemble:
    """Recorded ensemble; ``y`` has shape ``(records, legs, paths, n)``."""

    times: np.ndarray
    steps: np.ndarray
    states: np.ndarray
    y: np.ndarray = field(repr=False)


def em_step(model: RegimeModel, x, i, delta, dW):
    """One step ``x + b(x, i) delta + sigma(x, i) dW`` for a single point."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    dW = np.atleast_1d(np.asarray(dW, dtype=np.float64))
    with np.errstate(over="ignore", invalid="ignore"):
        out = x + model.increment(x[None, :], np.array([int(i)]), delta, dW[None, :])[0]
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(1)
    return out


def _record_indices(steps, stride, offset):
    first = offset if offset == 0 else offset + stride
    return np.arange(first, steps + 1, stride, dtype=np.int64)


def _propagate(model, Q, cfg, x0s, path_ids, offset=0, block=4096):
    """Run ``len(x0s)`` legs per path, sharing chain and noise within a path.

    Records the gridpoints ``k`` in ``_record_indices(cfg.steps, cfg.stride, offset)``.
    """
    if Q.n != model.n_regimes:
        raise ValueError(f"model has {model.n_regimes} regimes, generator has {Q.n}")
    x0s = np.atleast_2d(np.asarray(x0s, dtype=np.float64))
    if x0s.shape[1] != model.dim:
        raise ValueError(f"initial point has dimension {x0s.shape[1]}, model has {model.dim}")
    path_ids = np.asarray(path_ids, dtype=np.int64)
    n_legs, n_paths, n, m = len(x0s), len(path_ids), model.dim, model.noise_dim
    delta, K = cfg.delta, cfg.steps
    sqrt_delta = math.sqrt(delta)

    # chain first, on its own stream
    chains = [simulate_chain(Q, cfg.i0, cfg.horizon, cfg.seed, int(pid)) for pid in path_ids]
    noise = [_rng.stream(cfg.seed, int(pid), _rng.NOISE) for pid in path_ids]

    rec_k = _record_indices(K, cfg.stride, offset)
    rec_grid = rec_k * delta
    rec_states = np.stack([c.state_at(rec_grid) for c in chains], axis=1) if len(rec_k) else np.empty((0, n_paths), np.int64)
    rec_y = np.empty((len(rec_k), n_legs, n_paths, n))
    rec_pos = 0

    x = np.repeat(x0s, n_paths, axis=0)  # leg-major (legs * paths, n)
    if len(rec_k) and rec_k[0] == 0:
        rec_y[0] = x.reshape(n_legs, n_paths, n)
        rec_pos = 1

    for k0 in range(0, K, block):
        nb = min(block, K - k0)
        grid = np.arange(k0, k0 + nb, dtype=np.int64) * delta
        states = np.stack([c.state_at(grid) for c in chains], axis=0)  # (paths, nb)
        dW = np.stack([g.standard_normal((nb, m)) for g in noise], axis=0) * sqrt_delta
        states = np.tile(states, (n_legs, 1)).T.copy()  # (nb, legs*paths)
        dW = np.ascontiguousarray(np.tile(dW, (n_legs, 1, 1)).transpose(1, 0, 2))
        x_start = x.copy()
        with np.errstate(over="ignore", invalid="ignore"):
            for b in range(nb):
                x = x + model.increment(x, states[b], delta, dW[b])
                k = k0 + b + 1
                if rec_pos < len(rec_k) and rec_k[rec_pos] == k:
                    rec_y[rec_pos] = x.reshape(n_legs, n_paths, n)
                    rec_pos += 1
        if not np.all(np.isfinite(x)):
            _locate_blowup(model, x_start, states, dW, delta, k0)
    return Ensemble(rec_grid, rec_k, rec_states, rec_y)


def _locate_blowup(model, x, states, dW, delta, k0):
    with np.errstate(over="ignore", invalid="ignore"):
        for b in range(len(states)):
            x = x + model.increment(x, states[b], delta, dW[b])
            if not np.all(np.isfinite(x)):
                raise NonFiniteState(k0 + b + 1)
    raise NonFiniteState(k0 + len(states))


def simulate(model: RegimeModel, Q: GeneratorMatrix, cfg: SimulationConfig, path_id: int = 0) -> Trajectory:
    ens = _propagate(model, Q, cfg, cfg.x0[None, :], [path_id])
    return Trajectory(ens.times, ens.states[:, 0], ens.y[:, 0, 0, :])


def simulate_coupled(model: RegimeModel, Q: GeneratorMatrix, cfg: SimulationConfig, x0_b, path_id: int = 0) -> CoupledTrajectory:
    """Synchronous coupling: both legs see the same chain path and increments."""
    x0_b = np.atleast_1d(np.asarray(x0_b, dtype=np.float64))
    ens = _propagate(model, Q, cfg, np.stack([cfg.x0, x0_b]), [path_id])
    return CoupledTrajectory(ens.times, ens.states[:, 0], ens.y[:, 0, 0, :], ens.y[:, 1, 0, :])


def simulate_ensemble(model, Q, cfg, n_paths, first_path_id=0, x0_b=None, offset=0) -> Ensemble:
    """Paths ``first_path_id .. first_path_id + n_paths - 1``; a second coupled leg if ``x0_b`` is given."""
    x0s = cfg.x0[None, :] if x0_b is None else np.stack([cfg.x0, np.atleast_1d(np.asarray(x0_b, dtype=np.float64))])
    return _propagate(model, Q, cfg, x0s, np.arange(first_path_id, first_path_id + n_paths), offset=offset)


def _ball(rng, count, dim, radius):
    d = rng.standard_normal((count, dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * radius * rng.random((count, 1)) ** (1.0 / dim)


def verify_bounds(model: RegimeModel, sample_count: int = 1000, radius: float = 10.0, seed: int = 0, bounds=None) -> dict:
    """Spot-check declared constants on random points of a ball.

    Reports, per regime, the largest excess of the left side over the right
    side of the growth bound (``r5``), the monotonicity bound (``r6``) and the
    Lipschitz bound (``eq5``). Excesses within ``1e-9`` relative rounding are
    reported as zero.
    """
    bounds = bounds if bounds is not None else model.bounds
    if bounds is None:
        raise ValueError("model has no declared bounds")
    rng = _rng.stream(seed, 0, _rng.AUX)
    n = model.dim
    report = {"regimes": [], "max_violation": 0.0}

    def excess(lhs, rhs):
        gap = lhs - rhs
        gap = np.where(gap > 1e-9 * (1.0 + np.abs(lhs) + np.abs(rhs)), gap, 0.0)
        return float(gap.max(initial=0.0))

    for r in range(model.n_regimes):
        x = _ball(rng, sample_count, n, radius)
        y = _ball(rng, sample_count, n, radius)
        i = np.full(sample_count, r)
        bx, by = model.drift(x, i), model.drift(y, i)
        sx, sy = model.diffusion(x, i), model.diffusion(y, i)
        if sx.ndim == 2:
            sx = np.broadcast_to(sx, (sample_count,) + sx.shape)
            sy = np.broadcast_to(sy, (sample_count,) + sy.shape)
        dx = x - y
        dist = np.linalg.norm(dx, axis=1)
        hs_x = np.sum(sx**2, axis=(1, 2))
        hs_d = np.sum((sx - sy) ** 2, axis=(1, 2))
        beta = bounds.beta[r]
        row = {
            "regime": r,
            "r5": excess(2 * np.sum(x * bx, axis=1) + hs_x, bounds.c0 + beta * np.sum(x**2, axis=1)),
            "r6": excess(2 * np.sum(dx * (bx - by), axis=1) + hs_d, beta * dist**2),
            "eq5": excess(np.linalg.norm(bx - by, axis=1) + np.sqrt(hs_d), bounds.L * dist),
        }
        report["regimes"].append(row)
        report["max_violation"] = max(report["max_violation"], row["r5"], row["r6"], row["eq5"])
    report["ok"] = report["max_violation"] == 0.0
    return report


# ---------------------------------------------------------------------------
# built-in examples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BuiltinModel:
    model: RegimeModel
    generator: GeneratorMatrix


def _scalar_linear_bounds(alpha, sigma, noise):
    """Exact rational constants for scalar linear coefficients."""
    alpha = [Fraction(a) for a in alpha]
    sigma = [Fraction(s) for s in sigma]
    if noise == "additive":
        beta = [2 * a for a in alpha]
        L = max(abs(a) for a in alpha)
        c0 = max(s * s for s in sigma)
        L0 = max(abs(s) for s in sigma)
    else:
        beta = [2 * a + s * s for a, s in zip(alpha, sigma)]
        L = max(abs(a) + abs(s) for a, s in zip(alpha, sigma))
        c0, L0 = Fraction(0), Fraction(0)
    return RegimeBounds(np.array([float(b) for b in beta]), float(c0), float(L), float(L0))


def _scalar_builtin(name, alpha, sigma, noise, rates):
    bounds = _scalar_linear_bounds(alpha, sigma, noise)
    model = LinearRegimeModel.scalar([float(a) for a in alpha], [float(s) for s in sigma], noise, bounds, name)
    return BuiltinModel(model, validate_generator(rates))


def example_2_5(gamma=1.0, sigma0=1.0, sigma1=1.0) -> BuiltinModel:
    """Two-regime Ornstein-Uhlenbeck with additive noise; regime 0 is unstable."""
    gamma = Fraction(gamma)
    if not gamma > 0:
        raise ParameterOutOfRange("gamma must be positive")
    rates = [[-4.0, 4.0], [float(gamma), -float(gamma)]]
    return _scalar_builtin("example_2_5", [Fraction(1), Fraction(-1, 2)], [Fraction(sigma0), Fraction(sigma1)], "additive", rates)


def _rates_3_5(nu):
    return [[-(3.0 + nu), nu, 3.0], [1.0, -3.0, 2.0], [1.0, 2.0, -3.0]]


_ALPHA_3_5 = (Fraction(1, 2), Fraction(-2), Fraction(-3))
_SIGMA_3_5 = (Fraction(1, 3), Fraction(2), Fraction(1))


def example_3_5(nu=0.0) -> BuiltinModel:
    """Three-regime scalar linear SDE with multiplicative noise; regime 0 explodes alone."""
    if not nu >= 0:
        raise ParameterOutOfRange("nu must be nonnegative")
    return _scalar_builtin("example_3_5", _ALPHA_3_5, _SIGMA_3_5, "multiplicative", _rates_3_5(float(nu)))


def example_3_5_frozen(nu=0.0) -> BuiltinModel:
    """``example_3_5`` with every regime using the coefficients of regime 0.

    The chain still switches, but the dynamics never leave the explosive regime.
    """
    if not nu >= 0:
        raise ParameterOutOfRange("nu must be nonnegative")
    alpha = (_ALPHA_3_5[0],) * 3
    sigma = (_SIGMA_3_5[0],) * 3
    return _scalar_builtin("example_3_5_frozen", alpha, sigma, "multiplicative", _rates_3_5(float(nu)))


def example_4_3(a=3.0, b=1.0, alpha=(-2.0, 0.0, 0.5), sigma=(1.0, 1.0, 1.0)) -> BuiltinModel:
    """Reversible birth-death switching with multiplicative noise.

    Requires ``a, b > 0``, ``c_0 < 0``, ``b + c_0 < 0``, ``a - b - c_1 > 0`` and
    ``a - c_2 > 0`` where ``c_i = 2 alpha_i + sigma_i^2``.
    """
    a, b = Fraction(a), Fraction(b)
    alpha = [Fraction(v) for v in alpha]
    sigma = [Fraction(v) for v in sigma]
    if len(alpha) != 3 or len(sigma) != 3:
        raise ParameterOutOfRange("alpha and sigma need three entries")
    c = [2 * al + s * s for al, s in zip(alpha, sigma)]
    checks = {
        "a > 0": a > 0,
        "b > 0": b > 0,
        "c_0 < 0": c[0] < 0,
        "b + c_0 < 0": b + c[0] < 0,
        "a - b - c_1 > 0": a - b - c[1] > 0,
        "a - c_2 > 0": a - c[2] > 0,
    }
    failed = [k for k, ok in checks.items() if not ok]
    if failed:
        raise ParameterOutOfRange("violated: " + ", ".join(failed))
    fa, fb = float(a), float(b)
    rates = [[-fb, fb, 0.0], [2 * fa, -2 * (fa + fb), 2 * fb], [0.0, 3 * fa, -3 * fa]]
    return _scalar_builtin("example_4_3", alpha, sigma, "multiplicative", rates)


BUILTINS = {
    "example_2_5": example_2_5,
    "example_3_5": example_3_5,
    "example_3_5_frozen": example_3_5_frozen,
    "example_4_3": example_4_3,
}


def builtin_models():
    """Catalog of the built-in example factories, keyed by name."""
    return dict(BUILTINS)
