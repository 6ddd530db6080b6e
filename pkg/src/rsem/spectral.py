"""Perron-Frobenius certificates and explicit stepsize bounds.

For a moment order ``p`` the perturbed generator ``Q_p = Q + (p/2) diag(beta)``
is a Metzler matrix with an irreducible pattern, so ``Q_p + s I`` is
nonnegative and primitive for a large enough shift ``s``. Its Perron root
``rho`` gives ``eta_p = s - rho`` and the Perron vector gives ``xi^(p) >> 0``.
Those feed the additive-noise constant ``alpha``, the multiplicative-noise
constant ``beta`` and the two admissible stepsize bounds.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.sparse.csgraph import connected_components

from .exceptions import (
    AdmissibilityWarning,
    LengthMismatch,
    NoConvergence,
    NonPositiveEta,
    Star6Violated,
)
from .generator import GeneratorMatrix, stationary_distribution

DEFAULT_P_GRID = (0.1, 0.25, 0.5, 0.75, 0.9)
POWER_MAX_ITER = 100_000
POWER_TOL = 1e-12
RAYLEIGH_TOL = 1e-13
# eta_p below this (relative to the size of Q_p) is treated as zero: the
# power iteration only resolves the root to about 1e-12 of that scale
ETA_POSITIVITY_TOL = 1e-10


@dataclass(frozen=True)
class RegimeBounds:
    """Declared constants of the dissipativity and Lipschitz hypotheses.

    Parameters
    ----------
    beta : (N,) array
        One-sided growth rates per regime (may be positive).
    c0 : float
        Additive constant in the growth bound, ``>= 0``.
    L : float
        Global Lipschitz constant of drift plus diffusion.
    L0 : float
        Linear-growth offset ``max_i |b(0,i)| + ||sigma(0,i)||``.
    """

    beta: np.ndarray
    c0: float = 0.0
    L: float = 0.0
    L0: float = 0.0

    def __post_init__(self):
        beta = np.array(self.beta, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta must be finite")
        if self.c0 < 0 or self.L < 0 or self.L0 < 0:
            raise ValueError("c0, L and L0 must be nonnegative")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "c0", float(self.c0))
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "L0", float(self.L0))

    @property
    def beta0(self) -> float:
        return float(np.max(np.abs(self.beta)))

    def scaled(self, factor: float) -> "RegimeBounds":
        """Same bounds with ``beta`` multiplied by ``factor``."""
        return RegimeBounds(self.beta * factor, self.c0, self.L, self.L0)

    def to_dict(self):
        return {"beta": self.beta.tolist(), "c0": self.c0, "L": self.L, "L0": self.L0}


@dataclass(frozen=True)
class SpectralCertificate:
    p: float
    Qp: np.ndarray = field(repr=False)
    eta_p: float
    xi: np.ndarray
    q0: float

    @property
    def xi_hat(self) -> float:
        return float(np.max(self.xi))

    @property
    def xi_bar(self) -> float:
        return float(1.0 / np.min(self.xi))

    def residual(self) -> float:
        return float(np.max(np.abs(self.Qp @ self.xi + self.eta_p * self.xi)))

    @property
    def positive(self) -> bool:
        """``eta_p`` is positive beyond the numerical resolution."""
        return self.eta_p > ETA_POSITIVITY_TOL * max(1.0, float(np.max(np.abs(self.Qp))))


@dataclass(frozen=True)
class StepsizeBound:
    """Sufficient stepsize bound ``delta < delta_max``.

    ``factors`` holds the two terms of the minimum before the cap at 1.
    """

    kind: str
    rate_constant: float
    delta_max: float
    p: float | None
    factors: tuple = ()

    def to_dict(self):
        return {
            "kind": self.kind,
            "rate_constant": self.rate_constant,
            "delta_max": self.delta_max,
            "p": self.p,
            "factors": list(self.factors),
        }


class AveragingResult(NamedTuple):
    value: float
    holds: bool


def _check_length(Q_or_mu, bounds):
    n = Q_or_mu.n if isinstance(Q_or_mu, GeneratorMatrix) else len(Q_or_mu)
    if len(bounds.beta) != n:
        raise LengthMismatch(f"beta has length {len(bounds.beta)}, chain has {n} states")


def averaging_condition(mu, bounds: RegimeBounds) -> AveragingResult:
    """Weighted average ``sum_i mu_i beta_i`` and whether it is negative.

    Sums within ``1e-12`` (relative to ``beta0``) of zero count as zero, so the
    boundary case is reported as failing rather than decided by rounding.
    """
    mu = np.asarray(mu, dtype=np.float64)
    _check_length(mu, bounds)
    value = float(mu @ bounds.beta)
    return AveragingResult(value, value < -1e-12 * max(1.0, bounds.beta0))


def build_Qp(Q: GeneratorMatrix, bounds: RegimeBounds, p: float) -> np.ndarray:
    if p < 0:
        raise ValueError("p must be nonnegative")
    _check_length(Q, bounds)
    return Q.rates + 0.5 * p * np.diag(bounds.beta)


def perron_root(B, max_iter: int = POWER_MAX_ITER, tol: float = POWER_TOL):
    """Power iteration for a nonnegative primitive matrix.

    Returns the Perron root and eigenvector normalised to ``max = 1``. Stops
    once the Rayleigh quotient moves less than ``RAYLEIGH_TOL`` and the
    eigen-residual is below ``tol`` (both relative to ``max(1, rho)``).
    """
    B = np.asarray(B, dtype=np.float64)
    x = np.ones(B.shape[0])
    rho_old = np.inf
    for _ in range(max_iter):
        y = B @ x
        rho = float(y @ x / (x @ x))
        x = y / y.max()
        scale = max(1.0, abs(rho))
        if abs(rho - rho_old) < RAYLEIGH_TOL * scale:
            rho = float((B @ x) @ x / (x @ x))
            if np.max(np.abs(B @ x - rho * x)) < tol * scale:
                return rho, x
        rho_old = rho
    raise NoConvergence(f"power iteration did not converge in {max_iter} iterations")


def eta_p_and_eigvec(Qp):
    """Negative spectral abscissa of ``Qp`` and its positive eigenvector.

    Parameters
    ----------
    Qp : (N, N) array
        Metzler matrix (nonnegative off-diagonal) with irreducible pattern.

    Returns
    -------
    eta : float
    xi : (N,) array, ``max(xi) == 1``, all entries positive
    """
    Qp = np.asarray(Qp, dtype=np.float64)
    off = Qp - np.diag(np.diag(Qp))
    if np.any(off < 0):
        raise ValueError("Qp has a negative off-diagonal entry")
    n_comp, _ = connected_components(off > 0, directed=True, connection="strong")
    if n_comp != 1:
        raise ValueError("Qp pattern is reducible")
    s = float(np.max(-np.diag(Qp))) + 1.0
    rho, xi = perron_root(Qp + s * np.eye(len(Qp)))
    return s - rho, xi


def spectral_certificate(Q: GeneratorMatrix, bounds: RegimeBounds, p: float) -> SpectralCertificate:
    Qp = build_Qp(Q, bounds, p)
    eta, xi = eta_p_and_eigvec(Qp)
    Qp.setflags(write=False)
    return SpectralCertificate(float(p), Qp, float(eta), xi, Q.q0)


def p0_threshold(Q: GeneratorMatrix, bounds: RegimeBounds) -> float:
    """``min_{beta_i > 0} (-2 q_ii / beta_i)``, or ``inf`` when no beta is positive."""
    _check_length(Q, bounds)
    if not averaging_condition(stationary_distribution(Q), bounds).holds:
        warnings.warn("averaging condition fails; p0 has no meaning here", AdmissibilityWarning, stacklevel=2)
    pos = bounds.beta > 0
    if not pos.any():
        return math.inf
    return float(np.min(-2.0 * np.diag(Q.rates)[pos] / bounds.beta[pos]))


def alpha_additive(bounds: RegimeBounds, cert: SpectralCertificate) -> float:
    p, L, b0 = cert.p, bounds.L, bounds.beta0
    mixing = 4 ** (p / 2) * L**p + cert.q0 * cert.xi_hat * cert.xi_bar
    return p * (b0 + 4 * L**2 * (3 + 4 * b0) + 4 ** ((2 + p) / 2) * b0 * mixing)


def _ratio_power(eta, const, power):
    return math.inf if const == 0 else (eta / const) ** power


def delta_max_additive(bounds: RegimeBounds, cert: SpectralCertificate, alpha: float) -> StepsizeBound:
    if not cert.positive:
        raise NonPositiveEta(f"eta_p = {cert.eta_p!r} at p = {cert.p}")
    f1 = math.inf if bounds.L == 0 else 1.0 / (16 * bounds.L**2)
    f2 = _ratio_power(cert.eta_p, alpha, 2.0 / cert.p)
    return StepsizeBound("additive", float(alpha), min(f1, f2, 1.0), cert.p, (f1, f2))


def condition_star6(Q: GeneratorMatrix, bounds: RegimeBounds) -> bool:
    """``min_{beta_i > 0} (-q_ii / beta_i) > 1``; vacuously true without positive beta."""
    _check_length(Q, bounds)
    pos = bounds.beta > 0
    if not pos.any():
        return True
    return bool(np.min(-np.diag(Q.rates)[pos] / bounds.beta[pos]) > 1)


def beta_multiplicative(bounds: RegimeBounds, cert2: SpectralCertificate) -> float:
    if cert2.p != 2:
        raise ValueError("multiplicative constant needs the p = 2 certificate")
    pos = bounds.beta > 0
    if pos.any():
        exit_rates = -(np.diag(cert2.Qp) - bounds.beta)
        if not np.min(exit_rates[pos] / bounds.beta[pos]) > 1:
            raise Star6Violated("min over positive beta of -q_ii/beta_i is not > 1")
    L, b0, q0 = bounds.L, bounds.beta0, cert2.q0
    return ((1 + 12 * q0) * b0 + 8 * L**2 * (5 + 6 * b0)) * cert2.xi_hat * cert2.xi_bar


def delta_max_multiplicative(bounds: RegimeBounds, cert2: SpectralCertificate, beta: float) -> StepsizeBound:
    if not cert2.positive:
        raise NonPositiveEta(f"eta_2 = {cert2.eta_p!r}")
    f1 = math.inf if bounds.L == 0 else 1.0 / (32 * bounds.L**2)
    f2 = _ratio_power(cert2.eta_p, beta, 2.0)
    return StepsizeBound("multiplicative", float(beta), min(f1, f2, 1.0), 2.0, (f1, f2))


@dataclass
class AdditiveCertification:
    """Outcome of the grid search over ``p``; ``bound`` is None when nothing certifies."""

    p0: float
    certificate: SpectralCertificate | None
    alpha: float | None
    bound: StepsizeBound | None
    table: list


def certify_additive(Q: GeneratorMatrix, bounds: RegimeBounds, p_grid=DEFAULT_P_GRID) -> AdditiveCertification:
    """Evaluate ``p`` on ``p_grid`` restricted to ``(0, min(1, p0))`` and keep the largest bound."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdmissibilityWarning)
        p0 = p0_threshold(Q, bounds)
    best = (None, None, None)
    table = []
    for p in p_grid:
        if not 0 < p < min(1.0, p0):
            continue
        cert = spectral_certificate(Q, bounds, p)
        row = {"p": p, "eta_p": cert.eta_p}
        if cert.positive:
            alpha = alpha_additive(bounds, cert)
            bound = delta_max_additive(bounds, cert, alpha)
            row.update(alpha=alpha, delta_max=bound.delta_max)
            if best[2] is None or bound.delta_max > best[2].delta_max:
                best = (cert, alpha, bound)
        table.append(row)
    return AdditiveCertification(p0, *best, table)


@dataclass
class MultiplicativeCertification:
    star6: bool
    certificate: SpectralCertificate | None
    beta: float | None
    bound: StepsizeBound | None


def certify_multiplicative(Q: GeneratorMatrix, bounds: RegimeBounds) -> MultiplicativeCertification:
    star6 = condition_star6(Q, bounds)
    cert2 = spectral_certificate(Q, bounds, 2.0)
    if not star6 or not cert2.positive:
        return MultiplicativeCertification(star6, cert2, None, None)
    beta = beta_multiplicative(bounds, cert2)
    return MultiplicativeCertification(star6, cert2, beta, delta_max_multiplicative(bounds, cert2, beta))


def certificate_report(Q: GeneratorMatrix, bounds: RegimeBounds, additive: bool = True, multiplicative: bool = True) -> dict:
    """Flat summary document of the spectral certificates.

    The keys ``p, eta_p, xi, alpha, beta_mult, delta_max_additive,
    delta_max_multiplicative, averaging_sum, p0, star6`` are a stable
    schema; ``None`` marks a quantity that was not certified.
    """
    mu = stationary_distribution(Q)
    avg = averaging_condition(mu, bounds)
    report = {
        "kind": "spectral",
        "averaging_sum": avg.value,
        "averaging_holds": avg.holds,
        "p": None,
        "eta_p": None,
        "xi": None,
        "alpha": None,
        "delta_max_additive": None,
        "beta_mult": None,
        "delta_max_multiplicative": None,
        "p0": None,
        "star6": condition_star6(Q, bounds),
        "p_grid": [],
        "p_selection": "largest delta_max over the p grid (heuristic choice)",
    }
    if not avg.holds:
        return report
    if additive:
        add = certify_additive(Q, bounds)
        report["p0"] = add.p0
        report["p_grid"] = add.table
        if add.bound is not None:
            report.update(
                p=add.certificate.p,
                eta_p=add.certificate.eta_p,
                xi=add.certificate.xi.tolist(),
                alpha=add.alpha,
                delta_max_additive=add.bound.delta_max,
            )
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AdmissibilityWarning)
            report["p0"] = p0_threshold(Q, bounds)
    if multiplicative:
        mult = certify_multiplicative(Q, bounds)
        report["eta_2"] = mult.certificate.eta_p
        report["xi_2"] = mult.certificate.xi.tolist()
        if mult.bound is not None:
            report.update(beta_mult=mult.beta, delta_max_multiplicative=mult.bound.delta_max)
    return report
