"""Principal-eigenvalue certificates for reversible switching chains.

With ``pi`` the reversing measure, ``-(Q + diag(beta))`` is self-adjoint in
``L^2(pi)``; conjugating by ``diag(pi)^{1/2}`` makes it a symmetric matrix
whose smallest eigenvalue is ``lambda_0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import LengthMismatch, NonPositiveLambda0, NonPositiveVector, NotReversible
from .generator import DETAILED_BALANCE_TOL, GeneratorMatrix, is_reversible, stationary_distribution
from .spectral import RegimeBounds, StepsizeBound

POSITIVITY_TOL = 1e-12
LAMBDA_POSITIVITY_TOL = 1e-10


@dataclass(frozen=True)
class DirichletProblem:
    Q: GeneratorMatrix
    pi: np.ndarray
    beta: np.ndarray

    @classmethod
    def build(cls, Q: GeneratorMatrix, beta, tol: float = DETAILED_BALANCE_TOL) -> "DirichletProblem":
        beta = np.asarray(beta, dtype=np.float64)
        if len(beta) != Q.n:
            raise LengthMismatch(f"beta has length {len(beta)}, chain has {Q.n} states")
        pi = stationary_distribution(Q)
        if not is_reversible(Q, pi, tol):
            raise NotReversible("chain does not satisfy detailed balance")
        return cls(Q, pi, beta)

    @property
    def omega(self) -> np.ndarray:
        """``Q + diag(beta)``."""
        return self.Q.rates + np.diag(self.beta)


def dirichlet_form(prob: DirichletProblem, f) -> float:
    """``1/2 sum pi_i q_ij (f_j - f_i)^2 - sum pi_i beta_i f_i^2``."""
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (prob.Q.n,):
        raise LengthMismatch(f"f has shape {f.shape}")
    diff = f[None, :] - f[:, None]
    off = prob.Q.rates - np.diag(np.diag(prob.Q.rates))
    return float(0.5 * np.sum(prob.pi[:, None] * off * diff**2) - np.sum(prob.pi * prob.beta * f**2))


def pi_norm2(prob: DirichletProblem, f) -> float:
    f = np.asarray(f, dtype=np.float64)
    return float(np.sum(prob.pi * f**2))


@dataclass(frozen=True)
class EigenCertificate:
    lambda0: float
    xi: np.ndarray
    simple: bool
    positive: bool
    residual: float

    @property
    def xi_max(self) -> float:
        return float(np.max(self.xi))

    @property
    def xi_min_inv(self) -> float:
        return float(1.0 / np.min(self.xi))

    @property
    def usable(self) -> bool:
        """Ground vector is strictly positive and ``lambda_0`` is simple."""
        return self.simple and self.positive


def principal_eigenvalue(prob: DirichletProblem) -> EigenCertificate:
    if not is_reversible(prob.Q, prob.pi, DETAILED_BALANCE_TOL):
        raise NotReversible("chain does not satisfy detailed balance")
    root = np.sqrt(prob.pi)
    a = -prob.omega
    s = root[:, None] * a / root[None, :]
    w, v = np.linalg.eigh(0.5 * (s + s.T))
    lam = float(w[0])
    xi = v[:, 0] / root
    if xi.sum() < 0:
        xi = -xi
    xi = xi / np.max(np.abs(xi))
    gap = w[1] - w[0] if len(w) > 1 else math.inf
    simple = bool(gap > 1e-10 * max(1.0, float(np.max(np.abs(w)))))
    positive = bool(np.all(xi > POSITIVITY_TOL))
    residual = float(np.max(np.abs(prob.omega @ xi + lam * xi)))
    return EigenCertificate(lam, xi, simple, positive, residual)


def test_vector_rate(prob: DirichletProblem, xi) -> float:
    """Largest ``lam`` with ``(Omega xi)_i <= -lam xi_i`` for every i."""
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != (prob.Q.n,):
        raise LengthMismatch(f"xi has shape {xi.shape}")
    if not np.all(xi > 0):
        raise NonPositiveVector("test vector must be strictly positive")
    return float(np.min(-(prob.omega @ xi) / xi))


# keep pytest from collecting the function above when it is imported into a test module
test_vector_rate.__test__ = False


def _lambda_positive(prob, cert) -> bool:
    return cert.lambda0 > LAMBDA_POSITIVITY_TOL * max(1.0, float(np.max(np.abs(prob.omega))))


def kappa_and_delta(prob: DirichletProblem, cert: EigenCertificate, bounds: RegimeBounds) -> StepsizeBound:
    """Reversible-case constant ``kappa`` and the bound ``min(1/(32 L^2), (lambda_0/kappa)^2, 1)``.

    When the ground vector is not usable ``delta_max`` is None (withheld).
    """
    if not _lambda_positive(prob, cert):
        raise NonPositiveLambda0(f"lambda_0 = {cert.lambda0!r}")
    if len(bounds.beta) != prob.Q.n:
        raise LengthMismatch("bounds and chain disagree on the number of regimes")
    L, b0, q0 = bounds.L, bounds.beta0, prob.Q.q0
    kappa = ((1 + 12 * q0) * b0 + 8 * L**2 * (5 + 6 * b0)) * cert.xi_max * cert.xi_min_inv
    f1 = math.inf if L == 0 else 1.0 / (32 * L**2)
    f2 = math.inf if kappa == 0 else (cert.lambda0 / kappa) ** 2
    delta = min(f1, f2, 1.0) if cert.usable else None
    return StepsizeBound("reversible", float(kappa), delta, 2.0, (f1, f2))


def reversible_report(prob: DirichletProblem, bounds: RegimeBounds) -> dict:
    cert = principal_eigenvalue(prob)
    out = {
        "kind": "reversible",
        "lambda0": cert.lambda0,
        "xi": cert.xi.tolist(),
        "simple": cert.simple,
        "positive": cert.positive,
        "residual": cert.residual,
        "kappa": None,
        "delta_max": None,
    }
    if _lambda_positive(prob, cert):
        bound = kappa_and_delta(prob, cert, bounds)
        out.update(kappa=bound.rate_constant, delta_max=bound.delta_max)
    return out
