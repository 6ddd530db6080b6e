"""Finite-partition reduction and the M-matrix test.

States are grouped by their growth rate ``beta`` into classes
``F_i = {r : beta_r in (k_{i-1}, k_i]}`` ordered by increasing ``beta``. Lumped
rates take the supremum of the row mass into lower classes and the infimum
into higher ones, and ``-(Q^F + diag(beta^F)) H`` must be a nonsingular
M-matrix, with ``H`` the upper-triangular matrix of ones.

A countable regime space is described by a finite set of representative
states plus declared bounds for whatever cannot be computed from them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import EmptyClass, NonMonotoneCuts, NotMMatrix, UnresolvableBound


@dataclass(frozen=True)
class CountableRegimeSpec:
    """Representative states of a (possibly infinite) regime space.

    Parameters
    ----------
    beta : (R,) array
        Growth rates of the representatives.
    rates : (R, R) array
        Jump rates between representatives. When ``complete`` is True these
        are all the states and ``rates`` is a full Q-matrix.
    K : float
        ``sup beta`` over the whole space; defaults to ``max(beta)`` when complete.
    q_sup : float
        ``sup(-q_ii)`` over the whole space.
    complete : bool
        Whether the representatives exhaust the state space.
    class_rate_bounds : dict
        ``{(i, j): value}`` declared lumped rates (sup for j < i, inf for j > i),
        0-based class indices; used in place of representative sums.
    class_beta_sup : dict
        ``{i: value}`` declared ``sup beta`` per class.
    exponentially_ergodic : bool
        User declaration; not verified.
    """

    beta: np.ndarray
    rates: np.ndarray
    K: float | None = None
    q_sup: float | None = None
    complete: bool = True
    class_rate_bounds: dict = field(default_factory=dict)
    class_beta_sup: dict = field(default_factory=dict)
    exponentially_ergodic: bool = True

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64).reshape(-1)
        rates = np.asarray(self.rates, dtype=np.float64)
        if rates.shape != (len(beta), len(beta)):
            raise ValueError("rates must be square and match beta")
        off = rates - np.diag(np.diag(rates))
        if np.any(off < 0):
            raise ValueError("negative off-diagonal rate")
        if self.complete and np.max(np.abs(rates.sum(axis=1))) > 1e-12 * max(1.0, np.max(np.abs(rates))):
            raise ValueError("complete specification must be conservative")
        K = float(np.max(beta)) if self.K is None else float(self.K)
        q_sup = float(np.max(-np.diag(rates))) if self.q_sup is None else float(self.q_sup)
        if not (np.isfinite(K) and np.isfinite(q_sup)):
            raise ValueError("K and sup(-q_ii) must be finite")
        if np.any(beta > K):
            raise ValueError("a representative beta exceeds K")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "q_sup", q_sup)


@dataclass(frozen=True)
class Partition:
    cuts: np.ndarray
    labels: np.ndarray  # class index of each representative, 0-based

    @property
    def n_classes(self) -> int:
        return len(self.cuts) + 1

    def members(self, i):
        return np.flatnonzero(self.labels == i)


def build_partition(spec: CountableRegimeSpec, cuts) -> Partition:
    """Assign representatives to ``(k_{i-1}, k_i]`` with ``k_0 = -inf`` and ``k_{m+1} = K``."""
    cuts = np.asarray(cuts, dtype=np.float64).reshape(-1)
    if np.any(np.diff(cuts) <= 0):
        raise NonMonotoneCuts("cut points must be strictly increasing")
    if cuts.size and cuts[-1] >= spec.K:
        raise EmptyClass(f"last cut {cuts[-1]!r} leaves the top class (.., K={spec.K!r}] empty")
    # right-closed intervals: first cut >= beta
    labels = np.searchsorted(cuts, spec.beta, side="left")
    for i in range(len(cuts) + 1):
        if not np.any(labels == i):
            raise EmptyClass(f"class {i} has no representative")
    return Partition(cuts, labels)


def lumped_generator(spec: CountableRegimeSpec, partition: Partition):
    """Lumped Q-matrix ``Q^F`` and class growth rates ``beta^F``.

    Declared bounds take precedence; otherwise sup/inf are taken over the
    representatives, which is only legitimate for a complete specification.
    """
    m1 = partition.n_classes
    qf = np.zeros((m1, m1))
    for i in range(m1):
        rows = partition.members(i)
        for j in range(m1):
            if i == j:
                continue
            if (i, j) in spec.class_rate_bounds:
                qf[i, j] = float(spec.class_rate_bounds[(i, j)])
                continue
            if not spec.complete:
                raise UnresolvableBound(f"no declared bound for lumped rate ({i}, {j})")
            mass = spec.rates[np.ix_(rows, partition.members(j))].sum(axis=1)
            qf[i, j] = mass.max() if j < i else mass.min()
    np.fill_diagonal(qf, 0.0)
    np.fill_diagonal(qf, -qf.sum(axis=1))

    beta_f = np.empty(m1)
    for i in range(m1):
        if i in spec.class_beta_sup:
            beta_f[i] = float(spec.class_beta_sup[i])
        elif spec.complete:
            beta_f[i] = spec.beta[partition.members(i)].max()
        else:
            raise UnresolvableBound(f"no declared sup beta for class {i}")
    return qf, beta_f


def h_matrix(size: int) -> np.ndarray:
    if size < 1:
        raise ValueError("size must be at least 1")
    return np.triu(np.ones((size, size)))


def is_nonsingular_m_matrix(A) -> bool:
    """Z-matrix with every leading principal minor positive."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    off = A - np.diag(np.diag(A))
    if np.any(off > 0):
        return False
    for k in range(1, A.shape[0] + 1):
        if not np.linalg.det(A[:k, :k]) > 0:
            return False
    return True


@dataclass(frozen=True)
class LumpedCertificate:
    QF: np.ndarray
    betaF: np.ndarray
    H: np.ndarray
    A: np.ndarray
    is_M: bool
    etaF: np.ndarray | None
    xiF: np.ndarray | None
    lambdaF: np.ndarray | None
    exponentially_ergodic_declared: bool = True

    def to_dict(self):
        tolist = lambda a: None if a is None else a.tolist()  # noqa: E731
        return {
            "kind": "partition",
            "QF": self.QF.tolist(),
            "betaF": self.betaF.tolist(),
            "A": self.A.tolist(),
            "is_M": self.is_M,
            "etaF": tolist(self.etaF),
            "xiF": tolist(self.xiF),
            "lambdaF": tolist(self.lambdaF),
            "exponential_ergodicity": "declared, not verified",
            "delta_max": None,
        }


def partition_certificate(QF, betaF, strict: bool = False, exponentially_ergodic: bool = True) -> LumpedCertificate:
    """M-matrix verdict with witness ``eta^F`` solving ``A eta = 1``.

    With ``strict=True`` a failed verdict raises :class:`NotMMatrix` instead of
    returning a certificate with ``is_M = False``.
    """
    QF = np.asarray(QF, dtype=np.float64)
    betaF = np.asarray(betaF, dtype=np.float64)
    H = h_matrix(len(betaF))
    A = -(QF + np.diag(betaF)) @ H
    if not is_nonsingular_m_matrix(A):
        if strict:
            raise NotMMatrix("-(Q^F + diag beta^F) H is not a nonsingular M-matrix")
        return LumpedCertificate(QF, betaF, H, A, False, None, None, None, exponentially_ergodic)
    eta = np.linalg.solve(A, np.ones(len(betaF)))
    if not np.all(eta > 0):
        raise RuntimeError("M-matrix solve returned a non-positive witness")
    xi = H @ eta
    if np.any(np.diff(xi) >= 0):
        raise RuntimeError("lumped test vector is not strictly decreasing")
    return LumpedCertificate(QF, betaF, H, A, True, eta, xi, A @ eta, exponentially_ergodic)


def finite_spec(Q, beta) -> CountableRegimeSpec:
    """Complete specification of a finite chain."""
    rates = Q.rates if hasattr(Q, "rates") else np.asarray(Q, dtype=np.float64)
    return CountableRegimeSpec(np.asarray(beta, dtype=np.float64), rates)
