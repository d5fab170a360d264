"""Single-layer nonnegative factorization solvers.

NMF and nonnegative CP decomposition (NCPD) via Lee-Seung multiplicative
updates, plus the joint data/label update step used by the supervised
hierarchy. Initialization is i.i.d. uniform (0,1) from numpy's default
generator (PCG64) seeded by ``FitOptions.seed``, so runs reproduce
bit-for-bit on a given platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import DenseTensor, FactorSet, _as_array, kr_excluding, unfold

__all__ = ["FitOptions", "NmfResult", "CpResult", "nmf", "ncpd", "supervised_nmf_step"]


@dataclass(frozen=True)
class FitOptions:
    """Knobs shared by every multiplicative-update solver.

    tol is a relative-improvement threshold on the tracked objective
    (relative Frobenius loss); epsilon is added to update denominators.
    """

    max_iters: int = 500
    tol: float = 1e-6
    seed: int = 0
    epsilon: float = 1e-12

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.tol < 0.0:
            raise ValueError("tol must be nonnegative")


@dataclass
class NmfResult:
    """Output of :func:`nmf`: X ~ a @ s with per-iteration relative losses."""

    a: np.ndarray
    s: np.ndarray
    loss_history: list[float] = field(default_factory=list)


@dataclass
class CpResult:
    """Output of :func:`ncpd`: fitted factors and per-iteration relative losses."""

    factors: FactorSet
    loss_history: list[float] = field(default_factory=list)


def _init_factors(shape, r: int, rng: np.random.Generator) -> list[np.ndarray]:
    return [rng.random((n, r)) for n in shape]


def _stop(prev: float | None, cur: float, tol: float) -> bool:
    if prev is None or prev == 0.0:
        return False
    return (prev - cur) / prev < tol


def _ncpd_core(unfoldings, shape, r, opts, factors=None):
    """Alternating multiplicative updates on precomputed unfoldings.

    Returns (factors, loss_history) with the relative loss evaluated once
    per sweep over all modes.
    """
    rng = np.random.default_rng(opts.seed)
    if factors is None:
        factors = _init_factors(shape, r, rng)
    else:
        factors = [np.array(f, dtype=np.float64) for f in factors]
    norm_x = float(np.linalg.norm(unfoldings[0]))
    k = len(shape)
    history: list[float] = []
    prev = None
    for _ in range(opts.max_iters):
        for i in range(k):
            kr = kr_excluding(factors, i)
            num = unfoldings[i] @ kr
            den = factors[i] @ (kr.T @ kr)
            factors[i] = factors[i] * num / (den + opts.epsilon)
        kr = kr_excluding(factors, 0)
        loss = float(np.linalg.norm(unfoldings[0] - factors[0] @ kr.T)) / norm_x
        history.append(loss)
        if _stop(prev, loss, opts.tol):
            break
        prev = loss
    return factors, history


def _unfold_all(arr: np.ndarray) -> list[np.ndarray]:
    return [unfold(arr, i + 1) for i in range(arr.ndim)]


def ncpd(t, r: int, opts: FitOptions = FitOptions()) -> CpResult:
    """Nonnegative CP decomposition of an order-k tensor at rank r.

    Each mode i in turn gets the multiplicative update
    X_i <- X_i * (T_(i) K_i) / (X_i K_i^T K_i + eps), where K_i is the
    reverse-order Khatri-Rao product of the other factors.
    """
    arr = _as_array(t)
    if not isinstance(t, DenseTensor):
        t = DenseTensor(arr)
        arr = t.array
    if r < 1:
        raise ValueError("rank must be >= 1")
    factors, history = _ncpd_core(_unfold_all(arr), arr.shape, r, opts)
    return CpResult(FactorSet(factors), history)


def nmf(x, r: int, opts: FitOptions = FitOptions()) -> NmfResult:
    """Frobenius NMF: X ~ A S with A (m x r), S (r x n), both nonnegative.

    Alternating Lee-Seung updates; on order-2 input the NCPD sweep
    coincides with the (A, S) updates exactly, so the same core is used.
    """
    arr = _as_array(x)
    if arr.ndim != 2:
        raise ValueError(f"nmf expects a matrix, got order {arr.ndim}")
    if arr.size and arr.min() < 0.0:
        raise ValueError("data matrix must be nonnegative")
    m, n = arr.shape
    if not 1 <= r <= min(m, n):
        raise ValueError(f"rank must satisfy 1 <= r <= min{arr.shape}, got {r}")
    factors, history = _ncpd_core(_unfold_all(arr), arr.shape, r, opts)
    return NmfResult(a=factors[0], s=factors[1].T.copy(), loss_history=history)


def supervised_nmf_step(x, y, a, b, s, lam: float, epsilon: float = 1e-12):
    """One multiplicative step on ||X - AS||_F^2 + lam * ||Y - BS||_F^2.

    A and B are updated against their own residuals, then S against the
    coupled objective. Returns (a, b, s); inputs are not modified.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(getattr(y, "y", y), dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if lam < 0.0:
        raise ValueError("lam must be nonnegative")
    m, n = x.shape
    c = y.shape[0]
    r = a.shape[1]
    if y.shape[1] != n or s.shape != (r, n) or a.shape != (m, r) or b.shape != (c, r):
        raise ValueError(
            f"shape mismatch: x{x.shape} y{y.shape} a{a.shape} b{b.shape} s{s.shape}"
        )
    st = s.T
    a = a * (x @ st) / (a @ (st.T @ st) + epsilon)
    b = b * (y @ st) / (b @ (st.T @ st) + epsilon)
    num = a.T @ x + lam * (b.T @ y)
    den = (a.T @ a) @ s + lam * ((b.T @ b) @ s) + epsilon
    s = s * num / den
    return a, b, s


def joint_objective(x, y, a, b, s, lam: float) -> float:
    """||X - AS||_F^2 + lam * ||Y - BS||_F^2, the supervised step's objective."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(getattr(y, "y", y), dtype=np.float64)
    data = float(np.linalg.norm(x - a @ s) ** 2)
    label = float(np.linalg.norm(y - b @ s) ** 2)
    return data + lam * label
