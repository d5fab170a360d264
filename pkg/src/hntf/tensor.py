"""Dense nonnegative tensor algebra: storage, unfolding, Khatri-Rao,
CP reconstruction, and Frobenius losses.

Conventions
-----------
Modes are 1-based in the public API. ``unfold`` uses the matricization in
which, among the remaining modes, the first one varies fastest along the
columns; it pairs with the *reverse-mode-order* Khatri-Rao product so that

    unfold(cp_reconstruct(F), i) == F_i @ khatri_rao(F_k, ..., F_{i+1},
                                                     F_{i-1}, ..., F_1).T

holds exactly. All arithmetic is float64.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "DenseTensor",
    "FactorSet",
    "unfold",
    "fold",
    "khatri_rao",
    "cp_reconstruct",
    "relative_loss",
    "frobenius",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


def _as_array(t) -> np.ndarray:
    """Accept a DenseTensor or any array-like; return its float64 ndarray."""
    if isinstance(t, DenseTensor):
        return t.array
    return np.asarray(t, dtype=np.float64)


class DenseTensor:
    """Order-k (k >= 2) dense tensor with entrywise nonnegative entries.

    Values are stored row-major (last mode varying fastest) and are
    immutable after construction; all operations on tensors are pure.
    """

    __slots__ = ("_arr",)

    def __init__(self, values, shape=None):
        arr = np.asarray(values, dtype=np.float64)
        if shape is not None:
            shape = tuple(int(n) for n in shape)
            if any(n <= 0 for n in shape):
                raise ValueError(f"all dimensions must be positive, got {shape}")
            if arr.size != int(np.prod(shape)):
                raise ValueError(
                    f"got {arr.size} values for shape {shape} "
                    f"(expected {int(np.prod(shape))})"
                )
            arr = arr.reshape(shape)
        if arr.ndim < 2:
            raise ValueError(f"tensor order must be >= 2, got order {arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor entries must be finite")
        if arr.size and arr.min() < 0.0:
            raise ValueError("tensor entries must be nonnegative")
        self._arr = _readonly(arr)

    @property
    def array(self) -> np.ndarray:
        return self._arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self._arr.shape

    @property
    def order(self) -> int:
        return self._arr.ndim

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the entries."""
        return self._arr.reshape(-1)

    def norm(self) -> float:
        return float(np.linalg.norm(self._arr))

    def __repr__(self) -> str:
        return f"DenseTensor(shape={self.shape})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._arr, other._arr))

    def __hash__(self):
        return hash((self.shape, self._arr.tobytes()))


class FactorSet:
    """The k factor matrices of a rank-r CP model; factor i is n_i x r."""

    __slots__ = ("_factors",)

    def __init__(self, factors):
        mats = []
        for i, f in enumerate(factors):
            m = np.asarray(f, dtype=np.float64)
            if m.ndim != 2:
                raise ValueError(f"factor {i} must be a matrix, got shape {m.shape}")
            if m.size and m.min() < 0.0:
                raise ValueError(f"factor {i} has negative entries")
            mats.append(_readonly(m))
        if not mats:
            raise ValueError("factor list must be non-empty")
        r = mats[0].shape[1]
        if any(m.shape[1] != r for m in mats):
            raise ValueError(
                f"all factors must share a column count, got "
                f"{[m.shape[1] for m in mats]}"
            )
        if r < 1:
            raise ValueError("rank must be >= 1")
        self._factors = tuple(mats)

    @property
    def factors(self) -> tuple[np.ndarray, ...]:
        return self._factors

    @property
    def rank(self) -> int:
        return self._factors[0].shape[1]

    @property
    def order(self) -> int:
        return len(self._factors)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self._factors)

    def __getitem__(self, i: int) -> np.ndarray:
        return self._factors[i]

    def __len__(self) -> int:
        return len(self._factors)

    def __repr__(self) -> str:
        return f"FactorSet(shape={self.shape}, rank={self.rank})"


def unfold(t, mode: int) -> np.ndarray:
    """Mode-`mode` matricization (1-based), shape n_mode x prod(other dims).

    Among the column indices, the first remaining mode varies fastest.
    """
    arr = _as_array(t)
    k = arr.ndim
    if not 1 <= mode <= k:
        raise ValueError(f"mode must be in 1..{k}, got {mode}")
    moved = np.moveaxis(arr, mode - 1, 0)
    return np.reshape(moved, (arr.shape[mode - 1], -1), order="F")


def fold(mat, mode: int, shape) -> np.ndarray:
    """Inverse of :func:`unfold`: rebuild the full array from a matricization."""
    shape = tuple(int(n) for n in shape)
    k = len(shape)
    if not 1 <= mode <= k:
        raise ValueError(f"mode must be in 1..{k}, got {mode}")
    mat = np.asarray(mat, dtype=np.float64)
    rest = shape[: mode - 1] + shape[mode:]
    moved = np.reshape(mat, (shape[mode - 1],) + rest, order="F")
    return np.moveaxis(moved, 0, mode - 1)


def khatri_rao(mats) -> np.ndarray:
    """Columnwise Kronecker product of matrices sharing a column count.

    For a list [M_1, ..., M_p], column j of the result is
    kron(M_1[:, j], ..., M_p[:, j]) with later matrices varying fastest.
    """
    mats = [np.asarray(m, dtype=np.float64) for m in mats]
    if not mats:
        raise ValueError("khatri_rao requires at least one matrix")
    r = mats[0].shape[1]
    for i, m in enumerate(mats):
        if m.ndim != 2:
            raise ValueError(f"input {i} must be a matrix, got shape {m.shape}")
        if m.shape[1] != r:
            raise ValueError(
                f"column-count mismatch: input 0 has {r} columns, "
                f"input {i} has {m.shape[1]}"
            )
    out = mats[0]
    for m in mats[1:]:
        out = (out[:, None, :] * m[None, :, :]).reshape(-1, r)
    return out


def kr_excluding(factors, i: int) -> np.ndarray:
    """Khatri-Rao of all factors except index i (0-based), in reverse mode
    order; the companion matrix K_i of the mode-(i+1) unfolding."""
    others = [factors[j] for j in reversed(range(len(factors))) if j != i]
    return khatri_rao(others)


def cp_reconstruct(f: FactorSet) -> DenseTensor:
    """Evaluate the CP model: entry (i_1..i_k) = sum_j prod_m F_m[i_m, j]."""
    factors = f.factors
    shape = f.shape
    full = factors[0] @ kr_excluding(factors, 0).T
    return DenseTensor(fold(full, 1, shape))


def frobenius(x) -> float:
    return float(np.linalg.norm(_as_array(x)))


def relative_loss(x, xhat) -> float:
    """||x - xhat||_F / ||x||_F. Requires equal shapes and ||x||_F > 0."""
    a = _as_array(x)
    b = _as_array(xhat)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    nx = np.linalg.norm(a)
    if nx == 0.0:
        raise ValueError("reference tensor has zero norm")
    return float(np.linalg.norm(a - b) / nx)
