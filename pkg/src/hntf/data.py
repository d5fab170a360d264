"""Dataset construction and file ingestion.

Synthetic benchmark: a 40x40x40 rank-7 tensor of axis-aligned blocks whose
index ranges nest 7 -> 4 -> 2 along every mode, with clipped Gaussian
noise (N(0, sigma^2) samples, negatives set to 0) added entrywise. The
grouping also yields ground-truth factor sets at ranks 4 and 2 and the 0/1
membership matrices relating them to the rank-7 truth.

File formats:

* DTF  -- header ``dtf k n_1 ... n_k`` then row-major entries.
* COO  -- header ``coo k n_1 ... n_k nnz`` then ``i_1 ... i_k value``
          lines with 1-based indices; duplicates sum, the rest is zero.
* matrices -- numeric CSV, rows = first mode.
* labels   -- CSV ``sample_id,class_name`` (optional header); classes are
          indexed in first-appearance order.
* vocabulary -- one token per line, row index = word id.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .hierarchy import LabelMatrix
from .tensor import DenseTensor, FactorSet

__all__ = [
    "Block",
    "SyntheticSpec",
    "SyntheticTruth",
    "gen_synthetic",
    "LoadError",
    "load_matrix",
    "load_tensor",
    "load_labels",
    "load_vocab",
    "save_tensor_dtf",
    "save_matrix_csv",
]


@dataclass(frozen=True)
class Block:
    """Axis-aligned block: one half-open index range per mode, one amplitude."""

    ranges: tuple[tuple[int, int], ...]
    amplitude: float = 1.0


def _default_blocks() -> tuple[Block, ...]:
    # Seven cubes along identical per-mode ranges; consecutive pairs merge
    # into four groups of 10 indices, which merge into two groups of 20.
    spans = [(0, 5), (5, 10), (10, 15), (15, 20), (20, 25), (25, 30), (30, 40)]
    return tuple(Block(ranges=(s, s, s)) for s in spans)


@dataclass(frozen=True)
class SyntheticSpec:
    """Hierarchical block-tensor layout: leaf blocks plus their grouping
    into mid-level and top-level clusters (indices into the level below)."""

    shape: tuple[int, int, int] = (40, 40, 40)
    blocks: tuple[Block, ...] = field(default_factory=_default_blocks)
    groups_mid: tuple[tuple[int, ...], ...] = ((0, 1), (2, 3), (4, 5), (6,))
    groups_top: tuple[tuple[int, ...], ...] = ((0, 1), (2, 3))
    noise_sigma2: float = 0.0
    seed: int = 0

    def __post_init__(self):
        k = len(self.shape)
        for bi, block in enumerate(self.blocks):
            if len(block.ranges) != k:
                raise ValueError(f"block {bi} has {len(block.ranges)} ranges for order {k}")
            if block.amplitude <= 0.0:
                raise ValueError(f"block {bi} amplitude must be positive")
            for m, (lo, hi) in enumerate(block.ranges):
                if not 0 <= lo < hi <= self.shape[m]:
                    raise ValueError(
                        f"block {bi} range {(lo, hi)} out of bounds for mode {m + 1}"
                    )
        for bi, bj in _pairs(len(self.blocks)):
            if all(
                _overlaps(self.blocks[bi].ranges[m], self.blocks[bj].ranges[m])
                for m in range(k)
            ):
                raise ValueError(f"blocks {bi} and {bj} overlap")
        _check_partition(self.groups_mid, len(self.blocks), "groups_mid")
        _check_partition(self.groups_top, len(self.groups_mid), "groups_top")
        if self.noise_sigma2 < 0.0:
            raise ValueError("noise_sigma2 must be nonnegative")


def _pairs(n):
    return ((i, j) for i in range(n) for j in range(i + 1, n))


def _overlaps(a, b):
    return a[0] < b[1] and b[0] < a[1]


def _check_partition(groups, n, name):
    seen = sorted(i for g in groups for i in g)
    if seen != list(range(n)):
        raise ValueError(f"{name} must partition 0..{n - 1}, got {groups}")


def _membership(groups, n) -> np.ndarray:
    m = np.zeros((n, len(groups)))
    for g, members in enumerate(groups):
        for i in members:
            m[i, g] = 1.0
    return m


@dataclass
class SyntheticTruth:
    """Ground-truth factor sets at each hierarchy level plus the ideal 0/1
    mixing matrices that the fitted W matrices should approximate."""

    leaf: FactorSet
    mid: FactorSet
    top: FactorSet
    mixing_leaf_to_mid: np.ndarray
    mixing_mid_to_top: np.ndarray


def gen_synthetic(spec: SyntheticSpec = SyntheticSpec()) -> tuple[DenseTensor, SyntheticTruth]:
    """Build the block tensor (noise included) and its ground truth.

    The noiseless tensor is exactly the CP reconstruction of the leaf
    factors; coarser truths sum leaf columns within each declared group.
    """
    k = len(spec.shape)
    r = len(spec.blocks)
    leaf = []
    for m in range(k):
        f = np.zeros((spec.shape[m], r))
        for j, block in enumerate(spec.blocks):
            lo, hi = block.ranges[m]
            amp = block.amplitude if m == 0 else 1.0
            f[lo:hi, j] = amp
        leaf.append(f)
    m74 = _membership(spec.groups_mid, r)
    m42 = _membership(spec.groups_top, len(spec.groups_mid))
    mid = [f @ m74 for f in leaf]
    top = [f @ m42 for f in mid]
    truth = SyntheticTruth(
        leaf=FactorSet(leaf),
        mid=FactorSet(mid),
        top=FactorSet(top),
        mixing_leaf_to_mid=m74,
        mixing_mid_to_top=m42,
    )
    arr = np.zeros(spec.shape)
    for block in spec.blocks:
        idx = tuple(slice(lo, hi) for lo, hi in block.ranges)
        arr[idx] += block.amplitude
    if spec.noise_sigma2 > 0.0:
        rng = np.random.default_rng(spec.seed)
        noise = rng.normal(0.0, np.sqrt(spec.noise_sigma2), size=spec.shape)
        arr = arr + np.clip(noise, 0.0, None)
    return DenseTensor(arr), truth


class LoadError(ValueError):
    """Raised on malformed input files; carries the offending line number."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


def _tokens(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line and not line.startswith("#"):
                yield lineno, line.split()


def load_tensor(path) -> DenseTensor:
    """Read a DTF or COO tensor file."""
    rows = _tokens(path)
    try:
        lineno, header = next(rows)
    except StopIteration:
        raise LoadError(path, 1, "empty file") from None
    kind = header[0].lower()
    if kind not in ("dtf", "coo"):
        raise LoadError(path, lineno, f"unknown format {header[0]!r}")
    try:
        k = int(header[1])
        shape = tuple(int(v) for v in header[2 : 2 + k])
    except (IndexError, ValueError):
        raise LoadError(path, lineno, "malformed header") from None
    if len(shape) != k or k < 2 or any(n <= 0 for n in shape):
        raise LoadError(path, lineno, f"bad shape {shape} for order {k}")
    if kind == "dtf":
        values = []
        for lineno, toks in rows:
            for tok in toks:
                try:
                    v = float(tok)
                except ValueError:
                    raise LoadError(path, lineno, f"bad value {tok!r}") from None
                if v < 0.0:
                    raise LoadError(path, lineno, f"negative value {v}")
                values.append(v)
        if len(values) != int(np.prod(shape)):
            raise LoadError(
                path, lineno, f"expected {int(np.prod(shape))} values, got {len(values)}"
            )
        return DenseTensor(values, shape=shape)
    # COO: duplicate coordinates sum
    try:
        nnz = int(header[2 + k])
    except (IndexError, ValueError):
        raise LoadError(path, lineno, "COO header missing nnz") from None
    arr = np.zeros(shape)
    count = 0
    for lineno, toks in rows:
        if len(toks) != k + 1:
            raise LoadError(path, lineno, f"expected {k + 1} fields, got {len(toks)}")
        try:
            idx = tuple(int(t) - 1 for t in toks[:k])
            v = float(toks[k])
        except ValueError:
            raise LoadError(path, lineno, "bad index or value") from None
        if any(not 0 <= i < n for i, n in zip(idx, shape)):
            raise LoadError(path, lineno, f"index out of bounds: {toks[:k]}")
        if v < 0.0:
            raise LoadError(path, lineno, f"negative value {v}")
        arr[idx] += v
        count += 1
    if count != nnz:
        raise LoadError(path, lineno if count else 1, f"expected {nnz} entries, got {count}")
    return DenseTensor(arr)


def load_matrix(path) -> np.ndarray:
    """Read a nonnegative numeric CSV matrix (rows = first mode)."""
    rows = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            try:
                row = [float(v) for v in record]
            except ValueError:
                raise LoadError(path, lineno, f"non-numeric row: {record}") from None
            if any(v < 0.0 for v in row):
                raise LoadError(path, lineno, "negative value")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise LoadError(path, lineno, f"expected {width} columns, got {len(row)}")
            rows.append(row)
    if not rows:
        raise LoadError(path, 1, "empty matrix file")
    return np.asarray(rows)


def load_labels(path) -> LabelMatrix:
    """Read ``sample_id,class_name`` CSV into a one-hot LabelMatrix."""
    names = []
    with open(path, encoding="utf-8") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            if len(record) != 2:
                raise LoadError(path, lineno, f"expected 2 fields, got {len(record)}")
            sid, cls = (v.strip() for v in record)
            if lineno == 1 and (sid, cls) == ("sample_id", "class_name"):
                continue
            names.append(cls)
    if not names:
        raise LoadError(path, 1, "no label rows")
    classes = list(dict.fromkeys(names))
    index = {c: i for i, c in enumerate(classes)}
    y = np.zeros((len(classes), len(names)))
    for j, cls in enumerate(names):
        y[index[cls], j] = 1.0
    return LabelMatrix(y=y, classes=tuple(classes))


def load_vocab(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def save_tensor_dtf(path, t: DenseTensor) -> None:
    arr = t.array if isinstance(t, DenseTensor) else np.asarray(t)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("dtf " + str(arr.ndim) + " " + " ".join(map(str, arr.shape)) + "\n")
        flat = arr.reshape(-1)
        for start in range(0, flat.size, 16):
            fh.write(" ".join(repr(float(v)) for v in flat[start : start + 16]) + "\n")


def save_matrix_csv(path, mat) -> None:
    mat = np.asarray(mat)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for row in mat:
            writer.writerow([repr(float(v)) for v in row])
