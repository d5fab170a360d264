"""Metrics and reporting: classification from label dictionaries, topic
keywords, and heatmap CSV exports of L1-normalized factor columns."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .hierarchy import LayerChain

__all__ = [
    "ReportRow",
    "classify",
    "accuracy",
    "top_keywords",
    "l1_normalize_columns",
    "heatmap_export",
    "write_report_csv",
]


@dataclass
class ReportRow:
    method: str
    rank: int
    rel_loss: float
    abs_loss: float
    seed: int
    wall_time: float
    accuracy: float | None = None

    def __post_init__(self):
        if self.rel_loss < 0.0:
            raise ValueError("relative loss must be nonnegative")
        if self.accuracy is not None and not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy must lie in [0, 1]")


def classify(b, s) -> np.ndarray:
    """Predicted class per sample: argmax over rows of B @ S; ties break to
    the lowest class index."""
    b = np.asarray(b, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if b.ndim != 2 or s.ndim != 2 or b.shape[1] != s.shape[0]:
        raise ValueError(f"shape mismatch: b{b.shape} s{s.shape}")
    return np.argmax(b @ s, axis=0)


def accuracy(pred, truth) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    return float(np.mean(pred == truth))


def l1_normalize_columns(mat) -> np.ndarray:
    """Columnwise L1 normalization; all-zero columns stay zero with a warning."""
    mat = np.asarray(mat, dtype=np.float64)
    sums = mat.sum(axis=0)
    zero = sums == 0.0
    if np.any(zero):
        warnings.warn(f"{int(zero.sum())} zero column(s) left unnormalized", stacklevel=2)
    safe = np.where(zero, 1.0, sums)
    return mat / safe


def top_keywords(word_factor, vocab, m: int) -> list[list[tuple[str, float]]]:
    """Per-topic ranked (token, weight) lists from an n_words x r factor.

    Columns are L1-normalized before ranking; ties rank the lower word
    index first; m larger than the vocabulary is clamped with a warning.
    """
    mat = np.asarray(word_factor, dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError(f"word factor must be a matrix, got shape {mat.shape}")
    if len(vocab) != mat.shape[0]:
        raise ValueError(f"{len(vocab)} tokens for {mat.shape[0]} factor rows")
    if m > mat.shape[0]:
        warnings.warn(f"requested {m} keywords, clamping to {mat.shape[0]}", stacklevel=2)
        m = mat.shape[0]
    normed = l1_normalize_columns(mat)
    topics = []
    for j in range(normed.shape[1]):
        col = normed[:, j]
        order = np.argsort(-col, kind="stable")[:m]
        topics.append([(vocab[i], float(col[i])) for i in order])
    return topics


def heatmap_export(chain: LayerChain, modes, out_dir) -> list[Path]:
    """Write one CSV per (layer, mode) of L1-column-normalized factors.

    Rows are mode entities, columns are topics; values are written with 17
    significant digits so a re-parse reproduces them.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    order = chain.layers[0].factors.order
    for mode in modes:
        if not 1 <= mode <= order:
            raise ValueError(f"mode must be in 1..{order}, got {mode}")
    written = []
    for ell, layer in enumerate(chain.layers):
        for mode in modes:
            normed = l1_normalize_columns(layer.factors[mode - 1])
            path = out_dir / f"heatmap_layer{ell}_mode{mode}.csv"
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow([f"topic_{j}" for j in range(normed.shape[1])])
                for row in normed:
                    writer.writerow([f"{v:.17g}" for v in row])
            written.append(path)
    return written


def write_report_csv(path, rows: list[ReportRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "rank", "rel_loss", "abs_loss", "accuracy", "seed", "wall_time_s"]
        )
        for row in rows:
            writer.writerow(
                [
                    row.method,
                    row.rank,
                    f"{row.rel_loss:.17g}",
                    f"{row.abs_loss:.17g}",
                    "" if row.accuracy is None else f"{row.accuracy:.17g}",
                    row.seed,
                    f"{row.wall_time:.3f}",
                ]
            )
