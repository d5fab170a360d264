"""JSON serialization of fitted chains.

A chain document stores ranks, per-layer factor matrices (row-major),
mixing matrices, losses, the method tag, seed, and fit options. Floats
round-trip exactly (json uses repr), so reloaded chains reproduce stored
losses bit-for-bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .factorize import FitOptions
from .hierarchy import (
    HncpdResult,
    Layer,
    LayerChain,
    MixingMatrix,
    SupervisedResult,
)
from .tensor import FactorSet

__all__ = [
    "chain_to_dict",
    "chain_from_dict",
    "save_chain",
    "load_chain",
    "result_to_dict",
]

FORMAT = "hntf-chain"
VERSION = 1


def _matrix(a: np.ndarray) -> dict:
    return {"rows": a.shape[0], "cols": a.shape[1], "data": [float(v) for v in a.reshape(-1)]}


def _unmatrix(d: dict) -> np.ndarray:
    return np.asarray(d["data"], dtype=np.float64).reshape(d["rows"], d["cols"])


def _options_dict(opts: FitOptions) -> dict:
    return {
        "max_iters": opts.max_iters,
        "tol": opts.tol,
        "seed": opts.seed,
        "epsilon": opts.epsilon,
    }


def chain_to_dict(chain: LayerChain, options=None) -> dict:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "method": chain.method,
        "seed": chain.seed,
        "ranks": list(chain.ranks),
        "layers": [
            {
                "rank": layer.rank,
                "factors": [_matrix(f) for f in layer.factors.factors],
                "mixing": None if layer.mixing is None else _matrix(layer.mixing.w),
                "rel_loss": layer.rel_loss,
                "abs_loss": layer.abs_loss,
            }
            for layer in chain.layers
        ],
    }
    if options is not None:
        if isinstance(options, FitOptions):
            options = [options]
        doc["options"] = [_options_dict(o) for o in options]
    return doc


def chain_from_dict(doc: dict) -> LayerChain:
    if doc.get("format") != FORMAT:
        raise ValueError(f"not a {FORMAT} document")
    layers = []
    for entry in doc["layers"]:
        mixing = entry.get("mixing")
        layers.append(
            Layer(
                factors=FactorSet([_unmatrix(m) for m in entry["factors"]]),
                mixing=None if mixing is None else MixingMatrix(_unmatrix(mixing)),
                rel_loss=float(entry["rel_loss"]),
                abs_loss=float(entry["abs_loss"]),
            )
        )
    return LayerChain(layers, method=doc["method"], seed=int(doc["seed"]))


def result_to_dict(result, options=None) -> dict:
    """Serialize any fit result (LayerChain, SupervisedResult, HncpdResult)."""
    if isinstance(result, LayerChain):
        return chain_to_dict(result, options)
    if isinstance(result, SupervisedResult):
        doc = chain_to_dict(result.chain, options)
        doc["dictionaries"] = [_matrix(b) for b in result.dictionaries]
        doc["coupling"] = result.coupling
        return doc
    if isinstance(result, HncpdResult):
        doc = {
            "format": FORMAT,
            "version": VERSION,
            "method": result.method,
            "seed": result.seed,
            "ranks": [result.base.rank]
            + (list(result.mode_chains[0].ranks) if result.mode_chains else []),
            "base_factors": [_matrix(f) for f in result.base.factors],
            "mode_chains": [chain_to_dict(c) for c in result.mode_chains],
            "rel_losses": list(result.rel_losses),
            "abs_losses": list(result.abs_losses),
        }
        if options is not None:
            if isinstance(options, FitOptions):
                options = [options]
            doc["options"] = [_options_dict(o) for o in options]
        return doc
    raise TypeError(f"cannot serialize {type(result).__name__}")


def save_chain(path, result, options=None) -> None:
    doc = result_to_dict(result, options)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_chain(path) -> LayerChain:
    with open(Path(path), encoding="utf-8") as fh:
        doc = json.load(fh)
    return chain_from_dict(doc)
