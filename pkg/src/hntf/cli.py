"""Command-line front end.

Commands (all outputs land under the configured output directory):

* ``synth``   -- write the synthetic block tensor and its ground truth.
* ``fit``     -- fit one method, keep the best seed's chain, write chain
                 JSON plus a per-seed report CSV.
* ``compare`` -- run several methods over seeds and emit one table
                 (median with min/max per rank).
* ``export``  -- keyword lists and heatmap CSVs from a saved chain.

Configs are TOML or JSON files; ``--seed`` and ``--out`` override the
config. See the README for the schema.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import statistics
import sys
import time
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from .data import (
    Block,
    SyntheticSpec,
    gen_synthetic,
    load_labels,
    load_matrix,
    load_tensor,
    load_vocab,
    save_matrix_csv,
    save_tensor_dtf,
)
from .evaluate import ReportRow, classify, accuracy, heatmap_export, top_keywords, write_report_csv
from .factorize import FitOptions, ncpd, nmf
from .hierarchy import (
    HierarchySpec,
    LabelMatrix,
    Layer,
    LayerChain,
    _refit_b,
    derive_seed,
    hnmf,
    hntf_i,
    multi_hntf,
    multi_hntf_matrix,
    multi_hntf_supervised,
    standard_hncpd,
)
from .serialize import load_chain, save_chain
from .tensor import DenseTensor, FactorSet

MATRIX_METHODS = {"nmf", "hnmf", "multi-hntf-matrix", "multi-hntf-supervised"}


class ConfigError(ValueError):
    pass


def _load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".toml":
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _fit_options(cfg: dict, seed: int) -> FitOptions:
    fit = cfg.get("fit", {})
    return FitOptions(
        max_iters=int(fit.get("max_iters", 500)),
        tol=float(fit.get("tol", 1e-6)),
        seed=seed,
        epsilon=float(fit.get("epsilon", 1e-12)),
    )


def _scaled_blocks(shape) -> tuple[Block, ...]:
    """Default 7-block layout rescaled from 40 indices per mode to `shape`.

    Block boundaries are placed proportionally; shapes too small to keep
    all seven spans non-empty are rejected.
    """
    fractions = [0, 5, 10, 15, 20, 25, 30, 40]
    blocks = []
    for b in range(7):
        ranges = []
        for n in shape:
            lo = round(fractions[b] * n / 40)
            hi = round(fractions[b + 1] * n / 40)
            if hi <= lo:
                raise ConfigError(
                    f"synthetic shape {tuple(shape)} too small for the 7-block layout"
                )
            ranges.append((lo, hi))
        blocks.append(Block(ranges=tuple(ranges)))
    return tuple(blocks)


def _synthetic_spec(syn: dict, seed=None) -> SyntheticSpec:
    shape = tuple(int(n) for n in syn.get("shape", (40, 40, 40)))
    if len(shape) != 3:
        raise ConfigError(f"synthetic shape must have 3 modes, got {shape}")
    return SyntheticSpec(
        shape=shape,
        blocks=_scaled_blocks(shape),
        noise_sigma2=float(syn.get("noise_sigma2", 0.0)),
        seed=int(seed if seed is not None else syn.get("seed", 0)),
    )


def _load_input(cfg: dict):
    """Return (array, is_tensor_file). Synthetic specs build the default
    block tensor; .csv paths load as matrices; anything else as DTF/COO."""
    if "synthetic" in cfg:
        tensor, _ = gen_synthetic(_synthetic_spec(cfg["synthetic"]))
        return tensor.array, True
    if "input" not in cfg:
        raise ConfigError("config needs either 'input' or a [synthetic] table")
    path = Path(cfg["input"])
    if path.suffix == ".csv":
        return load_matrix(path), False
    return load_tensor(path).array, True


def _load_supervision(cfg: dict):
    sup = cfg.get("supervision")
    if not sup:
        return None, 1.0
    if "labels" not in sup:
        raise ConfigError("supervision.labels path is required")
    return load_labels(sup["labels"]), float(sup.get("lambda", 1.0))


def _parse_method(name: str):
    """Split 'hntf-i:2' / 'hntf-2' style names into (family, lead_mode)."""
    name = name.strip().lower()
    if name.startswith("hntf-"):
        tail = name.split(":", 1)[-1] if ":" in name else name[len("hntf-") :]
        if tail != "i":
            try:
                return "hntf-i", int(tail)
            except ValueError:
                raise ConfigError(f"bad hntf mode in method {name!r}") from None
        return "hntf-i", 1
    known = {"multi-hntf", "multi-hntf-matrix", "multi-hntf-supervised",
             "hnmf", "hncpd", "ncpd", "nmf"}
    if name not in known:
        raise ConfigError(f"unknown method {name!r} (known: {sorted(known | {'hntf-i:N'})})")
    return name, None


def _posthoc_accuracy(st, labels: LabelMatrix, opts: FitOptions) -> float:
    """Accuracy of a label dictionary refitted to fixed coefficients
    (used to score unsupervised chains; labeled as post-hoc in reports)."""
    rng = np.random.default_rng(derive_seed(opts.seed, 9999))
    b = _refit_b(labels.y, st, rng.random((labels.n_classes, st.shape[1])), opts)
    truth = np.argmax(labels.y, axis=0)
    return accuracy(classify(b, st.T), truth)


def run_fit(method: str, arr, ranks, opts: FitOptions,
            labels: LabelMatrix | None = None, coupling: float = 1.0):
    """Fit one (method, seed) and return a result record.

    Returns a dict with keys: result (serializable object), rel_losses,
    abs_losses, ranks, accuracy (or None), wall_time.
    """
    family, lead = _parse_method(method)
    arr = np.asarray(arr, dtype=np.float64)
    if family in MATRIX_METHODS and arr.ndim != 2:
        raise ConfigError(f"method {method} requires order-2 input, got order {arr.ndim}")
    spec = HierarchySpec(tuple(ranks), opts)
    start = time.perf_counter()
    acc = None
    if family == "multi-hntf":
        result = multi_hntf(DenseTensor(arr), spec)
    elif family == "multi-hntf-matrix":
        result = multi_hntf_matrix(arr, spec)
    elif family == "multi-hntf-supervised":
        if labels is None:
            raise ConfigError("multi-hntf-supervised requires supervision.labels")
        result = multi_hntf_supervised(arr, labels, spec, coupling)
    elif family == "hnmf":
        result = hnmf(arr, spec)
    elif family == "hntf-i":
        result = hntf_i(DenseTensor(arr), spec, lead)
    elif family == "hncpd":
        result = standard_hncpd(DenseTensor(arr), spec)
    elif family in ("ncpd", "nmf"):
        layers = []
        for r in ranks:
            if family == "nmf":
                res = nmf(arr, r, opts)
                fs = FactorSet([res.a, np.ascontiguousarray(res.s.T)])
                loss = res.loss_history[-1]
            else:
                res = ncpd(DenseTensor(arr), r, opts)
                fs = res.factors
                loss = res.loss_history[-1]
            layers.append(Layer(fs, None, loss, loss * float(np.linalg.norm(arr))))
        result = LayerChain(layers, method=family, seed=opts.seed)
    else:  # pragma: no cover - _parse_method rejects unknowns
        raise ConfigError(f"unknown method {method!r}")
    wall = time.perf_counter() - start

    if family == "hncpd":
        rel, ab = result.rel_losses, result.abs_losses
        out_ranks = tuple(ranks)
    elif family == "multi-hntf-supervised":
        rel, ab = result.chain.rel_losses, result.chain.abs_losses
        out_ranks = result.chain.ranks
        truth = np.argmax(labels.y, axis=0)
        st = np.ascontiguousarray(result.chain.layers[-1].factors[1])
        acc = accuracy(classify(result.dictionaries[-1], st.T), truth)
    else:
        rel, ab = result.rel_losses, result.abs_losses
        out_ranks = result.ranks
        if labels is not None and arr.ndim == 2 and family != "hncpd":
            st = np.ascontiguousarray(result.layers[-1].factors[1])
            acc = _posthoc_accuracy(st, labels, opts)
    return {
        "result": result,
        "rel_losses": tuple(rel),
        "abs_losses": tuple(ab),
        "ranks": out_ranks,
        "accuracy": acc,
        "wall_time": wall,
    }


def _run_task(task):
    """Worker entry point for parallel compare; must stay picklable."""
    method, seed, arr, ranks, fit_cfg, y, classes, coupling = task
    opts = _fit_options({"fit": fit_cfg}, seed)
    labels = None if y is None else LabelMatrix(y=y, classes=tuple(classes))
    try:
        rec = run_fit(method, arr, ranks, opts, labels, coupling)
        rec.pop("result")
        return method, seed, rec, None
    except Exception as exc:  # noqa: BLE001 - reported as a failed pair
        return method, seed, None, f"{type(exc).__name__}: {exc}"


def cmd_synth(args) -> int:
    cfg = _load_config(args.config)
    syn = cfg.get("synthetic", cfg)
    spec = _synthetic_spec(syn, seed=args.seed)
    out = Path(args.out or cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    tensor, truth = gen_synthetic(spec)
    save_tensor_dtf(out / "tensor.dtf", tensor)
    for name, fs in (("leaf", truth.leaf), ("mid", truth.mid), ("top", truth.top)):
        for mode, factor in enumerate(fs.factors, start=1):
            save_matrix_csv(out / f"truth_{name}_mode{mode}.csv", factor)
    save_matrix_csv(out / "truth_mixing_leaf_to_mid.csv", truth.mixing_leaf_to_mid)
    save_matrix_csv(out / "truth_mixing_mid_to_top.csv", truth.mixing_mid_to_top)
    print(f"wrote tensor {tensor.shape} and ground truth to {out}")
    return 0


def cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    if "method" not in cfg or "ranks" not in cfg:
        raise ConfigError("fit config requires 'method' and 'ranks'")
    arr, _ = _load_input(cfg)
    labels, coupling = _load_supervision(cfg)
    seeds = [args.seed] if args.seed is not None else [int(s) for s in cfg.get("seeds", [0])]
    out = Path(args.out or cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    ranks = [int(r) for r in cfg["ranks"]]
    rows = []
    best = None
    for seed in seeds:
        opts = _fit_options(cfg, seed)
        rec = run_fit(cfg["method"], arr, ranks, opts, labels, coupling)
        for rank, rel, ab in zip(rec["ranks"], rec["rel_losses"], rec["abs_losses"]):
            rows.append(
                ReportRow(
                    method=cfg["method"], rank=rank, rel_loss=rel, abs_loss=ab,
                    seed=seed,
                    wall_time=rec["wall_time"],
                    accuracy=rec["accuracy"] if rank == rec["ranks"][-1] else None,
                )
            )
        if best is None or rec["rel_losses"][-1] < best[0]:
            best = (rec["rel_losses"][-1], seed, rec, opts)
    save_chain(out / "chain.json", best[2]["result"], best[3])
    write_report_csv(out / "report.csv", rows)
    print(f"fit {cfg['method']} ranks={ranks} seeds={seeds}: "
          f"best final rel loss {best[0]:.4f} (seed {best[1]}); wrote {out}/chain.json")
    return 0


def cmd_compare(args) -> int:
    cfg = _load_config(args.config)
    if "methods" not in cfg or "ranks" not in cfg:
        raise ConfigError("compare config requires 'methods' and 'ranks'")
    arr, _ = _load_input(cfg)
    labels, coupling = _load_supervision(cfg)
    seeds = [int(s) for s in cfg.get("seeds", [0])]
    if args.seed is not None:
        seeds = [args.seed]
    ranks = [int(r) for r in cfg["ranks"]]
    out = Path(args.out or cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    methods = [str(m) for m in cfg["methods"]]
    for m in methods:
        _parse_method(m)  # validate early
    y = None if labels is None else np.asarray(labels.y)
    classes = () if labels is None else labels.classes
    tasks = [
        (m, s, arr, ranks, cfg.get("fit", {}), y, classes, coupling)
        for m in methods
        for s in seeds
    ]
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_run_task, tasks))
    else:
        outcomes = [_run_task(t) for t in tasks]
    results: dict[str, list] = {m: [] for m in methods}
    failures = []
    for method, seed, rec, err in outcomes:
        if err is None:
            results[method].append(rec)
        else:
            failures.append((method, seed, err))
    header = ["method"]
    for r in ranks:
        header += [f"r{r}_rel_median", f"r{r}_rel_min", f"r{r}_rel_max", f"r{r}_abs_median"]
    header += ["accuracy_median"]
    table = [header]
    for m in methods:
        recs = results[m]
        row = [m]
        if not recs:
            row += [""] * (len(header) - 1)
        else:
            for i in range(len(ranks)):
                rels = [rec["rel_losses"][i] for rec in recs]
                abss = [rec["abs_losses"][i] for rec in recs]
                row += [
                    f"{statistics.median(rels):.17g}",
                    f"{min(rels):.17g}",
                    f"{max(rels):.17g}",
                    f"{statistics.median(abss):.17g}",
                ]
            accs = [rec["accuracy"] for rec in recs if rec["accuracy"] is not None]
            row.append(f"{statistics.median(accs):.17g}" if accs else "")
        table.append(row)
    with open(out / "compare.csv", "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh).writerows(table)
    print(f"wrote {out}/compare.csv ({len(methods)} methods x {len(seeds)} seeds)")
    if failures:
        for method, seed, err in failures:
            print(f"FAILED: method={method} seed={seed}: {err}", file=sys.stderr)
        return 1
    return 0


def cmd_export(args) -> int:
    chain = load_chain(args.chain)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    modes = [int(m) for m in args.heatmap_modes.split(",")] if args.heatmap_modes else []
    if modes:
        written = heatmap_export(chain, modes, out)
        print(f"wrote {len(written)} heatmap CSVs to {out}")
    if args.vocab:
        vocab = load_vocab(args.vocab)
        with open(out / "keywords.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["layer", "topic", "rank", "token", "weight"])
            for ell, layer in enumerate(chain.layers):
                topics = top_keywords(layer.factors[args.word_mode - 1], vocab, args.top)
                for j, topic in enumerate(topics):
                    for pos, (token, weight) in enumerate(topic):
                        writer.writerow([ell, j, pos, token, f"{weight:.17g}"])
        print(f"wrote {out}/keywords.csv")
    if not modes and not args.vocab:
        print("nothing to export: pass --vocab and/or --heatmap-modes", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hntf",
        description="Hierarchical nonnegative matrix/tensor factorization toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML or JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed(s)")
        p.add_argument("--out", default=None, help="override output directory")

    p = sub.add_parser("synth", help="generate the synthetic block tensor")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit one method and save the best chain")
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="run a methods x seeds sweep")
    common(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export", help="keywords/heatmaps from a saved chain")
    p.add_argument("chain", help="chain JSON file")
    p.add_argument("--out", default=None)
    p.add_argument("--vocab", default=None, help="vocabulary file (one token per line)")
    p.add_argument("--word-mode", type=int, default=1, help="1-based mode holding words")
    p.add_argument("--top", type=int, default=10, help="keywords per topic")
    p.add_argument("--heatmap-modes", default="", help="comma-separated 1-based modes")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
