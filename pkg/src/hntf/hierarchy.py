"""Hierarchical factorization models.

The main model fits one shared nonnegative mixing matrix W per layer that
collects the finer layer's r_l topics into r_{l+1} coarser topics across
*all* modes simultaneously: X_i^(l+1) = X_i^(l) W^(l) for every mode i.
On order-2 input this reduces to the matrix model A^(l+1) = A^(l) W,
S^(l+1) = W^T S^(l).

Baselines implemented for comparison:

* ``hnmf``       -- repeated NMF of the coefficient matrix (matrix data).
* ``hntf_i``     -- holds one factor matrix constant per layer and
                    re-decomposes the core-with-identity tensor built from
                    the remaining ones; reduces to ``hnmf`` at order 2.
* ``standard_hncpd`` -- an initial NCPD followed by an independent
                    matrix hierarchy on each factor matrix.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .factorize import FitOptions, _ncpd_core, _stop, _unfold_all
from .tensor import (
    DenseTensor,
    FactorSet,
    _as_array,
    _readonly,
    cp_reconstruct,
    kr_excluding,
    relative_loss,
)

__all__ = [
    "MixingMatrix",
    "HierarchySpec",
    "LabelMatrix",
    "Layer",
    "LayerChain",
    "FitWResult",
    "SupervisedResult",
    "HncpdResult",
    "fit_w",
    "multi_hntf",
    "multi_hntf_matrix",
    "multi_hntf_supervised",
    "hnmf",
    "hntf_i",
    "standard_hncpd",
    "derive_seed",
]

# Slack for the W acceptance rule: a candidate counts as non-increasing if
# it does not raise the objective by more than this.
_ACCEPT_SLACK = 1e-12


def derive_seed(seed: int, index: int) -> int:
    """Deterministic per-component sub-seed (used for independent chains)."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


@dataclass(frozen=True)
class MixingMatrix:
    """Nonnegative r_l x r_{l+1} matrix linking one layer to the next."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError(f"mixing matrix must be 2-D, got shape {w.shape}")
        if w.size and w.min() < 0.0:
            raise ValueError("mixing matrix must be nonnegative")
        if w.shape[1] >= w.shape[0]:
            raise ValueError(
                f"mixing matrix must reduce rank, got shape {w.shape}"
            )
        object.__setattr__(self, "w", _readonly(w))

    @property
    def shape(self) -> tuple[int, int]:
        return self.w.shape


@dataclass(frozen=True)
class LabelMatrix:
    """Class-indicator matrix (classes x samples) with class names."""

    y: np.ndarray
    classes: tuple[str, ...] = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        if y.ndim != 2:
            raise ValueError(f"label matrix must be 2-D, got shape {y.shape}")
        if y.size and y.min() < 0.0:
            raise ValueError("label matrix must be nonnegative")
        classes = tuple(self.classes) or tuple(f"class_{i}" for i in range(y.shape[0]))
        if len(classes) != y.shape[0]:
            raise ValueError(
                f"{len(classes)} class names for {y.shape[0]} label rows"
            )
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "classes", classes)

    @property
    def n_classes(self) -> int:
        return self.y.shape[0]

    @property
    def n_samples(self) -> int:
        return self.y.shape[1]


@dataclass(frozen=True)
class HierarchySpec:
    """Target ranks r_0 > r_1 > ... >= 1 plus per-layer fit options.

    ``options`` may be a single FitOptions applied to every layer or a
    sequence with one entry per rank (entry l governs the fit that
    produces layer l).
    """

    ranks: tuple[int, ...]
    options: FitOptions | tuple[FitOptions, ...] = FitOptions()

    def __post_init__(self):
        ranks = tuple(int(r) for r in self.ranks)
        if not ranks:
            raise ValueError("ranks must be non-empty")
        if ranks[-1] < 1:
            raise ValueError("ranks must be >= 1")
        if any(a <= b for a, b in zip(ranks, ranks[1:])):
            raise ValueError(f"ranks must be strictly decreasing, got {ranks}")
        object.__setattr__(self, "ranks", ranks)
        opts = self.options
        if isinstance(opts, FitOptions):
            opts = (opts,) * len(ranks)
        else:
            opts = tuple(opts)
            if len(opts) != len(ranks):
                raise ValueError(
                    f"{len(opts)} option sets for {len(ranks)} ranks"
                )
        object.__setattr__(self, "options", opts)

    @property
    def n_layers(self) -> int:
        return len(self.ranks)

    def layer_options(self, ell: int) -> FitOptions:
        return self.options[ell]


@dataclass
class Layer:
    """One hierarchy layer: its CP factors, the mixing matrix into the
    next layer (None at the last layer), and its reconstruction losses."""

    factors: FactorSet
    mixing: MixingMatrix | None
    rel_loss: float
    abs_loss: float

    @property
    def rank(self) -> int:
        return self.factors.rank


@dataclass
class LayerChain:
    layers: list[Layer]
    method: str
    seed: int

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(layer.rank for layer in self.layers)

    @property
    def rel_losses(self) -> tuple[float, ...]:
        return tuple(layer.rel_loss for layer in self.layers)

    @property
    def abs_losses(self) -> tuple[float, ...]:
        return tuple(layer.abs_loss for layer in self.layers)


@dataclass
class FitWResult:
    mixing: MixingMatrix
    loss_history: list[float] = field(default_factory=list)

    @property
    def w(self) -> np.ndarray:
        return self.mixing.w


@dataclass
class SupervisedResult:
    """A supervised matrix-model chain plus the per-layer label dictionaries."""

    chain: LayerChain
    dictionaries: list[np.ndarray]
    coupling: float


@dataclass
class HncpdResult:
    """Initial NCPD plus one independent matrix hierarchy per mode."""

    base: FactorSet
    mode_chains: list[LayerChain]
    rel_losses: tuple[float, ...]
    abs_losses: tuple[float, ...]
    seed: int
    method: str = "hncpd"


def _projected(factors, w):
    return [f @ w for f in factors]


def _chain_loss(unfoldings, factors, norm_x):
    """Relative loss of the CP model given precomputed unfoldings."""
    kr = kr_excluding(factors, 0)
    resid = float(np.linalg.norm(unfoldings[0] - factors[0] @ kr.T))
    return resid / norm_x, resid


def _w_ratios(unfoldings, factors, grams, proj, w, eps):
    """Per-mode multiplicative ratios num_i / den_i for the shared-W objective."""
    ratios = []
    for i in range(len(factors)):
        kr = kr_excluding(proj, i)
        num = factors[i].T @ (unfoldings[i] @ kr)
        den = (grams[i] @ w) @ (kr.T @ kr)
        ratios.append(num / (den + eps))
    return ratios


def _prune_polish(unfoldings, factors, grams, w, cur, opts, objective):
    """Try zeroing small W entries and briefly refitting the survivors.

    Multiplicative updates drive truly-zero entries to zero only
    sublinearly; hard-thresholding breaks that tail. Returns (w, obj) for
    the best strictly-improving proposal, or None.
    """
    k = len(factors)
    best = None
    for frac in (1e-3, 1e-2, 1e-1):
        wp = np.where(w < frac * w.max(), 0.0, w)
        if wp.max() == 0.0 or np.array_equal(wp, w):
            continue
        for _ in range(50):
            proj = _projected(factors, wp)
            ratios = _w_ratios(unfoldings, factors, grams, proj, wp, opts.epsilon)
            wp = wp * (sum(ratios) / k) ** (1.0 / k)
        obj = objective(wp)
        if obj < cur and (best is None or obj < best[1]):
            best = (wp, obj)
    return best


def _fit_w_core(unfoldings, factors, r_next, opts):
    """Fit the shared mixing matrix W by averaged multiplicative updates.

    Each iteration computes one multiplicative candidate per mode (with the
    other modes' projected factors frozen), averages them, and accepts the
    average only if the true objective did not increase; otherwise it falls
    back to the best single candidate, and if nothing improves it keeps the
    current W and stops. The tracked objective is the relative loss, so the
    history is non-increasing by construction.
    """
    k = len(factors)
    r = factors[0].shape[1]
    if not 1 <= r_next < r:
        raise ValueError(f"next rank must satisfy 1 <= r_next < {r}, got {r_next}")
    rng = np.random.default_rng(opts.seed)
    w = rng.random((r, r_next))
    norm_x = float(np.linalg.norm(unfoldings[0]))
    grams = [f.T @ f for f in factors]

    def objective(cand):
        return _chain_loss(unfoldings, _projected(factors, cand), norm_x)[0]

    cur = objective(w)
    history = [cur]
    # W appears in every mode of the objective, so a full per-mode
    # multiplicative step routinely overshoots; damp it elementwise as
    # W * ratio**theta and backtrack theta until the objective drops.
    theta = 1.0
    for it in range(opts.max_iters):
        proj = _projected(factors, w)
        ratios = _w_ratios(unfoldings, factors, grams, proj, w, opts.epsilon)
        accepted = None
        step = theta
        while step >= 1.0 / 64.0:
            candidates = [w * ratio**step for ratio in ratios]
            mean = sum(candidates) / k
            obj_mean = objective(mean)
            if obj_mean <= cur + _ACCEPT_SLACK:
                accepted = (mean, obj_mean)
                break
            objs = [objective(c) for c in candidates]
            best = int(np.argmin(objs))
            if objs[best] <= cur + _ACCEPT_SLACK:
                accepted = (candidates[best], objs[best])
                break
            step /= 2.0
        stalled = accepted is None or _stop(cur, accepted[1], opts.tol)
        if accepted is not None:
            theta = min(1.0, step * 2.0)
            w, cur = accepted
            history.append(cur)
        if stalled or (it + 1) % 100 == 0:
            polished = _prune_polish(
                unfoldings, factors, grams, w, cur, opts, objective
            )
            if polished is not None:
                w, cur = polished
                history.append(cur)
            elif stalled:
                break
    return w, history


def fit_w(t, f: FactorSet, r_next: int, opts: FitOptions = FitOptions()) -> FitWResult:
    """Fit the mixing matrix W minimizing the shared-W CP objective
    || X - [[X_1 W, ..., X_k W]] ||_F / ||X||_F approximately."""
    arr = _as_array(t)
    if arr.shape != f.shape:
        raise ValueError(f"tensor shape {arr.shape} != factor shape {f.shape}")
    w, history = _fit_w_core(_unfold_all(arr), list(f.factors), r_next, opts)
    return FitWResult(MixingMatrix(w), history)


def _make_layers(unfoldings, factor_lists, mixings, norm_x):
    layers = []
    for i, factors in enumerate(factor_lists):
        rel, resid = _chain_loss(unfoldings, factors, norm_x)
        mix = MixingMatrix(mixings[i]) if i < len(mixings) else None
        layers.append(Layer(FactorSet(factors), mix, rel, resid))
    return layers


def multi_hntf(t, spec: HierarchySpec) -> LayerChain:
    """Shared-mixing-matrix hierarchy on an order-k tensor.

    Layer 0 is a plain NCPD at r_0; every subsequent layer l+1 stores
    exactly X_i^(l) @ W^(l) for each mode i, with one W shared by all
    modes, fitted by :func:`fit_w`.
    """
    arr = _as_array(t)
    if not isinstance(t, DenseTensor):
        t = DenseTensor(arr)
        arr = t.array
    if spec.ranks[0] > min(arr.shape):
        warnings.warn(
            f"initial rank {spec.ranks[0]} exceeds the smallest dimension "
            f"{min(arr.shape)}", stacklevel=2,
        )
    unfoldings = _unfold_all(arr)
    norm_x = float(np.linalg.norm(unfoldings[0]))
    factors, _ = _ncpd_core(unfoldings, arr.shape, spec.ranks[0], spec.layer_options(0))
    factor_lists = [factors]
    mixings = []
    for ell, r_next in enumerate(spec.ranks[1:]):
        w, _ = _fit_w_core(unfoldings, factors, r_next, spec.layer_options(ell + 1))
        factors = _projected(factors, w)
        mixings.append(w)
        factor_lists.append(factors)
    layers = _make_layers(unfoldings, factor_lists, mixings, norm_x)
    return LayerChain(layers, method="multi-hntf", seed=spec.layer_options(0).seed)


def multi_hntf_matrix(x, spec: HierarchySpec) -> LayerChain:
    """Order-2 special case written directly in (A, S, W) form:
    X ~ A^(l) S^(l) with A^(l+1) = A^(l) W^(l) and S^(l+1) = W^(l)^T S^(l)."""
    arr = _as_array(x)
    if arr.ndim != 2:
        raise ValueError(f"matrix model expects order-2 input, got order {arr.ndim}")
    unfoldings = _unfold_all(arr)
    norm_x = float(np.linalg.norm(arr))
    factors, _ = _ncpd_core(unfoldings, arr.shape, spec.ranks[0], spec.layer_options(0))
    a, s = factors[0], factors[1].T
    factor_lists = [[a, np.ascontiguousarray(s.T)]]
    mixings = []
    for ell, r_next in enumerate(spec.ranks[1:]):
        st = np.ascontiguousarray(s.T)
        w, _ = _fit_w_core(unfoldings, [a, st], r_next, spec.layer_options(ell + 1))
        a = a @ w
        s = w.T @ s
        mixings.append(w)
        factor_lists.append([a, np.ascontiguousarray(s.T)])
    layers = _make_layers(unfoldings, factor_lists, mixings, norm_x)
    return LayerChain(layers, method="multi-hntf-matrix", seed=spec.layer_options(0).seed)


def _supervised_layer0(unfoldings, y, r, lam, opts):
    """Alternating joint updates on ||X - AS||^2 + lam ||Y - BS||^2, with S
    kept columnwise as St = S^T. At lam == 0 this is bitwise the order-2
    NCPD sweep plus an independent B update."""
    u1, u2 = unfoldings
    m = u1.shape[0]
    n = u1.shape[1]
    c = y.shape[0]
    rng = np.random.default_rng(opts.seed)
    a = rng.random((m, r))
    st = rng.random((n, r))
    b = rng.random((c, r))
    norm_x = float(np.linalg.norm(u1))
    norm_y = float(np.linalg.norm(y))
    history = []
    prev = None
    for _ in range(opts.max_iters):
        a = a * (u1 @ st) / (a @ (st.T @ st) + opts.epsilon)
        b = b * (y @ st) / (b @ (st.T @ st) + opts.epsilon)
        num = u2 @ a + lam * (y.T @ b)
        den = st @ (a.T @ a) + lam * (st @ (b.T @ b)) + opts.epsilon
        st = st * num / den
        d = float(np.linalg.norm(u1 - a @ st.T))
        if lam == 0.0:
            loss = d / norm_x
        else:
            ell = float(np.linalg.norm(y - b @ st.T))
            loss = math.sqrt(d * d + lam * ell * ell) / math.sqrt(
                norm_x * norm_x + lam * norm_y * norm_y
            )
        history.append(loss)
        if _stop(prev, loss, opts.tol):
            break
        prev = loss
    return a, b, st, history


def _refit_b(y, st, b, opts):
    """Multiplicative updates on ||Y - B S||^2 with S fixed."""
    norm_y = float(np.linalg.norm(y))
    prev = None
    for _ in range(opts.max_iters):
        b = b * (y @ st) / (b @ (st.T @ st) + opts.epsilon)
        loss = float(np.linalg.norm(y - b @ st.T)) / norm_y
        if _stop(prev, loss, opts.tol):
            break
        prev = loss
    return b


def multi_hntf_supervised(
    x, y: LabelMatrix, spec: HierarchySpec, coupling: float = 1.0
) -> SupervisedResult:
    """Supervised matrix-model hierarchy with label dictionaries B^(l).

    Layer 0 jointly factorizes the data matrix and labels with strength
    ``coupling``; each mixing matrix is then fitted on the row-stacked
    system [X; sqrt(coupling) Y] ~ [A; sqrt(coupling) B] S so supervision
    also shapes W; finally B is refitted at the new layer's coefficients.
    Only order-2 input is supported.
    """
    arr = _as_array(x)
    if arr.ndim != 2:
        raise NotImplementedError(
            f"supervision is implemented for order-2 input only, got order {arr.ndim}"
        )
    if coupling < 0.0:
        raise ValueError("coupling must be nonnegative")
    ymat = y.y
    if ymat.shape[1] != arr.shape[1]:
        raise ValueError(
            f"label columns {ymat.shape[1]} != data columns {arr.shape[1]}"
        )
    unfoldings = _unfold_all(arr)
    norm_x = float(np.linalg.norm(arr))
    a, b, st, _ = _supervised_layer0(
        unfoldings, ymat, spec.ranks[0], coupling, spec.layer_options(0)
    )
    factor_lists = [[a, st]]
    dictionaries = [b]
    mixings = []
    for ell, r_next in enumerate(spec.ranks[1:]):
        opts = spec.layer_options(ell + 1)
        if coupling == 0.0:
            w, _ = _fit_w_core(unfoldings, [a, st], r_next, opts)
        else:
            root = math.sqrt(coupling)
            x_aug = np.vstack([unfoldings[0], root * ymat])
            a_aug = np.vstack([a, root * b])
            aug_unf = [x_aug, np.ascontiguousarray(x_aug.T)]
            w, _ = _fit_w_core(aug_unf, [a_aug, st], r_next, opts)
        a = a @ w
        st = st @ w
        b = _refit_b(ymat, st, b @ w, opts)
        mixings.append(w)
        factor_lists.append([a, st])
        dictionaries.append(b)
    layers = _make_layers(unfoldings, factor_lists, mixings, norm_x)
    chain = LayerChain(
        layers, method="multi-hntf-supervised", seed=spec.layer_options(0).seed
    )
    return SupervisedResult(chain, dictionaries, coupling)


def hnmf(x, spec: HierarchySpec) -> LayerChain:
    """Hierarchical NMF: repeatedly factorize the previous coefficient
    matrix. Layer l stores the cascaded pair (A^(0)...A^(l), S^(l)) and its
    loss is taken against the original data through that product."""
    arr = _as_array(x)
    if arr.ndim != 2:
        raise ValueError(f"hnmf expects a matrix, got order {arr.ndim}")
    unfoldings = _unfold_all(arr)
    norm_x = float(np.linalg.norm(arr))
    factors, _ = _ncpd_core(unfoldings, arr.shape, spec.ranks[0], spec.layer_options(0))
    prod, s = factors[0], factors[1].T
    factor_lists = [[prod, np.ascontiguousarray(s.T)]]
    for ell, r_next in enumerate(spec.ranks[1:]):
        sub_unf = _unfold_all(s)
        sub, _ = _ncpd_core(sub_unf, s.shape, r_next, spec.layer_options(ell + 1))
        prod = prod @ sub[0]
        s = sub[1].T
        factor_lists.append([prod, np.ascontiguousarray(s.T)])
    layers = _make_layers(unfoldings, factor_lists, [], norm_x)
    return LayerChain(layers, method="hnmf", seed=spec.layer_options(0).seed)


def hntf_i(t, spec: HierarchySpec, lead_mode: int) -> LayerChain:
    """Baseline that holds the lead mode's factor fixed per layer.

    Modes are permuted so ``lead_mode`` (1-based) comes first. At each
    layer the order-k tensor [[I_{r_l}, X_2^(l), ..., X_k^(l)]] is
    re-decomposed at rank r_{l+1} into [[W, Z_2, ..., Z_k]]; the lead
    factor becomes X_1^(l) W and the others are replaced by the Z_j. At
    order 2 this coincides with :func:`hnmf`.
    """
    arr = _as_array(t)
    if not isinstance(t, DenseTensor):
        arr = DenseTensor(arr).array
    k = arr.ndim
    if not 1 <= lead_mode <= k:
        raise ValueError(f"lead_mode must be in 1..{k}, got {lead_mode}")
    perm = [lead_mode - 1] + [i for i in range(k) if i != lead_mode - 1]
    arr_p = np.ascontiguousarray(np.transpose(arr, perm))
    unfoldings = _unfold_all(arr_p)
    norm_x = float(np.linalg.norm(arr_p))
    factors, _ = _ncpd_core(
        unfoldings, arr_p.shape, spec.ranks[0], spec.layer_options(0)
    )
    lead, rest = factors[0], factors[1:]
    factor_lists = [[lead] + rest]
    for ell, r_next in enumerate(spec.ranks[1:]):
        core = cp_reconstruct(FactorSet([np.eye(rest[0].shape[1])] + rest))
        sub_unf = _unfold_all(core.array)
        sub, _ = _ncpd_core(
            sub_unf, core.shape, r_next, spec.layer_options(ell + 1)
        )
        lead = lead @ sub[0]
        rest = sub[1:]
        factor_lists.append([lead] + rest)
    # report factors in the original mode order
    inv = np.argsort(perm)
    layers = []
    for factors_p in factor_lists:
        rel, resid = _chain_loss(unfoldings, factors_p, norm_x)
        layers.append(
            Layer(FactorSet([factors_p[j] for j in inv]), None, rel, resid)
        )
    return LayerChain(
        layers, method=f"hntf-{lead_mode}", seed=spec.layer_options(0).seed
    )


def standard_hncpd(t, spec: HierarchySpec) -> HncpdResult:
    """Initial NCPD at r_0, then an independent :func:`hnmf` chain on each
    factor matrix; the layer-l tensor loss reconstructs with every mode's
    depth-l cascaded product (an r_0-column matrix of rank <= r_l)."""
    arr = _as_array(t)
    if not isinstance(t, DenseTensor):
        arr = DenseTensor(arr).array
    unfoldings = _unfold_all(arr)
    norm_x = float(np.linalg.norm(arr))
    opts0 = spec.layer_options(0)
    factors, _ = _ncpd_core(unfoldings, arr.shape, spec.ranks[0], opts0)
    base = FactorSet(factors)
    rel0, resid0 = _chain_loss(unfoldings, factors, norm_x)
    rel_losses = [rel0]
    abs_losses = [resid0]
    mode_chains = []
    if len(spec.ranks) > 1:
        for i in range(len(factors)):
            sub_opts = tuple(
                FitOptions(
                    max_iters=o.max_iters,
                    tol=o.tol,
                    seed=derive_seed(o.seed, i),
                    epsilon=o.epsilon,
                )
                for o in spec.options[1:]
            )
            sub_spec = HierarchySpec(spec.ranks[1:], sub_opts)
            mode_chains.append(hnmf(factors[i], sub_spec))
        for ell in range(len(spec.ranks) - 1):
            prods = []
            for chain in mode_chains:
                lay = chain.layers[ell].factors
                prods.append(lay[0] @ lay[1].T)
            rel, resid = _chain_loss(unfoldings, prods, norm_x)
            rel_losses.append(rel)
            abs_losses.append(resid)
    return HncpdResult(
        base=base,
        mode_chains=mode_chains,
        rel_losses=tuple(rel_losses),
        abs_losses=tuple(abs_losses),
        seed=opts0.seed,
    )
