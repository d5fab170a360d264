"""Hierarchical nonnegative matrix and tensor factorization.

A library and CLI for CP-based topic hierarchies in which one shared
nonnegative mixing matrix per layer collects fine topics into coarse
topics across every data mode, plus the flat solvers (NMF, NCPD) and
baseline hierarchies it is compared against.
"""

from .tensor import (
    DenseTensor,
    FactorSet,
    cp_reconstruct,
    fold,
    frobenius,
    khatri_rao,
    relative_loss,
    unfold,
)
from .factorize import CpResult, FitOptions, NmfResult, ncpd, nmf, supervised_nmf_step
from .hierarchy import (
    HierarchySpec,
    HncpdResult,
    LabelMatrix,
    Layer,
    LayerChain,
    MixingMatrix,
    SupervisedResult,
    fit_w,
    hnmf,
    hntf_i,
    multi_hntf,
    multi_hntf_matrix,
    multi_hntf_supervised,
    standard_hncpd,
)
from .data import SyntheticSpec, gen_synthetic, load_labels, load_matrix, load_tensor
from .evaluate import ReportRow, accuracy, classify, heatmap_export, top_keywords
from .serialize import load_chain, save_chain

__version__ = "0.1.0"

__all__ = [
    "DenseTensor", "FactorSet", "cp_reconstruct", "fold", "frobenius",
    "khatri_rao", "relative_loss", "unfold",
    "CpResult", "FitOptions", "NmfResult", "ncpd", "nmf", "supervised_nmf_step",
    "HierarchySpec", "HncpdResult", "LabelMatrix", "Layer", "LayerChain",
    "MixingMatrix", "SupervisedResult", "fit_w", "hnmf", "hntf_i",
    "multi_hntf", "multi_hntf_matrix", "multi_hntf_supervised", "standard_hncpd",
    "SyntheticSpec", "gen_synthetic", "load_labels", "load_matrix", "load_tensor",
    "ReportRow", "accuracy", "classify", "heatmap_export", "top_keywords",
    "load_chain", "save_chain",
]
