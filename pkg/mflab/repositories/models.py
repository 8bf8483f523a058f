"""
Trained model persistence in numpy .npz archives.

Every archive carries a `kind` entry naming its layout and a `method` entry
naming the solver that produced it, so `mf predict` and `mf evaluate` can run
from a saved file alone.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Union

import numpy as np

from mflab.models.factors import FactorModel, HmfModel, ProximalThresholds
from mflab.models.multilabel import EmbeddingNode, EmbeddingTree, GroupedLabelEmbedding, LabelGrouping
from mflab.services.exceptions import DatasetError

logger = logging.getLogger(__name__)

Model = Union[FactorModel, HmfModel, EmbeddingTree, GroupedLabelEmbedding]


class SavedModel(NamedTuple):
    """A loaded archive: producing method, the model, and proximal thresholds when present."""
    method: str
    model: Model
    thresholds: Optional[ProximalThresholds] = None


def _factor_arrays(model: FactorModel, prefix: str = "") -> Dict[str, np.ndarray]:
    arrays = {f"{prefix}U": model.U, f"{prefix}V": model.V}
    if model.thresholds is not None:
        arrays[f"{prefix}thresholds"] = model.thresholds
    return arrays


def _factor_from(archive: Any, prefix: str = "") -> FactorModel:
    key = f"{prefix}thresholds"
    return FactorModel(
        U=archive[f"{prefix}U"],
        V=archive[f"{prefix}V"],
        thresholds=archive[key] if key in archive else None,
    )


def _tree_arrays(tree: EmbeddingTree) -> Dict[str, np.ndarray]:
    nodes = tree.nodes
    position = {id(node): k for k, node in enumerate(nodes)}
    parents = np.full(len(nodes), -1, dtype=np.int64)
    for k, node in enumerate(nodes):
        for child in node.children:
            parents[position[id(child)]] = k

    arrays: Dict[str, np.ndarray] = {
        "n_instances": np.array(tree.n_instances),
        "n_labels": np.array(tree.n_labels),
        "max_depth": np.array(tree.max_depth),
        "residue": tree.residue,
        "parents": parents,
    }
    for k, node in enumerate(nodes):
        arrays[f"node{k}_U"] = node.U
        arrays[f"node{k}_V"] = node.V
        arrays[f"node{k}_retained"] = node.retained
        arrays[f"node{k}_retained_X"] = node.retained_X
        arrays[f"node{k}_retained_Y"] = node.retained_Y
        arrays[f"node{k}_residue"] = node.residue
        arrays[f"node{k}_depth"] = np.array(node.depth)
        arrays[f"node{k}_path"] = np.array(node.path, dtype=np.int64)
    return arrays


def _tree_from(archive: Any) -> EmbeddingTree:
    parents = archive["parents"]
    children: List[List[EmbeddingNode]] = [[] for _ in range(parents.size)]
    built: List[Optional[EmbeddingNode]] = [None] * parents.size

    # Pre-order storage: every child comes after its parent
    for k in reversed(range(parents.size)):
        built[k] = EmbeddingNode(
            U=archive[f"node{k}_U"],
            V=archive[f"node{k}_V"],
            retained=archive[f"node{k}_retained"],
            retained_X=archive[f"node{k}_retained_X"],
            retained_Y=archive[f"node{k}_retained_Y"],
            depth=int(archive[f"node{k}_depth"]),
            path=tuple(int(step) for step in archive[f"node{k}_path"]),
            children=tuple(reversed(children[k])),
            residue=archive[f"node{k}_residue"],
        )
        if parents[k] >= 0:
            children[parents[k]].append(built[k])

    return EmbeddingTree(
        roots=tuple(built[k] for k in np.flatnonzero(parents < 0)),
        n_instances=int(archive["n_instances"]),
        n_labels=int(archive["n_labels"]),
        max_depth=int(archive["max_depth"]),
        residue=archive["residue"],
    )


def save_model(
    path: Union[str, Path],
    method: str,
    model: Model,
    thresholds: Optional[ProximalThresholds] = None,
) -> Path:
    """
    Write a trained model to `path` (.npz).

    Args:
        path: Destination; parent directories are created
        method: Solver name stored alongside the arrays
        model: Any trained model
        thresholds: Proximal class thresholds (pmmmf only)
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    if isinstance(model, FactorModel):
        arrays = {"kind": np.array("factor"), **_factor_arrays(model)}
        if thresholds is not None:
            arrays["proximal_values"] = thresholds.values
            arrays["proximal_counts"] = thresholds.counts
    elif isinstance(model, HmfModel):
        arrays = {
            "kind": np.array("hmf"),
            "rating_levels": np.array(model.rating_levels),
            "theta_cut": np.array(model.theta_cut),
        }
        for q, stage in enumerate(model.stages, start=1):
            arrays.update(_factor_arrays(stage, prefix=f"stage{q}_"))
    elif isinstance(model, EmbeddingTree):
        arrays = {"kind": np.array("tree"), **_tree_arrays(model)}
    elif isinstance(model, GroupedLabelEmbedding):
        arrays = {
            "kind": np.array("grople"),
            "U": model.U,
            "V": model.V,
            "Z": model.Z,
            "assignment": model.grouping.assignment,
            "penalties": np.array([model.lam1, model.lam2, model.alpha, model.beta]),
        }
    else:
        raise TypeError(f"Cannot save model of type {type(model).__name__}")

    arrays["method"] = np.array(method)
    with open(path, "wb") as f:
        np.savez_compressed(f, **arrays)
    logger.info(f"Saved {method} model to {path}")
    return path


def load_model(path: Union[str, Path]) -> SavedModel:
    """
    Read a model written by save_model.

    Raises:
        FileNotFoundError: If the file does not exist
        DatasetError: If the archive has an unknown layout
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Model file not found: {path}")

    with np.load(path, allow_pickle=False) as archive:
        kind = str(archive["kind"]) if "kind" in archive else None
        method = str(archive["method"]) if "method" in archive else "unknown"
        thresholds = None

        if kind == "factor":
            model: Model = _factor_from(archive)
            if "proximal_values" in archive:
                thresholds = ProximalThresholds(values=archive["proximal_values"], counts=archive["proximal_counts"])
        elif kind == "hmf":
            R = int(archive["rating_levels"])
            model = HmfModel(
                rating_levels=R,
                stages=tuple(_factor_from(archive, prefix=f"stage{q}_") for q in range(1, R)),
                theta_cut=float(archive["theta_cut"]),
            )
        elif kind == "tree":
            model = _tree_from(archive)
        elif kind == "grople":
            lam1, lam2, alpha, beta = (float(v) for v in archive["penalties"])
            model = GroupedLabelEmbedding(
                U=archive["U"],
                V=archive["V"],
                Z=archive["Z"],
                grouping=LabelGrouping(assignment=archive["assignment"]),
                lam1=lam1,
                lam2=lam2,
                alpha=alpha,
                beta=beta,
            )
        else:
            raise DatasetError(f"Unrecognized model archive {path} (kind={kind})")

    logger.info(f"Loaded {method} model from {path}")
    return SavedModel(method=method, model=model, thresholds=thresholds)
