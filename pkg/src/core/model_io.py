"""
Model persistence
=================

Versioned JSON documents for reduced and discrete models, plus Matrix
Market export of the full-order operators for external inspection.

Arrays are stored row-major as nested lists of Python floats; ``json``
writes floats with ``repr`` so values round-trip exactly.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import scipy.io
import scipy.sparse as sp

from .discrete_model import DiscreteModel
from .errors import ModelFormatError
from .fundus_model import FullOrderModel
from .model_reduction import ParamDomain, ReducedModel

logger = logging.getLogger(__name__)

MODEL_FORMAT = "laserflow-model"
MODEL_FORMAT_VERSION = 1


def _array(values: Any) -> np.ndarray:
    return np.asarray(values, dtype=float)


def _domain_to_dict(domain: ParamDomain) -> Dict[str, float]:
    return {"alpha_min": float(domain.alpha_min), "alpha_max": float(domain.alpha_max)}


def reduced_to_dict(reduced: ReducedModel) -> Dict[str, Any]:
    return {
        "A": reduced.A.tolist(),
        "b_taylor": reduced.b_taylor.tolist(),
        "c_taylor": reduced.c_taylor.tolist(),
        "V": reduced.V.tolist(),
        "W": reduced.W.tolist(),
        "domain": _domain_to_dict(reduced.domain),
        "method": reduced.method,
        "iterations": int(reduced.iterations),
        "converged": bool(reduced.converged),
        "shifts": [[float(s.real), float(s.imag)] for s in reduced.shifts],
    }


def reduced_from_dict(data: Dict[str, Any]) -> ReducedModel:
    return ReducedModel(
        A=_array(data["A"]),
        b_taylor=_array(data["b_taylor"]),
        c_taylor=_array(data["c_taylor"]),
        V=_array(data["V"]),
        W=_array(data["W"]),
        domain=ParamDomain(**data["domain"]),
        method=data["method"],
        iterations=int(data["iterations"]),
        converged=bool(data["converged"]),
        shifts=tuple(complex(re, im) for re, im in data["shifts"]),
    )


def discrete_to_dict(model: DiscreteModel) -> Dict[str, Any]:
    return {
        "A": model.A.tolist(),
        "b_taylor": model.b_taylor.tolist(),
        "c_vol_taylor": model.c_vol_taylor.tolist(),
        "c_peak": model.c_peak.tolist(),
        "sample_time": float(model.sample_time),
        "domain": _domain_to_dict(model.domain),
    }


def discrete_from_dict(data: Dict[str, Any]) -> DiscreteModel:
    return DiscreteModel(
        A=_array(data["A"]),
        b_taylor=_array(data["b_taylor"]),
        c_vol_taylor=_array(data["c_vol_taylor"]),
        c_peak=_array(data["c_peak"]),
        sample_time=float(data["sample_time"]),
        domain=ParamDomain(**data["domain"]),
    )


def save_models(path: Union[str, Path], reduced: ReducedModel, discrete: DiscreteModel,
                metadata: Optional[Dict[str, Any]] = None) -> Path:
    """Write reduced and discrete model into one versioned JSON document."""
    path = Path(path)
    document = {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "metadata": metadata or {},
        "reduced": reduced_to_dict(reduced),
        "discrete": discrete_to_dict(discrete),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(document, handle, indent=1)
        handle.write("\n")
    logger.info(f"Saved model document to {path}")
    return path


def load_models(path: Union[str, Path]) -> Tuple[ReducedModel, DiscreteModel, Dict[str, Any]]:
    """
    Read a model document written by ``save_models``.

    Returns:
        Tuple of (reduced model, discrete model, metadata)

    Raises:
        ModelFormatError: On unreadable documents or version mismatch
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as handle:
            document = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        raise ModelFormatError(f"Cannot read model document {path}: {e}")

    if document.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path} is not a {MODEL_FORMAT} document")
    if document.get("version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"Unsupported model document version {document.get('version')} (expected {MODEL_FORMAT_VERSION})"
        )
    try:
        reduced = reduced_from_dict(document["reduced"])
        discrete = discrete_from_dict(document["discrete"])
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"Malformed model document {path}: {e}")
    logger.info(f"Loaded model document {path} (order {reduced.order})")
    return reduced, discrete, document.get("metadata", {})


def export_matrix_market(model: FullOrderModel, directory: Union[str, Path]) -> Dict[str, Path]:
    """
    Export A, the input coefficients and both output rows in Matrix Market format.

    Returns:
        Mapping of artifact name to written path
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    artifacts = {
        "A": sp.coo_matrix(model.A),
        "b_taylor": sp.coo_matrix(model.b_taylor.T),
        "c_vol_taylor": sp.coo_matrix(model.c_taylor[:, 0, :]),
        "c_peak": sp.coo_matrix(model.c_taylor[0, 1, :][None, :]),
    }
    written = {}
    for name, matrix in artifacts.items():
        path = directory / f"{name}.mtx"
        scipy.io.mmwrite(str(path), matrix, precision=17)
        written[name] = path
    logger.info(f"Exported {len(written)} Matrix Market files to {directory}")
    return written
