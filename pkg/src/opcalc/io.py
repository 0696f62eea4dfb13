"""JSON ingestion and emission for operators, function specs and MOI requests.

Operator files look like::

    {"blocks": [{"weight": 1.0, "matrix": [[[re, im], ...], ...]}, ...]}

with matrices stored row-major and every entry a ``[re, im]`` pair.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigParse
from .functions import WienerFunction, _parse_complex
from .linalg import BlockOperator
from .moi import DividedDifferenceKernel, MOIRequest, MOIResult, SeparableKernel, constant


def operator_to_json(op: BlockOperator) -> dict:
    blocks = []
    for b, w in zip(op.blocks, op.weights):
        matrix = [[[float(z.real), float(z.imag)] for z in row] for row in b]
        blocks.append({"weight": float(w), "matrix": matrix})
    return {"blocks": blocks}


def operator_from_json(data: dict, hermitian: bool = True) -> BlockOperator:
    """Parse an operator; ``hermitian`` requests the flag (and its check)."""
    try:
        blocks = data["blocks"]
        weights = [float(b["weight"]) for b in blocks]
        mats = []
        for b in blocks:
            arr = np.asarray(b["matrix"], dtype=float)
            if arr.ndim != 3 or arr.shape[2] != 2:
                raise ConfigParse("matrix entries must be [re, im] pairs in a 2-d array")
            mats.append(arr[..., 0] + 1j * arr[..., 1])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigParse):
            raise
        raise ConfigParse(f"malformed operator: {exc}") from exc
    return BlockOperator(tuple(mats), tuple(weights), hermitian_flag=hermitian)


def read_json(path) -> dict:
    path = Path(path)
    try:
        with path.open() as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigParse(f"{path}: {exc}") from exc


def write_json(path, data) -> None:
    with Path(path).open("w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_operator(path, hermitian: bool = True) -> BlockOperator:
    return operator_from_json(read_json(path), hermitian)


def save_operator(path, op: BlockOperator) -> None:
    write_json(path, operator_to_json(op))


def _operator_ref(ref, base: Path, hermitian: bool) -> BlockOperator:
    if isinstance(ref, str):
        return load_operator(base / ref, hermitian)
    if isinstance(ref, dict):
        return operator_from_json(ref, hermitian)
    raise ConfigParse(f"operator reference must be a path or an inline object, got {ref!r}")


def _factor_from_json(spec):
    """A separable factor: a function spec, or ``{"constant": c}``."""
    if isinstance(spec, dict) and "constant" in spec:
        return constant(_parse_complex(spec["constant"]))
    return WienerFunction.from_spec(spec)


def kernel_from_json(data: dict):
    if "divided_difference_of" in data:
        spec = data["divided_difference_of"]
        return lambda order: DividedDifferenceKernel(WienerFunction.from_spec(spec), order)
    if "separable" in data:
        atoms = data["separable"]
        try:
            weights = tuple(_parse_complex(a["weight"]) for a in atoms)
            factors = tuple(tuple(_factor_from_json(f) for f in a["factors"]) for a in atoms)
        except (KeyError, TypeError) as exc:
            raise ConfigParse(f"malformed separable kernel: {exc}") from exc
        kernel = SeparableKernel(weights, factors)
        return lambda order: kernel
    raise ConfigParse("kernel must have 'divided_difference_of' or 'separable'")


def load_moi_request(path) -> MOIRequest:
    """Read an MOI request; operator paths are relative to the request file.

    ``{"order": n, "operators": [...], "directions": [...], "kernel": {...}}``
    """
    path = Path(path)
    data = read_json(path)
    base = path.parent
    try:
        order = int(data["order"])
        ops = tuple(_operator_ref(r, base, True) for r in data["operators"])
        dirs = tuple(_operator_ref(r, base, False) for r in data["directions"])
        kernel = kernel_from_json(data["kernel"])(order)
    except KeyError as exc:
        raise ConfigParse(f"MOI request is missing {exc}") from exc
    if len(dirs) != order:
        raise ConfigParse(f"order {order} but {len(dirs)} directions")
    return MOIRequest(ops, dirs, kernel)


def moi_result_to_json(result: MOIResult) -> dict:
    out = operator_to_json(result.value)
    out["path"] = result.path.value
    out["error_estimate"] = float(result.error_estimate)
    return out
