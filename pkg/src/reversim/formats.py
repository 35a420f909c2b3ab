"""File formats: deterministic JSON plus the state and model file schemas.

All JSON is written with sorted keys and floats at 17 significant digits,
so identical inputs give byte-identical output and every float re-parses
to the same double.  Complex numbers are ``[re, im]`` pairs; non-finite
floats are the strings ``"inf"``, ``"-inf"`` and ``"nan"``.

State file::

    {"format_version": 1, "kind": "fock" | "coherent" | "pure" | "density",
     "dim": D, "payload": {"n": k} | {"alpha": [re, im]}
                        | {"amplitudes": [[re, im], ...]}
                        | {"matrix": [[[re, im], ...], ...]}}

Model file::

    {"format_version": 1, "kind": "family" | "kerr" | "nocount", "payload": ...}

    family:  {"name": str?, "outcomes": [{"label": L, "operator": M}, ...]}
    kerr:    {"alpha_abs": a, "kappa": k} or {"epsilon": e}, plus "dim" and
             optional "grid": {"margin_sigmas": m, "spacing_fraction": s}
    nocount: {"lambda_tau": lt, "dim": D}

Unknown top-level keys (such as ``"meta"`` in command output) are ignored,
so a state written by one command can be fed to the next.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .kerr_qnd import DEFAULT_MARGIN_SIGMAS, DEFAULT_SPACING_FRACTION, KerrModel
from .measurement import MeasurementFamily
from .operator_core import (
    DensityOperator,
    PureState,
    coherent_state,
    density_from_pure,
    fock_density,
)
from .photon_counting import NoCountParams, counting_pair

FORMAT_VERSION = 1
STATE_KINDS = ("fock", "coherent", "pure", "density")
MODEL_KINDS = ("family", "kerr", "nocount")


def _float_token(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    s = format(x, ".17g")
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def to_jsonable(obj):
    """Convert numpy values, complex numbers and tuples to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, Path):
        return str(obj)
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _emit(obj, out: list[str]) -> None:
    if obj is None or isinstance(obj, (bool, str, int)):
        out.append(json.dumps(obj))
    elif isinstance(obj, float):
        out.append(_float_token(obj))
    elif isinstance(obj, list):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(", ")
            _emit(v, out)
        out.append("]")
    else:
        out.append("{")
        for i, k in enumerate(sorted(obj)):
            if i:
                out.append(", ")
            out.append(json.dumps(k))
            out.append(": ")
            _emit(obj[k], out)
        out.append("}")


def dumps(obj) -> str:
    """Deterministic single-line JSON (sorted keys, 17 significant digits)."""
    out: list[str] = []
    _emit(to_jsonable(obj), out)
    return "".join(out)


def _number(x, what: str) -> float:
    if isinstance(x, str) and x in ("inf", "-inf", "nan"):
        return float(x)
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ValidationError(f"{what} must be a number, got {x!r}")
    return float(x)


def complex_from_pair(pair, what: str = "complex number") -> complex:
    if not isinstance(pair, list) or len(pair) != 2:
        raise ValidationError(f"{what} must be an [re, im] pair, got {pair!r}")
    return complex(_number(pair[0], what), _number(pair[1], what))


def vector_from_pairs(rows, what: str = "vector") -> np.ndarray:
    if not isinstance(rows, list) or not rows:
        raise ValidationError(f"{what} must be a non-empty list of [re, im] pairs")
    return np.array([complex_from_pair(p, what) for p in rows], dtype=np.complex128)


def matrix_from_pairs(rows, what: str = "matrix") -> np.ndarray:
    if not isinstance(rows, list) or not rows:
        raise ValidationError(f"{what} must be a non-empty list of rows")
    m = [vector_from_pairs(r, what) for r in rows]
    if len({len(r) for r in m}) != 1 or len(m[0]) != len(m):
        raise ValidationError(f"{what} must be square")
    return np.array(m)


def _check_header(doc, kinds) -> str:
    if not isinstance(doc, dict):
        raise ValidationError("file must contain a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported format_version {doc.get('format_version')!r} (expected {FORMAT_VERSION})")
    kind = doc.get("kind")
    if kind not in kinds:
        raise ValidationError(f"kind must be one of {list(kinds)}, got {kind!r}")
    if not isinstance(doc.get("payload"), dict):
        raise ValidationError("payload must be a JSON object")
    return kind


def _count(x, what: str, minimum: int = 0) -> int:
    if isinstance(x, bool) or not isinstance(x, int) or x < minimum:
        raise ValidationError(f"{what} must be an integer >= {minimum}, got {x!r}")
    return x


def parse_state(doc) -> DensityOperator:
    """Build a :class:`DensityOperator` from a parsed state file."""
    kind = _check_header(doc, STATE_KINDS)
    p = doc["payload"]
    dim = _count(doc.get("dim"), "dim", 1)
    if kind == "fock":
        return fock_density(_count(p.get("n"), "payload.n"), dim)
    if kind == "coherent":
        return density_from_pure(coherent_state(complex_from_pair(p.get("alpha"), "payload.alpha"), dim))
    if kind == "pure":
        vec = vector_from_pairs(p.get("amplitudes"), "payload.amplitudes")
        if vec.size != dim:
            raise ValidationError(f"{vec.size} amplitudes for dim {dim}")
        return density_from_pure(PureState(vec))
    m = matrix_from_pairs(p.get("matrix"), "payload.matrix")
    if m.shape[0] != dim:
        raise ValidationError(f"matrix dim {m.shape[0]} != dim {dim}")
    return DensityOperator(m)


def state_document(rho: DensityOperator, meta: dict | None = None) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "density",
        "dim": rho.dim,
        "payload": {"matrix": rho.matrix},
    }
    if meta is not None:
        doc["meta"] = meta
    return doc


@dataclass(frozen=True)
class ParsedModel:
    """A model file after validation.

    ``family`` is always set; ``kerr`` and ``lambda_tau`` keep the
    structured parameters for kinds that have them.
    """

    kind: str
    family: MeasurementFamily | None = None
    kerr: KerrModel | None = None
    lambda_tau: float | None = None
    dim: int | None = None

    def measurement_family(self) -> MeasurementFamily:
        if self.family is not None:
            return self.family
        if self.kind == "kerr":
            from .kerr_qnd import discretized_family

            return discretized_family(self.kerr)
        return counting_pair(self.lambda_tau, self.dim)


def _label(x):
    if isinstance(x, bool) or not isinstance(x, (str, int, float)):
        raise ValidationError(f"outcome labels must be strings or numbers, got {x!r}")
    return x


def parse_model(doc) -> ParsedModel:
    kind = _check_header(doc, MODEL_KINDS)
    p = doc["payload"]
    if kind == "family":
        outcomes = p.get("outcomes")
        if not isinstance(outcomes, list) or not outcomes:
            raise ValidationError("payload.outcomes must be a non-empty list")
        pairs = []
        for i, o in enumerate(outcomes):
            if not isinstance(o, dict) or "label" not in o or "operator" not in o:
                raise ValidationError(f"outcome {i} needs 'label' and 'operator'")
            pairs.append((_label(o["label"]), matrix_from_pairs(o["operator"], f"outcome {i} operator")))
        name = p.get("name", "")
        fam = MeasurementFamily(tuple(pairs), name=name if isinstance(name, str) else "")
        return ParsedModel("family", family=fam, dim=fam.dim)
    if kind == "nocount":
        lt = NoCountParams(_number(p.get("lambda_tau"), "payload.lambda_tau")).lambda_tau
        dim = _count(p.get("dim"), "payload.dim", 2)
        return ParsedModel("nocount", lambda_tau=lt, dim=dim)
    dim = _count(p.get("dim"), "payload.dim", 1)
    grid = p.get("grid", {})
    if not isinstance(grid, dict):
        raise ValidationError("payload.grid must be an object")
    margin = _number(grid.get("margin_sigmas", DEFAULT_MARGIN_SIGMAS), "grid.margin_sigmas")
    spacing = _number(grid.get("spacing_fraction", DEFAULT_SPACING_FRACTION), "grid.spacing_fraction")
    if "epsilon" in p:
        if "alpha_abs" in p:
            raise ValidationError("give either epsilon or alpha_abs/kappa, not both")
        kappa = _number(p.get("kappa", 1.0), "payload.kappa")
        model = KerrModel.from_epsilon(_number(p["epsilon"], "payload.epsilon"), dim, kappa, margin, spacing)
    else:
        model = KerrModel(
            _number(p.get("alpha_abs"), "payload.alpha_abs"),
            _number(p.get("kappa"), "payload.kappa"),
            dim,
            margin_sigmas=margin,
            spacing_fraction=spacing,
        )
    return ParsedModel("kerr", kerr=model, dim=dim)


def family_document(family: MeasurementFamily) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "family",
        "payload": {
            "name": family.name,
            "outcomes": [{"label": lab, "operator": op} for lab, op in family.outcomes],
        },
    }


def read_json(path) -> dict:
    """Read a JSON file; ``"-"`` reads standard input."""
    import sys

    try:
        text = sys.stdin.read() if str(path) == "-" else Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def load_state(path) -> DensityOperator:
    return parse_state(read_json(path))


def load_model(path) -> ParsedModel:
    return parse_model(read_json(path))
