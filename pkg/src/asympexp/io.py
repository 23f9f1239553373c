"""File formats (amspace-v1, amop-v1, ammap-v1) and deterministic JSON output."""

from __future__ import annotations

import hashlib
import json
import math
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from .coarse import CoarseMap
from .errors import AsympExpError, FormatError
from .linalg import DenseOperator
from .space import EXPLICIT, FiniteMetricSpace, SpaceSequence, edge_path_metric

SPACE_FORMAT = "amspace-v1"
OPERATOR_FORMAT = "amop-v1"
MAP_FORMAT = "ammap-v1"


# ---------------------------------------------------------------- JSON writer


def _num(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _encode(obj: Any, indent: str, level: int) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating, Fraction)):
        return _num(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    pad = "\n" + indent * (level + 1)
    end = "\n" + indent * level
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [json.dumps(str(k)) + ": " + _encode(v, indent, level + 1) for k, v in obj.items()]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        parts = [_encode(v, indent, level + 1) for v in obj]
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(parts) + "]"
        return "[" + pad + ("," + pad).join(parts) + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON with every real written to 17 significant digits; non-finite reals become null."""
    return _encode(obj, " " * indent, 0) + "\n"


def _reject_constant(name: str):
    raise FormatError(f"non-finite JSON number {name!r} is not allowed")


def loads(text: str) -> Any:
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}") from exc


def read_json(path: str | Path) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    return loads(text)


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------- spaces


def _int(v, what: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise FormatError(f"{what} must be an integer, got {v!r}")
    return v


def space_from_json(data: Any) -> SpaceSequence:
    if not isinstance(data, dict) or data.get("format") != SPACE_FORMAT:
        raise FormatError(f"expected a {SPACE_FORMAT} object")
    pieces_raw = data.get("pieces")
    if not isinstance(pieces_raw, list) or not pieces_raw:
        raise FormatError("pieces must be a nonempty list")
    pieces = []
    try:
        for i, p in enumerate(pieces_raw):
            if not isinstance(p, dict):
                raise FormatError(f"piece {i} is not an object")
            n = _int(p.get("n"), f"piece {i} n")
            kind = p.get("kind")
            if kind == "graph":
                edges = p.get("edges")
                if not isinstance(edges, list):
                    raise FormatError(f"piece {i}: edges must be a list")
                pieces.append(edge_path_metric([tuple(_int(v, "edge endpoint") for v in e) for e in edges], n))
            elif kind == "metric":
                dist = p.get("dist")
                if not isinstance(dist, list) or len(dist) != n or any(not isinstance(r, list) or len(r) != n for r in dist):
                    raise FormatError(f"piece {i}: dist must be an {n}x{n} list")
                d = np.array(dist, dtype=float)
                if np.any(~np.isfinite(d)) or np.any(d < 0):
                    raise FormatError(f"piece {i}: distances must be finite and non-negative")
                pieces.append(FiniteMetricSpace(d, EXPLICIT))
            else:
                raise FormatError(f"piece {i}: unknown kind {kind!r}")
        gaps = data.get("gaps", "canonical")
        if gaps == "canonical":
            return SpaceSequence(tuple(pieces))
        if not isinstance(gaps, list) or any(isinstance(g, bool) or not isinstance(g, (int, float)) for g in gaps):
            raise FormatError('gaps must be "canonical" or a list of numbers')
        return SpaceSequence(tuple(pieces), tuple(float(g) for g in gaps))
    except FormatError:
        raise
    except (AsympExpError, TypeError, ValueError) as exc:
        raise FormatError(f"invalid space: {exc}") from exc


def space_to_json(S: SpaceSequence, provenance: dict | None = None) -> dict:
    pieces = []
    for p in S.pieces:
        if p.is_graph:
            pieces.append({"kind": "graph", "n": p.n, "edges": [list(e) for e in p.edges]})
        else:
            pieces.append({"kind": "metric", "n": p.n, "dist": p.dist.tolist()})
    out: dict[str, Any] = {"format": SPACE_FORMAT, "pieces": pieces, "gaps": "canonical" if S.gaps is None else list(S.gaps)}
    if provenance is not None:
        out["generator"] = provenance
    return out


def load_space(path: str | Path) -> SpaceSequence:
    return space_from_json(read_json(path))


# ---------------------------------------------------------------- operators


def operator_to_json(T: DenseOperator) -> dict:
    return {"format": OPERATOR_FORMAT, "n": T.n, "entries": T.entries.tolist()}


def operator_from_json(data: Any, S: SpaceSequence) -> DenseOperator:
    if not isinstance(data, dict) or data.get("format") != OPERATOR_FORMAT:
        raise FormatError(f"expected a {OPERATOR_FORMAT} object")
    n = _int(data.get("n"), "n")
    if n != S.total:
        raise FormatError(f"operator size {n} does not match the space ({S.total} points)")
    try:
        a = np.array(data.get("entries"), dtype=float)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad entries: {exc}") from exc
    if a.shape != (n, n):
        raise FormatError(f"entries must be {n}x{n}")
    return DenseOperator(S, a)


# ---------------------------------------------------------------- maps


def map_from_json(data: Any, X: SpaceSequence, Y: SpaceSequence) -> CoarseMap:
    """Per domain piece ``{"from": n, "to": k, "map": [...]}``; entries are local
    indices into Y_k or ``[k', j]`` pairs for points sent elsewhere."""
    if not isinstance(data, dict) or data.get("format", MAP_FORMAT) != MAP_FORMAT:
        raise FormatError(f"expected a {MAP_FORMAT} object")
    raw = data.get("pieces")
    if not isinstance(raw, list) or len(raw) != len(X):
        raise FormatError(f"map must list all {len(X)} domain pieces")
    by_from: dict[int, tuple[int, list]] = {}
    for e in raw:
        if not isinstance(e, dict):
            raise FormatError("map piece entries must be objects")
        n, k, mp = _int(e.get("from"), "from"), _int(e.get("to"), "to"), e.get("map")
        if not isinstance(mp, list):
            raise FormatError("map must be a list")
        if n in by_from or not 0 <= n < len(X):
            raise FormatError(f"bad or repeated domain piece {n}")
        by_from[n] = (k, mp)
    try:
        return CoarseMap.from_pieces(X, Y, [by_from[n] for n in range(len(X))])
    except FormatError:
        raise
    except (AsympExpError, TypeError, ValueError) as exc:
        raise FormatError(f"invalid map: {exc}") from exc


def map_to_json(m: CoarseMap) -> dict:
    pieces = []
    Y = m.codomain
    for n in range(len(m.domain)):
        k = m.piece_match[n]
        entries = []
        for y in m.image[m.piece_points(n)]:
            kk, j = Y.locate(int(y))
            entries.append(j if kk == k else [kk, j])
        pieces.append({"from": n, "to": k, "map": entries})
    return {"format": MAP_FORMAT, "pieces": pieces}


def load_map(path: str | Path, X: SpaceSequence, Y: SpaceSequence) -> CoarseMap:
    return map_from_json(read_json(path), X, Y)
