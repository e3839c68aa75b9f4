"""JSON and CSV codecs for covers, point sets, reports and experiment tables.

Floats are written with 17 significant digits so a reload reproduces the same
doubles; integral floats keep a trailing ".0" so exact integer matrices and
float matrices stay distinguishable on disk.
"""

import csv
import io
import json
import logging
import math
import sys
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

from pydantic import BaseModel

from geocover.errors import DomainError
from geocover.models.schemas import (
    CoverMethod,
    CoverSearchBounds,
    GeodesicCover,
    Isometry,
    PointSet,
    Surface,
    UhpPoint,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    text = format(x, ".17g")
    if not any(ch in text for ch in ".en"):
        text += ".0"
    return text


def to_data(obj: Any) -> Any:
    """Plain JSON-ready structure; isometries become 2x2 matrices and surfaces their label."""
    if isinstance(obj, Isometry):
        return obj.to_matrix()
    if isinstance(obj, UhpPoint):
        return {"x": obj.x, "y": obj.y}
    if isinstance(obj, Surface):
        return obj.label
    if isinstance(obj, BaseModel):
        return {name: to_data(getattr(obj, name)) for name in type(obj).model_fields}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, Mapping):
        return {str(k): to_data(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_data(v) for v in obj]
    return obj


def _render(value: Any, level: int) -> str:
    pad = "  " * (level + 1)
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_render(v, level + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * level + "}"
    if isinstance(value, list):
        if not value:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in value):
            return "[" + ", ".join(_render(v, level + 1) for v in value) + "]"
        items = [pad + _render(v, level + 1) for v in value]
        return "[\n" + ",\n".join(items) + "\n" + "  " * level + "]"
    raise DomainError(f"cannot serialise {type(value).__name__}")


def dumps(obj: Any) -> str:
    return _render(to_data(obj), 0) + "\n"


def emit(text: str, path: Optional[PathLike] = None) -> None:
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)
    logger.info("wrote %s", path)


def _read_json(path: PathLike) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


# covers

def cover_to_data(cover: GeodesicCover) -> Dict[str, Any]:
    return {
        "surface": cover.surface.label,
        "method": cover.method.value,
        "exact": all(e.exact for e in cover.gamma0),
        "bound_used": to_data(cover.bound_used),
        "gamma0": to_data(cover.gamma0),
        "radical": to_data(cover.radical),
    }


def cover_from_data(data: Mapping[str, Any]) -> GeodesicCover:
    exact = bool(data.get("exact", False))

    def matrices(rows: Optional[Iterable]) -> Optional[List[Isometry]]:
        if rows is None:
            return None
        return [Isometry.of(m[0][0], m[0][1], m[1][0], m[1][1], exact=exact) for m in rows]

    bound = data.get("bound_used")
    return GeodesicCover(
        surface=Surface.parse(data["surface"]),
        gamma0=matrices(data["gamma0"]),
        method=CoverMethod(data["method"]),
        bound_used=CoverSearchBounds(**bound) if bound else None,
        radical=matrices(data.get("radical")),
    )


def save_cover(cover: GeodesicCover, path: Optional[PathLike] = None) -> None:
    emit(_render(cover_to_data(cover), 0) + "\n", path)


def load_cover(path: PathLike) -> GeodesicCover:
    return cover_from_data(_read_json(path))


# point sets

def point_set_to_data(points: PointSet) -> Dict[str, Any]:
    return {
        "surface": points.surface.label,
        "label": points.label,
        "points": to_data(points.points),
    }


def point_set_from_data(data: Mapping[str, Any]) -> PointSet:
    return PointSet(
        surface=Surface.parse(data["surface"]),
        label=data.get("label", ""),
        points=[UhpPoint(x=p["x"], y=p["y"]) for p in data["points"]],
    )


def save_point_set(points: PointSet, path: Optional[PathLike] = None) -> None:
    emit(_render(point_set_to_data(points), 0) + "\n", path)


def load_point_set(path: PathLike) -> PointSet:
    return point_set_from_data(_read_json(path))


# csv tables

def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, (list, tuple)):
        return ";".join(_cell(v) for v in value)
    if isinstance(value, Enum):
        return str(value.value)
    return str(value)


def render_csv(rows: Sequence[Any], provenance: Optional[Mapping[str, Any]] = None) -> str:
    buffer = io.StringIO()
    for key, value in (provenance or {}).items():
        buffer.write(f"# {key}={_cell(value)}\n")
    records = [to_data(row) if isinstance(row, BaseModel) else dict(row) for row in rows]
    if not records:
        return buffer.getvalue()
    writer = csv.writer(buffer, lineterminator="\n")
    header = list(records[0].keys())
    writer.writerow(header)
    for record in records:
        writer.writerow([_cell(record.get(name)) for name in header])
    return buffer.getvalue()


def write_csv(
    rows: Sequence[Any], path: Optional[PathLike] = None, provenance: Optional[Mapping[str, Any]] = None
) -> None:
    emit(render_csv(rows, provenance), path)
