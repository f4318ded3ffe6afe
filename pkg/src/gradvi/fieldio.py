"""Plain-text CSV persistence for grid fields.

Layout::

    # shape={"kind":"disk",...} h=0.0078125 nx=129 ny=129 components=1
    v(0,0),v(1,0),...,v(nx-1,0)
    ...
    v(0,ny-1),...

One row per lattice row (fixed second index), values in ``%.17g`` so that a
round trip is bit-identical; exterior nodes are ``nan``.  A vector field
writes one such block per component, each introduced by ``# component=i``.
1-D fields have ``ny=1``.
"""
from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .domain import ScalarField, VectorField, build_grid, shape_from_dict

__all__ = ["FieldFormatError", "export_field", "import_field", "format_field"]

_HEADER = re.compile(r"^# shape=(\S+) h=(\S+) nx=(\d+) ny=(\d+) components=(\d+)$")
_COMPONENT = re.compile(r"^# component=(\d+)$")


class FieldFormatError(ValueError):
    pass


def _rows(values: np.ndarray) -> list[str]:
    a = values.reshape(values.shape[0], -1)  # (nx, ny)
    return [",".join("%.17g" % x for x in a[:, j]) for j in range(a.shape[1])]


def format_field(field) -> str:
    g = field.grid
    if g.dimension > 2:
        raise FieldFormatError("only 1-D and 2-D fields can be exported")
    nx = g.dims[0]
    ny = g.dims[1] if g.dimension == 2 else 1
    shape = json.dumps(g.shape.to_dict(), sort_keys=True, separators=(",", ":"))
    if isinstance(field, VectorField):
        N = field.components
        lines = [f"# shape={shape} h={g.h:.17g} nx={nx} ny={ny} components={N}"]
        for i in range(N):
            lines.append(f"# component={i}")
            lines += _rows(field.values[..., i])
    else:
        lines = [f"# shape={shape} h={g.h:.17g} nx={nx} ny={ny} components=1"]
        lines += _rows(field.values)
    return "\n".join(lines) + "\n"


def export_field(field, path) -> Path:
    path = Path(path)
    path.write_text(format_field(field))
    return path


def import_field(path, grid=None):
    """Read a field written by :func:`export_field`.

    The grid is rebuilt from the header unless ``grid`` is given, in which
    case its dimensions must match.
    """
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise FieldFormatError("empty file")
    m = _HEADER.match(lines[0])
    if not m:
        raise FieldFormatError(f"malformed header: {lines[0]!r}")
    shape = shape_from_dict(json.loads(m.group(1)))
    h = float(m.group(2))
    nx, ny, N = int(m.group(3)), int(m.group(4)), int(m.group(5))
    if grid is None:
        grid = build_grid(shape, h)
    dims = (nx,) if grid.dimension == 1 else (nx, ny)
    if grid.dims != dims:
        raise FieldFormatError(f"header dimensions {dims} do not match grid {grid.dims}")

    def block(rows):
        if len(rows) != ny:
            raise FieldFormatError(f"expected {ny} rows, found {len(rows)}")
        data = np.array([[float(x) for x in r.split(",")] for r in rows])
        if data.shape != (ny, nx):
            raise FieldFormatError(f"expected {nx} columns per row")
        return data.T.reshape(dims)

    body = lines[1:]
    if N == 1 and not (body and _COMPONENT.match(body[0])):
        return ScalarField(grid, block(body))
    comps = []
    for i in range(N):
        start = i * (ny + 1)
        cm = _COMPONENT.match(body[start]) if start < len(body) else None
        if not cm or int(cm.group(1)) != i:
            raise FieldFormatError(f"missing '# component={i}' marker")
        comps.append(block(body[start + 1 : start + 1 + ny]))
    if len(body) != N * (ny + 1):
        raise FieldFormatError("trailing lines after the last component")
    return VectorField(grid, np.stack(comps, axis=-1))
