"""Reading inputs and writing reports.

Floats are written with 17 significant digits so that a value read back is
the value that was written, and reruns produce identical bytes.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .space import SpaceError, build_space

__all__ = [
    "InputError",
    "read_points_csv",
    "read_distance_matrix",
    "ingest",
    "fmt",
    "dumps",
    "write_json",
    "write_rows",
    "write_coefficients",
    "write_operator",
    "write_basis",
    "write_molecule",
]


class InputError(ValueError):
    pass


def fmt(x):
    """17 significant digits; ``inf``/``nan`` as JSON-style strings."""
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _Float(float(obj))
    return obj


class _Float(float):
    def __repr__(self):
        return fmt(self)


class _Encoder(json.JSONEncoder):
    def iterencode(self, o, _one_shot=False):
        # route floats through fmt(); the C encoder would use repr()
        return json.encoder._make_iterencode(
            {}, self.default, json.encoder.py_encode_basestring_ascii, self.indent,
            fmt, self.key_separator, self.item_separator, self.sort_keys,
            self.skipkeys, _one_shot)(o, 0)


def dumps(obj):
    """Deterministic JSON: sorted keys, two-space indent, 17-digit floats."""
    return json.dumps(_plain(obj), cls=_Encoder, indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_points_csv(path, metric="euclidean", theta=1.0):
    """Space from ``id,x1,...,xd,weight`` rows (header optional).

    Ids must be ``0..n-1`` in any order.  Bad rows raise :class:`InputError`
    naming the line.
    """
    rows = {}
    dim = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and not _is_number(row[0]):
                continue
            if len(row) < 3:
                raise InputError(f"{path}:{lineno}: need id, at least one coordinate and a weight")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-numeric field in {row!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise InputError(f"{path}:{lineno}: non-finite value")
            pid = vals[0]
            if pid != int(pid) or pid < 0:
                raise InputError(f"{path}:{lineno}: id must be a nonnegative integer, got {row[0]}")
            if vals[-1] <= 0:
                raise InputError(f"{path}:{lineno}: weight must be positive, got {row[-1]}")
            if dim is None:
                dim = len(vals) - 2
            elif len(vals) - 2 != dim:
                raise InputError(f"{path}:{lineno}: expected {dim} coordinates, got {len(vals) - 2}")
            if int(pid) in rows:
                raise InputError(f"{path}:{lineno}: duplicate id {int(pid)}")
            rows[int(pid)] = vals
    n = len(rows)
    if sorted(rows) != list(range(n)):
        raise InputError(f"{path}: ids must be 0..{n - 1}")
    data = np.array([rows[i] for i in range(n)])
    try:
        return build_space(coords=data[:, 1:-1], metric=metric, weights=data[:, -1], theta=theta)
    except SpaceError as exc:
        raise InputError(f"{path}: {exc}") from exc


def read_distance_matrix(path, weights=None, tol=1e-8):
    """Space from a file holding ``n`` then ``n`` rows of ``n`` distances.

    Asymmetry up to ``tol`` is averaged away; more is an error.
    """
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    numbered = [(i + 1, ln) for i, ln in enumerate(lines) if ln]
    if not numbered:
        raise InputError(f"{path}: empty file")
    lineno, first = numbered[0]
    try:
        n = int(first)
    except ValueError:
        raise InputError(f"{path}:{lineno}: first line must be the point count") from None
    body = numbered[1:]
    if len(body) != n:
        raise InputError(f"{path}: expected {n} matrix rows, found {len(body)}")
    mat = np.empty((n, n))
    for i, (lineno, ln) in enumerate(body):
        parts = ln.replace(",", " ").split()
        if len(parts) != n:
            raise InputError(f"{path}:{lineno}: expected {n} entries, got {len(parts)}")
        try:
            mat[i] = [float(v) for v in parts]
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric entry") from None
    try:
        return build_space(dist=mat, metric="matrix", weights=weights, symmetry_tol=tol)
    except SpaceError as exc:
        raise InputError(f"{path}: {exc}") from exc


def ingest(path, fmt_name="points-csv", **kw):
    if fmt_name == "points-csv":
        return read_points_csv(path, **kw)
    if fmt_name == "dist-matrix":
        return read_distance_matrix(path, **kw)
    raise InputError(f"unknown input format {fmt_name!r}")


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def write_coefficients(path, lam):
    fam = lam.family
    rows = [(int(l), int(a), float(v)) for l, a, v in zip(fam.cube_level, fam.alpha, lam.values)]
    return write_rows(path, ["level", "alpha", "value"], rows)


def write_operator(path, op):
    fam = op.family
    coo = op.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    rows = [(int(fam.cube_level[i]), int(fam.alpha[i]), int(fam.cube_level[j]), int(fam.alpha[j]),
             float(v)) for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order])]
    return write_rows(path, ["qlevel", "qalpha", "plevel", "palpha", "value"], rows)


def write_basis(outdir, basis):
    """``psi.csv`` (one row per wavelet) and ``manifest.json``."""
    outdir = Path(outdir)
    rows = []
    for c, vals in zip(basis.tree.wavelet_family, basis.psi):
        rows.append([c.level, c.alpha] + [float(v) for v in vals])
    write_rows(outdir / "psi.csv", ["level", "alpha"] + [f"x{i}" for i in range(basis.space.n)], rows)
    manifest = {"backend": basis.backend, "n": basis.space.n, "k_min": basis.tree.k_min,
                "k_max": basis.tree.k_max, "delta": basis.tree.delta,
                "wavelets": len(basis.tree.wavelet_family), "params": basis.params}
    write_json(outdir / "manifest.json", manifest)


def write_molecule(outdir, name, values, manifest):
    outdir = Path(outdir)
    write_rows(outdir / f"{name}.csv", ["point_id", "value"],
               [(i, float(v)) for i, v in enumerate(values)])
    write_json(outdir / f"{name}.json", manifest)
