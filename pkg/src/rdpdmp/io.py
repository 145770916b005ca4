"""Serialization of trajectories, event logs and run manifests.

Floats are written with ``repr`` (shortest round-trip decimal), so equal
arrays give byte-identical files. All files are written to a temporary name
and renamed into place; an existing manifest is never overwritten, a rerun
into the same directory gets versioned file names instead.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import re
import tempfile
from typing import Iterable, Mapping

import numpy as np

from . import __version__
from .ssa import KIND_NAMES

OUT_ENV = "RDPDMP_OUT"
DEFAULT_OUT = "rdpdmp_out"


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def resolve_out_dir(cli_value: str | None) -> str:
    """``--out`` wins, then the environment override, then ``./rdpdmp_out``."""
    return cli_value or os.environ.get(OUT_ENV) or DEFAULT_OUT


def resample_midpoints(values: np.ndarray, n: int) -> np.ndarray:
    """Evaluate piecewise-constant rows (length M) at the midpoints of an n-cell grid.

    A midpoint lying exactly on a boundary between two fine cells takes the
    mean of both, so the resampled field is not shifted to one side.
    """
    values = np.atleast_2d(values)
    m = values.shape[1]
    num = (2 * np.arange(n) + 1) * m  # midpoint * 2n * m, kept in integers
    right = np.minimum(num // (2 * n), m - 1)
    on_edge = num % (2 * n) == 0
    left = np.where(on_edge, right - 1, right) % m
    return 0.5 * (values[:, left] + values[:, right])


def trajectory_csv(times, sites, macros) -> str:
    sites = np.atleast_2d(sites)
    macros = np.atleast_2d(macros)
    n, k = sites.shape[1], macros.shape[1]
    head = ["t"] + [f"site_{j}" for j in range(1, n + 1)] + [f"macro_{l}" for l in range(1, k + 1)]
    lines = [",".join(head)]
    for t, row, drow in zip(times, sites, macros):
        lines.append(",".join([fmt(t)] + [fmt(x) for x in row] + [fmt(int(d)) for d in drow]))
    return "\n".join(lines) + "\n"


def read_trajectory_csv(text: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows = [line.split(",") for line in text.strip().splitlines()]
    head = rows[0]
    n = sum(h.startswith("site_") for h in head)
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    return data[:, 0], data[:, 1 : 1 + n], data[:, 1 + n :].astype(np.int64)


def ssa_events_jsonl(events: Mapping) -> str:
    out = []
    for t, kind, l, r, gd in zip(events["t"], events["kind"], events["l"], events["r"], events["gamma_d"]):
        out.append(json.dumps({"t": float(t), "kind": KIND_NAMES[int(kind)], "l": int(l), "r": int(r),
                               "gamma_d": int(gd)}))
    return "".join(line + "\n" for line in out)


def pdmp_jumps_jsonl(jumps: Mapping, gamma_d: Mapping[int, int]) -> str:
    out = []
    for i in range(len(jumps["t"])):
        r = int(jumps["r"][i])
        out.append(json.dumps({
            "t": float(jumps["t"][i]), "kind": "Jump", "l": int(jumps["l"][i]), "r": r,
            "gamma_d": int(gamma_d[r]),
            "nu_before": [int(x) for x in jumps["nu_before"][i]],
            "nu_after": [int(x) for x in jumps["nu_after"][i]],
        }))
    return "".join(line + "\n" for line in out)


def csv_table(rows: Iterable[Mapping], columns: list[str]) -> str:
    """Rows of scalars as CSV; text cells containing commas or quotes get quoted."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        cells = []
        for c in columns:
            v = row[c]
            if isinstance(v, (bool, np.bool_)):
                cells.append("true" if v else "false")
            elif isinstance(v, (int, float, np.integer, np.floating)):
                cells.append(fmt(v))
            else:
                cells.append(str(v))
        w.writerow(cells)
    return buf.getvalue()


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def atomic_write(path: str, data: bytes):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _next_version(out_dir: str) -> int:
    if not os.path.isdir(out_dir):
        return 1
    versions = [0]
    for name in os.listdir(out_dir):
        if name == "manifest.json":
            versions.append(1)
        m = re.fullmatch(r"manifest\.v(\d+)\.json", name)
        if m:
            versions.append(int(m.group(1)))
    return max(versions) + 1


def _versioned(name: str, version: int) -> str:
    if version == 1:
        return name
    stem, dot, ext = name.partition(".")
    return f"{stem}.v{version}{dot}{ext}"


def write_outputs(results: Mapping[str, str | bytes], out_dir: str, config: Mapping | None = None,
                  extra: Mapping | None = None, flags: Mapping[str, Mapping] | None = None) -> dict:
    """Write every artifact plus a manifest listing names and content hashes.

    ``flags`` attaches per-artifact metadata (e.g. ``{"truncated": True}``).
    """
    version = _next_version(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    artifacts = []
    for name, content in results.items():
        data = content.encode() if isinstance(content, str) else bytes(content)
        fname = _versioned(name, version)
        atomic_write(os.path.join(out_dir, fname), data)
        entry = {"name": fname, "sha256": sha256(data), "bytes": len(data)}
        entry.update((flags or {}).get(name, {}))
        artifacts.append(entry)
    manifest = {
        "version": version,
        "package_version": __version__,
        "artifacts": artifacts,
        "config": dict(config) if config is not None else None,
    }
    if extra:
        manifest.update(extra)
    mname = "manifest.json" if version == 1 else f"manifest.v{version}.json"
    atomic_write(os.path.join(out_dir, mname), (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    manifest["path"] = os.path.join(out_dir, mname)
    return manifest
