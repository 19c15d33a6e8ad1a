"""Run-directory output: CSV dialect, config echo, run metadata, manifest.

CSVs are comma separated, UTF-8, LF line endings, and floats are written
with 17 significant digits so a rerun reproduces files byte for byte.
"""
import hashlib
import json
import os
from pathlib import Path

import numpy as np

from . import _backend
from .rng import GENERATOR_FAMILY

MANIFEST = "MANIFEST"
CONDENSATION_FEATURE = "rows of the layer's incoming weight matrix, bias excluded"


def fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def csv_text(header, rows, comment=None):
    lines = [] if comment is None else [f"# {comment}"]
    lines.append(",".join(header))
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_csv(path, header, rows, comment=None):
    write_text(path, csv_text(header, rows, comment))


def read_csv(path):
    """Header and rows (as strings), skipping ``#`` comment lines."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().split("\n") if ln and not ln.startswith("#")]
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


def run_meta(command):
    return {
        "command": command,
        "backend": _backend.name(),
        "rng": GENERATOR_FAMILY,
        "condensation_feature": CONDENSATION_FEATURE,
    }


def write_json(path, obj):
    write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(root):
    root = Path(root)
    files = sorted(
        p.relative_to(root).as_posix()
        for p in root.rglob("*")
        if p.is_file() and p.name != MANIFEST
    )
    write_text(root / MANIFEST, "".join(f"{sha256(root / f)}  {f}\n" for f in files))
    return files


def verify_manifest(root):
    """Paths whose current hash differs from the manifest entry."""
    root = Path(root)
    bad = []
    for line in (root / MANIFEST).read_text(encoding="utf-8").splitlines():
        digest, name = line.split("  ", 1)
        if not os.path.exists(root / name) or sha256(root / name) != digest:
            bad.append(name)
    return bad
