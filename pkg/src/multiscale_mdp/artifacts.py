"""Artifact persistence: atomic output directories, manifests and plot data.

Outputs of one subcommand are written into a temporary sibling directory
and renamed into place only when the run succeeds, so a failed run never
leaves partial files.  Every CSV starts with ``# manifest: <hash>`` where
the hash covers the inputs (subcommand, config tree, seed, tool version);
equal inputs therefore give byte-identical files.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import shutil
import tempfile
from pathlib import Path
from typing import Iterable, Optional, Sequence

from . import __version__


def manifest_hash(subcommand: str, tree: dict, seed: int) -> str:
    payload = json.dumps(
        {"subcommand": subcommand, "config": tree, "seed": seed, "version": __version__}, sort_keys=True
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence], manifest: str) -> str:
    buf = io.StringIO()
    buf.write(f"# manifest: {manifest}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class RunDirectory:
    """Context manager staging files for ``<out>/<name>`` and renaming on success."""

    def __init__(self, out: str | Path, name: str):
        self.final = Path(out) / name
        self.tmp: Optional[Path] = None

    def __enter__(self) -> "RunDirectory":
        self.final.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{self.final.name}.", dir=self.final.parent))
        return self

    def path(self, filename: str) -> Path:
        assert self.tmp is not None
        return self.tmp / filename

    def write_text(self, filename: str, text: str) -> Path:
        p = self.path(filename)
        p.write_text(text, encoding="utf-8")
        return p

    def __exit__(self, exc_type, exc, tb) -> bool:
        assert self.tmp is not None
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        if self.final.exists():
            shutil.rmtree(self.final)
        os.replace(self.tmp, self.final)
        return False


def write_manifest(run: RunDirectory, info: dict) -> dict:
    """Checksums of every staged file plus ``info``; written as manifest.json."""
    files = sorted(p.name for p in run.tmp.iterdir() if p.is_file())
    manifest = dict(info)
    manifest["outputs"] = {name: sha256_file(run.tmp / name) for name in files}
    run.write_text("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_artifact(path: str | Path) -> tuple[list[str], list[dict]]:
    """Header and rows of a CSV artifact, skipping ``#`` comment lines."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    rows = list(reader)
    return list(reader.fieldnames or []), rows


class SchemaError(ValueError):
    """Artifact lacks the columns a plot kind needs."""


_PLOT_KINDS = {
    "trajectory": (("t", "x_0"), ("t", "x")),
    "sweep": (("epsilon", "eps_theta_log_p"), ("log10_eps", "eps_theta_log_p")),
    "mixing": (("T", "alpha_hat"), ("T", "log_alpha_hat")),
}


def emit_plot_data(artifact: str | Path, kind: str, out_dir: Optional[str | Path] = None) -> Path:
    """Write a gnuplot data file and a script stub next to (or in ``out_dir``).

    ``trajectory`` gives ``(t, x)``; ``sweep`` gives ``(log10 eps, eps^theta
    ln p)`` and skips censored rows; ``mixing`` gives ``(T, ln alpha_hat)``.
    """
    if kind not in _PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}")
    need, labels = _PLOT_KINDS[kind]
    header, rows = read_artifact(artifact)
    missing = [c for c in need if c not in header]
    if missing:
        raise SchemaError(f"artifact {artifact} lacks columns {missing} needed for {kind}")
    src = Path(artifact)
    out = Path(out_dir) if out_dir is not None else src.parent
    out.mkdir(parents=True, exist_ok=True)
    dat = out / f"{src.stem}.{kind}.dat"
    lines = [f"# {labels[0]} {labels[1]}"]
    for r in rows:
        a, b = float(r[need[0]]), float(r[need[1]])
        if kind == "sweep":
            if r.get("censored", "0") in ("1", "True") or not math.isfinite(b):
                continue
            a = math.log10(a)
        elif kind == "mixing":
            if b <= 0:
                continue
            b = math.log(b)
        lines.append(f"{a!r} {b!r}")
    dat.write_text("\n".join(lines) + "\n", encoding="utf-8")
    script = out / f"{src.stem}.{kind}.gp"
    script.write_text(
        "\n".join(
            [
                f"# gnuplot stub for {dat.name}",
                f"set xlabel '{labels[0]}'",
                f"set ylabel '{labels[1]}'",
                f"plot '{dat.name}' using 1:2 with linespoints title '{kind}'",
                "",
            ]
        ),
        encoding="utf-8",
    )
    return dat
