"""Output writers and the run manifest.

Text outputs start with ``#`` header lines carrying the run id. Binary grids
are raw little-endian float64 (Re, Im) pairs, one z row after another with
t contiguous, described by a sidecar ``.hdr`` text file; their file names
carry the run id.
"""

from __future__ import annotations

import hashlib
import json
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

FORMATS = ("columns", "binary")
FLOAT_FMT = "%.16e"


def run_identifier(config_snapshot: dict, command: dict) -> str:
    """Deterministic id: hash of the canonical config and command."""
    blob = json.dumps({"config": config_snapshot, "command": command}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class RunManifest:
    run_id: str
    command: dict
    config: dict
    out_dir: Path
    grid: dict = field(default_factory=dict)
    invariants: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    duration_s: float = 0.0

    def header(self, *extra: str) -> str:
        lines = [f"run_id: {self.run_id}", f"command: {self.command['name']}"] + list(extra)
        return "\n".join(lines)

    def add(self, path: Path, description: str) -> None:
        self.outputs.append({"file": str(Path(path).relative_to(self.out_dir)), "description": description})

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "command": self.command,
            "code_version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "grid": self.grid,
            # wall-clock time is the only field that differs between reruns
            "duration_s": self.duration_s,
            "invariants": self.invariants,
            "summary": self.summary,
            "outputs": self.outputs,
            "config": self.config,
        }

    def write(self) -> Path:
        snap = self.out_dir / "config.json"
        snap.write_text(json.dumps(self.config, indent=2, sort_keys=True) + "\n")
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(_jsonable(self.to_dict()), indent=2) + "\n")
        return path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x


def write_columns(path: Path, manifest: RunManifest, names, data, *extra_header: str) -> Path:
    data = np.column_stack([np.asarray(c, float) for c in data])
    header = manifest.header(*extra_header) + "\n" + " ".join(names)
    np.savetxt(path, data, fmt=FLOAT_FMT, header=header)
    return path


def write_trajectory(path: Path, manifest: RunManifest, traj, params: str) -> Path:
    pops = traj.populations
    r13 = traj.states[:, 0, 2]
    write_columns(
        path, manifest,
        ["t_ns", "rho11", "rho22", "rho33", "re_rho13", "im_rho13", "abs_rho13"],
        [traj.times, pops[:, 0], pops[:, 1], pops[:, 2], r13.real, r13.imag, np.abs(r13)],
        f"parameters: {params}",
    )
    manifest.add(path, "Bloch trajectory")
    return path


def write_binary_grid(stem: Path, manifest: RunManifest, z, t, arrays: dict) -> list[Path]:
    """One raw file per complex (n_z, n_t) array plus a shared sidecar header."""
    written = []
    hdr = [
        manifest.header(),
        "dtype: float64 little-endian, (Re, Im) pairs",
        "layout: row-major, shape (n_z, n_t, 2); t varies fastest",
        f"n_z: {len(z)}",
        f"n_t: {len(t)}",
        f"t_min_ns: {t[0]!r}",
        f"t_max_ns: {t[-1]!r}",
        "z_um: " + " ".join(repr(float(v)) for v in z),
    ]
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype=np.complex128)
        if a.shape != (len(z), len(t)):
            raise ValueError(f"{name} has shape {a.shape}, expected {(len(z), len(t))}")
        path = stem.parent / f"{stem.name}_{name}.{manifest.run_id}.bin"
        a.view(np.float64).astype("<f8").tofile(path)
        manifest.add(path, f"{name} complex grid")
        hdr.append(f"file {name}: {path.name}")
        written.append(path)
    hpath = stem.parent / f"{stem.name}.hdr"
    hpath.write_text("\n".join(hdr) + "\n")
    manifest.add(hpath, "binary grid header")
    return written + [hpath]


def read_binary_grid(path: Path, n_z: int, n_t: int) -> np.ndarray:
    raw = np.fromfile(path, dtype="<f8")
    return raw.view(np.complex128).reshape(n_z, n_t)


def write_slices(directory: Path, manifest: RunManifest, z, t, columns: dict) -> list[Path]:
    """One text file per stored z slice; ``columns`` maps name -> complex (n_z, n_t)."""
    directory.mkdir(parents=True, exist_ok=True)
    names = ["t_ns"]
    for name in columns:
        names += [f"re_{name}", f"im_{name}", f"abs_{name}"]
    out = []
    for k, zk in enumerate(z):
        data = [t]
        for arr in columns.values():
            row = arr[k]
            data += [row.real, row.imag, np.abs(row)]
        path = directory / f"z_{k:05d}.txt"
        write_columns(path, manifest, names, data, f"z_um: {float(zk)!r}")
        manifest.add(path, f"slice at z = {float(zk):.6g} um")
        out.append(path)
    return out


def write_grids(out_dir: Path, stem: str, manifest: RunManifest, fmt: str, z, t, arrays: dict):
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    if fmt == "binary":
        return write_binary_grid(out_dir / stem, manifest, z, t, arrays)
    return write_slices(out_dir / stem, manifest, z, t, arrays)
