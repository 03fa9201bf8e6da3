"""Experiment configuration: TOML files with command-line overrides."""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .fuchsian import StructuralError

DATA_DIR = Path(__file__).parent / "data"

DEFAULTS: dict = {
    "ricci-flow": {
        "mesh": "builtin:octagon",
        "mesh_k": 12,
        "amplitude": 0.3,
        "tol": 1e-4,
        "dt": 0.01,
        "dt_max": 0.05,
        "max_steps": 20000,
        "consistency": 0.02,
        "slack": 1e-10,
        "gauss_bonnet_tol": 1e-9,
        "area_tol": 1e-8,
    },
    "wvol": {"mesh": "builtin:octagon", "mesh_k": 12, "amplitude": 0.2, "shift": 0.7, "nodes": 8, "tol": 1e-8},
    "beltrami-solve": {"mu": "disk-half-z-over-zbar", "n": 256, "half_width": 1.1, "supersample": 8, "extrapolate": True, "tol": 1e-3},
    "schwarzian": {"method": "cauchy", "tol": 1e-8},
    "hessian-lab": {
        "direction": "antidiagonal",
        "basis_size": 3,
        "cutoff": 2,
        "n": 512,
        "half_width": 16.0,
        "fd_steps": [0.02, 0.01, 0.005],
        "tol": 0.05,
        "hessian_tol": 0.10,
    },
    "corrected-vr": {"gluing": "builtin:gluing.json", "trials": 1000, "operators": 20, "dim": 6, "tol": 1e-12},
    "cusp-decay": {"r_inf": 0.3, "s_max": 9.0, "samples": 200, "rate_tol": 0.10},
    "selftest": {},
}


@dataclass
class ExperimentConfig:
    subcommand: str
    params: dict = field(default_factory=dict)
    output_dir: Path = Path("out")
    seed: int = 0

    def __post_init__(self):
        if self.subcommand not in DEFAULTS:
            raise StructuralError(f"unknown subcommand {self.subcommand!r}")
        merged = dict(DEFAULTS[self.subcommand])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise StructuralError(f"unknown keys for {self.subcommand}: {sorted(unknown)}")
        merged.update(self.params)
        self.params = merged
        self.output_dir = Path(self.output_dir)

    def __getitem__(self, key):
        return self.params[key]

    def resolve_path(self, value: str) -> Path:
        if value.startswith("builtin:"):
            return DATA_DIR / value.split(":", 1)[1]
        p = Path(value)
        if not p.exists():
            raise StructuralError(f"input file {p} does not exist")
        return p

    def canonical(self) -> dict:
        return {"subcommand": self.subcommand, "seed": self.seed, "params": self.params}

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path, subcommand: str, overrides: dict | None = None, output_dir=None, seed=None) -> ExperimentConfig:
    """Read a TOML file; a ``[<subcommand>]`` table (or the top level) holds
    parameters, ``seed`` and ``output_dir`` may sit at the top level."""
    raw: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise StructuralError(f"config file {p} does not exist")
        try:
            raw = tomllib.loads(p.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise StructuralError(f"{p}: {exc}") from exc
    params = dict(raw.get(subcommand, {k: v for k, v in raw.items() if k not in ("seed", "output_dir") and not isinstance(v, dict)}))
    params.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig(
        subcommand,
        params,
        output_dir if output_dir is not None else raw.get("output_dir", "out"),
        seed if seed is not None else int(raw.get("seed", 0)),
    )
