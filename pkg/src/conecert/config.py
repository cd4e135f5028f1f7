"""Run configuration: tolerances, schedules, sample counts and artifact
paths, loadable from a simple key=value file.

The default path comes from the CONECERT_CONFIG environment variable so
scripted runs can swap configurations without touching command lines.
Every tolerance must be positive; the master seed is carried into every
artifact the command-line tools emit.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from typing import Optional, Sequence

from .linalg import RANK_CUTOFF, TOL_PSD
from .sdp import TOL_FEAS
from .tensors import EPS_SCHEDULE

ENV_VAR = "CONECERT_CONFIG"


@dataclass
class RunConfig:
    tol_psd: float = TOL_PSD
    tol_feas: float = TOL_FEAS
    tol_cert: float = 1e-8
    rank_cutoff: float = RANK_CUTOFF
    eps_schedule: Sequence[float] = field(default_factory=lambda: [float(e) for e in EPS_SCHEDULE])
    samples: int = 10
    seed: int = 0
    out_dir: str = "artifacts"

    def __post_init__(self):
        for name in ("tol_psd", "tol_feas", "tol_cert", "rank_cutoff"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if any(e <= 0 for e in self.eps_schedule):
            raise ValueError("eps_schedule entries must be positive")
        if self.samples < 1:
            raise ValueError("samples must be at least 1")

    def to_dict(self) -> dict:
        return {
            "tol_psd": self.tol_psd,
            "tol_feas": self.tol_feas,
            "tol_cert": self.tol_cert,
            "rank_cutoff": self.rank_cutoff,
            "eps_schedule": [float(e) for e in self.eps_schedule],
            "samples": self.samples,
            "seed": self.seed,
            "out_dir": self.out_dir,
        }


def parse_config_text(text: str) -> dict:
    """key = value lines; # starts a comment; blank lines ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        out[key.strip()] = val.strip()
    return out


def _coerce(name: str, val: str):
    if name in ("samples", "seed"):
        return int(val)
    if name == "out_dir":
        return val
    if name == "eps_schedule":
        return [float(x) for x in val.split(",") if x.strip()]
    return float(val)


def load_config(path: Optional[str] = None) -> RunConfig:
    """Build a RunConfig from a file, the CONECERT_CONFIG environment
    variable, or defaults, in that order of preference.  Unknown keys are
    rejected so typos fail loudly."""
    if path is None:
        path = os.environ.get(ENV_VAR)
    if path is None:
        return RunConfig()
    with open(path, "r", encoding="utf-8") as fh:
        raw = parse_config_text(fh.read())
    known = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {name: _coerce(name, val) for name, val in raw.items()}
    return RunConfig(**kwargs)
