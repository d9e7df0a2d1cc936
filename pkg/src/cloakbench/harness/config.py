"""Experiment configuration: a flat ``key = value`` text format mapped onto a dataclass."""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction

import numpy as np

KINDS = ("validate_sphere", "sweep_full", "sweep_partial", "aperture_sweep", "expansion_check",
         "leading_order_check", "export_materials", "rates")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "rates"
    omega: float = 1.0
    deltas: tuple = (0.2, 0.1, 0.05)
    r: str = "0"
    s: str = "2"
    t: str = "0"
    p: tuple | None = None
    d: tuple | None = None
    amplitude: float = 1.0
    eps: tuple = (0.0, 0.2, 0.4, 0.8, 1.0)
    aperture_delta: float = 0.05
    curve: str = "segment"
    curve_length: float = 1.0
    arc_radius: float = 2.0
    side: float = 1.0
    n_circ: int = 0          # 0: 12 for tubes, 8 for slabs
    aspect: float = 2.0
    h_max: float = 0.1
    refine: int = 0
    gate: bool = True
    gate_tol: float = 0.05
    sphere_frequency: int = 10
    n_dirs: int = 266
    max_edges: int = 20000
    screen_h0: float = 0.2
    screen_factor: float = 0.5
    screen_levels: int = 4
    density: tuple = (0.3, 1.0, 0.5)
    r_omega: float = 2.0
    n_samples: int = 200
    write_mesh: bool = True
    write_farfield: bool = True
    seed: int = 0
    out: str = "out"

    # ---------------------------------------------------------------
    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if not self.omega > 0:
            raise ConfigError("omega must be positive")
        needs_deltas = self.kind in ("sweep_full", "sweep_partial", "expansion_check", "leading_order_check",
                                     "export_materials")
        if needs_deltas and len(self.deltas) == 0:
            raise ConfigError("delta list is empty")
        if len(self.deltas) and np.any(np.diff(self.deltas) >= 0):
            raise ConfigError("delta list must be strictly decreasing")
        if any(not dl > 0 for dl in self.deltas):
            raise ConfigError("delta values must be positive")
        if self.kind in ("sweep_partial", "leading_order_check", "aperture_sweep") or \
                (self.kind == "expansion_check"):
            dl = list(self.deltas) + ([self.aperture_delta] if self.kind == "aperture_sweep" else [])
            if any(x >= self.side / 2 for x in dl):
                raise ConfigError("delta must be smaller than half the square side")
        if self.kind == "aperture_sweep":
            if not self.eps or any(not 0 <= e <= 1 for e in self.eps):
                raise ConfigError("aperture list must be non-empty with values in [0, 1]")
        if self.kind == "export_materials" and max(self.deltas) > 1:
            raise ConfigError("blowup needs delta <= 1")
        if (self.p is None) != (self.d is None):
            raise ConfigError("give both p and d or neither")
        if self.p is not None:
            try:
                self.wave_vectors()
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if self.n_circ and self.n_circ < 8:
            raise ConfigError("n_circ must be at least 8")
        if self.refine < 0 or self.n_dirs < 4 or self.max_edges < 1:
            raise ConfigError("refine >= 0, n_dirs >= 4 and max_edges >= 1 are required")
        if self.curve not in ("segment", "arc"):
            raise ConfigError("curve must be 'segment' or 'arc'")
        for name in ("r", "s", "t"):
            try:
                Fraction(str(getattr(self, name)))
            except ValueError:
                raise ConfigError(f"{name} must be a number or a fraction") from None
        return self

    def wave_vectors(self):
        """Normalised ``(p, d)`` with the ``d`` component of ``p`` removed."""
        d = np.asarray(self.d, float)
        d = d / np.linalg.norm(d)
        p = np.asarray(self.p, float)
        p = p - (p @ d) * d
        if np.linalg.norm(p) < 1e-12:
            raise ValueError("polarisation parallel to the propagation direction")
        return p / np.linalg.norm(p), d

    def resolved_n_circ(self, geometry: str) -> int:
        if self.n_circ:
            return int(self.n_circ)
        return 12 if geometry == "tube" else 8

    def canonical(self) -> str:
        lines = []
        for f in fields(self):
            if f.name == "out":
                continue
            lines.append(f"{f.name}={_format(getattr(self, f.name))}")
        return "\n".join(lines)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def to_text(self) -> str:
        return "\n".join(f"{k} = {_format(v)}" for k, v in asdict(self).items()) + "\n"


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(name, raw, default):
    ftype = {f.name: f.type for f in fields(ExperimentConfig)}[name]
    raw = raw.strip()
    try:
        if "tuple" in ftype:
            if raw.lower() in ("none", ""):
                return None if "None" in ftype else ()
            return tuple(float(x) for x in raw.split(","))
        if ftype == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse ``key = value`` lines (``#`` starts a comment); unknown keys are rejected."""
    known = {f.name: f for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw, known[key].default)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values).validate()


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        text = open(path).read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, **overrides)
