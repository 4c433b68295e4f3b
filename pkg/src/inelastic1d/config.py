"""Run configuration: a flat ``key = value`` document with optional sections.

Example::

    # steady profile at desk resolution
    [model]
    mode = steady
    gamma = 1
    a = 0.5

    [grid]
    N = 128

Section headers are optional and only group keys for readability; every
key is unique across sections.  Unknown keys, unknown sections, values of
the wrong type and constraint violations raise :class:`ConfigError` naming
the key and the line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError

__all__ = ["RunConfig", "parse_config", "load_config", "MODES", "INITIAL_PRESETS"]

MODES = ("steady", "transient", "dsmc", "rescaled-dsmc", "stability", "checks")
INITIAL_PRESETS = ("uniform-box", "gaussian", "m1", "file")
SECTIONS = ("model", "grid", "run", "initial", "particles", "stability", "output")


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI run needs; defaults match desk-scale runs."""

    mode: str
    gamma: float
    a: float
    drift_coeff: float | None = None
    L: float = 20.0
    N: int = 128
    k: int = 2
    quad_order: int | None = None
    threshold: float = 1e-4
    max_steps: int = 200_000
    t_end: float = 10.0
    cfl: float = 0.3
    record_every: int = 10
    boundary: str = "outflow"
    symmetry: str = "auto"
    initial: str = "uniform-box"
    initial_file: str | None = None
    n_particles: int = 10_000
    acceptance_target: float = 0.02
    n_records: int = 60
    d0: tuple = (1e-3, 1e-2)
    n_seeds: int = 20
    n_samples: int = 100_000
    out_dir: str = "out"
    seed: int = 0

    def to_text(self) -> str:
        """Render as a config document that :func:`parse_config` reads back."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ", ".join(repr(float(x)) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        return {f.name: (list(getattr(self, f.name)) if isinstance(getattr(self, f.name), tuple)
                         else getattr(self, f.name)) for f in fields(self)}


def _to_float(s):
    v = float(s)
    if math.isnan(v):
        raise ValueError("nan")
    return v


def _to_int(s):
    f = float(s)
    if not f.is_integer():
        raise ValueError("not an integer")
    return int(f)


def _to_str(s):
    if s.startswith(("'", '"')) and s.endswith(s[0]) and len(s) >= 2:
        return s[1:-1]
    return s


def _to_floats(s):
    parts = [p for p in s.replace(",", " ").split() if p]
    if not parts:
        raise ValueError("empty list")
    return tuple(_to_float(p) for p in parts)


_CONVERT = {"mode": _to_str, "boundary": _to_str, "symmetry": _to_str, "initial": _to_str,
            "initial_file": _to_str, "out_dir": _to_str, "d0": _to_floats}
_TYPE_NAMES = {_to_float: "a real number", _to_int: "an integer", _to_str: "a string",
               _to_floats: "a list of numbers"}


def _converter(name):
    if name in _CONVERT:
        return _CONVERT[name]
    f = {f.name: f for f in fields(RunConfig)}[name]
    t = str(f.type)
    if "int" in t:
        return _to_int
    return _to_float


def _validate(values: dict, lines: dict, base: Path | None):
    def fail(key, msg):
        raise ConfigError(msg, key=key, line=lines.get(key))

    checks = [
        ("mode", lambda v: v in MODES, f"mode must be one of {', '.join(MODES)}"),
        ("a", lambda v: 0.0 < v < 1.0, "a must satisfy a ∈ (0,1)"),
        ("gamma", lambda v: 0.0 <= v < math.inf, "gamma must be finite and >= 0"),
        ("drift_coeff", lambda v: v is None or 0.0 <= v < math.inf, "drift_coeff must be finite and >= 0"),
        ("L", lambda v: 0.0 < v < math.inf, "L must be positive"),
        ("N", lambda v: v >= 1, "N must be >= 1"),
        ("k", lambda v: v >= 0, "k must be >= 0"),
        ("quad_order", lambda v: v is None or v >= 1, "quad_order must be >= 1"),
        ("threshold", lambda v: v > 0, "threshold must be positive"),
        ("max_steps", lambda v: v >= 0, "max_steps must be >= 0"),
        ("t_end", lambda v: 0.0 <= v < math.inf, "t_end must be finite and >= 0"),
        ("cfl", lambda v: 0.0 < v <= 1.0, "cfl must lie in (0, 1]"),
        ("record_every", lambda v: v >= 1, "record_every must be >= 1"),
        ("boundary", lambda v: v in ("outflow", "wall"), "boundary must be outflow or wall"),
        ("symmetry", lambda v: v in ("auto", "even", "none"), "symmetry must be auto, even or none"),
        ("initial", lambda v: v in INITIAL_PRESETS, f"initial must be one of {', '.join(INITIAL_PRESETS)}"),
        ("n_particles", lambda v: v >= 2, "n_particles must be >= 2"),
        ("acceptance_target", lambda v: 0.0 < v <= 1.0, "acceptance_target must lie in (0, 1]"),
        ("n_records", lambda v: v >= 1, "n_records must be >= 1"),
        ("d0", lambda v: all(x > 0 for x in v), "d0 values must be positive"),
        ("n_seeds", lambda v: v >= 1, "n_seeds must be >= 1"),
        ("n_samples", lambda v: v >= 1, "n_samples must be >= 1"),
        ("seed", lambda v: v >= 0, "seed must be >= 0"),
    ]
    for key, ok, msg in checks:
        if key in values and not ok(values[key]):
            fail(key, f"{msg}, got {values[key]!r}")
    if values.get("initial") == "file":
        path = values.get("initial_file")
        if not path:
            fail("initial", "initial = file needs initial_file")
        p = Path(path)
        if base is not None and not p.is_absolute():
            p = base / p
        if not p.is_file():
            fail("initial_file", f"file not found: {p}")
        values["initial_file"] = str(p)


def parse_config(text: str, base_dir: str | Path | None = None) -> RunConfig:
    """Parse and validate a configuration document.

    Parameters
    ----------
    base_dir : path, optional
        Directory against which a relative ``initial_file`` is resolved.
    """
    known = {f.name for f in fields(RunConfig)}
    values: dict = {}
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", line=lineno)
            name = line[1:-1].strip()
            if name not in SECTIONS:
                raise ConfigError(f"unknown section [{name}]", key=name, line=lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in known:
            raise ConfigError(f"unknown key {key!r}", key=key, line=lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first on line {lines[key]})", key=key, line=lineno)
        conv = _converter(key)
        try:
            values[key] = conv(val)
        except (ValueError, OverflowError):
            raise ConfigError(f"expected {_TYPE_NAMES[conv]}, got {val!r}", key=key, line=lineno) from None
        lines[key] = lineno
    for req in ("mode", "gamma", "a"):
        if req not in values:
            raise ConfigError(f"missing required key {req!r}", key=req)
    _validate(values, lines, Path(base_dir) if base_dir is not None else None)
    return RunConfig(**values)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_config(text, base_dir=path.parent)
