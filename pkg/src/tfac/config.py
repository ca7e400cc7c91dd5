"""Run configuration: flat ``key = value`` files merged with command-line flags.

File format, one entry per line::

    # comment
    command = study
    example = 6.1
    alpha = 0.8
    N = 8, 16, 32, 64

Keys are the field names of :class:`RunConfig`. Lists are comma separated,
booleans are ``true`` or ``false``. Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import ParameterDomainError
from .temporal_mesh import default_gamma, default_nu

COMMANDS = ("solve", "study", "kernels", "gronwall", "mesh-info")
COUPLINGS = ("h=1/(2N)", "fixed")


class ConfigError(ParameterDomainError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    command: str
    example: Optional[str] = None
    alpha: Optional[float] = None
    gamma: Optional[float] = None
    nu: Optional[float] = None
    kappa: Optional[float] = None
    T: Optional[float] = None
    N: tuple[int, ...] = ()
    nx: Optional[int] = None
    ny: Optional[int] = None
    domain: tuple[float, ...] = (0.0, 1.0, 0.0, 1.0)
    coupling: str = "h=1/(2N)"
    k: int = 1
    delta: float = 2.0
    output: Optional[str] = None
    seed: int = 0
    seeds: int = 100
    snapshots: tuple[int, ...] = ()
    dump_tables: bool = False
    kappa_in_flux_term: bool = True


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int(text: str) -> int:
    val = float(text)
    if not val.is_integer():
        raise ValueError(f"not an integer: {text!r}")
    return int(val)


def _parse_list(conv):
    def parse(text: str):
        parts = [p.strip() for p in str(text).split(",") if p.strip()]
        return tuple(conv(p) for p in parts)

    return parse


def _parse_optional_str(text: str):
    text = text.strip()
    return text or None


_CONVERTERS = {
    "command": str.strip,
    "example": _parse_optional_str,
    "alpha": float,
    "gamma": float,
    "nu": float,
    "kappa": float,
    "T": float,
    "N": _parse_list(_parse_int),
    "nx": _parse_int,
    "ny": _parse_int,
    "domain": _parse_list(float),
    "coupling": str.strip,
    "k": _parse_int,
    "delta": float,
    "output": _parse_optional_str,
    "seed": _parse_int,
    "seeds": _parse_int,
    "snapshots": _parse_list(_parse_int),
    "dump_tables": _parse_bool,
    "kappa_in_flux_term": _parse_bool,
}

FIELDS = tuple(f.name for f in dataclasses.fields(RunConfig))


def convert(key: str, raw) -> object:
    if key not in _CONVERTERS:
        raise ConfigError(key, f"unknown key; valid keys: {', '.join(FIELDS)}")
    if not isinstance(raw, str):
        return raw
    try:
        return _CONVERTERS[key](raw)
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def read_config_file(path) -> dict:
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("config", f"{path}:{lineno}: expected 'key = value'")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key in values:
            raise ConfigError(key, f"{path}:{lineno}: duplicate key")
        values[key] = convert(key, raw)
    return values


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: RunConfig) -> str:
    lines = ["# run configuration"]
    for name in FIELDS:
        value = getattr(cfg, name)
        if value is None:
            continue
        lines.append(f"{name} = {_format(value)}")
    return "\n".join(lines) + "\n"


def _need(cfg: dict, key: str, command: str):
    if cfg.get(key) is None:
        raise ConfigError(key, f"required by '{command}'")


def build_config(values: dict) -> RunConfig:
    """Validate merged values and fill derived defaults (``nu``, ``gamma``, case parameters)."""
    from .verification import CASES, get_case

    v = {k: convert(k, val) for k, val in values.items()}
    cmd = v.get("command")
    if cmd not in COMMANDS:
        raise ConfigError("command", f"expected one of {', '.join(COMMANDS)}, got {cmd!r}")

    if cmd in ("solve", "study"):
        if v.get("example") is None:
            raise ConfigError("example", f"required by '{cmd}'; available: {', '.join(sorted(CASES))}")
        try:
            case = get_case(v["example"])
        except ParameterDomainError as exc:
            raise ConfigError("example", str(exc)) from None
        v["example"] = case.name
        if v.get("kappa") is None:
            v["kappa"] = case.kappa
        if v.get("T") is None:
            v["T"] = case.T
        v["domain"] = case.domain
    if cmd in ("solve", "study", "kernels", "gronwall"):
        _need(v, "alpha", cmd)
        if not v.get("N"):
            v["N"] = (32,)
    alpha = v.get("alpha")
    if alpha is not None:
        if not (0 < alpha < 1):
            raise ConfigError("alpha", f"must lie in (0, 1), got {alpha}")
        if v.get("nu") is None:
            v["nu"] = default_nu(alpha)
        if v.get("gamma") is None:
            v["gamma"] = default_gamma(alpha)
    if v.get("nu") is not None and not 0 <= v["nu"] < 0.5:
        raise ConfigError("nu", f"must lie in [0, 1/2), got {v['nu']}")
    if v.get("gamma") is not None and not v["gamma"] >= 1:
        raise ConfigError("gamma", f"must be >= 1, got {v['gamma']}")
    if v.get("kappa") is not None and not 0 < v["kappa"] <= 1:
        raise ConfigError("kappa", f"must lie in (0, 1], got {v['kappa']}")
    if v.get("T") is not None and not (v["T"] > 0 and math.isfinite(v["T"])):
        raise ConfigError("T", f"must be positive, got {v['T']}")
    if any(n < 1 for n in v.get("N", ())):
        raise ConfigError("N", "entries must be positive")
    if cmd == "study" and any(b <= a for a, b in zip(v["N"], v["N"][1:])):
        raise ConfigError("N", "must be increasing")
    if cmd == "solve" and len(v["N"]) != 1:
        raise ConfigError("N", "'solve' takes a single N")
    if v.get("k", 1) not in (0, 1):
        raise ConfigError("k", f"must be 0 or 1, got {v['k']}")
    if not v.get("delta", 2.0) > 1:
        raise ConfigError("delta", f"must exceed 1, got {v['delta']}")
    coupling = v.get("coupling", "h=1/(2N)")
    if coupling not in COUPLINGS:
        raise ConfigError("coupling", f"expected one of {', '.join(COUPLINGS)}")
    for key in ("nx", "ny"):
        if v.get(key) is not None and v[key] < 1:
            raise ConfigError(key, "must be positive")
    if cmd == "mesh-info" or coupling == "fixed":
        _need(v, "nx", cmd if cmd == "mesh-info" else "fixed coupling")
    if cmd == "mesh-info" and v.get("ny") is None:
        v["ny"] = v["nx"]
    dom = v.get("domain", (0.0, 1.0, 0.0, 1.0))
    if len(dom) != 4 or not (dom[1] > dom[0] and dom[3] > dom[2]):
        raise ConfigError("domain", f"expected x0, x1, y0, y1 with x1 > x0 and y1 > y0, got {dom}")
    if v.get("seeds", 100) < 1:
        raise ConfigError("seeds", "must be positive")
    return RunConfig(**v)


def parse_config(argv=None) -> RunConfig:
    from .cli import build_parser

    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    config_path = ns.pop("config", None)
    merged = {}
    if config_path is not None:
        merged.update(read_config_file(config_path))
    file_cmd = merged.get("command")
    if file_cmd is not None and file_cmd != ns["command"]:
        raise ConfigError("command", f"config file says {file_cmd!r} but the command line says {ns['command']!r}")
    merged.update(ns)  # flags override the file
    return build_config(merged)
