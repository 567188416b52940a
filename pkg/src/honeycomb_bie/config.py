"""Run configuration: a line-based ``key = value`` file with ``[section]`` headers.

Every key has a typed default.  Unknown sections or keys, unparsable values
and violated preconditions raise :class:`ConfigError` carrying the key and
line number.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.key, self.line = key, line


@dataclass
class ShapeSection:
    r0: float = 0.3
    delta3: float = 0.2
    eta: float = 0.6
    eps: float = 0.0


@dataclass
class SolverSection:
    n_nodes: int = 96
    cv_tol: float = 1e-6
    grid_n: int = 160
    ewald_split: float = 3.0
    lam_max: float = 40.0


@dataclass
class BandSection:
    path: str = "GMKG"
    n_points: int = 31
    lam_lo: float = 0.5
    lam_hi: float = 35.0


@dataclass
class DiracSection:
    lam_lo: float | None = None  # auto: window from the leading-order shift
    lam_hi: float | None = None
    radius1: float = 0.02
    radius2: float = 0.04
    n_dirs: int = 8


@dataclass
class GapSection:
    eps: float = 0.05


@dataclass
class NoFoldSection:
    direction: str = "beta1"
    n_samples: int = 48
    half_window: float = 2.0


@dataclass
class BerrySection:
    N: int = 12
    eps: float = 0.05


@dataclass
class InterfaceSection:
    type: str = "zigzag"
    W: int = 10
    eps: float = 0.05
    kpar: float | None = None  # auto: the interface's Dirac projection
    n_nodes: int = 0  # 0: use solver.n_nodes
    shrink: float = 0.9
    strict: bool = False


@dataclass
class DispersionSection:
    n_k: int = 9
    k_halfwidth: float | None = None  # auto: 0.9 eps |t*/(gamma* m*)|, inside the gap along the cone


@dataclass
class RunConfig:
    shape: ShapeSection = field(default_factory=ShapeSection)
    solver: SolverSection = field(default_factory=SolverSection)
    band: BandSection = field(default_factory=BandSection)
    dirac: DiracSection = field(default_factory=DiracSection)
    gap: GapSection = field(default_factory=GapSection)
    nofold: NoFoldSection = field(default_factory=NoFoldSection)
    berry: BerrySection = field(default_factory=BerrySection)
    interface: InterfaceSection = field(default_factory=InterfaceSection)
    dispersion: DispersionSection = field(default_factory=DispersionSection)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


SECTIONS = [f.name for f in fields(RunConfig)]


def _convert(raw: str, typ, key: str, line: int | None):
    if typ.endswith("| None"):
        if raw.strip().lower() == "auto":
            return None
        typ = typ.split("|")[0].strip()
    typ = {"float": float, "int": int, "str": str, "bool": bool}.get(typ, typ)
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        return typ(raw)
    except ValueError:
        raise ConfigError(f"cannot parse {raw!r} as {typ.__name__}", key, line) from None


def _format(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, float):
        return repr(v)
    return str(v).lower() if isinstance(v, bool) else str(v)


def emit(cfg: RunConfig) -> str:
    """Text form of ``cfg`` that :func:`parse_text` reads back unchanged."""
    out = []
    for sec in SECTIONS:
        out.append(f"[{sec}]")
        obj = getattr(cfg, sec)
        for f in fields(obj):
            out.append(f"{f.name} = {_format(getattr(obj, f.name))}")
        out.append("")
    return "\n".join(out)


def set_value(cfg: RunConfig, dotted: str, raw: str, line: int | None = None) -> None:
    """Assign ``section.key = raw`` with type conversion."""
    if "." not in dotted:
        raise ConfigError("expected section.key", dotted, line)
    sec, key = dotted.split(".", 1)
    if sec not in SECTIONS:
        raise ConfigError(f"unknown section [{sec}]", dotted, line)
    obj = getattr(cfg, sec)
    types = {f.name: f.type for f in fields(obj)}
    if key not in types:
        raise ConfigError(f"unknown key in [{sec}]", key, line)
    setattr(obj, key, _convert(raw, types[key], key, line))


def _parse(text: str) -> tuple[RunConfig, dict[str, int]]:
    cfg = RunConfig()
    lines: dict[str, int] = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.split("#", 1)[0].strip()
        if not s:
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", None, no)
            continue
        if "=" not in s:
            raise ConfigError("expected 'key = value'", None, no)
        key, val = (t.strip() for t in s.split("=", 1))
        if section is None:
            raise ConfigError("key outside of a [section]", key, no)
        set_value(cfg, f"{section}.{key}", val, no)
        lines[f"{section}.{key}"] = no
    return cfg, lines


def parse_text(text: str) -> RunConfig:
    cfg, lines = _parse(text)
    validate(cfg, lines)
    return cfg


def parse_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Read ``path`` (defaults only if ``None``), apply ``section.key`` overrides and validate."""
    cfg, lines = RunConfig(), {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file not found: {p}")
        cfg, lines = _parse(p.read_text())
    for k, v in (overrides or {}).items():
        set_value(cfg, k, v)
    validate(cfg, lines)
    return cfg


def validate(cfg: RunConfig, lines: dict[str, int] | None = None) -> None:
    """Check preconditions of the downstream operations before any solve."""
    lines = lines or {}

    def fail(key: str, msg: str):
        raise ConfigError(msg, key, lines.get(key))

    sh, so = cfg.shape, cfg.solver
    if not 0 < sh.eta <= 1:
        fail("shape.eta", "eta must lie in (0, 1]")
    if sh.r0 <= 0:
        fail("shape.r0", "r0 must be positive")
    if sh.r0 * sh.eta * (1 + abs(sh.delta3)) >= 0.5:
        fail("shape.r0", "obstacle does not fit in the cell: r0 eta (1 + |delta3|) must be < 0.5")
    for key, n in (("solver.n_nodes", so.n_nodes), ("interface.n_nodes", cfg.interface.n_nodes)):
        if key == "interface.n_nodes" and n == 0:
            continue
        if n % 6 or n < 24:
            fail(key, f"n_nodes must be divisible by 6 and at least 24, got {n}")
    if so.cv_tol <= 0:
        fail("solver.cv_tol", "cv_tol must be positive")
    if so.grid_n < 16:
        fail("solver.grid_n", "grid_n must be at least 16")
    if so.ewald_split <= 0:
        fail("solver.ewald_split", "ewald_split must be positive")
    if so.lam_max <= 0:
        fail("solver.lam_max", "lam_max must be positive")
    b = cfg.band
    if not set(b.path) <= set("GMKX") or len(b.path) < 2:
        fail("band.path", "path is a string over G, M, K, X (X = K') with at least two points")
    if b.n_points < 2:
        fail("band.n_points", "n_points must be at least 2")
    if not 0 < b.lam_lo < b.lam_hi <= so.lam_max:
        fail("band.lam_hi", "need 0 < lam_lo < lam_hi <= solver.lam_max")
    d = cfg.dirac
    if (d.lam_lo is None) != (d.lam_hi is None):
        fail("dirac.lam_hi", "set both lam_lo and lam_hi, or both to auto")
    if d.lam_lo is not None and not 0 < d.lam_lo < d.lam_hi:
        fail("dirac.lam_hi", "need 0 < lam_lo < lam_hi")
    if not 0 < d.radius1 < d.radius2:
        fail("dirac.radius2", "need 0 < radius1 < radius2")
    if d.n_dirs < 3:
        fail("dirac.n_dirs", "n_dirs must be at least 3")
    if cfg.gap.eps == 0:
        fail("gap.eps", "eps must be nonzero")
    if cfg.nofold.direction not in ("beta1", "beta2", "beta1a"):
        fail("nofold.direction", "direction must be beta1, beta2 or beta1a")
    if cfg.nofold.n_samples < 8:
        fail("nofold.n_samples", "n_samples must be at least 8")
    if cfg.berry.N < 3:
        fail("berry.N", "N must be at least 3")
    if cfg.berry.eps == 0:
        fail("berry.eps", "eps must be nonzero")
    it = cfg.interface
    if it.W % 2 or it.W < 6:
        fail("interface.W", f"W must be even and at least 6, got {it.W}")
    if it.eps == 0:
        fail("interface.eps", "eps must be nonzero")
    if not 0 < it.shrink <= 1:
        fail("interface.shrink", "shrink must lie in (0, 1]")
    if it.type not in ("zigzag", "armchair"):
        try:
            a, b2 = (int(t) for t in it.type.split(","))
        except ValueError:
            fail("interface.type", "type is zigzag, armchair or 'a,b' with coprime integers")
        if math.gcd(a, b2) != 1:
            fail("interface.type", f"({a},{b2}) is not primitive")
    if cfg.dispersion.k_halfwidth is not None and cfg.dispersion.k_halfwidth <= 0:
        fail("dispersion.k_halfwidth", "k_halfwidth must be positive")
    if cfg.dispersion.n_k < 2:
        fail("dispersion.n_k", "n_k must be at least 2")
