"""Command-line driver: ``honeycomb <command> [options]``.

Each command writes CSV data files and a ``manifest.json`` (written last,
atomically) into the output directory and prints its headline scalars.

Exit codes: 0 success, 2 configuration or usage error, 3 solver error,
4 acceptance check failed (with ``--check``).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import platform
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from .config import ConfigError, RunConfig, emit, parse_config

log = logging.getLogger("honeycomb_bie")

COMMANDS = ("band", "dirac", "coeffs", "gap", "nofold", "berry", "interface", "dispersion")
MANIFEST_SCHEMA = {
    "command": "str",
    "config": "object: the full RunConfig as nested sections",
    "versions": "object: python, numpy, scipy, package",
    "wall_clock_s": "float",
    "files": "list of str: data files relative to the output directory",
    "headline": "object: scalar results of the command",
    "checks": "object: check name -> {value, target, pass}; empty without --check",
}


class CheckFailed(RuntimeError):
    pass


# -- output helpers -----------------------------------------------------------------
def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (complex, np.complexfloating)):
        return f"{float(v.real)!r}{float(v.imag):+}j"
    return str(v)


class Output:
    """Collects data files for one run and writes the manifest last."""

    def __init__(self, root: Path):
        self.root = root
        self.files: list[str] = []
        root.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header: list[str], rows) -> None:
        path = self.root / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        self.files.append(name)

    def manifest(self, payload: dict) -> Path:
        path = self.root / "manifest.json"
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".manifest.", suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
        os.replace(tmp, path)
        return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return {"re": o.real, "im": o.imag}
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o)}")


def _versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "package": pkg}


@contextmanager
def _pool(threads: int):
    if threads <= 1:
        yield map
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            yield ex.map


# -- shared setup -------------------------------------------------------------------
def _shape(cfg: RunConfig, eps: float | None = None):
    from .geometry import ObstacleShape

    s = cfg.shape
    return ObstacleShape(s.r0, s.delta3, s.eta, s.eps if eps is None else eps)


def _settings(cfg: RunConfig):
    from .spectrum import SolverSettings

    s = cfg.solver
    return SolverSettings(s.n_nodes, s.ewald_split, s.lam_max, s.cv_tol, s.grid_n)


def _dirac(cfg: RunConfig):
    from .spectrum import locate_dirac

    d = cfg.dirac
    window = None if d.lam_lo is None else (d.lam_lo, d.lam_hi)
    return locate_dirac(_shape(cfg, 0.0), window, _settings(cfg))


def _check(checks: dict, name: str, value, target: str, ok: bool) -> None:
    checks[name] = {"value": value, "target": target, "pass": bool(ok)}


# -- commands -----------------------------------------------------------------------
def _path_points(spec: str):
    from .geometry import BETA1, BETA2, K_POINT

    pts = {"G": np.zeros(2), "M": np.pi * (BETA1 + BETA2), "K": K_POINT, "X": -K_POINT}
    return [pts[c] for c in spec]


def cmd_band(cfg, out, mapper, checks):
    from .spectrum import band_sweep

    b = cfg.band
    corners = _path_points(b.path)
    seg = np.array([np.linalg.norm(q - p) for p, q in zip(corners[:-1], corners[1:])])
    ell = np.linspace(0.0, seg.sum(), b.n_points)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    path = []
    for l in ell:
        k = min(np.searchsorted(cum, l, side="right") - 1, len(seg) - 1)
        t = (l - cum[k]) / seg[k]
        path.append((1 - t) * corners[k] + t * corners[k + 1])
    bs = band_sweep(np.array(path), (b.lam_lo, b.lam_hi), _shape(cfg), _settings(cfg), ell, mapper)
    out.csv("bands.csv", ["px", "py", "ell", "band", "lambda", "residual"], bs.rows())
    return {"n_points": len(ell), "path": b.path, "lambda_min": min(r[4] for r in bs.rows())}


def cmd_dirac(cfg, out, mapper, checks):
    from .spectrum import K_SQ, measure_cone_slope

    d = _dirac(cfg)
    cone = measure_cone_slope(d, (cfg.dirac.radius1, cfg.dirac.radius2), cfg.dirac.n_dirs)
    out.csv("cone_samples.csv", ["angle_rad", "radius", "lambda_minus", "lambda_plus"], cone.samples)
    head = {"lambda_star": d.lambda_star, "multiplicity": 2, "residual": d.residual, "m_star": cone.m_star,
            "anisotropy": cone.anisotropy, "h0_leak": d.h0_leak, "pair_mismatch": d.pair_mismatch}
    _check(checks, "in_window", d.lambda_star, f"[{K_SQ - 3:.4f}, {K_SQ + 3:.4f}]",
           abs(d.lambda_star - K_SQ) <= 3)
    _check(checks, "residual", d.residual, "< 1e-6", d.residual < 1e-6)
    return head


def _coefficients(cfg):
    from .perturb import compute_coefficients

    d = _dirac(cfg)
    return d, compute_coefficients(d, check=False)


def cmd_coeffs(cfg, out, mapper, checks):
    from .perturb import verify_matrix_structure

    d, c = _coefficients(cfg)
    out.csv("coefficients.csv", ["name", "value"], sorted(c.as_dict().items()))
    rep = verify_matrix_structure(c)
    out.csv("structure.csv", ["identity", "relative_deviation", "pass"],
            [(k, v["deviation"], v["pass"]) for k, v in rep.items()])
    for k, v in rep.items():
        _check(checks, k, v["deviation"], "< 1e-3", v["pass"])
    head = c.as_dict()
    head["theta_star_abs"] = abs(c.theta_star)
    return head


def cmd_gap(cfg, out, mapper, checks):
    from .perturb import compare_gap

    d, c = _coefficients(cfg)
    eps = cfg.gap.eps
    rep = compare_gap(c, d, eps)
    out.csv("gap.csv", ["eps", "lambda_1", "lambda_2", "gap"],
            [(e, l1, l2, l2 - l1) for e, (l1, l2) in sorted(rep.measured.items())])
    head = {"eps": eps, "gap": rep.gap(eps), "predicted": rep.predicted, "relative_error": rep.relative_error,
            "ratio_eps_half": rep.ratio, "swap_overlap_plus": rep.swap_overlaps[0],
            "swap_overlap_minus": rep.swap_overlaps[1], "t_star": c.t_star, "gamma_star": c.gamma_star}
    _check(checks, "gap_vs_prediction", rep.relative_error, "< 0.2", rep.relative_error < 0.2)
    _check(checks, "linear_scaling", rep.ratio, "2 +- 0.2", abs(rep.ratio - 2) <= 0.2)
    _check(checks, "swap_overlaps", min(rep.swap_overlaps), "> 0.95", min(rep.swap_overlaps) > 0.95)
    return head


def cmd_nofold(cfg, out, mapper, checks):
    from .geometry import BETA1, BETA2
    from .spectrum import verify_no_fold

    d = _dirac(cfg)
    direction = {"beta1": BETA1, "beta2": BETA2, "beta1a": BETA1 - BETA2}[cfg.nofold.direction]
    rep = verify_no_fold(direction, d.lambda_star, _shape(cfg, 0.0), _settings(cfg), cfg.nofold.n_samples,
                         cfg.nofold.half_window)
    out.csv("nofold.csv", ["ell", "distance_to_lambda_star"], zip(rep.ell, rep.distance))
    out.csv("nofold_touches.csv", ["ell", "distance", "on_K_translate", "on_Kp_translate"], rep.touches)
    stray = [t for t in rep.touches if not (t[2] or t[3])]
    _check(checks, "touches_on_dirac_translates", len(stray), "0", not stray)
    return {"lambda_star": d.lambda_star, "touch_ells": [t[0] for t in rep.touches],
            "n_stray_touches": len(stray)}


def cmd_berry(cfg, out, mapper, checks):
    from .berry import berry_curvature_fhs, bloch_mode_grid, curvature_rows, valley_flux

    d = _dirac(cfg)
    head, F = {"lambda_star": d.lambda_star}, {}
    for sign, tag in ((1, "plus"), (-1, "minus")):
        eps = sign * cfg.berry.eps
        g = bloch_mode_grid(eps, cfg.berry.N, _shape(cfg, 0.0), _settings(cfg), d.lambda_star, mapper=mapper)
        berry_curvature_fhs(g)
        out.csv(f"curvature_{tag}.csv", ["px", "py", "F"], curvature_rows(g))
        F[tag] = g.curvature
        head[f"chern_{tag}"] = g.chern
        head[f"total_flux_{tag}"] = g.total_flux
        head[f"valley_flux_K_{tag}"] = valley_flux(g, "K")
        head[f"valley_flux_Kp_{tag}"] = valley_flux(g, "Kp")
    anti = float(np.max(np.abs(F["plus"] + F["minus"])) / np.max(np.abs(F["plus"])))
    head["antisymmetry"] = anti
    _check(checks, "chern_zero", [head["chern_plus"], head["chern_minus"]], "0",
           head["chern_plus"] == 0 and head["chern_minus"] == 0)
    _check(checks, "antisymmetry", anti, "< 0.1", anti < 0.1)
    vk = [head["valley_flux_K_plus"], head["valley_flux_K_minus"]]
    _check(checks, "valley_flux", vk, "|flux| = pi +- 15%, opposite signs",
           all(abs(abs(v) / math.pi - 1) <= 0.15 for v in vk) and vk[0] * vk[1] < 0)
    return head


def _interface_setup(cfg):
    """Dirac data, interface spec and 0.9-shrunk gap window for the interface commands."""
    from .interface import SupercellSpec, interface_spec
    from .perturb import solve_at_K

    d, c = _coefficients(cfg)
    it = cfg.interface
    kind = it.type if it.type in ("zigzag", "armchair") else tuple(int(t) for t in it.type.split(","))
    ispec = interface_spec(kind)
    k_star = ispec.k_par_star % (2 * np.pi) or 2 * np.pi
    half = abs(c.t_star / c.gamma_star * it.eps)
    _, cvs = solve_at_K(d, abs(it.eps), 3 * half + 1e-3)
    lo, hi = cvs[0].lam, cvs[1].lam
    mid, w = 0.5 * (lo + hi), 0.5 * (hi - lo) * it.shrink
    spec = SupercellSpec(ispec, it.W, abs(it.eps), k_star if it.kpar is None else it.kpar)
    return d, c, spec, k_star, (mid - w, mid + w)


def cmd_interface(cfg, out, mapper, checks):
    from .interface import find_interface_modes

    d, c, spec, k_star, window = _interface_setup(cfg)
    n = cfg.interface.n_nodes or cfg.solver.n_nodes
    modes = find_interface_modes(spec, window, _shape(cfg, 0.0), n, strict=cfg.interface.strict)
    out.csv("modes.csv", ["k_par", "lambda", "wall", "center_cells", "kappa_per_cell", "r2", "residual"],
            [(m.k_par, m.lam, m.wall, m.center, m.kappa, m.r2, m.residual) for m in modes])
    central = [m for m in modes if m.wall == "central"]
    head = {"k_par": spec.k_par, "k_par_star": k_star, "lambda_star": d.lambda_star, "window": list(window),
            "interface_kind": spec.interface.kind, "W": spec.W, "eps": spec.eps,
            "mode_count_central_wall": len(central),
            "mode_count_seam_wall": sum(m.wall == "seam" for m in modes),
            "mode_count_hybrid": sum(m.wall == "hybrid" for m in modes),
            "central_lambdas": [m.lam for m in central], "central_kappas": [m.kappa for m in central]}
    want = 1 if spec.interface.kind == "zigzag" else 2
    _check(checks, "central_mode_count", len(central), str(want), len(central) == want)
    loc = all(m.kappa * spec.W / 2 >= 3 and m.r2 > 0.95 for m in central)
    _check(checks, "localised", [m.kappa for m in central], "kappa W/2 >= 3 and R^2 > 0.95", bool(central) and loc)
    return head


def cmd_dispersion(cfg, out, mapper, checks):
    from .interface import dispersion_sweep

    d, c, spec, k_star, window = _interface_setup(cfg)
    n = cfg.interface.n_nodes or cfg.solver.n_nodes
    dk = cfg.dispersion.k_halfwidth
    if dk is None:
        dk = 0.9 * spec.eps * abs(c.t_star / (c.gamma_star * c.m_star))
    ks = k_star + np.linspace(-dk, dk, cfg.dispersion.n_k)
    two = spec.interface.kind == "armchair"
    res = dispersion_sweep(spec, ks, window, k_star, _shape(cfg, 0.0), n, 2 if two else 1,
                           lam_star=d.lambda_star, mapper=mapper)
    out.csv("dispersion.csv", ["k_par", "lambda", "wall", "center_cells", "kappa_per_cell", "residual"],
            res.rows())
    if two:
        targets = [c.m_star / math.sqrt(3), -c.m_star / math.sqrt(3)]
        tol = 0.25
    else:
        targets = [math.copysign(c.m_star, c.t_star)]
        tol = 0.2
    ratios = [s / t for s, t in zip(res.slopes, targets)]
    head = {"k_par_star": k_star, "k_halfwidth": dk, "slopes": res.slopes, "intercepts": res.intercepts,
            "predicted_slopes": targets, "slope_ratios": ratios, "m_star_coefficients": c.m_star}
    _check(checks, "slopes", ratios, f"1 +- {tol}", all(abs(r - 1) <= tol for r in ratios))
    return head


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


# -- entry point --------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="honeycomb", description="Honeycomb obstacle-lattice band solver")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="key = value file with [section] headers")
    ap.add_argument("--out", default="results", help="output directory (default: results/<command>)")
    ap.add_argument("--threads", type=int, default=None,
                    help="worker threads for independent solves (default: $HONEYCOMB_THREADS or 1)")
    ap.add_argument("--check", action="store_true", help="evaluate acceptance thresholds; exit 4 on failure")
    ap.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                    help="override any config key (repeatable)")
    ap.add_argument("--eps", help="rotation angle for the command (gap, berry, interface, dispersion)")
    ap.add_argument("--eta", help="shape.eta")
    ap.add_argument("--n-nodes", help="solver.n_nodes")
    ap.add_argument("--type", help="interface.type: zigzag, armchair or 'a,b'")
    ap.add_argument("--kpar", help="interface.kpar")
    ap.add_argument("--W", help="interface.W")
    ap.add_argument("--N", help="berry.N")
    ap.add_argument("--emit-config", action="store_true", help="print the resolved config and exit")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _overrides(args) -> dict[str, str]:
    ov = {}
    eps_key = {"gap": "gap.eps", "berry": "berry.eps", "interface": "interface.eps",
               "dispersion": "interface.eps"}.get(args.command, "shape.eps")
    for flag, key in (("eps", eps_key), ("eta", "shape.eta"), ("n_nodes", "solver.n_nodes"),
                      ("type", "interface.type"), ("kpar", "interface.kpar"), ("W", "interface.W"),
                      ("N", "berry.N")):
        v = getattr(args, flag)
        if v is not None:
            ov[key] = v
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        ov[k.strip()] = v.strip()
    return ov


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("HONEYCOMB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"HONEYCOMB_THREADS must be an integer, got {env!r}") from None
    return 1


def run(command: str, cfg: RunConfig, out_dir: Path, threads: int = 1, check: bool = False) -> dict:
    """Execute one command, write its files and manifest, and return the manifest."""
    out = Output(out_dir)
    t0 = time.perf_counter()
    checks: dict = {}
    with _pool(threads) as mapper:
        head = HANDLERS[command](cfg, out, mapper, checks)
    manifest = {"command": command, "config": cfg.as_dict(), "versions": _versions(),
                "wall_clock_s": time.perf_counter() - t0, "files": out.files, "headline": head,
                "checks": checks if check else {}}
    out.manifest(manifest)
    return manifest


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config, _overrides(args))
        threads = _threads(args)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    if args.emit_config:
        print(emit(cfg))
        return 0
    out_dir = Path(args.out)
    if args.out == "results":
        out_dir = out_dir / args.command
    try:
        manifest = run(args.command, cfg, out_dir, threads, args.check)
    except (RuntimeError, ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
        print(f"solver error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    for k, v in manifest["headline"].items():
        print(f"{k} = {v}")
    if args.check:
        bad = [k for k, v in manifest["checks"].items() if not v["pass"]]
        for k, v in manifest["checks"].items():
            print(f"check {k}: {'PASS' if v['pass'] else 'FAIL'} (value {v['value']}, target {v['target']})")
        if bad:
            return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
