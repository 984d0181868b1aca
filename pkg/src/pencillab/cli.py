"""Command line front end: job loading, dispatch, deterministic JSON
reports, and CSV/OBJ point-cloud emission.

Exit codes: 0 all checks passed, 1 computation finished with a failing
verdict, 2 usage or configuration error, 3 numerical failure, 4 output IO
failure. Reports are canonical JSON (17 significant digits, fixed key
order), so one (config, seed) pair always produces identical bytes.
"""

from __future__ import annotations

import argparse
import ast
import json
import math
import re
import sys
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from ._num import canonical_json, sobol_unit_sphere, to_complex, to_real
from .errors import (NUMERICAL_FAILURES, GermSyntaxError, PencilLabError,
                     ProjectionFailure)
from .flows import (FlowKind, FlowSpec, equivalence_transport, integrate,
                    monodromy_return)
from .germ import MixedGerm, evaluate, format_germ, parse_germ
from .pencil import (h_theta, pointcloud_rows, sample_fiber,
                     stereographic_project)
from .regularity import (critical_value_isolation_scan, d_regularity_search,
                         radial_lambda_scan, strong_milnor_check,
                         tube_sphere_transversality)
from .topology import (closed_form_mu, double_fiber_consistency,
                       link_surface_euler, staircase_mu)

TWO_PI = 2.0 * math.pi

COMMANDS = ("info", "dreg", "milnor-diag", "strong-milnor", "tube-check",
            "crit-scan", "flow", "monodromy", "equivalence", "euler", "mu",
            "double-check", "sample-link")

FLOW_KINDS = {"monodromy": FlowKind.MONODROMY, "radial": FlowKind.RADIAL,
              "tube": FlowKind.TUBE_EQUIVALENCE}

# every job field with its materialized default; config files may set any
# of these, explicit flags win over file values
DEFAULTS = {
    "command": None,
    "germ": None,
    "n": None,
    "exponents": None,
    "radius": 0.5,
    "eta": None,
    "theta": 0.0,
    "budget": 10000,
    "polish": 20,
    "count": 50,
    "revolutions": 1.0,
    "kind": "monodromy",
    "start": None,
    "direction": None,
    "t0": 0.0,
    "t1": None,
    "seed": 0,
    "newton_tol": 1e-10,
    "rtol": 1e-10,
    "atol": 1e-12,
    "batch": 200,
    "stability": 20,
    "redraws": 10,
    "metric": None,
    "pole": None,
    "report": None,
    "out": None,
}


class UsageError(Exception):
    """Configuration problem; carries the offending field name."""

    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field


# ---------------------------------------------------------------------------
# flag and config parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pencillab",
        description="numerical pencil, transversality, flow and link "
                    "topology checks for polynomial map-germs",
        epilog="commands: " + ", ".join(COMMANDS))
    p.add_argument("command", nargs="?", default=None,
                   help="job command (may also come from --config)")
    p.add_argument("--config", default=None,
                   help="JSON job file; explicit flags override its values")
    p.add_argument("--germ", default=None,
                   help="expression like 'z1^2+z2^3' (zbar1 = conjugate) "
                        "or inline germ JSON")
    p.add_argument("--n", type=int, default=None,
                   help="number of complex variables (inferred when omitted)")
    p.add_argument("--exponents", default=None,
                   help="comma separated power-sum exponents, e.g. 2,3,5")
    p.add_argument("--radius", type=float, default=None,
                   help="sphere radius (default 0.5)")
    p.add_argument("--eta", type=float, default=None,
                   help="tube level |f| = eta (default 1e-3 of the germ "
                        "scale at the radius)")
    p.add_argument("--theta", default=None,
                   help="pencil angle; accepts 'pi/2' style expressions")
    p.add_argument("--budget", type=int, default=None,
                   help="sample or seed budget (default 10000)")
    p.add_argument("--polish", type=int, default=None,
                   help="local polish runs for dreg (default 20)")
    p.add_argument("--count", type=int, default=None,
                   help="starts or output points (default 50)")
    p.add_argument("--revolutions", type=float, default=None,
                   help="phase revolutions for monodromy (default 1)")
    p.add_argument("--kind", default=None, choices=sorted(FLOW_KINDS),
                   help="field kind for the flow command")
    p.add_argument("--start", default=None,
                   help="start point, 2n reals: real parts then imaginary")
    p.add_argument("--direction", default=None,
                   help="scan direction, 2n reals (milnor-diag)")
    p.add_argument("--t0", type=float, default=None, help="flow start time")
    p.add_argument("--t1", type=float, default=None,
                   help="flow end time (default depends on the kind)")
    p.add_argument("--seed", type=int, default=None,
                   help="64-bit job seed (default 0)")
    p.add_argument("--newton-tol", dest="newton_tol", type=float,
                   default=None, help="projection tolerance (default 1e-10)")
    p.add_argument("--rtol", type=float, default=None,
                   help="integrator relative tolerance (default 1e-10)")
    p.add_argument("--atol", type=float, default=None,
                   help="integrator absolute tolerance (default 1e-12)")
    p.add_argument("--batch", type=int, default=None,
                   help="seed batch size for euler (default 200)")
    p.add_argument("--stability", type=int, default=None,
                   help="quiet batches required by euler (default 20)")
    p.add_argument("--redraws", type=int, default=None,
                   help="functional redraw limit for euler (default 10)")
    p.add_argument("--metric", default=None,
                   help="JSON 2n x 2n positive definite matrix for dreg")
    p.add_argument("--pole", default=None,
                   help="stereographic pole, 2n reals (sample-link)")
    p.add_argument("--report", default=None,
                   help="report JSON path (stdout when omitted)")
    p.add_argument("--out", default=None,
                   help="point-cloud or trace base path")
    p.add_argument("--version", action="version",
                   version=f"pencillab {__version__}")
    return p


def parse_angle(text) -> float:
    """Angle literal: a float, or an arithmetic expression over 'pi'."""
    if isinstance(text, (int, float)):
        return float(text)
    try:
        node = ast.parse(str(text).strip(), mode="eval").body
    except SyntaxError as exc:
        raise ValueError(f"bad angle {text!r}") from exc

    def ev(nd):
        if isinstance(nd, ast.Constant) and isinstance(nd.value, (int, float)):
            return float(nd.value)
        if isinstance(nd, ast.Name) and nd.id == "pi":
            return math.pi
        if isinstance(nd, ast.UnaryOp) and isinstance(nd.op, (ast.USub,
                                                              ast.UAdd)):
            v = ev(nd.operand)
            return -v if isinstance(nd.op, ast.USub) else v
        if isinstance(nd, ast.BinOp) and isinstance(
                nd.op, (ast.Add, ast.Sub, ast.Mult, ast.Div)):
            a, b = ev(nd.left), ev(nd.right)
            if isinstance(nd.op, ast.Add):
                return a + b
            if isinstance(nd.op, ast.Sub):
                return a - b
            if isinstance(nd.op, ast.Mult):
                return a * b
            return a / b
        raise ValueError(f"bad angle {text!r}")

    return ev(node)


def _float_list(value, field: str) -> List[float]:
    if isinstance(value, (list, tuple)):
        items = list(value)
    else:
        items = [s for s in str(value).split(",") if s.strip()]
    try:
        return [float(v) for v in items]
    except (TypeError, ValueError) as exc:
        raise UsageError(field, f"expected a list of reals, got {value!r}") \
            from exc


def _int_list(value, field: str) -> List[int]:
    if isinstance(value, (list, tuple)):
        items = list(value)
    else:
        items = [s for s in str(value).split(",") if s.strip()]
    out = []
    for v in items:
        try:
            iv = int(v)
        except (TypeError, ValueError) as exc:
            raise UsageError(field,
                             f"expected integers, got {value!r}") from exc
        out.append(iv)
    return out


def load_job(args: argparse.Namespace
             ) -> Tuple[dict, Optional[dict], Dict[str, object]]:
    """Merge config-file values and explicit flags over the defaults.

    Returns (resolved config, raw file values or None, flag overrides).
    """
    file_vals: Optional[dict] = None
    if args.config is not None:
        try:
            with open(args.config) as fh:
                file_vals = json.load(fh)
        except OSError as exc:
            raise UsageError("config", f"cannot read {args.config}: {exc}")
        except json.JSONDecodeError as exc:
            raise UsageError("config", f"invalid JSON: {exc}")
        if not isinstance(file_vals, dict):
            raise UsageError("config", "job file must hold a JSON object")
        for key in file_vals:
            if key not in DEFAULTS:
                raise UsageError(str(key), "unknown config field")

    overrides: Dict[str, object] = {}
    for key in DEFAULTS:
        if key == "command":
            if args.command is not None:
                overrides[key] = args.command
        elif hasattr(args, key) and getattr(args, key) is not None:
            overrides[key] = getattr(args, key)

    cfg = dict(DEFAULTS)
    if file_vals:
        cfg.update(file_vals)
    cfg.update(overrides)
    _normalize(cfg)
    _validate(cfg)
    return cfg, file_vals, overrides


def _normalize(cfg: dict) -> None:
    try:
        cfg["theta"] = parse_angle(cfg["theta"])
    except ValueError as exc:
        raise UsageError("theta", str(exc))
    if cfg["exponents"] is not None:
        cfg["exponents"] = _int_list(cfg["exponents"], "exponents")
    for key in ("start", "direction", "pole"):
        if cfg[key] is not None:
            cfg[key] = _float_list(cfg[key], key)
    if cfg["metric"] is not None and not isinstance(cfg["metric"], list):
        try:
            cfg["metric"] = json.loads(str(cfg["metric"]))
        except json.JSONDecodeError as exc:
            raise UsageError("metric", f"invalid JSON: {exc}")
    for key in ("radius", "eta", "revolutions", "t0", "newton_tol", "rtol",
                "atol"):
        if cfg[key] is not None:
            cfg[key] = float(cfg[key])
    if cfg["t1"] is not None:
        cfg["t1"] = float(cfg["t1"])
    for key in ("budget", "polish", "count", "seed", "batch", "stability",
                "redraws"):
        if cfg[key] is not None:
            try:
                cfg[key] = int(cfg[key])
            except (TypeError, ValueError):
                raise UsageError(key, f"expected an integer, "
                                      f"got {cfg[key]!r}")
    if cfg["n"] is not None:
        cfg["n"] = int(cfg["n"])


def _validate(cfg: dict) -> None:
    cmd = cfg["command"]
    if cmd is None:
        raise UsageError("command", "no command given (positional argument "
                                    "or 'command' in the job file)")
    if cmd not in COMMANDS:
        raise UsageError("command", f"unknown command {cmd!r}; expected one "
                                    f"of {', '.join(COMMANDS)}")
    if cmd == "mu":
        if not cfg["exponents"]:
            raise UsageError("exponents", "mu needs --exponents")
        if any(a < 2 for a in cfg["exponents"]):
            raise UsageError("exponents", "all exponents must be at least 2")
    elif cfg["germ"] is None:
        raise UsageError("germ", f"{cmd} needs a germ")
    if not (math.isfinite(cfg["radius"]) and cfg["radius"] > 0):
        raise UsageError("radius", "radius must be a positive real")
    if cfg["budget"] <= 0:
        raise UsageError("budget", "budget must be a positive integer")
    if cfg["count"] <= 0:
        raise UsageError("count", "count must be a positive integer")
    if cfg["polish"] < 0:
        raise UsageError("polish", "polish must be non-negative")
    for key in ("batch", "stability", "redraws"):
        if cfg[key] <= 0:
            raise UsageError(key, f"{key} must be a positive integer")
    if not 0 <= cfg["seed"] < 2 ** 64:
        raise UsageError("seed", "seed must fit in 64 bits")
    for key in ("newton_tol", "rtol", "atol"):
        if not (math.isfinite(cfg[key]) and cfg[key] > 0):
            raise UsageError(key, f"{key} must be a positive real")
    if cfg["eta"] is not None:
        if not (math.isfinite(cfg["eta"]) and cfg["eta"] > 0):
            raise UsageError("eta", "eta must be a positive real")
        if cmd == "tube-check" and cfg["eta"] >= cfg["radius"]:
            raise UsageError("eta", "eta must be below the sphere radius")
    if cfg["kind"] not in FLOW_KINDS:
        raise UsageError("kind", f"unknown flow kind {cfg['kind']!r}")
    for key in ("revolutions", "t0"):
        if not math.isfinite(cfg[key]):
            raise UsageError(key, f"{key} must be finite")
    if cfg["t1"] is not None and not math.isfinite(cfg["t1"]):
        raise UsageError("t1", "t1 must be finite")
    if not math.isfinite(cfg["theta"]):
        raise UsageError("theta", "theta must be finite")


def resolve_germ(cfg: dict) -> MixedGerm:
    value = cfg["germ"]
    if isinstance(value, dict):
        try:
            return MixedGerm.from_json_dict(value)
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError("germ", f"bad germ JSON: {exc}")
    text = str(value).strip()
    if text.startswith("{"):
        try:
            return MixedGerm.from_json_dict(json.loads(text))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise UsageError("germ", f"bad germ JSON: {exc}")
    n = cfg["n"]
    if n is None:
        seen = [int(m) for m in re.findall(r"z(?:bar)?(\d+)", text)]
        if not seen:
            raise UsageError("germ", "no variables found in the expression")
        n = max(seen)
    if n < 1:
        raise UsageError("n", "n must be at least 1")
    try:
        return parse_germ(text, n)
    except GermSyntaxError as exc:
        raise UsageError("germ", str(exc))
    except ValueError as exc:
        raise UsageError("germ", str(exc))


def _resolve_point(cfg: dict, field: str, n: int) -> np.ndarray:
    vals = cfg[field]
    if len(vals) != 2 * n:
        raise UsageError(field, f"expected {2 * n} reals (real parts then "
                                f"imaginary), got {len(vals)}")
    return to_complex(np.asarray(vals, dtype=float))


def _resolve_metric(cfg: dict, n: int) -> Optional[np.ndarray]:
    if cfg["metric"] is None:
        return None
    Q = np.asarray(cfg["metric"], dtype=float)
    dim = 2 * n
    if Q.shape != (dim, dim):
        raise UsageError("metric", f"expected a {dim}x{dim} matrix")
    if not np.allclose(Q, Q.T, rtol=0.0, atol=1e-12 * max(1.0,
                                                          np.abs(Q).max())):
        raise UsageError("metric", "matrix must be symmetric")
    try:
        np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        raise UsageError("metric", "matrix must be positive definite")
    return Q


def _default_eta(cfg: dict, germ: MixedGerm) -> float:
    if cfg["eta"] is not None:
        return cfg["eta"]
    return 1e-3 * germ.scale(cfg["radius"])


# ---------------------------------------------------------------------------
# point-cloud emission
# ---------------------------------------------------------------------------

def _out_base(cfg: dict, fallback: str) -> str:
    base = cfg["out"] if cfg["out"] else fallback
    return re.sub(r"\.(csv|obj)$", "", str(base))


def _write_csv(path: str, germ: MixedGerm, Z: np.ndarray) -> int:
    rows = pointcloud_rows(germ, Z)
    n2 = 2 * germ.n
    header = ",".join([f"x{j}" for j in range(n2)] + ["theta", "norm",
                                                      "absf"])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")
    return len(rows)


def _write_obj(path: str, Y: np.ndarray) -> int:
    with open(path, "w") as fh:
        fh.write("# stereographic point cloud\n")
        for row in Y:
            fh.write("v " + " ".join(format(v, ".17g") for v in row) + "\n")
    return len(Y)


def _resolve_pole(germ: MixedGerm, theta: float, radius: float,
                  pole_cfg: Optional[List[float]], X: np.ndarray,
                  surface_test: bool) -> Tuple[np.ndarray, bool]:
    """Pole on the sampling sphere, pushed off the surface if it sits on it.

    'On the surface' means either the member function vanishes at the pole
    (so the sampled set passes through it) or a sampled point lies near it;
    both break the projection, so the pole is rotated by a deterministic
    tangent step until clear.
    """
    dim = 2 * germ.n
    if pole_cfg is None:
        pole = np.zeros(dim)
        pole[-1] = radius
    else:
        p = np.asarray(pole_cfg, dtype=float)
        nrm = float(np.linalg.norm(p))
        if nrm == 0.0:
            raise UsageError("pole", "pole must be nonzero")
        pole = radius * p / nrm
    scale_h = max(germ.scale(radius), 1e-300)
    r2 = radius * radius

    def on_surface(p: np.ndarray) -> bool:
        if len(X):
            denom = 1.0 - (X @ p) / r2
            if float(np.min(np.abs(denom))) < 1e-3:
                return True
        if surface_test:
            h = float(np.atleast_1d(
                h_theta(germ, theta, to_complex(p[None, :])))[0])
            if abs(h) < 1e-3 * scale_h:
                return True
        return False

    if not on_surface(pole):
        return pole, False
    M = np.concatenate([pole[:, None], np.eye(dim)], axis=1)
    Qb, _ = np.linalg.qr(M)
    tangent = Qb[:, 1]
    angle = 0.05
    cand = pole
    for _ in range(10):
        cand = pole + angle * radius * tangent
        cand = radius * cand / float(np.linalg.norm(cand))
        if not on_surface(cand):
            break
        angle *= 2.0
    return cand, True


def _emit_cloud(cfg: dict, germ: MixedGerm, Z: np.ndarray, base: str,
                warnings: List[str], surface_test: bool) -> dict:
    files: dict = {}
    csv_path = base + ".csv"
    files["csv"] = csv_path
    files["csv_rows"] = _write_csv(csv_path, germ, Z)
    if germ.n == 2:
        X = to_real(Z)
        pole, perturbed = _resolve_pole(germ, cfg["theta"], cfg["radius"],
                                        cfg["pole"], X, surface_test)
        if perturbed:
            warnings.append("projection pole lies on the sampled surface; "
                            "auto-perturbed")
        Y = stereographic_project(X, pole, cfg["radius"])
        obj_path = base + ".obj"
        files["obj"] = obj_path
        files["obj_vertices"] = _write_obj(obj_path, Y)
        files["pole"] = [float(v) for v in pole]
        files["pole_perturbed"] = perturbed
    return files


# ---------------------------------------------------------------------------
# start-point sampling shared by flow commands
# ---------------------------------------------------------------------------

def _fiber_starts(germ: MixedGerm, theta: float, radius: float, quota: int,
                  seed: int, newton_tol: float) -> np.ndarray:
    pts: List[np.ndarray] = []
    for k in range(50):
        if len(pts) >= quota:
            break
        want = max(2 * (quota - len(pts)), 64)
        fs = sample_fiber(germ, theta, radius, want, seed + 7919 * k,
                          newton_tol=min(newton_tol, 1e-12))
        for p in fs.points:
            pts.append(p)
            if len(pts) == quota:
                break
    if len(pts) < quota:
        raise ProjectionFailure(
            f"collected {len(pts)}/{quota} fiber start points")
    return np.asarray(pts, dtype=complex)


def _sphere_starts(germ: MixedGerm, radius: float, eta: float, quota: int,
                   seed: int) -> np.ndarray:
    floor = max(2.0 * eta, germ.f_floor(radius))
    for factor in (8, 32, 128):
        U = sobol_unit_sphere(seed, (0xE9, 0), factor * quota, 2 * germ.n)
        Z = to_complex(radius * U)
        absf = np.abs(evaluate(germ, Z))
        keep = Z[absf > floor]
        if len(keep) >= quota:
            return keep[:quota]
    raise ProjectionFailure(
        f"collected {len(keep)}/{quota} sphere start points off the tube")


# ---------------------------------------------------------------------------
# command implementations; each returns (result, passed)
# ---------------------------------------------------------------------------

def _cmd_info(cfg, germ, warnings):
    r = cfg["radius"]
    return {
        "germ": format_germ(germ),
        "n": germ.n,
        "terms": len(germ.terms),
        "degree": germ.degree,
        "holomorphic": germ.is_holomorphic,
        "scale_at_radius": germ.scale(r),
        "axis_floor": germ.axis_floor(r),
        "f_floor": germ.f_floor(r),
    }, True


def _cmd_dreg(cfg, germ, warnings):
    Q = _resolve_metric(cfg, germ.n)
    rep = d_regularity_search(
        germ, cfg["radius"], Q=Q, budget=cfg["budget"], seed=cfg["seed"],
        polish_runs=cfg["polish"], newton_tol=cfg["newton_tol"])
    return rep.to_json_dict(), rep.verdict is True


def _cmd_milnor_diag(cfg, germ, warnings):
    if not germ.is_holomorphic:
        raise UsageError("germ", "the phase-colinearity diagnostic needs a "
                                 "holomorphic germ")
    rep = d_regularity_search(
        germ, cfg["radius"], budget=cfg["budget"], seed=cfg["seed"],
        polish_runs=0, newton_tol=cfg["newton_tol"], collect_milnor=True)
    result = {"samples": dict(rep.milnor or {})}
    ok = (rep.milnor or {}).get("violations", 0) == 0
    if cfg["direction"] is not None:
        d = _resolve_point(cfg, "direction", germ.n)
        radii = [cfg["radius"] * 2.0 ** (-k) for k in range(12)]
        entries = radial_lambda_scan(germ, d, radii)
        result["radial"] = [
            {"radius": e.radius, "colinearity": e.colinearity,
             "arg": e.arg_lambda_prime, "error": e.error}
            for e in entries]
        for e in entries:
            if (e.error is None and e.colinearity is not None
                    and e.colinearity < 0.01
                    and abs(e.arg_lambda_prime) >= math.pi / 4 - 0.05):
                ok = False
    return result, bool(ok)


def _cmd_strong_milnor(cfg, germ, warnings):
    rep = strong_milnor_check(germ, cfg["radius"], budget=cfg["budget"],
                              seed=cfg["seed"],
                              newton_tol=cfg["newton_tol"])
    return rep.to_json_dict(), rep.verdict is True


def _cmd_tube_check(cfg, germ, warnings):
    eta = _default_eta(cfg, germ)
    if eta >= cfg["radius"]:
        raise UsageError("eta", "eta must be below the sphere radius")
    rep = tube_sphere_transversality(germ, cfg["radius"], eta,
                                     budget=cfg["budget"], seed=cfg["seed"])
    return rep.to_json_dict(), rep.verdict is True


def _cmd_crit_scan(cfg, germ, warnings):
    rep = critical_value_isolation_scan(germ, cfg["radius"],
                                        budget=cfg["budget"],
                                        seed=cfg["seed"],
                                        newton_tol=cfg["newton_tol"])
    return rep.to_json_dict(), rep.verdict is True


def _flow_start(cfg, germ) -> np.ndarray:
    if cfg["start"] is not None:
        return _resolve_point(cfg, "start", germ.n)
    return _fiber_starts(germ, cfg["theta"], cfg["radius"], 1, cfg["seed"],
                         cfg["newton_tol"])[0]


def _cmd_flow(cfg, germ, warnings):
    kind = FLOW_KINDS[cfg["kind"]]
    spec = FlowSpec(kind=kind, rtol=cfg["rtol"], atol=cfg["atol"])
    x0 = _flow_start(cfg, germ)
    t0 = cfg["t0"]
    t1 = cfg["t1"]
    eta = None
    if t1 is None:
        if kind is FlowKind.MONODROMY:
            t1 = t0 + TWO_PI * cfg["revolutions"]
        elif kind is FlowKind.RADIAL:
            r0 = float(np.linalg.norm(to_real(np.asarray(x0)[None, :])[0]))
            t1 = t0 - 0.75 * r0 * r0
        else:
            eta = _default_eta(cfg, germ)
            f0 = abs(complex(evaluate(germ, np.asarray(x0))))
            if f0 <= eta:
                raise UsageError("eta", "start point has |f| at or below "
                                        "the tube level")
            t1 = t0 + math.log(eta / f0)
    trace = integrate(germ, spec, x0, (t0, t1))
    result = {
        "kind": cfg["kind"],
        "start": [c for z in np.atleast_1d(x0)
                  for c in (z.real, z.imag)],
        "t0": t0,
        "t1": t1,
        "eta": eta,
        "n_accepted": trace.n_accepted,
        "n_rejected": trace.n_rejected,
        "fallback_steps": trace.fallback_steps,
        "corrected_steps": trace.corrected_steps,
        "max_cond": trace.max_cond,
        "drift": dict(trace.drift),
        "termination": trace.termination,
        "endpoint": [c for z in np.atleast_1d(trace.points[-1])
                     for c in (z.real, z.imag)],
        "theta_advance": float(trace.theta[-1] - trace.theta[0]),
    }
    if cfg["out"]:
        path = _out_base(cfg, "pencillab-flow") + ".csv"
        trace.to_csv(path)
        result["csv"] = path
        result["csv_rows"] = trace.n_accepted
    return result, trace.termination in ("completed", "empty-span")


def _cmd_monodromy(cfg, germ, warnings):
    spec = FlowSpec(kind=FlowKind.MONODROMY, rtol=cfg["rtol"],
                    atol=cfg["atol"])
    if cfg["start"] is not None:
        starts = _resolve_point(cfg, "start", germ.n)[None, :]
    else:
        starts = _fiber_starts(germ, cfg["theta"], cfg["radius"],
                               cfg["count"], cfg["seed"], cfg["newton_tol"])
    revolutions = cfg["revolutions"]
    integral = abs(revolutions - round(revolutions)) < 1e-12
    half = abs((revolutions % 1.0) - 0.5) < 1e-12
    records = []
    ok = True
    max_dn = 0.0
    max_df = 0.0
    for z0 in starts:
        ret = monodromy_return(germ, z0, revolutions=revolutions, spec=spec)
        max_dn = max(max_dn, ret.drift_norm)
        max_df = max(max_df, ret.drift_absf_rel)
        rec = {
            "start": [c for z in np.atleast_1d(z0)
                      for c in (z.real, z.imag)],
            "endpoint": [c for z in ret.endpoint
                         for c in (z.real, z.imag)],
            "winding": ret.winding,
            "theta_advance": ret.theta_advance,
            "drift_norm": ret.drift_norm,
            "drift_absf_rel": ret.drift_absf_rel,
            "half_side_flipped": ret.half_side_flipped,
        }
        records.append(rec)
        if ret.drift_norm >= 1e-6 * cfg["radius"]:
            ok = False
        if ret.drift_absf_rel >= 1e-6:
            ok = False
        if integral and ret.winding != int(round(revolutions)):
            ok = False
        if half and ret.half_side_flipped is not True:
            ok = False
    result = {
        "revolutions": revolutions,
        "starts": len(starts),
        "max_drift_norm": max_dn,
        "max_drift_absf_rel": max_df,
        "records": records,
    }
    return result, ok


def _cmd_equivalence(cfg, germ, warnings):
    eta = _default_eta(cfg, germ)
    spec = FlowSpec(kind=FlowKind.TUBE_EQUIVALENCE, rtol=cfg["rtol"],
                    atol=cfg["atol"], max_step=0.25)
    if cfg["start"] is not None:
        starts = _resolve_point(cfg, "start", germ.n)[None, :]
    else:
        starts = _sphere_starts(germ, cfg["radius"], eta, cfg["count"],
                                cfg["seed"])
    records = equivalence_transport(germ, cfg["radius"], eta, starts,
                                    spec=spec)
    succeeded = sum(1 for r in records if r.success)
    drifts = [abs(r.theta_drift) for r in records if r.success]
    result = {
        "eta": eta,
        "count": len(records),
        "succeeded": succeeded,
        "max_theta_drift": max(drifts) if drifts else None,
        "records": [
            {"start": [c for z in r.start for c in (z.real, z.imag)],
             "end": [c for z in r.end for c in (z.real, z.imag)],
             "success": r.success,
             "theta_drift": r.theta_drift,
             "max_norm": r.max_norm,
             "end_abs_f": r.end_abs_f,
             "steps": r.steps,
             "error": r.error}
            for r in records],
    }
    passed = succeeded == len(records)
    if cfg["out"] and succeeded:
        ends = np.asarray([r.end for r in records if r.success],
                          dtype=complex)
        base = _out_base(cfg, "pencillab-equivalence")
        result["files"] = _emit_cloud(cfg, germ, ends, base, warnings,
                                      surface_test=False)
    return result, passed


def _cmd_euler(cfg, germ, warnings):
    inv, chi = link_surface_euler(
        germ, cfg["theta"], cfg["radius"], budget=cfg["budget"],
        seed=cfg["seed"], batch=cfg["batch"],
        stability_batches=cfg["stability"], ell_redraws=cfg["redraws"],
        newton_tol=cfg["newton_tol"])
    return {"chi": chi, "inventory": inv.to_json_dict()}, True


def _cmd_mu(cfg, germ, warnings):
    exps = cfg["exponents"]
    closed = closed_form_mu(exps)
    stair = staircase_mu(exps)
    agree = closed.mu == stair.mu
    return {
        "exponents": list(closed.exponents),
        "closed_form": closed.mu,
        "staircase": stair.mu,
        "agree": agree,
    }, agree


def _cmd_double_check(cfg, germ, warnings):
    rep = double_fiber_consistency(
        germ, cfg["theta"], cfg["radius"], budget=cfg["budget"],
        seed=cfg["seed"], batch=cfg["batch"],
        stability_batches=cfg["stability"], ell_redraws=cfg["redraws"],
        newton_tol=cfg["newton_tol"])
    return rep.to_json_dict(), rep.passed


def _cmd_sample_link(cfg, germ, warnings):
    count = cfg["count"]
    quotas = ((cfg["theta"], (count + 1) // 2),
              ((cfg["theta"] + math.pi) % TWO_PI, count // 2))
    halves = []
    for th, quota in quotas:
        if quota > 0:
            halves.append(_fiber_starts(germ, th, cfg["radius"], quota,
                                        cfg["seed"], cfg["newton_tol"]))
    Z = np.concatenate(halves, axis=0)
    base = _out_base(cfg, "pencillab-link")
    files = _emit_cloud(cfg, germ, Z, base, warnings, surface_test=True)
    result = {
        "theta": cfg["theta"],
        "radius": cfg["radius"],
        "count": len(Z),
        "files": files,
    }
    return result, True


DISPATCH = {
    "info": _cmd_info,
    "dreg": _cmd_dreg,
    "milnor-diag": _cmd_milnor_diag,
    "strong-milnor": _cmd_strong_milnor,
    "tube-check": _cmd_tube_check,
    "crit-scan": _cmd_crit_scan,
    "flow": _cmd_flow,
    "monodromy": _cmd_monodromy,
    "equivalence": _cmd_equivalence,
    "euler": _cmd_euler,
    "mu": _cmd_mu,
    "double-check": _cmd_double_check,
    "sample-link": _cmd_sample_link,
}


def run_job(cfg: dict, file_vals: Optional[dict],
            overrides: Dict[str, object]) -> Tuple[dict, bool]:
    """Dispatch one validated job; returns (report, passed)."""
    warnings: List[str] = []
    germ = resolve_germ(cfg) if cfg["command"] != "mu" else None
    result, passed = DISPATCH[cfg["command"]](cfg, germ, warnings)
    resolved = {k: cfg[k] for k in DEFAULTS}
    resolved["germ"] = format_germ(germ) if germ is not None else None
    resolved["n"] = germ.n if germ is not None else None
    report = {
        "schema": "1",
        "version": __version__,
        "command": cfg["command"],
        "config": resolved,
        "config_file": file_vals,
        "flag_overrides": overrides,
        "warnings": warnings,
        "passed": bool(passed),
        "result": result,
    }
    return report, bool(passed)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    cfg: dict = {}
    try:
        cfg, file_vals, overrides = load_job(args)
        report, passed = run_job(cfg, file_vals, overrides)
    except UsageError as exc:
        print(f"error: field '{exc.field}': {exc}", file=sys.stderr)
        return 2
    except GermSyntaxError as exc:
        print(f"error: field 'germ': {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_FAILURES as exc:
        inv = getattr(exc, "inventory", None)
        if inv is not None:
            base = cfg.get("report") or cfg.get("out") \
                or f"pencillab-{cfg.get('command', 'job')}"
            partial = str(base) + ".partial"
            payload = {
                "schema": "1",
                "version": __version__,
                "command": cfg.get("command"),
                "error": type(exc).__name__,
                "message": str(exc),
                "inventory": inv.to_json_dict(),
            }
            try:
                with open(partial, "w") as fh:
                    fh.write(canonical_json(payload) + "\n")
                print(f"partial inventory -> {partial}", file=sys.stderr)
            except OSError as io_exc:
                print(f"error: io: {io_exc}", file=sys.stderr)
        print(f"error: numerical failure ({type(exc).__name__}): {exc}",
              file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: field 'config': {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 4

    text = canonical_json(report) + "\n"
    if cfg["report"]:
        try:
            with open(cfg["report"], "w") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"error: io: {exc}", file=sys.stderr)
            return 4
        print(f"{cfg['command']}: {'pass' if passed else 'FAIL'} -> "
              f"{cfg['report']}")
    else:
        sys.stdout.write(text)
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
