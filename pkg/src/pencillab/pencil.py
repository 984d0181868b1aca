"""The angle-indexed family of real hypersurfaces cut out by a germ.

For a germ f and an angle theta, the member function h_theta(x) =
Im(exp(-i*theta) * f(x)) vanishes exactly where f(x) lies on the real line
at angle theta. Its zero set splits into the positive half (f on the open
ray at theta), the negative half (ray at theta + pi), and the common axis
V = {f = 0}. This module classifies points against that family, evaluates
the phase maps and the radius-preserving phase rescaling, measures the
incidence residual of the angular blow-up, and samples fibers and links.

Sign convention: h_0 = Im f and h_{pi/2} = -Re f; only zero sets and the
sign of the side indicator Re(exp(-i*theta) f) carry meaning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ._num import gauss_newton, sobol_unit_sphere, to_complex, to_real
from .errors import AxisProximity, ProjectionFailure, SearchFailure
from .germ import MixedGerm, evaluate, real_gradients

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# membership and classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PencilClassification:
    kind: str                     # "axis" | "ray"
    theta: Optional[float] = None  # in [0, 2*pi), rays only
    modulus: Optional[float] = None

    @property
    def is_axis(self) -> bool:
        return self.kind == "axis"


def h_theta(germ: MixedGerm, theta: float, x) -> np.ndarray:
    """Member function Im(exp(-i*theta) * f(x)); batched over points."""
    f = evaluate(germ, x)
    return np.imag(np.exp(-1j * float(theta)) * f)


def side_indicator(germ: MixedGerm, theta: float, x) -> np.ndarray:
    """Re(exp(-i*theta) * f(x)): positive on the theta half, negative on
    the theta + pi half of the member's zero set."""
    f = evaluate(germ, x)
    return np.real(np.exp(-1j * float(theta)) * f)


def classify(germ: MixedGerm, x, axis_floor: Optional[float] = None
             ) -> PencilClassification:
    """Axis point (|f| at or below the floor) or ray point with its angle."""
    z = np.asarray(x, dtype=complex)
    f = complex(evaluate(germ, z))
    if axis_floor is None:
        axis_floor = germ.axis_floor(float(np.linalg.norm(z)))
    rho = abs(f)
    if rho <= axis_floor:
        return PencilClassification(kind="axis")
    return PencilClassification(kind="ray",
                                theta=math.atan2(f.imag, f.real) % TWO_PI,
                                modulus=rho)


def phase(germ: MixedGerm, x, axis_floor: Optional[float] = None) -> complex:
    """Unit complex f(x)/|f(x)|; AxisProximity on axis points."""
    z = np.asarray(x, dtype=complex)
    f = complex(evaluate(germ, z))
    if axis_floor is None:
        axis_floor = germ.axis_floor(float(np.linalg.norm(z)))
    if abs(f) <= axis_floor:
        raise AxisProximity(f"|f| = {abs(f):.3e} at or below floor {axis_floor:.3e}")
    return f / abs(f)


def _projectivize(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Normalize pairs (a, b) to the unit circle with the first nonzero
    coordinate positive; vectorized, shape (..., 2)."""
    t = np.stack([a, b], axis=-1)
    nrm = np.sqrt(np.sum(t * t, axis=-1, keepdims=True))
    t = t / nrm
    flip = (t[..., 0] < 0.0) | ((t[..., 0] == 0.0) & (t[..., 1] < 0.0))
    return np.where(flip[..., None], -t, t)


def projective_phase(germ: MixedGerm, x, axis_floor: Optional[float] = None
                     ) -> Tuple[float, float]:
    """Normalized (Re f : Im f); antipodal phases give equal pairs."""
    ph = phase(germ, x, axis_floor=axis_floor)
    t = _projectivize(np.asarray(ph.real), np.asarray(ph.imag))
    return float(t[..., 0]), float(t[..., 1])


def spherefication(germ: MixedGerm, x, axis_floor: Optional[float] = None
                   ) -> complex:
    """||x|| * f(x)/|f(x)|: phase of f carried to the radius of x."""
    z = np.asarray(x, dtype=complex)
    return float(np.linalg.norm(z)) * phase(germ, z, axis_floor=axis_floor)


def spherefication_batch(germ: MixedGerm, Z) -> np.ndarray:
    """Vectorized spherefication over ray points (caller excludes axis)."""
    Z = np.asarray(Z, dtype=complex)
    f = evaluate(germ, Z)
    r = np.sqrt(np.sum(np.abs(Z) ** 2, axis=-1))
    return r * f / np.abs(f)


@dataclass(frozen=True)
class BlowupPoint:
    """A point of the incidence set {(x, (t1:t2)) : Re(f) t2 - Im(f) t1 = 0}."""

    x: Tuple[complex, ...]
    t: Tuple[float, float]


def blowup_residual(germ: MixedGerm, x, t: Sequence[float]) -> float:
    """Incidence residual Re(f(x)) * t2 - Im(f(x)) * t1 for normalized t."""
    t1, t2 = float(t[0]), float(t[1])
    if abs(t1 * t1 + t2 * t2 - 1.0) > 1e-9:
        raise ValueError("projective pair must be normalized to the unit circle")
    f = complex(evaluate(germ, np.asarray(x, dtype=complex)))
    return f.real * t2 - f.imag * t1


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiberSample:
    """Points projected onto one open fiber half {h_theta = 0, side > 0} on
    the sphere of the requested radius."""

    points: np.ndarray          # complex (k, n)
    theta: float
    radius: float
    attempted: int
    converged: int
    wrong_side: int

    @property
    def count(self) -> int:
        return len(self.points)


def _sphere_member_system(germ: MixedGerm, theta: float, radius: float):
    ct, st = math.cos(theta), math.sin(theta)

    def system(X):
        Z = to_complex(X)
        f, ga, gb = real_gradients(germ, Z)
        r2 = np.sum(X * X, axis=-1)
        R = np.stack([r2 - radius * radius,
                      f.imag * ct - f.real * st], axis=-1)
        J = np.stack([2.0 * X, ct * gb - st * ga], axis=-2)
        return R, J

    return system


def sample_fiber(germ: MixedGerm, theta: float, radius: float, count: int,
                 seed: int, newton_tol: float = 1e-12,
                 max_fail_fraction: float = 0.5) -> FiberSample:
    """Sample the positive-side fiber half at the given angle and radius.

    Quasi-random sphere seeds are projected onto the two-constraint set by
    Gauss-Newton; non-convergent seeds and wrong-side landings are dropped
    and counted. Raises ProjectionFailure when the non-convergence rate
    alone exceeds max_fail_fraction.
    """
    theta = float(theta) % TWO_PI
    if count <= 0:
        return FiberSample(points=np.empty((0, germ.n), dtype=complex),
                           theta=theta, radius=radius, attempted=0,
                           converged=0, wrong_side=0)
    dim = 2 * germ.n
    seeds = radius * sobol_unit_sphere(seed, (0x0F1B, 0), count, dim)
    scale = np.array([radius * radius, max(germ.scale(radius), 1e-300)])
    X, ok = gauss_newton(_sphere_member_system(germ, theta, radius), seeds,
                         scale, tol=newton_tol, step_cap=0.5 * radius)
    converged = int(np.count_nonzero(ok))
    if converged < count * (1.0 - max_fail_fraction):
        raise ProjectionFailure(
            f"{count - converged}/{count} fiber projections failed "
            f"(theta={theta:.6f}, radius={radius})")
    Z = to_complex(X[ok])
    side = side_indicator(germ, theta, Z)
    floor = germ.axis_floor(radius)
    keep = side > floor
    pts = Z[keep]
    return FiberSample(points=pts, theta=theta, radius=radius,
                       attempted=count, converged=converged,
                       wrong_side=int(np.count_nonzero(~keep)))


@dataclass(frozen=True)
class AxisProbeResult:
    theta: float
    distance: Optional[float]
    point: Optional[Tuple[complex, ...]]
    error: Optional[str]


def axis_accumulation_probe(germ: MixedGerm, v_point, thetas: Sequence[float],
                            delta: float, s_scale: float = 1e-4,
                            newton_tol: float = 1e-10) -> List[AxisProbeResult]:
    """Nearest positive-side point of each angle's fiber half near an axis
    point: solves f(x) = s * exp(i*theta) for a small s by Gauss-Newton
    starting at v_point. Per-angle failures are recorded, not raised.
    """
    z0 = np.asarray(v_point, dtype=complex)
    if not classify(germ, z0).is_axis:
        raise ValueError("v_point must lie on the axis {f = 0}")
    r0 = float(np.linalg.norm(z0))
    s = s_scale * max(germ.scale(r0), 1e-300)
    x0 = to_real(z0)
    out: List[AxisProbeResult] = []
    for theta in thetas:
        tgt = s * np.exp(1j * float(theta))

        def system(X):
            Z = to_complex(X)
            f, ga, gb = real_gradients(germ, Z)
            R = np.stack([f.real - tgt.real, f.imag - tgt.imag], axis=-1)
            J = np.stack([ga, gb], axis=-2)
            return R, J

        X, ok = gauss_newton(system, x0[None, :], np.array([s, s]),
                             tol=newton_tol, step_cap=max(delta, 1e-6))
        if not ok[0]:
            out.append(AxisProbeResult(theta=float(theta), distance=None,
                                       point=None,
                                       error=SearchFailure.__name__))
            continue
        zs = to_complex(X[0])
        dist = float(np.linalg.norm(zs - z0))
        out.append(AxisProbeResult(theta=float(theta), distance=dist,
                                   point=tuple(zs), error=None))
    return out


# ---------------------------------------------------------------------------
# point-cloud output
# ---------------------------------------------------------------------------

def pointcloud_rows(germ: MixedGerm, points: np.ndarray) -> np.ndarray:
    """Rows of (2n coordinates, theta, ||x||, |f|) for CSV export."""
    Z = np.asarray(points, dtype=complex)
    X = to_real(Z)
    f = evaluate(germ, Z)
    theta = np.mod(np.arctan2(f.imag, f.real), TWO_PI)
    r = np.sqrt(np.sum(X * X, axis=-1))
    return np.concatenate([X, theta[:, None], r[:, None],
                           np.abs(f)[:, None]], axis=-1)


def stereographic_project(points: np.ndarray, pole: np.ndarray,
                          radius: float) -> np.ndarray:
    """Project points of the radius-r sphere in R^4 to R^3 from a pole.

    The pole must be a point of the same sphere; points at the pole map to
    infinity, so callers perturb the pole first when needed.
    """
    X = np.asarray(points, dtype=float)
    p = np.asarray(pole, dtype=float)
    p = p / np.linalg.norm(p) * radius
    # orthonormal basis of the pole's orthogonal complement
    M = np.concatenate([p[:, None] / radius, np.eye(X.shape[-1])], axis=1)
    Qm, _ = np.linalg.qr(M)
    B = Qm[:, 1:4]
    denom = 1.0 - (X @ p) / (radius * radius)
    return (X @ B) / denom[:, None]
