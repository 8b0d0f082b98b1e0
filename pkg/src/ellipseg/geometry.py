"""Ellipse model, rasterization and direct least-squares ellipse fitting.

Pixel convention: pixel ``(row, col)`` has its center at ``x = col``, ``y = row``.
A pixel belongs to an ellipse iff its center lies inside or on the boundary.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Iterable, Sequence

import numpy as np

HEAD_UNKNOWN = 0


class FitError(ValueError):
    """Raised when no valid ellipse can be fitted to a point set."""


@dataclass(frozen=True)
class Ellipse:
    cx: float
    cy: float
    a: float
    b: float
    theta: float = 0.0
    head_sign: int = HEAD_UNKNOWN
    depth: int = 0

    def __post_init__(self):
        a, b, theta = float(self.a), float(self.b), float(self.theta)
        if not (a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b)):
            raise ValueError(f"invalid semi-axes a={a}, b={b}")
        if b > a:
            a, b = b, a
            theta += math.pi / 2
        theta = math.fmod(theta, math.pi)
        if theta < 0:
            theta += math.pi
        if theta >= math.pi:
            theta = 0.0
        theta += 0.0  # no negative zero
        if not (math.isfinite(float(self.cx)) and math.isfinite(float(self.cy))
                and math.isfinite(theta)):
            raise ValueError("ellipse center and angle must be finite")
        if self.head_sign not in (-1, 0, 1):
            raise ValueError(f"head_sign must be -1, 0 or +1, got {self.head_sign}")
        object.__setattr__(self, "cx", float(self.cx))
        object.__setattr__(self, "cy", float(self.cy))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "head_sign", int(self.head_sign))
        object.__setattr__(self, "depth", int(self.depth))

    @property
    def area(self) -> float:
        return math.pi * self.a * self.b

    @property
    def direction(self) -> float | None:
        """Directed heading angle in [0, 2*pi), or None if the head side is unknown."""
        if self.head_sign == HEAD_UNKNOWN:
            return None
        return self.theta if self.head_sign > 0 else self.theta + math.pi

    def flipped(self) -> "Ellipse":
        return replace(self, head_sign=-self.head_sign)

    def bbox(self) -> tuple[float, float, float, float]:
        """Axis-aligned bounds (xmin, xmax, ymin, ymax)."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        hx = math.hypot(self.a * c, self.b * s)
        hy = math.hypot(self.a * s, self.b * c)
        return self.cx - hx, self.cx + hx, self.cy - hy, self.cy + hy

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Ellipse":
        return cls(d["cx"], d["cy"], d["a"], d["b"], d.get("theta", 0.0),
                   d.get("head_sign", HEAD_UNKNOWN), d.get("depth", 0))


@dataclass(frozen=True)
class ConicCoefficients:
    A: float
    B: float
    C: float
    D: float
    E: float
    F: float

    @property
    def discriminant(self) -> float:
        return self.B * self.B - 4.0 * self.A * self.C

    def evaluate(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (self.A * x * x + self.B * x * y + self.C * y * y
                + self.D * x + self.E * y + self.F)


@dataclass(frozen=True)
class Grid:
    """Sampling grid: pixel (row i, col j) is centered at (x0 + j*step, y0 + i*step)."""

    width: int
    height: int
    x0: float = 0.0
    y0: float = 0.0
    step: float = 1.0

    @classmethod
    def from_shape(cls, shape: Sequence[int]) -> "Grid":
        return cls(width=int(shape[1]), height=int(shape[0]))


def _normalized_coords(e: Ellipse, x, y):
    dx = np.asarray(x, dtype=float) - e.cx
    dy = np.asarray(y, dtype=float) - e.cy
    c, s = math.cos(e.theta), math.sin(e.theta)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return u, v


def quadratic_form(e: Ellipse, x, y):
    """(u/a)^2 + (v/b)^2 in the ellipse frame; <= 1 means inside."""
    u, v = _normalized_coords(e, x, y)
    return (u / e.a) ** 2 + (v / e.b) ** 2


def contains(e: Ellipse, x, y):
    """Point-in-ellipse test, boundary inclusive. Vectorizes over x and y."""
    inside = quadratic_form(e, x, y) <= 1.0
    return bool(inside) if np.ndim(inside) == 0 else inside


def scale(e: Ellipse, factor: float) -> Ellipse:
    if not factor > 0:
        raise ValueError(f"scale factor must be positive, got {factor}")
    return replace(e, a=e.a * factor, b=e.b * factor)


def raster_mask(e: Ellipse, grid: Grid | Sequence[int]) -> np.ndarray:
    """Boolean (height, width) mask of the grid pixels whose centers lie in ``e``."""
    if not isinstance(grid, Grid):
        grid = Grid.from_shape(grid)
    mask = np.zeros((grid.height, grid.width), dtype=bool)
    xmin, xmax, ymin, ymax = e.bbox()
    j0 = max(int(math.floor((xmin - grid.x0) / grid.step)), 0)
    j1 = min(int(math.ceil((xmax - grid.x0) / grid.step)) + 1, grid.width)
    i0 = max(int(math.floor((ymin - grid.y0) / grid.step)), 0)
    i1 = min(int(math.ceil((ymax - grid.y0) / grid.step)) + 1, grid.height)
    if j0 >= j1 or i0 >= i1:
        return mask
    xs = grid.x0 + np.arange(j0, j1) * grid.step
    ys = grid.y0 + np.arange(i0, i1) * grid.step
    mask[i0:i1, j0:j1] = quadratic_form(e, xs[None, :], ys[:, None]) <= 1.0
    return mask


def ellipse_iou(e1: Ellipse, e2: Ellipse, grid: Grid | Sequence[int]) -> float:
    m1 = raster_mask(e1, grid)
    m2 = raster_mask(e2, grid)
    union = np.count_nonzero(m1 | m2)
    if union == 0:
        raise ValueError("both ellipses rasterize to zero pixels")
    return np.count_nonzero(m1 & m2) / union


def ellipse_to_conic(e: Ellipse) -> ConicCoefficients:
    c, s = math.cos(e.theta), math.sin(e.theta)
    ia, ib = 1.0 / (e.a * e.a), 1.0 / (e.b * e.b)
    A = c * c * ia + s * s * ib
    B = 2.0 * c * s * (ia - ib)
    C = s * s * ia + c * c * ib
    D = -2.0 * A * e.cx - B * e.cy
    E = -B * e.cx - 2.0 * C * e.cy
    F = A * e.cx ** 2 + B * e.cx * e.cy + C * e.cy ** 2 - 1.0
    return ConicCoefficients(A, B, C, D, E, F)


def conic_to_ellipse(k: ConicCoefficients) -> Ellipse:
    if not k.discriminant < 0:
        raise FitError(f"conic is not an ellipse (B^2-4AC = {k.discriminant:.3g})")
    M = np.array([[2 * k.A, k.B], [k.B, 2 * k.C]])
    cx, cy = np.linalg.solve(M, [-k.D, -k.E])
    f0 = k.F + 0.5 * (k.D * cx + k.E * cy)
    Q = np.array([[k.A, k.B / 2], [k.B / 2, k.C]])
    evals, evecs = np.linalg.eigh(Q)
    if evals[0] < 0:  # overall sign of the conic is arbitrary
        evals, f0 = -evals[::-1], -f0
        evecs = evecs[:, ::-1]
    if not (f0 < 0 and evals[0] > 0):
        raise FitError("conic describes an imaginary ellipse")
    a = math.sqrt(-f0 / evals[0])
    b = math.sqrt(-f0 / evals[1])
    theta = math.atan2(evecs[1, 0], evecs[0, 0])
    return Ellipse(cx, cy, a, b, theta)


def fit_conic(points) -> ConicCoefficients:
    """Direct least-squares ellipse-specific conic fit with 4AC - B^2 = 1.

    Points are shifted to their centroid and scaled to unit RMS radius before
    the constrained problem is solved, then the conic is mapped back. The
    generalized eigenproblem is reduced to a 3x3 eigenproblem on the quadratic
    coefficients (the linear block is eliminated in closed form).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise FitError("points must have shape (n, 2)")
    if len(pts) < 6:
        raise FitError(f"at least 6 points required, got {len(pts)}")
    if not np.all(np.isfinite(pts)):
        raise FitError("non-finite point coordinates")
    mx, my = pts.mean(axis=0)
    x = pts[:, 0] - mx
    y = pts[:, 1] - my
    s = math.sqrt(np.mean(x * x + y * y))
    if s == 0:
        raise FitError("all points coincide")
    x /= s
    y /= s

    D1 = np.column_stack([x * x, x * y, y * y])
    D2 = np.column_stack([x, y, np.ones_like(x)])
    S1 = D1.T @ D1
    S2 = D1.T @ D2
    S3 = D2.T @ D2
    if np.linalg.cond(S3) > 1e12:
        raise FitError("degenerate point set (collinear)")
    T = -np.linalg.solve(S3, S2.T)
    M = S1 + S2 @ T
    # inverse of the constraint block [[0,0,2],[0,-1,0],[2,0,0]]
    M = np.array([M[2] / 2.0, -M[1], M[0] / 2.0])
    evals, evecs = np.linalg.eig(M)
    evecs = np.real(evecs)

    best, best_resid = None, math.inf
    for k in range(3):
        q = evecs[:, k]
        cval = 4 * q[0] * q[2] - q[1] ** 2
        if not cval > 1e-12:
            continue
        q = q / math.sqrt(cval)
        full = np.concatenate([q, T @ q])
        resid = float(full @ np.block([[S1, S2], [S2.T, S3]]) @ full)
        if resid < best_resid:
            best, best_resid = full, resid
    if best is None:
        raise FitError("eigenproblem yields no valid ellipse")

    A, B, C, D, E, F = best
    # undo scaling: x_n = (x - mx) / s
    A, B, C, D, E = A / s ** 2, B / s ** 2, C / s ** 2, D / s, E / s
    # undo translation
    F = A * mx * mx + B * mx * my + C * my * my - D * mx - E * my + F
    D, E = D - 2 * A * mx - B * my, E - 2 * C * my - B * mx
    return ConicCoefficients(A, B, C, D, E, F)


def fit_ellipse(points) -> Ellipse:
    """Fit an ellipse to ``(n, 2)`` points given as (x, y); head side is left unknown."""
    return conic_to_ellipse(fit_conic(points))


def sample_boundary(e: Ellipse, n: int) -> np.ndarray:
    t = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    c, s = math.cos(e.theta), math.sin(e.theta)
    u, v = e.a * np.cos(t), e.b * np.sin(t)
    return np.column_stack([e.cx + u * c - v * s, e.cy + u * s + v * c])


def dumps_ellipses(ellipses: Iterable[Ellipse]) -> str:
    return json.dumps([e.to_dict() for e in ellipses], indent=2, sort_keys=True)


def loads_ellipses(text: str) -> list[Ellipse]:
    return [Ellipse.from_dict(d) for d in json.loads(text)]
