"""Motion state vectors, affine composition, quad geometry, and mask ellipse fits.

Conventions
-----------
* Points are (x, y) with x along columns and y along rows (y grows downward).
* An affine map is a 2x3 row-major matrix acting on homogeneous (x, y, 1).
* Quads are 4x2 corner arrays, counter-clockwise (positive shoelace area)
  starting at the image of the reference square's top-left corner.
* The 7-field motion state composes as translation * rotation * shear * scale
  (applied right to left), with the rotation block [[cos, sin], [-sin, cos]].

The 7 fields over-parameterize the 4 linear matrix entries by one degree of
freedom, so the factorization of a matrix back into fields is fixed by a
canonical rule: the rotation is taken from the polar decomposition of the
linear block.  Composition after extraction always reproduces the input
matrix; field-level recovery is exact precisely when the shear/scale block
sh1*s2 == sh2*s1 is symmetric (the "balanced shear" states this rule selects).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DecompositionError, DegenerateRegionError, GeometryError, InsufficientMaskError
from .imaging import BinaryMask, reference_corners

log = logging.getLogger(__name__)

# 2x3 row-major affine matrices are plain float64 ndarrays throughout.
AffineMatrix = np.ndarray


@dataclass(frozen=True)
class StateVector:
    """Decomposed motion state: rotation, translation, scale, shear."""

    theta: float
    o1: float  # translation along x
    o2: float  # translation along y
    s1: float
    s2: float
    sh1: float
    sh2: float

    def __post_init__(self):
        vals = (self.theta, self.o1, self.o2, self.s1, self.s2, self.sh1, self.sh2)
        if not all(np.isfinite(v) for v in vals):
            raise GeometryError("state fields must be finite")
        if self.s1 <= 0.0 or self.s2 <= 0.0:
            raise GeometryError(f"scales must be positive, got s=({self.s1}, {self.s2})")

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.o1, self.o2, self.s1, self.s2, self.sh1, self.sh2])

    @staticmethod
    def from_array(a) -> "StateVector":
        return StateVector(*(float(v) for v in a))


@dataclass(frozen=True)
class LegacyStateVector:
    """Free 6-parameter affine state: four deformation entries plus translation."""

    a1: float
    a2: float
    a3: float
    a4: float
    o1: float
    o2: float

    def __post_init__(self):
        vals = (self.a1, self.a2, self.a3, self.a4, self.o1, self.o2)
        if not all(np.isfinite(v) for v in vals):
            raise GeometryError("state fields must be finite")
        if abs(self.a1 * self.a4 - self.a2 * self.a3) <= 1e-9:
            raise GeometryError("deformation block is singular")

    def as_array(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3, self.a4, self.o1, self.o2])

    @staticmethod
    def from_array(a) -> "LegacyStateVector":
        return LegacyStateVector(*(float(v) for v in a))


@dataclass(frozen=True, eq=False)
class QuadBB:
    """Quadrilateral bounding box as a 4x2 corner array."""

    corners: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.corners, dtype=np.float64)
        if c.shape != (4, 2):
            raise GeometryError(f"quad needs 4 corners, got shape {c.shape}")
        if not np.isfinite(c).all():
            raise GeometryError("quad corners must be finite")
        object.__setattr__(self, "corners", c)

    @staticmethod
    def from_flat(vals) -> "QuadBB":
        a = np.asarray(vals, dtype=np.float64).reshape(4, 2)
        return QuadBB(a)

    def flat(self) -> np.ndarray:
        return self.corners.reshape(-1)

    def area(self) -> float:
        return abs(_signed_area(self.corners))

    def center(self) -> np.ndarray:
        return self.corners.mean(axis=0)

    def diagonal(self) -> float:
        d1 = np.linalg.norm(self.corners[0] - self.corners[2])
        d2 = np.linalg.norm(self.corners[1] - self.corners[3])
        return float(max(d1, d2))

    def translated(self, dx: float, dy: float) -> "QuadBB":
        return QuadBB(self.corners + np.array([dx, dy]))

    def is_convex(self, rel_tol: float = 1e-9) -> bool:
        return _is_convex(self.corners, rel_tol)


@dataclass(frozen=True)
class EllipseFit:
    """Moment ellipse: center, semi-axes (major first), major-axis angle."""

    center: tuple[float, float]
    semi_axes: tuple[float, float]
    orientation: float

    def __post_init__(self):
        a, b = self.semi_axes
        if not (a >= b > 0.0):
            raise GeometryError(f"semi-axes must satisfy a >= b > 0, got ({a}, {b})")


def _factor_matrices(state: StateVector) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    c, s = np.cos(state.theta), np.sin(state.theta)
    rot = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    tra = np.array([[1.0, 0.0, state.o1], [0.0, 1.0, state.o2], [0.0, 0.0, 1.0]])
    shear = np.array([[1.0, state.sh1, 0.0], [state.sh2, 1.0, 0.0], [0.0, 0.0, 1.0]])
    scale = np.diag([state.s1, state.s2, 1.0])
    return tra, rot, shear, scale

def compose_affine(state: StateVector) -> AffineMatrix:
    """Compose translation * rotation * shear * scale into a 2x3 affine."""
    tra, rot, shear, scale = _factor_matrices(state)
    return (tra @ rot @ shear @ scale)[:2, :]


def legacy_affine(state: LegacyStateVector) -> AffineMatrix:
    """Affine matrix of a free 6-parameter state."""
    return np.array([[state.a1, state.a2, state.o1],
                     [state.a3, state.a4, state.o2]])


def extract_state(affine: AffineMatrix) -> StateVector:
    """Factor a 2x3 affine back into the decomposed motion state.

    The rotation angle comes from the polar decomposition of the linear
    block, which makes the factorization deterministic; composing the result
    reproduces the input matrix to machine precision.
    """
    a = np.asarray(affine, dtype=np.float64)
    if a.shape != (2, 3):
        raise DecompositionError(f"affine must be 2x3, got {a.shape}")
    lin = a[:, :2]
    det = float(np.linalg.det(lin))
    if det <= 1e-12:
        raise DecompositionError(f"linear block determinant {det:.3g} is not positive")
    u, _, vt = np.linalg.svd(lin)
    rot = u @ vt  # det(rot) = +1 because det(lin) > 0
    theta = float(np.arctan2(rot[0, 1], rot[0, 0]))
    w = rot.T @ lin  # shear*scale block, SPD when the state is balanced
    s1, s2 = float(w[0, 0]), float(w[1, 1])
    if s1 <= 0.0 or s2 <= 0.0:
        raise DecompositionError("canonical factorization produced non-positive scales")
    return StateVector(theta=theta, o1=float(a[0, 2]), o2=float(a[1, 2]),
                       s1=s1, s2=s2, sh1=float(w[0, 1] / s2), sh2=float(w[1, 0] / s1))


def quad_from_affine(affine: AffineMatrix, side: float) -> QuadBB:
    """Image of the origin-centered side x side reference square under `affine`."""
    a = np.asarray(affine, dtype=np.float64)
    ref = reference_corners(side)
    corners = ref @ a[:, :2].T + a[:, 2]
    quad = QuadBB(corners)
    if quad.area() < 1e-9:
        raise DegenerateRegionError(f"mapped quad area {quad.area():.3g} is degenerate")
    return quad


def _signed_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _is_convex(pts: np.ndarray, rel_tol: float = 1e-9) -> bool:
    n = len(pts)
    e = np.roll(pts, -1, axis=0) - pts
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    scale = float(np.max(np.abs(e))) ** 2 + 1e-30
    tol = rel_tol * scale
    return bool(np.all(cross >= -tol) or np.all(cross <= tol))


def _ccw(pts: np.ndarray) -> np.ndarray:
    return pts if _signed_area(pts) >= 0.0 else pts[::-1]


def _clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of one convex polygon by another (both CCW)."""
    output = [tuple(p) for p in subject]
    m = len(clip)
    for i in range(m):
        if not output:
            break
        cp1 = clip[i]
        cp2 = clip[(i + 1) % m]
        edge = (cp2[0] - cp1[0], cp2[1] - cp1[1])
        inp = output
        output = []
        s = inp[-1]
        s_in = edge[0] * (s[1] - cp1[1]) - edge[1] * (s[0] - cp1[0]) >= 0.0
        for e in inp:
            e_in = edge[0] * (e[1] - cp1[1]) - edge[1] * (e[0] - cp1[0]) >= 0.0
            if e_in != s_in:
                # segment crosses the clip line; solve for the intersection
                dx, dy = e[0] - s[0], e[1] - s[1]
                den = edge[0] * dy - edge[1] * dx
                if abs(den) > 1e-30:
                    t = (edge[1] * (s[0] - cp1[0]) - edge[0] * (s[1] - cp1[1])) / den
                    output.append((s[0] + t * dx, s[1] + t * dy))
            if e_in:
                output.append(e)
            s, s_in = e, e_in
    return np.array(output, dtype=np.float64) if output else np.empty((0, 2))


def convex_intersection_area(p_pts: np.ndarray, q_pts: np.ndarray) -> float:
    """Intersection area of two convex polygons (corner arrays)."""
    inter = _clip_convex(_ccw(np.asarray(p_pts, dtype=np.float64)),
                         _ccw(np.asarray(q_pts, dtype=np.float64)))
    return abs(_signed_area(inter)) if len(inter) >= 3 else 0.0


def convex_poly_iou(p_pts: np.ndarray, q_pts: np.ndarray) -> float:
    """Intersection-over-union of two convex polygons (corner arrays)."""
    area_p = abs(_signed_area(np.asarray(p_pts, dtype=np.float64)))
    area_q = abs(_signed_area(np.asarray(q_pts, dtype=np.float64)))
    if area_p <= 0.0 or area_q <= 0.0:
        raise GeometryError("polygons must have positive area")
    inter = convex_intersection_area(p_pts, q_pts)
    union = area_p + area_q - inter
    return float(min(max(inter / union, 0.0), 1.0))


def quad_iou(p: QuadBB, q: QuadBB) -> float:
    """IoU of two convex quads via polygon clipping and the shoelace formula."""
    for name, quad in (("first", p), ("second", q)):
        if not quad.is_convex():
            raise GeometryError(f"{name} quad is not convex")
        if quad.area() <= 0.0:
            raise GeometryError(f"{name} quad has zero area")
    return convex_poly_iou(p.corners, q.corners)


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Convex hull (Andrew monotone chain), CCW corner array."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) < 3:
        raise GeometryError("hull needs at least 3 distinct points")
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def half(seq):
        out = []
        for pt in seq:
            while len(out) >= 2:
                o, a = out[-2], out[-1]
                if (a[0] - o[0]) * (pt[1] - o[1]) - (a[1] - o[1]) * (pt[0] - o[0]) <= 0.0:
                    out.pop()
                else:
                    break
            out.append(pt)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        raise GeometryError("points are collinear, hull is degenerate")
    return hull


def safe_quad_iou(p: QuadBB, q: QuadBB) -> float:
    """quad_iou that falls back to convex hulls for slightly non-convex quads."""
    pp, qq = p.corners, q.corners
    if not p.is_convex():
        log.warning("non-convex quad in IoU, using its convex hull")
        pp = convex_hull(pp)
    if not q.is_convex():
        log.warning("non-convex quad in IoU, using its convex hull")
        qq = convex_hull(qq)
    if abs(_signed_area(pp)) <= 0.0 or abs(_signed_area(qq)) <= 0.0:
        return 0.0
    return convex_poly_iou(pp, qq)


def ellipse_from_mask(mask: BinaryMask) -> EllipseFit:
    """Two-sigma covariance ellipse of the set pixels of a binary mask."""
    rows, cols = np.nonzero(mask.bits)
    if rows.size < 8:
        raise InsufficientMaskError(f"mask has {rows.size} set pixels, need >= 8")
    xs = cols + 0.5
    ys = rows + 0.5
    cx, cy = float(xs.mean()), float(ys.mean())
    dx, dy = xs - cx, ys - cy
    cov = np.array([[np.mean(dx * dx), np.mean(dx * dy)],
                    [np.mean(dx * dy), np.mean(dy * dy)]])
    evals, evecs = np.linalg.eigh(cov)  # ascending
    if evals[0] <= 1e-12:
        raise InsufficientMaskError("mask support is (nearly) collinear")
    a = 2.0 * float(np.sqrt(evals[1]))
    b = 2.0 * float(np.sqrt(evals[0]))
    if (evals[1] - evals[0]) <= 1e-9 * evals[1]:
        orientation = 0.0  # isotropic: any orientation is valid, pick zero
    else:
        major = evecs[:, 1]
        orientation = float(np.arctan2(major[1], major[0]))
        if orientation <= -np.pi / 2:
            orientation += np.pi
        elif orientation > np.pi / 2:
            orientation -= np.pi
    return EllipseFit(center=(cx, cy), semi_axes=(a, b), orientation=orientation)


def quad_from_ellipse(ellipse: EllipseFit) -> QuadBB:
    """Smallest rectangle enclosing the ellipse with sides along its axes."""
    a, b = ellipse.semi_axes
    phi = ellipse.orientation
    u = np.array([np.cos(phi), np.sin(phi)])
    v = np.array([-np.sin(phi), np.cos(phi)])
    c = np.asarray(ellipse.center, dtype=np.float64)
    return QuadBB(np.array([c - a * u - b * v,
                            c + a * u - b * v,
                            c + a * u + b * v,
                            c - a * u + b * v]))


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    t = float(np.remainder(theta + np.pi, 2.0 * np.pi) - np.pi)
    return np.pi if t == -np.pi else t
