"""Properly convex domains with the Hilbert metric.

Domains live in a fixed affine chart of projective space.  The primary domain
is the unit ball (Klein model); simplices and halfspace polytopes are metric
test fixtures.  Distances, shadows, horofunctions and Hopf coordinates are
computed from the cross-ratio along chords.

Hyperbolic closed forms for the ball (with the factor-2 Hilbert/Klein
correspondence) are provided separately as oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cartan import cartan_project, weight_coords
from .errors import (
    NotSmoothCertificate,
    PointOnBoundary,
    PreconditionViolated,
)

INTERIOR_TOL = 1e-12
BOUNDARY_TOL = 1e-10
SEGMENT_SAMPLES = 32
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ConvexDomain:
    """A properly convex domain in an affine chart of RP^n.

    kind 'ball': {x : |inv_shape (x - center)| < 1}.
    kind 'simplex' / 'polytope': {x : normals x < offsets} (unit normals),
    checked bounded.
    """

    kind: str
    dim: int
    center: np.ndarray = None
    shape: np.ndarray = None
    normals: np.ndarray = None
    offsets: np.ndarray = None
    basepoint: np.ndarray = None

    def __post_init__(self):
        if self.kind == "ball":
            center = np.zeros(self.dim) if self.center is None else np.asarray(self.center, float)
            shape = np.eye(self.dim) if self.shape is None else np.asarray(self.shape, float)
            object.__setattr__(self, "center", center)
            object.__setattr__(self, "shape", shape)
            bp = center if self.basepoint is None else np.asarray(self.basepoint, float)
        elif self.kind in ("simplex", "polytope"):
            normals = np.asarray(self.normals, float)
            offsets = np.asarray(self.offsets, float)
            scale = np.linalg.norm(normals, axis=1)
            object.__setattr__(self, "normals", normals / scale[:, None])
            object.__setattr__(self, "offsets", offsets / scale)
            if self.basepoint is None:
                raise ValueError("polytope domains need an explicit basepoint")
            bp = np.asarray(self.basepoint, float)
            if not self._bounded():
                raise ValueError("polytope is unbounded in this chart")
        else:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        object.__setattr__(self, "basepoint", bp)
        if self.interior_margin(bp) < 1e-9:
            raise ValueError("basepoint is not strictly interior (margin < 1e-9)")

    def _bounded(self):
        # spot-check: every probe direction sees at least one exiting facet
        rng = np.random.default_rng(0)
        probes = np.vstack([np.eye(self.dim), -np.eye(self.dim), rng.normal(size=(32, self.dim))])
        probes /= np.linalg.norm(probes, axis=1)[:, None]
        return bool(np.all((self.normals @ probes.T).max(axis=0) > 1e-12))

    # -- membership ---------------------------------------------------------

    def interior_margin(self, x):
        """Positive inside the domain; <= 0 on the boundary or outside."""
        x = np.asarray(x, float)
        if self.kind == "ball":
            y = np.linalg.solve(self.shape, x - self.center)
            return 1.0 - float(np.linalg.norm(y))
        return float(np.min(self.offsets - self.normals @ x))

    def boundary_residual(self, x):
        return abs(self.interior_margin(np.asarray(x, float)))

    def require_interior(self, x, tol=INTERIOR_TOL):
        m = self.interior_margin(x)
        if m < tol:
            raise PointOnBoundary(f"interior margin {m:.3e} below {tol:.1e}")
        return m

    # -- chords -------------------------------------------------------------

    def chord_parameters(self, p, q):
        """Parameters (t_minus, t_plus) where p + t(q - p) meets the boundary.

        Requires p interior and q != p; t_minus < 0 when p is interior, and
        t_plus > 0.  q may be interior (then t_plus > 1) or on the boundary.
        """
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        v = q - p
        if self.kind == "ball":
            a = np.linalg.solve(self.shape, p - self.center)
            b = np.linalg.solve(self.shape, v)
            bb = b @ b
            ab = a @ b
            aa = a @ a
            disc = ab * ab - bb * (aa - 1.0)
            if bb <= 0 or disc <= 0:
                raise PointOnBoundary("degenerate chord")
            root = math.sqrt(disc)
            return (-ab - root) / bb, (-ab + root) / bb
        lo, hi = -np.inf, np.inf
        nv = self.normals @ v
        slack = self.offsets - self.normals @ p
        for i in range(len(nv)):
            if nv[i] > 1e-300:
                hi = min(hi, slack[i] / nv[i])
            elif nv[i] < -1e-300:
                lo = max(lo, slack[i] / nv[i])
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise PointOnBoundary("chord does not meet the boundary twice")
        return float(lo), float(hi)

    def boundary_hit(self, p, q):
        """Boundary point reached from interior p through q (the forward exit)."""
        _, t_plus = self.chord_parameters(p, q)
        return p + t_plus * (np.asarray(q, float) - np.asarray(p, float))


def hilbert_distance(omega: ConvexDomain, p, q) -> float:
    """Cross-ratio log distance along the chord through p and q."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    omega.require_interior(p)
    omega.require_interior(q)
    if np.allclose(p, q, rtol=0.0, atol=1e-15):
        return 0.0
    tm, tp = omega.chord_parameters(p, q)
    # x = chord(tm) behind p, y = chord(tp) beyond q, with tm < 0 <= 1 < tp
    return math.log(((1.0 - tm) * tp) / ((-tm) * (tp - 1.0)))


def geodesic_point(omega: ConvexDomain, p, x, arclength):
    """Point at the given Hilbert arclength from p along the ray [p, x).

    x is a boundary point; the closed form inverts the cross-ratio, so no
    iteration is involved.
    """
    p = np.asarray(p, float)
    x = np.asarray(x, float)
    tm, tp = omega.chord_parameters(p, x)
    scale = math.exp(arclength) * (-tm) / tp
    t = (scale * tp + tm) / (1.0 + scale)
    return p + t * (x - p)


def distance_to_segment(omega: ConvexDomain, p, a, b, closed=True, param_tol=1e-12):
    """min of d_Omega(p, .) over the segment from a to b, by golden section.

    With closed=False the endpoint b (typically on the boundary) is excluded;
    quasi-convexity of the distance along chords is validated by tests, not
    assumed silently.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    p = np.asarray(p, float)

    def f(t):
        z = a + t * (b - a)
        if omega.interior_margin(z) <= INTERIOR_TOL:
            return float("inf")
        return hilbert_distance(omega, p, z)

    lo, hi = 0.0, 1.0 if closed else 1.0 - 1e-9
    c = hi - GOLDEN * (hi - lo)
    d = lo + GOLDEN * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > param_tol:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - GOLDEN * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + GOLDEN * (hi - lo)
            fd = f(d)
    t_best = 0.5 * (lo + hi)
    candidates = [(f(0.0), 0.0), (min(fc, fd), t_best)]
    if closed:
        candidates.append((f(1.0), 1.0))
    best = min(candidates)
    return best[0], best[1]


def shadow_contains(omega: ConvexDomain, b, p, r, x) -> bool:
    """Membership of boundary point x in the shadow O_r(b, p)."""
    if r <= 0:
        raise ValueError("shadow radius must be positive")
    xpt = x.point if isinstance(x, BoundaryPoint) else np.asarray(x, float)
    dmin, _ = distance_to_segment(omega, p, b, xpt, closed=False)
    return dmin < r


# ---------------------------------------------------------------------------
# Boundary points and horofunctions


@dataclass(frozen=True)
class BoundaryPoint:
    """A boundary point with its supporting-hyperplane smoothness certificate."""

    point: np.ndarray
    normal: np.ndarray = None
    margin: float = 0.0

    @property
    def smooth(self):
        return self.normal is not None and self.margin > 0.0


def boundary_point(omega: ConvexDomain, x) -> BoundaryPoint:
    """Certify x as a boundary point, attaching a smoothness certificate.

    Ball boundaries are smooth everywhere (margin 1).  On a polytope a point
    interior to a unique facet gets that facet as certificate; ridge points
    get none.
    """
    x = np.asarray(x, float)
    if omega.boundary_residual(x) > BOUNDARY_TOL:
        raise PointOnBoundary(
            f"boundary residual {omega.boundary_residual(x):.3e} exceeds {BOUNDARY_TOL:.1e}"
        )
    if omega.kind == "ball":
        y = np.linalg.solve(omega.shape, x - omega.center)
        normal = np.linalg.solve(omega.shape.T, y)
        return BoundaryPoint(x, normal / np.linalg.norm(normal), 1.0)
    slack = omega.offsets - omega.normals @ x
    active = np.where(np.abs(slack) < 1e-9)[0]
    if len(active) == 1:
        others = np.delete(slack, active[0])
        margin = float(others.min()) if len(others) else 1.0
        return BoundaryPoint(x, omega.normals[active[0]], max(margin, 0.0))
    return BoundaryPoint(x, None, 0.0)


def horofunction(omega: ConvexDomain, y: BoundaryPoint, a, b) -> float:
    """Busemann value h_y(a, b) = lim_{x -> y} d(x, a) - d(x, b).

    Closed form on ball domains; elsewhere evaluated along [basepoint, y) at
    Hilbert distances 10/20/40 with Aitken extrapolation.
    """
    if not isinstance(y, BoundaryPoint):
        y = boundary_point(omega, y)
    if not y.smooth:
        raise NotSmoothCertificate("horofunction needs a smooth boundary point")
    if omega.kind == "ball":
        return _ball_horofunction(omega, y.point, a, b)
    value, _ = horofunction_series(omega, y, a, b)
    return value


def horofunction_series(omega: ConvexDomain, y, a, b, radii=(10.0, 20.0, 40.0)):
    """Extrapolated horofunction with its sequence residual."""
    ypt = y.point if isinstance(y, BoundaryPoint) else np.asarray(y, float)
    vals = []
    for t in radii:
        xt = geodesic_point(omega, omega.basepoint, ypt, t)
        vals.append(hilbert_distance(omega, xt, a) - hilbert_distance(omega, xt, b))
    v1, v2, v3 = vals
    denom = (v3 - v2) - (v2 - v1)
    if abs(denom) > 1e-14:
        extrapolated = v3 - (v3 - v2) ** 2 / denom
    else:
        extrapolated = v3
    residual = abs(v3 - v2)
    return float(extrapolated), float(residual)


def _to_unit_ball(omega, x):
    return np.linalg.solve(omega.shape, np.asarray(x, float) - omega.center)


def _ball_horofunction(omega, y, a, b):
    yk = _to_unit_ball(omega, y)
    yk /= np.linalg.norm(yk)
    ak = _to_unit_ball(omega, a)
    bk = _to_unit_ball(omega, b)
    return 2.0 * (hyperbolic_busemann(yk, ak) - hyperbolic_busemann(yk, bk))


# ---------------------------------------------------------------------------
# Klein-model hyperbolic closed forms (testing oracles and ball fast paths)


def hyperbolic_distance(u, v):
    """Hyperbolic distance between Klein-model points of the unit ball."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    num = 1.0 - u @ v
    den = math.sqrt((1.0 - u @ u) * (1.0 - v @ v))
    return math.acosh(max(1.0, num / den))


def hyperbolic_busemann(y, a):
    """Busemann function based at the origin, b_y(a) with b_y(0) = 0."""
    y = np.asarray(y, float)
    a = np.asarray(a, float)
    return math.log((1.0 - y @ a) / math.sqrt(1.0 - a @ a))


def ball_shadow_cos_radius(omega: ConvexDomain, p, r):
    """Cosine of the angular radius of the shadow O_r(center, p) on the ball.

    The shadow seen from the center is a spherical cap around the direction
    of p: sin(psi) = sinh(r/2) / sinh(d_hyp(0, p)), with the factor 2 from
    the Hilbert/Klein correspondence.  Returns (unit direction, cos psi).
    """
    if omega.kind != "ball":
        raise ValueError("closed-form shadows require a ball domain")
    pk = _to_unit_ball(omega, p)
    dist = hyperbolic_distance(np.zeros_like(pk), pk)
    if dist <= r / 2.0:
        return pk / max(np.linalg.norm(pk), 1e-300), -1.0  # whole boundary
    s = math.sinh(r / 2.0) / math.sinh(dist)
    s = min(1.0, s)
    cos_psi = math.sqrt(1.0 - s * s)
    return pk / np.linalg.norm(pk), cos_psi


# ---------------------------------------------------------------------------
# Hopf coordinates


@dataclass(frozen=True)
class HopfVector:
    """Hopf coordinates (backward endpoint, forward endpoint, horofunction time)."""

    x: BoundaryPoint
    y: BoundaryPoint
    s: float


def hopf_coordinates(omega: ConvexDomain, b0, point, direction) -> HopfVector:
    """Hopf coordinates of the tangent vector (point, direction)."""
    point = np.asarray(point, float)
    direction = np.asarray(direction, float)
    omega.require_interior(point)
    tm, tp = omega.chord_parameters(point, point + direction)
    back = boundary_point(omega, point + tm * direction)
    fwd = boundary_point(omega, point + tp * direction)
    _check_open_segment(omega, back.point, fwd.point)
    s = horofunction(omega, fwd, np.asarray(b0, float), point)
    return HopfVector(back, fwd, s)


def _check_open_segment(omega, x, y, samples=SEGMENT_SAMPLES):
    ts = (np.arange(samples) + 0.5) / samples
    margin = min(omega.interior_margin(x + t * (y - x)) for t in ts)
    if margin < 0.0:
        raise PreconditionViolated(f"open segment leaves the domain (margin {margin:.3e})")
    return margin


def visibility_check(omega: ConvexDomain, boundary_points):
    """All-pairs open-segment interiority margins plus smoothness certificates.

    Returns a dict report; PASS iff the minimum pairwise margin is positive
    and every point carries a valid certificate.
    """
    pts = [
        bp if isinstance(bp, BoundaryPoint) else boundary_point(omega, bp)
        for bp in boundary_points
    ]
    margins = []
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            ts = (np.arange(SEGMENT_SAMPLES) + 0.5) / SEGMENT_SAMPLES
            seg = [
                omega.interior_margin(pts[i].point + t * (pts[j].point - pts[i].point))
                for t in ts
            ]
            margins.append(min(seg))
    all_smooth = all(p.smooth for p in pts)
    min_margin = min(margins) if margins else 1.0
    return {
        "n_points": len(pts),
        "min_margin": float(min_margin),
        "all_smooth": bool(all_smooth),
        "pass": bool(min_margin > 0.0 and all_smooth),
    }


# ---------------------------------------------------------------------------
# Projective actions on the chart


def chart_action(matrix, x):
    """Projective action of a (d0+1)-matrix on affine chart points."""
    x = np.asarray(x, float)
    h = np.concatenate([[1.0], x])
    out = matrix @ h
    return out[1:] / out[0]


def chart_action_many(matrix, xs):
    xs = np.asarray(xs, float)
    h = np.hstack([np.ones((len(xs), 1)), xs])
    out = h @ matrix.T
    return out[:, 1:] / out[:, :1]


def coarse_additivity_check(preset, b0, r, pairs):
    """Deviation of the partial Cartan projection from additivity along geodesics.

    pairs are (gamma, eta) words in the preset's generators; each pair must
    satisfy d_Omega(gamma(b0), [b0, eta(b0)]) <= r, otherwise the offending
    pairs are reported.  Returns the max over pairs and weight levels of
    |omega_j(kappa(eta)) - omega_j(kappa(gamma)) - omega_j(kappa(gamma^-1 eta))|.
    """
    ctx = preset.domain_context
    omega_dom = ctx.domain
    b0 = np.asarray(b0, float)
    offenders = []
    deviation = 0.0
    theta = preset.theta
    for gamma_word, eta_word in pairs:
        gp = ctx.orbit_point(gamma_word, b0)
        ep = ctx.orbit_point(eta_word, b0)
        dmin, _ = distance_to_segment(omega_dom, gp, b0, ep, closed=True, param_tol=1e-9)
        if dmin > r:
            offenders.append((gamma_word, eta_word, dmin))
            continue
        g = preset.element(gamma_word)
        e = preset.element(eta_word)
        rest = g.inverse() @ e
        dev = (
            weight_coords(cartan_project(e), theta)
            - weight_coords(cartan_project(g), theta)
            - weight_coords(cartan_project(rest), theta)
        ).sup_norm()
        deviation = max(deviation, dev)
    if offenders:
        raise PreconditionViolated(
            f"{len(offenders)} pair(s) violate the alignment precondition",
            offenders=offenders,
        )
    return deviation
