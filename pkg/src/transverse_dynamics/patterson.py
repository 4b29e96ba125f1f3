"""Patterson's construction as finite atomic measures, with its validators.

A measure built from a word ball carries one atom per group element, either
at the element itself or pushed forward to its leading singular flag.  Left
transport is tracked exactly at the word level, so push-pull round trips are
identities on carriers and weights; flags are materialized lazily.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .cartan import GroupElement, LinearFunctional, RootSubset, reduce_word
from .errors import NonSummable, PreconditionViolated
from .hilbert import ball_shadow_cos_radius, shadow_contains
from .orbit import WordBall, bases_orthonormal, flags_batch

WEIGHT_TOL = 1e-12
MASS_FLOOR = 1e-4


@dataclass(frozen=True)
class HFunction:
    """Patterson's auxiliary function; h == 1 unless a slowly varying boost
    is requested for convergent-type experiments (h(t) = max(1, log t)^p)."""

    kind: str = "constant-one"
    power: float = 0.0

    def log_value_at_exponent(self, x):
        """log h(e^x), vectorized."""
        x = np.asarray(x, float)
        if self.kind == "constant-one":
            return np.zeros_like(x)
        if self.kind == "patterson-slowly-varying":
            return self.power * np.log(np.maximum(1.0, x))
        raise ValueError(f"unknown h-function kind {self.kind!r}")

    def value(self, t):
        return float(np.exp(self.log_value_at_exponent(np.log(t))))

    def slow_variation_check(self, eps_values=(0.5, 0.1, 0.02), s_grid=None):
        """Grid check of h(lambda s) <= s^eps h(lambda) for large lambda.

        Returns per-eps the lambda_0 that worked, or None when the check
        failed on the grid (it never should for this family).
        """
        if s_grid is None:
            s_grid = np.geomspace(1.0 + 1e-6, 1e6, 60)
        out = {}
        for eps in eps_values:
            lam0 = None
            for x0 in np.geomspace(1.0, 1e9, 40):  # lambda_0 = e^{x0}
                xs = x0 * np.geomspace(1.0, 1e3, 25)
                ok = True
                for x in xs:
                    lhs = self.log_value_at_exponent(x + np.log(s_grid))
                    rhs = eps * np.log(s_grid) + self.log_value_at_exponent(x)
                    if np.any(lhs > rhs + 1e-12):
                        ok = False
                        break
                if ok:
                    lam0 = math.exp(x0)
                    break
            out[eps] = lam0
        return out


@dataclass
class AtomicMeasure:
    """Normalized atomic measure on group elements or flags.

    anchor_words name the atoms; action_word is a pending exact left
    translation (concatenated and freely reduced on pushforward), so
    transport by gamma then gamma^{-1} is the identity on carriers.
    """

    kind: str  # 'group' | 'flag'
    theta: RootSubset
    anchor_words: tuple
    weights: np.ndarray
    phi: LinearFunctional
    s: float
    dimension_beta: float
    flag_bases: np.ndarray = None  # (N, d, m), bases of U_theta(anchor)
    action_word: tuple = ()
    action_matrix: np.ndarray = None

    def __post_init__(self):
        w = np.asarray(self.weights, float)
        if abs(float(w.sum()) - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {w.sum()}, not 1")
        if np.any(w < 0):
            raise ValueError("negative atom weight")
        if len(set(self.anchor_words)) != len(self.anchor_words):
            raise ValueError("duplicate atom carriers")
        object.__setattr__(self, "weights", w)
        if self.action_matrix is None:
            self.action_matrix = np.eye(self.theta.d)
        if self.kind == "flag" and self.flag_bases is None:
            raise ValueError("flag-carried measure needs flag bases")

    @property
    def n_atoms(self):
        return len(self.weights)

    def carriers(self):
        if self.kind == "group":
            return tuple(reduce_word(self.action_word + w) for w in self.anchor_words)
        return tuple((self.action_word, w) for w in self.anchor_words)

    def pushforward(self, gamma: GroupElement):
        return AtomicMeasure(
            kind=self.kind,
            theta=self.theta,
            anchor_words=self.anchor_words,
            weights=self.weights,
            phi=self.phi,
            s=self.s,
            dimension_beta=self.dimension_beta,
            flag_bases=self.flag_bases,
            action_word=reduce_word(gamma.word + self.action_word),
            action_matrix=gamma.matrix @ self.action_matrix,
        )

    def materialized_flags(self):
        """(N, d, m) orthonormal bases of the transported atom flags."""
        if self.flag_bases is None:
            raise ValueError("measure is not flag-carried")
        moved = np.einsum("ij,njk->nik", self.action_matrix, self.flag_bases)
        q, r = np.linalg.qr(moved)
        signs = np.sign(np.einsum("nii->ni", r))
        signs[signs == 0] = 1.0
        return q * signs[:, None, :]

    # -- serialization -------------------------------------------------------

    def to_json(self):
        return json.dumps(
            {
                "kind": self.kind,
                "d": self.theta.d,
                "theta": list(self.theta.indices),
                "s": self.s.hex() if isinstance(self.s, float) else float(self.s).hex(),
                "beta": float(self.dimension_beta).hex(),
                "phi": {str(k): float(v).hex() for k, v in self.phi.coeffs.items()},
                "action": list(self.action_word),
                "atoms": [
                    {"word": list(w), "weight": float(x).hex()}
                    for w, x in zip(self.anchor_words, self.weights)
                ],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text, ball: WordBall = None, flag_bases=None):
        data = json.loads(text)
        theta = RootSubset(data["d"], tuple(data["theta"]))
        phi = LinearFunctional(theta, {int(k): float.fromhex(v) for k, v in data["phi"].items()})
        words = tuple(tuple(a["word"]) for a in data["atoms"])
        weights = np.array([float.fromhex(a["weight"]) for a in data["atoms"]])
        if data["kind"] == "flag" and flag_bases is None:
            if ball is None:
                raise ValueError("flag measure needs a ball or explicit bases to rebuild")
            mats = np.stack([ball.preset.element(w).matrix for w in words])
            flag_bases = flags_batch(mats, theta)
        return cls(
            kind=data["kind"],
            theta=theta,
            anchor_words=words,
            weights=weights,
            phi=phi,
            s=float.fromhex(data["s"]),
            dimension_beta=float.fromhex(data["beta"]),
            flag_bases=flag_bases,
            action_word=tuple(data["action"]),
        )


def total_variation(mu: AtomicMeasure, nu: AtomicMeasure) -> float:
    """TV distance between two measures, matching atoms by carrier."""
    ma = dict(zip(mu.carriers(), mu.weights))
    mb = dict(zip(nu.carriers(), nu.weights))
    keys = set(ma) | set(mb)
    return 0.5 * sum(abs(ma.get(k, 0.0) - mb.get(k, 0.0)) for k in keys)


def patterson_measure(
    ball: WordBall,
    phi: LinearFunctional,
    s: float,
    h: HFunction = HFunction(),
    carrier: str = "group",
    delta_estimate=None,
) -> AtomicMeasure:
    """Finite Patterson approximation with weights h(e^{phi kappa}) e^{-s phi kappa}.

    With delta_estimate supplied, s is required to exceed delta_hat - band so
    the truncated weights are meaningful.
    """
    if delta_estimate is not None and s <= delta_estimate.delta_hat - delta_estimate.band:
        raise PreconditionViolated(
            f"s = {s} is not above delta_hat - band = "
            f"{delta_estimate.delta_hat - delta_estimate.band}"
        )
    values = ball.phi_values(phi)
    logw = h.log_value_at_exponent(values) - s * values
    peak = logw.max()
    if not np.isfinite(peak):
        raise NonSummable("weight exponents are not finite")
    z = np.exp(logw - peak)
    total = z.sum()
    if not np.isfinite(total) or total <= 0:
        raise NonSummable("normalizer under/overflowed")
    weights = z / total
    words = tuple(w for _, _, w in ball.iter_words())
    bases = None
    if carrier == "flag":
        mats = np.vstack([m for m in ball.sphere_mats if len(m)])
        bases = flags_batch(mats, ball.preset.theta)
    return AtomicMeasure(
        kind=carrier,
        theta=ball.preset.theta,
        anchor_words=words,
        weights=weights,
        phi=phi,
        s=float(s),
        dimension_beta=float(s),
        flag_bases=bases,
    )


# ---------------------------------------------------------------------------
# Conformality cells and check


def _line_abs_dot(bases, centers):
    return np.abs(np.einsum("ndk,cdk->nc", bases[:, :, :1], centers[:, :, :1]))


def _assign_cells(bases, centers, theta):
    """Index of the nearest Voronoi center in the flag metric, vectorized."""
    d = bases.shape[1]
    cos_line = _line_abs_dot(bases, centers)
    if max(theta.indices) == 1:
        return np.argmax(cos_line, axis=1)
    if d == 3 and set(theta.indices) == {1, 2}:
        n_b = np.cross(bases[:, :, 0], bases[:, :, 1])
        n_c = np.cross(centers[:, :, 0], centers[:, :, 1])
        n_b /= np.linalg.norm(n_b, axis=1)[:, None]
        n_c /= np.linalg.norm(n_c, axis=1)[:, None]
        cos_plane = np.abs(n_b @ n_c.T)
        worst = np.minimum(cos_line, cos_plane)
        return np.argmax(worst, axis=1)
    # generic slow path
    from .cartan import PartialFlag, flag_distance

    flags_c = [PartialFlag(theta, bases_orthonormal(c)) for c in centers]
    out = np.empty(len(bases), dtype=int)
    for i, b in enumerate(bases):
        f = PartialFlag(theta, bases_orthonormal(b))
        out[i] = int(np.argmin([flag_distance(f, c) for c in flags_c]))
    return out


def voronoi_cells(mu: AtomicMeasure, n_cells: int = 64):
    """Cell centers: farthest-point sample of the measure's own flag support."""
    bases = mu.materialized_flags()
    pool_idx = np.argsort(mu.weights)[::-1][: max(4 * n_cells, 256)]
    pool = bases[pool_idx]
    chosen = [0]
    theta = mu.theta
    dist = None
    for _ in range(min(n_cells, len(pool)) - 1):
        ref = pool[chosen[-1]][None]
        cos = _line_abs_dot(pool, ref)[:, 0]
        d_new = np.arccos(np.clip(cos, -1.0, 1.0))
        dist = d_new if dist is None else np.minimum(dist, d_new)
        dist[chosen] = -1.0
        chosen.append(int(np.argmax(dist)))
    return pool[chosen]


@dataclass
class ConformalityReport:
    max_rel_error: float
    cells_used: int
    cells_skipped: int
    transported_mass_checked: float


def conformality_check(
    mu: AtomicMeasure,
    gamma: GroupElement,
    cells,
    mass_floor: float = MASS_FLOOR,
) -> ConformalityReport:
    """Compare gamma_* mu with the conformal-density integral, cell by cell.

    For each cell A the transported mass gamma_* mu(A) is set against
    int_A e^{-beta phi(B(gamma^{-1}, F))} dmu(F) evaluated atomically; cells
    with mass below the floor on either side are skipped and counted.
    """
    beta = mu.dimension_beta
    flags = mu.materialized_flags()
    moved = np.einsum("ij,njk->nik", gamma.matrix, flags)
    q, r = np.linalg.qr(moved)
    signs = np.sign(np.einsum("nii->ni", r))
    signs[signs == 0] = 1.0
    moved = q * signs[:, None, :]

    n_cells = len(cells)
    assign_orig = _assign_cells(flags, cells, mu.theta)
    assign_moved = _assign_cells(moved, cells, mu.theta)

    transported = np.bincount(assign_moved, weights=mu.weights, minlength=n_cells)

    ginv = np.linalg.inv(gamma.matrix)
    log_density = np.zeros(len(flags))
    for j in mu.theta:
        block = np.einsum("ij,njk->nik", ginv, flags[:, :, :j])
        gram = np.einsum("nij,nik->njk", block, block)
        sign, logdet = np.linalg.slogdet(gram)
        log_density += mu.phi.coeffs[j] * 0.5 * logdet
    density_side = np.bincount(
        assign_orig, weights=mu.weights * np.exp(-beta * log_density), minlength=n_cells
    )

    used = 0
    skipped = 0
    worst = 0.0
    checked_mass = 0.0
    for c in range(n_cells):
        if transported[c] < mass_floor or density_side[c] < mass_floor:
            skipped += 1
            continue
        used += 1
        checked_mass += transported[c]
        worst = max(worst, abs(transported[c] / density_side[c] - 1.0))
    return ConformalityReport(
        max_rel_error=float(worst),
        cells_used=used,
        cells_skipped=skipped,
        transported_mass_checked=float(checked_mass),
    )


# ---------------------------------------------------------------------------
# Shadow lemma and conical mass


def _atom_boundary_points(mu, preset):
    ctx = preset.domain_context
    if ctx is None:
        raise ValueError(f"preset {preset.name!r} carries no convex domain")
    pts = ctx.flag_boundary_batch(mu.materialized_flags())
    return pts, ctx


def _require_centered_ball(ctx):
    dom = ctx.domain
    if dom.kind != "ball" or np.abs(dom.basepoint - dom.center).max() > 1e-12:
        raise ValueError("closed-form shadows need the ball domain based at its center")
    return dom


@dataclass
class ShadowLemmaReport:
    rows: list  # (length, word, ratio)
    ratio_min: float
    ratio_max: float
    declared_c: float
    passed: bool
    spot_check_mismatches: int


def shadow_lemma_check(
    mu: AtomicMeasure,
    ball: WordBall,
    r: float,
    lengths=range(4, 11),
    per_length: int = 20,
    declared_c: float = 20.0,
    spot_checks: int = 24,
) -> ShadowLemmaReport:
    """Ratios mu(shadow(gamma)) e^{+beta phi(kappa(gamma))} over sampled gamma.

    Shadows are the closed-form caps seen from the ball center; a golden
    section spot check validates the cap boundary on a small subsample.
    PASS iff every ratio lies in [1/C, C] for the declared C.
    """
    preset = ball.preset
    pts, ctx = _atom_boundary_points(mu, preset)
    dom = _require_centered_ball(ctx)
    beta = mu.dimension_beta
    values_by_sphere = [w for w in ball.sphere_weights]
    coeff = np.zeros(preset.d - 1)
    for k, c in mu.phi.coeffs.items():
        coeff[k - 1] = c

    rows = []
    mismatches = 0
    spot_budget = spot_checks
    rng = np.random.default_rng(7)
    for n in lengths:
        if n >= len(ball.sphere_mats) or len(ball.sphere_mats[n]) == 0:
            continue
        count = len(ball.sphere_mats[n])
        stride = max(1, count // per_length)
        for i in range(0, count, stride):
            p = ball.sphere_orbit_points[n][i]
            direction, cos_psi = ball_shadow_cos_radius(dom, p, r)
            inside = pts @ direction > cos_psi
            mass = float(mu.weights[inside].sum())
            phi_k = float(values_by_sphere[n][i] @ coeff)
            rows.append((n, ball.signed_word(n, i), mass * math.exp(beta * phi_k)))
            if spot_budget > 0 and count > 0:
                j = int(rng.integers(0, len(pts)))
                margin = abs(float(pts[j] @ direction) - cos_psi)
                if margin > 1e-6:
                    exact = shadow_contains(dom, dom.basepoint, p, r, pts[j])
                    if exact != bool(inside[j]):
                        mismatches += 1
                    spot_budget -= 1
    ratios = np.array([x for _, _, x in rows])
    rmin, rmax = float(ratios.min()), float(ratios.max())
    passed = bool(rmin >= 1.0 / declared_c and rmax <= declared_c)
    return ShadowLemmaReport(
        rows=rows,
        ratio_min=rmin,
        ratio_max=rmax,
        declared_c=declared_c,
        passed=passed,
        spot_check_mismatches=mismatches,
    )


def conical_mass_estimate(
    mu: AtomicMeasure,
    ball: WordBall,
    r: float,
    schedule=(2, 4, 6, 8),
    n_samples: int = 2000,
    seed: int = 0,
):
    """Lower bound on the mass of points in infinitely many shadows.

    Estimated as the mu-mass of atoms whose boundary point is covered by
    some sphere-n shadow for every truncation step N of the schedule
    (n ranging over [N, max schedule]).
    """
    preset = ball.preset
    pts, ctx = _atom_boundary_points(mu, preset)
    dom = _require_centered_ball(ctx)
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(pts), size=min(n_samples, len(pts)), p=mu.weights)
    sample = pts[idx]

    max_level = min(max(schedule), len(ball.sphere_mats) - 1)
    levels = range(min(schedule), max_level + 1)
    covered = {}
    for n in levels:
        orbit = ball.sphere_orbit_points[n]
        if len(orbit) == 0:
            covered[n] = np.zeros(len(sample), dtype=bool)
            continue
        dirs = np.empty_like(orbit)
        cosr = np.empty(len(orbit))
        for i, p in enumerate(orbit):
            dirs[i], cosr[i] = ball_shadow_cos_radius(dom, p, r)
        hit = np.zeros(len(sample), dtype=bool)
        chunk = 200000 // max(1, len(sample))
        for start in range(0, len(orbit), max(1, chunk)):
            block = slice(start, start + max(1, chunk))
            dots = sample @ dirs[block].T
            hit |= np.any(dots > cosr[block][None, :], axis=1)
        covered[n] = hit

    ok = np.ones(len(sample), dtype=bool)
    per_step = {}
    for N in schedule:
        usable = [covered[n] for n in levels if n >= N]
        step_ok = np.any(np.vstack(usable), axis=0) if usable else np.zeros(len(sample), bool)
        per_step[N] = float(step_ok.mean())
        ok &= step_ok
    return {
        "estimate": float(ok.mean()),
        "schedule": list(schedule),
        "per_step_coverage": per_step,
        "n_samples": int(len(sample)),
        "shadow_radius": float(r),
    }
