"""Bowen-Margulis-Sullivan density assembly and flow diagnostics.

The flow space is never meshed: the density lives on pairs of atoms of the
forward and backward Patterson measures, and the conservativity diagnostic
walks sampled geodesics with re-entry statistics against a fixed cell.
Flow-translation invariance in s is structural: the density takes no time
argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cartan import (
    GroupElement,
    PartialFlag,
    gromov_product,
    is_transverse,
    reduce_word,
)
from .errors import NotTransverse
from .hilbert import geodesic_point, hilbert_distance
from .orbit import WordBall, bases_orthonormal
from .patterson import AtomicMeasure


@dataclass
class BMSAssembly:
    """Paired Patterson measures with the Gromov-product density exponent."""

    mu: AtomicMeasure  # phi measure (forward factor)
    mubar: AtomicMeasure  # phi-bar measure (backward factor)
    beta: float
    transverse_tol: float = 1e-10

    def __post_init__(self):
        if self.mu.kind != "flag" or self.mubar.kind != "flag":
            raise ValueError("BMS assembly needs flag-carried measures")
        self._mu_index = {w: i for i, w in enumerate(self.mu.anchor_words)}
        self._mubar_index = {w: i for i, w in enumerate(self.mubar.anchor_words)}
        self._mu_flags = self.mu.materialized_flags()
        self._mubar_flags = self.mubar.materialized_flags()

    def flag_pair(self, i_bar, j):
        theta = self.mu.theta
        F = PartialFlag(theta, bases_orthonormal(self._mubar_flags[i_bar]))
        G = PartialFlag(theta, bases_orthonormal(self._mu_flags[j]))
        return F, G


def bms_density(assembly: BMSAssembly, x_flag: PartialFlag, y_flag: PartialFlag,
                w_x: float, w_y: float) -> float:
    """Density e^{-beta phi([x, y])} times the product of atom weights."""
    ok, cond = is_transverse(x_flag, y_flag, assembly.transverse_tol)
    if not ok:
        raise NotTransverse(f"atom pair conditioning {cond:.3e}")
    phi = assembly.mu.phi
    return math.exp(-assembly.beta * phi(gromov_product(x_flag, y_flag))) * w_x * w_y


def pair_density(assembly: BMSAssembly, i_bar: int, j: int) -> float:
    F, G = assembly.flag_pair(i_bar, j)
    return bms_density(
        assembly, F, G, float(assembly.mubar.weights[i_bar]), float(assembly.mu.weights[j])
    )


def invariance_residual(
    assembly: BMSAssembly,
    gamma: GroupElement,
    n_pairs: int = 200,
    seed: int = 0,
    min_conditioning: float = 1e-6,
):
    """Max relative defect of the transported pair density against the target.

    For sampled atom pairs (x, y), the density of (gamma x, gamma y) with the
    original weights is compared with the density the assembly itself assigns
    at the atoms anchored at the translated words.  Pairs whose translated
    words fall outside the ball, or that are numerically non-transverse, are
    skipped and counted.
    """
    rng = np.random.default_rng(seed)
    mu, mubar = assembly.mu, assembly.mubar
    beta, phi = assembly.beta, assembly.mu.phi
    skipped = 0
    worst = 0.0
    used = 0
    for _ in range(n_pairs):
        i = int(rng.choice(len(mubar.weights), p=mubar.weights))
        j = int(rng.choice(len(mu.weights), p=mu.weights))
        wi = mubar.anchor_words[i]
        wj = mu.anchor_words[j]
        ti = reduce_word(gamma.word + wi)
        tj = reduce_word(gamma.word + wj)
        if ti not in assembly._mubar_index or tj not in assembly._mu_index:
            skipped += 1
            continue
        F, G = assembly.flag_pair(i, j)
        ok, cond = is_transverse(F, G)
        if not ok or cond < min_conditioning:
            skipped += 1
            continue
        Fg = F.act(gamma)
        Gg = G.act(gamma)
        ok, cond = is_transverse(Fg, Gg)
        if not ok or cond < min_conditioning:
            skipped += 1
            continue
        moved = (
            math.exp(-beta * phi(gromov_product(Fg, Gg)))
            * mubar.weights[i]
            * mu.weights[j]
        )
        i2 = assembly._mubar_index[ti]
        j2 = assembly._mu_index[tj]
        F2, G2 = assembly.flag_pair(i2, j2)
        ok, cond = is_transverse(F2, G2)
        if not ok or cond < min_conditioning:
            skipped += 1
            continue
        target = (
            math.exp(-beta * phi(gromov_product(F2, G2)))
            * mubar.weights[i2]
            * mu.weights[j2]
        )
        worst = max(worst, abs(moved / target - 1.0))
        used += 1
    return {"max_rel_error": float(worst), "pairs_used": used, "pairs_skipped": skipped}


# ---------------------------------------------------------------------------
# Recurrence diagnostic


def _hilbert_distance_many(domain, p, pts):
    """Vectorized ball-domain Hilbert distance from p to many points."""
    p = np.asarray(p, float)
    pts = np.asarray(pts, float)
    num = 1.0 - pts @ p
    den = np.sqrt(np.maximum((1.0 - p @ p) * (1.0 - np.einsum("ni,ni->n", pts, pts)), 1e-300))
    return 2.0 * np.arccosh(np.maximum(1.0, num / den))


def max_generator_displacement(preset) -> float:
    ctx = preset.domain_context
    b0 = ctx.domain.basepoint
    disp = 0.0
    for i in range(1, len(preset.generators) + 1):
        q = ctx.orbit_point((i,), b0)
        disp = max(disp, hilbert_distance(ctx.domain, b0, q))
    return disp


def recurrence_diagnostic(
    ball: WordBall,
    x_points,
    y_points,
    horizon: float = 40.0,
    step: float = 0.5,
    cell_radius: float = None,
    min_entries_per_unit: float = 0.02,
):
    """Walk sampled geodesics (x, y) and count re-entries into the orbit cell.

    The cell is the Hilbert ball of radius 2 x (max generator displacement)
    around the orbit; a sample "returns" while some orbit point is within the
    cell radius.  The report is a finite-horizon statistic and only claims
    consistency, never a verdict.
    """
    preset = ball.preset
    ctx = preset.domain_context
    dom = ctx.domain
    if cell_radius is None:
        cell_radius = 2.0 * max_generator_displacement(preset)
    orbit = np.vstack([p for p in ball.sphere_orbit_points if len(p)])

    need = max(2, int(min_entries_per_unit * horizon))
    rows = []
    returned = 0
    for x, y in zip(np.asarray(x_points, float), np.asarray(y_points, float)):
        if np.linalg.norm(x - y) < 1e-9:
            continue
        # anchor the walk at the chord point nearest the basepoint
        mid = 0.5 * (x + y)
        if dom.interior_margin(mid) <= 1e-9:
            continue
        entries = 0
        inside_prev = False
        t = -horizon
        while t <= horizon:
            p = geodesic_point(dom, mid, y if t >= 0 else x, abs(t)) if t != 0 else mid
            dist = float(_hilbert_distance_many(dom, p, orbit).min())
            inside = dist <= cell_radius
            if inside and not inside_prev:
                entries += 1
            inside_prev = inside
            t += step
        rows.append({"entries": entries, "required": need})
        if entries >= need:
            returned += 1
    frac = returned / max(1, len(rows))
    return {
        "horizon": horizon,
        "step": step,
        "cell_radius": cell_radius,
        "samples": len(rows),
        "return_fraction": float(frac),
        "required_entries": need,
        "consistent_with": (
            "conservative (persistent returns)" if frac > 0.5
            else "dissipative (escape)"
        ),
        "rows": rows,
    }
