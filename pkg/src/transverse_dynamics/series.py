"""Poincare series, critical exponents, and the growth experiments.

delta estimation runs two independent estimators on the same orbit data:
a least-squares slope of log N(T) over the central quantile window, and a
bisection for the neutral-growth exponent of the outermost sphere sums.
Their spread is reported as the band; finite-radius truncation is the
dominant error and is surfaced, never hidden.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cartan import LinearFunctional, dual_functional, phi_length
from .errors import InsufficientGrowth
from .orbit import GroupPreset, WordBall, enumerate_ball

BAND_FLOOR = 0.01
COUNT_WINDOW = (20.0, 80.0)  # percentile window for the N(T) regression


def poincare_partial(ball: WordBall, phi: LinearFunctional, s: float) -> float:
    """Truncated Poincare series over the ball, compensated summation."""
    if s < 0:
        raise ValueError("s must be non-negative")
    values = ball.phi_values(phi)
    return float(math.fsum(np.exp(-s * values)))


def _logsumexp(x):
    if len(x) == 0:
        return -np.inf
    peak = np.max(x)
    return float(peak + np.log(np.sum(np.exp(x - peak))))


@dataclass
class SeriesEstimate:
    """Critical-exponent estimate with its diagnostics."""

    phi: LinearFunctional
    radii: list
    delta_hat: float
    band: float
    slope_estimate: float
    bisect_estimate: float
    counts: np.ndarray  # sorted phi values; N(T) = searchsorted(counts, T)
    sphere_log_sums: np.ndarray = None  # log S_n(delta_hat) per word length
    partial_sums: dict = field(default_factory=dict)
    possibly_infinite: bool = False
    n_elements: int = 0

    @classmethod
    def from_value_table(cls, phi, values, lengths, radii=None):
        """Run both estimators on raw (phi-value, word-length) data."""
        values = np.asarray(values, float)
        lengths = np.asarray(lengths, int)
        radius = int(lengths.max()) if len(lengths) else 0
        radii = radii if radii is not None else [radius]
        if len(values) < 30 or radius < 3:
            raise InsufficientGrowth(
                f"{len(values)} elements up to length {radius} is too little data",
                raw_data={"values": values, "lengths": lengths},
            )
        slope = _slope_estimate(values)
        bisect = _bisect_estimate(values, lengths, radius)
        delta = slope
        band = max(abs(slope - bisect), BAND_FLOOR)
        counts = np.sort(values)
        est = cls(
            phi=phi,
            radii=list(radii),
            delta_hat=float(delta),
            band=float(band),
            slope_estimate=float(slope),
            bisect_estimate=float(bisect),
            counts=counts,
            n_elements=len(values),
        )
        est.sphere_log_sums = np.array(
            [
                _logsumexp(-delta * values[lengths == n])
                for n in range(radius + 1)
            ]
        )
        for r in radii:
            sel = lengths <= r
            est.partial_sums[(round(float(delta), 9), int(r))] = float(
                math.fsum(np.exp(-delta * values[sel]))
            )
        return est

    def count_below(self, T):
        return int(np.searchsorted(self.counts, T))


def _slope_estimate(values):
    v = np.sort(values)
    lo, hi = np.percentile(v, COUNT_WINDOW)
    if hi - lo < 1e-9:
        raise InsufficientGrowth("degenerate value spread", raw_data={"values": v})
    mask = (v >= lo) & (v <= hi)
    x = v[mask]
    y = np.log(np.arange(1, len(v) + 1, dtype=float)[mask])
    if len(x) < 10:
        raise InsufficientGrowth("too few points in the regression window",
                                 raw_data={"values": v})
    slope, _ = np.polyfit(x, y, 1)
    return max(0.0, float(slope))


def _bisect_estimate(values, lengths, radius, tol=1e-6):
    """Exponent where the outermost sphere sums stop growing."""
    top = values[lengths == radius]
    prev = values[lengths == radius - 1]
    if len(top) == 0 or len(prev) == 0:
        raise InsufficientGrowth("outer spheres are empty",
                                 raw_data={"values": values, "lengths": lengths})

    def log_ratio(s):
        return _logsumexp(-s * top) - _logsumexp(-s * prev)

    lo = 0.0
    if log_ratio(lo) <= 0.0:
        return 0.0
    hi = 1.0
    while log_ratio(hi) > 0.0:
        hi *= 2.0
        if hi > 1e6:
            return float("inf")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if log_ratio(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def critical_exponent(
    preset: GroupPreset,
    phi: LinearFunctional,
    radii,
    ball: WordBall = None,
    budget: int = None,
) -> SeriesEstimate:
    """Critical-exponent estimate from a word ball of the largest radius."""
    radii = sorted(set(int(r) for r in radii))
    if ball is None:
        ball = enumerate_ball(preset, radii[-1], budget=budget)
    values = ball.phi_values(phi)
    lengths = ball.word_lengths()
    est = SeriesEstimate.from_value_table(phi, values, lengths, radii)
    cone = limit_cone_sample(ball, phi.theta)
    est.possibly_infinite = not _cone_positive(cone, phi)
    return est


def _cone_positive(cone, phi):
    dirs = cone["directions"]
    coeff = np.array([phi.coeffs[k] for k in sorted(phi.coeffs)])
    return bool(np.all(dirs @ coeff > 0.0))


def limit_cone_sample(ball: WordBall, theta=None, outer_spheres=2):
    """Normalized weight-coordinate directions of kappa over the outer spheres."""
    theta = theta or ball.preset.theta
    cols = [k - 1 for k in theta.indices]
    rows = []
    for w in ball.sphere_weights[-outer_spheres:]:
        if len(w):
            rows.append(w[:, cols])
    stacked = np.vstack(rows)
    norms = np.linalg.norm(stacked, axis=1)
    keep = norms > 1e-12
    dirs = stacked[keep] / norms[keep, None]
    centered = dirs - dirs.mean(axis=0)
    spread = np.linalg.eigvalsh(centered.T @ centered / max(1, len(dirs)))
    return {
        "theta": theta.indices,
        "directions": dirs,
        "spread_eigenvalues": spread,
        "effective_dimension": int(np.sum(spread > 1e-10)),
    }


def divergence_type(estimate: SeriesEstimate, plateau_tol=1e-3):
    """Heuristic verdict on the behaviour of Q at the estimated exponent.

    The dichotomy is not finitely decidable; the verdict only says which
    branch the truncated data is consistent with.
    """
    logs = estimate.sphere_log_sums
    if logs is None or len(logs) < 6 or estimate.n_elements < 100:
        return "inconclusive"
    sums = np.exp(logs[1:])  # skip the identity sphere
    q = np.cumsum(sums)
    total = q[-1]
    if total <= 0:
        return "inconclusive"
    tail = (q[-1] - q[-3]) / total
    halfway = (q[-1] - q[len(q) // 2]) / total
    if tail < plateau_tol:
        return "convergent-consistent"
    if halfway > 0.2:
        return "divergent-consistent"
    return "inconclusive"


# ---------------------------------------------------------------------------
# Experiments


@dataclass
class ManhattanRow:
    lam: float
    delta_hat: float
    band: float
    concave_ok: bool


@dataclass
class ManhattanTable:
    rows: list
    length_probe: float
    delta1: float
    delta2: float
    band1: float
    band2: float

    def as_dicts(self):
        return [
            {
                "lambda": r.lam,
                "delta_hat": r.delta_hat,
                "band": r.band,
                "concave_ok": r.concave_ok,
            }
            for r in self.rows
        ]


def manhattan_experiment(
    preset: GroupPreset,
    phi1: LinearFunctional,
    phi2: LinearFunctional,
    lambdas,
    radius: int,
    ball: WordBall = None,
    n_length_words: int = 100,
) -> ManhattanTable:
    """Concavity table for lambda -> delta(lambda phi1 + (1-lambda) phi2).

    Both functionals are first rescaled to estimated critical exponent one;
    the equality-case probe reports the max difference of the normalized
    length functionals over sampled words.
    """
    if ball is None:
        ball = enumerate_ball(preset, radius)
    est1 = critical_exponent(preset, phi1, [radius], ball=ball)
    est2 = critical_exponent(preset, phi2, [radius], ball=ball)
    phi1n = phi1.scaled(est1.delta_hat)
    phi2n = phi2.scaled(est2.delta_hat)

    rows = []
    for lam in lambdas:
        blend = phi1n.blend(phi2n, float(lam))
        est = critical_exponent(preset, blend, [radius], ball=ball)
        rows.append(
            ManhattanRow(
                lam=float(lam),
                delta_hat=est.delta_hat,
                band=est.band,
                concave_ok=bool(est.delta_hat <= 1.0 + est.band),
            )
        )

    probe = 0.0
    outer = len(ball.sphere_mats) - 1
    count = len(ball.sphere_mats[outer])
    stride = max(1, count // n_length_words)
    for i in range(0, count, stride):
        g = ball.element(outer, i)
        probe = max(probe, abs(phi_length(g, phi1n) - phi_length(g, phi2n)))
    return ManhattanTable(
        rows=rows,
        length_probe=float(probe),
        delta1=est1.delta_hat,
        delta2=est2.delta_hat,
        band1=est1.band,
        band2=est2.band,
    )


@dataclass
class EntropyDropReport:
    delta_full: float
    band_full: float
    delta_sub: float
    band_sub: float
    gap: float
    hausdorff_sub_to_full: float
    hausdorff_full_to_sub: float

    @property
    def combined_band(self):
        return self.band_full + self.band_sub


def entropy_drop_experiment(
    preset: GroupPreset,
    subgroup,
    phi: LinearFunctional,
    radius: int,
    sub_radius: int = None,
    ball: WordBall = None,
    sub_ball: WordBall = None,
) -> EntropyDropReport:
    """Critical exponents of the full group and a subgroup, with containment.

    subgroup is a label into the preset's subgroup table or an explicit tuple
    of generator words.  The limit-set diagnostic is the two one-sided
    Hausdorff flag distances between outer-sphere samples.
    """
    from .orbit import limit_set_sample

    if isinstance(subgroup, str):
        sub_preset = preset.subgroup_preset(subgroup)
    else:
        sub_preset = GroupPreset(
            name=f"{preset.name}:custom",
            generators=tuple(preset.element(tuple(w)) for w in subgroup),
            theta=preset.theta,
        )
    if ball is None:
        ball = enumerate_ball(preset, radius)
    if sub_ball is None:
        sub_ball = enumerate_ball(sub_preset, sub_radius or radius)

    est_full = critical_exponent(preset, phi, [radius], ball=ball)
    est_sub = critical_exponent(sub_preset, phi, [sub_ball.radius], ball=sub_ball)

    full_flags = limit_set_sample(ball, preset.theta, max_flags=300).bases
    sub_flags = limit_set_sample(sub_ball, preset.theta, max_flags=300).bases
    h_sub_full = _hausdorff_one_sided(sub_flags, full_flags)
    h_full_sub = _hausdorff_one_sided(full_flags, sub_flags)

    return EntropyDropReport(
        delta_full=est_full.delta_hat,
        band_full=est_full.band,
        delta_sub=est_sub.delta_hat,
        band_sub=est_sub.band,
        gap=est_full.delta_hat - est_sub.delta_hat,
        hausdorff_sub_to_full=float(h_sub_full),
        hausdorff_full_to_sub=float(h_full_sub),
    )


def _hausdorff_one_sided(bases_a, bases_b):
    """sup over a of inf over b of the flag distance (level-1 lines suffice)."""
    va = bases_a[:, :, 0]
    vb = bases_b[:, :, 0]
    cos = np.abs(va @ vb.T)
    worst = np.arccos(np.clip(cos.max(axis=1), -1.0, 1.0)).max()
    return worst


def exhaustion_schedule(preset: GroupPreset, phi, labels, radii):
    """delta_hat along an increasing chain of subgroups, final entry the group."""
    rows = []
    for label, radius in zip(labels, radii):
        if label == "full":
            est = critical_exponent(preset, phi, [radius])
        else:
            sub = preset.subgroup_preset(label)
            est = critical_exponent(sub, phi, [radius])
        rows.append({"subgroup": label, "radius": radius,
                     "delta_hat": est.delta_hat, "band": est.band})
    return rows


def length_rigidity_compare(
    preset_a: GroupPreset,
    preset_b: GroupPreset,
    phi1: LinearFunctional,
    phi2: LinearFunctional,
    sample_words,
    delta1: float = None,
    delta2: float = None,
    radius: int = 8,
) -> float:
    """Max over the sample of |d1 l^phi1(rho1(w)) - d2 l^phi2(rho2(w))|."""
    if delta1 is None:
        delta1 = critical_exponent(preset_a, phi1, [radius]).delta_hat
    if delta2 is None:
        delta2 = critical_exponent(preset_b, phi2, [radius]).delta_hat
    score = 0.0
    for w in sample_words:
        la = phi_length(preset_a.element(tuple(w)), phi1)
        lb = phi_length(preset_b.element(tuple(w)), phi2)
        score = max(score, abs(delta1 * la - delta2 * lb))
    return float(score)


def scale_covariance_check(preset, phi, radius, factors=(0.5, 2.0), ball=None):
    """delta(c phi) * c must agree with delta(phi) within the bands."""
    if ball is None:
        ball = enumerate_ball(preset, radius)
    base = critical_exponent(preset, phi, [radius], ball=ball)
    rows = []
    for c in factors:
        est = critical_exponent(preset, phi.scaled(c), [radius], ball=ball)
        rows.append(
            {
                "factor": c,
                "delta_hat": est.delta_hat,
                "expected": base.delta_hat / c,
                "within_band": bool(
                    abs(est.delta_hat - base.delta_hat / c) <= est.band + base.band / c
                ),
            }
        )
    return rows


__all__ = [
    "poincare_partial",
    "SeriesEstimate",
    "critical_exponent",
    "limit_cone_sample",
    "divergence_type",
    "manhattan_experiment",
    "ManhattanTable",
    "entropy_drop_experiment",
    "EntropyDropReport",
    "exhaustion_schedule",
    "length_rigidity_compare",
    "scale_covariance_check",
    "dual_functional",
]
