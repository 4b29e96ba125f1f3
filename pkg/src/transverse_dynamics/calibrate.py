"""Per-preset geometric calibration.

The shadow lemma needs a radius floor R0 above which every shadow of an
orbit point from the basepoint captures the limit points it tracks.  We
measure it directly: over sampled long words, the worst distance from a
prefix orbit point to the chord aimed at the word's limit point.
"""

from __future__ import annotations

import numpy as np

from .hilbert import distance_to_segment
from .orbit import WordBall


def calibrate_r0(ball: WordBall, sample: int = 60) -> float:
    """Max over sampled words and prefixes of d(prefix b0, [b0, limit point))."""
    preset = ball.preset
    ctx = preset.domain_context
    if ctx is None:
        raise ValueError(f"preset {preset.name!r} carries no convex domain")
    dom = ctx.domain
    b0 = dom.basepoint
    outer = len(ball.sphere_mats) - 1
    while outer > 0 and len(ball.sphere_mats[outer]) == 0:
        outer -= 1
    count = len(ball.sphere_mats[outer])
    stride = max(1, count // sample)
    bases = ball.flags(sphere=outer, indices=np.arange(0, count, stride))
    targets = ctx.flag_boundary_batch(bases)

    worst = 0.0
    for row, i in enumerate(range(0, count, stride)):
        word = ball.signed_word(outer, i)
        x = targets[row]
        for k in range(1, len(word) + 1):
            p = ctx.orbit_point(word[:k], b0)
            dmin, _ = distance_to_segment(dom, p, b0, x, closed=False, param_tol=1e-9)
            worst = max(worst, dmin)
    return float(worst)
