"""Shipped group presets.

All disk-based presets act on the Klein model of the hyperbolic plane: a
2x2 generator g acts through its symmetric square, written in an orthonormal
basis of the symmetric matrices where the determinant form becomes the
standard Lorentz form.  That basis makes the singular-value relation exact:
sigma(sym2(g)) = (sigma1^2, 1, sigma1^-2).
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .cartan import GroupElement, RootSubset
from .errors import ConfigError
from .hilbert import ConvexDomain
from .orbit import DomainContext, GroupPreset

_SQRT2 = math.sqrt(2.0)

# orthonormal basis of Sym^2(R^2) under the Frobenius inner product
_SYM_BASIS = [
    np.array([[1.0, 0.0], [0.0, 1.0]]) / _SQRT2,
    np.array([[1.0, 0.0], [0.0, -1.0]]) / _SQRT2,
    np.array([[0.0, 1.0], [1.0, 0.0]]) / _SQRT2,
]


def sym2(g):
    """Symmetric square of a 2x2 matrix as a 3x3 matrix, X -> g X g^T."""
    g = np.asarray(g, float)
    out = np.empty((3, 3))
    for j, uj in enumerate(_SYM_BASIS):
        image = g @ uj @ g.T
        for i, ui in enumerate(_SYM_BASIS):
            out[i, j] = np.sum(image * ui)
    return out


def _disk_domain():
    return ConvexDomain(kind="ball", dim=2)


def _sl2_boundary_batch(bases):
    """Limit lines of SL(2) flags to Klein-disk boundary (double angle map)."""
    v = bases[:, :, 0]
    a = v[:, 0] ** 2 - v[:, 1] ** 2
    b = 2.0 * v[:, 0] * v[:, 1]
    pts = np.stack([a, b], axis=1)
    return pts / np.linalg.norm(pts, axis=1)[:, None]


def _so21_boundary_batch(bases):
    """Leading lines of SO(2,1) flags, radially projected to the circle."""
    v = bases[:, :, 0]
    sign = np.sign(v[:, 0])
    sign[sign == 0] = 1.0
    pts = (v[:, 1:] * sign[:, None]) / np.abs(v[:, :1])
    return pts / np.linalg.norm(pts, axis=1)[:, None]


def rotation2(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def _schottky_generators(lam):
    a = np.diag([lam, 1.0 / lam])
    r = rotation2(math.pi / 4.0)
    b = r @ a @ r.T
    return a, b


def _sl2_domain_context(gen_mats):
    return DomainContext(
        domain=_disk_domain(),
        dom_generators=tuple(sym2(g) for g in gen_mats),
        flag_boundary_batch=_sl2_boundary_batch,
    )


def _schottky_preset(name, lam, assume_free=True):
    a, b = _schottky_generators(lam)
    return GroupPreset(
        name=name,
        generators=(GroupElement(a), GroupElement(b)),
        theta=RootSubset(2, (1,)),
        assume_free=assume_free,
        domain_context=_sl2_domain_context([a, b]),
        subgroups={
            "a": {"words": ((1,),), "free": True},
            "b": {"words": ((2,),), "free": True},
            "a2b2": {"words": ((1, 1), (2, 2)), "free": True},
            "ab2": {"words": ((1,), (2, 2)), "free": True},
            "ab4": {"words": ((1,), (2, 2, 2, 2)), "free": True},
        },
    )


def _cyclic_preset():
    lam = math.e  # unit translation per power in the omega_1 value
    g = np.diag([lam, 1.0 / lam])
    return GroupPreset(
        name="cyclic",
        generators=(GroupElement(g),),
        theta=RootSubset(2, (1,)),
        assume_free=True,
        domain_context=_sl2_domain_context([g]),
    )


def _sym2_schottky_preset(lam=4.0):
    a, b = _schottky_generators(lam)
    sa, sb = sym2(a), sym2(b)
    return GroupPreset(
        name="sym2-schottky",
        generators=(GroupElement(sa), GroupElement(sb)),
        theta=RootSubset(3, (1, 2)),
        assume_free=True,
        domain_context=DomainContext(
            domain=_disk_domain(),
            dom_generators=(sa, sb),
            flag_boundary_batch=_so21_boundary_batch,
        ),
        subgroups={
            "a": {"words": ((1,),), "free": True},
            "a2b2": {"words": ((1, 1), (2, 2)), "free": True},
        },
    )


def _abelian_preset():
    a = np.diag([2.0, 0.5])
    b = np.diag([3.0, 1.0 / 3.0])
    return GroupPreset(
        name="abelian-rank2",
        generators=(GroupElement(a), GroupElement(b)),
        theta=RootSubset(2, (1,)),
        assume_free=False,
        exact_entries=(
            ((Fraction(2), Fraction(0)), (Fraction(0), Fraction(1, 2))),
            ((Fraction(3), Fraction(0)), (Fraction(0), Fraction(1, 3))),
        ),
    )


def _block_repeat_preset(lam=4.0):
    """diag(A, A) in SL(4): alpha_2 grows along the group, alpha_1/3 stay zero."""
    a, b = _schottky_generators(lam)
    ga = np.block([[a, np.zeros((2, 2))], [np.zeros((2, 2)), a]])
    gb = np.block([[b, np.zeros((2, 2))], [np.zeros((2, 2)), b]])
    return GroupPreset(
        name="block-repeat",
        generators=(GroupElement(ga), GroupElement(gb)),
        theta=RootSubset(4, (2,)),
        assume_free=True,
    )


def _elliptic_preset():
    return GroupPreset(
        name="elliptic",
        generators=(GroupElement(rotation2(1.0)),),
        theta=RootSubset(2, (1,)),
    )


def rotation3(axis, angle):
    axis = np.asarray(axis, float)
    axis = axis / np.linalg.norm(axis)
    K = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def _bent_sym2_preset(lam=4.0, bend=0.35):
    """Sym2 Schottky with one generator conjugated out of SO(2,1).

    Breaks the reducible structure, so the weight directions spread in two
    dimensions and the Manhattan curve dips strictly below its endpoints.
    """
    a, b = _schottky_generators(lam)
    E = rotation3([1.0, 0.35, 0.2], bend)
    return GroupPreset(
        name="bent-sym2",
        generators=(GroupElement(sym2(a)), GroupElement(E @ sym2(b) @ E.T)),
        theta=RootSubset(3, (1, 2)),
        assume_free=True,
    )


_REGISTRY = {
    "cyclic": _cyclic_preset,
    "schottky": lambda: _schottky_preset("schottky", 4.0),
    "thick-schottky": lambda: _schottky_preset("thick-schottky", 1.7, assume_free=False),
    "sym2-schottky": _sym2_schottky_preset,
    "abelian-rank2": _abelian_preset,
    "block-repeat": _block_repeat_preset,
    "elliptic": _elliptic_preset,
    "bent-sym2": _bent_sym2_preset,
}


def preset_names():
    return sorted(_REGISTRY)


def build_preset(name) -> GroupPreset:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        ) from None
    return factory()
