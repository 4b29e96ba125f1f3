"""Word-ball enumeration for finitely generated matrix groups.

Breadth-first closure of freely reduced words with matrix deduplication,
per-sphere Cartan data stored as flat numpy arrays, divergence and limit-set
diagnostics, and the explicit compactification metric.

Spheres are kept in lexicographic word order (generator 1, its inverse,
generator 2, ...), so every downstream partial sum is reproducible.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .cartan import (
    FLAG_DIAMETER,
    GroupElement,
    PartialFlag,
    RootSubset,
    cartan_project,
    exterior_power_batch,
    flag_distance,
    reduce_word,
)
from .errors import NonDiscreteSuspect, PresetError

DEDUP_QUANTUM = 1e-6
DEDUP_CONFIRM = 1e-7
COLLISION_ALARM = 1e-12


# ---------------------------------------------------------------------------
# Presets


@dataclass(frozen=True)
class DomainContext:
    """Convex-domain action attached to a preset (ball geometry for shadows)."""

    domain: object
    dom_generators: tuple
    flag_boundary_batch: object  # (N, d, m) flag bases -> (N, dim) chart points
    r0: float = None

    def domain_matrix(self, word):
        d0 = self.dom_generators[0].shape[0]
        mat = np.eye(d0)
        for letter in word:
            g = self.dom_generators[abs(letter) - 1]
            mat = mat @ (g if letter > 0 else np.linalg.inv(g))
            mat /= np.abs(mat).max()  # projective rescale, keeps long words finite
        return mat

    def orbit_point(self, word, b0=None):
        from .hilbert import chart_action

        b0 = self.domain.basepoint if b0 is None else np.asarray(b0, float)
        return chart_action(self.domain_matrix(word), b0)

    def flag_to_boundary(self, flag):
        return self.flag_boundary_batch(flag.basis[None])[0]


@dataclass(frozen=True)
class GroupPreset:
    """A named generating set in SL(d,R) with its root subset and extras.

    Inverses are adjoined automatically.  subgroups maps a label to a tuple
    of signed words over the preset generators.
    """

    name: str
    generators: tuple
    theta: RootSubset
    assume_free: bool = False
    exact_entries: tuple = None
    domain_context: DomainContext = None
    subgroups: dict = field(default_factory=dict)

    def __post_init__(self):
        gens = tuple(
            g if isinstance(g, GroupElement) else GroupElement(g) for g in self.generators
        )
        object.__setattr__(self, "generators", gens)
        d = gens[0].d
        if any(g.d != d for g in gens) or self.theta.d != d:
            raise PresetError("generator dimensions and theta dimension disagree")
        for i, g in enumerate(gens):
            kappa = cartan_project(g)
            if np.abs(kappa.entries).max() < 1e-12:
                power = np.eye(d)
                for k in range(1, 25):
                    power = power @ g.matrix
                    if np.abs(power - np.eye(d)).max() < 1e-9:
                        raise PresetError(
                            f"generator {i + 1} is elliptic of finite order {k}"
                        )

    @property
    def d(self):
        return self.generators[0].d

    def element(self, word):
        word = reduce_word(word)
        mat = np.eye(self.d)
        for letter in word:
            g = self.generators[abs(letter) - 1].matrix
            mat = mat @ (g if letter > 0 else np.linalg.inv(g))
        return GroupElement(mat, word)

    def subgroup_preset(self, label):
        spec = self.subgroups[label]
        words = spec["words"] if isinstance(spec, dict) else spec
        free = spec.get("free", False) if isinstance(spec, dict) else False
        gens = tuple(self.element(tuple(w)) for w in words)
        ctx = self.domain_context
        sub_ctx = None
        if ctx is not None:
            sub_ctx = DomainContext(
                domain=ctx.domain,
                dom_generators=tuple(ctx.domain_matrix(tuple(w)) for w in words),
                flag_boundary_batch=ctx.flag_boundary_batch,
                r0=ctx.r0,
            )
        return GroupPreset(
            name=f"{self.name}:{label}",
            generators=gens,
            theta=self.theta,
            assume_free=free,
            domain_context=sub_ctx,
        )

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(self.name.encode())
        for g in self.generators:
            h.update(np.ascontiguousarray(g.matrix).tobytes())
        h.update(repr(self.theta.indices).encode())
        return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# Weight coordinates in bulk


def _top_log_sv(mats):
    """log of the largest singular value, batched, relative-accurate."""
    gram = np.einsum("nij,nik->njk", mats, mats)
    if gram.shape[-1] == 1:
        lam = gram[:, 0, 0]
    elif gram.shape[-1] == 2:
        t = gram[:, 0, 0] + gram[:, 1, 1]
        det = gram[:, 0, 0] * gram[:, 1, 1] - gram[:, 0, 1] * gram[:, 1, 0]
        lam = 0.5 * (t + np.sqrt(np.maximum(t * t - 4.0 * det, 0.0)))
    else:
        lam = np.linalg.eigvalsh(gram)[:, -1]
    return 0.5 * np.log(np.maximum(lam, 1e-300))


def weights_batch(mats):
    """All fundamental-weight values omega_k(kappa(.)), k = 1..d-1, batched.

    omega_k is realized as log of the top singular value of the k-th exterior
    power, which stays relative-accurate when kappa is large.  Matrices are
    rescaled by their peak entry first so the Gram products cannot overflow
    (Lambda^k of cM is c^k Lambda^k M).
    """
    d = mats.shape[-1]
    peaks = np.abs(mats).reshape(len(mats), -1).max(axis=1)
    peaks = np.maximum(peaks, 1e-300)
    scaled = mats / peaks[:, None, None]
    logp = np.log(peaks)
    out = np.empty((mats.shape[0], d - 1))
    for k in range(1, d):
        out[:, k - 1] = _top_log_sv(exterior_power_batch(scaled, k)) + k * logp
    return out


def alpha_gaps(weights):
    """Simple-root values alpha_k = 2 omega_k - omega_{k-1} - omega_{k+1}."""
    n, dm1 = weights.shape
    padded = np.zeros((n, dm1 + 2))
    padded[:, 1:-1] = weights
    return 2.0 * padded[:, 1:-1] - padded[:, :-2] - padded[:, 2:]


def _canonicalize_signs(mats):
    flat = mats.reshape(len(mats), -1)
    idx = np.argmax(np.abs(flat), axis=1)
    signs = np.sign(flat[np.arange(len(mats)), idx])
    signs[signs == 0] = 1.0
    return mats * signs[:, None, None]


def flags_batch(mats, theta, canonical=True):
    """Leading left-singular flags of a stack of matrices, as (N, d, m) bases."""
    d = mats.shape[-1]
    m = max(theta.indices)
    if d == 2:
        # top eigenvector of M M^T, closed form
        s = np.einsum("nij,nkj->nik", mats, mats)
        p, q, r = s[:, 0, 0], s[:, 0, 1], s[:, 1, 1]
        lam = 0.5 * (p + r + np.sqrt(np.maximum((p - r) ** 2 + 4 * q * q, 0.0)))
        v = np.stack([q, lam - p], axis=1)
        degenerate = np.linalg.norm(v, axis=1) < 1e-30
        v[degenerate] = np.where(p[degenerate, None] >= r[degenerate, None], [1.0, 0.0], [0.0, 1.0])
        v /= np.linalg.norm(v, axis=1)[:, None]
        basis = v[:, :, None]
    else:
        u, _, _ = np.linalg.svd(mats)
        basis = u[:, :, :m].copy()
    if canonical:
        for j in range(basis.shape[2]):
            col = basis[:, :, j]
            lead = np.argmax(np.abs(col), axis=1)
            sgn = np.sign(col[np.arange(len(col)), lead])
            sgn[sgn == 0] = 1.0
            basis[:, :, j] = col * sgn[:, None]
    return basis


# ---------------------------------------------------------------------------
# Word balls


@dataclass
class WordBall:
    """Deduplicated ball of group elements, stored sphere by sphere."""

    preset: GroupPreset
    radius: int
    sphere_mats: list
    sphere_words: list  # uint8 letter ids, shape (N_n, n)
    sphere_weights: list  # (N_n, d-1) fundamental weights of kappa
    sphere_orbit_points: list = None  # (N_n, dim) chart points, when domain present
    dedup_report: dict = field(default_factory=dict)
    budget_exceeded: bool = False

    @property
    def n_elements(self):
        return sum(len(m) for m in self.sphere_mats)

    @property
    def sphere_sizes(self):
        return [len(m) for m in self.sphere_mats]

    def all_weights(self):
        return np.vstack(self.sphere_weights)

    def word_lengths(self):
        return np.concatenate(
            [np.full(len(m), n, dtype=int) for n, m in enumerate(self.sphere_mats)]
        )

    def phi_values(self, phi):
        """phi(kappa_theta(gamma)) for every element, ball order."""
        coeff = np.zeros(self.preset.d - 1)
        for k, c in phi.coeffs.items():
            coeff[k - 1] = c
        return self.all_weights() @ coeff

    def signed_word(self, sphere, index):
        ids = self.sphere_words[sphere][index]
        return tuple(int(i // 2 + 1) if i % 2 == 0 else -int(i // 2 + 1) for i in ids)

    def element(self, sphere, index):
        return GroupElement(
            self.sphere_mats[sphere][index], self.signed_word(sphere, index)
        )

    def iter_words(self):
        for n in range(len(self.sphere_words)):
            for i in range(len(self.sphere_words[n])):
                yield n, i, self.signed_word(n, i)

    def flags(self, sphere=None, indices=None):
        mats = self.sphere_mats[sphere if sphere is not None else -1]
        if indices is not None:
            mats = mats[indices]
        return flags_batch(mats, self.preset.theta)

    def min_alpha_by_sphere(self, theta=None):
        theta = theta or self.preset.theta
        cols = [k - 1 for k in theta.indices]
        out = []
        for w in self.sphere_weights:
            if len(w) == 0:
                out.append(float("nan"))
                continue
            out.append(float(alpha_gaps(w)[:, cols].min()))
        return np.array(out)

    def sphere_stats_rows(self):
        rows = []
        mins = self.min_alpha_by_sphere()
        for n, w in enumerate(self.sphere_weights):
            rows.append(
                {
                    "sphere": n,
                    "count": len(w),
                    "min_alpha": mins[n],
                    "min_omega1": float(w[:, 0].min()) if len(w) else float("nan"),
                    "max_omega1": float(w[:, 0].max()) if len(w) else float("nan"),
                }
            )
        return rows

    # -- cache ---------------------------------------------------------------

    def cache_key(self):
        return f"{self.preset.fingerprint()}_r{self.radius}"

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, f"ball_{self.cache_key()}.npz")
        payload = {"radius": np.array([self.radius])}
        for n in range(len(self.sphere_mats)):
            payload[f"mats_{n}"] = self.sphere_mats[n]
            payload[f"words_{n}"] = self.sphere_words[n]
            payload[f"weights_{n}"] = self.sphere_weights[n]
            if self.sphere_orbit_points is not None:
                payload[f"orbit_{n}"] = self.sphere_orbit_points[n]
        np.savez_compressed(path, **payload)
        return path

    @classmethod
    def load(cls, preset, radius, directory):
        key = f"{preset.fingerprint()}_r{radius}"
        path = os.path.join(directory, f"ball_{key}.npz")
        if not os.path.exists(path):
            return None
        data = np.load(path)
        mats, words, weights, orbit = [], [], [], []
        has_orbit = "orbit_0" in data
        for n in range(radius + 1):
            mats.append(data[f"mats_{n}"])
            words.append(data[f"words_{n}"])
            weights.append(data[f"weights_{n}"])
            if has_orbit:
                orbit.append(data[f"orbit_{n}"])
        return cls(
            preset=preset,
            radius=radius,
            sphere_mats=mats,
            sphere_words=words,
            sphere_weights=weights,
            sphere_orbit_points=orbit if has_orbit else None,
            dedup_report={"loaded_from": path},
        )


def enumerate_ball(
    preset: GroupPreset,
    radius: int,
    budget: int = None,
    dedup_quantum: float = DEDUP_QUANTUM,
    confirm_tol: float = DEDUP_CONFIRM,
    exact: bool = False,
) -> WordBall:
    """Breadth-first closure of reduced words up to the radius.

    Deduplication is by quantized-matrix hashing with entrywise confirmation;
    kept representatives are the lexicographically first words.  With
    exact=True (rational presets only) dedup uses exact Fraction arithmetic.
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if exact:
        return _enumerate_ball_exact(preset, radius, budget)

    d = preset.d
    m = len(preset.generators)
    letter_mats = []
    for g in preset.generators:
        letter_mats.append(g.matrix)
        letter_mats.append(np.linalg.inv(g.matrix))

    ctx = preset.domain_context
    dom_letters = None
    if ctx is not None:
        dom_letters = []
        for g in ctx.dom_generators:
            dom_letters.append(np.asarray(g, float))
            dom_letters.append(np.linalg.inv(g))
        b0h = np.concatenate([[1.0], ctx.domain.basepoint])

    sphere_mats = [np.eye(d)[None]]
    sphere_words = [np.zeros((1, 0), dtype=np.uint8)]
    sphere_weights = [np.zeros((1, d - 1))]
    sphere_canon = [_canonicalize_signs(np.eye(d)[None])]
    sphere_orbit = None
    dom_frontier = None
    if ctx is not None:
        sphere_orbit = [ctx.domain.basepoint[None].copy()]
        dom_frontier = np.eye(len(b0h))[None]

    seen_keys = {_key_bytes(sphere_canon[0], dedup_quantum)[0]: [(0, 0)]}
    collisions = 0
    total = 1
    budget_hit = False

    frontier_mats = sphere_mats[0]
    frontier_words = sphere_words[0]
    frontier_last = np.full(1, 255, dtype=np.uint8)

    for n in range(1, radius + 1):
        blocks_mat, blocks_word, blocks_last, blocks_src, blocks_letter = [], [], [], [], []
        blocks_dom = []
        for letter in range(2 * m):
            mask = frontier_last != (letter ^ 1)
            if not mask.any():
                continue
            rows = np.where(mask)[0]
            blocks_mat.append(frontier_mats[rows] @ letter_mats[letter])
            blocks_word.append(
                np.hstack(
                    [frontier_words[rows], np.full((len(rows), 1), letter, dtype=np.uint8)]
                )
            )
            blocks_last.append(np.full(len(rows), letter, dtype=np.uint8))
            blocks_src.append(rows)
            blocks_letter.append(np.full(len(rows), letter, dtype=np.uint8))
            if ctx is not None:
                dm = dom_frontier[rows] @ dom_letters[letter]
                # domain matrices are projective: rescale so powers never overflow
                dm /= np.abs(dm).reshape(len(dm), -1).max(axis=1)[:, None, None]
                blocks_dom.append(dm)
        cand_mats = np.vstack(blocks_mat)
        cand_words = np.vstack(blocks_word)
        cand_last = np.concatenate(blocks_last)
        cand_src = np.concatenate(blocks_src)
        cand_letter = np.concatenate(blocks_letter)
        cand_dom = np.vstack(blocks_dom) if ctx is not None else None

        order = np.lexsort((cand_letter, cand_src))
        canon = _canonicalize_signs(cand_mats)
        keys = _key_bytes(canon, dedup_quantum)

        kept = []
        for i in order:
            key = keys[i]
            hit = seen_keys.get(key)
            if hit is None:
                seen_keys[key] = [(n, len(kept))]
                kept.append(i)
                continue
            merged = False
            for sn, si in hit:
                stored = sphere_canon[sn][si] if sn < n else canon[kept[si]]
                dist = float(np.abs(stored - canon[i]).max())
                if dist <= confirm_tol:
                    collisions += 1
                    merged = True
                    if preset.assume_free:
                        raise NonDiscreteSuspect(
                            f"free preset {preset.name!r}: distinct words collide "
                            f"(entrywise distance {dist:.2e})"
                        )
                    break
            if not merged:
                hit.append((n, len(kept)))
                kept.append(i)

        kept = np.array(kept, dtype=np.int64)
        if budget is not None and total + len(kept) > budget:
            kept = kept[: max(0, budget - total)]
            budget_hit = True

        # re-key the within-sphere entries now that local indices are final
        sphere_mats.append(cand_mats[kept])
        sphere_words.append(cand_words[kept])
        sphere_canon.append(canon[kept])
        sphere_weights.append(
            weights_batch(cand_mats[kept]) if len(kept) else np.zeros((0, d - 1))
        )
        if ctx is not None:
            dm = cand_dom[kept]
            pts = dm @ b0h
            sphere_orbit.append(pts[:, 1:] / pts[:, :1])
            dom_frontier = dm
        total += len(kept)

        frontier_mats = sphere_mats[-1]
        frontier_words = sphere_words[-1]
        frontier_last = cand_last[kept]
        if budget_hit or len(kept) == 0:
            break

    while len(sphere_mats) < radius + 1:
        sphere_mats.append(np.zeros((0, d, d)))
        sphere_words.append(np.zeros((0, 0), dtype=np.uint8))
        sphere_weights.append(np.zeros((0, d - 1)))
        if ctx is not None:
            sphere_orbit.append(np.zeros((0, ctx.domain.dim)))

    return WordBall(
        preset=preset,
        radius=radius,
        sphere_mats=sphere_mats,
        sphere_words=sphere_words,
        sphere_weights=sphere_weights,
        sphere_orbit_points=sphere_orbit,
        dedup_report={
            "collisions": collisions,
            "elements": total,
            "quantum": dedup_quantum,
            "confirm_tol": confirm_tol,
            "mode": "float",
        },
        budget_exceeded=budget_hit,
    )


def _key_bytes(canon, quantum):
    # clip before the int cast: entries beyond the int64 range fall into one
    # bucket per sign and the entrywise confirm pass separates them
    cells = np.clip(np.round(canon.reshape(len(canon), -1) / quantum), -2.0**62, 2.0**62)
    keys = cells.astype(np.int64)
    return [keys[i].tobytes() for i in range(len(keys))]


def _enumerate_ball_exact(preset, radius, budget=None):
    """Exact-rational BFS dedup for integer/rational presets."""
    if preset.exact_entries is None:
        raise PresetError(f"preset {preset.name!r} has no exact rational entries")
    d = preset.d
    gens = [tuple(tuple(Fraction(x) for x in row) for row in g) for g in preset.exact_entries]

    def fr_inv(mat):
        arr = np.array([[float(x) for x in row] for row in mat])
        # rational inverse via adjugate over Fraction for d <= 3
        mf = [list(row) for row in mat]
        if d == 1:
            return ((1 / mf[0][0],),)
        if d == 2:
            det = mf[0][0] * mf[1][1] - mf[0][1] * mf[1][0]
            return (
                (mf[1][1] / det, -mf[0][1] / det),
                (-mf[1][0] / det, mf[0][0] / det),
            )
        raise PresetError("exact mode supports d <= 2 presets")

    def fr_mul(a, b):
        return tuple(
            tuple(sum(a[i][k] * b[k][j] for k in range(d)) for j in range(d))
            for i in range(d)
        )

    letters = []
    for g in gens:
        letters.append(g)
        letters.append(fr_inv(g))

    ident = tuple(tuple(Fraction(int(i == j)) for j in range(d)) for i in range(d))
    seen = {ident: (0, 0)}
    spheres = [[(ident, ())]]
    total = 1
    collisions = 0
    budget_hit = False
    for n in range(1, radius + 1):
        layer = []
        layer_seen = set()
        for mat, word in spheres[-1]:
            last = word[-1] if word else None
            for letter in range(2 * len(gens)):
                if last is not None and letter == (last ^ 1):
                    continue
                new = fr_mul(mat, letters[letter])
                if new in seen or new in layer_seen:
                    collisions += 1
                    continue
                layer.append((new, word + (letter,)))
                layer_seen.add(new)
                if budget is not None and total + len(layer) > budget:
                    budget_hit = True
                    break
            if budget_hit:
                break
        for mat, word in layer:
            seen[mat] = (n, word)
        spheres.append(layer)
        total += len(layer)
        if budget_hit:
            break

    sphere_mats, sphere_words, sphere_weights = [], [], []
    for n, layer in enumerate(spheres):
        mats = np.array(
            [[[float(x) for x in row] for row in mat] for mat, _ in layer]
        ).reshape(len(layer), d, d)
        words = np.array([list(word) for _, word in layer], dtype=np.uint8).reshape(
            len(layer), n
        )
        sphere_mats.append(mats)
        sphere_words.append(words)
        sphere_weights.append(weights_batch(mats) if len(layer) else np.zeros((0, d - 1)))
    while len(sphere_mats) < radius + 1:
        sphere_mats.append(np.zeros((0, d, d)))
        sphere_words.append(np.zeros((0, 0), dtype=np.uint8))
        sphere_weights.append(np.zeros((0, d - 1)))

    return WordBall(
        preset=preset,
        radius=radius,
        sphere_mats=sphere_mats,
        sphere_words=sphere_words,
        sphere_weights=sphere_weights,
        dedup_report={"collisions": collisions, "elements": total, "mode": "exact"},
        budget_exceeded=budget_hit,
    )


# ---------------------------------------------------------------------------
# Diagnostics


def divergence_diagnostic(ball: WordBall, theta: RootSubset = None):
    """Per word-length minimum of the theta root gaps, with a growth verdict."""
    theta = theta or ball.preset.theta
    mins = ball.min_alpha_by_sphere(theta)
    rows = [
        {"sphere": n, "count": len(ball.sphere_weights[n]), "min_alpha": float(mins[n])}
        for n in range(len(mins))
    ]
    usable = mins[1:]
    usable = usable[~np.isnan(usable)]
    if len(usable) >= 4:
        tail = usable[len(usable) // 2 :]
        increasing = bool(np.all(np.diff(tail) > 1e-9) and tail[-1] > usable[0] + 1e-9)
    else:
        increasing = False
    return {
        "rows": rows,
        "verdict": "divergent-consistent" if increasing else "not-divergent",
        "theta": theta.indices,
    }


@dataclass
class LimitSetSample:
    """Flags of the outermost sphere with transversality conditioning summary."""

    theta: RootSubset
    bases: np.ndarray  # (N, d, m)
    words: list
    weights: np.ndarray
    conditioning: dict

    def flag(self, i):
        return PartialFlag(self.theta, bases_orthonormal(self.bases[i]))


def bases_orthonormal(basis):
    q, r = np.linalg.qr(basis)
    s = np.sign(np.diag(r))
    s[s == 0] = 1
    return q * s


def limit_set_sample(ball: WordBall, theta: RootSubset = None, max_flags=2000, pair_sample=200):
    """Flags U_theta(gamma) over the outermost sphere, with pairwise conditioning."""
    theta = theta or ball.preset.theta
    outer = len(ball.sphere_mats) - 1
    n = len(ball.sphere_mats[outer])
    if n == 0:
        raise ValueError("outermost sphere is empty")
    stride = max(1, n // max_flags)
    idx = np.arange(0, n, stride)
    bases = flags_batch(ball.sphere_mats[outer][idx], theta)
    words = [ball.signed_word(outer, int(i)) for i in idx]

    sub = idx[:: max(1, len(idx) // pair_sample)]
    sub_bases = flags_batch(ball.sphere_mats[outer][sub], theta)
    d = ball.preset.d
    conds = []
    for i in range(len(sub_bases)):
        for j in range(i + 1, len(sub_bases)):
            c = 1.0
            for k in theta.indices:
                stacked = np.hstack([sub_bases[i][:, :k], sub_bases[j][:, : d - k]])
                c = min(c, abs(np.linalg.det(stacked)))
            conds.append(c)
    conds = np.sort(np.array(conds)) if conds else np.array([1.0])
    summary = {
        "min": float(conds[0]),
        "q25": float(conds[len(conds) // 4]),
        "q50": float(conds[len(conds) // 2]),
        "q75": float(conds[(3 * len(conds)) // 4]),
        "pairs": len(conds),
    }
    return LimitSetSample(
        theta=theta,
        bases=bases,
        words=words,
        weights=np.full(len(idx), 1.0 / len(idx)),
        conditioning=summary,
    )


# ---------------------------------------------------------------------------
# Compactification metric (explicit metric from the limit-set compactification)


def m_theta(g, theta: RootSubset) -> float:
    """exp(-min over theta of the root gaps of kappa(g)); 1 at isometries."""
    kappa = cartan_project(g)
    return math.exp(-kappa.min_gap(theta))


def u_theta_any(g, theta: RootSubset) -> PartialFlag:
    """Leading singular flag without the gap guard (fixed choice at ties)."""
    mat = g.matrix if isinstance(g, GroupElement) else np.asarray(g, float)
    return PartialFlag(theta, flags_batch(mat[None], theta)[0])


def compactification_distance(a, b, theta: RootSubset) -> float:
    """The explicit metric on (group) union (limit flags).

    Group/group, group/flag and flag/flag branches; the flag factor is the
    principal-angle metric scaled to diameter one.
    """
    theta.require_symmetric()

    def scaled(F, G):
        return flag_distance(F, G) / FLAG_DIAMETER

    a_is_group = isinstance(a, GroupElement)
    b_is_group = isinstance(b, GroupElement)
    if a_is_group and b_is_group:
        if np.array_equal(a.matrix, b.matrix):
            return 0.0
        same = float(np.abs(a.matrix - b.matrix).max()) <= 1e-12
        disc = 0.0 if same else 1.0
        return max(m_theta(a, theta), m_theta(b, theta)) * disc + scaled(
            u_theta_any(a, theta), u_theta_any(b, theta)
        )
    if a_is_group != b_is_group:
        g, F = (a, b) if a_is_group else (b, a)
        return m_theta(g, theta) + scaled(u_theta_any(g, theta), F)
    return scaled(a, b)
