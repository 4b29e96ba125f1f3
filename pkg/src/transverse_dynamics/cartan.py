"""Exact-formula linear algebra of SL(d,R).

Cartan projections, partial flags, the partial Iwasawa cocycle in weight
coordinates, Gromov products of transverse flags, length functionals, and the
flag-convergence checker.  Everything here is pure and operates on immutable
values; all higher modules are built on top of these primitives.

Conventions:
  * kappa(g) is the vector of log singular values, sorted non-increasing.
  * alpha_k(H) = h_k - h_{k+1} (simple root), omega_k(H) = h_1 + ... + h_k
    (fundamental weight).
  * A flag stores a single d x m orthonormal matrix whose first i columns
    span F^i for every level i in theta, so nesting holds structurally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import (
    DegenerateGap,
    EigenFailure,
    NonSymmetricTheta,
    NotTransverse,
    PreconditionViolated,
    SingularMatrix,
)

DET_TOL = 1e-9
WORD_TOL = 1e-8
SUM_TOL = 1e-10
GAP_MIN = 1e-8
TRANSVERSE_TOL = 1e-10

_MIN_SINGULAR = 1e-300


def normalize_det(matrix):
    """Rescale a matrix to determinant one (the PSL-invariant lift).

    For odd d a negative determinant is absorbed into an overall sign; for
    even d it cannot be, and the matrix is rejected.
    """
    matrix = np.asarray(matrix, dtype=float)
    d = matrix.shape[0]
    if matrix.shape != (d, d):
        raise ValueError(f"expected a square matrix, got shape {matrix.shape}")
    det = np.linalg.det(matrix)
    if not np.isfinite(det) or abs(det) < _MIN_SINGULAR:
        raise SingularMatrix(f"determinant {det} too small to normalize")
    if det < 0:
        if d % 2 == 0:
            raise SingularMatrix(
                f"determinant {det} < 0 has no unimodular lift in even dimension {d}"
            )
        matrix = -matrix
        det = -det
    return matrix / det ** (1.0 / d)


def sign_canonicalize(matrix, tol=1e-12):
    """Fix the overall +/- sign of a matrix (PSL representative).

    The entry of largest absolute value is made positive; ties resolve to the
    first such entry in row-major order.
    """
    flat = np.asarray(matrix).ravel()
    idx = int(np.argmax(np.abs(flat)))
    if flat[idx] < -tol:
        return -np.asarray(matrix)
    return np.asarray(matrix)


@dataclass(frozen=True)
class GroupElement:
    """A unimodular d x d matrix together with the generator word producing it.

    The word is a tuple of signed 1-based generator indices (+k for the k-th
    generator, -k for its inverse); it may be empty for ad-hoc elements.
    """

    matrix: np.ndarray
    word: tuple = ()

    def __post_init__(self):
        mat = normalize_det(self.matrix)
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "word", tuple(int(w) for w in self.word))

    @property
    def d(self):
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, d):
        return cls(np.eye(d))

    def inverse(self):
        return GroupElement(
            np.linalg.inv(self.matrix), tuple(-w for w in reversed(self.word))
        )

    def __matmul__(self, other):
        return GroupElement(
            self.matrix @ other.matrix, reduce_word(self.word + other.word)
        )

    def __repr__(self):
        return f"GroupElement(d={self.d}, word={self.word})"


def reduce_word(word):
    """Freely reduce a word of signed generator indices."""
    out = []
    for letter in word:
        if out and out[-1] == -letter:
            out.pop()
        else:
            out.append(letter)
    return tuple(out)


def evaluate_word(word, generators):
    """Multiply out a signed word over a list of generator matrices."""
    d = generators[0].shape[0]
    mat = np.eye(d)
    for letter in word:
        g = generators[abs(letter) - 1]
        mat = mat @ (g if letter > 0 else np.linalg.inv(g))
    return mat


@dataclass(frozen=True)
class CartanVector:
    """A point of the model Cartan subspace: a trace-zero real d-vector."""

    entries: np.ndarray

    def __post_init__(self):
        ent = np.asarray(self.entries, dtype=float)
        ent.setflags(write=False)
        object.__setattr__(self, "entries", ent)
        if abs(float(ent.sum())) > SUM_TOL * max(1.0, float(np.abs(ent).max(initial=0.0))):
            raise ValueError(f"entries must sum to zero, got sum {ent.sum()}")

    @property
    def d(self):
        return len(self.entries)

    def simple_root(self, k):
        """alpha_k = a_k - a_{k+1} (1-based)."""
        return float(self.entries[k - 1] - self.entries[k])

    def min_gap(self, theta):
        return min(self.simple_root(k) for k in theta.indices)

    def __add__(self, other):
        return CartanVector(self.entries + other.entries)

    def __sub__(self, other):
        return CartanVector(self.entries - other.entries)


@dataclass(frozen=True)
class RootSubset:
    """A subset theta of the simple roots {1, ..., d-1}."""

    d: int
    indices: tuple

    def __post_init__(self):
        idx = tuple(sorted(set(int(i) for i in self.indices)))
        object.__setattr__(self, "indices", idx)
        if not idx:
            raise ValueError("theta must be non-empty")
        if idx[0] < 1 or idx[-1] > self.d - 1:
            raise ValueError(f"theta {idx} out of range for d={self.d}")

    @property
    def is_symmetric(self):
        return all(self.d - k in self.indices for k in self.indices)

    def require_symmetric(self):
        if not self.is_symmetric:
            raise NonSymmetricTheta(
                f"theta {self.indices} is not symmetric for d={self.d}"
            )

    def __iter__(self):
        return iter(self.indices)

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class WeightVector:
    """An a_theta-vector stored in fundamental-weight coordinates."""

    theta: RootSubset
    values: dict

    def __post_init__(self):
        vals = {int(k): float(v) for k, v in self.values.items()}
        if set(vals) != set(self.theta.indices):
            raise ValueError(f"values keyed by {set(vals)}, expected {self.theta.indices}")
        object.__setattr__(self, "values", vals)

    def __getitem__(self, k):
        return self.values[k]

    def as_array(self):
        return np.array([self.values[k] for k in self.theta.indices])

    def sup_norm(self):
        return max(abs(v) for v in self.values.values())

    def iota(self):
        """Apply the opposition involution: omega_k value becomes omega_{d-k}'s."""
        self.theta.require_symmetric()
        d = self.theta.d
        return WeightVector(self.theta, {k: self.values[d - k] for k in self.theta})

    def __add__(self, other):
        return WeightVector(
            self.theta, {k: self.values[k] + other.values[k] for k in self.theta}
        )

    def __sub__(self, other):
        return WeightVector(
            self.theta, {k: self.values[k] - other.values[k] for k in self.theta}
        )

    def __neg__(self):
        return WeightVector(self.theta, {k: -v for k, v in self.values.items()})


@dataclass(frozen=True)
class LinearFunctional:
    """phi in a*_theta in fundamental-weight coordinates: phi = sum c_k omega_k."""

    theta: RootSubset
    coeffs: dict

    def __post_init__(self):
        cf = {int(k): float(v) for k, v in self.coeffs.items()}
        if not set(cf) <= set(self.theta.indices):
            raise ValueError(f"coefficients keyed outside theta {self.theta.indices}")
        for k in self.theta.indices:
            cf.setdefault(k, 0.0)
        object.__setattr__(self, "coeffs", cf)

    def __call__(self, arg):
        if isinstance(arg, CartanVector):
            csum = np.cumsum(arg.entries)
            return float(sum(self.coeffs[k] * csum[k - 1] for k in self.theta))
        if isinstance(arg, WeightVector):
            return float(sum(self.coeffs[k] * arg.values[k] for k in self.theta))
        raise TypeError(f"cannot evaluate functional on {type(arg)!r}")

    def scaled(self, c):
        return LinearFunctional(self.theta, {k: c * v for k, v in self.coeffs.items()})

    def blend(self, other, lam):
        """lam * self + (1 - lam) * other, on a shared theta."""
        if self.theta != other.theta:
            raise ValueError("functionals live on different root subsets")
        return LinearFunctional(
            self.theta,
            {k: lam * self.coeffs[k] + (1.0 - lam) * other.coeffs[k] for k in self.theta},
        )

    def __repr__(self):
        terms = ", ".join(f"{k}: {v:g}" for k, v in sorted(self.coeffs.items()))
        return f"LinearFunctional({{{terms}}})"


def omega(theta, k):
    """The fundamental weight omega_k as a functional on a*_theta."""
    return LinearFunctional(theta, {k: 1.0})


# ---------------------------------------------------------------------------
# Cartan projection and friends


def cartan_project(g) -> CartanVector:
    """Cartan projection: sorted log singular values of a group element."""
    mat = g.matrix if isinstance(g, GroupElement) else np.asarray(g, dtype=float)
    sigma = np.linalg.svd(mat, compute_uv=False)
    if sigma[-1] < _MIN_SINGULAR:
        raise SingularMatrix(f"smallest singular value {sigma[-1]} underflows")
    logs = np.log(sigma)
    return CartanVector(logs - logs.mean())


def weight_coords(H: CartanVector, theta: RootSubset) -> WeightVector:
    """Partial Cartan projection in weight coordinates: omega_k(H) = h_1+...+h_k."""
    csum = np.cumsum(H.entries)
    return WeightVector(theta, {k: float(csum[k - 1]) for k in theta})


def kappa_theta(g, theta: RootSubset) -> WeightVector:
    return weight_coords(cartan_project(g), theta)


def opposition(H: CartanVector) -> CartanVector:
    """The opposition involution: entry reversal and negation."""
    return CartanVector(-H.entries[::-1])


def dual_functional(phi: LinearFunctional) -> LinearFunctional:
    """phi-bar = phi o iota; coefficient k picks up the coefficient at d-k."""
    phi.theta.require_symmetric()
    d = phi.theta.d
    return LinearFunctional(phi.theta, {k: phi.coeffs[d - k] for k in phi.theta})


# ---------------------------------------------------------------------------
# Flags


@dataclass(frozen=True)
class PartialFlag:
    """Nested subspaces F^i of R^d for i in theta.

    Stored as one d x m orthonormal matrix (m = max theta) whose first i
    columns span F^i; nesting is structural rather than re-checked.
    """

    theta: RootSubset
    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)
        d, m = b.shape
        if d != self.theta.d or m < max(self.theta.indices):
            raise ValueError(f"basis shape {b.shape} unfit for theta {self.theta.indices}")
        if np.abs(b.T @ b - np.eye(m)).max() > 1e-8:
            raise ValueError("flag basis columns are not orthonormal")

    @property
    def d(self):
        return self.theta.d

    def level(self, i):
        """Orthonormal basis matrix of F^i."""
        return self.basis[:, :i]

    def act(self, g):
        """Image flag under a group element (or raw matrix)."""
        mat = g.matrix if isinstance(g, GroupElement) else np.asarray(g, dtype=float)
        return PartialFlag(self.theta, _orthonormalize(mat @ self.basis))

    @classmethod
    def from_columns(cls, theta, columns):
        """Build a flag whose F^i is spanned by the first i supplied columns."""
        return cls(theta, _orthonormalize(np.asarray(columns, dtype=float)))

    @classmethod
    def standard(cls, theta):
        m = max(theta.indices)
        return cls(theta, np.eye(theta.d)[:, :m])

    @classmethod
    def reversed_standard(cls, theta):
        m = max(theta.indices)
        cols = np.eye(theta.d)[:, ::-1][:, :m]
        return cls(theta, cols)


def _orthonormalize(columns):
    q, r = np.linalg.qr(columns)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def _orthocomplement(basis):
    """Orthonormal basis of the orthogonal complement of the column span."""
    d, k = basis.shape
    q, _ = np.linalg.qr(np.hstack([basis, np.eye(d)]))
    return q[:, k:d]


def u_theta(g, theta: RootSubset, gap_min=GAP_MIN) -> PartialFlag:
    """Flag of leading left singular vectors of g at the levels of theta."""
    mat = g.matrix if isinstance(g, GroupElement) else np.asarray(g, dtype=float)
    u, sigma, _ = np.linalg.svd(mat)
    logs = np.log(np.maximum(sigma, _MIN_SINGULAR))
    for k in theta:
        if logs[k - 1] - logs[k] <= gap_min:
            raise DegenerateGap(
                f"singular-value gap alpha_{k} = {logs[k - 1] - logs[k]:.3e} "
                f"below gap_min = {gap_min:.1e}"
            )
    m = max(theta.indices)
    # canonical column signs so equal flags get equal bases
    cols = u[:, :m].copy()
    for j in range(m):
        lead = np.argmax(np.abs(cols[:, j]))
        if cols[lead, j] < 0:
            cols[:, j] = -cols[:, j]
    return PartialFlag(theta, cols)


def iwasawa_cocycle(g, F: PartialFlag) -> WeightVector:
    """Partial Iwasawa cocycle in weight coordinates.

    omega_j coordinate equals the log expansion of the j-th exterior power of
    g on F^j, computed as a Gram determinant (exterior powers are never
    materialized).
    """
    mat = g.matrix if isinstance(g, GroupElement) else np.asarray(g, dtype=float)
    vals = {}
    for j in F.theta:
        gm = mat @ F.level(j)
        gram = gm.T @ gm
        sign, logdet = np.linalg.slogdet(gram)
        if sign <= 0:
            raise SingularMatrix(f"degenerate Gram determinant at level {j}")
        vals[j] = 0.5 * logdet
    return WeightVector(F.theta, vals)


def is_transverse(F: PartialFlag, G: PartialFlag, tol=TRANSVERSE_TOL):
    """Test F^j + G^{d-j} = R^d for every j in theta.

    Returns (bool, conditioning) where conditioning is the minimum over j of
    |det| of the stacked orthonormal bases (in [0, 1]).
    """
    if F.theta != G.theta:
        raise ValueError("flags live on different root subsets")
    F.theta.require_symmetric()
    d = F.d
    cond = 1.0
    for j in F.theta:
        stacked = np.hstack([F.level(j), G.level(d - j)])
        cond = min(cond, abs(np.linalg.det(stacked)))
    return cond > tol, cond


def gromov_product(F: PartialFlag, G: PartialFlag, tol=TRANSVERSE_TOL) -> WeightVector:
    """Gromov product of transverse flags in weight coordinates.

    Realization: value at j is log |det(A^T C)| where A spans G^j and C spans
    the orthogonal complement of F^{d-j}.  This is the unique orientation and
    sign of the orthocomplement-pairing determinant that simultaneously
    vanishes on the standard opposite pair and satisfies the cocycle identity
      [gF, gG] - [F, G] = -iota(B(g, F)) - B(g, G).
    """
    ok, cond = is_transverse(F, G, tol)
    if not ok:
        raise NotTransverse(f"conditioning {cond:.3e} below tolerance {tol:.1e}")
    d = F.d
    vals = {}
    for j in F.theta:
        A = G.level(j)
        C = _orthocomplement(F.level(d - j))
        det = np.linalg.det(A.T @ C)
        vals[j] = math.log(abs(det))
    return WeightVector(F.theta, vals)


def flag_distance(F: PartialFlag, G: PartialFlag) -> float:
    """Largest principal angle between corresponding subspaces, max over levels."""
    if F.theta != G.theta:
        raise ValueError("flags live on different root subsets")
    worst = 0.0
    for j in F.theta:
        s = np.linalg.svd(F.level(j).T @ G.level(j), compute_uv=False)
        worst = max(worst, math.acos(min(1.0, max(-1.0, s.min()))))
    return worst


FLAG_DIAMETER = math.pi / 2.0


# ---------------------------------------------------------------------------
# Lengths


def jordan_project(g) -> CartanVector:
    """Jordan projection: sorted log moduli of eigenvalues."""
    mat = g.matrix if isinstance(g, GroupElement) else np.asarray(g, dtype=float)
    try:
        eig = np.linalg.eigvals(mat)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    logs = np.sort(np.log(np.maximum(np.abs(eig), _MIN_SINGULAR)))[::-1]
    return CartanVector(logs - logs.mean())


def phi_length(g, phi: LinearFunctional) -> float:
    """phi-length: phi applied to the Jordan projection of g."""
    return phi(jordan_project(g))


def exterior_power_batch(mats, k):
    """k-th exterior powers of a stack of matrices (minor determinants)."""
    d = mats.shape[-1]
    if k == 1:
        return mats
    rows = list(combinations(range(d), k))
    n = len(rows)
    out = np.empty((mats.shape[0], n, n))
    for a, idx_i in enumerate(rows):
        block = mats[:, idx_i, :]
        for b, idx_j in enumerate(rows):
            out[:, a, b] = np.linalg.det(block[:, :, idx_j])
    return out


def phi_length_power_estimate(g, phi: LinearFunctional, doublings=10) -> float:
    """Independent estimate of the phi-length as phi(kappa(g^n))/n, n = 2^k.

    Each weight value omega_k(kappa(g^n)) = log sigma_1(Lambda^k g^n) is
    obtained by squaring the k-th exterior power with peak rescaling, so only
    top singular values enter and nothing under- or overflows.
    """
    mat = np.asarray(g.matrix if isinstance(g, GroupElement) else g, dtype=float)
    n = 2.0 ** doublings
    value = 0.0
    for k in phi.theta:
        coeff = phi.coeffs[k]
        if coeff == 0.0:
            continue
        ext = exterior_power_batch(mat[None], k)[0]
        log_scale = 0.0
        for _ in range(doublings):
            ext = ext @ ext
            log_scale *= 2.0
            peak = np.abs(ext).max()
            if peak < _MIN_SINGULAR:
                raise EigenFailure("exterior power collapsed to zero")
            ext /= peak
            log_scale += math.log(peak)
        top = float(np.linalg.svd(ext, compute_uv=False)[0])
        value += coeff * (math.log(top) + log_scale)
    return float(value / n)


# ---------------------------------------------------------------------------
# Quint gap diagnostic and the flag-convergence checker


def quint_gap_check(g, F: PartialFlag, eps) -> float:
    """Sup-norm of B_theta(g, F) - kappa_theta(g) in weight coordinates.

    Precondition: F stays eps-away from the non-transverse locus of
    U_theta(g^{-1}); uniform boundedness over families is the caller's claim.
    """
    ginv = g.inverse() if isinstance(g, GroupElement) else np.linalg.inv(g)
    rep_flag = u_theta(ginv, F.theta)
    _, cond = is_transverse(F, rep_flag)
    if cond < eps:
        raise PreconditionViolated(
            f"conditioning {cond:.3e} against the repelling flag is below eps={eps:.1e}"
        )
    diff = iwasawa_cocycle(g, F) - kappa_theta(g, F.theta)
    return diff.sup_norm()


@dataclass
class FlagConvergenceReport:
    """Tail diagnostics for the four equivalent contraction conditions."""

    dist_plus: np.ndarray
    dist_minus: np.ndarray
    min_gap: np.ndarray
    probe_plus: np.ndarray
    probe_minus: np.ndarray
    cond_kak: bool = False
    cond_forward: bool = False
    cond_backward: bool = False
    cond_open_sets: bool = False

    @property
    def verdicts(self):
        return (self.cond_kak, self.cond_forward, self.cond_backward, self.cond_open_sets)

    @property
    def unanimous(self):
        return len(set(self.verdicts)) == 1


def check_flag_convergence(
    gs,
    Fplus: PartialFlag,
    Fminus: PartialFlag,
    probes,
    conv_tol=1e-3,
    gap_floor=5.0,
    probe_guard=1e-6,
) -> FlagConvergenceReport:
    """Check the four contraction conditions along a sequence of elements.

    Probes must avoid the non-transverse loci of Fminus (for forward pushes)
    and Fplus (for backward pushes); offending probes are rejected.
    """
    theta = Fplus.theta
    theta.require_symmetric()
    for p in probes:
        for ref in (Fplus, Fminus):
            _, cond = is_transverse(p, ref)
            if cond < probe_guard:
                raise PreconditionViolated(
                    f"probe conditioning {cond:.3e} against a target flag "
                    f"is below {probe_guard:.1e}"
                )

    dist_plus, dist_minus, min_gap = [], [], []
    probe_plus, probe_minus, probe_plus_best, probe_minus_best = [], [], [], []
    for g in gs:
        ginv = g.inverse()
        kappa = cartan_project(g)
        min_gap.append(kappa.min_gap(theta))
        try:
            dist_plus.append(flag_distance(u_theta(g, theta), Fplus))
            dist_minus.append(flag_distance(u_theta(ginv, theta), Fminus))
        except DegenerateGap:
            dist_plus.append(FLAG_DIAMETER)
            dist_minus.append(FLAG_DIAMETER)
        fwd = [flag_distance(p.act(g), Fplus) for p in probes]
        bwd = [flag_distance(p.act(ginv), Fminus) for p in probes]
        probe_plus.append(max(fwd))
        probe_minus.append(max(bwd))
        probe_plus_best.append(min(fwd))
        probe_minus_best.append(min(bwd))

    dist_plus = np.array(dist_plus)
    dist_minus = np.array(dist_minus)
    min_gap = np.array(min_gap)
    probe_plus = np.array(probe_plus)
    probe_minus = np.array(probe_minus)
    probe_plus_best = np.array(probe_plus_best)
    probe_minus_best = np.array(probe_minus_best)

    tail = max(2, len(min_gap) // 4)

    def settles(values):
        return float(values[-tail:].max()) < conv_tol

    gaps_diverge = bool(
        min_gap[-1] > gap_floor and np.all(np.diff(min_gap[-tail:]) > -1e-9)
    )
    report = FlagConvergenceReport(
        dist_plus=dist_plus,
        dist_minus=dist_minus,
        min_gap=min_gap,
        probe_plus=probe_plus,
        probe_minus=probe_minus,
    )
    report.cond_kak = bool(settles(dist_plus) and settles(dist_minus) and gaps_diverge)
    report.cond_forward = bool(settles(probe_plus))
    report.cond_backward = bool(settles(probe_minus))
    # condition (4) only asks for SOME open sets that contract, so it is
    # scored on the best probe rather than the worst
    report.cond_open_sets = bool(settles(probe_plus_best) and settles(probe_minus_best))
    return report
