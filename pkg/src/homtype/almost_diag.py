"""Almost diagonal operators on cube-indexed sequences.

An operator is a sparse matrix over a :class:`~homtype.dyadic.CubeFamily`.
Its almost-diagonal constant ``K`` is the largest ratio of an entry to the
two-scale bound ``M_{Q,P}(eps)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .seqspaces import require_valid, seq_norm
from .space import ball_measures, mutual_volume_matrix
from .wavelets import CoefficientSequence

__all__ = [
    "CubeOperator",
    "bound_M",
    "bound_matrix",
    "ado_constant",
    "apply",
    "identity_operator",
    "random_ad_operator",
    "certify_boundedness",
    "random_sequence",
]

MASS_FLOOR = 1e-300


@dataclass
class CubeOperator:
    family: object
    matrix: sparse.csr_array
    kind: str = "homogeneous"

    def __post_init__(self):
        m = len(self.family)
        self.matrix = sparse.csr_array(self.matrix)
        if self.matrix.shape != (m, m):
            raise ValueError(f"operator shape {self.matrix.shape} does not match "
                             f"a family of {m} cubes")
        self.kind = self.family.kind

    def scaled(self, c):
        return CubeOperator(self.family, c * self.matrix)

    def __matmul__(self, other):
        if other.family is not self.family:
            raise ValueError("operators act on different cube families")
        return CubeOperator(self.family, self.matrix @ other.matrix)


def _J(omega, p, q, kind):
    m = min(1.0, p) if kind == "besov" else min(1.0, p, q)
    return omega / m


def bound_matrix(space, family, eps, s, omega, p, q, kind="besov"):
    """Dense matrix of ``M_{Q,P}(eps)`` over the family.

    ``M = (l_Q/l_P)^s (mu_Q mu_P)^{1/2} P_{eps+J-omega}(x_Q, x_P; max l)
    * min{(l_Q/l_P)^{eps/2}, (l_P/l_Q)^{eps/2+J-omega}}`` with
    ``J = omega / min{1, p}`` (Besov) or ``omega / min{1, p, q}``.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    J = _J(omega, p, q, kind)
    ell = family.ell
    x = family.alpha
    ratio = ell[:, None] / ell[None, :]
    lmax = np.maximum(ell[:, None], ell[None, :])
    d = space.dist[np.ix_(x, x)]
    vxy = mutual_volume_matrix(space)[np.ix_(x, x)]
    # side lengths are powers of delta: V_r(x_Q) looked up per level
    vr = np.empty_like(d)
    lmin_level = np.minimum(family.cube_level[:, None], family.cube_level[None, :])
    for lev in np.unique(lmin_level):
        sel = lmin_level == lev
        vol = ball_measures(space, family.tree.delta ** lev)
        vr[sel] = np.broadcast_to(vol[x][:, None], d.shape)[sel]
    expo = eps + J - omega
    kern = (lmax / (lmax + d)) ** expo / (vr + vxy)
    two_scale = np.minimum(ratio ** (eps / 2), (1 / ratio) ** (eps / 2 + J - omega))
    return ratio ** s * np.sqrt(np.outer(family.mass, family.mass)) * kern * two_scale


def bound_M(space, family, i, j, eps, s, omega, p, q, kind="besov"):
    """``M_{Q,P}(eps)`` for the single pair of family indices ``(i, j)``."""
    from .space import kernel_P

    J = _J(omega, p, q, kind)
    lq, lp = family.ell[i], family.ell[j]
    ratio = lq / lp
    ker = kernel_P(space, eps + J - omega, int(family.alpha[i]), int(family.alpha[j]), max(lq, lp))
    two_scale = min(ratio ** (eps / 2), (1 / ratio) ** (eps / 2 + J - omega))
    return ratio ** s * math.sqrt(family.mass[i] * family.mass[j]) * ker * two_scale


def ado_constant(op, bound):
    """``K = max |A_{Q,P}| / M_{Q,P}`` over the stored entries (0 for the zero operator)."""
    coo = op.matrix.tocoo()
    if coo.nnz == 0:
        return 0.0
    vals = np.abs(coo.data) / bound[coo.row, coo.col]
    return float(vals.max())


def apply(op, lam):
    """``(A lambda)_Q = sum_P A_{Q,P} lambda_P``."""
    if lam.family is not op.family:
        raise ValueError("sequence and operator are bound to different cube families")
    return CoefficientSequence(op.family, op.matrix @ lam.values)


def identity_operator(family):
    return CubeOperator(family, sparse.identity(len(family), format="csr"))


def _draw_dense(bound, density, rng):
    present = (rng.random(bound.shape) < density) & (bound > MASS_FLOOR)
    mag = rng.random(bound.shape) * bound
    sign = np.where(rng.random(bound.shape) < 0.5, -1.0, 1.0)
    return np.where(present, sign * mag, 0.0)


def random_ad_operator(bound, density, rng, family):
    """Entries present with probability ``density`` where ``M`` exceeds the floor;
    magnitudes uniform in ``[0, M]`` with random signs."""
    return CubeOperator(family, sparse.csr_array(_draw_dense(bound, density, rng)))


def _dense_K(dense, bound):
    nz = dense != 0
    return float((np.abs(dense[nz]) / bound[nz]).max()) if nz.any() else 0.0


def random_sequence(family, rng, tilt_range=0.5):
    """Gaussian coefficients with a random geometric tilt across levels."""
    vals = rng.standard_normal(len(family))
    # a random geometric tilt across levels so that no single level dominates every draw
    tilt = rng.uniform(-tilt_range, tilt_range)
    return vals * family.tree.delta ** (tilt * (family.cube_level - family.cube_level.min()))


def _pair_ratios(space, pr, family, ops, ks, seqs, nl, coarse_mask):
    """Ratio table ``||A_i lambda_j|| / (K_i ||lambda_j||)`` and its two split parts."""
    full = np.zeros((len(ops), seqs.shape[1]))
    coarse = np.zeros_like(full)
    fine = np.zeros_like(full)
    live = nl > 0
    for i, (dense, K) in enumerate(zip(ops, ks)):
        if K == 0:
            continue
        for out, mat in ((full, dense),
                         (coarse, np.where(coarse_mask, dense, 0.0)),
                         (fine, np.where(coarse_mask, 0.0, dense))):
            vals = mat @ seqs[:, live]
            out[i, live] = seq_norm(space, CoefficientSequence(family, vals), pr) / (K * nl[live])
    return full, coarse, fine


def certify_boundedness(space, tree, params, trials=200, density=1.0, seed=0):
    """Monte Carlo certificate for ``||A lambda|| <= C K ||lambda||``.

    Draws ``trials`` random operators dominated by ``M`` and ``trials`` random
    sequences and takes the sup of ``||A lambda|| / (K ||lambda||)`` over every
    pair.  The ensembles are then doubled (``2 * trials`` of each, the first
    ``trials`` reused) and the sup recomputed.  Also reports the same ratio for
    the parts of ``A`` with ``l(P) >= l(Q)`` and ``l(P) < l(Q)``, and the
    identity-operator ratio, which must be ``1 / K``.
    """
    pr = require_valid(params, scope="sequence")
    family = pr.family(tree)
    bound = bound_matrix(space, family, pr.eps_ad, pr.s, pr.omega, pr.p, pr.q, pr.kind)
    rng = np.random.default_rng(seed)
    coarse_mask = family.ell[None, :] >= family.ell[:, None]     # l(P) >= l(Q)

    ops, ks = [], []
    for _ in range(2 * trials):
        dense = _draw_dense(bound, density, rng)
        ops.append(dense)
        ks.append(_dense_K(dense, bound))
    seqs = np.column_stack([random_sequence(family, rng) for _ in range(2 * trials)])
    nl = np.asarray(seq_norm(space, CoefficientSequence(family, seqs), pr))

    full, coarse, fine = _pair_ratios(space, pr, family, ops, ks, seqs, nl, coarse_mask)
    sup1 = float(full[:trials, :trials].max())
    sup2 = float(full.max())

    ident_K = ado_constant(identity_operator(family), bound)
    ident = np.asarray(seq_norm(space, CoefficientSequence(family, seqs[:, nl > 0]), pr))
    ident_ratios = (ident / nl[nl > 0]) / ident_K
    excess = pr.omega * max(1.0 / pr.p - 1.0, 0.0) if not math.isinf(pr.p) else 0.0
    return {
        "kind": pr.kind,
        "homogeneous": pr.homogeneous,
        "s": pr.s,
        "p": pr.p,
        "q": pr.q,
        "eps": pr.eps_ad,
        "omega": pr.omega,
        "trials": trials,
        "density": density,
        "seed": seed,
        "K": ks[:trials],
        "empirical_C": sup1,
        "empirical_C_doubled": sup2,
        "stable": bool(math.isfinite(sup2) and (sup1 == sup2 == 0 or sup2 <= 1.25 * sup1)),
        "split": {"coarse_part": float(coarse[:trials, :trials].max()),
                  "fine_part": float(fine[:trials, :trials].max())},
        "identity_K": ident_K,
        "identity_ratio": 1.0 / ident_K,
        "identity_ratio_exact": bool(np.all(ident_ratios == 1.0 / ident_K)),
        "preconditions": {
            "omega/(omega+omega(1/p-1)+eps) < p":
                bool(pr.omega / (pr.omega + excess + pr.eps_ad) < pr.p) if pr.p < 1 else True,
        },
    }
