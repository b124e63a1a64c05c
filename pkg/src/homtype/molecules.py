"""Molecules: validation, canonical examples, Gram operators and synthesis.

A molecule centered at a cube ``Q`` of type ``(beta, Gamma)`` satisfies, up to
a constant ``C``,

* size: ``|b(x)| <= C mu(Q)^{1/2} P_Gamma(x_Q, x; l(Q))``,
* Hoelder: ``|b(x) - b(x')| <= C mu(Q)^{1/2} [d(x, x') / (l(Q) + d(x_Q, x))]^beta
  P_Gamma(x_Q, x; l(Q))`` whenever ``d(x, x') <= (l(Q) + d(x_Q, x)) / (2 A0)``,
* cancellation: ``int b dmu = 0``, waived for the scaling cubes of an
  inhomogeneous family.

Validation reports the tightest such ``C``; a molecule passes when ``C <= 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .almost_diag import CubeOperator, random_sequence
from .seqspaces import require_valid, seq_norm
from .space import kernel_P
from .wavelets import CoefficientSequence, family_functions, analyze

__all__ = [
    "MoleculeSet",
    "verify_molecule",
    "canonical_molecule",
    "canonical_molecules",
    "wavelet_molecules",
    "perturbed_molecules",
    "gram_subfamily",
    "molecule_wavelet_gram",
    "molecular_synthesis",
    "synthesis_report",
    "epsilon_window",
]

PASS_TOL = 1e-9
CANCEL_TOL = 1e-10


@dataclass
class MoleculeSet:
    """One molecule per cube of ``family``; ``values[i]`` is centered at cube ``i``."""

    family: object
    values: np.ndarray
    beta: float
    gamma: float
    constants: np.ndarray
    label: str = "custom"
    reports: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.family)


def _cube(family, i):
    return (int(family.alpha[i]), float(family.ell[i]), float(family.mass[i]),
            family.kind == "homogeneous" or not bool(family.is_scaling[i]))


def _size_rhs(space, x_q, ell, mass, gamma):
    pts = np.arange(space.n)
    return math.sqrt(mass) * kernel_P(space, gamma, np.full(space.n, x_q), pts, ell)


def verify_molecule(space, family, i, values, beta, gamma):
    """Tightest constant of ``values`` as a ``(beta, gamma)`` molecule at cube ``i``.

    The size sup and the Hoelder sup over all admissible pairs are enumerated
    exactly.  Returns ``pass``, ``C``, the per-condition constants and the
    worst witnesses.
    """
    if beta <= 0 or gamma <= 0:
        raise ValueError(f"molecule exponents must be positive, got beta={beta}, Gamma={gamma}")
    b = np.asarray(values, dtype=float)
    if b.shape != (space.n,):
        raise ValueError(f"candidate must have one value per point ({space.n}), got {b.shape}")
    x_q, ell, mass, need_cancel = _cube(family, i)
    rhs = _size_rhs(space, x_q, ell, mass, gamma)

    size = np.abs(b) / rhs
    i_size = int(np.argmax(size))

    d = space.dist
    scale = ell + d[x_q]                              # l(Q) + d(x_Q, x), per x
    admissible = d <= scale[:, None] / (2 * space.a0)
    np.fill_diagonal(admissible, False)
    ratio = (d / scale[:, None]) ** beta * rhs[:, None]
    diff = np.abs(b[:, None] - b[None, :])
    holder = np.where(admissible, diff / np.where(admissible, ratio, 1.0), 0.0)
    flat = int(np.argmax(holder))
    hx, hy = divmod(flat, space.n)

    integral = math.fsum(space.weights * b)
    l1 = math.fsum(space.weights * np.abs(b))
    cancel_ok = (not need_cancel) or abs(integral) <= CANCEL_TOL * l1
    C = max(float(size[i_size]), float(holder[hx, hy]))
    return {
        "pass": bool(C <= 1 + PASS_TOL and cancel_ok),
        "C": C,
        "size_C": float(size[i_size]),
        "holder_C": float(holder[hx, hy]),
        "witnesses": {
            "size": {"x": i_size},
            "holder": {"x": hx, "x_prime": hy},
        },
        "cancellation": {"required": need_cancel, "integral": integral, "l1": l1,
                         "pass": bool(cancel_ok)},
    }


def _bump(space, family, i, gamma):
    x_q, ell, mass, need_cancel = _cube(family, i)
    b = _size_rhs(space, x_q, ell, mass, gamma)
    if need_cancel:
        b = b - math.fsum(space.weights * b) / space.total_mass
    return b


def canonical_molecule(space, family, i, beta, gamma):
    """``mu(Q)^{1/2} [P_Gamma(x_Q, .; l(Q)) - mean]`` scaled to constant 1.

    The mean is subtracted only when cancellation is required.
    """
    b = _bump(space, family, i, gamma)
    C = verify_molecule(space, family, i, b, beta, gamma)["C"]
    return b / C


def _normalized_set(space, family, raw, beta, gamma, label):
    values = np.empty_like(raw)
    consts = np.empty(len(family))
    reports = []
    for i in range(len(family)):
        C = verify_molecule(space, family, i, raw[i], beta, gamma)["C"]
        values[i] = raw[i] / C if C > 0 else raw[i]
        rep = verify_molecule(space, family, i, values[i], beta, gamma)
        consts[i] = rep["C"]
        reports.append(rep)
    return MoleculeSet(family, values, beta, gamma, consts, label, reports)


def canonical_molecules(space, family, beta, gamma):
    raw = np.array([_bump(space, family, i, gamma) for i in range(len(family))])
    return _normalized_set(space, family, raw, beta, gamma, "canonical")


def wavelet_molecules(space, basis, family, beta, gamma, normalize=True):
    """The basis functions of ``family`` as molecules.

    With ``normalize`` each is divided by its tightest constant, which turns a
    smooth basis into a verified molecule family.  Without it the raw basis
    functions are kept (constants are still reported).
    """
    raw = family_functions(basis, family)
    if normalize:
        return _normalized_set(space, family, raw, beta, gamma, f"{basis.backend}-wavelet")
    reports = [verify_molecule(space, family, i, raw[i], beta, gamma) for i in range(len(family))]
    return MoleculeSet(family, raw, beta, gamma, np.array([r["C"] for r in reports]),
                       f"{basis.backend}-wavelet", reports)


def perturbed_molecules(space, family, beta, gamma, rng, scale=0.2):
    """Canonical molecules times ``1 + scale * noise``, re-centered and re-verified."""
    base = canonical_molecules(space, family, beta, gamma).values
    raw = base * (1 + scale * rng.uniform(-1, 1, size=base.shape))
    for i in range(len(family)):
        if _cube(family, i)[3]:
            raw[i] -= math.fsum(space.weights * raw[i]) / space.total_mass
    return _normalized_set(space, family, raw, beta, gamma, "perturbed")


def gram_subfamily(family, full=False):
    """Cubes with ``l(Q) >= delta^{k_max - 1}`` unless ``full``."""
    if full:
        return family
    return family.subset(family.cube_level <= family.tree.k_max - 1)


def molecule_wavelet_gram(space, basis, molecules):
    """``A_{Q,P} = <b_P, psi_Q>`` over the molecules' family."""
    fam = molecules.family
    funcs = family_functions(basis, fam)
    return CubeOperator(fam, funcs @ (space.weights[:, None] * molecules.values.T))


def epsilon_window(s, p, beta, gamma, omega):
    """Upper end of the admissible ``eps`` interval for the Gram operator.

    ``min{gamma - omega (1/p - 1)_+, 2 [s + gamma - omega (1/p - 1)_+], 2 (beta - s)}``;
    the interval is ``(0, upper)``.
    """
    excess = 0.0 if math.isinf(p) else omega * max(1.0 / p - 1.0, 0.0)
    return min(gamma - excess, 2 * (s + gamma - excess), 2 * (beta - s))


def molecular_synthesis(space, basis, lam, molecules, params):
    """``f = sum_Q lambda_Q b_Q`` and the norm report.

    ``lam`` lives on ``molecules.family`` (batch columns allowed).  The
    function side is the wavelet norm of ``f`` on the full family selected by
    ``params``; the ratio is 0 when both norms vanish.
    """
    if lam.family is not molecules.family:
        raise ValueError("coefficients and molecules are bound to different cube families")
    pr = require_valid(params, scope="sequence")
    f = molecules.values.T @ lam.values
    fnorm = np.atleast_1d(seq_norm(space, analyze(basis, f, pr.family(basis.tree)), pr))
    lnorm = np.atleast_1d(seq_norm(space, lam, pr))
    ratio = np.divide(fnorm, lnorm, out=np.zeros_like(fnorm), where=lnorm > 0)
    return {"f": f, "function_norm": fnorm, "sequence_norm": lnorm, "ratio": ratio}


def synthesis_report(space, basis, molecules, params, trials=100, seed=0):
    """Max ratio ``||f|| / ||lambda||`` over ``trials`` random sequences, and over ``2 * trials``."""
    rng = np.random.default_rng(seed)
    fam = molecules.family
    lam = np.column_stack([random_sequence(fam, rng) for _ in range(2 * trials)])
    out = molecular_synthesis(space, basis, CoefficientSequence(fam, lam), molecules, params)
    r = out["ratio"]
    return {
        "molecules": molecules.label,
        "trials": trials,
        "seed": seed,
        "max_ratio": float(r[:trials].max()),
        "max_ratio_doubled": float(r.max()),
        "min_ratio": float(r[:trials].min()),
    }
