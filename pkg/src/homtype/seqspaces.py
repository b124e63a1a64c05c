"""Besov and Triebel-Lizorkin sequence norms and parameter windows.

Sequences live on a :class:`~homtype.dyadic.CubeFamily`.  A homogeneous family
weights the cube ``Q_alpha^{k+1}`` by ``delta^{-ks}``; an inhomogeneous family
weights the cube ``Q_alpha^k`` by ``delta^{-ks}`` and carries an unweighted
block for its level-``k0`` scaling cubes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dyadic import CubeFamily
from .space import ball_measures, maximal_function, kernel_P
from .wavelets import analyze

__all__ = [
    "SpaceParams",
    "ParamError",
    "p_threshold",
    "validate_params",
    "besov_seq_norm",
    "tl_seq_norm",
    "seq_norm",
    "wavelet_function_norm",
    "summation_lemma_check",
]

INF = math.inf


class ParamError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


def _pos(x):
    return max(x, 0.0)


def p_threshold(s, eps, omega0):
    """``max{omega0 / (omega0 + eps), omega0 / (omega0 + s + eps)}``."""
    parts = []
    for den in (omega0 + eps, omega0 + s + eps):
        parts.append(INF if den <= 0 else omega0 / den)
    return max(parts)


@dataclass
class SpaceParams:
    """Index tuple of a Besov or Triebel-Lizorkin space.

    ``beta`` and ``gamma`` default to three quarters of the way through their
    admissible windows.  ``n_cutoff`` (the level up to which the inhomogeneous
    kernel norms average over refinement cubes) and ``k0`` (the inhomogeneous
    base level) default to tree-dependent values when ``None``.
    """

    s: float = 0.0
    p: float = 2.0
    q: float = 2.0
    kind: str = "besov"
    homogeneous: bool = True
    beta: float | None = None
    gamma: float | None = None
    eps_ad: float = 0.5
    eta: float = 0.5
    omega: float = 1.0
    omega0: float = 1.0
    n_cutoff: int | None = None
    k0: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def is_besov(self):
        return self.kind == "besov"

    def p_of(self, eps):
        return p_threshold(self.s, eps, self.omega0)

    def windows(self):
        """``(beta window, gamma window)`` as open intervals."""
        excess = self.omega0 * _pos(1.0 / self.p - 1.0)
        beta_lo = max(0.0, -self.s + excess)
        gamma_lo = max(self.s, excess) if self.homogeneous else excess
        return (beta_lo, self.eta), (gamma_lo, self.eta)

    def resolved(self):
        (blo, bhi), (glo, ghi) = self.windows()
        beta = self.beta if self.beta is not None else blo + 0.75 * (bhi - blo)
        gamma = self.gamma if self.gamma is not None else glo + 0.75 * (ghi - glo)
        return replace(self, beta=beta, gamma=gamma)

    def family(self, tree):
        if self.homogeneous:
            return CubeFamily.homogeneous(tree)
        return CubeFamily.inhomogeneous(tree, self.k0)

    def J(self):
        """``omega / min{1, p}`` (Besov) or ``omega / min{1, p, q}`` (Triebel-Lizorkin)."""
        m = min(1.0, self.p) if self.is_besov else min(1.0, self.p, self.q)
        return self.omega / m


def validate_params(params, scope="function"):
    """List every violated inequality; an empty list means valid.

    ``scope="sequence"`` checks only what the sequence norms and the
    almost-diagonal machinery need (positivity, ``p < inf`` for
    Triebel-Lizorkin, ``eps_ad > 0``).  ``scope="function"`` adds the
    smoothness and integrability windows of the function spaces.
    """
    pr = params
    out = []
    if pr.kind not in ("besov", "triebel_lizorkin"):
        out.append(f"kind must be besov or triebel_lizorkin, got {pr.kind!r}")
        return out
    if not pr.p > 0:
        out.append(f"p must be positive, got {pr.p}")
    if not pr.q > 0:
        out.append(f"q must be positive, got {pr.q}")
    if not pr.is_besov and math.isinf(pr.p):
        out.append("p = inf is not defined for Triebel-Lizorkin kinds")
    if not pr.eps_ad > 0:
        out.append(f"eps_ad must be positive, got {pr.eps_ad}")
    if pr.omega < pr.omega0:
        out.append(f"omega={pr.omega} must be >= omega0={pr.omega0}")
    if scope == "sequence" or out:
        return out
    pr = params.resolved()

    if not -pr.eta < pr.s < pr.eta:
        out.append(f"s={pr.s} outside (-eta, eta) = ({-pr.eta}, {pr.eta})")
    p_eta = pr.p_of(pr.eta)
    if not pr.p > p_eta:
        out.append(f"p={pr.p} must exceed p(s, eta)={p_eta}")
    (blo, bhi), (glo, ghi) = pr.windows()
    if not blo < pr.beta < bhi:
        out.append(f"beta={pr.beta} outside ({blo}, {bhi})")
    if not glo < pr.gamma < ghi:
        out.append(f"gamma={pr.gamma} outside ({glo}, {ghi})")
    bg = min(pr.beta, pr.gamma)
    if not -bg < pr.s < bg:
        out.append(f"s={pr.s} outside (-(beta^gamma), beta^gamma) = ({-bg}, {bg})")
    p_bg = pr.p_of(bg)
    if not pr.p > p_bg:
        out.append(f"p={pr.p} must exceed p(s, beta^gamma)={p_bg}")
    if not pr.is_besov and not pr.q > p_bg:
        out.append(f"q={pr.q} must exceed p(s, beta^gamma)={p_bg}")
    return out


def require_valid(params, scope="function"):
    diag = validate_params(params, scope)
    if diag:
        raise ParamError(diag)
    return params.resolved()


def _as_batch(values):
    v = np.abs(np.asarray(values, dtype=float))
    return (v[:, None], True) if v.ndim == 1 else (v, False)


def _finish(x, flat):
    return float(x[0]) if flat else x


def _scaling_block(fam, lam, p):
    sc = fam.is_scaling
    if not sc.any():
        return 0.0
    mass = fam.mass[sc][:, None]
    if math.isinf(p):
        return (lam[sc] / np.sqrt(mass)).max(axis=0)
    return _sum_columns(mass ** (1 - p / 2) * lam[sc] ** p) ** (1 / p)


def besov_seq_norm(lam, params):
    """Besov sequence (quasi-)norm, exact maxima at ``p = inf`` or ``q = inf``."""
    fam = lam.family
    p, q = params.p, params.q
    a, flat = _as_batch(lam.values)
    delta = fam.tree.delta
    wav = ~fam.is_scaling
    levels = np.unique(fam.scale_level[wav])
    blocks = []
    for k in levels:
        sel = wav & (fam.scale_level == k)
        mass = fam.mass[sel][:, None]
        if math.isinf(p):
            b = (a[sel] / np.sqrt(mass)).max(axis=0)
        else:
            b = _sum_columns(mass ** (1 - p / 2) * a[sel] ** p) ** (1 / p)
        blocks.append(delta ** (-k * params.s) * b)
    if not blocks:
        total = np.zeros(a.shape[1])
    else:
        blocks = np.array(blocks)
        if math.isinf(q):
            total = blocks.max(axis=0)
        else:
            total = _sum_columns(blocks ** q) ** (1 / q)
    if fam.kind == "inhomogeneous":
        total = total + _scaling_block(fam, a, p)
    return _finish(total, flat)


def _sum_columns(m):
    # each column summed as its own contiguous 1-D array, so a batch column
    # gives the same bits as the same sequence passed alone
    return np.ascontiguousarray(m.T).sum(axis=1)


def tl_seq_norm(space, lam, params):
    """Triebel-Lizorkin sequence (quasi-)norm; ``p`` must be finite."""
    if math.isinf(params.p):
        raise ParamError(["p = inf is not defined for Triebel-Lizorkin kinds"])
    fam = lam.family
    p, q = params.p, params.q
    a, flat = _as_batch(lam.values)
    wav = ~fam.is_scaling
    coef = (fam.tree.delta ** (-fam.scale_level[wav] * params.s)
            / np.sqrt(fam.mass[wav]))[:, None] * a[wav]
    member = fam.membership[wav]
    if math.isinf(q):
        inner = np.zeros((space.n, a.shape[1]))
        for i in range(member.shape[0]):
            idx = np.flatnonzero(member[i])
            inner[idx] = np.maximum(inner[idx], coef[i])
    else:
        inner = (member.T.astype(float) @ coef ** q) ** (1 / q)
    total = _sum_columns(space.weights[:, None] * inner ** p) ** (1 / p)
    if fam.kind == "inhomogeneous":
        total = total + _scaling_block(fam, a, p)
    return _finish(total, flat)


def seq_norm(space, lam, params):
    if params.is_besov:
        return besov_seq_norm(lam, params)
    return tl_seq_norm(space, lam, params)


def wavelet_function_norm(space, basis, f, params):
    """Wavelet-side norm: analyze ``f`` on the family the params select, then the sequence norm."""
    lam = analyze(basis, f, params.family(basis.tree))
    return seq_norm(space, lam, params)


def summation_lemma_check(space, tree, p=2 / 3, r=2 / 3, gamma=1.0, omega=1.0,
                          trials=200, seed=0):
    """Empirical constants of the two discrete summation bounds.

    For random wavelet level ``k``, comparison level ``k'``, point ``x`` and
    coefficients ``a``, evaluates

    * ``sum_alpha mu(Q) P_gamma(x, y_alpha; delta^{k^k'})^p`` against
      ``V_{delta^{k^k'}}(x)^{1-p}``, and
    * ``sum_alpha mu(Q) P_gamma(x, y_alpha; delta^{k^k'}) |a_alpha|`` against
      ``delta^{(k^k' - k) omega (1/r - 1)} M(sum |a_alpha|^r 1_Q)(x)^{1/r}``.

    Reports the sup ratio (the empirical constant) after half and all trials.
    """
    rng = np.random.default_rng(seed)
    levels = [k for k in range(tree.k_min, tree.k_max) if tree.gk[k].size]
    all_levels = list(tree.net.levels)
    ratios_a, ratios_b = [], []
    for _ in range(trials):
        k = int(rng.choice(levels))
        kp = int(rng.choice(all_levels))
        x = int(rng.integers(space.n))
        m = min(k, kp)
        rad = tree.delta ** m
        cubes = [c for c in tree.wavelet_family if c.level == k]
        ys = np.array([c.alpha for c in cubes])
        mass = np.array([c.mass for c in cubes])
        ker = kernel_P(space, gamma, np.full(ys.size, x), ys, rad)
        vx = ball_measures(space, rad)[x]
        ratios_a.append(float(np.sum(mass * ker ** p) / vx ** (1 - p)))

        coeff = rng.standard_normal(ys.size) * (rng.random(ys.size) < 0.5)
        lhs = float(np.sum(mass * ker * np.abs(coeff)))
        g = np.zeros(space.n)
        for c, val in zip(cubes, coeff):
            g[c.members] += abs(val) ** r
        mx = maximal_function(space, g)[x]
        rhs = tree.delta ** ((m - k) * omega * (1 / r - 1)) * mx ** (1 / r)
        if rhs > 0:
            ratios_b.append(lhs / rhs)
        elif lhs == 0:
            ratios_b.append(0.0)
    half = max(1, trials // 2)
    return {
        "trials": trials,
        "pointwise_power_sum": {"sup_half": max(ratios_a[:half]), "sup": max(ratios_a)},
        "maximal_sum": {"sup_half": float(max(ratios_b[:half], default=0.0)),
                        "sup": float(max(ratios_b, default=0.0))},
    }
