"""The built-in invariant battery run by ``homtype selftest``.

Each check returns a JSON-ready dict with a ``pass`` flag.  Nothing here
records wall-clock time, so reports are byte-identical across reruns with
the same seed.
"""
from __future__ import annotations

import math

import numpy as np

from .almost_diag import bound_matrix, ado_constant, certify_boundedness
from .dyadic import CubeFamily, build_nets, build_tree, check_tree
from .lp_functionals import (change_of_angle_fit, equivalence_report, g_function,
                             kernel_F_norm)
from .molecules import (canonical_molecules, epsilon_window, gram_subfamily,
                        molecule_wavelet_gram, synthesis_report, wavelet_molecules)
from .seqspaces import SpaceParams, besov_seq_norm, tl_seq_norm, wavelet_function_norm
from .space import estimate_doubling, line_space, lp_norm, random_cloud
from .wavelets import (CoefficientSequence, analyze, build_haar, build_kernels,
                       gram_matrix)

__all__ = ["run_selftest", "loop_besov", "loop_tl", "SEQ_TUPLES", "KNOWN_FAILURES"]

INF = math.inf

# (s, p, q) tuples for the sequence-norm oracle, Besov corners included
SEQ_TUPLES = [
    (0.0, 2.0, 2.0), (0.25, 1.0, 2.0), (-0.25, 2.0, 1.0), (0.5, 0.5, 1.5),
    (0.0, 3.0, 0.75), (-0.5, 1.5, 4.0), (0.25, INF, 2.0), (0.0, 2.0, INF),
    (-0.25, INF, INF), (0.75, 1.0, 1.0), (0.1, 0.8, 0.6), (0.0, 4.0, 3.0),
]

# checks whose stated bound does not hold for the statement as written; they
# are run and reported but do not change the exit status
KNOWN_FAILURES = {"c9_change_of_angle"}


def loop_besov(space, fam, vals, s, p, q):
    """Straight-loop Besov sequence norm (reference evaluator)."""
    delta = fam.tree.delta
    per_level = {}
    scaling = []
    for i in range(len(fam)):
        mu = fam.mass[i]
        a = abs(vals[i])
        term = a / math.sqrt(mu) if p == INF else mu ** (1 - p / 2) * a ** p
        if fam.is_scaling[i]:
            scaling.append(term)
        else:
            per_level.setdefault(int(fam.scale_level[i]), []).append(term)
    blocks = []
    for k in sorted(per_level):
        terms = per_level[k]
        inner = max(terms) if p == INF else sum(terms) ** (1 / p)
        blocks.append(delta ** (-k * s) * inner)
    if not blocks:
        total = 0.0
    elif q == INF:
        total = max(blocks)
    else:
        total = sum(b ** q for b in blocks) ** (1 / q)
    if scaling:
        total += max(scaling) if p == INF else sum(scaling) ** (1 / p)
    return total


def loop_tl(space, fam, vals, s, p, q):
    """Straight-loop Triebel-Lizorkin sequence norm (reference evaluator)."""
    delta = fam.tree.delta
    total = 0.0
    for x in range(space.n):
        acc = 0.0
        for i in range(len(fam)):
            if fam.is_scaling[i] or not fam.membership[i, x]:
                continue
            t = delta ** (-fam.scale_level[i] * s) * abs(vals[i]) / math.sqrt(fam.mass[i])
            acc = max(acc, t) if q == INF else acc + t ** q
        inner = acc if q == INF else acc ** (1 / q)
        total += space.weights[x] * inner ** p
    total = total ** (1 / p)
    sc = [i for i in range(len(fam)) if fam.is_scaling[i]]
    if sc:
        total += sum(fam.mass[i] ** (1 - p / 2) * abs(vals[i]) ** p for i in sc) ** (1 / p)
    return total


def _setup(space):
    tree = build_tree(space, build_nets(space))
    prof = estimate_doubling(space)
    basis = build_haar(space, tree)
    return tree, prof, basis, build_kernels(basis)


def _err(got, ref):
    """Relative error, absolute when the reference is 0."""
    return abs(got - ref) / ref if ref else abs(got)


def check_dyadic(spaces):
    out = {}
    for name, (space, tree, *_rest) in spaces.items():
        res = check_tree(space, tree, c_inner=1 / 3, c_outer=2)
        out[name] = res
    return {"pass": all(v["holds"] for v in out.values()), "spaces": out}


def check_wavelets(space, tree, basis, kernels, rng, n_funcs):
    w = space.weights
    m = gram_matrix(basis)
    gram = float(np.abs(m - np.eye(m.shape[0])).max())
    cancel = float(np.abs(basis.psi @ w).max())
    tele = max(float(np.abs(kernels.pk[k + 1] - kernels.pk[k] - kernels.dk[k]).max())
               for k in range(tree.k_min, tree.k_max))
    cons = max(float(np.abs(kernels.pk[k] @ w - 1).max()) for k in tree.net.levels)
    F = rng.standard_normal((space.n, n_funcs))
    lam = analyze(basis, F)
    lhs = lp_norm(space, F, 2) ** 2
    rhs = (lam.values ** 2).sum(axis=0) + (lam.coarse ** 2).sum(axis=0)
    planch = float(np.max(np.abs(lhs - rhs) / lhs))
    return {"gram": gram, "cancellation": cancel, "telescoping": tele, "conservation": cons,
            "plancherel": planch,
            "pass": gram <= 1e-10 and cancel <= 1e-12 and tele <= 1e-10 and cons <= 1e-10
            and planch <= 1e-9}


def check_norm_identification(space, tree, basis, kernels, rng, n_funcs):
    F = rng.standard_normal((space.n, n_funcs))
    pr = SpaceParams(s=0.0, p=2.0, q=2.0, kind="triebel_lizorkin")
    wav = wavelet_function_norm(space, basis, F, pr)
    detail = F - kernels.apply(kernels.pk[tree.k_min], F)
    ref = lp_norm(space, detail, 2)
    err = float(np.max(np.abs(wav - ref) / ref))
    return {"max_rel_error": err, "pass": err <= 1e-9}


def check_seq_oracle(rng, n_seqs):
    space = line_space(16)
    tree = build_tree(space, build_nets(space))
    worst = 0.0
    for fam in (CubeFamily.homogeneous(tree), CubeFamily.inhomogeneous(tree)):
        for s, p, q in SEQ_TUPLES:
            for _ in range(n_seqs):
                vals = rng.standard_normal(len(fam)) * (rng.random(len(fam)) < 0.4)
                lam = CoefficientSequence(fam, vals)
                pr = SpaceParams(s=s, p=p, q=q)
                worst = max(worst, _err(besov_seq_norm(lam, pr),
                                        loop_besov(space, fam, vals, s, p, q)))
                if p != INF:
                    worst = max(worst, _err(tl_seq_norm(space, lam, pr),
                                            loop_tl(space, fam, vals, s, p, q)))
    return {"max_rel_error": worst, "tuples": len(SEQ_TUPLES), "pass": worst <= 1e-12}


DENSITY = 1.0
AD_CONFIGS = [(s, p, q) for s in (-0.25, 0.0, 0.25) for p, q in ((2.0, 2.0), (1.0, 2.0), (2 / 3, 1.0))]


def check_almost_diagonal(space, tree, prof, trials, seed):
    rows = []
    ok = True
    for kind in ("besov", "triebel_lizorkin"):
        for hom in (True, False):
            for s, p, q in AD_CONFIGS:
                pr = SpaceParams(s=s, p=p, q=q, kind=kind, homogeneous=hom,
                                 omega=prof.omega, omega0=prof.omega0)
                r = certify_boundedness(space, tree, pr, trials=trials, seed=seed, density=DENSITY)
                good = (math.isfinite(r["empirical_C"]) and r["stable"]
                        and r["identity_ratio_exact"])
                ok &= good
                rows.append({"kind": kind, "homogeneous": hom, "s": s, "p": p, "q": q,
                             "empirical_C": r["empirical_C"],
                             "empirical_C_doubled": r["empirical_C_doubled"],
                             "identity_ratio": r["identity_ratio"], "pass": good})
    return {"configs": rows, "pass": ok}


def _molecule_params(prof):
    return SpaceParams(s=0.0, p=2.0, q=2.0, omega=prof.omega, omega0=prof.omega0).resolved()


def check_synthesis(space, tree, prof, basis, trials, seed):
    pr = _molecule_params(prof)
    fam = gram_subfamily(pr.family(tree))
    can = canonical_molecules(space, fam, pr.beta, pr.gamma)
    r0 = synthesis_report(space, basis, can, pr, trials=trials, seed=seed)
    r1 = synthesis_report(space, basis, can, pr, trials=trials, seed=seed + 1)
    a, b = r0["max_ratio"], r1["max_ratio"]
    seed_stable = bool(math.isfinite(a) and 0.75 * a <= b <= 1.25 * a)
    wm = wavelet_molecules(space, basis, fam, pr.beta, pr.gamma, normalize=False)
    rw = synthesis_report(space, basis, wm, pr, trials=trials, seed=seed)
    dev = max(abs(rw["max_ratio"] - 1), abs(rw["min_ratio"] - 1))
    return {"canonical_max_ratio": [a, b], "seed_stable": seed_stable,
            "wavelet_ratio_deviation": dev, "pass": seed_stable and dev <= 1e-12}


def check_gram(spaces):
    out = {}
    ok = True
    for name, (space, tree, prof, basis, _k) in spaces.items():
        pr = _molecule_params(prof)
        fam = gram_subfamily(pr.family(tree))
        upper = epsilon_window(pr.s, pr.p, pr.beta, pr.gamma, pr.omega)
        eps = upper / 2
        mol = canonical_molecules(space, fam, pr.beta, pr.gamma)
        K = ado_constant(molecule_wavelet_gram(space, basis, mol),
                         bound_matrix(space, fam, eps, pr.s, pr.omega, pr.p, pr.q, pr.kind))
        good = bool(upper > 0 and math.isfinite(K))
        ok &= good
        out[name] = {"eps": eps, "window_upper": upper, "K": K, "pass": good}
    return {"spaces": out, "pass": ok}


def check_square_functions(space, tree, prof, basis, kernels, size, seed):
    rows = []
    ok = True
    for s, p, q in ((0.0, 2.0, 2.0), (0.25, 2.0, 4 / 3)):
        pr = SpaceParams(s=s, p=p, q=q, kind="triebel_lizorkin", omega=prof.omega,
                         omega0=prof.omega0)
        rep = equivalence_report(space, basis, kernels, pr, size=size, seed=seed)
        F = np.random.default_rng(seed).standard_normal((space.n, 4))
        via_g = lp_norm(space, g_function(space, kernels, F, s, q), p)
        via_f = kernel_F_norm(space, kernels, F, pr)
        same = bool(np.array_equal(via_g, via_f))
        good = rep["stable"] and same and all(b["C_emp"] is not None for b in rep["bands"].values())
        ok &= good
        rows.append({"s": s, "p": p, "q": q, "bands": rep["bands"], "g_equals_F": same,
                     "pass": good})
    return {"configs": rows, "pass": ok}


def check_change_of_angle(spaces, size, seed):
    out = {}
    ok = True
    for name, (space, tree, prof, basis, kernels) in spaces.items():
        pr = SpaceParams(s=0.0, p=2.0, q=1.0, kind="triebel_lizorkin", omega=prof.omega,
                         omega0=prof.omega0)
        r = change_of_angle_fit(space, kernels, pr, basis=basis, size=size, seed=seed)
        ok &= r["pass"]
        out[name] = {"max_slope": r["max_slope"], "bound": r["bound"], "pass": r["pass"]}
    return {"spaces": out, "pass": ok}


def run_selftest(n=64, seed=0, scale=1.0):
    """Run the battery on an ``n``-point line and an ``n``-point planar cloud.

    ``scale`` multiplies the (already reduced) trial counts.  Returns the
    report and whether every check outside :data:`KNOWN_FAILURES` passed.
    """
    def cnt(x):
        return max(2, int(round(x * scale)))

    rng = np.random.default_rng(seed)
    line = line_space(n)
    cloud = random_cloud(n, seed=seed)
    spaces = {f"line{n}": (line, *_setup(line)), f"cloud{n}": (cloud, *_setup(cloud))}
    lspace, ltree, lprof, lbasis, lkern = spaces[f"line{n}"]

    checks = {
        "c1_dyadic": check_dyadic(spaces),
        "c2_wavelets": {name: check_wavelets(sp, tr, b, k, rng, cnt(20))
                        for name, (sp, tr, _p, b, k) in spaces.items()},
        "c3_norm_identification": check_norm_identification(lspace, ltree, lbasis, lkern, rng,
                                                            cnt(20)),
        "c4_sequence_oracle": check_seq_oracle(rng, cnt(5)),
        "c5_almost_diagonal": check_almost_diagonal(lspace, ltree, lprof, cnt(20), seed),
        "c6_synthesis": check_synthesis(lspace, ltree, lprof, lbasis, cnt(50), seed),
        "c7_gram": check_gram(spaces),
        "c8_square_functions": check_square_functions(lspace, ltree, lprof, lbasis, lkern,
                                                      cnt(20), seed),
        "c9_change_of_angle": check_change_of_angle(spaces, cnt(10), seed),
    }
    c2 = checks["c2_wavelets"]
    checks["c2_wavelets"] = {"spaces": c2, "pass": all(v["pass"] for v in c2.values())}
    summary = {name: bool(c["pass"]) for name, c in checks.items()}
    ok = all(v for name, v in summary.items() if name not in KNOWN_FAILURES)
    report = {"n": n, "seed": seed, "scale": scale, "summary": summary,
              "known_failures": sorted(KNOWN_FAILURES), "checks": checks, "pass": ok}
    return report, ok
