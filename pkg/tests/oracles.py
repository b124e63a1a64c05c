"""Reference evaluators written as plain loops, independent of the package code."""
import math


def seq_norm_loop(space, fam, vals, s, p, q, kind):
    """Besov or Triebel-Lizorkin sequence norm by direct summation.

    Wavelet cube i carries weight delta^{-k s} with k = its scale level; the
    scaling cubes of an inhomogeneous family add an unweighted l^p block.
    """
    delta = fam.tree.delta
    n = space.n
    scaling_terms = []
    rows = []
    for i in range(len(fam)):
        mu = float(fam.mass[i])
        a = abs(float(vals[i]))
        if bool(fam.is_scaling[i]):
            scaling_terms.append(a / math.sqrt(mu) if p == math.inf else mu ** (1 - p / 2) * a ** p)
            continue
        k = int(fam.scale_level[i])
        members = [x for x in range(n) if fam.membership[i][x]]
        rows.append((k, mu, a, members))

    if kind == "besov":
        by_level = {}
        for k, mu, a, _m in rows:
            by_level.setdefault(k, []).append((mu, a))
        blocks = []
        for k in sorted(by_level):
            if p == math.inf:
                inner = max(a / math.sqrt(mu) for mu, a in by_level[k])
            else:
                inner = sum(mu ** (1 - p / 2) * a ** p for mu, a in by_level[k]) ** (1 / p)
            blocks.append(delta ** (-k * s) * inner)
        if not blocks:
            main = 0.0
        elif q == math.inf:
            main = max(blocks)
        else:
            main = sum(b ** q for b in blocks) ** (1 / q)
    else:
        main = 0.0
        for x in range(n):
            vals_x = [delta ** (-k * s) * a / math.sqrt(mu) for k, mu, a, m in rows if x in m]
            if q == math.inf:
                inner = max(vals_x, default=0.0)
            else:
                inner = sum(v ** q for v in vals_x) ** (1 / q)
            main += float(space.weights[x]) * inner ** p
        main = main ** (1 / p)

    if scaling_terms:
        extra = max(scaling_terms) if p == math.inf else sum(scaling_terms) ** (1 / p)
        main += extra
    return main


def ad_bound_entry(space, fam, i, j, eps, s, omega, p, q, kind):
    """The two-scale decay bound for one (Q, P) pair, straight from the formula."""
    m = min(1.0, p) if kind == "besov" else min(1.0, p, q)
    J = omega / m
    lq, lp = float(fam.ell[i]), float(fam.ell[j])
    xq, xp = int(fam.alpha[i]), int(fam.alpha[j])
    r = max(lq, lp)
    d = float(space.dist[xq, xp])
    vr = sum(float(w) for y, w in enumerate(space.weights) if space.dist[xq, y] < r)
    vxy = 0.0 if xq == xp else sum(float(w) for y, w in enumerate(space.weights)
                                   if space.dist[xq, y] < d)
    e = eps + J - omega
    kern = (r / (r + d)) ** e / (vr + vxy)
    ratio = lq / lp
    decay = min(ratio ** (eps / 2), (1 / ratio) ** (eps / 2 + J - omega))
    return ratio ** s * math.sqrt(float(fam.mass[i]) * float(fam.mass[j])) * kern * decay
