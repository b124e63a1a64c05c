"""Command-line front end: ``homtype <subcommand> [options]``.

Settings come from built-in defaults, then an optional INI file (``--config``;
any section, keys named like the long flags with ``-`` or ``_``), then the
command line.  Artifacts go to ``<outdir>/<subcommand>/``.

Exit status: 0 on success, 2 when inputs or parameters are rejected, 3 when a
certification check fails.
"""
from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from pathlib import Path

import numpy as np

from .almost_diag import bound_matrix, ado_constant, certify_boundedness
from .dyadic import NetError, build_nets, build_tree, check_tree, tree_to_dict
from .io import (InputError, read_distance_matrix, read_points_csv, write_basis,
                 write_coefficients, write_json, write_molecule, write_operator, write_rows)
from .lp_functionals import (change_of_angle_fit, equivalence_report, g_function,
                             g_lambda_star, lusin_area)
from .molecules import (canonical_molecules, epsilon_window, gram_subfamily,
                        molecule_wavelet_gram, perturbed_molecules, synthesis_report,
                        wavelet_molecules)
from .selftest import run_selftest
from .seqspaces import ParamError, SpaceParams, require_valid, seq_norm
from .space import SpaceError, estimate_doubling, grid_space, line_space, lp_norm, random_cloud
from .wavelets import (BasisError, analyze, build_haar, build_kernels, build_smoothed,
                       gram_matrix, verify_exp_iati)

__all__ = ["main", "build_parser", "resolve_config", "EXIT_OK", "EXIT_INVALID", "EXIT_FAILED"]

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 2, 3

SUBCOMMANDS = ("build", "wavelets", "norm", "ado-certify", "molecule", "lp-report",
               "angle-fit", "selftest")


def _float(text):
    t = str(text).strip().lower()
    if t in ("inf", "infinity", "+inf"):
        return math.inf
    return float(t)


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    return [_float(t) for t in str(text).replace(",", " ").split()]


# dest -> (converter, default); every entry may also come from the config file
OPTIONS = {
    "points": (str, None),
    "dist": (str, None),
    "builtin": (str, "line:64"),
    "metric": (str, "euclidean"),
    "theta": (_float, 1.0),
    "delta": (_float, 0.125),
    "j0": (int, 1),
    "backend": (str, "haar"),
    "seed": (int, None),
    "threads": (int, None),
    "outdir": (str, "homtype-out"),
    "trials": (int, 200),
    "density": (_float, 1.0),
    "size": (int, 100),
    "s": (_float, 0.0),
    "p": (_float, 2.0),
    "q": (_float, 2.0),
    "kind": (str, None),
    "inhomogeneous": (_bool, False),
    "eps": (_float, 0.5),
    "eta": (_float, 0.5),
    "omega": (_float, None),
    "omega0": (_float, None),
    "beta": (_float, None),
    "gamma": (_float, None),
    "k0": (int, None),
    "cutoff": (int, None),
    "lambda_ap": (_float, None),
    "thetas": (_floats, [1.0, 2.0, 4.0, 8.0]),
    "function": (str, None),
    "molecules": (str, "canonical"),
    "full_family": (_bool, False),
    "n": (int, 64),
    "scale": (_float, 1.0),
}


def _common(p):
    g = p.add_argument_group("input")
    src = g.add_mutually_exclusive_group()
    src.add_argument("--points", help="CSV of id,x1,...,xd,weight rows")
    src.add_argument("--dist", help="distance matrix file: n, then n rows")
    src.add_argument("--builtin", help="line:N, grid:RxC or cloud:N[:SEED] (default line:64)")
    g.add_argument("--metric", choices=["euclidean", "snowflake"])
    g.add_argument("--theta", type=_float, help="snowflake exponent in (0, 1]")
    g = p.add_argument_group("run")
    g.add_argument("--config", help="INI file; command-line flags take precedence")
    g.add_argument("--outdir")
    g.add_argument("--seed", type=int, help="default: $HOMTYPE_SEED, else 0")
    g.add_argument("--threads", type=int, help="accepted for scripting; results do not depend on it")
    g.add_argument("--delta", type=_float)
    g.add_argument("--j0", type=int)
    g.add_argument("--backend", choices=["haar", "smoothed"])
    g.add_argument("--trials", type=int)
    g.add_argument("--density", type=_float)
    g.add_argument("--size", type=int, help="test-function ensemble size")
    g = p.add_argument_group("space parameters")
    g.add_argument("--s", type=_float)
    g.add_argument("--p", type=_float)
    g.add_argument("--q", type=_float)
    g.add_argument("--kind", choices=["besov", "triebel_lizorkin"])
    g.add_argument("--inhomogeneous", action="store_const", const=True)
    g.add_argument("--eps", type=_float)
    g.add_argument("--eta", type=_float)
    g.add_argument("--omega", type=_float, help="default: estimated from the space")
    g.add_argument("--omega0", type=_float, help="default: estimated from the space")
    g.add_argument("--beta", type=_float)
    g.add_argument("--gamma", type=_float)
    g.add_argument("--k0", type=int)
    g.add_argument("--cutoff", type=int)
    g.add_argument("--lambda", dest="lambda_ap", type=_float)


def build_parser():
    parser = argparse.ArgumentParser(prog="homtype",
                                     description="Function-space machinery on finite spaces of homogeneous type.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "build": "dyadic cube system and doubling profile",
        "wavelets": "wavelet basis, kernels and their checks",
        "norm": "Besov / Triebel-Lizorkin norm of a function",
        "ado-certify": "empirical boundedness of almost-diagonal operators",
        "molecule": "molecule verification, Gram decay and synthesis",
        "lp-report": "square-function equivalence report",
        "angle-fit": "aperture growth of the area function",
        "selftest": "built-in invariant battery",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=helps[name])
        _common(p)
        if name == "norm":
            p.add_argument("--function", help="CSV of point_id,value (default: Gaussian from seed)")
        if name == "molecule":
            p.add_argument("--molecules", choices=["canonical", "wavelet", "perturbed"])
            p.add_argument("--full-family", dest="full_family", action="store_const", const=True)
        if name == "angle-fit":
            p.add_argument("--thetas", type=_floats, help="apertures, e.g. '1,2,4,8'")
        if name == "selftest":
            p.add_argument("--n", type=int, help="points per test space (default 64)")
            p.add_argument("--scale", type=_float, help="trial-count multiplier")
    return parser


def resolve_config(args):
    """Merge defaults, the config file and flags into a plain dict."""
    file_vals = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise InputError(f"config file not found: {path}")
        cp = configparser.ConfigParser()
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise InputError(f"{path}: {exc}") from exc
        for section in cp.sections():
            for key, val in cp.items(section):
                key = key.replace("-", "_")
                key = "lambda_ap" if key == "lambda" else key
                if key not in OPTIONS:
                    raise InputError(f"{path}: unknown key {key!r} in [{section}]")
                file_vals[key] = val
    cfg = {}
    for dest, (conv, default) in OPTIONS.items():
        val = getattr(args, dest, None)
        if val is None and dest in file_vals:
            try:
                val = conv(file_vals[dest])
            except ValueError as exc:
                raise InputError(f"config key {dest}: {exc}") from exc
        cfg[dest] = default if val is None else val
    if cfg["seed"] is None:
        env = os.environ.get("HOMTYPE_SEED")
        try:
            cfg["seed"] = int(env) if env else 0
        except ValueError:
            raise InputError(f"HOMTYPE_SEED must be an integer, got {env!r}") from None
    if cfg["threads"] is None:
        cfg["threads"] = os.cpu_count() or 1
    if cfg["points"] and cfg["dist"]:
        raise InputError("give either --points or --dist, not both")
    if cfg["metric"] not in ("euclidean", "snowflake"):
        raise InputError(f"unknown metric {cfg['metric']!r}")
    if cfg["backend"] not in ("haar", "smoothed"):
        raise InputError(f"unknown backend {cfg['backend']!r}")
    for key in ("trials", "size", "n"):
        if cfg[key] < 1:
            raise InputError(f"{key} must be positive, got {cfg[key]}")
    return cfg


def _builtin(spec):
    name, _, rest = spec.partition(":")
    try:
        if name == "line":
            return line_space(int(rest or 64))
        if name == "grid":
            r, _, c = (rest or "8x8").partition("x")
            return grid_space(int(r), int(c or r))
        if name == "cloud":
            n, _, seed = (rest or "100").partition(":")
            return random_cloud(int(n), seed=int(seed or 0))
    except ValueError as exc:
        raise InputError(f"bad built-in space {spec!r}: {exc}") from exc
    raise InputError(f"unknown built-in space {spec!r} (use line:N, grid:RxC or cloud:N[:SEED])")


def load_space(cfg):
    theta = cfg["theta"] if cfg["metric"] == "snowflake" else 1.0
    if cfg["points"]:
        if not Path(cfg["points"]).is_file():
            raise InputError(f"points file not found: {cfg['points']}")
        return read_points_csv(cfg["points"], metric=cfg["metric"], theta=theta)
    if cfg["dist"]:
        if not Path(cfg["dist"]).is_file():
            raise InputError(f"distance file not found: {cfg['dist']}")
        return read_distance_matrix(cfg["dist"])
    return _builtin(cfg["builtin"])


class Pipeline:
    """Lazily built space, tree, profile, basis and kernels for one run."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.space = load_space(cfg)
        self._cache = {}

    def _get(self, key, make):
        if key not in self._cache:
            self._cache[key] = make()
        return self._cache[key]

    @property
    def tree(self):
        return self._get("tree", lambda: build_tree(
            self.space, build_nets(self.space, delta=self.cfg["delta"]), j0=self.cfg["j0"]))

    @property
    def profile(self):
        return self._get("profile", lambda: estimate_doubling(self.space))

    @property
    def basis(self):
        def make():
            if self.cfg["backend"] == "smoothed":
                return build_smoothed(self.space, self.tree)
            return build_haar(self.space, self.tree)
        return self._get("basis", make)

    @property
    def kernels(self):
        return self._get("kernels", lambda: build_kernels(self.basis))

    def params(self, kind=None):
        c = self.cfg
        prof = self.profile
        omega = prof.omega if c["omega"] is None else c["omega"]
        omega0 = min(prof.omega0, omega) if c["omega0"] is None else c["omega0"]
        return SpaceParams(s=c["s"], p=c["p"], q=c["q"], kind=c["kind"] or kind or "besov",
                           homogeneous=not c["inhomogeneous"], beta=c["beta"], gamma=c["gamma"],
                           eps_ad=c["eps"], eta=c["eta"], omega=omega, omega0=omega0,
                           n_cutoff=c["cutoff"], k0=c["k0"])

    def space_summary(self):
        sp = self.space
        return {"n": sp.n, "a0": sp.a0, "total_mass": sp.total_mass,
                "diameter": float(sp.dist.max())}


def _run_config(cfg):
    # everything that shapes the artifacts; threads and outdir do not
    return {k: v for k, v in cfg.items() if k not in ("threads", "outdir", "config")}


def _profile_dict(prof):
    return {"omega": prof.omega, "omega0": prof.omega0, "c_mu": prof.c_mu}


def cmd_build(pl, out):
    tree = pl.tree
    checks = check_tree(pl.space, tree)
    report = {"space": pl.space_summary(), "profile": _profile_dict(pl.profile),
              "k_min": tree.k_min, "k_max": tree.k_max, "delta": tree.delta,
              "wavelet_cubes": len(tree.wavelet_family), "checks": checks}
    write_json(out / "tree.json", tree_to_dict(tree))
    write_json(out / "report.json", report)
    return report, bool(checks["holds"])


def cmd_wavelets(pl, out):
    basis, kernels, tree = pl.basis, pl.kernels, pl.tree
    w = pl.space.weights
    m = gram_matrix(basis)
    tele = max((float(np.abs(kernels.pk[k + 1] - kernels.pk[k] - kernels.dk[k]).max())
                for k in range(tree.k_min, tree.k_max)), default=0.0)
    report = {
        "backend": basis.backend,
        "gram_defect": float(np.abs(m - np.eye(m.shape[0])).max()) if m.size else 0.0,
        "cancellation": float(np.abs(basis.psi @ w).max()) if basis.psi.size else 0.0,
        "telescoping": tele,
        "conservation": max(float(np.abs(kernels.pk[k] @ w - 1).max()) for k in tree.net.levels),
    }
    if basis.backend == "smoothed":
        report["exp_ati"] = verify_exp_iati(pl.space, tree, kernels, seed=pl.cfg["seed"])
    ok = (report["gram_defect"] <= 1e-10 and report["cancellation"] <= 1e-10
          and report["telescoping"] <= 1e-10 and report["conservation"] <= 1e-10)
    write_basis(out, basis)
    write_json(out / "report.json", report)
    return report, ok


def _read_function(path, n):
    if not Path(path).is_file():
        raise InputError(f"function file not found: {path}")
    vals = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = [t.strip() for t in line.split(",")]
        if not line.strip() or (lineno == 1 and not parts[0].lstrip("-").isdigit()):
            continue
        if len(parts) != 2:
            raise InputError(f"{path}:{lineno}: expected point_id,value")
        try:
            pid, v = int(parts[0]), float(parts[1])
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric field") from None
        if not 0 <= pid < n or pid in vals:
            raise InputError(f"{path}:{lineno}: bad or duplicate point id {pid}")
        vals[pid] = v
    if len(vals) != n:
        raise InputError(f"{path}: expected values for all {n} points, got {len(vals)}")
    return np.array([vals[i] for i in range(n)])


def cmd_norm(pl, out):
    cfg = pl.cfg
    pr = require_valid(pl.params(), scope="sequence")
    if cfg["function"]:
        f = _read_function(cfg["function"], pl.space.n)
    else:
        f = np.random.default_rng(cfg["seed"]).standard_normal(pl.space.n)
    fam = pr.family(pl.tree)
    lam = analyze(pl.basis, f, fam)
    value = float(seq_norm(pl.space, lam, pr))
    detail = f - pl.kernels.apply(pl.kernels.pk[pl.tree.k_min], f)
    report = {"kind": pr.kind, "homogeneous": pr.homogeneous, "s": pr.s, "p": pr.p, "q": pr.q,
              "norm": value, "l2_detail_norm": float(lp_norm(pl.space, detail, 2)),
              "l2_norm": float(lp_norm(pl.space, f, 2))}
    write_coefficients(out / "coefficients.csv", lam)
    write_json(out / "report.json", report)
    print(format(value, ".17g"))
    return report, True


def cmd_ado(pl, out):
    cfg = pl.cfg
    pr = pl.params()
    rep = certify_boundedness(pl.space, pl.tree, pr, trials=cfg["trials"],
                              density=cfg["density"], seed=cfg["seed"])
    ok = bool(math.isfinite(rep["empirical_C"]) and rep["stable"] and rep["identity_ratio_exact"])
    write_json(out / "report.json", rep)
    return rep, ok


def _molecule_set(pl, pr, fam):
    kind = pl.cfg["molecules"]
    if kind == "wavelet":
        return wavelet_molecules(pl.space, pl.basis, fam, pr.beta, pr.gamma,
                                 normalize=pl.basis.backend != "haar")
    if kind == "perturbed":
        return perturbed_molecules(pl.space, fam, pr.beta, pr.gamma,
                                   np.random.default_rng(pl.cfg["seed"]))
    return canonical_molecules(pl.space, fam, pr.beta, pr.gamma)


def cmd_molecule(pl, out):
    cfg = pl.cfg
    pr = require_valid(pl.params(), scope="sequence").resolved()
    fam = gram_subfamily(pr.family(pl.tree), full=cfg["full_family"])
    mol = _molecule_set(pl, pr, fam)
    upper = epsilon_window(pr.s, pr.p, pr.beta, pr.gamma, pr.omega)
    gram = molecule_wavelet_gram(pl.space, pl.basis, mol)
    eps = min(cfg["eps"], upper / 2) if upper > 0 else cfg["eps"]
    K = ado_constant(gram, bound_matrix(pl.space, fam, eps, pr.s, pr.omega, pr.p, pr.q, pr.kind))
    trials = min(cfg["trials"], 100)
    syn = synthesis_report(pl.space, pl.basis, mol, pr, trials=trials, seed=cfg["seed"])
    failing = [i for i, r in enumerate(mol.reports) if not r["pass"]]
    report = {"molecules": mol.label, "beta": pr.beta, "gamma": pr.gamma, "count": len(fam),
              "max_constant": float(mol.constants.max()), "failing": failing,
              "eps_window_upper": upper, "eps": eps, "gram_K": K, "synthesis": syn}
    ok = bool(not failing and upper > 0 and math.isfinite(K) and math.isfinite(syn["max_ratio"]))
    write_operator(out / "gram.csv", gram)
    write_molecule(out, "molecule0", mol.values[0],
                   {"cube_level": int(fam.cube_level[0]), "alpha": int(fam.alpha[0]),
                    **mol.reports[0]})
    write_json(out / "report.json", report)
    return report, ok


def cmd_lp(pl, out):
    cfg = pl.cfg
    pr = pl.params(kind="triebel_lizorkin")
    rep = equivalence_report(pl.space, pl.basis, pl.kernels, pr, lambda_ap=cfg["lambda_ap"],
                             size=cfg["size"], seed=cfg["seed"])
    kind = rep["kind"]
    f = np.random.default_rng(cfg["seed"]).standard_normal(pl.space.n)
    g = g_function(pl.space, pl.kernels, f, pr.s, pr.q, kind, pr.k0, pr.n_cutoff)
    S = lusin_area(pl.space, pl.kernels, f, pr.s, pr.q, kind, pr.k0)
    gs = g_lambda_star(pl.space, pl.kernels, f, pr.s, pr.q, rep["lambda"], kind, pr.k0)
    write_rows(out / "pointwise.csv", ["point_id", "f", "g", "S", "g_star"],
               [(i, float(f[i]), float(g[i]), float(S[i]), float(gs[i])) for i in range(pl.space.n)])
    write_json(out / "report.json", rep)
    return rep, bool(rep["stable"])


def cmd_angle(pl, out):
    cfg = pl.cfg
    pr = pl.params(kind="triebel_lizorkin")
    rep = change_of_angle_fit(pl.space, pl.kernels, pr, thetas=cfg["thetas"], basis=pl.basis,
                              size=min(cfg["size"], 20), seed=cfg["seed"])
    write_json(out / "report.json", rep)
    return rep, bool(rep["pass"])


COMMANDS = {"build": cmd_build, "wavelets": cmd_wavelets, "norm": cmd_norm,
            "ado-certify": cmd_ado, "molecule": cmd_molecule, "lp-report": cmd_lp,
            "angle-fit": cmd_angle}


def run(command, cfg):
    """Run one subcommand; returns ``(report, ok)`` and writes artifacts."""
    out = Path(cfg["outdir"]) / command
    out.mkdir(parents=True, exist_ok=True)
    if command == "selftest":
        report, ok = run_selftest(n=cfg["n"], seed=cfg["seed"], scale=cfg["scale"])
        write_json(out / "report.json", report)
        return report, ok
    pl = Pipeline(cfg)
    report, ok = COMMANDS[command](pl, out)
    write_json(out / "config.json", _run_config(cfg))
    return report, ok


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        _report, ok = run(args.command, cfg)
    except (ParamError, InputError, SpaceError, NetError, BasisError, ValueError) as exc:
        print(f"homtype {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if not ok:
        print(f"homtype {args.command}: certification failed; see "
              f"{Path(cfg['outdir']) / args.command / 'report.json'}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
