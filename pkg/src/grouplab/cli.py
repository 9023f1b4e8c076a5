"""Command-line front end.

Each subcommand writes one JSON report (to stdout or ``--out``) with the
fields ``tool``, ``version``, ``subcommand``, ``config``, ``constants``,
``results``, ``checks``, ``violations``, ``pass`` and ``wall_clock_s``, in
that order.  Everything except ``wall_clock_s`` is a deterministic function
of the arguments.  Plot data goes to CSV files under ``--csv-dir``.

Exit codes: 0 when every asserted inequality holds, 2 on a violation, 1 on
usage errors (bad arguments, unreadable or malformed input files).

Atom and set files hold one element per line, optionally followed by a
weight; lines starting with ``#`` and blank lines are ignored.  Elements are
written as four reals (SU(2)), an angle (torus), an integer index (finite
groups and quotients) or comma-separated residues (towers).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time

from . import __version__

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")
SUBCOMMANDS = ("certify", "dcfit", "entropy", "mix", "lp", "walk", "bg", "product-check")


class UsageError(Exception):
    """Bad input; reported with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# input parsing


def parse_floats(text: str):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}")


def parse_grid(text: str):
    """``lo:hi:n`` -> ``n`` log-spaced values."""
    import numpy as np

    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"grid must be lo:hi:n, got {text!r}")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"grid must be lo:hi:n, got {text!r}")
    if not (0 < lo < hi) or n < 2:
        raise UsageError("grid needs 0 < lo < hi and n >= 2")
    return [float(x) for x in np.geomspace(lo, hi, n)]


def _parse_element(model, tokens, where):
    from .groups import ProfiniteModel, SU2Model, TorusModel, _IndexModel

    try:
        if isinstance(model, SU2Model):
            q = [float(t) for t in tokens]
            if len(q) != 4:
                raise ValueError("SU(2) elements need four reals")
            n = math.sqrt(sum(x * x for x in q))
            if abs(n - 1) > 1e-6:
                raise ValueError(f"quaternion norm {n:.6g} is not 1")
            return [x / n for x in q]
        if isinstance(model, TorusModel):
            (t,) = tokens
            return float(t) % (2 * math.pi)
        if isinstance(model, ProfiniteModel):
            (t,) = tokens
            return model.from_residues([int(r) for r in t.split(",")])
        if isinstance(model, _IndexModel):
            (t,) = tokens
            g = int(t)
            if not 0 <= g < model.order:
                raise ValueError(f"index {g} outside 0..{model.order - 1}")
            return g
    except ValueError as exc:
        raise UsageError(f"{where}: {exc}")
    raise UsageError(f"{where}: element files are not supported for {model.name}")


def _element_width(model):
    from .groups import SU2Model

    return 4 if isinstance(model, SU2Model) else 1


def read_atoms(model, path: str):
    """Read an atom file into ``(elements, weights or None)``."""
    if not os.path.exists(path):
        raise UsageError(f"{path}: no such file")
    width = _element_width(model)
    elems, weights = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            tok = s.split()
            where = f"{path}:{lineno}"
            if len(tok) == width:
                w = None
            elif len(tok) == width + 1:
                try:
                    w = float(tok[-1])
                except ValueError:
                    raise UsageError(f"{where}: bad weight {tok[-1]!r}")
                if not (w > 0 and math.isfinite(w)):
                    raise UsageError(f"{where}: weight must be finite and positive")
                tok = tok[:-1]
            else:
                raise UsageError(f"{where}: expected {width} element field(s) and an optional weight")
            elems.append(_parse_element(model, tok, where))
            weights.append(w)
    if not elems:
        raise UsageError(f"{path}: no elements")
    given = [w is not None for w in weights]
    if any(given) and not all(given):
        raise UsageError(f"{path}: either every line or no line carries a weight")
    return elems, (weights if all(given) else None)


def load_measure(model, path: str):
    """Atom file -> :class:`AtomicMeasure` (uniform when no weights are given)."""
    import numpy as np

    from .fourier import AtomicMeasure

    elems, weights = read_atoms(model, path)
    atoms = np.asarray(elems)
    if weights is None:
        return AtomicMeasure.uniform(model, atoms)
    w = np.asarray(weights, dtype=float)
    return AtomicMeasure(model, atoms, w / w.sum())


def load_set(model, path: str):
    import numpy as np

    elems, _ = read_atoms(model, path)
    return np.asarray(elems)


def format_element(model, g) -> str:
    from .groups import ProfiniteModel, SU2Model

    if isinstance(model, SU2Model):
        return " ".join(repr(float(x)) for x in g)
    if isinstance(model, ProfiniteModel):
        return ",".join(str(r) for r in model.residues(g))
    return str(int(g))


# ---------------------------------------------------------------------------
# report plumbing


def _clean(x):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    import numpy as np

    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


class Report:
    """Collects results and asserted inequalities for one run."""

    def __init__(self, sub: str, config: dict):
        self.sub = sub
        self.config = config
        self.constants = {}
        self.results = {}
        self.checks = []
        self.notices = []

    def check(self, name: str, lhs: float, rhs: float, relation: str = "<=", constant=None,
              ok=None, tol: float = 0.0):
        """Record ``lhs relation rhs`` with its margin (``rhs - lhs`` for ``<=``)."""
        if relation == "<=":
            margin = rhs - lhs
        elif relation == ">=":
            margin = lhs - rhs
        else:
            raise ValueError(relation)
        if ok is None:
            ok = margin >= -tol
        self.checks.append({"name": name, "lhs": lhs, "relation": relation, "rhs": rhs,
                            "margin": margin, "constant": constant, "ok": bool(ok)})
        return ok

    def flag(self, name: str, ok: bool, detail=None):
        self.checks.append({"name": name, "ok": bool(ok), "detail": detail})
        return ok

    @property
    def violations(self) -> int:
        return sum(1 for c in self.checks if not c["ok"])

    def envelope(self, wall: float) -> dict:
        return _clean({
            "tool": "grouplab",
            "version": __version__,
            "subcommand": self.sub,
            "config": self.config,
            "constants": self.constants,
            "notices": self.notices,
            "results": self.results,
            "checks": self.checks,
            "violations": self.violations,
            "pass": self.violations == 0,
            "wall_clock_s": round(wall, 6),
        })


def write_csv(args, name: str, header, rows):
    if not args.csv_dir:
        return None
    os.makedirs(args.csv_dir, exist_ok=True)
    path = os.path.join(args.csv_dir, name)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_clean(v) for v in r])
    return path


def _model(args):
    from .groups import parse_model

    try:
        return parse_model(args.group)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"--group: {exc}")


def _need_seed(args):
    if args.seed is None:
        raise UsageError(f"{args.command} samples random inputs and needs --seed")


def _scale(model, eta: float, name: str = "--eta"):
    if not (0 < eta <= model.diameter):
        raise UsageError(f"{name}={eta} outside (0, {model.diameter}]")
    return eta


# ---------------------------------------------------------------------------
# subcommands


def cmd_certify(args, rep: Report):
    from .certify import estimate_local_randomness

    _need_seed(args)
    model = _model(args)
    if args.pairs < 1 or args.dmax < 1:
        raise UsageError("--pairs and --dmax must be at least 1")
    cert = estimate_local_randomness(model, args.L, args.dmax, args.pairs, args.seed,
                                     torus_grid=args.torus_grid)
    rep.results = cert.as_dict()
    rep.results["samples"] = args.pairs
    rep.flag("locally_random", not cert.divergent,
             "ratio grows with dimension" if cert.divergent else None)
    if args.c0_max is not None:
        rep.check("C0_hat", cert.C0_hat, args.c0_max, "<=", constant="C0_max")
    write_csv(args, "certify_per_irrep.csv", ["irrep", "dim", "ratio"],
              [[r.get("label"), r.get("dim"), r.get("ratio")] for r in cert.per_irrep])


def cmd_dcfit(args, rep: Report):
    from .groups import fit_dimension_condition

    model = _model(args)
    grid = parse_grid(args.grid)
    for g in grid:
        _scale(model, g, "--grid")
    fit = fit_dimension_condition(model, grid)
    rep.results = fit.as_dict() if hasattr(fit, "as_dict") else dict(fit.__dict__)
    write_csv(args, "dcfit.csv", ["eta", "volume"],
              [[e, model.ball_volume(e)] for e in grid])
    if args.d0 is not None:
        rep.check("|d0_hat - d0|", abs(fit.d0_hat - args.d0), args.d0_tol, "<=", constant="d0_tol")
    if args.c1_max is not None:
        rep.check("C1_hat", fit.C1_hat, args.c1_max, "<=", constant="C1_max")


def cmd_entropy(args, rep: Report):
    from .scales import metric_entropy, renyi_entropy
    from .walks import convolution_power

    model = _model(args)
    etas = [_scale(model, e) for e in parse_floats(args.eta)]
    mu = load_measure(model, args.x)
    if args.lmax > 1 and not hasattr(model, "order"):
        _need_seed(args)
    seed = 0 if args.seed is None else args.seed
    rows = []
    table = {}
    mono = 0
    for eta in etas:
        hs = []
        for l in range(1, args.lmax + 1):
            nu = mu if l == 1 else convolution_power(mu, l, seed=seed)
            hs.append(renyi_entropy(nu, eta))
            rows.append([eta, l, hs[-1]])
        for l in range(1, len(hs)):
            ok = rep.check(f"H2(mu^({l + 1});{eta:g}) >= H2(mu^({l});{eta:g})", hs[l], hs[l - 1],
                           ">=", tol=1e-9)
            mono += not ok
        table[repr(eta)] = {"renyi": hs}
        if hasattr(model, "order"):
            table[repr(eta)]["metric_entropy_support"] = metric_entropy(model, mu.atoms, eta).h
    rep.results = {"atoms": int(len(mu.atoms)), "lmax": args.lmax, "entropies": table,
                   "monotonicity_violations": mono}
    write_csv(args, "entropy.csv", ["eta", "l", "H2"], rows)


def cmd_mix(args, rep: Report):
    from .certify import mixing_check

    _need_seed(args)
    model = _model(args)
    etas = [_scale(model, e) for e in parse_floats(args.eta)]
    keep = []
    for e in etas:
        if args.C0 * math.sqrt(e) > 0.1:
            rep.notices.append(f"eta={e:g} skipped: C0*sqrt(eta)={args.C0 * math.sqrt(e):.4g} > 0.1")
        else:
            keep.append(e)
    ms = [int(m) for m in parse_floats(args.m)] if args.m else []
    if any(m < 2 for m in ms):
        raise UsageError("--m values must be at least 2")
    res = mixing_check(model, keep, L=args.L, C0=args.C0, D_max=args.dmax, pairs=args.pairs,
                       m_values=ms, tuples=args.tuples, seed=args.seed)
    rep.results = res.as_dict()
    rep.results["skipped"] = [e for e in etas if e not in keep]
    rows = []
    for r in res.rows:
        rep.check(f"mixing violations at eta={r['eta']:g}", r["mixing_violations"], 0, "<=")
        rep.check(f"smoothing violations at eta={r['eta']:g}", r["smoothing_violations"], 0, "<=")
        for mm in r["multi"]:
            rep.check(f"m={mm['m']} violations at eta={r['eta']:g}",
                      mm["l2_violations"] + mm["sup_violations"], 0, "<=")
        rows.append([r["eta"], r["pairs"], r["mixing_violations"], r["mixing_min_rel_margin"]])
    write_csv(args, "mix.csv", ["eta", "pairs", "violations", "min_rel_margin"], rows)


def cmd_lp(args, rep: Report):
    import numpy as np

    from .fourier import DensityVector, enumerate_irreps, random_band_limited
    from .groups import ProfiniteModel, rng_stream
    from .lpaley import (ScaleLadder, _norm2, almost_orthogonality_matrix, lp_decompose,
                         lp_project, tower_ladder)

    _need_seed(args)
    model = _model(args)
    if isinstance(model, ProfiniteModel):
        ladder = tower_ladder(model)
    else:
        if not (0 < args.eta0 < 1) or args.a <= 1 or args.depth < 0:
            raise UsageError("need 0 < --eta0 < 1, --a > 1, --depth >= 0")
        ladder = ScaleLadder(args.eta0, args.a, args.depth)
    rep.results["ladder"] = ladder.as_dict()
    comps = []
    worst_sum = 0.0
    worst_ortho = 0.0
    ratios = []
    for k in range(args.samples):
        rng = rng_stream(args.seed, k)
        if isinstance(model, ProfiniteModel):
            g = DensityVector(model, rng.standard_normal(model.order))
        else:
            g = random_band_limited(model, enumerate_irreps(model, args.dmax), rng)
        dec = lp_decompose(g, ladder)
        comps.append(dec.component_norms)
        ratios.append(dec.square_function_ratio())
        worst_sum = max(worst_sum, dec.partial_sum_error())
        if isinstance(model, ProfiniteModel):
            n2 = dec.g_norm2 ** 2
            pyth = abs(sum(x * x for x in dec.component_norms) - n2) / n2
            worst_sum = max(worst_sum, pyth)
            for i in range(ladder.depth + 1):
                for j in range(ladder.depth + 1):
                    if i != j:
                        v = lp_project(dec.components[j], ladder, i)
                        worst_ortho = max(worst_ortho, _norm2(v) / dec.g_norm2)
    rep.results["component_norms"] = comps
    rep.results["square_function_ratio"] = {"min": min(ratios), "max": max(ratios)}
    rep.results["partial_sum_error_max"] = worst_sum
    if isinstance(model, ProfiniteModel):
        rep.check("max relative Pythagoras / partial-sum error", worst_sum, 1e-10, "<=")
        rep.check("max relative |Delta_i Delta_j g|", worst_ortho, 1e-10, "<=")
    else:
        rep.check("partial-sum error", worst_sum, 1e-10, "<=")
        orth = almost_orthogonality_matrix(model, ladder, args.dmax)
        M = np.asarray(orth.matrix)
        rep.results["almost_orthogonality"] = orth.as_dict()
        expo = 1.0 / (4 * args.L + 2)
        rep.constants["orthogonality_constant"] = args.ortho_const
        worst = -math.inf
        for i in range(M.shape[0]):
            for j in range(M.shape[1]):
                if j < i - 1:
                    bound = args.ortho_const * ladder.eta_power(i, expo)
                    worst = max(worst, M[i, j] - bound)
                    rep.check(f"||Delta_{i} Delta_{j}||", float(M[i, j]), bound, "<=",
                              constant=args.ortho_const)
        write_csv(args, "lp_orthogonality.csv", ["i", "j", "norm"],
                  [[i, j, M[i, j]] for i in range(M.shape[0]) for j in range(M.shape[1])])
    write_csv(args, "lp_ladder.csv", ["i", "log_eta"], list(enumerate(ladder.log_scales)))


def cmd_walk(args, rep: Report):
    from .fourier import CatalogUnavailable
    from .groups import _IndexModel, reference_fit
    from .lpaley import ScaleLadder
    from .walks import (GENERATING_SETS, complement_gap, flattening_ladder, generating_measure,
                        transfer_norm)

    model = _model(args)
    if args.mu:
        mu = load_measure(model, args.mu)
    else:
        if args.gens not in GENERATING_SETS:
            raise UsageError(f"--gens must be one of {GENERATING_SETS}")
        if args.gens == "random":
            _need_seed(args)
        try:
            mu = generating_measure(model, args.gens, seed=args.seed or 0)
        except (TypeError, ValueError) as exc:
            raise UsageError(str(exc))
    band_hi = args.dmax if args.dmax is not None else math.inf
    if not isinstance(model, _IndexModel) and not math.isfinite(band_hi):
        raise UsageError("--dmax is required for continuous models")
    try:
        spec = transfer_norm(mu, band=(1, band_hi))
    except CatalogUnavailable:
        if not (isinstance(model, _IndexModel) and args.dmax is None):
            raise UsageError(f"no irreducible catalog for {model.name}; drop --dmax")
        # no catalog: the norm on mean-zero functions is that of (I - P_G) T_mu
        lam = complement_gap(mu, model.diameter, 0.0)
        rep.notices.append(f"no irrep catalog for {model.name}; sparse operator norm used")
        rep.results["transfer"] = {"lambda": lam, "gap": 1.0 - lam, "band": [1, math.inf],
                                   "exact": True, "note": "sparse operator norm (no irrep catalog)"}
    else:
        rep.results["transfer"] = spec.as_dict()
        write_csv(args, "walk_per_irrep.csv", ["irrep", "norm"], sorted(spec.per_irrep.items()))
    if isinstance(model, _IndexModel) and args.eta0 is not None:
        d0 = args.d0 if args.d0 is not None else reference_fit(model).d0_hat
        a = args.a if args.a is not None else math.ceil(max(4 * args.L * d0, 6)) + 1
        ladder = ScaleLadder(args.eta0, float(a), args.depth)
        fl = flattening_ladder(mu, ladder, C2=args.C2, L=args.L, d0=d0)
        rep.results["flattening"] = fl.as_dict()
        rep.constants.update({"C2": args.C2, "L": args.L, "d0": d0, "a": a})
        rep.flag("large entropy implies gap", fl.implication_holds,
                 {"hypothesis": fl.hypothesis, "gap": fl.gap, "bound": fl.bound})
        rep.check("Renyi monotonicity violations", fl.monotonicity_violations, 0, "<=")
        write_csv(args, "walk_flattening.csv", ["i", "eta", "h", "target", "l"],
                  [[r["i"], r["eta"], r["h"], r["target"], r["l"]] for r in fl.rows])


def cmd_bg(args, rep: Report):
    from .bg import DEFAULTS, ExtractionFailure, dimension_check, extract_approx_subgroup, \
        middle_energy_check

    model = _model(args)
    eta = _scale(model, args.eta)
    X = load_measure(model, args.x)
    Y = load_measure(model, args.y)
    if args.K is not None and args.K < 1:
        raise UsageError("--K must be at least 1")
    rep.constants = DEFAULTS.as_dict()
    rep.results["dimension_condition"] = dimension_check(model, eta)
    try:
        cand = extract_approx_subgroup(X, Y, eta, args.K)
    except ExtractionFailure as exc:
        mid = middle_energy_check(X, Y, eta, args.K)
        rep.results["middle"] = mid.as_dict()
        rep.flag("extraction", False, str(exc))
        return
    except TypeError as exc:
        raise UsageError(str(exc))
    mid = cand.middle
    rep.results["gain"] = mid.gain.as_dict()
    rep.results["middle"] = mid.as_dict()
    rep.results["candidate"] = cand.as_dict()
    rep.results["K_verified"] = cand.K_verified
    g = mid.gain
    rep.check("gain floor: H2(XY) >= (H2(X)+H2(Y))/2 - 3 log2 Omega",
              g.H_XY, 0.5 * (g.H_X + g.H_Y) - g.floor, ">=", tol=1e-9)
    rep.check("balance |H2(X)-H2(Y)|", g.balance_lhs, g.balance_rhs, "<=", tol=1e-9)
    for name, tp in (("X", mid.tails_x), ("Y", mid.tails_y)):
        rep.check(f"||{name}_eta^>||_1", tp.mass_gt, tp.gt_bound, "<=")
        rep.check(f"||{name}_eta^<||_2", tp.norm_lt, tp.lt_bound, "<=")
    rep.check("middle convolution norm", mid.conv_norm, mid.conv_bound, ">=")
    rep.check("middle net energy", mid.energy, mid.energy_bound, ">=", constant=DEFAULTS.c_energy)
    rep.flag("middle volume sandwich", mid.volume_ok)
    rep.check("K_verified", cand.K_verified if cand.K_verified is not None else math.inf,
              cand.K_max, "<=", constant=DEFAULTS.c_approx, ok=cand.verification.ok)
    rep.check("|h(H) - H2(X)|", cand.entropy_gap, DEFAULTS.entropy_multiple * cand.log_k, "<=",
              tol=1e-9)
    eq = cand.equidistribution
    rep.check("P(XZ in (xH)_eta)", eq.prob_x, eq.bound, ">=", constant=DEFAULTS.c_eq)
    rep.check("P(ZY in (Hy)_eta)", eq.prob_y, eq.bound, ">=", constant=DEFAULTS.c_eq)
    rep.check("popular volume", eq.popular_volume, eq.popular_bound, ">=", constant=DEFAULTS.c_eq)
    h_path = args.h_out or (os.path.join(args.csv_dir, "H.atoms") if args.csv_dir else None)
    if h_path:
        d = os.path.dirname(h_path)
        if d:
            os.makedirs(d, exist_ok=True)
        with open(h_path, "w") as fh:
            fh.write(f"# candidate approximate subgroup, {len(cand.H)} elements\n")
            for h in cand.H:
                fh.write(format_element(model, h) + "\n")
        rep.results["H_file"] = os.path.basename(h_path)


def cmd_product_check(args, rep: Report):
    from .scales import product_coverage_check

    model = _model(args)
    eta = _scale(model, args.eta)
    if not args.eps > 0:
        raise UsageError("--eps must be positive")
    A = load_set(model, args.a_set)
    B = load_set(model, args.b_set)
    if not hasattr(model, "order"):
        _need_seed(args)
    res = product_coverage_check(model, A, B, eta, args.eps, samples=args.samples,
                                 seed=args.seed or 0)
    rep.results = res
    if not res.get("exact", True):
        rep.results["samples"] = args.samples
    rep.flag("A_eta B_eta B_eta^-1 A_eta^-1 covers 1_{eta^eps}", res["covered"], res.get("witness"))


COMMANDS = {
    "certify": cmd_certify,
    "dcfit": cmd_dcfit,
    "entropy": cmd_entropy,
    "mix": cmd_mix,
    "lp": cmd_lp,
    "walk": cmd_walk,
    "bg": cmd_bg,
    "product-check": cmd_product_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="grouplab", description="Multi-scale harmonic analysis on compact groups.")
    p.add_argument("--version", action="version", version=f"grouplab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, group_default=None):
        sp.add_argument("--group", required=group_default is None, default=group_default,
                        help="model spec: su2, torus, finite:<name>, "
                             "profinite:<name>:depth=<n>:beta=<q>, product:(<spec>,<spec>)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help="report path (default stdout)")
        sp.add_argument("--csv-dir", default=None, help="directory for CSV side files")

    s = sub.add_parser("certify", help="local-randomness coefficient")
    common(s)
    s.add_argument("--L", type=float, default=1.0)
    s.add_argument("--dmax", type=float, default=51)
    s.add_argument("--pairs", type=int, default=100_000)
    s.add_argument("--torus-grid", type=int, default=4096)
    s.add_argument("--c0-max", type=float, default=None, help="assert C0_hat <= this value")

    s = sub.add_parser("dcfit", help="dimension-condition fit")
    common(s)
    s.add_argument("--grid", default="1e-3:0.5:32", help="lo:hi:n log-spaced scales")
    s.add_argument("--d0", type=float, default=None, help="assert |d0_hat - d0| <= --d0-tol")
    s.add_argument("--d0-tol", type=float, default=0.02)
    s.add_argument("--c1-max", type=float, default=None)

    s = sub.add_parser("entropy", help="scaled Renyi entropies of convolution powers")
    common(s)
    s.add_argument("--x", required=True, help="atom file")
    s.add_argument("--eta", required=True, help="comma-separated scales")
    s.add_argument("--lmax", type=int, default=1)

    s = sub.add_parser("mix", help="scaled mixing inequalities")
    common(s)
    s.add_argument("--eta", default="0.01")
    s.add_argument("--L", type=float, default=1.0)
    s.add_argument("--C0", type=float, default=1.0)
    s.add_argument("--dmax", type=float, default=25)
    s.add_argument("--pairs", type=int, default=200)
    s.add_argument("--m", default="2,3", help="tuple lengths for the m-fold bounds")
    s.add_argument("--tuples", type=int, default=20)

    s = sub.add_parser("lp", help="Littlewood-Paley decomposition")
    common(s)
    s.add_argument("--eta0", type=float, default=0.3)
    s.add_argument("--a", type=float, default=10.0)
    s.add_argument("--depth", type=int, default=3)
    s.add_argument("--L", type=float, default=1.0)
    s.add_argument("--dmax", type=float, default=101)
    s.add_argument("--samples", type=int, default=10)
    s.add_argument("--ortho-const", type=float, default=100.0)

    s = sub.add_parser("walk", help="transfer-operator norms and flattening")
    common(s)
    s.add_argument("--mu", default=None, help="atom file (default: --gens)")
    s.add_argument("--gens", default="uv")
    s.add_argument("--dmax", type=float, default=None)
    s.add_argument("--eta0", type=float, default=None, help="ladder start; enables flattening")
    s.add_argument("--a", type=float, default=None)
    s.add_argument("--depth", type=int, default=1)
    s.add_argument("--L", type=float, default=1.0)
    s.add_argument("--d0", type=float, default=None)
    s.add_argument("--C2", type=float, default=2.0)

    s = sub.add_parser("bg", help="entropy gain and approximate-subgroup extraction")
    common(s)
    s.add_argument("--x", required=True)
    s.add_argument("--y", required=True)
    s.add_argument("--eta", type=float, required=True)
    s.add_argument("--K", type=float, default=None)
    s.add_argument("--h-out", default=None, help="write the candidate H here")

    s = sub.add_parser("product-check", help="product-set coverage")
    common(s)
    s.add_argument("--a-set", "--A", dest="a_set", required=True)
    s.add_argument("--b-set", "--B", dest="b_set", required=True)
    s.add_argument("--eta", type=float, required=True)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--samples", type=int, default=2000)
    return p


def _apply_threads():
    raw = os.environ.get("GROUPLAB_THREADS")
    if raw is None:
        return None
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        raise UsageError(f"GROUPLAB_THREADS must be a positive integer, got {raw!r}")
    for var in THREAD_VARS:
        os.environ[var] = str(n)
    return n


def run(argv=None, stdout=None) -> int:
    """Parse ``argv``, run the subcommand and write the report; return the exit code."""
    stdout = stdout or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        threads = _apply_threads()
        config = {k: v for k, v in vars(args).items() if k not in ("out", "csv_dir", "h_out")}
        rep = Report(args.command, config)
        if threads is not None:
            rep.notices.append(f"GROUPLAB_THREADS={threads}")
        from .fourier import CatalogUnavailable

        try:
            COMMANDS[args.command](args, rep)
        except (CatalogUnavailable, NotImplementedError) as exc:
            raise UsageError(f"unsupported input: {exc}")
    except UsageError as exc:
        print(f"grouplab {args.command}: error: {exc}", file=sys.stderr)
        return 1
    body = json.dumps(rep.envelope(time.perf_counter() - t0), indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(body + "\n")
    else:
        stdout.write(body + "\n")
    return 0 if rep.violations == 0 else 2


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
