"""Command line front end: ``inflap solve | envelope | tow | verify | report``.

Runs take a flat ``key = value`` config file (``--config``); command line
flags override it. Exit codes: 0 success, 1 configuration error, 2 numeric
failure, 3 a verification check failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from dataclasses import dataclass, fields
from dataclasses import field as dc_field
from pathlib import Path

import numpy as np

from . import analysis as an
from .discretization import ScalarField, read_field, write_field
from .envelope import convex_envelope, transform, witness_interiority, write_witnesses
from .game import GameConfig, NonExit, play
from .geometry import ConvexDomain, load_domain
from .solver import NoConvergence, SchemeParams, solve

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3

CHECKS = ("concavity", "cones", "quadcone", "semiconcavity", "gradient", "blowup", "envelope", "decay")
DEFAULT_CHECKS = ("concavity", "cones", "quadcone", "semiconcavity", "gradient", "blowup")

log = logging.getLogger("inflap")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    domain: str | None = None
    f: float = 1.0
    eps: float = 0.05
    m: int = 16
    tol: float | None = None
    max_iter: int = 200_000
    sweep: str = "gauss_seidel"
    h: float | None = None
    trials: int = 10_000
    seed: int = 0
    max_steps: int | None = None
    strategy: str = "greedy_on_field"
    start: str | None = None
    min_exit_rate: float = 0.99
    checks: tuple = DEFAULT_CHECKS
    refinements: int = 1
    shrink: float = 0.5
    decay_eps: tuple = (0.2, 0.1, 0.05)
    output: str = "."
    field: str | None = None
    threads: int = 1
    _set: set = dc_field(default_factory=set, repr=False)

    def scheme(self) -> SchemeParams:
        return SchemeParams(eps=self.eps, m=self.m, tol=self.tol, max_iter=self.max_iter,
                            sweep=self.sweep, h=self.h)


def _convert(name: str, raw: str):
    """Parse a raw config string into the type of ``RunConfig.name``."""
    try:
        if name in ("f", "eps", "min_exit_rate", "shrink"):
            return float(raw)
        if name in ("tol", "h"):
            return None if raw.lower() == "none" else float(raw)
        if name in ("m", "max_iter", "trials", "seed", "refinements", "threads"):
            return int(raw)
        if name == "max_steps":
            return None if raw.lower() == "none" else int(raw)
        if name == "checks":
            vals = tuple(t for t in raw.replace(",", " ").split() if t)
            bad = [c for c in vals if c not in CHECKS]
            if bad:
                raise ConfigError(f"checks: unknown check(s) {', '.join(bad)}")
            return vals
        if name == "decay_eps":
            return tuple(float(t) for t in raw.replace(",", " ").split())
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None
    return raw


KEYS = [f.name for f in fields(RunConfig) if not f.name.startswith("_")]


def parse_config(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KEYS:
            raise ConfigError(f"{key}: unknown config key")
        out[key] = _convert(key, val)
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config: file {path} not found")
        values.update(parse_config(path.read_text()))
    for key in KEYS:
        raw = getattr(args, key, None)
        if raw is not None:
            values[key] = _convert(key, raw) if isinstance(raw, str) else raw
    cfg = RunConfig(**values)
    cfg._set = set(values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    for key in ("domain", "field"):
        p = getattr(cfg, key)
        if p is not None and not Path(p).is_file():
            raise ConfigError(f"{key}: file {p} not found")
    if not cfg.eps > 0:
        raise ConfigError("eps: must be > 0")
    if cfg.tol is not None and not cfg.tol > 0:
        raise ConfigError("tol: must be > 0")
    if cfg.max_iter < 1:
        raise ConfigError("max_iter: must be >= 1")
    if cfg.sweep not in ("jacobi", "gauss_seidel", "newton"):
        raise ConfigError(f"sweep: unknown mode {cfg.sweep!r}")
    if cfg.trials < 1:
        raise ConfigError("trials: must be >= 1")
    if cfg.refinements < 1:
        raise ConfigError("refinements: must be >= 1")
    if not 0 < cfg.shrink < 1:
        raise ConfigError("shrink: must lie in (0, 1)")
    if not 0 <= cfg.min_exit_rate <= 1:
        raise ConfigError("min_exit_rate: must lie in [0, 1]")
    if cfg.threads < 1:
        raise ConfigError("threads: must be >= 1")
    if cfg.strategy not in ("greedy_on_field", "radial"):
        raise ConfigError(f"strategy: unknown strategy {cfg.strategy!r}")
    if not cfg.f >= 0:
        raise ConfigError("f: must be >= 0")


def _domain(cfg: RunConfig) -> ConvexDomain:
    if cfg.domain is None:
        raise ConfigError("domain: required")
    try:
        return load_domain(cfg.domain)
    except ValueError as exc:
        raise ConfigError(f"domain: {exc}") from None


def _solve(d: ConvexDomain, cfg: RunConfig, eps: float | None = None, logfile=None) -> ScalarField:
    p = cfg.scheme()
    if eps is not None:
        p = SchemeParams(eps=eps, m=p.m, tol=p.tol, max_iter=p.max_iter, sweep=p.sweep,
                         h=None if cfg.h is None else cfg.h * eps / cfg.eps)
    cb = None
    if logfile is not None:
        def cb(it, res):
            logfile.write(f"{it} {res:.17g}\n")
    try:
        return solve(d, cfg.f, p, callback=cb)
    except NoConvergence:
        raise
    except ValueError as exc:
        raise ConfigError(f"eps: {exc}") from None


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(cfg: RunConfig, out=None) -> int:
    out = sys.stdout if out is None else out
    d = _domain(cfg)
    outdir = _outdir(cfg)
    with open(outdir / "solve.log", "w") as logfile:
        u = _solve(d, cfg, logfile=logfile)
    write_field(outdir / "field.txt", u)
    out.write(f"iterations: {u.meta['iterations']}\nresidual: {u.meta['residual']:.17g}\n"
              f"field: {outdir / 'field.txt'}\n")
    return EXIT_OK


def _field_or_solve(cfg: RunConfig, d: ConvexDomain) -> ScalarField:
    if cfg.field is not None:
        try:
            return read_field(cfg.field, d)
        except ValueError as exc:
            raise ConfigError(f"field: {exc}") from None
    return _solve(d, cfg)


def cmd_envelope(cfg: RunConfig, out=None) -> int:
    out = sys.stdout if out is None else out
    d = _domain(cfg)
    u = _field_or_solve(cfg, d)
    outdir = _outdir(cfg)
    tf = transform(u)
    env, wit = convex_envelope(tf)
    write_field(outdir / "envelope.txt", env)
    write_witnesses(outdir / "witnesses.txt", wit)
    gap = float(np.max(np.abs(env.inside_values() - tf.w.inside_values())))
    interior = witness_interiority(wit, d)
    out.write(f"gap: {gap:.17g}\nmax_k: {int(wit.k().max())}\n"
              f"interior_witnesses: {int(interior.sum())}/{len(interior)}\n")
    return EXIT_OK


def cmd_tow(cfg: RunConfig, out=None) -> int:
    out = sys.stdout if out is None else out
    d = _domain(cfg)
    if cfg.start is None:
        raise ConfigError("start: required")
    try:
        start = np.array([float(t) for t in cfg.start.replace(",", " ").split()])
    except ValueError:
        raise ConfigError(f"start: cannot parse {cfg.start!r}") from None
    if start.size != d.dim:
        raise ConfigError(f"start: expected {d.dim} coordinates")
    guide = None
    if cfg.strategy == "greedy_on_field":
        guide = _field_or_solve(cfg, d)
    gc = GameConfig(eps=cfg.eps, trials=cfg.trials, seed=cfg.seed, max_steps=cfg.max_steps,
                    m=cfg.m, strategy=cfg.strategy, workers=cfg.threads)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonExit)
        try:
            res = play(d, start, cfg.f, gc, guide)
        except ValueError as exc:
            raise ConfigError(f"start: {exc}") from None
    out.write(res.to_text())
    if res.exit_rate < cfg.min_exit_rate:
        print(f"error: exit_rate {res.exit_rate:.6g} below min_exit_rate {cfg.min_exit_rate}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _refined_fields(cfg: RunConfig, d: ConvexDomain) -> list[ScalarField]:
    """Coarse to fine. An injected field is coarsened dyadically instead."""
    if cfg.field is not None:
        u = _field_or_solve(cfg, d)
        out = [u]
        for k in range(1, cfg.refinements):
            try:
                out.insert(0, an.subsample(u, 2**k))
            except ValueError:
                break
        return out
    return [_solve(d, cfg, eps=cfg.eps / 2**k) for k in range(cfg.refinements)]


def _cone_bases(d: ConvexDomain, u: ScalarField) -> list[np.ndarray]:
    """Centroid and four nodes offset toward the axes, all well inside."""
    g = u.grid
    c = d.centroid()
    R = -float(d.signed_distance(c))
    bases = [c]
    offs = [np.array([1.0]), np.array([-1.0])] if d.dim == 1 else \
        [np.array(v, float) for v in ((1, 0), (-1, 0), (0, 1), (0, -1))]
    for o in offs:
        bases.append(c + 0.3 * R * o)
    if d.dim == 1:
        bases += [c + 0.15 * R, c - 0.15 * R]
    # snap to nodes
    out = []
    for b in bases:
        iy, ix = g.index_of(b)
        out.append(g.point(iy, ix))
    return out


def run_check(name: str, fields_: list[ScalarField], d: ConvexDomain, cfg: RunConfig,
              report: an.RegularityReport) -> None:
    u = fields_[-1]
    h = u.grid.h
    tol = 10 * h
    if name == "concavity":
        seq = [an.concavity_defect(v, 0.5) for v in fields_]
        report.add("concavity", seq[-1], tol, exponent=0.5, h=[v.grid.h for v in fields_], sequence=seq)
    elif name == "cones":
        worst, worst_end = 0.0, 0.0
        for y in _cone_bases(d, u):
            R = -float(d.signed_distance(y))
            radii = np.linspace(R / 8, R, 8)
            cc = an.cone_comparison(u, y, radii)
            worst, worst_end = max(worst, cc.violation), max(worst_end, cc.endpoint_violation)
        report.add("cones", max(worst, worst_end), tol, monotonicity=worst, endpoint=worst_end, base_points=5)
    elif name == "quadcone":
        seq = [an.quad_cone_bound(v, d).violation for v in fields_]
        report.add("quadcone", seq[-1], tol, h=[v.grid.h for v in fields_], sequence=seq)
    elif name == "semiconcavity":
        res = an.semiconcavity_check(u, cfg.shrink)
        report.add("semiconcavity", res.violation, tol, K_set=f"domain scaled by {cfg.shrink} about centroid",
                   M=res.M, C=res.C)
    elif name == "gradient":
        seq = an.gradient_oscillation(fields_, cfg.shrink)
        ok = len(seq) >= 2 and all(b < a for a, b in zip(seq, seq[1:]))
        report.add("gradient", seq[-1], seq[0], passed=ok, h=[v.grid.h for v in fields_], sequence=seq)
    elif name == "blowup":
        c = d.centroid()
        e = np.zeros(d.dim)
        e[0] = 1.0
        x1 = c + float(d.ray_exit(c, e)) * e
        fit = an.boundary_blowup(transform(u), x1, -e)
        report.add("blowup", abs(fit.exponent - 0.5), 0.1, exponent=fit.exponent, x1=x1)
    elif name == "envelope":
        tf = transform(u)
        env, wit = convex_envelope(tf)
        gap = float(np.max(np.abs(env.inside_values() - tf.w.inside_values())))
        interior = bool(np.all(witness_interiority(wit, d)))
        stol = float(u.meta.get("tol", 1e-9 * d.diameter() ** 2))
        report.add("envelope", gap, 2 * stol, passed=gap <= 2 * stol and interior, witnesses_interior=str(interior))
    elif name == "decay":
        rows = an.boundary_decay(d, cfg.decay_eps, cfg.scheme())
        worst = max(r.sup - r.bound for r in rows)
        report.add("decay", max(worst, 0.0), 0.0, eps=[r.eps for r in rows], sup=[r.sup for r in rows],
                   bound=[r.bound for r in rows])
    else:  # pragma: no cover - guarded by config parsing
        raise ConfigError(f"checks: unknown check {name!r}")


def _report(cfg: RunConfig, checks) -> an.RegularityReport:
    d = _domain(cfg)
    fields_ = _refined_fields(cfg, d)
    rep = an.RegularityReport(meta={"domain": cfg.domain, "f": cfg.f, "eps": cfg.eps,
                                    "refinements": len(fields_), "h": fields_[-1].grid.h})
    for name in checks:
        try:
            run_check(name, fields_, d, cfg, rep)
        except (ValueError, NoConvergence) as exc:
            # a check that cannot be evaluated counts as failed
            rep.add(name, float("nan"), float("nan"), passed=False, error=str(exc))
    return rep


def cmd_report(cfg: RunConfig, out=None, svg: str | None = None) -> int:
    out = sys.stdout if out is None else out
    rep = _report(cfg, cfg.checks)
    text = rep.to_text()
    outdir = _outdir(cfg)
    (outdir / "report.txt").write_text(text)
    if svg:
        series = {c.name: (c.details["h"], c.details["sequence"]) for c in rep.checks
                  if "sequence" in c.details and "h" in c.details}
        rep.plot_svg(svg, series)
    out.write(text)
    return EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_verify(cfg: RunConfig, check: str, out=None) -> int:
    out = sys.stdout if out is None else out
    if check not in CHECKS:
        raise ConfigError(f"check: unknown check {check!r}")
    rep = _report(cfg, [check])
    out.write(rep.to_text())
    return EXIT_OK if rep.passed else EXIT_VERIFY


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--domain", help="domain description file")
    p.add_argument("--f", help="constant source term")
    p.add_argument("--eps", help="ring radius")
    p.add_argument("--m", help="ring direction count")
    p.add_argument("--h", help="grid spacing (default eps/3 in 2D, eps/2 in 1D)")
    p.add_argument("--tol", help="stopping tolerance")
    p.add_argument("--max-iter", dest="max_iter")
    p.add_argument("--sweep", help="jacobi | gauss_seidel | newton")
    p.add_argument("--output", help="output directory")
    p.add_argument("--field", help="use this field file instead of solving")
    p.add_argument("--threads", help="worker cap")
    p.add_argument("-v", "--verbose", action="store_true")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="inflap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the Dirichlet problem and write the field")
    _common(p)

    p = sub.add_parser("envelope", help="convex envelope of -sqrt(u) with witnesses")
    _common(p)

    p = sub.add_parser("tow", help="Monte Carlo tug-of-war estimate at a start point")
    _common(p)
    p.add_argument("--start", help="start point, e.g. '0' or '0 0'")
    p.add_argument("--trials")
    p.add_argument("--seed")
    p.add_argument("--max-steps", dest="max_steps")
    p.add_argument("--strategy")
    p.add_argument("--min-exit-rate", dest="min_exit_rate")
    p.add_argument("--allow-nonexit", action="store_true", help="never fail on truncated trajectories")

    for name, helptext in (("verify", "run one regularity check"), ("report", "run all selected checks")):
        p = sub.add_parser(name, help=helptext)
        if name == "verify":
            p.add_argument("check", help=" | ".join(CHECKS))
        _common(p)
        p.add_argument("--checks")
        p.add_argument("--refinements")
        p.add_argument("--shrink")
        p.add_argument("--decay-eps", dest="decay_eps")
        if name == "report":
            p.add_argument("--svg", help="write a log-log defect plot")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "allow_nonexit", False):
            args.min_exit_rate = "0"
        cfg = build_config(args)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "envelope":
            return cmd_envelope(cfg)
        if args.command == "tow":
            return cmd_tow(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, args.check)
        return cmd_report(cfg, svg=args.svg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoConvergence as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
