"""Command-line driver for convergence studies and simulations.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields

import numpy as np

from . import problems
from .assembly import Discretization, ProblemSpec
from .io import write_profiles as _write_profiles
from .io import write_table, write_vtk
from .mesh import generate_structured
from .postprocess import CHANNELS, ErrorReport, cell_fields, trajectory_errors
from .solver import NewtonError, SingularSystemError, Solver

log = logging.getLogger(__name__)

PROBLEMS = ("example1", "cavity", "channel", "custom")
EMIT_CHOICES = ("csv", "vtk", "profiles")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    problem: str = "example1"
    order: int = 0
    levels: list = field(default_factory=lambda: [4, 8, 16])
    dt: float = None
    T: float = None
    nu: float = 1.0
    p: float = 3.0
    alpha: float = 1.0
    F: float = 10.0
    alpha_sweep: list = None
    F_sweep: list = None
    out: str = "output"
    emit: list = field(default_factory=lambda: ["csv"])
    profile_samples: int = 64
    # channel / custom problems
    channels: list = None
    domain: list = None
    dirichlet: dict = field(default_factory=dict)
    stress_zero_tags: list = field(default_factory=list)
    regions: list = field(default_factory=list)
    source: list = None

    def validate(self) -> "RunConfig":
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem: unknown problem {self.problem!r}; choose from {PROBLEMS}")
        if not isinstance(self.order, int) or self.order not in (0, 1):
            raise ConfigError(f"order: must be 0 or 1, got {self.order!r}")
        if not self.levels:
            raise ConfigError("levels: at least one mesh level is required")
        if any(not isinstance(n, int) or n < 1 for n in self.levels):
            raise ConfigError(f"levels: mesh levels must be positive integers, got {self.levels}")
        if self.problem == "example1" and min(self.levels) < 2:
            raise ConfigError("levels: example1 needs n >= 2")
        for name in ("dt", "T"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"{name}: must be positive, got {v}")
        for name in ("nu", "alpha", "F"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name}: must be positive, got {getattr(self, name)}")
        if not 3 <= self.p <= 4:
            raise ConfigError(f"p: must lie in [3, 4], got {self.p}")
        for name in ("alpha_sweep", "F_sweep"):
            vals = getattr(self, name)
            if vals is None:
                continue
            if not isinstance(vals, list) or not vals:
                raise ConfigError(f"{name}: a sweep needs a non-empty list, got {vals!r}")
            if any(not isinstance(v, (int, float)) or not v > 0 for v in vals):
                raise ConfigError(f"{name}: sweep values must be positive numbers, got {vals!r}")
            if self.problem not in ("cavity", "custom"):
                raise ConfigError(f"{name}: parameter sweeps apply to the cavity or custom problems")
        bad = [e for e in self.emit if e not in EMIT_CHOICES]
        if bad:
            raise ConfigError(f"emit: unknown output kinds {bad}; choose from {EMIT_CHOICES}")
        if self.profile_samples < 2:
            raise ConfigError(f"profile_samples: need at least 2, got {self.profile_samples}")
        return self

    @property
    def sweep(self) -> list:
        """(alpha, F) pairs: alpha-major product of the sweep lists."""
        alphas = self.alpha_sweep or [self.alpha]
        Fs = self.F_sweep or [self.F]
        return [(a, f) for a in alphas for f in Fs]


def load_config(path=None, **overrides) -> RunConfig:
    """Config from a JSON file, then non-None ``overrides`` on top."""
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: {path} is not valid JSON ({exc})") from exc
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown configuration field")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(f"config: {exc}") from exc
    return cfg.validate()


# -- problem construction ----------------------------------------------------

def _time_kw(cfg: RunConfig) -> dict:
    return {k: v for k, v in (("dt", cfg.dt), ("T", cfg.T)) if v is not None}


def build_problem(cfg: RunConfig, n: int, alpha=None, F=None) -> problems.Problem:
    alpha = cfg.alpha if alpha is None else alpha
    F = cfg.F if F is None else F
    try:
        if cfg.problem == "example1":
            return problems.example1_spec(n, cfg.order, nu=cfg.nu, alpha=alpha, forch=F,
                                          p_exp=cfg.p, **_time_kw(cfg))
        if cfg.problem == "cavity":
            return problems.example3_spec(alpha, F, n, cfg.order, **_time_kw(cfg))
        if cfg.problem == "channel":
            kw = _time_kw(cfg)
            if cfg.channels is not None:
                kw["channels"] = tuple(("channel", tuple(r)) for r in cfg.channels)
            return problems.example4_spec(n, cfg.order, **kw)
        return _custom_problem(cfg, n, alpha, F)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"problem: {exc}") from exc


def _custom_problem(cfg: RunConfig, n: int, alpha, F) -> problems.Problem:
    """Constant Dirichlet data per tag, optional traction-free tags and regions.

    ``regions`` entries: {"rect": [x0, x1, y0, y1], "alpha": a, "F": f}.
    """
    domain = cfg.domain or [0.0, 1.0, 0.0, 1.0]
    if len(domain) != 4:
        raise ConfigError(f"domain: expected [x0, x1, y0, y1], got {domain}")
    mesh = generate_structured(n, n, ((domain[0], domain[1]), (domain[2], domain[3])))
    dirichlet = {}
    for tag, val in cfg.dirichlet.items():
        if len(val) != 2:
            raise ConfigError(f"dirichlet: value for {tag!r} must be a 2-vector")
        dirichlet[tag] = problems._constant(val)
    regions = None
    a_val, f_val = alpha, F
    if cfg.regions:
        rects, a_val, f_val = [], {"background": alpha}, {"background": F}
        for i, r in enumerate(cfg.regions):
            lab = f"region{i}"
            try:
                rects.append((lab, tuple(r["rect"])))
                a_val[lab], f_val[lab] = float(r["alpha"]), float(r["F"])
            except (KeyError, TypeError) as exc:
                raise ConfigError(f"regions: entry {i} needs rect, alpha and F") from exc
        regions = problems.RegionMap(tuple(rects))
    source = None
    if cfg.source is not None:
        source = problems._constant(cfg.source)
    spec = ProblemSpec(nu=cfg.nu, p=cfg.p, alpha=a_val, forch=f_val, source=source,
                       dirichlet_data=dirichlet, stress_zero_tags=frozenset(cfg.stress_zero_tags),
                       k=cfg.order, regions=regions,
                       **{**dict(dt=1e-2, T=1.0), **_time_kw(cfg)})
    return problems.Problem("custom", spec, mesh, regions=regions)


def solve_problem(problem: problems.Problem, callback=None):
    disc = Discretization(problem.spec, problem.mesh)
    solver = Solver(problem.spec, disc)
    initial = solver.solve_initial()
    states, reports = solver.time_loop(initial, callback=callback)
    return disc, states, reports


# -- operations ---------------------------------------------------------------

def _sci(v) -> str:
    return format(float(v), ".3E")


def _full(v) -> str:
    return format(float(v), ".17g")


TABLE_HEADER = ["DOF", "h"] + [x for c in CHANNELS for x in (c, f"rate_{c}")] + ["iter"]


def run_convergence_study(cfg: RunConfig) -> ErrorReport:
    """All levels of a manufactured-solution study; writes the rate table when emitting csv."""
    if cfg.problem != "example1":
        raise ConfigError(f"problem: convergence studies need a manufactured solution, got {cfg.problem!r}")
    levels = []
    for n in cfg.levels:
        pb = build_problem(cfg, n)
        disc, states, reports = solve_problem(pb)
        lev = trajectory_errors(disc, pb.exact, states, reports, n=n)
        log.info("n=%d h=%.4f e_u_M=%.3e iters=%.2f", n, lev.h, lev.e_u_M, lev.avg_newton_iters)
        levels.append(lev)
        if "vtk" in cfg.emit:
            _emit_vtk(cfg, disc, states[-1], f"example1_k{cfg.order}_n{n}.vtk")
    report = ErrorReport(levels)
    if "csv" in cfg.emit:
        rows = list(report.rows())
        stem = os.path.join(cfg.out, f"convergence_k{cfg.order}")
        write_table(stem + ".csv", TABLE_HEADER, _format_rows(rows))
        write_table(stem + "_raw.csv", TABLE_HEADER,
                    [[r[0]] + [None if v is None else _full(v) for v in r[1:]] for r in rows])
    return report


def _format_rows(rows):
    for r in rows:
        out = [r[0], format(r[1], ".4f")]
        for i in range(len(CHANNELS)):
            err, rate = r[2 + 2 * i], r[3 + 2 * i]
            out += [_sci(err), "" if rate is None else format(rate, ".4f")]
        out.append(format(r[-1], ".2f"))
        yield out


def _emit_vtk(cfg, disc, state, name):
    os.makedirs(cfg.out, exist_ok=True)
    f = cell_fields(disc, state)
    cells = np.arange(disc.mesh.n_cells)
    u = disc.M.evaluate(state.u, cells, disc.mesh.centroids[:, None, :])[:, 0]
    write_vtk(disc.mesh, f, os.path.join(cfg.out, name), vectors={"velocity": u})


def run_simulation(cfg: RunConfig):
    """Time loop(s) on the finest configured level, sweeping (alpha, F) pairs.

    Returns a list of (alpha, F, disc, final_state, reports).
    """
    n = cfg.levels[-1]
    runs, profiles, labels = [], [], []
    for alpha, F in cfg.sweep:
        pb = build_problem(cfg, n, alpha, F)
        disc, states, reports = solve_problem(pb)
        final = states[-1]
        runs.append((alpha, F, disc, final, reports))
        log.info("alpha=%g F=%g: %d steps, max iters %d", alpha, F, len(reports),
                 max(r.iterations for r in reports))
        tag = f"{cfg.problem}_a{alpha:g}_F{F:g}_k{cfg.order}_n{n}"
        if "vtk" in cfg.emit:
            _emit_vtk(cfg, disc, final, tag + ".vtk")
        if "profiles" in cfg.emit:
            xmid = 0.5 * sum(disc.mesh.domain[0])
            profiles.append(problems.centerline_profile(disc, final, x=xmid, samples=cfg.profile_samples))
            labels.append(f"alpha={alpha:g};F={F:g}")
    if "profiles" in cfg.emit:
        write_profiles(profiles, labels, os.path.join(cfg.out, f"{cfg.problem}_profiles.csv"))
    if "csv" in cfg.emit:
        header = ["alpha", "F", "steps", "avg_iter", "max_iter"]
        rows, labels = [], []
        for alpha, F, disc, final, reports in runs:
            its = [r.iterations for r in reports]
            row = [alpha, F, len(reports), float(np.mean(its)), max(its)]
            if disc.spec.regions is not None:
                means = problems.region_mean_speed(disc, final, disc.spec.regions)
                labels = sorted(means)
                row += [means[lab] for lab in labels]
            rows.append(row)
        header += [f"mean_speed_{lab}" for lab in labels]
        write_table(os.path.join(cfg.out, f"{cfg.problem}_summary.csv"), header, rows)
    return runs


def write_profiles(profiles, labels, path) -> None:
    try:
        _write_profiles(profiles, labels, path)
    except ValueError as exc:
        raise ConfigError(f"profiles: {exc}") from exc


# -- entry point ----------------------------------------------------------------

def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _str_list(text: str) -> list:
    if text.strip().lower() == "none":
        return []
    return [v.strip() for v in text.split(",") if v.strip()]


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bfmixed", description=__doc__.splitlines()[0])
    ap.add_argument("mode", nargs="?", choices=("convergence", "simulate"), default=None,
                    help="default: convergence for example1, simulate otherwise")
    ap.add_argument("--config", help="JSON configuration file")
    ap.add_argument("--problem", choices=PROBLEMS)
    ap.add_argument("--levels", type=_int_list, help="comma-separated mesh subdivisions")
    ap.add_argument("--order", type=int, choices=(0, 1))
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--emit", type=_str_list, help="comma-separated subset of csv,vtk,profiles or 'none'")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, problem=args.problem, levels=args.levels,
                          order=args.order, out=args.out, emit=args.emit)
        mode = args.mode or ("convergence" if cfg.problem == "example1" else "simulate")
        if mode == "convergence":
            report = run_convergence_study(cfg)
            for row in _format_rows(report.rows()):
                print(",".join(str(v) for v in row))
        else:
            runs = run_simulation(cfg)
            for alpha, F, _, _, reports in runs:
                print(f"alpha={alpha:g} F={F:g} steps={len(reports)} "
                      f"avg_iter={np.mean([r.iterations for r in reports]):.2f}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NewtonError as exc:
        print(f"solver failure at step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except SingularSystemError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
