"""Command line driver: standard vs. surrogate assembly, solve, and report.

CSV columns (one row per run, in this order) are listed in ``CSV_COLUMNS``.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys
import time
from dataclasses import dataclass, field

from .assembly import assemble_stiffness, write_matrix_market
from .errors import ConfigError, NumericalError
from .geometry import GEOMETRIES, builtin_geometry, read_geometry
from .interpolation import DEGREES
from .quadrature import gauss_rule
from .solve_verify import (CASES, apply_dirichlet, assemble_load, compute_errors,
                           manufactured_case, matrix_max_diff, project_boundary, solve)
from .splines import interior_lattice, tensor_space
from .surrogate import SurrogateConfig, assemble_surrogate, boundary_mask, sample_indices

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

DEFAULT_NEL = {2: 159, 3: 39}
DEFAULT_GEOMETRY = {2: "quarter_annulus_bumps", 3: "bent_box"}

CSV_COLUMNS = (
    "dim", "nel", "degree", "interp_degree", "skip", "geometry", "quad_points", "solution",
    "n_dofs", "t_assembly_standard", "t_assembly_surrogate", "speedup",
    "t_solve_standard", "t_solve_surrogate", "iterations_standard", "iterations_surrogate",
    "l2_standard", "h1_standard", "l2_surrogate", "h1_surrogate", "max_diff", "max_abs_A",
    "status", "message",
)


@dataclass
class RunConfig:
    dim: int = 2
    nel: int | None = None
    degree: int = 2
    interp_degree: int = 3
    skip: int = 10
    geometry: str | None = None
    quad_points: int | None = None
    tol: float = 1e-12
    threads: int = 1
    solution: str = "oscillatory"
    dump_matrices: str | None = None
    csv: str | None = None

    def resolved(self):
        """Copy with per-dimension defaults filled in."""
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        return dataclasses.replace(
            self,
            nel=DEFAULT_NEL[self.dim] if self.nel is None else self.nel,
            geometry=DEFAULT_GEOMETRY[self.dim] if self.geometry is None else self.geometry,
            quad_points=self.degree + 1 if self.quad_points is None else self.quad_points)

    def validate(self):
        """Check every precondition up front; returns the geometry."""
        if self.degree < 1:
            raise ConfigError(f"degree must be >= 1, got {self.degree}")
        if self.nel < 1:
            raise ConfigError(f"nel must be >= 1, got {self.nel}")
        SurrogateConfig(self.skip, self.interp_degree)
        boundary_mask(self.degree, self.nel)
        space = tensor_space(self.dim, self.degree, self.nel)
        sample_indices(interior_lattice(space).size, self.skip, self.interp_degree)
        gauss_rule(self.quad_points)
        if not 0.0 < self.tol < 1.0:
            raise ConfigError(f"solver tolerance must lie in (0, 1), got {self.tol}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.solution not in CASES:
            raise ConfigError(f"unknown solution {self.solution!r}; choose from {', '.join(CASES)}")
        return load_geometry(self.geometry, self.dim)


def load_geometry(name, dim):
    if name in GEOMETRIES:
        return builtin_geometry(name, dim)
    if not os.path.isfile(name):
        raise ConfigError(f"geometry {name!r} is neither a built-in ({', '.join(GEOMETRIES)}) "
                          "nor an existing file")
    g = read_geometry(name)
    if g.dim != dim:
        raise ConfigError(f"geometry file {name} is {g.dim}D but dim={dim}")
    return g


@dataclass
class RunReport:
    config: RunConfig
    n_dofs: int = 0
    t_assembly_standard: float = float("nan")
    t_assembly_surrogate: float = float("nan")
    t_solve_standard: float = float("nan")
    t_solve_surrogate: float = float("nan")
    iterations_standard: int = 0
    iterations_surrogate: int = 0
    l2_standard: float = float("nan")
    h1_standard: float = float("nan")
    l2_surrogate: float = float("nan")
    h1_surrogate: float = float("nan")
    max_diff: float = float("nan")
    max_abs_A: float = float("nan")
    status: str = "ok"
    message: str = ""
    matrices: tuple = field(default=(), repr=False)

    @property
    def speedup(self):
        return self.t_assembly_standard / self.t_assembly_surrogate

    def row(self):
        c = self.config
        vals = dataclasses.asdict(c)
        vals.update({k: getattr(self, k) for k in CSV_COLUMNS if hasattr(self, k)})
        out = {}
        for k in CSV_COLUMNS:
            v = vals.get(k, "")
            out[k] = f"{v:.16g}" if isinstance(v, float) else ("" if v is None else v)
        return out


def _say(out, text):
    if out is not None:
        print(text, file=out, flush=True)


def run(config, out=None, keep_matrices=False, quiet=False):
    """Standard assembly and solve, then the same with the surrogate matrix.

    The console report goes to `out` (default ``sys.stdout``) unless `quiet`.
    """
    out = None if quiet else (sys.stdout if out is None else out)
    cfg = config.resolved()
    geometry = cfg.validate()
    space = tensor_space(cfg.dim, cfg.degree, cfg.nel)
    case = manufactured_case(cfg.solution, cfg.dim)
    rep = RunReport(cfg, n_dofs=space.n_dofs)
    m = cfg.quad_points

    _say(out, "Initializing problem...")
    b = assemble_load(space, geometry, case.f, m)
    boundary = project_boundary(space, geometry, case.g, m)

    _say(out, "Assembling standard IGA matrix...")
    t0 = time.perf_counter()
    A = assemble_stiffness(space, geometry, m, threads=cfg.threads)
    rep.t_assembly_standard = time.perf_counter() - t0
    _say(out, f"Standard assembly time: {rep.t_assembly_standard:.6f} s")
    _say(out, "Solving standard IGA problem...")
    t0 = time.perf_counter()
    sol = solve(apply_dirichlet(A, b, case.g, space, geometry, m, boundary), cfg.tol)
    rep.t_solve_standard = time.perf_counter() - t0
    rep.iterations_standard = sol.iterations
    _say(out, f"Standard solve time: {rep.t_solve_standard:.6f} s")

    _say(out, "Assembling surrogate IGA matrix...")
    t0 = time.perf_counter()
    As = assemble_surrogate(space, geometry, SurrogateConfig(cfg.skip, cfg.interp_degree), m,
                            cfg.threads)
    rep.t_assembly_surrogate = time.perf_counter() - t0
    _say(out, f"Surrogate assembly time: {rep.t_assembly_surrogate:.6f} s")
    _say(out, "Solving surrogate IGA problem...")
    t0 = time.perf_counter()
    sol_s = solve(apply_dirichlet(As, b, case.g, space, geometry, m, boundary), cfg.tol)
    rep.t_solve_surrogate = time.perf_counter() - t0
    rep.iterations_surrogate = sol_s.iterations
    _say(out, f"Surrogate solve time: {rep.t_solve_surrogate:.6f} s")

    _say(out, "Computing errors...")
    rep.l2_standard, rep.h1_standard = compute_errors(sol, case)
    rep.l2_surrogate, rep.h1_surrogate = compute_errors(sol_s, case)
    rep.max_diff = matrix_max_diff(A, As)
    rep.max_abs_A = float(abs(A).max())
    _say(out, "Relative error in standard IGA")
    _say(out, f"L2-norm: {rep.l2_standard:.6e}")
    _say(out, f"H1-norm: {rep.h1_standard:.6e}\n")
    _say(out, f"||A - A_surrogate||_max = {rep.max_diff:.6e}\n")
    _say(out, "Relative error in surrogate IGA")
    _say(out, f"L2-norm: {rep.l2_surrogate:.6e}")
    _say(out, f"H1-norm: {rep.h1_surrogate:.6e}\n")
    _say(out, f"Assembly speed-up: {rep.speedup:.2f}")

    if cfg.dump_matrices:
        os.makedirs(cfg.dump_matrices, exist_ok=True)
        write_matrix_market(A, os.path.join(cfg.dump_matrices, "A_standard.mtx"))
        write_matrix_market(As, os.path.join(cfg.dump_matrices, "A_surrogate.mtx"))
    if keep_matrices:
        rep.matrices = (A, As)
    return rep


def write_csv(reports, path_or_file):
    def dump(fh):
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in reports:
            w.writerow(r.row())

    if hasattr(path_or_file, "write"):
        dump(path_or_file)
    else:
        with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
            dump(fh)


# ---------------------------------------------------------------------------
# Sweeps

_FIELD_TYPES = {"dim": int, "nel": int, "degree": int, "interp_degree": int, "skip": int,
                "geometry": str, "quad_points": int, "tol": float, "threads": int,
                "solution": str}


def parse_sweep(text, base=None):
    """Configs from ``key=value`` blocks separated by blank lines.

    Keys are :class:`RunConfig` field names (dashes allowed); ``#`` starts a
    comment.  Keys missing from a block are taken from `base`.
    """
    base = RunConfig() if base is None else base
    configs, block = [], {}

    def flush():
        if block:
            configs.append(dataclasses.replace(base, **block))
            block.clear()

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            flush()
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in _FIELD_TYPES:
            raise ConfigError(f"sweep line {lineno}: expected key=value with key in "
                              f"{', '.join(_FIELD_TYPES)}, got {raw.strip()!r}")
        try:
            block[key] = _FIELD_TYPES[key](value.strip())
        except ValueError:
            raise ConfigError(f"sweep line {lineno}: bad value for {key}: {value.strip()!r}")
    flush()
    return configs


def sweep(configs, out=None, quiet=False):
    """Run every config; failures are recorded in the row and the sweep continues."""
    reports = []
    out = None if quiet else (sys.stdout if out is None else out)
    for cfg in configs:
        try:
            reports.append(run(cfg, out, quiet=quiet))
        except (ConfigError, NumericalError, ValueError) as exc:
            kind = "config_error" if isinstance(exc, (ConfigError, ValueError)) else "numerical_error"
            reports.append(RunReport(cfg, status=kind, message=str(exc)))
            _say(out, f"run failed ({kind}): {exc}")
    return reports


# ---------------------------------------------------------------------------
# Entry point

def build_parser():
    ap = argparse.ArgumentParser(
        prog="surrogate-iga",
        description="Compare standard and surrogate IGA stiffness assembly on a Poisson problem.")
    ap.add_argument("--dim", type=int, default=2, choices=(2, 3))
    ap.add_argument("--nel", type=int, help="elements per direction (default 159 in 2D, 39 in 3D)")
    ap.add_argument("--degree", type=int, default=2, help="spline degree p")
    ap.add_argument("--interp-degree", type=int, default=3, choices=DEGREES,
                    help="stencil interpolation degree q")
    ap.add_argument("--skip", type=int, default=10, help="sampling stride M")
    ap.add_argument("--geometry",
                    help=f"built-in ({', '.join(GEOMETRIES)}) or path to a geometry file")
    ap.add_argument("--quad-points", type=int, help="Gauss points per direction (default p+1)")
    ap.add_argument("--tol", type=float, default=1e-12, help="CG relative residual")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--solution", default="oscillatory", choices=tuple(CASES),
                    help="manufactured solution")
    ap.add_argument("--dump-matrices", metavar="DIR", help="write A and the surrogate as Matrix Market")
    ap.add_argument("--csv", metavar="PATH", help="write the CSV table here")
    ap.add_argument("--sweep", metavar="FILE", help="key=value blocks, one run per block")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    base = RunConfig(args.dim, args.nel, args.degree, args.interp_degree, args.skip,
                     args.geometry, args.quad_points, args.tol, args.threads, args.solution,
                     args.dump_matrices, args.csv)
    try:
        if args.sweep:
            with open(args.sweep, encoding="utf-8") as fh:
                configs = parse_sweep(fh.read(), base)
            reports = sweep(configs, sys.stdout if args.csv else sys.stderr)
            write_csv(reports, args.csv if args.csv else sys.stdout)
            return EXIT_OK
        rep = run(base)
        if args.csv:
            write_csv([rep], args.csv)
        return EXIT_OK
    except (ConfigError, OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
