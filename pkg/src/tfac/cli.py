"""Command-line front end.

Exit codes: 0 success, 1 a run failed or an enabled check did not pass,
2 invalid configuration, 3 file system error.
"""

from __future__ import annotations

import argparse
import csv
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import COMMANDS, ConfigError, RunConfig, dump_config, parse_config
from .errors import InvariantViolation, ParameterDomainError, SolverError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def _add_common(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", metavar="FILE", help="flat key = value file; flags override its entries")
    p.add_argument("--output", "-o", default=S, help="output path (file prefix or directory)")


def _add_time(p: argparse.ArgumentParser, n_help: str) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--alpha", default=S, help="fractional order in (0, 1)")
    p.add_argument("--gamma", default=S, help="grading exponent (default 2/alpha + 0.1)")
    p.add_argument("--nu", default=S, help="offset in [0, 1/2) (default alpha/2)")
    p.add_argument("--T", default=S, help="final time")
    p.add_argument("--N", default=S, help=n_help)


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="tfac", description="Time-fractional Allen-Cahn solver and verification suite")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(COMMANDS) + "}")

    for name, help_ in (("solve", "run one manufactured example"), ("study", "convergence table over several N")):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        p.add_argument("--example", default=S, help="manufactured example: 6.1, 6.2, 6.3 or 6.4")
        _add_time(p, "number of time steps" if name == "solve" else "comma-separated increasing list")
        p.add_argument("--kappa", default=S)
        p.add_argument("--nx", default=S, help="cells per side under fixed coupling")
        p.add_argument("--ny", default=S)
        p.add_argument("--coupling", default=S, help="h=1/(2N) (default) or fixed")
        p.add_argument("--k", default=S, help="element order, 0 or 1")
        p.add_argument("--delta", default=S, help="step-condition constant > 1")
        p.add_argument("--kappa-in-flux-term", dest="kappa_in_flux_term", default=S, help="true (default) or false")
        if name == "solve":
            p.add_argument("--snapshots", default=S, help="comma-separated step indices to export")

    p = sub.add_parser("kernels", help="check the discrete and complementary kernel properties")
    _add_common(p)
    _add_time(p, "comma-separated list of step counts")
    p.add_argument("--dump-tables", dest="dump_tables", action="store_const", const="true", default=S)

    p = sub.add_parser("gronwall", help="verify the discrete fractional Gronwall bound on random instances")
    _add_common(p)
    _add_time(p, "number of time steps")
    p.add_argument("--delta", default=S)
    p.add_argument("--seeds", default=S, help="number of random instances")
    p.add_argument("--seed", default=S, help="first seed")

    p = sub.add_parser("mesh-info", help="counts for a structured triangulation")
    _add_common(p)
    p.add_argument("--nx", default=S)
    p.add_argument("--ny", default=S)
    p.add_argument("--domain", default=S, help="x0,x1,y0,y1")
    p.add_argument("--k", default=S)
    return parser


# -- output helpers ----------------------------------------------------------------


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([repr(x) if isinstance(x, float) else x for x in r])


def _markdown(header, rows) -> str:
    cells = [[str(h) for h in header]] + [[f"{x:.4g}" if isinstance(x, float) else str(x) for x in r] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(header))]
    fmt = lambda row: "| " + " | ".join(c.ljust(w) for c, w in zip(row, widths)) + " |"  # noqa: E731
    lines = [fmt(cells[0]), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    lines += [fmt(r) for r in cells[1:]]
    return "\n".join(lines) + "\n"


def _out(cfg: RunConfig, default: str) -> Path:
    return Path(cfg.output if cfg.output else default)


# -- subcommands -------------------------------------------------------------------


def _cmd_kernels(cfg: RunConfig) -> list[str]:
    from .kernels import build_kernel_tables, check_kernel_properties
    from .temporal_mesh import build_graded_mesh

    failures, rows = [], []
    out = _out(cfg, "kernels")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for N in cfg.N:
            mesh = build_graded_mesh(cfg.T or 1.0, N, cfg.gamma, cfg.nu)
            try:
                tables = build_kernel_tables(mesh, cfg.alpha)
            except InvariantViolation as exc:
                rows.append([cfg.alpha, cfg.gamma, N, "tables", "fail", float("nan"), str(exc)])
                failures.append(f"N={N} kernel tables: {exc}")
                continue
            diag = check_kernel_properties(tables)
            for r in diag.rows():
                rows.append([cfg.alpha, cfg.gamma, N, r["item"], r["status"], r["worst_slack"], r["detail"]])
                if r["status"] not in ("pass", "vacuous"):
                    failures.append(f"N={N} property {r['item']}: {r['status']} (slack {r['worst_slack']:.3e})")
            if cfg.dump_tables:
                for name, tab in (("K", tables.K), ("P", tables.P)):
                    n, j = np.nonzero(np.tril(np.ones_like(tab)))
                    _write_csv(
                        Path(f"{out}_N{N}_{name}.csv"), ["row", "col", "value"],
                        zip((n + 1).tolist(), (j + 1).tolist(), tab[n, j].tolist()),
                    )
    header = ["alpha", "gamma", "N", "item", "status", "worst_slack", "detail"]
    _write_csv(Path(f"{out}.csv"), header, rows)
    print(_markdown(header[2:6], [r[2:6] for r in rows]), end="")
    return failures


def _cmd_gronwall(cfg: RunConfig) -> list[str]:
    from .gronwall import verify_gronwall
    from .temporal_mesh import build_graded_mesh

    mesh = build_graded_mesh(cfg.T or 1.0, cfg.N[0], cfg.gamma, cfg.nu)
    rows, failures = [], []
    for s in range(cfg.seed, cfg.seed + cfg.seeds):
        r = verify_gronwall(s, cfg.alpha, mesh, delta=cfg.delta)
        rows.append([r.seed, r.alpha, r.gamma, r.N, r.min_slack, "true" if r.holds else "false"])
        if not r.holds:
            failures.append(f"seed {s}: min slack {r.min_slack:.3e}, step condition met: {r.step_condition_met}")
    header = ["seed", "alpha", "gamma", "N", "min_slack", "holds"]
    _write_csv(Path(f"{_out(cfg, 'gronwall')}.csv"), header, rows)
    worst = min(r[4] for r in rows)
    print(f"{len(rows) - len(failures)}/{len(rows)} instances hold; smallest slack {worst:.4g}")
    return failures


def _cmd_mesh_info(cfg: RunConfig) -> list[str]:
    from .fem.mesh import build_structured_mesh, write_mesh
    from .fem.spaces import MixedSpace

    mesh = build_structured_mesh(cfg.domain, cfg.nx, cfg.ny)
    space = MixedSpace(mesh, cfg.k)
    info = [
        ("vertices", mesh.n_vertices),
        ("triangles", mesh.n_triangles),
        ("edges", mesh.n_edges),
        ("boundary edges", len(mesh.boundary_edges)),
        ("flux dofs", space.n_flux),
        ("scalar dofs", space.n_scalar),
        ("cell width x", (cfg.domain[1] - cfg.domain[0]) / cfg.nx),
        ("cell width y", (cfg.domain[3] - cfg.domain[2]) / cfg.ny),
        ("diameter", mesh.h),
    ]
    print(_markdown(["quantity", "value"], info), end="")
    if cfg.output:
        write_mesh(mesh, cfg.output)
    return []


def _case_for(cfg: RunConfig):
    """The named example with any ``kappa`` or ``T`` override applied."""
    from .verification import get_case

    base = get_case(cfg.example)
    if (cfg.kappa, cfg.T) == (base.kappa, base.T):
        return base
    return replace(base, kappa=cfg.kappa, T=cfg.T)


def _cmd_solve(cfg: RunConfig) -> list[str]:
    from .fem.spaces import MixedSpace
    from .solver import run
    from .temporal_mesh import build_graded_mesh
    from .verification import problem_for, spatial_mesh_for, weighted_errors

    case = _case_for(cfg)
    N = cfg.N[0]
    tmesh = build_graded_mesh(case.T, N, cfg.gamma, cfg.nu)
    mesh, h = spatial_mesh_for(case, N, cfg.coupling, cfg.nx)
    space = MixedSpace(mesh, cfg.k)
    out = _out(cfg, f"solve_{case.name}")
    problem = problem_for(case, cfg.alpha, cfg.nu, cfg.kappa_in_flux_term)
    try:
        res = run(problem, tmesh, space, delta=cfg.delta, snapshot_dir=out, snapshot_steps=cfg.snapshots or (N,))
    except SolverError as exc:
        return [f"solver failed at step {exc.step}: {exc}"]
    Eu, Es = weighted_errors(res.u, res.sigma, case, tmesh, space, cfg.alpha)
    summary = [
        ("example", case.name), ("alpha", cfg.alpha), ("gamma", cfg.gamma), ("N", N), ("h", h),
        ("max step", tmesh.max_step), ("max |u_h|", res.max_norm), ("L*", res.L_star),
        ("dt*", res.dt_star), ("step condition met", res.step_ok),
        ("max residual", max(res.state.residuals)), ("E_u", Eu), ("E_sigma", Es),
    ]
    _write_csv(out / "summary.csv", ["quantity", "value"], summary)
    print(_markdown(["quantity", "value"], summary), end="")
    if not res.step_ok:
        print(f"note: max step {tmesh.max_step:.4g} exceeds dt* {res.dt_star:.4g}; the stability bound is not certified",
              file=sys.stderr)
    return []


def _cmd_study(cfg: RunConfig) -> list[str]:
    from .verification import convergence_study

    case = _case_for(cfg)
    report = convergence_study(
        case, cfg.alpha, cfg.N, coupling=cfg.coupling, k=cfg.k, gamma=cfg.gamma, nu=cfg.nu,
        delta=cfg.delta, nx=cfg.nx, kappa_in_flux_term=cfg.kappa_in_flux_term,
        progress=lambda msg: print(msg, file=sys.stderr),
    )
    out = _out(cfg, f"study_{case.name}_alpha{cfg.alpha:g}")
    out.parent.mkdir(parents=True, exist_ok=True)
    report.to_csv(f"{out}.csv")
    md = report.to_markdown(f"{out}.md")
    print(md, end="")
    return [f"N={r.N}: {r.error}" for r in report.rows if r.error]


_HANDLERS = {
    "solve": _cmd_solve,
    "study": _cmd_study,
    "kernels": _cmd_kernels,
    "gronwall": _cmd_gronwall,
    "mesh-info": _cmd_mesh_info,
}


def execute(cfg: RunConfig) -> int:
    try:
        failures = _HANDLERS[cfg.command](cfg)
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except ParameterDomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantViolation, SolverError) as exc:
        failures = [str(exc)]
    for f in failures:
        print(f"FAILED {f}", file=sys.stderr)
    return EXIT_FAIL if failures else EXIT_OK


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return execute(cfg)


__all__ = ["build_parser", "dump_config", "execute", "main"]


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
