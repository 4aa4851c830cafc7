"""Command-line front end.

    lindblad-krylov <command> [--preset NAME | --config FILE] [--m INT] [--T FLOAT]
                    [--tol FLOAT] [--seed INT] [--out DIR] [--threads INT] ...

Exit codes: 0 success, 1 configuration error, 2 partial convergence,
3 size guard (dense oracle refused).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import oracle
from .config import COMMANDS, ConfigError, RunConfig, read_config_file, resolve
from .generator import expectation
from .krylov import arnoldi_lindblad, match_eigenvalues, steady_state_extract
from .operators import embed, number, random_density_matrix, save_operators, sector_ladder
from .propagator import IntegrationError, Trajectory, observable_trajectory

log = logging.getLogger("lindblad_krylov")

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_GUARD = 0, 1, 2, 3
BENCH_TASKS = (0, 4, 9, 49)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lindblad-krylov",
                description="Slow Liouvillian spectra from time-evolution snapshots.")
    p.add_argument("command", choices=COMMANDS)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", help="named model preset")
    src.add_argument("--config", help="INI configuration file (see config_schema.ini)")
    p.add_argument("--size", type=int, help="cutoff n_max, or N for floquet-fig8")
    p.add_argument("--m", type=int, help="number of slowest eigenvalues")
    p.add_argument("--T", type=float, help="snapshot interval")
    p.add_argument("--tol", type=float, help="residual threshold")
    p.add_argument("--check-every", dest="check_every", type=int)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--seed-state", dest="seed_state", choices=("random", "vacuum", "maximally-mixed"))
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker cap")
    p.add_argument("--t-final", dest="t_final", type=float)
    p.add_argument("--sample-dt", dest="sample_dt", type=float)
    p.add_argument("--trajectory", help="trajectory CSV for fit-baseline")
    p.add_argument("--observable", help="observable column for fit-baseline")
    p.add_argument("--window", type=float, nargs=2, metavar=("START", "STOP"))
    p.add_argument("--max-dim", dest="max_dim", type=int)
    p.add_argument("--dump-eigenmatrices", dest="dump_eigenmatrices", action="store_true",
                   default=None)
    p.add_argument("--method", choices=("rk4", "rk45"))
    p.add_argument("--dt", type=float)
    p.add_argument("--substeps", type=int)
    p.add_argument("--backend", choices=("compiled", "python"))
    p.add_argument("--tasks", help="bench: comma-separated m values of rho^(m) (default 0,4,9,49)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def initial_state(model, kind: str, seed: int) -> np.ndarray:
    d = model.dim
    if kind == "random":
        return np.asarray(random_density_matrix(d, seed))
    if kind == "maximally-mixed":
        return np.eye(d, dtype=complex) / d
    out = np.zeros((d, d), dtype=complex)
    out[0, 0] = 1.0  # all modes empty; in the sector: n1 = 0, n2 = N
    return out


def site_observables(model) -> dict[str, np.ndarray]:
    space = model.space
    if space.sector is not None:
        return {"n1": sector_ladder("n1", space.sector), "n2": sector_ladder("n2", space.sector)}
    return {f"n{l}": embed(number(space.n_max), l, space) for l in range(1, space.sites + 1)}


def _write_json(path: Path, doc: dict):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def cmd_spectrum(cfg: RunConfig, model, out: Path) -> int:
    T = cfg.resolved_T(model)
    rho0 = initial_state(model, cfg.seed_state, cfg.seed)
    res = arnoldi_lindblad(model, rho0, T, m=cfg.m, tol=cfg.tol, check_every=cfg.check_every,
                           max_iter=cfg.max_iter, cfg=cfg.integrator, workers=cfg.threads,
                           callback=_progress if log.isEnabledFor(logging.INFO) else None)
    doc = res.to_dict(cfg.to_dict())
    _write_json(out / "spectrum.json", doc)
    if cfg.dump_eigenmatrices:
        save_operators(out / "eigenmatrices.bin", [p.eigenmatrix for p in res.pairs], model.space)
    log.info("%s after %d snapshots (%.1f s)", res.termination, res.iterations, res.wall_time)
    for p in res.pairs:
        print(f"lambda = {p.lam.real:+.10f} {p.lam.imag:+.10f}i   residual {p.residual:.2e}"
              f"{'' if p.converged else '  (not converged)'}")
    return EXIT_OK if res.termination == "converged" else EXIT_PARTIAL


def _progress(k, pairs):
    conv = sum(p.converged for p in pairs)
    log.info("snapshot %d: %d/%d leading pairs converged", k, conv, len(pairs))


def cmd_oracle_ed(cfg: RunConfig, model, out: Path) -> int:
    if model.is_periodic:
        raise ConfigError("oracle-ed needs a time-independent model; use floquet-map")
    mat = oracle.build_liouvillian_matrix(model, max_dim=cfg.max_dim)
    spec = oracle.exact_spectrum(mat, vectors=False)
    _write_json(out / "spectrum.json", spec.to_dict(cfg.to_dict()))
    print(f"{len(spec.values)} eigenvalues in {spec.wall_time:.1f} s; slowest:")
    for lam in spec.values[: max(cfg.m, 1)]:
        print(f"  {lam.real:+.10f} {lam.imag:+.10f}i")
    return EXIT_OK


def cmd_floquet_map(cfg: RunConfig, model, out: Path) -> int:
    if not model.is_periodic:
        raise ConfigError("floquet-map needs a periodically driven model")
    t0 = time.perf_counter()
    mat = oracle.floquet_map_matrix(model, cfg.integrator, workers=cfg.threads,
                                    max_dim=cfg.max_dim)
    t_map = time.perf_counter() - t0
    spec = oracle.exact_spectrum(mat, vectors=False)
    doc = spec.to_dict(cfg.to_dict())
    doc["map_wall_time"] = t_map
    doc["map_shape"] = list(mat.matrix.shape)
    _write_json(out / "spectrum.json", doc)
    print(f"{mat.matrix.shape[0]}x{mat.matrix.shape[1]} map in {t_map:.1f} s, ED {spec.wall_time:.1f} s")
    for phi in spec.values[: max(cfg.m, 1)]:
        print(f"  phi = {phi.real:+.10f} {phi.imag:+.10f}i   |phi| = {abs(phi):.10f}")
    return EXIT_OK


def _sample_times(t_final, dt):
    n = int(round(t_final / dt))
    return np.linspace(0.0, n * dt, n + 1)


def cmd_evolve(cfg: RunConfig, model, out: Path) -> int:
    rho0 = initial_state(model, cfg.seed_state, cfg.seed)
    traj = observable_trajectory(model, rho0, _sample_times(cfg.t_final, cfg.sample_dt),
                                 site_observables(model), cfg.integrator)
    traj.to_csv(out / "trajectory.csv")
    print(f"wrote {len(traj.times)} samples of {', '.join(traj.names)} to {out / 'trajectory.csv'}")
    return EXIT_OK


def cmd_fit_baseline(cfg: RunConfig, out: Path) -> int:
    try:
        traj = Trajectory.from_csv(cfg.trajectory)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read trajectory: {exc}") from None
    name = cfg.observable or traj.names[0]
    if name not in traj.names:
        raise ConfigError(f"observable {name!r} not in {traj.names}")
    try:
        fit = oracle.exp_fit_extrapolate(traj.times, traj.column(name), window=cfg.window)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    doc = {"source": "exp-fit", "observable": name, **fit.to_dict(), "config": cfg.to_dict()}
    _write_json(out / "fit.json", doc)
    print(f"{name}: ss = {fit.ss:.10g}, c1 = {fit.amplitude:.4g}, "
          f"lambda1 = {fit.rate.real:.6g}{fit.rate.imag:+.6g}i ({fit.kind}, rms {fit.residual:.2e})")
    return EXIT_OK if fit.converged else EXIT_PARTIAL


def cmd_bench(cfg: RunConfig, model, out: Path, tasks=BENCH_TASKS) -> int:
    """Wall time and accuracy of each method on rho^(m) tasks."""
    if model.is_periodic:
        raise ConfigError("bench needs a time-independent model")
    T = cfg.resolved_T(model)
    t0 = time.perf_counter()
    spec = oracle.exact_spectrum(oracle.build_liouvillian_matrix(model, max_dim=cfg.max_dim),
                                 vectors=True, keep=1)
    t_ed = time.perf_counter() - t0
    obs_name, obs = next(iter(site_observables(model).items()))
    rho_ss = spec.eigenmatrix(0)
    ss_ref = expectation(obs, rho_ss / np.trace(rho_ss)).real
    lam_ref = spec.values
    eps_ref = np.exp(lam_ref * T)
    lam1 = lam_ref[1]
    rho0 = initial_state(model, cfg.seed_state, cfg.seed)
    rows = []
    al_runs = {}
    for task in tasks:
        res = arnoldi_lindblad(model, rho0, T, m=task + 1, tol=cfg.tol,
                               check_every=cfg.check_every, max_iter=cfg.max_iter,
                               cfg=cfg.integrator, workers=cfg.threads)
        conv = res.converged_pairs
        err = np.nan
        if conv:
            idx = match_eigenvalues([p.eps for p in conv], eps_ref)
            err = max(abs(p.lam - lam_ref[j]) for p, j in zip(conv, idx))
        try:
            ss = expectation(obs, steady_state_extract(res)).real
            ss_err = abs(ss - ss_ref) / abs(ss_ref)
        except ValueError:
            ss_err = np.nan
        al_runs[task] = res
        rows.append((f"rho^({task})", "arnoldi-lindblad", res.wall_time, err, ss_err,
                     res.simulated_time, res.termination))
        rows.append((f"rho^({task})", "oracle-ed", t_ed, 0.0, 0.0, 0.0, "exact"))
    # exp-fit baseline on one trajectory, cut at each task's simulated time
    t_max = max(r.simulated_time for r in al_runs.values())
    t_start = time.perf_counter()
    times = _sample_times(t_max, T)
    traj = observable_trajectory(model, rho0, times, {obs_name: obs}, cfg.integrator)
    t_traj = time.perf_counter() - t_start
    y = traj.column(obs_name).real
    for task, res in al_runs.items():
        t_cut = res.simulated_time
        sel = times <= t_cut + 1e-12
        t_fit = time.perf_counter()
        try:
            fit = oracle.exp_fit_extrapolate(times[sel], y[sel], window=(t_cut / 2, t_cut))
            ss_err = abs(fit.ss - ss_ref) / abs(ss_ref)
            lam_err = abs(fit.rate - lam1) if fit.kind == "exponential" else min(
                abs(fit.rate - lam1), abs(fit.rate.conjugate() - lam1))
            status = "converged" if fit.converged else "failed"
        except ValueError as exc:
            ss_err = lam_err = np.nan
            status = f"failed: {exc}"
        wall = t_traj * t_cut / t_max + time.perf_counter() - t_fit
        rows.append((f"rho^({task})", "exp-fit", wall, lam_err, ss_err, t_cut, status))
    with open(out / "bench.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["task", "method", "wall_time", "max_eigenvalue_error", "ss_rel_error",
                    "simulated_time", "status"])
        for r in rows:
            w.writerow([r[0], r[1], f"{r[2]:.6g}", f"{r[3]:.6g}", f"{r[4]:.6g}", f"{r[5]:.6g}", r[6]])
    _write_json(out / "bench.json", {"source": "bench", "observable": obs_name,
                                     "ss_reference": ss_ref, "config": cfg.to_dict(),
                                     "rows": [dict(zip(("task", "method", "wall_time",
                                                        "max_eigenvalue_error", "ss_rel_error",
                                                        "simulated_time", "status"), r))
                                              for r in rows]})
    for r in rows:
        print(f"{r[0]:>9} {r[1]:>17} {r[2]:9.3f} s  eig err {r[3]:.2e}  ss err {r[4]:.2e}")
    partial = any(r[1] == "arnoldi-lindblad" and r[6] != "converged" for r in rows)
    return EXIT_PARTIAL if partial else EXIT_OK


def _parse_tasks(text):
    if text is None:
        return BENCH_TASKS
    try:
        tasks = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"--tasks must be comma-separated integers, got {text!r}") from None
    if any(t < 0 for t in tasks):
        raise ConfigError("--tasks values must be >= 0")
    return tasks


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors (exit 1) and --help (exit 0)
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        file_values = read_config_file(args.config) if args.config else None
        overrides = {k: v for k, v in vars(args).items()
                     if k not in ("command", "config", "verbose", "tasks")}
        overrides["window"] = tuple(args.window) if args.window else None
        cfg = resolve(args.command, file_values, overrides)
        tasks = _parse_tasks(args.tasks)
        model = None if cfg.command == "fit-baseline" else cfg.build_model()
        if model is not None and cfg.command in ("oracle-ed", "floquet-map", "bench"):
            oracle._guard(model.dim, cfg.max_dim)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        if cfg.command == "spectrum":
            return cmd_spectrum(cfg, model, out)
        if cfg.command == "oracle-ed":
            return cmd_oracle_ed(cfg, model, out)
        if cfg.command == "floquet-map":
            return cmd_floquet_map(cfg, model, out)
        if cfg.command == "evolve":
            return cmd_evolve(cfg, model, out)
        if cfg.command == "bench":
            return cmd_bench(cfg, model, out, tasks)
        return cmd_fit_baseline(cfg, out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except oracle.SizeGuardError as exc:
        print(f"size guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except IntegrationError as exc:
        print(f"integration failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
