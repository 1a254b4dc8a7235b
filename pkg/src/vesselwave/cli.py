"""Command-line entry point: one subcommand per experiment.

Usage::

    vesselwave SUBCOMMAND [--config PATH] [--out DIR] [--seed N] [--quiet]

Each run writes CSV tables and ``summary.json`` into the output directory.
Exit status: 0 when every declared verdict passes, 1 when a verdict fails,
2 on a runtime or configuration error.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import evolve, illposedness, traveling
from .config import ConfigParseError, ExperimentConfig, parse_config
from .errors import VesselWaveError
from .model import NeumannInverse, apply_A, contraction_factor
from .results import ResultRecord
from .spectral import PeriodicGrid, l2_norm, random_bandlimited

# Declared tolerances used for verdicts.
MASS_DRIFT_TOL = 1e-8
ORDER_TARGET, ORDER_TOL = 4.0, 0.2
REVERSAL_TOL = 1e-6
GROWTH_REL_TOL = 0.01
WINDOW_SPREAD_TOL = 0.10
COLLAPSE_TOL = 0.20
UNIQUENESS_TOL = 1e-14
NEUMANN_RESIDUAL_TOL = 1e-10
NEUMANN_RATIO_SLACK = 0.05
GENERATOR_FLAT_TOL = 1e-7
GENERATOR_GROWTH = 1.5
WAVE_RESIDUAL_TOL = 1e-10
WAVE_INVARIANT_TOL = 1e-12
BRANCH_EXPONENT, BRANCH_EXPONENT_TOL = 2.0, 0.1
TRANSLATION_TOL = 1e-6

HELP = {
    "simulate": "integrate one trajectory; mass drift, RK4 order, time reversal",
    "epsilon-family": "mollified runs over [experiment] epsilons; energy window and gaps",
    "continuous-dependence": "difference energy Z(t) for perturbation sizes [experiment] deltas",
    "growth-probe": "measured vs exact growth rates of the simplified ill-posed system",
    "generator-spectrum": "max real eigenvalue of truncated generators, constant vs variable r0",
    "h4-check": "contraction factor q and Neumann-inverse residuals on random data",
    "traveling-wave": "traveling-wave branch continuation, transversality, translation check",
    "analyticity-track": "analyticity radius and Wiener-norm checks along a trajectory",
}
SUBCOMMANDS = tuple(HELP)


def trajectory_table(traj: evolve.Trajectory, rhos) -> tuple[list, list]:
    """Diagnostics table: time, E0, E1, E2, E, mass, wiener@rho..., analyticity_radius."""
    diag = traj.diagnostics
    wiener = [f"wiener@{r:g}" for r in rhos]
    header = ["time", "E0", "E1", "E2", "E", "mass"] + wiener + ["analyticity_radius"]
    n = len(traj.times)
    radius = diag.get("analyticity_radius", np.full(n, math.nan))
    rows = []
    for i in range(n):
        rows.append([float(traj.times[i])] + [float(diag[k][i]) for k in header[1:6]]
                    + [float(diag[w][i]) for w in wiener] + [float(radius[i])])
    return header, rows


def _integrate(cfg: ExperimentConfig, state, params, mode=None, **kw):
    rhos = cfg.get("experiment", "rhos")
    mode = mode or cfg.model
    eps = cfg.get("model", "epsilon") if mode == "mollified" else None
    traj = evolve.integrate(state, params, cfg.integrator(), mode, epsilon=eps,
                            inverse_cfg=cfg.inverse(), rhos=rhos,
                            fit_band=tuple(cfg.get("experiment", "fit_band")), **kw)
    return traj, rhos


# ---------------------------------------------------------------------------
# subcommands


def run_simulate(cfg: ExperimentConfig, rec: ResultRecord):
    grid = cfg.grid()
    params = cfg.params(grid)
    state = cfg.initial_state(grid)
    traj, rhos = _integrate(cfg, state, params)
    rec.tables["diagnostics"] = trajectory_table(traj, rhos)
    m = traj.diagnostics["mass"]
    drift = float(np.max(np.abs(m - m[0])) / m[0])
    rec.summary.update(model=cfg.model, status=traj.status, final_time=float(traj.times[-1]),
                       mass_drift=drift, max_energy=float(traj.diagnostics["E"].max()))
    rec.verdicts["integration_completed"] = not traj.diverged
    if cfg.model != "mollified":
        rec.verdicts["mass_conserved"] = drift < MASS_DRIFT_TOL
    if cfg.get("experiment", "convergence_checks"):
        order = evolve.self_convergence_order(state, params, cfg.model,
                                              epsilon=cfg.get("model", "epsilon") if cfg.model == "mollified" else None,
                                              inverse_cfg=cfg.inverse())
        rec.summary["rk4_order"] = order
        if not math.isnan(order):
            rec.verdicts["rk4_order"] = abs(order - ORDER_TARGET) <= ORDER_TOL
        if cfg.model == "constant" and params.kappa == 0 and params.gamma == 0:
            i = cfg["integrator"]
            err = evolve.time_reversal_error(state, params, i["t_final"], i["dt"])
            rec.summary["time_reversal_error"] = err
            rec.verdicts["time_reversal"] = err < REVERSAL_TOL


def run_epsilon_family(cfg: ExperimentConfig, rec: ResultRecord):
    grid = cfg.grid()
    params = cfg.params(grid)
    state = cfg.initial_state(grid)
    exp = cfg["experiment"]
    report = evolve.epsilon_family_experiment(state, params, cfg.integrator(), exp["epsilons"],
                                              exp["s_prime"])
    rec.tables["epsilon_family"] = (
        ["epsilon", "max_energy", "window_c", "window", "bound_holds", "h0_gap", "hs_gap", "hs_interp_bound"],
        [[r.epsilon, r.max_energy, r.window_c, r.window, r.bound_holds, r.h0_gap, r.hs_gap, r.hs_interp_bound]
         for r in report.runs],
    )
    for key, traj in report.trajectories.items():
        name = "diagnostics_reference" if key == "reference" else f"diagnostics_eps{key:g}"
        header, rows = trajectory_table(traj, (0.0,))
        rec.tables[name] = (header, rows)
    rec.summary.update(d_bar=report.d_bar, order=report.order, window_spread=report.window_spread,
                       energy_spread=report.energy_spread, reference_max_energy=report.reference_max_energy)
    rec.verdicts["energy_bound"] = all(r.bound_holds for r in report.runs) and all(
        r.max_energy <= 2 * report.d_bar for r in report.runs)
    rec.verdicts["window_uniform"] = report.window_spread < WINDOW_SPREAD_TOL
    rec.verdicts["gaps_monotone"] = report.gaps_monotone
    rec.verdicts["complete"] = not report.partial


def run_continuous_dependence(cfg: ExperimentConfig, rec: ResultRecord):
    grid = cfg.grid()
    params = cfg.params(grid)
    state = cfg.initial_state(grid)
    deltas = cfg.get("experiment", "deltas")
    report = evolve.continuous_dependence_experiment(state, deltas, params, cfg.integrator())
    header = ["time"] + [f"ratio@{d:g}" for d in deltas]
    rows = [[float(t)] + [float(report.ratios[d][i]) for d in deltas] for i, t in enumerate(report.times)]
    rec.tables["difference_energy"] = (header, rows)
    a = evolve.integrate(state, params, cfg.integrator(), "constant")
    b = evolve.integrate(state, params, cfg.integrator(), "constant")
    z_same = max(evolve.difference_energy(x, y) for x, y in zip(a.states, b.states))
    rec.summary.update(collapse_spread=report.collapse_spread, uniqueness_Z=z_same,
                       growth_constants={f"{d:g}": c for d, c in report.growth_constants.items()})
    rec.verdicts["ratios_collapse"] = report.collapse_spread < COLLAPSE_TOL
    rec.verdicts["uniqueness"] = z_same < UNIQUENESS_TOL
    rec.verdicts["complete"] = not report.partial


def run_growth_probe(cfg: ExperimentConfig, rec: ResultRecord):
    grid = cfg.grid()
    exp = cfg["experiment"]
    reports = [illposedness.measured_growth_rate(k, exp["growth_t_final"], exp["growth_dt"], grid=grid)
               for k in exp["growth_k"]]
    rec.tables["growth"] = (
        ["k", "predicted_rate", "measured_rate", "relative_error", "t_used"],
        [[r.k, r.predicted_rate, r.measured_rate, r.relative_error, r.t_used] for r in reports],
    )
    rec.summary["rates"] = {str(r.k): {"predicted": r.predicted_rate, "measured": r.measured_rate,
                                       "relative_error": r.relative_error} for r in reports}
    rec.verdicts["growth_rates"] = all(r.relative_error < GROWTH_REL_TOL for r in reports)


def run_generator_spectrum(cfg: ExperimentConfig, rec: ResultRecord):
    exp = cfg["experiment"]
    n_max = max(exp["truncations"])
    n_points = max(cfg.get("grid", "n_points"), 4 * n_max)
    grid = PeriodicGrid(n_points, cfg.get("grid", "period"))
    pc = cfg.params(grid, r0_eps=0.0)
    pv = cfg.params(grid, r0_eps=exp["variable_eps"])
    report = illposedness.illposedness_contrast_report(pc, pv, exp["truncations"], cfg.inverse())
    rec.tables["generator_spectrum"] = (["n", "max_real_constant", "max_real_variable"], report.rows())
    for label, spectra in (("constant", report.constant), ("variable", report.variable)):
        for s in spectra:
            ev = s.eigenvalues[np.lexsort((s.eigenvalues.imag, s.eigenvalues.real))]
            rec.tables[f"eigenvalues_{label}_n{s.truncation}"] = (["real", "imag"], [[z.real, z.imag] for z in ev])
    rec.summary.update(grid_points=n_points, growth_factor=report.growth_factor,
                       constant_max=report.constant_max, variable_max=report.variable_max)
    if params_undamped(pc):
        rec.verdicts["constant_flat"] = all(abs(v) < GENERATOR_FLAT_TOL for v in report.constant_max)
    rec.verdicts["variable_nondecreasing"] = report.variable_nondecreasing
    rec.verdicts["variable_growth"] = report.growth_factor >= GENERATOR_GROWTH


def params_undamped(params) -> bool:
    return params.kappa == 0 and params.gamma == 0


def run_h4_check(cfg: ExperimentConfig, rec: ResultRecord):
    grid = cfg.grid()
    params = cfg.params(grid, r0_eps=cfg.get("model", "r0_eps"))
    inv_cfg = cfg.inverse()
    q, c0 = contraction_factor(params, inv_cfg)
    rec.summary.update(q=q, c0=c0, rho0=inv_cfg.rho0, r0_eps=cfg.get("model", "r0_eps"))
    rec.verdicts["h4"] = q < 1
    if not q < 1:
        return
    inverse = NeumannInverse(params, inv_cfg)
    rng = np.random.default_rng(cfg.get("run", "seed"))
    bw = min(cfg.get("experiment", "bandwidth"), grid.nyquist - 1)
    rows, worst_res, worst_ratio = [], 0.0, 0.0
    for i in range(cfg.get("experiment", "neumann_samples")):
        f = random_bandlimited(grid, bw, rng)
        res = inverse.solve(f, check_residual=False)
        r = l2_norm(apply_A(res.solution, params) - f) / l2_norm(f)
        norms = np.array(res.term_norms)
        ratio = float(np.max(norms[1:] / norms[:-1])) if len(norms) > 1 else 0.0
        rows.append([i, r, ratio, len(norms)])
        worst_res, worst_ratio = max(worst_res, r), max(worst_ratio, ratio)
    rec.tables["neumann"] = (["sample", "relative_residual", "max_term_ratio", "terms"], rows)
    rec.summary.update(max_residual=worst_res, max_term_ratio=worst_ratio)
    rec.verdicts["inverse_residual"] = worst_res < NEUMANN_RESIDUAL_TOL
    rec.verdicts["term_decay"] = worst_ratio <= q + NEUMANN_RATIO_SLACK


def run_traveling_wave(cfg: ExperimentConfig, rec: ResultRecord):
    grid = cfg.grid()
    exp = cfg["experiment"]
    params = cfg.params(grid)
    problem = traveling.TravelingWaveProblem(params, exp["k0"], exp["n_modes"])
    branch = traveling.continue_branch(problem, exp["amplitudes"])
    rows, coeff_rows = [], []
    for w in branch.waves:
        rows.append([w.amplitude, w.speed, w.speed - problem.c0, w.residual_norm, w.parity_error(),
                     w.mean_error(), w.iterations])
        a_eta = w.state.eta.cosine_coefficients(problem.n_modes)
        a_u = w.state.u.cosine_coefficients(problem.n_modes)
        coeff_rows += [[w.amplitude, k + 1, a_eta[k], a_u[k]] for k in range(problem.n_modes)]
    rec.tables["branch"] = (["amplitude", "speed", "speed_shift", "residual", "parity_error",
                             "mean_error", "iterations"], rows)
    rec.tables["coefficients"] = (["amplitude", "k", "eta_cos", "u_cos"], coeff_rows)
    transversality = traveling.transversality_closed_form(problem)
    quad = traveling.transversality_quadrature(problem)
    rec.summary.update(c0=problem.c0, fit_exponent=branch.fit_exponent, waves=len(branch.waves),
                       max_amplitude=float(branch.amplitudes.max()) if branch.waves else 0.0,
                       truncated=branch.truncated, message=branch.message,
                       transversality=transversality, transversality_quadrature=quad,
                       gamma_entries=traveling.gamma_entry_report(problem))
    rec.verdicts["branch_complete"] = not branch.truncated
    rec.verdicts["residuals"] = all(w.residual_norm < WAVE_RESIDUAL_TOL for w in branch.waves)
    rec.verdicts["invariants"] = all(max(w.parity_error(), w.mean_error()) < WAVE_INVARIANT_TOL
                                     for w in branch.waves)
    rec.verdicts["fit_exponent"] = abs(branch.fit_exponent - BRANCH_EXPONENT) <= BRANCH_EXPONENT_TOL
    rec.verdicts["transversality"] = abs(transversality - quad) <= 1e-10 and transversality > 0
    if branch.waves and branch.waves[-1].amplitude > 0:
        wave = branch.waves[-1]
        dev = traveling.translation_check(wave, problem, exp["translation_dt"])
        tail = traveling.truncation_tail(wave, problem)
        rec.summary.update(translation_deviation=dev, translation_amplitude=wave.amplitude,
                           truncation_tail=tail)
        rec.verdicts["translation"] = dev < TRANSLATION_TOL


def run_analyticity_track(cfg: ExperimentConfig, rec: ResultRecord):
    grid = cfg.grid()
    params = cfg.params(grid)
    state = cfg.initial_state(grid)
    traj, rhos = _integrate(cfg, state, params)
    rec.tables["diagnostics"] = trajectory_table(traj, rhos)
    radius = traj.diagnostics["analyticity_radius"]
    checks = [evolve.wiener_frame_check(s, rhos) for s in traj.states]
    rec.summary.update(rho_initial=float(radius[0]), rho_min=float(np.nanmin(radius)) if np.isfinite(radius).any() else math.nan,
                       worst_cauchy_ratio=max(c.worst_cauchy_ratio for c in checks), frames=len(checks))
    rec.verdicts["radius_retained"] = bool(np.all(np.isfinite(radius)) and np.all(radius >= radius[0] / 2))
    rec.verdicts["wiener_monotone"] = all(c.monotone for c in checks)
    rec.verdicts["algebra_estimate"] = all(c.algebra for c in checks)
    rec.verdicts["cauchy_estimate"] = all(c.cauchy for c in checks)
    rec.verdicts["integration_completed"] = not traj.diverged


RUNNERS = {
    "simulate": run_simulate,
    "epsilon-family": run_epsilon_family,
    "continuous-dependence": run_continuous_dependence,
    "growth-probe": run_growth_probe,
    "generator-spectrum": run_generator_spectrum,
    "h4-check": run_h4_check,
    "traveling-wave": run_traveling_wave,
    "analyticity-track": run_analyticity_track,
}


def run(subcommand: str, cfg: ExperimentConfig) -> ResultRecord:
    """Run one experiment; errors are captured in the record, never raised."""
    if subcommand not in RUNNERS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    rec = ResultRecord(subcommand, cfg.config_hash)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            RUNNERS[subcommand](cfg, rec)
    except VesselWaveError as exc:
        rec.error = {"code": exc.code, "message": str(exc)}
    except (ArithmeticError, ValueError) as exc:
        rec.error = {"code": "runtime", "message": f"{type(exc).__name__}: {exc}"}
    return rec


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="configuration file (defaults used if omitted)")
    common.add_argument("--out", type=Path, help="output directory (overrides [run] out)")
    common.add_argument("--seed", type=int, help="random seed (overrides [run] seed)")
    common.add_argument("--quiet", action="store_true", help="suppress the console summary")
    parser = argparse.ArgumentParser(prog="vesselwave", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name], description=HELP[name])
    return parser


def load_config(path: Path | None, seed: int | None = None, out: Path | None = None) -> ExperimentConfig:
    text = "" if path is None else Path(path).read_text(encoding="utf-8")
    cfg = parse_config(text)
    if seed is not None:
        cfg = cfg.replace("run", seed=seed)
    if out is not None:
        cfg = cfg.replace("run", out=str(out))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.out)
    except (ConfigParseError, OSError) as exc:
        print(f"vesselwave: configuration error: {exc}", file=sys.stderr)
        return 2
    rec = run(args.subcommand, cfg)
    out_dir = Path(cfg.get("run", "out"))
    try:
        rec.write(out_dir)
        (out_dir / "config.txt").write_text(cfg.canonical_text(), encoding="utf-8")
    except OSError as exc:
        print(f"vesselwave: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        status = "PASS" if rec.passed else ("ERROR" if rec.error else "FAIL")
        failed = [k for k, v in rec.verdicts.items() if not v]
        detail = rec.error["message"] if rec.error else (", ".join(failed) or "all verdicts passed")
        print(f"{args.subcommand}: {status} ({detail}) -> {out_dir}")
    return rec.exit_code


if __name__ == "__main__":
    sys.exit(main())
