"""Configuration, orchestration and file output for all experiments.

Runs are described by a plain-text INI config (documented in the README)
plus a handful of command-line overrides.  Every experiment writes a
manifest, one or more CSV files with fixed headers and float formatting,
and, where useful, a self-contained gnuplot script next to the data.
Outputs are byte-identical for a given (config, seed) regardless of the
worker count.
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import (
    FitError,
    gap_relaxation,
    green_kubo_diffusivity,
    kappa_bounds,
    mode_relaxation,
)
from .fastsim import EnsembleConfig, run_ensemble
from .gibbs import sample_gibbs, sample_microcanonical, save_state
from .observables import estimate_from_ensemble
from .potential import Potential, beta_of_energy, make_potential, thermo
from .rng import RngStream
from .symbolic import harmonic_fd_residual
from .variational import monomial_basis, solve_saddle

EXPERIMENTS = (
    "thermo",
    "sample",
    "evolve",
    "correlate",
    "green-kubo",
    "modes",
    "bounds",
    "saddle",
    "gap",
    "check-fd",
    "invariance",
)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything a run needs; serialisable to and from INI text."""

    experiment: str = "thermo"
    seed: int = 1
    out: str = "runs/out"
    strict: bool = False
    # potential
    family: str = "harmonic"
    epsilon: float = 0.0
    # model
    beta: float | None = 1.0
    energy: float | None = None
    gamma: float = 1.0
    n_sites: int = 32
    # ensemble
    replicas: int = 100
    parallelism: int = 1
    # time
    t_micro: float | None = None
    t_macro: float | None = None
    dt_micro: float = 0.05
    snapshot_stride: float = 2.0
    # fit / experiment specifics
    gk_window: tuple[float, float] = (0.25, 0.75)
    rho_window: tuple[float, float] = (0.2, 0.9)
    modes: tuple[int, ...] = (1, 2)
    gap_lengths: tuple[int, ...] = (8, 16, 32)
    mixing_sweeps: int = 200
    gammas: tuple[float, ...] = (0.5, 1.0, 2.0)
    windows: tuple[int, ...] = (1, 2)
    degree: int = 2

    _SECTIONS = {
        "run": ("experiment", "seed", "out", "strict"),
        "potential": ("family", "epsilon"),
        "model": ("beta", "energy", "gamma", "n_sites"),
        "ensemble": ("replicas", "parallelism"),
        "time": ("t_micro", "t_macro", "dt_micro", "snapshot_stride"),
        "fit": (
            "gk_window",
            "rho_window",
            "modes",
            "gap_lengths",
            "mixing_sweeps",
            "gammas",
            "windows",
            "degree",
        ),
    }

    # -- (de)serialisation ------------------------------------------------

    @classmethod
    def from_ini(cls, path) -> "RunConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        cfg = cls()
        typemap = {f.name: f for f in fields(cls)}
        for section, keys in cls._SECTIONS.items():
            if not parser.has_section(section):
                continue
            for key, raw in parser.items(section):
                if key not in keys:
                    raise ConfigError(f"unknown key [{section}] {key}")
                setattr(cfg, key, _parse_value(key, raw, typemap[key].type))
        return cfg

    def to_ini(self) -> str:
        lines = []
        for section, keys in self._SECTIONS.items():
            lines.append(f"[{section}]")
            for key in keys:
                val = getattr(self, key)
                if val is None:
                    continue
                lines.append(f"{key} = {_format_value(val)}")
            lines.append("")
        return "\n".join(lines)

    # -- validation --------------------------------------------------------

    def validate(self) -> list[str]:
        errors = []
        if self.experiment not in EXPERIMENTS:
            errors.append(f"unknown experiment {self.experiment!r}")
        if self.family not in ("harmonic", "log-cosh", "logcosh"):
            errors.append(f"unknown potential family {self.family!r}")
        if self.epsilon < 0:
            errors.append("epsilon must be nonnegative")
        if (self.beta is None) and (self.energy is None):
            errors.append("one of beta or energy is required")
        if self.beta is not None and self.beta <= 0:
            errors.append("beta must be positive")
        if self.energy is not None and self.energy <= 0:
            errors.append("energy must be positive")
        if self.gamma is None or self.gamma < 0:
            errors.append("gamma is required and must be nonnegative")
        if self.n_sites < 2:
            errors.append("n_sites must be at least 2")
        if self.replicas < 1:
            errors.append("replicas must be at least 1")
        if self.parallelism < 1:
            errors.append("parallelism must be at least 1")
        if self.dt_micro <= 0:
            errors.append("dt_micro must be positive")
        if self.experiment in _TIME_BASED and self.t_micro is None and self.t_macro is None:
            errors.append(f"experiment {self.experiment} needs t_micro or t_macro")
        return errors

    # -- derived quantities ---------------------------------------------------

    def horizon_micro(self) -> float:
        if self.t_micro is not None:
            return float(self.t_micro)
        return float(self.t_macro) * self.n_sites**2

    def steps(self) -> tuple[int, int]:
        """(n_steps, snap_every) honouring the snapshot stride."""
        snap_every = max(1, round(self.snapshot_stride / self.dt_micro))
        n_steps = max(snap_every, round(self.horizon_micro() / self.dt_micro))
        n_steps = (n_steps // snap_every) * snap_every
        return n_steps, snap_every

    def potential(self) -> Potential:
        return make_potential(self.family, epsilon=self.epsilon)


_TIME_BASED = ("evolve", "correlate", "green-kubo", "modes", "invariance")


def _parse_value(key: str, raw: str, hint: str):
    raw = raw.strip()
    if key in ("experiment", "out", "family"):
        return raw
    if key == "strict":
        return raw.lower() in ("1", "true", "yes", "on")
    if key in ("seed", "n_sites", "replicas", "parallelism", "mixing_sweeps", "degree"):
        return int(raw)
    if key in ("modes", "gap_lengths", "windows"):
        return tuple(int(tok) for tok in raw.split())
    if key in ("gk_window", "rho_window"):
        parts = tuple(float(tok) for tok in raw.split())
        if len(parts) != 2:
            raise ConfigError(f"{key} needs two numbers")
        return parts
    if key == "gammas":
        return tuple(float(tok) for tok in raw.split())
    if raw.lower() == "none":
        return None
    return float(raw)


def _format_value(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, tuple):
        return " ".join(_format_value(v) for v in val)
    if isinstance(val, float):
        return format(val, ".17g")
    return str(val)


# -- output helpers ----------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


class OutputDir:
    """Tracks written files so a failed run can clean up after itself."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []

    def write_csv(self, name: str, header: list[str], rows) -> Path:
        path = self.root / name
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(x) for x in row) + "\n")
        self.written.append(path)
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self.root / name
        with open(path, "w") as fh:
            fh.write(text)
        self.written.append(path)
        return path

    def cleanup(self):
        for path in self.written:
            try:
                path.unlink()
            except OSError:
                pass


def _write_manifest(out: OutputDir, cfg: RunConfig, status: str, wall: float | None,
                    notes: list[str]):
    import numba
    import scipy

    lines = [
        f"status = {status}",
        f"tool_version = {__version__}",
        f"numpy = {np.__version__}",
        f"scipy = {scipy.__version__}",
        f"numba = {numba.__version__}",
        f"experiment = {cfg.experiment}",
        f"seed = {cfg.seed}",
    ]
    if cfg.experiment in _TIME_BASED:
        t_micro = cfg.horizon_micro()
        lines.append(f"t_micro = {_fmt(t_micro)}")
        lines.append(f"t_macro = {_fmt(t_micro / cfg.n_sites**2)}")
    if wall is not None:
        lines.append(f"wall_seconds = {wall:.3f}")
    for note in notes:
        lines.append(f"note = {note}")
    lines.append("")
    lines.append("[config]")
    lines.append(cfg.to_ini())
    (out.root / "manifest.txt").write_text("\n".join(lines) + "\n")


# -- experiments -----------------------------------------------------------------


def _mode_weights(n: int, modes: tuple[int, ...]):
    x = np.arange(n) / n
    weights = []
    for m in modes:
        weights.append(tuple(np.cos(2 * np.pi * m * x) / math.sqrt(n)))
        weights.append(tuple(np.sin(2 * np.pi * m * x) / math.sqrt(n)))
    return tuple(weights)


def _ensemble_config(cfg: RunConfig, **overrides) -> EnsembleConfig:
    n_steps, snap_every = cfg.steps()
    base = dict(
        family=cfg.family,
        epsilon=cfg.epsilon,
        beta=cfg.beta if cfg.energy is None else None,
        energy=cfg.energy,
        gamma=cfg.gamma,
        n_sites=cfg.n_sites,
        replicas=cfg.replicas,
        dt=cfg.dt_micro,
        n_steps=n_steps,
        snap_every=snap_every,
        seed=cfg.seed,
        mixing_sweeps=cfg.mixing_sweeps if cfg.energy is not None else 0,
    )
    base.update(overrides)
    return EnsembleConfig(**base)


def _beta_of(cfg: RunConfig, pot: Potential) -> float:
    return cfg.beta if cfg.beta is not None else beta_of_energy(pot, cfg.energy)


def _exp_thermo(cfg: RunConfig, out: OutputDir) -> list[str]:
    pot = cfg.potential()
    beta = _beta_of(cfg, pot)
    th = thermo(pot, beta)
    out.write_csv("thermo.csv", ["potential"] + th.CSV_FIELDS,
                  [[pot.label()] + th.csv_row()])
    rel = abs(th.chi - th.chi_from_derivative) / th.chi
    notes = [f"chi_cross_check_rel = {rel:.3e}"]
    if cfg.strict and rel > 1e-8:
        raise FitError(f"chi cross-check failed: relative gap {rel:.3e} > 1e-8")
    return notes


def _exp_sample(cfg: RunConfig, out: OutputDir) -> list[str]:
    pot = cfg.potential()
    beta = _beta_of(cfg, pot)
    th = thermo(pot, beta)
    rows = []
    p2 = np.empty(cfg.replicas)
    dvr = np.empty(cfg.replicas)
    en = np.empty(cfg.replicas)
    for m in range(cfg.replicas):
        stream = RngStream(cfg.seed, m)
        if cfg.energy is not None:
            state = sample_microcanonical(
                pot, cfg.n_sites, cfg.energy, stream, mixing_sweeps=cfg.mixing_sweeps
            )
        else:
            state = sample_gibbs(pot, beta, cfg.n_sites, stream)
        p2[m] = np.mean(state.p**2)
        dvr[m] = np.mean(np.asarray(pot.dv(state.r)) * state.r)
        en[m] = np.mean(0.5 * state.p**2 + np.asarray(pot.v(state.r)))
        if m == 0:
            save_state(state, out.root / "state-000.csv")
            out.written.append(out.root / "state-000.csv")
    for name, arr, expected in (
        ("mean_p2", p2, 1.0 / beta),
        ("mean_dv_r", dvr, 1.0 / beta),
        ("mean_energy", en, th.mean_energy if cfg.energy is None else cfg.energy),
    ):
        se = arr.std(ddof=1) / math.sqrt(cfg.replicas)
        rows.append([name, arr.mean(), se, expected, (arr.mean() - expected) / se])
    out.write_csv("sample-moments.csv",
                  ["observable", "value", "stderr", "expected", "z"], rows)
    return []


def _exp_evolve(cfg: RunConfig, out: OutputDir) -> list[str]:
    from .fastsim import simulate_trajectory

    pot = cfg.potential()
    beta = _beta_of(cfg, pot)
    state = sample_gibbs(pot, beta, cfg.n_sites, RngStream(cfg.seed, 0))
    n_steps, snap_every = cfg.steps()
    times, snaps, _, _ = simulate_trajectory(
        pot, state.p, state.r, cfg.gamma, cfg.dt_micro, n_steps, snap_every,
        RngStream(cfg.seed, 0),
    )
    header = ["t_micro", "t_macro"] + [f"e{i}" for i in range(cfg.n_sites)]
    rows = [
        [t, t / cfg.n_sites**2] + list(row) for t, row in zip(times, snaps)
    ]
    out.write_csv("trajectory.csv", header, rows)
    h = snaps.sum(axis=1)
    drift = float(np.max(np.abs(h - h[0]) / np.abs(h[0])))
    notes = [f"max_rel_energy_drift = {drift:.3e}"]
    budget = 1e-5 * (n_steps / 1e4) * (cfg.dt_micro / 1e-3) ** 2
    if cfg.strict and drift > max(budget, 1e-9):
        raise FitError(f"energy drift {drift:.3e} exceeds budget {budget:.3e}")
    return notes


def _correlation_csv(out: OutputDir, est) -> None:
    rows = []
    for ti, t in enumerate(est.times_micro):
        for li, lag in enumerate(est.lags):
            rows.append([t, lag, est.c[ti, li], est.stderr[ti, li]])
    out.write_csv("correlation.csv", ["t_micro", "lag", "c", "stderr"], rows)


def _run_correlation(cfg: RunConfig, with_modes: bool):
    pot = cfg.potential()
    beta = _beta_of(cfg, pot)
    th = thermo(pot, beta)
    overrides = {"collect_correlation": True}
    if with_modes:
        overrides["series_weights"] = _mode_weights(cfg.n_sites, cfg.modes)
    ecfg = _ensemble_config(cfg, **overrides)
    res = run_ensemble(ecfg, parallelism=cfg.parallelism)
    return pot, th, res


def _exp_correlate(cfg: RunConfig, out: OutputDir) -> list[str]:
    _, th, res = _run_correlation(cfg, with_modes=False)
    est = estimate_from_ensemble(res, th)
    _correlation_csv(out, est)
    notes = [f"max_rel_energy_drift = {float(res.h_drift.max()):.3e}"]
    if cfg.strict:
        _check_correlation_invariants(est, th)
    return notes


def _check_correlation_invariants(est, th) -> None:
    i0 = int(np.where(est.lags == 0)[0][0])
    z = abs(est.c[0, i0] - th.chi) / max(est.stderr[0, i0], 1e-300)
    if z > 4:
        raise FitError(f"C(0,0,0) is {z:.1f} sigma away from chi")
    total = est.c.sum(axis=1)
    se = np.sqrt((est.stderr**2).sum(axis=1))
    drift = np.abs(total - total[0])[1:]
    if np.any(drift > 4 * (se[1:] + se[0])):
        raise FitError("summed correlation is not conserved within 4 sigma")


def _gnuplot_moment(est, gk) -> str:
    lines = [
        "# gnuplot script: second-moment growth and the fitted line",
        "# run: gnuplot -persist plot-moment.txt  (expects moment.csv beside it)",
        'set datafile separator ","',
        "set xlabel 't (microscopic)'",
        "set ylabel 'sum_i i^2 C(i,0,t)'",
        f"D = {gk.d_hat:.10g}",
        f"c = {gk.diagnostics['intercept']:.10g}",
        f"chi = {est.chi:.10g}",
        "plot 'moment.csv' every ::1 using 1:2:3 with yerrorbars title 'data', \\",
        "     2*chi*D*x + c title sprintf('slope fit, D=%.4f', D)",
        "",
    ]
    return "\n".join(lines)


def _exp_green_kubo(cfg: RunConfig, out: OutputDir) -> list[str]:
    _, th, res = _run_correlation(cfg, with_modes=False)
    est = estimate_from_ensemble(res, th)
    _correlation_csv(out, est)
    gk = green_kubo_diffusivity(est, th, fit_window=cfg.gk_window)
    m2 = est.second_moment()
    se = est.second_moment_boot().std(axis=0, ddof=1)
    out.write_csv("moment.csv", ["t_micro", "m2", "stderr"],
                  [[t, m, s] for t, m, s in zip(est.times_micro, m2, se)])
    out.write_csv(
        "diffusivity.csv",
        ["method", "d_hat", "stderr", "fit_lo_micro", "fit_hi_micro"],
        [gk.csv_row()],
    )
    out.write_text("diagnostics.txt", _diag_text(gk))
    out.write_text("plot-moment.txt", _gnuplot_moment(est, gk))
    notes = [f"d_hat = {gk.d_hat:.6f} +- {gk.stderr:.6f}"]
    if cfg.strict:
        _check_correlation_invariants(est, th)
    return notes


def _diag_text(estimate) -> str:
    lines = [f"method = {estimate.method}"]
    lines.append(f"d_hat = {_fmt(estimate.d_hat)}")
    lines.append(f"stderr = {_fmt(estimate.stderr)}")
    lines.append(f"fit_window = {_fmt(estimate.fit_window[0])} .. {_fmt(estimate.fit_window[1])}")
    for key in sorted(estimate.diagnostics):
        lines.append(f"{key} = {estimate.diagnostics[key]!r}")
    lines.append("")
    return "\n".join(lines)


def _exp_modes(cfg: RunConfig, out: OutputDir) -> list[str]:
    _, th, res = _run_correlation(cfg, with_modes=True)
    rows = []
    drows = []
    notes = []
    for k, mode in enumerate(cfg.modes):
        sl = slice(2 * k, 2 * k + 2)
        mr = mode_relaxation(
            res.series[:, :, sl], res.times_micro, cfg.n_sites, mode, th,
            rho_window=cfg.rho_window, seed=cfg.seed,
        )
        d = mr.diagnostics
        rows.append([
            mode, d["rate_macro"], d["rate_stderr"], mr.d_hat, mr.stderr,
            d["static_var"], d["static_var_stderr"], d["static_var_expected"],
        ])
        drows.append(mr.csv_row())
        notes.append(f"mode {mode}: D = {mr.d_hat:.5f} +- {mr.stderr:.5f}")
    out.write_csv(
        "modes.csv",
        ["mode", "rate_macro", "rate_stderr", "d_hat", "d_stderr",
         "static_var", "static_var_stderr", "static_var_expected"],
        rows,
    )
    out.write_csv(
        "diffusivity.csv",
        ["method", "d_hat", "stderr", "fit_lo_macro", "fit_hi_macro"],
        drows,
    )
    return notes


def _exp_bounds(cfg: RunConfig, out: OutputDir) -> list[str]:
    pot = cfg.potential()
    beta = _beta_of(cfg, pot)
    th = thermo(pot, beta)
    kb = kappa_bounds(th, cfg.gamma)
    out.write_csv(
        "bounds.csv",
        ["potential", "beta", "gamma", "lower", "upper"],
        [[pot.label(), beta, cfg.gamma, kb.lower, kb.upper]],
    )
    return [f"bounds = [{kb.lower:.6f}, {kb.upper:.6f}]"]


def _exp_saddle(cfg: RunConfig, out: OutputDir) -> list[str]:
    pot = cfg.potential()
    beta = _beta_of(cfg, pot)
    rows = []
    notes = []
    last = None
    for k in cfg.windows:
        sol = solve_saddle(pot, beta, cfg.gamma, window_k=k, degree=cfg.degree)
        rows.append([
            pot.label(), beta, cfg.gamma, k, cfg.degree, sol.kappa_hat,
            sol.diagnostics["cond_f_block"], sol.diagnostics["cond_g_block"],
            int(sol.diagnostics["ridge_used"]),
        ])
        notes.append(f"k={k}: kappa_hat = {sol.kappa_hat:.10f}")
        last = sol
    out.write_csv(
        "saddle.csv",
        ["potential", "beta", "gamma", "window", "degree", "kappa_hat",
         "cond_f", "cond_g", "ridge"],
        rows,
    )
    dump = [
        "optimal even trial function:",
        last.optimal_f().canonical(),
        "",
        "optimal odd trial function:",
        last.optimal_g().canonical(),
        "",
    ]
    out.write_text("saddle-solution.txt", "\n".join(dump))
    return notes


def _exp_gap(cfg: RunConfig, out: OutputDir) -> list[str]:
    pot = cfg.potential()
    energy = cfg.energy if cfg.energy is not None else 1.0
    rows = gap_relaxation(
        pot, list(cfg.gap_lengths), energy, cfg.seed,
        replicas=cfg.replicas, gamma=cfg.gamma, parallelism=cfg.parallelism,
    )
    out.write_csv(
        "gap.csv",
        ["length", "tau_micro", "stderr", "n_points", "rms_log_residual"],
        [
            [row.length, row.tau_hat, row.stderr,
             row.diagnostics["n_points"], row.diagnostics["rms_log_residual"]]
            for row in rows
        ],
    )
    notes = []
    for a, b in zip(rows, rows[1:]):
        if b.length == 2 * a.length:
            ratio = b.tau_hat / a.tau_hat
            notes.append(f"tau({b.length})/tau({a.length}) = {ratio:.3f}")
    out.write_text(
        "plot-gap.txt",
        "\n".join([
            "# gnuplot script: relaxation time vs segment length",
            'set datafile separator ","',
            "set logscale xy",
            "set xlabel 'L'",
            "set ylabel 'tau'",
            "plot 'gap.csv' every ::1 using 1:2:3 with yerrorbars title 'measured', \\",
            "     x*x*0.1 title 'L^2 guide'",
            "",
        ]),
    )
    return notes


def _exp_check_fd(cfg: RunConfig, out: OutputDir) -> list[str]:
    lines = []
    ok = True
    for gamma in cfg.gammas:
        from fractions import Fraction

        res = harmonic_fd_residual(Fraction(gamma).limit_denominator(10**6))
        if res.is_zero():
            lines.append(f"gamma = {gamma:g}: residual = 0 (exact)")
        else:
            ok = False
            lines.append(f"gamma = {gamma:g}: residual = {res.canonical()}")
    out.write_text("fd-check.txt", "\n".join(lines) + "\n")
    if not ok:
        raise FitError("harmonic current decomposition residual is nonzero")
    return lines


def _exp_invariance(cfg: RunConfig, out: OutputDir) -> list[str]:
    pot = cfg.potential()
    beta = _beta_of(cfg, pot)
    th = thermo(pot, beta)
    ecfg = _ensemble_config(cfg, collect_invariance=True)
    res = run_ensemble(ecfg, parallelism=cfg.parallelism)
    names = ["mean_p2", "mean_dv_r", "mean_energy", "mean_current"]
    expected = [1.0 / beta, 1.0 / beta, th.mean_energy, 0.0]
    rows = []
    worst = 0.0
    for j, (name, exp) in enumerate(zip(names, expected)):
        vals = res.invariance[:, j]
        se = vals.std(ddof=1) / math.sqrt(len(vals))
        z = (vals.mean() - exp) / se
        worst = max(worst, abs(z))
        rows.append([name, vals.mean(), se, exp, z])
    out.write_csv("invariance.csv",
                  ["observable", "value", "stderr", "expected", "z"], rows)
    notes = [f"worst_z = {worst:.2f}",
             f"max_rel_energy_drift = {float(res.h_drift.max()):.3e}"]
    if cfg.strict and worst > 4.0:
        raise FitError(f"equilibrium moment drifted by {worst:.2f} sigma")
    return notes


_RUNNERS = {
    "thermo": _exp_thermo,
    "sample": _exp_sample,
    "evolve": _exp_evolve,
    "correlate": _exp_correlate,
    "green-kubo": _exp_green_kubo,
    "modes": _exp_modes,
    "bounds": _exp_bounds,
    "saddle": _exp_saddle,
    "gap": _exp_gap,
    "check-fd": _exp_check_fd,
    "invariance": _exp_invariance,
}


def run(cfg: RunConfig) -> int:
    """Execute one experiment; returns a process exit status."""
    errors = cfg.validate()
    if errors:
        for err in errors:
            print(f"config error: {err}", file=sys.stderr)
        return 2
    out = OutputDir(cfg.out)
    _write_manifest(out, cfg, "running", None, [])
    t0 = time.time()
    try:
        notes = _RUNNERS[cfg.experiment](cfg, out)
    except Exception as exc:  # failed runs keep a manifest but no partial data
        out.cleanup()
        _write_manifest(out, cfg, "incomplete", time.time() - t0,
                        [f"error: {exc}"])
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    _write_manifest(out, cfg, "complete", time.time() - t0, notes)
    for note in notes:
        print(note)
    return 0


def replicate(cfg: RunConfig, parallelism: int) -> int:
    """Run an ensemble experiment with an explicit worker count."""
    return run(replace(cfg, parallelism=parallelism))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="chainlab",
        description="numerical laboratory for energy diffusion in a noisy "
        "anharmonic oscillator ring",
    )
    parser.add_argument("--config", required=True, help="path to an INI run config")
    parser.add_argument("--seed", type=int, default=None, help="override the seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument("--parallelism", type=int, default=None,
                        help="worker processes for ensemble experiments")
    parser.add_argument("--strict", action="store_true",
                        help="nonzero exit on any hard invariant failure")
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.from_ini(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.parallelism is not None:
        cfg.parallelism = args.parallelism
    if args.strict:
        cfg.strict = True
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
