"""Initial data, stability experiments, epsilon sweeps and output files."""
from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import SolverFault
from .norms import H3, EnergyLedger, L2Balance, norm
from .solver import MHDState, SolverConfig, run, save_checkpoint
from .spectral import Grid, VectorField, _leray_arrays, rfftn

log = logging.getLogger(__name__)

MODES = {"mhd": "full_aniso", "ns_horizontal": "ns_horizontal", "inviscid": "inviscid"}


@dataclass
class ExperimentConfig:
    grid: tuple = (32, 32, 32)
    length: float = 2 * math.pi
    dt: float = 1e-3
    t_end: float = 1.0
    epsilon: float = 1e-3
    spectrum_slope: float = 4.0
    seed: int = 0
    mode: str = "mhd"
    output_dir: str | None = None
    sweep: list | None = None
    u_fraction: float = 0.5
    diagnostics_stride: int = 100
    ledger_stride: int = 1
    monitor_factor: float = 10.0
    cfl_safety: float = 0.9
    allow_cfl_violation: bool = False

    def __post_init__(self):
        if isinstance(self.grid, int):
            self.grid = (self.grid,) * 3
        self.grid = tuple(int(n) for n in self.grid)
        if len(self.grid) != 3:
            raise ValueError("grid: expected one or three sizes")
        Grid(*self.grid, length=self.length)
        if not self.epsilon >= 0:
            raise ValueError("epsilon: must be non-negative")
        if not self.t_end > 0:
            raise ValueError("t_end: must be positive")
        if not self.dt > 0:
            raise ValueError("dt: must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode: must be one of {sorted(MODES)}")
        if not 0 <= self.u_fraction <= 1:
            raise ValueError("u_fraction: must lie in [0, 1]")
        if self.sweep is not None:
            self.sweep = [float(e) for e in self.sweep]

    @property
    def grid_obj(self) -> Grid:
        return Grid(*self.grid, length=self.length)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            dt=self.dt,
            t_end=self.t_end,
            dissipation_mode=MODES[self.mode],
            diagnostics_stride=self.diagnostics_stride,
            ledger_stride=self.ledger_stride,
            cfl_safety=self.cfl_safety,
            allow_cfl_violation=self.allow_cfl_violation,
        )

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ValueError(f"{key}: unknown configuration key")
        kwargs = {}
        for f in fields(cls):
            if f.name in data:
                kwargs[f.name] = _coerce(f.name, data[f.name])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> ExperimentConfig:
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ValueError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d


_TYPES = {
    "grid": (int, list, tuple), "length": (int, float), "dt": (int, float), "t_end": (int, float),
    "epsilon": (int, float), "spectrum_slope": (int, float), "seed": (int,), "mode": (str,),
    "output_dir": (str, type(None)), "sweep": (list, type(None)), "u_fraction": (int, float),
    "diagnostics_stride": (int,), "ledger_stride": (int,), "monitor_factor": (int, float),
    "cfl_safety": (int, float), "allow_cfl_violation": (bool,),
}


def _coerce(key, value):
    types = _TYPES[key]
    if isinstance(value, bool) and bool not in types:
        raise ValueError(f"{key}: expected {types[0].__name__}, got bool")
    if not isinstance(value, types):
        raise ValueError(f"{key}: expected {types[0].__name__}, got {type(value).__name__}")
    return value


def _random_solenoidal(grid: Grid, rng: np.random.Generator, slope: float) -> np.ndarray:
    noise = rng.standard_normal((3, *grid.shape))
    coeffs = rfftn(noise)
    kk = grid.k_squared
    amp = np.divide(1.0, kk ** (slope / 2), out=np.zeros_like(kk), where=kk > 0)
    coeffs = coeffs * (amp * grid.dealias_mask)
    return _leray_arrays(coeffs, grid)


def generate_initial_data(config: ExperimentConfig) -> MHDState:
    """Random divergence-free pair with ``||u0||_H3 + ||b0||_H3 = epsilon``.

    Coefficients are Gaussian with amplitude ``|k|^-slope``, band-limited to
    the 2/3-rule band, with zero mean.  The norm budget is split
    ``u_fraction : 1 - u_fraction`` between u and b (all of it to u in
    ``ns_horizontal`` mode).
    """
    grid = config.grid_obj
    rng = np.random.default_rng(config.seed)
    U = _random_solenoidal(grid, rng, config.spectrum_slope)
    B = _random_solenoidal(grid, rng, config.spectrum_slope)
    frac = 1.0 if config.mode == "ns_horizontal" else config.u_fraction
    targets = (config.epsilon * frac, config.epsilon * (1 - frac))
    out = []
    for V, target in zip((U, B), targets):
        n = norm(VectorField(grid, V), H3)
        out.append(V * (target / n) if target > 0 and n > 0 else np.zeros_like(V))
    return MHDState(VectorField(grid, out[0]), VectorField(grid, out[1]), 0.0)


@dataclass
class BootstrapMonitor:
    """Tracks E0 + E1 against the ansatz level ``threshold``."""

    threshold: float
    e0_initial: float
    c0_fit: float = 0.0
    breached: bool = False
    breach_time: float | None = None
    max_total: float = 0.0

    @classmethod
    def for_initial_energy(cls, e0_initial: float, factor: float = 10.0) -> BootstrapMonitor:
        return cls(threshold=factor * e0_initial, e0_initial=e0_initial)

    def update(self, t: float, e0: float, e1: float) -> None:
        total = e0 + e1
        self.max_total = max(self.max_total, total)
        denom = self.e0_initial + self.e0_initial**1.5
        self.c0_fit = total / denom if denom > 0 else 0.0
        if total > self.threshold and not self.breached:
            self.breached = True
            self.breach_time = t

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    ledger: EnergyLedger
    monitor: BootstrapMonitor
    diagnostics: list
    final_state: MHDState | None
    fault: str | None = None
    fault_time: float | None = None
    wall_time: float = 0.0

    def summary(self) -> dict:
        last = self.diagnostics[-1] if self.diagnostics else None
        return {
            "config": self.config.to_dict(),
            "initial_data": "random Gaussian, |k|^-slope amplitude, Leray-projected, 2/3 band",
            "E0_initial": self.monitor.e0_initial,
            "E0_final": self.ledger.E0,
            "E1_final": self.ledger.E1,
            "sup_E0_plus_E1": self.monitor.max_total,
            "monitor": self.monitor.as_dict(),
            "samples": len(self.ledger),
            "last_diagnostics": last.as_dict() if last else None,
            "max_abs_I1": max((abs(d.I1_value) for d in self.diagnostics), default=0.0),
            "max_divergence_u": max((d.divergence_max_u for d in self.diagnostics), default=0.0),
            "max_divergence_b": max((d.divergence_max_b for d in self.diagnostics), default=0.0),
            "fault": self.fault,
            "fault_time": self.fault_time,
            "wall_time": self.wall_time,
        }


def write_outputs(result: ExperimentResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result.ledger.to_csv(out / "ledger.csv")
    export_plots(result.ledger, out)
    with open(out / "diagnostics.csv", "w") as fh:
        cols = ("t", "l2_balance_residual", "I1_value", "substitution_residual",
                "divergence_max_u", "divergence_max_b")
        fh.write(",".join(cols) + "\n")
        for d in result.diagnostics:
            rec = d.as_dict()
            fh.write(",".join(format(rec[c], ".17g") for c in cols) + "\n")
    with open(out / "summary.json", "w") as fh:
        json.dump(result.summary(), fh, indent=2, sort_keys=True)
    if result.final_state is not None:
        save_checkpoint(out / "final.ckpt", result.final_state, MODES[result.config.mode],
                        extra={"dt": result.config.dt, "ledger": result.ledger.accumulators(),
                               "e0_initial": result.monitor.e0_initial,
                               "config": result.config.to_dict()})


def run_stability_experiment(config: ExperimentConfig, state0: MHDState | None = None,
                             ledger: EnergyLedger | None = None,
                             e0_initial: float | None = None) -> ExperimentResult:
    """Run the solver from small random data and track E0, E1 and the bootstrap monitor.

    Outputs (CSV ledger, diagnostics CSV, JSON summary, final checkpoint,
    gnuplot script) go to ``config.output_dir`` when set, including after a
    solver fault.  ``state0``, ``ledger`` and ``e0_initial`` continue an
    earlier run from a checkpoint.
    """
    state0 = state0 if state0 is not None else generate_initial_data(config)
    ledger = ledger if ledger is not None else EnergyLedger()
    sink: list = []
    solver_cfg = config.solver_config()
    start = time.perf_counter()
    fault = fault_time = None
    final = None
    try:
        final = run(state0, solver_cfg, ledger, sink)
    except SolverFault as exc:
        fault, fault_time = str(exc), exc.t
        final = exc.last_good_state
        log.warning("solver fault: %s", exc)
    wall = time.perf_counter() - start

    if e0_initial is None:
        e0_initial = ledger.rows[0][6]
    monitor = BootstrapMonitor.for_initial_energy(e0_initial, config.monitor_factor)
    for row in ledger.rows:
        monitor.update(row[0], row[6], row[7])
    result = ExperimentResult(config, ledger, monitor, sink, final, fault, fault_time, wall)
    if config.output_dir:
        write_outputs(result, config.output_dir)
    return result


@dataclass
class SweepRow:
    epsilon: float
    sup_e0_plus_e1: float
    c0_fit: float
    breached: bool
    wall_time: float
    e0_initial: float = 0.0
    fault: str | None = None
    output_dir: str | None = None


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        cols = ("epsilon", "sup_e0_plus_e1", "c0_fit", "breached", "wall_time", "e0_initial", "fault")
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for r in self.rows:
                vals = [format(getattr(r, c), ".17g") if isinstance(getattr(r, c), float) else str(getattr(r, c))
                        for c in cols]
                fh.write(",".join(vals) + "\n")


def _sweep_one(config: ExperimentConfig) -> SweepRow:
    try:
        res = run_stability_experiment(config)
    except Exception as exc:  # one bad row must not sink the sweep
        return SweepRow(config.epsilon, float("nan"), float("nan"), False, 0.0, fault=repr(exc),
                        output_dir=config.output_dir)
    return SweepRow(config.epsilon, res.monitor.max_total, res.monitor.c0_fit, res.monitor.breached,
                    res.wall_time, res.monitor.e0_initial, res.fault, config.output_dir)


def sweep_epsilon(config: ExperimentConfig, workers: int = 1) -> SweepResult:
    """Independent runs over ``config.sweep``; rows sorted by epsilon."""
    eps = config.sweep or []
    if len(eps) < 2:
        raise ValueError("sweep: need at least two epsilon values")
    configs = []
    for e in sorted(eps):
        out = os.path.join(config.output_dir, f"eps_{e:.6g}") if config.output_dir else None
        configs.append(replace(config, epsilon=e, sweep=None, output_dir=out))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_one, configs))
    else:
        rows = [_sweep_one(c) for c in configs]
    result = SweepResult(sorted(rows, key=lambda r: r.epsilon))
    if config.output_dir:
        Path(config.output_dir).mkdir(parents=True, exist_ok=True)
        result.to_csv(Path(config.output_dir) / "sweep.csv")
    return result


PLOT_TEMPLATE = """\
# gnuplot script: energy functionals and dissipation integrands
set datafile separator ','
set key autotitle columnhead
set xlabel 't'
set logscale y
set terminal pngcairo size 1000,700
set output 'energy.png'
plot '{csv}' using 1:7 with lines title 'E0', \\
     '{csv}' using 1:8 with lines title 'E1'
set output 'dissipation.png'
plot '{csv}' using 1:4 with {style} title '|grad_h u|_H3^2', \\
     '{csv}' using 1:5 with {style} title '|d3 b|_H3^2', \\
     '{csv}' using 1:6 with {style} title '|d1 b|_H2^2'
"""


def export_plots(ledger: EnergyLedger, out_dir, csv_name: str = "ledger.csv") -> tuple[Path, Path]:
    """Write the ledger CSV and a gnuplot script that reads it by relative path."""
    if not len(ledger):
        raise ValueError("cannot plot an empty ledger")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / csv_name
    ledger.to_csv(csv_path)
    style = "points" if len(ledger) == 1 else "lines"
    script = out / "plot.gp"
    script.write_text(PLOT_TEMPLATE.format(csv=csv_name, style=style))
    return csv_path, script
