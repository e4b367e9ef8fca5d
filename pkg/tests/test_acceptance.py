"""End-to-end acceptance checks.

Each test carries a ``criterion(n)`` marker; the terminal summary prints one
PASS/FAIL line per criterion with the measured values.  The long stability
runs are session fixtures shared between criteria 7 and 8.
"""
from __future__ import annotations

import math
import time

import numpy as np
import pytest

from anisomhd.experiments import (
    BootstrapMonitor, ExperimentConfig, generate_initial_data, run_stability_experiment, sweep_epsilon,
)
from anisomhd.inequalities import (
    CALIBRATED_CONSTANTS, PRODUCT_IDS, agmon_1d, agmon_profile, check_lemma12, random_trials,
)
from anisomhd.manufactured import ManufacturedSolution, relative_error
from anisomhd.norms import EnergyLedger, I1_terms, NormSpec, divergence_max, energy_quantities, norm
from anisomhd.solver import MHDState, SolverConfig, load_checkpoint, run, save_checkpoint
from anisomhd.spectral import Grid, VectorField, _leray_arrays, random_vector_field

pytestmark = pytest.mark.acceptance

T_LONG = 20.0
LONG = dict(grid=32, dt=1e-3, t_end=T_LONG, epsilon=1e-3, seed=0)


def _report(record, text: str) -> None:
    record(text)
    print(text)


@pytest.fixture(scope="session")
def mhd_long(tmp_path_factory):
    cfg = ExperimentConfig(**LONG, output_dir=str(tmp_path_factory.mktemp("mhd_long")))
    return run_stability_experiment(cfg)


# ---------------------------------------------------------------- 1


@pytest.mark.criterion(1)
def test_I1_cancellation(record):
    grid = Grid.cube(32)
    rng = np.random.default_rng(0)
    h4 = NormSpec(4)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        u = VectorField(grid, _leray_arrays(random_vector_field(grid, rng).data, grid))
        b = VectorField(grid, _leray_arrays(random_vector_field(grid, rng).data, grid))
        a, c = I1_terms(MHDState(u, b, 0.0))
        worst = max(worst, abs(a + c) / (norm(u, h4) * norm(b, h4)))
    wall = time.perf_counter() - start
    _report(record, f"max |I1|/(|u|_H4 |b|_H4) = {worst:.2e} over 100 states (limit 1e-10), {wall:.1f}s")
    assert worst <= 1e-10
    assert wall < 60


# ---------------------------------------------------------------- 2


def _balance_run(mode: str, dt: float):
    state0 = generate_initial_data(ExperimentConfig(grid=32, epsilon=1e-3, seed=0))
    e_init = energy_quantities(state0)["energy_l2"]
    sink: list = []
    run(state0, SolverConfig(dt=dt, t_end=1.0, dissipation_mode=mode, diagnostics_stride=50), sink=sink)
    return max(abs(d.l2_balance_residual) for d in sink) / e_init


@pytest.mark.criterion(2)
def test_l2_energy_identity(record):
    r1 = _balance_run("full_aniso", 1e-3)
    r2 = _balance_run("full_aniso", 5e-4)
    drift = _balance_run("inviscid", 1e-3)
    _report(record, f"viscous residual {r1:.2e} (limit 1e-6), halving ratio {r1 / r2:.2f} (>= 3.5), "
                    f"inviscid drift {drift:.1e} (limit 1e-8)")
    assert r1 <= 1e-6
    assert r1 / r2 >= 3.5
    assert drift <= 1e-8


# ---------------------------------------------------------------- 3


PRODUCT_LIMITS = {
    "L1a": 2**1.5 * 1.01,
    "L1b": 2**2.5 * 1.01,
    "L1c": CALIBRATED_CONSTANTS["L1c"],
    "L1d": CALIBRATED_CONSTANTS["L1d"],
}


@pytest.mark.criterion(3)
def test_product_bounds(record):
    grid = Grid.cube(48)
    rng = np.random.default_rng(0)
    worst = {}
    for ineq in PRODUCT_IDS:
        tuples = [random_trials(ineq, rng, "random_band_limited") for _ in range(200)]
        tuples += [random_trials(ineq, rng, ("gaussian_bump", "anisotropic_bump")[i % 2]) for i in range(50)]
        ratios = []
        for trials in tuples:
            args = trials if ineq == "L1b" else trials[:3]
            ratios.append(check_lemma12(ineq, *args, grid=grid).ratio)
        worst[ineq] = max(ratios)
    _report(record, ", ".join(f"{k} max {v:.4g} <= {PRODUCT_LIMITS[k]:.4g}" for k, v in worst.items())
            + " (250 tuples each, 48^3)")
    for ineq, value in worst.items():
        assert value <= PRODUCT_LIMITS[ineq], ineq


# ---------------------------------------------------------------- 4


@pytest.mark.criterion(4)
def test_agmon(record):
    x = np.linspace(-40.0, 40.0, 16001)
    sharp = agmon_1d(np.exp(-np.abs(x)), x).ratio
    gauss = agmon_1d(np.exp(-x**2), x).ratio
    gauss_exact = (math.pi / 2) ** -0.25
    rng = np.random.default_rng(0)
    ratios = []
    for _ in range(200):
        f = agmon_profile(x, math.exp(rng.uniform(-4, 0.7)), rng.uniform(1, 2), rng.uniform(0.5, 1.5))
        ratios.append(agmon_1d(f, x).ratio)
    for _ in range(200):
        k = rng.integers(1, 5)
        amp, centre, width = rng.normal(size=k), rng.uniform(-8, 8, k), rng.uniform(0.3, 2.0, k)
        f = np.sum(amp[:, None] * np.exp(-(((x[None, :] - centre[:, None]) / width[:, None]) ** 2)), axis=0)
        ratios.append(agmon_1d(f, x).ratio)
    worst = max(ratios)
    _report(record, f"e^-|x| ratio {sharp:.4f} (1 +- 0.02), Gaussian {gauss:.5f} vs {gauss_exact:.5f} "
                    f"(+- 1e-3), max of 400 random {worst:.4f} <= {math.sqrt(2) * 1.001:.4f}")
    assert abs(sharp - 1.0) <= 0.02
    assert abs(gauss - gauss_exact) <= 1e-3
    assert worst <= math.sqrt(2) * 1.001


# ---------------------------------------------------------------- 5, 6


DTS = (0.1, 0.05, 0.025)


@pytest.fixture(scope="module")
def manufactured_runs():
    grid = Grid.cube(16)
    ms = ManufacturedSolution(grid)
    out = {}
    for dt in DTS:
        sink: list = []
        cfg = SolverConfig(dt=dt, t_end=1.0, diagnostics_stride=1, allow_cfl_violation=True)
        final = run(ms.exact(0.0), cfg, sink=sink, forcing=ms.forcing)
        subs = np.array([d.substitution_residual for d in sink[1:]])
        out[dt] = (relative_error(final, ms.exact(1.0)), float(np.sqrt(np.mean(subs**2))))
    return out


@pytest.mark.criterion(5)
def test_substitution_identity_order(manufactured_runs, record):
    res = [manufactured_runs[dt][1] for dt in DTS]
    ratios = [res[0] / res[1], res[1] / res[2]]
    _report(record, f"RMS residuals {', '.join(f'{r:.3e}' for r in res)}; "
                    f"halving ratios {ratios[0]:.3f}, {ratios[1]:.3f} (in [3.5, 4.5])")
    assert all(3.5 <= r <= 4.5 for r in ratios)


@pytest.mark.criterion(6)
def test_rk4_order(manufactured_runs, record):
    err = [manufactured_runs[dt][0] for dt in DTS]
    ratios = [err[0] / err[1], err[1] / err[2]]
    _report(record, f"errors {', '.join(f'{e:.3e}' for e in err)}; "
                    f"halving ratios {ratios[0]:.2f}, {ratios[1]:.2f} (in [14, 18])")
    assert all(14 <= r <= 18 for r in ratios)


# ---------------------------------------------------------------- 7, 8, 9


@pytest.mark.criterion(7)
def test_small_data_stability(mhd_long, record):
    led = mhd_long.ledger
    totals = led.column("E0") + led.column("E1")
    e0_0 = led.column("E0")[0]
    decay = {}
    for col in ("diss_u", "diss_b", "d1b_h2_sq"):
        v = led.column(col)
        decay[col] = v.max() / v[-1] if v[-1] > 0 else math.inf
    _report(record, f"t_final {mhd_long.final_state.t:.3f}, max(E0+E1)/E0(0) = {totals.max() / e0_0:.4f} "
                    f"(<= 10); decay max/final: " + ", ".join(f"{k} {v:.3g}" for k, v in decay.items())
            + f"; wall {mhd_long.wall_time:.0f}s")
    assert mhd_long.fault is None
    assert mhd_long.final_state.t == pytest.approx(T_LONG)
    assert np.all(totals <= 10 * e0_0)
    assert not mhd_long.monitor.breached
    assert all(v >= 10 for v in decay.values())


@pytest.mark.criterion(8)
def test_epsilon_scaling(mhd_long, tmp_path, record):
    cfg = ExperimentConfig(**{**LONG, "epsilon": 2e-3}, sweep=[2e-3, 4e-3], output_dir=str(tmp_path))
    rows = sweep_epsilon(cfg).rows
    sups = {1e-3: mhd_long.monitor.max_total}
    sups.update({r.epsilon: r.sup_e0_plus_e1 for r in rows})
    scaled = {e: (s / sups[1e-3]) / (e / 1e-3) ** 2 for e, s in sups.items()}
    _report(record, "sup(E0+E1): " + ", ".join(f"eps={e:g} {s:.4e}" for e, s in sups.items())
            + "; ratio to quadratic " + ", ".join(f"{v:.4f}" for v in scaled.values()) + " (in [0.5, 2])")
    assert all(r.fault is None for r in rows)
    assert all(0.5 <= v <= 2.0 for v in scaled.values())


@pytest.mark.criterion(9)
def test_navier_stokes_horizontal(record):
    cfg = ExperimentConfig(**LONG, mode="ns_horizontal")
    state0 = generate_initial_data(cfg)
    ledger = EnergyLedger()
    worst_div = [divergence_max(state0.u)]
    final = run(state0, cfg.solver_config(), ledger,
                on_step=lambda i, s: worst_div.append(divergence_max(s.u)))
    monitor = BootstrapMonitor.for_initial_energy(ledger.rows[0][6])
    for row in ledger.rows:
        monitor.update(row[0], row[6], row[7])
    _report(record, f"t_final {final.t:.3f}, max(E0+E1)/E0(0) = {monitor.max_total / monitor.e0_initial:.4f} "
                    f"(<= 10), max |div u| = {max(worst_div):.1e} over {len(worst_div)} states (<= 1e-10)")
    assert final.t == pytest.approx(T_LONG)
    assert not np.any(final.b.data)
    assert not monitor.breached
    assert max(worst_div) <= 1e-10


# ---------------------------------------------------------------- 10


@pytest.mark.criterion(10)
def test_determinism_and_resume(tmp_path, record):
    base = dict(grid=16, dt=1e-3, epsilon=1e-2, seed=3)
    # the checkpoint header stores the config, output directory included, so rerun in place
    cfg = ExperimentConfig(**base, t_end=0.05, output_dir=str(tmp_path / "a"))
    names = ("ledger.csv", "diagnostics.csv", "final.ckpt")
    run_stability_experiment(cfg)
    first = {f: (tmp_path / "a" / f).read_bytes() for f in names}
    run_stability_experiment(cfg)
    identical = all((tmp_path / "a" / f).read_bytes() == first[f] for f in names)

    # resume from the checkpoint and compare with an uninterrupted run one step later
    state, header = load_checkpoint(tmp_path / "a" / "final.ckpt")
    cfg_next = SolverConfig(dt=1e-3, t_end=0.051)
    resumed = run(state, cfg_next)
    direct = run(generate_initial_data(ExperimentConfig(**base)), cfg_next)
    scale = norm(direct.u) + norm(direct.b)
    diff = (norm(resumed.u - direct.u) + norm(resumed.b - direct.b)) / scale

    save_checkpoint(tmp_path / "again.ckpt", state, header["dissipation_mode"], header.get("extra"))
    reread, _ = load_checkpoint(tmp_path / "again.ckpt")
    round_trip = np.array_equal(reread.u.data, state.u.data) and np.array_equal(reread.b.data, state.b.data)
    _report(record, f"repeat runs bitwise identical: {identical}; resume difference {diff:.1e} "
                    f"(limit 1e-13); checkpoint round trip exact: {round_trip}")
    assert identical
    assert diff <= 1e-13
    assert round_trip
