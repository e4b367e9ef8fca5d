from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anisomhd.errors import ContractError
from anisomhd.norms import (
    H3, L2, LEDGER_COLUMNS, EnergyLedger, I1_terms, I1_value, L2Balance, NormSpec,
    energy_quantities, l2_balance_residual, ledger_push, norm, norm_squared, substitution_residual,
)
from anisomhd.solver import MHDState
from anisomhd.spectral import Grid, SpectralField, VectorField, irfftn, random_field, rfftn

from conftest import random_state

PI3 = math.pi**3


def _sf(grid, func):
    return SpectralField.from_function(grid, func)


# ---------------------------------------------------------------- norms


def test_sin_norms_closed_form(grid16):
    f = _sf(grid16, lambda x1, x2, x3: np.sin(x1))
    assert norm_squared(f, L2) == pytest.approx(4 * PI3, rel=1e-13)
    assert norm_squared(f, H3) == pytest.approx(32 * PI3, rel=1e-13)


def test_constant_has_no_derivative_norms(grid16):
    f = _sf(grid16, lambda x1, x2, x3: 3.0 + 0 * x1)
    assert norm(f, NormSpec(3, "Hdot")) == 0
    assert norm(f, NormSpec(2, "H", (1,))) == 0
    assert norm(f, L2) == pytest.approx(3 * math.sqrt(8 * PI3))


def test_direction_filters(grid16):
    f = _sf(grid16, lambda x1, x2, x3: np.sin(x3))
    assert norm(f, NormSpec(3, "H", "grad_h")) == 0
    assert norm(f, NormSpec(3, "H", (3,))) > 0


def test_mixed_partial_filter(grid16):
    f = _sf(grid16, lambda x1, x2, x3: np.sin(x1) * np.sin(2 * x2))
    # d1 d2 f = 2 cos(x1) cos(2 x2), whose L2^2 is 4 * (2 pi)^3 / 4
    assert norm_squared(f, NormSpec(0, "H", (1, 2))) == pytest.approx(8 * PI3, rel=1e-13)


@pytest.mark.parametrize("bad", [dict(order=5), dict(order=-1), dict(order=1.5), dict(flavor="W"),
                                 dict(flavor="L2", order=2), dict(direction=(0,)), dict(direction="up")])
def test_normspec_validation(bad):
    with pytest.raises(ValueError):
        NormSpec(**bad)


def test_directional_norms_sum_to_gradient(grid16, rng):
    f = random_field(grid16, rng)
    parts = sum(norm_squared(f, NormSpec(2, "H", (a,))) for a in (1, 2, 3))
    assert parts == pytest.approx(norm_squared(f, NormSpec(2, "H", "grad")), rel=1e-12)


def test_vector_norm_sums_components(grid16, rng):
    u = random_state(grid16, rng).u
    total = sum(norm_squared(c, H3) for c in u.components)
    assert norm_squared(u, H3) == pytest.approx(total, rel=1e-13)


def test_norms_reject_physical_fields(grid16):
    with pytest.raises(ContractError):
        norm(SpectralField(grid16, np.zeros(grid16.shape), "physical"))


def test_norm_equivalence_constants(grid16, rng):
    ratios = []
    for _ in range(100):
        f = random_field(grid16, rng)
        ratios.append((norm(f, L2) + norm(f, NormSpec(3, "Hdot"))) / norm(f, H3))
    assert min(ratios) >= 0.7
    assert max(ratios) <= 2.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.sampled_from([1e-3, 1.0, 1e3]))
def test_norm_homogeneity(seed, scale):
    f = random_field(Grid.cube(8), np.random.default_rng(seed))
    for spec in (L2, H3, NormSpec(2, "H", (1,)), NormSpec(3, "Hdot", "grad_h")):
        assert norm(f * scale, spec) == pytest.approx(scale * norm(f, spec), rel=1e-13)


# ---------------------------------------------------------------- ledger


def test_single_sample_ledger(grid16, rng):
    s = random_state(grid16, rng)
    led = ledger_push(EnergyLedger(), s)
    q = energy_quantities(s)
    assert led.E0 == q["u_h3_sq"] + q["b_h3_sq"]
    assert led.E1 == 0


def test_constant_dissipation_integrates_exactly():
    led = EnergyLedger()
    led.push_values(0.0, 1.0, 1.0, 0.3, 0.2, 0.0)
    led.push_values(0.25, 1.0, 1.0, 0.3, 0.2, 0.0)
    assert led.E0 - 2.0 == pytest.approx(2 * 0.5 * 0.25, rel=1e-15)


def test_linear_integrand_e1():
    led = EnergyLedger()
    for t in np.linspace(0, 1, 1000):
        led.push_values(t, 0, 0, 0, 0, t)
    assert led.E1 == pytest.approx(0.5, abs=1e-5)


@pytest.mark.parametrize("t_next", [0.0, -1.0])
def test_ledger_rejects_non_increasing_time(t_next):
    led = EnergyLedger().push_values(0.0, 1, 1, 0, 0, 0)
    with pytest.raises(ContractError):
        led.push_values(t_next, 1, 1, 0, 0, 0)


def test_ledger_monotone(rng):
    led = EnergyLedger()
    for i, v in enumerate(rng.uniform(0, 1, size=(50, 5))):
        led.push_values(0.1 * i, *v)
    e0, e1 = led.column("E0"), led.column("E1")
    assert np.all(np.diff(e0) >= 0) and np.all(np.diff(e1) >= 0)
    sup = np.maximum.accumulate(led.column("u_h3_sq") + led.column("b_h3_sq"))
    np.testing.assert_allclose(e0 - 2 * np.concatenate([[0], np.cumsum(
        0.5 * 0.1 * ((led.column("diss_u") + led.column("diss_b"))[1:] +
                     (led.column("diss_u") + led.column("diss_b"))[:-1]))]), sup, rtol=1e-12)


def test_ledger_csv_round_trip(tmp_path, rng):
    led = EnergyLedger()
    for i, v in enumerate(rng.uniform(0, 1, size=(20, 5))):
        led.push_values(np.sqrt(i + 1.0), *v)
    path = tmp_path / "ledger.csv"
    led.to_csv(path)
    assert path.read_text().splitlines()[0] == ",".join(LEDGER_COLUMNS)
    back = EnergyLedger.from_csv(path)
    assert back.rows == led.rows
    assert (back.sup_energy, back.e1_integral) == (led.sup_energy, led.e1_integral)
    assert back.diss_integral == pytest.approx(led.diss_integral, rel=1e-14)


def test_ledger_resume_continues_integrals():
    full = EnergyLedger()
    part = EnergyLedger()
    for i in range(10):
        full.push_values(i, i, 1, 0.5 * i, 1, i * i)
        if i < 5:
            part.push_values(i, i, 1, 0.5 * i, 1, i * i)
    resumed = EnergyLedger.resume_from(part.accumulators())
    for i in range(5, 10):
        resumed.push_values(i, i, 1, 0.5 * i, 1, i * i)
    assert resumed.E0 == full.E0 and resumed.E1 == full.E1


# ---------------------------------------------------------------- L2 balance


def test_balance_zero_state(grid16):
    states = [MHDState.zeros(grid16, t) for t in (0.0, 0.1, 0.2)]
    assert l2_balance_residual(states) == 0


def test_balance_empty_history():
    with pytest.raises(ContractError):
        l2_balance_residual([])


def test_balance_inviscid_ignores_dissipation():
    bal = L2Balance(inviscid=True)
    bal.push(0.0, 2.0, 5.0)
    assert bal.push(1.0, 2.0, 5.0) == 0.0


def test_balance_exact_decay():
    # E(t) = e^{-2t} with dissipation D = E: E + 2 int D = 1 up to trapezoid error
    bal = L2Balance()
    ts = np.linspace(0, 1, 2001)
    for t in ts:
        r = bal.push(t, math.exp(-2 * t), math.exp(-2 * t))
    assert abs(r) < 1e-6


# ---------------------------------------------------------------- I1


def _I1_quadrature(state):
    """Real-space rectangle-rule evaluation of both I1 integrals (exact for band-limited data)."""
    grid = state.grid
    k = grid.odd_wavenumbers
    cell = grid.volume / grid.npoints
    first = second = 0.0
    for i in range(3):
        op = (1j * k[i]) ** 3
        du = irfftn(op * state.u.data, grid.shape)
        db = irfftn(op * state.b.data, grid.shape)
        d1du = irfftn(1j * k[0] * op * state.u.data, grid.shape)
        d1db = irfftn(1j * k[0] * op * state.b.data, grid.shape)
        first += np.sum(d1db * du) * cell
        second += np.sum(d1du * db) * cell
    return first, second


def test_I1_matches_quadrature_oracle(grid16, rng):
    for _ in range(5):
        s = random_state(grid16, rng)
        spec = I1_terms(s)
        quad = _I1_quadrature(s)
        scale = max(abs(quad[0]), abs(quad[1]))
        assert abs(spec[0] - quad[0]) <= 1e-10 * scale
        assert abs(spec[1] - quad[1]) <= 1e-10 * scale
        # the quadrature form cancels by itself, not only the Parseval form
        assert abs(quad[0] + quad[1]) <= 1e-10 * scale


def test_I1_vanishes_for_u_equal_b(grid16, rng):
    u = random_state(grid16, rng).u
    s = MHDState(u, u, 0.0)
    # each term pairs an odd derivative with itself and vanishes separately
    scale = norm(u, NormSpec(4)) ** 2
    assert all(abs(t) <= 1e-13 * scale for t in I1_terms(s))
    assert abs(I1_value(s)) <= 1e-13 * scale


def test_I1_relative_to_h4(grid16, rng):
    h4 = NormSpec(4)
    for _ in range(10):
        s = random_state(grid16, rng)
        assert abs(I1_value(s)) <= 1e-10 * norm(s.u, h4) * norm(s.b, h4)


# ---------------------------------------------------------------- substitution residual


def test_substitution_zero_state(grid16):
    z0, z1 = MHDState.zeros(grid16, 0.0), MHDState.zeros(grid16, 0.1)
    assert substitution_residual(z0, z1, 0.1) == 0


@pytest.mark.parametrize("dt", [0.0, -0.1])
def test_substitution_rejects_bad_dt(grid16, dt):
    z = MHDState.zeros(grid16)
    with pytest.raises(ValueError):
        substitution_residual(z, z, dt)


def test_substitution_linear_mode_exact(grid16):
    # u = 0, b = sin(x3) e2 decays as e^{-t}: the centred residual is O(dt^2)
    x = grid16.mesh()
    def state(t):
        b = np.stack([0 * x[0], math.exp(-t) * np.sin(x[2]), 0 * x[0]])
        return MHDState(VectorField.zeros(grid16), VectorField(grid16, rfftn(b)), t)
    r1 = substitution_residual(state(0), state(0.1), 0.1)
    r2 = substitution_residual(state(0), state(0.05), 0.05)
    assert r1 / r2 == pytest.approx(4.0, rel=0.05)
