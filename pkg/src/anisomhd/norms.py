"""Sobolev and directional norms, energy ledgers and exact energy identities.

All norms are evaluated in Fourier space through Parseval, so integration
by parts holds to round-off on the torus.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, asdict
from functools import lru_cache
from typing import Iterable, Literal, Union

import numpy as np

from .errors import ContractError
from .spectral import Grid, VectorField, irfftn, rfftn

Flavor = Literal["H", "Hdot", "L2"]
DirectionFilter = Union[None, str, tuple]

LEDGER_COLUMNS = ("t", "u_h3_sq", "b_h3_sq", "diss_u", "diss_b", "d1b_h2_sq", "E0", "E1")


@dataclass(frozen=True)
class NormSpec:
    """Which norm to take.

    ``direction`` restricts the derivatives: ``None`` for the plain norm,
    ``"grad_h"`` for ``nabla_h f``, ``"grad"`` for ``nabla f``, or a tuple of
    axes for a mixed partial, e.g. ``(1,)`` for ``d_1 f`` and ``(1, 2)`` for
    ``d_1 d_2 f``.
    """

    order: int = 0
    flavor: Flavor = "H"
    direction: DirectionFilter = None

    def __post_init__(self):
        if int(self.order) != self.order or not 0 <= self.order <= 4:
            raise ValueError(f"norm order must be an integer in [0, 4], got {self.order!r}")
        if self.flavor not in ("H", "Hdot", "L2"):
            raise ValueError(f"unknown norm flavor {self.flavor!r}")
        if self.flavor == "L2" and self.order:
            raise ValueError("L2 flavor takes order 0")
        d = self.direction
        if isinstance(d, list):
            object.__setattr__(self, "direction", tuple(d))
            d = self.direction
        if d is not None and d not in ("grad_h", "grad") and not (
            isinstance(d, tuple) and d and all(a in (1, 2, 3) for a in d)
        ):
            raise ValueError(f"bad direction filter {d!r}")


L2 = NormSpec(0, "L2")
H3 = NormSpec(3, "H")


def _direction_weight(grid: Grid, direction) -> np.ndarray:
    k1, k2, k3 = grid.odd_wavenumbers
    ks = (k1, k2, k3)
    if direction is None:
        return np.ones(grid.spectral_shape)
    if direction == "grad_h":
        return np.broadcast_to(k1**2 + k2**2, grid.spectral_shape)
    if direction == "grad":
        return np.broadcast_to(k1**2 + k2**2 + k3**2, grid.spectral_shape)
    w = np.ones(grid.spectral_shape)
    for axis in direction:
        w = w * ks[axis - 1] ** 2
    return w


@lru_cache(maxsize=64)
def norm_weight(grid: Grid, spec: NormSpec) -> np.ndarray:
    """Array ``W`` such that ``||f||^2 = sum(W * |f_hat|^2)`` over the half spectrum."""
    ksq = grid.k_squared
    if spec.flavor == "H":
        sob = (1.0 + ksq) ** spec.order
    elif spec.flavor == "Hdot":
        sob = ksq**spec.order
    else:
        sob = np.ones_like(ksq)
    w = sob * _direction_weight(grid, spec.direction) * grid.parseval_weights * grid.volume
    w = np.ascontiguousarray(w, dtype=float)
    w.flags.writeable = False
    return w


def _power(f) -> np.ndarray:
    a = np.abs(f.data) ** 2
    return a.sum(axis=0) if isinstance(f, VectorField) else a


def norm_squared(f, spec: NormSpec = L2) -> float:
    if f.space != "spectral":
        raise ContractError("norms are evaluated on spectral-space fields")
    return float(np.sum(norm_weight(f.grid, spec) * _power(f)))


def norm(f, spec: NormSpec = L2) -> float:
    """``||f||`` for a scalar or vector field; vector norms sum component squares."""
    return math.sqrt(norm_squared(f, spec))


# Ledger quantities: (name, spec) for the H^3 energy and dissipation integrands.
_LEDGER_SPECS = {
    "h3": NormSpec(3, "H"),
    "gradh_h3": NormSpec(3, "H", "grad_h"),
    "d3_h3": NormSpec(3, "H", (3,)),
    "d1_h2": NormSpec(2, "H", (1,)),
    "l2": L2,
    "gradh_l2": NormSpec(0, "H", "grad_h"),
    "d3_l2": NormSpec(0, "H", (3,)),
}


def energy_quantities(state) -> dict[str, float]:
    """Squared norms entering E0, E1 and the L^2 balance, from one pass over the state."""
    grid = state.u.grid
    pu = _power(state.u)
    pb = _power(state.b)
    w = {name: norm_weight(grid, spec) for name, spec in _LEDGER_SPECS.items()}
    dot = lambda a, b: float(np.vdot(a.ravel(), b.ravel()).real)  # noqa: E731
    return {
        "u_h3_sq": dot(w["h3"], pu),
        "b_h3_sq": dot(w["h3"], pb),
        "diss_u": dot(w["gradh_h3"], pu),
        "diss_b": dot(w["d3_h3"], pb),
        "d1b_h2_sq": dot(w["d1_h2"], pb),
        "energy_l2": dot(w["l2"], pu) + dot(w["l2"], pb),
        "diss_l2": dot(w["gradh_l2"], pu) + dot(w["d3_l2"], pb),
    }


@dataclass
class EnergyLedger:
    """Time series of the energy norms with running E0 and E1.

    ``E0(t) = sup_{samples} (||u||_{H3}^2 + ||b||_{H3}^2) + 2 * int (diss_u + diss_b)``
    and ``E1(t) = int ||d_1 b||_{H2}^2``, both integrals by the trapezoidal
    rule over the sampled times.  The sup is over sampled times only.
    """

    rows: list = field(default_factory=list)
    sup_energy: float = 0.0
    diss_integral: float = 0.0
    e1_integral: float = 0.0

    def __len__(self):
        return len(self.rows)

    @property
    def last(self):
        return self.rows[-1] if self.rows else None

    def push_values(self, t, u_h3_sq, b_h3_sq, diss_u, diss_b, d1b_h2_sq):
        t = float(t)
        if self.rows:
            prev = self.rows[-1]
            if not t > prev[0]:
                raise ContractError(f"ledger time must increase: {t!r} after {prev[0]!r}")
            dt = t - prev[0]
            self.diss_integral += 0.5 * dt * ((prev[3] + prev[4]) + (diss_u + diss_b))
            self.e1_integral += 0.5 * dt * (prev[5] + d1b_h2_sq)
            self.sup_energy = max(self.sup_energy, u_h3_sq + b_h3_sq)
        else:
            self.sup_energy = u_h3_sq + b_h3_sq
        e0 = self.sup_energy + 2.0 * self.diss_integral
        row = (t, float(u_h3_sq), float(b_h3_sq), float(diss_u), float(diss_b), float(d1b_h2_sq),
               e0, self.e1_integral)
        self.rows.append(row)
        return self

    def push(self, state, quantities: dict | None = None):
        q = quantities if quantities is not None else energy_quantities(state)
        return self.push_values(state.t, q["u_h3_sq"], q["b_h3_sq"], q["diss_u"], q["diss_b"], q["d1b_h2_sq"])

    def column(self, name: str) -> np.ndarray:
        j = LEDGER_COLUMNS.index(name)
        return np.array([r[j] for r in self.rows])

    @property
    def E0(self) -> float:
        return self.rows[-1][6] if self.rows else 0.0

    @property
    def E1(self) -> float:
        return self.rows[-1][7] if self.rows else 0.0

    def accumulators(self) -> dict:
        return {
            "sup_energy": self.sup_energy,
            "diss_integral": self.diss_integral,
            "e1_integral": self.e1_integral,
            "last_row": list(self.rows[-1]) if self.rows else None,
        }

    @classmethod
    def resume_from(cls, acc: dict) -> EnergyLedger:
        """A ledger whose integrals continue from a checkpointed run."""
        led = cls(sup_energy=acc["sup_energy"], diss_integral=acc["diss_integral"],
                  e1_integral=acc["e1_integral"])
        if acc.get("last_row") is not None:
            led.rows.append(tuple(float(x) for x in acc["last_row"]))
        return led

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(LEDGER_COLUMNS) + "\n")
            for row in self.rows:
                fh.write(",".join(format(x, ".17g") for x in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> EnergyLedger:
        led = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != LEDGER_COLUMNS:
                raise ContractError(f"unexpected ledger header {header}")
            for rec in reader:
                led.rows.append(tuple(float(x) for x in rec))
        if led.rows:
            last = led.rows[-1]
            led.sup_energy = max(r[1] + r[2] for r in led.rows)
            led.diss_integral = 0.5 * (last[6] - led.sup_energy)
            led.e1_integral = last[7]
        return led


def ledger_push(ledger: EnergyLedger, state) -> EnergyLedger:
    return ledger.push(state)


@dataclass
class DiagnosticsRecord:
    t: float
    l2_balance_residual: float
    I1_value: float
    substitution_residual: float
    divergence_max_u: float
    divergence_max_b: float

    def as_dict(self):
        return asdict(self)


class L2Balance:
    """Streaming form of the L^2 identity

    ||u(t)||^2 + ||b(t)||^2 + 2 int_0^t (||nabla_h u||^2 + ||d_3 b||^2) = ||u(0)||^2 + ||b(0)||^2

    with trapezoidal time quadrature.  In inviscid mode the dissipation is
    zero and the residual is the energy drift.
    """

    def __init__(self, inviscid: bool = False):
        self.inviscid = inviscid
        self.initial = None
        self.integral = 0.0
        self._last = None
        self.residual = 0.0

    def push(self, t: float, energy: float, dissipation: float) -> float:
        if self.inviscid:
            dissipation = 0.0
        if self._last is None:
            self.initial = energy
        else:
            t0, d0 = self._last
            if not t > t0:
                raise ContractError("L2 balance samples must have increasing time")
            self.integral += 0.5 * (t - t0) * (d0 + dissipation)
        self._last = (t, dissipation)
        self.residual = energy + 2.0 * self.integral - self.initial
        return self.residual

    def push_state(self, state) -> float:
        q = energy_quantities(state)
        return self.push(state.t, q["energy_l2"], q["diss_l2"])


def l2_balance_residual(history: Iterable, inviscid: bool = False) -> float:
    """LHS minus RHS of the L^2 energy identity over a sequence of states."""
    tracker = L2Balance(inviscid)
    n = 0
    for state in history:
        tracker.push_state(state)
        n += 1
    if n == 0:
        raise ContractError("empty state history")
    return tracker.residual


def I1_terms(state) -> tuple[float, float]:
    """The two integrals sum_i int d_i^3 d_1 b . d_i^3 u  and  sum_i int d_i^3 d_1 u . d_i^3 b.

    Evaluated by Parseval, so integration by parts on the torus is exact and
    the two terms cancel to rounding.
    """
    grid = state.u.grid
    U, B = state.u.data, state.b.data
    k = grid.odd_wavenumbers
    d1 = 1j * k[0]
    w = grid.parseval_weights * grid.volume
    first = second = 0.0
    for i in range(3):
        di3 = (1j * k[i]) ** 3
        first += float(np.sum(w * (di3 * d1 * B * np.conj(di3 * U)).real))
        second += float(np.sum(w * (di3 * d1 * U * np.conj(di3 * B)).real))
    return first, second


def I1_value(state) -> float:
    """Signed value of the coupling term that integration by parts makes vanish."""
    a, b = I1_terms(state)
    return a + b


def _phys_and_grad(F: np.ndarray, grid: Grid, mask):
    """Physical samples of a vector field and of its 3x3 gradient, one batched transform."""
    k = grid.odd_wavenumbers
    Fm = F * mask if mask is not None else F
    stack = np.empty((12, *grid.spectral_shape), complex)
    stack[:3] = Fm
    for j in range(3):
        stack[3 + 3 * j: 6 + 3 * j] = 1j * k[j] * Fm  # d_j F_i at index 3 + 3j + i
    phys = irfftn(stack, grid.shape)
    return phys[:3], phys[3:].reshape(3, 3, *grid.shape)


def advective_terms(u: VectorField, b: VectorField, dealias: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Spectral coefficients of ``u.grad b`` and ``b.grad u`` in advective form."""
    grid = u.grid
    mask = grid.dealias_mask if dealias else None
    up, gu = _phys_and_grad(u.data, grid, mask)
    bp, gb = _phys_and_grad(b.data, grid, mask)
    ugb = np.einsum("jxyz,jixyz->ixyz", up, gb)  # u_j d_j b_i
    bgu = np.einsum("jxyz,jixyz->ixyz", bp, gu)
    out = rfftn(np.concatenate([ugb, bgu]))
    if mask is not None:
        out = out * mask
    return out[:3], out[3:]


def substitution_residual(state_prev, state_next, dt: float, forcing_b=None, dealias: bool = True) -> float:
    """L^2 norm of ``d_1 u - [d_t b + u.grad b - d_3^2 b - b.grad u]`` at the step midpoint.

    ``d_t b`` is the centred difference of the two states; the other terms
    use the average of the two states.  ``forcing_b`` (spectral coefficients
    or a callable of time) is subtracted from the bracket for forced runs.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    grid = state_prev.u.grid
    U = 0.5 * (state_prev.u.data + state_next.u.data)
    B = 0.5 * (state_prev.b.data + state_next.b.data)
    k1, _, _ = grid.odd_wavenumbers
    _, _, k3 = grid.wavenumbers
    ugb, bgu = advective_terms(VectorField(grid, U), VectorField(grid, B), dealias)
    dbdt = (state_next.b.data - state_prev.b.data) / dt
    bracket = dbdt + ugb + k3**2 * B - bgu
    if forcing_b is not None:
        fb = forcing_b(0.5 * (state_prev.t + state_next.t)) if callable(forcing_b) else forcing_b
        bracket = bracket - fb
    res = 1j * k1 * U - bracket
    return norm(VectorField(grid, res), L2)


def divergence_max(v: VectorField) -> float:
    """Max over grid points of |div v| (physical space)."""
    k = v.grid.odd_wavenumbers
    d = 1j * (k[0] * v.data[0] + k[1] * v.data[1] + k[2] * v.data[2])
    return float(np.max(np.abs(irfftn(d, v.grid.shape))))


def field_max(v: VectorField) -> float:
    return float(np.max(np.abs(v.values())))
