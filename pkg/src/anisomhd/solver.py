"""Time integration of the MHD perturbation system around the field e_1.

    d_t u + u.grad u - (d_1^2 + d_2^2) u + grad P = b.grad b + d_1 b
    d_t b + u.grad b - d_3^2 b                    = b.grad u + d_1 u
    div u = div b = 0

The anisotropic dissipation is diagonal in Fourier space and is absorbed
exactly by integrating factors; the nonlinear and coupling terms are
advanced with classical RK4 on the transformed variables (Lawson RK4).
Nonlinear terms are formed in divergence form,

    u.grad u - b.grad b = div(u (x) u - b (x) b)
    b.grad u - u.grad b = div(u (x) b - b (x) u)     (row i: d_j(u_i b_j - b_i u_j))

which needs 6 inverse and 9 forward transforms per evaluation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .errors import ContractError, SolverFault
from .norms import (
    DiagnosticsRecord,
    EnergyLedger,
    L2Balance,
    I1_value,
    divergence_max,
    energy_quantities,
    substitution_residual,
)
from .spectral import Grid, SpectralField, VectorField, irfftn, linf_norm, rfftn

DissipationMode = Literal["full_aniso", "inviscid", "ns_horizontal"]
DISSIPATION_MODES = ("full_aniso", "inviscid", "ns_horizontal")

# Pair (i, j) -> slot in the 9-component product stack.
_SYM = {(0, 0): 0, (0, 1): 1, (0, 2): 2, (1, 1): 3, (1, 2): 4, (2, 2): 5}
_ANTI = {(0, 1): 6, (0, 2): 7, (1, 2): 8}

RK4_IMAG_AXIS_LIMIT = 2.0 * math.sqrt(2.0)


@dataclass(frozen=True)
class MHDState:
    u: VectorField
    b: VectorField
    t: float = 0.0

    def __post_init__(self):
        if self.u.grid != self.b.grid:
            raise ValueError("u and b live on different grids")
        if self.u.space != "spectral" or self.b.space != "spectral":
            raise ContractError("MHDState holds spectral-space fields")

    @property
    def grid(self) -> Grid:
        return self.u.grid

    @classmethod
    def zeros(cls, grid: Grid, t: float = 0.0) -> MHDState:
        return cls(VectorField.zeros(grid), VectorField.zeros(grid), t)

    @classmethod
    def from_arrays(cls, grid: Grid, U: np.ndarray, B: np.ndarray, t: float) -> MHDState:
        return cls(VectorField(grid, U), VectorField(grid, B), float(t))

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.u.data).all() and np.isfinite(self.b.data).all())


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    t_end: float
    dissipation_mode: DissipationMode = "full_aniso"
    dealias: bool = True
    diagnostics_stride: int = 100
    ledger_stride: int = 1
    cfl_safety: float = 0.9
    dt_max: float = 0.1
    allow_cfl_violation: bool = False
    check_divergence: bool = False

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if self.dissipation_mode not in DISSIPATION_MODES:
            raise ValueError(f"dissipation_mode must be one of {DISSIPATION_MODES}")
        if self.diagnostics_stride < 1 or self.ledger_stride < 1:
            raise ValueError("strides must be >= 1")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")


@dataclass
class StepReport:
    t: float
    divergence_bound: float
    energy: float
    flags: dict = field(default_factory=dict)


Forcing = Callable[[float], "tuple[np.ndarray, np.ndarray]"]


class Stepper:
    """Grid- and dt-specific integrating-factor RK4 stepper working on raw arrays.

    Works on compressed coefficient vectors holding only the retained
    (dealiased) modes: ``Yc`` has shape ``(2, 3, M)`` with ``Yc[0]`` = u and
    ``Yc[1]`` = b.  Use :meth:`compress` / :meth:`expand` to convert from and
    to full half-spectrum arrays of shape ``(2, 3, n1, n2, n3//2+1)``.
    """

    def __init__(self, grid: Grid, dt: float, mode: DissipationMode = "full_aniso",
                 dealias: bool = True, forcing: Forcing | None = None):
        self.grid = grid
        self.dt = dt
        self.mode = mode
        self.forcing = forcing
        mask = grid.dealias_mask if dealias else np.ones(grid.spectral_shape, bool)
        self.mask = np.broadcast_to(mask, grid.spectral_shape)
        self.idx = np.flatnonzero(self.mask)
        self.size = int(np.prod(grid.spectral_shape))
        kd = [np.broadcast_to(k, grid.spectral_shape).ravel()[self.idx] for k in grid.odd_wavenumbers]
        self.k = tuple(kd)
        self.ik = tuple(1j * k for k in kd)
        kk = kd[0] ** 2 + kd[1] ** 2 + kd[2] ** 2
        self.inv_kk = np.divide(1.0, kk, out=np.zeros_like(kk), where=kk > 0)
        k1, k2, k3 = (np.broadcast_to(k, grid.spectral_shape).ravel()[self.idx] for k in grid.wavenumbers)
        if mode == "inviscid":
            du = np.zeros_like(k1)
            db = np.zeros_like(k1)
        else:
            du = k1**2 + k2**2
            db = k3**2
        damp = np.stack([du, db])[:, None, :]  # (2, 1, M)
        self.E = np.exp(-damp * dt)
        self.Eh = np.exp(-damp * (0.5 * dt))

    def compress(self, Y: np.ndarray) -> np.ndarray:
        lead = Y.shape[: Y.ndim - 3]
        return Y.reshape(*lead, self.size)[..., self.idx]

    def expand(self, Yc: np.ndarray) -> np.ndarray:
        lead = Yc.shape[:-1]
        full = np.zeros((*lead, self.size), complex)
        full[..., self.idx] = Yc
        return full.reshape(*lead, *self.grid.spectral_shape)

    def project(self, V: np.ndarray) -> np.ndarray:
        k1, k2, k3 = self.k
        kdotv = (k1 * V[0] + k2 * V[1] + k3 * V[2]) * self.inv_kk
        return V - np.stack([k1 * kdotv, k2 * kdotv, k3 * kdotv])

    def rhs(self, Y: np.ndarray, t: float) -> np.ndarray:
        """Nonlinear plus coupling tendency on compressed arrays; u part Leray-projected."""
        grid = self.grid
        ik = self.ik
        out = np.empty_like(Y)
        if self.mode == "ns_horizontal":
            up = irfftn(self.expand(Y[0]), grid.shape)
            prods = np.empty((6, *grid.shape))
            for (i, j), s in _SYM.items():
                np.multiply(up[i], up[j], out=prods[s])
            T = self.compress(rfftn(prods))
            for i in range(3):
                acc = 0
                for j in range(3):
                    acc = acc + ik[j] * T[_SYM[(min(i, j), max(i, j))]]
                out[0, i] = -acc
            out[1] = 0.0
            if self.forcing is not None:
                fu, _ = self.forcing(t)
                out[0] += self.compress(fu)
            out[0] = self.project(out[0])
            return out

        phys = irfftn(self.expand(Y.reshape(6, -1)), grid.shape)
        up, bp = phys[:3], phys[3:]
        prods = np.empty((9, *grid.shape))
        for (i, j), s in _SYM.items():
            prods[s] = up[i] * up[j] - bp[i] * bp[j]
        for (i, j), s in _ANTI.items():
            prods[s] = up[i] * bp[j] - bp[i] * up[j]
        T = self.compress(rfftn(prods))
        U, B = Y[0], Y[1]
        ik1 = ik[0]
        for i in range(3):
            acc = 0
            for j in range(3):
                acc = acc + ik[j] * T[_SYM[(min(i, j), max(i, j))]]
            out[0, i] = ik1 * B[i] - acc
            accb = 0
            for j in range(3):
                if i == j:
                    continue
                s = _ANTI[(min(i, j), max(i, j))]
                accb = accb + (ik[j] * T[s] if i < j else -ik[j] * T[s])
            out[1, i] = accb + ik1 * U[i]
        if self.forcing is not None:
            fu, fb = self.forcing(t)
            out[0] += self.compress(fu)
            out[1] += self.compress(fb)
        out[0] = self.project(out[0])
        return out

    def advance(self, Y: np.ndarray, t: float) -> np.ndarray:
        dt, E, Eh = self.dt, self.E, self.Eh
        k1 = self.rhs(Y, t)
        k2 = self.rhs(Eh * (Y + (0.5 * dt) * k1), t + 0.5 * dt)
        k3 = self.rhs(Eh * Y + (0.5 * dt) * k2, t + 0.5 * dt)
        k4 = self.rhs(E * Y + dt * (Eh * k3), t + dt)
        Ynew = E * Y + (dt / 6.0) * (E * k1 + 2.0 * (Eh * (k2 + k3)) + k4)
        Ynew[0] = self.project(Ynew[0])
        if self.mode == "ns_horizontal":
            Ynew[1] = 0.0
        else:
            Ynew[1] = self.project(Ynew[1])
        return Ynew


def _stack(state: MHDState) -> np.ndarray:
    return np.stack([state.u.data, state.b.data])


def _divergence_bound(V: np.ndarray, grid: Grid) -> float:
    """Sum of |div coefficients| over the full spectrum; bounds max |div v| pointwise."""
    k1, k2, k3 = grid.odd_wavenumbers
    d = np.abs(k1 * V[0] + k2 * V[1] + k3 * V[2])
    return float(np.sum(grid.parseval_weights * d))


def _check_state(state: MHDState, tol: float = 1e-8):
    if not state.is_finite():
        raise ContractError("state has non-finite coefficients")
    grid = state.grid
    kmax = float(np.sqrt(grid.k_squared.max()))
    for name, v in (("u", state.u), ("b", state.b)):
        scale = float(np.sum(grid.parseval_weights * np.abs(v.data).sum(axis=0)))
        if _divergence_bound(v.data, grid) > tol * max(scale * kmax, 1e-300):
            raise ContractError(f"{name} is not divergence-free")


def _tendencies(state: MHDState, dealias: bool) -> np.ndarray:
    _check_state(state)
    st = Stepper(state.grid, 1.0, "inviscid", dealias)
    return st.expand(st.rhs(st.compress(_stack(state)), state.t))


def rhs_velocity(state: MHDState, dealias: bool = True) -> VectorField:
    """Leray projection of ``-u.grad u + b.grad b + d_1 b``."""
    return VectorField(state.grid, _tendencies(state, dealias)[0])


def rhs_magnetic(state: MHDState, dealias: bool = True, debug: bool = False) -> VectorField:
    """``-u.grad b + b.grad u + d_1 u``; divergence-free whenever u and b are."""
    out = VectorField(state.grid, _tendencies(state, dealias)[1])
    if debug:
        scale = max(float(np.max(np.abs(out.data))), 1e-300)
        if _divergence_bound(out.data, state.grid) > 1e-8 * scale * np.sqrt(state.grid.k_squared.max()):
            raise ContractError("magnetic tendency is not divergence-free")
    return out


_STEPPERS: dict = {}


def get_stepper(grid: Grid, config: SolverConfig, forcing: Forcing | None = None) -> Stepper:
    if forcing is not None:
        return Stepper(grid, config.dt, config.dissipation_mode, config.dealias, forcing)
    key = (grid, config.dt, config.dissipation_mode, config.dealias)
    st = _STEPPERS.get(key)
    if st is None:
        if len(_STEPPERS) > 16:
            _STEPPERS.clear()
        st = _STEPPERS[key] = Stepper(grid, config.dt, config.dissipation_mode, config.dealias)
    return st


def _advance_checked(stepper: Stepper, Yc: np.ndarray, t: float, last_good: MHDState) -> np.ndarray:
    Ynew = stepper.advance(Yc, t)
    if not np.isfinite(Ynew).all():
        t_new = t + stepper.dt
        raise SolverFault(f"non-finite state at t={t_new!r}", last_good_state=last_good, t=t_new)
    return Ynew


def step(state: MHDState, config: SolverConfig, forcing: Forcing | None = None) -> tuple[MHDState, StepReport]:
    """Advance one step of size ``config.dt``.

    The solver state space is the 2/3-rule band: modes outside it are
    dropped when the state enters the stepper.
    """
    stepper = get_stepper(state.grid, config, forcing)
    Y = stepper.expand(_advance_checked(stepper, stepper.compress(_stack(state)), state.t, state))
    t = state.t + config.dt
    new = MHDState(VectorField(state.grid, Y[0]), VectorField(state.grid, Y[1]), t)
    grid = state.grid
    energy = float(np.sum(grid.parseval_weights * np.abs(Y) ** 2)) * grid.volume
    div = max(_divergence_bound(Y[0], grid), _divergence_bound(Y[1], grid))
    return new, StepReport(t, div, energy, {"dealias": config.dealias, "finite": True})


def make_diagnostics(prev: MHDState | None, new: MHDState, dt: float, balance: L2Balance,
                     forcing: Forcing | None = None) -> DiagnosticsRecord:
    fb = None
    if forcing is not None:
        fb = lambda t: forcing(t)[1]  # noqa: E731
    return DiagnosticsRecord(
        t=new.t,
        l2_balance_residual=balance.residual,
        I1_value=I1_value(new),
        substitution_residual=substitution_residual(prev, new, dt, fb) if prev is not None else 0.0,
        divergence_max_u=divergence_max(new.u),
        divergence_max_b=divergence_max(new.b),
    )


def n_steps_between(t0: float, t_end: float, dt: float) -> int:
    span = t_end - t0
    if span < -1e-12 * max(1.0, abs(t_end)):
        raise ValueError(f"t_end={t_end!r} lies before the state time {t0!r}")
    n = int(round(span / dt))
    if abs(n * dt - span) > 1e-6 * dt:
        raise ValueError(f"(t_end - t) = {span!r} is not a whole number of steps dt={dt!r}")
    return max(n, 0)


def run(state0: MHDState, config: SolverConfig, ledger: EnergyLedger | None = None,
        sink: list | None = None, forcing: Forcing | None = None,
        balance: L2Balance | None = None, on_step: Callable | None = None) -> MHDState:
    """Integrate from ``state0.t`` to ``config.t_end``.

    The ledger (if given) is pushed at the start time and every
    ``ledger_stride`` steps, always including the final step.  Diagnostics
    records go to ``sink`` at the start and every ``diagnostics_stride``
    steps.  ``on_step(i, state)`` is called after each step.  On a solver fault the ledger and sink keep everything
    recorded so far and the :class:`SolverFault` propagates.
    """
    grid = state0.grid
    _check_state(state0)
    ns_mode = config.dissipation_mode == "ns_horizontal"
    if ns_mode and np.any(state0.b.data):
        raise ContractError("ns_horizontal mode integrates u alone; b must be zero")
    if not config.allow_cfl_violation:
        bound = cfl_suggest(state0, safety=config.cfl_safety, dt_max=config.dt_max)
        if config.dt > bound * (1 + 1e-12):
            raise ValueError(f"dt={config.dt!r} exceeds the CFL bound {bound:.6g}; "
                             "set allow_cfl_violation to override")
    n = n_steps_between(state0.t, config.t_end, config.dt)
    stepper = get_stepper(grid, config, forcing)
    if balance is None:
        balance = L2Balance(inviscid=config.dissipation_mode == "inviscid")
    q = energy_quantities(state0)
    if balance.initial is None:
        balance.push(state0.t, q["energy_l2"], q["diss_l2"])
    if ledger is not None and (ledger.last is None or ledger.last[0] < state0.t):
        ledger.push(state0, q)
    if sink is not None:
        sink.append(make_diagnostics(None, state0, config.dt, balance, forcing))

    def materialise(Yc, t):
        Y = stepper.expand(Yc)
        return MHDState(VectorField(grid, Y[0]), VectorField(grid, Y[1]), t)

    state = state0
    Yc = stepper.compress(_stack(state0))
    t = state0.t
    for i in range(1, n + 1):
        Yc = _advance_checked(stepper, Yc, t, state)
        t = t + config.dt
        new = materialise(Yc, t)
        q = energy_quantities(new)
        balance.push(t, q["energy_l2"], q["diss_l2"])
        if ledger is not None and (i % config.ledger_stride == 0 or i == n):
            ledger.push(new, q)
        if sink is not None and (i % config.diagnostics_stride == 0 or i == n):
            sink.append(make_diagnostics(state, new, config.dt, balance, forcing))
        if config.check_divergence:
            _check_state(new, tol=1e-10)
        if on_step is not None:
            on_step(i, new)
        state = new
    return state


def recover_pressure(state: MHDState, dealias: bool = True) -> SpectralField:
    """Zero-mean pressure solving ``-Lap P = div(u.grad u - b.grad b - d_1 b)``."""
    grid = state.grid
    mask = grid.dealias_mask if dealias else 1.0
    ik = tuple(1j * k for k in grid.odd_wavenumbers)
    phys = irfftn((_stack(state) * mask).reshape(6, *grid.spectral_shape), grid.shape)
    up, bp = phys[:3], phys[3:]
    prods = np.empty((6, *grid.shape))
    for (i, j), s in _SYM.items():
        prods[s] = up[i] * up[j] - bp[i] * bp[j]
    T = rfftn(prods) * mask
    N = np.empty((3, *grid.spectral_shape), complex)
    for i in range(3):
        acc = 0
        for j in range(3):
            acc = acc + ik[j] * T[_SYM[(min(i, j), max(i, j))]]
        N[i] = acc - ik[0] * state.b.data[i]
    divN = ik[0] * N[0] + ik[1] * N[1] + ik[2] * N[2]
    ksq = grid.k_squared
    P = np.divide(divN, ksq, out=np.zeros_like(divN), where=ksq > 0)
    return SpectralField(grid, P)


def nonlinear_pressure_source(state: MHDState, dealias: bool = True) -> VectorField:
    """``u.grad u - b.grad b - d_1 b`` in advective form (used for pressure defect checks)."""
    from .norms import _phys_and_grad

    grid = state.grid
    mask = grid.dealias_mask if dealias else None
    up, gu = _phys_and_grad(state.u.data, grid, mask)
    bp, gb = _phys_and_grad(state.b.data, grid, mask)
    adv = np.einsum("jxyz,jixyz->ixyz", up, gu) - np.einsum("jxyz,jixyz->ixyz", bp, gb)
    out = rfftn(adv)
    if mask is not None:
        out = out * mask
    out = out - 1j * grid.odd_wavenumbers[0] * state.b.data
    return VectorField(grid, out)


def cfl_suggest(state: MHDState, grid: Grid | None = None, safety: float = 0.9,
                dt_max: float = 0.1) -> float:
    """Advective/coupling time-step bound.

    ``dt = min(dt_max, safety * min(dx / speed, 2*sqrt(2) / k1_max))`` where
    ``speed = max(|u|_inf, |b|_inf)`` on a 2x oversampled grid and ``k1_max``
    is the largest retained x_1 wavenumber (the coupling terms d_1 u, d_1 b
    have purely imaginary eigenvalues +-i k_1, and RK4 is stable on the
    imaginary axis up to 2*sqrt(2)).  A zero field returns ``dt_max``.
    """
    grid = grid or state.grid
    speed = max(linf_norm(state.u), linf_norm(state.b))
    if speed == 0.0:
        return dt_max
    dx = min(grid.spacing)
    m1 = np.abs(grid.mode_index[0])
    k1_max = float(np.max(m1[3 * m1 < grid.n1])) * 2 * np.pi / grid.length
    coupling = RK4_IMAG_AXIS_LIMIT / k1_max
    return min(dt_max, safety * min(dx / speed, coupling))


# --- checkpoints ---------------------------------------------------------

CHECKPOINT_MAGIC = "ANISOMHD-CKPT"
LAYOUT = "c1,c2,c3 row-major complex interleaved"


def save_checkpoint(path, state: MHDState, dissipation_mode: str = "full_aniso", extra: dict | None = None) -> None:
    """Write a JSON header line followed by little-endian float64 blocks for u then b."""
    grid = state.grid
    header = {
        "format": CHECKPOINT_MAGIC,
        "version": 1,
        "grid": [grid.n1, grid.n2, grid.n3],
        "L": grid.length,
        "t": state.t,
        "dissipation_mode": dissipation_mode,
        "endianness": "little",
        "dtype": "<f8",
        "layout": LAYOUT,
        "spectrum": "half",
        "block_shape": [3, *grid.spectral_shape],
        "blocks": ["u", "b"],
    }
    if extra:
        header["extra"] = extra
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for V in (state.u.data, state.b.data):
            fh.write(np.ascontiguousarray(V, dtype="<c16").tobytes())


def load_checkpoint(path) -> tuple[MHDState, dict]:
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ContractError(f"{path}: unreadable checkpoint header") from exc
        if header.get("format") != CHECKPOINT_MAGIC:
            raise ContractError(f"{path}: not a checkpoint file")
        blob = fh.read()
    grid = Grid(*header["grid"], length=header["L"])
    shape = tuple(header["block_shape"])
    count = int(np.prod(shape))
    arr = np.frombuffer(blob, dtype="<c16")
    if arr.size != 2 * count:
        raise ContractError(f"{path}: expected {2 * count} coefficients, found {arr.size}")
    U = arr[:count].reshape(shape).astype(np.complex128)
    B = arr[count:].reshape(shape).astype(np.complex128)
    return MHDState(VectorField(grid, U), VectorField(grid, B), float(header["t"])), header
