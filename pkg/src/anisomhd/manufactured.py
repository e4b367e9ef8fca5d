"""Manufactured solutions for convergence studies of the MHD stepper.

The reference pair is a low-mode, divergence-free trigonometric field

    u* = (a1(t) sin(x2 + x3), a2(t) sin(x3 + x1), a3(t) sin(x1 + x2))
    b* = (c1(t) cos(x2 - x3), c2(t) cos(x3 - x1), c3(t) cos(x1 - x2))

with ``a_i(t) = A_i cos(w_i t + p_i)`` and likewise for ``c_i``.  Each
component is independent of its own coordinate, so both fields are
divergence-free.  The forcing that makes (u*, b*) an exact solution is
assembled pointwise from the closed-form gradients, independently of the
solver's divergence-form products.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solver import MHDState
from .spectral import Grid, VectorField, rfftn

_U_PHASES = ((1, 2), (2, 0), (0, 1))  # component i depends on x_a + x_b
_B_PHASES = ((1, 2), (2, 0), (0, 1))  # component i depends on x_a - x_b


@dataclass(frozen=True)
class ManufacturedSolution:
    grid: Grid
    amp_u: tuple = (0.6, 0.5, 0.4)
    amp_b: tuple = (0.5, 0.4, 0.6)
    freq_u: tuple = (1.0, 1.3, 0.7)
    freq_b: tuple = (0.9, 1.1, 1.5)
    phase_u: tuple = (0.1, 0.7, 1.3)
    phase_b: tuple = (0.4, 1.0, 0.2)
    dissipation_mode: str = "full_aniso"

    def __post_init__(self):
        if self.grid.length != 2 * np.pi:
            raise ValueError("manufactured solution assumes L = 2*pi")

    def _coef(self, t):
        au = np.array([A * np.cos(w * t + p) for A, w, p in zip(self.amp_u, self.freq_u, self.phase_u)])
        dau = np.array([-A * w * np.sin(w * t + p) for A, w, p in zip(self.amp_u, self.freq_u, self.phase_u)])
        cb = np.array([A * np.cos(w * t + p) for A, w, p in zip(self.amp_b, self.freq_b, self.phase_b)])
        dcb = np.array([-A * w * np.sin(w * t + p) for A, w, p in zip(self.amp_b, self.freq_b, self.phase_b)])
        return au, dau, cb, dcb

    def _fields(self, t):
        """Physical u, b, their gradients G[j, i] = d_j f_i and time derivatives."""
        x = self.grid.mesh()
        au, dau, cb, dcb = self._coef(t)
        shape = self.grid.shape
        u = np.zeros((3, *shape))
        b = np.zeros((3, *shape))
        ut = np.zeros((3, *shape))
        bt = np.zeros((3, *shape))
        gu = np.zeros((3, 3, *shape))
        gb = np.zeros((3, 3, *shape))
        for i, (p, q) in enumerate(_U_PHASES):
            s, c = np.sin(x[p] + x[q]), np.cos(x[p] + x[q])
            u[i] = au[i] * s
            ut[i] = dau[i] * s
            gu[p, i] = au[i] * c
            gu[q, i] = au[i] * c
        for i, (p, q) in enumerate(_B_PHASES):
            s, c = np.sin(x[p] - x[q]), np.cos(x[p] - x[q])
            b[i] = cb[i] * c
            bt[i] = dcb[i] * c
            gb[p, i] = -cb[i] * s
            gb[q, i] = cb[i] * s
        return u, b, ut, bt, gu, gb

    def exact(self, t: float) -> MHDState:
        u, b, *_ = self._fields(t)
        if self.dissipation_mode == "ns_horizontal":
            b = np.zeros_like(b)
        return MHDState(VectorField(self.grid, rfftn(u)), VectorField(self.grid, rfftn(b)), float(t))

    def forcing(self, t: float):
        """Spectral forcing (f_u, f_b) making the reference pair an exact solution."""
        u, b, ut, bt, gu, gb = self._fields(t)
        k1, k2, k3 = self.grid.wavenumbers
        ns = self.dissipation_mode == "ns_horizontal"
        if ns:
            b = np.zeros_like(b)
            gb = np.zeros_like(gb)
        ugu = np.einsum("jxyz,jixyz->ixyz", u, gu)
        bgb = np.einsum("jxyz,jixyz->ixyz", b, gb)
        ugb = np.einsum("jxyz,jixyz->ixyz", u, gb)
        bgu = np.einsum("jxyz,jixyz->ixyz", b, gu)
        hat = rfftn(np.concatenate([ut, ugu - bgb, u, bt, ugb - bgu, b]))
        ut_h, nu_h, u_h, bt_h, nb_h, b_h = (hat[3 * i: 3 * i + 3] for i in range(6))
        if self.dissipation_mode == "inviscid":
            damp_u = damp_b = 0.0
        else:
            damp_u = k1**2 + k2**2
            damp_b = k3**2
        if ns:
            fu = ut_h + nu_h + damp_u * u_h
            return fu, np.zeros_like(fu)
        fu = ut_h + nu_h - 1j * k1 * b_h + damp_u * u_h
        fb = bt_h + nb_h - 1j * k1 * u_h + damp_b * b_h
        return fu, fb


def relative_error(state: MHDState, reference: MHDState) -> float:
    from .norms import norm

    num = norm(state.u - reference.u) ** 2 + norm(state.b - reference.b) ** 2
    den = norm(reference.u) ** 2 + norm(reference.b) ** 2
    return float(np.sqrt(num / den))
