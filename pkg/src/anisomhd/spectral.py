"""Fourier representation of scalar and vector fields on the periodic box.

Coefficients are stored as the real-to-complex half spectrum along the last
axis (``scipy.fft.rfftn`` layout), normalised so that they are mode
amplitudes: the forward transform divides by ``n1*n2*n3``.  With this
convention Parseval reads

    ||f||_{L^2}^2 = L^3 * sum_k |f_hat(k)|^2

where the sum runs over the full (Hermitian) spectrum; the half-spectrum
weights in :attr:`Grid.parseval_weights` account for the folded modes.

Odd-order derivatives zero the Nyquist mode on every axis, since a real
field has no real-valued derivative there.  The Leray projector and the
divergence use the same Nyquist-free wavenumbers so that projection and
divergence are exactly consistent.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np
import scipy.fft as sfft

from .errors import ContractError

Space = Literal["physical", "spectral"]

FFT_WORKERS = 1


def rfftn(a: np.ndarray, ndim: int = 3) -> np.ndarray:
    axes = tuple(range(a.ndim - ndim, a.ndim))
    return sfft.rfftn(a, axes=axes, norm="forward", workers=FFT_WORKERS)


def irfftn(c: np.ndarray, shape: tuple[int, ...], ndim: int = 3) -> np.ndarray:
    axes = tuple(range(c.ndim - ndim, c.ndim))
    return sfft.irfftn(c, s=shape, axes=axes, norm="forward", workers=FFT_WORKERS)


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[0, L)^3``."""

    n1: int
    n2: int
    n3: int
    length: float = 2 * np.pi

    def __post_init__(self):
        for name in ("n1", "n2", "n3"):
            n = getattr(self, name)
            if int(n) != n or n < 8 or n % 2:
                raise ValueError(f"{name}={n!r}: grid sizes must be even integers >= 8")
        if not self.length > 0:
            raise ValueError("box length must be positive")

    @classmethod
    def cube(cls, n: int, length: float = 2 * np.pi) -> Grid:
        return cls(n, n, n, length)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3)

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3 // 2 + 1)

    @property
    def npoints(self) -> int:
        return self.n1 * self.n2 * self.n3

    @property
    def volume(self) -> float:
        return self.length**3

    @property
    def spacing(self) -> tuple[float, float, float]:
        return tuple(self.length / n for n in self.shape)

    @cached_property
    def mode_index(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Signed integer mode numbers per axis, broadcastable to spectral_shape."""
        m1 = np.fft.fftfreq(self.n1, 1.0 / self.n1).reshape(-1, 1, 1)
        m2 = np.fft.fftfreq(self.n2, 1.0 / self.n2).reshape(1, -1, 1)
        m3 = np.fft.rfftfreq(self.n3, 1.0 / self.n3).reshape(1, 1, -1)
        return m1, m2, m3

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Wavenumbers k_j = 2*pi*m_j/L including the Nyquist entry."""
        scale = 2 * np.pi / self.length
        return tuple(m * scale for m in self.mode_index)

    @cached_property
    def odd_wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Wavenumbers with the Nyquist entry set to zero (odd derivatives)."""
        out = []
        for k, n in zip(self.wavenumbers, self.shape):
            k = k.copy()
            m = self.mode_index[len(out)]
            k[np.abs(m) == n // 2] = 0.0
            out.append(k)
        return tuple(out)

    @cached_property
    def k_squared(self) -> np.ndarray:
        k1, k2, k3 = self.wavenumbers
        return k1**2 + k2**2 + k3**2

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Boolean mask keeping modes with |m_j| < n_j/3 on every axis."""
        m1, m2, m3 = self.mode_index
        keep = (
            (3 * np.abs(m1) < self.n1)
            & (3 * np.abs(m2) < self.n2)
            & (3 * np.abs(m3) < self.n3)
        )
        return keep

    @cached_property
    def parseval_weights(self) -> np.ndarray:
        """Multiplicity of each half-spectrum entry in the full spectrum."""
        w = np.full(self.n3 // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0  # n3 even: last entry is the Nyquist plane
        return w.reshape(1, 1, -1)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Physical coordinates x_j = j*L/n as broadcastable 1D arrays."""
        xs = [np.arange(n) * (self.length / n) for n in self.shape]
        return (xs[0].reshape(-1, 1, 1), xs[1].reshape(1, -1, 1), xs[2].reshape(1, 1, -1))

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x1, x2, x3 = self.coordinates()
        return np.broadcast_arrays(x1, x2, x3)

    def refined(self, factor: int) -> Grid:
        return Grid(self.n1 * factor, self.n2 * factor, self.n3 * factor, self.length)


def _coerce(data, space: str) -> np.ndarray:
    data = np.asarray(data)
    if space == "physical":
        if np.iscomplexobj(data):
            raise ContractError("physical samples must be real")
        return _frozen(np.asarray(data, dtype=np.float64))
    return _frozen(np.asarray(data, dtype=np.complex128))


def _frozen(a: np.ndarray) -> np.ndarray:
    view = np.asarray(a).view()
    view.flags.writeable = False
    return view


@dataclass(frozen=True)
class SpectralField:
    """A real scalar field, held either as grid samples or as coefficients."""

    grid: Grid
    data: np.ndarray = field(repr=False)
    space: Space = "spectral"

    def __post_init__(self):
        expected = self.grid.spectral_shape if self.space == "spectral" else self.grid.shape
        if self.space not in ("physical", "spectral"):
            raise ContractError(f"unknown space tag {self.space!r}")
        if tuple(self.data.shape) != expected:
            raise ContractError(f"{self.space} data must have shape {expected}, got {self.data.shape}")
        object.__setattr__(self, "data", _coerce(self.data, self.space))

    @classmethod
    def from_function(cls, grid: Grid, func) -> SpectralField:
        """Sample ``func(x1, x2, x3)`` on the grid and transform."""
        vals = np.broadcast_to(func(*grid.coordinates()), grid.shape)
        return to_spectral(cls(grid, vals, "physical"))

    @classmethod
    def zeros(cls, grid: Grid) -> SpectralField:
        return cls(grid, np.zeros(grid.spectral_shape, complex))

    @property
    def is_spectral(self) -> bool:
        return self.space == "spectral"

    def values(self) -> np.ndarray:
        """Physical-space samples regardless of the stored representation."""
        return self.data if self.space == "physical" else to_physical(self).data

    def _binop(self, other, op):
        if isinstance(other, SpectralField):
            _check_same(self, other)
            if other.space != self.space:
                raise ContractError("operands live in different spaces")
            other = other.data
        return SpectralField(self.grid, op(self.data, other), self.space)

    def __add__(self, other):
        return self._binop(other, np.add)

    def __sub__(self, other):
        return self._binop(other, np.subtract)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField):
            raise TypeError("use dealiased_product for field products")
        return SpectralField(self.grid, self.data * scalar, self.space)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.grid, -self.data, self.space)


@dataclass(frozen=True)
class VectorField:
    """Three scalar components on one grid, stored as a stacked array."""

    grid: Grid
    data: np.ndarray = field(repr=False)
    space: Space = "spectral"

    def __post_init__(self):
        base = self.grid.spectral_shape if self.space == "spectral" else self.grid.shape
        if tuple(self.data.shape) != (3, *base):
            raise ContractError(f"vector data must have shape {(3, *base)}, got {self.data.shape}")
        object.__setattr__(self, "data", _coerce(self.data, self.space))

    @classmethod
    def from_components(cls, c1: SpectralField, c2: SpectralField, c3: SpectralField) -> VectorField:
        _check_same(c1, c2)
        _check_same(c1, c3)
        if not (c1.space == c2.space == c3.space):
            raise ContractError("components live in different spaces")
        return cls(c1.grid, np.stack([c1.data, c2.data, c3.data]), c1.space)

    @classmethod
    def zeros(cls, grid: Grid) -> VectorField:
        return cls(grid, np.zeros((3, *grid.spectral_shape), complex))

    @property
    def components(self) -> tuple[SpectralField, SpectralField, SpectralField]:
        return tuple(SpectralField(self.grid, self.data[i], self.space) for i in range(3))

    def __getitem__(self, i: int) -> SpectralField:
        return SpectralField(self.grid, self.data[i], self.space)

    def values(self) -> np.ndarray:
        return self.data if self.space == "physical" else irfftn(self.data, self.grid.shape)

    def __add__(self, other: VectorField) -> VectorField:
        _check_same(self, other)
        return VectorField(self.grid, self.data + other.data, self.space)

    def __sub__(self, other: VectorField) -> VectorField:
        _check_same(self, other)
        return VectorField(self.grid, self.data - other.data, self.space)

    def __mul__(self, scalar) -> VectorField:
        return VectorField(self.grid, self.data * scalar, self.space)

    __rmul__ = __mul__

    def __neg__(self):
        return VectorField(self.grid, -self.data, self.space)


def _check_same(a, b):
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")


def _require_spectral(f):
    if f.space != "spectral":
        raise ContractError(f"expected a spectral-space field, got {f.space!r}")


def to_spectral(f):
    """Forward transform; accepts SpectralField or VectorField in physical space."""
    if f.space != "physical":
        raise ContractError("to_spectral expects a physical-space field")
    return type(f)(f.grid, rfftn(f.data), "spectral")


def to_physical(f):
    """Inverse transform; accepts SpectralField or VectorField in spectral space."""
    if f.space != "spectral":
        raise ContractError("to_physical expects a spectral-space field")
    return type(f)(f.grid, irfftn(f.data, f.grid.shape), "physical")


def derivative_multiplier(grid: Grid, axis: int, order: int) -> np.ndarray:
    if axis not in (1, 2, 3):
        raise ValueError(f"axis must be 1, 2 or 3, got {axis!r}")
    if int(order) != order or order < 1:
        raise ValueError(f"derivative order must be a positive integer, got {order!r}")
    ks = grid.odd_wavenumbers if order % 2 else grid.wavenumbers
    return (1j * ks[axis - 1]) ** order


def derivative(f: SpectralField, axis: int, order: int = 1) -> SpectralField:
    """Spectral derivative ``d^order f / dx_axis^order``."""
    mult = derivative_multiplier(f.grid, axis, order)
    _require_spectral(f)
    return SpectralField(f.grid, f.data * mult, "spectral")


def horizontal_laplacian(f: SpectralField) -> SpectralField:
    """``(d_1^2 + d_2^2) f``."""
    _require_spectral(f)
    k1, k2, _ = f.grid.wavenumbers
    return SpectralField(f.grid, -(k1**2 + k2**2) * f.data, "spectral")


def _leray_arrays(data: np.ndarray, grid: Grid) -> np.ndarray:
    k1, k2, k3 = grid.odd_wavenumbers
    kk = k1**2 + k2**2 + k3**2
    inv = np.divide(1.0, kk, out=np.zeros_like(kk), where=kk > 0)
    kdotv = (k1 * data[0] + k2 * data[1] + k3 * data[2]) * inv
    out = np.empty_like(data)
    out[0] = data[0] - k1 * kdotv
    out[1] = data[1] - k2 * kdotv
    out[2] = data[2] - k3 * kdotv
    return out


def leray_project(v: VectorField) -> VectorField:
    """Divergence-free part ``(I - k k^T/|k|^2) v_hat``; the mean mode is kept."""
    _require_spectral(v)
    return VectorField(v.grid, _leray_arrays(v.data, v.grid), "spectral")


def leray_complement(v: VectorField) -> VectorField:
    """Gradient part of ``v``, so that ``v = leray_project(v) + leray_complement(v)``."""
    _require_spectral(v)
    return VectorField(v.grid, v.data - _leray_arrays(v.data, v.grid), "spectral")


def divergence(v: VectorField) -> SpectralField:
    _require_spectral(v)
    k1, k2, k3 = v.grid.odd_wavenumbers
    d = 1j * (k1 * v.data[0] + k2 * v.data[1] + k3 * v.data[2])
    return SpectralField(v.grid, d, "spectral")


def gradient(f: SpectralField) -> VectorField:
    _require_spectral(f)
    k1, k2, k3 = f.grid.odd_wavenumbers
    return VectorField(f.grid, np.stack([1j * k1 * f.data, 1j * k2 * f.data, 1j * k3 * f.data]), "spectral")


def curl(v: VectorField) -> VectorField:
    _require_spectral(v)
    k1, k2, k3 = v.grid.odd_wavenumbers
    a = v.data
    out = np.stack([
        1j * (k2 * a[2] - k3 * a[1]),
        1j * (k3 * a[0] - k1 * a[2]),
        1j * (k1 * a[1] - k2 * a[0]),
    ])
    return VectorField(v.grid, out, "spectral")


def dealias(f):
    """Zero every mode outside the 2/3-rule band."""
    _require_spectral(f)
    return type(f)(f.grid, f.data * f.grid.dealias_mask, "spectral")


def dealiased_product(f: SpectralField, g: SpectralField) -> SpectralField:
    """Pointwise product with 2/3-rule truncation of inputs and output."""
    if f.grid != g.grid:
        raise ValueError(f"grid mismatch: {f.grid} vs {g.grid}")
    _require_spectral(f)
    _require_spectral(g)
    grid = f.grid
    mask = grid.dealias_mask
    pf = irfftn(f.data * mask, grid.shape)
    pg = irfftn(g.data * mask, grid.shape)
    return SpectralField(grid, rfftn(pf * pg) * mask, "spectral")


def inner_product(f, g) -> float:
    """``int f g dx`` (summed over components for vector fields) via Parseval."""
    _check_same(f, g)
    _require_spectral(f)
    _require_spectral(g)
    w = f.grid.parseval_weights
    s = np.sum(w * (f.data * np.conj(g.data)).real)
    return float(s * f.grid.volume)


def l2_norm(f) -> float:
    _require_spectral(f)
    return float(np.sqrt(np.sum(f.grid.parseval_weights * np.abs(f.data) ** 2) * f.grid.volume))


def physical_l2_norm(f) -> float:
    """L^2 norm by grid quadrature of the physical samples."""
    vals = f.values()
    dv = f.grid.volume / f.grid.npoints
    return float(np.sqrt(np.sum(vals**2) * dv))


def pad_spectrum(coeffs: np.ndarray, grid: Grid, factor: int) -> np.ndarray:
    """Embed half-spectrum coefficients in a ``factor``-times finer grid.

    Nyquist planes are dropped, so the interpolant is the band-limited
    trigonometric polynomial through the samples (up to the Nyquist term).
    """
    lead = coeffs.shape[:-3]
    n1, n2, n3 = grid.shape
    big = (n1 * factor, n2 * factor, (n3 * factor) // 2 + 1)
    out = np.zeros((*lead, *big), complex)
    h1, h2, h3 = n1 // 2, n2 // 2, n3 // 2
    for s1_src, s1_dst in ((slice(0, h1), slice(0, h1)), (slice(h1 + 1, n1), slice(big[0] - h1 + 1, big[0]))):
        for s2_src, s2_dst in ((slice(0, h2), slice(0, h2)), (slice(h2 + 1, n2), slice(big[1] - h2 + 1, big[1]))):
            out[..., s1_dst, s2_dst, 0:h3] = coeffs[..., s1_src, s2_src, 0:h3]
    return out


def interpolate(f, factor: int) -> np.ndarray:
    """Physical samples of a spectral field on a ``factor``-times refined grid."""
    _require_spectral(f)
    fine = f.grid.refined(factor)
    return irfftn(pad_spectrum(f.data, f.grid, factor), fine.shape)


def linf_norm(f, oversample: int = 2) -> float:
    """Max-norm estimated on an oversampled grid (zero-padded interpolation).

    Vector fields use the pointwise Euclidean length.
    """
    vals = interpolate(f, oversample) if f.space == "spectral" else f.data
    if isinstance(f, VectorField):
        return float(np.sqrt(np.max(np.sum(vals**2, axis=0))))
    return float(np.max(np.abs(vals)))


def hermitian_defect(f) -> float:
    """Size of the anti-Hermitian part the inverse transform silently discards."""
    _require_spectral(f)
    shape = f.grid.shape
    back = rfftn(irfftn(f.data, shape))
    scale = max(np.max(np.abs(f.data)), 1e-300)
    return float(np.max(np.abs(back - f.data)) / scale)


def random_field(grid: Grid, rng: np.random.Generator, band: int | None = None) -> SpectralField:
    """Real white-noise field, optionally truncated to ``|m_j| <= band``."""
    data = rfftn(rng.standard_normal(grid.shape))
    if band is not None:
        m1, m2, m3 = grid.mode_index
        data = data * ((np.abs(m1) <= band) & (np.abs(m2) <= band) & (np.abs(m3) <= band))
    return SpectralField(grid, data, "spectral")


def random_vector_field(grid: Grid, rng: np.random.Generator, band: int | None = None) -> VectorField:
    comps = [random_field(grid, rng, band) for _ in range(3)]
    return VectorField.from_components(*comps)
