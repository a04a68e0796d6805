"""Transforms, spectral derivatives, weighted operators, dealiasing, norms.

Two layers live here.  The public functions act on :class:`RealField` /
:class:`SpectralField` and implement the operation contracts.  The ``*_c``
helpers act on raw complex coefficient arrays (mean-normalized FFT layout)
and are what the time steppers call in their inner loops.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.fft as _fft

from .errors import ConfigurationError, ConstraintError, NumericalError
from .grid import Grid, RealField, ScalingParams, SpectralField

__all__ = [
    "forward_transform",
    "inverse_transform",
    "spectral_derivative",
    "weighted_gradient",
    "weighted_laplacian",
    "dealias",
    "sobolev_norm",
    "triple_norm",
    "antiderivative_x1",
    "l2_norm",
    "weighted_ksq",
]

# ---------------------------------------------------------------------------
# raw-array layer


def fft_c(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Forward transform of real samples, zero mode = mean."""
    return _fft.fftn(values, axes=range(grid.ndim)) / grid.npoints


def ifft_c(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """Real samples from mean-normalized coefficients."""
    return _fft.ifftn(coeffs * grid.npoints, axes=range(grid.ndim)).real


def deriv_factor(grid: Grid, axis: int, order: int) -> np.ndarray:
    """Multiplier ``(i k_axis)**order``, Nyquist zeroed for odd orders."""
    k = grid.wavenumber(axis)
    factor = (1j * k) ** order
    if order % 2 == 1:
        nyq = np.isclose(np.abs(k), np.pi * grid.dims[axis] / grid.lengths[axis])
        factor = np.where(nyq, 0.0, factor)
    return factor


def deriv_c(coeffs: np.ndarray, grid: Grid, axis: int, order: int = 1) -> np.ndarray:
    return coeffs * deriv_factor(grid, axis, order)


def dealias_mask(grid: Grid) -> np.ndarray:
    """Two-thirds-rule mask: keep modes with every |signed index| <= n/3."""
    mask = np.ones(grid.shape, dtype=bool)
    for axis, n in enumerate(grid.dims):
        idx = np.rint(np.fft.fftfreq(n) * n).astype(int)
        shape = [1] * grid.ndim
        shape[axis] = n
        mask &= np.abs(idx.reshape(shape)) <= n / 3
    return mask


def weighted_ksq(grid: Grid, params: ScalingParams) -> np.ndarray:
    """Squared symbol of the anisotropic gradient: ``k1^2 + eps*k2^2`` in 2D,
    the plain ``|k|^2`` in 3D."""
    if grid.ndim != params.dim:
        raise ConfigurationError(
            f"grid rank {grid.ndim} does not match scaling dim {params.dim}")
    ksq = grid.wavenumber(0) ** 2
    for axis in range(1, grid.ndim):
        w = params.epsilon if params.dim == 2 else 1.0
        ksq = ksq + w * grid.wavenumber(axis) ** 2
    return ksq


def antiderivative_x1_c(coeffs: np.ndarray, grid: Grid, ztol: float) -> np.ndarray:
    """Division by ``i k1``; requires the k1=0 planes to be empty up to ztol."""
    k1 = grid.wavenumber(0)
    zero_plane = np.isclose(k1, 0.0)
    offending = math.sqrt(grid.volume * np.sum(np.abs(coeffs * zero_plane) ** 2))
    if offending > ztol:
        raise ConstraintError(
            "antiderivative along axis 0 needs zero streamwise mean; "
            f"k1=0 content has L2 norm {offending:.3e} (tolerance {ztol:.3e})",
            offending_norm=offending)
    factor = deriv_factor(grid, 0, 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(factor == 0.0, 0.0, 1.0 / np.where(factor == 0.0, 1.0, factor))
    return coeffs * inv


def l2_norm_c(coeffs: np.ndarray, grid: Grid) -> float:
    return math.sqrt(grid.volume * float(np.sum(np.abs(coeffs) ** 2)))


def sobolev_multiplier(grid: Grid, s: int) -> np.ndarray:
    ksq = sum(grid.wavenumber(a) ** 2 for a in range(grid.ndim))
    return (1.0 + ksq) ** s


def sobolev_norm_c(coeffs: np.ndarray, grid: Grid, s: int) -> float:
    w = sobolev_multiplier(grid, s)
    return math.sqrt(grid.volume * float(np.sum(w * np.abs(coeffs) ** 2)))


# ---------------------------------------------------------------------------
# field-level API


def forward_transform(f: RealField) -> SpectralField:
    """Fourier coefficients of a real field (zero mode = mean)."""
    if not np.all(np.isfinite(f.values)):
        raise NumericalError("cannot transform non-finite data")
    return SpectralField(f.grid, fft_c(f.values, f.grid))


def inverse_transform(F: SpectralField) -> RealField:
    """Real samples from coefficients (imaginary round-off discarded)."""
    if not np.all(np.isfinite(F.coeffs)):
        raise NumericalError("cannot transform non-finite data")
    return RealField(F.grid, ifft_c(F.coeffs, F.grid))


def spectral_derivative(f: RealField, axis: int, order: int = 1) -> RealField:
    """Exact derivative of a trigonometric interpolant along one axis."""
    if not 0 <= axis < f.grid.ndim:
        raise ConfigurationError(f"axis {axis} out of range for rank {f.grid.ndim}")
    if order < 1:
        raise ConfigurationError(f"derivative order must be >= 1, got {order}")
    c = deriv_c(fft_c(f.values, f.grid), f.grid, axis, order)
    return RealField(f.grid, ifft_c(c, f.grid))


def weighted_gradient(f: RealField, params: ScalingParams) -> list[RealField]:
    """Anisotropic gradient: ``(d1, sqrt(eps) d2)`` in 2D, plain gradient in 3D."""
    if f.grid.ndim != params.dim:
        raise ConfigurationError(
            f"grid rank {f.grid.ndim} does not match scaling dim {params.dim}")
    out = [spectral_derivative(f, 0)]
    for axis in range(1, params.dim):
        g = spectral_derivative(f, axis)
        if params.dim == 2:
            g = math.sqrt(params.epsilon) * g
        out.append(g)
    return out


def weighted_laplacian(f: RealField, params: ScalingParams) -> RealField:
    """Divergence of the anisotropic gradient: ``d11 + eps d22`` in 2D, the
    full Laplacian in 3D."""
    c = fft_c(f.values, f.grid)
    return RealField(f.grid, ifft_c(-weighted_ksq(f.grid, params) * c, f.grid))


def dealias(F: SpectralField) -> SpectralField:
    """Zero every coefficient with any |signed index| above one third of the
    axis size (idempotent)."""
    return SpectralField(F.grid, F.coeffs * dealias_mask(F.grid))


def l2_norm(f: RealField) -> float:
    """Continuum L2 norm via Parseval."""
    return l2_norm_c(fft_c(f.values, f.grid), f.grid)


def sobolev_norm(f: RealField, s: int) -> float:
    """H^s norm with multiplier ``(1+|k|^2)^s`` in continuum wavenumbers.

    ``s = 0`` is the L2 norm of the continuum field.
    """
    if s < 0 or int(s) != s:
        raise ConfigurationError(f"Sobolev index must be a nonnegative integer, got {s}")
    return sobolev_norm_c(fft_c(f.values, f.grid), f.grid, int(s))


_TRIPLE_ROLES = ("density", "velocity", "potential")


def triple_norm(f: RealField, role: str, params: ScalingParams, s: int) -> float:
    """Epsilon-weighted norm used by the pressureless-limit estimates.

    density:   ||f||_{H^s}
    velocity:  (||f||^2 + eps ||grad_w f||^2)^(1/2)
    potential: (||f||^2 + eps ||grad_w f||^2 + eps^2 ||lap_w f||^2)^(1/2)

    with the anisotropic gradient/Laplacian of :func:`weighted_gradient`.
    """
    if role not in _TRIPLE_ROLES:
        raise ConfigurationError(f"unknown triple-norm role {role!r}; "
                                 f"expected one of {_TRIPLE_ROLES}")
    total = sobolev_norm(f, s) ** 2
    if role in ("velocity", "potential"):
        grad = weighted_gradient(f, params)
        total += params.epsilon * sum(sobolev_norm(g, s) ** 2 for g in grad)
    if role == "potential":
        lap = weighted_laplacian(f, params)
        total += params.epsilon ** 2 * sobolev_norm(lap, s) ** 2
    return math.sqrt(total)


def antiderivative_x1(f: RealField, ztol: float = None) -> RealField:
    """Antiderivative along axis 0 with zero streamwise mean per line.

    The streamwise (k1=0) content of ``f`` must vanish up to ``ztol``
    (default ``1e-10 * ||f||_L2``); otherwise a :class:`ConstraintError`
    carrying the offending norm is raised.
    """
    c = fft_c(f.values, f.grid)
    if ztol is None:
        ztol = 1e-10 * l2_norm_c(c, f.grid)
    return RealField(f.grid, ifft_c(antiderivative_x1_c(c, f.grid, ztol), f.grid))
