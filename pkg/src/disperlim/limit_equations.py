"""Pseudospectral solvers for the long-wave limit models.

The first-order density profile obeys, in the wave frame,

* 2D: ``n_t + c_nl n n_x + c_x n_xxx + c_t dx^-1 n_yy = 0``  (transverse
  dispersion through the streamwise antiderivative; requires zero k1=0
  content away from the global mean), and
* 3D: ``n_t + c_nl n n_x + c_x n_xxx + c_t d_x lap_perp n = 0``.

With wave speed V the self-consistent coefficients are ``c_nl = V``,
``c_x = 1/(2V)``, and ``c_t = V/2`` (2D) resp. ``c_t = (1 + V^4)/(2V)``
(3D).  The 3D transverse coefficient folds the isotropic third-derivative
term of the electrostatic response into the perpendicular dispersion; the
widely quoted ``V^3/2`` keeps only the gyration part and is selectable for
auditing, but fails the hierarchy residual checks for every V.  Linearized
inhomogeneous variants share the linear symbol and carry the bilinear term
``c_bl d_x(n1 nk)`` with ``c_bl = c_nl``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, ConstraintError, NumericalError
from .etdrk4 import DiagonalETDRK4
from .grid import Grid, RealField
from .spectral import (antiderivative_x1_c, dealias_mask, deriv_factor,
                       fft_c, ifft_c, l2_norm_c, sobolev_norm_c)

__all__ = [
    "LimitCoefficients",
    "LimitConfig",
    "Trajectory",
    "LinearizedSource",
    "kp2_linear_symbol",
    "zk_linear_symbol",
    "solve_kp2",
    "solve_zk",
    "solve_kdv",
    "solve_linearized_kp",
    "solve_linearized_zk",
    "solve_coupled_order2",
    "kdv_line_soliton",
    "zero_mean_soliton",
    "conserved_quantities",
]

_EQUATIONS = ("KP2", "ZK", "KdV", "LinKP", "LinZK")


@dataclass(frozen=True)
class LimitCoefficients:
    """Coefficient set (c_nl, c_x, c_t, c_bl) of a limit model."""

    V: float
    nonlinear: float
    dispersion_x: float
    transverse: float
    bilinear: float

    @classmethod
    def for_equation(cls, equation: str, V: float, nonlinear: float = None,
                     transverse: float = None, bilinear: float = None):
        if V <= 0:
            raise ConfigurationError(f"wave speed must be positive, got {V}")
        c_nl = V if nonlinear is None else float(nonlinear)
        if equation in ("KP2", "LinKP"):
            c_t = V / 2.0 if transverse is None else float(transverse)
        elif equation in ("ZK", "LinZK"):
            c_t = (1.0 + V ** 4) / (2.0 * V) if transverse is None else float(transverse)
        elif equation == "KdV":
            c_t = 0.0
        else:
            raise ConfigurationError(f"unknown equation {equation!r}")
        c_bl = c_nl if bilinear is None else float(bilinear)
        return cls(V=V, nonlinear=c_nl, dispersion_x=1.0 / (2.0 * V),
                   transverse=c_t, bilinear=c_bl)


@dataclass(frozen=True)
class LimitConfig:
    """Solver configuration for a limit model run."""

    V: float
    dt: float
    T: float
    equation: str
    scheme: str = "ETDRK4"
    zk_nonlinear_coeff: float = None   # default: V
    zk_transverse_coeff: float = None  # default: (1+V^4)/(2V)
    lin_bilinear_coeff: float = None   # default: the nonlinear coefficient
    snapshots: int = 10

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.V <= 0:
            raise ConfigurationError(f"V must be positive, got {self.V}")
        if self.T < 0:
            raise ConfigurationError(f"T must be nonnegative, got {self.T}")
        if self.equation not in _EQUATIONS:
            raise ConfigurationError(
                f"equation must be one of {_EQUATIONS}, got {self.equation!r}")
        if self.scheme != "ETDRK4":
            raise ConfigurationError(f"unsupported scheme {self.scheme!r}")

    def coefficients(self) -> LimitCoefficients:
        return LimitCoefficients.for_equation(
            self.equation, self.V, nonlinear=self.zk_nonlinear_coeff,
            transverse=self.zk_transverse_coeff, bilinear=self.lin_bilinear_coeff)


@dataclass
class Trajectory:
    """Stored snapshots of a limit-model run."""

    grid: Grid
    times: np.ndarray
    states: list[np.ndarray]
    config: LimitConfig

    def field(self, i: int) -> RealField:
        return RealField(self.grid, self.states[i])

    @property
    def final(self) -> RealField:
        return self.field(len(self.states) - 1)

    def sample(self, t: float) -> np.ndarray:
        """Linear interpolation between stored snapshots."""
        times = self.times
        if t <= times[0]:
            return self.states[0]
        if t >= times[-1]:
            return self.states[-1]
        i = int(np.searchsorted(times, t)) - 1
        w = (t - times[i]) / (times[i + 1] - times[i])
        return (1.0 - w) * self.states[i] + w * self.states[i + 1]


@dataclass
class LinearizedSource:
    """Background and inhomogeneity for a linearized limit solve.

    ``background(t)`` returns the first-order density samples at any stage
    time; ``source(t)`` returns the inhomogeneity (or is None for the
    homogeneous problem).  ``source_form`` states whether ``source`` is the
    streamwise-differentiated right side (2D convention; the solver applies
    the antiderivative) or already in evolution form.
    """

    grid: Grid
    background: object  # callable t -> ndarray
    source: object = None  # callable t -> ndarray, or None
    source_form: str = "differentiated"

    def __post_init__(self):
        if self.source_form not in ("differentiated", "evolution"):
            raise ConfigurationError(
                f"source_form must be 'differentiated' or 'evolution', "
                f"got {self.source_form!r}")

    @classmethod
    def homogeneous(cls, n1: RealField):
        values = n1.values
        return cls(grid=n1.grid, background=lambda t: values, source=None)

    @classmethod
    def from_trajectory(cls, traj: Trajectory, source=None,
                        source_form: str = "differentiated"):
        return cls(grid=traj.grid, background=traj.sample, source=source,
                   source_form=source_form)


# ---------------------------------------------------------------------------
# linear symbols


def _odd_k(grid: Grid, axis: int) -> np.ndarray:
    """Wavenumber table with the Nyquist mode removed (odd-symbol safe)."""
    return deriv_factor(grid, axis, 1).imag


def _kp_symbol_array(grid: Grid, coeffs: LimitCoefficients) -> np.ndarray:
    k1 = _odd_k(grid, 0)
    k2 = grid.wavenumber(1)
    safe = np.where(k1 == 0.0, 1.0, k1)
    sym = coeffs.dispersion_x * k1 ** 3 - coeffs.transverse * np.where(
        k1 == 0.0, 0.0, k2 ** 2 / safe)
    return 1j * sym


def _zk_symbol_array(grid: Grid, coeffs: LimitCoefficients) -> np.ndarray:
    k1 = _odd_k(grid, 0)
    kperp2 = sum(grid.wavenumber(a) ** 2 for a in range(1, grid.ndim))
    return 1j * (coeffs.dispersion_x * k1 ** 3 + coeffs.transverse * k1 * kperp2)


def _kdv_symbol_array(grid: Grid, coeffs: LimitCoefficients) -> np.ndarray:
    k1 = _odd_k(grid, 0)
    return 1j * coeffs.dispersion_x * k1 ** 3


def kp2_linear_symbol(k, V: float) -> complex:
    """Evolution-form linear symbol of the 2D limit model at one wavenumber.

    Purely imaginary for every mode.  At ``k1 = 0`` the nonlocal transverse
    branch is defined as zero; the solver keeps those modes empty (the
    streamwise-mean constraint), so the value never acts on live content.
    """
    coeffs = LimitCoefficients.for_equation("KP2", V)
    k1, k2 = float(k[0]), float(k[1])
    if k1 == 0.0:
        return 0.0j
    return 1j * (coeffs.dispersion_x * k1 ** 3 - coeffs.transverse * k2 ** 2 / k1)


def zk_linear_symbol(k, V: float, transverse: float = None) -> complex:
    """Evolution-form linear symbol of the 3D limit model at one wavenumber."""
    coeffs = LimitCoefficients.for_equation("ZK", V, transverse=transverse)
    k1 = float(k[0])
    kperp2 = float(k[1]) ** 2 + float(k[2]) ** 2
    return 1j * (coeffs.dispersion_x * k1 ** 3 + coeffs.transverse * k1 * kperp2)


# ---------------------------------------------------------------------------
# constraint handling


def _kp_live_mask(grid: Grid) -> np.ndarray:
    """Forbidden modes in 2D: k1 = 0 with nonzero transverse wavenumber.

    The global mean is exempt (it is conserved by the flow and carries a
    well-defined zero symbol), which keeps the streamwise-independent
    reduction consistent with the 1D dynamics.
    """
    dead = np.broadcast_to(np.isclose(grid.wavenumber(0), 0.0), grid.shape).copy()
    perp_zero = np.ones(grid.shape, dtype=bool)
    for a in range(1, grid.ndim):
        perp_zero &= np.broadcast_to(np.isclose(grid.wavenumber(a), 0.0), grid.shape)
    dead &= ~perp_zero
    return dead


def check_kp_constraint(f: RealField, ztol: float = None) -> float:
    """Norm of the forbidden streamwise-mean content; raises above ztol."""
    c = fft_c(f.values, f.grid)
    dead = _kp_live_mask(f.grid)
    norm = math.sqrt(f.grid.volume * float(np.sum(np.abs(c[dead]) ** 2)))
    if ztol is None:
        ztol = 1e-10 * max(l2_norm_c(c, f.grid), 1e-300)
    if norm > ztol:
        raise ConstraintError(
            f"streamwise-mean (k1=0) content violates the 2D constraint: "
            f"L2 norm {norm:.3e} exceeds {ztol:.3e}", offending_norm=norm)
    return norm


# ---------------------------------------------------------------------------
# generic driver


def _run_diagonal(grid, v0_values, cfg: LimitConfig, symbol, nonlinear,
                  project=None) -> Trajectory:
    nsteps = max(1, math.ceil(cfg.T / cfg.dt - 1e-9)) if cfg.T > 0 else 0
    dt = cfg.T / nsteps if nsteps else cfg.dt
    cfg_eff = replace(cfg, dt=dt) if nsteps and abs(dt - cfg.dt) > 1e-12 * cfg.dt else cfg

    vhat = fft_c(v0_values, grid)
    if project is not None:
        vhat = project(vhat)
    times = [0.0]
    states = [ifft_c(vhat, grid)]
    if nsteps == 0:
        return Trajectory(grid, np.array(times), states, cfg_eff)

    stepper = DiagonalETDRK4(symbol, dt, nonlinear)
    guard0 = sobolev_norm_c(vhat, grid, 2)
    guard = 10.0 * guard0 if guard0 > 1e-14 else 1.0
    snaps = max(1, int(cfg.snapshots))
    marks = sorted({round(nsteps * (i + 1) / snaps) for i in range(snaps)} - {0})

    done = 0
    for mark in marks:
        for step in range(done, mark):
            vhat = stepper.step(vhat, step * dt)
            if project is not None:
                vhat = project(vhat)
        done = mark
        if not np.all(np.isfinite(vhat)):
            raise NumericalError(f"non-finite spectrum at t = {done * dt:.6g}")
        h2 = sobolev_norm_c(vhat, grid, 2)
        if h2 > guard:
            raise NumericalError(
                f"blow-up guard tripped at t = {done * dt:.6g}: "
                f"H2 = {h2:.3e} exceeds 10x initial {guard0:.3e}")
        times.append(done * dt)
        states.append(ifft_c(vhat, grid))
    return Trajectory(grid, np.array(times), states, cfg_eff)


def _quadratic_nonlinearity(grid: Grid, coeffs: LimitCoefficients):
    mask = dealias_mask(grid)
    dx1 = deriv_factor(grid, 0, 1)

    def nonlinear(vhat, t):
        v = ifft_c(mask * vhat, grid)
        return (-0.5 * coeffs.nonlinear) * dx1 * (mask * fft_c(v * v, grid))

    return nonlinear


def solve_kp2(n0: RealField, cfg: LimitConfig) -> Trajectory:
    """Integrate the 2D limit model; re-projects the streamwise-mean
    constraint after every step (the global mean is conserved and kept)."""
    if n0.grid.ndim != 2:
        raise ConfigurationError("the 2D limit model needs a rank-2 grid")
    check_kp_constraint(n0)
    coeffs = cfg.coefficients()
    dead = _kp_live_mask(n0.grid)

    def project(vhat):
        out = vhat.copy()
        out[dead] = 0.0
        return out

    return _run_diagonal(n0.grid, n0.values, cfg,
                         _kp_symbol_array(n0.grid, coeffs),
                         _quadratic_nonlinearity(n0.grid, coeffs),
                         project=project)


def solve_zk(n0: RealField, cfg: LimitConfig) -> Trajectory:
    """Integrate the 3D limit model (no nonlocal constraint)."""
    if n0.grid.ndim != 3:
        raise ConfigurationError("the 3D limit model needs a rank-3 grid")
    coeffs = cfg.coefficients()
    return _run_diagonal(n0.grid, n0.values, cfg,
                         _zk_symbol_array(n0.grid, coeffs),
                         _quadratic_nonlinearity(n0.grid, coeffs))


def solve_kdv(n0: RealField, cfg: LimitConfig) -> Trajectory:
    """One-dimensional reduction (no transverse dispersion); test oracle."""
    if n0.grid.ndim != 1:
        raise ConfigurationError("the 1D reduction needs a rank-1 grid")
    coeffs = cfg.coefficients()
    return _run_diagonal(n0.grid, n0.values, cfg,
                         _kdv_symbol_array(n0.grid, coeffs),
                         _quadratic_nonlinearity(n0.grid, coeffs))


def _linearized_nonlinearity(grid: Grid, coeffs: LimitCoefficients,
                             source: LinearizedSource, ztol_scale: float):
    mask = dealias_mask(grid)
    dx1 = deriv_factor(grid, 0, 1)

    def nonlinear(vhat, t):
        v = ifft_c(mask * vhat, grid)
        n1 = ifft_c(mask * fft_c(source.background(t), grid), grid)
        out = (-coeffs.bilinear) * dx1 * (mask * fft_c(n1 * v, grid))
        if source.source is not None:
            g = fft_c(source.source(t), grid)
            if source.source_form == "differentiated":
                g = antiderivative_x1_c(g, grid, ztol_scale)
            out = out + g
        return out

    return nonlinear


def solve_linearized_kp(source: LinearizedSource, nk0: RealField,
                        cfg: LimitConfig) -> Trajectory:
    """Linearized inhomogeneous 2D solve about the background in ``source``."""
    if nk0.grid.ndim != 2:
        raise ConfigurationError("the 2D linearized model needs a rank-2 grid")
    check_kp_constraint(nk0)
    coeffs = cfg.coefficients()
    dead = _kp_live_mask(nk0.grid)
    ztol = 1e-9 * max(1.0, l2_norm_c(fft_c(source.background(0.0), nk0.grid),
                                     nk0.grid))

    def project(vhat):
        out = vhat.copy()
        out[dead] = 0.0
        return out

    return _run_diagonal(nk0.grid, nk0.values, cfg,
                         _kp_symbol_array(nk0.grid, coeffs),
                         _linearized_nonlinearity(nk0.grid, coeffs, source, ztol),
                         project=project)


def solve_linearized_zk(source: LinearizedSource, nk0: RealField,
                        cfg: LimitConfig) -> Trajectory:
    """Linearized inhomogeneous 3D solve about the background in ``source``."""
    if nk0.grid.ndim != 3:
        raise ConfigurationError("the 3D linearized model needs a rank-3 grid")
    coeffs = cfg.coefficients()
    ztol = 1e-9 * max(1.0, l2_norm_c(fft_c(source.background(0.0), nk0.grid),
                                     nk0.grid))
    return _run_diagonal(nk0.grid, nk0.values, cfg,
                         _zk_symbol_array(nk0.grid, coeffs),
                         _linearized_nonlinearity(nk0.grid, coeffs, source, ztol))


def solve_coupled_order2(n10: RealField, n20: RealField, cfg: LimitConfig,
                         source_fn) -> tuple[Trajectory, Trajectory]:
    """Co-integrate the first-order profile and its linearized correction.

    ``source_fn(n1_values) -> evolution-form inhomogeneity`` is evaluated at
    every stage from the stage value of the first-order field, so the pair
    advances as one coupled ETDRK4 system with no interpolation error.
    Returns the two trajectories on the shared time grid.
    """
    grid = n10.grid
    coeffs = cfg.coefficients()
    if grid.ndim == 2:
        check_kp_constraint(n10)
        check_kp_constraint(n20)
        sym = _kp_symbol_array(grid, coeffs)
        dead = _kp_live_mask(grid)
    else:
        sym = _zk_symbol_array(grid, coeffs)
        dead = None
    mask = dealias_mask(grid)
    dx1 = deriv_factor(grid, 0, 1)

    def nonlinear(stack, t):
        v1 = ifft_c(mask * stack[..., 0], grid)
        v2 = ifft_c(mask * stack[..., 1], grid)
        out = np.empty_like(stack)
        out[..., 0] = (-0.5 * coeffs.nonlinear) * dx1 * (mask * fft_c(v1 * v1, grid))
        g = fft_c(source_fn(v1), grid)
        out[..., 1] = (-coeffs.bilinear) * dx1 * (mask * fft_c(v1 * v2, grid)) + g
        return out

    def project(stack):
        if dead is None:
            return stack
        out = stack.copy()
        out[dead, :] = 0.0
        return out

    nsteps = max(1, math.ceil(cfg.T / cfg.dt - 1e-9)) if cfg.T > 0 else 0
    dt = cfg.T / nsteps if nsteps else cfg.dt
    stack = np.stack([fft_c(n10.values, grid), fft_c(n20.values, grid)], axis=-1)
    stack = project(stack)
    times = [0.0]
    s1 = [ifft_c(stack[..., 0], grid)]
    s2 = [ifft_c(stack[..., 1], grid)]
    if nsteps:
        stepper = DiagonalETDRK4(sym[..., None], dt, nonlinear)
        snaps = max(1, int(cfg.snapshots))
        marks = sorted({round(nsteps * (i + 1) / snaps) for i in range(snaps)} - {0})
        done = 0
        for mark in marks:
            for step in range(done, mark):
                stack = project(stepper.step(stack, step * dt))
            done = mark
            if not np.all(np.isfinite(stack)):
                raise NumericalError(f"non-finite spectrum at t = {done * dt:.6g}")
            times.append(done * dt)
            s1.append(ifft_c(stack[..., 0], grid))
            s2.append(ifft_c(stack[..., 1], grid))
    cfg_eff = replace(cfg, dt=dt) if nsteps else cfg
    t = np.array(times)
    return (Trajectory(grid, t, s1, cfg_eff), Trajectory(grid, t, s2, cfg_eff))


# ---------------------------------------------------------------------------
# discrete right-hand sides (shared with the profile constructions, so time
# derivatives of profiles match the solvers' tendencies exactly)


def symbol_array(grid: Grid, coeffs: LimitCoefficients, equation: str) -> np.ndarray:
    if equation in ("KP2", "LinKP"):
        return _kp_symbol_array(grid, coeffs)
    if equation in ("ZK", "LinZK"):
        return _zk_symbol_array(grid, coeffs)
    if equation == "KdV":
        return _kdv_symbol_array(grid, coeffs)
    raise ConfigurationError(f"unknown equation {equation!r}")


def evolution_rhs(values: np.ndarray, grid: Grid, coeffs: LimitCoefficients,
                  equation: str) -> np.ndarray:
    """Instantaneous tendency of the quadratic limit model, in samples."""
    sym = symbol_array(grid, coeffs, equation)
    nonlin = _quadratic_nonlinearity(grid, coeffs)
    vhat = fft_c(values, grid)
    return ifft_c(sym * vhat + nonlin(vhat, 0.0), grid)


def linearized_rhs(values: np.ndarray, background: np.ndarray,
                   source_evolution: np.ndarray | None, grid: Grid,
                   coeffs: LimitCoefficients, equation: str) -> np.ndarray:
    """Instantaneous tendency of the linearized model (evolution-form source)."""
    sym = symbol_array(grid, coeffs, equation)
    mask = dealias_mask(grid)
    dx1 = deriv_factor(grid, 0, 1)
    vhat = fft_c(values, grid)
    v = ifft_c(mask * vhat, grid)
    n1 = ifft_c(mask * fft_c(background, grid), grid)
    out = sym * vhat - coeffs.bilinear * dx1 * (mask * fft_c(n1 * v, grid))
    if source_evolution is not None:
        out = out + fft_c(source_evolution, grid)
    return ifft_c(out, grid)


# ---------------------------------------------------------------------------
# oracles


def kdv_line_soliton(kappa: float, V: float, grid: Grid, x0: float = None):
    """Closed-form line soliton of the 1D reduction and its frame speed.

    Profile ``(6 kappa^2 / V^2) sech^2(kappa (x1 - x0))`` travelling at
    ``2 kappa^2 / V``.  Verified by substitution in the test suite (symbolic
    and spectral residuals) before use as ground truth.  The profile must
    decay below 1e-10 inside the periodic domain.
    """
    if kappa < 0:
        raise ConfigurationError(f"kappa must be nonnegative, got {kappa}")
    if kappa == 0.0:
        return RealField.zeros(grid), 0.0
    L = grid.lengths[0]
    amp = 6.0 * kappa ** 2 / V ** 2
    edge = amp / math.cosh(kappa * L / 2.0) ** 2
    if edge > 1e-10:
        raise ConfigurationError(
            f"soliton tail {edge:.3e} exceeds 1e-10 at the domain edge; "
            f"use a longer box or larger kappa")
    if x0 is None:
        x0 = L / 2.0
    x = grid.axis_coordinates(0)
    dx = np.mod(x - x0 + L / 2.0, L) - L / 2.0
    profile = amp / np.cosh(kappa * dx) ** 2
    values = np.broadcast_to(profile, grid.shape).copy()
    return RealField(grid, values), 2.0 * kappa ** 2 / V


def zero_mean_soliton(kappa: float, V: float, grid: Grid, x0: float = None):
    """Mean-subtracted periodic soliton and its exact torus frame speed.

    Removing the (conserved) mean b shifts the travelling speed by ``-V*b``;
    the returned speed accounts for that, so peak tracking on the torus can
    be compared against it directly.
    """
    field, speed = kdv_line_soliton(kappa, V, grid, x0=x0)
    mean = float(np.mean(field.values))
    return RealField(grid, field.values - mean), speed - V * mean


def conserved_quantities(f: RealField, equation: str, V: float,
                         c_N: float = None, transverse: float = None) -> dict:
    """Invariant functionals used as solver acceptance oracles.

    mass = integral(f), l2 = integral(f^2); for the 3D model additionally the
    energy functional combining streamwise/perpendicular dispersion with the
    cubic term.  Quadrature is the exact mean-times-volume rule.
    """
    if equation not in ("KP2", "ZK", "KdV"):
        raise ConfigurationError(f"no invariant set for equation {equation!r}")
    grid = f.grid
    vol = grid.volume
    out = {"mass": float(np.mean(f.values)) * vol,
           "l2": float(np.mean(f.values ** 2)) * vol}
    if equation == "ZK":
        coeffs = LimitCoefficients.for_equation("ZK", V, nonlinear=c_N,
                                                transverse=transverse)
        chat = fft_c(f.values, grid)
        d1 = ifft_c(deriv_factor(grid, 0, 1) * chat, grid)
        perp = sum(ifft_c(deriv_factor(grid, a, 1) * chat, grid) ** 2
                   for a in range(1, grid.ndim))
        density = (0.5 * coeffs.dispersion_x * d1 ** 2
                   + 0.5 * coeffs.transverse * perp
                   - coeffs.nonlinear * f.values ** 3 / 6.0)
        out["hamiltonian"] = float(np.mean(density)) * vol
    return out
