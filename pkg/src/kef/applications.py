"""Model instantiations: a binary gas mixture and a capillary ghost system.

The mixture block reuses the core flow solver with the induced viscosity law
mu'(rho) = c_tilde(rho) / (2 rho), which makes the velocity constraint
div u = div(c0(rho) grad(1/rho)) hold identically.  Species mass fractions
ride on top of a completed flow step as a conservative transport-diffusion
update.  The ghost system is the core solver in "ghost" mode with an explicit
capillary force; its augmented entropy and budget are assembled here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .constitutive import ViscosityLaw, check_important, linear_law, log_law
from .fields import Grid, ScalarField, VectorField, leray_project
from .solver import (FluidState, SolverConfig, compute_u, ghost_capillary_a,
                     step, _grad_tensor_a, _div_dealias_a)

Coefficient = Union[float, Callable]


def _as_coefficient(c: Coefficient) -> Callable:
    """Normalize a constant or callable diffusion coefficient to a callable."""
    if callable(c):
        return lambda s: np.asarray(c(np.asarray(s, dtype=float)), dtype=float)
    val = float(c)
    return lambda s: np.full_like(np.asarray(s, dtype=float), val)


# binary mixture -------------------------------------------------------------

@dataclass
class MixtureConfig:
    """Binary mixture data: diffusion coefficients, species fields, state law.

    c0 is the Fick diffusion coefficient, c0_tilde the reference coefficient
    whose ratio defines the constant mixing parameter kappa = c0 / c0_tilde.
    Species densities rho1_0, rho2_0 sum to the flow density; m1, m2 are the
    molar masses and P0 the constant thermodynamic pressure.
    """
    c0: Coefficient
    c0_tilde: Coefficient
    rho1_0: np.ndarray
    rho2_0: np.ndarray
    m1: float
    m2: float
    P0: float
    R_gas: float = 1.0

    def __post_init__(self):
        self.rho1_0 = np.asarray(self.rho1_0, dtype=float)
        self.rho2_0 = np.asarray(self.rho2_0, dtype=float)
        if self.rho1_0.shape != self.rho2_0.shape:
            raise ValueError("species initial data must share one grid shape")
        for name, arr in (("rho1_0", self.rho1_0), ("rho2_0", self.rho2_0)):
            if float(arr.min()) <= 0.0:
                raise ValueError(f"{name} must be bounded away from zero")
        if self.m1 <= 0.0 or self.m2 <= 0.0 or self.P0 <= 0.0:
            raise ValueError("molar masses and P0 must be positive")
        rho = self.rho0
        lo, hi = float(rho.min()), float(rho.max())
        if hi == lo:
            lo, hi = 0.5 * lo, 2.0 * hi
        s = np.linspace(lo, hi, 257)
        ratio = _as_coefficient(self.c0)(s) / _as_coefficient(self.c0_tilde)(s)
        if ratio.max() - ratio.min() > 1e-12 * abs(ratio.mean()):
            raise ValueError("c0 / c0_tilde must be constant over the density band")
        self._kappa = float(ratio.mean())
        if not 0.0 < self._kappa <= 1.0:
            raise ValueError(f"kappa = c0/c0_tilde = {self._kappa:.4g} outside (0, 1]")

    @property
    def rho0(self) -> np.ndarray:
        return self.rho1_0 + self.rho2_0

    @property
    def Y1_0(self) -> np.ndarray:
        return self.rho1_0 / self.rho0

    @property
    def kappa(self) -> float:
        return self._kappa

    def mean_inverse_molar_mass(self, Y1: np.ndarray) -> np.ndarray:
        return Y1 / self.m1 + (1.0 - Y1) / self.m2

    def temperature(self, rho: np.ndarray, Y1: np.ndarray) -> np.ndarray:
        """Constant-pressure state law P0 = R_gas rho T (Y1/m1 + Y2/m2)."""
        return self.P0 / (self.R_gas * rho * self.mean_inverse_molar_mass(Y1))


def mixture_viscosity_law(c0_tilde: Coefficient, r: float, R: float) -> ViscosityLaw:
    """Flow viscosity induced by the reference diffusion coefficient.

    mu'(s) = c0_tilde(s) / (2 s), so that 2 kappa grad(phi(rho)) equals
    -c0(rho) grad(1/rho) pointwise and the divergence constraint closes.
    """
    if not callable(c0_tilde):
        return log_law(r, R, scale=0.5 * float(c0_tilde))
    coeff = _as_coefficient(c0_tilde)

    def mu_prime(s):
        s = np.asarray(s, dtype=float)
        return coeff(s) / (2.0 * s)

    nodes = np.linspace(0.9 * r, 1.1 * R, 4097)
    mu_nodes = cumulative_trapezoid(mu_prime(nodes), nodes, initial=0.0)
    from scipy.interpolate import PchipInterpolator
    interp = PchipInterpolator(nodes, mu_nodes, extrapolate=True)
    return ViscosityLaw(interp, mu_prime, r, R, label="mixture")


def mixture_constraint_check(state: FluidState, c0: Coefficient) -> float:
    """Relative residual of div u = div(c0(rho) grad(1/rho)), spectral."""
    g = state.grid
    rho = state.rho.values
    u = compute_u(state).components
    div_u = g.div_a(u)
    flux = _as_coefficient(c0)(rho) * g.grad_a(1.0 / rho)
    target = g.div_a(flux)
    scale = g.l2_a(target)
    return g.l2_a(div_u - target) / (scale if scale > 0.0 else 1.0)


def temperature_chain_residual(grid: Grid, rho: np.ndarray, Y1: np.ndarray,
                               config: MixtureConfig) -> float:
    """Relative gap between the temperature-form flux and c0 grad(1/rho).

    Substituting the state law into c0 R/(P0 m_bar) grad T
    + c0 R T / P0 grad(1/m_bar) must reproduce c0 grad(1/rho).
    """
    c0 = _as_coefficient(config.c0)(rho)
    inv_mbar = config.mean_inverse_molar_mass(Y1)
    T = config.temperature(rho, Y1)
    chain = (c0 * config.R_gas * inv_mbar / config.P0 * grid.grad_a(T)
             + c0 * config.R_gas * T / config.P0 * grid.grad_a(inv_mbar))
    direct = c0 * grid.grad_a(1.0 / rho)
    scale = grid.l2_a(direct)
    return grid.l2_a(chain - direct) / (scale if scale > 0.0 else 1.0)


def species_step(grid: Grid, Y1: np.ndarray, rho_s: np.ndarray,
                 rho_coeff: np.ndarray, u: np.ndarray, c0: Coefficient,
                 dt: float):
    """One semi-implicit step of the species system; returns (Y1, rho_s).

    The species mass q1 = rho_s Y1 and the species-side density rho_s are
    advanced with the same divergence-form operator and the same implicit
    constant-coefficient shift, so a constant Y1 is transported exactly and
    the species mass integral is conserved to round-off.
    """
    c0_fn = _as_coefficient(c0)
    q = rho_s * Y1
    rhs_q = (-_div_dealias_a(grid, q * u)
             + _div_dealias_a(grid, c0_fn(rho_coeff) * grid.grad_a(Y1)))
    rhs_r = -_div_dealias_a(grid, rho_s * u)
    # effective diffusivity on q = rho_s Y1 is c0 / rho_s
    c_bar = float(np.mean(c0_fn(rho_coeff))) / float(np.mean(rho_s))
    denom = 1.0 + dt * c_bar * grid.ksq
    shift = dt * c_bar * grid.ksq
    q_h = (grid.fft(q) * (1.0 + shift) + dt * grid.fft(rhs_q)) / denom
    r_h = (grid.fft(rho_s) * (1.0 + shift) + dt * grid.fft(rhs_r)) / denom
    rho_s_new = grid.ifft(r_h)
    return grid.ifft(q_h) / rho_s_new, rho_s_new


def species_bounds_monitor(Y1: np.ndarray, tol: float = 1e-8) -> dict:
    m, M = float(np.min(Y1)), float(np.max(Y1))
    excursion = max(-m, M - 1.0, 0.0)
    return {"min": m, "max": M, "excursion": excursion, "ok": excursion <= tol}


MIXTURE_COLUMNS = ["Y1_min", "Y1_max", "int_rhoY1"]


@dataclass
class MixtureTrajectory:
    times: list = field(default_factory=list)
    series: dict = field(default_factory=dict)
    final_state: Optional[FluidState] = None
    Y1: Optional[np.ndarray] = None
    rho_s: Optional[np.ndarray] = None


def run_mixture(config: MixtureConfig, grid: Grid, w0: np.ndarray, dt: float,
                t_end: float, scheme: str = "imex1",
                mollify_width: Optional[float] = None,
                law_band: Optional[tuple] = None) -> MixtureTrajectory:
    """Coupled run: flow step first, then the species ride on its fields.

    The species see the flow density and velocity through a spectral Gaussian
    mollifier whose default width is one grid cell.
    """
    rho0 = config.rho0
    if rho0.shape != grid.shape:
        raise ValueError("species initial data does not match the grid")
    if law_band is None:
        law_band = (0.5 * float(rho0.min()), 2.0 * float(rho0.max()))
    law = mixture_viscosity_law(config.c0_tilde, *law_band)
    flow_cfg = SolverConfig(grid=grid, dt=dt, t_end=t_end, law=law,
                            kappa=config.kappa, scheme=scheme, mode="mixture",
                            diagnostics_every=0)
    width = grid.dx if mollify_width is None else mollify_width

    w = VectorField(grid, np.asarray(w0, dtype=float))
    if w.divergence_residual() > 1e-12:
        w = leray_project(w)
    state = FluidState(ScalarField(grid, rho0.copy()), w, config.kappa, law,
                       phi=flow_cfg.phi)
    Y1 = config.Y1_0.copy()
    rho_s = rho0.copy()

    traj = MixtureTrajectory()
    traj.series = {"t": [], "Y1_min": [], "Y1_max": [], "int_rhoY1": [],
                   "mass": [], "mass_species_density": []}

    def record(st, Y, rs):
        traj.series["t"].append(st.t)
        traj.series["Y1_min"].append(float(np.min(Y)))
        traj.series["Y1_max"].append(float(np.max(Y)))
        traj.series["int_rhoY1"].append(grid.integrate(rs * Y))
        traj.series["mass"].append(grid.integrate(st.rho.values))
        traj.series["mass_species_density"].append(grid.integrate(rs))

    record(state, Y1, rho_s)
    traj.times.append(state.t)
    n_steps = int(round(t_end / dt))
    for _ in range(n_steps):
        state = step(state, flow_cfg)
        rho_m = grid.gaussian_filter_a(state.rho.values, width)
        u_m = grid.gaussian_filter_a(compute_u(state).components, width)
        Y1, rho_s = species_step(grid, Y1, rho_s, rho_m, u_m, config.c0, dt)
        record(state, Y1, rho_s)
        traj.times.append(state.t)
    traj.final_state = state
    traj.Y1 = Y1
    traj.rho_s = rho_s
    return traj


def density_bound_scan(R_values, d: int, r: float = 1.0) -> list:
    """Admissibility of the constant-ratio mixture law over upper bounds R.

    With c0 = kappa constant the induced viscosity is (1/2) log s, and the
    single-law admissibility check reduces to 1 - (1 - 1/d) log R > 0.
    """
    out = []
    for R in R_values:
        law = log_law(r, float(R), scale=0.5)
        rep = check_important(law, d)
        closed = 1.0 - (1.0 - 1.0 / d) * np.log(float(R)) > 0.0
        out.append({"R": float(R), "satisfied": rep.satisfied,
                    "closed_form": closed, "infimum": rep.infimum})
    return out


# ghost-effect system --------------------------------------------------------

@dataclass
class GhostConfig:
    """Capillary strength c, mixing parameter kappa, viscosity slope mu_bar."""
    capillarity: float
    kappa: float
    mu_bar: float = 1.0

    def __post_init__(self):
        if self.capillarity <= 0.0 or self.kappa <= 0.0 or self.mu_bar <= 0.0:
            raise ValueError("capillarity, kappa, and mu_bar must be positive")
        if self.kappa > 1.0:
            raise ValueError("kappa must lie in (0, 1]")

    def law(self, r: float, R: float) -> ViscosityLaw:
        return linear_law(0.0, self.mu_bar, r, R)

    def solver_config(self, grid: Grid, dt: float, t_end: float, r: float,
                      R: float, **kwargs) -> SolverConfig:
        return SolverConfig(grid=grid, dt=dt, t_end=t_end, law=self.law(r, R),
                            kappa=self.kappa, mode="ghost",
                            capillarity=self.capillarity, **kwargs)


def ghost_capillary(rho: ScalarField, c: float, floor: float = 0.0) -> VectorField:
    """Capillary force -c div(rho grad grad log rho), direct assembly."""
    if float(np.min(rho.values)) <= floor:
        raise ValueError("density at or below the positivity floor")
    return VectorField(rho.grid, ghost_capillary_a(rho.grid, rho.values, c))


def bohm_capillary(rho: ScalarField, c: float, floor: float = 0.0) -> VectorField:
    """The same force as -2 c rho grad(lap(sqrt rho) / sqrt rho)."""
    if float(np.min(rho.values)) <= floor:
        raise ValueError("density at or below the positivity floor")
    g = rho.grid
    s = np.sqrt(rho.values)
    q = g.laplacian_a(s) / s
    force = -2.0 * c * rho.values * g.grad_a(g.dealias_a(q))
    return VectorField(g, g.dealias_a(force))


def bohm_residual(rho: ScalarField, c: float = 1.0) -> float:
    """Relative gap between the two capillary assemblies."""
    g = rho.grid
    a = ghost_capillary(rho, c).components
    b = bohm_capillary(rho, c).components
    scale = g.l2_a(a)
    return g.l2_a(a - b) / (scale if scale > 0.0 else 1.0)


def _require_ghost_law(state: FluidState, config: GhostConfig):
    s = np.linspace(state.law.r, state.law.R, 17)
    gap = np.max(np.abs(np.asarray(state.law.mu(s), dtype=float)
                        - config.mu_bar * s))
    if gap > 1e-12 * config.mu_bar * state.law.R:
        raise ValueError("ghost entropy needs the proportional viscosity law")


def ghost_entropy(state: FluidState, config: GhostConfig):
    """Augmented entropy and budget for the capillary system.

    E = int rho (|w|^2/2 + (kappa (1-kappa) mu_bar^2 + c) |2 grad log rho|^2/2)
    dissipated by 2(1-kappa) mu_bar int rho |D(u)|^2
    + 2 kappa mu_bar int rho |A(u)|^2
    + 8 c kappa mu_bar int rho |hess(log rho)|^2; the capillary term sits in
    the D_div slot because the divergence-weighted term vanishes identically
    for a proportional viscosity law.
    """
    from .diagnostics import EntropyReport

    _require_ghost_law(state, config)
    g = state.grid
    d = g.d
    rho = state.rho.values
    w = state.w.components
    kappa = state.kappa
    mu_bar = config.mu_bar
    c = config.capillarity

    L = np.log(rho)
    grad_L = g.grad_a(L)
    u = w - 2.0 * kappa * mu_bar * grad_L

    wsq = np.sum(w ** 2, axis=0)
    glsq = np.sum(grad_L ** 2, axis=0)
    weight = kappa * (1.0 - kappa) * mu_bar ** 2 + c
    E = g.integrate(rho * (0.5 * wsq + 2.0 * weight * glsq))

    Gu = _grad_tensor_a(g, u)
    Du = 0.5 * (Gu + Gu.transpose(1, 0, *range(2, 2 + d)))
    Au = 0.5 * (Gu - Gu.transpose(1, 0, *range(2, 2 + d)))
    D_dev = 2.0 * (1.0 - kappa) * mu_bar * g.integrate(rho * np.sum(Du ** 2, axis=(0, 1)))
    D_rot = 2.0 * kappa * mu_bar * g.integrate(rho * np.sum(Au ** 2, axis=(0, 1)))

    Lh = g.fft(L)
    H = g.ifft(np.stack([np.stack([-g.k[i] * g.k[j] * Lh for j in range(d)])
                         for i in range(d)]))
    D_cap = 8.0 * c * kappa * mu_bar * g.integrate(rho * np.sum(H ** 2, axis=(0, 1)))

    return EntropyReport(t=state.t, E_kappa=E, D_rot=D_rot, D_dev=D_dev,
                         D_div=D_cap, decomposition={"capillary": D_cap})


def ghost_row_extras(state: FluidState, config: GhostConfig) -> dict:
    """Extra diagnostics columns for ghost runs."""
    rep = ghost_entropy(state, config)
    return {"bohm_residual": bohm_residual(state.rho, config.capillarity),
            "ghost_entropy": rep.E_kappa}


GHOST_COLUMNS = ["bohm_residual", "ghost_entropy"]
