"""IMEX pseudo-spectral time stepping for the effective-velocity system.

State is (rho, w) with an optional auxiliary drift field v.  The mass flux
F = rho*w - 2*kappa*grad(mu(rho)) drives every transport term, which is what
makes the energy balance close at the discrete level.  Stiff diffusion is
linearized about the mean density and treated implicitly; everything else is
explicit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .constitutive import PotentialLaw, ViscosityLaw, phi_from_mu
from .fields import Grid, ScalarField, VectorField, leray_project

log = logging.getLogger(__name__)

MODES = ("augmented", "reduced", "incompressible_ns", "ks_limit", "ghost", "mixture")


class SolverAbort(RuntimeError):
    """Raised when the state leaves the physically meaningful regime."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}


@dataclass
class Sources:
    """Forcing hooks, all optional; each maps (grid, t) to an array.

    s_rho enters the density equation, s_rho_w the momentum equation before
    projection, s_w the velocity equation after division by rho.
    """
    s_rho: Optional[Callable] = None
    s_rho_w: Optional[Callable] = None
    s_w: Optional[Callable] = None


@dataclass
class SolverConfig:
    grid: Grid
    dt: float
    t_end: float
    law: ViscosityLaw
    kappa: float = 0.5
    scheme: str = "imex1"
    mode: str = "reduced"
    epsilon: float = 0.0
    mollify_width: float = 0.0
    capillarity: float = 0.0
    phi: Optional[PotentialLaw] = None
    lambda_law: Optional[Callable] = None
    sources: Optional[Sources] = None
    save_every: int = 0
    diagnostics_every: int = 1
    rho_floor_factor: float = 0.1
    dump_path: Optional[str] = None

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.scheme not in ("imex1", "imex2"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError("kappa must lie in [0, 1]")
        if self.phi is None:
            s0 = 1.0 if self.law.r <= 1.0 <= self.law.R else self.law.r
            self.phi = phi_from_mu(self.law, s0)


class FluidState:
    """Density, solenoidal velocity w, optional auxiliary field v."""

    def __init__(self, rho: ScalarField, w: VectorField, kappa: float,
                 law: ViscosityLaw, phi: Optional[PotentialLaw] = None,
                 v: Optional[VectorField] = None, t: float = 0.0):
        self.rho = rho
        self.w = w
        self.v = v
        self.t = float(t)
        self.kappa = float(kappa)
        self.law = law
        if phi is None:
            s0 = 1.0 if law.r <= 1.0 <= law.R else law.r
            phi = phi_from_mu(law, s0)
        self.phi = phi
        self._u = None

    @property
    def grid(self) -> Grid:
        return self.rho.grid

    def copy(self) -> "FluidState":
        g = self.grid
        st = FluidState(ScalarField(g, self.rho.values.copy()),
                        VectorField(g, self.w.components.copy(), solenoidal=self.w.solenoidal),
                        self.kappa, self.law, self.phi,
                        v=None if self.v is None else VectorField(g, self.v.components.copy()),
                        t=self.t)
        return st


def compute_u(state: FluidState) -> VectorField:
    """Physical velocity u = w - 2 kappa grad(phi(rho))."""
    if state._u is not None:
        return state._u
    g = state.grid
    phi_vals = np.asarray(state.phi.phi(state.rho.values), dtype=float)
    u = state.w.components - 2.0 * state.kappa * g.grad_a(phi_vals)
    state._u = VectorField(g, u)
    return state._u


# array-level assembly ------------------------------------------------------

def _grad_tensor_a(grid: Grid, u: np.ndarray) -> np.ndarray:
    """G[i, j] = d_j u_i for a stacked vector array."""
    uh = grid.fft(u)
    gh = np.stack([np.stack([1j * grid.k[j] * uh[i] for j in range(grid.d)])
                   for i in range(grid.d)])
    return grid.ifft(gh)


def _tensor_div_a(grid: Grid, T: np.ndarray, truncate: bool = True) -> np.ndarray:
    """out[i] = d_j T[i, j], optionally truncating the product spectrum."""
    Th = grid.fft(T)
    out_h = sum(1j * grid.k[j] * Th[:, j] for j in range(grid.d))
    if truncate:
        out_h = out_h * grid.dealias_mask
    return grid.ifft(out_h)


def _div_dealias_a(grid: Grid, comps: np.ndarray) -> np.ndarray:
    ch = grid.fft(comps)
    out_h = sum(1j * grid.k[j] * ch[j] for j in range(grid.d))
    return grid.ifft(out_h * grid.dealias_mask)


def _mass_flux(grid, rho, w, kappa, law, mollify_width):
    """F = rho * [w]_delta - 2 kappa grad(mu(rho)); transport uses F everywhere."""
    w_adv = grid.gaussian_filter_a(w, mollify_width) if mollify_width > 0.0 else w
    grad_mu = grid.grad_a(np.asarray(law.mu(rho), dtype=float))
    return rho * w_adv - 2.0 * kappa * grad_mu


def _continuity_rhs_a(grid, rho, w, kappa, law, mollify_width=0.0, s_rho=None):
    F = _mass_flux(grid, rho, w, kappa, law, mollify_width)
    drho = -_div_dealias_a(grid, F)
    if s_rho is not None:
        drho = drho + s_rho
    return drho, F


@dataclass
class _Params:
    kappa: float
    law: ViscosityLaw
    phi: PotentialLaw
    epsilon: float = 0.0
    mollify_width: float = 0.0
    capillarity: float = 0.0
    mode: str = "reduced"
    sources: Optional[Sources] = None
    rho_floor: float = 0.0
    capture: Optional[dict] = None


def _check_rho(grid, rho, p: _Params):
    m = float(np.min(rho))
    if not np.isfinite(m):
        raise SolverAbort("non-finite density", dump={"rho": rho})
    if m <= p.rho_floor:
        raise SolverAbort(
            f"density {m:.4g} fell below the positivity floor {p.rho_floor:.4g}",
            dump={"rho": rho})


def _assemble_general(grid, rho, w, v, t, p: _Params):
    """Full rhs (drho, dw, dv) for the coupled (rho, w, v) form.

    In reduced-type modes v is replaced by 2 grad(phi(rho)) and dv is None.
    """
    _check_rho(grid, rho, p)
    kappa = p.kappa
    src = p.sources or Sources()
    s_rho = src.s_rho(grid, t) if src.s_rho else None

    drho, F = _continuity_rhs_a(grid, rho, w, kappa, p.law, p.mollify_width, s_rho)

    mu = np.asarray(p.law.mu(rho), dtype=float)
    G = _grad_tensor_a(grid, w)  # G[i,j] = d_j w_i
    Gt = G.transpose(1, 0, *range(2, 2 + grid.d))
    D = 0.5 * (G + Gt)
    A_w = 0.5 * (G - Gt)

    if p.mode == "augmented":
        v_arr = v
    else:
        phi_vals = np.asarray(p.phi.phi(rho), dtype=float)
        v_arr = 2.0 * grid.grad_a(phi_vals)

    # momentum fluxes at the rho*w level
    P = np.stack([np.stack([F[j] * w[i] for j in range(grid.d)]) for i in range(grid.d)])
    momentum = -_tensor_div_a(grid, P)
    visc_flux = 2.0 * (1.0 - kappa) * mu * D + 2.0 * kappa * mu * A_w
    momentum = momentum + _tensor_div_a(grid, visc_flux)
    if kappa * (1.0 - kappa) != 0.0:
        Gv = _grad_tensor_a(grid, v_arr)
        momentum = momentum - 2.0 * kappa * (1.0 - kappa) * _tensor_div_a(grid, mu * Gv)

    if p.epsilon > 0.0:
        wh = grid.fft(w)
        momentum = momentum - p.epsilon * grid.ifft(grid.ksq ** 2 * wh)
        gradsq = np.sum(G * G, axis=(0, 1))
        momentum = momentum + p.epsilon * _tensor_div_a(grid, (1.0 + gradsq) * G)

    if p.mode == "ghost" and p.capillarity != 0.0:
        momentum = momentum + ghost_capillary_a(grid, rho, p.capillarity)

    if src.s_rho_w:
        momentum = momentum + src.s_rho_w(grid, t)

    if p.capture is not None:
        p.capture["momentum"] = momentum
    momentum = grid.leray_a(momentum)
    dw = (momentum - w * drho) / rho
    if src.s_w:
        dw = dw + src.s_w(grid, t)

    dv = None
    if p.mode == "augmented":
        Gv = _grad_tensor_a(grid, v_arr)
        Pv = np.stack([np.stack([F[j] * v_arr[i] for j in range(grid.d)]) for i in range(grid.d)])
        rhs_v_arr = -_tensor_div_a(grid, Pv)
        rhs_v_arr = rhs_v_arr + 2.0 * kappa * _tensor_div_a(grid, mu * Gv)
        mup_rho = np.asarray(p.law.mu_prime(rho), dtype=float) * rho - mu
        div_v = grid.div_a(v_arr)
        rhs_v_arr = rhs_v_arr + 2.0 * kappa * grid.grad_a(
            grid.dealias_a(mup_rho * div_v))
        # transpose-gradient coupling: d_j (mu d_i w_j)
        rhs_v_arr = rhs_v_arr - 2.0 * _tensor_div_a(grid, mu * Gt)
        dv = (rhs_v_arr - v_arr * drho) / rho
    return drho, dw, dv


def ghost_capillary_a(grid: Grid, rho: np.ndarray, c: float) -> np.ndarray:
    """Capillary force -c Div(rho grad grad log rho)."""
    lh = grid.fft(np.log(rho))
    H = grid.ifft(np.stack([np.stack([-grid.k[i] * grid.k[j] * lh
                                      for j in range(grid.d)])
                            for i in range(grid.d)]))
    return -c * _tensor_div_a(grid, rho * H)


def _assemble_ns(grid, rho, w, t, p: _Params):
    """Variable-density incompressible Navier-Stokes; independent endpoint path."""
    _check_rho(grid, rho, p)
    src = p.sources or Sources()
    drho = -_div_dealias_a(grid, rho * w)
    if src.s_rho:
        drho = drho + src.s_rho(grid, t)
    mu = np.asarray(p.law.mu(rho), dtype=float)
    G = _grad_tensor_a(grid, w)
    D = 0.5 * (G + G.transpose(1, 0, *range(2, 2 + grid.d)))
    P = np.stack([np.stack([rho * w[j] * w[i] for j in range(grid.d)])
                  for i in range(grid.d)])
    momentum = -_tensor_div_a(grid, P) + 2.0 * _tensor_div_a(grid, mu * D)
    if src.s_rho_w:
        momentum = momentum + src.s_rho_w(grid, t)
    if p.capture is not None:
        p.capture["momentum"] = momentum
    momentum = grid.leray_a(momentum)
    dw = (momentum - w * drho) / rho
    if src.s_w:
        dw = dw + src.s_w(grid, t)
    return drho, dw, None


def _assemble_ks(grid, rho, w, t, p: _Params):
    """Rotational-stress endpoint system; independent endpoint path."""
    _check_rho(grid, rho, p)
    src = p.sources or Sources()
    grad_mu = grid.grad_a(np.asarray(p.law.mu(rho), dtype=float))
    F = rho * w - 2.0 * grad_mu
    drho = -_div_dealias_a(grid, F)
    if src.s_rho:
        drho = drho + src.s_rho(grid, t)
    mu = np.asarray(p.law.mu(rho), dtype=float)
    G = _grad_tensor_a(grid, w)
    A_w = 0.5 * (G - G.transpose(1, 0, *range(2, 2 + grid.d)))
    P = np.stack([np.stack([F[j] * w[i] for j in range(grid.d)])
                  for i in range(grid.d)])
    momentum = -_tensor_div_a(grid, P) + 2.0 * _tensor_div_a(grid, mu * A_w)
    if src.s_rho_w:
        momentum = momentum + src.s_rho_w(grid, t)
    if p.capture is not None:
        p.capture["momentum"] = momentum
    momentum = grid.leray_a(momentum)
    dw = (momentum - w * drho) / rho
    if src.s_w:
        dw = dw + src.s_w(grid, t)
    return drho, dw, None


def _rhs(grid, rho, w, v, t, p: _Params):
    if p.mode == "incompressible_ns":
        return _assemble_ns(grid, rho, w, t, p)
    if p.mode == "ks_limit":
        return _assemble_ks(grid, rho, w, t, p)
    return _assemble_general(grid, rho, w, v, t, p)


# field-level wrappers ------------------------------------------------------

def rhs_continuity(rho: ScalarField, w: VectorField, kappa: float,
                   law: ViscosityLaw, mollify_width: float = 0.0) -> ScalarField:
    drho, _ = _continuity_rhs_a(rho.grid, rho.values, w.components, kappa, law,
                                mollify_width)
    return ScalarField(rho.grid, drho)


def _params_from_state(state: FluidState, epsilon=0.0, mollify_width=0.0,
                       mode=None, capillarity=0.0, sources=None) -> _Params:
    if mode is None:
        mode = "augmented" if state.v is not None else "reduced"
    return _Params(kappa=state.kappa, law=state.law, phi=state.phi,
                   epsilon=epsilon, mollify_width=mollify_width,
                   capillarity=capillarity, mode=mode, sources=sources,
                   rho_floor=0.1 * state.law.r)


def rhs_w(state: FluidState, epsilon: float = 0.0, mollify_width: float = 0.0,
          mode: Optional[str] = None, capillarity: float = 0.0) -> VectorField:
    p = _params_from_state(state, epsilon, mollify_width, mode, capillarity)
    v = state.v.components if state.v is not None else None
    _, dw, _ = _rhs(state.grid, state.rho.values, state.w.components, v, state.t, p)
    return VectorField(state.grid, dw)


def rhs_v(state: FluidState, mollify_width: float = 0.0) -> VectorField:
    if state.v is None:
        raise ValueError("rhs_v needs the auxiliary field v")
    p = _params_from_state(state, mollify_width=mollify_width, mode="augmented")
    _, _, dv = _rhs(state.grid, state.rho.values, state.w.components,
                    state.v.components, state.t, p)
    return VectorField(state.grid, dv)


# time stepping -------------------------------------------------------------

_GAMMA = 1.0 - 1.0 / np.sqrt(2.0)
_DELTA = 1.0 - 1.0 / (2.0 * _GAMMA)


def _implicit_symbols(grid, rho_bar, config: SolverConfig):
    """Linearized diffusion symbols about the mean density."""
    mup = float(config.law.mu_prime(rho_bar))
    mu = float(config.law.mu(rho_bar))
    L_rho = -2.0 * config.kappa * mup * grid.ksq
    L_w = -(mu / rho_bar) * grid.ksq - (config.epsilon / rho_bar) * grid.ksq ** 2
    L_v = -2.0 * config.kappa * mup * grid.ksq
    return L_rho, L_w, L_v


def _params_from_config(config: SolverConfig) -> _Params:
    return _Params(kappa=config.kappa, law=config.law, phi=config.phi,
                   epsilon=config.epsilon, mollify_width=config.mollify_width,
                   capillarity=config.capillarity, mode=config.mode,
                   sources=config.sources,
                   rho_floor=config.rho_floor_factor * config.law.r)


def _check_finite(grid, rho, w):
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(w))):
        raise SolverAbort("non-finite state after step", dump={"rho": rho})


def step(state: FluidState, config: SolverConfig) -> FluidState:
    """Advance one time step; w is re-projected after every implicit solve."""
    g = state.grid
    p = _params_from_config(config)
    dt = config.dt
    rho, w = state.rho.values, state.w.components
    v = state.v.components if state.v is not None else None
    has_v = config.mode == "augmented"
    if has_v and v is None:
        raise ValueError("augmented mode needs an initial v")

    rho_bar = float(np.mean(rho))
    L_rho, L_w, L_v = _implicit_symbols(g, rho_bar, config)

    def explicit(rho_a, w_a, v_a, t):
        drho, dw, dv = _rhs(g, rho_a, w_a, v_a, t, p)
        e_rho = g.fft(drho) - L_rho * g.fft(rho_a)
        e_w = g.fft(dw) - L_w * g.fft(w_a)
        e_v = None
        if has_v:
            e_v = g.fft(dv) - L_v * g.fft(v_a)
        return e_rho, e_w, e_v

    rho_h, w_h = g.fft(rho), g.fft(w)
    v_h = g.fft(v) if has_v else None

    if config.scheme == "imex1":
        e_rho, e_w, e_v = explicit(rho, w, v, state.t)
        rho_h = (rho_h + dt * e_rho) / (1.0 - dt * L_rho)
        w_h = g.leray_hat((w_h + dt * e_w) / (1.0 - dt * L_w))
        if has_v:
            v_h = (v_h + dt * e_v) / (1.0 - dt * L_v)
    else:
        gm, de = _GAMMA, _DELTA
        e1_rho, e1_w, e1_v = explicit(rho, w, v, state.t)
        r1_h = (rho_h + gm * dt * e1_rho) / (1.0 - gm * dt * L_rho)
        w1_h = g.leray_hat((w_h + gm * dt * e1_w) / (1.0 - gm * dt * L_w))
        v1_h = None
        rho1, w1 = g.ifft(r1_h), g.ifft(w1_h)
        v1 = None
        if has_v:
            v1_h = (v_h + gm * dt * e1_v) / (1.0 - gm * dt * L_v)
            v1 = g.ifft(v1_h)
        e2_rho, e2_w, e2_v = explicit(rho1, w1, v1, state.t + gm * dt)
        rho_h = (rho_h + dt * (de * e1_rho + (1.0 - de) * e2_rho)
                 + (1.0 - gm) * dt * L_rho * r1_h) / (1.0 - gm * dt * L_rho)
        w_h = g.leray_hat((w_h + dt * (de * e1_w + (1.0 - de) * e2_w)
                           + (1.0 - gm) * dt * L_w * w1_h) / (1.0 - gm * dt * L_w))
        if has_v:
            v_h = (v_h + dt * (de * e1_v + (1.0 - de) * e2_v)
                   + (1.0 - gm) * dt * L_v * v1_h) / (1.0 - gm * dt * L_v)

    rho_new, w_new = g.ifft(rho_h), g.ifft(w_h)
    _check_finite(g, rho_new, w_new)
    new = FluidState(ScalarField(g, rho_new),
                     VectorField(g, w_new, solenoidal=True),
                     state.kappa, state.law, state.phi,
                     v=VectorField(g, g.ifft(v_h)) if has_v else None,
                     t=state.t + dt)
    return new


def cfl_estimate(state: FluidState, config: SolverConfig) -> dict:
    """Advective time-step estimate; diffusion is implicit and not limiting."""
    g = state.grid
    u = compute_u(state)
    speed = float(np.max(np.sqrt(np.sum(u.components ** 2, axis=0))))
    dt_adv = g.dx / speed if speed > 0.0 else np.inf
    return {"dt": config.dt, "dt_advective": dt_adv, "ok": config.dt <= dt_adv}


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    series: dict = field(default_factory=dict)
    final_state: Optional[FluidState] = None


def run(config: SolverConfig, initial: FluidState,
        on_step: Optional[Callable] = None) -> Trajectory:
    """Integrate to t_end, recording per-step diagnostics.

    If the initial w is not solenoidal it is projected with a logged warning.
    The optional on_step callback receives every recorded state in order,
    starting with the initial one.
    """
    from . import diagnostics  # deferred: diagnostics consumes solver states

    g = config.grid
    state = initial.copy()
    if state.w.divergence_residual() > 1e-12:
        log.warning("initial velocity not solenoidal (residual %.3g); projecting",
                    state.w.divergence_residual())
        state.w = leray_project(state.w)
    if config.mode == "augmented" and state.v is None:
        phi_vals = np.asarray(config.phi.phi(state.rho.values), dtype=float)
        state.v = VectorField(g, 2.0 * g.grad_a(phi_vals))

    cfl = cfl_estimate(state, config)
    if not cfl["ok"]:
        log.warning("dt=%.3g exceeds the advective estimate %.3g",
                    cfl["dt"], cfl["dt_advective"])

    n_steps = int(round(config.t_end / config.dt))
    traj = Trajectory()
    traj.series = {"t": [], "mass": [], "min_rho": [], "max_rho": [],
                   "div_w_residual": [], "grad_rho_weighted": [],
                   "grad_rho_sq": [], "identification_error": []}

    def record(st):
        traj.series["t"].append(st.t)
        traj.series["mass"].append(g.integrate(st.rho.values))
        traj.series["min_rho"].append(float(np.min(st.rho.values)))
        traj.series["max_rho"].append(float(np.max(st.rho.values)))
        traj.series["div_w_residual"].append(st.w.divergence_residual())
        mup = np.asarray(config.law.mu_prime(st.rho.values), dtype=float)
        grad_rho = g.grad_a(st.rho.values)
        grad_rho_sq = np.sum(grad_rho ** 2, axis=0)
        traj.series["grad_rho_weighted"].append(g.integrate(mup * grad_rho_sq))
        traj.series["grad_rho_sq"].append(g.integrate(grad_rho_sq))
        if st.v is not None:
            phi_now = np.asarray(config.phi.phi(st.rho.values), dtype=float)
            gap = st.v.components - 2.0 * g.grad_a(phi_now)
            traj.series["identification_error"].append(g.l2_a(gap))
        else:
            traj.series["identification_error"].append(0.0)
        if config.diagnostics_every > 0:
            traj.reports.append(diagnostics.entropy_report(st, config))
        if on_step is not None:
            on_step(st)

    record(state)
    traj.states.append(state.copy())
    traj.times.append(state.t)
    try:
        for i in range(n_steps):
            state = step(state, config)
            record(state)
            if config.save_every > 0 and (i + 1) % config.save_every == 0:
                traj.states.append(state.copy())
                traj.times.append(state.t)
    except SolverAbort as exc:
        if config.dump_path and "rho" in exc.dump:
            from .fields import write_snapshot
            write_snapshot(config.dump_path, g, {"rho": exc.dump["rho"]}, t=state.t)
        raise
    if traj.times[-1] != state.t:
        traj.states.append(state.copy())
        traj.times.append(state.t)
    traj.final_state = state
    return traj


# pressure recovery ---------------------------------------------------------

def recover_pressure(state: FluidState, config: Optional[SolverConfig] = None,
                     lambda_law: Optional[Callable] = None):
    """Effective pressure from the unprojected momentum residual.

    Solves the spectral Poisson problem div(grad pi1) = div(momentum rhs),
    normalized to zero mean.  When a bulk-viscosity law is supplied the raw
    pressure pi is returned as well.
    """
    g = state.grid
    if config is not None:
        p = _params_from_config(config)
    else:
        p = _params_from_state(state)
    rho, w = state.rho.values, state.w.components
    v = state.v.components if state.v is not None else None

    momentum = _unprojected_momentum(g, rho, w, v, state.t, p)
    pi1 = g.solve_poisson_a(g.div_a(momentum))
    pi1_f = ScalarField(g, pi1)
    if lambda_law is None:
        return pi1_f
    mu = np.asarray(state.law.mu(rho), dtype=float)
    mup = np.asarray(state.law.mu_prime(rho), dtype=float)
    div_u = g.div_a(compute_u(state).components)
    lam = np.asarray(lambda_law(rho), dtype=float)
    pi = pi1 - 2.0 * (mup * rho - mu) * div_u + lam * div_u
    return pi1_f, ScalarField(g, pi - np.mean(pi))


def _unprojected_momentum(grid, rho, w, v, t, p: _Params):
    """Momentum rhs before the solenoidal projection (for pressure recovery)."""
    p.capture = {}
    p.rho_floor = 0.0
    _rhs(grid, rho, w, v, t, p)
    momentum = p.capture["momentum"]
    p.capture = None
    return momentum
