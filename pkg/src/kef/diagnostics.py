"""Entropy, dissipation budgets, pointwise identities, and run monitors.

The mixed-velocity entropy E_kappa = int rho (|w|^2/2 + (1-kappa) kappa
|2 grad phi|^2 / 2) is the quantity the scheme is designed to dissipate; the
budget is assembled in two algebraically equivalent forms as a cross-check.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .fields import Grid, ScalarField, VectorField, l4, linf

DIAGNOSTIC_COLUMNS = ["t", "E_kappa", "D_rot", "D_dev", "D_div", "eps_budget",
                      "min_rho", "max_rho", "div_w_residual", "mass",
                      "identification_error"]


@dataclass
class EntropyReport:
    t: float
    E_kappa: float
    D_rot: float
    D_dev: float
    D_div: float
    eps_budget: float = 0.0
    budget_alt: float = 0.0
    decomposition: dict = field(default_factory=dict)

    @property
    def budget(self) -> float:
        return self.D_rot + self.D_dev + self.D_div


def _grad_tensor(grid: Grid, u: np.ndarray) -> np.ndarray:
    uh = grid.fft(u)
    gh = np.stack([np.stack([1j * grid.k[j] * uh[i] for j in range(grid.d)])
                   for i in range(grid.d)])
    return grid.ifft(gh)


def _state_pieces(state):
    g = state.grid
    rho = state.rho.values
    w = state.w.components
    kappa = state.kappa
    phi_vals = np.asarray(state.phi.phi(rho), dtype=float)
    two_grad_phi = 2.0 * g.grad_a(phi_vals)
    u = w - kappa * two_grad_phi
    return g, rho, w, kappa, two_grad_phi, u


def kappa_entropy(state, epsilon: float = 0.0) -> EntropyReport:
    """Entropy value plus the itemized dissipation terms at this instant."""
    g, rho, w, kappa, tgp, u = _state_pieces(state)
    d = g.d
    mu = np.asarray(state.law.mu(rho), dtype=float)
    mup = np.asarray(state.law.mu_prime(rho), dtype=float)

    wsq = np.sum(w ** 2, axis=0)
    tgp_sq = np.sum(tgp ** 2, axis=0)
    E = g.integrate(rho * (0.5 * wsq + 0.5 * (1.0 - kappa) * kappa * tgp_sq))

    # two-velocity form of the same density
    upt = u + tgp
    E_alt = g.integrate(rho * 0.5 * ((1.0 - kappa) * np.sum(u ** 2, axis=0)
                                     + kappa * np.sum(upt ** 2, axis=0)))

    Gw = _grad_tensor(g, w)
    Aw = 0.5 * (Gw - Gw.transpose(1, 0, *range(2, 2 + d)))
    D_rot = 2.0 * kappa * g.integrate(mu * np.sum(Aw ** 2, axis=(0, 1)))

    Gu = _grad_tensor(g, u)
    Du = 0.5 * (Gu + Gu.transpose(1, 0, *range(2, 2 + d)))
    div_u = np.trace(Du, axis1=0, axis2=1)
    dev = Du.copy()
    for i in range(d):
        dev[i, i] -= div_u / d
    D_dev = 2.0 * (1.0 - kappa) * g.integrate(mu * np.sum(dev ** 2, axis=(0, 1)))

    weight = (1.0 - d) / d * mu + mup * rho
    D_div = 2.0 * (1.0 - kappa) * g.integrate(weight * div_u ** 2)

    eps_budget = 0.0
    if epsilon > 0.0:
        lap_w = g.ifft(-g.ksq * g.fft(w))
        gradsq = np.sum(Gw ** 2, axis=(0, 1))
        eps_budget = epsilon * g.integrate(np.sum(lap_w ** 2, axis=0)
                                           + (1.0 + gradsq) * gradsq)

    return EntropyReport(t=state.t, E_kappa=E, D_rot=D_rot, D_dev=D_dev,
                         D_div=D_div, eps_budget=eps_budget,
                         decomposition={"two_velocity": E_alt})


def dissipation_budget(state, epsilon: float = 0.0) -> EntropyReport:
    """Budget in both assemblies; budget_alt holds the unsplit form."""
    rep = kappa_entropy(state, epsilon)
    g, rho, w, kappa, tgp, u = _state_pieces(state)
    d = g.d
    mu = np.asarray(state.law.mu(rho), dtype=float)
    mup = np.asarray(state.law.mu_prime(rho), dtype=float)
    Gu = _grad_tensor(g, u)
    Du = 0.5 * (Gu + Gu.transpose(1, 0, *range(2, 2 + d)))
    Au = 0.5 * (Gu - Gu.transpose(1, 0, *range(2, 2 + d)))
    div_u = np.trace(Du, axis1=0, axis2=1)
    rep.budget_alt = (2.0 * (1.0 - kappa) * g.integrate(mu * np.sum(Du ** 2, axis=(0, 1)))
                      + 2.0 * kappa * g.integrate(mu * np.sum(Au ** 2, axis=(0, 1)))
                      + 2.0 * (1.0 - kappa) * g.integrate((mup * rho - mu) * div_u ** 2))
    return rep


def entropy_report(state, config=None) -> EntropyReport:
    eps = config.epsilon if config is not None else 0.0
    return kappa_entropy(state, epsilon=eps)


def max_principle_monitor(traj, r: float, R: float, tol_factor: float = 1e-6) -> dict:
    """Check the density band along a run; excursion is the worst violation."""
    mins = np.asarray(traj.series["min_rho"], dtype=float)
    maxs = np.asarray(traj.series["max_rho"], dtype=float)
    excursion = max(float(np.max(r - mins, initial=0.0)),
                    float(np.max(maxs - R, initial=0.0)))
    tol = tol_factor * (R - r)
    return {"excursion": excursion, "tolerance": tol, "ok": excursion <= tol,
            "min_rho": float(mins.min()), "max_rho": float(maxs.max())}


def bounds_monitor(state, r: float, R: float, tol_factor: float = 1e-6) -> dict:
    m = float(np.min(state.rho.values))
    M = float(np.max(state.rho.values))
    excursion = max(r - m, M - R, 0.0)
    tol = tol_factor * (R - r)
    return {"excursion": excursion, "tolerance": tol, "ok": excursion <= tol,
            "min_rho": m, "max_rho": M}


# pointwise identities -------------------------------------------------------

def split_identity_residual(grid: Grid, u: np.ndarray, m: np.ndarray) -> float:
    """Relative residual of int m |D|^2 = int m |D - (div/d) I|^2 + int (m/d) div^2."""
    d = grid.d
    G = _grad_tensor(grid, u)
    D = 0.5 * (G + G.transpose(1, 0, *range(2, 2 + d)))
    div_u = np.trace(D, axis1=0, axis2=1)
    full = grid.integrate(m * np.sum(D ** 2, axis=(0, 1)))
    dev = D.copy()
    for i in range(d):
        dev[i, i] -= div_u / d
    split = (grid.integrate(m * np.sum(dev ** 2, axis=(0, 1)))
             + grid.integrate(m / d * div_u ** 2))
    scale = abs(full) if full != 0.0 else 1.0
    return abs(full - split) / scale


def renormalized_continuity_residual(state) -> float:
    """Chain rule through the density equation vs the direct flux form."""
    from .solver import compute_u, rhs_continuity

    g, rho, w, kappa, tgp, u_arr = _state_pieces(state)
    mu = np.asarray(state.law.mu(rho), dtype=float)
    mup = np.asarray(state.law.mu_prime(rho), dtype=float)
    drho = rhs_continuity(state.rho, state.w, kappa, state.law).values
    chain = mup * drho
    u = compute_u(state).components
    div_u = g.div_a(u)
    direct = -g.div_a(mu * u) - (mup * rho - mu) * div_u
    scale = g.l2_a(direct) if g.l2_a(direct) > 0.0 else 1.0
    return g.l2_a(g.dealias_a(chain - direct)) / scale


def gagliardo_nirenberg_ratio(f: ScalarField) -> float:
    """||grad f||_L4^2 / (||f||_inf ||f||_H2); finite for smooth f."""
    g = f.grid
    grad_f = VectorField(g, g.grad_a(f.values))
    num = l4(grad_f) ** 2
    fh = f.hat
    h2 = np.sqrt(np.sum(g._parseval_weight * (1.0 + g.ksq) ** 2 * np.abs(fh) ** 2)
                 * g.length ** g.d / g.n ** (2 * g.d))
    den = linf(f) * h2
    return num / den if den > 0.0 else np.inf


def identity_suite(state) -> dict:
    """Residuals of the pointwise identities the entropy estimate rests on."""
    g, rho, w, kappa, tgp, u = _state_pieces(state)
    mu = np.asarray(state.law.mu(rho), dtype=float)
    rep = kappa_entropy(state)
    e_scale = abs(rep.E_kappa) if rep.E_kappa != 0.0 else 1.0
    return {
        "split_identity": split_identity_residual(g, u, mu),
        "two_velocity": abs(rep.E_kappa - rep.decomposition["two_velocity"]) / e_scale,
        "renormalized_continuity": renormalized_continuity_residual(state),
        "gn_ratio": gagliardo_nirenberg_ratio(state.rho),
    }


# CSV stream -----------------------------------------------------------------

class DiagnosticsWriter:
    """One CSV row per step with a fixed column order.

    Values are written with 17 significant digits so replays reproduce rows
    exactly.
    """

    def __init__(self, path, extra_columns=()):
        self.columns = DIAGNOSTIC_COLUMNS + list(extra_columns)
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(self.columns)

    def write_row(self, values: dict):
        row = []
        for c in self.columns:
            val = values.get(c, "")
            if isinstance(val, float):
                row.append(format(val, ".17g"))
            else:
                row.append(val)
        self._writer.writerow(row)

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def row_from_report(rep: EntropyReport, series_entry: dict,
                    identification_error: float = 0.0) -> dict:
    return {"t": rep.t, "E_kappa": rep.E_kappa, "D_rot": rep.D_rot,
            "D_dev": rep.D_dev, "D_div": rep.D_div, "eps_budget": rep.eps_budget,
            "min_rho": series_entry.get("min_rho", 0.0),
            "max_rho": series_entry.get("max_rho", 0.0),
            "div_w_residual": series_entry.get("div_w_residual", 0.0),
            "mass": series_entry.get("mass", 0.0),
            "identification_error": identification_error}
