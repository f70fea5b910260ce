"""Mixing-parameter sweep harness for the two singular endpoint limits.

All sweep members share one initial pair (rho0, w0) with w0 solenoidal, so
the physical velocity u0 = w0 - 2 kappa grad phi(rho0) carries the required
kappa-dependent compatibility automatically.  Distances are measured against
an independently assembled endpoint reference.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .constitutive import ViscosityLaw
from .fields import Grid, ScalarField, VectorField, leray_project
from .solver import FluidState, SolverConfig, Trajectory, run

N_COMPARE_TIMES = 10


@dataclass
class SweepPlan:
    kappas: Sequence[float]
    target: str                       # "kappa_to_0" or "kappa_to_1"
    grid: Grid
    dt: float
    t_end: float
    law: ViscosityLaw
    rho0: Callable                    # grid -> array
    w0: Callable                      # grid -> (d, ...) array, solenoidal
    scheme: str = "imex1"
    epsilon: float = 0.0

    def __post_init__(self):
        if self.target not in ("kappa_to_0", "kappa_to_1"):
            raise ValueError(f"unknown sweep target {self.target!r}")
        for k in self.kappas:
            if not 0.0 < k < 1.0:
                raise ValueError("sweep kappas must lie strictly inside (0, 1)")


def _initial_state(plan: SweepPlan, kappa: float, law=None) -> FluidState:
    g = plan.grid
    rho = ScalarField(g, np.asarray(plan.rho0(g), dtype=float))
    w = VectorField(g, np.asarray(plan.w0(g), dtype=float))
    if w.divergence_residual() > 1e-12:
        w = leray_project(w)
    else:
        w = VectorField(g, w.components, solenoidal=True)
    return FluidState(rho, w, kappa, law or plan.law)


def _member_config(plan: SweepPlan, kappa: float, mode: str) -> SolverConfig:
    n_steps = max(1, int(round(plan.t_end / plan.dt)))
    save_every = max(1, n_steps // N_COMPARE_TIMES)
    return SolverConfig(grid=plan.grid, dt=plan.dt, t_end=plan.t_end,
                        law=plan.law, kappa=kappa, scheme=plan.scheme,
                        mode=mode, epsilon=plan.epsilon,
                        save_every=save_every, diagnostics_every=0)


def reference_incompressible(plan: SweepPlan) -> Trajectory:
    """Endpoint system with pure transport of the density and symmetric
    viscosity; independent code path from the general assembly."""
    cfg = _member_config(plan, 0.0, "incompressible_ns")
    return run(cfg, _initial_state(plan, 0.0))


def reference_ks(plan: SweepPlan) -> Trajectory:
    """Endpoint system with density diffusion and rotational viscosity only."""
    cfg = _member_config(plan, 1.0, "ks_limit")
    return run(cfg, _initial_state(plan, 1.0))


@dataclass
class SweepReport:
    target: str
    rows: list = field(default_factory=list)

    COLUMNS = ["kappa", "dist_rho", "dist_w", "vanish_obs",
               "entropy_initial", "entropy_final"]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for row in self.rows:
                writer.writerow([format(row[c], ".17g") if isinstance(row[c], float)
                                 else row[c] for c in self.COLUMNS])

    def column(self, name):
        return [row[name] for row in self.rows]


def _trajectory_distances(grid: Grid, member: Trajectory, ref: Trajectory):
    """(max-over-times L2 density gap, L2-in-time L2 velocity gap)."""
    n = min(len(member.states), len(ref.states))
    dist_rho = 0.0
    acc_w = 0.0
    times = member.times[:n]
    for a, b in zip(member.states[:n], ref.states[:n]):
        dist_rho = max(dist_rho, grid.l2_a(a.rho.values - b.rho.values))
        acc_w += grid.l2_a(a.w.components - b.w.components) ** 2
    span = times[-1] - times[0] if n > 1 else 1.0
    dist_w = float(np.sqrt(acc_w * span / max(n, 1)))
    return float(dist_rho), dist_w


def _vanish_observable(traj: Trajectory, kappa: float, target: str, dt: float) -> float:
    if target == "kappa_to_0":
        series = np.asarray(traj.series["grad_rho_weighted"], dtype=float)
        weight = kappa
    else:
        series = np.asarray(traj.series["grad_rho_sq"], dtype=float)
        weight = 1.0 - kappa
    return float(weight * np.trapezoid(series, dx=dt))


def kappa_sweep(plan: SweepPlan) -> SweepReport:
    """Run every member against the endpoint reference and reduce."""
    from .diagnostics import kappa_entropy

    if plan.target == "kappa_to_0":
        ref = reference_incompressible(plan)
    else:
        ref = reference_ks(plan)

    report = SweepReport(target=plan.target)
    order = sorted(plan.kappas, reverse=(plan.target == "kappa_to_0"))
    for kappa in order:
        cfg = _member_config(plan, kappa, "reduced")
        traj = run(cfg, _initial_state(plan, kappa))
        dist_rho, dist_w = _trajectory_distances(plan.grid, traj, ref)
        e0 = kappa_entropy(traj.states[0]).E_kappa
        e1 = kappa_entropy(traj.final_state).E_kappa
        report.rows.append({
            "kappa": kappa,
            "dist_rho": dist_rho,
            "dist_w": dist_w,
            "vanish_obs": _vanish_observable(traj, kappa, plan.target, plan.dt),
            "entropy_initial": e0,
            "entropy_final": e1,
        })
    return report
