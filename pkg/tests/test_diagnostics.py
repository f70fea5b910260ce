import csv

import numpy as np
import pytest

from kef.constitutive import linear_law, power_law
from kef.diagnostics import (
    DIAGNOSTIC_COLUMNS,
    DiagnosticsWriter,
    bounds_monitor,
    dissipation_budget,
    gagliardo_nirenberg_ratio,
    identity_suite,
    kappa_entropy,
    max_principle_monitor,
    renormalized_continuity_residual,
    row_from_report,
    split_identity_residual,
)
from kef.fields import Grid, ScalarField, VectorField, l2, leray_project
from kef.solver import FluidState, SolverConfig, run

from test_fields import random_scalar, random_vector


def make_state(grid, kappa=0.5, alpha=1.0, seed=0, amp=0.1):
    law = power_law(alpha, 0.5, 3.0)
    rho = 1.5 + random_scalar(grid, seed, amplitude=0.2).values
    w = leray_project(random_vector(grid, seed + 50, amplitude=amp))
    return FluidState(ScalarField(grid, rho), w, kappa, law)


class TestEntropy:
    def test_constant_density_value(self):
        g = Grid(2, 32)
        law = linear_law(1.0, 0.0, 0.5, 3.0)
        w = leray_project(random_vector(g, 1))
        st = FluidState(ScalarField(g, np.ones(g.shape)), w, 0.5, law)
        rep = kappa_entropy(st)
        assert abs(rep.E_kappa - 0.5 * l2(w) ** 2) < 1e-12
        assert rep.D_div == pytest.approx(0.0, abs=1e-20)

    def test_pointwise_mixing_identity(self):
        # |w|^2 + kappa(1-kappa)|2 grad phi|^2 vs the two-velocity split
        w_val, tgp, kappa = 1.0, 1.0, 0.5
        u = w_val - kappa * tgp
        lhs = w_val ** 2 + kappa * (1 - kappa) * tgp ** 2
        rhs = (1 - kappa) * u ** 2 + kappa * (u + tgp) ** 2
        assert lhs == pytest.approx(1.25)
        assert rhs == pytest.approx(1.25)

    @pytest.mark.parametrize("kappa", [0.1, 0.5, 0.9])
    def test_two_velocity_decomposition(self, kappa):
        g = Grid(2, 32)
        for seed in range(3):
            st = make_state(g, kappa=kappa, seed=seed)
            rep = kappa_entropy(st)
            rel = abs(rep.E_kappa - rep.decomposition["two_velocity"]) / rep.E_kappa
            assert rel < 1e-12

    def test_budget_terms_nonnegative(self):
        g = Grid(2, 32)
        st = make_state(g, seed=3)
        rep = kappa_entropy(st, epsilon=1e-3)
        assert rep.D_rot >= 0.0
        assert rep.D_dev >= 0.0
        assert rep.D_div >= 0.0
        assert rep.eps_budget >= 0.0


class TestBudgetForms:
    def test_forms_agree(self):
        g = Grid(2, 64)
        for seed in range(3):
            st = make_state(g, seed=seed)
            rep = dissipation_budget(st)
            rel = abs(rep.budget - rep.budget_alt) / rep.budget
            assert rel < 1e-11

    def test_solenoidal_u_reduces(self):
        # mu constant and kappa grad(phi) = 0 make div u = 0
        g = Grid(2, 32)
        law = linear_law(1.0, 0.0, 0.5, 3.0)
        st = FluidState(ScalarField(g, np.ones(g.shape)),
                        leray_project(random_vector(g, 4)), 0.5, law)
        rep = dissipation_budget(st)
        assert rep.D_div == pytest.approx(0.0, abs=1e-18)
        assert rep.budget == pytest.approx(rep.budget_alt, rel=1e-11)

    def test_energy_rate_matches_budget(self):
        g = Grid(2, 64)
        law = power_law(1.0, 0.5, 3.0)
        dt = 2e-4
        cfg = SolverConfig(grid=g, dt=dt, t_end=4 * dt, law=law, kappa=0.5,
                           scheme="imex2", diagnostics_every=1)
        traj = run(cfg, make_state(g, seed=5))
        E = [r.E_kappa for r in traj.reports]
        mid = traj.reports[2]
        rate = (E[3] - E[1]) / (2 * dt)
        assert abs(rate + mid.budget) / mid.budget < 0.05


class TestMonitors:
    def test_pure_diffusion_contracts_bounds(self):
        g = Grid(2, 64)
        law = power_law(1.0, 0.5, 3.0)
        cfg = SolverConfig(grid=g, dt=5e-4, t_end=0.05, law=law, kappa=0.5,
                           diagnostics_every=0)
        rho = 1.5 + random_scalar(g, 6, amplitude=0.2).values
        st = FluidState(ScalarField(g, rho),
                        VectorField(g, np.zeros((2,) + g.shape), solenoidal=True),
                        0.5, law)
        traj = run(cfg, st)
        mins = np.asarray(traj.series["min_rho"])
        maxs = np.asarray(traj.series["max_rho"])
        assert np.all(np.diff(mins) > -1e-10)
        assert np.all(np.diff(maxs) < 1e-10)
        rep = max_principle_monitor(traj, mins[0], maxs[0], tol_factor=1e-6)
        assert rep["ok"]

    def test_constant_density(self):
        g = Grid(2, 16)
        law = power_law(1.0, 0.5, 3.0)
        st = FluidState(ScalarField(g, np.full(g.shape, 1.5)),
                        VectorField(g, np.zeros((2,) + g.shape), solenoidal=True),
                        0.5, law)
        rep = bounds_monitor(st, 1.5, 1.5)
        assert rep["excursion"] == 0.0

    def test_violation_flagged(self):
        g = Grid(2, 16)
        law = power_law(1.0, 0.5, 3.0)
        st = FluidState(ScalarField(g, np.full(g.shape, 3.2)),
                        VectorField(g, np.zeros((2,) + g.shape), solenoidal=True),
                        0.5, law)
        rep = bounds_monitor(st, 0.5, 3.0)
        assert not rep["ok"]


class TestIdentities:
    def test_split_identity_hand_case(self):
        g = Grid(2, 32)
        x, _ = g.xs
        u = np.stack([np.sin(x), np.zeros(g.shape)])
        assert split_identity_residual(g, u, np.ones(g.shape)) < 1e-12

    def test_split_identity_random(self):
        g = Grid(2, 32)
        for seed in range(5):
            u = random_vector(g, seed).components
            m = 1.5 + random_scalar(g, seed + 20, amplitude=0.3).values
            assert split_identity_residual(g, u, m) < 1e-11

    def test_renormalized_continuity(self):
        g = Grid(2, 64)
        st = make_state(g, alpha=2.0, seed=7, amp=0.05)
        assert renormalized_continuity_residual(st) < 1e-10

    def test_gn_ratio_finite(self):
        g = Grid(2, 32)
        x, _ = g.xs
        ratio = gagliardo_nirenberg_ratio(ScalarField(g, 2.0 + np.sin(x)))
        assert np.isfinite(ratio)
        assert ratio > 0.0

    def test_suite_keys(self):
        g = Grid(2, 32)
        out = identity_suite(make_state(g, seed=8))
        assert set(out) == {"split_identity", "two_velocity",
                            "renormalized_continuity", "gn_ratio"}
        assert out["split_identity"] < 1e-11
        assert out["two_velocity"] < 1e-12


class TestEntropyMonotone:
    def test_short_run_monotone(self):
        g = Grid(2, 64)
        law = power_law(1.0, 0.5, 3.0)
        cfg = SolverConfig(grid=g, dt=5e-4, t_end=0.1, law=law, kappa=0.5,
                           scheme="imex1", diagnostics_every=1)
        traj = run(cfg, make_state(g, seed=9))
        E = np.asarray([r.E_kappa for r in traj.reports])
        tol = 1e-8 * E[0]
        assert np.all(np.diff(E) <= tol)


class TestWriter:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "diag.csv"
        values = {c: float(i) / 3.0 for i, c in enumerate(DIAGNOSTIC_COLUMNS)}
        with DiagnosticsWriter(path) as w:
            w.write_row(values)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == DIAGNOSTIC_COLUMNS
        for col, raw in zip(DIAGNOSTIC_COLUMNS, rows[1]):
            assert float(raw) == values[col]

    def test_row_from_report(self):
        g = Grid(2, 16)
        st = make_state(g, seed=10)
        rep = kappa_entropy(st)
        row = row_from_report(rep, {"mass": 1.0, "min_rho": 0.5, "max_rho": 2.0,
                                    "div_w_residual": 0.0})
        assert row["E_kappa"] == rep.E_kappa
        assert set(DIAGNOSTIC_COLUMNS) <= set(row)
