import numpy as np
import pytest

from kef.constitutive import power_law
from kef.fields import Grid, ScalarField, VectorField
from kef.solver import FluidState, SolverConfig, run, step
from kef.verification import (
    ConvergenceReport,
    identification_experiment,
    make_case,
    mms_run,
    stokes_oracle,
    temporal_order,
    validate_case,
)


class TestCaseConstruction:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_case("vortex")

    @pytest.mark.parametrize("kind", ["traveling", "steady"])
    def test_solution_in_band(self, kind):
        case = make_case(kind)
        g = Grid(2, 32)
        for t in (0.0, 0.5, 1.0):
            rho = case.rho(t, *g.xs)
            assert rho.min() >= case.r - 1e-12
            assert rho.max() <= case.R + 1e-12

    @pytest.mark.parametrize("kind", ["traveling", "steady"])
    def test_manufactured_w_solenoidal(self, kind):
        case = make_case(kind)
        g = Grid(2, 32)
        w = case.w(0.3, *g.xs)
        assert g.l2_a(g.div_a(w)) < 1e-12

    @pytest.mark.parametrize("kind", ["traveling", "steady"])
    def test_operator_residual_at_t0(self, kind):
        case = make_case(kind)
        res = validate_case(case, Grid(2, 64))
        assert res["rho_residual"] < 1e-10
        assert res["w_residual"] < 1e-10


class TestSteadyHold:
    def test_holds_state_over_thousand_steps(self):
        case = make_case("steady")
        g = Grid(2, 64)
        traj = run(case.config(g, dt=1e-3, t_end=1.0), case.state(g))
        f = traj.final_state
        assert np.max(np.abs(f.rho.values - case.rho(f.t, *g.xs))) < 1e-10
        assert np.max(np.abs(f.w.components - case.w(f.t, *g.xs))) < 1e-10


class TestSpatialConvergence:
    def test_steady_plateau(self):
        case = make_case("steady")
        rep = mms_run(case, ns=(16, 32, 64), dt=1e-3, t_end=0.1)
        assert rep.errors_l2[0] > rep.errors_l2[1] > rep.errors_l2[2]
        assert rep.errors_l2[-1] < 1e-10
        assert rep.resolved

    def test_traveling_spectral_drop(self):
        case = make_case("traveling")
        rep = mms_run(case, ns=(16, 32), dt=1e-5, t_end=5e-3)
        assert rep.errors_l2[0] / rep.errors_l2[1] > 1e3


class TestTemporalOrder:
    def test_imex2_second_order(self):
        case = make_case("traveling")
        rep = temporal_order(case, n=32, dts=(4e-3, 2e-3, 1e-3), t_end=0.2)
        order = float(np.mean(rep.orders))
        assert 1.9 <= order <= 2.1


class TestIdentification:
    def test_monotone_in_delta(self):
        law = power_law(1.0, 0.5, 3.0)
        res = identification_experiment(law, kappa=0.5, n=32, dt=5e-4,
                                        t_end=0.05, deltas=(0.2, 0.05, 0.0),
                                        etas=(0.0,))
        errs = [res[(d, 0.0)]["max_error"] for d in (0.2, 0.05, 0.0)]
        assert errs[0] >= errs[1] >= errs[2]
        assert errs[-1] < 1e-6

    def test_perturbed_start_bounded(self):
        law = power_law(1.0, 0.5, 3.0)
        res = identification_experiment(law, kappa=0.5, n=32, dt=5e-4,
                                        t_end=0.05, deltas=(0.0,), etas=(0.1,))
        entry = res[(0.0, 0.1)]
        assert entry["initial_error"] > 0.0
        assert entry["max_error"] < 10.0 * entry["initial_error"]

    def test_kappa_one_still_identifies(self):
        law = power_law(1.0, 0.5, 3.0)
        res = identification_experiment(law, kappa=1.0, n=32, dt=5e-4,
                                        t_end=0.05, deltas=(0.0,), etas=(0.0,))
        assert res[(0.0, 0.0)]["max_error"] < 1e-6


class TestStokesOracle:
    def test_explicit_euler_limit(self):
        z = -0.3
        amp = stokes_oracle(1.0, 0.3, 1.0, scheme="imex1", theta=0.0)
        assert amp == pytest.approx(1.0 + z, abs=1e-15)

    def test_imex1_closed_form(self):
        nu, k, dt = 1.0, 3.0, 2e-2
        amp = stokes_oracle(k, nu, dt, scheme="imex1")
        assert amp == pytest.approx(1.0 / (1.0 + nu * k ** 2 * dt), abs=1e-15)

    @pytest.mark.parametrize("scheme", ["imex1", "imex2"])
    def test_matches_solver_single_mode(self, scheme):
        g = Grid(2, 32)
        law = power_law(1.0, 0.5, 3.0)
        kappa, dt = 0.5, 1e-2
        cfg = SolverConfig(grid=g, dt=dt, t_end=dt, law=law, kappa=kappa,
                           scheme=scheme, diagnostics_every=0)
        x, _ = g.xs
        a0 = 0.2
        rho = 1.5 + a0 * np.cos(3 * x)
        st = FluidState(ScalarField(g, rho),
                        VectorField(g, np.zeros((2,) + g.shape), solenoidal=True),
                        kappa, law)
        new = step(st, cfg)
        nu = 2.0 * kappa * float(law.mu_prime(1.5))
        amp = stokes_oracle(3.0, nu, dt, scheme=scheme)
        expected = 1.5 + a0 * amp * np.cos(3 * x)
        assert np.max(np.abs(new.rho.values - expected)) < 1e-10

    def test_bad_scheme(self):
        with pytest.raises(ValueError):
            stokes_oracle(1.0, 1.0, 1e-2, scheme="rk4")


class TestReportShape:
    def test_fit_orders(self):
        rep = ConvergenceReport(parameter="dt", values=[4e-3, 2e-3, 1e-3],
                                errors_l2=[1.6e-5, 4e-6, 1e-6],
                                errors_linf=[0, 0, 0])
        rep.fit_orders()
        assert rep.orders == pytest.approx([2.0, 2.0])
        assert rep.resolved
