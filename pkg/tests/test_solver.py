import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from youngreg.averaging import FourierVectorField, bundled_field, random_field
from youngreg.fbm import HurstParams, SampledPath, sample_path
from youngreg.solver import (
    CONVERGED,
    MAX_ITER,
    STEP_UNDERFLOW,
    SolveConfig,
    convergence_experiment,
    flow_jacobian,
    flow_lipschitz_estimate,
    solve_classical_reference,
    solve_young_ode,
    window_steps,
)


def constant_field(c):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    return FourierVectorField([0.0], np.zeros((1, len(c))), c[None, :])


@pytest.fixture(scope="module")
def path_1d():
    return sample_path(HurstParams(0.5, 1, 2**10, 3))


@pytest.fixture(scope="module")
def smooth_b():
    return FourierVectorField.real_closure([(1.0, [1.5], [0.4]), (-2.0, [0.7], [0.3j])])


class TestTrivialDrifts:
    @given(st.floats(-2, 2), st.floats(-2, 2))
    def test_constant_drift(self, c, x0):
        path = sample_path(HurstParams(0.5, 1, 2**8, 1))
        res = solve_young_ode(constant_field([c]), path, [x0], k_est=1.0)
        assert np.allclose(res.theta.values[:, 0], x0 + c * path.times, atol=1e-12)
        assert res.status == CONVERGED

    def test_zero_drift(self, rough_path_2d):
        res = solve_young_ode(FourierVectorField.zero(2), rough_path_2d, [0.3, -1.0], k_est=1.0)
        assert np.all(res.theta.values == np.array([0.3, -1.0]))
        assert np.array_equal(res.x.values, res.theta.values + rough_path_2d.values)

    def test_rk4_constant(self, path_1d):
        ref = solve_classical_reference(constant_field([0.7]), path_1d, [0.1], depth=11)
        assert np.allclose(ref.values[:, 0], 0.1 + 0.7 * path_1d.times, atol=1e-12)


class TestReference:
    def test_rk4_fourth_order(self, smooth_b):
        path = sample_path(HurstParams(0.5, 1, 2**4, 9))
        fine = solve_classical_reference(smooth_b, path, [0.2], depth=12).values
        errs = [np.abs(solve_classical_reference(smooth_b, path, [0.2], depth=k).values - fine).max() for k in (4, 5, 6)]
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(rates > 3.5)

    def test_batch_matches_single(self, smooth_b, path_1d):
        batch = solve_classical_reference(smooth_b, path_1d, np.array([[0.0], [0.5]]), depth=10)
        single = solve_classical_reference(smooth_b, path_1d, [0.5], depth=10)
        assert np.allclose(batch[1], single.values, atol=1e-15)

    def test_depth_checks(self, smooth_b, path_1d):
        with pytest.raises(ValueError):
            solve_classical_reference(smooth_b, path_1d, [0.0], depth=9)
        with pytest.raises(ValueError):
            solve_classical_reference(smooth_b, path_1d, [0.0], depth=10, out_depth=11)

    def test_agrees_with_solver(self, smooth_b, path_1d):
        res = solve_young_ode(smooth_b, path_1d, [0.2])
        ref = solve_classical_reference(smooth_b, path_1d, [0.2], depth=14)
        # left-point scheme is first order in the grid step
        assert np.abs(res.theta.values - ref.values).max() < 5e-3


class TestSolver:
    def test_unique_fixed_point(self, path_1d):
        b = bundled_field("smooth_4pair")
        path = sample_path(HurstParams(0.5, 2, 2**10, 8))
        a = solve_young_ode(b, path, [0.1, -0.2])
        wild = SampledPath(np.random.default_rng(0).standard_normal((path.n_grid + 1, 2)))
        c = solve_young_ode(b, path, [0.1, -0.2], init=wild)
        assert a.status == c.status == CONVERGED
        assert np.abs(a.theta.values - c.theta.values).max() < 1e-8

    @pytest.mark.parametrize("safety", [0.05, 0.3])
    def test_window_independence(self, smooth_b, path_1d, safety):
        big = solve_young_ode(smooth_b, path_1d, [0.4], SolveConfig(step_safety=0.9), k_est=1.0)
        small = solve_young_ode(smooth_b, path_1d, [0.4], SolveConfig(step_safety=safety), k_est=1.0)
        assert len(small.per_window) > len(big.per_window)
        assert np.abs(big.theta.values - small.theta.values).max() < 1e-8

    def test_restart_at_half(self, smooth_b, path_1d):
        full = solve_young_ode(smooth_b, path_1d, [0.4], k_est=1.0)
        # map [1/2, 1] onto [0, 1]: shift time and space by (1/2, w_{1/2}), then halve the clock
        mid = path_1d.n_grid // 2
        tail = SampledPath(path_1d.values[mid:] - path_1d.values[mid])
        shift = np.exp(1j * (0.5 * smooth_b.omegas + smooth_b.xis @ path_1d.values[mid]))
        rescaled = FourierVectorField(
            smooth_b.omegas / 2, smooth_b.xis, smooth_b.coeffs * shift[:, None] / 2, check_reality=False
        )
        restart = solve_young_ode(rescaled, tail, full.theta.values[mid], k_est=1.0)
        assert np.abs(restart.theta.values - full.theta.values[mid:]).max() < 1e-8

    def test_status_flags(self, smooth_b, path_1d):
        res = solve_young_ode(smooth_b, path_1d, [0.0], SolveConfig(max_picard=1), k_est=1.0)
        assert res.status == MAX_ITER
        res = solve_young_ode(smooth_b, path_1d, [0.0], k_est=1e8)
        assert res.status == STEP_UNDERFLOW
        assert res.diagnostics["window_steps"] == 1

    def test_window_steps(self):
        assert window_steps(0.0, 1.0, 0.6, 0.9, 1024) == (1024, 1.0)
        steps, T = window_steps(2.0, 3.0, 0.5, 0.9, 1024)
        assert T == pytest.approx((0.45 / 6) ** 2)
        assert steps == int(T * 1024)

    def test_windowed_holder_small(self, smooth_b, path_1d):
        res = solve_young_ode(smooth_b, path_1d, [0.0])
        L = res.diagnostics["window_length"]
        assert np.all(res.window_holder_norms(0.55) * L**0.55 < 1)

    def test_validation(self, smooth_b, path_1d):
        for bad in [dict(gamma=0.5), dict(step_safety=1.0), dict(picard_tol=0), dict(max_picard=0), dict(depth=-1)]:
            with pytest.raises(ValueError):
                SolveConfig(**bad)
        with pytest.raises(ValueError):
            solve_young_ode(smooth_b, path_1d, [0.0, 1.0])

    def test_outputs(self, smooth_b, path_1d):
        res = solve_young_ode(smooth_b, path_1d, [0.0], k_est=1.0)
        cfg = SolveConfig().to_dict()
        text = res.csv_text(cfg)
        lines = text.splitlines()
        assert lines[0].startswith("# ")
        assert json.loads(lines[0][2:])["config"] == cfg
        assert lines[1] == "t,theta1,x1"
        assert len(lines) == path_1d.n_grid + 3
        diag = json.loads(res.diagnostics_json(cfg))
        assert diag["status"] == CONVERGED
        buf = io.StringIO()
        res.to_csv(buf, cfg)
        assert buf.getvalue() == text


class TestFlow:
    def test_trivial_jacobians(self, path_1d):
        for b in (FourierVectorField.zero(1), constant_field([0.8])):
            D = flow_jacobian(b, path_1d, [0.0], SolveConfig())
            assert np.all(D == 1.0)
            rep = flow_lipschitz_estimate(b, path_1d, [[0.0], [0.3], [1.0]], k_est=1.0)
            assert rep.estimate == 1.0

    def test_finite_difference(self, rough_path_2d):
        b = random_field(np.random.default_rng(7), 3, 2, amp=0.8)
        x0 = np.array([0.2, -0.1])
        cfg = SolveConfig(picard_tol=1e-13)
        D = flow_jacobian(b, rough_path_2d, x0, cfg)
        eps = 1e-4
        for j in range(2):
            e = np.zeros(2)
            e[j] = eps
            plus = solve_young_ode(b, rough_path_2d, x0 + e, cfg).theta.values
            minus = solve_young_ode(b, rough_path_2d, x0 - e, cfg).theta.values
            assert np.abs((plus - minus) / (2 * eps) - D[:, :, j]).max() < 1e-3

    def test_lipschitz_vs_jacobian(self, smooth_b, path_1d):
        grid = np.linspace(-1, 1, 41)[:, None]
        rep = flow_lipschitz_estimate(smooth_b, path_1d, grid)
        assert set(rep.statuses) == {CONVERGED}
        assert abs(rep.estimate / rep.jacobian_sup_norm - 1) <= 0.1

    def test_needs_two_points(self, smooth_b, path_1d):
        with pytest.raises(ValueError):
            flow_lipschitz_estimate(smooth_b, path_1d, [[0.0]])


class TestConvergence:
    def test_time_only_field(self, path_1d):
        b = FourierVectorField.real_closure([(2.0, [0.0], [0.5]), (5.0, [0.0], [0.2j])])
        rep = convergence_experiment(b, path_1d, [0.0], n_list=(1, 4), k_table=None)
        assert np.all(rep.errors == 0)
        assert np.all(rep.ratios == 0)

    def test_errors_decrease(self, path_1d):
        b = bundled_field("mollify_6atom")
        path = sample_path(HurstParams(0.5, 2, 2**10, 2))
        rep = convergence_experiment(b, path, [0.0, 0.0], n_list=(1, 4, 16))
        assert np.all(np.diff(rep.errors) < 0)
        assert rep.reference_status == CONVERGED
        data = json.loads(rep.to_json())
        assert [r["n"] for r in data["rows"]] == [1, 4, 16]
        assert all("k_perturbed" in r for r in data["rows"])

    def test_bad_scheme(self, smooth_b, path_1d):
        with pytest.raises(ValueError):
            convergence_experiment(smooth_b, path_1d, [0.0], scheme="gauss")
