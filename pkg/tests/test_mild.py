"""Drifted mild-solution scheme: exactness limits, stopped couplings,
reweighting, the transformed-path identity, and growth bounds."""

import math

import numpy as np
import pytest

from spdelab import (
    ModeSpectrum,
    NoiseBundle,
    ParameterError,
    PreconditionError,
    apriori_check,
    assemble_vector_field,
    builtin_drifts,
    coupled_uniqueness_run,
    detect_exit,
    exp_euler_batch,
    exp_euler_run,
    girsanov_weight,
    noise_batch,
    patched_strong_solution,
    sample_invariant,
    simulate_ou,
    smooth,
    time_grid,
    truncate,
    with_outside_bump,
    zvonkin_residual,
)
from spdelab.drifts import DriftField, onesided_exp_drift
from spdelab.mild import PathBundle


@pytest.fixture
def spec():
    return ModeSpectrum.k_squared(3)


@pytest.fixture
def catalog():
    return builtin_drifts(3, bound=1.0)


def bundle(grid, seed=2, path_index=0, modes=3):
    return NoiseBundle.generate(grid, modes, seed, path_index)


class TestExpEuler:
    def test_zero_drift_matches_exact_linear_path(self, spec, catalog):
        nb = bundle(time_grid(1.0, 64))
        x = np.array([1.0, -0.5, 0.25])
        ou_path = simulate_ou(spec, x, nb)
        ee_path = exp_euler_run(spec, catalog["zero"], x, nb)
        assert np.array_equal(ou_path.states, ee_path.trajectory)

    def test_tiny_rate_reduces_to_flat_euler(self):
        # lambda -> 0: the drift weight tends to the plain Euler step h * B
        spec = ModeSpectrum(np.array([1e-8]))
        h = 0.125
        nb = bundle(np.array([0.0, h]), modes=1)
        B = DriftField(lambda x: np.full_like(x, 2.0), tag="c", global_bound=2.0)
        path = exp_euler_run(spec, B, np.zeros(1), nb)
        drift_part = path.trajectory[1, 0] - simulate_ou(spec, np.zeros(1), nb).states[1, 0]
        assert drift_part == pytest.approx(h * 2.0, rel=1e-7)

    def test_noise_reuse_determinism(self, spec, catalog):
        nb = bundle(time_grid(1.0, 32), seed=9)
        x = np.array([0.2, 0.2, 0.2])
        a = exp_euler_run(spec, catalog["sign"], x, nb)
        b = exp_euler_run(spec, catalog["sign"], x, nb)
        assert np.array_equal(a.trajectory, b.trajectory)

    def test_batch_rows_match_single_runs(self, spec, catalog):
        grid = time_grid(1.0, 16)
        xi, ortho = noise_batch(grid, 3, seed=4, n_paths=5)
        x = np.array([0.1, -0.2, 0.3])
        batch = exp_euler_batch(spec, catalog["radial"], x, grid, xi, ortho)
        for i in range(5):
            nb = NoiseBundle.generate(grid, 3, seed=4, path_index=i)
            single = exp_euler_run(spec, catalog["radial"], x, nb)
            assert np.array_equal(batch[i], single.trajectory)

    def test_strong_self_consistency_rate(self, spec, catalog):
        # E sup |X^h - X^{h/2}| = O(h^{1/2}) under bridge-refined noise
        B = smooth(spec, catalog["sign"], 16, samples=128, seed=0)
        x = np.zeros(3)
        n_paths = 80
        errs_by_level = np.zeros(4)
        for p in range(n_paths):
            noise = NoiseBundle.generate(time_grid(1.0, 16), 3, seed=31, path_index=p)
            prev = exp_euler_run(spec, B, x, noise).trajectory
            for level in range(4):
                noise = noise.refine()
                cur = exp_euler_run(spec, B, x, noise).trajectory
                gap = np.linalg.norm(cur[::2] - prev, axis=1).max()
                errs_by_level[level] += gap / n_paths
                prev = cur
        # gaps must shrink at least like sqrt(h); additive noise with a
        # mollified drift typically measures faster (closer to order one)
        assert np.all(np.diff(errs_by_level) < 0)
        hs = 1.0 / 16.0 / 2 ** np.arange(1, 5)
        slope = np.polyfit(np.log(hs), np.log(errs_by_level), 1)[0]
        assert 0.4 <= slope <= 1.3

    def test_nonfinite_drift_reports_step(self, spec):
        B = DriftField(lambda x: np.full_like(x, np.nan), tag="bad")
        nb = bundle(time_grid(0.5, 4))
        from spdelab import SimulationError

        with pytest.raises(SimulationError) as err:
            exp_euler_run(spec, B, np.zeros(3), nb)
        assert err.value.step == 0


class TestDetectExit:
    def test_interior_path_never_exits(self, spec, catalog):
        nb = bundle(time_grid(0.25, 8))
        path = exp_euler_run(spec, catalog["zero"], np.zeros(3), nb)
        path.trajectory[:] = 0.0
        assert detect_exit(path, 1.0) is None
        assert path.exit_marks[1.0] is None

    def test_start_on_sphere_exits_at_zero(self, spec, catalog):
        nb = bundle(time_grid(0.25, 8))
        x = np.array([2.0, 0.0, 0.0])  # |x| = N: outside the open ball
        path = exp_euler_run(spec, catalog["zero"], x, nb)
        assert detect_exit(path, 2.0) == (0, 0.0)

    def test_discrete_detection_index(self, spec):
        nb = bundle(time_grid(1.0, 4))
        path = PathBundle(noise=nb, trajectory=np.zeros((5, 3)), drift_tag="manual")
        path.trajectory[:, 0] = [0.0, 0.4, 0.9, 1.7, 2.5]  # crosses 1.5 between 2 and 3
        idx, t = detect_exit(path, 1.5)
        assert idx == 3
        assert t == pytest.approx(0.75)


class TestCoupledUniqueness:
    def test_identical_drifts_coincide(self, spec, catalog):
        nb = bundle(time_grid(1.0, 64), seed=6)
        report = coupled_uniqueness_run(spec, catalog["sign"], catalog["sign"], 2.0,
                                        np.zeros(3), nb)
        assert report.sup_pre_exit_distance == 0.0
        assert report.exits_match

    def test_agreement_inside_ball_forces_pre_exit_equality(self, spec, catalog):
        # drifts differ only outside the ball: exact coincidence up to exit
        radius = 1.0
        B = catalog["sign"]
        B2 = with_outside_bump(B, radius, 5.0)
        mismatched = 0
        for p in range(40):
            nb = bundle(time_grid(1.0, 64), seed=8, path_index=p)
            report = coupled_uniqueness_run(spec, B, B2, radius, np.zeros(3), nb)
            assert report.sup_pre_exit_distance == 0.0
            assert report.exits_match
            if report.exit_index_x is not None:
                mismatched += 1
        assert mismatched > 0  # the bump was actually exercised past some exits

    def test_divergence_allowed_after_exit(self, spec, catalog):
        radius = 0.5
        B = catalog["zero"]
        B2 = with_outside_bump(B, radius, 5.0)
        for p in range(20):
            nb = bundle(time_grid(1.0, 64), seed=12, path_index=p)
            px = exp_euler_run(spec, B, np.zeros(3), nb)
            py = exp_euler_run(spec, B2, np.zeros(3), nb)
            info = detect_exit(px, radius)
            if info is not None and info[0] + 1 <= nb.steps:
                assert not np.array_equal(px.trajectory[-1], py.trajectory[-1])
                return
        pytest.fail("no exiting path found")

    def test_smoothing_stability(self, spec, catalog):
        # replacing a continuous drift by its mollification perturbs paths
        # less and less as the smoothing index grows
        B = catalog["radial"]
        medians = []
        for n in (8, 32, 128):
            Bs = smooth(spec, B, n, samples=256, seed=0)
            gaps = []
            for p in range(60):
                nb = bundle(time_grid(1.0, 32), seed=14, path_index=p)
                px = exp_euler_run(spec, B, np.zeros(3), nb)
                py = exp_euler_run(spec, Bs, np.zeros(3), nb)
                gaps.append(np.linalg.norm(px.trajectory - py.trajectory, axis=1).max())
            medians.append(float(np.median(gaps)))
        assert medians[0] > medians[1] > medians[2]


class TestGirsanov:
    def test_zero_record_weight_is_one(self, spec, catalog):
        nb = bundle(time_grid(1.0, 32))
        path = exp_euler_run(spec, catalog["zero"], np.zeros(3), nb)
        ledger = girsanov_weight(path, np.zeros((32, 3)))
        assert ledger.weight == 1.0
        np.testing.assert_array_equal(ledger.log_weights, 0.0)

    def test_unit_mean_over_linear_paths(self, spec, catalog):
        n, steps = 20_000, 32
        grid = time_grid(1.0, steps)
        xi, ortho = noise_batch(grid, 3, seed=16, n_paths=n)
        traj = exp_euler_batch(spec, catalog["zero"], np.zeros(3), grid, xi, ortho)
        B = catalog["sign"]
        h = np.diff(grid)
        dw = np.sqrt(h)[None, :, None] * xi
        logw = np.zeros(n)
        for j in range(steps):
            b = B(traj[:, j])
            logw -= np.einsum("ik,ik->i", b, dw[:, j]) + 0.5 * np.einsum(
                "ik,ik->i", b, b
            ) * h[j]
        w = np.exp(logw)
        se = w.std(ddof=1) / math.sqrt(n)
        assert abs(w.mean() - 1.0) <= 4.0 * se

    def test_reweighted_mean_matches_drifted_simulation(self, spec, catalog):
        # exact discrete change of measure: reweighted linear paths
        # reproduce the drifted scheme's law
        n, steps = 40_000, 16
        grid = time_grid(0.5, steps)
        B = catalog["radial"]
        phi = lambda x: np.tanh(x[:, 0])

        xi, ortho = noise_batch(grid, 3, seed=18, n_paths=n)
        traj = exp_euler_batch(spec, catalog["zero"], np.zeros(3), grid, xi, ortho)
        h = np.diff(grid)
        dw = np.sqrt(h)[None, :, None] * xi
        logw = np.zeros(n)
        for j in range(steps):
            b = B(traj[:, j])  # weight that adds the drift to the path law
            logw += np.einsum("ik,ik->i", b, dw[:, j]) - 0.5 * np.einsum(
                "ik,ik->i", b, b
            ) * h[j]
        w = np.exp(logw)
        vals = w * phi(traj[:, -1])
        rw_mean = vals.mean()
        rw_se = vals.std(ddof=1) / math.sqrt(n)

        xi2, ortho2 = noise_batch(grid, 3, seed=19, n_paths=n)
        direct = phi(exp_euler_batch(spec, B, np.zeros(3), grid, xi2, ortho2,
                                     record="final"))
        d_mean = direct.mean()
        d_se = direct.std(ddof=1) / math.sqrt(n)
        assert abs(rw_mean - d_mean) <= 4.0 * math.hypot(rw_se, d_se)

    def test_overflow_detected(self, spec, catalog):
        nb = bundle(time_grid(1.0, 4))
        path = exp_euler_run(spec, catalog["zero"], np.zeros(3), nb)
        from spdelab import SimulationError

        with pytest.raises(SimulationError):
            girsanov_weight(path, np.full((4, 3), 1e200))


class TestZvonkinResidual:
    def test_zero_drift_residual_is_float_noise(self, spec, catalog):
        sol = assemble_vector_field(spec, catalog["zero"], lam=4.0, degree=4)
        nb = bundle(time_grid(1.0, 256), seed=22)
        path = exp_euler_run(spec, catalog["zero"], np.array([0.5, -0.25, 0.125]), nb)
        for mode in range(3):
            res = zvonkin_residual(path, sol, mode, radius=50.0)
            assert res.shape == (257,)
            assert np.abs(res).max() <= 1e-12

    def test_residual_series_stops_at_exit(self, spec, catalog):
        sol = assemble_vector_field(spec, catalog["zero"], lam=4.0, degree=4)
        nb = bundle(time_grid(1.0, 64), seed=23)
        x = np.array([1.2, 0.0, 0.0])
        path = exp_euler_run(spec, catalog["zero"], x, nb)
        exit_info = detect_exit(path, 1.3)
        if exit_info is None:
            pytest.skip("path stayed inside on this draw")
        res = zvonkin_residual(path, sol, 0, radius=1.3)
        assert res.shape == (exit_info[0] + 1,)

    def test_invariant_under_agreeing_drift_replacement(self, spec, catalog):
        # same path up to exit and same transformed field => same residual
        radius = 1.0
        B = smooth(spec, truncate(catalog["sign"], radius), 16, samples=128, seed=0)
        lam = 6.0
        sol = assemble_vector_field(spec, B, lam=lam, degree=6)
        base = truncate(catalog["sign"], radius)
        bumped = with_outside_bump(base, radius, 3.0)
        nb = bundle(time_grid(1.0, 64), seed=24, path_index=7)
        pa = exp_euler_run(spec, base, np.zeros(3), nb)
        pb = exp_euler_run(spec, bumped, np.zeros(3), nb)
        ra = zvonkin_residual(pa, sol, 0, radius=radius, lam=lam)
        rb = zvonkin_residual(pb, sol, 0, radius=radius, lam=lam)
        np.testing.assert_array_equal(ra, rb)

    def test_mode_bounds_checked(self, spec, catalog):
        sol = assemble_vector_field(spec, catalog["zero"], lam=4.0, degree=4)
        nb = bundle(time_grid(0.5, 8))
        path = exp_euler_run(spec, catalog["zero"], np.zeros(3), nb)
        with pytest.raises(ParameterError):
            zvonkin_residual(path, sol, 3, radius=2.0)


class TestApriori:
    def test_zero_drift_trivially_below_bound(self, spec, catalog):
        report = apriori_check(spec, catalog["zero"], np.zeros(3), horizon=1.0,
                               n_paths=2000, steps=32, seed=26)
        assert report.satisfied
        assert report.k_t >= 1.0
        assert report.c_p == pytest.approx(2.0 * 1.0 + 3.0)

    def test_exponential_example_bound(self, spec):
        B = onesided_exp_drift(3, q=1.0)
        x = sample_invariant(spec, 1, seed=27)[0]
        report = apriori_check(spec, B, x, horizon=1.0, n_paths=4000, steps=64, seed=28)
        assert report.satisfied
        assert report.ratio < 1.0

    def test_requires_certificate(self, spec):
        B = DriftField(lambda x: np.zeros_like(x), tag="nocert")
        with pytest.raises(PreconditionError):
            apriori_check(spec, B, np.zeros(3), 1.0, 100, 8, seed=1)


class TestPatchedSolution:
    def test_bounded_drift_contained_quickly(self, spec, catalog):
        nb = bundle(time_grid(1.0, 64), seed=29)
        run = patched_strong_solution(spec, catalog["radial"], np.zeros(3), nb,
                                      start_radius=64.0)
        assert run.escalations == 1
        assert run.consistency_ok

    def test_escalation_consistency_bit_exact(self, spec):
        B = onesided_exp_drift(3, q=1.0)
        found = False
        for p in range(40):
            nb = bundle(time_grid(1.0, 128), seed=30, path_index=p)
            x = sample_invariant(spec, 1, seed=100 + p)[0] * 1.5
            run = patched_strong_solution(spec, B, x, nb, start_radius=0.5)
            assert run.consistency_ok
            if run.escalations > 1:
                found = True
        assert found

    def test_non_containment_reports_history(self, spec):
        from spdelab import NonContainmentError

        B = onesided_exp_drift(3, q=1.0)
        nb = bundle(time_grid(1.0, 32), seed=31)
        x = np.array([5.0, 0.0, 0.0])
        with pytest.raises(NonContainmentError) as err:
            patched_strong_solution(spec, B, x, nb, start_radius=0.25, max_doublings=2)
        assert len(err.value.exit_history) == 3
