import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ergocap as ec
from ergocap.errors import InvalidArgument, ModelContractError, NumericOverflow


def fd_jacobian(f, x, w, h=1e-6):
    """Independent central-difference oracle (scalar and 2-D)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.shape[0]
    jac = np.empty((n, n))
    for j in range(n):
        dx = np.zeros(n)
        dx[j] = h
        hi = f(x + dx if n > 1 else float(x[0] + h), w)
        lo = f(x - dx if n > 1 else float(x[0] - h), w)
        jac[:, j] = (np.atleast_1d(hi) - np.atleast_1d(lo)) / (2 * h)
    return jac if n > 1 else float(jac[0, 0])


class TestStep:
    def test_affine(self, linear2):
        assert ec.step(linear2, 1.0, 0.5, -2.0) == 0.5

    def test_identity_fixed_point(self):
        m = ec.identity_model()
        for x in (-3.0, 0.0, 7.25):
            assert ec.step(m, x, 0.0, 0.0) == x

    def test_cubic_direct(self):
        m = ec.cubic_model()
        assert ec.step(m, 1.0, 0.0, 0.0) == pytest.approx(4.0 / 3.0)

    def test_custom_cubic_direct(self):
        m = ec.SystemModel(
            name="x+x3", dim=1, noise_dim=1,
            f=lambda x, w: x + x**3 + w, jacobian=lambda x, w: 1 + 3 * x * x,
            det_lower_bound=0.9,
        )
        assert ec.step(m, 1.0, 0.0, 0.0) == 2.0

    def test_dimension_mismatch(self):
        m = ec.triangular_model()
        with pytest.raises(InvalidArgument):
            ec.step(m, np.array([1.0]), np.zeros(2), np.zeros(2))

    def test_overflow_signal(self, linear2):
        with pytest.raises(NumericOverflow):
            ec.step(linear2, 1e308, 0.0, 1e308)


class TestLogDetJacobian:
    def test_constant_slope(self, linear2):
        assert ec.log_det_jacobian(linear2, 0.37, -0.05) == 1.0

    def test_identity_zero(self):
        assert ec.log_det_jacobian(ec.identity_model(), 5.0, 0.0) == 0.0

    def test_triangular_matches_fd_oracle(self, rng):
        m = ec.triangular_model()
        expected = math.log2(6.0)
        for _ in range(20):
            x = rng.uniform(-3, 3, size=2)
            w = rng.uniform(-0.1, 0.1, size=2)
            assert ec.log_det_jacobian(m, x, w) == pytest.approx(expected, abs=1e-9)
            det_fd = abs(np.linalg.det(fd_jacobian(m.f, x, w)))
            assert math.log2(det_fd) == pytest.approx(expected, abs=1e-5)

    def test_singular_jacobian_raises(self):
        bad = ec.SystemModel(
            name="flat", dim=1, noise_dim=1,
            f=lambda x, w: 0.0 * x, jacobian=lambda x, w: 0.0,
            det_lower_bound=0.1,
        )
        with pytest.raises(ModelContractError):
            ec.log_det_jacobian(bad, 1.0, 0.0)


class TestModelContracts:
    @pytest.mark.parametrize("factory", [
        ec.linear_model, ec.doubling_map, ec.cubic_model, ec.identity_model,
    ])
    def test_builtin_scalars_pass(self, factory):
        model = factory(1.5) if factory is ec.linear_model else factory()
        noise = ec.uniform_noise(-0.2, 0.2, cells=2)
        checked = ec.check_model_contract(model, noise, seed=3, n_samples=1000)
        assert checked.check_budget == 1000

    def test_triangular_passes(self):
        # 2-D noise for the 2-D model
        def sampler(rng, n):
            return rng.uniform(-0.1, 0.1, size=(n, 2))

        noise = ec.NoiseModel(
            name="u2", dim=2, n_cells=1, cell_probs=np.array([1.0]),
            _sampler=sampler, _cell_sampler=lambda c, rng, n: sampler(rng, n),
        )
        checked = ec.check_model_contract(ec.triangular_model(), noise, n_samples=300)
        assert checked.check_budget == 300

    def test_jacobian_fd_agreement_1e5(self, rng):
        m = ec.cubic_model()
        for _ in range(1000):
            x = float(rng.uniform(-5, 5))
            w = float(rng.uniform(-0.2, 0.2))
            fd = fd_jacobian(m.f, x, w)
            an = m.jacobian(x, w)
            assert abs(an - fd) / max(1.0, abs(an)) < 1e-5

    def test_declared_bound_violation_detected(self):
        lying = ec.SystemModel(
            name="lying", dim=1, noise_dim=1,
            f=lambda x, w: 0.5 * x + w, jacobian=lambda x, w: 0.5,
            det_lower_bound=0.9,  # claims more than the true 0.5
        )
        with pytest.raises(ModelContractError):
            ec.check_model_contract(lying, ec.uniform_noise(-0.1, 0.1), n_samples=10)


class TestVolumeGrowth:
    def test_interval_image_respects_cell_infimum(self, rng):
        # length(f_w(I)) >= inf_cell |f'| * length(I) for monotone scalar maps
        m = ec.cubic_model()
        for _ in range(100):
            lo = float(rng.uniform(-2, 1.8))
            hi = lo + float(rng.uniform(0.01, 0.2))
            w = float(rng.uniform(-0.1, 0.1))
            grid = np.linspace(lo, hi, 64)
            c_inf = min(abs(m.jacobian(float(g), w)) for g in grid)
            image_len = abs(m.f(hi, w) - m.f(lo, w))
            assert image_len >= c_inf * (hi - lo) * (1 - 1e-9)


class TestSimulate:
    def test_null_policy_constant_path(self):
        m = ec.identity_model()
        traj = ec.simulate(
            m, ec.no_noise(), ec.uniform_init(0.4, 0.6),
            ec.null_policy(alphabet=2), ec.noiseless_channel(2), T=50, seed=1,
        )
        assert np.all(traj.x == traj.x[0])
        assert np.all(traj.u == 0.0)
        assert not traj.diverged

    def test_seed_reproducibility_bytes(self, linear2, small_noise, unit_init):
        def run():
            pol = ec.adaptive_zoom_policy(2.0, 1.0, 3, nominal=linear2.nominal,
                                          noise_amplitude=small_noise.amplitude)
            return ec.simulate(linear2, small_noise, unit_init, pol,
                               ec.noiseless_channel(8), T=500, seed=77)

        a, b = run(), run()
        for field in ("x", "w", "u", "q", "qp"):
            assert getattr(a, field).tobytes() == getattr(b, field).tobytes()

    def test_zoom_loop_bounded_10k(self, linear2, small_noise, unit_init):
        pol = ec.adaptive_zoom_policy(2.0, 1.0, 3, nominal=linear2.nominal,
                                      noise_amplitude=small_noise.amplitude)
        traj = ec.simulate(linear2, small_noise, unit_init, pol,
                           ec.noiseless_channel(8), T=10_000, seed=5)
        assert not traj.diverged
        assert np.max(np.abs(traj.x)) < 2.0

    def test_transition_identity_exact(self, linear2, small_noise, unit_init):
        pol = ec.adaptive_zoom_policy(2.0, 1.0, 3, nominal=linear2.nominal,
                                      noise_amplitude=small_noise.amplitude)
        traj = ec.simulate(linear2, small_noise, unit_init, pol,
                           ec.noiseless_channel(8), T=200, seed=9)
        for t in range(traj.horizon - 1):
            assert traj.x[t + 1] == linear2.f(traj.x[t], traj.w[t]) + traj.u[t]

    def test_open_loop_doubling_diverges(self):
        m = ec.doubling_map()
        traj = ec.simulate(
            m, ec.no_noise(), ec.uniform_init(0.5, 1.0),
            ec.null_policy(alphabet=2), ec.noiseless_channel(2), T=200, seed=2,
        )
        assert traj.diverged
        assert traj.horizon < 200

    def test_alphabet_mismatch_rejected(self, linear2, small_noise, unit_init):
        pol = ec.adaptive_zoom_policy(2.0, 1.0, 3, nominal=linear2.nominal)
        with pytest.raises(InvalidArgument):
            ec.simulate(linear2, small_noise, unit_init, pol,
                        ec.noiseless_channel(4), T=10, seed=0)

    def test_trajectory_csv_columns(self, tmp_path, linear2, small_noise, unit_init):
        traj = ec.simulate(linear2, small_noise, unit_init,
                           ec.null_policy(alphabet=2), ec.noiseless_channel(2),
                           T=10, seed=3)
        out = tmp_path / "traj.csv"
        from ergocap.systems import trajectory_to_csv

        trajectory_to_csv(traj, out)
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "t,x0,w0,u0,q,qp"
        assert len(lines) == traj.horizon + 1


class TestNoiseAndInit:
    def test_noise_cell_probs_sum(self):
        noise = ec.uniform_noise(-1, 1, cells=7)
        assert abs(noise.cell_probs.sum() - 1.0) < 1e-12

    def test_noise_cell_index_roundtrip(self, rng):
        noise = ec.uniform_noise(-1, 1, cells=4)
        for cell in range(4):
            draws = noise.sample_cell(cell, rng, 100)
            assert np.all(noise.cell_index(draws) == cell)

    def test_substream_independence_frequency(self):
        # disjoint substreams should look independent at sample scale
        noise = ec.uniform_noise(0, 1, cells=1)
        a = noise.sample(ec.substream(7, "noise", 0), 20_000)
        b = noise.sample(ec.substream(7, "noise", 1), 20_000)
        corr = np.corrcoef(a, b)[0, 1]
        assert abs(corr) < 0.02
        assert abs(a.mean() - 0.5) < 0.01 and abs(b.mean() - 0.5) < 0.01

    def test_init_density_bounds(self, rng):
        init = ec.uniform_init(-2.0, 2.0)
        xs = init.sample(rng, 1000)
        assert np.all(xs >= -2) and np.all(xs <= 2)
        assert init.rho_min == init.rho_max == pytest.approx(0.25)
        assert init.density(0.0) == pytest.approx(0.25)
        assert init.density(5.0) == 0.0

    def test_gaussian_init_density_below_max(self, rng):
        init = ec.gaussian_init(0.7)
        xs = init.sample(rng, 500)
        assert all(0 <= init.density(float(x)) <= init.rho_max + 1e-15 for x in xs)


@settings(max_examples=30, deadline=None)
@given(
    a=st.floats(min_value=0.5, max_value=3.0),
    x=st.floats(min_value=-10, max_value=10),
    w=st.floats(min_value=-1, max_value=1),
    u=st.floats(min_value=-10, max_value=10),
)
def test_step_matches_direct_formula(a, x, w, u):
    m = ec.linear_model(a)
    assert ec.step(m, x, w, u) == a * x + w + u
