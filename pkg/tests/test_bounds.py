import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ergocap as ec
from ergocap.errors import InvalidArgument
from ergocap.occupation import Box


@pytest.fixture(scope="module")
def cubic_run():
    """Stabilized cubic loop: states, noise, partitioned occupation."""
    model = ec.cubic_model()
    noise = ec.uniform_noise(-0.1, 0.1)
    pol = ec.uniform_quantizer_policy(-2.0, 2.0, bits=4, nominal=model.nominal)
    paths = ec.simulate_ensemble(
        model, noise, ec.uniform_init(-1.0, 1.0), pol,
        ec.noiseless_channel(16), T=20_000, seed=101, n_paths=8,
    )
    assert not any(p.diverged for p in paths)
    states = ec.harvest_states(paths, burn_in=0.1)
    return model, noise, paths, states


class TestIntegrandBoundMc:
    def test_constant_jacobian_exact(self, rng):
        model = ec.linear_model(2.0)
        states = rng.uniform(-1, 1, size=500)
        mc = ec.integrand_bound_mc(model, states, ec.uniform_noise(-0.1, 0.1), 2000, rng)
        assert mc.estimate == 1.0
        assert mc.ci_halfwidth == 0.0

    def test_identity_zero(self, rng):
        mc = ec.integrand_bound_mc(
            ec.identity_model(), rng.uniform(-1, 1, 100), ec.no_noise(), 1000, rng
        )
        assert mc.estimate == 0.0

    def test_cubic_matches_histogram_quadrature(self, cubic_run, rng):
        model, noise, _, states = cubic_run
        mc = ec.integrand_bound_mc(model, states, noise, 20_000, rng)
        # independent oracle: quadrature of log2(1 + x^2) over the state histogram
        counts, edges = np.histogram(states, bins=200)
        mids = 0.5 * (edges[:-1] + edges[1:])
        quad = float(np.sum(counts / counts.sum() * np.log2(1 + mids**2)))
        assert abs(mc.estimate - quad) <= 3 * mc.ci_halfwidth + 0.01

    def test_empty_pool_rejected(self, rng):
        with pytest.raises(InvalidArgument):
            ec.integrand_bound_mc(ec.identity_model(), np.empty(0), ec.no_noise(), 1000, rng)


class TestPartitionLowerBound:
    def test_constant_jacobian_is_mass_times_log(self, rng):
        model = ec.linear_model(2.0)
        noise = ec.uniform_noise(-0.1, 0.1)
        part = ec.interval_partition(-1, 1, 2, noise)
        val = ec.partition_lower_bound(model, part, np.array([0.4, 0.5]),
                                       noise.cell_probs, rng)
        assert val == pytest.approx(0.9, abs=1e-12)

    def test_one_cell_reduces_to_single_set(self, rng):
        model = ec.cubic_model()
        noise = ec.uniform_noise(-0.1, 0.1)
        part = ec.interval_partition(-1, 1, 1, noise)
        q = np.array([0.95])
        a = ec.partition_lower_bound(model, part, q, noise.cell_probs, rng)
        b = ec.single_set_bound(model, part.state_cells[0], 0.95, noise, rng)
        assert a == pytest.approx(b, abs=1e-12)

    def test_refinement_nondecreasing(self, cubic_run):
        model, noise, paths, _ = cubic_run
        fine = ec.interval_partition(-1, 1, 16, noise)
        occ = ec.accumulate(paths[0], fine)
        q16 = occ.state_freq[:16]
        q4 = q16.reshape(4, 4).sum(axis=1)
        q1 = np.array([q16.sum()])
        part4 = ec.interval_partition(-1, 1, 4, noise)
        part1 = ec.interval_partition(-1, 1, 1, noise)
        # identical noise substreams per call so only the partition varies
        b1 = ec.partition_lower_bound(model, part1, q1, noise.cell_probs,
                                      ec.substream(55, "inf"))
        b4 = ec.partition_lower_bound(model, part4, q4, noise.cell_probs,
                                      ec.substream(55, "inf"))
        b16 = ec.partition_lower_bound(model, fine, q16, noise.cell_probs,
                                       ec.substream(55, "inf"))
        assert b1 <= b4 + 1e-12
        assert b4 <= b16 + 1e-12

    def test_zero_mass_cells_contribute_nothing(self, rng):
        model = ec.linear_model(2.0)
        noise = ec.uniform_noise(-0.1, 0.1)
        part = ec.interval_partition(-1, 1, 2, noise)
        val = ec.partition_lower_bound(model, part, np.array([0.0, 0.0]),
                                       noise.cell_probs, rng)
        assert val == 0.0

    def test_refinement_flag_tightens_or_keeps(self):
        model = ec.cubic_model()
        noise = ec.uniform_noise(-0.1, 0.1)
        part = ec.interval_partition(-1, 1, 4, noise)
        q = np.full(4, 0.25)
        base = ec.partition_lower_bound(model, part, q, noise.cell_probs,
                                        ec.substream(12, "inf"), lattice_points=128)
        refined = ec.partition_lower_bound(model, part, q, noise.cell_probs,
                                           ec.substream(12, "inf"), lattice_points=128,
                                           refine=True)
        # a finer lattice can only discover deeper minima
        assert refined <= base + 1e-12
        assert math.isfinite(refined)


class TestSingleSetBound:
    def test_full_mass_constant_jacobian(self, rng):
        model = ec.linear_model(2.0)
        val = ec.single_set_bound(model, Box([-1.0], [1.0], closed_top=True), 1.0,
                                  ec.uniform_noise(-0.1, 0.1), rng)
        assert val == pytest.approx(1.0, abs=1e-12)

    def test_zero_mass_is_zero(self, rng):
        val = ec.single_set_bound(ec.doubling_map(), Box([-1.0], [1.0]), 0.0,
                                  ec.uniform_noise(-0.1, 0.1), rng)
        assert val == 0.0

    def test_doubling_map_empirical_mass(self, rng):
        val = ec.single_set_bound(ec.doubling_map(), Box([-1.0], [1.0]), 0.95,
                                  ec.uniform_noise(-0.1, 0.1), rng)
        assert val == pytest.approx(0.95, abs=1e-12)


class TestRateCollection:
    def test_zero_mass_gives_one(self):
        noise = ec.uniform_noise(-1, 1)
        part = ec.interval_partition(0, 1, 2, noise)
        rc = ec.rate_collection(part, np.array([0.0, 1.0]), noise.cell_probs, eps=0.01)
        assert rc.table[0, 0] == 1.0

    def test_full_mass_gives_eps(self):
        noise = ec.uniform_noise(-1, 1)
        part = ec.interval_partition(0, 1, 1, noise)
        rc = ec.rate_collection(part, np.array([1.0]), noise.cell_probs, eps=0.01)
        assert rc.table[0, 0] == 0.01

    def test_interior_mass_formula(self):
        noise = ec.uniform_noise(-1, 1)
        part = ec.interval_partition(0, 1, 1, noise)
        rc = ec.rate_collection(part, np.array([0.5]), noise.cell_probs, eps=0.1)
        assert rc.table[0, 0] == pytest.approx(0.55, abs=1e-15)

    def test_infeasible_eps_reports_suggestion(self):
        noise = ec.uniform_noise(-1, 1)
        part = ec.interval_partition(0, 1, 2, noise)
        q = np.array([0.01, 0.99])
        rc = ec.rate_collection(part, q, noise.cell_probs, eps=0.5)
        assert not rc.feasible
        assert rc.suggested_eps is not None
        retry = ec.rate_collection(part, q, noise.cell_probs, eps=rc.suggested_eps)
        assert retry.feasible

    @settings(max_examples=150, deadline=None)
    @given(
        masses=st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=6),
        eps=st.floats(min_value=1e-6, max_value=1.0),
    )
    def test_feasible_tables_satisfy_lemma_conditions(self, masses, eps):
        total = sum(masses)
        if total > 1.0:
            masses = [m / total for m in masses]
        noise = ec.uniform_noise(-1, 1)
        part = ec.interval_partition(0, 1, len(masses), noise)
        rc = ec.rate_collection(part, np.array(masses), noise.cell_probs, eps=eps)
        if rc.feasible:
            assert -1e-12 <= rc.one_minus_r <= 1 + 1e-12
            assert np.all(rc.table >= -1e-12) and np.all(rc.table <= 1 + 1e-12)
            interior = [m for m in masses if 0 < m < 1]
            for m in interior:
                thr = 1 - (1 + eps) * (1 - m)
                assert 0 < thr < 1


class TestVerdict:
    def _report(self, mc, ci, cap, diag=True):
        return ec.BoundReport(mc_bound=mc, mc_ci=ci, partition_bound=0.0,
                              single_set_bound=0.0, capacity=cap, diagnostic_pass=diag)

    def test_consistent_when_bound_below_capacity(self):
        assert ec.verdict(self._report(1.0, 0.0, 3.0)) == ec.CONSISTENT

    def test_consistent_at_equality(self):
        assert ec.verdict(self._report(0.0, 0.0, 0.0)) == ec.CONSISTENT

    def test_violation_flagged(self):
        assert ec.verdict(self._report(2.0, 0.1, 1.0)) == ec.VIOLATION_FLAG

    def test_nonpositive_bound_vacuous(self):
        assert ec.verdict(self._report(-0.3, 0.0, 0.0)) == ec.CONSISTENT

    def test_missing_diagnostic_rejected(self):
        with pytest.raises(InvalidArgument):
            ec.verdict(self._report(1.0, 0.0, 3.0, diag=None))

    def test_margin_property(self):
        rep = self._report(1.0, 0.0, 3.0)
        assert rep.margin == 2.0


class TestMinorization:
    def test_partition_bound_below_mc_bound(self, cubic_run, rng):
        model, noise, paths, states = cubic_run
        mc = ec.integrand_bound_mc(model, states, noise, 8000, rng)
        for cells in (1, 4, 16):
            part = ec.interval_partition(-1, 1, cells, noise)
            occ = ec.accumulate(paths[0], part)
            q = occ.state_freq[:cells]
            pb = ec.partition_lower_bound(model, part, q, noise.cell_probs, rng)
            assert pb <= mc.estimate + 3 * mc.ci_halfwidth + 0.01
