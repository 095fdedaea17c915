
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rpredict.experiments import classification as cl
from rpredict.probkit import Kernel, LossMatrix, Pmf, mutual_information
from rpredict.riskinfo import classification_cost, risk_info_cost

SMALL = [(3, 2), (5, 2), (4, 3), (8, 2)]
DEFAULT = cl.TwoSourceSpec()


def block_kernel(spec, est):
    """Materialize the block estimator on the small joint's alphabet."""
    k1, k2 = spec.ks
    rows = np.zeros((k1 * k2, k1 + k2))
    x1, x2 = np.divmod(np.arange(k1 * k2), k2)
    if est.branch == 1:
        rows[:, :k1] = est.tail
        rows[np.arange(k1 * k2), x1] = est.head
    else:
        rows[:, k1:] = est.tail
        rows[np.arange(k1 * k2), k1 + x2] = est.head
    return Kernel(rows)


class TestClosedForm:
    @pytest.mark.parametrize("k1,k2", SMALL)
    @pytest.mark.parametrize("lam", [0.02, 0.1, 0.4, 2.0])
    def test_matches_generic_solver(self, k1, k2, lam):
        spec = cl.TwoSourceSpec(k1, k2, 0.6, 0.4)
        P = spec.joint()
        cost, _ = classification_cost(P, lam)
        assert cl.two_source_optimal_cost(spec, lam) == pytest.approx(cost, abs=1e-9)

    @pytest.mark.parametrize("k1,k2", SMALL)
    @pytest.mark.parametrize("lam", [0.05, 0.3, 1.5])
    def test_block_estimator_attains_cost(self, k1, k2, lam):
        spec = cl.TwoSourceSpec(k1, k2, 2 / 3, 1 / 3)
        est = cl.two_source_optimal_estimator(spec, lam)
        k = block_kernel(spec, est)
        P = spec.joint()
        assert risk_info_cost(P, k, LossMatrix.zero_one(k1 + k2), lam) == pytest.approx(
            cl.two_source_optimal_cost(spec, lam), abs=1e-10)
        info, risk = cl.optimal_point(spec, lam)
        assert info == pytest.approx(mutual_information(P.px, k), abs=1e-10)
        assert risk + lam * info == pytest.approx(cl.two_source_optimal_cost(spec, lam), abs=1e-10)

    @given(st.floats(0.003, 1000.0))
    def test_ec_never_beats_optimal(self, lam):
        assert cl.two_source_ec_cost(DEFAULT, lam) >= cl.two_source_optimal_cost(DEFAULT, lam) - 1e-15
        i, r = cl.ec_point(DEFAULT, lam)
        assert r + lam * i == pytest.approx(cl.two_source_ec_cost(DEFAULT, lam), abs=1e-9)

    def test_limits(self):
        assert cl.two_source_optimal_cost(DEFAULT, 1e6) == pytest.approx(5 / 6, abs=1e-6)
        assert cl.optimal_point(DEFAULT, 1e-3) == pytest.approx((32.0, 1 / 3), abs=1e-12)

    def test_branch_switch(self):
        # asymptotically the branches are q1/lam - 32 and q2/lam - 1
        assert cl.two_source_optimal_estimator(DEFAULT, 1 / 93 * (1 - 1e-6)).branch == 1
        assert cl.two_source_optimal_estimator(DEFAULT, 1 / 93 * (1 + 1e-6)).branch == 2

    def test_branch_is_continuous_at_cutover(self):
        for k in (2, 7, 2 ** 32):
            lo, hi = cl._log2_branch(512 - 1e-9, k), cl._log2_branch(512.0, k)
            assert hi - lo == pytest.approx(1e-9, abs=1e-10)

    def test_huge_alphabet_is_finite(self):
        for lam in (1e-4, 0.01, 1.0, 100.0):
            c = cl.two_source_optimal_cost(DEFAULT, lam)
            assert 1 / 3 - 1e-12 <= c <= 5 / 6 + 1e-12


class TestGapRate:
    def test_frozen(self):
        assert cl.unbounded_gap_rate(2 ** 32) == pytest.approx(15.000000000167951, abs=1e-9)
        assert cl.unbounded_gap_rate(16) == pytest.approx(1.0465547021957406, abs=1e-12)

    @pytest.mark.parametrize("k1", [15, 16, 40, 257])
    def test_direct_mutual_information(self, k1):
        rows = np.full((k1, k1), 0.5 / (k1 - 1))
        np.fill_diagonal(rows, 0.5)
        mi = mutual_information(Pmf.uniform(k1), Kernel(rows))
        assert cl.unbounded_gap_rate(k1) == pytest.approx(mi, abs=1e-12)

    def test_threshold(self):
        assert cl.unbounded_gap_rate(15) > 1.0
        with pytest.raises(ValueError):
            cl.unbounded_gap_rate(14)


class TestFigure4:
    def test_time_sharing(self):
        v = np.array(cl.time_sharing_vertices(DEFAULT))
        np.testing.assert_allclose(v, [(0.0, 5 / 6), (1.0, 2 / 3), (32.0, 1 / 3)], atol=1e-15)

    def test_lower_hull_drops_dominated(self):
        assert cl._lower_hull([(0, 1.0), (1, 0.9), (2, 0.2)]) == [(0, 1.0), (2, 0.2)]
        assert cl._lower_hull([(0, 0.5), (3, 0.5)]) == [(0, 0.5)]

    def test_sweep_rows(self):
        lams = cl.default_fig4_lambdas()
        assert lams.size == 81 and lams[0] == pytest.approx(0.005) and lams[-1] == pytest.approx(100)
        rows = cl.figure4_sweep(DEFAULT, lams[::10])
        series = {r[0] for r in rows}
        assert series == {"optimal_info", "optimal_rate_upper", "estimate_compress_info", "time_sharing"}
        assert all(len(r) == len(cl.FIG4_HEADER) for r in rows)
        opt = [r for r in rows if r[0] == "optimal_info"]
        up = [r for r in rows if r[0] == "optimal_rate_upper"]
        for a, b in zip(opt, up):
            assert b[2] >= a[2] + 5 and a[4] == b[4]

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            cl.TwoSourceSpec(0, 2)
        with pytest.raises(ValueError):
            cl.TwoSourceSpec(4, 2, 0.5, 0.6)
        with pytest.raises(ValueError):
            DEFAULT.joint()
        with pytest.raises(ValueError):
            cl.two_source_optimal_cost(DEFAULT, 0.0)
