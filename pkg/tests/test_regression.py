import math

import numpy as np
import pytest
from scipy import stats
from scipy.optimize import minimize

from rpredict import regression as rg
from rpredict import sfrl
from rpredict.minimax import HullSet, MomentSet
from rpredict.probkit import LOG2E, FiniteJoint

SCALAR = MomentSet(0.0, 0.0, 1.0, 1.0, 0.95)
VECTOR = MomentSet([1, -1], 2.0, [[2, 0.5], [0.5, 1]], 4.0, [0.8, -0.3])


def gaussian_cost(G, a, var, lam):
    """Cost of Yhat = a w'X + b + N(0, var) under the Gaussian member, by direct algebra."""
    s = G.explained
    risk = G.sigma_y2 - 2 * a * s + a * a * s + var
    info = 0.5 * math.log2((a * a * s + var) / var)
    return risk + lam * info


def numeric_oracle(G, lam):
    f = lambda z: gaussian_cost(G, z[0], math.exp(z[1]), lam)
    best = min((minimize(f, x0, method="Nelder-Mead",
                         options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000})
                for x0 in ([0.5, -1.0], [0.9, -4.0], [0.1, 0.0])), key=lambda r: r.fun)
    return best.fun, best.x[0], math.exp(best.x[1])


class TestClosedForm:
    def test_frozen_scalar(self):
        # a = 1 - beta/s, beta = 0.5 log2(e) / 2, s = 0.9025
        sol = rg.solve_regression(SCALAR, 0.5)
        assert sol.active
        assert sol.a == pytest.approx(0.6003614845182927, abs=1e-13)
        assert sol.sigma_z2 == pytest.approx(0.21653463411381926, abs=1e-13)
        assert sol.risk == pytest.approx(0.458173760222241, abs=1e-13)
        assert sol.info_bits == pytest.approx(0.6616162320837744, abs=1e-13)
        assert sol.cost == pytest.approx(0.7889818762641282, abs=1e-13)
        assert isinstance(sol.cost, float)

    def test_frozen_vector(self):
        sol = rg.solve_regression(VECTOR, 0.3)
        assert VECTOR.explained == pytest.approx(0.6057142857142858, abs=1e-14)
        assert sol.b == pytest.approx(1.283816455016193, abs=1e-12)
        assert sol.cost == pytest.approx(3.8334262550118856, abs=1e-12)

    @pytest.mark.parametrize("G", [SCALAR, VECTOR, MomentSet(0, 0, 4.0, 2.0, 1.2)])
    @pytest.mark.parametrize("frac", [0.05, 0.3, 0.8])
    def test_against_numeric_optimizer(self, G, frac):
        lam = frac * rg.threshold_lambda(G)
        sol = rg.solve_regression(G, lam)
        val, a, var = numeric_oracle(G, lam)
        assert sol.cost <= val + 1e-12
        assert sol.cost == pytest.approx(val, abs=1e-8)
        assert sol.a == pytest.approx(a, abs=1e-4)
        assert sol.sigma_z2 == pytest.approx(var, rel=1e-3)
        assert sol.cost == pytest.approx(gaussian_cost(G, sol.a, sol.sigma_z2, lam), abs=1e-12)

    def test_threshold(self):
        top = rg.threshold_lambda(SCALAR)
        assert top == pytest.approx(2 * 0.9025 / LOG2E)
        below = rg.solve_regression(SCALAR, top * (1 - 1e-9))
        at = rg.solve_regression(SCALAR, top)
        assert below.active and not at.active
        assert at.cost == at.risk == 1.0 and at.info_bits == 0.0 and at.b == 0.0
        assert below.cost == pytest.approx(at.cost, abs=1e-8)
        assert not rg.solve_regression(SCALAR, 10 * top).active

    def test_cost_is_concave_and_nondecreasing(self):
        lams = np.linspace(0.01, 2.0, 60)
        c = np.array([rg.solve_regression(VECTOR, lam).cost for lam in lams])
        assert np.all(np.diff(c) >= 0)
        assert np.all(np.diff(c, 2) <= 1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            rg.solve_regression(SCALAR, 0.0)
        with pytest.raises(TypeError):
            rg.solve_regression(HullSet((FiniteJoint([[1.0]]),)), 0.1)
        with pytest.raises(ValueError):
            rg.GaussianSource(SCALAR, "cauchy")


class TestSource:
    @pytest.mark.parametrize("shape", ["gaussian", "uniform"])
    def test_moments(self, shape):
        x, y = rg.GaussianSource(VECTOR, shape).sample(np.random.default_rng(0), 200000)
        np.testing.assert_allclose(x.mean(0), VECTOR.mu_x, atol=0.02)
        np.testing.assert_allclose(np.cov(x.T), VECTOR.sigma_x, atol=0.03)
        np.testing.assert_allclose([np.cov(x[:, i], y)[0, 1] for i in range(2)],
                                   VECTOR.c_xy, atol=0.03)
        assert y.var() == pytest.approx(4.0, rel=0.02)


class TestScheme:
    @pytest.mark.parametrize("x", [-2.0, -0.5, 0.0, 0.7, 2.5])
    def test_channel_output_is_exactly_gaussian(self, x):
        sol = rg.solve_regression(SCALAR, 0.4)
        sch = rg.regression_scheme(sol, SCALAR, 0.4, seed=3)
        n = 20000
        _, yh = sfrl.encode_batch(np.full(n, x), sch.channel,
                                  sfrl.split_seeds(int(1000 * x) + 17, np.arange(n)))
        m, v = sol.a * 0.95 * x, sol.sigma_z2
        z = (yh - m) / math.sqrt(v)
        assert abs(z.mean()) < 3 / math.sqrt(n)
        assert abs(z.var() - 1) < 3 * math.sqrt(2 / n)
        assert abs(stats.kurtosis(z)) < 3 * math.sqrt(24 / n)
        assert stats.kstest(z, "norm").pvalue > 1e-3

    def test_reference_is_output_law(self):
        sol = rg.solve_regression(VECTOR, 0.3)
        ch = rg.regression_scheme(sol, VECTOR, 0.3, 0).channel
        w = VECTOR.weights
        assert ch.ref_var == pytest.approx(sol.a ** 2 * w @ VECTOR.sigma_x @ w + sol.sigma_z2)
        assert ch.ref_mean == pytest.approx(float(ch.mean(VECTOR.mu_x[None, :])[0]))

    def test_degenerate_scheme(self):
        sol = rg.solve_regression(SCALAR, 5.0)
        pt = sfrl.run_one_shot(rg.regression_scheme(sol, SCALAR, 5.0, 1),
                               rg.GaussianSource(SCALAR), "squared", 20000, 2)
        assert pt.rate_bits == 1.0
        assert abs(pt.risk - 1.0) < 4 * pt.stderr_risk

    @pytest.mark.parametrize("shape", ["gaussian", "uniform"])
    def test_sweep_between_bounds(self, shape):
        G = SCALAR
        lams = [0.05, 0.3, 1.0]
        pts = rg.figure3_sweep(G, lams, n_mc=20000, seed=4,
                               source=rg.GaussianSource(G, shape))
        for p in pts:
            assert p.lower_rate - 3 * p.stderr_rate <= p.scheme_rate <= p.upper_rate
            # expected squared error depends on second moments only
            assert abs(p.scheme_risk - p.lower_risk) < 4 * p.stderr_risk
            assert len(p.csv_row()) == len(rg.Fig3Point.CSV_HEADER) == 6

    def test_lower_curve_is_monotone(self):
        pts = rg.figure3_sweep(SCALAR, rg.default_lambda_grid(SCALAR), n_mc=500, seed=0)
        rates = [p.lower_rate for p in pts]
        risks = [p.lower_risk for p in pts]
        order = np.argsort(rates)
        assert np.all(np.diff(np.array(risks)[order]) <= 1e-15)

    def test_default_grid(self):
        g = rg.default_lambda_grid(SCALAR)
        assert g[0] == pytest.approx(0.01) and g[-1] == pytest.approx(rg.threshold_lambda(SCALAR))
        assert np.all(np.diff(g) > 0)

    def test_upper_rate(self):
        assert rg.one_shot_upper_rate(0.0) == 6.0
        assert rg.one_shot_upper_rate(1.0) == pytest.approx(9.0)
