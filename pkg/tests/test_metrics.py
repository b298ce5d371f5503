import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from freqiqa.errors import UndefinedCorrelationError
from freqiqa.metrics import (
    EvalReport,
    LogisticParams,
    evaluate,
    fit_logistic,
    krocc,
    logistic,
    pearson,
    plcc_rmse,
    safe_evaluate,
    srocc,
)

from .oracles import brute_kendall_tau_b, brute_spearman

X5 = [1, 2, 3, 4, 5]
Y5 = [1, 2, 3, 5, 4]


class TestRankCorrelations:
    def test_closed_forms(self):
        assert srocc(X5, Y5) == 0.9
        assert krocc(X5, Y5) == 0.8

    @pytest.mark.parametrize("fn", [srocc, krocc])
    def test_identity_and_reversal(self, fn, rng):
        x = np.sort(rng.uniform(size=30)) + np.arange(30)
        assert fn(x, x) == 1.0
        assert fn(x, -x) == -1.0

    @pytest.mark.parametrize("fn", [srocc, krocc])
    def test_constant_vector(self, fn):
        with pytest.raises(UndefinedCorrelationError):
            fn([3, 3, 3, 3], [1, 2, 3, 4])

    def test_length_checks(self):
        with pytest.raises(ValueError):
            srocc([1, 2, 3], [1, 2])
        with pytest.raises(ValueError):
            srocc([1, 2], [2, 1])

    def test_brute_force_with_ties(self, rng):
        for _ in range(20):
            x = rng.integers(0, 6, size=25).astype(float)
            y = rng.integers(0, 6, size=25).astype(float)
            assert srocc(x, y) == pytest.approx(brute_spearman(x, y), abs=1e-12)
            assert krocc(x, y) == pytest.approx(brute_kendall_tau_b(x, y), abs=1e-12)

    def test_kendall_chunking(self, rng):
        x, y = rng.normal(size=1300), rng.normal(size=1300)
        y[:50] = y[0]
        from freqiqa.metrics import _pair_counts
        assert _pair_counts(x, y, chunk=97) == _pair_counts(x, y, chunk=4096)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 12, elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, 12, elements=st.floats(-1e3, 1e3)))
def test_monotone_transform_invariance(x, y):
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return
    tx = np.arctan(x / 100) * 7 + 3
    # arctan can merge distinct floats; only exact rank-preserving transforms count
    if len(np.unique(tx)) != len(np.unique(x)):
        return
    assert srocc(tx, y) == srocc(x, y)
    assert krocc(tx, y) == krocc(x, y)
    assert srocc(x, y) == -srocc(-x, y)
    assert krocc(x, y) == -krocc(-x, y)


class TestLogistic:
    def test_noise_free_recovery(self, rng):
        beta = [40.0, 0.8, 5.0, 1.5, 30.0]
        x = rng.uniform(0, 10, size=80)
        y = logistic(x, beta)
        p = fit_logistic(x, y)
        rmse = math.sqrt(np.mean((p(x) - y) ** 2))
        assert rmse <= 1e-6 * np.ptp(y)

    def test_linear(self, rng):
        x = rng.uniform(0, 10, size=40)
        y = 2 * x + 1
        p = fit_logistic(x, y)
        plcc, rmse = plcc_rmse(x, y, p)
        assert plcc == pytest.approx(1.0, abs=1e-9)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_logistic(X5, Y5)

    def test_never_raises(self, rng):
        x = rng.normal(size=10)
        p = fit_logistic(x, np.full(10, 2.0), max_nfev=3)
        assert isinstance(p, LogisticParams)


class TestPlccRmse:
    def test_exact_map(self, rng):
        x = rng.uniform(size=20)
        ident = LogisticParams(0, 0, 0, 1, 0)
        plcc, rmse = plcc_rmse(x, x, ident)
        assert plcc == pytest.approx(1.0, abs=1e-15) and rmse == 0.0

    def test_constant_map(self, rng):
        with pytest.raises(UndefinedCorrelationError):
            plcc_rmse(rng.uniform(size=10), rng.uniform(size=10), LogisticParams(0, 0, 0, 0, 1))

    def test_independent_noise(self, rng):
        x, y = rng.normal(size=100), rng.normal(size=100)
        rng.shuffle(y)
        assert abs(evaluate(x, y).plcc) < 0.3

    def test_rmse_order_free(self, rng):
        x, y = rng.normal(size=30), rng.normal(size=30)
        p = LogisticParams(1, 2, 0, 0.5, 0.1)
        perm = rng.permutation(30)
        assert plcc_rmse(x, y, p)[1] == pytest.approx(plcc_rmse(x[perm], y[perm], p)[1], rel=1e-14)

    def test_sign_flip(self, rng):
        x = rng.normal(size=50)
        y = x + rng.normal(scale=0.3, size=50)
        assert pearson(x, y) == pytest.approx(-pearson(-x, y), abs=1e-15)
        assert srocc(x, y) == -srocc(x, -y) and krocc(x, y) == -krocc(x, -y)
        # the logistic absorbs the direction, so the mapped correlation keeps its size
        assert evaluate(x, y).plcc == pytest.approx(evaluate(x, -y).plcc, abs=1e-6)


class TestReport:
    def test_evaluate_fields(self, rng):
        x = rng.uniform(size=40)
        r = evaluate(x, 3 * x + 1)
        assert r.n == 40 and r.srocc == 1.0 and r.krocc == 1.0 and not r.degenerate
        assert r.rmse < 1e-6

    def test_json_roundtrip(self, rng):
        x = rng.uniform(size=30)
        r = evaluate(x, x**2 + rng.normal(scale=0.01, size=30))
        back = EvalReport.from_dict(json.loads(r.to_json()))
        assert back == r
        assert json.loads(r.to_json())["format"] == "freqiqa-eval/1"

    def test_text(self, rng):
        x = rng.uniform(size=10)
        text = evaluate(x, x).to_text()
        keys = dict(line.split("=", 1) for line in text.splitlines())
        assert float(keys["srocc"]) == 1.0 and keys["n"] == "10"

    def test_degenerate(self, rng):
        r = safe_evaluate(np.full(10, 1.0), rng.normal(size=10))
        assert r.degenerate and r.srocc == 0.0 and r.plcc == 0.0 and r.notes
        d = json.loads(r.to_json())
        assert d["logistic"]["b1"] is None
        assert EvalReport.from_dict(d).degenerate
