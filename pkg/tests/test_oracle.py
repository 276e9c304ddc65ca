import math

import numpy as np
import pytest

from flipit_timing import LossSpec, Uniform, Weibull, build_table, lipschitz_constants, pseudo_regret
from flipit_timing.attack_model import FixedCost
from flipit_timing.oracle import (OracleTable, attack_probabilities, clamped_log,
                                  continuous_optimum, random_cost_bound, side_ucb_bound,
                                  discretized_bound, fixed_cost_bound)


def weibull_binary_lambda(x, scale, shape, cd=0.1):
    return (1.0 - np.exp(-(x / scale) ** shape) + cd) / x


def test_single_period(binary, weibull52):
    t = build_table(binary, weibull52, [4.0])
    assert t.x_star == 4.0 and t.gaps.tolist() == [0.0] and t.star_index == 0


def test_weibull_grid_optimum(binary, weibull52, grid19):
    t = build_table(binary, weibull52, grid19)
    lam = weibull_binary_lambda(grid19, 5.0, 2.0)
    k = int(np.argmin(lam))
    assert t.x_star == grid19[k] == 10.0
    assert t.lambda_star == pytest.approx(lam[k], rel=1e-13)
    assert t.lambda_star == pytest.approx(0.10816843611112659, rel=1e-12)
    assert np.allclose(t.lam, lam, rtol=1e-13)


def test_weibull_grid_optimum_monte_carlo(binary, weibull52, grid19):
    a = weibull52.sample(np.random.default_rng(77), 10**6)
    mc = np.array([np.mean((x > a) + 0.1) for x in grid19]) / grid19
    assert int(np.argmin(mc)) == 18
    t = build_table(binary, weibull52, grid19)
    assert np.max(np.abs(mc - t.lam)) < 2e-3


def test_uniform_three_periods(binary):
    t = build_table(binary, Uniform(1, 3), [1.0, 2.0, 3.0])
    assert t.lam == pytest.approx([0.1, 0.3, 1.1 / 3], rel=1e-14)
    assert t.x_star == 1.0


def test_ties_go_to_shortest(binary):
    # no defense cost and no attack before 20: every period has lambda = 0
    t = build_table(LossSpec("binary", 0.0), Uniform(20, 30), [2.0, 3.0, 5.0])
    assert t.lambda_star == 0.0 and t.x_star == 2.0 and t.star_index == 0


def test_gap_invariants(linear10, grid19):
    t = build_table(linear10, Weibull(7.3, 1.7), grid19)
    assert np.all(t.gaps >= 0)
    assert t.gaps[t.star_index] == 0.0
    assert t.lambda_star == t.lam.min()
    assert np.allclose(t.gaps, t.l - t.periods * t.lambda_star, atol=1e-15)


def test_index_of_rejects_unknown(binary, weibull52, grid19):
    t = build_table(binary, weibull52, grid19)
    assert t.index_of([1.0, 10.0]).tolist() == [0, 18]
    with pytest.raises(KeyError):
        t.index_of(1.25)


def _toy_table():
    p = np.array([1.0, 2.0])
    l = np.array([0.2, 0.35])
    lam = l / p
    return OracleTable(p, l, lam, 2.0, 0.175, np.array([0.025, 0.0]), 1)


def test_pseudo_regret_zero_at_optimum():
    assert pseudo_regret([2.0] * 50, _toy_table()).total == 0.0


def test_pseudo_regret_constant_gap():
    p = np.array([1.0, 2.0])
    t = OracleTable(p, np.array([0.15, 0.2]), np.array([0.15, 0.1]), 2.0, 0.1,
                    np.array([0.05, 0.0]), 1)
    r = pseudo_regret([1.0] * 100, t)
    assert r.total == pytest.approx(5.0, abs=1e-12)
    assert r.cumulative[-1] == pytest.approx(5.0, abs=1e-12)


def test_pseudo_regret_two_formulas_agree(binary, weibull52, grid19):
    t = build_table(binary, weibull52, grid19)
    played = np.random.default_rng(3).choice(grid19, 5000)
    r = pseudo_regret(played, t)
    direct = math.fsum(t.l[t.index_of(played)]) - t.lambda_star * math.fsum(played)
    assert abs(r.total - direct) <= 1e-9 * max(1, abs(direct))
    assert np.all(np.diff(r.cumulative) >= 0)


def test_pseudo_regret_unknown_period(binary, weibull52, grid19):
    with pytest.raises(KeyError):
        pseudo_regret([3.3], build_table(binary, weibull52, grid19))


def test_lipschitz_uniform_examples(binary):
    assert lipschitz_constants(binary, Uniform(1, 3), 1, 10) == (0.5, 45.0)
    L, Lp = lipschitz_constants(binary, Uniform(0, 20), 1, 10)
    assert L == pytest.approx(0.05) and Lp == pytest.approx(4.5)


def test_lipschitz_weibull_matches_max_density(binary, weibull52):
    L, Lp = lipschitz_constants(binary, weibull52, 1, 10)
    # Weibull(5, 2) density peaks at 5/sqrt(2) with value (2/5) e^{-1/2} / sqrt(2)
    peak = 0.4 / math.sqrt(2) * math.exp(-0.5)
    assert L == pytest.approx(peak, rel=1e-6)
    assert Lp == pytest.approx(L * 90)


def test_continuous_optimum_uniform(binary):
    x, lam = continuous_optimum(binary, Uniform(1, 3), 1.0, 10.0)
    assert x == 1.0 and lam == pytest.approx(0.1)


def test_continuous_table_uses_interval_optimum(binary):
    grid = np.array([2.8, 4.6, 6.4, 8.2, 10.0])
    t = build_table(binary, Uniform(1, 3), grid, continuous=(1.0, 10.0))
    assert t.star_index is None and t.lambda_star == pytest.approx(0.1)
    assert np.all(t.gaps > 0)


def test_side_ucb_bound_formula(binary, weibull52, grid19):
    t = build_table(binary, weibull52, grid19)
    T = 10_000
    pos = t.gaps[t.gaps > 0]
    gamma = (1 + 10 / 1) ** 2
    assert gamma == 121
    want = (48 * gamma * max(1.0, math.log(T * 20 * pos.max() ** 2 / 4)) / pos.min()
            + np.sum(pos + 48 / pos))
    assert side_ucb_bound(t, T) == pytest.approx(want, rel=1e-12)


def test_side_ucb_bound_single_arm(binary, weibull52):
    assert side_ucb_bound(build_table(binary, weibull52, [3.0]), 1000) == 0.0


def test_discretized_bound_uniform():
    T = 1000
    n = 10
    b = discretized_bound(45.0, n, T, 1.0, 10.0, 0.9)
    want = 3 * 45 * T / n + 48 * 121 * math.log(T * 11) / (45 / n) + 48 * n**2 / 45 + n * 0.9
    assert b == pytest.approx(want, rel=1e-12)


def test_clamped_log():
    assert clamped_log(0.5) == 1.0 and clamped_log(math.e**3) == pytest.approx(3.0)


def test_cost_bounds_dominate_side_ucb_bound(weibull52, grid19):
    spec = LossSpec("binary", 0.1, cost=FixedCost(3.2))
    t = build_table(spec, weibull52, grid19)
    p = attack_probabilities(spec, weibull52, grid19, 3.2)
    assert np.all(p[grid19 <= 3.2] == 0) and np.all(p[grid19 > 3.2] > 0)
    b3 = fixed_cost_bound(t, 10_000, 3.2, p)
    assert b3 >= side_ucb_bound(t, 10_000)
    assert random_cost_bound(t, 10_000) > 0


def test_table_csv_and_digest(binary, weibull52, grid19, tmp_path):
    t = build_table(binary, weibull52, grid19)
    text = t.to_csv(tmp_path / "o.csv")
    assert text.splitlines()[0] == "period,l,lambda,gap"
    assert len(text.splitlines()) == 20 and "np.float64" not in text
    assert t.digest() == build_table(binary, weibull52, grid19).digest()
    assert t.digest() != build_table(binary, Weibull(5.1, 2), grid19).digest()
