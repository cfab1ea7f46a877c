from __future__ import annotations

import math
from fractions import Fraction

import pytest

from lqdim.intersect import (
    ball_mass_exponent,
    cantor_level_set,
    fiber_count,
    fiber_report,
    intersection_bound,
    product_project,
)
from lqdim.measures import DiscreteMeasure, level_n_measure, translate
from lqdim.scalars import Quadratic, golden
from lqdim.wifs import preset

F = Fraction
half_half = DiscreteMeasure({F(0): F(1, 2), F(1): F(1, 2)})


def test_product_project_examples():
    got = product_project(half_half, half_half, 1)
    assert got.atoms == {F(0): F(1, 4), F(1): F(1, 2), F(2): F(1, 4)}
    assert product_project(half_half, half_half, 0) == half_half


def test_product_project_matches_double_loop():
    mu = level_n_measure(preset("p_cantor", p=3, D=[0, 2]), 2)
    got = product_project(mu, mu, F(1, 2))
    direct: dict = {}
    for x, p in mu.atoms.items():
        for y, r in mu.atoms.items():
            z = x + F(1, 2) * y
            direct[z] = direct.get(z, 0) + p * r
    assert got.atoms == direct and got.total == 1


def test_product_project_is_projected_ifs_level_measure():
    n = 4
    for t in (F(1, 2), golden(), F(1)):
        mu = level_n_measure(preset("p_cantor", p=3, D=[0, 2]), n)
        proj = level_n_measure(preset("projected_product", p=3, D=[0, 2], t=t), n)
        assert product_project(mu, mu, t) == proj


@pytest.mark.parametrize("c", [F(1, 7), F(-2), golden()])
def test_product_project_commutes_with_translation(c):
    mu = level_n_measure(preset("p_cantor", p=3, D=[0, 2]), 3)
    for t in (F(1, 3), golden()):
        assert product_project(translate(mu, c), mu, t) == translate(product_project(mu, mu, t), c)


def test_cantor_level_set():
    assert cantor_level_set(3, [0, 2], 2) == [F(0), F(2, 9), F(2, 3), F(8, 9)]
    with pytest.raises(ValueError):
        cantor_level_set(3, [0, 1, 2], 2)


def test_fiber_count_examples():
    assert fiber_count(3, [0, 2], 2, 1, 0, F(1, 9)) == 4
    assert fiber_count(3, [0, 2], 2, 1, 5, F(1, 9)) == 0
    assert fiber_count(3, [0, 2], 2, math.sqrt(2), 0, 3.0 ** -2) >= 1
    with pytest.raises(ValueError):
        fiber_count(3, [0, 2], 2, 1, 0, F(1, 27))


def test_fiber_count_matches_brute_force_separated_subset():
    # the greedy scan equals the largest eps-separated subset found by exhaustive search
    from itertools import combinations
    p, D, n, eps = 3, [0, 2], 3, F(1, 27)
    A = cantor_level_set(p, D, n)
    for t, u in ((F(1, 2), F(0)), (F(1, 3), F(1, 9)), (F(2), F(-1, 3))):
        near = [x for x in A if min(abs(x - (t * a + u)) for a in A) <= eps]
        best = 0
        for k in range(len(near), 0, -1):
            if any(all(b - a >= eps for a, b in zip(c, c[1:])) for c in combinations(near, k)):
                best = k
                break
        assert fiber_count(p, D, n, t, u, eps) == best


def test_ball_mass_exponent():
    mass, alpha = ball_mass_exponent(half_half, 0.25)
    assert mass == 0.5 and alpha == pytest.approx(math.log(0.5) / math.log(0.25))
    mass, _ = ball_mass_exponent(half_half, 0.5)
    assert mass == 1.0


def test_intersection_bound_examples():
    b = intersection_bound(3, [0, 2])
    assert b["s"] == pytest.approx(0.63093, abs=1e-5) and b["bound"] == pytest.approx(0.26186, abs=1e-5)
    assert intersection_bound(5, [0, 2])["bound"] == 0.0
    b = intersection_bound(4, [0, 1, 2])
    assert b["s"] == pytest.approx(0.79248, abs=1e-5) and b["bound"] == pytest.approx(0.58496, abs=1e-5)


def test_rational_t_flagged():
    ev = intersection_bound(3, [0, 2], F(1), k_max=3)["evidence"]
    assert ev["regime"] == "rational-t" and not ev["bound_applies"]
    assert ev["overlap"]["k"] == 1


def test_irrational_t_regimes():
    ev = intersection_bound(3, [0, 2], Quadratic(0, 1, 2), k_max=3)["evidence"]
    assert ev["regime"].startswith("irrational") and ev["overlap"] is None
    assert ev["bound_applies"] and all(g["gamma"] > 0 for g in ev["gamma"])
    ev = intersection_bound(3, [0, 2], math.sqrt(2), k_max=3)["evidence"]
    assert ev["regime"].startswith("assumed irrational")


def test_fiber_report_sqrt2():
    rep = fiber_report(3, [0, 2], 9, math.sqrt(2))
    d = rep.as_dict()
    assert d["N_eps"] == rep.count >= 1
    assert rep.s_hat == pytest.approx(rep.s, abs=1e-12)
    assert 0 < rep.alpha_hat <= 1
    assert rep.lemma_holds and rep.count <= 8 * rep.eps ** -(2 * rep.s_hat - rep.alpha_hat)


@pytest.mark.parametrize("t,u", [
    (golden(), F(0)), (Quadratic(0, 1, 2), F(1, 5)), (math.pi / 4, 0.1),
    (F(1, 2), F(0)), (F(1), F(0)), (F(3, 7), F(2, 9)),
])
@pytest.mark.parametrize("n", [5, 7])
def test_fiber_lemma_on_instances(t, u, n):
    rep = fiber_report(3, [0, 2], n, t, u, k_max=2)
    assert rep.lemma_holds, rep.as_dict()
    if isinstance(t, Fraction):
        assert rep.bound["evidence"]["regime"] == "rational-t"
