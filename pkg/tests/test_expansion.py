"""Alpha-expansion optimizer tests: oracle equivalence, monotonicity,
determinism, and truncation policy."""

import numpy as np
import pytest

from conftest import tiny_problem

from multistitch.expansion import alpha_expansion, expansion_move, initial_labeling
from multistitch.seam import (EnergyParams, EnergyTerms, brute_force_minimize,
                              build_energy_terms, total_energy)


def random_terms(seed, h=2, w=3, n_labels=3, unary_hi=10.0, dup_hi=5.0):
    """Random instance in the acceptance-criterion family: unaries in
    [0, 10], color seam weight in {0, 1}, up to 3 duplication edges."""
    rng = np.random.default_rng(seed)
    hw = h * w
    unary = rng.uniform(0, unary_hi, size=(n_labels, hw))
    params = EnergyParams(seam_color_weight=float(rng.integers(0, 2)),
                          seam_edge_weight=0.0, potts_weight=0.0,
                          duplication_weight=1.0)
    pix = rng.uniform(0, 5, size=(n_labels, hw, 3))
    color_diff = {(a, b): np.linalg.norm(pix[a] - pix[b], axis=1)
                  for a in range(n_labels) for b in range(a + 1, n_labels)}
    grad = np.zeros((n_labels, hw))
    n_dup = int(rng.integers(0, 4))
    da, db, dl, dw = [], [], [], []
    for _ in range(n_dup):
        u, v = rng.choice(hw, 2, replace=False)
        da.append(int(u))
        db.append(int(v))
        dl.append(int(rng.integers(1, n_labels)))
        dw.append(float(rng.uniform(0, dup_hi)))
    return EnergyTerms((h, w), np.zeros_like(unary), unary, color_diff, grad, params,
                       np.asarray(da, np.int64), np.asarray(db, np.int64),
                       np.asarray(dl, np.int64), np.asarray(dw, np.float64))


def test_unary_only_returns_argmin():
    terms = random_terms(0)
    terms.dup_weight[:] = 0.0
    terms.params = EnergyParams(seam_color_weight=0.0, seam_edge_weight=0.0,
                                potts_weight=0.0, duplication_weight=0.0)
    result = alpha_expansion(terms)
    np.testing.assert_array_equal(result.labeling,
                                  np.argmin(terms.unary, axis=0).reshape(terms.shape))


def test_initial_labeling_tie_takes_smallest_label():
    terms = random_terms(1)
    terms.unary_warp[:] = 7.0
    terms.unary_mask[:] = 0.0
    np.testing.assert_array_equal(initial_labeling(terms), 0)


@pytest.mark.parametrize("seed", range(25))
def test_matches_brute_force_on_small_instances(seed):
    terms = random_terms(seed)
    result = alpha_expansion(terms)
    oracle = brute_force_minimize(terms)
    e_opt = total_energy(oracle, terms).total
    assert result.energy.total <= 1.05 * e_opt + 1e-9
    assert result.energy.total >= e_opt - 1e-9


def test_trace_is_monotone_nonincreasing():
    for seed in range(10):
        result = alpha_expansion(random_terms(seed, h=3, w=3))
        totals = [m.breakdown.total for m in result.trace]
        assert all(b <= a + 1e-9 for a, b in zip(totals, totals[1:]))


def test_deterministic_output():
    prob_a = tiny_problem(seed=3, h=4, w=5)
    prob_b = tiny_problem(seed=3, h=4, w=5)
    res_a = alpha_expansion(prob_a)
    res_b = alpha_expansion(prob_b)
    np.testing.assert_array_equal(res_a.labeling, res_b.labeling)
    assert res_a.energy.total == res_b.energy.total


def test_result_never_above_init_energy():
    for seed in range(8):
        prob = tiny_problem(seed=seed, h=3, w=4, full_masks=seed % 2 == 0)
        init = initial_labeling(build_energy_terms(prob))
        init_energy = total_energy(init, prob).total
        result = alpha_expansion(prob, init)
        assert result.energy.total <= init_energy + 1e-12


def test_explicit_init_is_respected():
    prob = tiny_problem(seed=11, h=2, w=2, n_dup=0)
    init = np.ones(prob.shape, dtype=np.int64)
    result = alpha_expansion(prob, init)
    assert result.energy.total <= total_energy(init, prob).total + 1e-12


def test_strict_truncation_raises_on_nonsubmodular_term():
    terms = random_terms(2)
    # force a satisfied duplication condition so expansions on an unrelated
    # label produce a non-submodular binary term
    terms.dup_a = np.asarray([0], np.int64)
    terms.dup_b = np.asarray([5], np.int64)
    terms.dup_label = np.asarray([1], np.int64)
    terms.dup_weight = np.asarray([4.0])
    terms.params = EnergyParams(seam_color_weight=0.0, seam_edge_weight=0.0,
                                potts_weight=0.0, duplication_weight=1.0,
                                truncation="strict")
    labeling = np.zeros(terms.shape, np.int64).ravel()
    labeling[5] = 1
    with pytest.raises(ValueError, match="non-submodular"):
        expansion_move(terms, labeling.reshape(terms.shape), 2)


def test_truncation_counted():
    terms = random_terms(2)
    terms.dup_a = np.asarray([0], np.int64)
    terms.dup_b = np.asarray([5], np.int64)
    terms.dup_label = np.asarray([1], np.int64)
    terms.dup_weight = np.asarray([4.0])
    labeling = np.zeros(terms.shape, np.int64).ravel()
    labeling[5] = 1
    _, truncated = expansion_move(terms, labeling.reshape(terms.shape), 2)
    assert truncated == 1


@pytest.mark.parametrize("seed", range(15))
def test_untruncated_moves_are_exactly_optimal(seed):
    """Without truncation the move graph encodes the binary problem exactly,
    so the min cut must match exhaustive enumeration of all 2^n moves."""
    rng = np.random.default_rng(300 + seed)
    terms = random_terms(seed, h=2, w=3)
    hw = 6
    labeling = rng.integers(0, terms.n_labels, size=hw)
    for alpha in range(terms.n_labels):
        proposal, truncated = expansion_move(terms, labeling.reshape(terms.shape), alpha)
        if truncated:
            continue
        best = np.inf
        for bits in range(2 ** hw):
            trial = labeling.copy()
            for px in range(hw):
                if bits >> px & 1:
                    trial[px] = alpha
            best = min(best, total_energy(trial, terms).total)
        got = total_energy(proposal, terms).total
        assert got == pytest.approx(best, abs=1e-9), f"alpha={alpha}"
