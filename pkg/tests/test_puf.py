import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ferropuf import puf as pf
from ferropuf.device import DeviceParams
from ferropuf.errors import DimensionError, StateError

VDD = 0.5


def all_challenges(n):
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.uint8)


# --------------------------------------------------------------- capacitor weights


def test_ideal_capacitors_are_uniform():
    w, clamps = pf.sample_cap_weights(7, pf.CapMismatchModel(0.0), np.random.default_rng(0))
    assert np.all(w == 1 / 7) and clamps == 0


def test_weight_normalization_by_hand():
    w, _ = pf.normalize_cap_deviations([0.1, -0.1])
    np.testing.assert_allclose(w, [0.55, 0.45], rtol=1e-15)


def test_extreme_deviation_is_clamped_and_counted():
    w, clamps = pf.normalize_cap_deviations([-1.5, 0.0, 0.0])
    assert clamps == 1 and np.all(w > 0) and w.sum() == pytest.approx(1.0)


def test_weight_spread_matches_delta_method():
    n, sigma = 27, 0.05
    rng = np.random.default_rng(3)
    ws = np.array([pf.sample_cap_weights(n, pf.CapMismatchModel(sigma), rng)[0]
                   for _ in range(10_000)])
    # first order: w_i ~ (1 + d_i - mean(d)) / n  ->  std = sigma / n * sqrt(1 - 1/n)
    analytic = sigma / n * math.sqrt(1 - 1 / n)
    got = ws.std(axis=0).mean()
    assert got == pytest.approx(analytic, rel=0.10)
    assert got == pytest.approx(sigma / n, rel=0.10)
    np.testing.assert_allclose(ws.sum(axis=1), 1.0, atol=1e-12)


# -------------------------------------------------------------------- registration


def test_registration_splits_cells_to_rails():
    rng = np.random.default_rng(0)
    cell = pf.new_cell(DeviceParams(), rng)
    for _ in range(20):
        s = pf.register_cell(cell, pf.WriteConfig(), VDD, rng)
        low, high = (cell.t1, cell.t2) if s == 1 else (cell.t2, cell.t1)
        from ferropuf.device import read_vx

        assert read_vx(low, 0.9, VDD) == pytest.approx(VDD, rel=0.01)
        assert read_vx(high, 0.9, VDD) == pytest.approx(0.0, abs=0.01 * VDD)


def test_state_follows_delta_vx_sign():
    row = pf.new_row(27, np.random.default_rng(1))
    rec = pf.register_row(row, pf.WriteConfig(), np.random.default_rng(2))
    np.testing.assert_array_equal(rec.states, (rec.delta_vx > 0).astype(np.uint8))
    np.testing.assert_allclose(rec.delta_vx, rec.vx_cycle2 - rec.vx_cycle1)


def test_no_c2c_noise_is_flagged_degenerate():
    rng = np.random.default_rng(0)
    cell = pf.new_cell(DeviceParams(sigma_c2c=0.0), rng)
    assert pf.register_cell(cell, pf.WriteConfig(), VDD, rng) == 0
    assert cell.degenerate and cell.tie_resamples == pf.MAX_TIE_RESAMPLES
    row = pf.PufRow([cell], [1.0])
    with pytest.warns(RuntimeWarning):
        rec = pf.register_row(row, pf.WriteConfig(), rng)
    assert rec.degenerate == 1


def test_state_balance_binomial_bound():
    rng = np.random.default_rng(5)
    row = pf.new_row(27, rng)
    ones = sum(int(pf.register_row(row, pf.WriteConfig(), rng).states.sum()) for _ in range(10))
    # 270 fair draws: mean 135, sd sqrt(270)/2
    assert abs(ones - 135) <= 3 * math.sqrt(270) / 2


def test_single_cell_record_lengths():
    row = pf.new_row(1, np.random.default_rng(0))
    rec = pf.register_row(row, pf.WriteConfig(), np.random.default_rng(1))
    assert len(rec.states) == len(rec.delta_vx) == len(list(rec.rows())) == 1


def test_registration_determinism():
    def states(seed):
        row = pf.new_row(27, np.random.default_rng(seed))
        rng = np.random.default_rng(seed + 100)
        return [pf.register_row(row, pf.WriteConfig(), rng).states.tolist() for _ in range(10)]

    assert states(3) == states(3)


def test_reconfigure_requires_registration():
    row = pf.new_row(5, np.random.default_rng(0))
    with pytest.raises(StateError):
        pf.reconfigure(row, pf.WriteConfig(), np.random.default_rng(0))


def test_reconfigure_changes_about_half_the_states():
    rng = np.random.default_rng(7)
    array = pf.new_array(27, 4, rng)
    pf.register_array(array, pf.WriteConfig(), rng)
    changed = total = 0
    for _ in range(50):
        before = np.concatenate([r.states for r in array.rows])
        pf.reconfigure(array, pf.WriteConfig(), rng)
        after = np.concatenate([r.states for r in array.rows])
        changed += int(np.count_nonzero(before != after))
        total += before.size
    # 5400 fair comparisons
    assert abs(changed / total - 0.5) < 4 * 0.5 / math.sqrt(total)


def test_reconfigure_same_stream_same_states():
    def run():
        row = pf.new_row(27, np.random.default_rng(1))
        pf.register_row(row, pf.WriteConfig(), np.random.default_rng(2))
        pf.reconfigure(row, pf.WriteConfig(), np.random.default_rng(9))
        return row.states.tolist()

    assert run() == run()


# ------------------------------------------------------------------- response path


def test_unregistered_cell_has_no_vx():
    cell = pf.new_cell(DeviceParams(), np.random.default_rng(0))
    with pytest.raises(StateError):
        pf.cell_vx(cell, 1, VDD)


@pytest.mark.parametrize("state,challenge", list(itertools.product((0, 1), repeat=2)))
def test_cell_vx_truth_table(state, challenge):
    row = pf.PufRow.from_states([state])
    expected = VDD * (state ^ challenge)
    assert pf.cell_vx(row.cells[0], challenge, VDD) == pytest.approx(expected, abs=0.01 * VDD)


def test_vsum_hand_example():
    row = pf.PufRow.from_states([1, 0, 1])
    # XOR bits (1, 0, 0) -> one third of vdd
    assert pf.vsum(row, [0, 0, 1]) == pytest.approx(VDD / 3, abs=0.01 * VDD)


def test_vsum_all_miss_is_ground():
    states = [1, 0, 0, 1, 1]
    row = pf.PufRow.from_states(states)
    assert pf.vsum(row, states) == pytest.approx(0.0, abs=0.01 * VDD)
    assert pf.response_bit(row, [1 - s for s in states]) == 1


def test_vsum_length_mismatch():
    row = pf.PufRow.from_states([0, 1, 1])
    with pytest.raises(DimensionError):
        pf.vsum(row, [0, 1])


def test_vsum_groups_are_separated():
    n = 6
    row = pf.PufRow.from_states([0, 1, 0, 1, 1, 0])
    c = all_challenges(n)
    v = row.vsums(c)
    hits = np.count_nonzero(c ^ row.states, axis=1)
    for h in range(n + 1):
        group = v[hits == h]
        assert np.ptp(group) < 1e-3 * VDD
    centers = [v[hits == h].mean() for h in range(n + 1)]
    assert np.all(np.diff(centers) > 0.9 * VDD / n)


def test_comparator_tie_reads_zero():
    row = pf.PufRow.from_states([0, 0, 0, 0])
    # two hits out of four, ideal weights: Vsum sits on the threshold up to residue
    c = np.array([[1, 1, 0, 0]], dtype=np.uint8)
    assert pf.ground_truth_bit(row.states, c[0]) == 0
    exact = pf.PufRow([pf.PufCell(None, None, 0)] * 4, np.full(4, 0.25))
    exact._vx_table = (np.zeros(4), np.full(4, VDD))
    assert exact.vsums(c)[0] == 0.5 * VDD
    assert exact.responses(c)[0] == 0 and exact.tie_count(c) == 1


def test_ground_truth_popcount_oracle():
    rng = np.random.default_rng(8)
    for _ in range(200):
        s = rng.integers(0, 2, 27)
        c = rng.integers(0, 2, 27)
        popcount = sum(int(a) != int(b) for a, b in zip(s, c))
        assert pf.ground_truth_bit(s, c) == (1 if popcount - 13.5 > 0 else 0)


def test_ideal_row_equals_ground_truth():
    rng = np.random.default_rng(9)
    states = rng.integers(0, 2, 9)
    row = pf.PufRow.from_states(states)
    c = all_challenges(9)
    np.testing.assert_array_equal(row.responses(c), pf.ground_truth_bits(states, c))


def test_strong_puf_exhaustive_challenge_space():
    n = 12
    row = pf.PufRow.from_states(np.random.default_rng(1).integers(0, 2, n))
    bits = row.responses(all_challenges(n))
    assert bits.shape == (2**n,) and set(np.unique(bits)) <= {0, 1}
    # number of challenges with more than n/2 mismatches, independent of the states
    expected = sum(math.comb(n, j) for j in range(n // 2 + 1, n + 1))
    assert int(bits.sum()) == expected


@pytest.mark.parametrize("n", [1, 3, 5, 7, 9])
def test_linear_model_equivalence(n):
    c = all_challenges(n)
    x = 1 - 2 * c.astype(int)
    for states in itertools.product((0, 1), repeat=n):
        s = 1 - 2 * np.array(states)
        linear = (x @ s < 0).astype(np.uint8)
        np.testing.assert_array_equal(pf.ground_truth_bits(states, c), linear)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_complement_symmetry(n):
    c = all_challenges(n)
    for states in itertools.product((0, 1), repeat=n):
        s = np.array(states, dtype=np.uint8)
        np.testing.assert_array_equal(pf.ground_truth_bits(s, c), pf.ground_truth_bits(1 - s, 1 - c))
        row, comp = pf.PufRow.from_states(s), pf.PufRow.from_states(1 - s)
        np.testing.assert_array_equal(row.responses(c), comp.responses(1 - c))


def test_sense_offset_is_static_and_bounded():
    rng = np.random.default_rng(0)
    offsets = [pf.new_row(5, rng, offset_rel=0.005).sense_offset for _ in range(500)]
    assert max(abs(o) for o in offsets) <= 0.005 * VDD
    assert min(offsets) < 0 < max(offsets)


def test_temporal_stability_with_mismatch_and_offset():
    rng = np.random.default_rng(4)
    for sigma in (0.0, 0.01, 0.05):
        row = pf.new_row(27, rng, mismatch=pf.CapMismatchModel(sigma))
        pf.register_row(row, pf.WriteConfig(), rng)
        c = pf.random_challenges(27, 100, rng)
        first = row.responses(c)
        for _ in range(1000):
            assert np.array_equal(row.responses(c), first)


# ------------------------------------------------------------------ XOR groups


def test_xor_group_k1_is_row():
    rng = np.random.default_rng(2)
    array = pf.PufSetup().registered_array(27, 1, rng)
    c = pf.random_challenges(27, 200, rng)
    np.testing.assert_array_equal(pf.response_vector(array, c), array.rows[0].responses(c))


def test_xor_of_identical_rows_cancels():
    def row():
        r = pf.new_row(27, np.random.default_rng(5))
        pf.register_row(r, pf.WriteConfig(), np.random.default_rng(6))
        return r

    array = pf.PufArray([row(), row()])
    c = pf.random_challenges(27, 200, np.random.default_rng(7))
    assert not pf.response_vector(array, c).any()


def test_response_layout_100_by_100():
    rng = np.random.default_rng(0)
    row = pf.new_row(27, rng)
    c = pf.random_challenges(27, 100, rng)
    m = []
    for _ in range(100):
        pf.register_row(row, pf.WriteConfig(), rng)
        m.append(pf.response_vector(row, c))
    assert np.array(m).shape == (100, 100)


def test_unregistered_row_refuses_responses():
    row = pf.new_row(5, np.random.default_rng(0))
    with pytest.raises(StateError):
        pf.response_vector(row, np.zeros((1, 5), dtype=np.uint8))


def test_array_rows_must_match():
    rng = np.random.default_rng(0)
    with pytest.raises(DimensionError):
        pf.PufArray([pf.new_row(5, rng), pf.new_row(6, rng)])


# ------------------------------------------------------------------------ arbiter


def test_parity_transform_hand_values():
    np.testing.assert_array_equal(pf.parity_features([[0]]), [[1, 1]])
    np.testing.assert_array_equal(pf.parity_features([[1]]), [[-1, 1]])
    np.testing.assert_array_equal(pf.parity_features([[1, 0, 1]]), [[1, -1, -1, 1]])
    np.testing.assert_array_equal(pf.parity_features(np.zeros((1, 9))), np.ones((1, 10)))


@given(st.lists(st.integers(0, 1), min_size=1, max_size=16))
def test_parity_transform_matches_product_definition(bits):
    phi = pf.parity_features([bits])[0]
    n = len(bits)
    for i in range(n):
        assert phi[i] == math.prod(1 - 2 * b for b in bits[i:])
    assert phi[n] == 1


def test_arbiter_weights_immutable():
    puf = pf.new_arbiter(8, 2, np.random.default_rng(0))
    assert puf.weights.shape == (2, 9)
    with pytest.raises(ValueError):
        puf.weights[0, 0] = 1.0


def test_arbiter_xor_of_arms():
    rng = np.random.default_rng(1)
    puf = pf.new_arbiter(16, 3, rng)
    c = pf.random_challenges(16, 500, rng)
    arms = [pf.ArbiterPuf(w[None, :]).responses(c) for w in puf.weights]
    np.testing.assert_array_equal(puf.responses(c), arms[0] ^ arms[1] ^ arms[2])
    assert pf.arbiter_response(puf, c[0]) == puf.responses(c[:1])[0]


def test_arbiter_uniqueness_about_half():
    rng = np.random.default_rng(2)
    c = pf.random_challenges(32, 1000, rng)
    r = np.array([pf.new_arbiter(32, 1, rng).responses(c) for _ in range(30)])
    d = [np.mean(r[i] != r[j]) for i, j in itertools.combinations(range(30), 2)]
    assert abs(np.mean(d) - 0.5) < 0.05


@pytest.mark.parametrize("n,k", [(0, 1), (4, 0)])
def test_arbiter_rejects_bad_shape(n, k):
    with pytest.raises(ValueError):
        pf.new_arbiter(n, k, np.random.default_rng(0))


# --------------------------------------------------------------------------- CRPs


def test_crp_generate_count_must_be_positive():
    with pytest.raises(ValueError):
        pf.crp_generate(pf.new_arbiter(4, 1, np.random.default_rng(0)), 0, np.random.default_rng(0))


def test_crp_generate_deterministic_bytes():
    def make():
        puf = pf.new_arbiter(27, 2, np.random.default_rng(1))
        return pf.crp_generate(puf, 10_000, np.random.default_rng(2), seed=2).to_text()

    a = make()
    assert a == make()
    assert a.count("\n") == 10_001


def test_crp_challenges_uniform():
    rng = np.random.default_rng(3)
    crps = pf.crp_generate(pf.PufSetup().registered_array(27, 2, rng), 10_000, rng)
    means = crps.challenges.mean(axis=0)
    # binomial sd of a per-bit mean over 10,000 draws is 0.005
    assert np.all(np.abs(means - 0.5) < 4 * 0.005)
    assert crps.kind == "proposed" and crps.k == 2


def test_no_warning_in_normal_registration():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        pf.PufSetup().registered_row(27, np.random.default_rng(0))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=11), st.integers(0, 2**32 - 1))
def test_mismatch_free_row_matches_ground_truth(states, seed):
    row = pf.PufRow.from_states(states)
    c = pf.random_challenges(len(states), 64, np.random.default_rng(seed))
    n = len(states)
    if n % 2 == 1:
        np.testing.assert_array_equal(row.responses(c), pf.ground_truth_bits(states, c))
    else:
        # even n: off-tie challenges must agree; tie challenges sit within residue of threshold
        hits = np.count_nonzero(c ^ np.array(states, dtype=np.uint8), axis=1)
        off_tie = 2 * hits != n
        np.testing.assert_array_equal(row.responses(c)[off_tie],
                                      pf.ground_truth_bits(states, c)[off_tie])
