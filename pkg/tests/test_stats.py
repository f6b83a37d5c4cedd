"""Estimators: expectations, marginals, standard errors, triple tables."""

import math

import numpy as np
import pytest

from eqrc.model import (
    GaugeKey,
    MODE_CONSTANT,
    MODE_RADEMACHER,
    MODE_RADEMACHER_RARB,
    MeasurementRecord,
    Setting,
    gauge_eval,
    measure_left,
    measure_pairs,
    measure_right,
    sample_pair_stream,
)
from eqrc.experiments import BELL_SETTINGS, CANONICAL_LEFT, ExperimentSpec, run_experiment
from eqrc.stats import (
    RecordMatchError,
    TripleTable,
    build_triple_table,
    estimate_expectation,
    estimate_marginals,
    match_records,
)

ONE = GaugeKey(mode=MODE_CONSTANT)
RAD3 = GaugeKey(mode=MODE_RADEMACHER, j=3)
A, B, C = BELL_SETTINGS


def _run_group(right, n, seed, key):
    spec = ExperimentSpec(setting_pairs=((CANONICAL_LEFT, right),), pairs_per_setting=n, seed=seed, key=key)
    return run_experiment(spec).groups[0]


class TestExpectation:
    def test_equal_settings_give_exactly_minus_one(self):
        grp = _run_group(Setting(1, 0), 50_000, 4, RAD3)
        est = estimate_expectation(grp)
        assert est.value == -1.0
        assert est.std_error == 0.0

    def test_sixty_degrees_matches_minus_half(self):
        grp = _run_group(B, 1_000_000, 42, RAD3)
        est = estimate_expectation(grp)
        assert est.value == pytest.approx(-0.5, abs=0.0045)

    def test_one_twenty_degrees_matches_plus_half(self):
        # analytic oracle: -a.b with a=[1,0], b=[-1/2, sqrt(3)/2] gives +1/2
        grp = _run_group(C, 1_000_000, 42, RAD3)
        est = estimate_expectation(grp)
        assert est.value == pytest.approx(0.5, abs=0.0045)

    def test_record_list_path_equals_array_path(self):
        grp = _run_group(B, 300, 9, RAD3)
        flat = [rec for pair in grp.records() for rec in pair]
        assert estimate_expectation(flat) == estimate_expectation(grp)
        pairs = list(grp.records())
        assert estimate_expectation(pairs) == estimate_expectation(grp)

    def test_permutation_invariance(self):
        grp = _run_group(B, 500, 11, RAD3)
        flat = [rec for pair in grp.records() for rec in pair]
        rng = np.random.Generator(np.random.PCG64(0))
        shuffled = [flat[i] for i in rng.permutation(len(flat))]
        assert estimate_expectation(shuffled) == estimate_expectation(grp)

    def test_gauge_key_replacement_invariance(self):
        events = sample_pair_stream(21, 20_000)
        vals = []
        for key in (ONE, RAD3, GaugeKey(mode=MODE_RADEMACHER_RARB, j=2, rarb_seed=5)):
            l_out, r_out = measure_pairs(B, events, key)
            vals.append(int(np.sum(l_out.astype(np.int64) * r_out)))
        assert vals[0] == vals[1] == vals[2]

    def test_unmatched_pair_index_is_an_error_naming_it(self):
        grp = _run_group(B, 10, 2, ONE)
        flat = [rec for pair in grp.records() for rec in pair]
        dropped = [r for r in flat if not (r.station == "R" and r.pair_index == 7)]
        with pytest.raises(RecordMatchError, match="7"):
            estimate_expectation(dropped)

    def test_duplicate_record_is_an_error(self):
        grp = _run_group(B, 5, 2, ONE)
        flat = [rec for pair in grp.records() for rec in pair]
        with pytest.raises(RecordMatchError, match="duplicate"):
            match_records(flat + [flat[0]])

    def test_std_error_formula(self):
        # products 3x(+1), 1x(-1): mean 0.5, se = sqrt((1 - 0.25)/4)
        s = Setting(1, 0)
        recs = []
        for n, (l, r) in enumerate([(1, 1), (1, 1), (1, 1), (1, -1)], start=1):
            recs.append(MeasurementRecord(n, "L", s, l))
            recs.append(MeasurementRecord(n, "R", s, r))
        est = estimate_expectation(recs)
        assert est.value == 0.5
        assert est.std_error == pytest.approx(math.sqrt(0.75 / 4))

    def test_error_shrinks_like_inverse_sqrt_n(self):
        def spread(n):
            vals = [estimate_expectation(_run_group(B, n, seed, RAD3)).value for seed in range(20)]
            return float(np.std(vals))

        ratio = spread(2_000) / spread(8_000)
        assert 1.25 <= ratio <= 3.2  # fourfold data roughly halves the spread


class TestMarginals:
    def test_identity_gauge_left_is_exactly_plus_one(self):
        grp = _run_group(B, 100_000, 5, ONE)
        e_left, _ = estimate_marginals(grp)
        assert e_left.value == 1.0

    @pytest.mark.parametrize("j", range(1, 7))
    def test_balanced_gauge_marginals_vanish(self, j):
        grp = _run_group(B, 1_000_000, 13, GaugeKey(mode=MODE_RADEMACHER, j=j))
        e_left, e_right = estimate_marginals(grp)
        assert abs(e_left.value) <= 0.0045
        assert abs(e_right.value) <= 0.0045

    def test_left_marginal_equals_mean_gauge_exactly(self):
        seed, n = 33, 40_000
        grp = _run_group(B, n, seed, RAD3)
        from eqrc.model import derive_subseed

        events = sample_pair_stream(derive_subseed(seed, 0), n)
        gauge_mean = float(np.mean(gauge_eval(RAD3, events.t)))
        e_left, _ = estimate_marginals(grp)
        assert e_left.value == gauge_mean


def _brute_force_triple(kind, events, key, settings):
    """Per-event reference construction: left outcome, sign-flipped right, +1."""
    a, b, c = settings
    partner = b if kind == "abc'" else c
    counts = {(s1, s2, s3): 0 for s1 in (1, -1) for s2 in (1, -1) for s3 in (1, -1)}
    for e in events:
        col1 = measure_left(a, e, key)
        col2 = -measure_right(partner, e, key)
        counts[(col1, col2, 1)] += 1
    return counts


class TestTripleTables:
    def test_vectorized_table_matches_brute_force(self):
        events = sample_pair_stream(17, 2_000)
        for kind in ("abc'", "ab'c"):
            table = build_triple_table(kind, events, RAD3, BELL_SETTINGS)
            assert table.counts == _brute_force_triple(kind, events, RAD3, BELL_SETTINGS)

    def test_all_plus_fractions_at_bell_settings(self):
        events = sample_pair_stream(7, 1_000_000)
        t1 = build_triple_table("abc'", events, RAD3, BELL_SETTINGS)
        t2 = build_triple_table("ab'c", events, RAD3, BELL_SETTINGS)
        assert t1.fraction((1, 1, 1)) == pytest.approx(0.375, abs=0.005)
        assert t2.fraction((1, 1, 1)) == pytest.approx(0.125, abs=0.005)

    def test_identity_gauge_removes_dilution(self):
        events = sample_pair_stream(7, 1_000_000)
        table = build_triple_table("abc'", events, ONE, BELL_SETTINGS)
        assert table.fraction((1, 1, 1)) == pytest.approx(0.75, abs=0.005)

    def test_tables_from_one_stream_disagree_beyond_four_sigma(self):
        n = 1_000_000
        events = sample_pair_stream(19, n)
        f1 = build_triple_table("abc'", events, RAD3, BELL_SETTINGS).fraction((1, 1, 1))
        f2 = build_triple_table("ab'c", events, RAD3, BELL_SETTINGS).fraction((1, 1, 1))
        sigma = math.sqrt(f1 * (1 - f1) / n + f2 * (1 - f2) / n)
        assert (f1 - f2) / sigma > 4.0

    def test_each_table_is_a_valid_probability_table(self):
        events = sample_pair_stream(3, 10_000)
        table = build_triple_table("ab'c", events, RAD3, BELL_SETTINGS)
        assert sum(table.counts.values()) == table.total == len(events)
        assert all(v >= 0 for v in table.counts.values())
        assert len(table.counts) == 8

    def test_duplicate_settings_rejected(self):
        events = sample_pair_stream(3, 10)
        with pytest.raises(ValueError, match="distinct"):
            build_triple_table("abc'", events, ONE, (A, B, B))

    def test_unknown_kind_rejected(self):
        events = sample_pair_stream(3, 10)
        with pytest.raises(ValueError):
            build_triple_table("abc", events, ONE, BELL_SETTINGS)

    def test_table_validation(self):
        counts = {(s1, s2, s3): 1 for s1 in (1, -1) for s2 in (1, -1) for s3 in (1, -1)}
        TripleTable(kind="abc'", counts=counts, total=8)
        with pytest.raises(ValueError):
            TripleTable(kind="abc'", counts=counts, total=9)
        short = dict(counts)
        short.pop((1, 1, 1))
        with pytest.raises(ValueError):
            TripleTable(kind="abc'", counts=short, total=7)
