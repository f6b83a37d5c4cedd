"""File schemas: dataset JSONL round trips, CSV layouts, byte reproducibility."""

import csv
import json
import math

import numpy as np
import pytest

from eqrc.experiments import (
    BELL_PAIRS,
    ExperimentSpec,
    run_experiment,
    sort_wigner_sets,
    sweep_angle,
)
from eqrc.formats import (
    dataset_record_lines,
    expectation_csv_text,
    load_run_dataset,
    run_dataset_text,
    sweep_csv_text,
    write_reports_jsonl,
    write_run_dataset,
    write_triple_csv,
)
from eqrc.inequalities import bell_check
from eqrc.model import GaugeKey, MODE_RADEMACHER, sample_pair_stream
from eqrc.stats import build_triple_table
from eqrc.experiments import BELL_SETTINGS

RAD2 = GaugeKey(mode=MODE_RADEMACHER, j=2)


def _spec(n=500, seed=5, switching="fixed"):
    return ExperimentSpec(setting_pairs=BELL_PAIRS, pairs_per_setting=n, seed=seed, key=RAD2, switching=switching)


class TestDatasetJsonl:
    def test_grouped_round_trip(self, tmp_path):
        ds = run_experiment(_spec())
        path = tmp_path / "run.jsonl"
        write_run_dataset(ds, path)
        back = load_run_dataset(path)
        assert back.spec == ds.spec
        assert len(back.groups) == 3
        for g1, g2 in zip(ds.groups, back.groups):
            assert np.array_equal(g1.pair_index, g2.pair_index)
            assert np.array_equal(g1.left, g2.left)
            assert np.array_equal(g1.right, g2.right)
            assert g1.left_setting.close_to(g2.left_setting, 0.0)  # bit-exact floats

    def test_switched_round_trip_then_sort(self, tmp_path):
        ds = run_experiment(_spec(switching="random-switched"))
        path = tmp_path / "switched.jsonl"
        write_run_dataset(ds, path)
        back = load_run_dataset(path)
        assert back.interleaved is not None
        sorted_back = sort_wigner_sets(back)
        sorted_orig = sort_wigner_sets(ds)
        for g1, g2 in zip(sorted_orig.groups, sorted_back.groups):
            assert np.array_equal(g1.pair_index, g2.pair_index)
            assert np.array_equal(g1.left, g2.left)
            assert np.array_equal(g1.right, g2.right)

    def test_payload_is_reproducible_and_header_isolated(self):
        t1 = run_dataset_text(run_experiment(_spec()))
        t2 = run_dataset_text(run_experiment(_spec()))
        lines1, lines2 = t1.splitlines(), t2.splitlines()
        assert lines1[1:] == lines2[1:]  # payload identical
        h1, h2 = json.loads(lines1[0]), json.loads(lines2[0])
        h1["meta"].pop("created"), h2["meta"].pop("created")
        assert h1 == h2  # only wall clock may differ, and only in the header

    def test_record_lines_carry_schema_version_and_no_clock(self):
        ds = run_experiment(_spec(n=3))
        for line in dataset_record_lines(ds):
            rec = json.loads(line)
            assert rec["v"] == 1
            assert set(rec) == {"v", "group", "n", "station", "setting", "outcome"}

    def test_float_fields_round_trip_bitwise(self, tmp_path):
        ds = run_experiment(_spec(n=3))
        path = tmp_path / "rt.jsonl"
        write_run_dataset(ds, path)
        back = load_run_dataset(path)
        for g1, g2 in zip(ds.groups, back.groups):
            assert g1.right_setting.b2 == g2.right_setting.b2
            assert g1.right_setting.b3 == g2.right_setting.b3

    def test_load_rejects_wrong_kind(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"v":1,"kind":"something-else"}\n')
        with pytest.raises(ValueError, match="run-dataset"):
            load_run_dataset(path)

    def test_load_rejects_incomplete_pair(self, tmp_path):
        ds = run_experiment(_spec(n=3))
        lines = run_dataset_text(ds).splitlines()
        path = tmp_path / "gap.jsonl"
        path.write_text("\n".join(lines[:-1]) + "\n")  # drop the final R record
        with pytest.raises(ValueError, match="incomplete"):
            load_run_dataset(path)

    def test_load_rejects_unknown_group_tag(self, tmp_path):
        ds = run_experiment(_spec(n=3))
        lines = run_dataset_text(ds).splitlines()
        bad = json.loads(lines[1])
        bad["group"] = "pair9"
        lines[1] = json.dumps(bad, sort_keys=True, separators=(",", ":"))
        path = tmp_path / "tag.jsonl"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="unknown group"):
            load_run_dataset(path)


class TestCsv:
    def test_sweep_csv_shape_and_values(self):
        points = sweep_angle(seed=3, n_per_step=2_000, steps=6, key=RAD2)
        text = sweep_csv_text(points)
        lines = text.splitlines()
        assert lines[0] == "# schema=eqrc.sweep.v1"
        assert lines[1] == "theta_radians,expectation,std_error,n"
        rows = list(csv.DictReader(lines[1:]))
        assert len(rows) == 6
        for row, p in zip(rows, points):
            assert float(row["theta_radians"]) == p.theta  # shortest repr round trip
            assert float(row["expectation"]) == p.estimate.value
            assert int(row["n"]) == 2_000

    def test_sweep_csv_is_byte_reproducible(self):
        a = sweep_csv_text(sweep_angle(seed=3, n_per_step=500, steps=4, key=RAD2))
        b = sweep_csv_text(sweep_angle(seed=3, n_per_step=500, steps=4, key=RAD2))
        assert a == b

    def test_expectation_csv_layout(self):
        row = {
            "left_b2": 1.0, "left_b3": 0.0, "right_b2": 0.5, "right_b3": math.sqrt(3) / 2,
            "n": 100, "expectation": -0.52, "std_error": 0.08, "seed": 7, "gauge": "rademacher:j=2",
        }
        text = expectation_csv_text([row])
        lines = text.splitlines()
        assert lines[0] == "# schema=eqrc.expectation.v1"
        parsed = list(csv.DictReader(lines[1:]))[0]
        assert float(parsed["expectation"]) == -0.52
        assert parsed["gauge"] == "rademacher:j=2"

    def test_triple_csv(self, tmp_path):
        events = sample_pair_stream(5, 4_000)
        tables = [build_triple_table(kind, events, RAD2, BELL_SETTINGS) for kind in ("abc'", "ab'c")]
        path = tmp_path / "triples.csv"
        write_triple_csv(tables, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "# schema=eqrc.triples.v1"
        rows = list(csv.DictReader(lines[1:]))
        assert len(rows) == 16
        total = sum(int(r["count"]) for r in rows if r["kind"] == "abc'")
        assert total == 4_000


class TestReportsJsonl:
    def test_reports_file_has_header_and_machine_readable_rows(self, tmp_path):
        rep = bell_check(-0.5, 0.5, -0.5)
        path = tmp_path / "reports.jsonl"
        write_reports_jsonl([rep], path, created="2026-01-01T00:00:00+00:00")
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])
        assert header["kind"] == "inequality-reports" and header["v"] == 1
        row = json.loads(lines[1])
        assert row["violated"] is True
        assert row["name"] == "bell"
        assert row["lhs"] == pytest.approx(1.0)
