import json
import math

import pytest

from dpshuffle import (
    Attribute,
    ConfigError,
    Dataset,
    PipelineConfig,
    PipelineRefused,
    REFERENCE_EPSILONS,
    RetriesExhausted,
    Row,
    Scheme,
    Schema,
    epsilon_cis,
    load_config,
    parse_query,
    reproduce_table3,
    risk_sweep,
    run_on_dataset,
    run_pipeline,
)
from dpshuffle.pipeline import REPORT_FIELDS
from conftest import EXAMPLE_QUERY

DRIFTY_QUERY = "count where name = Riya and weight > 60"


def drifty_config(**overrides):
    """People-fixture setup whose conjunction can come apart: Weight is
    tied but Name stays a free channel, so any drift violates the
    zero-count bound."""
    base = dict(seed=0, t=2, S=2, tied_attributes=("Weight",))
    base.update(overrides)
    return PipelineConfig(**base)


def wide_dataset(n: int, labels: int = 3):
    schema = Schema(
        (
            Attribute("kind", tuple(f"k{i}" for i in range(labels))),
            Attribute("left", ("a", "b")),
            Attribute("right", ("x", "y")),
        )
    )
    rows = tuple(
        Row(f"r{i}", (f"k{i % labels}", "ab"[i % 2], "xy"[i % 2]))
        for i in range(n)
    )
    return Dataset(schema, rows)


class TestLoadConfig:
    def test_full_roundtrip(self, write_json):
        path = write_json(
            "config.json",
            {
                "seed": 42,
                "t": 5,
                "S": 3,
                "mode": "CIS",
                "lambda": 0.5,
                "max_retries": 2,
                "hypothesis_grid": [[10, 2], {"t": 20, "S": 3}],
                "trials": 7,
                "tied_attributes": ["Age", "Weight"],
                "time_attribute": "Age",
                "schema": "schema.json",
                "workload": [EXAMPLE_QUERY],
            },
        )
        config = load_config(path)
        assert config == PipelineConfig(
            seed=42,
            t=5,
            S=3,
            mode="CIS",
            lam=0.5,
            max_retries=2,
            hypothesis_grid=(Scheme(10, 2), Scheme(20, 3)),
            trials=7,
            tied_attributes=("Age", "Weight"),
            time_attribute="Age",
            schema_path="schema.json",
            workload=(EXAMPLE_QUERY,),
        )

    def test_defaults(self, write_json):
        config = load_config(write_json("config.json", {"seed": 5}))
        assert config.seed == 5
        assert config.t is None and config.S is None
        assert config.mode == "IS"
        assert config.lam == 0.01
        assert config.max_retries == 16
        assert config.trials == 4
        assert config.hypothesis_grid == ()
        assert config.workload == ()

    def test_rejects_unknown_keys(self, write_json):
        path = write_json("config.json", {"seed": 1, "shufflers": 3})
        with pytest.raises(ConfigError, match="unknown config keys.*shufflers"):
            load_config(path)

    def test_requires_a_seed(self, write_json):
        with pytest.raises(ConfigError, match="needs a 'seed'"):
            load_config(write_json("config.json", {"t": 2, "S": 2}))

    def test_rejects_partial_scheme(self, write_json):
        with pytest.raises(ConfigError, match="together"):
            load_config(write_json("config.json", {"seed": 1, "t": 4}))

    def test_rejects_unknown_mode(self, write_json):
        with pytest.raises(ConfigError, match="mode must be"):
            load_config(
                write_json("config.json", {"seed": 1, "mode": "shuffle"})
            )

    def test_rejects_invalid_json_and_non_objects(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(str(bad))
        arr = tmp_path / "arr.json"
        arr.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(ConfigError, match="JSON object"):
            load_config(str(arr))

    def test_direct_construction_guards(self):
        with pytest.raises(ConfigError, match="max_retries"):
            PipelineConfig(seed=1, max_retries=-1)
        with pytest.raises(ConfigError, match="lambda"):
            PipelineConfig(seed=1, lam=-0.1)


class TestRunOnDataset:
    def test_tied_query_is_exact_for_any_seed(self, people_dataset):
        query = parse_query(EXAMPLE_QUERY, people_dataset.schema)
        for seed in range(10):
            config = PipelineConfig(seed=seed, t=2, S=2)
            report = run_on_dataset(config, people_dataset, query)
            assert report.c_prime == 3
            assert report.retries_used == 0
            assert report.bound_status == "satisfied"
            assert report.mode == "IS"
            assert (report.t, report.S) == (2, 2)
            assert report.epsilon_signed == math.log(2 / 4)
            assert report.epsilon_report == -math.log(2 / 4)
            assert len(report.plan_digest) == 64

    def test_balanced_thousand_batches_cost_nothing(self):
        dataset = wide_dataset(11_000)
        query = parse_query("count where kind = k0", dataset.schema)
        config = PipelineConfig(seed=8, t=1_000, S=3)
        report = run_on_dataset(config, dataset, query)
        assert report.epsilon_signed == 0.0
        assert report.epsilon_report == 0.0
        assert report.loss_bound == 0.0
        assert report.c_prime == sum(1 for i in range(11_000) if i % 3 == 0)
        assert report.retries_used == 0

    def test_violation_triggers_reshuffle(self, people_dataset):
        query = parse_query(DRIFTY_QUERY, people_dataset.schema)
        report = run_on_dataset(drifty_config(seed=0), people_dataset, query)
        assert report.retries_used == 1
        assert report.c_prime == 0
        assert report.bound_status == "satisfied"

    def test_clean_first_attempt_uses_no_retries(self, people_dataset):
        query = parse_query(DRIFTY_QUERY, people_dataset.schema)
        report = run_on_dataset(drifty_config(seed=1), people_dataset, query)
        assert report.retries_used == 0
        assert report.c_prime == 0

    def test_exhaustion_reports_every_attempt(self, people_dataset):
        query = parse_query(DRIFTY_QUERY, people_dataset.schema)
        with pytest.raises(RetriesExhausted, match="after 2 retries") as info:
            run_on_dataset(
                drifty_config(seed=29, max_retries=2), people_dataset, query
            )
        attempts = info.value.attempts
        assert [a.attempt for a in attempts] == [0, 1, 2]
        for record in attempts:
            assert record.c_prime == 1
            assert record.loss == 1.0
            assert record.loss_bound == pytest.approx(0.5, rel=1e-12)

    def test_zero_retry_budget_fails_immediately(self, people_dataset):
        query = parse_query(DRIFTY_QUERY, people_dataset.schema)
        with pytest.raises(RetriesExhausted) as info:
            run_on_dataset(
                drifty_config(seed=29, max_retries=0), people_dataset, query
            )
        assert len(info.value.attempts) == 1

    def test_cumulative_mode_refuses_negative_budget(self):
        dataset = wide_dataset(21)
        query = parse_query("count where kind = k0", dataset.schema)
        config = PipelineConfig(seed=3, t=3, S=3, mode="CIS")
        with pytest.raises(PipelineRefused, match="negative privacy budget") as info:
            run_on_dataset(config, dataset, query)
        assert info.value.epsilon == epsilon_cis(7, 3)

    def test_cumulative_mode_runs_at_zero_budget(self):
        dataset = wide_dataset(8)
        query = parse_query("count where kind = k0", dataset.schema)
        config = PipelineConfig(seed=4, t=4, S=2, mode="CIS")
        report = run_on_dataset(config, dataset, query)
        assert report.mode == "CIS"
        assert report.epsilon_signed == 0.0
        assert report.c_prime == sum(1 for i in range(8) if i % 3 == 0)

    def test_grid_resolution_picks_lightest_tied_scheme(self, people_dataset):
        query = parse_query(EXAMPLE_QUERY, people_dataset.schema)
        config = PipelineConfig(
            seed=6, hypothesis_grid=(Scheme(3, 2), Scheme(2, 2))
        )
        report = run_on_dataset(config, people_dataset, query)
        assert (report.t, report.S) == (2, 2)

    def test_missing_scheme_and_grid_rejected(self, people_dataset):
        query = parse_query(EXAMPLE_QUERY, people_dataset.schema)
        with pytest.raises(ConfigError, match="hypothesis_grid"):
            run_on_dataset(PipelineConfig(seed=1), people_dataset, query)

    def test_deterministic_reports(self, people_dataset):
        query = parse_query(EXAMPLE_QUERY, people_dataset.schema)
        config = PipelineConfig(seed=12, t=3, S=2)
        first = run_on_dataset(config, people_dataset, query)
        second = run_on_dataset(config, people_dataset, query)
        assert first.to_json() == second.to_json()


class TestReportShape:
    @pytest.fixture()
    def report(self, people_dataset):
        query = parse_query(EXAMPLE_QUERY, people_dataset.schema)
        return run_on_dataset(
            PipelineConfig(seed=2, t=2, S=2), people_dataset, query
        )

    def test_exposes_exactly_the_published_fields(self, report):
        assert tuple(report.to_dict()) == REPORT_FIELDS

    def test_never_leaks_the_input_count(self, report):
        payload = report.to_dict()
        assert "c" not in payload
        assert "attempts" not in payload
        assert "c_prime" in payload

    def test_json_is_stable_and_parseable(self, report):
        text = report.to_json()
        assert text.endswith("\n")
        parsed = json.loads(text)
        assert list(parsed) == sorted(parsed)
        assert parsed["query"] == report.query

    def test_text_rendering_mentions_the_essentials(self, report):
        text = report.to_text()
        assert "released count: 3" in text
        assert "scheme:         t=2 batches, S=2 shufflers, mode IS" in text
        assert "plan digest:" in text


class TestRunPipelineFromFiles:
    def test_schema_via_argument_or_config(self, data_dir, write_json):
        dataset_path = str(data_dir / "people.csv")
        schema_path = str(data_dir / "people_schema.json")
        by_arg = run_pipeline(
            PipelineConfig(seed=9, t=2, S=2),
            dataset_path,
            EXAMPLE_QUERY,
            schema_path=schema_path,
        )
        by_config = run_pipeline(
            PipelineConfig(seed=9, t=2, S=2, schema_path=schema_path),
            dataset_path,
            EXAMPLE_QUERY,
        )
        assert by_arg.to_json() == by_config.to_json()
        assert by_arg.c_prime == 3

    def test_missing_schema_rejected(self, data_dir):
        with pytest.raises(ConfigError, match="schema file is required"):
            run_pipeline(
                PipelineConfig(seed=9, t=2, S=2),
                str(data_dir / "people.csv"),
                EXAMPLE_QUERY,
            )


class TestRiskSweep:
    def test_ranks_and_selects(self, data_dir):
        config = PipelineConfig(
            seed=5,
            hypothesis_grid=(Scheme(3, 2), Scheme(2, 2)),
            workload=(EXAMPLE_QUERY,),
        )
        selection = risk_sweep(
            config,
            str(data_dir / "people.csv"),
            str(data_dir / "people_schema.json"),
        )
        assert selection.best == Scheme(2, 2)
        assert len(selection.table) == 2

    def test_requires_a_workload(self, data_dir):
        config = PipelineConfig(seed=5, hypothesis_grid=(Scheme(2, 2),))
        with pytest.raises(ConfigError, match="workload"):
            risk_sweep(
                config,
                str(data_dir / "people.csv"),
                str(data_dir / "people_schema.json"),
            )


class TestReferenceTable:
    def test_row_partition(self):
        report = reproduce_table3()
        assert len(report.rows) == len(REFERENCE_EPSILONS) == 10
        assert [row.index for row in report.matches] == [2, 3, 6, 7, 9, 10]
        assert [row.index for row in report.discrepancies] == [1, 4, 5, 8]

    def test_headline_row_recomputes_cleanly(self):
        row = reproduce_table3().rows[8]
        assert (row.n, row.t, row.n1, row.S) == (1_000_000, 10_000, 100, 2)
        assert row.epsilon_magnitude == pytest.approx(0.0201, abs=1e-4)
        assert row.matches

    def test_negative_budget_is_flagged_not_hidden(self):
        row = reproduce_table3().rows[0]
        assert row.epsilon_signed < 0
        assert not row.matches
        assert "negative" in row.note

    def test_batch_size_disagreements_are_annotated(self):
        report = reproduce_table3()
        flagged = {
            row.index
            for row in report.rows
            if "stated n1" in row.note
        }
        assert flagged == {1, 3, 4, 5, 8, 10}

    def test_text_rendering(self):
        text = reproduce_table3().to_text()
        assert "DISCREPANCY" in text
        assert "matches: [2, 3, 6, 7, 9, 10]" in text
        assert "discrepancy section:" in text

    def test_json_file_output(self, tmp_path):
        out = tmp_path / "table.json"
        report = reproduce_table3(str(out))
        payload = json.loads(out.read_text(encoding="utf-8"))
        assert payload == report.to_dict()
        assert payload["discrepancies"] == [1, 4, 5, 8]
