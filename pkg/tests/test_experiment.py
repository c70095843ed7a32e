import csv
from dataclasses import replace
from pathlib import Path

import pytest

from src.config import CSV_HEADER, dbm_to_watts
from src.errors import ConfigError, VerificationError
from src.experiment import (
    ExperimentConfig,
    check_config,
    load_config,
    parse_config,
    read_toml,
    run_experiment,
    summarize,
    validate_config,
    verify_rows,
    write_csv,
)
from src.model import Traffic

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def names(violations):
    return {v.name for v in violations}


class TestParsing:
    def test_empty_document_gives_defaults(self):
        config = parse_config({})
        assert config == ExperimentConfig(source="<memory>")
        assert config.sweep_values() == [None]
        assert config.traffic is Traffic.UNICAST

    def test_protocols_are_upper_cased(self):
        config = parse_config({"experiment": {"protocols": ["es", "ts"]}})
        assert config.experiment.protocols == ("ES", "TS")

    def test_integer_accepted_for_float(self):
        config = parse_config({"system": {"power_dbm": 20}})
        assert config.system.power_dbm == 20.0
        assert config.spec_for(None).power_budget == pytest.approx(dbm_to_watts(20.0))

    def test_first_violation_is_raised(self):
        with pytest.raises(ConfigError) as info:
            parse_config({"experiment": {"trials": 0}})
        assert info.value.field == "experiment.trials"

    def test_shipped_configs_are_valid(self):
        for path in ("default", "full_scale", "power_sweep", "elements_sweep", "broadcast"):
            assert validate_config(CONFIGS / f"{path}.toml") == []


class TestViolations:
    @pytest.mark.parametrize(
        "raw, field",
        [
            ({"experiment": {"trials": 0}}, "experiment.trials"),
            ({"system": {"weights": [0.5, 0.4]}}, "system.weights"),
            ({"system": {"weights": [1.5, -0.5]}}, "system.weights"),
            ({"system": {"n_tx": 0}}, "system.n_tx"),
            ({"system": {"traffic": "multicast"}}, "system.traffic"),
            ({"system": {"n_streams": [1]}}, "system.n_streams"),
            ({"experiment": {"protocols": ["ES", "XX"]}}, "experiment.protocols"),
            ({"experiment": {"protocols": ["ES", "ES"]}}, "experiment.protocols"),
            ({"experiment": {"sweep": "power_dbm"}}, "experiment.values"),
            ({"experiment": {"sweep": "m_elements", "values": [2.5]}}, "experiment.values"),
            ({"experiment": {"sweep": "noise"}}, "experiment.sweep"),
            ({"experiment": {"values": [10.0]}}, "experiment.values"),
            ({"solver": {"solver": "nope"}}, "solver.solver"),
            ({"scenario": {"tx_position": [0, 40, 10]}}, "scenario.tx_position"),
            ({"scenario": {"r_user_azimuth_deg": 200.0}}, "scenario.r_user_azimuth_deg"),
            ({"solver": {"tau_grid_step": 0.3}}, "solver.tau_grid_step"),
            ({"solver": {"bcd_max_iter": 0}}, "solver.bcd_max_iter"),
            ({"solver": {"bcd_tol": "small"}}, "solver.bcd_tol"),
            ({"solver": {"nonsense": 1}}, "solver.nonsense"),
            ({"extras": {}}, "extras"),
        ],
    )
    def test_violation_names_the_field(self, raw, field):
        assert field in names(check_config(raw))

    def test_all_violations_are_collected(self):
        found = check_config({"experiment": {"trials": 0}, "system": {"n_tx": 0}})
        assert {"experiment.trials", "system.n_tx"} <= names(found)

    def test_bool_is_not_an_integer(self):
        assert "experiment.trials" in names(check_config({"experiment": {"trials": True}}))

    def test_bad_toml_is_a_config_error(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("[system\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            read_toml(path)
        assert len(validate_config(path)) == 1

    def test_missing_file_is_an_os_error(self, tmp_path):
        with pytest.raises(OSError):
            load_config(tmp_path / "absent.toml")


class TestSweep:
    def test_power_sweep_points(self):
        config = parse_config({"experiment": {"sweep": "power_dbm", "values": [10, 20]}})
        specs = [config.spec_for(v) for v in config.sweep_values()]
        assert [s.power_budget for s in specs] == pytest.approx([1e-2, 1e-1])

    def test_element_sweep_points(self):
        config = parse_config({"experiment": {"sweep": "m_elements", "values": [2, 6]}})
        assert [config.spec_for(v).m_elements for v in config.sweep_values()] == [2, 6]

    def test_overrides(self):
        config = parse_config({}).with_overrides(base_seed=9, protocols=["ES", "RO"])
        assert config.experiment.base_seed == 9
        assert config.experiment.protocols == ("ES", "RO")


class TestRunExperiment:
    def test_rows_and_csv(self, tiny_config_file, tmp_path):
        config = load_config(tiny_config_file)
        rows = run_experiment(config)
        assert [row.protocol for row in rows] == ["ES", "MS", "TS"]
        assert all(row.seed == 3 for row in rows)
        assert rows[2].tau_star is not None and rows[0].tau_star is None

        out = tmp_path / "rows.csv"
        write_csv(rows, out)
        with open(out, newline="", encoding="utf-8") as handle:
            table = list(csv.reader(handle))
        assert table[0] == list(CSV_HEADER)
        assert len(table) == 4
        assert all(line[11] == "0" for line in table[1:])

    def test_reruns_are_byte_identical(self, tiny_config_file, tmp_path):
        config = load_config(tiny_config_file)
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        write_csv(run_experiment(config), first)
        write_csv(run_experiment(config), second)
        assert first.read_bytes() == second.read_bytes()

    def test_sorted_over_sweep_and_trials(self, tiny_config_file):
        config = load_config(tiny_config_file)
        config = replace(
            config,
            experiment=replace(
                config.experiment,
                protocols=("TS",),
                sweep="power_dbm",
                values=(20.0, 10.0),
                trials=2,
            ),
        )
        rows = run_experiment(config)
        assert [(row.sweep_value, row.trial) for row in rows] == [
            (10.0, 0),
            (10.0, 1),
            (20.0, 0),
            (20.0, 1),
        ]
        assert rows[0].seed == rows[2].seed

    def test_progress_callback(self, tiny_config_file):
        ticks = []
        run_experiment(load_config(tiny_config_file), progress=ticks.append)
        assert ticks == [1]

    def test_verify_accepts_recorded_rows(self, tiny_config_file):
        config = load_config(tiny_config_file)
        rows = run_experiment(config)
        assert verify_rows(config, rows) == len(rows)
        assert verify_rows(config, []) == 0

    def test_verify_catches_tampering(self, tiny_config_file):
        config = load_config(tiny_config_file)
        rows = run_experiment(config)
        rows[1] = replace(rows[1], wsr=rows[1].wsr + 1.0)
        with pytest.raises(VerificationError):
            verify_rows(config, rows)

    def test_broadcast_rows(self, tiny_config_file):
        config = load_config(tiny_config_file)
        config = replace(config, system=replace(config.system, traffic="broadcast"))
        rows = run_experiment(config.with_overrides(protocols=["ES", "RO"]))
        assert [row.traffic for row in rows] == ["broadcast", "broadcast"]
        assert rows[1].rate_t == 0.0


class TestSummary:
    def test_mean_and_order(self, tiny_config_file):
        config = load_config(tiny_config_file)
        config = replace(config, experiment=replace(config.experiment, trials=2))
        rows = run_experiment(config)
        summary = summarize(rows, config.experiment.protocols)
        assert [s.protocol for s in summary] == ["ES", "MS", "TS"]
        es = [row.wsr for row in rows if row.protocol == "ES"]
        assert summary[0].trials == 2
        assert summary[0].mean_wsr == pytest.approx(sum(es) / 2)


class TestSolverName:
    def test_unknown_solver_fails_to_parse(self):
        with pytest.raises(ConfigError) as info:
            parse_config({"solver": {"solver": "nope"}})
        assert info.value.field == "solver.solver"

    def test_cvxpy_backend_name_is_accepted(self):
        config = parse_config({"solver": {"solver": "cvxpy:SCS"}})
        assert config.solver.solver == "cvxpy:SCS"
