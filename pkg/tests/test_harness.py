import csv
import json

import pytest

from drboost import checks
from drboost.cli import EXIT_CONFIG, EXIT_OK, EXIT_VIOLATION, main
from drboost.harness import (REGISTRY, AlgorithmSpec, ConfigError, ExperimentConfig, aggregate_tables,
                             emit_plot_data, example_config, load_config, run_experiment)

SMALL = {
    "coverage-monotone": {"k": 3, "T": 20},
    "qp-online-delayed": {"n": 4, "T": 20, "comparator_K": 50},
    "bandit-mono": {"n": 3, "T": 60, "comparator_K": 50},
    "minimax-facility-nonmono": {"T": 40, "every": 10},
}


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _csv_bytes(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


class TestConfig:
    def test_round_trip(self):
        cfg = ExperimentConfig("qp-online-delayed", [AlgorithmSpec("obga", {"eta": 0.1}), AlgorithmSpec("oga")],
                               [3, 1, 2], "out/x", {"T": 30, "delay": 4})
        assert ExperimentConfig.from_json(cfg.to_json()) == cfg

    def test_defaults(self):
        cfg = ExperimentConfig.from_dict({"experiment": "coverage-monotone"})
        assert cfg.seeds == list(range(10))
        assert [a.id for a in cfg.algorithms] == ["bga", "sga", "cg"]

    def test_string_algorithm_entries(self):
        cfg = ExperimentConfig.from_dict({"experiment": "bandit-mono", "algorithms": ["bbga"]})
        assert cfg.algorithms == [AlgorithmSpec("bbga")]

    def test_unknown_experiment_lists_ids(self):
        with pytest.raises(ConfigError) as e:
            ExperimentConfig.from_dict({"experiment": "nope"})
        for exp in REGISTRY:
            assert exp in str(e.value)

    def test_unknown_algorithm_lists_ids(self):
        with pytest.raises(ConfigError) as e:
            ExperimentConfig.from_dict({"experiment": "coverage-nonmonotone", "algorithms": ["cg"]})
        assert "mfw" in str(e.value) and "bga" in str(e.value)

    @pytest.mark.parametrize("bad", [
        {"experiment": "coverage-monotone", "seeds": []},
        {"experiment": "coverage-monotone", "seeds": [0, 1.5]},
        {"experiment": "coverage-monotone", "seeds": [True]},
        {"experiment": "coverage-monotone", "extra": 1},
        {"experiment": "coverage-monotone", "params": [1]},
        {"experiment": "coverage-monotone", "algorithms": [{"id": "bga", "params": 3}]},
        {"experiment": "coverage-monotone", "algorithms": []},
    ])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(bad)

    def test_invalid_json(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json("{not json")

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")

    def test_every_experiment_has_algorithms(self):
        assert len(REGISTRY) == 12
        for exp, spec in REGISTRY.items():
            cfg = example_config(exp)
            assert [a.id for a in cfg.algorithms] == list(spec.algorithms)


class TestAggregate:
    def test_exact_mean_in_seed_order(self):
        vals = [[0.1, 0.7], [0.2, 1e-17], [0.3, 3.0]]
        tables = [(["t", "value"], [(1, repr(v[0])), (2, repr(v[1]))]) for v in vals]
        header, rows = aggregate_tables(tables)
        assert header == ["t", "value"]
        assert rows[0] == (1, repr(((0.1 + 0.2) + 0.3) / 3))
        assert rows[1] == (2, repr(((0.7 + 1e-17) + 3.0) / 3))

    def test_non_numeric_columns_blank(self):
        tables = [(["t", "mode"], [(1, "explore")]), (["t", "mode"], [(1, "exploit")])]
        assert aggregate_tables(tables)[1] == [(1, "")]


class TestRun:
    @pytest.mark.parametrize("exp", sorted(SMALL))
    def test_writes_seed_and_mean_files(self, exp, tmp_path):
        cfg = example_config(exp, seeds=[0, 1], out=str(tmp_path), **SMALL[exp])
        root = run_experiment(cfg)
        manifest = json.loads((root / "manifest.json").read_text())
        assert len(manifest["timings"]) == 2 * len(cfg.algorithms)
        for alg in cfg.algorithms:
            seeds = [_read(root / alg.id / f"seed_{s}.csv") for s in (0, 1)]
            mean = _read(root / alg.id / "mean.csv")
            assert seeds[0][0] == mean[0]
            for j, name in enumerate(mean[0]):
                if name in ("t", "mode", "z"):
                    continue
                for i in range(1, len(mean)):
                    expect = (float(seeds[0][i][j]) + float(seeds[1][i][j])) / 2
                    assert float(mean[i][j]) == expect

    def test_empty_seeds_write_nothing(self, tmp_path):
        cfg = example_config("coverage-monotone", seeds=[], out=str(tmp_path / "r"))
        with pytest.raises(ConfigError):
            run_experiment(cfg)
        assert not (tmp_path / "r").exists()

    def test_rerun_byte_identical(self, tmp_path):
        cfg = example_config("coverage-monotone", seeds=[0, 1], **SMALL["coverage-monotone"])
        a = run_experiment(cfg, out=str(tmp_path / "a"))
        b = run_experiment(cfg, out=str(tmp_path / "b"))
        assert _csv_bytes(a) == _csv_bytes(b)

    def test_worker_pool_matches_serial(self, tmp_path):
        cfg = example_config("qp-online-delayed", seeds=[0, 1, 2], **SMALL["qp-online-delayed"])
        a = run_experiment(cfg, out=str(tmp_path / "a"))
        b = run_experiment(cfg, out=str(tmp_path / "b"), workers=2)
        assert _csv_bytes(a) == _csv_bytes(b)

    def test_seeds_differ(self, tmp_path):
        cfg = example_config("coverage-monotone", seeds=[0, 1], **SMALL["coverage-monotone"])
        cfg.algorithms = [AlgorithmSpec("bga")]
        root = run_experiment(cfg, out=str(tmp_path))
        assert _read(root / "bga" / "seed_0.csv") != _read(root / "bga" / "seed_1.csv")


class TestPlotData:
    def test_columns_and_series(self, tmp_path):
        cfg = example_config("qp-online-delayed", seeds=[0], **SMALL["qp-online-delayed"])
        run_experiment(cfg, out=str(tmp_path))
        (path,) = emit_plot_data(tmp_path)
        rows = _read(path)
        assert rows[0] == ["x", "series_name", "y"]
        assert {r[1] for r in rows[1:]} == {"obga", "oga"}
        assert len(rows) == 1 + 2 * SMALL["qp-online-delayed"]["T"]
        first = path.read_bytes()
        emit_plot_data(tmp_path)
        assert path.read_bytes() == first

    def test_missing_input(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            emit_plot_data(tmp_path / "none")
        with pytest.raises(FileNotFoundError):
            emit_plot_data(tmp_path)


class TestSuiteRouting:
    def test_boosting_filter(self):
        rep = checks.run_invariant_suite("boosting", cases=2)
        assert {r["name"] for r in rep["results"]} == {"sampler_ks", "estimator_unbiased", "corollary_sweeps",
                                                         "boosted_set_equivalence"}

    def test_geometry_filter(self):
        rep = checks.run_invariant_suite("geometry", cases=5)
        assert {r["tag"] for r in rep["results"]} == {"geometry"}
        assert len(rep["results"]) == 5
        assert rep["ok"] and rep["violations"] == 0

    def test_report_fields(self):
        rep = checks.run_invariant_suite("minkowski", cases=3)
        assert set(rep) == {"suite", "checks_run", "violations", "worst_margin", "ok", "results"}
        assert rep["checks_run"] == sum(r["checks"] for r in rep["results"])

    def test_no_match_is_empty_and_ok(self):
        rep = checks.run_invariant_suite("no-such-tag", cases=3)
        assert rep["results"] == [] and rep["ok"] and rep["worst_margin"] is None


class TestCLI:
    def _config(self, tmp_path, **over):
        d = example_config("coverage-monotone", seeds=[0], out=str(tmp_path / "res"),
                           **SMALL["coverage-monotone"]).to_dict()
        d.update(over)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(d))
        return path

    def test_run_ok(self, tmp_path, capsys):
        assert main(["run", str(self._config(tmp_path))]) == EXIT_OK
        assert (tmp_path / "res" / "coverage-monotone" / "bga" / "seed_0.csv").exists()

    def test_run_seed_and_trials(self, tmp_path):
        assert main(["run", str(self._config(tmp_path)), "--seed", "5", "--trials", "2",
                     "--out", str(tmp_path / "o")]) == EXIT_OK
        names = sorted(p.name for p in (tmp_path / "o" / "coverage-monotone" / "sga").iterdir())
        assert names == ["mean.csv", "seed_5.csv", "seed_6.csv"]

    def test_run_config_error(self, tmp_path, capsys):
        assert main(["run", str(self._config(tmp_path, experiment="bogus"))]) == EXIT_CONFIG
        assert "valid ids" in capsys.readouterr().err
        assert main(["run", str(self._config(tmp_path, seeds=[]))]) == EXIT_CONFIG
        assert not (tmp_path / "res").exists()
        assert main(["run", str(tmp_path / "absent.json")]) == EXIT_CONFIG

    def test_check_pass(self, capsys):
        assert main(["check", "--filter", "geometry", "--trials", "5"]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["ok"]

    def test_check_violation(self, monkeypatch, capsys, tmp_path):
        monkeypatch.setitem(checks.SUITE, "broken", [("always_fails", lambda rng, cases: [-1.0] * cases)])
        out = tmp_path / "rep.json"
        assert main(["check", "--filter", "broken", "--trials", "3", "--out", str(out)]) == EXIT_VIOLATION
        rep = json.loads(out.read_text())
        assert rep["violations"] == 3 and rep["worst_margin"] == -1.0

    def test_plotdata(self, tmp_path, capsys):
        assert main(["plotdata", str(tmp_path / "none")]) == EXIT_CONFIG
        main(["run", str(self._config(tmp_path))])
        assert main(["plotdata", str(tmp_path / "res")]) == EXIT_OK

    def test_list(self, capsys):
        assert main(["list"]) == EXIT_OK
        out = capsys.readouterr().out
        assert all(exp in out for exp in REGISTRY)

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as e:
            main(["frobnicate"])
        assert e.value.code == 2
