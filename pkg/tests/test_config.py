import json
import logging
from contextlib import contextmanager

import pytest

from cadlag_line.core.batch_worker import BatchSampler
from cadlag_line.core.checkpoint_manager import ExperimentCheckpoint
from cadlag_line.utils.db_handler import LedgerDB
from cadlag_line.utils.errors import ConfigError
from cadlag_line.utils.experiment_config import ConvergeConfig, CounterexampleConfig, SimulateConfig
from cadlag_line.utils.hardware_probe import HardwareProbe
from cadlag_line.utils.logger_config import setup_logging
from cadlag_line.utils.project_config import SessionConfig
from cadlag_line.utils.seeding import SeedKey, as_key


class TestSessionConfig:
    def test_missing_file_gives_defaults(self, tmp_path):
        assert SessionConfig.load(str(tmp_path / "absent.json")) == SessionConfig()
        assert SessionConfig.load("") == SessionConfig()

    def test_round_trip(self, tmp_path):
        target = tmp_path / "session.json"
        SessionConfig(cpu_workers=2, chunk_size=10, exact_tol=1e-7).save(str(target))
        loaded = SessionConfig.load(str(target))
        assert loaded.cpu_workers == 2 and loaded.chunk_size == 10 and loaded.exact_tol == 1e-7

    def test_unknown_keys_are_ignored(self, tmp_path):
        target = tmp_path / "session.json"
        target.write_text(json.dumps({"cpu_workers": 3, "gpu_layers": 20}))
        assert SessionConfig.load(str(target)).cpu_workers == 3

    @pytest.mark.parametrize("text", ["{broken", json.dumps({"cpu_workers": 0}),
                                      json.dumps({"exact_tol": 2.0})])
    def test_bad_files_fall_back(self, tmp_path, text):
        target = tmp_path / "session.json"
        target.write_text(text)
        assert SessionConfig.load(str(target)) == SessionConfig()

    def test_auto_tune(self):
        config = SessionConfig()
        config.auto_tune()
        assert config.cpu_workers == HardwareProbe.get_cpu_threads()
        assert config.max_in_flight >= 4
        assert 0 < config.ram_limit_gb <= HardwareProbe.get_total_ram_gb()
        assert config.validate()


class TestSeeding:
    def test_spawn_is_associative(self):
        key = SeedKey(42)
        assert key.spawn(1, 2) == key.spawn(1).spawn(2)

    def test_streams_are_reproducible_and_distinct(self):
        a = SeedKey(42).spawn(3).generator().random(4)
        b = SeedKey(42).spawn(3).generator().random(4)
        c = SeedKey(42).spawn(4).generator().random(4)
        assert (a == b).all()
        assert not (a == c).all()

    def test_rejects_bad_seeds(self):
        with pytest.raises(ConfigError):
            SeedKey(-1)
        with pytest.raises(ConfigError):
            SeedKey(1).spawn(-2)
        with pytest.raises(ConfigError):
            as_key(1.5)
        with pytest.raises(ConfigError):
            as_key(True)


class TestBatchSampler:
    def test_results_in_index_order(self, parallel_session):
        assert BatchSampler(parallel_session).map(lambda i: i * i, 30) == [i * i for i in range(30)]

    def test_serial(self, serial_session):
        assert BatchSampler(serial_session).map(lambda i: -i, 5) == [0, -1, -2, -3, -4]

    def test_empty(self, parallel_session):
        assert BatchSampler(parallel_session).map(lambda i: i, 0) == []

    def test_worker_errors_propagate(self, parallel_session):
        def fail(i):
            if i == 17:
                raise ConfigError("bad index")
            return i

        with pytest.raises(ConfigError):
            BatchSampler(parallel_session).map(fail, 40)

    def test_stop_prevents_submission(self, parallel_session):
        sampler = BatchSampler(parallel_session)
        sampler.stop()
        results = sampler.map(lambda i: i, 40)
        assert results == [None] * 40


class TestExperimentConfigs:
    def test_simulate_requires_a_sampler(self):
        with pytest.raises(ConfigError):
            SimulateConfig.from_dict({"samples": 2})
        with pytest.raises(ConfigError):
            SimulateConfig.from_dict({"samples": 2, "sampler": {"family": "poisson"},
                                      "outer": {"family": "poisson"}})

    def test_simulate_descriptor(self):
        config = SimulateConfig.from_dict({"samples": 2, "n": 7, "outer": {"family": "compound_poisson"},
                                           "inner": {"family": "linear", "a": 2.0}})
        descriptor = config.sampler_descriptor()
        assert descriptor["family"] == "substitute"
        assert descriptor["outer"]["n"] == 7

    @pytest.mark.parametrize("data", [
        [],
        {"n_values": [], "outer": {"family": "identity"}, "reference": {"family": "identity"}},
        {"n_values": [0], "outer": {"family": "identity"}, "reference": {"family": "identity"}},
        {"n_values": [1], "outer": {"family": "identity"}},
        {"n_values": [1], "outer": {"family": "identity"}, "reference": {"family": "identity"}, "samples": 0},
        {"n_values": [1], "outer": "identity", "reference": {"family": "identity"}},
        {"n_values": [1], "outer": {"family": "identity"}, "functionals": ["terminal"],
         "normal_targets": {"terminal": {"mean": 0.0, "variance": 0.0}}},
        {"n_values": [1], "outer": {"family": "identity"}, "reference": {"family": "identity"}, "bogus": 1},
    ])
    def test_converge_is_strict(self, data):
        with pytest.raises(ConfigError):
            ConvergeConfig.from_dict(data)

    def test_fingerprint(self):
        data = {"n_values": [1, 2], "outer": {"family": "identity"}, "reference": {"family": "identity"}}
        first = ConvergeConfig.from_dict(data)
        second = ConvergeConfig.from_dict(json.loads(json.dumps(data)))
        assert first.fingerprint() == second.fingerprint()
        second.samples = 7
        assert first.fingerprint() != second.fingerprint()

    def test_load_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            ConvergeConfig.load(str(tmp_path / "absent.json"))
        broken = tmp_path / "broken.json"
        broken.write_text("{")
        with pytest.raises(ConfigError):
            ConvergeConfig.load(str(broken))

    @pytest.mark.parametrize("data", [
        {"which": "3"},
        {"which": "1", "n_max": 1},
        {"which": "lemma1", "rate": 1.0},
        {"which": "lemma1", "families": 0},
        {"which": "2", "variant": "fixed"},
        {"which": "2", "tol": 0.0},
    ])
    def test_counterexample_is_strict(self, data):
        with pytest.raises(ConfigError):
            CounterexampleConfig.from_dict(data)

    def test_seed_override(self):
        config = CounterexampleConfig(which="lemma1", seed=5)
        assert config.require_seed(None) == 5
        assert config.require_seed(8) == 8
        assert config.stochastic
        assert not CounterexampleConfig(which="2").stochastic


class TestCheckpoint:
    def test_round_trip_and_clear(self, tmp_path):
        target = tmp_path / "deep" / "run.ckpt"
        checkpoint = ExperimentCheckpoint(str(target), "abc:1")
        assert checkpoint.load_rows() is None
        checkpoint.save_rows([{"n": 1}])
        assert checkpoint.load_rows() == [{"n": 1}]
        assert ExperimentCheckpoint(str(target), "abc:2").load_rows() is None
        checkpoint.clear()
        assert not target.exists()

    def test_unreadable_file(self, tmp_path):
        target = tmp_path / "run.ckpt"
        target.write_text("not json")
        assert ExperimentCheckpoint(str(target), "abc:1").load_rows() is None


class TestLedger:
    def test_run_lifecycle(self, tmp_path):
        ledger = LedgerDB(str(tmp_path / "ledger.db"))
        ledger.run_start("r1", "metric", config_fingerprint="f", cpu_workers=2)
        assert ledger.run_status("r1") == "running"
        ledger.metric("r1", "metric", "elapsed", 1.5, "sec")
        ledger.metric("r1", "metric", "throughput", 10, "distances_per_sec")
        ledger.run_finish("r1", "success")
        assert ledger.run_status("r1") == "success"
        assert ledger.run_metrics("r1") == [("metric", "elapsed", 1.5, "sec"),
                                            ("metric", "throughput", 10.0, "distances_per_sec")]
        assert ledger.run_status("missing") is None

    def test_safe_open(self, tmp_path):
        assert LedgerDB.safe_open("") is None
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert LedgerDB.safe_open(str(blocker / "ledger.db")) is None


def test_setup_logging_keeps_existing_handlers():
    root = logging.getLogger()
    before = list(root.handlers)
    setup_logging(SessionConfig())
    assert root.handlers == before


@contextmanager
def bare_root_logger():
    root = logging.getLogger()
    saved, level = list(root.handlers), root.level
    for handler in saved:
        root.removeHandler(handler)
    try:
        yield root
    finally:
        for handler in list(root.handlers):
            root.removeHandler(handler)
            handler.close()
        for handler in saved:
            root.addHandler(handler)
        root.setLevel(level)


class TestLogging:
    def test_console_records_go_to_stderr(self, capsys):
        with bare_root_logger():
            setup_logging(SessionConfig(), logging.INFO, command="distance", run_id="r1")
            logging.getLogger("cadlag_line.sample").info("HELLO: x")
        captured = capsys.readouterr()
        assert captured.out == ""
        assert "cadlag-line[distance] INFO cadlag_line.sample: HELLO: x" in captured.err

    def test_file_records_carry_the_run_id(self, tmp_path):
        target = tmp_path / "logs" / "run.log"
        with bare_root_logger():
            setup_logging(SessionConfig(log_path=str(target)), logging.INFO, command="converge", run_id="r42")
            logging.getLogger("cadlag_line.sample").warning("ROW: done")
        assert " r42 converge WARNING cadlag_line.sample: ROW: done" in target.read_text()

    def test_unusable_log_file_is_reported(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with bare_root_logger() as root:
            setup_logging(SessionConfig(log_path=str(blocker / "run.log")), command="compose")
            assert len(root.handlers) == 1
        assert "LOG_FILE_UNAVAILABLE" in capsys.readouterr().err
