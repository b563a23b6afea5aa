import json
import logging
import os
from logging.handlers import RotatingFileHandler

import pytest

from app.config import Config
from app.errors import ConfigurationError
from app.utils.helpers import Stopwatch, format_seconds, parse_grid
from app.utils.logger import LOGGER_NAME, _run_log_path, setup_logger


def test_defaults():
    config = Config()
    assert config.get("problem", "epsilon") == pytest.approx(1e-2)
    assert config.get("discretization", "subdivisions") == 40
    assert config.get("discretization", "time_steps") == 60
    assert config.get("paths", "log_dir") is not None
    assert config.get("nothing") is None


def test_desk_profile():
    config = Config(profile="desk")
    assert config.get("discretization", "subdivisions") == 8
    assert config.get("discretization", "time_steps") == 12
    assert config.profile == "desk"


def test_unknown_profile():
    with pytest.raises(ConfigurationError):
        Config(profile="huge")


def test_missing_explicit_file(tmp_path):
    with pytest.raises(ConfigurationError):
        Config(str(tmp_path / "missing.json"))


def test_malformed_file_falls_back_to_defaults(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{ not json")
    config = Config(str(path))
    assert config.get("discretization", "subdivisions") == 40


def test_file_is_merged_over_defaults(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"problem": {"epsilon": 0.02}, "pod": {"rank": 5}}))
    config = Config(str(path))
    assert config.get("problem", "epsilon") == 0.02
    assert config.get("problem", "alpha") == 1.0
    assert config.get("pod", "rank") == 5
    assert config.get("pod", "gamma") == pytest.approx(1e-2)


def test_save_round_trip(tmp_path):
    path = tmp_path / "nested" / "config.json"
    config = Config(profile="desk")
    config.set("sweep", "jobs", 3)
    assert config.save_config(str(path))
    loaded = Config(str(path))
    assert loaded.get("sweep", "jobs") == 3
    assert loaded.get("discretization", "subdivisions") == 8


def test_sweep_config_from_defaults():
    sweep = Config().sweep_config()
    assert len(sweep.grid) == 9
    assert sweep.rank == 9 and sweep.gamma is None
    assert sweep.ranks is None and sweep.seed == 0
    assert sweep.methods == ["BPOD", "ExtPOD", "ExpPOD", "SAIM"]
    assert sweep.sensitivity_method == "FD"


def test_rank_replaces_gamma():
    config = Config()
    config.set("pod", "rank", 4)
    sweep = config.sweep_config()
    assert sweep.rank == 4 and sweep.gamma is None


def test_desk_profile_selects_rank_by_energy():
    sweep = Config(profile="desk").sweep_config()
    assert sweep.rank is None
    assert sweep.gamma == pytest.approx(1e-2)


def test_rank_axis_and_seed():
    config = Config()
    config.set("sweep", "ranks", [3, 6, 9])
    config.set("sweep", "seed", 11)
    sweep = config.sweep_config()
    assert sweep.rank_rules() == [(3, None), (6, None), (9, None)]
    assert sweep.seed == 11


def test_bad_grid():
    config = Config()
    config.set("sweep", "grid", "80:-5:120")
    with pytest.raises(ConfigurationError):
        config.sweep_config()


def test_optimizer_options():
    options = Config().optimizer_options()
    assert options["tol"] == pytest.approx(1e-8)
    assert options["max_iter"] == 30
    assert options["cg_tol"] is None


def test_parse_grid():
    assert parse_grid("80:20:120") == pytest.approx([1 / 80, 1 / 100, 1 / 120])
    assert parse_grid("100, 50") == pytest.approx([0.01, 0.02])
    for bad in ("80:5", "120:5:80", "0,10", ""):
        with pytest.raises(ValueError):
            parse_grid(bad)


def test_format_seconds():
    assert format_seconds(0.25) == "250.0 ms"
    assert format_seconds(3.0) == "3.00 s"
    assert format_seconds(600.0) == "10.0 min"


def test_stopwatch():
    with Stopwatch() as watch:
        sum(range(1000))
    assert watch.elapsed >= 0.0


def test_logger_is_configured_once(tmp_path):
    first = setup_logger(str(tmp_path), level="WARNING")
    count = len(first.handlers)
    second = setup_logger(str(tmp_path), level="DEBUG")
    assert second is first is logging.getLogger(LOGGER_NAME)
    assert len(second.handlers) == count


def test_run_log_is_named_after_the_command(tmp_path):
    path = _run_log_path(str(tmp_path), "sweep")
    name = os.path.basename(path)
    assert os.path.dirname(path) == str(tmp_path)
    assert name.startswith("sensipod_sweep_") and name.endswith(".log")
    unnamed = os.path.basename(_run_log_path(str(tmp_path), None))
    assert unnamed.startswith("sensipod_") and "None" not in unnamed


def test_repeat_setup_moves_the_console_level(tmp_path):
    logger = setup_logger(str(tmp_path), level="ERROR")
    console = [h for h in logger.handlers if not isinstance(h, RotatingFileHandler)]
    assert console and all(h.level == logging.ERROR for h in console)
    setup_logger(str(tmp_path), level="INFO")
    assert all(h.level == logging.INFO for h in console)
