import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracmap.config import DEFAULTS, ConfigError, dumps, parse_overrides, parse_value, read_file, resolve


def test_defaults_resolve():
    cfg = resolve()
    assert cfg == DEFAULTS
    assert resolve("grad-check")["mesh.resolution"] == 32
    assert resolve("cutoff-decay")["mesh.resolution"] == 2048


def test_file_sections_and_root_keys(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "s = 0.5\n"
        "schedule = 0.8, 0.7  # two stages\n"
        "\n[mesh]\nresolution = 128\n"
        "\n[optimizer]\ntol_grad = inf\n"
        "\n[experiment]\nangles_over_pi = 1/6, 1/2\nell = 1, 2\nR = 2\n"
    )
    cfg = resolve("minimize", path)
    assert cfg["schedule"] == (0.8, 0.7)
    assert cfg["mesh.resolution"] == 128
    assert cfg["optimizer.tol_grad"] == math.inf
    assert cfg["experiment.angles_over_pi"] == pytest.approx((1 / 6, 1 / 2))
    assert cfg["experiment.ell"] == (1, 2)
    assert cfg["experiment.R"] == (2.0,)


def test_overrides_beat_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("[mesh]\nresolution = 128\n")
    cfg = resolve(None, path, ["mesh.resolution=64", "t = 0.7"])
    assert cfg["mesh.resolution"] == 64 and cfg["t"] == 0.7


def test_missing_file_names_path(tmp_path):
    with pytest.raises(ConfigError) as exc:
        read_file(tmp_path / "absent.cfg")
    assert "absent.cfg" in str(exc.value)


@pytest.mark.parametrize(
    "item, key",
    [("bogus=1", "bogus"), ("mesh.resolution=many", "mesh.resolution"),
     ("experiment.ell=1.5", "experiment.ell"), ("experiment.lambda=", "experiment.lambda"),
     ("no-equals-sign", "no-equals-sign")],
)
def test_bad_overrides_name_key(item, key):
    with pytest.raises(ConfigError) as exc:
        parse_overrides([item])
    assert exc.value.key == key
    assert key in str(exc.value)


def test_unknown_key_in_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("[optimizer]\nlearning_rate = 3\n")
    with pytest.raises(ConfigError) as exc:
        read_file(path)
    assert exc.value.key == "optimizer.learning_rate"


def test_malformed_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("[mesh\nresolution = 3\n")
    with pytest.raises(ConfigError):
        read_file(path)


@given(
    st.floats(0.01, 0.99),
    st.lists(st.floats(0.01, 0.99), min_size=1, max_size=4),
    st.integers(8, 10_000),
    st.floats(1e-12, 1.0) | st.just(math.inf),
)
def test_dumps_round_trip(tmp_path_factory, s, sched, res, tol):
    cfg = dict(DEFAULTS)
    cfg.update({"s": s, "schedule": tuple(sched), "mesh.resolution": res, "optimizer.tol_grad": tol})
    path = tmp_path_factory.mktemp("cfg") / "round.cfg"
    path.write_text(dumps(cfg))
    assert resolve(None, path) == cfg


def test_parse_value_types():
    assert parse_value("n", "2") == 2
    assert parse_value("experiment.eps", "Infinity") == math.inf
    assert parse_value("quadrature.diagonal", " exclude ") == "exclude"
