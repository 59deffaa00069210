import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from windstgnn.config import ConfigError, RunConfig, dump_config, from_flat, load_config, to_flat
from windstgnn.data import load_sdwpf
from windstgnn.storage import (
    MAGIC,
    FormatError,
    dumps_container,
    loads_container,
    parse_manifest,
    read_array,
    read_manifest,
    write_array,
    write_manifest,
)
from windstgnn.synth import (
    ABNORMAL_RATE,
    EVENT_ABNORMAL,
    EVENT_MISSING,
    EVENT_NONE,
    EVENT_UNKNOWN,
    generate_farm,
    power_curve,
    write_farm,
)
from windstgnn.validity import RecordStatus, classify

arrays = hnp.arrays(np.float64, hnp.array_shapes(min_dims=0, max_dims=3, max_side=4),
                    elements=st.floats(allow_nan=False, width=64))


# -- arrays and containers ---------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(arrays)
def test_array_file_roundtrip(tmp_path_factory, arr):
    path = tmp_path_factory.mktemp("a") / "x.f64"
    write_array(path, arr)
    back = read_array(path)
    assert back.shape == arr.shape and back.tobytes() == arr.astype("<f8").tobytes()


def test_array_header_text(tmp_path):
    write_array(tmp_path / "x.f64", np.arange(6.0).reshape(2, 3))
    raw = (tmp_path / "x.f64").read_bytes()
    assert raw.startswith(b"f64 shape=2,3\n") and len(raw) == len(b"f64 shape=2,3\n") + 48
    (tmp_path / "bad.f64").write_bytes(b"i32 shape=2\n" + bytes(8))
    with pytest.raises(FormatError):
        read_array(tmp_path / "bad.f64")


def test_truncated_payload(tmp_path):
    (tmp_path / "t.f64").write_bytes(b"f64 shape=4\n" + bytes(16))
    with pytest.raises(FormatError):
        read_array(tmp_path / "t.f64")


@settings(max_examples=30, deadline=None)
@given(st.lists(arrays, min_size=0, max_size=4), st.floats(allow_nan=False))
def test_container_roundtrip(arrs, value):
    named = {f"layer{i}.W": a for i, a in enumerate(arrs)}
    data = dumps_container({"model": "agcrn", "loss": value, "stats": [1.5, -2.0]}, named)
    man, back = loads_container(data)
    assert man == {"model": "agcrn", "loss": repr(value), "stats": "1.5,-2.0"}
    assert list(back) == list(named)
    for k in named:
        assert back[k].tobytes() == named[k].astype("<f8").tobytes()
    assert dumps_container(man, back) == data


def test_container_rejects_garbage():
    with pytest.raises(FormatError):
        loads_container(b"hello\n")
    with pytest.raises(FormatError):
        loads_container(MAGIC + b"a=1\n")
    with pytest.raises(FormatError):
        loads_container(MAGIC + b"a=1\n\nnot an array header\n")
    with pytest.raises(FormatError):
        dumps_container({"bad=key": 1}, {})


def test_manifest_text(tmp_path):
    write_manifest(tmp_path / "m.txt", {"a": 1, "b": 0.1, "c": [1.0, 2.0]})
    assert (tmp_path / "m.txt").read_text() == "a=1\nb=0.1\nc=1.0,2.0\n"
    assert read_manifest(tmp_path / "m.txt") == {"a": "1", "b": "0.1", "c": "1.0,2.0"}
    assert parse_manifest("# comment\n\n k = v \n") == {"k": "v"}
    with pytest.raises(FormatError):
        parse_manifest("no separator\n")


# -- config ------------------------------------------------------------------

def test_defaults_carry_reference_hyperparameters():
    flat = to_flat(RunConfig())
    assert flat["train.lr"] == 0.001 and flat["train.batch_size"] == 32 and flat["train.epochs"] == 30
    assert flat["train.clip_norm"] == 5.0 and flat["train.huber_delta"] == 5.0
    assert flat["agcrn.layers"] == 2 and flat["agcrn.hidden"] == 64 and flat["agcrn.embed_dim"] == 10
    assert flat["graph.neighbours"] == 5 and flat["graph.eps"] == 0.8
    assert flat["history"] == 144 and flat["horizon"] == 288


def test_config_file_roundtrip(tmp_path):
    cfg = RunConfig().with_overrides({"train.seed": 9, "agcrn.hidden": 16, "graph.dtw_band": 7})
    (tmp_path / "c.cfg").write_text(dump_config(cfg))
    assert load_config(tmp_path / "c.cfg") == cfg
    assert load_config(tmp_path / "c.cfg", {"train.seed": "3"}).train.seed == 3


def test_config_rejects_unknown_and_bad_values():
    with pytest.raises(ConfigError):
        from_flat({"train.momentum": "0.9"})
    with pytest.raises(ConfigError):
        from_flat({"train.batch_size": "many"})
    with pytest.raises(ConfigError):
        from_flat({"agcrn.hidden": "0"})


def test_history_horizon_propagate():
    cfg = RunConfig().with_overrides({"history": 36, "horizon": 72})
    assert (cfg.agcrn.history, cfg.agcrn.horizon) == (36, 72)
    assert (cfg.mtgnn.history, cfg.mtgnn.horizon) == (36, 72)


# -- synthetic farm ----------------------------------------------------------

def test_power_curve_shape():
    w = np.array([0.0, 2.5, 2.6, 7.0, 12.0, 20.0])
    p = power_curve(w)
    assert p[0] == p[1] == 0.0 and p[2] >= 1.0 and p[4] == p[5] == 1500.0
    assert (np.diff(p) >= 0).all()


@pytest.mark.parametrize("turbines,days", [(2, 5), (8, 30)])
def test_row_count_and_determinism(tmp_path, turbines, days):
    farm = generate_farm(turbines, days, seed=3)
    assert len(farm.data) == turbines * days * 144
    write_farm(farm, tmp_path / "a")
    write_farm(generate_farm(turbines, days, seed=3), tmp_path / "b")
    assert (tmp_path / "a/data.csv").read_bytes() == (tmp_path / "b/data.csv").read_bytes()


def test_injected_events_classify_as_intended(tmp_path):
    farm = generate_farm(8, 30, seed=7)
    write_farm(farm, tmp_path)
    ds = load_sdwpf(tmp_path / "data.csv", tmp_path / "loc.csv")
    status = classify(ds.raw)
    expected = {EVENT_NONE: RecordStatus.VALID, EVENT_MISSING: RecordStatus.MISSING,
                EVENT_UNKNOWN: RecordStatus.UNKNOWN, EVENT_ABNORMAL: RecordStatus.ABNORMAL}
    for event, st_ in expected.items():
        sel = farm.events == event
        assert sel.any() and (status[sel] == st_).all()
    rate = (farm.events == EVENT_ABNORMAL).mean()
    assert abs(rate - ABNORMAL_RATE) < 0.002


def test_generator_preconditions():
    with pytest.raises(ValueError):
        generate_farm(1, 30)
    with pytest.raises(ValueError):
        generate_farm(4, 4)
