import hashlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from boardsae import dataset_io as dio
from boardsae.bsp import OTHELLO_BOARD_STATE
from boardsae.errors import FormatError, SizeError, SplitOverlapError
from boardsae.probes import LinearProbe
from boardsae.sae import init_params

HASH = hashlib.sha256(b"model").digest()

f32 = hnp.arrays(np.float32, hnp.array_shapes(min_dims=2, max_dims=2, min_side=0, max_side=12),
                 elements=st.floats(-1e6, 1e6, width=32))


@settings(max_examples=30)
@given(f32)
def test_dataset_roundtrip_bit_identical(tmp_path_factory, acts):
    path = tmp_path_factory.mktemp("ds") / "a.bin"
    prov = np.stack([np.arange(acts.shape[0]) // 3, np.arange(acts.shape[0])], axis=1)
    ds = dio.ActivationDataset("othello", HASH, 6, acts.astype(np.float64), prov)
    dio.write_dataset(path, ds)
    back = dio.read_dataset(path)
    assert back.acts.astype(np.float32).tobytes() == acts.tobytes()
    assert (back.provenance == prov).all()
    assert (back.game, back.model_hash, back.layer) == ("othello", HASH, 6)
    path2 = path.with_name("b.bin")
    dio.write_dataset(path2, back)
    assert path.read_bytes() == path2.read_bytes()


def test_empty_dataset(tmp_path):
    ds = dio.ActivationDataset("chess", HASH, 0, np.zeros((0, 5)), np.zeros((0, 2)))
    dio.write_dataset(tmp_path / "e.bin", ds)
    back = dio.read_dataset(tmp_path / "e.bin")
    assert back.acts.shape == (0, 5)


@pytest.fixture
def small_file(tmp_path):
    ds = dio.ActivationDataset("chess", HASH, 1, np.ones((3, 4)), np.zeros((3, 2)))
    path = tmp_path / "s.bin"
    dio.write_dataset(path, ds)
    return path


def test_bad_magic(small_file):
    data = bytearray(small_file.read_bytes())
    data[0] ^= 0xFF
    small_file.write_bytes(bytes(data))
    with pytest.raises(FormatError) as err:
        dio.read_dataset(small_file)
    assert err.value.offset == 0


def test_truncated(small_file):
    small_file.write_bytes(small_file.read_bytes()[:-5])
    with pytest.raises(FormatError, match="at byte"):
        dio.read_dataset(small_file)


def test_row_count_mismatch(small_file):
    data = bytearray(small_file.read_bytes())
    # header: magic 4, version 4, str 2+5, hash 32, layer 4, n 4 -> rows at byte 55
    data[55] = 7
    small_file.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="row count"):
        dio.read_dataset(small_file)


def test_labels_roundtrip_and_hash_check(tmp_path, rng):
    labels = (rng.random((37, 128)) < 0.3).astype(np.uint8)
    lf = dio.LabelFile("othello", "board_state", OTHELLO_BOARD_STATE.hash(), labels)
    dio.write_labels(tmp_path / "l.bin", lf)
    back = dio.read_labels(tmp_path / "l.bin", OTHELLO_BOARD_STATE.hash())
    assert (back.labels == labels).all()
    with pytest.raises(FormatError, match="catalog hash"):
        dio.read_labels(tmp_path / "l.bin", b"\0" * 32)


def test_sae_checkpoint_roundtrip(tmp_path):
    params = init_params(4, 8, "gated", seed=3)
    params = params.replace(**{k: v.astype(np.float32).astype(np.float64) for k, v in params.tensors().items()})
    dio.write_sae_checkpoint(tmp_path / "c.bin", params, {"lam_init": 0.2, "note": "x" * 70000}, 12, 0.5, 0.3)
    ck = dio.read_sae_checkpoint(tmp_path / "c.bin")
    assert ck.step == 12 and ck.p == 0.5 and ck.lam == 0.3
    assert ck.config["note"] == "x" * 70000
    for k, v in params.tensors().items():
        assert (ck.params.tensors()[k] == v).all()


def test_probe_set_roundtrip(tmp_path):
    probes = [LinearProbe(np.array([1.0, -2.0]), 0.5, 3), LinearProbe(np.array([0.25, 4.0]), -1.0, 7)]
    dio.write_probe_set(tmp_path / "p.bin", probes, "board_state")
    catalog, back = dio.read_probe_set(tmp_path / "p.bin")
    assert catalog == "board_state"
    assert [p.bsp for p in back] == [3, 7]
    assert (back[1].weights == probes[1].weights).all()


def test_split_deterministic_and_disjoint():
    a = dio.split_games(2500, seed=4)
    b = dio.split_games(2500, seed=4)
    assert a.train == b.train and a.test == b.test
    assert len(a.train) == len(a.test) == 1000
    assert not set(a.train) & set(a.test)
    assert len(set(range(2500)) - set(a.train) - set(a.test)) == 500


def test_split_too_large():
    with pytest.raises(SizeError):
        dio.split_games(1500, seed=0)


def test_manifest_overlap_refused(tmp_path):
    with pytest.raises(SplitOverlapError):
        dio.SplitManifest([1, 2], [2, 3], 0)
    m = dio.split_games(10, 1, (4, 4))
    m.save(tmp_path / "m.json")
    assert dio.SplitManifest.load(tmp_path / "m.json").test == m.test
