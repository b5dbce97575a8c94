"""Checkpoint format: bit-exact round trip plus a byte-level parse of the
container (magic, u32 little-endian header length, JSON header, raw
little-endian tensor payloads in header order) done independently of the
reader, so the two cannot drift together.
"""

import json
import struct

import numpy as np
import pytest

from diffusion_classifier import (CheckpointError, MlpDenoiser,
                                  load_checkpoint, make_schedule,
                                  save_checkpoint, train_denoiser)


def _trained_net(seed=0):
    net = MlpDenoiser((3,), 2, hidden=(6,), embed_dim=4, seed=seed,
                      variance_head=True)
    schedule = make_schedule("linear", 20)
    rng = np.random.default_rng(42)
    xs = rng.standard_normal((16, 3))
    labels = rng.integers(0, 2, size=16)
    train_denoiser(net, (xs, labels), schedule, steps=5, batch_size=8,
                   lr=1e-3, seed=1)
    return net


def test_round_trip_is_bit_exact(tmp_path):
    net = _trained_net()
    config = {"seed": 7, "nested": {"a": [1, 2.5, "x"]}}
    path = tmp_path / "model.dck"
    save_checkpoint(net, config, path)
    loaded, cfg = load_checkpoint(path)
    assert cfg == config
    state, lstate = net.state(), loaded.state()
    assert set(state) == set(lstate)
    for name in state:
        assert state[name].dtype == lstate[name].dtype == np.float32
        assert np.array_equal(state[name], lstate[name])
    x_t = np.random.default_rng(3).standard_normal((4, 3))
    ts = np.array([1, 5, 10, 20])
    assert np.array_equal(net.predict_batch(x_t, ts, 1),
                          loaded.predict_batch(x_t, ts, 1))
    assert np.array_equal(net.predict_variance_batch(x_t, ts, 0),
                          loaded.predict_variance_batch(x_t, ts, 0))


def test_container_bytes_parse_independently(tmp_path):
    net = _trained_net()
    path = tmp_path / "model.dck"
    save_checkpoint(net, {"k": 1}, path)
    data = path.read_bytes()
    assert data[:4] == b"DCK1"
    (hlen,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8:8 + hlen].decode("utf-8"))
    assert header["version"] == 1
    assert header["config"] == {"k": 1}
    state = net.state()
    specs = header["tensors"]
    assert [s["name"] for s in specs] == list(state)
    offset = 8 + hlen
    for spec in specs:
        arr = state[spec["name"]]
        assert tuple(spec["shape"]) == arr.shape
        assert spec["dtype"] == "f32"
        nbytes = arr.size * 4
        got = np.frombuffer(data[offset:offset + nbytes],
                            dtype="<f4").reshape(arr.shape)
        assert np.array_equal(got, arr)
        offset += nbytes
    assert offset == len(data)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "nope.dck")


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.dck"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)
    path.write_bytes(b"DC")
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_truncated_header_length_field(tmp_path):
    path = tmp_path / "short.dck"
    path.write_bytes(b"DCK1" + b"\x05")
    with pytest.raises(CheckpointError, match="byte offset 4"):
        load_checkpoint(path)


def test_truncated_header(tmp_path):
    net = _trained_net()
    path = tmp_path / "model.dck"
    save_checkpoint(net, {}, path)
    data = path.read_bytes()
    (hlen,) = struct.unpack("<I", data[4:8])
    path.write_bytes(data[:8 + hlen - 3])
    with pytest.raises(CheckpointError, match="truncated header"):
        load_checkpoint(path)


def test_truncated_payload_reports_offset(tmp_path):
    net = _trained_net()
    path = tmp_path / "model.dck"
    save_checkpoint(net, {}, path)
    data = path.read_bytes()
    path.write_bytes(data[:-2])
    with pytest.raises(CheckpointError, match="truncated payload.*byte"):
        load_checkpoint(path)


def test_trailing_bytes_rejected(tmp_path):
    net = _trained_net()
    path = tmp_path / "model.dck"
    save_checkpoint(net, {}, path)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(CheckpointError, match="trailing bytes"):
        load_checkpoint(path)


def test_malformed_header_json(tmp_path):
    blob = b"{not json"
    path = tmp_path / "bad.dck"
    path.write_bytes(b"DCK1" + struct.pack("<I", len(blob)) + blob)
    with pytest.raises(CheckpointError, match="malformed header JSON"):
        load_checkpoint(path)


def test_unsupported_version(tmp_path):
    net = _trained_net()
    path = tmp_path / "model.dck"
    save_checkpoint(net, {}, path)
    data = path.read_bytes()
    (hlen,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8:8 + hlen])
    header["version"] = 2
    blob = json.dumps(header, sort_keys=True).encode()
    path.write_bytes(b"DCK1" + struct.pack("<I", len(blob)) + blob
                     + data[8 + hlen:])
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_unsupported_tensor_dtype(tmp_path):
    net = _trained_net()
    path = tmp_path / "model.dck"
    save_checkpoint(net, {}, path)
    data = path.read_bytes()
    (hlen,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8:8 + hlen])
    header["tensors"][0]["dtype"] = "f16"
    blob = json.dumps(header, sort_keys=True).encode()
    path.write_bytes(b"DCK1" + struct.pack("<I", len(blob)) + blob
                     + data[8 + hlen:])
    with pytest.raises(CheckpointError, match="dtype"):
        load_checkpoint(path)
