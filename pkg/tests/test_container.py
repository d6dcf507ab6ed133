"""The MRBM parameter container."""

import json

import numpy as np
import pytest

from conftest import random_beta_params, random_mixed_params
from src.data.container import (
    KIND_BETA,
    KIND_MIXED,
    MAGIC,
    PREFIX,
    file_digest,
    parse_header,
    parse_model,
    read_model,
    serialize_model,
    write_model,
)
from src.rbm.params import BetaRbmParams, MixedRbmParams
from src.utils.errors import FormatError


def rebuild(header, tensor_bytes=b""):
    header_bytes = json.dumps(header).encode("utf-8")
    return PREFIX.pack(MAGIC, 1, len(header_bytes)) + header_bytes + tensor_bytes


class TestSerialization:
    def test_beta_model(self, rng):
        params = random_beta_params(rng, 5, 3)
        restored, header = parse_model(serialize_model(params, {"epoch": 7}))
        assert isinstance(restored, BetaRbmParams)
        assert header["kind"] == KIND_BETA
        assert header["metadata"] == {"epoch": 7}
        for name, value in params.blocks().items():
            assert np.array_equal(restored.blocks()[name], value.astype(np.float32))

    def test_mixed_model(self, rng):
        params = random_mixed_params(rng, 4, 2)
        restored, header = parse_model(serialize_model(params))
        assert isinstance(restored, MixedRbmParams)
        assert header["kind"] == KIND_MIXED
        names = [entry["name"] for entry in header["tensors"]]
        assert names[:2] == ["shape.w_shape", "shape.b_shape"]
        assert np.allclose(restored.shape.w_shape, params.shape.w_shape, atol=1e-6)

    def test_serialization_is_deterministic(self, rng):
        params = random_beta_params(rng, 3, 2)
        metadata = {"b": 1, "a": [1, 2]}
        assert serialize_model(params, metadata) == serialize_model(params, dict(reversed(list(metadata.items()))))

    def test_layout(self, rng):
        blob = serialize_model(random_beta_params(rng, 3, 2))
        magic, version, header_length = PREFIX.unpack_from(blob)
        assert (magic, version) == (b"MRBM", 1)
        header, start = parse_header(blob)
        assert start == PREFIX.size + header_length
        # 2 * (3 x 2) weights, 2 * 3 visible biases, 2 hidden biases
        assert len(blob) - start == 4 * (12 + 6 + 2)
        assert header["tensors"][0] == {"name": "w_logv", "dtype": "f32", "shape": [3, 2], "offset": 0}

    def test_unknown_type_is_rejected(self):
        with pytest.raises(TypeError):
            serialize_model({"w": np.zeros(2)})


class TestMalformedContainers:
    def test_bad_magic(self, rng):
        blob = serialize_model(random_beta_params(rng, 2, 1))
        with pytest.raises(FormatError):
            parse_model(b"XXXX" + blob[4:])

    def test_truncated(self, rng):
        blob = serialize_model(random_beta_params(rng, 2, 1))
        with pytest.raises(FormatError):
            parse_model(blob[:5])
        with pytest.raises(FormatError):
            parse_model(blob[:-4])

    def test_unsupported_version(self, rng):
        blob = bytearray(serialize_model(random_beta_params(rng, 2, 1)))
        blob[4] = 9
        with pytest.raises(FormatError):
            parse_model(bytes(blob))

    def test_header_must_be_json(self):
        with pytest.raises(FormatError):
            parse_header(PREFIX.pack(MAGIC, 1, 3) + b"{{{")

    def test_missing_tensor(self):
        header = {"kind": KIND_BETA, "metadata": {}, "tensors": [{"name": "w_logv", "dtype": "f32", "shape": [1, 1], "offset": 0}]}
        with pytest.raises(FormatError):
            parse_model(rebuild(header, np.zeros(1, "<f4").tobytes()))

    def test_unknown_kind_and_dtype(self):
        with pytest.raises(FormatError):
            parse_model(rebuild({"kind": "gaussian-rbm", "tensors": []}))
        bad_dtype = {"kind": KIND_BETA, "tensors": [{"name": "w_logv", "dtype": "f64", "shape": [1], "offset": 0}]}
        with pytest.raises(FormatError):
            parse_model(rebuild(bad_dtype, b"\0" * 8))


class TestFiles:
    def test_write_read_and_digest(self, rng, tmp_path):
        params = random_beta_params(rng, 3, 2)
        path = str(tmp_path / "nested" / "bg.mrbm")
        write_model(path, params, {"model": "background"})
        restored, header = read_model(path)
        assert header["metadata"]["model"] == "background"
        assert restored.n_hid == 2
        digest = file_digest(path)
        assert len(digest) == 64
        write_model(str(tmp_path / "copy.mrbm"), params, {"model": "background"})
        assert file_digest(str(tmp_path / "copy.mrbm")) == digest

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError):
            read_model(str(tmp_path / "absent.mrbm"))
