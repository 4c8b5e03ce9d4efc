import hashlib
import json
import shutil

import numpy as np
import pytest

from lutna import modelio, netsim, nn
from lutna.datasets import load_dataset
from lutna.lutcore import MultiplierConfig, Scheme
from lutna.netsim import ActivationHistogram

GOLDEN = {
    "toy_mlp.json": "f657ccb0f9cf9ecb0aeb6fe408a9950cf713a7c0ebfcefca0521108edd863798",
    "toy_mlp.bin": "dc060a7f8bf1b5731c77cb7b3e2028d095f6378565dc6759779bbcb32a5af6e7",
    "approx_sensitive.json": "4f4af4e1f4d38b3a3015e49790a7ad7d996d58e070a4137313a84e962d00912a",
    "approx_sensitive.bin": "d421f7397a733f20d0e6cb5b1df79fc41c460c5ac1e40d6ed981bbbfc80da872",
}


def _model(arch="resnet", bits=8, wbits=8):
    ds = load_dataset("synthetic:patterns:seed=0:n=40")
    net = nn.build_network(arch, ds.input_shape, ds.n_classes, np.random.default_rng(1))
    net.compute_layers()[0].mask[0] = False
    net.compute_layers()[0].W *= net.compute_layers()[0].mask
    m = netsim.quantize_network(net, ds.x, bits, wbits, meta={"seed": 1})
    m.compute_layers()[-1].config = MultiplierConfig(Scheme.DNC_APPROX, 8 if bits <= 8 else 16,
                                                     8 if wbits <= 8 else 16)
    return m, ds


def _assert_same(a, b):
    assert a.input_shape == b.input_shape and a.input_params == b.input_params and a.meta == b.meta
    for x, y in zip(a.compute_layers(), b.compute_layers()):
        assert (x.weight == y.weight).all() and (x.mask == y.mask).all() and (x.bias == y.bias).all()
        assert x.weight_params == y.weight_params and x.out_params == y.out_params and x.config == y.config
        assert (x.real_weight == y.real_weight).all() and (x.real_bias == y.real_bias).all()


@pytest.mark.parametrize("arch", ["mlp", "cnn", "resnet"])
def test_round_trip_is_bit_exact(tmp_path, arch):
    m, ds = _model(arch)
    modelio.save_model(m, tmp_path / "m")
    back = modelio.load_model(tmp_path / "m.json")
    _assert_same(m, back)
    assert (netsim.forward(m, ds.x).scores == netsim.forward(back, ds.x).scores).all()
    assert netsim.evaluate(m, ds) == netsim.evaluate(back, ds)


def test_sixteen_bit_weights_use_wide_words(tmp_path):
    m, _ = _model("mlp", 12, 16)
    modelio.save_model(m, tmp_path / "w")
    back = modelio.load_model(tmp_path / "w")
    _assert_same(m, back)
    assert np.abs(back.compute_layers()[0].weight).max() == 65535
    manifest = json.loads((tmp_path / "w.json").read_text())
    assert manifest["layers"][1]["tensors"][0]["dtype"] == "<u4"


def test_weight_word_layout():
    raw = modelio.pack_weights(np.array([5, -5, 0, -32767]), 8)
    assert raw == bytes([5, 0, 5, 0x80, 0, 0, 0xFF, 0xFF])
    assert modelio.unpack_weights(raw, 8, (4,)).tolist() == [5, -5, 0, -32767]


def test_corrupt_byte_is_a_checksum_error(tmp_path):
    m, _ = _model("mlp")
    _, bpath = modelio.save_model(m, tmp_path / "m")
    raw = bytearray(bpath.read_bytes())
    raw[10] ^= 0x01
    bpath.write_bytes(bytes(raw))
    with pytest.raises(modelio.ChecksumError):
        modelio.load_model(tmp_path / "m")


def test_truncated_blob(tmp_path):
    m, _ = _model("mlp")
    _, bpath = modelio.save_model(m, tmp_path / "m")
    bpath.write_bytes(bpath.read_bytes()[:-3])
    with pytest.raises(modelio.TruncatedBlobError):
        modelio.load_model(tmp_path / "m")


def test_unknown_version(tmp_path):
    m, _ = _model("mlp")
    mpath, _ = modelio.save_model(m, tmp_path / "m")
    doc = json.loads(mpath.read_text())
    doc["version"] = 99
    mpath.write_text(json.dumps(doc))
    with pytest.raises(modelio.VersionError, match="99"):
        modelio.load_model(mpath)


def test_overlapping_tensors_rejected(tmp_path):
    m, _ = _model("mlp")
    mpath, _ = modelio.save_model(m, tmp_path / "m")
    doc = json.loads(mpath.read_text())
    t = doc["layers"][1]["tensors"]
    t[1]["offset"] = t[0]["offset"]
    mpath.write_text(json.dumps(doc))
    with pytest.raises(modelio.ModelFormatError, match="overlap"):
        modelio.load_model(mpath)


@pytest.mark.parametrize("name", sorted(GOLDEN))
def test_golden_fixture_hash(fixtures_dir, name):
    assert hashlib.sha256((fixtures_dir / name).read_bytes()).hexdigest() == GOLDEN[name]


def test_golden_fixture_resaves_byte_identical(fixtures_dir, tmp_path):
    shutil.copy(fixtures_dir / "toy_mlp.json", tmp_path / "x.json")
    shutil.copy(fixtures_dir / "toy_mlp.bin", tmp_path / "toy_mlp.bin")
    m = modelio.load_model(fixtures_dir / "toy_mlp.json")
    modelio.save_model(m, tmp_path / "toy_mlp")
    for suffix in (".json", ".bin"):
        assert (tmp_path / f"toy_mlp{suffix}").read_bytes() == (fixtures_dir / f"toy_mlp{suffix}").read_bytes()


def test_histogram_round_trip(tmp_path):
    h = ActivationHistogram(3, [5, 0, 2, 1, 0, 0, 0, 9])
    modelio.save_histogram(h, tmp_path / "h.csv")
    back = modelio.load_histogram(tmp_path / "h.csv")
    assert back.n_bits == 3 and (back.counts == h.counts).all()
    (tmp_path / "bad.csv").write_text("code,count\n0,1\n1,2\n2,3\n")
    with pytest.raises(modelio.ModelFormatError):
        modelio.load_histogram(tmp_path / "bad.csv")


def test_dataset_loader_is_reexported():
    assert modelio.load_dataset("synthetic:two_gaussians:seed=7:n=100").x.shape == (100, 2)
