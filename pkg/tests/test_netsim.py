import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lutna import netsim, nn
from lutna.datasets import Dataset, load_dataset
from lutna.fixedpoint import QuantParams
from lutna.lutcore import MultiplierConfig, Scheme
from lutna.netsim import ActivationHistogram, QLayer, QuantModel

EXACT4 = MultiplierConfig(Scheme.DNC_EXACT, 4, 4)
APPROX4 = MultiplierConfig(Scheme.DNC_APPROX, 4, 4, 2)


def dense_model(weight, cfg, bias=None, bits=4, relu=False, scale=1.0):
    weight = np.asarray(weight, dtype=np.int64)
    q = QLayer("dense", weight=weight, weight_params=QuantParams(bits, 1.0),
               bias=np.zeros(weight.shape[0], np.int64) if bias is None else np.asarray(bias, np.int64),
               mask=weight != 0, out_params=QuantParams(bits, scale), config=cfg)
    layers = [q, QLayer("relu")] if relu else [q]
    return QuantModel(layers, (weight.shape[1],), QuantParams(bits, 1.0), weight.shape[0])


def test_dense_pre_activation_examples():
    m = dense_model([[5, 3]], EXACT4)
    assert netsim.forward(m, [[9, 2]], quantized_input=True).scores[0, 0] == 51
    assert netsim.forward(m, [[9, 2]], [APPROX4], quantized_input=True).scores[0, 0] == 46
    assert netsim.forward(m, [[0, 0]], quantized_input=True).scores[0, 0] == 0


def test_forward_errors():
    m = dense_model([[5, 3]], EXACT4)
    with pytest.raises(ValueError, match="shape"):
        netsim.forward(m, [[1, 2, 3]], quantized_input=True)
    with pytest.raises(ValueError, match="no multiplier"):
        netsim.forward(m, [[1, 2]], [None], quantized_input=True)
    with pytest.raises(ValueError):
        netsim.forward(m, [[1, 2]], [EXACT4, EXACT4], quantized_input=True)
    with pytest.raises(ValueError):
        netsim.forward(m, [[1, 2]], [MultiplierConfig(Scheme.DNC_EXACT, 2, 2)], quantized_input=True)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(-15, 15), st.integers(-15, 15)), min_size=1, max_size=12))
def test_approx_layer_error_bound(pairs):
    w = np.array([[a for a, _ in pairs]])
    d = np.array([[b for _, b in pairs]])
    m = dense_model(w, EXACT4)
    exact = netsim.forward(m, d, quantized_input=True).scores[0, 0]
    approx = netsim.forward(m, d, [APPROX4], quantized_input=True).scores[0, 0]
    bound = sum(abs(a) * 3 for a, b in pairs if abs(b) >> 2)
    assert abs(approx - exact) <= bound


def test_evaluate_trivial_models():
    x = np.eye(3)[:, :]
    ds = Dataset(x * 15, np.arange(3), 3)
    ident = dense_model(np.eye(3, dtype=np.int64) * 15, EXACT4)
    assert netsim.evaluate(ident, ds) == 1.0
    const = dense_model(np.zeros((3, 3), np.int64), EXACT4, bias=[1, 0, 0])
    bal = Dataset(np.zeros((6, 3)), np.arange(6) % 3, 3)
    assert netsim.evaluate(const, bal) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        netsim.evaluate(ident, Dataset(np.zeros((0, 3)), np.zeros(0), 3))


@pytest.fixture(scope="module")
def trained():
    ds = load_dataset("synthetic:patterns:seed=2:n=240")
    out = {}
    for arch in ("mlp", "cnn", "resnet"):
        net = nn.build_network(arch, ds.input_shape, ds.n_classes, np.random.default_rng(0))
        for _ in range(5):
            for i in range(0, len(ds), 32):
                _, g = nn.softmax_xent(net.forward(ds.x[i:i + 32], train=True), ds.y[i:i + 32])
                net.backward(g)
                for c in net.compute_layers():
                    c.W -= 0.1 * c.gW
                    c.b -= 0.1 * c.gb
        out[arch] = (net, netsim.quantize_network(net, ds.x))
    return ds, out


@pytest.mark.parametrize("arch", ["mlp", "cnn", "resnet"])
def test_tlut_and_dnc_bit_identical(trained, arch):
    ds, models = trained
    m = models[arch][1]
    n = len(m.compute_layers())
    a = netsim.forward(m, ds.x, [MultiplierConfig(Scheme.DNC_EXACT)] * n)
    b = netsim.forward(m, ds.x, [MultiplierConfig(Scheme.TLUT)] * n)
    assert all((u == v).all() for u, v in zip(a.activations, b.activations))
    assert (a.scores == b.scores).all()


@pytest.mark.parametrize("arch", ["mlp", "cnn", "resnet"])
def test_quantized_tracks_real(trained, arch):
    ds, models = trained
    net, m = models[arch]
    assert abs(netsim.evaluate(m, ds) - net.accuracy(ds.x, ds.y)) <= 0.02


def test_parallel_evaluation_is_deterministic(trained):
    ds, models = trained
    m = models["cnn"][1]
    p1 = netsim.predict(m, ds.x, batch=17, workers=1)
    p4 = netsim.predict(m, ds.x, batch=17, workers=4)
    assert (p1 == p4).all()
    assert (p1 == netsim.predict(m, ds.x, batch=1000)).all()


def test_mac_counts_exclude_pruned(trained):
    _, models = trained
    m = models["cnn"][1]
    full = m.mac_counts()
    pruned = m.with_plan(m.plan())
    layer = pruned.compute_layers()[0]
    layer.mask[0] = False
    layer.weight[0] = 0
    assert pruned.mac_counts()[0] == full[0] - layer.mask[0].size * 8 * 8
    assert full[1:] == pruned.mac_counts()[1:]
    assert models["mlp"][1].mac_counts() == [c.mask.sum() for c in models["mlp"][1].compute_layers()]


def test_pruned_weights_contribute_nothing():
    m = dense_model([[5, 3]], EXACT4)
    m.compute_layers()[0].mask[0, 1] = False
    m.compute_layers()[0].weight[0, 1] = 0
    assert netsim.forward(m, [[9, 7]], quantized_input=True).scores[0, 0] == 45


def test_to_network_round_trip(trained):
    ds, models = trained
    net, m = models["resnet"]
    assert (netsim.to_network(m).forward(ds.x) == net.forward(ds.x)).all()


def test_histogram_examples():
    m = dense_model([[-5, -3]], EXACT4, relu=True)
    ds = Dataset(np.array([[9.0, 2.0], [4.0, 4.0]]), np.zeros(2), 1)
    h = netsim.activation_histogram(m, ds)
    assert h.counts[0] == h.total == 2
    one = dense_model([[2]], EXACT4)
    h1 = netsim.activation_histogram(one, Dataset(np.array([[3.0]]), np.zeros(1), 1))
    assert h1.total == 1 and h1.counts[6] == 1


def test_trained_histogram_mode_is_zero(trained):
    ds, models = trained
    for _, m in models.values():
        assert netsim.activation_histogram(m, ds).counts.argmax() == 0


def test_histogram_validation():
    with pytest.raises(ValueError):
        ActivationHistogram(4, np.zeros(8))
    with pytest.raises(ValueError):
        ActivationHistogram(2, [1, -1, 0, 0])
    with pytest.raises(ValueError):
        ActivationHistogram(2, [0, 0, 0, 0]).probabilities()


def test_lsb_distribution_examples():
    zero = ActivationHistogram(4, np.eye(16, dtype=np.int64)[0])
    w = ActivationHistogram(4, np.ones(16))
    d = netsim.lsb_product_distribution(zero, w)
    assert d[0] == 1.0 and d.sum() == pytest.approx(1.0)
    uni = netsim.lsb_product_distribution(ActivationHistogram(4, np.ones(16)), w)
    assert uni[0] == pytest.approx(0.296875, abs=0)
    assert uni.size == 3 * 15 + 1


def _brute_lsb(act, wts):
    pa, pw = act / act.sum(), wts / wts.sum()
    out = {}
    for code, p in enumerate(pa):
        for wm, q in enumerate(pw):
            v = wm * (code & 3)
            out[v] = out.get(v, 0.0) + p * q
    return out


@given(st.lists(st.integers(0, 50), min_size=16, max_size=16), st.lists(st.integers(0, 50), min_size=16, max_size=16))
def test_lsb_distribution_matches_brute_force(act, wts):
    act, wts = np.array(act), np.array(wts)
    if act.sum() == 0 or wts.sum() == 0:
        return
    d = netsim.lsb_product_distribution(ActivationHistogram(4, act), ActivationHistogram(4, wts))
    ref = _brute_lsb(act, wts)
    for v in range(d.size):
        assert d[v] == pytest.approx(ref.get(v, 0.0), abs=1e-12)


@given(st.lists(st.integers(0, 50), min_size=16, max_size=16), st.lists(st.integers(1, 50), min_size=16, max_size=16))
def test_lsb_argmax_zero_when_chunk_mode_is_zero(act, wts):
    act = np.array(act)
    chunk = np.bincount(np.arange(16) & 3, weights=act, minlength=4)
    if chunk[0] < chunk[1:].max() or act.sum() == 0:
        return
    d = netsim.lsb_product_distribution(ActivationHistogram(4, act), ActivationHistogram(4, wts))
    assert d.argmax() == 0


def test_activation_mode_zero_alone_does_not_force_lsb_argmax_zero():
    # code 0 is the single most frequent code, but chunk value 1 carries more mass
    act = np.zeros(16)
    act[0], act[1], act[5], act[9], act[13] = 26, 18.5, 18.5, 18.5, 18.5
    wts = np.zeros(16)
    wts[7] = 1
    d = netsim.lsb_product_distribution(ActivationHistogram(4, act), ActivationHistogram(4, wts))
    assert act.argmax() == 0 and d.argmax() == 7


def test_weight_histogram_rescales():
    m = dense_model([[15, -15, 0, 1]], EXACT4)
    h = netsim.weight_histogram(m, 2)
    assert h.counts.tolist() == [1, 0, 0, 2]  # 1 * 3/15 rounds to 0
