import numpy as np
import pytest

from lutna import ltp, nn
from lutna.datasets import load_dataset


def single_dense(weights):
    net = nn.Network([nn.Dense(len(weights), 1)], (len(weights),))
    net.layers[0].W = np.array([weights], dtype=float)
    return net


def test_prune_smallest_magnitude():
    state = ltp.TrainState.create(single_dense([0.1, -0.5, 0.2, 0.9]), 0)
    ltp.prune_round(state, 0.25)
    assert state.masks[0].tolist() == [[False, True, True, True]]


def test_prune_ties_break_by_index():
    state = ltp.TrainState.create(single_dense([0.3, 0.3, 0.3, 0.3]), 0)
    ltp.prune_round(state, 0.5)
    assert state.masks[0].tolist() == [[False, False, True, True]]


def test_prune_cannot_remove_everything():
    state = ltp.TrainState.create(single_dense([0.1]), 0)
    with pytest.raises(ltp.PruneError):
        ltp.prune_round(state, 0.9)


def _state(seed=0, arch="mlp", shape=(8,)):
    # the trainer's stream must differ from the init stream (same as ltp_run)
    return ltp.TrainState.create(nn.build_network(arch, shape, 4, np.random.default_rng(seed)), seed + 1)


def test_sparsity_schedule_and_invariants():
    state = _state()
    total = state.net.n_weights()
    prev = [m.copy() for m in state.masks]
    for k in range(1, 11):
        # perturb so ranking differs from the initial weights
        for c in state.net.compute_layers():
            c.W = c.W + 0.01 * np.random.default_rng(k).standard_normal(c.W.shape) * c.mask
        ltp.prune_round(state, 0.2)
        assert abs(state.sparsity() - (1 - 0.8 ** k)) <= k / total
        for c, w0 in zip(state.net.compute_layers(), state.theta_initial):
            assert (c.W[c.mask] == w0[c.mask]).all()
            assert (c.W[~c.mask] == 0).all()
        for old, new in zip(prev, state.masks):
            assert not (new & ~old).any()
        prev = [m.copy() for m in state.masks]
    assert state.sparsity() == pytest.approx(1 - 0.8 ** 10, abs=10 / total)
    assert state.round == 10


def test_two_rounds_keep_64_percent():
    state = _state(1)
    ltp.prune_round(state, 0.2)
    ltp.prune_round(state, 0.2)
    assert 1 - state.sparsity() == pytest.approx(0.64, abs=2 / state.net.n_weights())


def test_layer_scope_prunes_each_layer():
    state = _state(2)
    ltp.prune_round(state, 0.5, scope="layer")
    for m in state.masks:
        assert abs(m.mean() - 0.5) <= 1 / m.size


def test_random_reinit_draws_fresh_weights():
    state = _state(3)
    before = [w.copy() for w in state.theta_initial]
    ltp.prune_round(state, 0.2, reinit="random")
    assert not all((a == b).all() for a, b in zip(before, state.theta_initial))
    assert all((c.W[~c.mask] == 0).all() for c in state.net.compute_layers())


def test_train_zero_epochs_is_identity():
    ds = load_dataset("synthetic:blobs:seed=0:n=64:classes=4")
    state = _state()
    before = [c.W.copy() for c in state.net.compute_layers()]
    ltp.train(state, ds, 0)
    assert all((a == c.W).all() for a, c in zip(before, state.net.compute_layers()))


def test_training_learns_separable_set_and_respects_mask():
    ds = load_dataset("synthetic:two_gaussians:seed=1:n=200")
    state = ltp.TrainState.create(nn.build_network("mlp", (2,), 2, np.random.default_rng(0)), 0)
    layer = state.net.compute_layers()[0]
    layer.mask[:3] = False
    layer.W *= layer.mask
    ltp.train(state, ds, 50)
    assert state.net.accuracy(ds.x, ds.y) >= 0.95
    assert (layer.W[:3] == 0.0).all()


def test_divergence_reports_round():
    ds = load_dataset("synthetic:blobs:seed=0:n=64:classes=4")
    state = _state()
    state.round = 3
    with pytest.raises(ltp.DivergenceError, match="round 3"), np.errstate(all="ignore"):
        ltp.train(state, ds, 5, lr=1e300)


def test_lr_schedule():
    assert [ltp.lr_at(e, 9) for e in range(9)] == [0.1] * 3 + [0.05] * 3 + [0.025] * 3


def test_config_validation():
    for bad in (dict(prune_percent=0.0), dict(prune_percent=1.0), dict(epochs_per_round=0),
                dict(accuracy_drop_limit=-0.1), dict(scope="x"), dict(reinit="x"), dict(max_rounds=-1)):
        with pytest.raises(ValueError):
            ltp.LtpConfig(**bad)


BLOBS = "synthetic:blobs:seed=3:n=600"


def test_zero_limit_stops_after_first_degrading_prune():
    ds = load_dataset(BLOBS)
    res = ltp.ltp_run("mlp", ds, ltp.LtpConfig(0.2, 10, 5, accuracy_drop_limit=0.0, seed=0))
    last = res.log[-1]
    assert res.baseline_acc - last.val_acc > 0
    assert all(r.val_acc >= res.baseline_acc for r in res.log[:-1])
    if last.round == 1:
        assert last.sparsity == pytest.approx(0.2, abs=1e-3)


def test_no_rounds_returns_unpruned_model():
    res = ltp.ltp_run("mlp", load_dataset(BLOBS), ltp.LtpConfig(0.2, 0, 5, seed=0))
    assert len(res.log) == 1 and res.model.sparsity() == 0.0


def test_ltp_run_is_deterministic():
    ds = load_dataset(BLOBS)
    cfg = ltp.LtpConfig(0.2, 3, 3, seed=5)
    a, b = ltp.ltp_run("mlp", ds, cfg), ltp.ltp_run("mlp", ds, cfg)
    assert ltp.log_csv(a.log) == ltp.log_csv(b.log)
    for x, y in zip(a.model.compute_layers(), b.model.compute_layers()):
        assert (x.weight == y.weight).all() and (x.mask == y.mask).all()
    assert ltp.log_csv(a.log).splitlines()[0] == "round,sparsity,train_acc,val_acc"
