import dataclasses

import numpy as np
import pytest

from dgsta import network
from dgsta.embeddings import build_tpe, node_spe
from dgsta.errors import ParameterError, ShapeError
from dgsta.gradcheck import TINY, model_gradcheck
from dgsta.graph import GraphShape, build_full_mask, build_spatial_mask
from dgsta.network import (
    ModelConfig,
    forward,
    init_params,
    load_checkpoint,
    param_count,
    predict,
    save_checkpoint,
    stage_masks,
)
from dgsta.tensor import _emit

SMALL = ModelConfig(frames=4, feat_dim=16, heads=2, head_dim=4, classes=3)


def test_default_param_count():
    # 3*128+128 embed, 2*128 ln, 3*8*128*32 + 3*8*32 per attention, 2*256 ln,
    # 256*128+128 mid, 2*128 ln, attention, 2*256 ln, 256*14+14 classifier
    attn = 3 * 8 * 128 * 32 + 3 * 8 * 32
    expected = 512 + 256 + attn + 512 + 256 * 128 + 128 + 256 + attn + 512 + 256 * 14 + 14
    assert param_count(ModelConfig()) == expected == 236686


def test_gat_param_count():
    attn = 3 * 8 * 128 * 32 + 3 * 8 * 32
    assert param_count(ModelConfig(variant="gat")) == 512 + 256 + attn + 512 + 256 * 14 + 14 == 103950


@pytest.mark.parametrize("variant", ["dgsta", "gat", "ssg"])
def test_init_matches_layout(variant):
    cfg = dataclasses.replace(SMALL, variant=variant)
    p = init_params(cfg, np.random.default_rng(0))
    assert p.count() == param_count(cfg)


def test_init_deterministic_and_bounded():
    a = init_params(ModelConfig(), np.random.default_rng(3))
    b = init_params(ModelConfig(), np.random.default_rng(3))
    for k in a:
        assert np.array_equal(a[k].data, b[k].data)
    assert np.abs(a["embed.w"].data).max() <= np.sqrt(1 / 3)
    assert np.abs(a["spatial.w_q"].data).max() <= np.sqrt(1 / 128)
    assert np.all(a["ln_mid.gain"].data == 1) and np.all(a["mid.b"].data == 0)


def test_config_validation():
    with pytest.raises(ParameterError):
        ModelConfig(variant="lstm")
    with pytest.raises(ParameterError):
        ModelConfig(feat_dim=15)
    with pytest.raises(ParameterError):
        ModelConfig(dropout=1.0)


def test_config_dict_round_trip():
    cfg = dataclasses.replace(SMALL, bones=((0, 1),), temporal_same_joint_only=True)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


def test_output_shapes(rng):
    p = init_params(SMALL, rng)
    x = rng.normal(size=(5, 4, 22, 3))
    assert forward(p, SMALL, x).shape == (5, 3)
    assert forward(p, SMALL, x[0]).shape == (3,)


def test_batch_equals_single(rng):
    p = init_params(SMALL, rng)
    x = rng.normal(size=(3, 4, 22, 3))
    batch = forward(p, SMALL, x).data
    for b in range(3):
        np.testing.assert_allclose(batch[b], forward(p, SMALL, x[b]).data, atol=1e-13)


def test_wrong_input_shape(rng):
    p = init_params(SMALL, rng)
    with pytest.raises(ShapeError):
        forward(p, SMALL, np.zeros((5, 22, 3)))


def test_eval_forward_deterministic(rng):
    p = init_params(SMALL, rng)
    x = rng.normal(size=(4, 22, 3))
    assert np.array_equal(forward(p, SMALL, x).data, forward(p, SMALL, x).data)


def test_training_forward_uses_dropout(rng):
    p = init_params(SMALL, rng)
    x = rng.normal(size=(4, 22, 3))
    a = forward(p, SMALL, x, training=True, rng=np.random.default_rng(0)).data
    b = forward(p, SMALL, x, training=True, rng=np.random.default_rng(1)).data
    assert not np.array_equal(a, b)


def test_zero_input_finite():
    p = init_params(ModelConfig(), np.random.default_rng(0))
    out = forward(p, ModelConfig(), np.zeros((8, 22, 3))).data
    assert out.shape == (14,) and np.all(np.isfinite(out))


def test_predict_tie_goes_to_lowest_index(rng):
    p = init_params(SMALL, rng)
    p["classifier.w"].data = np.zeros_like(p["classifier.w"].data)
    assert predict(p, SMALL, rng.normal(size=(4, 22, 3))) == 0


def test_predict_invariant_to_classifier_scaling(rng):
    p = init_params(SMALL, rng)
    x = rng.normal(size=(6, 4, 22, 3))
    before = predict(p, SMALL, x)
    p["classifier.w"].data = p["classifier.w"].data * 3.0
    p["classifier.b"].data = p["classifier.b"].data * 3.0
    np.testing.assert_array_equal(predict(p, SMALL, x), before)


def test_embedding_additions(rng):
    p = init_params(SMALL, rng)
    trace = {}
    forward(p, SMALL, rng.normal(size=(4, 22, 3)), trace=trace)
    shape = GraphShape(4, 22)
    np.testing.assert_allclose(trace["spatial_in"] - trace["embedded"], node_spe(shape, 16), atol=1e-12)
    np.testing.assert_allclose(trace["temporal_in"] - trace["mid"], build_tpe(shape, 16).values, atol=1e-12)
    assert trace["spatial_out"].shape == (88, 8)
    assert trace["pooled"].shape == (8,)


def test_gat_adds_both_tables(rng):
    cfg = dataclasses.replace(SMALL, variant="gat")
    p = init_params(cfg, rng)
    trace = {}
    forward(p, cfg, rng.normal(size=(4, 22, 3)), trace=trace)
    shape = GraphShape(4, 22)
    np.testing.assert_allclose(trace["spatial_in"] - trace["embedded"], node_spe(shape, 16) + build_tpe(shape, 16).values, atol=1e-12)


def test_spatial_stage_is_frame_local(rng):
    p = init_params(SMALL, rng)
    x = rng.normal(size=(4, 22, 3))
    y = x.copy()
    y[2] += rng.normal(size=(22, 3))
    ta, tb = {}, {}
    forward(p, SMALL, x, trace=ta)
    forward(p, SMALL, y, trace=tb)
    a, b = ta["spatial_out"].reshape(4, 22, -1), tb["spatial_out"].reshape(4, 22, -1)
    np.testing.assert_array_equal(np.delete(a, 2, 0), np.delete(b, 2, 0))
    assert not np.allclose(a[2], b[2])


def test_stage_masks():
    sp, tp = stage_masks(SMALL)
    assert (sp.kind, tp.kind) == ("spatial", "temporal")
    ssg = stage_masks(dataclasses.replace(SMALL, variant="ssg"))
    assert [m.kind for m in ssg] == ["ssg_spatial", "ssg_temporal"]
    (full,) = stage_masks(dataclasses.replace(SMALL, variant="gat"))
    assert full.kind == "full"


def test_gat_single_frame_mask_is_spatial():
    shape = GraphShape(1, 22)
    np.testing.assert_array_equal(build_full_mask(shape).bits, build_spatial_mask(shape).bits)


def test_same_joint_flag_reaches_model():
    cfg = dataclasses.replace(SMALL, temporal_same_joint_only=True)
    tp = stage_masks(cfg)[1]
    assert tp.bits.sum() == 88 + 88 * 3


def test_float32_close_to_float64(rng):
    p = init_params(SMALL, rng)
    x = rng.normal(size=(4, 22, 3))
    cfg32 = dataclasses.replace(SMALL, dtype="float32")
    p32 = network.ModelParams({k: network.Tensor(t.data.astype(np.float32)) for k, t in p.items()})
    out32 = forward(p32, cfg32, x).data
    assert out32.dtype == np.float32
    np.testing.assert_allclose(out32, forward(p, SMALL, x).data, atol=1e-4)


def test_checkpoint_round_trip(tmp_path, rng):
    p = init_params(SMALL, rng)
    path = save_checkpoint(tmp_path / "m.npz", p, SMALL, {"epoch": 3})
    q, cfg, extra = load_checkpoint(path)
    assert cfg == SMALL and extra == {"epoch": 3}
    x = rng.normal(size=(10, 4, 22, 3))
    assert np.array_equal(forward(p, SMALL, x).data, forward(q, cfg, x).data)


def test_checkpoint_layout_mismatch(tmp_path, rng):
    p = init_params(SMALL, rng)
    other = dataclasses.replace(SMALL, classes=4)
    path = save_checkpoint(tmp_path / "m.npz", p, other)
    with pytest.raises(ShapeError):
        load_checkpoint(path)


@pytest.mark.parametrize("seed", range(3))
def test_tiny_gradcheck(seed):
    report = model_gradcheck(TINY, seed=seed)
    assert report.passed, report.table()
    assert {g.group for g in report.groups} >= {"embed", "spatial", "mid", "temporal", "classifier"}


def test_gradcheck_catches_broken_backward(monkeypatch):
    real = network.mean_pool_rows

    def broken(x):
        y = real(x)
        # identity forward, gradient scaled by 1.5
        return _emit(y.data, (y,), lambda g: (1.5 * g,))

    monkeypatch.setattr(network, "mean_pool_rows", broken)
    report = model_gradcheck(TINY, seed=0)
    assert not report.passed
    assert "embed" in report.failed_groups and "temporal" in report.failed_groups
    assert "classifier" not in report.failed_groups
    assert "FAIL" in report.table()
