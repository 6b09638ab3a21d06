import numpy as np
import pytest

from agegender import tensor as T
from agegender.config_types import ConfigError, ModelConfig, toy_config
from agegender.model import (Prediction, build_model, detach_head, encode, extract_features, forward,
                             forward_features, truncate_layers)
from agegender.training import batch_loss
from conftest import tiny_batch, tiny_config


def _wave(seed=0, n=180):
    return np.random.default_rng(seed).normal(size=n)


def test_build_is_deterministic():
    a, b = build_model(tiny_config(), 3), build_model(tiny_config(), 3)
    c = build_model(tiny_config(), 4)
    assert all(np.array_equal(a.params[n].data, b.params[n].data) for n in a.params)
    assert any(not np.array_equal(a.params[n].data, c.params[n].data) for n in a.params)


def test_init_scheme():
    m = build_model(tiny_config(), 0)
    w = m.params["layers.0.attn.q.weight"].data
    assert np.abs(w).max() <= 1 / np.sqrt(8)
    assert np.all(m.params["layers.0.attn.q.bias"].data == 0)
    assert np.all(m.params["encoder_norm.gain"].data == 1)


def test_conv_stage_is_frozen():
    m = build_model(tiny_config(), 0)
    frozen = [n for n in m.params if not m.trainable[n]]
    assert frozen and all(n.startswith("conv.") for n in frozen)
    loss = batch_loss(m, tiny_batch(m), np.random.default_rng(0))
    loss.backward()
    assert all(m.params[n].grad is None for n in frozen)
    assert all(m.params[n].grad is not None for n in m.trainable_names())


def test_prediction_shapes_and_labels(tiny_model):
    p = forward(tiny_model, _wave())
    assert isinstance(p.age_norm, float) and len(p.gender_scores) == 3
    assert p.gender_label in ("child", "female", "male")
    assert 0.0 <= p.age_years <= 100.0


def test_prediction_tie_goes_to_lowest_index():
    assert Prediction(0.5, (1.0, 3.0, 3.0)).gender == 1
    assert Prediction(1.7, (0.0, 0.0, 0.0)).gender == 0
    assert Prediction(1.7, None).age_years == 100.0


def test_eval_mode_is_deterministic_and_train_mode_needs_rng(tiny_model):
    feats = extract_features(tiny_model, _wave())
    a = forward_features(tiny_model, feats)
    b = forward_features(tiny_model, feats)
    assert np.array_equal(a["age"].data, b["age"].data)
    with pytest.raises(ValueError, match="rng"):
        forward_features(tiny_model, feats, "train")
    with pytest.raises(ValueError, match="mode"):
        forward_features(tiny_model, feats, "predict")


def test_short_waveform_is_rejected(tiny_model):
    with pytest.raises(ValueError, match="at least"):
        extract_features(tiny_model, np.zeros(10))


def test_frame_count_follows_conv_arithmetic(tiny_model):
    assert extract_features(tiny_model, _wave(n=100)).shape == (9, 4)


def test_truncation_keeps_weights_verbatim(tiny_model):
    cut = truncate_layers(tiny_model, 2)
    assert cut.config.num_layers == 2
    assert not any(n.startswith("layers.2.") for n in cut.params)
    for n, p in cut.params.items():
        assert np.array_equal(p.data, tiny_model.params[n].data)
        assert p is not tiny_model.params[n]


def test_truncation_composes_and_full_depth_is_identity(tiny_model):
    feats = extract_features(tiny_model, _wave(1))
    full = forward_features(tiny_model, feats)["age"].data
    same = forward_features(truncate_layers(tiny_model, 3), feats)["age"].data
    assert np.array_equal(full, same)
    a = forward_features(truncate_layers(truncate_layers(tiny_model, 2), 1), feats)["gender"].data
    b = forward_features(truncate_layers(tiny_model, 1), feats)["gender"].data
    assert np.array_equal(a, b)


def test_truncated_trunk_matches_manual_stack(tiny_model):
    """One kept layer equals the trunk of a fresh one-layer model given the same weights."""
    feats = extract_features(tiny_model, _wave(2))
    fresh = build_model(tiny_config(num_layers=1), seed=99)
    for n in fresh.params:
        fresh.params[n].data = tiny_model.params[n].data.copy()
    with T.no_grad():
        np.testing.assert_array_equal(encode(truncate_layers(tiny_model, 1), feats).data, encode(fresh, feats).data)


@pytest.mark.parametrize("n", [0, 4])
def test_truncation_bounds(tiny_model, n):
    with pytest.raises(ValueError, match="layer count"):
        truncate_layers(tiny_model, n)


def test_detached_heads_leave_the_other_output_unchanged(tiny_model):
    feats = extract_features(tiny_model, _wave(3))
    both = forward_features(tiny_model, feats)
    age_only = forward_features(detach_head(tiny_model, "gender"), feats)
    gender_only = forward_features(detach_head(tiny_model, "age"), feats)
    assert set(age_only) == {"age"} and set(gender_only) == {"gender"}
    assert np.array_equal(both["age"].data, age_only["age"].data)
    assert np.array_equal(both["gender"].data, gender_only["gender"].data)


def test_detach_head_errors(tiny_model):
    with pytest.raises(ValueError, match="no 'emotion' head"):
        detach_head(tiny_model, "emotion")
    with pytest.raises(ValueError, match="only remaining head"):
        detach_head(detach_head(tiny_model, "age"), "gender")


def test_end_to_end_combined_loss_gradients():
    """Finite differences through the whole trainable network, batch of 4."""
    model = build_model(tiny_config(num_layers=2), seed=11)
    batch = tiny_batch(model, n=4, seed=5)

    def loss(_):
        return batch_loss(model, batch, np.random.default_rng(123))

    for name in ("heads.age.proj.weight", "heads.gender.dense.weight", "layers.0.attn.q.weight",
                 "layers.1.ffn.in.weight", "pos_conv.weight", "proj.weight", "proj.norm.gain"):
        assert T.grad_check(loss, model.params[name]) < 1e-5, name


@pytest.mark.parametrize("bad, msg", [
    ({"num_heads": 3}, "does not divide"),
    ({"dropout_rate": 1.0}, "dropout_rate"),
    ({"num_layers": 0}, "num_layers"),
    ({"conv_stage": ((4, 0, 1),)}, "conv_stage"),
])
def test_model_config_validation(bad, msg):
    with pytest.raises(ConfigError, match=msg):
        ModelConfig(**{**tiny_config().to_dict(), **bad})


def test_config_dict_round_trip():
    cfg = toy_config(3)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
