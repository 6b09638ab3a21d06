"""Convolutional front end, pre-norm transformer stack and two task heads.

Layout per utterance::

    waveform -> conv stage (frozen) -> norm + projection -> + positional conv
             -> N x [x + MHSA(LN(x)); x + FFN(LN(x))] -> LN -> mean pool
             -> age head:    dense -> tanh -> dropout -> 1 value
             -> gender head: dense -> tanh -> dropout -> 3 logits

The conv stage never receives gradients, so its output can be computed once
per waveform with :func:`extract_features` and reused across epochs.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .config_types import GENDERS, ConfigError, ModelConfig
from .cost import HEAD_OUTPUTS, HEADS, count_params, min_samples
from .rng import numpy_rng


@dataclass
class Prediction:
    age_norm: float = None
    gender_scores: tuple = None

    @property
    def gender(self):
        """Index of the highest score; ties go to the lowest index."""
        if self.gender_scores is None:
            return None
        return int(np.argmax(self.gender_scores))

    @property
    def gender_label(self):
        g = self.gender
        return None if g is None else GENDERS[g]

    @property
    def age_years(self):
        if self.age_norm is None:
            return None
        return min(max(self.age_norm, 0.0), 1.0) * 100.0


@dataclass
class Model:
    config: ModelConfig
    params: dict
    trainable: dict
    heads: tuple = HEADS
    meta: dict = field(default_factory=dict)

    def trainable_names(self):
        return [n for n in self.params if self.trainable[n]]

    def num_scalars(self):
        return sum(p.data.size for p in self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def copy(self):
        params = {n: T.Tensor(p.data.copy(), requires_grad=p.requires_grad) for n, p in self.params.items()}
        return Model(self.config, params, dict(self.trainable), tuple(self.heads), dict(self.meta))


def _is_conv(name):
    return name.startswith("conv.")


def parameter_shapes(config, heads=HEADS):
    """Ordered (name, shape, init) triples; init is 'uniform', 'zeros' or 'ones'."""
    spec = []
    c_in = 1
    for i, (c, k, _) in enumerate(config.conv_stage):
        spec += [(f"conv.{i}.weight", (c, c_in, k), "uniform"),
                 (f"conv.{i}.bias", (c,), "zeros"),
                 (f"conv.{i}.norm.gain", (c,), "ones"),
                 (f"conv.{i}.norm.bias", (c,), "zeros")]
        c_in = c
    c, d, f = config.conv_channels, config.hidden_dim, config.ffn_dim
    spec += [("proj.norm.gain", (c,), "ones"), ("proj.norm.bias", (c,), "zeros"),
             ("proj.weight", (c, d), "uniform"), ("proj.bias", (d,), "zeros"),
             ("pos_conv.weight", (d, d // config.pos_conv_groups, config.pos_conv_kernel), "uniform"),
             ("pos_conv.bias", (d,), "zeros")]
    for i in range(config.num_layers):
        p = f"layers.{i}."
        spec += [(p + "attn_norm.gain", (d,), "ones"), (p + "attn_norm.bias", (d,), "zeros")]
        for m in "qkvo":
            spec += [(p + f"attn.{m}.weight", (d, d), "uniform"), (p + f"attn.{m}.bias", (d,), "zeros")]
        spec += [(p + "ffn_norm.gain", (d,), "ones"), (p + "ffn_norm.bias", (d,), "zeros"),
                 (p + "ffn.in.weight", (d, f), "uniform"), (p + "ffn.in.bias", (f,), "zeros"),
                 (p + "ffn.out.weight", (f, d), "uniform"), (p + "ffn.out.bias", (d,), "zeros")]
    spec += [("encoder_norm.gain", (d,), "ones"), ("encoder_norm.bias", (d,), "zeros")]
    for h in heads:
        spec += [(f"heads.{h}.dense.weight", (d, config.head_hidden), "uniform"),
                 (f"heads.{h}.dense.bias", (config.head_hidden,), "zeros"),
                 (f"heads.{h}.proj.weight", (config.head_hidden, HEAD_OUTPUTS[h]), "uniform"),
                 (f"heads.{h}.proj.bias", (HEAD_OUTPUTS[h],), "zeros")]
    return spec


def _fan_in(name, shape):
    if name.startswith("conv.") or name.startswith("pos_conv."):
        return shape[1] * shape[2]
    return shape[0]


def build_model(config, seed):
    """Fresh model; weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0, norm gains 1."""
    if not isinstance(config, ModelConfig):
        raise ConfigError([f"config: expected ModelConfig, got {type(config).__name__}"])
    rng = numpy_rng(seed, "init")
    params, trainable = {}, {}
    for name, shape, init in parameter_shapes(config):
        if init == "uniform":
            bound = 1.0 / np.sqrt(_fan_in(name, shape))
            data = rng.uniform(-bound, bound, size=shape)
        elif init == "ones":
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        frozen = _is_conv(name)
        params[name] = T.Tensor(data, requires_grad=not frozen)
        trainable[name] = not frozen
    return Model(config, params, trainable, HEADS, {"seed": seed})


def truncate_layers(model, n):
    """Keep the bottom ``n`` transformer layers; every kept weight is copied verbatim."""
    if not 1 <= n <= model.config.num_layers:
        raise ValueError(f"layer count must be in [1, {model.config.num_layers}], got {n}")
    out = model.copy()
    out.config = model.config.with_layers(n)
    for name in list(out.params):
        if name.startswith("layers.") and int(name.split(".")[1]) >= n:
            del out.params[name]
            del out.trainable[name]
    return out


def detach_head(model, task):
    if task not in model.heads:
        raise ValueError(f"model has no {task!r} head (heads: {model.heads})")
    if len(model.heads) == 1:
        raise ValueError(f"cannot remove {task!r}: it is the only remaining head")
    out = model.copy()
    out.heads = tuple(h for h in model.heads if h != task)
    for name in list(out.params):
        if name.startswith(f"heads.{task}."):
            del out.params[name]
            del out.trainable[name]
    return out


def set_conv_trainable(model, flag):
    for name, p in model.params.items():
        if _is_conv(name):
            model.trainable[name] = bool(flag)
            p.requires_grad = bool(flag)


def check_param_count(model):
    expected = count_params(model.config, model.heads).total_params
    actual = model.num_scalars()
    if expected != actual:
        raise AssertionError(f"allocated {actual} scalars, accounting says {expected}")


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------

def extract_features(model, waveform):
    """Frozen conv stage: [samples] -> [frames, conv_channels] array."""
    cfg = model.config
    x = np.asarray(waveform, dtype=np.float64).reshape(-1)
    need = min_samples(cfg)
    if x.size < need:
        raise ValueError(f"waveform has {x.size} samples; at least {need} required")
    p = model.params
    with T.no_grad():
        h = T.Tensor(x[:, None])
        for i, (_, _, s) in enumerate(cfg.conv_stage):
            h = T.conv1d(h, p[f"conv.{i}.weight"], p[f"conv.{i}.bias"], stride=s)
            h = T.layernorm(h, p[f"conv.{i}.norm.gain"], p[f"conv.{i}.norm.bias"], cfg.layer_norm_eps)
            h = T.gelu(h)
    return h.data


def _dense(x, p, prefix):
    return T.matmul(x, p[prefix + ".weight"]) + p[prefix + ".bias"]


def _attention(h, p, prefix, num_heads):
    t, d = h.shape
    dh = d // num_heads

    def split(m):
        return T.transpose(T.reshape(_dense(h, p, f"{prefix}.{m}"), (t, num_heads, dh)), (1, 0, 2))

    q, k, v = split("q"), split("k"), split("v")
    scores = T.scale(T.matmul(q, T.transpose(k, (0, 2, 1))), 1.0 / np.sqrt(dh))
    ctx = T.matmul(T.softmax(scores, axis=-1), v)
    ctx = T.reshape(T.transpose(ctx, (1, 0, 2)), (t, d))
    return _dense(ctx, p, f"{prefix}.o")


def encode(model, features, valid_len=None):
    """Transformer trunk on conv features; returns the pooled [hidden_dim] tensor."""
    cfg = model.config
    p = model.params
    eps = cfg.layer_norm_eps
    x = T.layernorm(T.Tensor(features), p["proj.norm.gain"], p["proj.norm.bias"], eps)
    x = _dense(x, p, "proj")
    k = cfg.pos_conv_kernel
    pos = T.conv1d(x, p["pos_conv.weight"], p["pos_conv.bias"], stride=1, padding=k // 2,
                   groups=cfg.pos_conv_groups)
    if k % 2 == 0:
        pos = pos[:-1]
    x = x + T.gelu(pos)
    for i in range(cfg.num_layers):
        pre = f"layers.{i}"
        h = T.layernorm(x, p[pre + ".attn_norm.gain"], p[pre + ".attn_norm.bias"], eps)
        x = x + _attention(h, p, pre + ".attn", cfg.num_heads)
        h = T.layernorm(x, p[pre + ".ffn_norm.gain"], p[pre + ".ffn_norm.bias"], eps)
        x = x + _dense(T.gelu(_dense(h, p, pre + ".ffn.in")), p, pre + ".ffn.out")
    x = T.layernorm(x, p["encoder_norm.gain"], p["encoder_norm.bias"], eps)
    return T.mean_pool(x, valid_len)


def head_outputs(model, pooled, training=False, rng=None):
    """{task: tensor} for each present head: age -> shape (1,), gender -> (3,)."""
    out = {}
    row = T.reshape(pooled, (1, -1))
    for task in model.heads:
        pre = f"heads.{task}"
        h = T.tanh(_dense(row, model.params, pre + ".dense"))
        h = T.dropout(h, model.config.dropout_rate, rng, training)
        out[task] = T.reshape(_dense(h, model.params, pre + ".proj"), (-1,))
    return out


def forward_features(model, features, mode="eval", rng=None):
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    training = mode == "train"
    if training and rng is None:
        raise ValueError("train mode needs an rng for dropout")
    if not training:
        with T.no_grad():
            outs = head_outputs(model, encode(model, features))
    else:
        outs = head_outputs(model, encode(model, features), True, rng)
    return outs


def to_prediction(outs):
    age = outs.get("age")
    gender = outs.get("gender")
    return Prediction(
        age_norm=None if age is None else float(age.data[0]),
        gender_scores=None if gender is None else tuple(float(v) for v in gender.data),
    )


def forward(model, waveform, mode="eval", rng=None):
    return to_prediction(forward_features(model, extract_features(model, waveform), mode, rng))


def predict_features(model, features_list):
    return [to_prediction(forward_features(model, f)) for f in features_list]
