"""Closed-form parameter and multiply-accumulate accounting.

Blocks mirror the network layout: ``conv_stage`` (conv weights, biases and
per-layer norms), ``feature_projection`` (norm + linear map into the model
width), ``pos_conv`` (grouped positional convolution), ``transformer``
(all encoder layers), ``encoder_norm`` and one entry per head.

MACs count only products inside dense maps, convolutions and the two
attention matrix products; norms, activations and softmax are free.
"""

from dataclasses import dataclass, field

HEADS = ("age", "gender")
HEAD_OUTPUTS = {"age": 1, "gender": 3}


@dataclass
class CostReport:
    total_params: int
    params_by_block: dict
    total_macs: int = 0
    macs_by_block: dict = field(default_factory=dict)
    duration_s: float = None
    frames: int = None

    def format(self):
        lines = [f"total_params {self.total_params} ({self.total_params / 1e6:.1f}M)"]
        lines += [f"  params.{k} {v}" for k, v in self.params_by_block.items()]
        if self.duration_s is not None:
            lines.append(f"duration_s {self.duration_s:g}")
            lines.append(f"frames {self.frames}")
            lines.append(f"total_macs {self.total_macs} ({self.total_macs / 1e9:.1f}G)")
            lines += [f"  macs.{k} {v}" for k, v in self.macs_by_block.items()]
        return "\n".join(lines) + "\n"


def conv_lengths(config, n_samples):
    """Sequence length after each conv layer (valid convolution, no padding)."""
    lengths = []
    t = int(n_samples)
    for _, k, s in config.conv_stage:
        t = (t - k) // s + 1 if t >= k else 0
        lengths.append(t)
    return lengths


def num_frames(config, n_samples):
    return conv_lengths(config, n_samples)[-1]


def min_samples(config):
    """Shortest waveform producing one frame."""
    n = 1
    for _, k, s in reversed(config.conv_stage):
        n = (n - 1) * s + k
    return n


def layer_params(config):
    d, f = config.hidden_dim, config.ffn_dim
    attention = 4 * (d * d + d)
    ffn = d * f + f + f * d + d
    norms = 2 * 2 * d
    return attention + ffn + norms


def count_params(config, heads=HEADS):
    blocks = {}
    c_in = 1
    conv = 0
    for c, k, _ in config.conv_stage:
        conv += c * c_in * k + c + 2 * c
        c_in = c
    blocks["conv_stage"] = conv
    c, d = config.conv_channels, config.hidden_dim
    blocks["feature_projection"] = 2 * c + c * d + d
    blocks["pos_conv"] = d * (d // config.pos_conv_groups) * config.pos_conv_kernel + d
    blocks["transformer"] = config.num_layers * layer_params(config)
    blocks["encoder_norm"] = 2 * d
    for h in heads:
        blocks[f"head_{h}"] = d * config.head_hidden + config.head_hidden + config.head_hidden * HEAD_OUTPUTS[h] + HEAD_OUTPUTS[h]
    return CostReport(total_params=sum(blocks.values()), params_by_block=blocks)


def count_macs(config, duration_s, heads=HEADS):
    n_samples = int(round(duration_s * config.sample_rate))
    lengths = conv_lengths(config, n_samples)
    t = lengths[-1]
    if t < 1:
        raise ValueError(
            f"duration {duration_s} s gives no frames; need at least {min_samples(config)} samples "
            f"({min_samples(config) / config.sample_rate:.4f} s)")
    report = count_params(config, heads)
    macs = {}
    c_in = 1
    conv = 0
    for (c, k, _), length in zip(config.conv_stage, lengths):
        conv += length * c * c_in * k
        c_in = c
    macs["conv_stage"] = conv
    d, f = config.hidden_dim, config.ffn_dim
    macs["feature_projection"] = t * config.conv_channels * d
    macs["pos_conv"] = t * d * (d // config.pos_conv_groups) * config.pos_conv_kernel
    per_layer = 4 * t * d * d + 2 * t * t * d + 2 * t * d * f
    macs["transformer"] = config.num_layers * per_layer
    macs["encoder_norm"] = 0
    for h in heads:
        macs[f"head_{h}"] = d * config.head_hidden + config.head_hidden * HEAD_OUTPUTS[h]
    report.macs_by_block = macs
    report.total_macs = sum(macs.values())
    report.duration_s = duration_s
    report.frames = t
    return report
