"""Model hyperparameters and the two shipped presets."""

from dataclasses import asdict, dataclass, field, replace
from math import prod

GENDERS = ("child", "female", "male")

LARGE_CONV_STAGE = (
    (512, 10, 5),
    (512, 3, 2),
    (512, 3, 2),
    (512, 3, 2),
    (512, 3, 2),
    (512, 2, 2),
    (512, 2, 2),
)

TOY_CONV_STAGE = (
    (32, 10, 5),
    (32, 3, 2),
    (32, 3, 2),
    (32, 3, 2),
    (32, 2, 2),
)


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every offending field."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int = 2
    hidden_dim: int = 32
    ffn_dim: int = 64
    num_heads: int = 4
    head_hidden: int = 32
    dropout_rate: float = 0.1
    conv_stage: tuple = TOY_CONV_STAGE
    sample_rate: int = 8000
    pos_conv_kernel: int = 8
    pos_conv_groups: int = 4
    layer_norm_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "conv_stage", tuple(tuple(int(v) for v in c) for c in self.conv_stage))
        errors = self.problems()
        if errors:
            raise ConfigError(errors)

    def problems(self):
        errs = []
        for name in ("num_layers", "hidden_dim", "ffn_dim", "num_heads", "head_hidden",
                     "sample_rate", "pos_conv_kernel", "pos_conv_groups"):
            if getattr(self, name) < 1:
                errs.append(f"{name}: must be >= 1, got {getattr(self, name)}")
        if self.num_heads >= 1 and self.hidden_dim % self.num_heads:
            errs.append(f"num_heads: {self.num_heads} does not divide hidden_dim {self.hidden_dim}")
        if self.pos_conv_groups >= 1 and self.hidden_dim % self.pos_conv_groups:
            errs.append(f"pos_conv_groups: {self.pos_conv_groups} does not divide hidden_dim {self.hidden_dim}")
        if not 0.0 <= self.dropout_rate < 1.0:
            errs.append(f"dropout_rate: must be in [0, 1), got {self.dropout_rate}")
        if self.layer_norm_eps <= 0:
            errs.append("layer_norm_eps: must be > 0")
        if not self.conv_stage:
            errs.append("conv_stage: needs at least one layer")
        for i, layer in enumerate(self.conv_stage):
            if len(layer) != 3 or min(layer) < 1:
                errs.append(f"conv_stage[{i}]: expected positive (channels, kernel, stride), got {layer}")
        return errs

    @property
    def hop(self):
        """Samples per output frame (product of conv strides)."""
        return prod(s for _, _, s in self.conv_stage)

    @property
    def conv_channels(self):
        return self.conv_stage[-1][0]

    def with_layers(self, n):
        return replace(self, num_layers=int(n))

    def to_dict(self):
        d = asdict(self)
        d["conv_stage"] = [list(c) for c in self.conv_stage]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "conv_stage" in d:
            d["conv_stage"] = tuple(tuple(c) for c in d["conv_stage"])
        return cls(**d)


def large_config(num_layers=24):
    """wav2vec2-large-scale footprint at 16 kHz."""
    return ModelConfig(
        num_layers=num_layers,
        hidden_dim=1024,
        ffn_dim=4096,
        num_heads=16,
        head_hidden=1024,
        dropout_rate=0.1,
        conv_stage=LARGE_CONV_STAGE,
        sample_rate=16000,
        pos_conv_kernel=128,
        pos_conv_groups=16,
    )


def toy_config(num_layers=2, hidden_dim=32):
    return ModelConfig(num_layers=num_layers, hidden_dim=hidden_dim, ffn_dim=2 * hidden_dim,
                       num_heads=4, head_hidden=hidden_dim)


PRESETS = {"large": large_config, "toy": toy_config}
