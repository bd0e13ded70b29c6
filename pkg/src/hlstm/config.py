from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    d: int = 64
    N: int = 8
    num_plstm_layers: int = 5
    num_mslstm_layers: int = 5
    scales: list = field(default_factory=lambda: [16, 32, 48, 64, 128])
    scale_means: str = "pixels_per_region"  # or "region_count"
    pi_smooth: float = 1.0
    lr_lstm: float = 0.001
    lr_cnn: float = 0.0001
    momentum: float = 0.9
    lr_decay_every: int = 0  # epochs; 0 disables step decay
    lr_decay_factor: float = 0.1
    batch_size: int = 0  # 0 means full batch
    seed: int = 0
    hidden_from_memory: str = "current"  # or "previous"
    conv_channels: list = field(default_factory=lambda: [32, 32])
    in_channels: int = 3
    num_classes: int = 3
    num_relations: int = 4
    compactness: float = 0.1
    slic_iterations: int = 10
    joint: bool = True  # False trains the surface task alone

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if self.N != 8:
            raise ConfigError("only the 8-neighbourhood is supported")
        if len(self.scales) != self.num_mslstm_layers:
            raise ConfigError("need exactly one superpixel scale per MS-LSTM layer")
        if any(b <= a for a, b in zip(self.scales, self.scales[1:])):
            raise ConfigError("scales must be strictly increasing")
        if self.num_mslstm_layers > self.num_plstm_layers:
            raise ConfigError("each MS-LSTM layer pairs with a P-LSTM layer")
        if self.hidden_from_memory not in ("current", "previous"):
            raise ConfigError("hidden_from_memory must be 'current' or 'previous'")
        if self.scale_means not in ("pixels_per_region", "region_count"):
            raise ConfigError("scale_means must be 'pixels_per_region' or 'region_count'")
        if self.pi_smooth <= 0:
            raise ConfigError("pi_smooth must be positive")

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config JSON must be an object")
        return cls.from_dict(data)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def paper_preset(**overrides):
    return ModelConfig(**overrides)


def desk_preset(**overrides):
    base = dict(d=8, num_plstm_layers=2, num_mslstm_layers=2, scales=[16, 64],
                lr_lstm=0.05, lr_cnn=0.005, batch_size=4)
    base.update(overrides)
    return ModelConfig(**base)


PRESETS = {"desk": desk_preset, "paper": paper_preset}
