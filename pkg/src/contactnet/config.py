"""Run configuration: one YAML document covering data generation, model
hyperparameters, ablation flags and optimizer settings."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .backbone import BackboneConfig
from .contact_prior import ContactPriorConfig
from .errors import ConfigError
from .interaction import InteractionConfig
from .matching import MatchWeights
from .model import AblationFlags, PairContactModel
from .scenes import SceneConfig, Vocab
from .segmenter import SegmenterConfig


@dataclass(frozen=True)
class DataConfig:
    train_dir: str = "data/train"
    eval_dir: str | None = None
    num_samples: int = 8
    height: int = 128
    width: int = 128
    min_pairs: int = 1
    max_pairs: int = 2

    def scene_config(self, vocab: Vocab | None = None) -> SceneConfig:
        return SceneConfig(
            height=self.height, width=self.width,
            min_pairs=self.min_pairs, max_pairs=self.max_pairs,
            vocab=vocab or Vocab())


@dataclass(frozen=True)
class NetConfig:
    channels: int = 64
    backbone_norm: str = "group"
    prior_norm: str = "batch"
    prior_dropout: float = 0.1
    decoder_norm: str = "group"
    attention_hidden: int = 64
    background_weight: float = 0.25
    num_queries: int = 16
    query_dim: int = 64
    num_heads: int = 4
    encoder_layers: int = 2
    decoder_stages: int = 3
    ffn_dim: int = 128
    dropout: float = 0.0
    shared_box_head: bool = True


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 4
    epochs: int = 10
    max_steps: int | None = None
    teacher_force_epochs: int = 2
    alpha: float = 0.1
    beta: float = 0.5
    cls_weight: float = 1.0
    box_weight: float = 2.5
    iou_weight: float = 1.0
    no_interaction_weight: float = 0.2
    inference_threshold: float = 0.5

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError(f"alpha/beta must be non-negative, got {self.alpha}/{self.beta}")

    def match_weights(self) -> MatchWeights:
        return MatchWeights(cls=self.cls_weight, box=self.box_weight,
                            iou=self.iou_weight, no_interaction=self.no_interaction_weight)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    model: NetConfig = field(default_factory=NetConfig)
    flags: AblationFlags = field(default_factory=AblationFlags)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d or {})
        sections = {
            "data": DataConfig, "model": NetConfig,
            "flags": AblationFlags, "train": TrainConfig,
        }
        kwargs: dict = {}
        if "seed" in d:
            kwargs["seed"] = int(d.pop("seed"))
        for name, section_cls in sections.items():
            raw = d.pop(name, {}) or {}
            known = {f.name for f in dataclasses.fields(section_cls)}
            unknown = set(raw) - known
            if unknown:
                raise ConfigError(f"unknown keys in config section {name!r}: {sorted(unknown)}")
            kwargs[name] = section_cls(**raw)
        if d:
            raise ConfigError(f"unknown top-level config keys: {sorted(d)}")
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        with open(path) as f:
            return cls.from_dict(yaml.safe_load(f))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    def replace_flags(self, **flag_values) -> "RunConfig":
        return dataclasses.replace(self, flags=dataclasses.replace(self.flags, **flag_values))


def build_model(config: RunConfig, vocab: Vocab) -> PairContactModel:
    m = config.model
    return PairContactModel(
        vocab=vocab,
        backbone_config=BackboneConfig(
            channels=m.channels,
            stage_widths=(16, 32, 48, m.channels, m.channels),
            norm=m.backbone_norm),
        prior_config=ContactPriorConfig(
            in_channels=m.channels, dropout=m.prior_dropout, norm=m.prior_norm),
        segmenter_config=SegmenterConfig(
            in_channels=m.channels, norm=m.decoder_norm,
            attention_hidden=m.attention_hidden,
            background_weight=m.background_weight),
        interaction_config=InteractionConfig(
            num_objects=len(vocab.objects), num_actions=vocab.num_real_actions,
            in_channels=m.channels, num_queries=m.num_queries,
            query_dim=m.query_dim, num_heads=m.num_heads,
            encoder_layers=m.encoder_layers, decoder_stages=m.decoder_stages,
            ffn_dim=m.ffn_dim, dropout=m.dropout,
            shared_box_head=m.shared_box_head),
        flags=config.flags,
        match_weights=config.train.match_weights(),
        inference_threshold=config.train.inference_threshold,
    )
