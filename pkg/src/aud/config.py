"""Pipeline configuration as a sectioned key-value (INI) file.

Every constant that the method leaves open lives here with a default.
``aud config`` prints the full default file::

    [features]
    frame_len = 25.0
    ...
"""
from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field

from .cluster import DtwConfig
from .features import FrameConfig
from .hmm import SelfTrainConfig
from .segment import GroupDelayConfig


@dataclass
class FeatureConfig:
    frame_len: float = 25.0
    hop: float = 10.0
    pre_emphasis: float = 0.97
    window: str = "hamming"
    n_mels: int = 26
    n_ceps: int = 13
    deltas: bool = True
    cms: bool = False
    downmix: bool = False  # stereo files are rejected unless set

    def frame_config(self) -> FrameConfig:
        return FrameConfig(self.frame_len, self.hop, self.pre_emphasis, self.window)


@dataclass
class ClusteringConfig:
    k: int = 0  # 0 selects k automatically
    min_cluster_size: int = 10
    target_min: int = 30
    target_max: int = 36
    k_max: int = 200
    n_jobs: int = 1
    dump_similarity: bool = False


@dataclass
class InitConfig:
    variance_floor: float = 1e-3
    offset_scale: float = 0.1
    unit_self_loop: float = 0.6
    silence_self_loop: float = 0.9


@dataclass
class GenderConfig:
    frame_len: float = 100.0
    hop: float = 40.0
    pre_emphasis: float = 0.97
    n_mels: int = 26
    n_ceps: int = 13
    n_components: int = 64
    relevance: float = 16.0
    em_iters: int = 20

    def frame_config(self) -> FrameConfig:
        return FrameConfig(self.frame_len, self.hop, self.pre_emphasis, "hamming")


@dataclass
class EvalConfig:
    boundary_tolerance: float = 30.0
    exclude_silence: bool = False


@dataclass
class RunConfig:
    seed: int = 0
    crossfade_ms: float = 5.0


@dataclass
class PipelineConfig:
    features: FeatureConfig = field(default_factory=FeatureConfig)
    segmenter: GroupDelayConfig = field(default_factory=GroupDelayConfig)
    dtw: DtwConfig = field(default_factory=DtwConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    init: InitConfig = field(default_factory=InitConfig)
    stage1: SelfTrainConfig = field(default_factory=SelfTrainConfig)
    stage2: SelfTrainConfig = field(default_factory=SelfTrainConfig)
    gender: GenderConfig = field(default_factory=GenderConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    run: RunConfig = field(default_factory=RunConfig)


SECTIONS = [f.name for f in dataclasses.fields(PipelineConfig)]


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ", ".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _parse(text: str, default):
    if isinstance(default, bool):
        low = text.strip().lower()
        if low not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
            raise ValueError(f"not a boolean: {text!r}")
        return low in ("true", "1", "yes", "on")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, list):
        return [int(v) for v in text.replace(",", " ").split()]
    return text.strip()


def section_dict(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}


def dump_config(cfg: PipelineConfig) -> str:
    parser = configparser.ConfigParser()
    for name in SECTIONS:
        parser[name] = {k: _format(v) for k, v in section_dict(getattr(cfg, name)).items()}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def parse_config(text: str) -> PipelineConfig:
    """Build a config from INI text; omitted keys keep their defaults."""
    parser = configparser.ConfigParser()
    parser.read_string(text)
    cfg = PipelineConfig()
    for name in parser.sections():
        if name not in SECTIONS:
            raise ValueError(f"unknown config section [{name}]")
        current = getattr(cfg, name)
        values = section_dict(current)
        for key, raw in parser[name].items():
            if key not in values:
                raise ValueError(f"unknown key {key!r} in [{name}]")
            try:
                values[key] = _parse(raw, values[key])
            except ValueError as exc:
                raise ValueError(f"[{name}] {key}: {exc}") from exc
        setattr(cfg, name, type(current)(**values))
    return cfg


def load_config(path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
