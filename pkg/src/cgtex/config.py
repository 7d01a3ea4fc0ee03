"""JSON job configuration. Unknown keys are rejected at every level."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

Modality = Literal["image", "dynamic", "sound"]

DEFAULT_BORDER = {"image": 4, "dynamic": 2, "sound": 1000}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class GeneratorSection(_Strict):
    octaves: Optional[int] = Field(None, ge=1)
    width: int = Field(8, ge=1)


class InpaintSection(_Strict):
    searches: int = Field(10, ge=1)
    updates: int = Field(50, ge=1)
    grid_stride: Optional[Union[int, list[int]]] = None
    border: Optional[int] = Field(None, ge=0)
    template: Optional[list[int]] = None


class JobConfig(_Strict):
    modality: Optional[Modality] = None
    mode: Literal["c-cgcnn", "f-cgcnn", "fixed-d"] = "c-cgcnn"
    statistic: Literal["gram", "mean"] = "gram"
    m: Optional[int] = Field(None, ge=0, le=9)
    n: Optional[int] = Field(None, ge=0, le=3)
    channels: Optional[int] = Field(None, ge=1)
    K: int = Field(3, ge=1)
    N: int = Field(10, ge=1)
    T: int = Field(5000, ge=1)
    lr_d: Optional[float] = Field(None, gt=0)
    lr_g: float = Field(0.001, gt=0)
    step_size: float = Field(0.001, gt=0)
    noise: bool = True
    preconditioner: Literal["adam", "rmsprop", "plain"] = "adam"
    d_optimizer: Literal["adam", "rmsprop", "plain"] = "adam"
    init_std: float = Field(0.1, ge=0)
    kle_weight: float = 1.0
    seed: int = 0
    resize: Optional[list[int]] = None
    clip: Optional[int] = Field(None, ge=1)
    snapshot_every: int = Field(0, ge=0)
    generator: GeneratorSection = Field(default_factory=GeneratorSection)
    inpaint: InpaintSection = Field(default_factory=InpaintSection)
    output_dir: str = "out"

    @model_validator(mode="after")
    def _check(self):
        if self.resize is not None and (len(self.resize) != 2 or min(self.resize) < 1):
            raise ValueError("resize must be [height, width] with positive entries")
        if self.m == 0 and self.n == 0:
            raise ValueError("m and n cannot both be 0")
        return self

    def materialize(self, modality: str) -> "JobConfig":
        """Copy with the modality and modality-dependent defaults filled in."""
        cfg = self.model_copy(deep=True)
        cfg.modality = cfg.modality or modality
        if cfg.inpaint.border is None:
            cfg.inpaint.border = DEFAULT_BORDER[cfg.modality]
        if cfg.generator.octaves is None:
            from .generator import DEFAULT_OCTAVES
            cfg.generator.octaves = DEFAULT_OCTAVES[cfg.modality]
        if cfg.lr_d is None:
            from .trainer import DEFAULT_LR_D
            cfg.lr_d = DEFAULT_LR_D[cfg.modality]
        return cfg


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def load_config(path) -> JobConfig:
    if path is None:
        return JobConfig()
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON ({exc})") from exc
    return parse_config(raw)


def parse_config(raw) -> JobConfig:
    try:
        return JobConfig.model_validate(raw)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        raise ConfigError(loc, err["msg"]) from exc


def dump_config(cfg: JobConfig, path):
    Path(path).write_text(json.dumps(cfg.model_dump(), indent=2, sort_keys=True) + "\n")
