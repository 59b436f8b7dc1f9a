"""Run configuration: one flat record of every knob, with a diffable text format.

Config files are plain ``key = value`` lines with ``#`` comments.  The echo of
a parsed config re-parses to an identical record, so what gets printed at
startup is exactly what runs.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

VARIANTS = ("full", "rigr", "fcn")


@dataclass
class RunConfig:
    # graph / model
    K: int = 32                 # semantic nodes per branch graph
    z: int = 32                 # edge-supportive nodes
    k_nn: int = 4               # neighbors per grid feature in the support graph
    t: int = 2                  # recurrent reasoning stages
    C: int = 64                 # feature channels throughout
    variant: str = "full"       # full | rigr | fcn
    stage_weights: bool = False  # unshared per-stage graph-module weights
    # data
    H: int = 48
    W: int = 48
    kappa_cam: float = 0.8      # camouflage strength in [0, 1]
    train_count: int = 16
    test_count: int = 8
    flip: bool = False          # random horizontal flips during training
    # optimization
    base_lr: float = 0.05
    power: float = 0.9
    momentum: float = 0.9
    max_iter: int = 500
    batch: int = 1
    gamma: float = 1.0          # weight of the edge loss term
    per_stage_loss: bool = False
    # bookkeeping
    seed: int = 0
    data_dir: str = "data"
    out_dir: str = "out"

    def validate(self) -> None:
        if self.K < 1 or self.z < 1 or self.k_nn < 1 or self.t < 1 or self.C < 1:
            raise ValueError("K, z, k_nn, t and C must all be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.H % 4 or self.W % 4:
            raise ValueError(f"H and W must be divisible by 4, got {self.H}x{self.W}")
        if not 0.0 <= self.kappa_cam <= 1.0:
            raise ValueError(f"kappa_cam must lie in [0, 1], got {self.kappa_cam}")
        if self.max_iter < 1 or self.batch < 1:
            raise ValueError("max_iter and batch must be >= 1")

    def echo(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines)


_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _parse_value(name: str, text: str):
    kind = _FIELDS[name]
    text = text.strip()
    if kind == "bool":
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {text!r}")
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = dataclasses.replace(base) if base else RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        setattr(cfg, key, _parse_value(key, value))
    return cfg


def load_config(path: str, base: RunConfig | None = None) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base=base)
