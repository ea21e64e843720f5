"""Flat key=value run configuration.

Precedence, lowest to highest: preset defaults, config file, command-line
flags. The fully resolved mapping is echoed at startup and embedded in
checkpoints so any run can be reproduced from its artifacts alone.
"""

from __future__ import annotations

from .network import MptConfig
from .training import TrainConfig

__all__ = [
    "PRESETS",
    "preset_config",
    "parse_config_text",
    "render_config",
    "load_config_file",
    "resolve_config",
    "known_keys",
]


def _desk_model() -> MptConfig:
    return MptConfig(
        base_dim=8,
        heads=(1, 2, 4, 8),
        sub_blocks=(2, 2, 2, 2),
        scales=((2, 1), (2, 1), (1, 1), (1, 1)),
        m=4,
    )


def preset_config(name: str) -> TrainConfig:
    if name == "paper":
        return TrainConfig(
            model=MptConfig(),
            iters=300000,
            batch=8,
            patch=256,
            lr_max=1e-4,
            lr_min=1e-6,
            efcr="basic",
        )
    if name == "desk":
        return TrainConfig(
            model=_desk_model(),
            iters=2000,
            batch=2,
            patch=32,
            lr_max=2e-3,
            lr_min=1e-5,
            efcr="off",
        )
    raise ValueError(f"unknown preset {name!r} (expected 'paper' or 'desk')")


PRESETS = ("paper", "desk")


def known_keys() -> set[str]:
    return set(TrainConfig().to_dict())


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {ln}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ValueError(f"line {ln}: empty key")
        if key in out:
            raise ValueError(f"line {ln}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def render_config(d: dict[str, str]) -> str:
    return "\n".join(f"{k}={v}" for k, v in sorted(d.items()))


def load_config_file(path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def resolve_config(
    preset: str,
    file_overrides: dict[str, str] | None = None,
    cli_overrides: dict[str, str] | None = None,
) -> TrainConfig:
    merged = preset_config(preset).to_dict()
    valid = set(merged)
    for source, overrides in (("config file", file_overrides), ("flag", cli_overrides)):
        if not overrides:
            continue
        unknown = sorted(set(overrides) - valid)
        if unknown:
            raise ValueError(f"unknown {source} key(s): {', '.join(unknown)}")
        merged.update(overrides)
    return TrainConfig.from_dict(merged)
