"""Engine configuration and ablation switches."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class Ablations:
    no_backtracking: bool = False
    no_llm_traversal_reasoning: bool = False
    no_global_hop: bool = False
    no_vector_granularity: bool = False
    no_planner: bool = False

    def active(self) -> list[str]:
        return [f.name for f in fields(self) if getattr(self, f.name)]


ABLATION_NAMES = [f.name for f in fields(Ablations)]


@dataclass(frozen=True)
class EngineConfig:
    k_shortlist: int = 30
    top_k_final: int = 10
    max_steps: int = 12
    max_llm_retries: int = 2
    max_doc_results: int = 5
    max_component_results: int = 8
    policy: str = "heuristic"  # "heuristic" | "llm"
    memory_budget: int = 8000
    preview_chars: int = 240
    similarity: str = "cosine"  # "cosine" | "dot"
    ablations: Ablations = field(default_factory=Ablations)
    price_per_mtok_input: float = 0.0
    price_per_mtok_output: float = 0.0

    def __post_init__(self):
        for name in ("k_shortlist", "top_k_final", "max_steps", "max_doc_results",
                     "max_component_results"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.max_llm_retries < 0:
            raise ConfigError("max_llm_retries must be >= 0")
        if self.policy not in ("heuristic", "llm"):
            raise ConfigError(f"policy must be 'heuristic' or 'llm', got {self.policy!r}")
        if self.similarity not in ("cosine", "dot"):
            raise ConfigError(f"similarity must be 'cosine' or 'dot', got {self.similarity!r}")

    def with_ablation(self, name: str) -> "EngineConfig":
        if name not in ABLATION_NAMES:
            raise ConfigError(
                f"unknown ablation {name!r}; available: {', '.join(ABLATION_NAMES)}"
            )
        return replace(self, ablations=replace(self.ablations, **{name: True}))

    def to_dict(self) -> dict:
        return asdict(self)


def config_from_dict(raw: dict) -> EngineConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a mapping")
    data = dict(raw)
    ablations_raw = data.pop("ablations", {})
    if not isinstance(ablations_raw, dict):
        raise ConfigError("ablations must be a mapping of flag -> bool")
    known = {f.name for f in fields(EngineConfig)} - {"ablations"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    unknown_flags = set(ablations_raw) - set(ABLATION_NAMES)
    if unknown_flags:
        raise ConfigError(f"unknown ablation flags: {', '.join(sorted(unknown_flags))}")
    try:
        return EngineConfig(ablations=Ablations(**ablations_raw), **data)
    except TypeError as exc:
        raise ConfigError(str(exc))


def load_config(path) -> EngineConfig:
    """Read an EngineConfig from a JSON or YAML file (by extension)."""
    text = Path(path).read_text(encoding="utf-8")
    suffix = Path(path).suffix.lower()
    if suffix in (".yaml", ".yml"):
        import yaml

        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML config: {exc}")
    else:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc.msg}")
    return config_from_dict(raw or {})
