"""JSON run-config ingestion.

Top-level keys: ``hardware``, ``target_model``, ``draft_model``,
``workload``, plus optional ``policy``, ``search_space``, ``seed``, and
``output_dir``.  Unknown keys anywhere are rejected with a message
naming the key.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .planner import SearchSpace
from .types import HardwareProfile, ModelSpec, Policy, Workload, validate_profile

_REQUIRED = ("hardware", "target_model", "draft_model", "workload")
_OPTIONAL = ("policy", "search_space", "seed", "output_dir")


@dataclass
class RunConfig:
    hardware: HardwareProfile
    target_model: ModelSpec
    draft_model: ModelSpec
    workload: Workload
    policy: Policy | None = None
    search_space: SearchSpace | None = None
    seed: int = 0
    output_dir: str | None = None

    def to_dict(self) -> dict:
        doc = {
            "hardware": self.hardware.to_dict(),
            "target_model": self.target_model.to_dict(),
            "draft_model": self.draft_model.to_dict(),
            "workload": self.workload.to_dict(),
            "seed": self.seed,
        }
        if self.policy is not None:
            doc["policy"] = self.policy.to_dict()
        if self.search_space is not None:
            doc["search_space"] = self.search_space.to_dict()
        if self.output_dir is not None:
            doc["output_dir"] = self.output_dir
        return doc


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    for key in doc:
        if key not in _REQUIRED + _OPTIONAL:
            raise ConfigError(f"unknown key '{key}' at config root")
    for key in _REQUIRED:
        if key not in doc:
            raise ConfigError(f"missing required key '{key}'")
    try:
        hardware = validate_profile(HardwareProfile.from_dict(doc["hardware"]))
        target = ModelSpec.from_dict(doc["target_model"])
        draft = ModelSpec.from_dict(doc["draft_model"])
        workload = Workload.from_dict(doc["workload"])
        policy = Policy.from_dict(doc["policy"]) if "policy" in doc else None
        space = (
            SearchSpace.from_dict(doc["search_space"]) if "search_space" in doc else None
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(
        hardware=hardware,
        target_model=target,
        draft_model=draft,
        workload=workload,
        policy=policy,
        search_space=space,
        seed=int(doc.get("seed", 0)),
        output_dir=doc.get("output_dir"),
    )


def load_config(path: str | Path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return parse_config(doc)
