"""Scenario configuration: one structured document driving every subsystem.

`paper_profile` carries the full-scale defaults (7 HAPs, 105 users, 30
contents, 10 GHz FSO / 10 MHz RF, 10/4 Mbps rate requirements);
`desk_profile` is a small, fast configuration for CI and local iteration
with shortened link geometry so power magnitudes stay near unity.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import yaml

from .channel import FsoParams, RfParams
from .ppo_agent import PpoConfig
from .topology import GeometryConfig


@dataclass
class ScenarioConfig:
    n_contents: int = 30
    n_sto: int = 10
    mu_cac: float = 10e6
    mu_acc: float = 4e6
    omega: float = 1.0
    zipf_skew_range: tuple[float, float] = (0.5, 4.0)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    fso: FsoParams = field(default_factory=FsoParams)
    rf: RfParams = field(default_factory=RfParams)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    eval_slots: int = 32
    n_beam_candidates: int = 100
    infeasible_penalty: float = 3.0
    solver: str | None = None
    seed: int = 0

    def validate(self) -> None:
        self.geometry.validate()
        self.fso.validate()
        if self.n_contents < 1 or self.n_sto < 0:
            raise ValueError("need n_contents >= 1 and n_sto >= 0")
        if self.mu_cac <= 0 or self.mu_acc <= 0:
            raise ValueError("rate requirements must be positive")
        lo, hi = self.zipf_skew_range
        if not (0 < lo <= hi):
            raise ValueError("invalid Zipf skew range")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_yaml(self, path: str | Path | None = None) -> str:
        text = yaml.safe_dump(self.to_dict(), sort_keys=True)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        return _dataclass_from_dict(cls, data)

    @classmethod
    def from_yaml(cls, path: str | Path) -> "ScenarioConfig":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()))

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_yaml().encode()).hexdigest()[:16]

    def with_overrides(self, overrides: dict[str, object]) -> "ScenarioConfig":
        """Apply dotted-path overrides (e.g. {"fso.visibility_km": 2.5})."""
        data = self.to_dict()
        for key, value in overrides.items():
            node = data
            parts = key.split(".")
            for part in parts[:-1]:
                node = node[part]
            if parts[-1] not in node:
                raise KeyError(f"unknown configuration key: {key}")
            node[parts[-1]] = value
        return ScenarioConfig.from_dict(data)


def _dataclass_from_dict(cls, data: dict):
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        if is_dataclass(f.type) if isinstance(f.type, type) else False:
            kwargs[f.name] = _dataclass_from_dict(f.type, value)
        elif f.name in ("geometry", "fso", "rf", "ppo") and isinstance(value, dict):
            nested = {"geometry": GeometryConfig, "fso": FsoParams, "rf": RfParams, "ppo": PpoConfig}[f.name]
            kwargs[f.name] = nested(**_tuplify(nested, value))
        else:
            kwargs[f.name] = value
    if "zipf_skew_range" in kwargs and isinstance(kwargs["zipf_skew_range"], list):
        kwargs["zipf_skew_range"] = tuple(kwargs["zipf_skew_range"])
    return cls(**kwargs)


def _tuplify(cls, data: dict) -> dict:
    out = dict(data)
    if cls is PpoConfig and isinstance(out.get("hidden"), list):
        out["hidden"] = tuple(out["hidden"])
    return out


def paper_profile(**overrides) -> ScenarioConfig:
    """Full-scale configuration; expected to run offline, not in CI."""
    cfg = ScenarioConfig()
    return cfg.with_overrides(overrides) if overrides else cfg


def desk_profile(**overrides) -> ScenarioConfig:
    """Small CI-scale configuration: 3 HAPs, 12 users, 5 contents.

    Link geometry is shortened (about 10 km hops at 1 km altitude) so FSO
    attenuation keeps channel gains, and therefore solver data, near unity.
    """
    cfg = ScenarioConfig(
        n_contents=5,
        n_sto=2,
        geometry=GeometryConfig(
            n_haps=3,
            n_dcs=1,
            n_users=12,
            coverage_radius_m=3_000.0,
            spacing_min_m=8_000.0,
            spacing_max_m=12_000.0,
            altitude_m=1_000.0,
            dc_offset_m=2_000.0,
        ),
        fso=FsoParams(bandwidth_hz=1e9, p_max_w=1e4),
        rf=RfParams(n_antennas=3),
        ppo=PpoConfig(iters_max=50, horizon=16, iters_minibatch=8),
        eval_slots=24,
    )
    return cfg.with_overrides(overrides) if overrides else cfg
