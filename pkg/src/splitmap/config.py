"""Scenario configuration: TOML (or JSON) sections with validation and echo.

Four sections: [manifold] describes the geometry provider, [construction]
the frame knobs, [sampling] the Monte-Carlo budgets and the mandatory seed,
[output] the artifact destination and formats.  The resolved configuration
echo round-trips: parsing the echo reproduces the same resolved values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .direction import FrameConfig
from .manifold import ManifoldSpec
from .splitting import SplittingConfig


class ConfigError(ValueError):
    pass


MANIFOLD_DEFAULTS = {
    "kind": "euclidean",
    "dimension": 2,
    "shape": 1.0,
    "domain_radius": 3.0,
    "sample_count": 0,
    "connectivity_radius": 0.0,
    "base_kind": "euclidean",
}

CONSTRUCTION_DEFAULTS = {
    "beta": 30.0,
    "nu": 0.0,
    "epsilon": 0.1,
    "eta": 0.1,
    "q1_scale": 1.1,
    "k_max": 0,
    "ball_radius": 1.0,
    "net_samples": 1500,
    "partner_budget": 6,
    "collapse_floor": 0.0,
    "strict_nets": False,
}

SAMPLING_DEFAULTS = {
    "seed": None,  # mandatory
    "pair_count": 2000,
    "bundle_count": 8000,
    "probe_grid": 1000,
    "cloud_points": 4000,
    "estimate_count": 4000,
    "s_fraction": 0.5,
}

OUTPUT_DEFAULTS = {
    "directory": "",
    "formats": ["json", "csv", "svg"],
}

_RANGES = {
    ("manifold", "dimension"): (2, 8),
    ("construction", "beta"): (3.0, 1e6),
    ("construction", "epsilon"): (1e-4, 0.5),
    ("construction", "eta"): (1e-6, 0.4999),
    ("construction", "q1_scale"): (1e-3, 10.0),
    ("construction", "ball_radius"): (1e-9, 1e9),
    ("sampling", "pair_count"): (1, 10**8),
    ("sampling", "bundle_count"): (1, 10**8),
    ("sampling", "probe_grid"): (1, 10**7),
    ("sampling", "s_fraction"): (1e-3, 1.0),
}


@dataclass
class ScenarioConfig:
    manifold: dict = field(default_factory=dict)
    construction: dict = field(default_factory=dict)
    sampling: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.sampling.get("seed") is None:
            raise ConfigError("sampling.seed is mandatory")
        for (section, key), (lo, hi) in _RANGES.items():
            val = getattr(self, section).get(key)
            if val is None:
                continue
            if not (lo <= val <= hi):
                raise ConfigError(f"{section}.{key} = {val!r} outside [{lo}, {hi}]")
        spec = self.manifold_spec()
        spec.validate()

    def manifold_spec(self) -> ManifoldSpec:
        mcfg = self.manifold
        return ManifoldSpec(
            kind=mcfg["kind"],
            dimension=int(mcfg["dimension"]),
            shape=float(mcfg["shape"]),
            domain_radius=float(mcfg["domain_radius"]) or None,
            sample_count=int(mcfg["sample_count"]),
            connectivity_radius=float(mcfg["connectivity_radius"]) or None,
            seed=int(self.sampling["seed"]),
            base_kind=mcfg["base_kind"],
        )

    def frame_config(self) -> FrameConfig:
        c = self.construction
        s = self.sampling
        return FrameConfig(
            beta=float(c["beta"]),
            nu=float(c["nu"]) or None,
            epsilon=float(c["epsilon"]),
            eta=float(c["eta"]),
            q1_scale=float(c["q1_scale"]),
            k_max=int(c["k_max"]),
            net_samples=int(c["net_samples"]),
            partner_budget=int(c["partner_budget"]),
            collapse_floor=float(c["collapse_floor"]),
            seed=int(s["seed"]),
            estimate_count=int(s["estimate_count"]),
            strict_nets=bool(c["strict_nets"]),
        )

    def splitting_config(self) -> SplittingConfig:
        s = self.sampling
        return SplittingConfig(
            pair_count=int(s["pair_count"]),
            bundle_count=int(s["bundle_count"]),
            probe_grid=int(s["probe_grid"]),
            cloud_points=int(s["cloud_points"]),
            seed=int(s["seed"]),
            s_fraction=float(s["s_fraction"]),
        )

    def echo(self) -> dict:
        return {
            "manifold": dict(self.manifold),
            "construction": dict(self.construction),
            "sampling": dict(self.sampling),
            "output": dict(self.output),
        }


def _merge(defaults: dict, given: dict, section: str) -> dict:
    out = dict(defaults)
    for key, val in given.items():
        if key not in defaults:
            raise ConfigError(f"unknown key {section}.{key}")
        out[key] = val
    return out


def parse_config(doc: dict) -> ScenarioConfig:
    for section in doc:
        if section not in ("manifold", "construction", "sampling", "output"):
            raise ConfigError(f"unknown section [{section}]")
    cfg = ScenarioConfig(
        manifold=_merge(MANIFOLD_DEFAULTS, doc.get("manifold", {}), "manifold"),
        construction=_merge(CONSTRUCTION_DEFAULTS, doc.get("construction", {}), "construction"),
        sampling=_merge(SAMPLING_DEFAULTS, doc.get("sampling", {}), "sampling"),
        output=_merge(OUTPUT_DEFAULTS, doc.get("output", {}), "output"),
    )
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ScenarioConfig:
    """Parse a TOML (default) or JSON scenario file."""
    p = Path(path)
    raw = p.read_bytes()
    if p.suffix.lower() == ".json":
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: JSON parse error at line {exc.lineno}: {exc.msg}") from exc
    else:
        try:
            doc = tomli.loads(raw.decode("utf-8"))
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{p}: TOML parse error: {exc}") from exc
    return parse_config(doc)


def apply_overrides(cfg: ScenarioConfig, overrides: list[str]) -> ScenarioConfig:
    """Apply `key=value` or `section.key=value` strings onto a config."""
    doc = cfg.echo()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, _, val = item.partition("=")
        key = key.strip()
        if "." in key:
            section, _, name = key.partition(".")
        else:
            section = None
            name = key
            hits = [sec for sec in doc if name in doc[sec]]
            if len(hits) != 1:
                raise ConfigError(f"override key {name!r} is ambiguous or unknown")
            section = hits[0]
        if section not in doc or name not in doc[section]:
            raise ConfigError(f"unknown override target {key!r}")
        old = doc[section][name]
        doc[section][name] = _coerce(val.strip(), old)
    return parse_config(doc)


def _coerce(text: str, like):
    if isinstance(like, bool):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"cannot parse boolean from {text!r}")
    if isinstance(like, int) and not isinstance(like, bool):
        return int(float(text))
    if isinstance(like, float):
        return float(text)
    if isinstance(like, list):
        return [t.strip() for t in text.split(",") if t.strip()]
    return text
