"""Deterministic synthetic embeddings with gradual per-day drift and a damage shock.

The embedding of entity ``i`` seen from perspective ``v`` on day ``t`` under
variant ``m`` is the L2-normalized sum of

* an identity vector ``b_i``,
* ``perspective_scale * p_v``, a viewpoint offset shared by all entities,
* a per-entity random walk ``sum(delta_{i,s} for s in 2..t) * drift_step_scale``,
* ``damage_scale * u_i`` on the final (damage) day only,
* ``(observation_noise + extra_noise_m) * eta_{i,v,t,m}``.

Every vector is an independent standard-normal draw from a Philox stream whose
key is derived from ``(seed, role, indices)``, so adding days, entities or
variants never changes vectors that already existed.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .embedstore import EmbeddingMatrix
from .manifest import ImageRecord, Perspective, RecordingSchedule

_ROLE_IDENTITY = 1
_ROLE_PERSPECTIVE = 2
_ROLE_DRIFT = 3
_ROLE_DAMAGE = 4
_ROLE_NOISE = 5

_VIEW_CODES = {Perspective.LEFT: "l", Perspective.CENTER: "c", Perspective.RIGHT: "r"}


class DriftConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Variant:
    name: str
    extra_noise: float = 0.0


@dataclass(frozen=True)
class DriftConfig:
    num_entities: int = 60
    num_perspectives: int = 3
    num_days: int = 15
    dim: int = 128
    seed: int = 42
    perspective_scale: float = 1.5
    drift_step_scale: float = 1.0
    damage_scale: float = 3.0
    observation_noise: float = 1.4
    variants: tuple[Variant, ...] = field(
        default_factory=lambda: (Variant("A", 0.0), Variant("R", 0.5))
    )

    def __post_init__(self):
        variants = tuple(
            v if isinstance(v, Variant) else Variant(**v) if isinstance(v, dict) else Variant(*v)
            for v in self.variants
        )
        object.__setattr__(self, "variants", variants)
        if self.dim < 2:
            raise DriftConfigError("dim must be >= 2")
        for name in ("num_entities", "num_perspectives", "num_days"):
            if getattr(self, name) < 1:
                raise DriftConfigError(f"{name} must be positive")
        if self.num_perspectives > len(Perspective):
            raise DriftConfigError(f"at most {len(Perspective)} perspectives are supported")
        if not 0 <= self.seed < 2**64:
            raise DriftConfigError("seed must be an unsigned 64-bit integer")
        for name in ("perspective_scale", "drift_step_scale", "damage_scale", "observation_noise"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise DriftConfigError(f"{name} must be finite and non-negative")
        if not variants:
            raise DriftConfigError("at least one variant is required")
        names = [v.name for v in variants]
        if len(set(names)) != len(names) or any(not n for n in names):
            raise DriftConfigError("variant names must be unique and nonempty")
        for v in variants:
            if not math.isfinite(v.extra_noise) or v.extra_noise < 0:
                raise DriftConfigError(f"variant {v.name}: extra_noise must be non-negative")

    @classmethod
    def from_dict(cls, data: dict) -> "DriftConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise DriftConfigError(f"unknown drift config keys: {sorted(unknown)}")
        data = dict(data)
        if "variants" in data:
            data["variants"] = tuple(data["variants"])
        return cls(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variants"] = [asdict(v) for v in self.variants]
        return d

    @property
    def damage_day(self) -> int:
        return self.num_days


@dataclass
class SyntheticDataset:
    records: list[ImageRecord]
    schedule: RecordingSchedule
    embeddings: dict[str, EmbeddingMatrix]
    config: DriftConfig


def day_labels(num_days: int) -> list[str]:
    """``["01", ..., "14", "14a"]`` for 15 days: the last session repeats the
    previous label with an ``a`` suffix, as the damaged re-shoot did."""
    if num_days == 1:
        return ["01"]
    return [f"{t:02d}" for t in range(1, num_days)] + [f"{num_days - 1:02d}a"]


@lru_cache(maxsize=None)
def _variant_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")


def _normal(seed: int, role: int, *indices: int, dim: int) -> np.ndarray:
    ss = np.random.SeedSequence([seed, role, *indices])
    return np.random.Generator(np.random.Philox(ss)).standard_normal(dim)


def generate(config: DriftConfig) -> SyntheticDataset:
    c = config
    labels = day_labels(c.num_days)
    schedule = RecordingSchedule(
        tuple((label, t == c.damage_day) for t, label in enumerate(labels, start=1))
    )
    views = tuple(Perspective)[: c.num_perspectives]
    ent_width = max(2, len(str(c.num_entities - 1)))

    identity = [_normal(c.seed, _ROLE_IDENTITY, i, dim=c.dim) for i in range(c.num_entities)]
    offsets = [
        c.perspective_scale * _normal(c.seed, _ROLE_PERSPECTIVE, v, dim=c.dim)
        for v in range(c.num_perspectives)
    ]
    damage = [
        c.damage_scale * _normal(c.seed, _ROLE_DAMAGE, i, dim=c.dim) for i in range(c.num_entities)
    ]

    records: list[ImageRecord] = []
    clean: list[tuple[np.ndarray, int, int, int]] = []
    walk = [np.zeros(c.dim) for _ in range(c.num_entities)]
    for t, label in enumerate(labels, start=1):
        damaged = t == c.damage_day and c.num_days > 1
        for i in range(c.num_entities):
            if t >= 2:
                walk[i] = walk[i] + c.drift_step_scale * _normal(
                    c.seed, _ROLE_DRIFT, i, t, dim=c.dim
                )
            base = identity[i] + walk[i]
            if damaged:
                base = base + damage[i]
            for v, view in enumerate(views):
                image_id = f"p{i:0{ent_width}d}_{_VIEW_CODES[view]}_{label}"
                records.append(
                    ImageRecord(
                        image_id=image_id,
                        entity_id=i,
                        perspective=view,
                        day_index=t,
                        day_label=label,
                        damaged=damaged,
                        row_index=len(records),
                    )
                )
                clean.append((base + offsets[v], i, v, t))

    ids = [r.image_id for r in records]
    embeddings = {}
    for variant in c.variants:
        scale = c.observation_noise + variant.extra_noise
        key = _variant_key(variant.name)
        rows = np.empty((len(clean), c.dim), dtype=np.float64)
        for n, (vec, i, v, t) in enumerate(clean):
            if scale > 0:
                vec = vec + scale * _normal(c.seed, _ROLE_NOISE, i, v, t, key, dim=c.dim)
            rows[n] = vec / np.linalg.norm(vec)
        embeddings[variant.name] = EmbeddingMatrix(rows.astype(np.float32), ids)
    return SyntheticDataset(records, schedule, embeddings, c)


def describe(config: DriftConfig) -> str:
    c = config
    variants = ", ".join(f"{v.name}(extra_noise={v.extra_noise:g})" for v in c.variants)
    return (
        f"driftsim entities={c.num_entities} perspectives={c.num_perspectives} "
        f"days={c.num_days} dim={c.dim} seed={c.seed}\n"
        f"perspective_scale={c.perspective_scale:g} drift_step_scale={c.drift_step_scale:g} "
        f"damage_scale={c.damage_scale:g} observation_noise={c.observation_noise:g}\n"
        f"damage_day={c.damage_day} variants: {variants}\n"
    )
