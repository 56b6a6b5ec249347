"""Core domain types: labels, the financial feature schema, and timeline records.

The feature schema is the single source of truth for how status-log columns
are named, ordered, and typed.  Every downstream stage (ingestion, feature
elimination, windowing, the model file) carries a ``FeatureSchema`` so that
a trained model can always be applied to a log with the exact column set it
was fitted on.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError


class Label(enum.Enum):
    """Ground-truth class of a character."""

    BOT = "bot"
    NORMAL = "normal"

    def encode(self) -> float:
        """Numeric target used by the classifier: bot maps to 1.0."""
        return 1.0 if self is Label.BOT else 0.0

    @staticmethod
    def decode(value: float) -> "Label":
        if value == 1.0:
            return Label.BOT
        if value == 0.0:
            return Label.NORMAL
        raise ValueError(f"not an encoded label: {value!r}")

    @staticmethod
    def parse(text: str) -> "Label":
        try:
            return Label(text.strip().lower())
        except ValueError:
            raise DataError(f"unknown label {text!r} (expected 'bot' or 'normal')") from None


class FeatureType(enum.Enum):
    ITEM = "Item"
    CASH = "Cash"
    EVALUATED_ASSET_VALUE = "EvaluatedAssetValue"


@dataclass(frozen=True)
class Feature:
    """One column of the financial status log."""

    id: int
    name: str
    type: FeatureType

    @property
    def column(self) -> str:
        """CSV column name: the display name lowercased with underscores."""
        return self.name.lower().replace(" ", "_")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature list plus a per-feature active mask.

    Deactivated features stay in the schema (ids and order are stable) but are
    excluded from scaling, windowing, and the model input.
    """

    features: tuple[Feature, ...]
    active: tuple[bool, ...]

    def __post_init__(self) -> None:
        if len(self.features) != len(self.active):
            raise ValueError("active mask length must match feature count")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def columns(self) -> tuple[str, ...]:
        return tuple(f.column for f in self.features)

    def active_indices(self) -> tuple[int, ...]:
        return tuple(i for i, keep in enumerate(self.active) if keep)

    def active_features(self) -> tuple[Feature, ...]:
        return tuple(self.features[i] for i in self.active_indices())

    def deactivate(self, indices: Iterable[int]) -> "FeatureSchema":
        drop = set(indices)
        bad = drop - set(range(len(self.features)))
        if bad:
            raise ValueError(f"unknown feature indices: {sorted(bad)}")
        mask = tuple(keep and i not in drop for i, keep in enumerate(self.active))
        if not any(mask):
            raise DataError("no active features remain after deactivation")
        return FeatureSchema(self.features, mask)

    def to_dict(self) -> dict:
        return {
            "features": [
                {"id": f.id, "name": f.name, "type": f.type.value} for f in self.features
            ],
            "active": list(self.active),
        }

    @staticmethod
    def from_dict(doc: dict) -> "FeatureSchema":
        try:
            features = tuple(
                Feature(id=int(f["id"]), name=str(f["name"]), type=FeatureType(f["type"]))
                for f in doc["features"]
            )
            active = tuple(bool(a) for a in doc["active"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed feature schema document: {exc}") from exc
        return FeatureSchema(features, active)


def canonical_schema() -> FeatureSchema:
    """The nine status-log features, in log column order, all active."""
    spec = [
        ("Number of Items", FeatureType.ITEM),
        ("Total Cash", FeatureType.CASH),
        ("Cash in Account", FeatureType.CASH),
        ("Cash in Character Bank", FeatureType.CASH),
        ("Cash in Vendor", FeatureType.CASH),
        ("Evaluated Asset Value", FeatureType.EVALUATED_ASSET_VALUE),
        ("Mailing Asset Value", FeatureType.EVALUATED_ASSET_VALUE),
        ("Evaluated Asset value in character bank", FeatureType.EVALUATED_ASSET_VALUE),
        ("Evaluated Asset in account bank", FeatureType.EVALUATED_ASSET_VALUE),
    ]
    features = tuple(Feature(id=i + 1, name=name, type=ftype) for i, (name, ftype) in enumerate(spec))
    return FeatureSchema(features, (True,) * len(features))


@dataclass(frozen=True, eq=False)
class StatusRecord:
    """One periodic snapshot of a character's financial state."""

    character_id: str
    account_id: str
    timestamp: float
    values: np.ndarray  # shape (n_features,), raw units

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))


@dataclass(frozen=True, eq=False)
class CharacterTimeline:
    """All snapshots of one character, strictly increasing in time.

    ``label`` is None for characters being scored without ground truth.
    """

    character_id: str
    label: Label | None
    records: tuple[StatusRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def timestamps(self) -> np.ndarray:
        return np.array([r.timestamp for r in self.records], dtype=float)

    def matrix(self) -> np.ndarray:
        """Raw values as a (length, n_features) array in record order."""
        if not self.records:
            return np.empty((0, 0))
        return np.stack([r.values for r in self.records])


@dataclass(frozen=True, eq=False)
class WindowedSample:
    """A fixed-length scaled slice of one character's timeline.

    ``origin`` is (character_id, start index) so folds can group by character.
    """

    matrix: np.ndarray  # shape (window_length, n_active_features), values in [0, 1]
    label: Label | None
    origin: tuple[str, int]

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2:
            raise ValueError("sample matrix must be 2-D")
        if not np.isfinite(m).all():
            raise ValueError("sample matrix contains non-finite values")
        if m.size and (m.min() < 0.0 or m.max() > 1.0):
            raise ValueError("sample matrix values must lie in [0, 1]")
        object.__setattr__(self, "matrix", m)


def encode_labels(labels: Sequence[Label | float] | np.ndarray) -> np.ndarray:
    """Targets as a float vector; accepts Label values or numeric 0/1."""
    if isinstance(labels, np.ndarray):
        return labels.astype(float)
    return np.array(
        [lab.encode() if isinstance(lab, Label) else float(lab) for lab in labels], dtype=float
    )
