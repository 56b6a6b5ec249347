"""Feature preparation: elimination of uninformative features, min-max
scaling, sliding-window extraction, and distribution summaries.

Elimination applies two rules over the raw (unscaled) timelines:

* rule 1 (indifference): the standardized mean difference between the bot
  and normal groups falls below a threshold, so the feature cannot help
  separate them;
* rule 2 (invariance): the feature is identically zero in both groups.

Scaling maps each series onto [0, 1] with ``(x - min) / (max - min)``; a
degenerate series (max == min) maps to all zeros rather than dividing by
zero.  Windowing then cuts each scaled timeline into fixed-length slices.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, NumericError
from .schema import CharacterTimeline, FeatureSchema, Label, WindowedSample

# Rule 1 drops a feature when its standardized mean difference is below this.
RULE1_SMD_THRESHOLD = 0.01
# Added to the pooled standard deviation so equal-mean constant features
# yield effect size 0 instead of 0/0.
SMD_EPSILON = 1e-9


class ScalingScope(enum.Enum):
    """Where min-max statistics come from: the whole timeline or each window."""

    PER_CHARACTER = "per-character"
    PER_WINDOW = "per-window"


@dataclass(frozen=True)
class WindowConfig:
    window_length: int
    stride: int
    scaling_scope: ScalingScope = ScalingScope.PER_CHARACTER

    def __post_init__(self) -> None:
        if self.window_length < 2:
            raise ValueError("window_length must be at least 2")
        if self.stride < 1:
            raise ValueError("stride must be at least 1")

    def to_dict(self) -> dict:
        return {
            "window_length": self.window_length,
            "stride": self.stride,
            "scaling_scope": self.scaling_scope.value,
        }

    @staticmethod
    def from_dict(doc: dict) -> "WindowConfig":
        try:
            return WindowConfig(
                window_length=int(doc["window_length"]),
                stride=int(doc["stride"]),
                scaling_scope=ScalingScope(doc["scaling_scope"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed window config document: {exc}") from exc


def minmax_scale(series: np.ndarray) -> np.ndarray:
    """Map a 1-D series onto [0, 1]; a constant series maps to zeros."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("series must be a non-empty 1-D array")
    if not np.isfinite(x).all():
        raise NumericError("cannot scale a series with non-finite values")
    lo = x.min()
    span = x.max() - lo
    if span == 0.0:
        return np.zeros_like(x)
    return (x - lo) / span


def window_start_indices(length: int, window_length: int, stride: int) -> range:
    """Start offsets of every full window; empty when length < window_length."""
    if window_length < 1 or stride < 1:
        raise ValueError("window_length and stride must be positive")
    if length < window_length:
        return range(0)
    return range(0, length - window_length + 1, stride)


def slide_windows(
    timeline: CharacterTimeline, schema: FeatureSchema, cfg: WindowConfig
) -> list[WindowedSample]:
    """Scale the timeline's active features and cut sliding windows.

    Per-character scope scales each feature over the whole timeline before
    cutting, so windows keep their position relative to the character's own
    range; per-window scope rescales each window in isolation.
    """
    cols = schema.active_indices()
    if not cols:
        raise ValueError("schema has no active features")
    raw = timeline.matrix()
    if raw.size == 0:
        return []
    raw = raw[:, list(cols)]
    starts = window_start_indices(len(timeline), cfg.window_length, cfg.stride)

    if cfg.scaling_scope is ScalingScope.PER_CHARACTER:
        scaled = np.column_stack([minmax_scale(raw[:, j]) for j in range(raw.shape[1])])
        cut_from = scaled
    else:
        cut_from = raw

    samples: list[WindowedSample] = []
    for start in starts:
        window = cut_from[start : start + cfg.window_length]
        if cfg.scaling_scope is ScalingScope.PER_WINDOW:
            window = np.column_stack(
                [minmax_scale(window[:, j]) for j in range(window.shape[1])]
            )
        samples.append(
            WindowedSample(
                matrix=window.copy(),
                label=timeline.label,
                origin=(timeline.character_id, int(start)),
            )
        )
    return samples


def windows_from_timelines(
    timelines: Sequence[CharacterTimeline], schema: FeatureSchema, cfg: WindowConfig
) -> list[WindowedSample]:
    """Windows for every timeline, concatenated in timeline order."""
    samples: list[WindowedSample] = []
    for timeline in timelines:
        samples.extend(slide_windows(timeline, schema, cfg))
    return samples


@dataclass(frozen=True)
class FeatureEvidence:
    """Per-feature group statistics backing an elimination decision."""

    name: str
    effect_size: float
    sum_bot: float
    sum_normal: float
    std_bot: float
    std_normal: float
    dropped_rule1: bool
    dropped_rule2: bool

    @property
    def dropped(self) -> bool:
        return self.dropped_rule1 or self.dropped_rule2

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "effect_size": self.effect_size,
            "sum_bot": self.sum_bot,
            "sum_normal": self.sum_normal,
            "std_bot": self.std_bot,
            "std_normal": self.std_normal,
            "dropped_rule1": self.dropped_rule1,
            "dropped_rule2": self.dropped_rule2,
        }


@dataclass(frozen=True)
class EliminationReport:
    entries: tuple[FeatureEvidence, ...]
    threshold: float
    epsilon: float

    def dropped_names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries if e.dropped)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "epsilon": self.epsilon,
            "entries": [e.to_dict() for e in self.entries],
        }


def eliminate_noninfluential(
    timelines: Sequence[CharacterTimeline],
    schema: FeatureSchema,
    *,
    threshold: float = RULE1_SMD_THRESHOLD,
    epsilon: float = SMD_EPSILON,
) -> tuple[FeatureSchema, EliminationReport]:
    """Deactivate features that cannot distinguish bots from normals.

    Statistics are computed over every raw record of every labeled timeline,
    pooled by label.  Both groups must be present; dropping every active
    feature is fatal.
    """
    by_label: dict[Label, list[np.ndarray]] = {Label.BOT: [], Label.NORMAL: []}
    for timeline in timelines:
        if timeline.label is not None and len(timeline):
            by_label[timeline.label].append(timeline.matrix())
    if not by_label[Label.BOT] or not by_label[Label.NORMAL]:
        raise DataError("feature elimination needs records from both label groups")
    bot = np.concatenate(by_label[Label.BOT])
    normal = np.concatenate(by_label[Label.NORMAL])
    if bot.shape[1] != len(schema) or normal.shape[1] != len(schema):
        raise DataError("record width does not match the feature schema")

    entries: list[FeatureEvidence] = []
    drop_indices: list[int] = []
    for idx, feature in enumerate(schema.features):
        b, n = bot[:, idx], normal[:, idx]
        sum_b, sum_n = float(b.sum()), float(n.sum())
        std_b, std_n = float(b.std()), float(n.std())
        # identically zero in a group <=> zero sum and zero spread
        rule2 = sum_b == 0.0 and std_b == 0.0 and sum_n == 0.0 and std_n == 0.0
        pooled = float(np.sqrt((b.var() + n.var()) / 2.0))
        effect = abs(float(b.mean()) - float(n.mean())) / (pooled + epsilon)
        rule1 = effect < threshold
        entries.append(
            FeatureEvidence(
                name=feature.name,
                effect_size=effect,
                sum_bot=sum_b,
                sum_normal=sum_n,
                std_bot=std_b,
                std_normal=std_n,
                dropped_rule1=rule1,
                dropped_rule2=rule2,
            )
        )
        if (rule1 or rule2) and schema.active[idx]:
            drop_indices.append(idx)

    report = EliminationReport(tuple(entries), threshold=threshold, epsilon=epsilon)
    new_schema = schema.deactivate(drop_indices) if drop_indices else schema
    return new_schema, report


@dataclass(frozen=True)
class DistributionRow:
    feature_name: str
    label: Label
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    mean: float

    def to_dict(self) -> dict:
        return {
            "feature": self.feature_name,
            "label": self.label.value,
            "min": self.minimum,
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
            "max": self.maximum,
            "mean": self.mean,
        }


@dataclass(frozen=True)
class DistributionSummary:
    rows: tuple[DistributionRow, ...]
    missing_labels: tuple[Label, ...]

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "missing_labels": [lab.value for lab in self.missing_labels],
        }


def format_elimination_text(report: EliminationReport) -> str:
    """Fixed-width evidence table, one row per feature."""
    header = (
        f"{'feature':<42}{'status':<10}{'effect_size':>13}"
        f"{'sum_bot':>15}{'sum_normal':>15}{'std_bot':>13}{'std_normal':>13}"
    )
    lines = ["Feature elimination evidence", "=" * len(header), header, "-" * len(header)]
    for e in report.entries:
        if e.dropped_rule2:
            status = "dropped:2"
        elif e.dropped_rule1:
            status = "dropped:1"
        else:
            status = "kept"
        lines.append(
            f"{e.name:<42}{status:<10}{e.effect_size:>13.4g}"
            f"{e.sum_bot:>15.4g}{e.sum_normal:>15.4g}{e.std_bot:>13.4g}{e.std_normal:>13.4g}"
        )
    dropped = report.dropped_names()
    lines.append("-" * len(header))
    lines.append(
        f"dropped {len(dropped)} of {len(report.entries)} features "
        "(rule 1: group means indistinguishable; rule 2: identically zero in both groups)"
    )
    return "\n".join(lines) + "\n"


def format_distribution_text(summary: DistributionSummary) -> str:
    """Fixed-width quartile table of scaled values, grouped by label."""
    header = (
        f"{'feature':<42}{'label':<8}{'min':>8}{'q1':>8}{'median':>8}"
        f"{'q3':>8}{'max':>8}{'mean':>8}"
    )
    lines = ["Scaled feature distribution by label", "=" * len(header), header, "-" * len(header)]
    for row in summary.rows:
        lines.append(
            f"{row.feature_name:<42}{row.label.value:<8}{row.minimum:>8.4f}{row.q1:>8.4f}"
            f"{row.median:>8.4f}{row.q3:>8.4f}{row.maximum:>8.4f}{row.mean:>8.4f}"
        )
    for label in summary.missing_labels:
        lines.append(f"(no {label.value} samples present)")
    return "\n".join(lines) + "\n"


def summarize_distributions(
    samples: Sequence[WindowedSample], schema: FeatureSchema
) -> DistributionSummary:
    """Quartile/mean summary of scaled feature values, pooled per label."""
    if not samples:
        raise ValueError("cannot summarize an empty sample set")
    features = schema.active_features()
    width = samples[0].matrix.shape[1]
    if width != len(features):
        raise ValueError("sample width does not match the schema's active features")

    rows: list[DistributionRow] = []
    missing: list[Label] = []
    for label in (Label.BOT, Label.NORMAL):
        stacks = [s.matrix for s in samples if s.label is label]
        if not stacks:
            missing.append(label)
            continue
        pooled = np.concatenate(stacks)
        q1, med, q3 = np.percentile(pooled, [25, 50, 75], axis=0)
        for j, feature in enumerate(features):
            rows.append(
                DistributionRow(
                    feature_name=feature.name,
                    label=label,
                    minimum=float(pooled[:, j].min()),
                    q1=float(q1[j]),
                    median=float(med[j]),
                    q3=float(q3[j]),
                    maximum=float(pooled[:, j].max()),
                    mean=float(pooled[:, j].mean()),
                )
            )
    return DistributionSummary(tuple(rows), tuple(missing))
