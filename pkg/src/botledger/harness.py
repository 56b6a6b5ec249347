"""Training loop, stratified cross-validation, period splitting, and metrics.

Fold assignment is stratified by label and, by default, grouped by character:
every window cut from one character lands in the same fold, so a model is
never tested on slices of a timeline it trained on.  The leaky mode assigns
windows independently (still stratified) to expose how much that kind of
leakage inflates scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DataError
from .features import WindowConfig
from .network import (
    ModelConfig,
    ModelParams,
    adam_step,
    backward,
    bce_loss,
    forward,
    init_adam,
    init_params,
)
from .schema import CharacterTimeline, Label, WindowedSample, encode_labels


def stack_samples(samples: Sequence[WindowedSample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into (B, T, D) inputs and a 0/1 target vector."""
    if not samples:
        raise ValueError("cannot stack an empty sample list")
    shapes = {s.matrix.shape for s in samples}
    if len(shapes) != 1:
        raise ValueError(f"samples disagree on window shape: {sorted(shapes)}")
    if any(s.label is None for s in samples):
        raise ValueError("cannot build targets from unlabeled samples")
    x = np.stack([s.matrix for s in samples])
    y = encode_labels([s.label for s in samples])
    return x, y


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with bot as the positive class."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn
        )

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        doc = {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }
        if self.flags:
            doc["flags"] = list(self.flags)
        return doc


def compute_metrics(cm: ConfusionMatrix) -> Metrics:
    """Accuracy/precision/recall/F1 with flagged zero-division conventions."""
    if cm.total < 1:
        raise ValueError("confusion matrix is empty")
    flags: list[str] = []
    accuracy = (cm.tp + cm.tn) / cm.total
    if cm.tp + cm.fp == 0:
        precision = 0.0
        flags.append("precision_zero_division")
    else:
        precision = cm.tp / (cm.tp + cm.fp)
    if cm.tp + cm.fn == 0:
        recall = 0.0
        flags.append("recall_zero_division")
    else:
        recall = cm.tp / (cm.tp + cm.fn)
    if precision + recall == 0.0:
        f1 = 0.0
        flags.append("f1_zero_division")
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return Metrics(accuracy, precision, recall, f1, tuple(flags))


def confusion_from_predictions(
    probabilities: np.ndarray, labels: np.ndarray, threshold: float = 0.5
) -> ConfusionMatrix:
    """Threshold probabilities (ties classify as bot) and count outcomes."""
    p = np.asarray(probabilities, dtype=float)
    y = encode_labels(labels)
    if p.shape != y.shape:
        raise ValueError("probabilities and labels must align")
    pred = p >= threshold
    actual = y == 1.0
    return ConfusionMatrix(
        tp=int(np.sum(pred & actual)),
        fp=int(np.sum(pred & ~actual)),
        tn=int(np.sum(~pred & ~actual)),
        fn=int(np.sum(~pred & actual)),
    )


@dataclass(frozen=True)
class FoldPlan:
    """Sample-to-fold assignment; folds partition the sample indices."""

    k: int
    assignments: np.ndarray  # (n_samples,) ints in [0, k)
    seed: int
    grouped: bool

    def fold_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def validate(self, samples: Sequence[WindowedSample]) -> None:
        """Assert the partition and (when grouped) no-character-leakage."""
        if self.assignments.shape != (len(samples),):
            raise ValueError("fold assignments do not cover the sample list")
        if self.assignments.min() < 0 or self.assignments.max() >= self.k:
            raise ValueError("fold assignment out of range")
        counts = np.bincount(self.assignments, minlength=self.k)
        if (counts == 0).any():
            raise ValueError("every fold must receive at least one sample")
        if self.grouped:
            fold_of: dict[str, int] = {}
            for idx, sample in enumerate(samples):
                character = sample.origin[0]
                seen = fold_of.setdefault(character, int(self.assignments[idx]))
                if seen != int(self.assignments[idx]):
                    raise ValueError(f"character {character!r} spans multiple folds")


def make_folds(
    samples: Sequence[WindowedSample],
    k: int,
    seed: int,
    *,
    group_by_character: bool = True,
) -> FoldPlan:
    """Stratified k-fold assignment, grouped by character unless disabled.

    Group mode shuffles each label's characters with the seeded generator and
    deals them round-robin, so per-label character counts across folds differ
    by at most one.  Either mode requires at least k members per class.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if not samples:
        raise ValueError("cannot fold an empty sample list")
    if any(s.label is None for s in samples):
        raise ValueError("cross-validation needs labeled samples")
    rng = np.random.default_rng(seed)
    assignments = np.full(len(samples), -1, dtype=int)

    if group_by_character:
        label_of: dict[str, Label] = {}
        for s in samples:
            prior = label_of.setdefault(s.origin[0], s.label)
            if prior is not s.label:
                raise DataError(f"character {s.origin[0]!r} carries conflicting labels")
        for label in (Label.BOT, Label.NORMAL):
            chars = sorted(c for c, lab in label_of.items() if lab is label)
            if len(chars) < k:
                raise DataError(
                    f"insufficient class members: {len(chars)} {label.value} characters "
                    f"for k={k} grouped folds"
                )
            order = rng.permutation(len(chars))
            char_fold = {chars[j]: i % k for i, j in enumerate(order)}
            for idx, s in enumerate(samples):
                if s.label is label:
                    assignments[idx] = char_fold[s.origin[0]]
    else:
        for label in (Label.BOT, Label.NORMAL):
            indices = [i for i, s in enumerate(samples) if s.label is label]
            if len(indices) < k:
                raise DataError(
                    f"insufficient class members: {len(indices)} {label.value} samples "
                    f"for k={k} folds"
                )
            order = rng.permutation(len(indices))
            for i, j in enumerate(order):
                assignments[indices[j]] = i % k

    plan = FoldPlan(k=k, assignments=assignments, seed=seed, grouped=group_by_character)
    plan.validate(samples)
    return plan


def split_by_period(
    timelines: Sequence[CharacterTimeline],
    period_seconds: float,
    anchor: float | None = None,
) -> list[tuple[int, list[CharacterTimeline]]]:
    """Partition records into consecutive half-open periods.

    A record at time t belongs to period floor((t - anchor) / period).  The
    anchor defaults to the earliest record, so boundary records always fall
    into the later period.  Returns (period index, sub-timelines) sorted by
    period; characters with no records in a period are simply absent there.
    """
    if period_seconds <= 0:
        raise ValueError("period length must be positive")
    if not timelines:
        return []
    if anchor is None:
        starts = [t.records[0].timestamp for t in timelines if len(t)]
        if not starts:
            return []
        anchor = min(starts)

    buckets: dict[int, dict[str, list]] = {}
    for timeline in timelines:
        for rec in timeline.records:
            period = int(np.floor((rec.timestamp - anchor) / period_seconds))
            buckets.setdefault(period, {}).setdefault(timeline.character_id, []).append(rec)

    label_of = {t.character_id: t.label for t in timelines}
    result: list[tuple[int, list[CharacterTimeline]]] = []
    for period in sorted(buckets):
        subs = [
            CharacterTimeline(cid, label_of[cid], tuple(recs))
            for cid, recs in sorted(buckets[period].items())
        ]
        result.append((period, subs))
    return result


@dataclass(frozen=True)
class EarlyStopConfig:
    patience: int = 5
    holdout_fraction: float = 0.1


@dataclass(frozen=True)
class TrainOptions:
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    shuffle_seed: int = 0
    early_stop: EarlyStopConfig | None = None

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


def _epoch_batches(n: int, batch_size: int, order: np.ndarray, merge_singleton: bool) -> list[np.ndarray]:
    batches = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    if merge_singleton and len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches.pop()
    return batches


def train(
    samples: Sequence[WindowedSample],
    cfg: ModelConfig,
    opts: TrainOptions,
) -> tuple[ModelParams, list[dict]]:
    """Minibatch Adam training; returns final params and per-epoch log.

    Batches are reshuffled every epoch from a dedicated generator; dropout
    masks come from a second generator so batch order and masks stay
    independent.  With batch norm on, a trailing single-sample batch is
    merged into its predecessor (one sample's batch statistics are its own
    values, which erases the level information BN should preserve).
    """
    x, y = stack_samples(samples)
    classes = set(np.unique(y).tolist())
    if classes != {0.0, 1.0}:
        raise DataError("training needs at least one sample of each class")
    n = x.shape[0]

    params = init_params(cfg)
    state = init_adam(params, lr=opts.lr)
    shuffle_rng, dropout_rng = [
        np.random.default_rng(s) for s in np.random.SeedSequence(opts.shuffle_seed).spawn(2)
    ]

    holdout: np.ndarray | None = None
    train_idx = np.arange(n)
    if opts.early_stop is not None:
        order = shuffle_rng.permutation(n)
        n_hold = max(1, int(round(opts.early_stop.holdout_fraction * n)))
        if n_hold >= n:
            raise DataError("holdout fraction leaves no training samples")
        holdout, train_idx = order[:n_hold], order[n_hold:]

    log: list[dict] = []
    best_val = np.inf
    stale = 0
    for epoch in range(opts.epochs):
        order = train_idx[shuffle_rng.permutation(len(train_idx))]
        losses: list[float] = []
        for batch_idx in _epoch_batches(len(order), opts.batch_size, order, cfg.use_batchnorm):
            xb, yb = x[batch_idx], y[batch_idx]
            probs, trace = forward(params, xb, cfg, training=True, rng=dropout_rng)
            losses.append(bce_loss(probs, yb, params, cfg.l2_lambda))
            grads = backward(trace, yb, params, cfg)
            params, state = adam_step(params, grads, state)
        entry = {"epoch": epoch + 1, "loss": float(np.mean(losses))}
        if holdout is not None:
            val_probs, _ = forward(params, x[holdout], cfg, training=False)
            entry["val_loss"] = bce_loss(val_probs, y[holdout], params, cfg.l2_lambda)
            if entry["val_loss"] < best_val - 1e-12:
                best_val = entry["val_loss"]
                stale = 0
            else:
                stale += 1
            log.append(entry)
            if stale >= opts.early_stop.patience:
                entry["early_stop"] = True
                break
        else:
            log.append(entry)
    return params, log


def predict_probs(params: ModelParams, cfg: ModelConfig, x: np.ndarray) -> np.ndarray:
    probs, _ = forward(params, x, cfg, training=False)
    return probs


@dataclass(frozen=True)
class EvalRow:
    name: str
    metrics: Metrics
    confusion: ConfusionMatrix
    n_test: int

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "metrics": self.metrics.to_dict(),
            "confusion": self.confusion.to_dict(),
            "n_test": self.n_test,
        }


@dataclass(frozen=True)
class EvalReport:
    """Per-fold (or per-period) rows plus their arithmetic mean."""

    rows: tuple[EvalRow, ...]
    average: Metrics
    confusion_total: ConfusionMatrix
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "average": self.average.to_dict(),
            "confusion_total": self.confusion_total.to_dict(),
            "config": self.config,
        }


def average_metrics(rows: Sequence[Metrics]) -> Metrics:
    if not rows:
        raise ValueError("cannot average zero metric rows")
    return Metrics(
        accuracy=float(np.mean([m.accuracy for m in rows])),
        precision=float(np.mean([m.precision for m in rows])),
        recall=float(np.mean([m.recall for m in rows])),
        f1=float(np.mean([m.f1 for m in rows])),
        flags=tuple(sorted({f for m in rows for f in m.flags})),
    )


def derive_seed(*keys: int) -> int:
    """Stable child seed for (experiment seed, fold index, ...) tuples."""
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])


def cross_validate(
    samples: Sequence[WindowedSample],
    cfg: ModelConfig,
    opts: TrainOptions,
    *,
    k: int,
    seed: int,
    threshold: float = 0.5,
    group_by_character: bool = True,
    row_prefix: str = "Fold",
) -> EvalReport:
    """Stratified k-fold evaluation; each fold trains a fresh model.

    Per-fold model and shuffle seeds are derived from (seed, fold index), so
    the whole run is reproducible from the one experiment seed.
    """
    plan = make_folds(samples, k, seed, group_by_character=group_by_character)
    plan.validate(samples)
    x, y = stack_samples(samples)

    rows: list[EvalRow] = []
    total = ConfusionMatrix()
    for fold in range(k):
        test_idx = plan.fold_indices(fold)
        train_mask = plan.assignments != fold
        fold_samples = [s for s, keep in zip(samples, train_mask) if keep]
        fold_cfg = replace(cfg, seed=derive_seed(seed, fold))
        fold_opts = replace(opts, shuffle_seed=derive_seed(seed, fold, 1))
        params, _ = train(fold_samples, fold_cfg, fold_opts)
        probs = predict_probs(params, fold_cfg, x[test_idx])
        cm = confusion_from_predictions(probs, y[test_idx], threshold)
        rows.append(
            EvalRow(
                name=f"{row_prefix} {fold + 1}",
                metrics=compute_metrics(cm),
                confusion=cm,
                n_test=len(test_idx),
            )
        )
        total = total + cm

    return EvalReport(
        rows=tuple(rows),
        average=average_metrics([r.metrics for r in rows]),
        confusion_total=total,
        config={
            "k": k,
            "seed": seed,
            "threshold": threshold,
            "group_by_character": group_by_character,
            "model": cfg.to_dict(),
            "epochs": opts.epochs,
            "batch_size": opts.batch_size,
            "lr": opts.lr,
        },
    )


def format_report_text(report: EvalReport, title: str = "Cross-validation results") -> str:
    """Fixed-width table: one row per fold/period plus the average."""
    header = f"{'Experiment':<14}{'Accuracy':>10}{'Precision':>11}{'Recall':>9}{'F1 Score':>10}"
    lines = [title, "=" * len(header), header, "-" * len(header)]
    for row in report.rows:
        m = row.metrics
        lines.append(
            f"{row.name:<14}{m.accuracy:>10.4f}{m.precision:>11.4f}{m.recall:>9.4f}{m.f1:>10.4f}"
        )
    lines.append("-" * len(header))
    a = report.average
    lines.append(f"{'Average':<14}{a.accuracy:>10.4f}{a.precision:>11.4f}{a.recall:>9.4f}{a.f1:>10.4f}")
    if a.flags:
        lines.append(f"flags: {', '.join(a.flags)}")
    return "\n".join(lines) + "\n"
