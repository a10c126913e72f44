"""Experiment harness: stratified cross-validation and the three-model
comparison (collaboration-only vs comorbidity-only vs combined) per cancer
type, with a hard guard against gap-window leakage.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import models as modelsmod
from .graph import CollabGraph, TimeWindows
from .models import Hyperparams
from .synth import CANCER_TYPES, PatientRecord

COMPARISON_MODELS = ("collab_only", "comorbidity_only", "combined")


class StratificationError(ValueError):
    """A class has too few samples for the requested number of folds."""


class LeakageError(AssertionError):
    """A graph contains events past the observation window."""


@dataclass(frozen=True)
class Fold:
    train_idx: tuple[int, ...]
    test_idx: tuple[int, ...]


@dataclass(frozen=True)
class Metrics:
    n_survived: int
    n_deceased: int
    correct_survived: int
    correct_deceased: int

    @property
    def accuracy(self) -> float:
        total = self.n_survived + self.n_deceased
        return (self.correct_survived + self.correct_deceased) / total

    def to_dict(self) -> dict:
        return {
            "n_survived": self.n_survived,
            "n_deceased": self.n_deceased,
            "correct_survived": self.correct_survived,
            "correct_deceased": self.correct_deceased,
            "accuracy": self.accuracy,
        }


def stratified_kfold(labels: Sequence[int], k: int = 5, seed: int = 0) -> list[Fold]:
    """Partition indices into k folds with per-class balance within one
    sample of the stratified ideal; deterministic per seed."""
    y = np.asarray(labels)
    if k < 2:
        raise StratificationError(f"need k >= 2 folds, got {k}")
    rng = np.random.default_rng(seed)
    test_sets: list[list[int]] = [[] for _ in range(k)]
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        if members.size < k:
            raise StratificationError(
                f"class {cls!r} has {members.size} samples, fewer than k={k}"
            )
        members = members[rng.permutation(members.size)]
        for pos, idx in enumerate(members):
            test_sets[pos % k].append(int(idx))
    all_idx = set(range(y.size))
    folds = []
    for test in test_sets:
        test_sorted = tuple(sorted(test))
        train_sorted = tuple(sorted(all_idx - set(test)))
        folds.append(Fold(train_idx=train_sorted, test_idx=test_sorted))
    return folds


def stratified_holdout(labels: Sequence[int], test_fraction: float, seed: int) -> Fold:
    """Single stratified train/test split (the secondary evaluation mode)."""
    y = np.asarray(labels)
    rng = np.random.default_rng(seed)
    test: list[int] = []
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        if members.size < 2:
            raise StratificationError(
                f"class {cls!r} has {members.size} samples; need at least 2"
            )
        members = members[rng.permutation(members.size)]
        n_test = min(max(1, int(round(test_fraction * members.size))), members.size - 1)
        test.extend(int(i) for i in members[:n_test])
    train = sorted(set(range(y.size)) - set(test))
    return Fold(train_idx=tuple(train), test_idx=tuple(sorted(test)))


def evaluate(probs: Sequence[float], labels: Sequence[int]) -> Metrics:
    """Threshold predictions at 0.5 (ties count as survived) and tally
    per-class correct counts."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    pred = p >= 0.5
    return Metrics(
        n_survived=int(y.sum()),
        n_deceased=int((~y).sum()),
        correct_survived=int((pred & y).sum()),
        correct_deceased=int((~pred & ~y).sum()),
    )


def mean_metrics(per_fold: Sequence[Metrics]) -> dict:
    """Fold-mean counts and accuracy, mirroring the per-model report cells."""
    return {
        "n_survived": float(np.mean([m.n_survived for m in per_fold])),
        "n_deceased": float(np.mean([m.n_deceased for m in per_fold])),
        "correct_survived": float(np.mean([m.correct_survived for m in per_fold])),
        "correct_deceased": float(np.mean([m.correct_deceased for m in per_fold])),
        "accuracy": float(np.mean([m.accuracy for m in per_fold])),
    }


def assert_no_leakage(graphs: Mapping[str, CollabGraph], windows: TimeWindows) -> None:
    """Re-check the windowing contract at the training boundary."""
    hi = windows.observation_end
    for pid, g in graphs.items():
        if g.max_event_t is not None and g.max_event_t > hi:
            raise LeakageError(
                f"graph for patient {pid} contains an event at t={g.max_event_t}, "
                f"past the observation window end {hi}"
            )


@dataclass
class CellResult:
    """One (cancer type, model) cell of the comparison report."""

    cancer_type: str
    model_kind: str
    fold_metrics: list[Metrics] = field(default_factory=list)
    error: str | None = None

    @property
    def mean(self) -> dict | None:
        if self.error is not None or not self.fold_metrics:
            return None
        return mean_metrics(self.fold_metrics)


@dataclass
class ExperimentReport:
    seed: int
    k: int
    config_hash: str
    cells: list[CellResult] = field(default_factory=list)

    def cell(self, cancer_type: str, model_kind: str) -> CellResult:
        for c in self.cells:
            if c.cancer_type == cancer_type and c.model_kind == model_kind:
                return c
        raise KeyError((cancer_type, model_kind))

    def mean_accuracy(self, model_kind: str) -> float:
        """Mean accuracy across cancer types for one model."""
        vals = [
            c.mean["accuracy"]
            for c in self.cells
            if c.model_kind == model_kind and c.mean is not None
        ]
        return float(np.mean(vals))


def _instances_for(kind: str, patients, graphs):
    if kind == "collab_only":
        return [graphs[p.patient_id] for p in patients]
    if kind == "comorbidity_only":
        return [np.array(p.comorbidities, dtype=np.float64) for p in patients]
    if kind == "combined":
        return [
            (graphs[p.patient_id], np.array(p.comorbidities, dtype=np.float64))
            for p in patients
        ]
    raise ValueError(f"unknown comparison model {kind!r}")


def _run_cell(task: tuple) -> CellResult:
    """Train and evaluate one (cancer type, model) cell over its folds.

    Module-level so cells can run in worker processes; fold seeds are
    derived from the experiment seed only, making results independent of
    scheduling.
    """
    ct, kind, instances, labels, folds, hp, seed = task
    labels = np.asarray(labels, dtype=np.int64)
    cell = CellResult(ct, kind)
    for fold_pos, fold in enumerate(folds):
        try:
            model = modelsmod.make_model(kind, hidden_dim=hp.hidden_dim)
            result = modelsmod.train(
                model,
                [instances[i] for i in fold.train_idx],
                labels[list(fold.train_idx)],
                hp,
                seed=seed * 1000 + fold_pos,
            )
            test_batch = model.batch(
                model.prepare([instances[i] for i in fold.test_idx]),
                range(len(fold.test_idx)),
            )
            probs = modelsmod.predict_batch(model, result.params, test_batch)
            cell.fold_metrics.append(evaluate(probs, labels[list(fold.test_idx)]))
        except (modelsmod.DegenerateDataError, StratificationError) as e:
            cell.error = f"fold {fold_pos}: {e}"
            break
    return cell


def run_comparison(
    patients: Sequence[PatientRecord],
    graphs: Mapping[str, CollabGraph],
    windows: TimeWindows,
    hp: Hyperparams,
    k: int = 5,
    seed: int = 0,
    config_hash: str = "",
    cancer_types: Sequence[str] = CANCER_TYPES,
    model_kinds: Sequence[str] = COMPARISON_MODELS,
    mode: str = "cv",
    holdout_fraction: float = 0.2,
    jobs: int = 1,
) -> ExperimentReport:
    """Train and evaluate the comparison models per cancer type with shared
    folds. A failing cell (e.g. single-class data) is recorded, not raised.
    Cells may run in parallel worker processes (jobs > 1) with identical
    results.
    """
    assert_no_leakage(graphs, windows)
    report = ExperimentReport(seed=seed, k=k, config_hash=config_hash)
    tasks = []
    failed_cells = []
    for ct_pos, ct in enumerate(cancer_types):
        ct_patients = [p for p in patients if p.cancer_type == ct and p.patient_id in graphs]
        labels = np.array([p.survived for p in ct_patients], dtype=np.int64)
        try:
            if mode == "holdout":
                folds = [stratified_holdout(labels, holdout_fraction, seed + ct_pos)]
            else:
                folds = stratified_kfold(labels, k=k, seed=seed + ct_pos)
        except StratificationError as e:
            failed_cells.append((ct, str(e)))
            continue
        for kind in model_kinds:
            instances = _instances_for(kind, ct_patients, graphs)
            tasks.append((ct, kind, instances, labels, folds, hp, seed))

    if jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell, tasks))
    else:
        cells = [_run_cell(t) for t in tasks]

    by_ct: dict[str, list[CellResult]] = {}
    for cell in cells:
        by_ct.setdefault(cell.cancer_type, []).append(cell)
    for ct in cancer_types:
        for err_ct, err in failed_cells:
            if err_ct == ct:
                for kind in model_kinds:
                    report.cells.append(CellResult(ct, kind, error=err))
        report.cells.extend(by_ct.get(ct, []))
    return report
