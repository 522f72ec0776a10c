"""Leave-house-out cross-validation and the robustness sweeps built on it.

Each fold holds out one house, carves validation houses out of the rest,
trains a pairwise ensemble on last-two-period windows, and scores the
held-out house. Trained folds are kept so that different voting rules,
label restrictions and test phases can be evaluated without retraining.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import ensemble as ens_mod
from . import metrics
from .dataio import Dataset, RecordingTooShort, partition_by_house, period_length, subsample_houses
from .ensemble import VOTING_RULES, WEIGHTED, Ensemble, EnsembleReport
from .metrics import ConfusionMatrix
from .mlp import TrainOptions
from .signals import (
    apply_decimation,
    design_decimation,
    feature_matrix,
    steady_state_window,
    window_origins,
)

log = logging.getLogger(__name__)

PER_MEASUREMENT = "measurement"
PER_WINDOW = "window"


@dataclass(frozen=True)
class ExperimentConfig:
    epsilon: int = 10
    voting: str = WEIGHTED
    train_fraction: float = 1.0
    target_sample_rate_hz: float | None = None
    phase_shift_tau: int | None = None
    prior_knowledge: bool = False
    scoring: str = PER_MEASUREMENT
    seed: int = 0
    train_opts: TrainOptions = field(default_factory=TrainOptions)
    jobs: int = 1

    def __post_init__(self):
        if self.epsilon < 1:
            raise ValueError("epsilon must be >= 1")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValueError("train_fraction must lie in (0, 1]")
        if self.voting not in VOTING_RULES:
            raise ValueError(f"voting must be one of {VOTING_RULES}")
        if self.scoring not in (PER_MEASUREMENT, PER_WINDOW):
            raise ValueError(f"scoring must be '{PER_MEASUREMENT}' or '{PER_WINDOW}'")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("jobs")
        return out


def fold_seed(seed: int, house: int) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFF, house & 0xFFFFFFFF]).generate_state(1)[0])


@dataclass
class Features:
    X: np.ndarray
    y: np.ndarray  # label indices
    house: np.ndarray
    measurement: np.ndarray  # index into the source dataset's measurements
    degenerate: np.ndarray

    def __len__(self):
        return self.X.shape[0]

    def take(self, mask) -> Features:
        return Features(*(a[mask] for a in (self.X, self.y, self.house, self.measurement, self.degenerate)))


def _stack(parts, dim) -> Features:
    if not parts:
        z = np.zeros(0, dtype=np.int64)
        return Features(np.zeros((0, 2 * dim)), z, z.copy(), z.copy(), np.zeros(0, dtype=bool))
    return Features(*(np.concatenate(cols) for cols in zip(*parts)))


def extract(
    ds: Dataset,
    epsilon: int,
    tau: int | None = None,
    warnings: list | None = None,
    indices: Iterable[int] | None = None,
) -> Features:
    """Feature windows for (a subset of) a dataset.

    By default every measurement contributes ``d // epsilon`` windows
    starting at the final two-period window. With ``tau`` given, each
    measurement contributes the single period starting at ``tau``;
    measurements too short for it are skipped with a warning.
    """
    label_index = {c: k for k, c in enumerate(ds.label_space)}
    parts = []
    dim = None
    for k in indices if indices is not None else range(len(ds)):
        m = ds.measurements[k]
        d = m.period
        dim = d
        if tau is None:
            taus = list(window_origins(steady_state_window(m, d), epsilon, d))
        elif tau + d > len(m) or tau < 0:
            msg = f"{m.source or k}: tau={tau} outside recording of {len(m)} samples; skipped"
            log.warning(msg)
            if warnings is not None:
                warnings.append(msg)
            continue
        else:
            taus = [tau]
        X, bad = feature_matrix(m, taus, d)
        n = len(taus)
        parts.append(
            (
                X,
                np.full(n, label_index[m.category], dtype=np.int64),
                np.full(n, m.house_id, dtype=np.int64),
                np.full(n, k, dtype=np.int64),
                bad,
            )
        )
    if dim is None and len(ds):
        dim = ds.measurements[0].period
    return _stack(parts, dim or 0)


def split_validation_houses(
    feature_counts: dict[int, int], fraction: float, seed: int
) -> tuple[list[int], list[int]]:
    """Shuffle houses and move them to validation until ``fraction`` of features is covered.

    At least one house always stays in training. Returns ``(train, val)``.
    """
    houses = sorted(feature_counts)
    if len(houses) < 2:
        return houses, []
    order = np.random.default_rng(seed).permutation(houses).tolist()
    total = sum(feature_counts.values())
    val, covered = [], 0
    for h in order[:-1]:
        if covered >= fraction * total:
            break
        val.append(int(h))
        covered += feature_counts[h]
    train = sorted(set(houses) - set(val))
    return train, sorted(val)


@dataclass
class Fold:
    house: int | None
    seed: int
    ensemble: Ensemble | None = None
    train_houses: list = field(default_factory=list)
    val_houses: list = field(default_factory=list)
    omitted_pairs: list = field(default_factory=list)
    val_fallback_pairs: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    audit_ok: bool = True
    skipped: bool = False


def fit_dataset(train_ds: Dataset, cfg: ExperimentConfig, seed: int, fold: Fold) -> Fold:
    """Carve validation houses out of ``train_ds`` and train the pairwise ensemble.

    Fills ``fold`` in place (houses, warnings, ensemble) and returns it.
    """
    tag = f"house {fold.house}" if fold.house is not None else "training"
    feats = extract(train_ds, cfg.epsilon)
    n_bad = int(feats.degenerate.sum())
    if n_bad:
        fold.warnings.append(f"{tag}: {n_bad} degenerate training windows dropped")
        feats = feats.take(~feats.degenerate)
    counts = {h: int((feats.house == h).sum()) for h in train_ds.houses}
    train_h, val_h = split_validation_houses(counts, cfg.train_opts.validation_fraction, seed)
    fold.train_houses, fold.val_houses = train_h, val_h
    in_val = np.isin(feats.house, val_h)
    tr, va = feats.take(~in_val), feats.take(in_val)
    if not len(va):
        fold.warnings.append(f"{tag}: no validation houses; validating on training data")
        va = tr
    if fold.house is not None:
        fold.audit_ok = bool(
            fold.house not in train_h
            and fold.house not in val_h
            and not np.any(tr.house == fold.house)
            and not np.any(va.house == fold.house)
        )
    if len(np.unique(tr.y)) < 2:
        fold.skipped = True
        fold.warnings.append(f"{tag}: fewer than two classes in training data; fold skipped")
        return fold
    rep = EnsembleReport()
    fold.ensemble = ens_mod.train_ensemble(
        tr.X,
        tr.y,
        train_ds.label_space,
        cfg.train_opts.with_seed(seed),
        X_val=va.X,
        y_val=va.y,
        report=rep,
    )
    fold.omitted_pairs = [list(p) for p in rep.omitted_pairs]
    fold.val_fallback_pairs = [list(p) for p in rep.val_fallback_pairs]
    return fold


def train_fold(ds: Dataset, house: int, cfg: ExperimentConfig) -> Fold:
    seed = fold_seed(cfg.seed, house)
    fold = Fold(house, seed)
    train_ds, _ = partition_by_house(ds, house)
    if cfg.train_fraction < 1.0 and len(train_ds):
        train_ds = subsample_houses(train_ds, cfg.train_fraction, seed)
        if len(train_ds.houses) < 2:
            fold.skipped = True
            fold.warnings.append(
                f"house {house}: r={cfg.train_fraction} leaves {len(train_ds.houses)} "
                "training house(s); fold skipped"
            )
            return fold
    if not len(train_ds):
        fold.skipped = True
        fold.warnings.append(f"house {house}: no training houses; fold skipped")
        return fold
    return fit_dataset(train_ds, cfg, seed, fold)


def train_folds(ds: Dataset, cfg: ExperimentConfig) -> list[Fold]:
    houses = ds.houses
    if len(houses) < 2:
        raise ValueError("leave-house-out needs at least two houses")
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            folds = list(pool.map(lambda h: train_fold(ds, h, cfg), houses))
    else:
        folds = [train_fold(ds, h, cfg) for h in houses]
    for f in folds:
        for w in f.warnings:
            log.warning(w)
    return folds


@dataclass
class FoldScores:
    fold: Fold
    P: np.ndarray  # (n_windows, M, M)
    present: np.ndarray
    y: np.ndarray
    measurement: np.ndarray
    inventory: tuple[int, ...]
    warnings: list = field(default_factory=list)


def score_folds(ds: Dataset, folds: Sequence[Fold], cfg: ExperimentConfig, tau: int | None = None):
    if tau is None:
        tau = cfg.phase_shift_tau
    out = []
    label_index = {c: k for k, c in enumerate(ds.label_space)}
    for fold in folds:
        idx = [k for k, m in enumerate(ds.measurements) if m.house_id == fold.house]
        inventory = tuple(label_index[c] for c in ds.inventory(fold.house))
        warns: list = []
        feats = extract(ds, cfg.epsilon, tau=tau, warnings=warns, indices=idx)
        M = len(ds.label_space)
        if fold.ensemble is None:
            P, present = np.zeros((len(feats), M, M)), np.zeros((M, M), dtype=bool)
        else:
            P, present = ens_mod.score_batch(fold.ensemble, feats.X)
        out.append(FoldScores(fold, P, present, feats.y, feats.measurement, inventory, warns))
    return out


@dataclass
class CvReport:
    label_space: tuple
    voting: str
    scoring: str
    prior_knowledge: bool
    per_house: dict  # house -> ConfusionMatrix
    aggregate: ConfusionMatrix
    alpha: float | None
    kappa: float | None
    tie_count: int
    measurement_tie_count: int
    omitted_pairs: dict  # house -> list of pairs
    pairs_used: dict  # house -> number of networks consulted
    skipped: list
    warnings: list
    audit_ok: bool
    config: dict = field(default_factory=dict)

    def per_house_alpha(self) -> dict:
        return {h: (metrics.accuracy(cm) if cm.total else None) for h, cm in self.per_house.items()}

    def to_dict(self) -> dict:
        alphas = self.per_house_alpha()
        return {
            "config": self.config,
            "voting": self.voting,
            "scoring": self.scoring,
            "prior_knowledge": self.prior_knowledge,
            "label_space": list(self.label_space),
            "alpha": self.alpha,
            "kappa": self.kappa,
            "aggregate": metrics.summarize(self.aggregate) | {"counts": self.aggregate.counts.tolist()},
            "per_house": [
                {
                    "house": h,
                    "alpha": alphas[h],
                    "counts": cm.counts.tolist(),
                    "pairs_used": self.pairs_used.get(h),
                    "omitted_pairs": self.omitted_pairs.get(h, []),
                }
                for h, cm in sorted(self.per_house.items())
            ],
            "tie_count": self.tie_count,
            "measurement_tie_count": self.measurement_tie_count,
            "skipped_folds": self.skipped,
            "warnings": self.warnings,
            "leakage_audit_passed": self.audit_ok,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [
            f"voting={self.voting} scoring={self.scoring} prior_knowledge={self.prior_knowledge}",
            "",
            metrics.format_table(self.aggregate) if self.aggregate.total else "(no predictions)",
            "",
            f"{'house':>6} {'n':>5} {'alpha':>7} {'pairs':>6}",
        ]
        for h, a in sorted(self.per_house_alpha().items()):
            n = self.per_house[h].total
            lines.append(
                f"{h:>6} {n:>5} {'-' if a is None else f'{a:.3f}':>7} {self.pairs_used.get(h, 0):>6}"
            )
        lines.append("")
        lines.append(f"ties={self.tie_count} measurement_ties={self.measurement_tie_count}")
        if self.skipped:
            lines.append(f"skipped folds: {self.skipped}")
        lines.append(f"leakage audit: {'passed' if self.audit_ok else 'FAILED'}")
        return "\n".join(lines) + "\n"


def _measurement_votes(winners, measurement, M):
    """Majority over window decisions per measurement, ties to the first label."""
    ids = np.unique(measurement)
    labels = np.empty(ids.size, dtype=np.int64)
    ties = 0
    for n, k in enumerate(ids):
        counts = np.bincount(winners[measurement == k], minlength=M)
        labels[n] = int(np.argmax(counts))
        ties += int((counts == counts.max()).sum() > 1)
    return ids, labels, ties


def build_report(
    ds: Dataset,
    scored: Sequence[FoldScores],
    voting: str = WEIGHTED,
    prior_knowledge: bool = False,
    scoring: str = PER_MEASUREMENT,
    config: dict | None = None,
) -> CvReport:
    labels = ds.label_space
    M = len(labels)
    per_house, omitted, used = {}, {}, {}
    skipped, warnings = [], []
    ties = m_ties = 0
    audit = True
    for fs in scored:
        fold = fs.fold
        warnings.extend(fold.warnings + fs.warnings)
        audit &= fold.audit_ok
        if fold.skipped:
            skipped.append(fold.house)
            continue
        allowed = None
        present = fs.present
        if prior_knowledge:
            if len(fs.inventory) < 2:
                skipped.append(fold.house)
                warnings.append(f"house {fold.house}: fewer than two categories; prior-knowledge fold skipped")
                continue
            allowed = fs.inventory
        inside = np.zeros(M, dtype=bool)
        inside[list(allowed if allowed is not None else range(M))] = True
        used[fold.house] = int(np.triu(present & inside[:, None] & inside[None, :], 1).sum())
        omitted[fold.house] = [
            p for p in fold.omitted_pairs if inside[labels.index(p[0])] and inside[labels.index(p[1])]
        ]
        cm = ConfusionMatrix(labels)
        if len(fs.y):
            totals = ens_mod.vote_counts(fs.P, present, voting, allowed)
            winners, tied = ens_mod.decide(totals)
            ties += int(tied.sum())
            if scoring == PER_WINDOW:
                cm.accumulate_indices(fs.y, winners)
            else:
                ids, pred, t = _measurement_votes(winners, fs.measurement, M)
                m_ties += t
                truth = np.array([fs.y[fs.measurement == k][0] for k in ids])
                cm.accumulate_indices(truth, pred)
        per_house[fold.house] = cm
    aggregate = metrics.merge(list(per_house.values()), labels) if per_house else ConfusionMatrix(labels)
    return CvReport(
        labels,
        voting,
        scoring,
        prior_knowledge,
        per_house,
        aggregate,
        metrics.accuracy(aggregate) if aggregate.total else None,
        metrics.cohens_kappa(aggregate) if aggregate.total else None,
        ties,
        m_ties,
        omitted,
        used,
        sorted(skipped),
        warnings,
        audit,
        config or {},
    )


def leave_house_out(ds: Dataset, cfg: ExperimentConfig = ExperimentConfig()) -> CvReport:
    """One fold per house; see the module docstring."""
    folds = train_folds(ds, cfg)
    scored = score_folds(ds, folds, cfg)
    return build_report(ds, scored, cfg.voting, cfg.prior_knowledge, cfg.scoring, cfg.to_dict())


def run_with_prior_knowledge(ds: Dataset, cfg: ExperimentConfig = ExperimentConfig()) -> CvReport:
    """Leave-house-out with each fold's vote confined to the test house's categories."""
    return leave_house_out(ds, replace(cfg, prior_knowledge=True))


def study_training_size(
    ds: Dataset, cfg: ExperimentConfig, r_values: Sequence[float], reports: dict | None = None
) -> dict:
    bad = [r for r in r_values if not 0.0 < r <= 1.0]
    if bad:
        raise ValueError(f"training fractions outside (0, 1]: {bad}")
    out = {}
    for r in r_values:
        rep = leave_house_out(ds, replace(cfg, train_fraction=float(r)))
        out[r] = (rep.alpha, rep.kappa)
        if reports is not None:
            reports[r] = rep
    return out


def check_rates(ds: Dataset, rates: Sequence[float]) -> list[str]:
    """Reasons why each rejected target rate cannot be used (empty if all fine)."""
    problems = []
    for rate in rates:
        for fs, fg in sorted({(m.sample_rate_hz, m.grid_freq_hz) for m in ds.measurements}):
            if not rate < fs:
                problems.append(f"{rate:g} Hz: not below the native rate {fs:g} Hz")
                break
            try:
                period_length(rate, fg)
            except ValueError:
                problems.append(
                    f"{rate:g} Hz: {rate:g}/{fg:g} = {rate / fg:.4g} samples per period is not an integer"
                )
                break
    return problems


def decimate_dataset(ds: Dataset, rate: float) -> Dataset:
    problems = check_rates(ds, [rate])
    if problems:
        raise ValueError("; ".join(problems))
    plans = {}
    out = []
    for m in ds.measurements:
        if m.sample_rate_hz not in plans:
            plans[m.sample_rate_hz] = design_decimation(m.sample_rate_hz, rate)
        try:
            out.append(apply_decimation(m, plans[m.sample_rate_hz]))
        except RecordingTooShort as exc:
            raise RecordingTooShort(f"too short at {rate:g} Hz after filtering: {exc}") from None
    return ds.select(out)


def study_sampling_freq(
    ds: Dataset, cfg: ExperimentConfig, rates: Sequence[float], reports: dict | None = None
) -> dict:
    problems = check_rates(ds, rates)
    if problems:
        raise ValueError("unusable sampling rates:\n  " + "\n  ".join(problems))
    out = {}
    for rate in rates:
        rep = leave_house_out(decimate_dataset(ds, rate), replace(cfg, target_sample_rate_hz=float(rate)))
        out[rate] = (rep.alpha, rep.kappa)
        if reports is not None:
            reports[rate] = rep
    return out


def study_phase_shift(
    ds: Dataset, cfg: ExperimentConfig, taus: Sequence[int], reports: dict | None = None
) -> dict:
    """Train once per fold, then test on the single period starting at each ``tau``."""
    folds = train_folds(ds, cfg)
    out = {}
    for tau in taus:
        scored = score_folds(ds, folds, cfg, tau=int(tau))
        rep = build_report(
            ds, scored, cfg.voting, cfg.prior_knowledge, cfg.scoring,
            replace(cfg, phase_shift_tau=int(tau)).to_dict(),
        )
        out[tau] = (rep.alpha, rep.kappa)
        if reports is not None:
            reports[tau] = rep
    return out


def predict_measurements(
    ens: Ensemble, ds: Dataset, cfg: ExperimentConfig, tau: int | None = None
) -> list[tuple[int, str | None]]:
    """Label every measurement of ``ds`` by window voting plus per-measurement majority.

    Returns ``(measurement index, label)`` pairs; measurements without a
    usable window get ``None``.
    """
    if tuple(ds.label_space) != tuple(ens.label_space):
        ds = Dataset(ds.measurements, ens.label_space)
    feats = extract(ds, cfg.epsilon, tau=tau if tau is not None else cfg.phase_shift_tau)
    out = {k: None for k in range(len(ds))}
    if len(feats):
        P, present = ens_mod.score_batch(ens, feats.X)
        winners, _ = ens_mod.decide(ens_mod.vote_counts(P, present, cfg.voting))
        ids, labels, _ = _measurement_votes(winners, feats.measurement, len(ens.label_space))
        for k, lab in zip(ids, labels):
            out[int(k)] = ens.label_space[int(lab)]
    return sorted(out.items())


def sweep_csv(results: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x", "alpha", "kappa"])
    for x, (a, k) in results.items():
        writer.writerow([f"{x:g}", "" if a is None else repr(a), "" if k is None else repr(k)])
    return buf.getvalue()


def write_sweep_csv(results: dict, path) -> None:
    Path(path).write_text(sweep_csv(results))
