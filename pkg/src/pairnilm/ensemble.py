"""One-vs-one ensemble of binary networks and the two voting rules."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np

from . import mlp
from .mlp import TrainOptions

log = logging.getLogger(__name__)

WEIGHTED = "weighted"
MAJORITY = "majority"
VOTING_RULES = (WEIGHTED, MAJORITY)
ENSEMBLE_INDEX = "ensemble.json"


class EmptyClassError(ValueError):
    pass


def label_pairs(label_space: Sequence[str]) -> list[tuple[str, str]]:
    """Unordered pairs ``(a, b)`` with ``a`` before ``b`` in label-space order."""
    return list(combinations(label_space, 2))


def pair_seed(base_seed: int, pair_index: int) -> int:
    return int(base_seed) ^ int(pair_index)


@dataclass(frozen=True)
class Ensemble:
    label_space: tuple[str, ...]
    models: dict  # (a, b) -> Network, a precedes b in label_space

    def __post_init__(self):
        labels = tuple(self.label_space)
        object.__setattr__(self, "label_space", labels)
        order = {c: k for k, c in enumerate(labels)}
        dims = set()
        for (a, b), net in self.models.items():
            if a not in order or b not in order or order[a] >= order[b]:
                raise ValueError(f"pair {(a, b)} is not ordered within the label space")
            dims.add(net.input_dim)
        if len(dims) > 1:
            raise ValueError(f"networks disagree on input_dim: {sorted(dims)}")

    @property
    def input_dim(self) -> int | None:
        for net in self.models.values():
            return net.input_dim
        return None

    @property
    def omitted_pairs(self) -> list[tuple[str, str]]:
        return [p for p in label_pairs(self.label_space) if p not in self.models]

    def __len__(self):
        return len(self.models)


def pairwise_subset(X, y, label_a: int, label_b: int):
    """Rows of class ``label_a`` or ``label_b`` with targets [1,0] / [0,1].

    ``y`` holds integer class indices. Returns ``(X_sub, T_sub, mask)``.
    """
    if label_a == label_b:
        raise ValueError("a pair needs two distinct classes")
    y = np.asarray(y)
    in_a, in_b = y == label_a, y == label_b
    if not in_a.any() or not in_b.any():
        missing = label_a if not in_a.any() else label_b
        raise EmptyClassError(f"class index {missing} has no samples")
    mask = in_a | in_b
    T = np.zeros((int(mask.sum()), 2))
    T[in_a[mask], 0] = 1.0
    T[in_b[mask], 1] = 1.0
    return np.asarray(X)[mask], T, mask


@dataclass
class EnsembleReport:
    """What happened while training an ensemble."""

    omitted_pairs: list = field(default_factory=list)
    val_fallback_pairs: list = field(default_factory=list)


def train_ensemble(
    X,
    y,
    label_space: Sequence[str],
    opts: TrainOptions = TrainOptions(),
    X_val=None,
    y_val=None,
    jobs: int = 1,
    report: EnsembleReport | None = None,
) -> Ensemble:
    """Train one network per unordered label pair.

    ``y``/``y_val`` are integer indices into ``label_space``. Pairs lacking
    training samples for either class are omitted. When the validation set
    lacks one of a pair's classes, that pair validates on its own training
    subset instead.
    """
    labels = tuple(label_space)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X_val is None:
        X_val, y_val = X, y
    X_val = np.asarray(X_val, dtype=np.float64)
    y_val = np.asarray(y_val)
    report = report if report is not None else EnsembleReport()

    def fit(job):
        k, (i, j) = job
        try:
            Xp, Tp, _ = pairwise_subset(X, y, i, j)
        except EmptyClassError:
            return k, None, "omitted"
        note = None
        try:
            Xv, Tv, _ = pairwise_subset(X_val, y_val, i, j)
        except EmptyClassError:
            Xv, Tv, note = Xp, Tp, "val_fallback"
        seed = pair_seed(opts.seed, k)
        net = mlp.init_network(X.shape[1], opts.hidden_dim, seed)
        return k, mlp.train(net, (Xp, Tp), (Xv, Tv), opts.with_seed(seed)), note

    jobs_list = list(enumerate(combinations(range(len(labels)), 2)))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(fit, jobs_list))
    else:
        results = [fit(job) for job in jobs_list]

    models = {}
    for k, net, note in results:
        i, j = jobs_list[k][1]
        pair = (labels[i], labels[j])
        if net is None:
            report.omitted_pairs.append(pair)
            log.warning("pair %s omitted: a class has no training samples", pair)
            continue
        if note == "val_fallback":
            report.val_fallback_pairs.append(pair)
        models[pair] = net
    return Ensemble(labels, models)


def score_batch(ens: Ensemble, X) -> tuple[np.ndarray, np.ndarray]:
    """Score tables for every row of ``X``.

    Returns ``(P, present)``: ``P[n, i, j]`` is the score of label ``i``
    over label ``j``; ``present[i, j]`` marks pairs with a trained network.
    Omitted pairs and the diagonal hold zeros.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    M = len(ens.label_space)
    index = {c: k for k, c in enumerate(ens.label_space)}
    P = np.zeros((X.shape[0], M, M))
    for (a, b), net in ens.models.items():
        i, j = index[a], index[b]
        p = mlp.first_score(net, X)
        P[:, i, j] = p
        P[:, j, i] = 1.0 - p
    return P, presence(ens)


def score(ens: Ensemble, x) -> np.ndarray:
    """Score table ``P[i, j]`` for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("score takes one feature vector; use score_batch for many")
    if ens.input_dim is not None and x.size != ens.input_dim:
        raise ValueError(f"expected {ens.input_dim} inputs, got {x.size}")
    return score_batch(ens, x)[0][0]


def vote_counts(P, present=None, rule: str = WEIGHTED, allowed=None) -> np.ndarray:
    """Per-label vote totals for score tables ``P`` of shape ``(..., M, M)``.

    ``allowed`` optionally restricts the vote to a subset of label indices;
    excluded labels get ``-inf`` so they can never win.
    """
    P = np.asarray(P, dtype=np.float64)
    M = P.shape[-1]
    if present is None:
        present = ~np.eye(M, dtype=bool)
    keep = np.asarray(present, dtype=bool).copy()
    np.fill_diagonal(keep, False)
    if allowed is not None:
        inside = np.zeros(M, dtype=bool)
        inside[list(allowed)] = True
        keep &= inside[:, None] & inside[None, :]
    if rule == WEIGHTED:
        contrib = np.where(keep, P, 0.0)
    elif rule == MAJORITY:
        wins = P > np.swapaxes(P, -1, -2)
        contrib = np.where(keep, wins, False).astype(np.float64)
    else:
        raise ValueError(f"unknown voting rule {rule!r}")
    totals = contrib.sum(axis=-1)
    if allowed is not None:
        totals = np.where(inside, totals, -np.inf)
    return totals


def decide(totals) -> tuple[np.ndarray, np.ndarray]:
    """Argmax with first-label tie-breaking; also flags ties at the top."""
    totals = np.asarray(totals)
    winner = np.argmax(totals, axis=-1)
    best = np.take_along_axis(totals, winner[..., None], axis=-1)
    tied = (totals == best).sum(axis=-1) > 1
    return winner, tied


@dataclass
class VoteDiagnostics:
    ties: int = 0


def _predict(ens, x, rule, diagnostics):
    winner, tied = decide(vote_counts(score(ens, x), presence(ens), rule))
    if diagnostics is not None and bool(tied):
        diagnostics.ties += 1
    return ens.label_space[int(winner)]


def presence(ens: Ensemble) -> np.ndarray:
    """Symmetric boolean mask of label pairs that have a network."""
    M = len(ens.label_space)
    index = {c: k for k, c in enumerate(ens.label_space)}
    present = np.zeros((M, M), dtype=bool)
    for a, b in ens.models:
        present[index[a], index[b]] = present[index[b], index[a]] = True
    return present


def predict_weighted(ens: Ensemble, x, diagnostics: VoteDiagnostics | None = None) -> str:
    """Label with the largest sum of pairwise scores."""
    return _predict(ens, x, WEIGHTED, diagnostics)


def predict_majority(ens: Ensemble, x, diagnostics: VoteDiagnostics | None = None) -> str:
    """Label with the most pairwise wins (strictly larger score)."""
    return _predict(ens, x, MAJORITY, diagnostics)


def restrict_labels(ens: Ensemble, allowed: Sequence[str]) -> Ensemble:
    """Sub-ensemble over ``allowed`` labels; keeps the original label order."""
    allowed_set = set(allowed)
    unknown = allowed_set - set(ens.label_space)
    if unknown:
        raise ValueError(f"labels not in the ensemble: {sorted(unknown)}")
    if len(allowed_set) < 2:
        raise ValueError("a restricted ensemble needs at least two labels")
    labels = tuple(c for c in ens.label_space if c in allowed_set)
    models = {p: net for p, net in ens.models.items() if p[0] in allowed_set and p[1] in allowed_set}
    return Ensemble(labels, models)


def save_ensemble(ens: Ensemble, directory, metadata: dict | None = None) -> None:
    """Per-pair model files plus an ``ensemble.json`` index."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    pairs = []
    index = {c: k for k, c in enumerate(ens.label_space)}
    for (a, b), net in sorted(ens.models.items(), key=lambda kv: (index[kv[0][0]], index[kv[0][1]])):
        name = f"pair_{index[a]:02d}_{index[b]:02d}.bin"
        mlp.save_network(net, root / name, {"pair": [a, b]})
        pairs.append({"a": a, "b": b, "file": name})
    manifest = {"label_space": list(ens.label_space), "pairs": pairs, **(metadata or {})}
    (root / ENSEMBLE_INDEX).write_text(json.dumps(manifest, indent=1) + "\n")


def load_ensemble(directory) -> Ensemble:
    root = Path(directory)
    manifest = json.loads((root / ENSEMBLE_INDEX).read_text())
    models = {(p["a"], p["b"]): mlp.load_network(root / p["file"]) for p in manifest["pairs"]}
    return Ensemble(tuple(manifest["label_space"]), models)
