"""Accuracy@k, final-city evaluation, leaderboard and user-embedding export."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .dataset import MASK_TOKEN, PAD_TOKEN, Trip, TripDataset
from .errors import EmptyRanking, LeakageError, TooFewPoints


@dataclass(frozen=True)
class TripQuery:
    """What a recommender may see: the trip without its final reservation."""

    trip_id: str
    user_id: str
    visible: Trip


class Recommender(Protocol):
    name: str

    def recommend(self, queries: Sequence[TripQuery], k: int = 4) -> list[list[str]]: ...


def accuracy_at_k(ranked: Sequence, truth, k: int = 4) -> int:
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(ranked) == 0:
        raise EmptyRanking("ranking is empty")
    return int(truth in list(ranked)[:k])


@dataclass
class TripRecord:
    trip_id: str
    top: list[str]
    truth: str
    hit: int


@dataclass
class MetricsReport:
    model_name: str
    acc_at_4: float
    n_evaluated: int
    records: list[TripRecord] = field(default_factory=list)
    config_hash: str = ""
    seed: int | None = None
    k: int = 4

    def summary(self) -> dict:
        return {"model_name": self.model_name, "acc_at_4": self.acc_at_4, "n_evaluated": self.n_evaluated,
                "config_hash": self.config_hash, "seed": self.seed, "k": self.k}

    def write(self, records_path: str | Path, summary_path: str | Path | None = None) -> None:
        with open(records_path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(asdict(r)) + "\n")
        if summary_path is not None:
            Path(summary_path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def _check_leak(windows: Sequence[Sequence[str]], queries: Sequence[TripQuery], truths: Sequence[str]) -> None:
    for w, q, truth in zip(windows, queries, truths):
        if not w:
            continue
        visible_last = q.visible.cities[-1] if len(q.visible) else None
        if w[-1] == truth and visible_last != truth:
            raise LeakageError(f"input window for trip {q.trip_id} ends with the hidden final city")


def evaluate(
    recommender: Recommender,
    test: TripDataset | Sequence[Trip],
    k: int = 4,
    model_name: str | None = None,
    config_hash: str = "",
    seed: int | None = None,
) -> MetricsReport:
    """Hide each trip's final city and score the recommender's top-k on it.

    Recommenders exposing ``input_windows(queries)`` are checked for
    leakage before scoring.
    """
    trips = test.trips if isinstance(test, TripDataset) else list(test)
    eligible = sorted((t for t in trips if len(t) >= 2), key=lambda t: t.trip_id)
    queries = [TripQuery(t.trip_id, t.user_id, t.head(len(t) - 1)) for t in eligible]
    truths = [t.cities[-1] for t in eligible]
    if hasattr(recommender, "input_windows"):
        _check_leak(recommender.input_windows(queries), queries, truths)
    lists = recommender.recommend(queries, k) if queries else []
    records = []
    for q, truth, ranked in zip(queries, truths, lists):
        ranked = list(ranked)
        if len(set(ranked)) != len(ranked):
            raise ValueError(f"duplicate suggestions for trip {q.trip_id}")
        if PAD_TOKEN in ranked[:k] or MASK_TOKEN in ranked[:k]:
            raise ValueError(f"reserved token suggested for trip {q.trip_id}")
        records.append(TripRecord(q.trip_id, ranked[:k], truth, accuracy_at_k(ranked, truth, k)))
    acc = float(np.mean([r.hit for r in records])) if records else 0.0
    return MetricsReport(model_name or getattr(recommender, "name", type(recommender).__name__),
                         acc, len(records), records, config_hash, seed, k)


def leaderboard(reports: Sequence[MetricsReport]) -> tuple[str, list[dict]]:
    """Rows by accuracy descending, name ascending on ties; (text table, records)."""
    if not reports:
        raise ValueError("need at least one report")
    rows = sorted(reports, key=lambda r: (-r.acc_at_4, r.model_name))
    records = [{"rank": i + 1, "model_name": r.model_name, "acc_at_4": r.acc_at_4, "n_evaluated": r.n_evaluated}
               for i, r in enumerate(rows)]
    name_w = max(len("model"), *(len(r.model_name) for r in rows))
    header = f"{'rank':>4}  {'model':<{name_w}}  {'acc@4':>7}  {'n':>7}"
    lines = [header, "-" * len(header)]
    for rec in records:
        lines.append(f"{rec['rank']:>4}  {rec['model_name']:<{name_w}}  {rec['acc_at_4']:>7.4f}  {rec['n_evaluated']:>7d}")
    return "\n".join(lines) + "\n", records


def tsne_coordinates(vectors, seed: int = 0, perplexity: float = 30.0) -> np.ndarray:
    from sklearn.manifold import TSNE

    x = np.asarray(vectors, dtype=np.float64)
    n = len(x)
    perplexity = min(perplexity, max((n - 1) / 3.0, 1.0))
    return TSNE(n_components=2, perplexity=perplexity, random_state=seed, init="pca").fit_transform(x)


def export_embedding_plot(user_vectors, labels, out_path: str | Path, seed: int = 0,
                          perplexity: float = 30.0) -> np.ndarray:
    """Project user vectors to 2-D with t-SNE, color by month, write image and coordinates.

    Coordinates go to ``<out_path stem>.coords.csv`` next to the image.
    """
    x = np.asarray(user_vectors, dtype=np.float64)
    if len(x) < 10:
        raise TooFewPoints(f"need at least 10 points, got {len(x)}")
    if not np.isfinite(x).all():
        raise ValueError("user vectors must be finite")
    coords = tsne_coordinates(x, seed, perplexity)
    out_path = Path(out_path)
    coords_path = out_path.with_suffix(".coords.csv")
    with open(coords_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "month"])
        for (a, b), m in zip(coords, labels):
            w.writerow([repr(float(a)), repr(float(b)), int(m)])

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 5))
    sc = ax.scatter(coords[:, 0], coords[:, 1], c=np.asarray(labels), cmap="twilight", s=6, vmin=1, vmax=12)
    fig.colorbar(sc, ax=ax, label="most frequent month")
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return coords
