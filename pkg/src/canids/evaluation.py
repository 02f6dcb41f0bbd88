"""Detection metrics over scored streams with simulator ground truth."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .scorer import AnomalyScore


class OneClassOnly(ValueError):
    pass


@dataclass(frozen=True)
class EvalReport:
    auc: float
    median_p_attack: float
    median_p_ambient: float
    min_p_attack: float
    min_p_ambient: float
    tpr_at_fpr1pct: float
    frac_attack_p_below_1e6: float
    n_attack: int
    n_ambient: int

    def to_kv(self) -> str:
        return "".join(f"{k} = {v!r}\n" for k, v in asdict(self).items())

    def to_text(self) -> str:
        return "\n".join([
            f"scores: {self.n_attack} attack-target, {self.n_ambient} ambient-target",
            f"AUC (score = 1 - p):          {self.auc:.6f}",
            f"median p, attack targets:     {self.median_p_attack:.3e}",
            f"median p, ambient targets:    {self.median_p_ambient:.3e}",
            f"min p, attack / ambient:      {self.min_p_attack:.3e} / {self.min_p_ambient:.3e}",
            f"TPR at ambient FPR <= 1%:     {self.tpr_at_fpr1pct:.4f}",
            f"attack targets with p < 1e-6: {self.frac_attack_p_below_1e6:.4f}",
        ]) + "\n"


def label_scores(scores: Sequence[AnomalyScore]) -> tuple[list[AnomalyScore], list[AnomalyScore]]:
    attack = [s for s in scores if s.target_injected]
    ambient = [s for s in scores if not s.target_injected]
    return attack, ambient


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ROC points from a sweep over every distinct score (higher = more anomalous).

    Returns ``(fpr, tpr, thresholds)`` starting at (0, 0); tied scores move
    as one step, which is what makes the trapezoid area tie-aware.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly(f"need both classes, got {n_pos} positive / {n_neg} negative")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(y)[last_of_group]
    fp = np.cumsum(~y)[last_of_group]
    fpr = np.r_[0.0, fp / n_neg]
    tpr = np.r_[0.0, tp / n_pos]
    thresholds = np.r_[np.inf, s[last_of_group]]
    return fpr, tpr, thresholds


def roc_auc(scores, labels) -> tuple[tuple[np.ndarray, np.ndarray], float]:
    fpr, tpr, _ = roc_curve(scores, labels)
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return (fpr, tpr), auc


def tpr_at_fpr(scores, labels, max_fpr: float = 0.01) -> float:
    fpr, tpr, _ = roc_curve(scores, labels)
    return float(tpr[fpr <= max_fpr].max())


def summarize(scores: Sequence[AnomalyScore]) -> EvalReport:
    attack, ambient = label_scores(scores)
    if not attack or not ambient:
        raise OneClassOnly(f"need both classes, got {len(attack)} attack / {len(ambient)} ambient")
    p = np.array([s.p for s in scores])
    labels = np.array([s.target_injected for s in scores])
    # rank on -p: same order as 1 - p but without losing tiny p-values to rounding
    _, auc = roc_auc(-p, labels)
    pa, pn = p[labels], p[~labels]
    return EvalReport(
        auc=auc,
        median_p_attack=float(np.median(pa)),
        median_p_ambient=float(np.median(pn)),
        min_p_attack=float(pa.min()),
        min_p_ambient=float(pn.min()),
        tpr_at_fpr1pct=tpr_at_fpr(-p, labels, 0.01),
        frac_attack_p_below_1e6=float(np.mean(pa < 1e-6)),
        n_attack=len(pa),
        n_ambient=len(pn),
    )


def attach_truth(scores: Sequence[AnomalyScore], truth: Sequence[tuple[float, int, bool]]) -> list[AnomalyScore]:
    """Relabel scores from a ground-truth sidecar listing every frame of the log.

    A stream's scores cover exactly the last ``len(scores)`` frames of its
    AID, so each AID's truth rows are aligned from the tail; timestamps must
    agree to the microsecond.  Tail alignment keeps ambient and injected
    frames that share a timestamp apart.
    """
    by_aid: dict[int, list[tuple[float, bool]]] = defaultdict(list)
    for t, aid, inj in truth:
        by_aid[aid].append((t, inj))
    scored: dict[int, list[int]] = defaultdict(list)
    for i, s in enumerate(scores):
        scored[s.aid].append(i)
    out: list[AnomalyScore | None] = [None] * len(scores)
    for aid, idx in scored.items():
        rows = by_aid.get(aid, [])
        if len(rows) < len(idx):
            raise KeyError(f"truth has {len(rows)} rows for aid {aid:03X}, scores need {len(idx)}")
        for i, (t, inj) in zip(idx, rows[len(rows) - len(idx):]):
            s = scores[i]
            if round(t * 1e6) != round(s.timestamp * 1e6):
                raise KeyError(f"truth/score misaligned for aid {aid:03X}: {t:.6f} vs {s.timestamp:.6f}")
            out[i] = AnomalyScore(s.timestamp, s.aid, s.e, s.z, s.p, inj)
    return out
