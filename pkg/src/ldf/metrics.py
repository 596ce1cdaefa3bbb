"""Episode-level Macro-F1 / AUC, run aggregation, and the paired t-test."""

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .model import predict


@dataclass
class EpisodeScores:
    scores: np.ndarray  # (M, N)
    gold: np.ndarray    # (M, N) 0/1
    n_way: int = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.gold = np.asarray(self.gold, dtype=np.int64)
        if self.scores.shape != self.gold.shape:
            raise ValueError(f"scores {self.scores.shape} vs gold {self.gold.shape}")
        if self.n_way is None:
            self.n_way = self.scores.shape[1]


def f1_per_class(pred, gold):
    """F1 per column; a class with no positives predicted or present scores 1."""
    pred = np.asarray(pred, dtype=bool)
    gold = np.asarray(gold, dtype=bool)
    tp = (pred & gold).sum(axis=0)
    fp = (pred & ~gold).sum(axis=0)
    fn = (~pred & gold).sum(axis=0)
    denom = 2 * tp + fp + fn
    return np.where(denom == 0, 1.0, 2 * tp / np.maximum(denom, 1))


def macro_f1(ep, threshold=None):
    pred = predict(ep.scores, ep.n_way, threshold)
    return float(f1_per_class(pred, ep.gold).mean())


def auc(ep):
    """ROC-AUC over all (score, label) pairs of the episode, via midranks.

    Returns NaN (with a warning) when the pool lacks positives or negatives.
    """
    s = ep.scores.ravel()
    y = ep.gold.ravel().astype(bool)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        warnings.warn("AUC undefined for an episode with only one label value; skipped",
                      RuntimeWarning, stacklevel=2)
        return math.nan
    ranks = stats.rankdata(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_pairwise(ep):
    """Brute-force AUC: fraction of positive/negative pairs ordered correctly (ties count 1/2)."""
    s = ep.scores.ravel()
    y = ep.gold.ravel().astype(bool)
    pos, neg = s[y], s[~y]
    wins = 0.0
    for p in pos:
        for n in neg:
            wins += 1.0 if p > n else 0.5 if p == n else 0.0
    return wins / (len(pos) * len(neg))


@dataclass
class TTest:
    t: float
    p: float
    df: int
    mean_diff: float
    degenerate: bool = False


def paired_t_test(a, b):
    """Two-sided paired t-test of ``a`` against ``b``.

    Zero-variance differences are reported as degenerate: t = +-inf and p = 0
    if the mean difference is nonzero, else t = 0 and p = 1.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("paired_t_test needs two equal-length 1-D samples of size >= 2")
    d = a - b
    n = d.size
    md = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if md == 0.0:
            return TTest(0.0, 1.0, n - 1, md, True)
        return TTest(math.copysign(math.inf, md), 0.0, n - 1, md, True)
    t = md / (sd / math.sqrt(n))
    p = float(2.0 * stats.t.sf(abs(t), n - 1))
    return TTest(t, p, n - 1, md)


@dataclass
class RunSummary:
    values: list
    mean: float = field(init=False)
    std: float = field(init=False)

    def __post_init__(self):
        if not self.values:
            raise ValueError("RunSummary needs at least one value")
        v = np.asarray(self.values, dtype=np.float64)
        self.mean = float(v.mean())
        self.std = float(v.std(ddof=1)) if v.size > 1 else 0.0

    def __str__(self):
        return f"{100 * self.mean:.2f}±{100 * self.std:.2f}"


def aggregate_runs(values):
    """Mean and sample (n-1) standard deviation of per-run metric values."""
    return RunSummary(list(map(float, values)))


def episode_metrics(episodes, threshold=None):
    """Mean episode-level Macro-F1 and AUC; AUC-degenerate episodes are skipped."""
    f1s = [macro_f1(ep, threshold) for ep in episodes]
    aucs = [auc(ep) for ep in episodes]
    valid = [x for x in aucs if not math.isnan(x)]
    return {
        "f1": float(np.mean(f1s)) if f1s else math.nan,
        "auc": float(np.mean(valid)) if valid else math.nan,
        "episodes": len(f1s),
        "auc_skipped": len(aucs) - len(valid),
    }


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def build_report(rows):
    """``rows``: list of dicts with ``setting``, ``f1`` and ``auc`` per-run value lists."""
    out = []
    for row in rows:
        f1 = aggregate_runs(row["f1"])
        au = aggregate_runs(row["auc"])
        out.append({"setting": row["setting"], "runs": len(row["f1"]),
                    "f1": asdict(f1), "auc": asdict(au)})
    return out


def format_report(report):
    """Aligned text table, one row per setting, scores in percent."""
    header = ("Setting", "Runs", "F1", "AUC")
    body = [(r["setting"], str(r["runs"]),
             f"{100 * r['f1']['mean']:.2f}±{100 * r['f1']['std']:.2f}",
             f"{100 * r['auc']['mean']:.2f}±{100 * r['auc']['std']:.2f}") for r in report]
    widths = [max(len(x[i]) for x in [header] + body) for i in range(4)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines)


def report_json(report):
    return json.dumps(report, indent=2)
