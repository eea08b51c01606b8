"""Phase-recognition metrics and report rendering.

Video-level accuracy is the unweighted mean over per-video frame accuracy.
Phase-level precision/recall/Jaccard pool TP/FP/FN over all videos before
dividing; macro means skip phases whose denominator is zero and always
report which phases were excluded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .frames import N_PHASES


def round1(x: float) -> float:
    """Round half up to one decimal (report presentation rule)."""
    return math.floor(x * 10.0 + 0.5) / 10.0


@dataclass(frozen=True)
class PhaseCounts:
    tp: int
    fp: int
    fn: int


@dataclass
class MetricsReport:
    """All metrics of one (model, dataset) evaluation, percentages in [0, 100]."""

    video_accuracies: list[float]
    mean_accuracy: float
    counts: list[PhaseCounts]
    precision: list[float | None]
    recall: list[float | None]
    jaccard: list[float | None]
    macro_precision: float | None
    macro_recall: float | None
    macro_jaccard: float | None
    excluded: dict[str, list[int]] = field(default_factory=dict)

    @property
    def n_phases_in_truth(self) -> int:
        return sum(1 for c in self.counts if c.tp + c.fn > 0)

    @property
    def single_phase(self) -> bool:
        return self.n_phases_in_truth == 1


def video_accuracy(preds: np.ndarray, gts: np.ndarray,
                   video_lengths: list[int]) -> tuple[list[float], float]:
    """Per-video percent of correctly recognized frames plus their unweighted mean."""
    preds = np.asarray(preds)
    gts = np.asarray(gts)
    if preds.shape != gts.shape:
        raise ValueError(f"preds length {preds.shape} != gts length {gts.shape}")
    if sum(video_lengths) != len(preds):
        raise ValueError(f"video lengths sum to {sum(video_lengths)}, have {len(preds)} frames")
    accs = []
    off = 0
    for n in video_lengths:
        if n < 1:
            raise ValueError("empty video in boundaries")
        correct = int((preds[off:off + n] == gts[off:off + n]).sum())
        accs.append(100.0 * correct / n)
        off += n
    return accs, float(np.mean(accs))


def phase_prf(preds: np.ndarray, gts: np.ndarray) -> tuple[
        list[PhaseCounts], list[float | None], list[float | None], list[float | None]]:
    """Pooled per-phase counts and precision/recall/Jaccard (None when undefined)."""
    preds = np.asarray(preds)
    gts = np.asarray(gts)
    if preds.shape != gts.shape:
        raise ValueError("preds and gts must have equal length")
    if len(preds) and (preds.min() < 0 or preds.max() >= N_PHASES
                       or gts.min() < 0 or gts.max() >= N_PHASES):
        raise ValueError(f"labels must lie in 0..{N_PHASES - 1}")
    counts, precision, recall, jaccard = [], [], [], []
    for p in range(N_PHASES):
        tp = int(((preds == p) & (gts == p)).sum())
        fp = int(((preds == p) & (gts != p)).sum())
        fn = int(((preds != p) & (gts == p)).sum())
        counts.append(PhaseCounts(tp, fp, fn))
        precision.append(100.0 * tp / (tp + fp) if tp + fp > 0 else None)
        recall.append(100.0 * tp / (tp + fn) if tp + fn > 0 else None)
        jaccard.append(100.0 * tp / (tp + fp + fn) if tp + fp + fn > 0 else None)
    return counts, precision, recall, jaccard


def _macro(values: list[float | None]) -> tuple[float | None, list[int]]:
    defined = [v for v in values if v is not None]
    excluded = [i for i, v in enumerate(values) if v is None]
    return (float(np.mean(defined)) if defined else None), excluded


def compute_metrics(preds_per_video: list[np.ndarray],
                    gts_per_video: list[np.ndarray]) -> MetricsReport:
    """Full report over a dataset: inputs are per-video label arrays."""
    if len(preds_per_video) != len(gts_per_video):
        raise ValueError("need one prediction array per video")
    lengths = [len(g) for g in gts_per_video]
    preds = np.concatenate(preds_per_video) if preds_per_video else np.array([], dtype=int)
    gts = np.concatenate(gts_per_video) if gts_per_video else np.array([], dtype=int)
    accs, mean_acc = video_accuracy(preds, gts, lengths)
    counts, precision, recall, jaccard = phase_prf(preds, gts)
    macro_p, excl_p = _macro(precision)
    macro_r, excl_r = _macro(recall)
    macro_j, excl_j = _macro(jaccard)
    return MetricsReport(
        video_accuracies=accs, mean_accuracy=mean_acc, counts=counts,
        precision=precision, recall=recall, jaccard=jaccard,
        macro_precision=macro_p, macro_recall=macro_r, macro_jaccard=macro_j,
        excluded={"precision": excl_p, "recall": excl_r, "jaccard": excl_j})


# ---------------------------------------------------------------------------
# report rendering


def _fmt(v: float | None) -> str:
    return "-" if v is None else f"{round1(v):.1f}"


def _fmt_excluded(excluded: dict[str, list[int]]) -> str:
    parts = []
    for key, short in (("precision", "prec"), ("recall", "rec"), ("jaccard", "jac")):
        phases = excluded.get(key, [])
        if phases:
            parts.append(f"{short}:{','.join(str(p) for p in phases)}")
    return ";".join(parts) if parts else "-"


@dataclass(frozen=True)
class ReportRow:
    """One (variant, dataset) cell of the robustness table."""

    variant: str
    dataset: str
    accuracy: float
    precision: float | None
    recall: float | None
    jaccard: float | None
    excluded: dict[str, list[int]] = field(default_factory=dict)
    single_phase: bool = False

    @classmethod
    def from_report(cls, variant: str, dataset: str, rep: MetricsReport) -> "ReportRow":
        return cls(variant=variant, dataset=dataset, accuracy=rep.mean_accuracy,
                   precision=rep.macro_precision, recall=rep.macro_recall,
                   jaccard=rep.macro_jaccard, excluded=rep.excluded,
                   single_phase=rep.single_phase)


TSV_HEADER = "variant\tdataset\tacc\tprec\trec\tjac\texcluded_phases"


def rows_to_tsv(rows: list[ReportRow]) -> str:
    """Machine-readable rows; single-phase datasets report accuracy and recall only."""
    lines = [TSV_HEADER]
    for r in rows:
        prec = None if r.single_phase else r.precision
        jac = None if r.single_phase else r.jaccard
        lines.append("\t".join([r.variant, r.dataset, _fmt(r.accuracy), _fmt(prec),
                                _fmt(r.recall), _fmt(jac), _fmt_excluded(r.excluded)]))
    return "\n".join(lines) + "\n"


def rows_to_table(rows: list[ReportRow]) -> str:
    """Aligned text table: one row per variant, Acc/Prec/Rec/Jac per dataset
    (Acc and Rec only where the ground truth holds a single phase)."""
    datasets: list[str] = []
    for r in rows:
        if r.dataset not in datasets:
            datasets.append(r.dataset)
    variants: list[str] = []
    for r in rows:
        if r.variant not in variants:
            variants.append(r.variant)
    cell = {(r.variant, r.dataset): r for r in rows}
    single = {d: all(cell[v, d].single_phase for v in variants if (v, d) in cell)
              for d in datasets}
    sub_cols = {d: ("Acc", "Rec") if single[d] else ("Acc", "Prec", "Rec", "Jac")
                for d in datasets}

    header1 = ["method"]
    header2 = [""]
    for d in datasets:
        cols = sub_cols[d]
        header1 += [d] + [""] * (len(cols) - 1)
        header2 += list(cols)
    body = []
    for v in variants:
        row = [v]
        for d in datasets:
            r = cell.get((v, d))
            if r is None:
                row += ["-"] * len(sub_cols[d])
                continue
            values = {"Acc": r.accuracy, "Prec": r.precision, "Rec": r.recall, "Jac": r.jaccard}
            row += [_fmt(values[c]) for c in sub_cols[d]]
        body.append(row)

    table = [header1, header2] + body
    widths = [max(len(row[i]) for row in table) for i in range(len(header2))]
    out = []
    for row in table:
        out.append("  ".join(s.ljust(w) for s, w in zip(row, widths)).rstrip())
    return "\n".join(out) + "\n"
