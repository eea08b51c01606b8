import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dtspr.metrics import (
    MetricsReport,
    PhaseCounts,
    ReportRow,
    compute_metrics,
    phase_prf,
    round1,
    rows_to_table,
    rows_to_tsv,
    video_accuracy,
)


# ---------------------------------------------------------------------------
# brute-force oracles (independent reimplementation)


def brute_counts(preds, gts):
    tp = [0] * 7
    fp = [0] * 7
    fn = [0] * 7
    for p, g in zip(preds, gts):
        if p == g:
            tp[p] += 1
        else:
            fp[p] += 1
            fn[g] += 1
    return tp, fp, fn


def brute_video_acc(preds, gts, lengths):
    accs = []
    off = 0
    for n in lengths:
        c = 0
        for i in range(off, off + n):
            if preds[i] == gts[i]:
                c += 1
        accs.append(100.0 * c / n)
        off += n
    return accs, sum(accs) / len(accs)


# ---------------------------------------------------------------------------
# video accuracy


def test_accuracy_perfect():
    accs, mean = video_accuracy(np.array([0, 1, 2]), np.array([0, 1, 2]), [3])
    assert accs == [100.0] and mean == 100.0


def test_accuracy_unweighted_mean():
    preds = np.array([0] * 10 + [1, 0])
    gts = np.array([0] * 10 + [1, 1])
    accs, mean = video_accuracy(preds, gts, [10, 2])
    assert accs == [100.0, 50.0]
    assert mean == 75.0


def test_accuracy_random_1000_matches_bruteforce():
    rng = np.random.default_rng(0)
    preds = rng.integers(0, 7, 1000)
    gts = rng.integers(0, 7, 1000)
    lengths = [300, 450, 250]
    got_accs, got_mean = video_accuracy(preds, gts, lengths)
    want_accs, want_mean = brute_video_acc(list(preds), list(gts), lengths)
    assert got_accs == want_accs
    assert got_mean == want_mean


def test_accuracy_length_mismatch():
    with pytest.raises(ValueError):
        video_accuracy(np.array([0, 1]), np.array([0]), [2])
    with pytest.raises(ValueError):
        video_accuracy(np.array([0, 1]), np.array([0, 1]), [3])


# ---------------------------------------------------------------------------
# phase precision/recall/jaccard


def test_prf_perfect_all_phases():
    labels = np.arange(7).repeat(3)
    counts, precision, recall, jaccard = phase_prf(labels, labels)
    assert all(p == 100.0 for p in precision)
    assert all(r == 100.0 for r in recall)
    assert all(j == 100.0 for j in jaccard)


def test_prf_worked_example():
    # preds [1,1,2,2] vs gts [1,2,2,2]
    preds = np.array([1, 1, 2, 2])
    gts = np.array([1, 2, 2, 2])
    rep = compute_metrics([preds], [gts])
    assert rep.counts[1] == PhaseCounts(tp=1, fp=1, fn=0)
    assert rep.counts[2] == PhaseCounts(tp=2, fp=0, fn=1)
    assert rep.precision[1] == 50.0 and rep.recall[1] == 100.0 and rep.jaccard[1] == 50.0
    assert rep.precision[2] == 100.0
    assert abs(rep.recall[2] - 100 * 2 / 3) < 1e-12
    assert abs(rep.jaccard[2] - 100 * 2 / 3) < 1e-12
    assert rep.macro_precision == 75.0
    assert round1(rep.macro_recall) == 83.3
    assert round1(rep.macro_jaccard) == 58.3
    # phases absent from preds and gts are excluded, and listed
    assert rep.excluded["precision"] == [0, 3, 4, 5, 6]
    assert rep.excluded["recall"] == [0, 3, 4, 5, 6]
    assert rep.excluded["jaccard"] == [0, 3, 4, 5, 6]


def test_prf_single_phase_ground_truth():
    gts = np.zeros(20, dtype=int) + 3
    preds = np.where(np.arange(20) < 15, 3, 5)
    rep = compute_metrics([preds], [gts])
    assert rep.single_phase
    assert rep.recall[3] == 75.0
    assert 3 not in rep.excluded["recall"]
    # phases never predicted nor present are excluded from every macro
    assert 0 in rep.excluded["precision"] and 0 in rep.excluded["recall"]


def test_prf_matches_bruteforce_1000_random():
    rng = np.random.default_rng(1)
    for _ in range(10):
        preds = rng.integers(0, 7, 1000)
        gts = rng.integers(0, 7, 1000)
        counts, precision, recall, jaccard = phase_prf(preds, gts)
        tp, fp, fn = brute_counts(list(preds), list(gts))
        for p in range(7):
            assert counts[p] == PhaseCounts(tp[p], fp[p], fn[p])
            if tp[p] + fp[p]:
                assert precision[p] == 100.0 * tp[p] / (tp[p] + fp[p])
            if tp[p] + fn[p]:
                assert recall[p] == 100.0 * tp[p] / (tp[p] + fn[p])
            if tp[p] + fp[p] + fn[p]:
                assert jaccard[p] == 100.0 * tp[p] / (tp[p] + fp[p] + fn[p])


def test_prf_rejects_bad_labels():
    with pytest.raises(ValueError):
        phase_prf(np.array([7]), np.array([0]))


@settings(max_examples=200, derandomize=True)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=1, max_size=60))
def test_jaccard_never_exceeds_precision_or_recall(pairs):
    preds = np.array([p for p, _ in pairs])
    gts = np.array([g for _, g in pairs])
    _, precision, recall, jaccard = phase_prf(preds, gts)
    for p in range(7):
        if jaccard[p] is not None:
            if precision[p] is not None:
                assert jaccard[p] <= precision[p] + 1e-12
            if recall[p] is not None:
                assert jaccard[p] <= recall[p] + 1e-12


@settings(max_examples=100, derandomize=True)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=1, max_size=60))
def test_metrics_ranges_and_exclusions(pairs):
    preds = np.array([p for p, _ in pairs])
    gts = np.array([g for _, g in pairs])
    rep = compute_metrics([preds], [gts])
    for vals in (rep.precision, rep.recall, rep.jaccard):
        for v in vals:
            assert v is None or 0.0 <= v <= 100.0
    assert 0.0 <= rep.mean_accuracy <= 100.0
    # every phase missing from both preds and gts appears in every exclusion list
    for p in range(7):
        if (preds == p).sum() == 0 and (gts == p).sum() == 0:
            assert p in rep.excluded["precision"]
            assert p in rep.excluded["recall"]
            assert p in rep.excluded["jaccard"]


# ---------------------------------------------------------------------------
# report rendering


def fixture_row():
    # layout fixture pinning column order and one-decimal round-half-up
    return ReportRow(variant="surgformer", dataset="cholec80", accuracy=92.24,
                     precision=87.06, recall=87.551, jaccard=77.76,
                     excluded={"precision": [], "recall": [], "jaccard": []})


def test_tsv_layout_fixture():
    tsv = rows_to_tsv([fixture_row()])
    lines = tsv.splitlines()
    assert lines[0] == "variant\tdataset\tacc\tprec\trec\tjac\texcluded_phases"
    assert lines[1] == "surgformer\tcholec80\t92.2\t87.1\t87.6\t77.8\t-"


def test_round1_half_up():
    assert round1(87.55) == 87.6
    assert round1(87.549) == 87.5
    assert round1(92.25) == 92.3


def test_table_rendering_single_phase_columns():
    rows = [
        fixture_row(),
        ReportRow(variant="surgformer", dataset="rt", accuracy=8.9, precision=None,
                  recall=8.8, jaccard=None, single_phase=True,
                  excluded={"precision": [0, 1], "recall": [0], "jaccard": [0, 1]}),
    ]
    table = rows_to_table(rows)
    lines = table.splitlines()
    assert "cholec80" in lines[0] and "rt" in lines[0]
    assert lines[1].split() == ["Acc", "Prec", "Rec", "Jac", "Acc", "Rec"]
    assert lines[2].split() == ["surgformer", "92.2", "87.1", "87.6", "77.8", "8.9", "8.8"]


def test_tsv_single_phase_blanks_prec_jac():
    row = ReportRow(variant="dt", dataset="rt", accuracy=99.8, precision=55.0,
                    recall=99.8, jaccard=44.0, single_phase=True)
    line = rows_to_tsv([row]).splitlines()[1]
    assert line == "dt\trt\t99.8\t-\t99.8\t-\t-"
