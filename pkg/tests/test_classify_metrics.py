"""Classification metrics against hand counts and algebraic identities."""

import math

import numpy as np

import pytest

from fundus_xai.classify_metrics import (
    ConfusionMatrix,
    accuracy,
    aggregate_metrics,
    classification_report,
    confusion_matrix,
    log_loss,
    make_record,
    per_class_metrics,
    predicted_label,
    read_predictions,
    write_predictions,
)
from fundus_xai.errors import ArgumentError, DataError, ParseError
from fundus_xai.rng import SplitMix64


def _records_from_pairs(pairs, c):
    """(true, predicted) pairs -> records whose argmax is the prediction."""
    out = []
    for i, (t, p) in enumerate(pairs):
        probs = np.full(c, 0.1 / (c - 1))
        probs[p] = 0.9
        out.append(make_record(f"item{i}", t, probs))
    return out


# worked example: 3 classes, 10 items
# true:      0 0 0 0 1 1 1 2 2 2
# predicted: 0 0 1 2 1 1 0 2 2 2
PAIRS = [(0, 0), (0, 0), (0, 1), (0, 2), (1, 1), (1, 1), (1, 0), (2, 2), (2, 2), (2, 2)]
# counts[i, j]: row true, col predicted
WANT_CM = np.array([[2, 1, 1],
                    [1, 2, 0],
                    [0, 0, 3]])
# per class, derived by hand from the matrix:
# class 0: tp=2 fp=1 fn=2 -> p=2/3      r=2/4=0.5  f1=4/7      j=2/5
# class 1: tp=2 fp=1 fn=1 -> p=2/3      r=2/3      f1=2/3      j=2/4
# class 2: tp=3 fp=1 fn=0 -> p=3/4      r=1.0      f1=6/7      j=3/4


def test_confusion_matrix_hand_example():
    cm = confusion_matrix(_records_from_pairs(PAIRS, 3), 3)
    assert np.array_equal(cm.counts, WANT_CM)
    assert accuracy(cm) == 0.7


def test_per_class_hand_values():
    cm = ConfusionMatrix(counts=WANT_CM)
    pc = per_class_metrics(cm)
    assert np.allclose(pc["precision"], [2 / 3, 2 / 3, 3 / 4], atol=1e-15)
    assert np.allclose(pc["recall"], [0.5, 2 / 3, 1.0], atol=1e-15)
    assert np.allclose(pc["f1"], [4 / 7, 2 / 3, 6 / 7], atol=1e-15)
    assert np.allclose(pc["jaccard"], [2 / 5, 0.5, 3 / 4], atol=1e-15)
    assert np.array_equal(pc["support"], [4, 3, 3])
    assert not pc["precision_undefined"].any()


def test_aggregates_hand_values():
    cm = ConfusionMatrix(counts=WANT_CM)
    macro = aggregate_metrics(cm, "macro")
    assert math.isclose(macro["precision"], (2 / 3 + 2 / 3 + 3 / 4) / 3)
    assert math.isclose(macro["f1"], (4 / 7 + 2 / 3 + 6 / 7) / 3)
    weighted = aggregate_metrics(cm, "weighted")
    assert math.isclose(weighted["recall"],
                        (4 * 0.5 + 3 * (2 / 3) + 3 * 1.0) / 10)
    micro = aggregate_metrics(cm, "micro")
    assert micro["precision"] == micro["recall"] == micro["f1"] == 0.7
    # pooled jaccard: tp=7, fp+fn pooled = 2*(10-7)
    assert math.isclose(micro["jaccard"], 7 / 13)
    with pytest.raises(ArgumentError):
        aggregate_metrics(cm, "harmonic")


def test_micro_equals_accuracy_randomized():
    rng = SplitMix64(404)
    for _ in range(25):
        c = 2 + rng.randbelow(5)
        n = 5 + rng.randbelow(60)
        pairs = [(rng.randbelow(c), rng.randbelow(c)) for _ in range(n)]
        cm = confusion_matrix(_records_from_pairs(pairs, c), c)
        micro = aggregate_metrics(cm, "micro")
        acc = accuracy(cm)
        assert micro["precision"] == acc
        assert micro["recall"] == acc
        assert micro["f1"] == acc


def test_f1_jaccard_identity_randomized():
    # F1 = 2J/(1+J) per class, exactly (both from the same counts)
    rng = SplitMix64(505)
    for _ in range(25):
        c = 2 + rng.randbelow(4)
        pairs = [(rng.randbelow(c), rng.randbelow(c))
                 for _ in range(4 + rng.randbelow(40))]
        pc = per_class_metrics(confusion_matrix(_records_from_pairs(pairs, c), c))
        want = 2 * pc["jaccard"] / (1 + pc["jaccard"])
        assert np.allclose(pc["f1"], want, rtol=1e-12, atol=1e-15)


def test_undefined_classes_flagged_zero():
    # class 2 never appears at all: no predictions, no truth
    pairs = [(0, 0), (1, 1), (0, 1)]
    cm = confusion_matrix(_records_from_pairs(pairs, 3), 3)
    pc = per_class_metrics(cm)
    assert pc["precision"][2] == 0.0 and pc["precision_undefined"][2]
    assert pc["recall"][2] == 0.0 and pc["recall_undefined"][2]
    assert pc["f1"][2] == 0.0 and pc["f1_undefined"][2]
    assert pc["jaccard"][2] == 0.0 and pc["jaccard_undefined"][2]
    # class 1 has a prediction and truth: defined
    assert not pc["precision_undefined"][1]
    report = classification_report(_records_from_pairs(pairs, 3), 3)
    row = report.to_json_dict()["per_class"][2]
    assert set(row["undefined"]) == {"precision", "recall", "f1", "jaccard"}


def test_argmax_tie_goes_to_lowest_index():
    r = make_record("x", 1, [0.4, 0.4, 0.2])
    assert predicted_label(r) == 0


def test_probability_validation():
    with pytest.raises(DataError):
        make_record("x", 0, [0.5, -0.1, 0.6])
    with pytest.raises(DataError):
        make_record("x", 0, [0.6, 0.3])  # sums to 0.9
    with pytest.raises(DataError):
        make_record("x", 5, [0.5, 0.5])
    with pytest.raises(DataError):
        make_record("x", 0, [0.5, float("nan")])
    # tiny drift is renormalized to an exact simplex point
    r = make_record("x", 0, [0.5000000004, 0.4999999999])
    assert abs(r.probs.sum() - 1.0) < 1e-15


def test_log_loss_uniform_is_log_c():
    for c in (2, 3, 4, 10):
        records = [make_record(str(i), i % c, np.full(c, 1.0 / c))
                   for i in range(3 * c)]
        assert abs(log_loss(records) - math.log(c)) < 1e-12


def test_log_loss_clips_extremes():
    # an exactly-wrong prediction is clipped, not infinite
    records = [make_record("a", 0, [0.0, 1.0])]
    assert log_loss(records) == -math.log(1e-15)
    records = [make_record("a", 1, [0.0, 1.0])]
    assert log_loss(records) == -math.log(1.0 - 1e-15)


def test_report_document_keys():
    report = classification_report(_records_from_pairs(PAIRS, 3), 3)
    doc = report.to_json_dict()
    assert set(doc) == {"accuracy", "per_class", "macro", "micro", "weighted",
                        "log_loss", "n", "confusion_matrix"}
    assert doc["n"] == 10
    assert doc["accuracy"] == 0.7
    assert doc["confusion_matrix"] == WANT_CM.tolist()
    for scheme in ("macro", "micro", "weighted"):
        assert set(doc[scheme]) == {"precision", "recall", "f1", "jaccard"}
    assert len(doc["per_class"]) == 3


def test_predictions_roundtrip(tmp_path):
    rng = SplitMix64(66)
    records = []
    for i in range(20):
        raw = rng.fill_uniform(4, 0.0, 1.0) + 1e-9
        records.append(make_record(f"img_{i}.png", rng.randbelow(4), raw / raw.sum()))
    path = tmp_path / "preds.csv"
    write_predictions(path, records)
    loaded, c = read_predictions(path)
    assert c == 4
    assert len(loaded) == 20
    for a, b in zip(records, loaded):
        assert a.item_id == b.item_id
        assert a.true_label == b.true_label
        # repr round-trips each double exactly; the documented sum check may
        # renormalize rows whose float sum is one ulp off 1, so equality is
        # at the 2-ulp level rather than bitwise
        assert np.abs(a.probs - b.probs).max() < 1e-15
    # a second cycle reproduces the first parse exactly or within the same bound
    path2 = tmp_path / "preds2.csv"
    write_predictions(path2, loaded)
    again, _ = read_predictions(path2)
    for a, b in zip(loaded, again):
        assert np.abs(a.probs - b.probs).max() < 1e-15


def test_predictions_file_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("")
    with pytest.raises(ParseError):
        read_predictions(p)
    p.write_text("who,what,p_0,p_1\n")
    with pytest.raises(ParseError, match="header"):
        read_predictions(p)
    p.write_text("item_id,true_label,p_0,p_1\n")
    with pytest.raises(ParseError, match="no prediction rows"):
        read_predictions(p)
    p.write_text("item_id,true_label,p_0,p_1\na,0,0.5\n")
    with pytest.raises(ParseError, match=":2"):
        read_predictions(p)
    p.write_text("item_id,true_label,p_0,p_1\na,0,0.5,abc\n")
    with pytest.raises(ParseError, match=":2"):
        read_predictions(p)
    p.write_text("item_id,true_label,p_0,p_1\na,0,0.6,0.3\n")
    with pytest.raises(DataError, match=":2"):
        read_predictions(p)
    p.write_text("item_id,true_label,p_0,p_1\na,0,0.5,0.5\n")
    with pytest.raises(ParseError, match="2 probability columns"):
        read_predictions(p, num_classes=3)


def test_empty_records_rejected():
    with pytest.raises(ArgumentError):
        confusion_matrix([], 3)
    with pytest.raises(ArgumentError):
        log_loss([])
