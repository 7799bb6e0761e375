import json

import pytest

from errors import DataError
from reports import compare_reports, fold_metric, format_comparison, read_report, write_report


def fake_report(accs, f1s, variant="husformer"):
    return {
        "variant": {"kind": variant},
        "seed": 0,
        "folds": [{"fold": i, "acc": a, "f1": f} for i, (a, f) in enumerate(zip(accs, f1s))],
    }


def test_write_then_read(tmp_path):
    report = fake_report([0.9, 0.8], [0.7, 0.6])
    path = tmp_path / "nested" / "report.json"
    write_report(report, path)
    assert read_report(path) == report
    assert list(json.loads(path.read_text())) == sorted(report)


def test_read_rejects_non_reports(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(DataError):
        read_report(bad)
    bad.write_text(json.dumps({"acc": 1}))
    with pytest.raises(DataError, match="folds"):
        read_report(bad)


def test_fold_metric_missing_key():
    with pytest.raises(DataError):
        fold_metric({"folds": [{"acc": 1.0}]}, "f1")


def test_clear_gap_is_significant():
    a = fake_report([0.95, 0.96, 0.94, 0.95, 0.97], [0.9, 0.92, 0.91, 0.93, 0.9])
    b = fake_report([0.80, 0.81, 0.79, 0.80, 0.82], [0.7, 0.72, 0.71, 0.69, 0.7], "husfuse")
    result = compare_reports(a, b)
    assert result["acc"]["significant"] and result["f1"]["significant"]
    assert result["acc"]["mean_a"] == pytest.approx(0.954)
    assert result["b"]["variant"] == {"kind": "husfuse"}
    assert "significant at p<0.01" in format_comparison(result)


def test_overlapping_runs_are_not_significant():
    a = fake_report([0.90, 0.80, 0.85, 0.95], [0.5, 0.6, 0.7, 0.8])
    b = fake_report([0.85, 0.90, 0.80, 0.88], [0.6, 0.5, 0.8, 0.7])
    result = compare_reports(a, b)
    assert not result["acc"]["significant"]
    assert "not significant" in format_comparison(result)
