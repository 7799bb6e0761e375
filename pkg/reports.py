"""JSON reports and significance comparison between two cross-validation runs."""

from __future__ import annotations

import json
import logging
from pathlib import Path

from errors import DataError
from metrics import SIGNIFICANCE_LEVEL, is_significant, welch_t_test
from models import CrossValidationReport

logger = logging.getLogger(__name__)


def _as_dict(report: CrossValidationReport | dict) -> dict:
    return report.to_dict() if isinstance(report, CrossValidationReport) else report


def write_report(report: CrossValidationReport | dict, path: Path):
    """Write a report as sorted-key JSON; floats keep full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    with tmp.open("w", encoding="utf-8") as f:
        json.dump(_as_dict(report), f, indent=2, sort_keys=True)
        f.write("\n")
    tmp.replace(path)
    logger.info("wrote report %s", path)


def read_report(path: Path) -> dict:
    try:
        with Path(path).open("r", encoding="utf-8") as f:
            report = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: not a JSON report ({e})") from None
    if not isinstance(report, dict) or "folds" not in report:
        raise DataError(f"{path}: missing 'folds'")
    return report


def fold_metric(report: CrossValidationReport | dict, key: str) -> list[float]:
    folds = _as_dict(report).get("folds", [])
    try:
        return [float(f[key]) for f in folds]
    except (KeyError, TypeError):
        raise DataError(f"report folds lack {key!r}") from None


def compare_reports(a: CrossValidationReport | dict, b: CrossValidationReport | dict,
                    level: float = SIGNIFICANCE_LEVEL) -> dict:
    """Welch t-test of per-fold Acc and F1 of run a against run b."""
    a, b = _as_dict(a), _as_dict(b)
    result = {
        "a": {"variant": a.get("variant"), "seed": a.get("seed")},
        "b": {"variant": b.get("variant"), "seed": b.get("seed")},
        "level": level,
    }
    for key in ("acc", "f1"):
        xa, xb = fold_metric(a, key), fold_metric(b, key)
        t, p = welch_t_test(xa, xb)
        result[key] = {
            "mean_a": sum(xa) / len(xa),
            "mean_b": sum(xb) / len(xb),
            "t": t,
            "p": p,
            "significant": is_significant(p, level),
        }
    return result


def format_comparison(result: dict) -> str:
    lines = []
    for key in ("acc", "f1"):
        r = result[key]
        mark = "significant" if r["significant"] else "not significant"
        lines.append(
            f"{key}: {r['mean_a']:.4f} vs {r['mean_b']:.4f}  t={r['t']:.4f}  p={r['p']:.3g}  ({mark} at p<{result['level']})"
        )
    return "\n".join(lines)
