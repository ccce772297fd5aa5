"""
Metrics and report artefacts for comparing spacing methods on test fonts.
"""
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from kernkit.dataset.records import FontRecord, KerningTable
from kernkit.errors import DataValidationError, ShapeError
from kernkit.schemas import EvalReport, MethodReport
from kernkit.storage import dumps_json, write_bytes_atomic

logger = logging.getLogger(__name__)

BELOW_THRESHOLD = 7.0
CSV_FLOAT_FORMAT = "%.3f"

PathLike = Union[str, Path]
TableLike = Union[KerningTable, np.ndarray]
Predictor = Callable[[FontRecord], KerningTable]


def _values(table: TableLike) -> np.ndarray:
    return table.values if isinstance(table, KerningTable) else np.asarray(table, dtype=np.float64)


def table_mae(pred: TableLike, gt: TableLike) -> float:
    """
    Mean absolute difference over all N^2 entries.

    Raises:
        ShapeError: If the tables differ in size
    """
    p, g = _values(pred), _values(gt)
    if p.shape != g.shape:
        raise ShapeError(f"table_mae: incompatible shapes {p.shape} and {g.shape}")
    return float(np.abs(p - g).mean())


def _as_predictor(method: object) -> Predictor:
    predict = getattr(method, "predict", None)
    return predict if callable(predict) else method


def evaluate(
    methods: Mapping[str, object],
    fonts: Sequence[FontRecord],
    threads: int = 1,
    below_threshold: float = BELOW_THRESHOLD,
) -> EvalReport:
    """
    Score every method on every font.

    Args:
        methods: Method name -> predictor (callable or object with ``predict``)
        fonts: Test fonts with ground-truth tables, all sharing N and H
        threads: Worker threads for prediction (one task per font)
        below_threshold: Threshold of the "fonts with MAE below" count (strict <)

    Returns:
        EvalReport; per-font absolute errors are kept in memory for export
    """
    if not methods:
        raise DataValidationError("evaluate needs at least one method")
    if not fonts:
        raise DataValidationError("evaluate needs at least one font")
    n = fonts[0].n
    size = fonts[0].image_size
    for font in fonts:
        if font.n != n:
            raise ShapeError(f"evaluate: font {font.font_id} has {font.n} glyphs, expected {n}")

    gt = np.stack([font.require_table().values for font in fonts])
    names = list(methods)
    abs_errors: Dict[str, np.ndarray] = {}
    for name in names:
        predict = _as_predictor(methods[name])

        def score(font: FontRecord) -> np.ndarray:
            pred = _values(predict(font))
            if pred.shape != (n, n):
                raise ShapeError(f"method {name}: incompatible shapes {pred.shape} and {(n, n)}")
            return np.abs(pred - font.require_table().values)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                errors = list(pool.map(score, fonts))
        else:
            errors = [score(font) for font in fonts]
        abs_errors[name] = np.stack(errors)
        logger.info(f"Evaluated {name} on {len(fonts)} fonts: MAE {abs_errors[name].mean():.3f}")

    font_mae = np.stack([abs_errors[name].mean(axis=(1, 2)) for name in names])
    best = font_mae.min(axis=0)
    styles = [font.style.value for font in fonts]
    style_names = sorted(set(styles))
    thresholds = list(range(0, size // 4 + 1))

    reports: Dict[str, MethodReport] = {}
    for index, name in enumerate(names):
        errors = abs_errors[name]
        winners = font_mae[index] == best
        below = font_mae[index] < below_threshold
        style_mae, style_below, style_wins = {}, {}, {}
        for style in style_names:
            mask = np.array([s == style for s in styles])
            style_mae[style] = float(errors[mask].mean())
            style_below[style] = int(below[mask].sum())
            style_wins[style] = int(winners[mask].sum())
        reports[name] = MethodReport(
            mae=float(errors.mean()),
            style_mae=style_mae,
            fonts_below=int(below.sum()),
            style_fonts_below=style_below,
            wins=int(winners.sum()),
            style_wins=style_wins,
            cumulative=[(t, float((errors < t).mean())) for t in thresholds],
            pair_mae=errors.mean(axis=0).tolist(),
            font_mae={font.font_id: float(font_mae[index, k]) for k, font in enumerate(fonts)},
        )

    report = EvalReport(
        labels=list(fonts[0].labels),
        font_ids=[font.font_id for font in fonts],
        styles={font.font_id: font.style.value for font in fonts},
        below_threshold=below_threshold,
        methods=reports,
        gt_mean=gt.mean(axis=0).tolist(),
        gt_var=gt.var(axis=0).tolist(),
    )
    report._abs_errors = abs_errors
    return report


# Supplementary selections

def select_showcase_fonts(report: EvalReport, method: str) -> Dict[str, List[str]]:
    """Per style, the fonts with the smallest, median and largest MAE for ``method``."""
    font_mae = report.methods[method].font_mae
    picked: Dict[str, List[str]] = {}
    for style in sorted(set(report.styles.values())):
        ranked = sorted(
            (fid for fid in report.font_ids if report.styles[fid] == style),
            key=lambda fid: (font_mae[fid], fid),
        )
        picks = [ranked[0], ranked[(len(ranked) - 1) // 2], ranked[-1]]
        picked[style] = list(dict.fromkeys(picks))
    return picked


def rank_pairs(report: EvalReport, method: str) -> List[Tuple[str, float]]:
    """Pairs (as two-letter strings) from lowest to highest per-pair MAE."""
    pair_mae = np.asarray(report.methods[method].pair_mae)
    labels = report.labels
    ranked = [
        (f"{labels[i]}{labels[j]}", float(pair_mae[i, j]))
        for i in range(len(labels))
        for j in range(len(labels))
    ]
    return sorted(ranked, key=lambda item: (item[1], item[0]))


def pick_pairs_by_rank(ranked: Sequence[Tuple[str, float]], k: int) -> List[str]:
    """``k`` pairs at equal rank intervals, always including the easiest and the hardest."""
    if k <= 0 or not ranked:
        return []
    if k == 1:
        return [ranked[0][0]]
    positions = np.linspace(0, len(ranked) - 1, num=min(k, len(ranked)))
    return [ranked[int(round(p))][0] for p in positions]


# CSV / JSON exports

def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def _write_csv(frame: pd.DataFrame, path: Path, index: bool) -> Path:
    text = frame.to_csv(index=index, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    write_bytes_atomic(path, text.encode("utf-8"))
    return path


def matrix_frame(matrix: np.ndarray, labels: Sequence[str]) -> pd.DataFrame:
    """Labelled N x N frame: row = first letter, column = second letter."""
    return pd.DataFrame(np.asarray(matrix, dtype=np.float64), index=list(labels), columns=list(labels))


def export_heatmaps(
    report: EvalReport,
    out_dir: PathLike,
    differences: Optional[Sequence[Tuple[str, str]]] = None,
) -> List[Path]:
    """
    Write per-pair MAE matrices, ground-truth mean and variance, and difference matrices.

    Args:
        report: Evaluation report
        out_dir: Output directory
        differences: (a, b) method pairs exported as ``a - b``; every pair of
            distinct methods in report order when omitted

    Returns:
        Paths written
    """
    out_dir = Path(out_dir)
    written = [
        _write_csv(matrix_frame(report.gt_mean, report.labels), out_dir / "gt_mean.csv", index=True),
        _write_csv(matrix_frame(report.gt_var, report.labels), out_dir / "gt_var.csv", index=True),
    ]
    for name, method in report.methods.items():
        written.append(_write_csv(
            matrix_frame(method.pair_mae, report.labels), out_dir / f"pair_mae_{_slug(name)}.csv", index=True
        ))
    if differences is None:
        names = list(report.methods)
        differences = [(a, b) for k, a in enumerate(names) for b in names[k + 1:]]
    for a, b in differences:
        diff = np.asarray(report.methods[a].pair_mae) - np.asarray(report.methods[b].pair_mae)
        written.append(_write_csv(
            matrix_frame(diff, report.labels), out_dir / f"diff_{_slug(a)}_minus_{_slug(b)}.csv", index=True
        ))
    return written


def export_curves(report: EvalReport, out_dir: PathLike) -> List[Path]:
    out_dir = Path(out_dir)
    written = []
    for name, method in report.methods.items():
        frame = pd.DataFrame(method.cumulative, columns=["threshold", "fraction"])
        written.append(_write_csv(frame, out_dir / f"curve_{_slug(name)}.csv", index=False))
    return written


def export_pair_errors(report: EvalReport, pairs: Sequence[str], out_dir: PathLike) -> List[Path]:
    """
    Raw AE of every test font for the selected pairs, one CSV per method.

    Columns: font_id, style, pair, ae.
    """
    if not report._abs_errors:
        raise DataValidationError("report carries no per-font errors; run evaluate() first")
    out_dir = Path(out_dir)
    index = {f"{a}{b}": (i, j) for i, a in enumerate(report.labels) for j, b in enumerate(report.labels)}
    written = []
    for name, errors in report._abs_errors.items():
        rows = []
        for pair in pairs:
            i, j = index[pair]
            for k, font_id in enumerate(report.font_ids):
                rows.append({"font_id": font_id, "style": report.styles[font_id], "pair": pair,
                             "ae": float(errors[k, i, j])})
        frame = pd.DataFrame(rows, columns=["font_id", "style", "pair", "ae"])
        written.append(_write_csv(frame, out_dir / f"pair_errors_{_slug(name)}.csv", index=False))
    return written


def save_report(report: EvalReport, out_dir: PathLike) -> Path:
    path = Path(out_dir) / "report.json"
    write_bytes_atomic(path, dumps_json(report.model_dump(mode="json")).encode("utf-8"))
    return path


def write_report_bundle(report: EvalReport, out_dir: PathLike, pair_count: int = 5) -> List[Path]:
    """report.json, heatmaps, curves, showcase fonts and raw errors of ranked pairs of the first method."""
    written = [save_report(report, out_dir)]
    written += export_heatmaps(report, out_dir)
    written += export_curves(report, out_dir)
    first = next(iter(report.methods))
    pairs = pick_pairs_by_rank(rank_pairs(report, first), pair_count)
    written += export_pair_errors(report, pairs, out_dir)
    showcase = {name: select_showcase_fonts(report, name) for name in report.methods}
    showcase_path = Path(out_dir) / "showcase.json"
    write_bytes_atomic(showcase_path, dumps_json(showcase).encode("utf-8"))
    written.append(showcase_path)
    logger.info(f"Wrote {len(written)} report files to {out_dir}")
    return written
