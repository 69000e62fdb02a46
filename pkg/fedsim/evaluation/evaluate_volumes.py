#!/usr/bin/env python3
"""
Batch scoring of predicted vs reference label volumes listed in a manifest CSV.

Manifest columns: pred_path, ref_path, case_id (paths relative to the manifest).
Output: one row per (case, region) with the four metrics; a case that cannot be
scored becomes a single row with the error filled in, and scoring continues.
"""

from __future__ import annotations

from pathlib import Path

import pandas as pd
from loguru import logger

from fedsim.errors import FedSimError, ManifestError
from fedsim.evaluation.seg_metrics import METRIC_LABELS, evaluate_volume_pair
from fedsim.evaluation.segvol import read_segvol

MANIFEST_COLUMNS = ("pred_path", "ref_path", "case_id")
OUTPUT_COLUMNS = ["case_id", "region", *METRIC_LABELS.values(), "hd95_undefined", "error"]


class SegmentationEvaluator:
    def __init__(self, base_dir: str | Path = "."):
        self.base_dir = Path(base_dir)

    def _resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def score_case(self, pred_path: str, ref_path: str, case_id: str) -> list[dict]:
        pred = read_segvol(self._resolve(pred_path))
        ref = read_segvol(self._resolve(ref_path))
        rows = []
        for record in evaluate_volume_pair(pred, ref):
            row = {"case_id": case_id, "region": record.region}
            row.update({label: getattr(record, key) for key, label in METRIC_LABELS.items()})
            row.update({"hd95_undefined": record.hd95_undefined, "error": ""})
            rows.append(row)
        return rows

    def score_manifest(self, manifest: pd.DataFrame) -> tuple[pd.DataFrame, int]:
        """Return the metrics table and the number of cases that failed."""
        rows, failures = [], 0
        for case in manifest.itertuples(index=False):
            try:
                rows.extend(self.score_case(case.pred_path, case.ref_path, case.case_id))
            except FedSimError as exc:
                failures += 1
                logger.warning("case {}: {}: {}", case.case_id, type(exc).__name__, exc)
                rows.append({"case_id": case.case_id, "region": "", "error": f"{type(exc).__name__}: {exc}"})
        return pd.DataFrame(rows, columns=OUTPUT_COLUMNS), failures


def read_manifest(path: str | Path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    if path.stat().st_size == 0:
        return pd.DataFrame(columns=list(MANIFEST_COLUMNS))
    try:
        manifest = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    missing = [c for c in MANIFEST_COLUMNS if c not in manifest.columns]
    if missing:
        raise ManifestError(f"{path}: missing columns {missing}")
    return manifest[list(MANIFEST_COLUMNS)]


def score_manifest(manifest_path: str | Path) -> tuple[pd.DataFrame, int]:
    manifest_path = Path(manifest_path)
    manifest = read_manifest(manifest_path)
    logger.info("scoring {} cases from {}", len(manifest), manifest_path)
    return SegmentationEvaluator(manifest_path.parent).score_manifest(manifest)
