import numpy as np
import pandas as pd
import pytest

from fedsim.errors import ManifestError
from fedsim.evaluation.evaluate_volumes import OUTPUT_COLUMNS, read_manifest, score_manifest
from fedsim.evaluation.seg_metrics import METRIC_LABELS, evaluate_volume_pair
from fedsim.evaluation.segvol import LabelVolume, write_segvol


def write_case(directory, name, labels, spacing=(1.0, 1.0, 1.0)):
    return write_segvol(LabelVolume(labels, spacing), directory / f"{name}.segvol").name


@pytest.fixture
def labels():
    ref = np.zeros((8, 8, 8), dtype=np.uint8)
    ref[2:6, 2:6, 2:6] = 2
    ref[3:5, 3:5, 3:5] = 4
    return ref


def test_perfect_and_failed_cases(tmp_path, labels):
    good = write_case(tmp_path, "good", labels)
    small = write_case(tmp_path, "small", np.zeros((4, 4, 4), dtype=np.uint8))
    pd.DataFrame([
        {"pred_path": good, "ref_path": good, "case_id": "BraTS-001"},
        {"pred_path": small, "ref_path": good, "case_id": "BraTS-002"},
        {"pred_path": "missing.segvol", "ref_path": good, "case_id": "BraTS-003"},
    ]).to_csv(tmp_path / "manifest.csv", index=False)

    table, failures = score_manifest(tmp_path / "manifest.csv")
    assert failures == 2
    assert list(table.columns) == OUTPUT_COLUMNS
    perfect = table[table["case_id"] == "BraTS-001"]
    assert list(perfect["region"]) == ["ET", "TC", "WT"]
    assert (perfect["DICE"] == 1.0).all()
    assert (perfect["Hausdorff (95%)"] == 0.0).all()
    assert (perfect["error"] == "").all()
    errors = table.set_index("case_id").loc[["BraTS-002", "BraTS-003"], "error"]
    assert errors.iloc[0].startswith("ShapeMismatch")
    assert errors.iloc[1].startswith("VolumeFormatError")


def test_spacing_mismatch_is_a_row_error(tmp_path, labels):
    a = write_case(tmp_path, "a", labels)
    b = write_case(tmp_path, "b", labels, spacing=(1.0, 1.0, 2.0))
    (tmp_path / "m.csv").write_text(f"pred_path,ref_path,case_id\n{a},{b},x\n", encoding="utf-8")
    table, failures = score_manifest(tmp_path / "m.csv")
    assert failures == 1
    assert table["error"].iloc[0].startswith("SpacingMismatch")


def test_empty_manifest_gives_header_only(tmp_path):
    for content in ("", "pred_path,ref_path,case_id\n"):
        (tmp_path / "m.csv").write_text(content, encoding="utf-8")
        table, failures = score_manifest(tmp_path / "m.csv")
        assert failures == 0
        assert table.empty
        assert list(table.columns) == OUTPUT_COLUMNS


def test_manifest_errors(tmp_path):
    with pytest.raises(ManifestError):
        read_manifest(tmp_path / "nope.csv")
    (tmp_path / "m.csv").write_text("pred,ref\na,b\n", encoding="utf-8")
    with pytest.raises(ManifestError):
        read_manifest(tmp_path / "m.csv")


def test_manifest_scores_match_direct_metric_calls(tmp_path):
    rng = np.random.default_rng(16)
    rows, expected = [], {}
    for i in range(10):
        pred, ref = (rng.choice(np.array([0, 1, 2, 4], dtype=np.uint8), size=(16, 16, 16), p=[0.7, 0.1, 0.1, 0.1])
                     for _ in range(2))
        rows.append({"pred_path": write_case(tmp_path, f"p{i}", pred),
                     "ref_path": write_case(tmp_path, f"r{i}", ref), "case_id": f"case-{i}"})
        for record in evaluate_volume_pair(LabelVolume(pred), LabelVolume(ref)):
            expected[(f"case-{i}", record.region)] = record
    pd.DataFrame(rows).to_csv(tmp_path / "manifest.csv", index=False)

    table, failures = score_manifest(tmp_path / "manifest.csv")
    assert failures == 0
    assert len(table) == 30
    for row in table.to_dict("records"):
        record = expected[(row["case_id"], row["region"])]
        for key, label in METRIC_LABELS.items():
            assert row[label] == getattr(record, key)
        assert bool(row["hd95_undefined"]) == record.hd95_undefined


def test_negative_header_dims_are_a_row_error(tmp_path, labels):
    good = write_case(tmp_path, "good", labels)
    (tmp_path / "bad.segvol").write_bytes(b"SEGVOL v1 -1 -1 1 1 1 1\n\x00")
    (tmp_path / "m.csv").write_text(f"pred_path,ref_path,case_id\nbad.segvol,{good},x\n{good},{good},y\n",
                                    encoding="utf-8")
    table, failures = score_manifest(tmp_path / "m.csv")
    assert failures == 1
    assert table["error"].iloc[0].startswith("VolumeFormatError")
    assert len(table) == 4
