import json
import warnings

import numpy as np
import pytest

from oddforge.errors import ConfigError, DataParseError
from oddforge.ingestion import (
    ColumnMapping,
    OpenLabelSkipWarning,
    dataset_rows,
    format_cell,
    parse_csv,
    parse_openlabel,
    parse_real,
    write_table,
)
from oddforge.kernel import canonicalize

XY = ColumnMapping(("x", "y"), "label")


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_csv_two_rows(tmp_path):
    ds = parse_csv(_write(tmp_path, "d.csv", "x,y,label\n0,0,id\n9,9,ood\n"), XY)
    assert ds.id_samples.tolist() == [[0.0, 0.0]]
    assert ds.ood_samples.tolist() == [[9.0, 9.0]]
    assert ds.dimension_names == ("x", "y")


def test_csv_without_label_column_is_all_id(tmp_path):
    p = _write(tmp_path, "d.csv", "y,x\n1,2\n3,4\n")
    ds = parse_csv(p, ColumnMapping(("x", "y")))
    assert ds.id_samples.tolist() == [[2.0, 1.0], [4.0, 3.0]]
    assert ds.ood_samples.shape == (0, 2)
    ds = parse_csv(p, ColumnMapping(("x", "y"), "label"))
    assert ds.ood_samples.shape == (0, 2) and len(ds.id_samples) == 2


def test_csv_bad_cell_is_located(tmp_path):
    p = _write(tmp_path, "d.csv", "x,y,label\nabc,0,id\n")
    with pytest.raises(DataParseError) as ei:
        parse_csv(p, XY)
    assert ei.value.row == 2 and ei.value.column == "x"
    assert "row 2" in str(ei.value) and "x" in str(ei.value)


@pytest.mark.parametrize(
    "body, row, column",
    [
        ("x,y,label\n0,0,id\n1,nan,id\n", 3, "y"),
        ("x,y,label\n0,inf,id\n", 2, "y"),
        ("x,y,label\n0,1,maybe\n", 2, "label"),
        ("x,y,label\n0,1\n", 2, None),
        ("x,y,label\n0,,id\n", 2, "y"),
    ],
)
def test_csv_rejections(tmp_path, body, row, column):
    with pytest.raises(DataParseError) as ei:
        parse_csv(_write(tmp_path, "d.csv", body), XY)
    assert ei.value.row == row
    assert ei.value.column == column


def test_csv_missing_column_and_empty_file(tmp_path):
    with pytest.raises(DataParseError, match="z"):
        parse_csv(_write(tmp_path, "d.csv", "x,y\n1,2\n"), ColumnMapping(("x", "z")))
    with pytest.raises(DataParseError):
        parse_csv(_write(tmp_path, "e.csv", ""), XY)


def test_csv_custom_labels(tmp_path):
    p = _write(tmp_path, "d.csv", "x,y,cls\n0,0,in\n1,1,out\n")
    ds = parse_csv(p, ColumnMapping(("x", "y"), "cls", id_label="in", ood_label="out"))
    assert len(ds.id_samples) == 1 and len(ds.ood_samples) == 1


def test_parse_real():
    assert parse_real(" 1.5e3 ") == 1500.0
    assert parse_real("-.5") == -0.5
    for bad in ["nan", "inf", "1_000", "0x10", "", "1e999", "1.2.3"]:
        with pytest.raises(ValueError):
            parse_real(bad)


def test_column_mapping_checks():
    with pytest.raises(ConfigError):
        ColumnMapping(())
    with pytest.raises(ConfigError):
        ColumnMapping(("x", "x"))
    with pytest.raises(ConfigError):
        ColumnMapping(("x",), "l", id_label="a", ood_label="a")


def _frame(nums, ood=None):
    f = {"objects": {"o1": {"object_data": {"num": [{"name": k, "val": v} for k, v in nums]}}}}
    if ood is not None:
        f["frame_properties"] = {"ood": ood}
    return f


def _openlabel(tmp_path, frames):
    return _write(tmp_path, "o.json", json.dumps({"openlabel": {"frames": frames}}))


HT = ColumnMapping(("h", "tau"))


def test_openlabel_two_frames(tmp_path):
    p = _openlabel(tmp_path, {"0": _frame([("h", 1.0), ("tau", 2.0)]), "1": _frame([("tau", 4), ("h", 3)])})
    ds = parse_openlabel(p, HT)
    assert ds.id_samples.tolist() == [[1.0, 2.0], [3.0, 4.0]]


def test_openlabel_routes_ood_and_searches_objects(tmp_path):
    split = {
        "objects": {
            "a": {"object_data": {"num": [{"name": "h", "val": 5.0}]}},
            "b": {"object_data": {"num": [{"name": "tau", "val": 6.0}, {"name": "speed", "val": 1}]}},
        },
        "frame_properties": {"ood": True},
    }
    p = _openlabel(tmp_path, {"0": _frame([("h", 1.0), ("tau", 2.0)], ood=False), "1": split})
    ds = parse_openlabel(p, HT)
    assert ds.id_samples.tolist() == [[1.0, 2.0]]
    assert ds.ood_samples.tolist() == [[5.0, 6.0]]


def test_openlabel_strict_missing_names_frame(tmp_path):
    p = _openlabel(tmp_path, {"0": _frame([("h", 1.0), ("tau", 2.0)]), "f7": _frame([("h", 1.0)])})
    with pytest.raises(DataParseError) as ei:
        parse_openlabel(p, HT)
    assert ei.value.frame == "f7"


def test_openlabel_lenient_counts_skips(tmp_path):
    frames = {"0": _frame([("h", 1.0), ("tau", 2.0)]), "1": _frame([("h", 1.0)]), "2": _frame([])}
    p = _openlabel(tmp_path, frames)
    with pytest.warns(OpenLabelSkipWarning) as rec:
        ds = parse_openlabel(p, HT, strict=False)
    assert rec[0].message.count == 2 and rec[0].message.frames == ("1", "2")
    assert len(ds.id_samples) == 1
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        parse_openlabel(_openlabel(tmp_path, {"0": frames["0"]}), HT, strict=False)


@pytest.mark.parametrize(
    "frames",
    [
        {"0": _frame([("h", 1.0), ("h", 2.0), ("tau", 1.0)])},
        {"0": _frame([("h", "high"), ("tau", 1.0)])},
        {"0": _frame([("h", 1.0), ("tau", 1.0)], ood="yes")},
    ],
)
def test_openlabel_frame_errors(tmp_path, frames):
    with pytest.raises(DataParseError) as ei:
        parse_openlabel(_openlabel(tmp_path, frames), HT)
    assert ei.value.frame == "0"


def test_openlabel_malformed(tmp_path):
    with pytest.raises(DataParseError, match="line"):
        parse_openlabel(_write(tmp_path, "bad.json", '{"openlabel": '), HT)
    with pytest.raises(DataParseError):
        parse_openlabel(_write(tmp_path, "nf.json", '{"frames": {}}'), HT)


def test_format_cell():
    assert format_cell(None) == ""
    assert format_cell(True) == "true" and format_cell(np.bool_(False)) == "false"
    assert format_cell(np.int64(3)) == "3"
    assert format_cell(0.1) == "0.1"
    assert format_cell(1 / 3) == "0.3333333333333333"
    with pytest.raises(ValueError):
        format_cell(float("nan"))


def test_write_table_header_only_and_stable(tmp_path):
    assert write_table([], ["a", "b"], tmp_path / "e.csv") == "a,b\n"
    assert (tmp_path / "e.csv").read_bytes() == b"a,b\n"
    rows = [[1, 0.1, "x,y", None], [2, 1e-300, "q", True]]
    write_table(rows, ["i", "v", "s", "n"], tmp_path / "a.csv")
    write_table(rows, ["i", "v", "s", "n"], tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert b"\r" not in (tmp_path / "a.csv").read_bytes()
    assert '"x,y"' in (tmp_path / "a.csv").read_text()


def test_round_trip_through_csv(tmp_path):
    rng = np.random.default_rng(0)
    body = "x,y,label\n" + "".join(
        f"{format_cell(a)},{format_cell(b)},{'ood' if k % 3 == 0 else 'id'}\n"
        for k, (a, b) in enumerate(rng.normal(size=(50, 2)) * 10.0 ** rng.integers(-5, 5, size=(50, 1)))
    )
    ds = parse_csv(_write(tmp_path, "src.csv", body), XY)
    rows, cols = dataset_rows(canonicalize(ds), XY)
    write_table(rows, cols, tmp_path / "out.csv")
    back = parse_csv(tmp_path / "out.csv", XY)
    a, b = canonicalize(ds), canonicalize(back)
    assert a.id_samples.tobytes() == b.id_samples.tobytes()
    assert a.ood_samples.tobytes() == b.ood_samples.tobytes()
