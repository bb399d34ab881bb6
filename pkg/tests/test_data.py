import json

import numpy as np
import pytest

from riskaudit.data import (
    SCORE_GROUP,
    InSet,
    Range,
    SubgroupFilter,
    design_matrix,
    load_dataset,
    save_dataset,
    stratify,
)
from riskaudit.errors import (
    DuplicateId,
    MissingBlock,
    MissingColumn,
    MissingValue,
    NonBinaryOutcome,
    RaggedEmbedding,
    ScoreOutOfRange,
    SchemaMismatch,
    UnknownAttribute,
)

SCHEMA = {"id": "id", "outcome": "y", "score": "p",
          "attributes": {"sex": "categorical", "age": "numeric"}}


def write_csv(path, lines):
    path.write_text("\n".join(lines) + "\n")
    return path


def test_load_small_file(tmp_path):
    f = write_csv(tmp_path / "d.csv", ["id,y,p,sex,age", "a,1,0.9,F,61", "b,0,0.2,M,40",
                                       "c,0,0.4,F,55"])
    ds = load_dataset(f, SCHEMA)
    assert len(ds) == 3 and ds.n_positive == 1
    assert list(ds.ids) == ["a", "b", "c"]
    assert ds.schema["sex"].levels == ("F", "M")
    np.testing.assert_array_equal(ds.attributes["age"], [61.0, 40.0, 55.0])
    assert ds.records[0].attributes == {"sex": "F", "age": 61.0}


@pytest.mark.parametrize("row, err", [
    ("b,2,0.2,M,40", NonBinaryOutcome),
    ("b,0,1.2,M,40", ScoreOutOfRange),
    ("a,0,0.2,M,40", DuplicateId),
    ("b,0,0.2,M,", MissingValue),
    ("b,0,0.2,M,old", MissingValue),
])
def test_row_errors_report_row(tmp_path, row, err):
    f = write_csv(tmp_path / "d.csv", ["id,y,p,sex,age", "a,1,0.9,F,61", row])
    with pytest.raises(err) as info:
        load_dataset(f, SCHEMA)
    assert info.value.row == 2


def test_missing_column(tmp_path):
    f = write_csv(tmp_path / "d.csv", ["id,y,p,sex", "a,1,0.9,F"])
    with pytest.raises(MissingColumn):
        load_dataset(f, SCHEMA)


def test_ragged_embedding(tmp_path):
    schema = dict(SCHEMA, embedding_prefix="e")
    f = write_csv(tmp_path / "d.csv", ["id,y,p,sex,age,e_0,e_1", "a,1,0.9,F,61,0.1,0.2",
                                       "b,0,0.1,M,30,0.3,"])
    with pytest.raises(RaggedEmbedding) as info:
        load_dataset(f, schema)
    assert info.value.row == 2


def test_round_trip(tmp_path, calibrated_population):
    ds = calibrated_population.dataset
    schema = save_dataset(ds, tmp_path / "d.csv", tmp_path / "s.json")
    back = load_dataset(tmp_path / "d.csv", json.loads((tmp_path / "s.json").read_text()))
    assert schema == json.loads((tmp_path / "s.json").read_text())
    np.testing.assert_array_equal(back.scores, ds.scores)
    np.testing.assert_array_equal(back.outcomes, ds.outcomes)
    for name in ds.schema:
        np.testing.assert_array_equal(back.attributes[name], ds.attributes[name])


def test_filters(calibrated_population):
    ds = calibrated_population.dataset
    age = ds.attributes["age"]
    f = SubgroupFilter.where(sex="F", age=Range(60, None))
    np.testing.assert_array_equal(f.mask(ds), (ds.attributes["sex"] == "F") & (age >= 60))
    sub = stratify(ds, f)
    assert len(sub) == int(f.mask(ds).sum())
    assert np.all(sub.attributes["age"] >= 60)
    # numeric InSet on integer-valued attribute
    g = SubgroupFilter.where(fst=InSet((1, 2)))
    np.testing.assert_array_equal(g.mask(ds), np.isin(ds.attributes["fst"], [1.0, 2.0]))
    assert SubgroupFilter().mask(ds).all()
    with pytest.raises(UnknownAttribute):
        SubgroupFilter.where(height=1).mask(ds)


def test_filter_json_round_trip():
    f = SubgroupFilter.from_json([{"attr": "age", "ge": 18, "lt": 65}, {"attr": "sex", "eq": "M"},
                                  {"attr": "fst", "in": [5, 6]}])
    assert SubgroupFilter.from_json(f.to_json()) == f


def test_design_matrix_layout(calibrated_population):
    ds = calibrated_population.dataset
    fm = design_matrix(ds)
    assert fm.names == ["sex=F", "sex=M", "age", "fst", "score"]
    assert fm.groups() == {"sex": [0, 1], "age": [2], "fst": [3], SCORE_GROUP: [4]}
    np.testing.assert_allclose(fm.values[:, :2].sum(axis=1), 1.0)
    assert abs(fm.values[:, 2].mean()) < 1e-12
    assert fm.values[:, 2].std(ddof=1) == pytest.approx(1.0)
    np.testing.assert_allclose(fm.values[:, 4], ds.scores - 0.5, atol=1e-15)


def test_design_matrix_reuses_fit_stats(calibrated_population):
    ds = calibrated_population.dataset
    train, test = ds.subset(np.arange(600)), ds.subset(np.arange(600, 1200))
    fm = design_matrix(train)
    age_mean, age_sd = fm.fit_stats.numeric["age"]
    other = design_matrix(test, fit_stats=fm.fit_stats)
    np.testing.assert_allclose(other.values[:, 2], (test.attributes["age"] - age_mean) / age_sd)
    with pytest.raises(SchemaMismatch):
        design_matrix(test, score=False, fit_stats=fm.fit_stats)


def test_constant_column_is_zeroed(calibrated_population):
    ds = calibrated_population.dataset.subset(np.arange(50))
    ds.attributes["age"] = np.full(50, 40.0)
    fm = design_matrix(ds)
    assert np.all(fm.values[:, 2] == 0.0) and fm.meta[2].constant


def test_missing_blocks(calibrated_population):
    with pytest.raises(MissingBlock):
        design_matrix(calibrated_population.dataset, embeddings=True)
