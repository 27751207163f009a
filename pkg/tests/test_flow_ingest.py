import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from egsage.errors import SchemaError
from egsage.flow_ingest import (ATTACK, BENIGN, ColumnMap, decode_category, encode,
                                fit_schema, parse_csv, split)

HEADER = "IPV4_SRC_ADDR,L4_SRC_PORT,IPV4_DST_ADDR,L4_DST_PORT,PROTOCOL,IN_BYTES,Label,Attack"


def write(tmp_path, rows, header=HEADER, name="flows.csv"):
    path = tmp_path / name
    path.write_text("\n".join([header] + list(rows)) + "\n", encoding="utf-8")
    return path


def test_parses_key_fields_and_labels(tmp_path):
    path = write(tmp_path, ["192.168.1.152,80,172.29.96.53,35866,tcp,1200,0,Benign"])
    table = parse_csv(path)
    assert table.errors == []
    (rec,) = table.records
    assert (rec.src_ip, rec.src_port, rec.dst_ip, rec.dst_port) == \
        ("192.168.1.152", 80, "172.29.96.53", 35866)
    assert rec.binary_label == BENIGN and rec.attack_class == "Benign"
    assert table.columns == ["PROTOCOL", "IN_BYTES"]
    assert table.kinds == {"PROTOCOL": "categorical", "IN_BYTES": "numeric"}


def test_header_only_file_is_empty(tmp_path):
    table = parse_csv(write(tmp_path, []))
    assert table.records == [] and table.errors == []


def test_out_of_range_port_is_a_row_error(tmp_path):
    table = parse_csv(write(tmp_path, ["10.0.0.1,70000,10.0.0.2,80,tcp,1,0,Benign",
                                       "10.0.0.1,5000,10.0.0.2,80,tcp,1,1,DoS"]))
    assert len(table.errors) == 1 and len(table.records) == 1
    assert table.errors[0].line == 2 and "70000" in str(table.errors[0])


@pytest.mark.parametrize("row, fragment", [
    ("10.0.0.300,1,10.0.0.2,80,tcp,1,0,Benign", "10.0.0.300"),
    ("10.0.0.1,x,10.0.0.2,80,tcp,1,0,Benign", "'x'"),
    ("10.0.0.1,1,10.0.0.2,80,tcp,1,0", "fields"),
    ("10.0.0.1,1,10.0.0.2,80,tcp,1,0,DoS", "disagrees"),
    ("10.0.0.1,1,10.0.0.2,80,tcp,1,maybe,DoS", "maybe"),
])
def test_malformed_rows_reported_with_line(tmp_path, row, fragment):
    table = parse_csv(write(tmp_path, ["10.0.0.9,1,10.0.0.2,80,tcp,1,0,Benign", row]))
    assert len(table.records) == 1 and len(table.errors) == 1
    assert "line 3" in str(table.errors[0]) and fragment in str(table.errors[0])


def test_missing_mapped_column_names_it(tmp_path):
    path = write(tmp_path, [], header="IPV4_SRC_ADDR,L4_SRC_PORT,IPV4_DST_ADDR,Label,Attack")
    with pytest.raises(SchemaError, match="L4_DST_PORT"):
        parse_csv(path)


def test_custom_column_map(tmp_path):
    path = write(tmp_path, ["10.0.0.1,1,10.0.0.2,2,5,normal,Normal"],
                 header="sip,sport,dip,dport,bytes,y,family")
    cm = ColumnMap("sip", "sport", "dip", "dport", "y", "family", benign_name="Normal")
    (rec,) = parse_csv(path, cm).records
    assert rec.binary_label == BENIGN and rec.values == ("5",)


def test_unlabeled_input_gets_placeholder_labels(tmp_path):
    path = write(tmp_path, ["10.0.0.1,1,10.0.0.2,2,7"],
                 header="IPV4_SRC_ADDR,L4_SRC_PORT,IPV4_DST_ADDR,L4_DST_PORT,IN_BYTES")
    with pytest.raises(SchemaError):
        parse_csv(path)
    (rec,) = parse_csv(path, labels=False).records
    assert rec.attack_class == "Benign"


def _table(tmp_path, columns, values, kinds_hint=()):
    header = "IPV4_SRC_ADDR,L4_SRC_PORT,IPV4_DST_ADDR,L4_DST_PORT," + ",".join(columns) + \
        ",Label,Attack"
    rows = [f"10.0.0.{i % 200 + 1},{1000 + i},10.0.1.1,80," + ",".join(map(str, v)) + ",0,Benign"
            for i, v in enumerate(values)]
    return parse_csv(write(tmp_path, rows, header=header), ColumnMap(categorical=kinds_hint))


def test_two_point_zscore(tmp_path):
    table = _table(tmp_path, ["x"], [[2], [4]])
    schema = fit_schema(table.records, table)
    enc = schema.columns[0]
    assert (enc.mean, enc.std) == (3.0, 1.0)
    assert encode(table.records, table, schema).features[:, 0].tolist() == [-1.0, 1.0]


def test_constant_column_encodes_to_zero(tmp_path):
    table = _table(tmp_path, ["x"], [[5], [5], [5]])
    data = encode(table.records, table, fit_schema(table.records, table))
    assert data.features[:, 0].tolist() == [0.0, 0.0, 0.0]


def test_categorical_onehot_width(tmp_path):
    table = _table(tmp_path, ["proto"], [["tcp"], ["udp"], ["icmp"], ["tcp"]])
    schema = fit_schema(table.records, table)
    assert schema.dim == len({"tcp", "udp", "icmp"})
    assert schema.feature_names == ["proto=icmp", "proto=tcp", "proto=udp"]


def test_high_cardinality_categorical_dropped_with_warning(tmp_path):
    table = _table(tmp_path, ["host", "x"], [[f"h{i}", i] for i in range(40)])
    with pytest.warns(UserWarning, match="host"):
        schema = fit_schema(table.records, table)
    assert [c.kind for c in schema.columns] == ["dropped", "numeric"]
    assert schema.dim == 1


def test_all_columns_dropped_is_schema_error(tmp_path):
    table = _table(tmp_path, ["host"], [[f"h{i}"] for i in range(40)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(SchemaError, match="dropped"):
            fit_schema(table.records, table)


def test_categorical_mode_drop(tmp_path):
    table = _table(tmp_path, ["proto", "x"], [["tcp", 1], ["udp", 2]])
    schema = fit_schema(table.records, table, ColumnMap(categorical_mode="drop"))
    assert schema.dim == 1


def test_forced_categorical_numeric_column(tmp_path):
    table = _table(tmp_path, ["proto", "x"], [[6, 1], [17, 2]], kinds_hint=("proto",))
    assert table.kinds["proto"] == "categorical"
    assert fit_schema(table.records, table).dim == 3


def test_fit_on_empty_train_is_error(tmp_path):
    table = _table(tmp_path, ["x"], [[1]])
    with pytest.raises(SchemaError):
        fit_schema([], table)


def test_no_leakage_from_test_rows(tmp_path, rng):
    values = [[float(v)] for v in rng.normal(size=200)]
    values += [[float(v)] for v in rng.normal(loc=50.0, size=100)]
    table = _table(tmp_path, ["x"], values)
    train, test = table.records[:200], table.records[200:]
    schema = fit_schema(train, table)
    leaky = fit_schema(test, table)
    assert schema.columns[0].mean != leaky.columns[0].mean
    a = encode(train, table, schema).features
    b = encode(train, table, fit_schema(train, table)).features
    np.testing.assert_array_equal(a, b)
    # train rows alone determine the encoding; appending test rows changes nothing
    both = encode(table.records, table, schema).features[:200]
    np.testing.assert_array_equal(a, both)


def test_encoding_is_pure_and_roundtrips(tmp_path, rng):
    cats = ["tcp", "udp", "icmp", "gre"]
    values = [[cats[k], float(x)] for k, x in zip(rng.integers(0, 4, 50), rng.normal(size=50))]
    table = _table(tmp_path, ["proto", "x"], values)
    schema = fit_schema(table.records, table)
    a = encode(table.records, table, schema)
    b = encode(table.records, table, schema)
    assert a.features.tobytes() == b.features.tobytes()
    for rec, vec in zip(table.records, a.features):
        assert decode_category(schema, vec, "proto") == rec.values[0]


def test_unseen_category_is_all_zero_block(tmp_path):
    table = _table(tmp_path, ["proto"], [["tcp"], ["udp"], ["sctp"]])
    schema = fit_schema(table.records[:2], table)
    vec = encode(table.records[2:], table, schema).features[0]
    assert vec.tolist() == [0.0, 0.0]
    assert decode_category(schema, vec, "proto") is None


def test_nonfinite_values_clamped_and_counted(tmp_path):
    table = _table(tmp_path, ["x"], [[1], [3], ["inf"], ["nan"], ["-inf"]])
    schema = fit_schema(table.records, table)
    enc = schema.columns[0]
    assert (enc.fill_max, enc.fill_min) == (3.0, 1.0)
    data = encode(table.records, table, schema)
    assert data.nonfinite == 3
    raw = data.features[:, 0] * enc.std + enc.mean
    np.testing.assert_allclose(raw, [1, 3, 3, 0, 1], atol=1e-12)


def test_schema_serialization_roundtrip(tmp_path):
    from egsage.flow_ingest import FeatureSchema
    table = _table(tmp_path, ["proto", "x"], [["tcp", 1], ["udp", 2]])
    schema = fit_schema(table.records, table)
    again = FeatureSchema.from_dict(schema.to_dict())
    assert again.to_dict() == schema.to_dict()


# ---------------------------------------------------------------------------
# split


def test_split_seventy_percent():
    a = split(["Benign"] * 1000, seed=1, train_fraction=0.7)
    assert abs(int(a.is_train.sum()) - 700) <= 5


def test_split_train_fraction_one():
    a = split(["Benign"] * 40 + ["DoS"] * 10, seed=0, train_fraction=1.0)
    assert a.is_train.all() and len(a.test_idx) == 0


def test_subsample_ten_percent():
    a = split(["Benign"] * 10000, seed=3, train_fraction=0.7, subsample_fraction=0.1)
    assert abs(len(a.retained) - 1000) <= 30
    assert a.total == 10000


def test_stratified_class_proportions(rng):
    classes = list(rng.choice(["Benign", "DoS", "Scan", "XSS"], p=[0.6, 0.25, 0.1, 0.05],
                              size=5000))
    a = split(classes, seed=7)
    arr = np.array(classes)
    for c in set(classes):
        full = (arr == c).mean()
        tr = (arr[a.train_idx] == c).mean()
        te = (arr[a.test_idx] == c).mean()
        assert abs(tr - full) < 0.01 and abs(te - full) < 0.01


def test_single_record_class_goes_to_train():
    classes = ["Benign"] * 99 + ["Rare"]
    with pytest.warns(UserWarning, match="Rare"):
        a = split(classes, seed=0)
    assert 99 in a.train_idx


def test_split_deterministic():
    classes = ["Benign"] * 500 + ["DoS"] * 300
    a, b = split(classes, seed=11, subsample_fraction=0.5), split(classes, 11, subsample_fraction=0.5)
    np.testing.assert_array_equal(a.retained, b.retained)
    np.testing.assert_array_equal(a.is_train, b.is_train)
    c = split(classes, seed=12, subsample_fraction=0.5)
    assert not np.array_equal(a.retained, c.retained)


@pytest.mark.parametrize("bad", [0.0, -0.1, 1.5])
def test_split_fraction_bounds(bad):
    with pytest.raises(ValueError):
        split(["Benign"] * 10, seed=0, train_fraction=bad)
    with pytest.raises(ValueError):
        split(["Benign"] * 10, seed=0, subsample_fraction=bad)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(200, 3000), frac=st.floats(0.05, 1.0), seed=st.integers(0, 2**31),
       stratify=st.booleans(), attack_share=st.floats(0.0, 0.5))
def test_split_ratio_property(n, frac, seed, stratify, attack_share):
    k = int(n * attack_share)
    classes = ["Benign"] * (n - k) + [ATTACK] * k
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = split(classes, seed, train_fraction=frac, stratify=stratify)
    assert abs(a.is_train.mean() - frac) <= 0.005
    assert len(np.unique(a.retained)) == len(a.retained) == n
