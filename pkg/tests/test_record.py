import pytest
from hypothesis import given, strategies as st

from anonlog.parsers import parse_netflow
from anonlog.record import (
    FieldClass,
    FieldValue,
    LogStream,
    SchemaMismatch,
    UnknownField,
    UnknownSchema,
    classify_field,
    field_role,
    format_ipv4,
    parse_ipv4,
    record_equal_modulo,
)

LINE = "1086048000.5,1086048001,10.0.0.1,192.168.77.29,40000,80,TCP,3,180"


def test_field_value_validation():
    with pytest.raises(ValueError):
        FieldValue(FieldClass.IPV4_SRC, 2**32)
    with pytest.raises(ValueError):
        FieldValue(FieldClass.PORT_DST, 70000)
    with pytest.raises(TypeError):
        FieldValue(FieldClass.USER_ID, 5)
    with pytest.raises(TypeError):
        FieldValue(FieldClass.COUNT, True)
    with pytest.raises(ValueError):
        FieldValue(FieldClass.TIMESTAMP, -1)


def test_classification_tables():
    assert classify_field("netflow", "dstport") is FieldClass.PORT_DST
    assert classify_field("iptables", "src.1") is FieldClass.IPV4_OTHER
    assert classify_field("clf", "authuser") is FieldClass.USER_ID
    assert field_role("clf", "authuser") == "authuser"
    assert field_role("clf", "ident") == "ident"
    assert field_role("syslog", "hostname") == "hostname"
    with pytest.raises(UnknownSchema):
        classify_field("pcap", "x")
    with pytest.raises(UnknownField):
        classify_field("netflow", "vlan")


def test_record_access_and_replace():
    rec = parse_netflow(LINE)
    assert rec["dstaddr"].value == parse_ipv4("192.168.77.29")
    assert [n for n, _ in rec.of_class(FieldClass.TIMESTAMP)] == ["start", "end"]
    new = rec.replace({"dstport": 443})
    assert new["dstport"] == FieldValue(FieldClass.PORT_DST, 443)
    assert rec["dstport"].value == 80
    with pytest.raises(KeyError):
        rec.replace({"nope": 1})
    with pytest.raises(ValueError):
        rec.replace({"dstport": FieldValue(FieldClass.PORT_SRC, 1)})


def test_record_equal_modulo():
    rec = parse_netflow(LINE)
    other = rec.replace({"srcaddr": 1, "dstaddr": 2})
    assert not record_equal_modulo(rec, other)
    assert record_equal_modulo(rec, other, [FieldClass.IPV4_SRC, FieldClass.IPV4_DST])
    from anonlog.parsers import parse_clf
    clf = parse_clf('1.2.3.4 - - [01/Jun/2004:00:00:00 +0000] "GET / HTTP/1.0" 200 5')
    with pytest.raises(SchemaMismatch):
        record_equal_modulo(rec, clf)


def test_stream_rejects_mixed_schemas():
    from anonlog.parsers import parse_clf
    clf = parse_clf('1.2.3.4 - - [01/Jun/2004:00:00:00 +0000] "GET / HTTP/1.0" 200 5')
    with pytest.raises(ValueError):
        LogStream("netflow", (parse_netflow(LINE), clf))


@given(st.integers(0, 2**32 - 1))
def test_ipv4_text_round_trip(n):
    assert parse_ipv4(format_ipv4(n)) == n


@pytest.mark.parametrize("bad", ["1.2.3", "1.2.3.256", "a.b.c.d", "1..2.3", "1.2.3.4.5", "١.2.3.4"])
def test_ipv4_rejects(bad):
    with pytest.raises(ValueError):
        parse_ipv4(bad)
