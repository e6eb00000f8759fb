import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from proxnet.core import FormatError, InvalidParameterError
from proxnet.ingest import (
    BluetoothScan,
    CommEvent,
    LocationFix,
    SurveyAnswer,
    WifiReading,
    channel_paths,
    deduplicate,
    load_dataset,
    load_roster,
    parse_channel,
    serialize_channel,
)

BT = "user_id,timestamp_s,seen_device,rssi_dbm\n"
WIFI = "user_id,timestamp_s,ap_id,rssi_dbm\n"
LOC = "user_id,timestamp_s,lat_deg,lon_deg,accuracy_m\n"
COMM = "user_id,timestamp_s,peer_hash,channel,direction,duration_s\n"
SURVEY = "user_id,item_id,score\n"


def parse(text, kind):
    return parse_channel(text.encode("utf-8"), kind)


def test_parse_valid_rows():
    recs, rep = parse(BT + "u1,100,d2,-70\nu1,101,d3,\n", "bluetooth")
    assert recs == [BluetoothScan("u1", 100, "d2", -70), BluetoothScan("u1", 101, "d3", None)]
    assert (rep.total_rows, rep.accepted, rep.rejected) == (2, 2, 0)


def test_header_mismatch_is_fatal():
    with pytest.raises(FormatError):
        parse("a,b,c\n", "wifi")
    with pytest.raises(FormatError):
        parse("", "wifi")
    with pytest.raises(InvalidParameterError):
        parse(WIFI, "radio")


def test_crlf_and_bom_accepted():
    data = ("﻿" + WIFI + "u1,5,ap1,-50\r\n").encode("utf-8")
    recs, rep = parse_channel(io.BytesIO(data), "wifi")
    assert recs == [WifiReading("u1", 5, "ap1", -50)]


@pytest.mark.parametrize(
    "row,reason",
    [
        ("u1,100,ap1,-121", "range"),
        ("u1,100,ap1,5", "range"),
        ("u1,1e3,ap1,-50", "parse"),
        ("u1,-4,ap1,-50", "range"),
        ("u1,100,ap1", "field_count"),
        (",100,ap1,-50", "missing"),
    ],
)
def test_wifi_row_errors(row, reason):
    recs, rep = parse(WIFI + row + "\n", "wifi")
    assert recs == []
    assert [(e.line, e.reason) for e in rep.errors] == [(2, reason)]


@pytest.mark.parametrize(
    "row",
    [
        "u1,1,91,0,10",
        "u1,1,0,-181,10",
        "u1,1,nan,0,10",
        "u1,1,0,0,0",
        "u1,1,0,0,inf",
    ],
)
def test_location_row_errors(row):
    recs, rep = parse(LOC + row + "\n", "location")
    assert recs == [] and rep.rejected == 1


@pytest.mark.parametrize(
    "row,ok",
    [
        ("u1,1,p,call,outgoing,30", True),
        ("u1,1,p,call,missed,0", True),
        ("u1,1,p,sms,incoming,0", True),
        ("u1,1,p,sms,incoming,4", False),
        ("u1,1,p,sms,missed,0", False),
        ("u1,1,p,call,missed,3", False),
        ("u1,1,p,call,outgoing,-1", False),
        ("u1,1,p,fax,outgoing,0", False),
        ("u1,1,p,call,sideways,0", False),
    ],
)
def test_comm_invariants(row, ok):
    recs, rep = parse(COMM + row + "\n", "comm")
    assert (rep.accepted == 1) is ok


def test_survey_scale():
    recs, rep = parse(SURVEY + "u1,q1,5\nu1,q2,0\nu1,q3,6\n", "survey")
    assert recs == [SurveyAnswer("u1", "q1", 5)]
    assert rep.rejected == 2


def test_bad_utf8_row_is_reported_not_fatal():
    data = WIFI.encode() + b"u1,1,\xff\xfe,-50\nu1,2,ap,-50\n"
    recs, rep = parse_channel(data, "wifi")
    assert len(recs) == 1
    assert rep.errors[0].reason == "encoding"


def test_report_serializable():
    _, rep = parse(WIFI + "x\n", "wifi")
    d = rep.to_dict()
    assert d["rejected"] == 1 and d["errors"][0]["line"] == 2


records_st = {
    "bluetooth": st.builds(
        BluetoothScan,
        st.text("abc", min_size=1, max_size=3),
        st.integers(0, 2**40),
        st.text("xyz", min_size=1, max_size=3),
        st.one_of(st.none(), st.integers(-120, 0)),
    ),
    "location": st.builds(
        LocationFix,
        st.text("abc", min_size=1, max_size=3),
        st.integers(0, 2**40),
        st.floats(-90, 90),
        st.floats(-180, 180),
        st.floats(0.001, 1e5),
    ),
    "comm": st.one_of(
        st.builds(CommEvent, st.just("u"), st.integers(0, 10**9), st.just("p"), st.just("call"),
                  st.sampled_from(["incoming", "outgoing"]), st.integers(0, 10**5)),
        st.builds(CommEvent, st.just("u"), st.integers(0, 10**9), st.just("p"), st.just("sms"),
                  st.sampled_from(["incoming", "outgoing"]), st.just(0)),
    ),
}


@pytest.mark.parametrize("kind", sorted(records_st))
@given(data=st.data())
def test_serialize_roundtrip(kind, data):
    recs = data.draw(st.lists(records_st[kind], max_size=20))
    parsed, rep = parse_channel(serialize_channel(recs, kind), kind)
    assert parsed == recs
    assert rep.rejected == 0


def test_deduplicate_keeps_first_order():
    a, b = WifiReading("u", 1, "x", -1), WifiReading("u", 2, "x", -1)
    assert deduplicate([a, b, a, b, a]) == [a, b]


def test_roster():
    users, devices = load_roster(b"user_id,device_id\nu1,d1\nu2,d2\nu3,\n")
    assert users == {"u1", "u2", "u3"}
    assert devices == {"d1": "u1", "d2": "u2"}
    with pytest.raises(FormatError):
        load_roster(b"user_id,device_id\nu1,d1\nu2,d1\n")


@pytest.fixture
def data_dir(tmp_path):
    (tmp_path / "bluetooth.csv").write_text(BT + "u2,50,d1,-60\nu1,20,d2,-60\nu1,10,ext,-80\nu1,20,d2,-60\n")
    (tmp_path / "survey.csv").write_text(SURVEY + "u2,q1,3\nu1,q2,4\nu1,q1,2\n")
    (tmp_path / "roster.csv").write_text("user_id,device_id\nu1,d1\nu2,d2\nu3,d3\n")
    return tmp_path


def test_load_dataset(data_dir):
    paths = channel_paths(data_dir)
    assert set(paths) == {"bluetooth", "survey"}
    ds = load_dataset(paths, data_dir / "roster.csv")
    assert [(s.observer, s.t) for s in ds.bluetooth] == [("u1", 10), ("u1", 20), ("u2", 50)]
    assert [(a.user, a.item) for a in ds.survey] == [("u1", "q1"), ("u1", "q2"), ("u2", "q1")]
    assert ds.participants == {"u1", "u2", "u3"}
    assert ds.external_devices() == {"ext"}
    assert ds.is_external("ext") and not ds.is_external("d1")
    assert ds.unique_devices() == 3
    assert ds.users("bluetooth") == ["u1", "u2"]
    assert ds.records_for("bluetooth", "u1", 15, 100) == (BluetoothScan("u1", 20, "d2", -60),)
    assert len(ds.records_for("bluetooth", "u1")) == 2
    assert ds.wifi == ()


def test_load_dataset_without_roster(data_dir):
    ds = load_dataset({"bluetooth": data_dir / "bluetooth.csv"})
    assert ds.participants == {"u1", "u2"}
    assert ds.device_owner == {}


def test_load_dataset_needs_channels():
    with pytest.raises(InvalidParameterError):
        load_dataset({})
