import io
import math
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from v2vsim.errors import (
    ConfigError,
    TraceAttributeError,
    TraceParseError,
    TraceStructureError,
    UnknownVehicleError,
)
from v2vsim.trace import (
    Snapshot,
    SynthConfig,
    Timeline,
    VehicleClass,
    VehicleState,
    classify,
    filter_class,
    parse_fcd,
    read_csv_trace,
    synth_trace,
    vehicle_series,
    write_csv_trace,
    write_fcd,
)

MINIMAL = """<fcd-export>
  <timestep time="0.00">
    <vehicle id="a" x="0" y="0" speed="0"/>
  </timestep>
</fcd-export>"""

ABSENCE = """<?xml version="1.0" encoding="UTF-8"?>
<fcd-export xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance">
    <timestep time="0.00"/>
    <timestep time="1.00">
        <vehicle id="b" x="5.10" y="7.25" angle="90.0" type="bus_line_3" speed="8.33" pos="12.0" lane="e1_0"/>
    </timestep>
</fcd-export>
"""


def parse(text, **kw):
    return parse_fcd(io.StringIO(text), **kw)


def test_minimal_document():
    tl = parse(MINIMAL)
    assert len(tl) == 1
    assert tl.snapshots[0].time == 0.0
    (s,) = tl.snapshots[0].states
    assert (s.vehicle_id, s.pos_x, s.pos_y, s.speed) == ("a", 0.0, 0.0, 0.0)
    assert s.vehicle_class is VehicleClass.PRIVATE


def test_absent_vehicle_is_absent():
    tl = parse(ABSENCE)
    assert [len(s.states) for s in tl] == [0, 1]
    b = tl.snapshots[1].states[0]
    assert b.vehicle_class is VehicleClass.BUS
    assert b.vehicle_type == "bus_line_3"
    assert tl.step == 1.0


def test_binary_stream_accepted():
    tl = parse_fcd(io.BytesIO(ABSENCE.encode()))
    assert len(tl) == 2


def test_malformed_xml_reports_line():
    bad = "<fcd-export>\n  <timestep time=\"0\">\n    <vehicle id=\"a\" x=\"0\"\n</fcd-export>"
    with pytest.raises(TraceParseError) as exc:
        parse(bad)
    assert exc.value.line is not None and exc.value.line >= 3


def test_non_monotone_times():
    doc = '<fcd-export><timestep time="2"/><timestep time="1"/></fcd-export>'
    with pytest.raises(TraceStructureError, match="does not follow"):
        parse(doc)


def test_repeated_time_rejected():
    doc = '<fcd-export><timestep time="1"/><timestep time="1"/></fcd-export>'
    with pytest.raises(TraceStructureError):
        parse(doc)


@pytest.mark.parametrize("missing", ["id", "x", "y", "speed"])
def test_missing_attribute_names_element(missing):
    attrs = {"id": "car7", "x": "1", "y": "2", "speed": "3"}
    del attrs[missing]
    body = " ".join(f'{k}="{v}"' for k, v in attrs.items())
    doc = f'<fcd-export>\n<timestep time="0">\n<vehicle {body}/>\n</timestep>\n</fcd-export>'
    with pytest.raises(TraceAttributeError) as exc:
        parse(doc)
    msg = str(exc.value)
    assert "<vehicle" in msg and missing in msg and "line 3" in msg


def test_wrong_root():
    with pytest.raises(TraceStructureError, match="fcd-export"):
        parse("<netstate/>")


def test_duplicate_vehicle_in_timestep():
    doc = ('<fcd-export><timestep time="0"><vehicle id="a" x="0" y="0" speed="0"/>'
           '<vehicle id="a" x="1" y="0" speed="0"/></timestep></fcd-export>')
    with pytest.raises(TraceStructureError, match="duplicate"):
        parse(doc)


def test_non_numeric_attribute():
    doc = '<fcd-export><timestep time="0"><vehicle id="a" x="east" y="0" speed="0"/></timestep></fcd-export>'
    with pytest.raises(TraceAttributeError, match="'x'"):
        parse(doc)


def test_persons_and_extra_elements_ignored():
    doc = ('<fcd-export><timestep time="0"><person id="p" x="0" y="0" speed="1"/>'
           '<vehicle id="a" x="0" y="0" speed="0"/></timestep></fcd-export>')
    assert [s.vehicle_id for s in parse(doc).snapshots[0].states] == ["a"]


def test_classification_rules():
    assert classify("Bus") is VehicleClass.BUS
    assert classify("city_bus_12m") is VehicleClass.BUS
    assert classify("passenger") is VehicleClass.PRIVATE
    assert classify(None) is VehicleClass.PRIVATE
    rules = (("tram", VehicleClass.OTHER), ("bus", VehicleClass.BUS))
    assert classify("tram", rules) is VehicleClass.OTHER
    tl = parse(ABSENCE, class_rules=(("line", VehicleClass.OTHER),))
    assert tl.snapshots[1].states[0].vehicle_class is VehicleClass.OTHER


def test_step_is_median_gap():
    doc = "<fcd-export>" + "".join(f'<timestep time="{t}"/>' for t in (0, 1, 2, 4, 5)) + "</fcd-export>"
    tl = parse(doc)
    assert tl.step == 1.0
    assert tl.times == [0.0, 1.0, 2.0, 4.0, 5.0]


def test_state_invariants():
    with pytest.raises(TraceAttributeError):
        VehicleState("", 0, 0, 0)
    with pytest.raises(TraceAttributeError):
        VehicleState("a", 0, 0, -1.0)
    with pytest.raises(TraceStructureError):
        Timeline((Snapshot(0.0), Snapshot(0.0)), 1.0)
    with pytest.raises(TraceStructureError):
        Timeline((Snapshot(0.0),), 0.0)


def _mixed_snapshot():
    return Snapshot(0.0, (
        VehicleState("b1", 0, 0, 1, VehicleClass.BUS, "bus"),
        VehicleState("b2", 1, 0, 1, VehicleClass.BUS, "bus"),
        VehicleState("c1", 2, 0, 1, VehicleClass.PRIVATE, "passenger"),
        VehicleState("c2", 3, 0, 1, VehicleClass.PRIVATE, "passenger"),
        VehicleState("c3", 4, 0, 1, VehicleClass.PRIVATE, "passenger"),
    ))


def test_filter_class():
    tl = Timeline((_mixed_snapshot(),), 1.0)
    assert len(filter_class(tl, {"bus"}).snapshots[0].states) == 2
    assert filter_class(tl, set(VehicleClass)) == tl

    private_only = filter_class(tl, {VehicleClass.PRIVATE})
    buses = filter_class(private_only, {VehicleClass.BUS})
    assert len(buses) == 1 and buses.snapshots[0].states == ()


def test_fcd_round_trip_with_absences():
    tl = parse(ABSENCE)
    buf = io.StringIO()
    write_fcd(tl, buf)
    again = parse(buf.getvalue())
    assert again == tl


def test_fcd_round_trip_escapes_ids():
    tl = Timeline((Snapshot(0.5, (VehicleState('a"&<b>', 0.1, 1e-17, 3.3, VehicleClass.BUS, "bus&co"),)),), 1.0)
    buf = io.StringIO()
    write_fcd(tl, buf)
    assert parse(buf.getvalue()) == tl


def test_csv_trace_round_trip():
    tl = synth_trace(SynthConfig(n_vehicles=3, n_private=2, duration=5, step=1), seed=3)
    buf = io.StringIO()
    write_csv_trace(tl, buf)
    buf.seek(0)
    assert read_csv_trace(buf) == tl


def test_csv_trace_errors():
    with pytest.raises(TraceParseError):
        read_csv_trace(io.StringIO("time,id,x\n0,a,1\n"))
    with pytest.raises(TraceStructureError):
        read_csv_trace(io.StringIO("time,id,x,y,speed,type\n1,a,0,0,0,\n0,a,0,0,0,\n"))
    with pytest.raises(TraceAttributeError, match="line 2"):
        read_csv_trace(io.StringIO("time,id,x,y,speed,type\n0,a,0,zero,0,\n"))


def test_vehicle_series():
    tl = parse(ABSENCE)
    times, speeds = vehicle_series(tl, "b")
    assert times.tolist() == [1.0] and speeds.tolist() == [8.33]
    with pytest.raises(UnknownVehicleError):
        vehicle_series(tl, "zz")


def test_timeline_at_uses_latest_earlier_snapshot():
    tl = parse(ABSENCE)
    assert tl.at(0.5).time == 0.0
    assert tl.at(7).time == 1.0
    with pytest.raises(KeyError):
        tl.at(-1)


# --- synthetic traces ---

def test_synth_speed_bound_single_vehicle():
    cfg = SynthConfig(n_vehicles=1, duration=2, step=1, speed_min=10, speed_max=10)
    tl = synth_trace(cfg, seed=0)
    assert len(tl) == 2
    a, b = (s.states[0] for s in tl)
    assert math.hypot(b.pos_x - a.pos_x, b.pos_y - a.pos_y) <= 10 + 1e-9


def test_synth_deterministic():
    cfg = SynthConfig(n_vehicles=4, n_routes=2, n_private=3, duration=50, step=2)
    assert synth_trace(cfg, 11) == synth_trace(cfg, 11)
    assert synth_trace(cfg, 11) != synth_trace(cfg, 12)


def test_synth_cardinality():
    tl = synth_trace(SynthConfig(n_vehicles=5, duration=100, step=1), seed=5)
    assert len(tl) == 100
    assert all(len(s.states) == 5 for s in tl)
    assert tl.times[:3] == [0.0, 1.0, 2.0]


def test_synth_classes():
    tl = synth_trace(SynthConfig(n_vehicles=4, n_routes=2, n_private=6, duration=3), seed=1)
    assert tl.class_counts() == {VehicleClass.BUS: 4, VehicleClass.PRIVATE: 6}


@pytest.mark.parametrize("kw", [
    {"n_vehicles": 0, "duration": 10},
    {"n_vehicles": 1, "duration": 0},
    {"n_vehicles": 1, "duration": 10, "step": -1},
    {"n_vehicles": 1, "duration": 10, "bbox": (0, 0, 0, 10)},
    {"n_vehicles": 1, "duration": 10, "speed_min": 5, "speed_max": 1},
])
def test_synth_config_errors(kw):
    with pytest.raises(ConfigError):
        SynthConfig(**kw)


def test_synth_config_from_mapping():
    cfg = SynthConfig.from_mapping({"n_vehicles": "3", "duration": "60", "bbox": "0 0 10 20",
                                    "n_routes": "1"})
    assert cfg.bbox == (0.0, 0.0, 10.0, 20.0) and cfg.n_routes == 1
    with pytest.raises(ConfigError):
        SynthConfig.from_mapping({"n_vehicles": "3", "duration": "60", "bbox": "0 0 10"})
    with pytest.raises(ConfigError):
        SynthConfig.from_mapping({"duration": "60"})


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), routes=st.integers(0, 3),
       vmax=st.floats(0.5, 40), step=st.sampled_from([0.1, 1.0, 7.5]))
def test_synth_displacement_and_bbox(seed, routes, vmax, step):
    bbox = (-100.0, 50.0, 400.0, 300.0)
    cfg = SynthConfig(n_vehicles=4, n_routes=routes, n_private=2, duration=30 * step, step=step,
                      bbox=bbox, speed_min=0.0, speed_max=vmax)
    tl = synth_trace(cfg, seed)
    for a, b in zip(tl.snapshots, tl.snapshots[1:]):
        for sa, sb in zip(a.states, b.states):
            assert sa.vehicle_id == sb.vehicle_id
            assert math.hypot(sb.pos_x - sa.pos_x, sb.pos_y - sa.pos_y) <= vmax * step * (1 + 1e-12) + 1e-9
    for snap in tl:
        for s in snap.states:
            assert bbox[0] <= s.pos_x <= bbox[2] and bbox[1] <= s.pos_y <= bbox[3]
            assert 0 <= s.speed <= vmax


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_fcd_round_trip_property(seed):
    tl = synth_trace(SynthConfig(n_vehicles=3, n_private=2, duration=6, step=0.7), seed)
    # punch holes so some vehicles are absent from some timesteps
    snaps = [Snapshot(s.time, s.states[: (i + seed) % 6]) for i, s in enumerate(tl)]
    holed = Timeline(tuple(snaps), tl.step)
    buf = io.StringIO()
    write_fcd(holed, buf)
    again = parse(buf.getvalue())
    assert again == holed
    assert len(again) == buf.getvalue().count("<timestep")


def test_city_scale_counts_survive_fcd_round_trip():
    # 56 bus lines with one bus each plus 5000 private cars over a working day, coarse step
    cfg = SynthConfig(n_vehicles=56, n_routes=56, n_private=5000, duration=86400, step=3600,
                      bbox=(0, 0, 20000, 20000))
    tl = synth_trace(cfg, 2)
    buf = io.StringIO()
    write_fcd(tl, buf)
    back = parse_fcd(io.StringIO(buf.getvalue()))
    assert len(back) == 24 and back.step == 3600
    for snap in back:
        counts = Counter(s.vehicle_class for s in snap.states)
        assert counts == {VehicleClass.BUS: 56, VehicleClass.PRIVATE: 5000}
    assert len({s.vehicle_id.split("_")[1] for s in back.snapshots[0].states
                if s.vehicle_class is VehicleClass.BUS}) == 56
