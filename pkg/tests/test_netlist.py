import io

import numpy as np
import pytest

from dhgnn.hypergraph import DRIVER, SINK, DanglingCellRef, DriverInSinks, DuplicateSink, incident_nets
from dhgnn.netlist import (
    NetlistDoc,
    NetlistSyntaxError,
    NonPositiveWirelength,
    TargetTable,
    UnknownId,
    parse_netlist,
    parse_targets,
    serialize_netlist,
    serialize_targets,
)

FIG_TEXT = """\
# seven cells, five nets, 1-based file ids
NETLIST fig1
CELL 1 type=std width=1.0 height=2.0 orient=0
CELL 2 type=std width=2.0 height=2.0 orient=1
CELL 3 type=buf width=3.0 height=2.0 orient=2

CELL 4 type=std width=4.0 height=2.0 orient=3
CELL 5 type=std width=5.0 height=2.0 orient=4
CELL 6 type=std width=6.0 height=2.0 orient=5
CELL 7 type=std width=7.0 height=2.0 orient=6
NET 1 driver=1 sinks=3,4   # two sinks
NET 2 driver=2 sinks=3,5,7
NET 3 driver=4 sinks=6
NET 4 driver=5 sinks=6
NET 5 driver=3 sinks=5,7
"""


def test_parse_seven_cell_example():
    g, doc = parse_netlist(FIG_TEXT)
    assert g.n_cells == 7 and g.n_nets == 5
    assert doc.name == "fig1"
    assert doc.cell_ids.tolist() == [1, 2, 3, 4, 5, 6, 7]
    assert doc.net_ids.tolist() == [1, 2, 3, 4, 5]
    # file cell 3 is dense cell 2: sink of nets 0 and 1, driver of net 4
    assert incident_nets(g, 2) == [(0, SINK), (1, SINK), (4, DRIVER)]
    assert g.cells[2].type_tag == "buf"
    assert g.nets[0].sinks == (2, 3)


def test_parse_accepts_stream_and_empty_body():
    g, doc = parse_netlist(io.StringIO("NETLIST nothing\n# only a comment\n"))
    assert g.n_cells == 0 and g.n_nets == 0
    assert doc.name == "nothing"


def test_sparse_ids_are_densified_in_ascending_order():
    text = (
        "NETLIST gaps\n"
        "CELL 40 type=a width=1 height=1 orient=0\n"
        "CELL 7 type=b width=1 height=1 orient=0\n"
        "NET 900 driver=40 sinks=7\n"
    )
    g, doc = parse_netlist(text)
    assert doc.cell_ids.tolist() == [7, 40]
    assert g.cells[0].type_tag == "b"
    assert g.nets[0].driver == 1 and g.nets[0].sinks == (0,)


def test_empty_sink_list_is_legal():
    g, _ = parse_netlist("NETLIST x\nCELL 0 type=s width=1 height=1 orient=0\nNET 0 driver=0 sinks=\n")
    assert g.nets[0].sinks == ()


def test_roundtrip_is_semantically_identical():
    g, doc = parse_netlist(FIG_TEXT)
    text = serialize_netlist(g, doc)
    g2, doc2 = parse_netlist(text)
    assert g2.cells == g.cells
    assert g2.nets == g.nets
    assert doc2.cell_ids.tolist() == doc.cell_ids.tolist()
    assert serialize_netlist(g2, doc2) == text


def test_line_order_of_nets_does_not_change_canonical_graph():
    lines = FIG_TEXT.splitlines()
    header, cells, nets = lines[:2], lines[2:10], lines[10:]
    shuffled = "\n".join(header + cells + nets[::-1]) + "\n"
    g1, _ = parse_netlist(FIG_TEXT)
    g2, _ = parse_netlist(shuffled)
    assert g1.nets == g2.nets and g1.incidence == g2.incidence


def test_syntax_errors_carry_position():
    with pytest.raises(NetlistSyntaxError) as e:
        parse_netlist("NETLIST x\nCELL 0 width=1 type=s height=1 orient=0\n")
    assert e.value.line == 2 and e.value.col == 8
    assert "type=" in str(e.value)


@pytest.mark.parametrize(
    "body,fragment",
    [
        ("CELL 0 type=s width=1 height=1 orient=0\nCELL 0 type=s width=1 height=1 orient=0\n", "duplicate cell"),
        ("NET 4 driver=0 sinks=\nNET 4 driver=0 sinks=\nCELL 0 type=s width=1 height=1 orient=0\n", "duplicate net"),
        ("CELL 0 type=s width=1 height=1 orient=8\n", "orient"),
        ("CELL 0 type=s width=-1 height=1 orient=0\n", "width"),
        ("CELL 0 type=s width=one height=1 orient=0\n", "bad width"),
        ("WIRE 0\n", "unknown directive"),
        ("NET 0 driver=0\nCELL 0 type=s width=1 height=1 orient=0\n", "NET takes"),
    ],
)
def test_malformed_lines_raise(body, fragment):
    with pytest.raises(NetlistSyntaxError, match=fragment):
        parse_netlist("NETLIST x\n" + body)


def test_missing_header_raises():
    with pytest.raises(NetlistSyntaxError, match="NETLIST"):
        parse_netlist("CELL 0 type=s width=1 height=1 orient=0\n")
    with pytest.raises(NetlistSyntaxError, match="empty file"):
        parse_netlist("# nothing here\n")


def test_undeclared_cell_reference_raises():
    with pytest.raises(DanglingCellRef):
        parse_netlist("NETLIST x\nCELL 0 type=s width=1 height=1 orient=0\nNET 0 driver=3 sinks=\n")
    with pytest.raises(DanglingCellRef):
        parse_netlist("NETLIST x\nCELL 0 type=s width=1 height=1 orient=0\nNET 0 driver=0 sinks=9\n")


def test_net_membership_errors_propagate():
    two = "NETLIST x\nCELL 0 type=s width=1 height=1 orient=0\nCELL 1 type=s width=1 height=1 orient=0\n"
    with pytest.raises(DriverInSinks):
        parse_netlist(two + "NET 0 driver=0 sinks=0,1\n")
    with pytest.raises(DuplicateSink):
        parse_netlist(two + "NET 0 driver=0 sinks=1,1\n")


@pytest.fixture
def small():
    return parse_netlist(FIG_TEXT)


def test_targets_store_log2_wirelength(small):
    g, doc = small
    t = parse_targets("NET_TARGET 1 hpwl=1024.0 demand=3.5\n", g, doc)
    assert t.hpwl_log2[0] == 10.0
    assert t.demand[0] == 3.5
    assert np.isnan(t.hpwl_log2[1:]).all()
    assert t.net_mask().tolist() == [0]
    assert t.cell_mask().tolist() == []


def test_congested_bin_is_closed_below(small):
    g, doc = small
    t = parse_targets(
        "CELL_TARGET 1 congestion=0.9\nCELL_TARGET 2 congestion=0.8999999\nCELL_TARGET 3 congestion=1.4\n",
        g, doc,
    )
    assert t.congested_labels()[:3].tolist() == [1, 0, 1]
    assert t.cell_mask().tolist() == [0, 1, 2]


def test_target_errors(small):
    g, doc = small
    with pytest.raises(NonPositiveWirelength):
        parse_targets("NET_TARGET 1 hpwl=0.0 demand=1\n", g, doc)
    with pytest.raises(NonPositiveWirelength):
        parse_targets("NET_TARGET 1 hpwl=-4 demand=1\n", g, doc)
    with pytest.raises(UnknownId):
        parse_targets("NET_TARGET 99 hpwl=8 demand=1\n", g, doc)
    with pytest.raises(UnknownId):
        parse_targets("CELL_TARGET 99 congestion=0.5\n", g, doc)
    with pytest.raises(NetlistSyntaxError, match="duplicate target"):
        parse_targets("NET_TARGET 1 hpwl=8 demand=1\nNET_TARGET 1 hpwl=8 demand=1\n", g, doc)
    with pytest.raises(NetlistSyntaxError, match="demand"):
        parse_targets("NET_TARGET 1 hpwl=8 demand=-1\n", g, doc)
    with pytest.raises(NetlistSyntaxError, match="congestion"):
        parse_targets("CELL_TARGET 1 congestion=-0.1\n", g, doc)
    with pytest.raises(NetlistSyntaxError, match="unknown directive"):
        parse_targets("CELL 1 type=s width=1 height=1 orient=0\n", g, doc)


def test_targets_roundtrip(small):
    g, doc = small
    hpwl = np.full(5, np.nan)
    demand = np.full(5, np.nan)
    congestion = np.full(7, np.nan)
    hpwl[0], demand[0] = 10.0, 3.25
    hpwl[3], demand[3] = 2.5, 0.0
    congestion[2] = 0.9375
    t = TargetTable(hpwl_log2=hpwl, demand=demand, congestion=congestion)
    text = serialize_targets(t, doc)
    assert "NET_TARGET 1 hpwl=1024.0" in text
    back = parse_targets(text, g, doc)
    assert np.allclose(back.hpwl_log2, hpwl, rtol=1e-15, equal_nan=True)
    assert np.array_equal(back.demand, demand, equal_nan=True)
    assert np.array_equal(back.congestion, congestion, equal_nan=True)


def test_serialize_targets_empty_is_empty_string():
    t = TargetTable(hpwl_log2=np.full(2, np.nan), demand=np.full(2, np.nan),
                    congestion=np.full(3, np.nan))
    assert serialize_targets(t, NetlistDoc.dense("d", 3, 2)) == ""
