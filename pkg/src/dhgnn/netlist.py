"""Line-based text formats: netlists and target tables.

Grammar (UTF-8, LF, '#' starts a comment anywhere on a line):

    NETLIST <name>
    CELL <id> type=<str> width=<float> height=<float> orient=<0..7>
    NET <id> driver=<cell-id> sinks=<comma-separated cell-ids, may be empty>

Targets:

    NET_TARGET <net-id> hpwl=<float> demand=<float>
    CELL_TARGET <cell-id> congestion=<float>

Ids in files are arbitrary integers; parsing canonicalizes them to dense
indices in ascending id order, keeping the originals in a NetlistDoc so
serialization round-trips. Wirelength is stored in the file raw and held
in memory as log2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, TextIO

import numpy as np

from .hypergraph import CellRecord, DanglingCellRef, DirectedHypergraph, NetRecord, build

CONGESTION_THRESHOLD = 0.9  # ratio >= 0.9 counts as congested


class NetlistSyntaxError(ValueError):
    def __init__(self, line: int, col: int, msg: str):
        super().__init__(f"line {line}, col {col}: {msg}")
        self.line = line
        self.col = col


class UnknownId(ValueError):
    """Target line references an id the netlist never declared."""


class NonPositiveWirelength(ValueError):
    """Raw wirelength must be positive for log2 to exist."""


@dataclass
class NetlistDoc:
    """Original file ids for a parsed design, dense index = array position."""

    name: str
    cell_ids: np.ndarray
    net_ids: np.ndarray

    @cached_property
    def cell_index(self) -> dict[int, int]:
        return {int(c): i for i, c in enumerate(self.cell_ids)}

    @cached_property
    def net_index(self) -> dict[int, int]:
        return {int(c): i for i, c in enumerate(self.net_ids)}

    @classmethod
    def dense(cls, name: str, n_cells: int, n_nets: int) -> "NetlistDoc":
        return cls(name=name, cell_ids=np.arange(n_cells, dtype=np.int64),
                   net_ids=np.arange(n_nets, dtype=np.int64))


@dataclass
class TargetTable:
    """Per-net and per-cell targets; NaN marks a missing entry."""

    hpwl_log2: np.ndarray
    demand: np.ndarray
    congestion: np.ndarray

    def congested_labels(self) -> np.ndarray:
        """1 where congestion >= 0.9 (the bin is closed below), else 0."""
        with np.errstate(invalid="ignore"):
            return (self.congestion >= CONGESTION_THRESHOLD).astype(np.int64)

    def net_mask(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.hpwl_log2) & np.isfinite(self.demand))

    def cell_mask(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.congestion))


def _strip_comment(line: str) -> str:
    cut = line.find("#")
    return line if cut < 0 else line[:cut]


def _tokens_with_cols(line: str) -> list[tuple[str, int]]:
    out = []
    i = 0
    while i < len(line):
        if line[i].isspace():
            i += 1
            continue
        j = i
        while j < len(line) and not line[j].isspace():
            j += 1
        out.append((line[i:j], i + 1))
        i = j
    return out


def _want_kv(tok: str, col: int, key: str, lineno: int) -> str:
    prefix = key + "="
    if not tok.startswith(prefix):
        raise NetlistSyntaxError(lineno, col, f"expected {prefix}..., found {tok!r}")
    return tok[len(prefix):]


def _parse_int(text: str, lineno: int, col: int, what: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise NetlistSyntaxError(lineno, col, f"bad {what}: {text!r}") from None


def _parse_float(text: str, lineno: int, col: int, what: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise NetlistSyntaxError(lineno, col, f"bad {what}: {text!r}") from None
    if not math.isfinite(val):
        raise NetlistSyntaxError(lineno, col, f"{what} must be finite")
    return val


def parse_netlist(stream: TextIO | str) -> tuple[DirectedHypergraph, NetlistDoc]:
    lines = stream.splitlines() if isinstance(stream, str) else stream
    name: str | None = None
    cells: dict[int, CellRecord] = {}
    raw_nets: dict[int, tuple[int, list[int], int]] = {}  # id -> (driver, sinks, line)
    for lineno, raw in enumerate(lines, 1):
        toks = _tokens_with_cols(_strip_comment(raw.rstrip("\n")))
        if not toks:
            continue
        (head, hcol) = toks[0]
        if name is None:
            if head != "NETLIST":
                raise NetlistSyntaxError(lineno, hcol, "file must start with 'NETLIST <name>'")
            if len(toks) != 2:
                raise NetlistSyntaxError(lineno, hcol, "NETLIST takes exactly one name")
            name = toks[1][0]
            continue
        if head == "CELL":
            if len(toks) != 6:
                raise NetlistSyntaxError(lineno, hcol, "CELL takes id and 4 key=value fields")
            cid = _parse_int(toks[1][0], lineno, toks[1][1], "cell id")
            if cid in cells:
                raise NetlistSyntaxError(lineno, toks[1][1], f"duplicate cell id {cid}")
            type_tag = _want_kv(toks[2][0], toks[2][1], "type", lineno)
            width = _parse_float(_want_kv(toks[3][0], toks[3][1], "width", lineno),
                                 lineno, toks[3][1], "width")
            height = _parse_float(_want_kv(toks[4][0], toks[4][1], "height", lineno),
                                  lineno, toks[4][1], "height")
            orient = _parse_int(_want_kv(toks[5][0], toks[5][1], "orient", lineno),
                                lineno, toks[5][1], "orient")
            if not 0 <= orient <= 7:
                raise NetlistSyntaxError(lineno, toks[5][1], f"orient {orient} outside 0..7")
            try:
                cells[cid] = CellRecord(type_tag, width, height, orient)
            except ValueError as e:
                raise NetlistSyntaxError(lineno, toks[3][1], str(e)) from None
        elif head == "NET":
            if len(toks) != 4:
                raise NetlistSyntaxError(lineno, hcol, "NET takes id, driver=, sinks=")
            nid = _parse_int(toks[1][0], lineno, toks[1][1], "net id")
            if nid in raw_nets:
                raise NetlistSyntaxError(lineno, toks[1][1], f"duplicate net id {nid}")
            driver = _parse_int(_want_kv(toks[2][0], toks[2][1], "driver", lineno),
                                lineno, toks[2][1], "driver id")
            sink_text = _want_kv(toks[3][0], toks[3][1], "sinks", lineno)
            sinks = []
            if sink_text:
                for piece in sink_text.split(","):
                    sinks.append(_parse_int(piece, lineno, toks[3][1], "sink id"))
            raw_nets[nid] = (driver, sinks, lineno)
        else:
            raise NetlistSyntaxError(lineno, hcol, f"unknown directive {head!r}")
    if name is None:
        raise NetlistSyntaxError(1, 1, "empty file: missing NETLIST header")

    cell_ids = np.array(sorted(cells), dtype=np.int64)
    net_ids = np.array(sorted(raw_nets), dtype=np.int64)
    doc = NetlistDoc(name=name, cell_ids=cell_ids, net_ids=net_ids)
    cmap = doc.cell_index

    def resolve(cid: int, lineno: int) -> int:
        if cid not in cmap:
            raise DanglingCellRef(f"line {lineno}: cell id {cid} not declared")
        return cmap[cid]

    records = [cells[int(c)] for c in cell_ids]
    nets = []
    for nid in net_ids:
        driver, sinks, lineno = raw_nets[int(nid)]
        nets.append(NetRecord(resolve(driver, lineno),
                              tuple(resolve(s, lineno) for s in sinks)))
    return build(records, nets), doc


def serialize_netlist(g: DirectedHypergraph, doc: NetlistDoc | None = None) -> str:
    if doc is None:
        doc = NetlistDoc.dense("design", g.n_cells, g.n_nets)
    out = [f"NETLIST {doc.name}"]
    for i, cell in enumerate(g.cells):
        out.append(
            f"CELL {int(doc.cell_ids[i])} type={cell.type_tag} "
            f"width={float(cell.width)!r} height={float(cell.height)!r} orient={cell.orient}"
        )
    for j, net in enumerate(g.nets):
        sinks = ",".join(str(int(doc.cell_ids[s])) for s in net.sinks)
        out.append(
            f"NET {int(doc.net_ids[j])} driver={int(doc.cell_ids[net.driver])} sinks={sinks}"
        )
    return "\n".join(out) + "\n"


def parse_targets(stream: TextIO | str, g: DirectedHypergraph,
                  doc: NetlistDoc | None = None) -> TargetTable:
    if doc is None:
        doc = NetlistDoc.dense("design", g.n_cells, g.n_nets)
    lines = stream.splitlines() if isinstance(stream, str) else stream
    hpwl = np.full(g.n_nets, np.nan)
    demand = np.full(g.n_nets, np.nan)
    congestion = np.full(g.n_cells, np.nan)
    for lineno, raw in enumerate(lines, 1):
        toks = _tokens_with_cols(_strip_comment(raw.rstrip("\n")))
        if not toks:
            continue
        head, hcol = toks[0]
        if head == "NET_TARGET":
            if len(toks) != 4:
                raise NetlistSyntaxError(lineno, hcol, "NET_TARGET takes id, hpwl=, demand=")
            nid = _parse_int(toks[1][0], lineno, toks[1][1], "net id")
            if nid not in doc.net_index:
                raise UnknownId(f"line {lineno}: net id {nid} not in netlist")
            j = doc.net_index[nid]
            if np.isfinite(hpwl[j]) or np.isfinite(demand[j]):
                raise NetlistSyntaxError(lineno, toks[1][1], f"duplicate target for net {nid}")
            wl = _parse_float(_want_kv(toks[2][0], toks[2][1], "hpwl", lineno),
                              lineno, toks[2][1], "hpwl")
            if wl <= 0:
                raise NonPositiveWirelength(f"line {lineno}: wirelength {wl} has no log2")
            dem = _parse_float(_want_kv(toks[3][0], toks[3][1], "demand", lineno),
                               lineno, toks[3][1], "demand")
            if dem < 0:
                raise NetlistSyntaxError(lineno, toks[3][1], "demand must be >= 0")
            hpwl[j] = math.log2(wl)
            demand[j] = dem
        elif head == "CELL_TARGET":
            if len(toks) != 3:
                raise NetlistSyntaxError(lineno, hcol, "CELL_TARGET takes id, congestion=")
            cid = _parse_int(toks[1][0], lineno, toks[1][1], "cell id")
            if cid not in doc.cell_index:
                raise UnknownId(f"line {lineno}: cell id {cid} not in netlist")
            i = doc.cell_index[cid]
            if np.isfinite(congestion[i]):
                raise NetlistSyntaxError(lineno, toks[1][1], f"duplicate target for cell {cid}")
            ratio = _parse_float(_want_kv(toks[2][0], toks[2][1], "congestion", lineno),
                                 lineno, toks[2][1], "congestion")
            if ratio < 0:
                raise NetlistSyntaxError(lineno, toks[2][1], "congestion must be >= 0")
            congestion[i] = ratio
        else:
            raise NetlistSyntaxError(lineno, hcol, f"unknown directive {head!r}")
    return TargetTable(hpwl_log2=hpwl, demand=demand, congestion=congestion)


def serialize_targets(t: TargetTable, doc: NetlistDoc | None = None) -> str:
    if doc is None:
        doc = NetlistDoc.dense("design", len(t.congestion), len(t.hpwl_log2))
    out = []
    for j in range(len(t.hpwl_log2)):
        if np.isfinite(t.hpwl_log2[j]) and np.isfinite(t.demand[j]):
            raw = float(2.0 ** t.hpwl_log2[j])
            out.append(f"NET_TARGET {int(doc.net_ids[j])} hpwl={raw!r} demand={float(t.demand[j])!r}")
    for i in range(len(t.congestion)):
        if np.isfinite(t.congestion[i]):
            out.append(f"CELL_TARGET {int(doc.cell_ids[i])} congestion={float(t.congestion[i])!r}")
    return "\n".join(out) + ("\n" if out else "")
