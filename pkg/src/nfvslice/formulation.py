"""Mixed binary linear program for joint VNF placement, multi-path routing and
latency-guaranteed resource allocation, plus its two baseline reductions.

A segment ``s`` of service ``k`` runs from the node holding function ``s``
to the node holding function ``s + 1``; segment 0 starts at the source and
segment ``len(chain)`` ends at the destination. Endpoint placements are the
constant 1, so products of placement indicators only need an auxiliary
binary for interior segments.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Iterator, NamedTuple

import numpy as np
import scipy.sparse as sp

from .lp_core import EQ, GE, LE, LinearProgram
from .net_model import Instance, Link, NodeId, ServiceRequest, validate_instance


class UnsatisfiableFunction(ValueError):
    pass


class InvalidInstance(ValueError):
    pass


class Kind(str, enum.Enum):
    X_place = "X_place"
    Y_activate = "Y_activate"
    Z_pathlink = "Z_pathlink"
    R_pathrate = "R_pathrate"
    R_linkrate_onpath = "R_linkrate_onpath"
    THETA_segdelay = "THETA_segdelay"
    OMEGA_pairplace = "OMEGA_pairplace"

    @property
    def binary(self) -> bool:
        return self in _BINARY


_BINARY = {Kind.X_place, Kind.Y_activate, Kind.Z_pathlink, Kind.OMEGA_pairplace}

# index field names per kind, in the order they appear in the key tuple
_FIELDS = {
    Kind.X_place: ("k", "s", "vs"),
    Kind.Y_activate: ("vs",),
    Kind.Z_pathlink: ("k", "s", "vs", "vt", "p", "i", "j"),
    Kind.R_pathrate: ("k", "s", "vs", "vt", "p"),
    Kind.R_linkrate_onpath: ("k", "s", "vs", "vt", "p", "i", "j"),
    Kind.THETA_segdelay: ("k", "s"),
    Kind.OMEGA_pairplace: ("k", "s", "vs", "vt"),
}
_NAME_ORDER = ("k", "s", "vs", "vt", "p", "i", "j")


class Family(str, enum.Enum):
    """Constraint families; each row carries exactly one."""

    placement_once = "placement_once"            # one function per flow per node
    assign_exactly_one = "assign_exactly_one"    # each function on exactly one node
    node_capacity = "node_capacity"
    activation = "activation"
    segment_rate = "segment_rate"                # path rates of a segment sum to lambda
    path_link_indicator = "path_link_indicator"  # z <= placement product
    link_rate_coupling = "link_rate_coupling"    # r_ij <= lambda z_ij
    link_capacity = "link_capacity"
    rate_conservation = "rate_conservation"
    indicator_conservation = "indicator_conservation"
    segment_delay = "segment_delay"
    e2e_threshold = "e2e_threshold"
    linearize = "linearize"
    symmetry = "symmetry"


def bracket_name(tag: str, fields: dict) -> str:
    body = ",".join(f"{f}={fields[f]}" for f in _NAME_ORDER if f in fields)
    return f"{tag}[{body}]"


class VarKey(NamedTuple):
    kind: Kind
    index: tuple

    @property
    def fields(self) -> dict:
        return dict(zip(_FIELDS[self.kind], self.index))

    @property
    def name(self) -> str:
        return bracket_name(self.kind.value, self.fields)


def X(k, s, v) -> VarKey:
    return VarKey(Kind.X_place, (k, s, v))


def Y(v) -> VarKey:
    return VarKey(Kind.Y_activate, (v,))


def Z(k, s, a, b, p, i, j) -> VarKey:
    return VarKey(Kind.Z_pathlink, (k, s, a, b, p, i, j))


def R(k, s, a, b, p) -> VarKey:
    return VarKey(Kind.R_pathrate, (k, s, a, b, p))


def RL(k, s, a, b, p, i, j) -> VarKey:
    return VarKey(Kind.R_linkrate_onpath, (k, s, a, b, p, i, j))


def THETA(k, s) -> VarKey:
    return VarKey(Kind.THETA_segdelay, (k, s))


def OMEGA(k, s, a, b) -> VarKey:
    return VarKey(Kind.OMEGA_pairplace, (k, s, a, b))


@dataclass(frozen=True)
class Column:
    key: VarKey
    lb: float
    ub: float

    @property
    def binary(self) -> bool:
        return self.key.kind.binary


@dataclass(frozen=True)
class Row:
    cols: tuple[int, ...]
    vals: tuple[float, ...]
    rel: str
    rhs: float
    tag: Family
    fields: tuple[tuple[str, object], ...]

    @property
    def name(self) -> str:
        return bracket_name(self.tag.value, dict(self.fields))


@dataclass(frozen=True, eq=False)
class ModelIR:
    columns: tuple[Column, ...]
    rows: tuple[Row, ...]
    objective: dict[int, float]
    constant: float = 0.0
    variant: str = "full"
    path_budget: int = 1
    index: dict[VarKey, int] = field(default_factory=dict, repr=False)

    def col(self, key: VarKey) -> int:
        return self.index[key]

    def has(self, key: VarKey) -> bool:
        return key in self.index

    @cached_property
    def binary_columns(self) -> np.ndarray:
        return np.array([i for i, c in enumerate(self.columns) if c.binary], dtype=int)

    @cached_property
    def integral_objective(self) -> bool:
        """True when every feasible objective value is an integer."""
        if abs(self.constant - round(self.constant)) > 0:
            return False
        for j, c in self.objective.items():
            if c != 0 and (not self.columns[j].binary or c != round(c)):
                return False
        return True

    def counts_by_kind(self) -> dict[Kind, int]:
        out: dict[Kind, int] = {}
        for c in self.columns:
            out[c.key.kind] = out.get(c.key.kind, 0) + 1
        return out

    def counts_by_family(self) -> dict[Family, int]:
        out: dict[Family, int] = {}
        for r in self.rows:
            out[r.tag] = out.get(r.tag, 0) + 1
        return out

    @cached_property
    def lp(self) -> LinearProgram:
        """The continuous relaxation as a :class:`LinearProgram`."""
        n, m = len(self.columns), len(self.rows)
        indptr = [0]
        indices: list[int] = []
        data: list[float] = []
        for r in self.rows:
            indices.extend(r.cols)
            data.extend(r.vals)
            indptr.append(len(indices))
        A = sp.csr_matrix((np.array(data, dtype=float), np.array(indices, dtype=int), np.array(indptr)),
                          shape=(m, n))
        A.sum_duplicates()
        sense = np.array([{"<=": LE, "=": EQ, ">=": GE}[r.rel] for r in self.rows], dtype=np.int8)
        rhs = np.array([r.rhs for r in self.rows], dtype=float)
        c = np.zeros(n)
        for j, v in self.objective.items():
            c[j] = v
        lb = np.array([col.lb for col in self.columns], dtype=float)
        ub = np.array([col.ub for col in self.columns], dtype=float)
        return LinearProgram(A, sense, rhs, c, lb, ub, self.constant,
                             col_names=tuple(col.key.name for col in self.columns),
                             row_names=tuple(r.name for r in self.rows))

    def violations(self, values: np.ndarray, tol: float = 1e-6) -> list[str]:
        """Names of rows and columns that ``values`` violates by more than ``tol``."""
        bad = []
        act = self.lp.A @ values
        for i, r in enumerate(self.rows):
            v = act[i] - r.rhs
            if (r.rel == "<=" and v > tol) or (r.rel == ">=" and v < -tol) or (r.rel == "=" and abs(v) > tol):
                bad.append(r.name)
        for j, c in enumerate(self.columns):
            x = values[j]
            if x < c.lb - tol or x > c.ub + tol:
                bad.append(c.key.name)
            elif c.binary and min(abs(x), abs(x - 1)) > tol:
                bad.append(c.key.name)
        return bad

    def objective_value(self, values: np.ndarray) -> float:
        return float(sum(c * values[j] for j, c in self.objective.items()) + self.constant)


class ModelBuilder:
    """Accumulates a column catalog and sparse rows, then freezes into a ModelIR."""

    def __init__(self):
        self.columns: list[Column] = []
        self.index: dict[VarKey, int] = {}
        self.rows: list[Row] = []
        self.objective: dict[int, float] = {}
        self._products: dict[tuple[VarKey, VarKey], VarKey] = {}

    def add_var(self, key: VarKey, lb: float = 0.0, ub: float | None = None) -> int:
        if key in self.index:
            raise KeyError(f"duplicate column {key.name}")
        if ub is None:
            ub = 1.0 if key.kind.binary else np.inf
        self.index[key] = len(self.columns)
        self.columns.append(Column(key, lb, ub))
        return self.index[key]

    def add_row(self, terms, rel: str, rhs: float, tag: Family, **fields) -> Row:
        merged: dict[int, float] = {}
        for key, coef in terms:
            j = self.index[key]
            merged[j] = merged.get(j, 0.0) + coef
        cols = tuple(merged)
        row = Row(cols, tuple(merged[j] for j in cols), rel, float(rhs), tag, tuple(fields.items()))
        self.rows.append(row)
        return row

    def freeze(self, variant: str, path_budget: int) -> ModelIR:
        return ModelIR(tuple(self.columns), tuple(self.rows), dict(self.objective), 0.0,
                       variant, path_budget, dict(self.index))


def linearize_product(builder: ModelBuilder, a: VarKey, b: VarKey) -> tuple[VarKey, list[Row]]:
    """Replace the product of placement binaries ``a`` and ``b`` by an auxiliary binary.

    ``a`` must be X(k, s, vs) and ``b`` X(k, s+1, vt). The auxiliary is shared:
    asking again for the same pair returns it without new rows.
    """
    pair = (a, b)
    if pair in builder._products:
        return builder._products[pair], []
    for key in pair:
        if key not in builder.index or not key.kind.binary:
            raise KeyError(f"{key.name} is not a cataloged binary column")
    (k, s, vs), (_, _, vt) = a.index, b.index
    w = OMEGA(k, s, vs, vt)
    builder.add_var(w)
    idx = dict(k=k, s=s, vs=vs, vt=vt)
    rows = [
        builder.add_row([(w, 1.0), (a, -1.0)], "<=", 0.0, Family.linearize, **idx),
        builder.add_row([(w, 1.0), (b, -1.0)], "<=", 0.0, Family.linearize, **idx),
        builder.add_row([(w, 1.0), (a, -1.0), (b, -1.0)], ">=", -1.0, Family.linearize, **idx),
    ]
    builder._products[pair] = w
    return w, rows


# --- segment structure --------------------------------------------------------

@dataclass(frozen=True)
class SegmentPair:
    s: int
    tail: NodeId
    head: NodeId
    # placement binaries whose product switches this pair on (empty = constant 1)
    factors: tuple[VarKey, ...]


def segment_pairs(inst: Instance, svc: ServiceRequest) -> Iterator[SegmentPair]:
    """Every (segment, tail node, head node) combination the model may use."""
    net = inst.network
    ell = svc.length
    for s in range(ell + 1):
        tails = [svc.source] if s == 0 else net.candidates(svc.chain[s - 1])
        heads = [svc.destination] if s == ell else net.candidates(svc.chain[s])
        for a in tails:
            for b in heads:
                if a == b:
                    continue
                factors = []
                if s > 0:
                    factors.append(X(svc.id, s, a))
                if s < ell:
                    factors.append(X(svc.id, s + 1, b))
                yield SegmentPair(s, a, b, tuple(factors))


def segment_arcs(inst: Instance, tail: NodeId, head: NodeId) -> list[Link]:
    """Links usable by a tail->head path: none enters the tail or leaves the head."""
    return [l for l in inst.network.links if l.head != tail and l.tail != head]


VARIANTS = ("full", "single-path", "no-latency")


def _check(inst: Instance):
    diags = validate_instance(inst)
    unsat = [d for d in diags if d.code == "unsatisfiable_function"]
    if unsat:
        raise UnsatisfiableFunction("; ".join(map(str, unsat)))
    if diags:
        raise InvalidInstance("; ".join(map(str, diags)))


def build(inst: Instance, variant: str = "full", path_budget: int | None = None,
          symmetry_breaking: bool = False) -> ModelIR:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    _check(inst)
    P = 1 if variant == "single-path" else (inst.path_budget if path_budget is None else path_budget)
    if P < 1:
        raise InvalidInstance("path budget must be at least 1")
    multipath = variant != "single-path"
    latency = variant != "no-latency"
    net = inst.network
    bld = ModelBuilder()
    cloud = net.cloud_ids

    for v in cloud:
        bld.add_var(Y(v))
        bld.objective[bld.index[Y(v)]] = 1.0

    # link id -> list of (rate coefficient, key) for the capacity rows
    link_load: dict[tuple[NodeId, NodeId], list[tuple[VarKey, float]]] = {(l.tail, l.head): [] for l in net.links}
    node_load: dict[NodeId, list[tuple[VarKey, float]]] = {v: [] for v in cloud}

    for svc in inst.services:
        k, ell = svc.id, svc.length
        for s, f in enumerate(svc.chain, start=1):
            for v in net.candidates(f):
                bld.add_var(X(k, s, v))

        # per-flow node budget
        for v in cloud:
            terms = [(X(k, s, v), 1.0) for s in range(1, ell + 1) if X(k, s, v) in bld.index]
            if terms:
                bld.add_row(terms, "<=", 1.0, Family.placement_once, k=k, vs=v)
        for s, f in enumerate(svc.chain, start=1):
            bld.add_row([(X(k, s, v), 1.0) for v in net.candidates(f)], "=", 1.0,
                        Family.assign_exactly_one, k=k, s=s)
            for v in net.candidates(f):
                node_load[v].append((X(k, s, v), svc.rates[s]))
                bld.add_row([(X(k, s, v), 1.0), (Y(v), -1.0)], "<=", 0.0, Family.activation, k=k, s=s, vs=v)

        if latency:
            for s in range(ell + 1):
                bld.add_var(THETA(k, s))
        delay_terms: dict[tuple[int, int], list[tuple[VarKey, float]]] = {}

        for pair in segment_pairs(inst, svc):
            s, a, b = pair.s, pair.tail, pair.head
            lam = svc.rates[s]
            if len(pair.factors) == 2:
                on, _ = linearize_product(bld, *pair.factors)
            else:
                on = pair.factors[0]
            arcs = segment_arcs(inst, a, b)
            idx = dict(k=k, s=s, vs=a, vt=b)
            for p in range(1, P + 1):
                for l in arcs:
                    z = Z(k, s, a, b, p, l.tail, l.head)
                    bld.add_var(z)
                    bld.add_row([(z, 1.0), (on, -1.0)], "<=", 0.0, Family.path_link_indicator,
                                **idx, p=p, i=l.tail, j=l.head)
                    delay_terms.setdefault((s, p), []).append((z, l.delay))
                    if multipath:
                        rl = RL(k, s, a, b, p, l.tail, l.head)
                        bld.add_var(rl)
                        bld.add_row([(rl, 1.0), (z, -lam)], "<=", 0.0, Family.link_rate_coupling,
                                    **idx, p=p, i=l.tail, j=l.head)
                        link_load[(l.tail, l.head)].append((rl, 1.0))
                    else:
                        link_load[(l.tail, l.head)].append((z, lam))
                if multipath:
                    bld.add_var(R(k, s, a, b, p))
            if multipath:
                bld.add_row([(R(k, s, a, b, p), 1.0) for p in range(1, P + 1)] + [(on, -lam)], "=", 0.0,
                            Family.segment_rate, **idx)
            for p in range(1, P + 1):
                for i in net.nodes:
                    inflow = [l for l in arcs if l.head == i]
                    outflow = [l for l in arcs if l.tail == i]
                    endpoint = 1.0 if i == b else (-1.0 if i == a else 0.0)
                    if multipath:
                        terms = [(RL(k, s, a, b, p, l.tail, l.head), 1.0) for l in inflow]
                        terms += [(RL(k, s, a, b, p, l.tail, l.head), -1.0) for l in outflow]
                        if endpoint:
                            terms.append((R(k, s, a, b, p), -endpoint))
                        if terms:
                            bld.add_row(terms, "=", 0.0, Family.rate_conservation, **idx, p=p, i=i)
                    terms = [(Z(k, s, a, b, p, l.tail, l.head), 1.0) for l in inflow]
                    terms += [(Z(k, s, a, b, p, l.tail, l.head), -1.0) for l in outflow]
                    if endpoint:
                        terms.append((on, -endpoint))
                    if terms:
                        bld.add_row(terms, "=", 0.0, Family.indicator_conservation, **idx, p=p, i=i)
            if symmetry_breaking and multipath:
                for p in range(1, P):
                    bld.add_row([(R(k, s, a, b, p), 1.0), (R(k, s, a, b, p + 1), -1.0)], ">=", 0.0,
                                Family.symmetry, **idx, p=p)

        if latency:
            for s in range(ell + 1):
                for p in range(1, P + 1):
                    terms = delay_terms.get((s, p), [])
                    bld.add_row(terms + [(THETA(k, s), -1.0)], "<=", 0.0, Family.segment_delay, k=k, s=s, p=p)
            terms = [(THETA(k, s), 1.0) for s in range(ell + 1)]
            for s, f in enumerate(svc.chain, start=1):
                terms += [(X(k, s, v), net.nfv_delay(v, f)) for v in net.candidates(f)]
            bld.add_row(terms, "<=", svc.latency_threshold, Family.e2e_threshold, k=k)

    for v in cloud:
        if node_load[v]:
            bld.add_row(node_load[v], "<=", net.cloud(v).capacity, Family.node_capacity, vs=v)
    for l in net.links:
        if link_load[(l.tail, l.head)]:
            bld.add_row(link_load[(l.tail, l.head)], "<=", l.capacity, Family.link_capacity, i=l.tail, j=l.head)

    return bld.freeze(variant, P)


def build_full(inst: Instance, **kw) -> ModelIR:
    return build(inst, "full", **kw)


def build_single_path(inst: Instance, **kw) -> ModelIR:
    """P = 1 with per-link rates substituted by lambda * z (no rate variables)."""
    return build(inst, "single-path", **kw)


def build_no_latency(inst: Instance, **kw) -> ModelIR:
    """The full model without segment-delay and end-to-end threshold rows."""
    return build(inst, "no-latency", **kw)


def service_ids(inst: Instance) -> list[Hashable]:
    return [s.id for s in inst.services]
