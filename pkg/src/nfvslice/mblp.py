"""Exact branch-and-bound over the binary columns of a ModelIR."""

from __future__ import annotations

import enum
import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable, TextIO

import numpy as np

from .formulation import OMEGA, THETA, Family, Kind, ModelIR, VarKey, X
from .lp_core import Basis, LpStatus, NumericalBreakdown, solve_lp

INT_TOL = 1e-6
CHECK_TOL = 1e-6

# branching preference at equal fractionality
_KIND_RANK = {Kind.Y_activate: 0, Kind.X_place: 1, Kind.OMEGA_pairplace: 2, Kind.Z_pathlink: 3}


class MblpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    BUDGET_EXCEEDED = "BudgetExceeded"


class CapExceeded(ValueError):
    pass


class NodeBreakdown(NumericalBreakdown):
    def __init__(self, msg: str, fixings: dict[int, int]):
        super().__init__(f"{msg} (fixings: {fixings})")
        self.fixings = fixings


@dataclass
class SolveStats:
    nodes: int = 0
    lp_solves: int = 0
    lp_iterations: int = 0
    wall_time: float = 0.0
    root_bound: float = math.nan
    incumbents: list[float] = field(default_factory=list)
    monotonicity_violations: int = 0

    def as_dict(self, timing: bool = True) -> dict:
        d = {"nodes": self.nodes, "lp_solves": self.lp_solves, "lp_iterations": self.lp_iterations,
             "root_bound": self.root_bound if math.isfinite(self.root_bound) else None, "incumbents": list(self.incumbents)}
        if timing:
            d["wall_time"] = self.wall_time
        return d


@dataclass
class MblpSolution:
    status: MblpStatus
    values: np.ndarray | None
    objective: float
    model: ModelIR = field(repr=False)
    stats: SolveStats = field(default_factory=SolveStats)

    @property
    def optimal(self) -> bool:
        return self.status is MblpStatus.OPTIMAL

    @property
    def has_solution(self) -> bool:
        return self.values is not None

    @property
    def assignment(self) -> dict[VarKey, float]:
        if self.values is None:
            return {}
        return {c.key: float(self.values[j]) for j, c in enumerate(self.model.columns)}

    def value(self, key: VarKey, default: float = 0.0) -> float:
        j = self.model.index.get(key)
        return default if j is None or self.values is None else float(self.values[j])


def branching_order(model: ModelIR, x: np.ndarray, candidates: np.ndarray | None = None) -> int | None:
    """Pick the branching column: most fractional, then kind preference, then lowest index.

    Returns None when every binary column is integral within tolerance.
    """
    cols = model.binary_columns if candidates is None else candidates
    if len(cols) == 0:
        return None
    frac = np.abs(x[cols] - np.round(x[cols]))
    mask = frac > INT_TOL
    if not mask.any():
        return None
    best = None
    for j, f in zip(cols[mask], frac[mask]):
        # distance from 0.5, rounded so float noise cannot break kind ties
        key = (round(0.5 - f, 9), _KIND_RANK[model.columns[j].key.kind], int(j))
        if best is None or key < best[0]:
            best = (key, int(j))
    return best[1]


def _max_flow(cap: np.ndarray, src: int, dst: int, need: float) -> float:
    """Augmenting-path max flow on a small dense capacity matrix; stops once ``need`` is met."""
    n = len(cap)
    res = cap.copy()
    total = 0.0
    while total < need - 1e-9:
        parent = np.full(n, -1)
        parent[src] = src
        queue = [src]
        for u in queue:
            for v in np.flatnonzero((res[u] > 1e-12) & (parent < 0)):
                parent[v] = u
                queue.append(int(v))
            if parent[dst] >= 0:
                break
        if parent[dst] < 0:
            break
        v, push = dst, np.inf
        while v != src:
            push = min(push, res[parent[v], v])
            v = parent[v]
        v = dst
        while v != src:
            res[parent[v], v] -= push
            res[v, parent[v]] += push
            v = parent[v]
        total += push
    return total


class _Routing:
    """Path reasoning on the links of each (service, segment, pair, path) group.

    Whatever links a group switches on contain a tail->head path plus cycles,
    and the segment delay is at least their total delay. Hence:
    the segment delay is at least the shortest tail->head delay over links
    still allowed; a link is ruled out once the cheapest route (or cycle)
    through it is slower than the delay's upper bound; and the segment's rate
    must fit through links lying on fast enough routes.
    """

    def __init__(self, model: ModelIR):
        delay: dict[int, float] = {}
        rate: dict[tuple, float] = {}
        capacity: dict[tuple, float] = {}
        for r in model.rows:
            if r.tag is Family.segment_delay:
                for j, v in zip(r.cols, r.vals):
                    if model.columns[j].key.kind is Kind.Z_pathlink:
                        delay[j] = v
            elif r.tag is Family.segment_rate:
                f = dict(r.fields)
                for j, v in zip(r.cols, r.vals):
                    if model.columns[j].key.kind is not Kind.R_pathrate:
                        rate[(f["k"], f["s"], f["vs"], f["vt"])] = -v
            elif r.tag is Family.link_capacity:
                f = dict(r.fields)
                capacity[(f["i"], f["j"])] = r.rhs
        latency = bool(delay)
        groups: dict[tuple, int] = {}
        pairs: dict[tuple, int] = {}
        nodes: dict = {}
        zc, zg, zt, zh, zd = [], [], [], [], []
        ga, gb, gon, gtheta, gpair = [], [], [], [], []
        self.pair_rate, self.pair_on, self.pair_theta, self.pair_a, self.pair_b = [], [], [], [], []

        def node(v):
            return nodes.setdefault(v, len(nodes))

        for j, c in enumerate(model.columns):
            if c.key.kind is not Kind.Z_pathlink:
                continue
            if latency and j not in delay:
                continue
            k, s, a, b, p, i, t = c.key.index
            g = groups.get((k, s, a, b, p))
            if g is None:
                g = groups[(k, s, a, b, p)] = len(groups)
                on = model.index.get(OMEGA(k, s, a, b))
                if on is None:
                    on = model.index.get(X(k, s, a)) if s > 0 else model.index.get(X(k, s + 1, b))
                theta = model.index[THETA(k, s)] if latency else -1
                pid = pairs.get((k, s, a, b))
                if pid is None:
                    pid = pairs[(k, s, a, b)] = len(pairs)
                    self.pair_rate.append(rate.get((k, s, a, b), 0.0))
                    self.pair_on.append(-1 if on is None else on)
                    self.pair_theta.append(theta)
                    self.pair_a.append(node(a))
                    self.pair_b.append(node(b))
                ga.append(node(a))
                gb.append(node(b))
                gon.append(-1 if on is None else on)
                gtheta.append(theta)
                gpair.append(pid)
            zc.append(j)
            zg.append(g)
            zt.append(node(i))
            zh.append(node(t))
            zd.append(delay.get(j, 0.0))
        self.latency = latency
        self.multipath = bool(rate)
        self.n = len(nodes)
        self.G = len(groups)
        self.zc, self.zg, self.zt, self.zh = (np.array(v, dtype=int) for v in (zc, zg, zt, zh))
        self.zd = np.array(zd, dtype=float)
        self.ga, self.gb, self.gon, self.gtheta, self.gpair = (
            np.array(v, dtype=int) for v in (ga, gb, gon, gtheta, gpair))
        name = {i: v for v, i in nodes.items()}
        self.zcap = np.array([capacity.get((name[t], name[h]), np.inf) for t, h in zip(zt, zh)], dtype=float)

    def __call__(self, lb: np.ndarray, ub: np.ndarray) -> tuple[bool, bool]:
        """Returns (feasible, changed)."""
        if self.G == 0:
            return True, False
        G, n = self.G, self.n
        live = ub[self.zc] > 0.5
        D = np.full((G, n, n), np.inf)
        D[:, np.arange(n), np.arange(n)] = 0.0
        np.minimum.at(D, (self.zg[live], self.zt[live], self.zh[live]), self.zd[live])
        for m in range(n):
            np.minimum(D, D[:, :, m, None] + D[:, None, m, :], out=D)
        sp = D[np.arange(G), self.ga, self.gb]
        on = np.maximum(self.gon, 0)
        forced = (self.gon < 0) | (lb[on] > 0.5)
        theta_ub = ub[self.gtheta] if self.latency else np.full(G, np.inf)
        changed = False

        if np.any(forced & (sp > theta_ub + 1e-6)):
            return False, True
        # a pair cannot be chosen when even its shortest route is too slow
        drop = ~forced & (sp > theta_ub + 1e-6) & (ub[on] > 0.5)
        if drop.any():
            ub[self.gon[drop]] = 0.0
            changed = True
        if self.latency:
            new_lb = lb.copy()
            np.maximum.at(new_lb, self.gtheta[forced], sp[forced])
            if np.any(new_lb > lb + 1e-7 * (1.0 + np.abs(lb))):
                lb[:] = np.maximum(lb, new_lb)
                changed = True

        g, t, h = self.zg, self.zt, self.zh
        via_path = D[g, self.ga[g], t] + self.zd + D[g, h, self.gb[g]]
        if self.latency:
            via_cycle = sp[g] + self.zd + D[g, h, t]
            cut = live & (np.minimum(via_path, via_cycle) > theta_ub[g] + 1e-6)
            if cut.any():
                if np.any(lb[self.zc[cut]] > 0.5):
                    return False, True
                ub[self.zc[cut]] = 0.0
                changed = True
                live = live & ~cut
        if self.multipath:
            ok, moved = self._flows(lb, ub, live & np.isfinite(via_path), via_path)
            if not ok:
                return False, True
            changed |= moved
        return True, changed

    def _flows(self, lb, ub, carry, via) -> tuple[bool, bool]:
        """Check each open pair's rate fits through links on fast enough routes."""
        changed = False
        zpair = self.gpair[self.zg]
        for pid in range(len(self.pair_rate)):
            lam = self.pair_rate[pid]
            on = self.pair_on[pid]
            if lam <= 1e-9 or (on >= 0 and ub[on] < 0.5):
                continue
            forced = on < 0 or lb[on] > 0.5
            sel = carry & (zpair == pid)
            theta = self.pair_theta[pid]
            limit = ub[theta] if theta >= 0 else np.inf
            sel &= via <= limit + 1e-6
            arcs_t, arcs_h, arcs_c, arcs_v = self.zt[sel], self.zh[sel], self.zcap[sel], via[sel]

            def flow(threshold):
                cap = np.zeros((self.n, self.n))
                m = arcs_v <= threshold + 1e-6
                # the union over path slots; a link counts once
                np.maximum.at(cap, (arcs_t[m], arcs_h[m]), arcs_c[m])
                return _max_flow(cap, self.pair_a[pid], self.pair_b[pid], lam)

            if flow(np.inf) < lam - 1e-6:
                if forced:
                    return False, True
                ub[on] = 0.0
                changed = True
                continue
            if forced and theta >= 0:
                cands = np.unique(arcs_v[arcs_v > lb[theta] + 1e-9])
                lo, hi = 0, len(cands) - 1
                if flow(lb[theta]) >= lam - 1e-6 or len(cands) == 0:
                    continue
                while lo < hi:
                    mid = (lo + hi) // 2
                    if flow(cands[mid]) >= lam - 1e-6:
                        hi = mid
                    else:
                        lo = mid + 1
                if cands[lo] > lb[theta] + 1e-7 * (1.0 + abs(lb[theta])):
                    lb[theta] = cands[lo]
                    changed = True
        return True, changed


class Propagator:
    """Bound tightening over the rows of a ModelIR.

    Rows are rewritten as ``g.x <= h``. For every entry, the minimum activity
    of the rest of the row bounds the entry's column; binary columns are
    rounded to integers. Latency-aware models add shortest-path reasoning per
    routed path. Only binary bounds are handed back to the LP.
    """

    def __init__(self, model: ModelIR, max_rounds: int = 50):
        lp = model.lp
        A = lp.A.tocoo()
        nz = A.data != 0  # explicit zeros (e.g. zero NFV delays) imply nothing
        A = type(A)((A.data[nz], (A.row[nz], A.col[nz])), shape=A.shape)
        le = lp.sense <= 0   # <= and = rows
        ge = lp.sense >= 0   # >= and = rows
        rows, cols, vals, rhs = [], [], [], []
        offset = 0
        for mask, sign in ((le, 1.0), (ge, -1.0)):
            ids = np.flatnonzero(mask)
            remap = -np.ones(lp.shape[0], dtype=int)
            remap[ids] = np.arange(len(ids)) + offset
            keep = mask[A.row]
            rows.append(remap[A.row[keep]])
            cols.append(A.col[keep])
            vals.append(sign * A.data[keep])
            rhs.append(sign * lp.rhs[ids])
            offset += len(ids)
        self.row = np.concatenate(rows)
        self.col = np.concatenate(cols)
        self.val = np.concatenate(vals)
        self.rhs = np.concatenate(rhs)
        self.nrows = offset
        self.is_int = np.zeros(lp.shape[1], dtype=bool)
        self.is_int[model.binary_columns] = True
        self.pos = self.val > 0
        self.max_rounds = max_rounds
        self.paths = _Routing(model)

    def _activity(self, lb: np.ndarray, ub: np.ndarray) -> tuple[bool, bool]:
        row, col, val, pos = self.row, self.col, self.val, self.pos
        bound = np.where(pos, lb[col], ub[col])
        with np.errstate(invalid="ignore"):
            contrib = val * bound
        inf = ~np.isfinite(contrib)
        contrib = np.where(inf, 0.0, contrib)
        finite_sum = np.bincount(row, weights=contrib, minlength=self.nrows)
        n_inf = np.bincount(row, weights=inf.astype(float), minlength=self.nrows)
        if np.any((n_inf == 0) & (finite_sum > self.rhs + 1e-6)):
            return False, True
        others_inf = n_inf[row] - inf
        residual = self.rhs[row] - (finite_sum[row] - contrib)
        usable = others_inf == 0
        implied = np.full(len(val), np.nan)
        implied[usable] = residual[usable] / val[usable]

        new_ub = ub.copy()
        sel = usable & pos
        np.minimum.at(new_ub, col[sel], implied[sel])
        new_lb = lb.copy()
        sel = usable & ~pos
        np.maximum.at(new_lb, col[sel], implied[sel])
        ints = self.is_int
        new_ub[ints] = np.floor(new_ub[ints] + 1e-6)
        new_lb[ints] = np.ceil(new_lb[ints] - 1e-6)
        if np.any(new_lb > new_ub + 1e-6):
            return False, True
        scale = 1.0 + np.abs(ub)
        changed = (new_ub < ub - 1e-7 * np.where(np.isfinite(scale), scale, 1.0)) | \
                  (new_lb > lb + 1e-7 * (1.0 + np.abs(lb)))
        if not changed.any():
            return True, False
        ub[:] = np.where(changed, np.minimum(ub, new_ub), ub)
        lb[:] = np.where(changed, np.maximum(lb, new_lb), lb)
        return True, True

    def __call__(self, lb: np.ndarray, ub: np.ndarray) -> bool:
        """Tighten ``lb``/``ub`` in place; return False when the box is proven empty."""
        for _ in range(self.max_rounds):
            ok, moved = self._activity(lb, ub)
            if not ok:
                return False
            if moved:
                continue
            ok, moved = self.paths(lb, ub)
            if not ok:
                return False
            if not moved:
                return True
        return True


def _round_binaries(model: ModelIR, x: np.ndarray) -> np.ndarray:
    y = x.copy()
    b = model.binary_columns
    y[b] = np.round(y[b])
    return y


@dataclass(order=True)
class _Node:
    priority: tuple
    blb: np.ndarray = field(compare=False)   # binary-column bounds at this node
    bub: np.ndarray = field(compare=False)
    basis: Basis | None = field(compare=False)
    parent_bound: float = field(compare=False)
    depth: int = field(compare=False)


def solve_mblp(model: ModelIR, node_limit: int = 200_000, time_limit: float | None = 60.0,
               trace: TextIO | None = None, incumbent: np.ndarray | None = None,
               propagate: bool = True, clock: Callable[[], float] = time.perf_counter) -> MblpSolution:
    """Best-first branch-and-bound with depth-first tie-breaking.

    ``incumbent`` may carry a known feasible point (it is re-verified before
    use). ``trace`` receives one stable line per processed node. Each node
    tightens bounds by row propagation before its LP is solved.
    """
    lp = model.lp
    bins = model.binary_columns
    stats = SolveStats()
    start = clock()
    integral = model.integral_objective
    prop = Propagator(model) if propagate else None
    best_x: np.ndarray | None = None
    best_obj = math.inf

    def cutoff(bound: float) -> bool:
        if not math.isfinite(best_obj):
            return False
        if integral:
            return bound > best_obj - 1 + INT_TOL
        return bound >= best_obj - 1e-9

    def rank(bound: float) -> float:
        return math.ceil(bound - INT_TOL) if integral else bound

    def accept(x: np.ndarray) -> bool:
        nonlocal best_x, best_obj
        cand = _round_binaries(model, x)
        if model.violations(cand, CHECK_TOL):
            return False
        obj = model.objective_value(cand)
        if obj < best_obj - 1e-9:
            best_x, best_obj = cand, obj
            stats.incumbents.append(obj)
            return True
        return False

    def fixed(blb, bub) -> dict[int, int]:
        return {int(bins[i]): int(blb[i]) for i in np.flatnonzero(blb == bub)}

    if incumbent is not None:
        accept(np.asarray(incumbent, dtype=float))

    seq = itertools.count()
    heap: list[_Node] = [_Node((-math.inf, 0, 0, next(seq)), lp.lb[bins].copy(), lp.ub[bins].copy(),
                               None, -math.inf, 0)]
    budget_hit = False
    while heap:
        if stats.nodes >= node_limit or (time_limit is not None and clock() - start > time_limit):
            budget_hit = True
            break
        node = heapq.heappop(heap)
        if cutoff(node.parent_bound):
            continue
        stats.nodes += 1
        lb, ub = lp.lb.copy(), lp.ub.copy()
        lb[bins], ub[bins] = node.blb, node.bub
        if prop is not None:
            plb, pub = lb.copy(), ub.copy()
            if not prop(plb, pub):
                if trace is not None:
                    trace.write(f"node={stats.nodes} depth={node.depth} bound=inf fixings={len(fixed(node.blb, node.bub))}\n")
                continue
            lb[bins], ub[bins] = plb[bins], pub[bins]
        try:
            out = solve_lp(lp, lb, ub, warm=node.basis)
        except NumericalBreakdown as exc:
            try:
                out = solve_lp(lp, lb, ub)  # cold restart before giving up
            except NumericalBreakdown:
                raise NodeBreakdown(str(exc), fixed(node.blb, node.bub)) from exc
        stats.lp_solves += 1
        stats.lp_iterations += out.iterations
        if out.status is LpStatus.UNBOUNDED:
            raise NodeBreakdown("LP relaxation unbounded; slicing models are bounded", fixed(node.blb, node.bub))
        if node.depth == 0:
            stats.root_bound = out.objective
        if out.optimal and out.objective < node.parent_bound - 1e-7:
            stats.monotonicity_violations += 1
        nblb, nbub = lb[bins], ub[bins]
        if trace is not None:
            b = f"{out.objective:.6f}" if out.optimal else "inf"
            trace.write(f"node={stats.nodes} depth={node.depth} bound={b} fixings={int(np.sum(nblb == nbub))}\n")
        if not out.optimal or cutoff(out.objective):
            continue
        j = branching_order(model, out.x)
        if j is None:
            if not accept(out.x):
                # tolerance leakage: fix every binary at its rounded value and re-solve once
                lb2, ub2 = lp.lb.copy(), lp.ub.copy()
                lb2[bins] = ub2[bins] = np.round(out.x[bins])
                polished = solve_lp(lp, lb2, ub2)
                stats.lp_solves += 1
                if polished.optimal:
                    accept(polished.x)
            continue
        pos = int(np.searchsorted(bins, j))
        up_first = out.x[j] >= 0.5
        for order, val in enumerate((1.0, 0.0) if up_first else (0.0, 1.0)):
            clb, cub = nblb.copy(), nbub.copy()
            clb[pos] = cub[pos] = val
            prio = (rank(out.objective), -(node.depth + 1), order, next(seq))
            heapq.heappush(heap, _Node(prio, clb, cub, out.basis, out.objective, node.depth + 1))

    stats.wall_time = clock() - start
    if budget_hit:
        status = MblpStatus.BUDGET_EXCEEDED
    elif best_x is None:
        status = MblpStatus.INFEASIBLE
    else:
        status = MblpStatus.OPTIMAL
    return MblpSolution(status, best_x, best_obj, model, stats)


def brute_force_mblp(model: ModelIR, cap: int = 22, chunk: int = 1 << 15) -> MblpSolution:
    """Enumerate every binary assignment and solve the continuous remainder.

    Rows touching only binary columns are screened in vectorized batches; the
    LP is solved only for assignments that pass them.
    """
    bins = model.binary_columns
    nb = len(bins)
    if nb > cap:
        raise CapExceeded(f"{nb} binary columns exceed cap {cap}")
    lp = model.lp
    stats = SolveStats()
    start = time.perf_counter()
    is_bin = np.zeros(lp.shape[1], dtype=bool)
    is_bin[bins] = True
    A = lp.A.tocsr()
    pure = np.array([np.all(is_bin[A.indices[A.indptr[i]:A.indptr[i + 1]]]) for i in range(A.shape[0])],
                    dtype=bool)
    Ab = A[pure][:, bins].toarray() if pure.any() else np.zeros((0, nb))
    sense, rhs = lp.sense[pure], lp.rhs[pure]

    best_x, best_obj = None, math.inf
    total = 1 << nb
    for lo in range(0, total, chunk):
        codes = np.arange(lo, min(total, lo + chunk), dtype=np.int64)
        bits = ((codes[:, None] >> np.arange(nb)) & 1).astype(float)
        if len(Ab):
            act = bits @ Ab.T
            ok = np.all(np.where(sense == -1, act <= rhs + 1e-9,
                                 np.where(sense == 1, act >= rhs - 1e-9, np.abs(act - rhs) <= 1e-9)), axis=1)
            bits = bits[ok]
        for row in bits:
            lb, ub = lp.lb.copy(), lp.ub.copy()
            lb[bins] = ub[bins] = row
            out = solve_lp(lp, lb, ub)
            stats.lp_solves += 1
            if out.optimal and out.objective < best_obj - 1e-9:
                best_x, best_obj = out.x, out.objective
                stats.incumbents.append(best_obj)
    stats.nodes = total
    stats.wall_time = time.perf_counter() - start
    status = MblpStatus.OPTIMAL if best_x is not None else MblpStatus.INFEASIBLE
    return MblpSolution(status, best_x, best_obj, model, stats)
