"""Fog sizing, fog-head election and fog composition.

The total vehicle count ``Z`` is split into ``x`` fogs of ``y`` ordinary
vehicles plus one head each (``Z = x + x*y``) so that the two-layer PBFT
message cost ``x**2 + x*y**2`` is minimal. Heads are the ``x`` vehicles with
the lowest fog-head parameter; every other vehicle then joins a fog by its
fog factor under a swept admission threshold.

Remaining route distance enters both scores as ``s / route_ref``.
``route_ref`` defaults to the communication range, which keeps the route
term at most ``1`` for any vehicle with more than one range of road left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .kernels import defer_accept_kernel, neighbor_counts

MIN_FOG_MEMBERS = 4
DEFAULT_THRESHOLDS = tuple(round(0.1 * i, 1) for i in range(11))


class GroupingError(ValueError):
    pass


class NoFeasibleGrouping(GroupingError):
    pass


@dataclass(frozen=True)
class VehicleSnapshot:
    vehicle_id: int
    x: float
    y: float
    speed: float
    remaining: float
    road_id: str = ""

    def __post_init__(self):
        if self.speed < 0:
            raise GroupingError(f"vehicle {self.vehicle_id}: negative speed")
        if self.remaining <= 0:
            raise GroupingError(f"vehicle {self.vehicle_id}: remaining distance must be positive")


@dataclass(frozen=True)
class GroupingWeights:
    l: float = 0.5
    m: float = 0.5
    a: float = 0.5
    b: float = 0.3
    c: float = 0.2

    def __post_init__(self):
        vals = (self.l, self.m, self.a, self.b, self.c)
        if any(v < 0 for v in vals):
            raise GroupingError("weights must be non-negative")
        if abs(self.l + self.m - 1) > 1e-9:
            raise GroupingError("l + m must equal 1")
        if abs(self.a + self.b + self.c - 1) > 1e-9:
            raise GroupingError("a + b + c must equal 1")


# (a, b, c) allocation schemes compared in the stability experiments
SCHEMES: dict[int, tuple[float, float, float]] = {
    1: (0.5, 0.3, 0.2),
    2: (0.5, 0.2, 0.3),
    3: (0.3, 0.5, 0.2),
    4: (0.3, 0.2, 0.5),
    5: (0.4, 0.3, 0.3),
    6: (0.3, 0.4, 0.3),
    7: (0.3, 0.3, 0.4),
}


def scheme_weights(scheme: int, l: float = 0.5, m: float = 0.5) -> GroupingWeights:
    if scheme not in SCHEMES:
        raise GroupingError(f"unknown weight scheme {scheme}; expected 1-7")
    a, b, c = SCHEMES[scheme]
    return GroupingWeights(l, m, a, b, c)


@dataclass
class Fog:
    head: int
    members: list[int] = field(default_factory=list)

    @property
    def vehicles(self) -> set[int]:
        return {self.head, *self.members}


@dataclass
class GroupingPlan:
    x: int
    y: int
    fogs: list[Fog]
    beta_th: float | None
    threshold_satisfied: bool
    forced: list[int] = field(default_factory=list)
    overflow: list[int] = field(default_factory=list)

    @property
    def heads(self) -> list[int]:
        return [f.head for f in self.fogs]

    def vehicle_ids(self) -> set[int]:
        out: set[int] = set()
        for f in self.fogs:
            out |= f.vehicles
        return out

    def fog_index(self) -> dict[int, int]:
        """vehicle id -> fog position, heads included."""
        idx = {}
        for k, f in enumerate(self.fogs):
            idx[f.head] = k
            for v in f.members:
                idx[v] = k
        return idx

    def validate(self) -> None:
        seen: set[int] = set()
        for f in self.fogs:
            for v in [f.head, *f.members]:
                if v in seen:
                    raise GroupingError(f"vehicle {v} assigned twice")
                seen.add(v)
        if len(self.fogs) != self.x:
            raise GroupingError(f"plan has {len(self.fogs)} fogs, expected {self.x}")

    def to_dict(self) -> dict:
        return {
            "x": self.x,
            "y": self.y,
            "beta_th": self.beta_th,
            "threshold_satisfied": self.threshold_satisfied,
            "fogs": [{"head": f.head, "members": list(f.members)} for f in self.fogs],
            "forced": list(self.forced),
            "overflow": list(self.overflow),
        }


# --- sizing ---------------------------------------------------------------------


def analytic_complexity(x: int, y: int) -> int:
    """Two-layer PBFT message cost ``x**2 + x*y**2``."""
    return x * x + x * y * y


def feasible_splits(Z: int) -> list[tuple[int, int]]:
    """All ``(x, y)`` with ``Z = x*(1+y)``, ``y >= 4`` and ``x >= 4``, by increasing y."""
    out = []
    for d in range(MIN_FOG_MEMBERS + 1, Z // MIN_FOG_MEMBERS + 1):
        if Z % d == 0:
            out.append((Z // d, d - 1))
    return out


def _stationary_y(Z: int) -> float:
    # root of y^3 + 3y^2 + 2y - 2Z on y > 0 (zero of dC/dy)
    roots = np.roots([1.0, 3.0, 2.0, -2.0 * Z])
    return float(max(r.real for r in roots if abs(r.imag) < 1e-9))


def optimal_group_sizes(Z: int) -> tuple[int, int, int]:
    """``(x, y, C)`` minimising the two-layer cost for ``Z`` vehicles.

    Starts from the stationary point of the continuous cost and walks to the
    nearest exact split below and above it; the cost is convex in ``y`` so
    the better of the two is the integer optimum.
    """
    if Z < (MIN_FOG_MEMBERS + 1) * MIN_FOG_MEMBERS:
        raise NoFeasibleGrouping(f"Z={Z} is below the smallest feasible grouping (20)")
    y_lo_bound = MIN_FOG_MEMBERS
    y_hi_bound = Z // MIN_FOG_MEMBERS - 1
    y_star = min(max(_stationary_y(Z), y_lo_bound), y_hi_bound)

    best = None
    y = math.floor(y_star)
    while y >= y_lo_bound:
        if Z % (y + 1) == 0:
            best = (Z // (y + 1), y)
            break
        y -= 1
    y = math.floor(y_star) + 1
    while y <= y_hi_bound:
        if Z % (y + 1) == 0:
            cand = (Z // (y + 1), y)
            if best is None or analytic_complexity(*cand) < analytic_complexity(*best):
                best = cand
            break
        y += 1
    if best is None:
        raise NoFeasibleGrouping(f"Z={Z} has no split with y >= 4 and x >= 4")
    return best[0], best[1], analytic_complexity(*best)


# --- scores ---------------------------------------------------------------------


def fog_head_parameter(s, n, weights: GroupingWeights):
    """``l/s + m/n``; vehicles without neighbours get ``+inf``. Lower is better."""
    s = np.asarray(s, dtype=float)
    n = np.asarray(n, dtype=float)
    if np.any(s <= 0):
        raise GroupingError("route term must be positive")
    with np.errstate(divide="ignore"):
        alpha = weights.l / s + np.where(n > 0, weights.m / np.where(n > 0, n, 1.0), np.inf)
    return float(alpha) if alpha.ndim == 0 else alpha


def fog_factor(v, vbar, s, d, S: float, weights: GroupingWeights):
    """``a*|v - vbar|/vbar + b/s + c*d/S``; lower means stronger affinity.

    A fog whose mean speed is zero contributes no speed term for a stopped
    vehicle and ``+inf`` for a moving one.
    """
    v, vbar, s, d = (np.asarray(t, dtype=float) for t in (v, vbar, s, d))
    if S <= 0:
        raise GroupingError("communication range must be positive")
    with np.errstate(divide="ignore", invalid="ignore"):
        dev = np.where(vbar > 0, np.abs(v - vbar) / np.where(vbar > 0, vbar, 1.0),
                       np.where(v == 0, 0.0, np.inf))
        beta = weights.a * dev + weights.b / s + weights.c * d / S
    return float(beta) if beta.ndim == 0 else beta


@dataclass
class _Frame:
    ids: np.ndarray
    pos: np.ndarray
    speed: np.ndarray
    route: np.ndarray  # remaining / route_ref

    @classmethod
    def build(cls, snaps: Sequence[VehicleSnapshot], route_ref: float) -> "_Frame":
        snaps = sorted(snaps, key=lambda s: s.vehicle_id)
        ids = np.array([s.vehicle_id for s in snaps], dtype=np.int64)
        if len(set(ids.tolist())) != len(ids):
            raise GroupingError("duplicate vehicle ids in snapshot set")
        pos = np.array([(s.x, s.y) for s in snaps], dtype=float).reshape(-1, 2)
        speed = np.array([s.speed for s in snaps], dtype=float)
        route = np.array([s.remaining for s in snaps], dtype=float) / route_ref
        return cls(ids, pos, speed, route)

    def index(self) -> dict[int, int]:
        return {int(v): i for i, v in enumerate(self.ids)}


def _alphas(frame: _Frame, S: float, weights: GroupingWeights) -> np.ndarray:
    n = neighbor_counts(frame.pos, S)
    return fog_head_parameter(frame.route, n, weights)


def _rank_lowest(scores: np.ndarray, ids: np.ndarray, k: int) -> np.ndarray:
    # lexicographic (score, id); inf sorts last
    order = np.lexsort((ids, scores))
    return order[:k]


def select_fog_heads(
    snapshots: Sequence[VehicleSnapshot],
    x: int,
    weights: GroupingWeights,
    S: float,
    route_ref: float | None = None,
) -> list[int]:
    """Ids of the ``x`` vehicles with the smallest fog-head parameter."""
    if len(snapshots) < x:
        raise GroupingError(f"need at least {x} vehicles to elect {x} heads")
    frame = _Frame.build(snapshots, route_ref or S)
    alpha = _alphas(frame, S, weights)
    return [int(frame.ids[i]) for i in _rank_lowest(alpha, frame.ids, x)]


def _catchment_speeds(frame: _Frame, head_idx: np.ndarray, S: float) -> np.ndarray:
    # mean speed of everything within range of each head, the head included
    if len(head_idx) == 0:
        return np.zeros(0)
    near = cKDTree(frame.pos).query_ball_point(frame.pos[head_idx], S)
    return np.array([frame.speed[lst].mean() for lst in near])


def _beta_rows(frame: _Frame, rows: np.ndarray, head_idx: np.ndarray, vbar: np.ndarray, S: float, weights):
    # dense beta for a few vehicles against every fog
    d = np.linalg.norm(frame.pos[rows][:, None, :] - frame.pos[head_idx][None, :, :], axis=-1)
    return np.asarray(fog_factor(
        frame.speed[rows][:, None], vbar[None, :], frame.route[rows][:, None], d, S, weights
    ), dtype=float).reshape(len(rows), len(head_idx))


@dataclass
class Candidates:
    """Per-vehicle fog candidates in CSR form, each row sorted by ``(beta, fog)``."""

    ptr: np.ndarray
    fogs: np.ndarray
    betas: np.ndarray
    n_fogs: int

    @classmethod
    def from_dense(cls, beta: np.ndarray) -> "Candidates":
        beta = np.asarray(beta, dtype=float)
        nv, nf = beta.shape
        order = np.argsort(beta, axis=1, kind="stable")
        return cls(
            np.arange(nv + 1, dtype=np.int64) * nf,
            order.reshape(-1).astype(np.int64),
            np.take_along_axis(beta, order, axis=1).reshape(-1),
            nf,
        )

    @classmethod
    def from_pairs(cls, nv: int, nf: int, row, fog, beta) -> "Candidates":
        order = np.lexsort((fog, beta, row))
        counts = np.bincount(np.asarray(row, dtype=np.int64), minlength=nv)
        ptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        return cls(ptr, np.asarray(fog, np.int64)[order], np.asarray(beta, float)[order], nf)

    def eligible(self, threshold: float) -> np.ndarray:
        hits = np.concatenate(([0], np.cumsum(self.betas < threshold)))
        return (hits[self.ptr[1:]] - hits[self.ptr[:-1]]).astype(np.int64)


def _candidates(frame, rows, head_idx, vbar, S, weights, limit: float) -> Candidates:
    # a fog can only pass beta < limit if c*d/S < limit, so search within that radius
    nv, nf = len(rows), len(head_idx)
    if nv == 0 or nf == 0:
        return Candidates(np.zeros(nv + 1, np.int64), np.zeros(0, np.int64), np.zeros(0), nf)
    if weights.c <= 0 or not np.isfinite(limit) or limit <= 0:
        return Candidates.from_dense(_beta_rows(frame, rows, head_idx, vbar, S, weights))
    reach = S * limit / weights.c
    rec = cKDTree(frame.pos[rows]).sparse_distance_matrix(
        cKDTree(frame.pos[head_idx]), reach, output_type="ndarray"
    )
    i, k, d = rec["i"].astype(np.int64), rec["j"].astype(np.int64), rec["v"]
    beta = np.asarray(fog_factor(
        frame.speed[rows][i], vbar[k], frame.route[rows][i], d, S, weights
    ), dtype=float).reshape(-1)
    keep = beta < limit
    return Candidates.from_pairs(nv, nf, i[keep], k[keep], beta[keep])


@dataclass
class _Assignment:
    fog_of: np.ndarray  # fog index per row, -1 if unassigned
    sizes: np.ndarray

    @property
    def assigned(self) -> int:
        return int((self.fog_of >= 0).sum())


def defer_accept(
    beta: np.ndarray | Candidates, ids: np.ndarray, y: int, threshold: float
) -> _Assignment:
    """Threshold-limited assignment with eviction of the worst member.

    Rows are vehicles (processed by ascending id), columns are fogs. A
    vehicle proposes to fogs with ``beta < threshold`` in ascending beta
    order; a full fog admits it only by evicting its current maximum-beta
    member, who then continues with its own next choice.
    """
    cand = beta if isinstance(beta, Candidates) else Candidates.from_dense(beta)
    fog_of = defer_accept_kernel(
        cand.ptr, cand.fogs, cand.betas, cand.eligible(threshold),
        np.asarray(ids, dtype=np.int64), int(y), cand.n_fogs,
    )
    sizes = np.bincount(fog_of[fog_of >= 0], minlength=cand.n_fogs)
    return _Assignment(fog_of, sizes)


def compose_fogs(
    snapshots: Sequence[VehicleSnapshot],
    heads: Sequence[int],
    y: int,
    weights: GroupingWeights,
    S: float,
    thresholds: Iterable[float] = DEFAULT_THRESHOLDS,
    route_ref: float | None = None,
) -> GroupingPlan:
    """Build fogs around ``heads`` by sweeping the admission threshold.

    The first threshold under which every ordinary vehicle is admitted and
    the fogs reach their target size wins. Without one, the best-coverage
    sweep result is kept, the leftovers join their lowest-beta fog that still
    has room (``forced``), and any vehicles beyond ``x*y`` join their
    lowest-beta fog regardless of size (``overflow``).
    """
    frame = _Frame.build(snapshots, route_ref or S)
    idx = frame.index()
    if len(set(heads)) != len(heads):
        raise GroupingError("duplicate heads")
    try:
        head_idx = np.array([idx[h] for h in heads], dtype=np.int64)
    except KeyError as exc:
        raise GroupingError(f"head {exc.args[0]} not in snapshot set") from None
    is_head = np.zeros(len(frame.ids), dtype=bool)
    is_head[head_idx] = True
    rows = np.flatnonzero(~is_head)
    ov_ids = frame.ids[rows]
    x = len(heads)
    thresholds = list(thresholds)
    vbar = _catchment_speeds(frame, head_idx, S)
    cand = _candidates(frame, rows, head_idx, vbar, S, weights, max(thresholds, default=-np.inf))
    target = min(len(rows), x * y)

    best: tuple[int, float, _Assignment] | None = None
    chosen = None
    for th in thresholds:
        res = defer_accept(cand, ov_ids, y, th)
        if res.assigned == target:
            chosen = (th, res)
            break
        if best is None or res.assigned > best[0]:
            best = (res.assigned, th, res)

    forced: list[int] = []
    overflow: list[int] = []
    if chosen is not None:
        th, res = chosen
        satisfied = True
    else:
        _, th, res = best if best is not None else (0, None, defer_accept(cand, ov_ids, y, -np.inf))
        satisfied = False
    fog_of = res.fog_of.copy()
    sizes = res.sizes.copy()
    left = np.flatnonzero(fog_of < 0)
    left = left[np.argsort(ov_ids[left], kind="stable")]
    if len(left):
        prefs_all = np.argsort(_beta_rows(frame, rows[left], head_idx, vbar, S, weights), axis=1, kind="stable")
        for i, prefs in zip(left, prefs_all):
            room = prefs[sizes[prefs] < y]
            k = room[0] if len(room) else prefs[0]
            (forced if len(room) else overflow).append(int(ov_ids[i]))
            fog_of[i] = k
            sizes[k] += 1

    fogs = [Fog(int(h)) for h in heads]
    for i in np.argsort(ov_ids, kind="stable"):
        fogs[fog_of[i]].members.append(int(ov_ids[i]))
    plan = GroupingPlan(x, y, fogs, th, satisfied, sorted(forced), sorted(overflow))
    plan.validate()
    return plan


def group_vehicles(
    snapshots: Sequence[VehicleSnapshot],
    weights: GroupingWeights,
    S: float,
    thresholds: Iterable[float] = DEFAULT_THRESHOLDS,
    route_ref: float | None = None,
) -> GroupingPlan:
    """Complete grouping: size the fogs, elect heads, compose fogs."""
    x, y, _ = optimal_group_sizes(len(snapshots))
    heads = select_fog_heads(snapshots, x, weights, S, route_ref)
    return compose_fogs(snapshots, heads, y, weights, S, thresholds, route_ref)


def random_plan(snapshots: Sequence[VehicleSnapshot], x: int, y: int, rng: np.random.Generator) -> GroupingPlan:
    """Affinity-free baseline: random heads, random equal-size fogs."""
    ids = np.array(sorted(s.vehicle_id for s in snapshots), dtype=np.int64)
    perm = rng.permutation(ids)
    heads, rest = perm[:x], perm[x:]
    fogs = [Fog(int(h)) for h in heads]
    for j, v in enumerate(rest):
        fogs[j % x].members.append(int(v))
    for f in fogs:
        f.members.sort()
    return GroupingPlan(x, y, fogs, None, False)


# --- dynamics -------------------------------------------------------------------


@dataclass(frozen=True)
class Trigger:
    kind: str  # "TotalChanged" | "HeadChanged" | "MemberExceedsThreshold"
    fog: int | None = None
    vehicle: int | None = None


def detect_regroup_triggers(
    plan: GroupingPlan,
    snapshots: Sequence[VehicleSnapshot],
    weights: GroupingWeights,
    S: float,
    route_ref: float | None = None,
) -> list[Trigger]:
    if {s.vehicle_id for s in snapshots} != plan.vehicle_ids():
        return [Trigger("TotalChanged")]
    frame = _Frame.build(snapshots, route_ref or S)
    idx = frame.index()
    alpha = _alphas(frame, S, weights)
    out: list[Trigger] = []
    for k, fog in enumerate(plan.fogs):
        cand = sorted(fog.vehicles)
        best = min(cand, key=lambda v: (alpha[idx[v]], v))
        if best != fog.head:
            out.append(Trigger("HeadChanged", fog=k))
    if plan.beta_th is None:
        return out
    exempt = set(plan.forced) | set(plan.overflow)
    head_idx = np.array([idx[h] for h in plan.heads], dtype=np.int64)
    vbar = _catchment_speeds(frame, head_idx, S)
    for k, fog in enumerate(plan.fogs):
        for v in fog.members:
            if v in exempt:
                continue
            i = idx[v]
            d = math.dist(frame.pos[i], frame.pos[head_idx[k]])
            b = fog_factor(frame.speed[i], vbar[k], frame.route[i], d, S, weights)
            if b > plan.beta_th:
                out.append(Trigger("MemberExceedsThreshold", fog=k, vehicle=v))
    return out


def apply_triggers(
    plan: GroupingPlan,
    snapshots: Sequence[VehicleSnapshot],
    triggers: Sequence[Trigger],
    weights: GroupingWeights,
    S: float,
    route_ref: float | None = None,
) -> GroupingPlan:
    """Repair ``plan`` for the new snapshot set according to ``triggers``.

    A changed vehicle count regroups from scratch. A changed head hands the
    fog to its current lowest-alpha vehicle. A member over the threshold
    leaves and joins the lowest-beta fog with room, preferring fogs that
    admit it under the threshold.
    """
    if any(t.kind == "TotalChanged" for t in triggers):
        return group_vehicles(snapshots, weights, S, route_ref=route_ref)
    new = GroupingPlan(
        plan.x, plan.y, [Fog(f.head, list(f.members)) for f in plan.fogs],
        plan.beta_th, plan.threshold_satisfied, list(plan.forced), list(plan.overflow),
    )
    if not triggers:
        return new
    frame = _Frame.build(snapshots, route_ref or S)
    idx = frame.index()
    alpha = _alphas(frame, S, weights)
    for t in triggers:
        if t.kind == "HeadChanged":
            fog = new.fogs[t.fog]
            best = min(fog.vehicles, key=lambda v: (alpha[idx[v]], v))
            fog.members = sorted((fog.vehicles - {best}))
            fog.head = best
    heads = set(new.heads)
    movers = [t.vehicle for t in triggers if t.kind == "MemberExceedsThreshold" and t.vehicle not in heads]
    if not movers:
        return new
    fog_idx = new.fog_index()
    for v in movers:
        new.fogs[fog_idx[v]].members.remove(v)
    head_idx = np.array([idx[h] for h in new.heads], dtype=np.int64)
    rows = np.array([idx[v] for v in movers], dtype=np.int64)
    beta = _beta_rows(frame, rows, head_idx, _catchment_speeds(frame, head_idx, S), S, weights)
    th = new.beta_th if new.beta_th is not None else np.inf
    for r, v in enumerate(movers):
        prefs = np.lexsort((np.arange(new.x), beta[r]))
        room = [k for k in prefs if len(new.fogs[k].members) < new.y]
        under = [k for k in room if beta[r, k] < th]
        k = under[0] if under else (room[0] if room else prefs[0])
        if not under and v not in new.forced:
            new.forced.append(v)
        new.fogs[k].members.append(v)
        new.fogs[k].members.sort()
    new.forced.sort()
    return new


@dataclass(frozen=True)
class StabilityDelta:
    IV: int
    LV: int
    NV: int
    head_changed: bool
    U: float


def updated_rate(before: Fog | tuple[int, Iterable[int]], after: Fog | tuple[int, Iterable[int]]) -> StabilityDelta:
    """Membership churn of one fog over an interval; ``1`` if its head changed.

    Both arguments are ``Fog`` objects or ``(head, members)`` pairs; the head
    counts as a fog vehicle.
    """
    def unpack(f):
        if isinstance(f, Fog):
            return f.head, f.vehicles
        head, members = f
        return head, set(members) | ({head} if head is not None else set())

    hb, vb = unpack(before)
    ha, va = unpack(after)
    iv = len(vb)
    if iv == 0:
        raise GroupingError("initial fog is empty")
    lv = len(vb - va)
    nv = len(va - vb)
    if hb != ha:
        return StabilityDelta(iv, lv, nv, True, 1.0)
    return StabilityDelta(iv, lv, nv, False, min(1.0, (lv + nv) / iv))


def mean_updated_rate(before: GroupingPlan, after: GroupingPlan) -> float:
    """Average ``U`` across fogs, matched by fog position."""
    rates = [updated_rate(b, a).U for b, a in zip(before.fogs, after.fogs)]
    return float(np.mean(rates)) if rates else 0.0
