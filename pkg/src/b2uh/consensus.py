"""Two-layer PBFT over a grouping plan.

Every fog first agrees among its ordinary vehicles. If no more than a third
of the fogs fail, the fog heads run a second PBFT instance in which the heads
of failed fogs count as faulty. Faults are crashes drawn once per round.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .grouping import GroupingPlan
from .kernels import pbft_round

PHASES = ("VIEW_CHANGE", "PRE_PREPARE", "PREPARE", "COMMIT")
OVL = "OVL"
FVL = "FVL"
MIN_FOG_COMMITTEE = 4


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Committee:
    members: tuple[int, ...]
    primary: int = 0
    layer: str = OVL
    fog: int | None = None

    def __post_init__(self):
        if self.layer not in (OVL, FVL):
            raise ConfigurationError(f"unknown layer {self.layer!r}")
        if len(set(self.members)) != len(self.members):
            raise ConfigurationError("duplicate committee members")
        if self.layer == OVL and len(self.members) < MIN_FOG_COMMITTEE:
            raise ConfigurationError(
                f"fog {self.fog} committee has {len(self.members)} members; at least 4 required"
            )
        if not self.members:
            raise ConfigurationError("empty committee")
        if not 0 <= self.primary < len(self.members):
            raise ConfigurationError("primary index outside committee")

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class FaultModel:
    pf: float
    seed: int = 0
    style: str = "crash"

    def __post_init__(self):
        if not 0.0 <= self.pf <= 1.0:
            raise ConfigurationError(f"P_f={self.pf} outside [0, 1]")
        if self.style != "crash":
            raise ConfigurationError("only the crash fault style is modelled")

    def draw(self, round_no: int, vehicle_ids: Iterable[int]) -> frozenset[int]:
        """Faulty vehicles for one round; fixed by ``(seed, round_no)``."""
        ids = sorted(vehicle_ids)
        if self.pf == 0 or not ids:
            return frozenset()
        rng = np.random.default_rng([self.seed, round_no])
        hit = rng.random(len(ids)) < self.pf
        return frozenset(v for v, h in zip(ids, hit) if h)


@dataclass(frozen=True)
class Event:
    round: int
    layer: str
    fog: int | None
    phase: str
    sender: int
    receiver: int
    digest: str

    def to_dict(self) -> dict:
        return {
            "round": self.round, "layer": self.layer, "fog": self.fog, "phase": self.phase,
            "from": self.sender, "to": self.receiver, "digest": self.digest,
        }


class MessageBus:
    """Synchronous in-memory bus; keeps every delivered message in order."""

    def __init__(self):
        self.events: list[Event] = []

    def extend(self, events: Iterable[Event]) -> None:
        self.events.extend(events)

    def __len__(self) -> int:
        return len(self.events)

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.events:
                fh.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")

    @staticmethod
    def read_jsonl(path) -> list[dict]:
        with open(path, encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]


@dataclass
class PBFTResult:
    success: bool
    messages: int
    primary: int
    rotations: int
    committed: dict[int, str]
    events: list[Event] = field(default_factory=list, repr=False)


def run_pbft(
    committee: Committee,
    digest: str,
    faulty: Iterable[int] = (),
    bus: MessageBus | None = None,
    round_no: int = 0,
) -> PBFTResult:
    """One PBFT instance over ``committee`` with the given crashed members.

    Succeeds iff at most ``n // 3`` members are faulty; a crashed primary is
    replaced round-robin by the next live member.
    """
    faulty = set(faulty)
    mask = np.fromiter((m in faulty for m in committee.members), dtype=np.bool_, count=committee.size)
    record = bus is not None
    ok, p, rot, sent, committed, ev = pbft_round(mask, committee.primary, record)
    members = committee.members
    events = []
    if record:
        events = [
            Event(round_no, committee.layer, committee.fog, PHASES[ph], members[s], members[r], digest)
            for ph, s, r in ev.tolist()
        ]
        bus.extend(events)
    done = {members[i]: digest for i in np.flatnonzero(committed)} if ok else {}
    return PBFTResult(bool(ok), int(sent), members[p], int(rot), done, events)


def model_message_count(x: int, y: int | Sequence[int], fogs_run: int | None = None,
                        fvl_ran: bool = True) -> int:
    """``x**2 + sum(y_k**2)`` over the fogs that ran; the head term only if the
    head layer ran. ``y`` is one size for all fogs or a per-fog list."""
    sizes = [y] * (x if fogs_run is None else fogs_run) if isinstance(y, int) else list(y)
    if fogs_run is not None and fogs_run > x:
        raise ConfigurationError("more fogs ran than exist")
    return sum(s * s for s in sizes) + (x * x if fvl_ran else 0)


# name of the published-interface operation
paper_model_message_count = model_message_count


@dataclass
class ConsensusReport:
    round: int
    x: int
    fog_success: list[bool]
    failed_fogs: int
    fvl_ran: bool
    fvl_faulty: int
    fvl_success: bool
    success: bool
    messages_simulated: int
    messages_model: int
    fog_digests: list[str] = field(default_factory=list)
    fvl_digest: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _digest(*parts: object) -> str:
    return hashlib.sha256("|".join(map(str, parts)).encode()).hexdigest()


def fog_committees(plan: GroupingPlan, round_no: int = 0) -> list[Committee]:
    out = []
    for k, fog in enumerate(plan.fogs):
        members = tuple(sorted(fog.members))
        out.append(Committee(members, round_no % max(len(members), 1), OVL, k))
    return out


def run_b2uh_round(
    plan: GroupingPlan,
    proposals: Sequence[str] | None = None,
    fault_model: FaultModel | None = None,
    round_no: int = 0,
    bus: MessageBus | None = None,
    faulty: Iterable[int] | None = None,
    workers: int | None = None,
) -> ConsensusReport:
    """OVL fogs first, then the FVL when at most ``x // 3`` fogs failed.

    ``faulty`` overrides the fault draw with an explicit crashed set.
    ``workers`` runs fog rounds on a thread pool; results and events are
    merged by fog index so the output does not depend on it.
    """
    fault_model = fault_model or FaultModel(0.0)
    committees = fog_committees(plan, round_no)
    x = len(committees)
    if proposals is None:
        proposals = [_digest("round", round_no, "fog", k) for k in range(x)]
    if len(proposals) != x:
        raise ConfigurationError(f"{len(proposals)} proposals for {x} fogs")
    if faulty is None:
        faulty = fault_model.draw(round_no, plan.vehicle_ids())
    faulty = frozenset(faulty)

    def one(k):
        local = MessageBus() if bus is not None else None
        return run_pbft(committees[k], proposals[k], faulty, local, round_no), local

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            fog_results = list(ex.map(one, range(x)))
    else:
        fog_results = [one(k) for k in range(x)]
    if bus is not None:
        for _, local in fog_results:
            bus.extend(local.events)

    flags = [r.success for r, _ in fog_results]
    sent = sum(r.messages for r, _ in fog_results)
    j = flags.count(False)
    budget = x // 3
    fvl_ran = j <= budget
    heads = tuple(f.head for f in plan.fogs)
    k_faulty = sum(1 for h, ok in zip(heads, flags) if ok and h in faulty)
    fvl_ok = False
    fvl_digest = ""
    if fvl_ran:
        fvl_digest = _digest("round", round_no, "fvl", *[p for p, ok in zip(proposals, flags) if ok])
        head_faults = {h for h, ok in zip(heads, flags) if not ok or h in faulty}
        res = run_pbft(Committee(heads, round_no % x, FVL, None), fvl_digest, head_faults, bus, round_no)
        fvl_ok = res.success
        sent += res.messages
    model = model_message_count(x, [len(c.members) for c in committees], fvl_ran=fvl_ran)
    return ConsensusReport(
        round_no, x, flags, j, fvl_ran, k_faulty, fvl_ok, fvl_ran and fvl_ok,
        sent, model, list(proposals), fvl_digest,
    )


def empirical_success(plan: GroupingPlan, pf: float, rounds: int, seed: int) -> float:
    """Fraction of successful rounds over ``rounds`` seeded fault draws."""
    fm = FaultModel(pf, seed)
    wins = sum(run_b2uh_round(plan, fault_model=fm, round_no=r).success for r in range(rounds))
    return wins / rounds
