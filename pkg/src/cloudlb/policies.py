"""Allocation policies: the index-table baseline and the enhanced cloud manager.

The engine drives a policy through a few hooks:

``select(job, world)``
    Choose a VM for a job being dispatched.
``notify_delay(kind)``
    When an allocation or de-allocation notice reaches the policy: ``None``
    for the same instant, an integer for that many ms later.
``notify(kind, job_id, vm_id)``
    The notice itself.
``monitor(world)``
    Periodic check (only when ``monitors`` is True); returns MigrationPlans.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .scenario import INGRESS, HopMatrix, Scenario, compute_status, remaining_duration

ALLOCATION = "allocation"
DEALLOCATION = "deallocation"

LEAST_COUNT = "least-count-first"
LEAST_STATUS = "least-status"
HOP_TIEBREAK = "hop-tiebreak"
LIST_ORDER_TIEBREAK = "list-order-tiebreak"

MIGRATE = "migrate"
WAIT = "wait"


class PolicyError(RuntimeError):
    """Internal bookkeeping went inconsistent."""


@dataclass(frozen=True)
class PolicyDecision:
    chosen_vm: str
    rationale: str


@dataclass(frozen=True)
class MigrationPlan:
    source_vm: str
    victim: str
    target_vm: str | None
    hop: int | None
    alternative_wait: float
    action: str


@dataclass(frozen=True)
class TableRow:
    vm_id: str
    job_ids: tuple[str, ...]
    status: Fraction


@dataclass
class ManagerTable:
    """The cloud manager's view: per VM, its assigned jobs and status percent."""

    rows: list[TableRow] = field(default_factory=list)
    generation: int = 0

    @classmethod
    def from_world(cls, world, generation: int = 0) -> "ManagerTable":
        rows = [
            TableRow(vm_id, tuple(vm.running) + tuple(vm.queue), vm.status)
            for vm_id, vm in world.vms.items()
        ]
        return cls(rows, generation)

    def row(self, vm_id: str) -> TableRow:
        for r in self.rows:
            if r.vm_id == vm_id:
                return r
        raise KeyError(vm_id)


# ---------------------------------------------------------------------------
# Selection rules


def baseline_select(alloc_counts: Sequence[tuple[str, int]]) -> PolicyDecision:
    """Least allocation count; the first VM in list order wins ties."""
    best = min(range(len(alloc_counts)), key=lambda i: (alloc_counts[i][1], i))
    low = alloc_counts[best][1]
    tied = sum(1 for _, c in alloc_counts if c == low) > 1
    return PolicyDecision(alloc_counts[best][0], LIST_ORDER_TIEBREAK if tied else LEAST_COUNT)


def enhanced_select(table: ManagerTable, hops: HopMatrix) -> PolicyDecision:
    """Least status, then least hop from ingress, then list order."""
    keys = [(r.status, hops.hop(INGRESS, r.vm_id), i) for i, r in enumerate(table.rows)]
    best = min(keys)
    chosen = table.rows[best[2]].vm_id
    same_status = [k for k in keys if k[0] == best[0]]
    if len(same_status) == 1:
        return PolicyDecision(chosen, LEAST_STATUS)
    if sum(1 for k in same_status if k[1] == best[1]) == 1:
        return PolicyDecision(chosen, HOP_TIEBREAK)
    return PolicyDecision(chosen, LIST_ORDER_TIEBREAK)


# ---------------------------------------------------------------------------
# Migration planning


def plan_one_migration(victim, source: str, table: ManagerTable, hops: HopMatrix, world,
                       reserved: dict[str, list[int]] | None = None, stay: int | None = None) -> MigrationPlan:
    """Decide whether ``victim`` should leave ``source`` now.

    Candidates are other VMs below the overload threshold that would admit
    the victim on arrival (``reserved`` holds capacity already promised to
    migrants this tick). The best candidate is the one with the least hop
    from the source, list order breaking ties. The victim migrates when that
    hop is no longer than its wait for the source: for a queued victim the
    lookahead wait for admission, for a running one the time until it would
    finish in place. A running victim must also finish strictly earlier by
    moving. ``stay`` may be passed in when the caller already knows it.
    """
    reserved = reserved or {}
    params = world.params
    threshold = params.overload_threshold
    cap = victim.spec.capacity
    running = victim.job_id in world.vms[source].running
    if running:
        stay = world.completion_time(victim.job_id) - world.now
    elif stay is None:
        stay = world.wait_time(source, victim.job_id)

    candidates = []
    for idx, row in enumerate(table.rows):
        if row.vm_id == source:
            continue
        vm = world.vms[row.vm_id]
        inbound = reserved.get(row.vm_id, [])
        status = row.status + compute_status(vm.spec.capacity, inbound)
        if status >= threshold or vm.queue:
            continue
        idle = not vm.running and not inbound
        if not idle and status + compute_status(vm.spec.capacity, [cap]) > threshold:
            continue
        candidates.append((hops.hop(source, row.vm_id), idx, row.vm_id))

    if not candidates:
        return MigrationPlan(source, victim.job_id, None, None, stay, WAIT)
    hop, _, target = min(candidates)
    action = MIGRATE if hop <= stay else WAIT
    if running and action == MIGRATE:
        src_cap = world.vms[source].spec.capacity
        tgt_cap = world.vms[target].spec.capacity
        elapsed = world.now - victim.run_start
        moved = hop + remaining_duration(victim.scheduled_duration, elapsed, src_cap, tgt_cap)
        if not moved < stay:
            action = WAIT
    return MigrationPlan(source, victim.job_id, target, hop, stay, action)


def monitor_tick(table: ManagerTable, world, params) -> list[MigrationPlan]:
    """Plans for every overloaded VM; at most one migration leaves each source."""
    plans = []
    reserved: dict[str, list[int]] = {}
    for row in table.rows:
        vm = world.vms[row.vm_id]
        if row.status < params.overload_threshold and not vm.queue:
            continue
        if world.now - vm.last_migration_time < params.migration_cooldown:
            continue
        # queued jobs first (no sunk work), then running, most recent first
        victims = list(vm.queue) + list(reversed(vm.running))
        waits = world.queue_waits(row.vm_id)
        for job_id in victims:
            plan = plan_one_migration(world.jobs[job_id], row.vm_id, table, world.hops, world, reserved,
                                      waits.get(job_id))
            plans.append(plan)
            if plan.action == MIGRATE:
                reserved.setdefault(plan.target_vm, []).append(world.jobs[job_id].spec.capacity)
                break
    return plans


# ---------------------------------------------------------------------------
# Policies


class BaselinePolicy:
    """Index-table balancer: least allocation count, first VM on ties.

    Allocations are counted when the balancer hands out the VM. De-allocation
    notices travel back through the datacenter controller and land
    ``baseline_sync_delay`` ms after the job finishes, so until then the
    table still counts the finished job.
    """

    name = "baseline"
    monitors = False

    def __init__(self, scenario: Scenario) -> None:
        self.sync_delay = scenario.params.baseline_sync_delay
        self.counts = {vm.vm_id: 0 for vm in scenario.vms}

    def notify_delay(self, kind: str) -> int | None:
        return self.sync_delay if kind == DEALLOCATION else None

    def select(self, job, world) -> PolicyDecision:
        return baseline_select(list(self.counts.items()))

    def notify(self, kind: str, job_id: str, vm_id: str) -> None:
        if kind == ALLOCATION:
            self.counts[vm_id] += 1
        elif kind == DEALLOCATION:
            if self.counts[vm_id] == 0:
                raise PolicyError(f"de-allocation of {job_id} would make count({vm_id}) negative")
            self.counts[vm_id] -= 1
        else:
            raise PolicyError(f"unknown notification {kind}")

    def monitor(self, world) -> list[MigrationPlan]:
        return []


class EnhancedPolicy:
    """Cloud manager with an always-current table and periodic migration."""

    name = "enhanced"
    monitors = True

    def __init__(self, scenario: Scenario) -> None:
        self.hops = scenario.hops
        self.params = scenario.params
        self.table = ManagerTable()

    def refresh(self, world) -> ManagerTable:
        self.table = ManagerTable.from_world(world, self.table.generation + 1)
        return self.table

    def notify_delay(self, kind: str) -> int | None:
        return None

    def select(self, job, world) -> PolicyDecision:
        return enhanced_select(self.refresh(world), self.hops)

    def notify(self, kind: str, job_id: str, vm_id: str) -> None:
        # the table is rebuilt from live state whenever it is read
        self.table.generation += 1

    def monitor(self, world) -> list[MigrationPlan]:
        return monitor_tick(self.refresh(world), world, self.params)


POLICIES = {"baseline": BaselinePolicy, "enhanced": EnhancedPolicy}


def make_policy(name: str, scenario: Scenario):
    try:
        return POLICIES[name](scenario)
    except KeyError:
        raise ValueError(f"unknown policy {name!r} (choose from {', '.join(POLICIES)})") from None
