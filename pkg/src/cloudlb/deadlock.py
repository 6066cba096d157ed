"""Deadlock detection over engine snapshots.

Jobs in this model never hold one VM while waiting on another, so a
wait-for cycle cannot form. "Deadlock" is detected operationally instead:

* contention: two or more jobs queued on a fully utilized VM while every
  other VM is fully utilized too, i.e. there is nowhere to escape to;
* starvation: one job continuously queued for longer than a horizon.

The functions take any object exposing ``vms`` (ordered ``vm_id ->
VmRuntime``) and ``jobs`` (``job_id -> JobRuntime``), which is what the
engine's ``Simulation`` provides.
"""

from __future__ import annotations

from dataclasses import dataclass

FULL = 100

CONTENTION = "contention"
STARVATION = "starvation"


@dataclass(frozen=True)
class DeadlockEvent:
    time: int
    kind: str
    job_ids: tuple[str, ...]
    vm_id: str

    def __post_init__(self) -> None:
        if self.kind == CONTENTION and len(self.job_ids) < 2:
            raise ValueError("a contention event names at least two jobs")
        if self.kind == STARVATION and len(self.job_ids) != 1:
            raise ValueError("a starvation event names exactly one job")
        if self.kind not in (CONTENTION, STARVATION):
            raise ValueError(f"unknown deadlock kind {self.kind}")

    def trace_line(self) -> str:
        return f"DEADLOCK {self.time} {self.kind} {self.vm_id} {' '.join(self.job_ids)}"


@dataclass(frozen=True)
class AssignmentGraph:
    """Bipartite job/VM graph: an edge per running assignment or queued wait."""

    job_vertices: frozenset[str]
    vm_vertices: frozenset[str]
    edges: frozenset[tuple[str, str]]

    def is_bipartite(self) -> bool:
        if self.job_vertices & self.vm_vertices:
            return False
        return all(j in self.job_vertices and v in self.vm_vertices for j, v in self.edges)

    def degree(self, vertex: str) -> int:
        return sum(1 for j, v in self.edges if vertex in (j, v))


def snapshot_graph(world) -> AssignmentGraph:
    edges = set()
    for vm_id, vm in world.vms.items():
        for job_id in vm.running:
            edges.add((job_id, vm_id))
        for job_id in vm.queue:
            edges.add((job_id, vm_id))
    return AssignmentGraph(frozenset(world.jobs), frozenset(world.vms), frozenset(edges))


def contended_vms(world) -> list[tuple[str, tuple[str, ...]]]:
    """VMs currently meeting the contention condition, with their queued jobs."""
    statuses = {vm_id: vm.status for vm_id, vm in world.vms.items()}
    if any(s < FULL for s in statuses.values()):
        return []
    return [
        (vm_id, tuple(vm.queue))
        for vm_id, vm in world.vms.items()
        if len(vm.queue) >= 2
    ]


class ContentionDetector:
    """Reports each (vm, queued job set) once until its membership changes."""

    def __init__(self) -> None:
        self._reported: dict[str, frozenset[str]] = {}

    def __call__(self, world, now: int) -> list[DeadlockEvent]:
        events = []
        active = contended_vms(world)
        live = {vm_id for vm_id, _ in active}
        for vm_id in list(self._reported):
            if vm_id not in live:
                del self._reported[vm_id]
        for vm_id, jobs in active:
            members = frozenset(jobs)
            if self._reported.get(vm_id) == members:
                continue
            self._reported[vm_id] = members
            events.append(DeadlockEvent(now, CONTENTION, jobs, vm_id))
        return events


def detect_contention(world, now: int) -> list[DeadlockEvent]:
    """Stateless form: every currently contended VM yields an event."""
    return [DeadlockEvent(now, CONTENTION, jobs, vm_id) for vm_id, jobs in contended_vms(world)]


def detect_starvation(job, now: int, horizon: int) -> DeadlockEvent | None:
    if job.queued_since is None or job.current_vm is None:
        return None
    if now - job.queued_since <= horizon:
        return None
    if job.starved_episode == job.episode:
        return None
    return DeadlockEvent(now, STARVATION, (job.job_id,), job.current_vm)
