"""Deterministic discrete-event kernel for the datacenter model.

Events are consumed in ``(time, seq)`` order, where ``seq`` is assigned at
scheduling time, so simultaneous events run in the order they were
scheduled. Initial arrivals are scheduled in scenario list order.

VM model: a VM runs any number of jobs concurrently while the summed status
stays at or below the overload threshold; a job too large for that runs
only on an idle VM. Everything else waits in the VM's FIFO queue, and only
the queue head may be admitted. Migrating jobs make no progress in transit.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from . import policies as pol
from .deadlock import ContentionDetector, DeadlockEvent, detect_starvation
from .metrics import JobRecord, RunReport, response_time
from .scenario import (
    JobSpec,
    Scenario,
    VmSpec,
    compute_status,
    remaining_duration,
    service_duration,
)

DEFAULT_HORIZON = 10**9

ARRIVAL = "Arrival"
DISPATCH = "Dispatch"
COMPLETION = "Completion"
MONITOR_TICK = "MonitorTick"
MIGRATION_DEPART = "MigrationDepart"
MIGRATION_ARRIVE = "MigrationArrive"
SYNC_DONE = "SyncDone"
STARVATION_CHECK = "StarvationCheck"
REJECT = "Reject"


class JobState(str, Enum):
    PENDING = "Pending"
    QUEUED = "Queued"
    RUNNING = "Running"
    MIGRATING = "Migrating"
    DONE = "Done"
    REJECTED = "Rejected"


class EngineAbort(RuntimeError):
    """The run cannot finish (horizon exceeded or no events left)."""


class InternalError(AssertionError):
    """World state became inconsistent; always a bug."""


@dataclass(order=True)
class Event:
    time: int
    seq: int
    kind: str = field(compare=False)
    job: str | None = field(default=None, compare=False)
    vm: str | None = field(default=None, compare=False)
    data: object = field(default=None, compare=False)


@dataclass
class JobRuntime:
    spec: JobSpec
    state: JobState = JobState.PENDING
    current_vm: str | None = None
    dispatch_time: int | None = None
    completion_time: int | None = None
    scheduled_duration: int = 0
    elapsed_at_pause: int = 0
    migrations: int = 0
    run_start: int | None = None
    queued_since: int | None = None
    episode: int = 0
    starved_episode: int = -1
    # (duration on source, elapsed there, source capacity) of an interrupted run
    carry: tuple[int, int, int] | None = None
    token: int = 0
    started: bool = False
    # (vm capacity, ms executed) per run segment
    segments: list[tuple[int, int]] = field(default_factory=list)

    @property
    def job_id(self) -> str:
        return self.spec.job_id


@dataclass
class VmRuntime:
    spec: VmSpec
    running: dict[str, int] = field(default_factory=dict)  # job_id -> capacity, dispatch order
    queue: deque[str] = field(default_factory=deque)
    last_migration_time: float = -math.inf

    @property
    def status(self) -> Fraction:
        return compute_status(self.spec.capacity, self.running.values())

    def status_with(self, capacity: int) -> Fraction:
        return compute_status(self.spec.capacity, [*self.running.values(), capacity])

    def can_admit(self, capacity: int, threshold) -> bool:
        if self.queue:
            return False
        return not self.running or self.status_with(capacity) <= threshold


def lookahead_waits(vm_capacity: int, threshold, now: int, running: list[tuple[int, int]],
                    queued: list[tuple[int, int | None]]) -> list[int]:
    """Delay until each queued job would be admitted, assuming nothing else arrives.

    ``running`` holds ``(completion_time, capacity)`` of jobs on the VM and
    ``queued`` holds ``(capacity, duration)`` in queue order; the last entry's
    duration may be None. Always finite: once every running job finishes the
    VM is idle and the head is admitted unconditionally.
    """
    t = now
    active = list(running)
    queue = deque(queued)
    waits = []
    while True:
        while queue:
            cap, duration = queue[0]
            if active and compute_status(vm_capacity, [c for _, c in active] + [cap]) > threshold:
                break
            queue.popleft()
            waits.append(t - now)
            if duration is None:
                return waits
            active.append((t + duration, cap))
        if not queue:
            return waits
        t = min(end for end, _ in active)
        active = [a for a in active if a[0] != t]


def lookahead_wait(vm_capacity: int, threshold, now: int, running: list[tuple[int, int]],
                   ahead: list[tuple[int, int]], job_capacity: int) -> int:
    """Delay until a job behind ``ahead`` (``(capacity, duration)`` pairs) is admitted."""
    return lookahead_waits(vm_capacity, threshold, now, running, [*ahead, (job_capacity, None)])[-1]


class Simulation:
    """One run of one policy over one scenario. Not reusable."""

    def __init__(self, scenario: Scenario, policy, *, horizon: int = DEFAULT_HORIZON,
                 check_invariants: bool = False) -> None:
        self.scenario = scenario
        self.params = scenario.params
        self.hops = scenario.hops
        self.policy = pol.make_policy(policy, scenario) if isinstance(policy, str) else policy
        self.horizon = horizon
        self.check = check_invariants
        self.jobs = {j.job_id: JobRuntime(j) for j in scenario.jobs}
        self.vms = {v.vm_id: VmRuntime(v) for v in scenario.vms}
        self.now = 0

        self.trace: list[str] = []
        self.deadlocks: list[DeadlockEvent] = []
        self.timeline: list[tuple[int, str, Fraction]] = []
        self.ticks: list[tuple[int, list]] = []

        self._heap: list[Event] = []
        self._seq = 0
        self._contention = ContentionDetector()
        self._new_deadlocks: list[DeadlockEvent] = []
        self._last_status: dict[str, Fraction] = {}
        self._live = len(self.jobs)
        self._ran = False
        self._handlers = {
            ARRIVAL: self._on_arrival,
            DISPATCH: self._on_dispatch,
            COMPLETION: self._on_completion,
            MONITOR_TICK: self._on_tick,
            MIGRATION_DEPART: self._on_depart,
            MIGRATION_ARRIVE: self._on_arrive,
            SYNC_DONE: self._on_sync,
            STARVATION_CHECK: self._on_starvation_check,
            REJECT: self._on_reject,
        }

    # -- event queue --------------------------------------------------------

    def schedule(self, time: int, kind: str, job: str | None = None, vm: str | None = None,
                 data=None) -> Event:
        ev = Event(time, self._seq, kind, job, vm, data)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def run(self) -> RunReport:
        if self._ran:
            raise RuntimeError("a Simulation runs once")
        self._ran = True
        for job in self.scenario.jobs:
            self.schedule(job.arrival_time, ARRIVAL, job.job_id)
        if self.policy.monitors:
            self.schedule(self.params.monitor_interval, MONITOR_TICK)
        self._sample(full=True)

        while self._live:
            if not self._heap:
                raise EngineAbort(f"event queue exhausted at t={self.now} with {self._live} jobs unfinished")
            ev = heapq.heappop(self._heap)
            if ev.time > self.horizon:
                raise EngineAbort(f"simulated clock passed the horizon ({self.horizon} ms) at t={ev.time}")
            if ev.time < self.now:
                raise InternalError(f"event {ev} is in the past (now={self.now})")
            self.now = ev.time
            if not self._handlers[ev.kind](ev):
                continue
            self.trace.append(f"{ev.time} {ev.seq} {ev.kind} {ev.job or '-'} {ev.vm or '-'}")
            self._new_deadlocks.extend(self._contention(self, self.now))
            for d in self._new_deadlocks:
                self.deadlocks.append(d)
                self.trace.append(d.trace_line())
            self._new_deadlocks.clear()
            self._sample(full=ev.kind == MONITOR_TICK)
            if self.check:
                self.check_invariants()
        return self._report()

    # -- world queries used by policies ---------------------------------------

    def completion_time(self, job_id: str) -> int:
        job = self.jobs[job_id]
        if job.state is not JobState.RUNNING:
            raise InternalError(f"{job_id} is not running")
        return job.run_start + job.scheduled_duration

    def duration_on(self, job: JobRuntime, vm: VmRuntime) -> int:
        if job.carry is None:
            return service_duration(job.spec.capacity, vm.spec.capacity, self.params.mu_ms)
        duration, elapsed, source_cap = job.carry
        return remaining_duration(duration, elapsed, source_cap, vm.spec.capacity)

    def wait_time(self, vm_id: str, job_id: str) -> int:
        vm = self.vms[vm_id]
        if job_id in vm.running:
            return 0
        running = [(self.completion_time(j), cap) for j, cap in vm.running.items()]
        ahead = []
        for j in vm.queue:
            if j == job_id:
                break
            ahead.append((self.jobs[j].spec.capacity, self.duration_on(self.jobs[j], vm)))
        return lookahead_wait(vm.spec.capacity, self.params.overload_threshold, self.now,
                              running, ahead, self.jobs[job_id].spec.capacity)

    def queue_waits(self, vm_id: str) -> dict[str, int]:
        """``wait_time`` for every job queued on a VM, in one pass."""
        vm = self.vms[vm_id]
        running = [(self.completion_time(j), cap) for j, cap in vm.running.items()]
        queued = [(self.jobs[j].spec.capacity, self.duration_on(self.jobs[j], vm)) for j in vm.queue]
        waits = lookahead_waits(vm.spec.capacity, self.params.overload_threshold, self.now, running, queued)
        return dict(zip(vm.queue, waits))

    # -- VM operations -------------------------------------------------------

    def admit_or_queue(self, vm: VmRuntime, job: JobRuntime) -> str:
        job.current_vm = vm.spec.vm_id
        if vm.can_admit(job.spec.capacity, self.params.overload_threshold):
            self._start(vm, job)
            return "admitted"
        vm.queue.append(job.job_id)
        job.state = JobState.QUEUED
        job.queued_since = self.now
        job.episode += 1
        self.schedule(self.now + self.params.deadlock_horizon + 1, STARVATION_CHECK,
                      job.job_id, vm.spec.vm_id, job.episode)
        return "queued"

    def _start(self, vm: VmRuntime, job: JobRuntime) -> None:
        duration = self.duration_on(job, vm)
        job.carry = None
        job.state = JobState.RUNNING
        job.started = True
        job.run_start = self.now
        job.queued_since = None
        job.scheduled_duration = duration
        job.token += 1
        vm.running[job.job_id] = job.spec.capacity
        self.schedule(self.now + duration, COMPLETION, job.job_id, vm.spec.vm_id, job.token)

    def _admit_heads(self, vm: VmRuntime) -> None:
        threshold = self.params.overload_threshold
        while vm.queue:
            head = self.jobs[vm.queue[0]]
            if vm.running and vm.status_with(head.spec.capacity) > threshold:
                break
            vm.queue.popleft()
            self._start(vm, head)

    def on_completion(self, vm: VmRuntime, job_id: str) -> None:
        job = self.jobs[job_id]
        if job_id not in vm.running or job.state is not JobState.RUNNING:
            raise InternalError(f"completion of {job_id} which is not running on {vm.spec.vm_id}")
        del vm.running[job_id]
        job.segments.append((vm.spec.capacity, job.scheduled_duration))
        job.state = JobState.DONE
        job.completion_time = self.now
        self._live -= 1
        self._admit_heads(vm)
        self._notify(pol.DEALLOCATION, job_id, vm.spec.vm_id)

    def start_migration(self, job_id: str, source_vm: str, target_vm: str) -> None:
        job = self.jobs[job_id]
        src = self.vms[source_vm]
        if target_vm == source_vm:
            raise InternalError("migration target equals source")
        if job.state is JobState.RUNNING and job_id in src.running:
            elapsed = self.now - job.run_start
            job.elapsed_at_pause = elapsed
            job.carry = (job.scheduled_duration, elapsed, src.spec.capacity)
            job.segments.append((src.spec.capacity, elapsed))
            job.token += 1  # voids the pending Completion
            del src.running[job_id]
        elif job.state is JobState.QUEUED and job_id in src.queue:
            src.queue.remove(job_id)
            job.queued_since = None
        else:
            raise InternalError(f"cannot migrate {job_id} in state {job.state.value} from {source_vm}")
        job.state = JobState.MIGRATING
        job.current_vm = None
        job.migrations += 1
        src.last_migration_time = self.now
        self.schedule(self.now + self.hops.hop(source_vm, target_vm), MIGRATION_ARRIVE, job_id, target_vm)
        self._admit_heads(src)

    def _notify(self, kind: str, job_id: str, vm_id: str) -> None:
        delay = self.policy.notify_delay(kind)
        if delay is None:
            self.policy.notify(kind, job_id, vm_id)
        else:
            self.schedule(self.now + delay, SYNC_DONE, job_id, vm_id, kind)

    # -- handlers: each returns True if the event changed anything -----------

    def _on_arrival(self, ev: Event) -> bool:
        job = self.jobs[ev.job]
        if math.isfinite(self.params.rejection_timeout):
            self.schedule(self.now + int(self.params.rejection_timeout), REJECT, job.job_id)
        self.schedule(self.now, DISPATCH, job.job_id)
        return True

    def _on_dispatch(self, ev: Event) -> bool:
        job = self.jobs[ev.job]
        if job.state is JobState.REJECTED:
            return False
        decision = self.policy.select(job, self)
        ev.vm = decision.chosen_vm
        job.dispatch_time = self.now
        self.admit_or_queue(self.vms[decision.chosen_vm], job)
        self._notify(pol.ALLOCATION, job.job_id, decision.chosen_vm)
        return True

    def _on_completion(self, ev: Event) -> bool:
        job = self.jobs[ev.job]
        if ev.data != job.token or job.state is not JobState.RUNNING:
            return False
        self.on_completion(self.vms[ev.vm], job.job_id)
        return True

    def _on_sync(self, ev: Event) -> bool:
        self.policy.notify(ev.data, ev.job, ev.vm)
        return True

    def _on_tick(self, ev: Event) -> bool:
        plans = self.policy.monitor(self)
        self.ticks.append((self.now, plans))
        for plan in plans:
            if plan.action == pol.MIGRATE:
                self.schedule(self.now, MIGRATION_DEPART, plan.victim, plan.source_vm, plan)
        self.schedule(self.now + self.params.monitor_interval, MONITOR_TICK)
        return True

    def _on_depart(self, ev: Event) -> bool:
        plan = ev.data
        job = self.jobs[plan.victim]
        # something earlier at this instant may have moved the victim already
        if job.current_vm != plan.source_vm or job.state not in (JobState.QUEUED, JobState.RUNNING):
            return False
        self.start_migration(plan.victim, plan.source_vm, plan.target_vm)
        return True

    def _on_arrive(self, ev: Event) -> bool:
        job = self.jobs[ev.job]
        if job.state is not JobState.MIGRATING:
            raise InternalError(f"{job.job_id} arrived at {ev.vm} while {job.state.value}")
        self.admit_or_queue(self.vms[ev.vm], job)
        return True

    def _on_starvation_check(self, ev: Event) -> bool:
        job = self.jobs[ev.job]
        if job.state is not JobState.QUEUED or job.episode != ev.data:
            return False
        found = detect_starvation(job, self.now, self.params.deadlock_horizon)
        if found is None:
            return False
        job.starved_episode = job.episode
        self._new_deadlocks.append(found)
        return True

    def _on_reject(self, ev: Event) -> bool:
        job = self.jobs[ev.job]
        if job.started or job.state not in (JobState.PENDING, JobState.QUEUED):
            return False
        if job.state is JobState.QUEUED:
            vm = self.vms[job.current_vm]
            vm.queue.remove(job.job_id)
            job.queued_since = None
            ev.vm = vm.spec.vm_id
            self._admit_heads(vm)
            self._notify(pol.DEALLOCATION, job.job_id, vm.spec.vm_id)
        job.state = JobState.REJECTED
        self._live -= 1
        return True

    # -- bookkeeping ---------------------------------------------------------

    def _sample(self, full: bool = False) -> None:
        for vm_id, vm in self.vms.items():
            status = vm.status
            if full or self._last_status.get(vm_id) != status:
                self.timeline.append((self.now, vm_id, status))
                self._last_status[vm_id] = status

    def check_invariants(self) -> None:
        """Exclusivity and status coherence; raises InternalError on violation."""
        placed: dict[str, str] = {}
        for vm_id, vm in self.vms.items():
            for job_id, cap in vm.running.items():
                job = self.jobs[job_id]
                if job_id in placed:
                    raise InternalError(f"{job_id} in two places ({placed[job_id]}, {vm_id})")
                placed[job_id] = vm_id
                if job.state is not JobState.RUNNING or job.current_vm != vm_id or cap != job.spec.capacity:
                    raise InternalError(f"{job_id} running on {vm_id} but recorded as {job.state.value}")
            for job_id in vm.queue:
                job = self.jobs[job_id]
                if job_id in placed:
                    raise InternalError(f"{job_id} in two places ({placed[job_id]}, {vm_id})")
                placed[job_id] = vm_id
                if job.state is not JobState.QUEUED or job.current_vm != vm_id:
                    raise InternalError(f"{job_id} queued on {vm_id} but recorded as {job.state.value}")
            expected = compute_status(vm.spec.capacity, [self.jobs[j].spec.capacity for j in vm.running])
            if vm.status != expected:
                raise InternalError(f"status of {vm_id} incoherent")
            if vm.queue and not vm.running:
                raise InternalError(f"{vm_id} idle with a non-empty queue")
        for job_id, job in self.jobs.items():
            if job.state in (JobState.RUNNING, JobState.QUEUED):
                if job_id not in placed:
                    raise InternalError(f"{job_id} is {job.state.value} but on no VM")
            elif job_id in placed:
                raise InternalError(f"{job_id} is {job.state.value} but still on {placed[job_id]}")
            if job.state is JobState.MIGRATING and job.current_vm is not None:
                raise InternalError(f"{job_id} in transit but bound to {job.current_vm}")
            if (job.completion_time is not None) != (job.state is JobState.DONE):
                raise InternalError(f"{job_id} completion time inconsistent with {job.state.value}")

    def _report(self) -> RunReport:
        records = []
        for job in self.jobs.values():
            done = job.state is JobState.DONE
            records.append(
                JobRecord(
                    job_id=job.job_id,
                    arrival_ms=job.spec.arrival_time,
                    dispatch_ms=job.dispatch_time,
                    final_vm=job.current_vm,
                    migrations=job.migrations,
                    response_ms=response_time(job) if done else None,
                    state=job.state.value,
                )
            )
        return RunReport(
            policy=self.policy.name,
            per_job=records,
            deadlocks=list(self.deadlocks),
            timeline=list(self.timeline),
            ticks=list(self.ticks),
            trace=list(self.trace),
        )


def run(scenario: Scenario, policy: str, *, horizon: int = DEFAULT_HORIZON,
        check_invariants: bool = False) -> RunReport:
    return Simulation(scenario, policy, horizon=horizon, check_invariants=check_invariants).run()
