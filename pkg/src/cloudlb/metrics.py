"""Run reports, cross-policy comparison, and CSV emission."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

from .deadlock import CONTENTION, STARVATION, DeadlockEvent
from .scenario import format_status

DONE = "Done"
REJECTED = "Rejected"

REPORT_HEADER = "job_id,arrival_ms,dispatch_ms,final_vm,migrations,response_ms,state"
COMPARISON_HEADER = "job_id,baseline_ms,enhanced_ms,improvement_pct"
TIMELINE_HEADER = "policy,time_ms,vm_id,status"


class ComparisonError(ValueError):
    """Reports cannot be compared (different job sets)."""


@dataclass(frozen=True)
class JobRecord:
    job_id: str
    arrival_ms: int
    dispatch_ms: int | None
    final_vm: str | None
    migrations: int
    response_ms: int | None
    state: str


@dataclass(frozen=True)
class Summary:
    mean_response: Fraction | None
    min_response: int | None
    max_response: int | None
    total_migrations: int
    deadlocks: dict[str, int]
    rejected: int

    @property
    def deadlock_count(self) -> int:
        return sum(self.deadlocks.values())


@dataclass
class RunReport:
    policy: str
    per_job: list[JobRecord]
    deadlocks: list[DeadlockEvent] = field(default_factory=list)
    # (time_ms, vm_id, status percent)
    timeline: list[tuple[int, str, Fraction]] = field(default_factory=list)
    # (tick time, plans evaluated at that tick)
    ticks: list[tuple[int, list]] = field(default_factory=list)
    trace: list[str] = field(default_factory=list)

    def response(self, job_id: str) -> int | None:
        for rec in self.per_job:
            if rec.job_id == job_id:
                return rec.response_ms
        raise KeyError(job_id)

    @property
    def summary(self) -> Summary:
        done = [r.response_ms for r in self.per_job if r.state == DONE]
        counts = {CONTENTION: 0, STARVATION: 0}
        for ev in self.deadlocks:
            counts[ev.kind] += 1
        return Summary(
            mean_response=Fraction(sum(done), len(done)) if done else None,
            min_response=min(done) if done else None,
            max_response=max(done) if done else None,
            total_migrations=sum(r.migrations for r in self.per_job),
            deadlocks=counts,
            rejected=sum(1 for r in self.per_job if r.state == REJECTED),
        )


def response_time(job) -> int:
    if job.completion_time is None:
        raise ValueError(f"job {job.job_id} has not completed")
    return job.completion_time - job.spec.arrival_time


def _round2(value) -> float:
    q = Decimal(value.numerator) / Decimal(value.denominator) if isinstance(value, Fraction) else Decimal(str(value))
    return float(q.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def improvement_pct(baseline_ms, enhanced_ms) -> float:
    """Percent reduction of ``enhanced_ms`` relative to ``baseline_ms`` (0.01 resolution)."""
    if baseline_ms == 0:
        raise ValueError("baseline response time is zero; improvement undefined")
    base = Fraction(str(baseline_ms)) if isinstance(baseline_ms, float) else Fraction(baseline_ms)
    enh = Fraction(str(enhanced_ms)) if isinstance(enhanced_ms, float) else Fraction(enhanced_ms)
    return _round2(100 * (1 - enh / base))


def _fmt(value) -> str:
    return "" if value is None else str(value)


def format_ms(value: Fraction | None) -> str:
    if value is None:
        return ""
    if Fraction(value).denominator == 1:
        return str(int(value))
    return f"{_round2(Fraction(value)):.2f}"


def emit_report_csv(report: RunReport) -> str:
    lines = [REPORT_HEADER]
    for r in report.per_job:
        lines.append(
            ",".join(
                [
                    r.job_id,
                    str(r.arrival_ms),
                    _fmt(r.dispatch_ms),
                    _fmt(r.final_vm),
                    str(r.migrations),
                    _fmt(r.response_ms),
                    r.state,
                ]
            )
        )
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class JobDelta:
    job_id: str
    baseline_ms: int | None
    enhanced_ms: int | None
    improvement_pct: float | None


@dataclass(frozen=True)
class Comparison:
    per_job: list[JobDelta]
    mean_baseline: Fraction | None
    mean_enhanced: Fraction | None
    mean_improvement_pct: float | None
    deadlocks: dict[str, int]


def compare_reports(base: RunReport, enh: RunReport) -> Comparison:
    base_ids = [r.job_id for r in base.per_job]
    enh_ids = [r.job_id for r in enh.per_job]
    if base_ids != enh_ids:
        missing = sorted(set(base_ids) ^ set(enh_ids))
        raise ComparisonError(f"reports cover different jobs: {', '.join(missing) or 'order differs'}")

    deltas = []
    both_b, both_e = [], []
    for b, e in zip(base.per_job, enh.per_job):
        pct = None
        if b.state == DONE and e.state == DONE:
            both_b.append(b.response_ms)
            both_e.append(e.response_ms)
            pct = improvement_pct(b.response_ms, e.response_ms) if b.response_ms else None
        deltas.append(JobDelta(b.job_id, b.response_ms, e.response_ms, pct))

    mean_b = Fraction(sum(both_b), len(both_b)) if both_b else None
    mean_e = Fraction(sum(both_e), len(both_e)) if both_e else None
    mean_pct = improvement_pct(mean_b, mean_e) if mean_b else None
    return Comparison(
        deltas,
        mean_b,
        mean_e,
        mean_pct,
        {base.policy: base.summary.deadlock_count, enh.policy: enh.summary.deadlock_count},
    )


def _fmt_pct(value: float | None) -> str:
    return "" if value is None else f"{value:.2f}"


def emit_comparison(base: RunReport, enh: RunReport) -> str:
    cmp = compare_reports(base, enh)
    lines = [COMPARISON_HEADER]
    for d in cmp.per_job:
        lines.append(f"{d.job_id},{_fmt(d.baseline_ms)},{_fmt(d.enhanced_ms)},{_fmt_pct(d.improvement_pct)}")
    lines.append(
        f"MEAN,{format_ms(cmp.mean_baseline)},{format_ms(cmp.mean_enhanced)},{_fmt_pct(cmp.mean_improvement_pct)}"
    )
    return "\n".join(lines) + "\n"


def emit_timeline_csv(*reports: RunReport) -> str:
    """Per-VM utilization samples, one block per report, for external plotting."""
    lines = [TIMELINE_HEADER]
    for report in reports:
        for time_ms, vm_id, status in report.timeline:
            lines.append(f"{report.policy},{time_ms},{vm_id},{format_status(status)}")
    return "\n".join(lines) + "\n"


def emit_deadlocks_csv(report: RunReport) -> str:
    lines = ["time_ms,kind,vm_id,job_ids"]
    for ev in report.deadlocks:
        lines.append(f"{ev.time},{ev.kind},{ev.vm_id},{' '.join(ev.job_ids)}")
    return "\n".join(lines) + "\n"
