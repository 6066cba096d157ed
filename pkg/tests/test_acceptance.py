"""Acceptance criteria; each test prints one PASS/FAIL line."""

import random
import time
from fractions import Fraction

import pytest

from cloudlb import bundled_scenario, load_scenario
from cloudlb.cli import sweep_rows
from cloudlb.engine import Simulation, run
from cloudlb.metrics import compare_reports, emit_report_csv
from cloudlb.policies import MIGRATE, ManagerTable, TableRow, baseline_select, enhanced_select
from cloudlb.scenario import INGRESS, HopMatrix

from fixtures import FIXTURES, build
from oracle import simulate
from randomized import random_scenario


@pytest.fixture(scope="module")
def tables23():
    return load_scenario(bundled_scenario())


@pytest.fixture
def verdict(capsys):
    def report(label, ok, detail=""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}{': ' + detail if detail else ''}")
        assert ok, f"{label}: {detail}"
    return report


def timed(fn):
    t0 = time.perf_counter()
    result = fn()
    return result, time.perf_counter() - t0


def test_ac1_baseline_ordering(tables23, verdict):
    report, secs = timed(lambda: run(tables23, "baseline"))
    resp = {r.job_id: r.response_ms for r in report.per_job}
    others = [v for k, v in resp.items() if k != "J4"]
    j4_min = all(resp["J4"] < v for v in others)
    others = [v for k, v in resp.items() if k != "J6"]
    j6_max = all(resp["J6"] > v for v in others)
    verdict("AC1 baseline J4 strictly min, J6 strictly max", j4_min and j6_max and secs < 1,
            f"{resp} in {secs:.3f}s")


def test_ac2_mean_improvement(tables23, verdict):
    (base, enh), secs = timed(lambda: (run(tables23, "baseline"), run(tables23, "enhanced")))
    pct = compare_reports(base, enh).mean_improvement_pct
    verdict("AC2 MEAN improvement >= 30.0%", pct >= 30.0 and secs < 1, f"{pct:.2f}% in {secs:.3f}s")


def test_ac3_deadlock_avoidance(tables23, verdict):
    (base, enh), secs = timed(lambda: (run(tables23, "baseline"), run(tables23, "enhanced")))
    b, e = base.summary.deadlock_count, enh.summary.deadlock_count
    verdict("AC3 deadlocks baseline >= 1, enhanced == 0", b >= 1 and e == 0 and secs < 1,
            f"baseline={b} enhanced={e} in {secs:.3f}s")


def test_ac4_oracle_equivalence(verdict):
    mismatches = []
    for name, (jobs, vms, hops) in FIXTURES.items():
        assert len(vms) <= 3 and len(jobs) <= 4
        sc = build(jobs, vms, hops)
        for policy in ("baseline", "enhanced"):
            report = run(sc, policy)
            active = {t for t, plans in report.ticks if any(p.action == MIGRATE for p in plans)}
            assert len(active) <= 1, name
            got = {r.job_id: r.response_ms for r in report.per_job}
            want = simulate(jobs, vms, policy, hops=hops)
            if got != want:
                mismatches.append((name, policy, got, want))
    verdict("AC4 oracle equivalence", len(FIXTURES) >= 5 and not mismatches,
            f"{len(FIXTURES)} fixtures x 2 policies, mismatches={mismatches}")


def test_ac5_determinism(tables23, verdict):
    scenarios = [tables23] + [build(*fx) for fx in FIXTURES.values()]
    diffs = 0
    for sc in scenarios:
        for policy in ("baseline", "enhanced"):
            a, b = run(sc, policy), run(sc, policy)
            if emit_report_csv(a) != emit_report_csv(b) or a.trace != b.trace:
                diffs += 1
    verdict("AC5 byte-identical reports and traces", diffs == 0, f"{len(scenarios) * 2} run pairs, {diffs} differ")


def work_error(job_capacity, mu, segments):
    done = sum(cap * ms for cap, ms in segments)
    return abs(done - mu * job_capacity), sum(cap for cap, _ in segments)


def test_ac6_work_conservation(verdict):
    rng = random.Random(20261016)
    n, violations, checked, moved = 1000, [], 0, 0
    for i in range(n):
        sc = random_scenario(rng)
        for policy in ("baseline", "enhanced"):
            sim = Simulation(sc, policy, check_invariants=True)
            sim.run()
            for job in sim.jobs.values():
                if job.state.value != "Done":
                    continue
                err, tol = work_error(job.spec.capacity, sc.params.mu_ms, job.segments)
                checked += 1
                moved += job.migrations > 0
                if err > tol:
                    violations.append((i, policy, job.job_id, float(err), tol))
    verdict("AC6 work conservation and invariants", not violations,
            f"{n} scenarios, {checked} jobs checked ({moved} migrated), violations={violations[:3]}")


def test_ac7_wait_vs_hop(tables23, verdict):
    rng = random.Random(77)
    bad = []
    quiet_ticks = 0
    for i in range(300):
        sc = random_scenario(rng, hop_range=(0, 400))
        report = run(sc, "enhanced")
        departs = {}
        for line in report.trace:
            parts = line.split()
            if parts[2:3] == ["MigrationDepart"]:
                departs[int(parts[0])] = departs.get(int(parts[0]), 0) + 1
        for t, plans in report.ticks:
            hops = [p.hop for p in plans if p.hop is not None]
            waits = [p.alternative_wait for p in plans]
            if not hops or min(hops) > max(waits):
                quiet_ticks += 1
                if departs.get(t):
                    bad.append((i, t))
            for p in plans:
                if p.action == MIGRATE and p.hop > p.alternative_wait:
                    bad.append((i, t, p))
    rows = sweep_rows(tables23, "default_hop", [("10000", 10000)])
    far = run(tables23.with_param("default_hop", 10000), "enhanced").summary.total_migrations
    verdict("AC7 no migration when every hop exceeds every wait", not bad and far == 0 and quiet_ticks > 0,
            f"{quiet_ticks} such ticks, violations={bad[:3]}, default_hop=10000 migrations={far} ({rows[0]})")


def brute_baseline(counts):
    best = 0
    for i in range(1, len(counts)):
        if counts[i][1] < counts[best][1]:
            best = i
    return counts[best][0]


def brute_enhanced(rows, hops):
    best = 0
    for i in range(1, len(rows)):
        s, h = rows[i].status, hops.hop(INGRESS, rows[i].vm_id)
        bs, bh = rows[best].status, hops.hop(INGRESS, rows[best].vm_id)
        if s < bs or (s == bs and h < bh):
            best = i
    return rows[best].vm_id


def test_ac8_selection_rules(verdict):
    rng = random.Random(8)
    mismatches = 0
    for _ in range(10_000):
        n = rng.randint(1, 10)
        counts = [(f"V{i}", rng.randint(0, 4)) for i in range(n)]
        if baseline_select(counts).chosen_vm != brute_baseline(counts):
            mismatches += 1
    for _ in range(10_000):
        n = rng.randint(1, 10)
        rows = [TableRow(f"V{i}", (), Fraction(rng.choice([0, 50, 100, 150, rng.randint(0, 3000)]), rng.choice([1, 3])))
                for i in range(n)]
        entries = {(INGRESS, f"V{i}"): rng.randint(0, 3) for i in range(n) if rng.random() < 0.6}
        hops = HopMatrix(entries, rng.randint(0, 3))
        if enhanced_select(ManagerTable(rows), hops).chosen_vm != brute_enhanced(rows, hops):
            mismatches += 1
    verdict("AC8 selection rules match brute-force argmin", mismatches == 0, f"20000 cases, {mismatches} mismatches")
