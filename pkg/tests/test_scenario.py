from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from cloudlb import bundled_scenario
from cloudlb.scenario import (
    INFINITE,
    EngineParams,
    ScenarioError,
    compute_status,
    format_status,
    load_scenario,
    parse_scenario,
    remaining_duration,
    serialize_scenario,
    service_duration,
)

MINIMAL = """
[jobs]
J1 1000 0
J2 500 20
[vms]
V1 1000
V2 2000
"""


def test_parse_minimal_uses_defaults():
    sc = parse_scenario(MINIMAL)
    assert [j.job_id for j in sc.jobs] == ["J1", "J2"]
    assert sc.job("J2").arrival_time == 20
    assert sc.vm("V2").capacity == 2000
    assert sc.params == EngineParams()
    assert sc.params.rejection_timeout == INFINITE
    assert sc.hops.default_hop == 10
    assert sc.hops.hop("V1", "V2") == 10
    assert sc.hops.hop("V1", "V1") == 0


def test_bundled_scenario_loads():
    sc = load_scenario(bundled_scenario())
    assert [j.capacity for j in sc.jobs] == [1000, 10000, 1000, 100, 10000, 100000]
    assert [v.capacity for v in sc.vms] == [100, 1000, 1000, 100000, 10000]
    assert all(j.arrival_time == 0 for j in sc.jobs)


def test_explicit_hops_are_symmetric_unless_both_given():
    sc = parse_scenario(MINIMAL + "[hops]\ndefault 7\nV1 V2 3\n@ingress V1 9\n")
    assert sc.hops.hop("V1", "V2") == sc.hops.hop("V2", "V1") == 3
    assert sc.hops.hop("@ingress", "V1") == 9
    assert sc.hops.hop("@ingress", "V2") == 7
    sc = parse_scenario(MINIMAL + "[hops]\nV1 V2 3\nV2 V1 4\n")
    assert (sc.hops.hop("V1", "V2"), sc.hops.hop("V2", "V1")) == (3, 4)


def test_duplicate_vm_is_rejected_with_line():
    with pytest.raises(ScenarioError) as err:
        parse_scenario("[jobs]\nJ1 10 0\n[vms]\nV1 100\nV1 200\n")
    assert "V1" in str(err.value)
    assert err.value.line == 5


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("[jobs]\nJ1 10 0\n", "vms"),
        ("[vms]\nV1 10\n", "jobs"),
        ("[jobs]\nJ1 10 0\n[vms]\nV1 10\n[bogus]\n", "bogus"),
        ("[jobs]\nJ1 10 0\n[vms]\nV1 10\n[engine]\nspeed 3\n", "speed"),
        ("[jobs]\nJ1 0 0\n[vms]\nV1 10\n", "capacity"),
        ("[jobs]\nJ1 10 0\n[vms]\nV1 10\n[hops]\nV1 V9 3\n", "V9"),
        ("[jobs]\nJ1 10 0\n[vms]\nV1 10\n[engine]\nmonitor_interval 0\n", "monitor_interval"),
        ("[jobs]\nJ1 10 0 7\n[vms]\nV1 10\n", "line 2"),
    ],
)
def test_invalid_input(text, fragment):
    with pytest.raises(ScenarioError, match=fragment):
        parse_scenario(text)


def test_status_examples():
    assert compute_status(1000, [200, 800]) == 100
    assert compute_status(100000, [100, 100000]) == Fraction(1001, 10)
    assert compute_status(100, [1000]) == 1000
    assert compute_status(100, []) == 0
    assert format_status(Fraction(1001, 10)) == "100.1"
    assert format_status(Fraction(1, 3)) == "0.3"
    assert format_status(Fraction(1, 20)) == "0.1"


def test_service_duration_examples():
    assert service_duration(1000, 1000, 500) == 500
    assert service_duration(100, 100000, 500) == 1       # 0.5 rounds up
    assert service_duration(1, 100000, 500) == 1         # floor of 1 ms
    assert service_duration(100000, 100, 500) == 500000
    assert service_duration(3, 1000, Fraction(5, 2)) == 1


def test_remaining_duration_examples():
    assert remaining_duration(500, 250, 1000, 1000) == 250
    assert remaining_duration(500, 500, 1000, 1000) == 0
    assert remaining_duration(500, 499, 1000, 100000) == 1
    assert remaining_duration(5000, 50, 100, 100000) == 5


@given(st.integers(1, 10**6), st.integers(1, 10**6), st.integers(1, 1000))
def test_duration_is_monotone_in_job_capacity(job, vm, mu):
    assert service_duration(job, vm, mu) <= service_duration(job + 1, vm, mu)
    assert service_duration(job, vm, mu) >= service_duration(job, vm + 1, mu)


@given(st.integers(1, 10**4), st.integers(1, 10**4), st.integers(1, 100))
def test_duration_tracks_exact_cost(job, vm, k):
    exact = Fraction(500 * k * job, vm)
    got = service_duration(k * job, vm, 500)
    if exact >= 1:
        assert abs(got - exact) <= Fraction(1, 2)
    else:
        assert got == 1


@given(st.integers(1, 10**5), st.data(), st.integers(1, 10**5), st.integers(1, 10**5))
def test_remaining_split_identity(duration, data, src, tgt):
    elapsed = data.draw(st.integers(0, duration))
    left = remaining_duration(duration, elapsed, src, tgt)
    if elapsed == duration:
        assert left == 0
    else:
        # work is preserved up to rounding and the 1 ms floor
        assert abs(left * tgt - (duration - elapsed) * src) <= max(tgt, src) // 2 + tgt
    assert remaining_duration(duration, elapsed, src, src) == duration - elapsed


ident = st.from_regex(r"[A-Za-z][A-Za-z0-9_]{0,5}", fullmatch=True)


@st.composite
def scenarios(draw):
    names = draw(st.lists(ident, min_size=2, max_size=10, unique=True))
    split = draw(st.integers(1, len(names) - 1))
    jobs = [f"{n} {draw(st.integers(1, 10**6))} {draw(st.integers(0, 1000))}" for n in names[:split]]
    vms = [f"{n} {draw(st.integers(1, 10**6))}" for n in names[split:]]
    hops = [f"default {draw(st.integers(0, 100))}"]
    nodes = names[split:] + ["@ingress"]
    for _ in range(draw(st.integers(0, 3))):
        a, b = draw(st.sampled_from(nodes)), draw(st.sampled_from(nodes))
        if a != b:
            hops.append(f"{a} {b} {draw(st.integers(0, 100))}")
    engine = [f"monitor_interval {draw(st.integers(1, 200))}", f"mu_ms {draw(st.sampled_from(['500', '2.5', '10']))}"]
    if draw(st.booleans()):
        engine.append(f"rejection_timeout {draw(st.integers(1, 10**4))}")
    # later duplicates of the same hop pair would be an error; keep the first
    seen, uniq = set(), []
    for h in hops:
        key = tuple(h.split()[:2])
        if key not in seen:
            seen.add(key)
            uniq.append(h)
    return "\n".join(["[jobs]", *jobs, "[vms]", *vms, "[hops]", *uniq, "[engine]", *engine]) + "\n"


@given(scenarios())
def test_parse_serialize_round_trip(text):
    sc = parse_scenario(text)
    normalized = serialize_scenario(sc)
    again = parse_scenario(normalized)
    assert again == sc
    assert serialize_scenario(again) == normalized
