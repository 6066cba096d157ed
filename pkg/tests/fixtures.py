"""Small hand-checkable scenarios shared by several test modules.

Capacities are chosen so no completion lands on a monitor tick while some
VM is overloaded; the brute-force oracle refuses such ties.
"""

from cloudlb.scenario import HopMatrix, JobSpec, Scenario, VmSpec

# name -> (jobs as (id, capacity, arrival), vms as (id, capacity), hops)
FIXTURES = {
    "single": ([("J1", 990, 0)], [("V1", 1000)], {}),
    "two_vm_spill": ([("J1", 990, 0), ("J2", 490, 0), ("J3", 190, 0)], [("V1", 1000), ("V2", 1000)], {}),
    "running_migration": ([("J1", 100, 0), ("J2", 80, 0)], [("A", 100), ("B", 1000)], {}),
    "queued_migration": (
        [("J1", 600, 0), ("J2", 490, 0), ("J3", 490, 0), ("J4", 700, 0)],
        [("V1", 1000), ("V2", 1000)],
        {},
    ),
    "stale_dealloc": ([("J1", 990, 0), ("J2", 120, 0), ("J3", 500, 90)], [("V1", 1000), ("V2", 1000)], {}),
    "ingress_ties": (
        [("J1", 210, 0), ("J2", 210, 0), ("J3", 210, 0), ("J4", 500, 0)],
        [("V1", 1000), ("V2", 1000), ("V3", 1000)],
        {("@ingress", "V1"): 30, ("@ingress", "V2"): 5, ("@ingress", "V3"): 5},
    ),
    "oversize_fifo": ([("J1", 99, 0), ("J2", 100, 0)], [("V1", 100)], {}),
}

# migrates at two different ticks, so it is checked separately
MULTI_TICK = ([("J1", 980, 0), ("J2", 960, 0), ("J3", 32, 0), ("J4", 1000, 0)],
              [("V1", 1000), ("V2", 1000), ("V3", 100)], {})


def build(jobs, vms, hops, default_hop=10) -> Scenario:
    entries = dict(hops)
    for (a, b), ms in hops.items():
        entries.setdefault((b, a), ms)
    return Scenario(
        tuple(JobSpec(*j) for j in jobs),
        tuple(VmSpec(*v) for v in vms),
        HopMatrix(entries, default_hop),
    )
