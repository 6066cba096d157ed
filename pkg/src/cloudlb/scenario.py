"""Scenario types, the scenario file format, and the closed-form cost model.

All durations are integer milliseconds. Ratios are computed with
``fractions.Fraction`` and rounded half-up, so nothing here depends on
float rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

INGRESS = "@ingress"
INFINITE = math.inf

SECTIONS = ("jobs", "vms", "hops", "engine")


class ScenarioError(ValueError):
    """Malformed or invalid scenario input."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def round_half_up(value: Fraction) -> int:
    return math.floor(value + Fraction(1, 2))


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class JobSpec:
    job_id: str
    capacity: int
    arrival_time: int = 0

    def __post_init__(self) -> None:
        if self.capacity <= 0:
            raise ScenarioError(f"job {self.job_id}: capacity must be positive")
        if self.arrival_time < 0:
            raise ScenarioError(f"job {self.job_id}: arrival time must be >= 0")


@dataclass(frozen=True)
class VmSpec:
    vm_id: str
    capacity: int

    def __post_init__(self) -> None:
        if self.capacity <= 0:
            raise ScenarioError(f"vm {self.vm_id}: capacity must be positive")


@dataclass(frozen=True)
class HopMatrix:
    """Directed hop times between nodes; unknown pairs use ``default_hop``."""

    entries: Mapping[tuple[str, str], int] = field(default_factory=dict)
    default_hop: int = 10

    def __post_init__(self) -> None:
        if self.default_hop < 0:
            raise ScenarioError("default hop must be >= 0")
        for (a, b), ms in self.entries.items():
            if ms < 0:
                raise ScenarioError(f"hop {a} {b} must be >= 0")
            if a == b and ms != 0:
                raise ScenarioError(f"hop {a} {a} must be 0")

    def hop(self, source: str, target: str) -> int:
        if source == target:
            return 0
        return self.entries.get((source, target), self.default_hop)


@dataclass(frozen=True)
class EngineParams:
    mu_ms: Fraction = Fraction(500)
    monitor_interval: int = 50
    overload_threshold: Fraction = Fraction(100)
    baseline_sync_delay: int = 25
    deadlock_horizon: int = 2500
    rejection_timeout: float = INFINITE
    migration_cooldown: int = 100

    def __post_init__(self) -> None:
        if self.mu_ms <= 0:
            raise ScenarioError("mu_ms must be > 0")
        if self.monitor_interval <= 0:
            raise ScenarioError("monitor_interval must be > 0")
        if self.overload_threshold <= 0:
            raise ScenarioError("overload_threshold must be > 0")
        if self.baseline_sync_delay < 0:
            raise ScenarioError("baseline_sync_delay must be >= 0")
        if self.deadlock_horizon <= 0:
            raise ScenarioError("deadlock_horizon must be > 0")
        if self.rejection_timeout <= 0:
            raise ScenarioError("rejection_timeout must be > 0")
        if self.migration_cooldown < 0:
            raise ScenarioError("migration_cooldown must be >= 0")


PARAM_NAMES = tuple(f.name for f in fields(EngineParams))
_DECIMAL_PARAMS = {"mu_ms", "overload_threshold"}


@dataclass(frozen=True)
class Scenario:
    jobs: tuple[JobSpec, ...]
    vms: tuple[VmSpec, ...]
    hops: HopMatrix = field(default_factory=HopMatrix)
    params: EngineParams = field(default_factory=EngineParams)

    def __post_init__(self) -> None:
        if not self.jobs:
            raise ScenarioError("scenario needs at least one job")
        if not self.vms:
            raise ScenarioError("scenario needs at least one VM")
        seen: set[str] = set()
        for ident in [j.job_id for j in self.jobs] + [v.vm_id for v in self.vms]:
            if ident in seen:
                raise ScenarioError(f"duplicate identifier {ident}")
            seen.add(ident)
        nodes = {v.vm_id for v in self.vms} | {INGRESS}
        for a, b in self.hops.entries:
            for node in (a, b):
                if node not in nodes:
                    raise ScenarioError(f"hop references unknown node {node}")

    def job(self, job_id: str) -> JobSpec:
        for j in self.jobs:
            if j.job_id == job_id:
                return j
        raise KeyError(job_id)

    def vm(self, vm_id: str) -> VmSpec:
        for v in self.vms:
            if v.vm_id == vm_id:
                return v
        raise KeyError(vm_id)

    def with_param(self, name: str, value) -> "Scenario":
        """Copy with one engine parameter (or ``default_hop``) replaced."""
        if name == "default_hop":
            return replace(self, hops=replace(self.hops, default_hop=int(value)))
        if name not in PARAM_NAMES:
            raise ScenarioError(f"unknown parameter {name}")
        return replace(self, params=replace(self.params, **{name: value}))


# ---------------------------------------------------------------------------
# Cost model


def compute_status(vm_capacity: int, active_capacities: Iterable[int]) -> Fraction:
    """Utilization percent of a VM; uncapped, so >100 means oversubscribed."""
    return Fraction(100 * sum(active_capacities), vm_capacity)


def format_status(status: Fraction) -> str:
    tenths = round_half_up(Fraction(status) * 10)
    sign = "-" if tenths < 0 else ""
    tenths = abs(tenths)
    return f"{sign}{tenths // 10}.{tenths % 10}"


def service_duration(job_capacity: int, vm_capacity: int, mu_ms) -> int:
    return max(1, round_half_up(Fraction(mu_ms) * job_capacity / vm_capacity))


def remaining_duration(
    original_duration: int, elapsed: int, source_capacity: int, target_capacity: int
) -> int:
    """Time left on the target after pausing ``elapsed`` ms into a run on the source."""
    left = original_duration - elapsed
    if left <= 0:
        return 0
    return max(1, round_half_up(Fraction(left * source_capacity, target_capacity)))


# ---------------------------------------------------------------------------
# File format


def parse_param_value(name: str, text: str, line: int | None = None):
    """Parse one ``[engine]`` value (also used for sweep values)."""
    if name not in PARAM_NAMES and name != "default_hop":
        raise ScenarioError(f"unknown key {name}", line)
    if name == "rejection_timeout" and text.lower() in ("inf", "infinite"):
        return INFINITE
    if name in _DECIMAL_PARAMS:
        try:
            return Fraction(Decimal(text))
        except (InvalidOperation, ValueError):
            raise ScenarioError(f"{name}: expected a number, got {text!r}", line)
    return _parse_int(text, name, line)


def _parse_int(text: str, what: str, line: int | None) -> int:
    try:
        return int(text)
    except ValueError:
        raise ScenarioError(f"{what}: expected an integer, got {text!r}", line)


def parse_scenario(text: str) -> Scenario:
    jobs: list[JobSpec] = []
    vms: list[VmSpec] = []
    explicit_hops: dict[tuple[str, str], int] = {}
    default_hop: int | None = None
    params: dict[str, object] = {}
    seen_sections: set[str] = set()
    ids: dict[str, int] = {}
    section = None

    def claim(ident: str, lineno: int) -> None:
        if ident.startswith("@"):
            raise ScenarioError(f"identifier {ident} is reserved", lineno)
        if ident in ids:
            raise ScenarioError(
                f"duplicate identifier {ident} (first defined on line {ids[ident]})", lineno
            )
        ids[ident] = lineno

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioError(f"malformed section header {line!r}", lineno)
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ScenarioError(f"unknown section [{section}]", lineno)
            if section in seen_sections:
                raise ScenarioError(f"section [{section}] repeated", lineno)
            seen_sections.add(section)
            continue
        if section is None:
            raise ScenarioError("content before the first section header", lineno)
        tokens = line.split()

        try:
            if section == "jobs":
                if len(tokens) != 3:
                    raise ScenarioError("expected '<job_id> <capacity> <arrival_ms>'", lineno)
                claim(tokens[0], lineno)
                jobs.append(
                    JobSpec(
                        tokens[0],
                        _parse_int(tokens[1], "capacity", lineno),
                        _parse_int(tokens[2], "arrival_ms", lineno),
                    )
                )
            elif section == "vms":
                if len(tokens) != 2:
                    raise ScenarioError("expected '<vm_id> <capacity>'", lineno)
                claim(tokens[0], lineno)
                vms.append(VmSpec(tokens[0], _parse_int(tokens[1], "capacity", lineno)))
            elif section == "hops":
                if len(tokens) == 2 and tokens[0] == "default":
                    if default_hop is not None:
                        raise ScenarioError("default hop given twice", lineno)
                    default_hop = _parse_int(tokens[1], "default", lineno)
                    if default_hop < 0:
                        raise ScenarioError("default hop must be >= 0", lineno)
                elif len(tokens) == 3:
                    pair = (tokens[0], tokens[1])
                    if pair in explicit_hops:
                        raise ScenarioError(f"hop {pair[0]} {pair[1]} given twice", lineno)
                    ms = _parse_int(tokens[2], "hop", lineno)
                    if ms < 0:
                        raise ScenarioError("hop must be >= 0", lineno)
                    if pair[0] == pair[1] and ms != 0:
                        raise ScenarioError(f"hop {pair[0]} {pair[0]} must be 0", lineno)
                    explicit_hops[pair] = ms
                else:
                    raise ScenarioError("expected 'default <ms>' or '<node> <node> <ms>'", lineno)
            else:
                if len(tokens) != 2:
                    raise ScenarioError("expected '<key> <value>'", lineno)
                key, value = tokens
                if key not in PARAM_NAMES:
                    raise ScenarioError(f"unknown key {key}", lineno)
                if key in params:
                    raise ScenarioError(f"key {key} given twice", lineno)
                params[key] = parse_param_value(key, value, lineno)
        except ScenarioError as exc:
            if exc.line is None:
                raise ScenarioError(str(exc), lineno) from None
            raise

    for required in ("jobs", "vms"):
        if required not in seen_sections:
            raise ScenarioError(f"missing [{required}] section")

    entries = dict(explicit_hops)
    for (a, b), ms in explicit_hops.items():
        if (b, a) not in explicit_hops:
            entries[(b, a)] = ms
    hops = HopMatrix(entries, 10 if default_hop is None else default_hop)
    return Scenario(tuple(jobs), tuple(vms), hops, EngineParams(**params))


def _fmt_number(value) -> str:
    if value == INFINITE:
        return "inf"
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    text = format(Decimal(value.numerator) / Decimal(value.denominator), "f")
    return text.rstrip("0").rstrip(".")


def serialize_scenario(scenario: Scenario) -> str:
    """Normalized text form; parsing it gives back an equal Scenario."""
    out = ["[jobs]"]
    out += [f"{j.job_id} {j.capacity} {j.arrival_time}" for j in scenario.jobs]
    out += ["", "[vms]"]
    out += [f"{v.vm_id} {v.capacity}" for v in scenario.vms]
    out += ["", "[hops]", f"default {scenario.hops.default_hop}"]

    order = {INGRESS: -1} | {v.vm_id: i for i, v in enumerate(scenario.vms)}
    entries = scenario.hops.entries
    for a, b in sorted(entries, key=lambda p: (order[p[0]], order[p[1]])):
        back = entries.get((b, a))
        if back == entries[(a, b)] and order[b] < order[a]:
            continue  # symmetric pair already written in the other direction
        out.append(f"{a} {b} {entries[(a, b)]}")
    out += ["", "[engine]"]
    for name in PARAM_NAMES:
        out.append(f"{name} {_fmt_number(getattr(scenario.params, name))}")
    return "\n".join(out) + "\n"


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))
