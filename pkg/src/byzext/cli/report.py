"""Reports: line-delimited records plus a human summary, deterministic by construction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

PASS = "pass"
FAIL = "fail"
PENDING = "pending"

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_SCENARIO = 3
EXIT_BUDGET = 4


@dataclass
class CheckResult:
    name: str
    kind: str
    tag: str
    verdict: str
    horizon: Optional[int]
    scope: str
    summary: str
    details: dict = field(default_factory=dict)

    def to_record(self):
        return {
            "record": "check",
            "name": self.name,
            "kind": self.kind,
            "tag": self.tag,
            "verdict": self.verdict,
            "horizon": self.horizon,
            "scope": self.scope,
            "summary": self.summary,
            "details": self.details,
        }


@dataclass
class Report:
    command: str
    scenario: Optional[str] = None
    header: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    records: list = field(default_factory=list)  # extra payload records (runs, cells, ...)
    lines: list = field(default_factory=list)  # extra human lines

    def add(self, result: CheckResult):
        self.checks.append(result)

    def exit_code(self, allow_pending=False) -> int:
        for c in self.checks:
            if c.verdict == FAIL or (c.verdict == PENDING and not allow_pending):
                return EXIT_FAIL
        return EXIT_OK

    def to_records(self) -> list:
        head = {"record": "header", "command": self.command, "scenario": self.scenario}
        head.update(self.header)
        out = [head] + list(self.records) + [c.to_record() for c in self.checks]
        counts = {v: sum(1 for c in self.checks if c.verdict == v) for v in (PASS, FAIL, PENDING)}
        out.append({"record": "summary", **counts})
        return out

    def render(self, fmt: str = "human") -> str:
        if fmt == "records":
            return "".join(json.dumps(r, sort_keys=True, default=str) + "\n" for r in self.to_records())
        out = []
        title = f"{self.command}" + (f" [{self.scenario}]" if self.scenario else "")
        out.append(title)
        for k, v in self.header.items():
            out.append(f"  {k}: {v}")
        out.extend(self.lines)
        for c in self.checks:
            scope = f"horizon {c.horizon}, {c.scope}" if c.horizon is not None else c.scope
            out.append(f"{c.verdict.upper():8} {c.name} ({c.tag}; {scope}): {c.summary}")
        if self.checks:
            counts = [f"{sum(1 for c in self.checks if c.verdict == v)} {v}" for v in (PASS, FAIL, PENDING)]
            out.append("summary: " + ", ".join(counts))
        return "\n".join(out) + "\n"
