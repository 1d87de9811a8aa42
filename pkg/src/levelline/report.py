"""Seeded statistical test reports with fixed thresholds."""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class CheckRow:
    label: str
    value: float
    se: float | None = None
    threshold: float | None = None
    z: float | None = None
    passed: bool = True

    def to_json(self):
        return {k: v for k, v in self.__dict__.items() if v is not None or k == "value"}


@dataclass
class Report:
    name: str
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, label, value, se=None, threshold=None, z=None, passed=True):
        self.rows.append(CheckRow(label=label, value=float(value),
                                  se=None if se is None else float(se),
                                  threshold=None if threshold is None else float(threshold),
                                  z=None if z is None else float(z),
                                  passed=bool(passed)))

    @property
    def passed(self):
        return all(r.passed for r in self.rows)

    def to_json(self):
        return {
            "name": self.name,
            "passed": self.passed,
            "rows": [r.to_json() for r in self.rows],
            "meta": self.meta,
        }

    def dumps(self, indent=2):
        return json.dumps(self.to_json(), indent=indent, default=float)

    def summary(self):
        lines = [f"[{'PASS' if self.passed else 'FAIL'}] {self.name}"]
        for r in self.rows:
            mark = "ok " if r.passed else "FAIL"
            extra = f" z={r.z:+.2f}" if r.z is not None else ""
            lines.append(f"  {mark} {r.label}: {r.value:.6g}{extra}")
        return "\n".join(lines)


# Locality reports share the same structure.
LocalityReport = Report
