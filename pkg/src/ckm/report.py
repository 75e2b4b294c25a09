"""Pass/fail bookkeeping for the executable invariant checks."""
from __future__ import annotations

from dataclasses import dataclass, field

from .constants import FEAS_TOL


def within(lhs, rhs, tol=FEAS_TOL):
    """lhs <= rhs up to a tolerance relative to the magnitude of the two sides."""
    return lhs <= rhs + tol * max(1.0, abs(lhs), abs(rhs))


@dataclass
class CheckReport:
    """Ordered named checks, each with the witnesses of its failures (empty = pass)."""
    checks: dict = field(default_factory=dict)

    def add(self, name, failures=()):
        self.checks.setdefault(name, []).extend(failures)
        return self

    def merge(self, other: "CheckReport", prefix=""):
        for name, fails in other.checks.items():
            self.add(prefix + name, fails)
        return self

    @property
    def ok(self) -> bool:
        return not any(self.checks.values())

    def failed(self):
        return {k: v for k, v in self.checks.items() if v}

    def lines(self):
        out = []
        for name, fails in self.checks.items():
            if fails:
                out.append(f"{name} FAIL {len(fails)} e.g. {fails[0]}")
            else:
                out.append(f"{name} ok")
        return out
