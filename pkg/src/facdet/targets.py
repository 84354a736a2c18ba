"""Reference targets for checking result files against published table values."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

__all__ = ["Band", "ReferenceTarget", "available_tables", "load_targets"]


@dataclass(frozen=True)
class Band:
    expected: float
    tolerance: float
    label: str

    def contains(self, value: float) -> bool:
        return abs(value - self.expected) <= self.tolerance


@dataclass(frozen=True)
class ReferenceTarget:
    table: str
    cell: dict
    estimator: str
    coefficient: str
    field: str
    bands: tuple

    def describe(self) -> str:
        keys = ",".join(f"{k}={v}" for k, v in self.cell.items())
        return f"{self.table}[{keys}] {self.estimator}/{self.coefficient}.{self.field}"


def _raw():
    text = resources.files("facdet").joinpath("reference_targets.json").read_text()
    return json.loads(text)


def available_tables():
    return sorted(k for k in _raw() if not k.startswith("_"))


def load_targets(table: str):
    """Targets for one table id, or for every table with ``"all"``."""
    raw = _raw()
    if table == "all":
        names = available_tables()
    else:
        if table not in raw:
            raise KeyError(f"unknown target table {table!r}; "
                           f"available: {', '.join(available_tables())}")
        names = [table]
    out = []
    for name in names:
        for item in raw[name]:
            bands = tuple(Band(b["expected"], b["tolerance"], b.get("label", ""))
                          for b in item["bands"])
            out.append(ReferenceTarget(table=name, cell=dict(item["cell"]),
                                       estimator=item["estimator"],
                                       coefficient=item["coefficient"],
                                       field=item.get("field", "mean"),
                                       bands=bands))
    return out
