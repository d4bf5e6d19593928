"""Analytical floating-point cost estimates per hop, and their fit to measured counters.

For hop ``l`` with ``a_l`` active vertices, previous-hop frontier ``a_{l-1}``,
average in-degree ``delta`` and layer widths ``d_{l-1}``, ``d_l``:

* layer-wise recompute pulls every in-neighbour of every active vertex and then
  runs the dense update: ``a_l*delta*d_{l-1} + a_l*d_{l-1}*d_l``;
* delta propagation only sends along the out-edges of the previous frontier:
  ``a_{l-1}*delta*d_{l-1} + a_l*d_{l-1}*d_l``.

Counts are multiply-add pairs, the same unit as the engines' counters.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

CSV_FIELDS = ("batch", "hop", "a_prev", "a", "est_rc", "est_rp", "measured")
SCHEMA = "# schema: v1"


@dataclass(frozen=True)
class HopStats:
    batch: int
    hop: int
    a_prev: int
    a: int
    delta: float
    d_prev: int
    d: int


def estimate_rc(hs: HopStats) -> float:
    return hs.a * hs.delta * hs.d_prev + hs.a * hs.d_prev * hs.d


def estimate_rp(hs: HopStats) -> float:
    return hs.a_prev * hs.delta * hs.d_prev + hs.a * hs.d_prev * hs.d


def hop_stats(result, batch: int) -> list[HopStats]:
    """Per-hop statistics of one :class:`~incgnn.engine.BatchResult` (hops 1..L)."""
    dims = result.dims
    return [HopStats(batch, l, int(result.a[l - 1]), int(result.a[l]), float(result.avg_degree),
                     int(dims[l - 1]), int(dims[l]))
            for l in range(1, result.L + 1)]


def pearson(x, y) -> float:
    """Pearson correlation; ``nan`` when either side has zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y):
        raise ValueError("length mismatch")
    if len(x) < 2:
        return math.nan
    xc = x - x.mean()
    yc = y - y.mean()
    den = math.sqrt(float(xc @ xc) * float(yc @ yc))
    return float(xc @ yc) / den if den > 0 else math.nan


@dataclass
class CostRow:
    stats: HopStats
    est_rc: float
    est_rp: float
    measured: int

    def as_dict(self) -> dict:
        s = self.stats
        return {"batch": s.batch, "hop": s.hop, "a_prev": s.a_prev, "a": s.a,
                "est_rc": round(self.est_rc, 6), "est_rp": round(self.est_rp, 6), "measured": self.measured}


@dataclass
class CostReport:
    engine: str
    rows: list = field(default_factory=list)

    @classmethod
    def from_results(cls, results, engine: str | None = None) -> "CostReport":
        results = list(results)
        tag = engine or (results[0].engine if results else "rp")
        rep = cls(tag)
        for b, res in enumerate(results):
            for hs in hop_stats(res, b):
                rep.rows.append(CostRow(hs, estimate_rc(hs), estimate_rp(hs), int(res.ops[hs.hop])))
        return rep

    def estimates(self, hop: int) -> list[float]:
        key = "est_rc" if self.engine == "rc" else "est_rp"
        return [getattr(r, key) for r in self.rows if r.stats.hop == hop]

    def measured(self, hop: int) -> list[int]:
        return [r.measured for r in self.rows if r.stats.hop == hop]

    def hops(self) -> list[int]:
        return sorted({r.stats.hop for r in self.rows})

    def correlation(self, hop: int) -> float:
        """Across batches, correlation of this engine's estimate with its measured ops."""
        return pearson(self.estimates(hop), self.measured(hop))

    def correlations(self) -> dict[int, float]:
        return {h: self.correlation(h) for h in self.hops()}

    def check_rp_le_rc(self) -> list[CostRow]:
        """Rows violating ``est_rp <= est_rc``; hops where the frontier shrank are skipped."""
        bad = []
        skipped = 0
        for r in self.rows:
            if r.stats.a_prev > r.stats.a:
                skipped += 1
                continue
            if r.est_rp > r.est_rc:
                bad.append(r)
        if skipped:
            log.info("skipped %d hops where the previous frontier was larger than the current one", skipped)
        return bad

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            fh.write(SCHEMA + "\n")
            w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow(r.as_dict())
