"""Mixing quality, pumping cost, and the efficiency ratio used as reward.

The mixing index is 1 for a perfectly mixed outlet (c* = 0.5 everywhere) and
0 for fully segregated streams; the efficiency divides the mixing gain by
the cube root of the pressure-cost gain, both relative to the flat-wall
baseline at the same (Re, Sc).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np

from .diffnet import ParameterSet, forward
from .errors import DomainError
from .geometry import CP_MAX, CP_MIN, ChannelDims, ControlPolygon
from .sampling import SampleBounds

log = logging.getLogger(__name__)

RE_MIN, RE_MAX = 5.0, 40.0


@dataclass(frozen=True)
class DesignCandidate:
    """One candidate design: three control heights plus the Reynolds number."""

    cp1: float
    cp2: float
    cp3: float
    re: float

    def __post_init__(self):
        for name in ("cp1", "cp2", "cp3"):
            v = getattr(self, name)
            if not np.isfinite(v) or not (CP_MIN <= v <= CP_MAX):
                raise DomainError(f"{name}={v!r} outside [{CP_MIN}, {CP_MAX}]")
        if not np.isfinite(self.re) or not (RE_MIN <= self.re <= RE_MAX):
            raise DomainError(f"re={self.re!r} outside [{RE_MIN}, {RE_MAX}]")

    @property
    def polygon(self) -> ControlPolygon:
        return ControlPolygon(self.cp1, self.cp2, self.cp3)

    def as_array(self) -> np.ndarray:
        return np.array([self.cp1, self.cp2, self.cp3, self.re])


def mixing_index(c) -> float:
    """1 - rms deviation of c from the perfect-mix value 0.5, scaled by 0.5."""
    c = np.asarray(c, dtype=np.float64)
    if c.size == 0:
        raise DomainError("mixing_index needs at least one sample")
    if not np.all(np.isfinite(c)):
        raise DomainError("mixing_index input must be finite")
    return float(1.0 - np.sqrt(np.mean(((c - 0.5) / 0.5) ** 2)))


def pressure_cost(p) -> float:
    """Mean inlet pressure; the outlet boundary pins p* = 0 as the reference."""
    p = np.asarray(p, dtype=np.float64)
    if p.size == 0:
        raise DomainError("pressure_cost needs at least one sample")
    if not np.all(np.isfinite(p)):
        raise DomainError("pressure_cost input must be finite")
    return float(np.mean(p))


def mixing_efficiency(mi: float, cp: float, mi0: float, cp0: float) -> float:
    """Relative mixing gain per cube root of relative pumping cost."""
    if cp <= 0 or cp0 <= 0:
        raise DomainError("pressure costs must be positive")
    if mi0 <= 0:
        raise DomainError("baseline mixing index must be positive")
    return (mi / mi0) / ((cp / cp0) ** (1.0 / 3.0))


def _clamp_concentration(c: np.ndarray) -> np.ndarray:
    clipped = np.clip(c, 0.0, 1.0)
    n_out = int(np.count_nonzero(clipped != c))
    if n_out:
        log.debug("clamped %d of %d outlet concentration samples into [0, 1]", n_out, c.size)
    return clipped


def outlet_concentration(params: ParameterSet, design: DesignCandidate, sc: float,
                         n: int = 101, dims: ChannelDims | None = None) -> np.ndarray:
    """c* along the outlet, clamped to [0, 1]."""
    if n < 1:
        raise DomainError("n must be >= 1")
    dims = dims or ChannelDims()
    y = np.linspace(0.0, 1.0, n)
    X = np.column_stack([
        np.full(n, dims.L / dims.H), y,
        np.tile([design.cp1, design.cp2, design.cp3], (n, 1)),
        np.full(n, design.re), np.full(n, sc),
    ])
    return _clamp_concentration(forward(params, X)[:, 6])


def inlet_pressure(params: ParameterSet, design: DesignCandidate, sc: float,
                   n: int = 101, dims: ChannelDims | None = None) -> np.ndarray:
    """p* sampled across both inlet mouths."""
    if n < 1:
        raise DomainError("n must be >= 1")
    dims = dims or ChannelDims()
    w = dims.W / dims.H
    x = np.linspace(0.0, w, n)
    rows = []
    for y in (1.0, 0.0):
        rows.append(np.column_stack([
            x, np.full(n, y),
            np.tile([design.cp1, design.cp2, design.cp3], (n, 1)),
            np.full(n, design.re), np.full(n, sc),
        ]))
    X = np.vstack(rows)
    return forward(params, X)[:, 2]


@dataclass
class MixingReport:
    """Metrics for one design next to its flat-wall baseline.

    cp is the mean dimensionless inlet pressure; it stands in for the
    pressure drop because the outlet pins p* = 0.
    """

    mi: float
    cp: float
    mi0: float
    cp0: float
    me: float
    n: int
    sc: float
    design: DesignCandidate
    note: str = "cp proxies the inlet-outlet pressure drop (outlet p* = 0)"

    def to_json(self) -> str:
        d = self.design
        payload = {
            "mi": self.mi, "cp": self.cp, "mi0": self.mi0, "cp0": self.cp0,
            "me": self.me, "n": self.n, "sc": self.sc,
            "design": {"cp1": d.cp1, "cp2": d.cp2, "cp3": d.cp3, "re": d.re},
            "note": self.note,
        }
        return json.dumps(payload, sort_keys=True)


@dataclass(frozen=True)
class BaselineTable:
    """MI and Cp of the flat-wall design on a (Re, Sc) grid, with bilinear lookup."""

    re_values: np.ndarray
    sc_values: np.ndarray
    mi0: np.ndarray
    cp0: np.ndarray

    def lookup(self, re: float, sc: float):
        """Bilinear interpolation; off-grid queries clamp to the hull."""
        re = float(np.clip(re, self.re_values[0], self.re_values[-1]))
        sc = float(np.clip(sc, self.sc_values[0], self.sc_values[-1]))
        i = int(np.clip(np.searchsorted(self.re_values, re) - 1, 0, len(self.re_values) - 2))
        j = int(np.clip(np.searchsorted(self.sc_values, sc) - 1, 0, len(self.sc_values) - 2))
        r0, r1 = self.re_values[i], self.re_values[i + 1]
        s0, s1 = self.sc_values[j], self.sc_values[j + 1]
        tr = 0.0 if r1 == r0 else (re - r0) / (r1 - r0)
        ts = 0.0 if s1 == s0 else (sc - s0) / (s1 - s0)

        def blend(grid):
            return ((1 - tr) * (1 - ts) * grid[i, j] + tr * (1 - ts) * grid[i + 1, j]
                    + (1 - tr) * ts * grid[i, j + 1] + tr * ts * grid[i + 1, j + 1])

        return float(blend(self.mi0)), float(blend(self.cp0))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["re", "sc", "mi0", "cp0"])
            for i, re in enumerate(self.re_values):
                for j, sc in enumerate(self.sc_values):
                    writer.writerow([repr(float(re)), repr(float(sc)),
                                     repr(float(self.mi0[i, j])), repr(float(self.cp0[i, j]))])

    @classmethod
    def from_csv(cls, path) -> "BaselineTable":
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise DomainError("baseline table file is empty")
        res = sorted({float(r["re"]) for r in rows})
        scs = sorted({float(r["sc"]) for r in rows})
        mi0 = np.full((len(res), len(scs)), np.nan)
        cp0 = np.full((len(res), len(scs)), np.nan)
        for r in rows:
            i = res.index(float(r["re"]))
            j = scs.index(float(r["sc"]))
            mi0[i, j] = float(r["mi0"])
            cp0[i, j] = float(r["cp0"])
        if np.any(np.isnan(mi0)) or np.any(np.isnan(cp0)):
            raise DomainError("baseline table is not a complete grid")
        return cls(re_values=np.array(res), sc_values=np.array(scs), mi0=mi0, cp0=cp0)


def baseline_table(params: ParameterSet, re_values=None, sc_values=None, n: int = 101,
                   dims: ChannelDims | None = None) -> BaselineTable:
    """Evaluate the flat-wall design on a (Re, Sc) grid."""
    bounds = SampleBounds()
    re_values = np.asarray(re_values if re_values is not None
                           else np.linspace(bounds.re[0], bounds.re[1], 8), dtype=np.float64)
    sc_values = np.asarray(sc_values if sc_values is not None
                           else np.linspace(bounds.sc[0], bounds.sc[1], 8), dtype=np.float64)
    if len(re_values) < 2 or len(sc_values) < 2:
        raise DomainError("baseline grid needs at least 2 points per axis")
    mi0 = np.zeros((len(re_values), len(sc_values)))
    cp0 = np.zeros_like(mi0)
    for i, re in enumerate(re_values):
        for j, sc in enumerate(sc_values):
            design = DesignCandidate(0.0, 0.0, 0.0, float(re))
            mi0[i, j] = mixing_index(outlet_concentration(params, design, float(sc), n=n, dims=dims))
            cp0[i, j] = pressure_cost(inlet_pressure(params, design, float(sc), n=n, dims=dims))
    return BaselineTable(re_values=re_values, sc_values=sc_values, mi0=mi0, cp0=cp0)


def compute_mixing_report(params: ParameterSet, design: DesignCandidate, sc: float,
                          baseline: BaselineTable | tuple | None = None, n: int = 101,
                          dims: ChannelDims | None = None) -> MixingReport:
    """Metrics for one design; the baseline defaults to a direct flat-wall
    evaluation at the same (Re, Sc) and checkpoint."""
    mi = mixing_index(outlet_concentration(params, design, sc, n=n, dims=dims))
    cp = pressure_cost(inlet_pressure(params, design, sc, n=n, dims=dims))
    if baseline is None:
        flat = DesignCandidate(0.0, 0.0, 0.0, design.re)
        mi0 = mixing_index(outlet_concentration(params, flat, sc, n=n, dims=dims))
        cp0 = pressure_cost(inlet_pressure(params, flat, sc, n=n, dims=dims))
    elif isinstance(baseline, BaselineTable):
        mi0, cp0 = baseline.lookup(design.re, sc)
    else:
        mi0, cp0 = baseline
    me = mixing_efficiency(mi, cp, mi0, cp0)
    return MixingReport(mi=mi, cp=cp, mi0=mi0, cp0=cp0, me=me, n=n, sc=sc, design=design)
