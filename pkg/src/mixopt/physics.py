"""Dimensionless first-order flow/transport residuals and the training loss.

The field network predicts nine outputs per point; stresses and species
fluxes are outputs in their own right, so every residual below needs only
first derivatives of network outputs. Residual formulas accept numpy arrays
and tape nodes interchangeably.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from .diffnet import net_apply
from .diffnet.tape import Node, col, nsum, pick, square
from .errors import DomainError, NumericalError
from .sampling import CollocationSet

FIELD_INDEX = {"u": 0, "v": 1, "p": 2, "txx": 3, "tyy": 4, "txy": 5, "c": 6, "jx": 7, "jy": 8}

RESIDUAL_NAMES = (
    "continuity",
    "momentum_x",
    "momentum_y",
    "stress_xx",
    "stress_yy",
    "stress_xy",
    "transport",
    "flux_x",
    "flux_y",
)


def _column(mat, j):
    return col(mat, j) if isinstance(mat, Node) else mat[:, j]


def _jac_col(jac, j, d):
    if isinstance(jac, Node):
        return pick(jac, (slice(None), j, d))
    return jac[:, j, d]


@dataclass
class FieldSample:
    """Nine field values at a batch of points, plus their spatial derivatives.

    Derivative attributes stay None when the sample was built without a
    jacobian (boundary evaluation only needs values).
    """

    u: object
    v: object
    p: object
    txx: object
    tyy: object
    txy: object
    c: object
    jx: object
    jy: object
    ux: object = None
    uy: object = None
    vx: object = None
    vy: object = None
    px: object = None
    py: object = None
    txx_x: object = None
    txx_y: object = None
    tyy_x: object = None
    tyy_y: object = None
    txy_x: object = None
    txy_y: object = None
    cx: object = None
    cy: object = None
    jx_x: object = None
    jx_y: object = None
    jy_x: object = None
    jy_y: object = None

    @classmethod
    def from_net(cls, out, jac=None) -> "FieldSample":
        values = {name: _column(out, idx) for name, idx in FIELD_INDEX.items()}
        grads = {}
        if jac is not None:
            for name, idx in FIELD_INDEX.items():
                gx = _jac_col(jac, idx, 0)
                gy = _jac_col(jac, idx, 1)
                if len(name) == 1:
                    grads[f"{name}x"] = gx
                    grads[f"{name}y"] = gy
                else:
                    grads[f"{name}_x"] = gx
                    grads[f"{name}_y"] = gy
        return cls(**values, **grads)

    def _check_finite(self):
        for f in dc_fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray) and not np.all(np.isfinite(v)):
                raise NumericalError(f"non-finite field value in {f.name}")


def _as_positive(name, value):
    arr = np.asarray(value, dtype=np.float64)
    if np.any(arr <= 0.0) or not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be positive and finite")
    return arr


def pde_residuals(s: FieldSample, re, sc) -> dict:
    """The nine interior residuals; zero identically for an exact solution.

    re and sc may be scalars or per-row arrays; they are data, never
    differentiated.
    """
    re = _as_positive("re", re)
    sc = _as_positive("sc", sc)
    if isinstance(s.u, np.ndarray):
        s._check_finite()
    if s.ux is None:
        raise DomainError("pde_residuals needs a sample built with spatial derivatives")
    two_over_re = 2.0 / re
    one_over_re = 1.0 / re
    one_over_pe = 1.0 / (re * sc)
    return {
        "continuity": s.ux + s.vy,
        "momentum_x": s.u * s.ux + s.v * s.uy - s.txx_x - s.txy_y,
        "momentum_y": s.u * s.vx + s.v * s.vy - s.txy_x - s.tyy_y,
        "stress_xx": -s.p + two_over_re * s.ux - s.txx,
        "stress_yy": -s.p + two_over_re * s.vy - s.tyy,
        "stress_xy": one_over_re * (s.uy + s.vx) - s.txy,
        "transport": s.u * s.cx + s.v * s.cy + one_over_pe * (s.jx_x + s.jy_y),
        "flux_x": s.jx + s.cx,
        "flux_y": s.jy + s.cy,
    }


def boundary_residuals(s: FieldSample, kind: str, normals=None, targets=None) -> list:
    """Residual list for one boundary family.

    Inlets pin (u, v, c) to their profile targets; walls and baffles enforce
    no slip plus zero normal species flux; the outlet pins pressure and the
    streamwise flux component.
    """
    targets = targets or {}
    if kind in ("inlet_top", "inlet_bottom"):
        for key in ("u", "v", "c"):
            if key not in targets:
                raise DomainError(f"{kind} targets must include {key!r}")
        return [s.u - targets["u"], s.v - targets["v"], s.c - targets["c"]]
    if kind in ("wall", "baffle"):
        if normals is None:
            raise DomainError(f"{kind} residuals need outward normals")
        normals = np.asarray(normals, dtype=np.float64)
        return [s.u, s.v, s.jx * normals[:, 0] + s.jy * normals[:, 1]]
    if kind == "outlet":
        return [s.p, s.jx]
    raise DomainError(f"unknown boundary kind {kind!r}")


def _total(x):
    return nsum(x) if isinstance(x, Node) else np.sum(x)


def _sq(x):
    return square(x) if isinstance(x, Node) else x * x


def massflow_penalty(u_values, weights, target: float):
    """Squared defect of the quadrature flux against its target."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.size < 2:
        raise DomainError("a flux slice needs at least 2 quadrature points")
    n = u_values.value.size if isinstance(u_values, Node) else np.asarray(u_values).size
    if n != weights.size:
        raise DomainError("velocity and weight lengths differ")
    flux = _total(u_values * weights)
    return _sq(flux - target)


@dataclass(frozen=True)
class LossWeights:
    """Per-family weights in the total training loss."""

    pde: float = 1.0
    inlet_top: float = 10.0
    inlet_bottom: float = 10.0
    wall: float = 10.0
    baffle: float = 10.0
    outlet: float = 10.0
    massflow: float = 10.0

    def __post_init__(self):
        vals = self.as_dict()
        for name, v in vals.items():
            if not np.isfinite(v) or v < 0:
                raise DomainError(f"loss weight {name} must be finite and >= 0")
        if all(v == 0.0 for v in vals.values()):
            raise DomainError("at least one loss weight must be positive")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dc_fields(self)}


@dataclass
class LossReport:
    """Per-family mean squares and the weighted total, as plain floats."""

    total: float
    families: dict
    step: int | None = None

    def to_json(self) -> str:
        payload = {"step": self.step, "total": self.total, **self.families}
        return json.dumps(payload, sort_keys=True)


def loss_node(colloc: CollocationSet, param_leaf: Node, template, weights: LossWeights | None = None):
    """Assemble the weighted loss as a tape node; returns (node, LossReport).

    Each family value is the plain mean of squared residuals over all its
    rows and components, so with a single nonzero unit weight the total
    equals that family's mean square.
    """
    weights = weights or LossWeights()
    wdict = weights.as_dict()
    families = {}

    interior = colloc.interior
    if interior is not None and len(interior):
        out, jac = net_apply(param_leaf, template, interior, need_jac=True)
        sample = FieldSample.from_net(out, jac)
        residuals = pde_residuals(sample, interior[:, 5], interior[:, 6])
        acc = None
        count = 0
        for name in RESIDUAL_NAMES:
            term = nsum(square(residuals[name]))
            acc = term if acc is None else acc + term
            count += len(interior)
        families["pde"] = acc * (1.0 / count)

    for kind in sorted(colloc.boundary):
        group = colloc.boundary[kind]
        if not len(group.X):
            continue
        out, _ = net_apply(param_leaf, template, group.X, need_jac=False)
        sample = FieldSample.from_net(out)
        residuals = boundary_residuals(sample, kind, group.normals, group.targets)
        acc = None
        for r in residuals:
            term = nsum(square(r))
            acc = term if acc is None else acc + term
        families[kind] = acc * (1.0 / (len(residuals) * len(group.X)))

    if colloc.slices:
        acc = None
        for sl in colloc.slices:
            out, _ = net_apply(param_leaf, template, sl.X, need_jac=False)
            u = _column(out, FIELD_INDEX["u"])
            term = massflow_penalty(u, sl.weights, sl.target)
            acc = term if acc is None else acc + term
        families["massflow"] = acc * (1.0 / len(colloc.slices))

    total = None
    for name, node in families.items():
        w = wdict.get(name, 0.0)
        if w == 0.0:
            continue
        term = node * w
        total = term if total is None else total + term
    if total is None:
        raise DomainError("no loss terms: empty collocation set or all weights zero")
    report = LossReport(
        total=float(total.value),
        families={k: float(v.value) for k, v in families.items()},
    )
    return total, report


def total_loss(colloc: CollocationSet, params, weights: LossWeights | None = None) -> LossReport:
    """Evaluate the training loss without keeping the graph."""
    from .diffnet.tape import leaf

    _, report = loss_node(colloc, leaf(params.flat), params, weights)
    return report
