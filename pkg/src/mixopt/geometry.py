"""Channel geometry: spline baffle curves, wall positions, containment, boundary segments.

Lengths carried by ``ChannelDims``/``ChannelLayout`` are millimetres; the
spline itself lives in channel-height units (x in [0, 0.5], heights in
[-0.5, 0.5]).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GeometryError

KNOTS = np.array([0.0, 0.125, 0.25, 0.375, 0.5])
KNOT_SPACING = 0.125
CP_MIN = -0.5
CP_MAX = 0.5

# Interior second-derivative system for a natural cubic on the fixed uniform
# knots: tridiagonal [[4,1,0],[1,4,1],[0,1,4]] after dividing out the spacing.
_INTERIOR_MATRIX = np.array([[4.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 1.0, 4.0]])
_INTERIOR_INVERSE = np.linalg.inv(_INTERIOR_MATRIX)


@dataclass(frozen=True)
class ControlPolygon:
    """Heights of the three free spline control points, in channel heights."""

    cp1: float
    cp2: float
    cp3: float

    def __post_init__(self):
        for name in ("cp1", "cp2", "cp3"):
            v = getattr(self, name)
            if not np.isfinite(v) or not (CP_MIN <= v <= CP_MAX):
                raise DomainError(f"{name}={v!r} outside [{CP_MIN}, {CP_MAX}]")

    @classmethod
    def from_iterable(cls, values) -> "ControlPolygon":
        vals = [float(v) for v in values]
        if len(vals) != 3:
            raise DomainError(f"expected 3 control heights, got {len(vals)}")
        return cls(*vals)

    def heights(self) -> np.ndarray:
        """Full knot-height vector including the pinned endpoints."""
        return np.array([0.0, self.cp1, self.cp2, self.cp3, 0.0])

    def as_array(self) -> np.ndarray:
        return np.array([self.cp1, self.cp2, self.cp3])


@dataclass(frozen=True)
class SplineCurve:
    """Natural cubic interpolant on the fixed knots.

    ``coeffs[i]`` holds (a, b, c, d) for segment i, evaluated as
    a + b*t + c*t^2 + d*t^3 with t = x - knots[i].
    """

    coeffs: np.ndarray

    @property
    def knots(self) -> np.ndarray:
        return KNOTS


def _solve_tridiagonal(sub, diag, sup, rhs):
    """Thomas algorithm for a tridiagonal system; O(n), no pivoting."""
    n = len(diag)
    c = np.zeros(n)
    d = np.zeros(n)
    c[0] = sup[0] / diag[0]
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - sub[i - 1] * c[i - 1]
        if i < n - 1:
            c[i] = sup[i] / denom
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / denom
    x = np.zeros(n)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def _coeffs_from_heights(y: np.ndarray) -> np.ndarray:
    """Spline coefficients (4, 4) from the 5 knot heights."""
    h = KNOT_SPACING
    rhs = 6.0 / (h * h) * (y[2:] - 2.0 * y[1:-1] + y[:-2])
    m_interior = _solve_tridiagonal(np.ones(2), np.full(3, 4.0), np.ones(2), rhs)
    m = np.concatenate([[0.0], m_interior, [0.0]])  # natural ends
    a = y[:-1]
    b = (y[1:] - y[:-1]) / h - h * (2.0 * m[:-1] + m[1:]) / 6.0
    c = m[:-1] / 2.0
    d = (m[1:] - m[:-1]) / (6.0 * h)
    return np.stack([a, b, c, d], axis=1)


def _coeffs_batch(cps: np.ndarray) -> np.ndarray:
    """Vectorized ``_coeffs_from_heights`` for an (n, 3) block of control heights."""
    cps = np.atleast_2d(np.asarray(cps, dtype=float))
    n = cps.shape[0]
    h = KNOT_SPACING
    y = np.zeros((n, 5))
    y[:, 1:4] = cps
    rhs = 6.0 / (h * h) * (y[:, 2:] - 2.0 * y[:, 1:-1] + y[:, :-2])
    m = np.zeros((n, 5))
    m[:, 1:4] = rhs @ _INTERIOR_INVERSE.T
    a = y[:, :-1]
    b = (y[:, 1:] - y[:, :-1]) / h - h * (2.0 * m[:, :-1] + m[:, 1:]) / 6.0
    c = m[:, :-1] / 2.0
    d = (m[:, 1:] - m[:, :-1]) / (6.0 * h)
    return np.stack([a, b, c, d], axis=2)


def build_spline(cp: ControlPolygon) -> SplineCurve:
    """Natural cubic through (knots, [0, cp1, cp2, cp3, 0])."""
    coeffs = _coeffs_from_heights(cp.heights())
    coeffs.setflags(write=False)
    return SplineCurve(coeffs=coeffs)


def _segment_index(x: np.ndarray) -> np.ndarray:
    return np.clip(np.searchsorted(KNOTS, x, side="right") - 1, 0, 3)


def eval_spline(curve: SplineCurve, x):
    """Evaluate the curve; returns (value, slope), shaped like ``x``.

    Raises DomainError for x outside [0, 0.5].
    """
    xa = np.asarray(x, dtype=float)
    if np.any(xa < KNOTS[0]) or np.any(xa > KNOTS[-1]):
        raise DomainError(f"spline argument outside [{KNOTS[0]}, {KNOTS[-1]}]")
    seg = _segment_index(xa)
    t = xa - KNOTS[seg]
    a, b, c, d = (curve.coeffs[seg, k] for k in range(4))
    value = a + t * (b + t * (c + t * d))
    slope = b + t * (2.0 * c + 3.0 * d * t)
    if np.isscalar(x):
        return float(value), float(slope)
    return value, slope


def _eval_batch(coeffs: np.ndarray, x: np.ndarray):
    """Per-row spline eval: coeffs (n, 4, 4), x (n,). Returns (value, slope)."""
    seg = _segment_index(x)
    t = x - KNOTS[seg]
    rows = np.arange(len(x))
    a = coeffs[rows, seg, 0]
    b = coeffs[rows, seg, 1]
    c = coeffs[rows, seg, 2]
    d = coeffs[rows, seg, 3]
    value = a + t * (b + t * (c + t * d))
    slope = b + t * (2.0 * c + 3.0 * d * t)
    return value, slope


def unit_normal(curve: SplineCurve, x):
    """Unit normal (-s', 1)/sqrt(1 + s'^2) to the curve at x; shape (..., 2)."""
    _, slope = eval_spline(curve, x)
    slope = np.asarray(slope, dtype=float)
    scale = 1.0 / np.sqrt(1.0 + slope * slope)
    return np.stack([-slope * scale, np.broadcast_to(scale, slope.shape)], axis=-1)


@dataclass(frozen=True)
class ChannelDims:
    """Channel dimensions in millimetres.

    The baffle x-extent is always 0.5*H (the spline's parametric width); l_d
    records the nominal value and must agree with it.
    """

    L: float = 2.1
    L0: float = 0.9
    L1: float = 1.3
    H: float = 0.3
    W: float = 0.3
    d: float = 0.15
    h_d: float = 0.3
    l_d: float = 0.15

    def __post_init__(self):
        for name in ("L", "L0", "L1", "H", "W", "d", "h_d", "l_d"):
            if not np.isfinite(getattr(self, name)) or getattr(self, name) <= 0:
                raise DomainError(f"dimension {name} must be positive")


@dataclass(frozen=True)
class BafflePlacement:
    """One baffle: which wall it grows from, start x (mm), and its sign.

    The wetted surface sits at ``base + sign * H * s(xhat)`` where base is H
    for the upper wall (sign -1) and 0 for the lower wall (sign +1).
    """

    wall: str
    start_x: float
    sign: int
    curve: SplineCurve


@dataclass(frozen=True)
class BoundarySegment:
    """A boundary piece with an arc-length parameterization t in [0, 1].

    Straight pieces interpolate their endpoints exactly. Baffle pieces keep a
    dense arc-length table only to invert t -> spline abscissa, then evaluate
    the exact curve, so returned points sit on the surface to roundoff.
    """

    kind: str
    name: str
    points: np.ndarray
    normals: np.ndarray
    cumlen: np.ndarray
    curve: SplineCurve | None = None
    xhat_grid: np.ndarray | None = None
    start_x: float = 0.0
    base_y: float = 0.0
    sign: int = 0
    height: float = 0.0

    @property
    def arclength(self) -> float:
        return float(self.cumlen[-1])

    def at(self, t):
        """Map arc parameters t in [0, 1] to ((n, 2) points, (n, 2) normals)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < 0.0) or np.any(t > 1.0):
            raise DomainError("arc parameter outside [0, 1]")
        s = t * self.arclength
        if self.curve is None:
            x = np.interp(s, self.cumlen, self.points[:, 0])
            y = np.interp(s, self.cumlen, self.points[:, 1])
            nx = np.interp(s, self.cumlen, self.normals[:, 0])
            ny = np.interp(s, self.cumlen, self.normals[:, 1])
            norm = np.hypot(nx, ny)
            return np.stack([x, y], axis=1), np.stack([nx / norm, ny / norm], axis=1)
        xhat = np.interp(s, self.cumlen, self.xhat_grid)
        value, slope = eval_spline(self.curve, xhat)
        x = self.start_x + xhat * self.height
        y = self.base_y + self.sign * self.height * value
        scale = 1.0 / np.sqrt(1.0 + slope * slope)
        nx = slope * scale
        ny = -self.sign * scale
        return np.stack([x, y], axis=1), np.stack([nx, ny], axis=1)


def _line_segment(kind, name, p0, p1, normal, samples=2) -> BoundarySegment:
    t = np.linspace(0.0, 1.0, samples)
    pts = np.outer(1.0 - t, p0) + np.outer(t, p1)
    nrm = np.tile(np.asarray(normal, dtype=float), (samples, 1))
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    return BoundarySegment(kind=kind, name=name, points=pts, normals=nrm, cumlen=cum)


def _baffle_segment(name, placement: BafflePlacement, dims: ChannelDims, samples=513) -> BoundarySegment:
    xhat = np.linspace(0.0, 0.5, samples)
    value, slope = eval_spline(placement.curve, xhat)
    base = dims.H if placement.sign < 0 else 0.0
    x = placement.start_x + xhat * dims.H
    y = base + placement.sign * dims.H * value
    # Outward normal: (s', 1) rotated onto the wall; points away from the fluid.
    scale = 1.0 / np.sqrt(1.0 + slope * slope)
    ny = -placement.sign * np.ones_like(slope) * scale
    nx = slope * scale
    pts = np.stack([x, y], axis=1)
    nrm = np.stack([nx, ny], axis=1)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    return BoundarySegment(
        kind="baffle",
        name=name,
        points=pts,
        normals=nrm,
        cumlen=cum,
        curve=placement.curve,
        xhat_grid=xhat,
        start_x=placement.start_x,
        base_y=base,
        sign=placement.sign,
        height=dims.H,
    )


@dataclass(frozen=True)
class ChannelLayout:
    """Immutable channel instance: dims, control polygon, baffles, inlet arms.

    The two baffles share one spline curve and are staggered along x: the
    upper one starts at L0, the lower one at L0 + d. Positive control heights
    protrude into the channel; negative ones carve cavities into the walls.
    Inlet arms of length ``arm_length`` attach above and below the junction
    square x in [0, W]; they count as fluid for containment and their mouths
    (y = H and y = 0) carry the inlet boundary segments.
    """

    dims: ChannelDims
    cp: ControlPolygon
    baffles: tuple
    arm_length: float

    def _baffle_for(self, wall: str) -> BafflePlacement:
        return self.baffles[0] if wall == "upper" else self.baffles[1]

    def upper_wall_y(self, x):
        """y of the upper fluid boundary at x (mm); vectorized."""
        x = np.asarray(x, dtype=float)
        up = self._baffle_for("upper")
        y = np.full(x.shape, self.dims.H)
        span = 0.5 * self.dims.H
        mask = (x >= up.start_x) & (x <= up.start_x + span)
        if np.any(mask):
            xhat = np.clip((x[mask] - up.start_x) / self.dims.H, 0.0, 0.5)
            value, _ = eval_spline(up.curve, xhat)
            y[mask] = self.dims.H - self.dims.H * value
        return y if y.shape else float(y)

    def lower_wall_y(self, x):
        """y of the lower fluid boundary at x (mm); vectorized."""
        x = np.asarray(x, dtype=float)
        lo = self._baffle_for("lower")
        y = np.zeros(x.shape)
        span = 0.5 * self.dims.H
        mask = (x >= lo.start_x) & (x <= lo.start_x + span)
        if np.any(mask):
            xhat = np.clip((x[mask] - lo.start_x) / self.dims.H, 0.0, 0.5)
            value, _ = eval_spline(lo.curve, xhat)
            y[mask] = self.dims.H * value
        return y if y.shape else float(y)

    def contains(self, x, y) -> np.ndarray:
        """True where (x, y) in mm lies in the fluid (channel minus baffles, plus arms)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        d = self.dims
        in_channel = (x >= 0.0) & (x <= d.L)
        if np.any(in_channel):
            xc = np.where(in_channel, x, 0.0)
            lower = np.asarray(self.lower_wall_y(xc))
            upper = np.asarray(self.upper_wall_y(xc))
            in_channel &= (y >= lower) & (y <= upper)
        in_arms = (x >= 0.0) & (x <= d.W) & (
            ((y >= d.H) & (y <= d.H + self.arm_length))
            | ((y >= -self.arm_length) & (y <= 0.0))
        )
        result = in_channel | in_arms
        return result if result.shape else bool(result)

    def segments(self) -> list:
        """Boundary segments of the solved (rectangular channel) region.

        Inlets sit at the arm mouths; the arms themselves only participate in
        containment, not in the boundary set.
        """
        d = self.dims
        up = self._baffle_for("upper")
        lo = self._baffle_for("lower")
        span = 0.5 * d.H
        segs = [
            _line_segment("inlet_top", "inlet_top", (0.0, d.H), (d.W, d.H), (0.0, 1.0)),
            _line_segment("inlet_bottom", "inlet_bottom", (0.0, 0.0), (d.W, 0.0), (0.0, -1.0)),
            _line_segment("wall", "wall_left", (0.0, 0.0), (0.0, d.H), (-1.0, 0.0)),
            _line_segment("wall", "wall_top_a", (d.W, d.H), (up.start_x, d.H), (0.0, 1.0)),
            _baffle_segment("baffle_upper", up, d),
            _line_segment("wall", "wall_top_b", (up.start_x + span, d.H), (d.L, d.H), (0.0, 1.0)),
            _line_segment("wall", "wall_bottom_a", (d.W, 0.0), (lo.start_x, 0.0), (0.0, -1.0)),
            _baffle_segment("baffle_lower", lo, d),
            _line_segment("wall", "wall_bottom_b", (lo.start_x + span, 0.0), (d.L, 0.0), (0.0, -1.0)),
            _line_segment("outlet", "outlet", (d.L, 0.0), (d.L, d.H), (1.0, 0.0)),
        ]
        return segs


def build_layout(cp: ControlPolygon, dims: ChannelDims | None = None, arm_length: float | None = None) -> ChannelLayout:
    """Construct the channel layout for one control polygon."""
    dims = dims or ChannelDims()
    if arm_length is None:
        arm_length = dims.L1
    if arm_length <= 0:
        raise DomainError("arm_length must be positive")
    span = 0.5 * dims.H
    if abs(dims.l_d - span) > 1e-12:
        raise GeometryError(f"baffle length l_d={dims.l_d} must equal 0.5*H={span}")
    curve = build_spline(cp)
    upper = BafflePlacement(wall="upper", start_x=dims.L0, sign=-1, curve=curve)
    lower = BafflePlacement(wall="lower", start_x=dims.L0 + dims.d, sign=+1, curve=curve)
    for b in (upper, lower):
        if b.start_x < 0 or b.start_x + span > dims.L:
            raise GeometryError(f"{b.wall} baffle extent [{b.start_x}, {b.start_x + span}] exceeds channel [0, {dims.L}]")
    if dims.W > dims.L0:
        raise GeometryError("junction square overlaps the upper baffle")
    return ChannelLayout(dims=dims, cp=cp, baffles=(upper, lower), arm_length=arm_length)


def contains(layout: ChannelLayout, point) -> np.ndarray:
    """Module-level containment helper; point is (x, y) in mm or an (n, 2) array."""
    p = np.asarray(point, dtype=float)
    if p.ndim == 1:
        return layout.contains(p[0], p[1])
    return layout.contains(p[:, 0], p[:, 1])


def polyline_rows(layout: ChannelLayout, points_per_segment: int = 64):
    """Yield (x_mm, y_mm, segment_kind, n_x, n_y) rows tracing the boundary."""
    t = np.linspace(0.0, 1.0, points_per_segment)
    for seg in layout.segments():
        pts, nrm = seg.at(t)
        for (x, y), (nx, ny) in zip(pts, nrm):
            yield x, y, seg.name, nx, ny
