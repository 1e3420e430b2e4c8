"""Dense networks over a flat float64 parameter vector.

Forward evaluation, forward-mode spatial tangents (for first derivatives of
outputs w.r.t. the two spatial inputs), and a fused reverse pass that also
backpropagates through those tangents. The reverse pass plugs into the tape
as a single primitive, so one backward sweep covers losses built from both
outputs and spatial derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import DomainError
from .tape import Node


class _Tanh:
    @staticmethod
    def value(z):
        return np.tanh(z)

    @staticmethod
    def first(z, f):
        return 1.0 - f * f

    @staticmethod
    def second(z, f):
        return -2.0 * f * (1.0 - f * f)


class _Softplus:
    @staticmethod
    def value(z):
        return np.logaddexp(0.0, z)

    @staticmethod
    def first(z, f):
        return 1.0 / (1.0 + np.exp(-z))

    @staticmethod
    def second(z, f):
        s = 1.0 / (1.0 + np.exp(-z))
        return s * (1.0 - s)


ACTIVATIONS = {"tanh": _Tanh, "softplus": _Softplus}


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description: layer widths and activation name."""

    input_dim: int = 7
    output_dim: int = 9
    hidden: tuple = (64, 64, 64, 64)
    activation: str = "tanh"

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise DomainError("input_dim and output_dim must be >= 1")
        if any(int(h) < 1 for h in self.hidden):
            raise DomainError("hidden widths must be >= 1")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"unknown activation {self.activation!r}")

    def layer_shapes(self) -> list:
        """[(W shape, b shape)] per layer, output layer last."""
        sizes = [self.input_dim, *self.hidden, self.output_dim]
        return [((sizes[i + 1], sizes[i]), (sizes[i + 1],)) for i in range(len(sizes) - 1)]

    @property
    def param_count(self) -> int:
        return sum(w[0] * w[1] + b[0] for w, b in self.layer_shapes())


@dataclass(frozen=True)
class InputNorm:
    """Affine input map (x - center) / halfspan; halfspan 0 pins a dimension to 0."""

    center: np.ndarray
    halfspan: np.ndarray

    @classmethod
    def from_bounds(cls, pairs) -> "InputNorm":
        lo = np.array([p[0] for p in pairs], dtype=np.float64)
        hi = np.array([p[1] for p in pairs], dtype=np.float64)
        return cls(center=(lo + hi) / 2.0, halfspan=(hi - lo) / 2.0)

    @classmethod
    def identity(cls, dim: int) -> "InputNorm":
        return cls(center=np.zeros(dim), halfspan=np.ones(dim))

    @property
    def inv_halfspan(self) -> np.ndarray:
        inv = np.zeros_like(self.halfspan)
        nonzero = self.halfspan != 0.0
        inv[nonzero] = 1.0 / self.halfspan[nonzero]
        return inv

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (X - self.center) * self.inv_halfspan


@dataclass(frozen=True)
class ParameterSet:
    """A network's weights as one flat float64 vector plus its architecture."""

    spec: NetworkSpec
    norm: InputNorm
    flat: np.ndarray

    def __post_init__(self):
        if self.flat.dtype != np.float64 or self.flat.ndim != 1:
            raise DomainError("flat parameters must be a 1-D float64 array")
        if self.flat.size != self.spec.param_count:
            raise DomainError(f"expected {self.spec.param_count} parameters, got {self.flat.size}")
        if len(self.norm.center) != self.spec.input_dim:
            raise DomainError("input normalization length does not match input_dim")

    def views(self) -> list:
        """(W, b) numpy views into the flat vector, in layer order."""
        out = []
        offset = 0
        for (wr, wc), (bn,) in self.spec.layer_shapes():
            W = self.flat[offset:offset + wr * wc].reshape(wr, wc)
            offset += wr * wc
            b = self.flat[offset:offset + bn]
            offset += bn
            out.append((W, b))
        return out

    def with_flat(self, flat: np.ndarray) -> "ParameterSet":
        return replace(self, flat=np.ascontiguousarray(flat, dtype=np.float64))


def init_params(spec: NetworkSpec, norm: InputNorm | None = None, seed=None) -> ParameterSet:
    """Uniform(+-sqrt(3/fan_in)) weights (variance 1/fan_in), zero biases."""
    norm = norm or InputNorm.identity(spec.input_dim)
    rng = np.random.default_rng(seed)
    chunks = []
    for (wr, wc), (bn,) in spec.layer_shapes():
        bound = np.sqrt(3.0 / wc)
        chunks.append(rng.uniform(-bound, bound, size=wr * wc))
        chunks.append(np.zeros(bn))
    return ParameterSet(spec=spec, norm=norm, flat=np.concatenate(chunks))


class _Cache:
    """Everything the fused reverse pass needs from one forward evaluation."""

    __slots__ = ("pset", "views", "inputs", "zs", "tin", "ztan", "out", "jac")

    def __init__(self, pset, views, inputs, zs, tin, ztan, out, jac):
        self.pset = pset
        self.views = views
        self.inputs = inputs
        self.zs = zs
        self.tin = tin
        self.ztan = ztan
        self.out = out
        self.jac = jac


def _forward_cache(pset: ParameterSet, X, need_tangent: bool, tangent_dims=(0, 1)) -> _Cache:
    spec = pset.spec
    act = ACTIVATIONS[spec.activation]
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise DomainError(f"expected input shape (batch, {spec.input_dim})")
    views = pset.views()
    h = pset.norm.apply(X)
    inputs = [h]
    zs: list = []
    tin: list = []
    ztan: list = []
    if need_tangent:
        scale = pset.norm.inv_halfspan
        first = []
        for d in tangent_dims:
            t = np.zeros_like(h)
            t[:, d] = scale[d]
            first.append(t)
        tin.append(first)
    out = None
    jac = None
    last = len(views) - 1
    for l, (W, b) in enumerate(views):
        z = h @ W.T + b
        if l < last:
            f = act.value(z)
            zs.append(z)
            if need_tangent:
                d1 = act.first(z, f)
                zd = [t @ W.T for t in tin[-1]]
                ztan.append(zd)
                tin.append([d1 * t for t in zd])
            h = f
            inputs.append(h)
        else:
            out = z
            if need_tangent:
                jac = np.stack([t @ W.T for t in tin[-1]], axis=2)
    return _Cache(pset, views, inputs, zs, tin, ztan, out, jac)


def _backward(cache: _Cache, gy, gjac) -> np.ndarray:
    """Cotangents of (outputs, spatial jacobian) back to the flat parameters."""
    views = cache.views
    act = ACTIVATIONS[cache.pset.spec.activation]
    nlayers = len(views)
    with_tangent = cache.jac is not None and gjac is not None
    B, out_dim = cache.out.shape
    if gy is None:
        gy = np.zeros_like(cache.out)
    gW_list = [None] * nlayers
    gb_list = [None] * nlayers

    W_last, _ = views[-1]
    h_in = cache.inputs[-1]
    gW = gy.T @ h_in
    gb = gy.sum(axis=0)
    gh = gy @ W_last
    ghd = None
    if with_tangent:
        ndir = gjac.shape[2]
        ghd = [gjac[:, :, d] @ W_last for d in range(ndir)]
        for d in range(ndir):
            gW += gjac[:, :, d].T @ cache.tin[-1][d]
    gW_list[-1] = gW
    gb_list[-1] = gb

    for l in range(nlayers - 2, -1, -1):
        z = cache.zs[l]
        f = cache.inputs[l + 1]
        d1 = act.first(z, f)
        gz = gh * d1
        gzd = None
        if with_tangent:
            d2 = act.second(z, f)
            for d in range(len(ghd)):
                gz = gz + ghd[d] * d2 * cache.ztan[l][d]
            gzd = [ghd[d] * d1 for d in range(len(ghd))]
        W, _ = views[l]
        h_in = cache.inputs[l]
        gW = gz.T @ h_in
        gb = gz.sum(axis=0)
        if with_tangent:
            for d in range(len(gzd)):
                gW += gzd[d].T @ cache.tin[l][d]
        gW_list[l] = gW
        gb_list[l] = gb
        gh = gz @ W
        if with_tangent:
            ghd = [gzd[d] @ W for d in range(len(gzd))]

    chunks = []
    for l in range(nlayers):
        chunks.append(gW_list[l].ravel())
        chunks.append(gb_list[l])
    return np.concatenate(chunks)


def forward(params: ParameterSet, X) -> np.ndarray:
    """Plain evaluation: (batch, input_dim) -> (batch, output_dim)."""
    return _forward_cache(params, X, need_tangent=False).out


def spatial_jacobian(params: ParameterSet, X, dims=(0, 1)) -> np.ndarray:
    """First derivatives of every output w.r.t. the spatial inputs.

    Returns (batch, output_dim, len(dims)); derivatives are taken w.r.t. the
    raw (un-normalized) inputs.
    """
    return _forward_cache(params, X, need_tangent=True, tangent_dims=dims).jac


def net_apply(param_leaf: Node, template: ParameterSet, X, need_jac: bool = False):
    """Tape primitive: network evaluation as a node pair (outputs, jacobian).

    ``param_leaf`` carries the flat parameter vector; the returned nodes
    backpropagate to it through one fused reverse pass.
    """
    pset = template.with_flat(np.asarray(param_leaf.value, dtype=np.float64))
    cache = _forward_cache(pset, X, need_tangent=need_jac)

    def bundle_vjp(g):
        return _backward(cache, g[0], g[1] if need_jac else None)

    bundle = Node((cache.out, cache.jac), (param_leaf,), (bundle_vjp,))
    out = Node(cache.out, (bundle,), (lambda g: (g, None),))
    if not need_jac:
        return out, None
    jac = Node(cache.jac, (bundle,), (lambda g: (None, g),))
    return out, jac


def param_gradient(root: Node, param_leaf: Node) -> np.ndarray:
    """Gradient of a scalar loss node w.r.t. the flat parameter leaf."""
    from .tape import gradient

    return gradient(root, param_leaf)
