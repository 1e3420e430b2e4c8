"""Adam training of the field network on a collocation set, plus field export."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .diffnet import (
    InputNorm,
    NetworkSpec,
    ParameterSet,
    forward,
    init_adam,
    init_params,
    load_params,
    param_gradient,
    save_params,
)
from .diffnet.adam import adam_step
from .diffnet.tape import leaf
from .errors import DomainError, NumericalError
from .geometry import ChannelDims, ControlPolygon, build_layout
from .physics import LossReport, LossWeights, loss_node, total_loss
from .sampling import CollocationCounts, CollocationSet, SampleBounds, generate_collocation

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run needs; fully determined by the seed."""

    steps: int = 5000
    batch_size: int = 1024
    learning_rate: float = 2e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    hidden: tuple = (64, 64, 64, 64)
    activation: str = "tanh"
    dims: ChannelDims = field(default_factory=ChannelDims)
    bounds: SampleBounds = field(default_factory=SampleBounds)
    counts: CollocationCounts = field(default_factory=CollocationCounts)
    weights: LossWeights = field(default_factory=LossWeights)
    slice_stations: tuple | None = None
    log_interval: int = 10
    checkpoint_interval: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 0:
            raise DomainError("steps and batch_size must be >= 0")
        if self.learning_rate <= 0 or self.log_interval < 1 or self.checkpoint_interval < 0:
            raise DomainError("invalid training hyperparameters")
        object.__setattr__(self, "hidden", tuple(self.hidden))


@dataclass
class TrainHistory:
    """Full-set loss at the ends plus periodic minibatch reports."""

    initial: LossReport
    reports: list
    final: LossReport | None = None
    aborted_at: int | None = None

    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.reports])

    def moving_average(self, window: int = 100) -> np.ndarray:
        t = self.totals()
        if len(t) < window:
            return t.copy()
        kernel = np.full(window, 1.0 / window)
        return np.convolve(t, kernel, mode="valid")


def train(cfg: TrainConfig, colloc: CollocationSet | None = None):
    """Run the configured training; returns (parameters, history).

    A non-finite loss or gradient aborts the run and returns the last
    parameters that produced a finite loss.
    """
    root = np.random.SeedSequence(cfg.seed)
    ss_colloc, ss_init, ss_batch = root.spawn(3)
    if colloc is None:
        colloc = generate_collocation(cfg.dims, cfg.bounds, cfg.counts, seed=ss_colloc,
                                      slice_stations=cfg.slice_stations)
    spec = NetworkSpec(input_dim=7, output_dim=9, hidden=cfg.hidden, activation=cfg.activation)
    norm = InputNorm.from_bounds(cfg.bounds.pairs())
    params = init_params(spec, norm=norm, seed=ss_init)
    state = init_adam(params.flat.size, lr=cfg.learning_rate, beta1=cfg.beta1,
                      beta2=cfg.beta2, eps=cfg.eps)

    initial = total_loss(colloc, params, cfg.weights)
    initial.step = 0
    history = TrainHistory(initial=initial, reports=[])

    rng = np.random.default_rng(ss_batch)
    n = len(colloc.interior)
    batch = cfg.batch_size if 0 < cfg.batch_size < n else n
    perm = rng.permutation(n)
    cursor = 0
    last_finite = params

    for step in range(1, cfg.steps + 1):
        if batch < n:
            if cursor + batch > n:
                perm = rng.permutation(n)
                cursor = 0
            idx = perm[cursor:cursor + batch]
            cursor += batch
            sub = CollocationSet(interior=colloc.interior[idx], boundary=colloc.boundary,
                                 slices=colloc.slices)
        else:
            sub = colloc
        param_leaf = leaf(params.flat)
        node, report = loss_node(sub, param_leaf, params, cfg.weights)
        report.step = step
        if not np.isfinite(report.total):
            log.warning("training aborted at step %d: non-finite loss", step)
            history.aborted_at = step
            params = last_finite
            break
        last_finite = params
        try:
            grad = param_gradient(node, param_leaf)
            params, state = adam_step(params, grad, state)
        except NumericalError as exc:
            log.warning("training aborted at step %d: %s", step, exc)
            history.aborted_at = step
            params = last_finite
            break
        if step % cfg.log_interval == 0 or step == cfg.steps:
            history.reports.append(report)
        if cfg.checkpoint_dir and cfg.checkpoint_interval and step % cfg.checkpoint_interval == 0:
            save_checkpoint(params, os.path.join(cfg.checkpoint_dir, f"step_{step:07d}.ckpt"),
                            seed=cfg.seed)

    final = total_loss(colloc, params, cfg.weights)
    final.step = history.aborted_at if history.aborted_at is not None else cfg.steps
    history.final = final
    if cfg.checkpoint_dir:
        os.makedirs(cfg.checkpoint_dir, exist_ok=True)
        save_checkpoint(params, os.path.join(cfg.checkpoint_dir, "final.ckpt"), seed=cfg.seed)
    return params, history


def save_checkpoint(params: ParameterSet, path, seed=None) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    save_params(params, path, role="field", seed=seed)


def load_checkpoint(path) -> ParameterSet:
    params, _ = load_params(path)
    return params


@dataclass
class FieldTable:
    """Regular-grid field evaluation with a fluid mask (True inside)."""

    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    speed: np.ndarray
    p: np.ndarray
    c: np.ndarray
    mask: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "u", "v", "speed", "p", "c", "inside"])
            for iy, yv in enumerate(self.y):
                for ix, xv in enumerate(self.x):
                    writer.writerow([
                        f"{xv:.9g}", f"{yv:.9g}",
                        f"{self.u[iy, ix]:.9g}", f"{self.v[iy, ix]:.9g}",
                        f"{self.speed[iy, ix]:.9g}", f"{self.p[iy, ix]:.9g}",
                        f"{self.c[iy, ix]:.9g}", int(self.mask[iy, ix]),
                    ])


def evaluate_fields(params: ParameterSet, cp, re: float, sc: float,
                    dims: ChannelDims | None = None, grid=(141, 41)) -> FieldTable:
    """Evaluate the trained fields on a regular grid over the channel."""
    dims = dims or ChannelDims()
    if re <= 0 or sc <= 0:
        raise DomainError("re and sc must be positive")
    polygon = cp if isinstance(cp, ControlPolygon) else ControlPolygon.from_iterable(cp)
    layout = build_layout(polygon, dims)
    nx, ny = grid
    if nx < 2 or ny < 2:
        raise DomainError("grid must be at least 2x2")
    H = dims.H
    x = np.linspace(0.0, dims.L / H, nx)
    y = np.linspace(0.0, 1.0, ny)
    XX, YY = np.meshgrid(x, y)
    mask = layout.contains(XX.ravel() * H, YY.ravel() * H).reshape(ny, nx)
    rows = np.column_stack([
        XX.ravel(), YY.ravel(),
        np.tile(polygon.as_array(), (nx * ny, 1)),
        np.full(nx * ny, re), np.full(nx * ny, sc),
    ])
    out = forward(params, rows)
    u = out[:, 0].reshape(ny, nx)
    v = out[:, 1].reshape(ny, nx)
    p = out[:, 2].reshape(ny, nx)
    c = out[:, 6].reshape(ny, nx)
    return FieldTable(x=x, y=y, u=u, v=v, speed=np.hypot(u, v), p=p, c=c, mask=mask)
