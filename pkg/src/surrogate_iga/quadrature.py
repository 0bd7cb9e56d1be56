"""Gauss-Legendre rules and tensor-product element quadrature on [0, 1]^n."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError

MAX_POINTS = 10


@dataclass(frozen=True, eq=False)
class GaussRule:
    """``m``-point Gauss-Legendre rule on [0, 1] (nodes ascending)."""

    m: int
    nodes: np.ndarray
    weights: np.ndarray


def _legendre(m, x):
    """Value and derivative of the Legendre polynomial P_m at x."""
    p0, p1 = 1.0, x
    for k in range(2, m + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    return p1, m * (x * p1 - p0) / (x * x - 1.0)


@lru_cache(maxsize=None)
def gauss_rule(m):
    if int(m) != m or not 1 <= m <= MAX_POINTS:
        raise ConfigError(f"Gauss rule needs 1 <= m <= {MAX_POINTS} points, got {m}")
    nodes = np.empty(m)
    weights = np.empty(m)
    for i in range(m):
        x = math.cos(math.pi * (i + 0.75) / (m + 0.5))
        for _ in range(100):
            pm, dpm = _legendre(m, x)
            dx = pm / dpm
            x -= dx
            if abs(dx) < 1e-16:
                break
        _, dpm = _legendre(m, x)
        nodes[i] = x
        weights[i] = 2.0 / ((1.0 - x * x) * dpm * dpm)
    # cos guesses give descending nodes on [-1, 1]; map to ascending on [0, 1]
    nodes = 0.5 * (1.0 - nodes)
    weights = 0.5 * weights
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return GaussRule(m, nodes, weights)


def tensor_rule(rule, dim):
    """Tensor points ``(m**dim, dim)`` and weights on [0, 1]^dim, first direction fastest."""
    grids = np.meshgrid(*([rule.nodes] * dim), indexing="ij")
    wgrids = np.meshgrid(*([rule.weights] * dim), indexing="ij")
    pts = np.stack([g.ravel(order="F") for g in grids], axis=-1)
    w = np.prod(np.stack([g.ravel(order="F") for g in wgrids]), axis=0)
    return pts, w


@dataclass(frozen=True, eq=False)
class ElementQuadrature:
    element: tuple
    points: np.ndarray
    weights: np.ndarray


def element_quadrature(space, element, m):
    element = tuple(int(e) for e in element)
    if len(element) != space.dim or any(not 0 <= e < space.nel for e in element):
        raise ValueError(f"invalid element index {element} for {space.nel} elements per direction")
    h = space.kv.h
    ref_pts, ref_w = tensor_rule(gauss_rule(m), space.dim)
    pts = (np.asarray(element) + ref_pts) * h
    return ElementQuadrature(element, pts, ref_w * h ** space.dim)
