"""Certified Lipschitz bounds for partial derivatives of a network.

The partial derivative d g / d x_r of a scalar network is itself Lipschitz,
and a constant valid over all inputs follows from a per-layer recursion in
spectral norms.  Writing s_l = sup |phi_l''|, W_r for row r of the first
weight matrix, and Lhat_l for the bound after layer l:

    Lhat_1 = s_1 ||W_r||_2 ||W_1||_2
    Lhat_l = s_l ||W_r||_2 ||W_1||_2 ||W_2||_2^2 ... ||W_l||_2^2
             + Lhat_{l-1} ||W_l||_2

The first term bounds the curvature contributed by layer l, the second
carries the accumulated bound through the layer's linear map.  Spectral
norms come from power iteration on the Gram matrix, run in a guaranteed
upper-bound mode.  The bound is sound but loose; ``empirical_gradient_sup``
gives a grid lower reference for looseness checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import DimensionMismatch, DimensionTooHigh, IndexOutOfRange
from .geometry import BoxDomain, grid_points
from .mlp import Network, hessian_batch

_POWER_ITER_CAP = 10_000


@dataclass(frozen=True)
class LipschitzEstimate:
    """Bound on the Lipschitz constant of one partial derivative.

    ``per_layer_partials[l]`` is the bound for the network truncated after
    layer l; the last entry equals ``bound``.  ``activation_bounds`` holds
    each layer's second-derivative sup constant.
    """

    feature: int
    bound: float
    per_layer_partials: tuple[float, ...]
    layer_norms: tuple[float, ...]
    row_norm: float
    activation_bounds: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.bound < 0.0:
            raise ValueError("a Lipschitz bound cannot be negative")

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "feature": self.feature,
            "bound": self.bound,
            "per_layer_partials": list(self.per_layer_partials),
            "layer_norms": list(self.layer_norms),
            "row_norm": self.row_norm,
            "activation_bounds": list(self.activation_bounds),
        }


def spectral_norm(w, tol: float = 1e-10, guaranteed_upper: bool = True) -> float:
    """Largest singular value via power iteration on the Gram matrix.

    The start vector is deterministic (normalized all-ones); if an iterate
    lands in the null space, a seeded random restart is used.  In
    guaranteed-upper mode the converged estimate is inflated by (1 + tol).
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2:
        raise DimensionMismatch("spectral_norm expects a 2-d matrix")
    if not np.isfinite(w).all():
        raise ValueError("matrix must be finite")
    if not w.any():
        return 0.0
    gram = w.T @ w if w.shape[1] <= w.shape[0] else w @ w.T
    vec = np.ones(gram.shape[0]) / math.sqrt(gram.shape[0])
    lam = 0.0
    restarted = False
    settled = 0
    for _ in range(_POWER_ITER_CAP):
        nxt = gram @ vec
        nrm = float(np.linalg.norm(nxt))
        if nrm <= 0.0:
            if restarted:
                return 0.0
            restarted = True
            rng = np.random.default_rng(0)
            vec = rng.standard_normal(gram.shape[0])
            vec /= np.linalg.norm(vec)
            lam = 0.0
            continue
        vec = nxt / nrm
        prev, lam = lam, float(vec @ gram @ vec)
        # require the tolerance to hold on consecutive iterations so a single
        # slow step near convergence cannot stop the iteration early
        settled = settled + 1 if abs(lam - prev) <= tol * max(lam, 1.0) else 0
        if settled >= 3:
            break
    sigma = math.sqrt(max(lam, 0.0))
    return sigma * (1.0 + tol) if guaranteed_upper else sigma


def layer_spectral_norms(net: Network, tol: float = 1e-10) -> tuple[float, ...]:
    return tuple(spectral_norm(layer.weights, tol) for layer in net.layers)


def lipschitz_bound(
    net: Network, feature: int, _norms: tuple[float, ...] | None = None
) -> LipschitzEstimate:
    """Certified Lipschitz constant of d g / d x_feature over all inputs."""
    if not 0 <= feature < net.input_dim:
        raise IndexOutOfRange(f"feature {feature} outside 0..{net.input_dim - 1}")
    norms = layer_spectral_norms(net) if _norms is None else _norms
    row_norm = float(np.linalg.norm(net.layers[0].weights[feature, :]))

    per_layer: list[float] = []
    act_bounds = tuple(l.activation.sup_abs_second_derivative for l in net.layers)
    lhat = 0.0
    # prefix tracks ||W_r|| ||W_1|| ||W_2||^2 ... ||W_l||^2 across layers.
    prefix = row_norm * norms[0]
    for idx, s in enumerate(act_bounds):
        if idx >= 1:
            prefix *= norms[idx] ** 2
            lhat = s * prefix + lhat * norms[idx]
        else:
            lhat = s * prefix
        per_layer.append(lhat)
    return LipschitzEstimate(
        feature, float(lhat), tuple(per_layer), norms, row_norm, act_bounds
    )


def lipschitz_bounds(net: Network, features) -> list[LipschitzEstimate]:
    """Bounds for several features, sharing one spectral-norm pass."""
    norms = layer_spectral_norms(net)
    return [lipschitz_bound(net, int(r), _norms=norms) for r in features]


def empirical_gradient_sup(
    net: Network, feature: int, domain: BoxDomain, grid_per_dim: int
) -> float:
    """Grid maximum of ||grad of d g / d x_feature||, a lower reference.

    The gradient of the partial derivative is row ``feature`` of the input
    Hessian.  Full grids are refused above dimension 4.
    """
    if not 0 <= feature < net.input_dim:
        raise IndexOutOfRange(f"feature {feature} outside 0..{net.input_dim - 1}")
    if domain.dim != net.input_dim:
        raise DimensionMismatch("domain dimension does not match the network")
    if domain.dim > 4:
        raise DimensionTooHigh("full gradient grids are limited to dimension <= 4")
    pts = grid_points(domain, grid_per_dim)
    best = 0.0
    for start in range(0, len(pts), 16_384):
        chunk = pts[start : start + 16_384]
        hess = hessian_batch(net, chunk)
        norms = np.linalg.norm(hess[:, feature, :], axis=1)
        best = max(best, float(norms.max()))
    return best
