"""Soft-assignment graph projection and its residual inverse.

Grid features (one row per pixel) are softly clustered into K learnable nodes.
Each node is the normalized, assignment-weighted mean of scaled residuals
against its center; the assignment matrix is kept and reused to project the
reasoned nodes back onto the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autograd import ops as O
from .autograd.tensor import Tensor, param, tensor, trace
from .errors import DimensionError

SIGMA_FLOOR = 1e-4   # lower bound on the exponentiated scales, clamped after steps
MASS_FLOOR = 1e-12   # below this total assignment mass a node is degenerate
NORM_FLOOR = 1e-8    # below this L2 norm a node collapses to the zero vector


@dataclass
class GraphProjector:
    """Learnable clustering centers and scales defining the projection."""

    centers: Tensor    # (K, C), one row per node
    log_scale: Tensor  # (K, C); scales enter as exp(log_scale), so positivity is free

    @property
    def node_count(self) -> int:
        return self.centers.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.centers.shape[1]

    @staticmethod
    def create(node_count: int, feature_dim: int, rng) -> "GraphProjector":
        centers = rng.standard_normal((node_count, feature_dim)) / math.sqrt(feature_dim)
        return GraphProjector(centers=param(centers),
                              log_scale=param(np.zeros((node_count, feature_dim))))

    def clamp_scale_floor(self) -> None:
        np.maximum(self.log_scale.data, math.log(SIGMA_FLOOR), out=self.log_scale.data)

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.centers": self.centers, f"{prefix}.log_scale": self.log_scale}


@dataclass
class NodeSet:
    """Node embeddings of one projected graph plus the assignment that made them."""

    nodes: Tensor   # (C, K); unit-norm columns, or exact zeros for degenerate nodes
    assign: Tensor  # (N, K); rows on the probability simplex
    origin: tuple | None = None  # (h, w, C) of the grid the features came from

    @property
    def node_count(self) -> int:
        return self.nodes.shape[1]


@dataclass
class AdjacencyMatrix:
    matrix: Tensor  # (K, K), rows sum to 1


def _scaled_residuals(features: Tensor, proj: GraphProjector, k: int) -> Tensor:
    """(f_i - w_k) / sigma_k for every grid feature, shape (N, C)."""
    n = features.shape[0]
    w_k = O.slice_axis(proj.centers, 0, k, k + 1)
    inv_s = O.exp(O.neg(O.slice_axis(proj.log_scale, 0, k, k + 1)))
    return O.mul(O.sub(features, O.expand_rows(w_k, n)), O.expand_rows(inv_s, n))


def soft_assign(features: Tensor, proj: GraphProjector) -> Tensor:
    """Row-stochastic (N, K) soft assignment of features to projector nodes."""
    n, c = features.shape
    if c != proj.feature_dim:
        raise DimensionError(f"soft_assign: features have {c} channels, "
                             f"projector expects {proj.feature_dim}")
    cols = []
    for k in range(proj.node_count):
        r = _scaled_residuals(features, proj, k)
        sq = O.reduce_sum(O.mul(r, r), axis=1)          # (N,)
        cols.append(O.reshape(O.scale(sq, -0.5), (n, 1)))
    return O.softmax(O.concat(cols, axis=1), axis=1)


def aggregate_nodes(features: Tensor, weights: Tensor, proj: GraphProjector) -> Tensor:
    """Weighted scaled-residual means per node, L2-normalized, as a (C, K) matrix.

    Nodes whose total weight falls under MASS_FLOOR, or whose raw embedding is
    shorter than NORM_FLOOR, come out as exact zero columns with no gradient.
    """
    n, c = features.shape
    dtype = features.data.dtype
    one = tensor(np.ones((), dtype=dtype), dtype=dtype)
    cols = []
    for k in range(proj.node_count):
        q_k = O.slice_axis(weights, 1, k, k + 1)        # (N, 1)
        mass = O.reduce_sum(q_k)
        degenerate_mass = float(mass.data) < MASS_FLOOR
        trace.add("nodemass", np.asarray([k, degenerate_mass], dtype=np.int64))
        if degenerate_mass:
            cols.append(tensor(np.zeros((c, 1), dtype=dtype), dtype=dtype))
            continue
        r = _scaled_residuals(features, proj, k)
        weighted = O.matmul(O.transpose(q_k), r)        # (1, C)
        raw = O.scale(weighted, O.div(one, mass))
        norm = O.sqrt(O.reduce_sum(O.mul(raw, raw)))
        degenerate_norm = float(norm.data) <= NORM_FLOOR
        trace.add("nodenorm", np.asarray([k, degenerate_norm], dtype=np.int64))
        if degenerate_norm:
            cols.append(tensor(np.zeros((c, 1), dtype=dtype), dtype=dtype))
            continue
        cols.append(O.transpose(O.scale(raw, O.div(one, norm))))
    return O.concat(cols, axis=1)


def project(features: Tensor, proj: GraphProjector, origin: tuple | None = None) -> NodeSet:
    """Project grid features into a NodeSet, keeping the assignment for reprojection."""
    q = soft_assign(features, proj)
    return NodeSet(nodes=aggregate_nodes(features, q, proj), assign=q, origin=origin)


def intra_adjacency(nodes: NodeSet) -> AdjacencyMatrix:
    """Row-softmax of the node Gram matrix."""
    gram = O.matmul(O.transpose(nodes.nodes), nodes.nodes)
    return AdjacencyMatrix(O.softmax(gram, axis=1))


def reproject(nodes: NodeSet, features: Tensor) -> Tensor:
    """Residual reprojection: assignment-weighted node readout plus the grid features."""
    if nodes.assign.shape[0] != features.shape[0]:
        raise DimensionError(f"reproject: {nodes.assign.shape[0]} assigned pixels vs "
                             f"{features.shape[0]} grid features")
    if nodes.nodes.shape[0] != features.shape[1]:
        raise DimensionError(f"reproject: node dim {nodes.nodes.shape[0]} vs "
                             f"feature dim {features.shape[1]}")
    return O.add(O.matmul(nodes.assign, O.transpose(nodes.nodes)), features)
