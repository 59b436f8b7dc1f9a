"""Edge-constricted graph reasoning (ECGR).

The edge branch is classified into a per-pixel edge probability map, which
gates the fused region features into edge-supportive nodes.  A kNN graph
links every grid feature to its closest supportive nodes and an edge-aware
graph convolution (per-channel max over neighbors) refines the region branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autograd import ops as O
from .autograd.tensor import Tensor, param, trace
from .errors import DimensionError, InvariantError
from .projection import GraphProjector, aggregate_nodes, soft_assign


@dataclass
class EdgeMap:
    """Per-pixel edge probabilities, one row per grid position."""

    values: Tensor  # (N, 1) in [0, 1]
    logits: Tensor  # (N, 1) pre-sigmoid, kept for the full-resolution output head


@dataclass
class SupportiveNodes:
    embeds: Tensor  # (C, z)

    @property
    def count(self) -> int:
        return self.embeds.shape[1]


@dataclass
class EdgeSupportGraph:
    """For each grid position, its nearest supportive nodes, closest first."""

    neighbors: np.ndarray  # (N, k) int64
    distances: np.ndarray  # (N, k), nondecreasing along each row


@dataclass
class EsgParams:
    edge_embed_w: Tensor  # (C, C), no bias so a zero residual stays exactly zero
    update_w: Tensor      # (2C, C) on concat(feature, edge embedding)
    update_b: Tensor      # (C,)

    @staticmethod
    def create(dim: int, rng) -> "EsgParams":
        s = 1.0 / math.sqrt(dim)
        return EsgParams(edge_embed_w=param(rng.standard_normal((dim, dim)) * s),
                         update_w=param(rng.standard_normal((2 * dim, dim)) * s / math.sqrt(2)),
                         update_b=param(np.zeros(dim)))

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.edge_embed_w": self.edge_embed_w,
                f"{prefix}.update_w": self.update_w,
                f"{prefix}.update_b": self.update_b}


def edge_classify(edge_feats: Tensor, weight: Tensor, bias: Tensor) -> EdgeMap:
    """1x1 map of the edge features to a single sigmoid channel."""
    logits = O.bias_rows(O.matmul(edge_feats, weight), bias)
    return EdgeMap(values=O.sigmoid(logits), logits=logits)


def supportive_nodes(edge: EdgeMap, feats: Tensor, proj: GraphProjector) -> SupportiveNodes:
    """Project edge-gated features into supportive nodes.

    Both the features and the assignment mass are gated by the edge map, so an
    all-zero edge map starves every node of mass and the whole set degenerates
    to exact zero vectors; an all-ones map reduces to the plain projection.
    """
    if edge.values.shape[0] != feats.shape[0]:
        raise DimensionError(f"supportive_nodes: edge map {edge.values.shape} vs "
                             f"features {feats.shape}")
    gated = O.mul(edge.values, feats)           # (N,1) x (N,C) channel broadcast
    assign = soft_assign(gated, proj)
    gated_assign = O.mul(edge.values, assign)   # edge-weighted assignment mass
    return SupportiveNodes(embeds=aggregate_nodes(gated, gated_assign, proj))


def build_knn_graph(feats: Tensor, nodes: SupportiveNodes, k_nn: int) -> EdgeSupportGraph:
    """Exhaustive Euclidean kNN from grid features to supportive nodes.

    Ties break toward the lower node index, so the result is deterministic.
    """
    if k_nn < 1:
        raise ValueError(f"k_nn must be >= 1, got {k_nn}")
    z = nodes.count
    if z == 0:
        raise InvariantError("build_knn_graph: no supportive nodes")
    f = feats.data                              # (N, C)
    p = nodes.embeds.data                       # (C, z)
    d2 = ((f[:, :, None] - p[None, :, :]) ** 2).sum(axis=1)
    k = min(k_nn, z)
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    dist = np.sqrt(np.take_along_axis(d2, order, axis=1))
    trace.add("knn", order.astype(np.int64))
    return EdgeSupportGraph(neighbors=order, distances=dist)


def esg_conv(feats: Tensor, graph: EdgeSupportGraph, nodes: SupportiveNodes,
             p: EsgParams) -> Tensor:
    """Edge-supportive graph convolution.

    Per neighbor: an edge embedding from the scaled difference to the
    supportive node, concatenated with the grid feature and linearly fused.
    The output takes the max over neighbors independently per channel.
    """
    n, c = feats.shape
    if graph.neighbors.shape[0] != n:
        raise DimensionError(f"esg_conv: graph built over {graph.neighbors.shape[0]} "
                             f"positions, features have {n}")
    k = graph.neighbors.shape[1]
    if k == 0:
        raise InvariantError("esg_conv: empty neighbor lists")
    node_rows = O.transpose(nodes.embeds)       # (z, C)
    candidates = []
    for s in range(k):
        picked = O.gather_rows(node_rows, graph.neighbors[:, s])
        embed = O.matmul(O.sub(feats, picked), p.edge_embed_w)
        cand = O.bias_rows(O.matmul(O.concat([feats, embed], axis=1), p.update_w),
                           p.update_b)
        candidates.append(O.reshape(cand, (1, n, c)))
    return O.reduce_max(O.concat(candidates, axis=0), axis=0)


@dataclass
class EcgrParams:
    edge_head_w: Tensor   # (C, 1); also the network's edge output head
    edge_head_b: Tensor   # (1,)
    merge_w: Tensor       # (2C, C) fusing edge and region features
    merge_b: Tensor       # (C,)
    proj: GraphProjector  # z supportive nodes
    esg: EsgParams

    @staticmethod
    def create(dim: int, support_count: int, rng) -> "EcgrParams":
        s = 1.0 / math.sqrt(dim)
        return EcgrParams(
            edge_head_w=param(rng.standard_normal((dim, 1)) * s),
            edge_head_b=param(np.zeros(1)),
            merge_w=param(rng.standard_normal((2 * dim, dim)) * s / math.sqrt(2)),
            merge_b=param(np.zeros(dim)),
            proj=GraphProjector.create(support_count, dim, rng),
            esg=EsgParams.create(dim, rng))

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.edge_head_w": self.edge_head_w,
               f"{prefix}.edge_head_b": self.edge_head_b,
               f"{prefix}.merge_w": self.merge_w,
               f"{prefix}.merge_b": self.merge_b}
        out.update(self.proj.tensors(f"{prefix}.proj"))
        out.update(self.esg.tensors(f"{prefix}.esg"))
        return out

    def projectors(self):
        return [self.proj]


def ecgr_forward(region_feats: Tensor, edge_feats: Tensor, p: EcgrParams,
                 k_nn: int) -> tuple[Tensor, EdgeMap]:
    """Classify the edge map, fuse the branches, refine the region features.

    The fusion 1x1 and the graph convolution are residual, so zeroing every
    learned weight leaves the region features untouched.
    """
    if region_feats.shape != edge_feats.shape:
        raise DimensionError(f"ecgr_forward: region {region_feats.shape} vs "
                             f"edge {edge_feats.shape}")
    edge = edge_classify(edge_feats, p.edge_head_w, p.edge_head_b)
    merged = O.add(region_feats,
                   O.bias_rows(O.matmul(O.concat([edge_feats, region_feats], axis=1),
                                        p.merge_w), p.merge_b))
    nodes = supportive_nodes(edge, merged, p.proj)
    graph = build_knn_graph(merged, nodes, k_nn)
    refined = O.add(merged, esg_conv(merged, graph, nodes, p.esg))
    return refined, edge
