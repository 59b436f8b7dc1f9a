"""Region-induced graph reasoning (RIGR).

Both branches are projected to semantic graphs; attention carries region
semantics into the edge graph (never the other way); each graph is then
refined by one graph convolution and reprojected residually onto the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autograd import ops as O
from .autograd.tensor import Tensor, param
from .errors import DimensionError, InvariantError
from .projection import (AdjacencyMatrix, GraphProjector, NodeSet, intra_adjacency,
                         project, reproject)


@dataclass
class CgiParams:
    """Cross-graph attention transforms; `mix` starts at zero so the interaction
    begins as the identity."""

    key_w: Tensor    # (C, C) on the source (region) nodes
    value_w: Tensor  # (C, C) on the source nodes
    query_w: Tensor  # (C, C) on the target (edge) nodes
    mix: Tensor      # scalar weight on the attended message

    @staticmethod
    def create(dim: int, rng) -> "CgiParams":
        s = 1.0 / math.sqrt(dim)
        return CgiParams(key_w=param(rng.standard_normal((dim, dim)) * s),
                         value_w=param(rng.standard_normal((dim, dim)) * s),
                         query_w=param(rng.standard_normal((dim, dim)) * s),
                         mix=param(np.zeros(())))

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.key_w": self.key_w, f"{prefix}.value_w": self.value_w,
                f"{prefix}.query_w": self.query_w, f"{prefix}.mix": self.mix}


def cross_graph_interact(source: NodeSet, target: NodeSet, p: CgiParams) -> NodeSet:
    """Transfer information from the source graph into the target graph.

    Attention rows (one per target node) are softmax-normalized; the attended
    value message is scaled by `mix` and added to the target nodes.  The
    target's assignment matrix is inherited unchanged.
    """
    if source.node_count != target.node_count:
        raise DimensionError(f"cross_graph_interact: {source.node_count} source nodes vs "
                             f"{target.node_count} target nodes")
    key = O.matmul(p.key_w, source.nodes)        # (C, K)
    value = O.matmul(p.value_w, source.nodes)
    query = O.matmul(p.query_w, target.nodes)
    att = O.softmax(O.matmul(O.transpose(query), key), axis=1)   # (K, K)
    message = O.transpose(O.matmul(att, O.transpose(value)))     # (C, K)
    mixed = O.add(O.scale(message, p.mix), target.nodes)
    return NodeSet(nodes=mixed, assign=target.assign, origin=target.origin)


def graph_reason(nodes: NodeSet, adj: AdjacencyMatrix, weight: Tensor) -> NodeSet:
    """One graph convolution: relu(A V^T W)^T, keeping the (C, K) layout."""
    row_sums = adj.matrix.data.sum(axis=1)
    if np.max(np.abs(row_sums - 1.0)) > 1e-4:
        raise InvariantError(f"graph_reason: adjacency rows not stochastic "
                             f"(worst sum {row_sums[np.argmax(np.abs(row_sums - 1.0))]:.6f})")
    mixed = O.relu(O.matmul(O.matmul(adj.matrix, O.transpose(nodes.nodes)), weight))
    return NodeSet(nodes=O.transpose(mixed), assign=nodes.assign, origin=nodes.origin)


@dataclass
class RigrParams:
    reduce_region_w: Tensor  # (C, C) residual 1x1 before projection
    reduce_region_b: Tensor  # (C,)
    reduce_edge_w: Tensor
    reduce_edge_b: Tensor
    proj_region: GraphProjector
    proj_edge: GraphProjector
    cgi: CgiParams
    gcn_region_w: Tensor     # (C, C)
    gcn_edge_w: Tensor       # (C, C)

    @staticmethod
    def create(dim: int, node_count: int, rng) -> "RigrParams":
        s = 1.0 / math.sqrt(dim)
        return RigrParams(
            reduce_region_w=param(rng.standard_normal((dim, dim)) * s),
            reduce_region_b=param(np.zeros(dim)),
            reduce_edge_w=param(rng.standard_normal((dim, dim)) * s),
            reduce_edge_b=param(np.zeros(dim)),
            proj_region=GraphProjector.create(node_count, dim, rng),
            proj_edge=GraphProjector.create(node_count, dim, rng),
            cgi=CgiParams.create(dim, rng),
            gcn_region_w=param(rng.standard_normal((dim, dim)) * s),
            gcn_edge_w=param(rng.standard_normal((dim, dim)) * s))

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.reduce_region_w": self.reduce_region_w,
               f"{prefix}.reduce_region_b": self.reduce_region_b,
               f"{prefix}.reduce_edge_w": self.reduce_edge_w,
               f"{prefix}.reduce_edge_b": self.reduce_edge_b}
        out.update(self.proj_region.tensors(f"{prefix}.proj_region"))
        out.update(self.proj_edge.tensors(f"{prefix}.proj_edge"))
        out.update(self.cgi.tensors(f"{prefix}.cgi"))
        out[f"{prefix}.gcn_region_w"] = self.gcn_region_w
        out[f"{prefix}.gcn_edge_w"] = self.gcn_edge_w
        return out

    def projectors(self):
        return [self.proj_region, self.proj_edge]


def rigr_forward(region_feats: Tensor, edge_feats: Tensor,
                 p: RigrParams) -> tuple[Tensor, Tensor]:
    """Run RIGR over flattened (N, C) features of both branches.

    Returns the reasoned region features and the semantics-enriched edge
    features.  The region path never reads the edge branch, so region outputs
    carry no gradient back into the edge inputs.
    """
    if region_feats.shape != edge_feats.shape:
        raise DimensionError(f"rigr_forward: region {region_feats.shape} vs "
                             f"edge {edge_feats.shape}")
    low_region = O.add(region_feats,
                       O.bias_rows(O.matmul(region_feats, p.reduce_region_w),
                                   p.reduce_region_b))
    low_edge = O.add(edge_feats,
                     O.bias_rows(O.matmul(edge_feats, p.reduce_edge_w), p.reduce_edge_b))
    region_nodes = project(low_region, p.proj_region)
    edge_nodes = project(low_edge, p.proj_edge)
    edge_nodes = cross_graph_interact(region_nodes, edge_nodes, p.cgi)
    region_out = graph_reason(region_nodes, intra_adjacency(region_nodes), p.gcn_region_w)
    edge_out = graph_reason(edge_nodes, intra_adjacency(edge_nodes), p.gcn_edge_w)
    return reproject(region_out, low_region), reproject(edge_out, low_edge)
