"""Per-module finite-difference suites behind ``mgl gradcheck``.

Every suite builds a fresh random double-precision fixture, composes a scalar
loss through the module under test and compares reverse-mode gradients against
central differences.  Coordinates that cross a non-differentiable boundary are
detected and skipped, never counted as passes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import check_gradients, ops as O, precision, tensor
from .autograd.tensor import param
from .config import RunConfig
from .edge_graph import (EcgrParams, build_knn_graph, ecgr_forward, edge_classify,
                         esg_conv, supportive_nodes)
from .model import MglModel, mgl_loss
from .projection import GraphProjector, intra_adjacency, project, reproject
from .region_graph import (CgiParams, cross_graph_interact, graph_reason, rigr_forward)

TOLERANCE = 1e-4


@dataclass
class ModuleReport:
    name: str
    worst: float
    checked: int
    skipped: int

    @property
    def passed(self) -> bool:
        return self.worst < TOLERANCE and self.checked > 0

    def line(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        return (f"{self.name:<18} worst rel err {self.worst:.3e}  "
                f"checked {self.checked:4d}  skipped {self.skipped:3d}  {verdict}")


def _report(name: str, rep) -> ModuleReport:
    return ModuleReport(name=name, worst=rep.worst, checked=rep.checked,
                        skipped=rep.skipped)


def check_primitives(seed: int = 0) -> ModuleReport:
    """One composite loss touching every differentiable primitive."""
    rng = np.random.default_rng(seed)
    with precision("double"):
        mat_a = param(rng.standard_normal((3, 4)))
        mat_b = param(rng.standard_normal((4, 4)))
        kernel = param(rng.standard_normal((2, 3, 3, 3)) * 0.5)
        image = param(rng.standard_normal((3, 6, 6)))
        bias4 = param(rng.standard_normal(4))
        bias2 = param(rng.standard_normal(2))
        gate = param(np.array(0.8))
        chan_map = param(rng.random((1, 4, 4)) + 0.2)

        labels = (rng.random((2, 4, 4)) > 0.5).astype(float)
        gather_idx = np.array([0, 2, 1, 0])

        def loss_fn():
            m = O.softmax(O.bias_rows(O.matmul(mat_a, mat_b), bias4), axis=1)
            m = O.relu(O.sub(m, O.scale(m, 0.25)))
            div_term = O.reduce_sum(O.div(m, O.add(O.mul(m, m), O.scale(m, 0.1))))
            conv = O.conv2d(image, kernel, stride=1, pad=1, bias=bias2)
            resized = O.bilinear_resize(conv, 4, 4)
            gated = O.mul(chan_map, resized)  # (1,h,w) x (c,h,w) broadcast
            probs = O.sigmoid(gated)
            bce = O.bce_mean(probs, labels)
            gathered = O.gather_rows(m, gather_idx)
            root = O.reduce_sum(O.sqrt(O.add(O.mul(gathered, gathered),
                                             O.scale(O.expand_rows(bias4, 4), 0.0))))
            pieces = O.concat([O.reshape(m, (12,)), O.reshape(O.exp(O.neg(m)), (12,))],
                              axis=0)
            top = O.reduce_max(pieces)
            means = O.reduce_mean(O.slice_axis(O.transpose(m), 0, 1, 3))
            total = O.add(O.add(bce, O.scale(div_term, 1e-2)),
                          O.add(O.scale(root, gate), O.add(top, means)))
            return total

        rep = check_gradients(loss_fn, {
            "mat_a": mat_a, "mat_b": mat_b, "kernel": kernel, "image": image,
            "bias4": bias4, "bias2": bias2, "gate": gate, "chan_map": chan_map,
        }, rng=np.random.default_rng(seed + 1))
    return _report("tensor-autograd", rep)


def check_projection(seed: int = 0, grid: int = 8, channels: int = 8,
                     nodes: int = 4) -> ModuleReport:
    rng = np.random.default_rng(seed)
    with precision("double"):
        feats = param(rng.standard_normal((grid * grid, channels)))
        proj = GraphProjector.create(nodes, channels, rng)
        target = rng.standard_normal((grid * grid, channels))

        def loss_fn():
            ns = project(feats, proj)
            out = reproject(ns, feats)
            adj = intra_adjacency(ns)
            diff = O.sub(out, tensor(target, dtype=np.float64))
            return O.add(O.reduce_mean(O.mul(diff, diff)),
                         O.reduce_mean(O.mul(adj.matrix, adj.matrix)))

        rep = check_gradients(loss_fn, {
            "features": feats, "centers": proj.centers, "log_scale": proj.log_scale,
        }, rng=np.random.default_rng(seed + 1))
    return _report("graph-projection", rep)


def check_rigr(seed: int = 0, grid: int = 8, channels: int = 8,
               nodes: int = 4) -> ModuleReport:
    from .region_graph import RigrParams
    rng = np.random.default_rng(seed)
    with precision("double"):
        fc = param(rng.standard_normal((grid * grid, channels)))
        fe = param(rng.standard_normal((grid * grid, channels)))
        p = RigrParams.create(channels, nodes, rng)
        p.cgi.mix.data[...] = 0.5  # exercise the attention path, not just identity

        def loss_fn():
            region, edge = rigr_forward(fc, fe, p)
            return O.add(O.reduce_mean(O.mul(region, region)),
                         O.reduce_mean(O.mul(edge, edge)))

        params = {"fc": fc, "fe": fe}
        params.update(p.tensors("rigr"))
        rep = check_gradients(loss_fn, params, rng=np.random.default_rng(seed + 1))
    return _report("rigr", rep)


def check_ecgr(seed: int = 0, grid: int = 8, channels: int = 8, support: int = 4,
               k_nn: int = 2) -> ModuleReport:
    rng = np.random.default_rng(seed)
    with precision("double"):
        fc = param(rng.standard_normal((grid * grid, channels)))
        fe = param(rng.standard_normal((grid * grid, channels)))
        p = EcgrParams.create(channels, support, rng)

        def loss_fn():
            region, edge = ecgr_forward(fc, fe, p, k_nn)
            return O.add(O.reduce_mean(O.mul(region, region)),
                         O.reduce_mean(O.mul(edge.values, edge.values)))

        params = {"fc": fc, "fe": fe}
        params.update(p.tensors("ecgr"))
        rep = check_gradients(loss_fn, params, rng=np.random.default_rng(seed + 1))
    return _report("ecgr", rep)


def check_network(seed: int = 0, t: int = 1, grid: int = 8, channels: int = 8,
                  nodes: int = 4, support: int = 4, k_nn: int = 2,
                  max_coords: int = 6) -> ModuleReport:
    size = grid * 4
    cfg = RunConfig(K=nodes, z=support, k_nn=k_nn, t=t, C=channels, H=size, W=size)
    rng = np.random.default_rng(seed)
    with precision("double"):
        model = MglModel(cfg, rng=rng)
        image = tensor(rng.random((3, size, size)))
        mask = (rng.random((size, size)) > 0.6).astype(float)
        edge = (rng.random((size, size)) > 0.85).astype(float)

        def loss_fn():
            res = model.forward(image)
            return mgl_loss(res.region_prob, res.edge_prob, mask, edge)

        rep = check_gradients(loss_fn, model.named_parameters(),
                              max_coords=max_coords, rng=np.random.default_rng(seed + 1))
    return _report(f"network-t{t}", rep)


def run_all(seed: int = 0, max_coords: int = 6) -> list[ModuleReport]:
    return [
        check_primitives(seed),
        check_projection(seed),
        check_rigr(seed),
        check_ecgr(seed),
        check_network(seed, t=1, max_coords=max_coords),
        check_network(seed, t=2, max_coords=max_coords),
    ]
