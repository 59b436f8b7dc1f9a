"""The full mutual-graph-learning network.

A small shared conv trunk splits an image into region and edge features; the
two graph-reasoning blocks refine them (optionally over several weight-shared
recurrent stages); 1x1 heads plus bilinear upsampling of the logits produce
full-resolution probability maps for the camouflage mask and its edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autograd import ops as O
from .autograd.tensor import Tensor, param, tensor
from .config import RunConfig
from .edge_graph import EcgrParams, EdgeMap, ecgr_forward, edge_classify
from .errors import DimensionError
from .region_graph import RigrParams, rigr_forward


@dataclass
class ConvLayer:
    w: Tensor  # (out, in, kh, kw)
    b: Tensor  # (out,)

    @staticmethod
    def create(c_in: int, c_out: int, ksize: int, rng) -> "ConvLayer":
        scale = math.sqrt(2.0 / (c_in * ksize * ksize))
        return ConvLayer(w=param(rng.standard_normal((c_out, c_in, ksize, ksize)) * scale),
                         b=param(np.zeros(c_out)))

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}


@dataclass
class MtfeParams:
    """Shared trunk (downsample schedule 2-2-1-1) with a region head off the
    last stage and an edge head fusing the side outputs of stages 2-4.

    Spatial reduction uses the bilinear down-sampling layer rather than strided
    convolution: a 3x3 stride-2 pad-1 conv has no integral output size on even
    inputs, which the conv contract rejects.
    """

    stages: list[ConvLayer]
    edge_fuse: ConvLayer  # 1x1 over concatenated side outputs
    region_out: ConvLayer  # 1x1 from the last stage

    STRIDES = (2, 2, 1, 1)

    @staticmethod
    def widths(c: int) -> tuple[int, int, int, int]:
        return (max(c // 4, 1), max(c // 2, 1), c, c)

    @staticmethod
    def create(c: int, rng) -> "MtfeParams":
        w = MtfeParams.widths(c)
        chans = (3,) + w
        stages = [ConvLayer.create(chans[i], chans[i + 1], 3, rng) for i in range(4)]
        side_total = w[1] + w[2] + w[3]
        return MtfeParams(stages=stages,
                          edge_fuse=ConvLayer.create(side_total, c, 1, rng),
                          region_out=ConvLayer.create(c, c, 1, rng))

    def tensors(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for i, layer in enumerate(self.stages, start=1):
            out.update(layer.tensors(f"{prefix}.stage{i}"))
        out.update(self.edge_fuse.tensors(f"{prefix}.edge_fuse"))
        out.update(self.region_out.tensors(f"{prefix}.region_out"))
        return out


def mtfe_forward(image: Tensor, p: MtfeParams) -> tuple[Tensor, Tensor]:
    """Extract (C, H/4, W/4) region and edge feature maps from a (3, H, W) image."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise DimensionError(f"mtfe_forward expects a (3, H, W) image, got {image.shape}")
    _, h, w = image.shape
    if h % 4 or w % 4:
        raise DimensionError(f"mtfe_forward: input size {h}x{w} not divisible by 4")
    x = image
    sides = []
    for layer, stride in zip(p.stages, MtfeParams.STRIDES):
        x = O.relu(O.conv2d(x, layer.w, stride=1, pad=1, bias=layer.b))
        if stride > 1:
            x = O.bilinear_resize(x, x.shape[1] // stride, x.shape[2] // stride)
        sides.append(x)
    ho, wo = h // 4, w // 4
    aligned = [O.bilinear_resize(s, ho, wo) for s in sides[1:]]
    edge = O.conv2d(O.concat(aligned, axis=0), p.edge_fuse.w, bias=p.edge_fuse.b)
    region = O.conv2d(sides[-1], p.region_out.w, bias=p.region_out.b)
    return region, edge


@dataclass
class Prediction:
    """Full-resolution probability maps; per-stage maps retained when requested."""

    region: np.ndarray  # (H, W) in [0, 1]
    edge: np.ndarray    # (H, W) in [0, 1]
    stages: list[tuple[np.ndarray, np.ndarray]] | None = None


@dataclass
class ForwardResult:
    region_prob: Tensor  # (1, H, W)
    edge_prob: Tensor    # (1, H, W)
    stage_probs: list[tuple[Tensor, Tensor]] = field(default_factory=list)


def _flatten_map(x: Tensor) -> Tensor:
    """(C, h, w) -> (h*w, C)"""
    c, h, w = x.shape
    return O.transpose(O.reshape(x, (c, h * w)))


def _unflatten_column(x: Tensor, h: int, w: int) -> Tensor:
    """(h*w, 1) -> (1, h, w)"""
    return O.reshape(O.transpose(x), (1, h, w))


class MglModel:
    """Parameters plus forward logic for every variant (full / rigr / fcn)."""

    def __init__(self, cfg: RunConfig, rng=None):
        cfg.validate()
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.K = cfg.K
        self.z = cfg.z
        self.k_nn = cfg.k_nn
        self.t = cfg.t
        self.C = cfg.C
        self.variant = cfg.variant
        self.stage_weights = cfg.stage_weights
        n_sets = cfg.t if cfg.stage_weights else 1
        self.mtfe = MtfeParams.create(cfg.C, rng)
        self.rigr = [RigrParams.create(cfg.C, cfg.K, rng) for _ in range(n_sets)]
        self.ecgr = [EcgrParams.create(cfg.C, cfg.z, rng) for _ in range(n_sets)]
        self.region_head_w = param(rng.standard_normal((cfg.C, 1)) / math.sqrt(cfg.C))
        self.region_head_b = param(np.zeros(1))

    def stage_params(self, stage: int) -> tuple[RigrParams, EcgrParams]:
        idx = stage if self.stage_weights else 0
        return self.rigr[idx], self.ecgr[idx]

    def named_parameters(self) -> dict[str, Tensor]:
        out = dict(self.mtfe.tensors("mtfe"))
        for i, rp in enumerate(self.rigr):
            out.update(rp.tensors(f"rigr{i}" if self.stage_weights else "rigr"))
        for i, ep in enumerate(self.ecgr):
            out.update(ep.tensors(f"ecgr{i}" if self.stage_weights else "ecgr"))
        out["head.region_w"] = self.region_head_w
        out["head.region_b"] = self.region_head_b
        return out

    def zero_grads(self) -> None:
        for p in self.named_parameters().values():
            p.grad = None

    def clamp_scale_floors(self) -> None:
        for rp in self.rigr:
            for proj in rp.projectors():
                proj.clamp_scale_floor()
        for ep in self.ecgr:
            for proj in ep.projectors():
                proj.clamp_scale_floor()

    def zero_prefix(self, prefix: str) -> None:
        """Zero every parameter whose name starts with the prefix (ablation hook)."""
        for name, p in self.named_parameters().items():
            if name.startswith(prefix):
                p.data[...] = 0.0

    # ---- forward -------------------------------------------------------

    def forward(self, image: Tensor, keep_stages: bool = False) -> ForwardResult:
        _, h_full, w_full = image.shape
        region_map, edge_map = mtfe_forward(image, self.mtfe)
        _, h, w = region_map.shape
        region = _flatten_map(region_map)
        edge_feats = _flatten_map(edge_map)

        result = ForwardResult(region_prob=None, edge_prob=None)
        edge_out: EdgeMap | None = None

        if self.variant == "fcn":
            edge_out = edge_classify(edge_feats, self.ecgr[0].edge_head_w,
                                     self.ecgr[0].edge_head_b)
        else:
            for stage in range(self.t):
                rp, ep = self.stage_params(stage)
                region_hat, edge_feats = rigr_forward(region, edge_feats, rp)
                if self.variant == "rigr":
                    region = region_hat
                    edge_out = edge_classify(edge_feats, ep.edge_head_w, ep.edge_head_b)
                else:
                    region, edge_out = ecgr_forward(region_hat, edge_feats, ep, self.k_nn)
                if keep_stages:
                    result.stage_probs.append(
                        self._heads(region, edge_out, h, w, h_full, w_full))

        result.region_prob, result.edge_prob = self._heads(
            region, edge_out, h, w, h_full, w_full)
        return result

    def _heads(self, region_feats: Tensor, edge_out: EdgeMap, h: int, w: int,
               h_full: int, w_full: int) -> tuple[Tensor, Tensor]:
        region_logits = O.bias_rows(O.matmul(region_feats, self.region_head_w),
                                    self.region_head_b)
        region_prob = O.sigmoid(
            O.bilinear_resize(_unflatten_column(region_logits, h, w), h_full, w_full))
        edge_prob = O.sigmoid(
            O.bilinear_resize(_unflatten_column(edge_out.logits, h, w), h_full, w_full))
        return region_prob, edge_prob

    def predict(self, image, keep_stages: bool = False) -> Prediction:
        """Inference on a (3, H, W) array in [0, 1]; no tape, detached maps."""
        x = image if isinstance(image, Tensor) else tensor(np.asarray(image))
        res = self.forward(x, keep_stages=keep_stages)
        stages = None
        if keep_stages:
            stages = [(c.data[0].copy(), e.data[0].copy()) for c, e in res.stage_probs]
        return Prediction(region=res.region_prob.data[0].copy(),
                          edge=res.edge_prob.data[0].copy(), stages=stages)


def mgl_loss(region_prob: Tensor, edge_prob: Tensor, mask, edge_gt,
             gamma: float = 1.0) -> Tensor:
    """Joint cross-entropy: BCE(region, mask) + gamma * BCE(edge, edge labels)."""
    mask = np.asarray(mask)
    edge_gt = np.asarray(edge_gt)
    if not np.all((mask == 0) | (mask == 1)) or not np.all((edge_gt == 0) | (edge_gt == 1)):
        raise ValueError("mgl_loss: ground-truth maps must be binary")
    region_term = O.bce_mean(region_prob, mask.reshape(region_prob.shape))
    edge_term = O.bce_mean(edge_prob, edge_gt.reshape(edge_prob.shape))
    return O.add(region_term, O.scale(edge_term, float(gamma)))


def build_model(cfg: RunConfig, seed: int | None = None) -> MglModel:
    return MglModel(cfg, rng=np.random.default_rng(cfg.seed if seed is None else seed))
