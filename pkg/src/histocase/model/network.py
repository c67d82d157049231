"""Pre-activation residual classifier for fused multi-magnification cases.

Parameters are a flat dict of named float64 arrays (``stem.w``,
``s0u0.bn1.g`` ...), which keeps the optimizer, the finite-difference
gradient checks and checkpointing trivial.  BatchNorm running statistics
live in a parallel dict and are never touched by the optimizer; forward
passes are pure and return updated running statistics for the caller to
commit, so repeated evaluations at fixed parameters are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from histocase.casegen import Case
from histocase.errors import NonFiniteActivation, ShapeMismatch
from histocase.model import layers
from histocase.model.config import NetworkConfig, UnitPlan
from histocase.seeds import make_rng


@dataclass
class Parameters:
    config: NetworkConfig
    weights: dict[str, np.ndarray]
    running: dict[str, np.ndarray]

    def copy(self) -> "Parameters":
        return Parameters(
            config=self.config,
            weights={k: v.copy() for k, v in self.weights.items()},
            running={k: v.copy() for k, v in self.running.items()},
        )


@dataclass
class ForwardResult:
    logits: np.ndarray
    cache: list | None
    new_running: dict[str, np.ndarray]


@dataclass
class StepAux:
    """Side products of a training step: BN running-statistic updates to
    commit and the batch logits (for cheap accuracy tracking)."""

    new_running: dict[str, np.ndarray]
    logits: np.ndarray


def _he_conv(rng, f, c, kh, kw):
    fan_in = c * kh * kw
    return rng.standard_normal((kh, kw, c, f)) * np.sqrt(2.0 / fan_in)


def init_parameters(config: NetworkConfig, seed: int) -> Parameters:
    """He fan-in initialization for conv/FC weights, gamma=1, beta=0,
    running mean 0 / variance 1."""
    rng = make_rng(seed, "init")
    w: dict[str, np.ndarray] = {}
    r: dict[str, np.ndarray] = {}
    c_in = config.input_shape[2]
    stem = config.effective_stem_width
    w["stem.w"] = _he_conv(rng, stem, c_in, 3, 3)
    if config.conv_bias:
        w["stem.b"] = np.zeros(stem)
    for plan in config.unit_plans():
        name = plan.name
        w[f"{name}.bn1.g"] = np.ones(plan.in_channels)
        w[f"{name}.bn1.b"] = np.zeros(plan.in_channels)
        r[f"{name}.bn1.m"] = np.zeros(plan.in_channels)
        r[f"{name}.bn1.v"] = np.ones(plan.in_channels)
        w[f"{name}.c1.w"] = _he_conv(rng, plan.out_channels, plan.in_channels, 3, 3)
        w[f"{name}.bn2.g"] = np.ones(plan.out_channels)
        w[f"{name}.bn2.b"] = np.zeros(plan.out_channels)
        r[f"{name}.bn2.m"] = np.zeros(plan.out_channels)
        r[f"{name}.bn2.v"] = np.ones(plan.out_channels)
        w[f"{name}.c2.w"] = _he_conv(rng, plan.out_channels, plan.out_channels, 3, 3)
        if config.conv_bias:
            w[f"{name}.c1.b"] = np.zeros(plan.out_channels)
            w[f"{name}.c2.b"] = np.zeros(plan.out_channels)
        if plan.has_projection:
            w[f"{name}.proj.w"] = _he_conv(rng, plan.out_channels, plan.in_channels, 1, 1)
    d = config.final_width()
    w["fc.w"] = rng.standard_normal((d, config.num_classes)) * np.sqrt(2.0 / d)
    w["fc.b"] = np.zeros(config.num_classes)
    return Parameters(config=config, weights=w, running=r)


def _unit_forward(x, name, plan: UnitPlan, weights, running, mode, eps, momentum):
    """BN-ReLU-Conv-BN-ReLU-Conv residual unit.

    The projection shortcut (1x1 conv, unit stride matching conv1's) is
    applied to the pre-activated input; the identity shortcut bypasses
    everything.
    """
    w = weights
    bn1_y, bn1_cache, m1, v1 = layers.batchnorm_forward(
        x, w[f"{name}.bn1.g"], w[f"{name}.bn1.b"],
        running[f"{name}.bn1.m"], running[f"{name}.bn1.v"], mode, eps, momentum)
    a1, relu1_mask = layers.relu_forward(bn1_y)
    c1_y, c1_cache = layers.conv2d_forward(
        a1, w[f"{name}.c1.w"], w.get(f"{name}.c1.b"), stride=plan.stride, pad=1)
    bn2_y, bn2_cache, m2, v2 = layers.batchnorm_forward(
        c1_y, w[f"{name}.bn2.g"], w[f"{name}.bn2.b"],
        running[f"{name}.bn2.m"], running[f"{name}.bn2.v"], mode, eps, momentum)
    a2, relu2_mask = layers.relu_forward(bn2_y)
    c2_y, c2_cache = layers.conv2d_forward(
        a2, w[f"{name}.c2.w"], w.get(f"{name}.c2.b"), stride=1, pad=1)
    if plan.has_projection:
        shortcut, proj_cache = layers.conv2d_forward(
            a1, w[f"{name}.proj.w"], None, stride=plan.stride, pad=0)
    else:
        shortcut, proj_cache = x, None
    out = c2_y + shortcut
    new_running = {f"{name}.bn1.m": m1, f"{name}.bn1.v": v1,
                   f"{name}.bn2.m": m2, f"{name}.bn2.v": v2}
    cache = (plan, bn1_cache, relu1_mask, c1_cache, bn2_cache, relu2_mask,
             c2_cache, proj_cache)
    return out, cache, new_running


def _unit_backward(dout, name, cache, grads):
    plan, bn1_cache, relu1_mask, c1_cache, bn2_cache, relu2_mask, \
        c2_cache, proj_cache = cache
    da2, dc2w, dc2b = layers.conv2d_backward(dout, c2_cache)
    grads[f"{name}.c2.w"] = dc2w
    if dc2b is not None:
        grads[f"{name}.c2.b"] = dc2b
    dbn2_y = layers.relu_backward(da2, relu2_mask)
    dc1_y, dg2, db2 = layers.batchnorm_backward(dbn2_y, bn2_cache)
    grads[f"{name}.bn2.g"] = dg2
    grads[f"{name}.bn2.b"] = db2
    da1, dc1w, dc1b = layers.conv2d_backward(dc1_y, c1_cache)
    grads[f"{name}.c1.w"] = dc1w
    if dc1b is not None:
        grads[f"{name}.c1.b"] = dc1b
    if plan.has_projection:
        da1_proj, dprojw, _ = layers.conv2d_backward(dout, proj_cache)
        grads[f"{name}.proj.w"] = dprojw
        da1 = da1 + da1_proj
    dbn1_y = layers.relu_backward(da1, relu1_mask)
    dx, dg1, db1 = layers.batchnorm_backward(dbn1_y, bn1_cache)
    grads[f"{name}.bn1.g"] = dg1
    grads[f"{name}.bn1.b"] = db1
    if not plan.has_projection:
        dx = dx + dout
    return dx


def _as_batch(batch, config: NetworkConfig) -> np.ndarray:
    x = np.stack(batch) if isinstance(batch, (list, tuple)) else np.asarray(batch)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or tuple(x.shape[1:]) != tuple(config.input_shape):
        raise ShapeMismatch(
            f"batch shape {x.shape} does not match input_shape "
            f"{config.input_shape} (expected N x H x W x C)"
        )
    return np.ascontiguousarray(x, dtype=np.float64)


def forward(params: Parameters, batch, mode: str = "eval",
            need_cache: bool = False) -> ForwardResult:
    """Run the network on a batch of channels-last case tensors.

    Train mode normalizes with batch statistics and returns the updated
    running statistics in ``new_running`` (the caller commits them); eval
    mode uses the stored running statistics and is fully deterministic.
    """
    cfg = params.config
    w, running = params.weights, params.running
    x = _as_batch(batch, cfg)
    caches = []
    new_running: dict[str, np.ndarray] = {}

    stem_y, stem_cache = layers.conv2d_forward(
        x, w["stem.w"], w.get("stem.b"), stride=1, pad=1)
    caches.append(("stem", stem_cache))
    h = stem_y
    for plan in cfg.unit_plans():
        h, unit_cache, unit_running = _unit_forward(
            h, plan.name, plan, w, running, mode, cfg.bn_eps, cfg.bn_momentum)
        caches.append((plan.name, unit_cache))
        new_running.update(unit_running)
    pooled, pool_cache = layers.global_avg_pool_forward(h)
    caches.append(("pool", pool_cache))
    logits, fc_cache = layers.dense_forward(pooled, w["fc.w"], w["fc.b"])
    caches.append(("fc", fc_cache))

    if not np.all(np.isfinite(logits)):
        raise NonFiniteActivation("non-finite logits detected")
    return ForwardResult(
        logits=logits,
        cache=caches if need_cache else None,
        new_running=new_running if mode == "train" else {},
    )


def loss_and_grad(params: Parameters, batch, labels):
    """Mean softmax cross-entropy and exact analytic gradients.

    Returns ``(loss, grads, aux)`` where ``grads`` has one entry per
    trainable weight and ``aux`` carries the train-mode BatchNorm
    statistics for the caller to commit plus the batch logits.
    """
    labels = np.asarray(labels, dtype=np.int64)
    result = forward(params, batch, mode="train", need_cache=True)
    loss, dlogits = layers.cross_entropy(result.logits, labels)
    grads: dict[str, np.ndarray] = {}

    caches = dict(result.cache)
    d, dfc_w, dfc_b = layers.dense_backward(dlogits, caches["fc"])
    grads["fc.w"] = dfc_w
    grads["fc.b"] = dfc_b
    d = layers.global_avg_pool_backward(d, caches["pool"])
    for plan in reversed(params.config.unit_plans()):
        d = _unit_backward(d, plan.name, caches[plan.name], grads)
    _, dstem_w, dstem_b = layers.conv2d_backward(d, caches["stem"])
    grads["stem.w"] = dstem_w
    if dstem_b is not None:
        grads["stem.b"] = dstem_b
    return loss, grads, StepAux(new_running=result.new_running, logits=result.logits)


def predict(params: Parameters, batch):
    """Eval-mode prediction: (class indices, class probabilities).

    Ties in the softmax break toward the lower class index (argmax picks
    the first maximum).
    """
    result = forward(params, batch, mode="eval")
    probs = layers.softmax(result.logits)
    indices = np.argmax(probs, axis=1)
    return indices, probs


def assemble_case_tensor(case: Case, image_store) -> np.ndarray:
    """Fuse a case's images into one (H, W, 3*M) tensor.

    Channel block [3i, 3i+3) holds the image at the i-th magnification in
    ascending order.  All images must share the same height and width.
    """
    arrays = [image_store.get(image_id) for image_id in case.images]
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ShapeMismatch(f"case {case.images}: mixed image shapes {sorted(shapes)}")
    (shape,) = shapes
    if len(shape) != 3 or shape[2] != 3:
        raise ShapeMismatch(f"case images must be H x W x 3, got {shape}")
    return np.concatenate(arrays, axis=2)


def assemble_batch(cases: Sequence[Case], image_store) -> np.ndarray:
    return np.stack([assemble_case_tensor(c, image_store) for c in cases])
