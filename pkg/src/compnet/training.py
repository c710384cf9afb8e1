"""Stochastic-gradient training of composite networks.

Only combine weights and unfrozen component blocks move; frozen blocks
are never touched.  ``trainable_nodes`` narrows training further to an
explicit set of node ids, which is how the construction algorithms
train just the newly added step of a growing network.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (
    Activate,
    Combine,
    Component,
    ComponentRef,
    CompositeNetwork,
    Dataset,
    EvaluationError,
    loss_l2,
)


class TrainingError(RuntimeError):
    pass


class GradientError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    batch_size: int = 32
    max_epochs: int = 500
    seed: int = 0
    early_stop_patience: int = 50
    grad_clip: float | None = None
    momentum: float = 0.9
    lr_schedule: str = "cosine"  # or "constant"

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")
        if self.lr_schedule not in ("cosine", "constant"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")

    def lr_at(self, epoch: int) -> float:
        if self.lr_schedule == "constant":
            return self.learning_rate
        return 0.5 * self.learning_rate * (1.0 + np.cos(np.pi * epoch / self.max_epochs))


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    test_loss: float


@dataclass
class TrainResult:
    net: CompositeNetwork
    components: dict[str, Component]
    history: list[EpochStats] = field(default_factory=list)


# -- parameter layout ------------------------------------------------------


@dataclass
class ParamLayout:
    combine_ids: list[str]
    blocks: list[tuple[str, int]]  # (component id, layer index)
    slices: dict  # name -> slice into the flat vector
    size: int
    names: list[str]


def parameter_layout(
    net: CompositeNetwork,
    components: dict[str, Component],
    trainable_nodes: set[str] | None = None,
) -> ParamLayout:
    combine_ids: list[str] = []
    blocks: list[tuple[str, int]] = []
    seen_components: set[str] = set()
    for node in net.nodes:
        if isinstance(node, Combine):
            if trainable_nodes is None or node.id in trainable_nodes:
                combine_ids.append(node.id)
        elif isinstance(node, ComponentRef):
            if trainable_nodes is not None and node.id not in trainable_nodes:
                continue
            if node.component in seen_components:
                continue
            seen_components.add(node.component)
            comp = components[node.component]
            for li, frz in enumerate(comp.frozen):
                if not frz:
                    blocks.append((node.component, li))
    slices = {}
    names = []
    offset = 0
    for cid in combine_ids:
        n = net.node(cid).theta.size
        name = f"combine {cid}.theta"
        slices[name] = slice(offset, offset + n)
        names.append(name)
        offset += n
    for comp_id, li in blocks:
        n = components[comp_id].layers[li].size
        name = f"component {comp_id} layer {li}"
        slices[name] = slice(offset, offset + n)
        names.append(name)
        offset += n
    return ParamLayout(combine_ids, blocks, slices, offset, names)


def get_parameters(net, components, layout: ParamLayout) -> np.ndarray:
    out = np.empty(layout.size)
    for cid in layout.combine_ids:
        s = layout.slices[f"combine {cid}.theta"]
        out[s] = net.node(cid).theta
    for comp_id, li in layout.blocks:
        s = layout.slices[f"component {comp_id} layer {li}"]
        layer = components[comp_id].layers[li]
        out[s] = np.concatenate([layer.weights.ravel(), layer.bias])
    return out


def set_parameters(net, components, layout: ParamLayout, flat: np.ndarray) -> None:
    flat = np.asarray(flat, dtype=float)
    if flat.shape != (layout.size,):
        raise GradientError(f"expected flat vector of size {layout.size}")
    for cid in layout.combine_ids:
        s = layout.slices[f"combine {cid}.theta"]
        net.node(cid).theta[:] = flat[s]
    for comp_id, li in layout.blocks:
        s = layout.slices[f"component {comp_id} layer {li}"]
        layer = components[comp_id].layers[li]
        w = layer.weights.size
        layer.weights[...] = flat[s][:w].reshape(layer.weights.shape)
        layer.bias[...] = flat[s][w:]


def _forward_with_traces(net, components, inputs):
    values = {}
    traces = {}
    for node in net.nodes:
        if isinstance(node, ComponentRef):
            comp = components[node.component]
            v, tr = comp.forward_trace(inputs)
            traces[node.id] = tr
        elif isinstance(node, Combine):
            v = np.full((inputs.shape[0], 1), node.theta[0])
            for w, child in zip(node.theta[1:], node.children):
                v = v + w * values[child]
        else:
            v = node.activation.value(values[node.child])
        values[node.id] = v
    return values, traces


def gradients(
    net: CompositeNetwork,
    components: dict[str, Component],
    inputs: np.ndarray,
    labels: np.ndarray,
    trainable_nodes: set[str] | None = None,
    layout: ParamLayout | None = None,
) -> np.ndarray:
    """Exact gradient of the batch mean squared error, flattened.

    The flat order matches ``parameter_layout``: combine thetas in
    postorder, then unfrozen component blocks in first-reference order.
    """
    if layout is None:
        layout = parameter_layout(net, components, trainable_nodes)
    inputs = np.asarray(inputs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if labels.ndim == 1:
        labels = labels[:, None]
    batch = inputs.shape[0]
    if batch == 0:
        raise GradientError("empty batch")

    values, traces = _forward_with_traces(net, components, inputs)
    pred = values[net.root]
    if pred.shape != labels.shape:
        raise GradientError(f"prediction shape {pred.shape} != label shape {labels.shape}")

    flat = np.zeros(layout.size)
    block_set = set(layout.blocks)
    combine_set = set(layout.combine_ids)
    adjoint: dict[str, np.ndarray] = {net.root: 2.0 * (pred - labels) / batch}

    for node in reversed(net.nodes):
        a = adjoint.get(node.id)
        if a is None:
            continue
        if isinstance(node, Combine):
            if node.id in combine_set:
                s = layout.slices[f"combine {node.id}.theta"]
                g = flat[s]
                g[0] += a.sum()
                for j, child in enumerate(node.children):
                    g[j + 1] += float((a * values[child]).sum())
            for w, child in zip(node.theta[1:], node.children):
                ca = w * a
                cw = values[child].shape[1]
                if cw != ca.shape[1]:
                    ca = ca.sum(axis=1, keepdims=True)
                _accumulate(adjoint, child, ca)
        elif isinstance(node, Activate):
            deriv = node.activation.derivative(values[node.child])
            _accumulate(adjoint, node.child, a * deriv)
        else:  # ComponentRef
            comp = components[node.component]
            if not any(b[0] == node.component for b in layout.blocks):
                continue
            d = a
            for li in range(len(comp.layers) - 1, -1, -1):
                layer = comp.layers[li]
                xin, pre = traces[node.id][li]
                dpre = d * layer.activation.derivative(pre)
                if (node.component, li) in block_set:
                    s = layout.slices[f"component {node.component} layer {li}"]
                    wsize = layer.weights.size
                    flat[s][:wsize] += (xin.T @ dpre).ravel()
                    flat[s][wsize:] += dpre.sum(axis=0)
                if li > 0:
                    d = dpre @ layer.weights.T

    if not np.all(np.isfinite(flat)):
        bad = [name for name in layout.names if not np.all(np.isfinite(flat[layout.slices[name]]))]
        raise GradientError(f"non-finite gradient entries at: {', '.join(bad)}")
    return flat


def _accumulate(adjoint: dict, key: str, value: np.ndarray) -> None:
    if key in adjoint:
        adjoint[key] = adjoint[key] + value
    else:
        adjoint[key] = value


# -- training loop ---------------------------------------------------------


def train(
    net: CompositeNetwork,
    components: dict[str, Component],
    data: Dataset,
    cfg: TrainConfig,
    trainable_nodes: set[str] | None = None,
) -> TrainResult:
    """SGD on the training split; returns a trained copy.

    Frozen blocks of the input are never modified (the returned copy
    carries bit-identical frozen weights).
    """
    net = net.copy()
    components = {k: c.copy() for k, c in components.items()}
    layout = parameter_layout(net, components, trainable_nodes)
    if layout.size == 0:
        raise TrainingError("network has no trainable parameters")

    n_train = data.train_idx.size
    if n_train == 0:
        raise TrainingError("training split is empty")
    if cfg.batch_size > n_train:
        raise TrainingError(f"batch_size {cfg.batch_size} exceeds {n_train} training rows")
    x_train = data.inputs[data.train_idx]
    y_train = data.labels[data.train_idx]

    rng = np.random.default_rng(cfg.seed)
    velocity = np.zeros(layout.size)
    history: list[EpochStats] = []
    best = np.inf
    stale = 0

    for epoch in range(cfg.max_epochs):
        lr = cfg.lr_at(epoch)
        perm = rng.permutation(n_train)
        for start in range(0, n_train, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            grad = gradients(net, components, x_train[idx], y_train[idx], layout=layout)
            if cfg.grad_clip is not None:
                norm = float(np.linalg.norm(grad))
                if norm > cfg.grad_clip:
                    grad = grad * (cfg.grad_clip / norm)
            velocity = cfg.momentum * velocity - lr * grad
            if lr != 0.0 or cfg.momentum != 0.0:
                set_parameters(
                    net, components, layout, get_parameters(net, components, layout) + velocity
                )
        try:
            train_loss = loss_l2(net, components, data, "train")
            test_loss = (
                loss_l2(net, components, data, "test") if data.test_idx.size else float("nan")
            )
        except EvaluationError as exc:
            raise TrainingError(f"diverged at epoch {epoch}: {exc}") from exc
        if not np.isfinite(train_loss):
            raise TrainingError(f"diverged at epoch {epoch}: loss is not finite")
        history.append(EpochStats(epoch, train_loss, test_loss))
        if train_loss < best - 1e-12:
            best = train_loss
            stale = 0
        else:
            stale += 1
            if cfg.early_stop_patience > 0 and stale >= cfg.early_stop_patience:
                break

    return TrainResult(net=net, components=components, history=history)


def history_csv(history: list[EpochStats]) -> str:
    lines = ["epoch,train_loss,test_loss"]
    for h in history:
        lines.append(f"{h.epoch},{h.train_loss!r},{h.test_loss!r}")
    return "\n".join(lines) + "\n"
