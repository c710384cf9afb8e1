"""Core model: components, composite-network DAGs, evaluation, counting.

A component is a small feedforward net whose parameter blocks can be
frozen (pre-trained) or trainable (non-instantiated).  A composite
network is a rooted DAG given as a postorder node list; nodes either
reference a component, combine children linearly with a bias weight,
or apply an activation elementwise.

Networks and registries are treated as immutable after construction;
evaluation is read-only.  Training code works on copies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .activations import Activation, LINEAR, TANH

KIND_PRETRAINED = "pre-trained"
KIND_OPEN = "non-instantiated"
ROLE_BASE = "base"
ROLE_AUX = "auxiliary"


class ModelError(ValueError):
    pass


class EvaluationError(ModelError):
    """Evaluation failure, tagged with the offending node id."""

    def __init__(self, message: str, node_id: str | None = None):
        super().__init__(message if node_id is None else f"node {node_id!r}: {message}")
        self.node_id = node_id


@dataclass
class AffineLayer:
    """One dense layer: x @ weights + bias, then the activation."""

    weights: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)
    activation: Activation = LINEAR

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise ModelError("layer weights must be (fan_in, fan_out) with matching bias")

    @property
    def size(self) -> int:
        return self.weights.size + self.bias.size

    def copy(self) -> "AffineLayer":
        return AffineLayer(self.weights.copy(), self.bias.copy(), self.activation)


class Component:
    """A neural-network unit with a role, a kind, and per-block frozen flags.

    ``input_columns`` selects which feature columns of the shared input
    row the component consumes; None means all columns.
    """

    def __init__(
        self,
        id: str,
        kind: str,
        role: str,
        layers: list[AffineLayer],
        frozen: list[bool] | None = None,
        input_columns: np.ndarray | None = None,
    ):
        if kind not in (KIND_PRETRAINED, KIND_OPEN):
            raise ModelError(f"unknown component kind {kind!r}")
        if role not in (ROLE_BASE, ROLE_AUX):
            raise ModelError(f"unknown component role {role!r}")
        if not layers:
            raise ModelError("component needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.weights.shape[1] != b.weights.shape[0]:
                raise ModelError(f"component {id!r}: layer widths do not chain")
        if frozen is None:
            frozen = [kind == KIND_PRETRAINED] * len(layers)
        if len(frozen) != len(layers):
            raise ModelError("one frozen flag per layer block required")
        if kind == KIND_PRETRAINED and not all(frozen):
            raise ModelError(f"pre-trained component {id!r} must have every block frozen")
        if kind == KIND_OPEN and all(frozen):
            raise ModelError(f"non-instantiated component {id!r} needs a trainable block")
        self.id = id
        self.kind = kind
        self.role = role
        self.layers = layers
        self.frozen = list(frozen)
        self.input_columns = None if input_columns is None else np.asarray(input_columns, dtype=int)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[1]

    def select_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2:
            raise EvaluationError(f"component {self.id!r}: input must be 2-D (rows, features)")
        sel = x if self.input_columns is None else x[:, self.input_columns]
        if sel.shape[1] != self.input_dim:
            raise EvaluationError(
                f"component {self.id!r}: got {sel.shape[1]} input columns, expected {self.input_dim}"
            )
        return sel

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = self.select_input(x)
        for layer in self.layers:
            h = layer.activation.value(h @ layer.weights + layer.bias)
        return h

    def forward_trace(self, x: np.ndarray):
        """Forward pass keeping per-layer inputs and pre-activations for backprop."""
        h = self.select_input(x)
        trace = []
        for layer in self.layers:
            pre = h @ layer.weights + layer.bias
            trace.append((h, pre))
            h = layer.activation.value(pre)
        return h, trace

    def parameter_count(self) -> int:
        return sum(layer.size for layer in self.layers)

    def trainable_parameter_count(self) -> int:
        return sum(layer.size for layer, frz in zip(self.layers, self.frozen) if not frz)

    def copy(self) -> "Component":
        return Component(
            self.id,
            self.kind,
            self.role,
            [layer.copy() for layer in self.layers],
            list(self.frozen),
            None if self.input_columns is None else self.input_columns.copy(),
        )

    def opened_copy(self) -> "Component":
        """Copy with every block trainable (same id, same weights)."""
        out = self.copy()
        out.kind = KIND_OPEN
        out.frozen = [False] * len(out.layers)
        return out

    @classmethod
    def mlp(
        cls,
        id: str,
        dims: list[int],
        rng: np.random.Generator,
        kind: str = KIND_PRETRAINED,
        role: str = ROLE_BASE,
        hidden_activation: Activation = TANH,
        output_activation: Activation = LINEAR,
        input_columns=None,
    ) -> "Component":
        """Fresh MLP with uniform(-a, a), a = sqrt(6/(fan_in+fan_out)) blocks."""
        layers = []
        for i, (fi, fo) in enumerate(zip(dims, dims[1:])):
            a = np.sqrt(6.0 / (fi + fo))
            act = output_activation if i == len(dims) - 2 else hidden_activation
            layers.append(AffineLayer(rng.uniform(-a, a, size=(fi, fo)), np.zeros(fo), act))
        return cls(id, kind, role, layers, input_columns=input_columns)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "role": self.role,
            "frozen": [bool(f) for f in self.frozen],
            "input_columns": None
            if self.input_columns is None
            else [int(c) for c in self.input_columns],
            "layers": [
                {
                    "weights": [float(v) for v in layer.weights.ravel()],
                    "shape": [int(s) for s in layer.weights.shape],
                    "bias": [float(v) for v in layer.bias],
                    "activation": layer.activation.to_dict(),
                }
                for layer in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Component":
        layers = []
        for ld in d["layers"]:
            w = np.asarray(ld["weights"], dtype=float).reshape(ld["shape"])
            layers.append(AffineLayer(w, np.asarray(ld["bias"], dtype=float), Activation.from_dict(ld["activation"])))
        cols = d.get("input_columns")
        return cls(d["id"], d["kind"], d["role"], layers, d["frozen"], cols)


# -- composite network nodes ---------------------------------------------


@dataclass
class ComponentRef:
    id: str
    component: str


@dataclass
class Combine:
    """theta[0] + sum_j theta[j+1] * child_j, broadcast per coordinate."""

    id: str
    children: list[str]
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (len(self.children) + 1,):
            raise ModelError(
                f"combine {self.id!r}: theta must have length children+1 "
                f"(got {self.theta.shape[0]} for {len(self.children)} children)"
            )


@dataclass
class Activate:
    id: str
    child: str
    activation: Activation


Node = ComponentRef | Combine | Activate


class CompositeNetwork:
    """Rooted DAG in postorder: every child appears before its parent."""

    def __init__(self, nodes: list[Node], root: str):
        ids = [n.id for n in nodes]
        if len(set(ids)) != len(ids):
            raise ModelError("duplicate node ids")
        seen: set[str] = set()
        for n in nodes:
            for c in _children_of(n):
                if c not in seen:
                    raise ModelError(f"node {n.id!r} references {c!r} before it is defined")
            seen.add(n.id)
        if root not in seen:
            raise ModelError(f"root {root!r} is not a node")
        self.nodes = nodes
        self.root = root
        self._by_id = {n.id: n for n in nodes}

    def node(self, node_id: str) -> Node:
        return self._by_id[node_id]

    def combine_nodes(self) -> list[Combine]:
        return [n for n in self.nodes if isinstance(n, Combine)]

    def component_ids(self) -> list[str]:
        """Referenced component ids, in first-reference order, deduplicated."""
        out: list[str] = []
        for n in self.nodes:
            if isinstance(n, ComponentRef) and n.component not in out:
                out.append(n.component)
        return out

    def ref_nodes(self) -> list[ComponentRef]:
        return [n for n in self.nodes if isinstance(n, ComponentRef)]

    def copy(self) -> "CompositeNetwork":
        nodes: list[Node] = []
        for n in self.nodes:
            if isinstance(n, ComponentRef):
                nodes.append(ComponentRef(n.id, n.component))
            elif isinstance(n, Combine):
                nodes.append(Combine(n.id, list(n.children), n.theta.copy()))
            else:
                nodes.append(Activate(n.id, n.child, n.activation))
        return CompositeNetwork(nodes, self.root)

    def to_dict(self) -> dict:
        out = []
        for n in self.nodes:
            if isinstance(n, ComponentRef):
                out.append({"id": n.id, "type": "component", "component": n.component})
            elif isinstance(n, Combine):
                out.append(
                    {
                        "id": n.id,
                        "type": "combine",
                        "children": list(n.children),
                        "theta": [float(t) for t in n.theta],
                    }
                )
            else:
                out.append(
                    {
                        "id": n.id,
                        "type": "activate",
                        "child": n.child,
                        "activation": n.activation.to_dict(),
                    }
                )
        return {"nodes": out, "root": self.root}

    @classmethod
    def from_dict(cls, d: dict) -> "CompositeNetwork":
        nodes: list[Node] = []
        for nd in d["nodes"]:
            if nd["type"] == "component":
                nodes.append(ComponentRef(nd["id"], nd["component"]))
            elif nd["type"] == "combine":
                nodes.append(Combine(nd["id"], list(nd["children"]), np.asarray(nd["theta"], dtype=float)))
            elif nd["type"] == "activate":
                nodes.append(Activate(nd["id"], nd["child"], Activation.from_dict(nd["activation"])))
            else:
                raise ModelError(f"unknown node type {nd['type']!r}")
        return cls(nodes, d["root"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CompositeNetwork":
        return cls.from_dict(json.loads(text))


def _children_of(node: Node) -> list[str]:
    if isinstance(node, ComponentRef):
        return []
    if isinstance(node, Combine):
        return list(node.children)
    return [node.child]


def single_component_network(component_id: str, ref_id: str | None = None) -> CompositeNetwork:
    rid = ref_id if ref_id is not None else f"ref:{component_id}"
    return CompositeNetwork([ComponentRef(rid, component_id)], rid)


# -- evaluation ------------------------------------------------------------


def evaluate(
    net: CompositeNetwork,
    components: dict[str, Component],
    inputs: np.ndarray,
    node_values: dict[str, np.ndarray] | None = None,
) -> np.ndarray:
    """Evaluate the root node on every input row.

    ``node_values`` (optional, output) collects per-node results.
    """
    inputs = np.asarray(inputs, dtype=float)
    values: dict[str, np.ndarray] = {}
    for node in net.nodes:
        if isinstance(node, ComponentRef):
            comp = components.get(node.component)
            if comp is None:
                raise EvaluationError(f"unresolved component {node.component!r}", node.id)
            v = comp.forward(inputs)
        elif isinstance(node, Combine):
            v = np.full((inputs.shape[0], 1), node.theta[0])
            for w, child in zip(node.theta[1:], node.children):
                cv = values[child]
                try:
                    v = v + w * cv
                except ValueError as exc:
                    raise EvaluationError(f"child widths do not broadcast: {exc}", node.id)
        else:
            v = node.activation.value(values[node.child])
        if not np.all(np.isfinite(v)):
            raise EvaluationError("non-finite value produced", node.id)
        values[node.id] = v
    if node_values is not None:
        node_values.update(values)
    return values[net.root]


@dataclass
class Dataset:
    """N input rows with N label rows, partitioned into train/test."""

    inputs: np.ndarray  # (N, d)
    labels: np.ndarray  # (N, m)
    train_idx: np.ndarray
    test_idx: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.labels = np.asarray(self.labels, dtype=float)
        if self.labels.ndim == 1:
            self.labels = self.labels[:, None]
        self.train_idx = np.asarray(self.train_idx, dtype=int)
        self.test_idx = np.asarray(self.test_idx, dtype=int)
        n = self.inputs.shape[0]
        if n < 1 or self.labels.shape[0] != n:
            raise ModelError("inputs and labels must share N >= 1 rows")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.labels))):
            raise ModelError("dataset contains non-finite entries")
        both = np.concatenate([self.train_idx, self.test_idx])
        if len(set(both.tolist())) != both.size or sorted(both.tolist()) != list(range(n)):
            raise ModelError("train/test split must be disjoint and cover all rows")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    def split_indices(self, split: str) -> np.ndarray:
        if split == "train":
            return self.train_idx
        if split == "test":
            return self.test_idx
        raise ModelError(f"unknown split {split!r}")


def loss_l2(
    net: CompositeNetwork,
    components: dict[str, Component],
    data: Dataset,
    split: str = "train",
) -> float:
    """Mean of the squared residual norm over the chosen split.

    The reported RMSE is the square root of this value.
    """
    idx = data.split_indices(split)
    if idx.size == 0:
        raise ModelError(f"split {split!r} is empty")
    pred = evaluate(net, components, data.inputs[idx])
    return residual_loss(pred, data.labels[idx])


def residual_loss(pred: np.ndarray, labels: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if labels.ndim == 1:
        labels = labels[:, None]
    if pred.ndim == 1:
        pred = pred[:, None]
    if pred.shape[0] != labels.shape[0]:
        raise ModelError("prediction/label row mismatch")
    diff = pred - labels
    return float(np.sum(diff * diff) / labels.shape[0])


def count_parameters(net: CompositeNetwork, components: dict[str, Component]) -> dict[str, int]:
    """Trainable and total parameter counts; shared components count once."""
    trainable = 0
    total = 0
    for node in net.combine_nodes():
        trainable += node.theta.size
        total += node.theta.size
    for cid in net.component_ids():
        comp = components.get(cid)
        if comp is None:
            raise EvaluationError(f"unresolved component {cid!r}")
        trainable += comp.trainable_parameter_count()
        total += comp.parameter_count()
    return {"trainable": int(trainable), "total": int(total)}


def registry(components) -> dict[str, Component]:
    """Build an id-keyed registry from an iterable of components."""
    out: dict[str, Component] = {}
    for comp in components:
        if comp.id in out:
            raise ModelError(f"duplicate component id {comp.id!r}")
        out[comp.id] = comp
    return out
