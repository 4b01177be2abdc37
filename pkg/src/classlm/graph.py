"""Dense-array computation graphs with reverse-mode differentiation.

A :class:`Graph` is an append-only list of nodes; node inputs always refer
to earlier nodes, so the list itself is a topological order.  Values live in
a per-evaluation :class:`Workspace`, never in the graph, which makes graphs
immutable after construction and safe to evaluate concurrently.

Leaf nodes are either *inputs* (bound at evaluation time) or *parameters*
(named arrays, typically trainable).  Stochastic behaviour such as dropout
enters the graph only through bound mask inputs, so evaluation is a pure
function of (graph, bindings, parameters).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Graph",
    "GraphError",
    "NonFiniteError",
    "ShapeError",
    "Workspace",
    "backward",
    "finite_difference_check",
    "forward_eval",
]


class GraphError(Exception):
    """Base error for graph construction and evaluation problems."""


class ShapeError(GraphError):
    """Operand shapes are incompatible with a node's operation."""


class NonFiniteError(GraphError):
    """An operation produced NaN or infinity."""


class Node:
    """One operation in a graph.  Created through Graph methods only."""

    __slots__ = ("idx", "op", "name", "inputs")

    def __init__(self, idx, op, name, inputs):
        self.idx = idx
        self.op = op
        self.name = name
        self.inputs = inputs

    def __repr__(self):
        return f"Node({self.idx}, {self.op!r}, {self.name!r})"


class Graph:
    """Computation DAG over dense arrays.

    Parameters are registered with default values; `forward_eval` may
    override them with a fresh mapping (the training loop passes the live
    parameter store).  At most one node may be designated the scalar loss.
    """

    def __init__(self, params=None):
        self.nodes = []
        self.outputs = {}
        self.loss = None
        self._param_values = {} if params is None else params
        self._param_nodes = {}
        self._input_names = set()
        self._trainable = set()

    # -- leaves ------------------------------------------------------------

    def input(self, name):
        """Declare a leaf whose value is supplied in the eval bindings."""
        if name in self._input_names:
            raise GraphError(f"duplicate input name {name!r}")
        self._input_names.add(name)
        return self._append("input", name, ())

    def parameter(self, name, value=None, trainable=True):
        """Declare (or re-reference) a named parameter leaf."""
        if name in self._param_nodes:
            return self._param_nodes[name]
        if value is not None:
            self._param_values[name] = value
        elif name not in self._param_values:
            raise GraphError(f"parameter {name!r} has no value")
        node = self._append("param", name, ())
        self._param_nodes[name] = node
        if trainable:
            self._trainable.add(name)
        return node

    # -- operations ----------------------------------------------------------

    def matmul(self, a, b, name=None):
        return self._append("matmul", name, (a, b))

    def add(self, a, b, name=None):
        return self._append("add", name, (a, b))

    def mul(self, a, b, name=None):
        return self._append("mul", name, (a, b))

    def smul(self, x, scalar, name=None):
        """Multiply every element of `x` by a scalar-shaped node."""
        return self._append("smul", name, (x, scalar))

    def add_bias(self, x, b, name=None):
        """Broadcast-add a bias vector over the rows of a matrix."""
        return self._append("add_bias", name, (x, b))

    def sigmoid(self, x, name=None):
        return self._append("sigmoid", name, (x,))

    def tanh(self, x, name=None):
        return self._append("tanh", name, (x,))

    def one_minus(self, x, name=None):
        """Elementwise 1 - x (gate complement)."""
        return self._append("one_minus", name, (x,))

    def softmax(self, x, name=None):
        """Row-wise softmax, stabilised by subtracting the row maximum."""
        return self._append("softmax", name, (x,))

    def gather_rows(self, table, ids, name=None):
        """Select rows of `table` by the integer vector `ids`."""
        return self._append("gather", name, (table, ids))

    def concat(self, parts, name=None):
        """Concatenate along the trailing (feature) axis."""
        if not parts:
            raise GraphError("concat needs at least one input")
        if len(parts) == 1:
            return parts[0]
        return self._append("concat", name, tuple(parts))

    def cross_entropy(self, logits, targets, name=None):
        """Fused softmax + negative log-likelihood of integer targets.

        Returns one loss value per row; never takes log of an explicit
        probability, so it is safe when the softmax saturates.
        """
        return self._append("xent", name, (logits, targets))

    def sum(self, x, name=None):
        """Reduce to a scalar."""
        return self._append("sum", name, (x,))

    # -- designation -----------------------------------------------------------

    def mark_output(self, node, name):
        self.outputs[name] = node
        return node

    def set_loss(self, node):
        if self.loss is not None:
            raise GraphError("loss node already designated")
        self.loss = node
        return node

    @property
    def trainable_parameters(self):
        return sorted(self._trainable)

    def parameter_value(self, name, overrides=None):
        if overrides is not None and name in overrides:
            return overrides[name]
        return self._param_values[name]

    def _append(self, op, name, inputs):
        for inp in inputs:
            if not isinstance(inp, Node) or self.nodes[inp.idx] is not inp:
                raise GraphError(f"input to {op!r} is not a node of this graph")
        node = Node(len(self.nodes), op, name or f"{op}_{len(self.nodes)}", inputs)
        self.nodes.append(node)
        return node


class Workspace:
    """Per-evaluation value storage for one graph."""

    def __init__(self, graph, bindings, params):
        self.graph = graph
        self.bindings = bindings
        self.params = params
        self.values = [None] * len(graph.nodes)
        self.aux = {}

    def value(self, node):
        return self.values[node.idx]

    @property
    def outputs(self):
        return {name: self.values[node.idx] for name, node in self.graph.outputs.items()}

    @property
    def loss_value(self):
        node = self.graph.loss
        if node is None:
            raise GraphError("no loss node designated")
        return float(self.values[node.idx])


def _shapes(vals):
    return " vs ".join(str(v.shape) for v in vals)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def forward_eval(graph, bindings, params=None, check_finite=True):
    """Evaluate every node and return the populated :class:`Workspace`.

    `bindings` must supply every input leaf.  `params`, when given, overrides
    the graph's stored parameter values by name.  Raises :class:`ShapeError`
    naming the offending node on incompatible operands and
    :class:`NonFiniteError` naming the first node that produces a non-finite
    value.
    """
    ws = Workspace(graph, bindings, params)
    vals = ws.values
    for node in graph.nodes:
        op = node.op
        ins = [vals[i.idx] for i in node.inputs]
        if op == "input":
            if node.name not in bindings:
                raise GraphError(f"no binding for input {node.name!r}")
            v = np.asarray(bindings[node.name])
        elif op == "param":
            v = np.asarray(graph.parameter_value(node.name, params))
        elif op == "matmul":
            a, b = ins
            if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
                raise ShapeError(f"node {node.name!r} (matmul): {_shapes(ins)}")
            v = a @ b
        elif op == "add" or op == "mul":
            a, b = ins
            if a.shape != b.shape:
                raise ShapeError(f"node {node.name!r} ({op}): {_shapes(ins)}")
            v = a + b if op == "add" else a * b
        elif op == "smul":
            x, s = ins
            if s.size != 1:
                raise ShapeError(f"node {node.name!r} (smul): scalar operand has shape {s.shape}")
            v = x * s.reshape(())
        elif op == "add_bias":
            x, b = ins
            if x.ndim != 2 or b.ndim != 1 or x.shape[1] != b.shape[0]:
                raise ShapeError(f"node {node.name!r} (add_bias): {_shapes(ins)}")
            v = x + b
        elif op == "sigmoid":
            v = _sigmoid(ins[0])
        elif op == "tanh":
            v = np.tanh(ins[0])
        elif op == "one_minus":
            v = 1.0 - ins[0]
        elif op == "softmax":
            x = ins[0]
            m = x.max(axis=-1, keepdims=True)
            e = np.exp(x - m)
            v = e / e.sum(axis=-1, keepdims=True)
        elif op == "gather":
            table, ids = ins
            if table.ndim != 2 or ids.ndim != 1:
                raise ShapeError(f"node {node.name!r} (gather): {_shapes(ins)}")
            if not np.issubdtype(ids.dtype, np.integer):
                raise GraphError(f"node {node.name!r} (gather): ids must be integers")
            if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
                raise GraphError(
                    f"node {node.name!r} (gather): id out of range for {table.shape[0]} rows"
                )
            v = table[ids]
        elif op == "concat":
            width = {x.shape[:-1] for x in ins}
            if len(width) != 1:
                raise ShapeError(f"node {node.name!r} (concat): {_shapes(ins)}")
            v = np.concatenate(ins, axis=-1)
        elif op == "xent":
            logits, targets = ins
            if logits.ndim != 2 or targets.ndim != 1 or logits.shape[0] != targets.shape[0]:
                raise ShapeError(f"node {node.name!r} (xent): {_shapes(ins)}")
            if targets.size and (targets.min() < 0 or targets.max() >= logits.shape[1]):
                raise GraphError(f"node {node.name!r} (xent): target id out of range")
            m = logits.max(axis=1, keepdims=True)
            e = np.exp(logits - m)
            z = e.sum(axis=1, keepdims=True)
            probs = e / z
            lse = m[:, 0] + np.log(z[:, 0])
            v = lse - logits[np.arange(logits.shape[0]), targets]
            ws.aux[node.idx] = probs
        elif op == "sum":
            v = np.asarray(ins[0].sum())
        else:
            raise GraphError(f"unknown operation {op!r}")
        if check_finite and np.issubdtype(v.dtype, np.floating) and not np.isfinite(v).all():
            raise NonFiniteError(f"node {node.name!r} ({op}) produced a non-finite value")
        vals[node.idx] = v
    return ws


def backward(graph, ws, params=None):
    """Reverse-mode gradients of the designated loss.

    Requires a workspace populated by :func:`forward_eval`.  Returns a map
    from every trainable parameter name to its gradient; parameters with no
    path to the loss get zero tensors of the parameter's shape.
    """
    loss = graph.loss
    if loss is None:
        raise GraphError("no loss node designated")
    vals = ws.values
    if vals[loss.idx] is None:
        raise GraphError("forward values missing; run forward_eval first")
    if np.asarray(vals[loss.idx]).size != 1:
        raise GraphError("loss node is not scalar")

    adj = [None] * len(graph.nodes)
    adj[loss.idx] = np.ones_like(vals[loss.idx])
    # sorted order keeps downstream float accumulation (e.g. the global clip
    # norm) independent of hash randomization across processes
    grads = {}
    for name in graph.trainable_parameters:
        grads[name] = np.zeros_like(np.asarray(graph.parameter_value(name, params)))

    def acc(node, g):
        if adj[node.idx] is None:
            adj[node.idx] = np.zeros_like(vals[node.idx], dtype=g.dtype)
        adj[node.idx] += g

    for node in reversed(graph.nodes):
        dy = adj[node.idx]
        if dy is None:
            continue
        op = node.op
        ins = node.inputs
        if op == "param":
            if node.name in grads:
                grads[node.name] = grads[node.name] + dy
        elif op == "input":
            pass
        elif op == "matmul":
            a, b = vals[ins[0].idx], vals[ins[1].idx]
            acc(ins[0], dy @ b.T)
            acc(ins[1], a.T @ dy)
        elif op == "add":
            acc(ins[0], dy)
            acc(ins[1], dy)
        elif op == "mul":
            a, b = vals[ins[0].idx], vals[ins[1].idx]
            acc(ins[0], dy * b)
            acc(ins[1], dy * a)
        elif op == "smul":
            x, s = vals[ins[0].idx], vals[ins[1].idx]
            acc(ins[0], dy * s.reshape(()))
            acc(ins[1], np.asarray((dy * x).sum()).reshape(s.shape))
        elif op == "add_bias":
            acc(ins[0], dy)
            acc(ins[1], dy.sum(axis=0))
        elif op == "sigmoid":
            y = vals[node.idx]
            acc(ins[0], dy * y * (1.0 - y))
        elif op == "tanh":
            y = vals[node.idx]
            acc(ins[0], dy * (1.0 - y * y))
        elif op == "one_minus":
            acc(ins[0], -dy)
        elif op == "softmax":
            y = vals[node.idx]
            inner = (dy * y).sum(axis=-1, keepdims=True)
            acc(ins[0], y * (dy - inner))
        elif op == "gather":
            table = vals[ins[0].idx]
            ids = vals[ins[1].idx]
            g = np.zeros_like(table, dtype=dy.dtype)
            np.add.at(g, ids, dy)
            acc(ins[0], g)
        elif op == "concat":
            off = 0
            for inp in ins:
                w = vals[inp.idx].shape[-1]
                acc(inp, dy[..., off:off + w])
                off += w
        elif op == "xent":
            logits = vals[ins[0].idx]
            targets = vals[ins[1].idx]
            probs = ws.aux[node.idx]
            g = probs.copy()
            g[np.arange(g.shape[0]), targets] -= 1.0
            acc(ins[0], g * dy[:, None])
        elif op == "sum":
            x = vals[ins[0].idx]
            acc(ins[0], np.full(x.shape, dy, dtype=x.dtype))
    return grads


def finite_difference_check(graph, bindings, param, step, params=None):
    """Max relative error between analytic and central-difference gradients.

    Perturbs each element of `param` by ±step and compares the loss slope to
    the analytic gradient.  The relative error uses
    |analytic - fd| / max(|analytic|, |fd|, 1e-8).
    """
    if not np.isfinite(step) or step <= 0:
        raise ValueError(f"finite-difference step must be positive, got {step}")
    if param not in set(graph._param_nodes) or param not in graph._trainable:
        raise GraphError(f"{param!r} is not a trainable parameter of this graph")

    base = dict(params) if params is not None else {}
    value = np.array(graph.parameter_value(param, params), dtype=np.float64)

    ws = forward_eval(graph, bindings, params)
    analytic = backward(graph, ws, params)[param]

    worst = 0.0
    perturbed = value.copy()
    flat = perturbed.reshape(-1)
    aflat = np.asarray(analytic).reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        base[param] = perturbed
        hi = forward_eval(graph, bindings, base).loss_value
        flat[i] = orig - step
        lo = forward_eval(graph, bindings, base).loss_value
        flat[i] = orig
        fd = (hi - lo) / (2.0 * step)
        if not np.isfinite(fd):
            raise NonFiniteError(f"non-finite perturbation result for {param!r}[{i}]")
        err = abs(aflat[i] - fd) / max(abs(aflat[i]), abs(fd), 1e-8)
        worst = max(worst, err)
    return worst
