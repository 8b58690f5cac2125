"""Dense float64 tensors with reverse-mode gradient accumulation.

Values are row-major numpy arrays (0-d, 1-d or 2-d). Every operation
computes its result eagerly and records the producing op and parents, so
``backward`` on a scalar can push gradients back to the ``requires_grad``
leaves. Gradients of interior nodes are tape-local and discarded; only
leaves accumulate into ``.grad``, and repeated backward calls without
``zero_grad`` keep accumulating.

The op set is deliberately small: matrix product, transpose, same-shape
elementwise arithmetic, scalar scale/shift, relu, exp/log, row softmax,
row normalization, sum/mean/max reductions, reshape/concat/indexing,
and squared distance. Everything the streams and losses need composes
from these. Subgradient conventions are fixed: relu passes zero at
exactly zero, elementwise max routes ties to its first operand, and max
reductions route ties to the lowest index.
"""

import numpy as np

from costream import kernels
from costream.errors import ContractError, DimensionError


def _as_f64(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        # ascontiguousarray would promote 0-d to 1-d; keep scalars 0-d
        return arr if arr.flags.writeable else arr.copy()
    return np.ascontiguousarray(arr)


class Tensor:
    """One node of a differentiation graph.

    ``op`` and ``parents`` record how the value was produced (empty for
    leaves); construction only ever links new nodes to existing ones, so
    the recorded graph is acyclic. ``grad`` is filled by ``backward``
    on leaves with ``requires_grad`` set and always matches ``data`` in
    shape.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "parents", "_bwd")

    def __init__(self, values, requires_grad: bool = False, op: str | None = None,
                 parents: tuple = (), bwd=None):
        self.data = _as_f64(values)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self.parents = parents
        self._bwd = bwd

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single value, shape is {self.data.shape}")
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detached(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, op={self.op!r}{flag})"

    # operator sugar; scalars go through scale/shift so graphs stay explicit
    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return shift(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return shift(self, -float(other))

    def __rsub__(self, other):
        return shift(scale(self, -1.0), float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)


def constant(values) -> Tensor:
    return Tensor(values, requires_grad=False)


def _node(data, op: str, parents: tuple, bwd) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    if needs:
        return Tensor(data, requires_grad=True, op=op, parents=parents, bwd=bwd)
    return Tensor(data, requires_grad=False, op=op, parents=parents, bwd=None)


def _require_2d(t: Tensor, op: str) -> None:
    if t.ndim != 2:
        raise DimensionError(f"{op} needs a 2-d operand, got shape {t.shape}")


def _require_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op} needs identical shapes, got {a.shape} and {b.shape}")


# ---------------------------------------------------------------- products


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _require_2d(a, "matmul")
    _require_2d(b, "matmul")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul needs inner dims to agree, got {a.shape} and {b.shape}")
    out = kernels.matmul(a.data, b.data)

    def bwd(g):
        return kernels.matmul(g, b.data, trans_b=True), kernels.matmul(a.data, g, trans_a=True)

    return _node(out, "matmul", (a, b), bwd)


def transpose(a: Tensor) -> Tensor:
    _require_2d(a, "transpose")

    def bwd(g):
        return (g.T,)

    return _node(a.data.T, "transpose", (a,), bwd)


# ------------------------------------------------------------- elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "add")

    def bwd(g):
        return g, g

    return _node(a.data + b.data, "add", (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "sub")

    def bwd(g):
        return g, -g

    return _node(a.data - b.data, "sub", (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "mul")

    def bwd(g):
        return g * b.data, g * a.data

    return _node(a.data * b.data, "mul", (a, b), bwd)


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; ties send the gradient to the first operand."""
    _require_same_shape(a, b, "maximum")
    first = a.data >= b.data

    def bwd(g):
        return g * first, g * ~first

    return _node(np.maximum(a.data, b.data), "maximum", (a, b), bwd)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def bwd(g):
        return (g * c,)

    return _node(a.data * c, "scale", (a,), bwd)


def shift(a: Tensor, c: float) -> Tensor:
    def bwd(g):
        return (g,)

    return _node(a.data + float(c), "shift", (a,), bwd)


def add_rowvec(a: Tensor, v: Tensor) -> Tensor:
    """Add a length-n vector to every row of an m x n matrix."""
    _require_2d(a, "add_rowvec")
    if v.ndim != 1 or v.shape[0] != a.shape[1]:
        raise DimensionError(f"add_rowvec needs a vector matching row width, got {a.shape} and {v.shape}")

    def bwd(g):
        return g, g.sum(axis=0)

    return _node(a.data + v.data[None, :], "add_rowvec", (a, v), bwd)


def relu(a: Tensor) -> Tensor:
    """max(0, x) with subgradient 0 at exactly 0."""
    mask = a.data > 0

    def bwd(g):
        return (g * mask,)

    return _node(np.where(mask, a.data, 0.0), "relu", (a,), bwd)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def bwd(g):
        return (g * out,)

    return _node(out, "exp", (a,), bwd)


def log(a: Tensor) -> Tensor:
    def bwd(g):
        return (g / a.data,)

    return _node(np.log(a.data), "log", (a,), bwd)


# ------------------------------------------------------------ row transforms


def row_softmax(a: Tensor) -> Tensor:
    """Softmax of each row, computed against the row max for stability."""
    _require_2d(a, "row_softmax")
    y = kernels.row_softmax(a.data)

    def bwd(g):
        return (kernels.row_softmax_grad(y, g),)

    return _node(y, "row_softmax", (a,), bwd)


def row_normalize(a: Tensor) -> Tensor:
    """Divide each row by its sum (rows must not sum to zero)."""
    _require_2d(a, "row_normalize")
    s = a.data.sum(axis=1, keepdims=True)
    r = a.data / s

    def bwd(g):
        return ((g - (g * r).sum(axis=1, keepdims=True)) / s,)

    return _node(r, "row_normalize", (a,), bwd)


# -------------------------------------------------------------- reductions


def reduce_sum(a: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        def bwd(g):
            return (np.broadcast_to(g, a.shape),)

        return _node(a.data.sum(), "sum", (a,), bwd)
    shape = a.shape

    def bwd_axis(g):
        return (np.broadcast_to(np.expand_dims(g, axis), shape),)

    return _node(a.data.sum(axis=axis), "sum", (a,), bwd_axis)


def reduce_mean(a: Tensor, axis: int | None = None) -> Tensor:
    if a.size == 0:
        raise ContractError("mean of an empty tensor")
    if axis is None:
        count = a.size

        def bwd(g):
            return (np.broadcast_to(g / count, a.shape),)

        return _node(a.data.mean(), "mean", (a,), bwd)
    shape = a.shape
    count = shape[axis]

    def bwd_axis(g):
        return (np.broadcast_to(np.expand_dims(g / count, axis), shape),)

    return _node(a.data.mean(axis=axis), "mean", (a,), bwd_axis)


def reduce_max(a: Tensor, axis: int | None = None) -> Tensor:
    """Max reduction; ties route the gradient to the lowest index."""
    if axis is None:
        idx = np.unravel_index(np.argmax(a.data), a.shape)

        def bwd(g):
            z = np.zeros(a.shape)
            z[idx] = g
            return (z,)

        return _node(a.data.max(), "max", (a,), bwd)
    idx = np.argmax(a.data, axis=axis)

    def bwd_axis(g):
        z = np.zeros(a.shape)
        np.put_along_axis(z, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (z,)

    return _node(a.data.max(axis=axis), "max", (a,), bwd_axis)


# ------------------------------------------------------------ restructuring


def reshape(a: Tensor, shape) -> Tensor:
    target = tuple(int(s) for s in shape)
    if int(np.prod(target, dtype=np.int64)) != a.size:
        raise DimensionError(f"cannot reshape {a.shape} to {target}")
    old = a.shape

    def bwd(g):
        return (np.ascontiguousarray(g).reshape(old),)

    return _node(a.data.reshape(target), "reshape", (a,), bwd)


def concat(parts, axis: int = 0) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ContractError("concat of zero tensors")
    offsets = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def bwd(g):
        return tuple(np.split(g, offsets, axis=axis))

    out = np.concatenate([p.data for p in parts], axis=axis)
    return _node(out, "concat", tuple(parts), bwd)


def take(a: Tensor, key) -> Tensor:
    """Basic or integer-array indexing; gradients scatter-add back."""
    if isinstance(key, np.ndarray):
        key = key.copy()
    out = a.data[key]

    def bwd(g):
        z = np.zeros(a.shape)
        np.add.at(z, key, g)
        return (z,)

    return _node(out, "take", (a,), bwd)


def take_per_row(a: Tensor, idx) -> Tensor:
    """out[i] = a[i, idx[i]] for an m x n matrix and m indices."""
    _require_2d(a, "take_per_row")
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape != (a.shape[0],):
        raise DimensionError(f"take_per_row needs one index per row, got {idx.shape} for {a.shape}")
    if idx.min(initial=0) < 0 or idx.max(initial=-1) >= a.shape[1]:
        raise ContractError(f"take_per_row indices out of range for width {a.shape[1]}")
    rows = np.arange(a.shape[0])

    def bwd(g):
        z = np.zeros(a.shape)
        np.add.at(z, (rows, idx), g)
        return (z,)

    return _node(a.data[rows, idx], "take_per_row", (a,), bwd)


def squared_distance(a: Tensor, b: Tensor) -> Tensor:
    """Sum of squared differences, as a scalar."""
    _require_same_shape(a, b, "squared_distance")
    d = a.data - b.data

    def bwd(g):
        return g * 2.0 * d, g * -2.0 * d

    return _node((d * d).sum(), "squared_distance", (a, b), bwd)


# ---------------------------------------------------------------- backward


def _topo_order(root: Tensor) -> list:
    """Parents-before-node ordering of the requires_grad subgraph."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        if node._bwd is not None:
            for p in node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate dLoss/dLeaf into every reachable requires_grad leaf.

    The loss must be scalar. Interior gradients live only for the
    duration of the call; calling again without zeroing leaf grads adds
    a second full contribution.
    """
    if loss.shape != ():
        raise ContractError(f"backward needs a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("backward on a result with no requires_grad ancestry")
    flowing: dict[int, np.ndarray] = {id(loss): np.ones(())}
    for node in reversed(_topo_order(loss)):
        g = flowing.pop(id(node), None)
        if g is None:
            continue
        if node._bwd is None:
            # requires_grad with no recorded op: a leaf parameter
            if node.grad is None:
                node.grad = np.zeros(node.shape)
            node.grad += g
            continue
        contributions = node._bwd(g)
        for parent, pg in zip(node.parents, contributions):
            if not parent.requires_grad or pg is None:
                continue
            held = flowing.get(id(parent))
            if held is None:
                flowing[id(parent)] = pg
            else:
                flowing[id(parent)] = held + pg


def first_non_finite(root: Tensor) -> Tensor | None:
    """Earliest tensor (in forward order) under root with NaN/inf values."""
    bad = None
    for node in _topo_order_full(root):
        if not np.isfinite(node.data).all():
            bad = node
            break
    return bad


def _topo_order_full(root: Tensor) -> list:
    """Like _topo_order but follows all parents, not just requires_grad."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order
