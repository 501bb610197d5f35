"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Every tensor is a rank-4 float32 array laid out as (batch, channel, height,
width); scalars are carried as shape (1, 1, 1, 1). Operations record their
backward rules on the output tensors, and :func:`backward` replays them in
reverse topological order. Only the operations the frequency-aware GAN
networks and losses need are provided; there is no broadcasting beyond what
those ops require, no higher-order derivatives, and no device support.

All forward formulas are written in a fixed "canonical" numpy sequence so
that two implementations following the same sequence produce bit-identical
float32 results (this is what the plain-GAN equivalence check relies on).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when tensor shapes violate an operation's contract."""


Shape = tuple[int, int, int, int]


class Tensor:
    """A (N, C, H, W) float32 array participating in a differentiation tape.

    ``requires_grad`` on a leaf marks it as a parameter; on an interior node
    it means the node is part of a recorded graph. ``grad`` is populated on
    leaves by :func:`backward` and accumulates across calls until cleared.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(data, dtype=np.float32)
        if arr.ndim != 4:
            raise ShapeError(f"tensors are rank-4 (N,C,H,W); got shape {arr.shape}")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None

    @property
    def shape(self) -> Shape:
        return self.data.shape

    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """A graph-free view of the same values (gradient never flows in)."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def scalar(value: float) -> Tensor:
    return Tensor(np.full((1, 1, 1, 1), value, dtype=np.float32))


def zeros(shape: Shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float32), requires_grad=requires_grad)


def full_like(t: Tensor, value: float) -> Tensor:
    return Tensor(np.full(t.shape, value, dtype=np.float32))


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    """Wrap an op result; record the backward rule only if a parent needs it."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


# ---------------------------------------------------------------------------
# convolution machinery (shared by conv2d, conv2d_transpose and their grads)
# ---------------------------------------------------------------------------


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    """Patches of ``x`` as (N, OH, OW, C, kh, kw), contiguous."""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    v = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    return np.ascontiguousarray(v.transpose(0, 2, 3, 1, 4, 5))


def _col2im(cols: np.ndarray, out_hw: tuple[int, int], stride: int, padding: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`: scatter-add patches back onto the image.

    ``cols`` has shape (N, OH, OW, C, kh, kw); returns (N, C, H, W) after
    cropping the padding border.
    """
    n, oh, ow, c, kh, kw = cols.shape
    h, w = out_hw
    buf = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=np.float32)
    for i in range(kh):
        for j in range(kw):
            patch = np.ascontiguousarray(cols[:, :, :, :, i, j].transpose(0, 3, 1, 2))
            buf[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += patch
    if padding:
        buf = np.ascontiguousarray(buf[:, :, padding : padding + h, padding : padding + w])
    return buf


def _check_conv_shapes(x_shape: Shape, w_shape: Shape, groups: int, op: str) -> None:
    n, ci, h, w_ = x_shape
    co, cig, kh, kw = w_shape
    if groups < 1:
        raise ShapeError(f"{op}: groups must be >= 1, got {groups}")
    if ci % groups != 0 or co % groups != 0:
        raise ShapeError(
            f"{op}: groups={groups} must divide both input channels {ci} "
            f"and output channels {co}"
        )
    if cig != ci // groups:
        raise ShapeError(
            f"{op}: weight expects {cig} channels per group but input "
            f"supplies {ci // groups} ({ci} channels / {groups} groups)"
        )


def _matmul_fwd(cols2: np.ndarray, w: np.ndarray, groups: int) -> np.ndarray:
    """(rows, Ci*kh*kw) patches times weights -> (rows, Co)."""
    co = w.shape[0]
    k = w.shape[1] * w.shape[2] * w.shape[3]
    if groups == 1:
        return cols2 @ w.reshape(co, k).T
    rows = cols2.shape[0]
    cg = cols2.reshape(rows, groups, k).transpose(1, 0, 2)
    wg = w.reshape(groups, co // groups, k).transpose(0, 2, 1)
    yg = cg @ wg
    return np.ascontiguousarray(yg.transpose(1, 0, 2)).reshape(rows, co)


def _matmul_bwd_cols(dy2: np.ndarray, w: np.ndarray, groups: int) -> np.ndarray:
    """Upstream (rows, Co) times weights -> patch gradients (rows, Ci*kh*kw)."""
    co = w.shape[0]
    k = w.shape[1] * w.shape[2] * w.shape[3]
    if groups == 1:
        return dy2 @ w.reshape(co, k)
    rows = dy2.shape[0]
    dg = dy2.reshape(rows, groups, co // groups).transpose(1, 0, 2)
    wg = w.reshape(groups, co // groups, k)
    cg = dg @ wg
    return np.ascontiguousarray(cg.transpose(1, 0, 2)).reshape(rows, groups * k)


def _matmul_bwd_weight(dy2: np.ndarray, cols2: np.ndarray, w_shape: Shape, groups: int) -> np.ndarray:
    """Weight gradient from upstream (rows, Co) and patches (rows, Ci*k*k)."""
    co, cig, kh, kw = w_shape
    k = cig * kh * kw
    if groups == 1:
        return (dy2.T @ cols2).reshape(w_shape)
    rows = dy2.shape[0]
    dg = dy2.reshape(rows, groups, co // groups).transpose(1, 2, 0)
    cg = cols2.reshape(rows, groups, k).transpose(1, 0, 2)
    return np.ascontiguousarray(dg @ cg).reshape(w_shape)


def _is_per_channel_2x2(x_shape: Shape, w_shape: Shape, stride: int, padding: int, groups: int) -> bool:
    """Shape pattern of the wavelet bands: one 2x2 stride-2 kernel per channel."""
    co, cig, kh, kw = w_shape
    return (
        kh == 2 and kw == 2 and stride == 2 and padding == 0
        and cig == 1 and groups == x_shape[1] and co == x_shape[1]
    )


def _conv2d_per_channel_2x2(x: Tensor, weight: Tensor, bias: Optional[Tensor]) -> Tensor:
    """conv2d fast path: per-channel 2x2 stride-2 block dot products."""
    w = weight.data.reshape(1, -1, 1, 1, 2, 2)
    k = [[w[:, :, :, :, i, j] for j in range(2)] for i in range(2)]
    xs = [[x.data[:, :, i::2, j::2] for j in range(2)] for i in range(2)]
    y = k[0][0] * xs[0][0] + k[0][1] * xs[0][1] + k[1][0] * xs[1][0] + k[1][1] * xs[1][1]
    if bias is not None:
        y = y + bias.data

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward_fn(g: np.ndarray):
        gx = gw = gb = None
        if x.requires_grad:
            gx = np.empty_like(x.data)
            for i in range(2):
                for j in range(2):
                    gx[:, :, i::2, j::2] = k[i][j] * g
        if weight.requires_grad:
            gw = np.empty_like(weight.data)
            for i in range(2):
                for j in range(2):
                    gw[:, 0, i, j] = (g * xs[i][j]).sum(axis=(0, 2, 3))
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3)).reshape(bias.shape)
        return (gx, gw) if bias is None else (gx, gw, gb)

    return _node(y, parents, backward_fn)


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    """2-d cross-correlation (no kernel flip) with optional grouping.

    ``weight`` is (Cout, Cin/groups, kH, kW); ``bias``, when given, is a
    (1, Cout, 1, 1) tensor added to every output position. Output spatial
    size is floor((H + 2*padding - kH) / stride) + 1.
    """
    _check_conv_shapes(x.shape, weight.shape, groups, "conv2d")
    n, ci, h, w_ = x.shape
    co, _, kh, kw = weight.shape
    if h + 2 * padding < kh or w_ + 2 * padding < kw:
        raise ShapeError(
            f"conv2d: padded input {h + 2 * padding}x{w_ + 2 * padding} is "
            f"smaller than the {kh}x{kw} kernel"
        )
    if bias is not None and bias.shape != (1, co, 1, 1):
        raise ShapeError(f"conv2d: bias must be (1,{co},1,1), got {bias.shape}")
    if _is_per_channel_2x2(x.shape, weight.shape, stride, padding, groups) and h % 2 == 0 and w_ % 2 == 0:
        return _conv2d_per_channel_2x2(x, weight, bias)

    cols = _im2col(x.data, kh, kw, stride, padding)
    oh, ow = cols.shape[1], cols.shape[2]
    cols2 = cols.reshape(n * oh * ow, ci * kh * kw)
    y2 = _matmul_fwd(cols2, weight.data, groups)
    y = np.ascontiguousarray(y2.reshape(n, oh, ow, co).transpose(0, 3, 1, 2))
    if bias is not None:
        y = y + bias.data

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward_fn(g: np.ndarray):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * oh * ow, co)
        gx = gw = gb = None
        if x.requires_grad:
            dcols = _matmul_bwd_cols(g2, weight.data, groups)
            gx = _col2im(dcols.reshape(n, oh, ow, ci, kh, kw), (h, w_), stride, padding)
        if weight.requires_grad:
            gw = _matmul_bwd_weight(g2, cols2, weight.shape, groups)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3)).reshape(1, co, 1, 1)
        return (gx, gw) if bias is None else (gx, gw, gb)

    return _node(y, parents, backward_fn)


def _conv2d_transpose_per_channel_2x2(x: Tensor, weight: Tensor) -> Tensor:
    """conv2d_transpose fast path, adjoint of the per-channel 2x2 conv."""
    w = weight.data.reshape(1, -1, 1, 1, 2, 2)
    k = [[w[:, :, :, :, i, j] for j in range(2)] for i in range(2)]
    n, c, h, w_ = x.shape
    y = np.empty((n, c, 2 * h, 2 * w_), dtype=np.float32)
    for i in range(2):
        for j in range(2):
            y[:, :, i::2, j::2] = k[i][j] * x.data

    def backward_fn(g: np.ndarray):
        gx = gw = None
        gs = [[g[:, :, i::2, j::2] for j in range(2)] for i in range(2)]
        if x.requires_grad:
            gx = k[0][0] * gs[0][0] + k[0][1] * gs[0][1] + k[1][0] * gs[1][0] + k[1][1] * gs[1][1]
        if weight.requires_grad:
            gw = np.empty_like(weight.data)
            for i in range(2):
                for j in range(2):
                    gw[:, 0, i, j] = (x.data * gs[i][j]).sum(axis=(0, 2, 3))
        return gx, gw

    return _node(y, (x, weight), backward_fn)


def conv2d_transpose(x: Tensor, weight: Tensor, stride: int = 1, groups: int = 1) -> Tensor:
    """Exact adjoint of :func:`conv2d` (padding 0) with the same weight.

    ``x`` has the conv's output channel count Cout; the result has Cin
    channels and spatial size (H - 1) * stride + kH.
    """
    n, ci_t, h, w_ = x.shape
    co, cig, kh, kw = weight.shape
    if ci_t != co:
        raise ShapeError(
            f"conv2d_transpose: input has {ci_t} channels but weight maps "
            f"from {co} (weight is shared with the forward conv)"
        )
    ci = cig * groups
    _check_conv_shapes((n, ci, 1, 1), weight.shape, groups, "conv2d_transpose")
    if _is_per_channel_2x2(x.shape, weight.shape, stride, 0, groups):
        return _conv2d_transpose_per_channel_2x2(x, weight)
    oh = (h - 1) * stride + kh
    ow = (w_ - 1) * stride + kw

    x2 = np.ascontiguousarray(x.data.transpose(0, 2, 3, 1)).reshape(n * h * w_, co)
    cols = _matmul_bwd_cols(x2, weight.data, groups)
    y = _col2im(cols.reshape(n, h, w_, ci, kh, kw), (oh, ow), stride, 0)

    def backward_fn(g: np.ndarray):
        gx = gw = None
        gcols2 = None
        if x.requires_grad or weight.requires_grad:
            gcols = _im2col(g, kh, kw, stride, 0)
            gcols2 = gcols.reshape(n * h * w_, ci * kh * kw)
        if x.requires_grad:
            gx2 = _matmul_fwd(gcols2, weight.data, groups)
            gx = np.ascontiguousarray(gx2.reshape(n, h, w_, co).transpose(0, 3, 1, 2))
        if weight.requires_grad:
            gw = _matmul_bwd_weight(x2, gcols2, weight.shape, groups)
        return gx, gw

    return _node(y, (x, weight), backward_fn)


# ---------------------------------------------------------------------------
# elementwise operations
# ---------------------------------------------------------------------------


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    return _node(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    return _node(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")
    return _node(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, s: float) -> Tensor:
    s32 = np.float32(s)
    return _node(a.data * s32, (a,), lambda g: (g * s32,))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    x = a.data
    y = np.where(x >= 0, x, np.float32(slope) * x)
    # subgradient at 0 is defined as 1
    def backward_fn(g):
        return (g * np.where(x >= 0, np.float32(1.0), np.float32(slope)),)

    return _node(y, (a,), backward_fn)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _node(y, (a,), lambda g: (g * (np.float32(1.0) - y * y),))


def batch_norm2d(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization with affine output, batch stats only.

    ``gamma`` and ``beta`` are (1, C, 1, 1). There are no running averages;
    the op always normalizes with the statistics of the current batch.
    """
    n, c, h, w_ = x.shape
    m = n * h * w_
    if m < 2:
        raise ShapeError(f"batch_norm2d: need N*H*W >= 2 for a variance, got {m}")
    for name, p in (("gamma", gamma), ("beta", beta)):
        if p.shape != (1, c, 1, 1):
            raise ShapeError(f"batch_norm2d: {name} must be (1,{c},1,1), got {p.shape}")

    mu = x.data.mean(axis=(0, 2, 3), keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=(0, 2, 3), keepdims=True)
    inv = np.float32(1.0) / np.sqrt(var + np.float32(eps))
    xhat = xc * inv
    y = gamma.data * xhat + beta.data

    def backward_fn(g):
        gx = ggamma = gbeta = None
        if beta.requires_grad:
            gbeta = g.sum(axis=(0, 2, 3), keepdims=True)
        if gamma.requires_grad:
            ggamma = (g * xhat).sum(axis=(0, 2, 3), keepdims=True)
        if x.requires_grad:
            dxhat = g * gamma.data
            s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            gx = (inv / np.float32(m)) * (np.float32(m) * dxhat - s1 - xhat * s2)
        return gx, ggamma, gbeta

    return _node(y, (x, gamma, beta), backward_fn)


def upsample_nearest2(x: Tensor) -> Tensor:
    """Double H and W by replicating each pixel 2x2; backward sums the block."""
    n, c, h, w_ = x.shape
    y = x.data.repeat(2, axis=2).repeat(2, axis=3)

    def backward_fn(g):
        return (g.reshape(n, c, h, 2, w_, 2).sum(axis=(3, 5)),)

    return _node(y, (x,), backward_fn)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def _as_scalar(v: np.floating) -> np.ndarray:
    return np.asarray(v, dtype=np.float32).reshape(1, 1, 1, 1)


def mean_all(a: Tensor) -> Tensor:
    size = a.data.size

    def backward_fn(g):
        return (np.full(a.shape, g.reshape(-1)[0] / np.float32(size), dtype=np.float32),)

    return _node(_as_scalar(np.mean(a.data)), (a,), backward_fn)


def sum_all(a: Tensor) -> Tensor:
    def backward_fn(g):
        return (np.full(a.shape, g.reshape(-1)[0], dtype=np.float32),)

    return _node(_as_scalar(np.sum(a.data)), (a,), backward_fn)


def channel_mean(a: Tensor) -> Tensor:
    """Mean over the channel axis: (N, C, H, W) -> (N, 1, H, W)."""
    c = a.shape[1]
    y = a.data.mean(axis=1, keepdims=True)

    def backward_fn(g):
        return (np.repeat(g / np.float32(c), c, axis=1),)

    return _node(y, (a,), backward_fn)


def l1_distance(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute difference over all elements (scalar output)."""
    _check_same_shape(a, b, "l1_distance")
    diff = a.data - b.data
    size = diff.size

    def backward_fn(g):
        s = np.sign(diff) * (g.reshape(-1)[0] / np.float32(size))
        return s, -s

    return _node(_as_scalar(np.mean(np.abs(diff))), (a, b), backward_fn)


def relu_mean(a: Tensor) -> Tensor:
    """mean(max(a, 0)); the hinge building block. Subgradient at 0 is 1."""
    x = a.data
    size = x.size

    def backward_fn(g):
        return ((x >= 0) * (g.reshape(-1)[0] / np.float32(size)),)

    return _node(_as_scalar(np.mean(np.maximum(x, np.float32(0.0)))), (a,), backward_fn)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------


def _toposort(root: Tensor) -> list[Tensor]:
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
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad leaf reachable from ``loss``.

    ``loss`` must be scalar. Interior gradients are kept only for the
    duration of the pass; leaf gradients accumulate across calls.
    """
    if loss.shape != (1, 1, 1, 1):
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _toposort(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1, 1, 1), dtype=np.float32)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            cur = grads.get(id(parent))
            grads[id(parent)] = pg if cur is None else cur + pg


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


@dataclass
class GradcheckReport:
    """Worst relative error between analytic and numeric gradients, per input."""

    per_input: list[float]

    @property
    def max_error(self) -> float:
        return max(self.per_input) if self.per_input else 0.0


def gradcheck(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-3,
    rtol: float = 1e-3,
    atol: float = 1e-4,
) -> GradcheckReport:
    """Compare analytic gradients of scalar-valued ``f`` with central differences.

    The reported error for one element is |a - n| / (atol/rtol + max(|a|, |n|)),
    so ``max_error < rtol`` is equivalent to allclose(a, n, rtol, atol). The
    numeric difference divides by the realized float32 step, which keeps
    exactly-linear functions at error 0.
    """
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    out = f(*inputs)
    if out.shape != (1, 1, 1, 1):
        raise ShapeError("gradcheck needs a scalar-valued function")
    backward(out)
    analytic = [np.zeros(t.shape, np.float32) if t.grad is None else t.grad.copy() for t in inputs]

    errors: list[float] = []
    for t, a in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        num = np.zeros_like(flat, dtype=np.float64)
        for i in range(flat.size):
            orig = flat[i]
            hi = np.float32(orig + h)
            lo = np.float32(orig - h)
            flat[i] = hi
            f_hi = f(*inputs).item()
            flat[i] = lo
            f_lo = f(*inputs).item()
            flat[i] = orig
            num[i] = (f_hi - f_lo) / (float(hi) - float(lo))
        aa = a.reshape(-1).astype(np.float64)
        denom = float(atol) / float(rtol) + np.maximum(np.abs(aa), np.abs(num))
        errors.append(float(np.max(np.abs(aa - num) / denom)) if flat.size else 0.0)
    return GradcheckReport(per_input=errors)
