"""Dense tensors with a reverse-mode autodiff tape over numpy kernels.

Conventions:
  * images and feature maps are NHWC, row-major, float32 by default
    (float64 supported throughout for high-precision checks);
  * gradients are recorded on an explicit :class:`Tape`; one training step
    owns one tape, and a tape can be walked backward exactly once;
  * every kernel has a fixed reduction order, so repeated forward passes on
    identical inputs are bit-identical.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf as _erf

__all__ = [
    "Tensor",
    "Tape",
    "no_grad",
    "tensor",
    "zeros",
    "backward",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "abs_",
    "sqrt",
    "gelu",
    "softmax",
    "matmul",
    "linear",
    "layer_norm",
    "conv2d",
    "avg_pool2d",
    "pixel_shuffle_down",
    "pixel_shuffle_up",
    "reshape",
    "transpose",
    "concat",
    "pad2d",
    "crop2d",
    "roll2d",
    "gather",
    "reduce_sum",
    "reduce_mean",
    "l1_distance",
]

_ACTIVE_TAPE: "Tape | None" = None
_GRAD_ENABLED: bool = True


class Tape:
    """Ordered record of differentiable ops; backward walks it in reverse.

    Construction order is topological by definition (an op's inputs always
    exist before its output), so a single reverse sweep visits every node
    exactly once.
    """

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("tapes do not nest; one step owns one tape")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def record(self, out: "Tensor", inputs: tuple["Tensor", ...], backward_fn) -> None:
        self.nodes.append((out, inputs, backward_fn))
        out._tape = self
        out._on_tape = True

    def backward(self, loss: "Tensor") -> None:
        if self.consumed:
            raise RuntimeError("tape already walked backward; build a new tape")
        if loss.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        self.consumed = True
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        owned: set[int] = set()
        for out, inputs, backward_fn in reversed(self.nodes):
            g_out = grads.pop(id(out), None)
            owned.discard(id(out))
            if g_out is None:
                continue
            needs = tuple(t._on_tape or t.requires_grad for t in inputs)
            g_inputs = backward_fn(g_out, needs)
            for t, g in zip(inputs, g_inputs):
                if g is None:
                    continue
                if t.requires_grad:
                    if t.grad is None:
                        t.grad = np.zeros_like(t.data)
                    t.grad += g
                if t._tape is self:
                    key = id(t)
                    if key not in grads:
                        # borrowed reference; closures may alias their
                        # grad_out, so never mutate it in place
                        grads[key] = g
                    elif key in owned:
                        grads[key] += g
                    else:
                        grads[key] = grads[key] + g
                        owned.add(key)


class no_grad:
    """Context that suspends tape recording (inference inside a taped step)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    """N-dimensional dense array, optionally participating in the grad tape."""

    __slots__ = ("data", "requires_grad", "grad", "_tape", "_on_tape")

    def __init__(self, data, dtype=None, requires_grad: bool = False):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._tape: Tape | None = None
        self._on_tape = requires_grad

    # -- bookkeeping ---------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def backward(self) -> None:
        backward(self)

    def assert_finite(self, what: str = "tensor") -> "Tensor":
        if not np.all(np.isfinite(self.data)):
            raise FloatingPointError(f"non-finite values in {what}")
        return self

    def __repr__(self):
        req = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}{req})"

    # -- operator sugar --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return _slice(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)


def tensor(data, dtype=None, requires_grad: bool = False) -> Tensor:
    return Tensor(data, dtype=dtype, requires_grad=requires_grad)


def zeros(shape, dtype=np.float32, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def backward(loss: Tensor) -> None:
    """Populate .grad on every reachable requires_grad tensor."""
    if loss._tape is None:
        raise RuntimeError("loss is not connected to a tape")
    loss._tape.backward(loss)


# -- recording helpers ---------------------------------------------------------


def _coerce(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _result_dtype(*ts: Tensor):
    dt = ts[0].dtype
    for t in ts[1:]:
        if t.dtype != dt:
            raise TypeError(f"mixed tensor dtypes {dt} vs {t.dtype}")
    return dt


def _record(out_data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(out_data)
    if _GRAD_ENABLED and _ACTIVE_TAPE is not None and any(
        t._on_tape or t.requires_grad for t in inputs
    ):
        _ACTIVE_TAPE.record(out, inputs, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum the broadcast axes of grad back down to `shape`."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- elementwise and broadcasting ops ------------------------------------------


def add(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a, dtype=b.dtype))
    b = _coerce(b, a)
    _result_dtype(a, b)

    def bwd(g, needs):
        return (
            _unbroadcast(g, a.shape) if needs[0] else None,
            _unbroadcast(g, b.shape) if needs[1] else None,
        )

    return _record(a.data + b.data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a, dtype=b.dtype))
    b = _coerce(b, a)
    _result_dtype(a, b)

    def bwd(g, needs):
        return (
            _unbroadcast(g, a.shape) if needs[0] else None,
            _unbroadcast(-g, b.shape) if needs[1] else None,
        )

    return _record(a.data - b.data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a, dtype=b.dtype))
    b = _coerce(b, a)
    _result_dtype(a, b)

    def bwd(g, needs):
        return (
            _unbroadcast(g * b.data, a.shape) if needs[0] else None,
            _unbroadcast(g * a.data, b.shape) if needs[1] else None,
        )

    return _record(a.data * b.data, (a, b), bwd)


def div(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(np.asarray(a, dtype=b.dtype))
    b = _coerce(b, a)
    _result_dtype(a, b)

    def bwd(g, needs):
        ga = _unbroadcast(g / b.data, a.shape) if needs[0] else None
        gb = (
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if needs[1] else None
        )
        return ga, gb

    return _record(a.data / b.data, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    return _record(-a.data, (a,), lambda g, needs: (-g if needs[0] else None,))


def abs_(a: Tensor) -> Tensor:
    sign = np.sign(a.data)

    def bwd(g, needs):
        return (g * sign if needs[0] else None,)

    return _record(np.abs(a.data), (a,), bwd)


def sqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)

    def bwd(g, needs):
        return (g * (0.5 / out_data) if needs[0] else None,)

    return _record(out_data, (a,), bwd)


def gelu(a: Tensor) -> Tensor:
    """Exact Gaussian-CDF gelu: x * Phi(x), not the tanh approximation."""
    x = a.data
    phi_cdf = 0.5 * (1.0 + _erf(x * x.dtype.type(1.0 / np.sqrt(2.0))))
    out_data = x * phi_cdf

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        pdf = np.exp(-0.5 * x * x) * x.dtype.type(1.0 / np.sqrt(2.0 * np.pi))
        return (g * (phi_cdf + x * pdf),)

    return _record(out_data, (a,), bwd)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / np.sum(e, axis=axis, keepdims=True)

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        inner = np.sum(g * out_data, axis=axis, keepdims=True)
        return (out_data * (g - inner),)

    return _record(out_data, (a,), bwd)


# -- linear algebra -------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _result_dtype(a, b)
    out_data = np.matmul(a.data, b.data)

    def bwd(g, needs):
        ga = gb = None
        if needs[0]:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            ga = _unbroadcast(ga, a.shape)
        if needs[1]:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            gb = _unbroadcast(gb, b.shape)
        return ga, gb

    return _record(out_data, (a, b), bwd)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map along the last axis: x @ w (+ b)."""
    _result_dtype(x, w)
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"linear: {x.shape[-1]} inputs vs weight {w.shape}")
    out_data = np.matmul(x.data, w.data)
    if b is not None:
        out_data = out_data + b.data

    def bwd(g, needs):
        gx = gw = gb = None
        if needs[0]:
            gx = np.matmul(g, w.data.T)
        if needs[1]:
            gw = np.matmul(
                x.data.reshape(-1, x.shape[-1]).T, g.reshape(-1, g.shape[-1])
            )
        if b is not None and needs[2]:
            gb = g.reshape(-1, g.shape[-1]).sum(axis=0)
        return (gx, gw, gb) if b is not None else (gx, gw)

    inputs = (x, w) if b is None else (x, w, b)
    return _record(out_data, inputs, bwd)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the trailing (channel) axis, then apply the affine pair."""
    if x.shape[-1] == 0:
        raise ValueError("layer_norm: zero channel extent")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = xc * inv
    out_data = xhat * gamma.data + beta.data

    def bwd(g, needs):
        gx = gg = gb = None
        if needs[0]:
            gh = g * gamma.data
            gx = (
                gh
                - gh.mean(axis=-1, keepdims=True)
                - xhat * np.mean(gh * xhat, axis=-1, keepdims=True)
            ) * inv
        if needs[1]:
            gg = (g * xhat).reshape(-1, x.shape[-1]).sum(axis=0)
        if needs[2]:
            gb = g.reshape(-1, x.shape[-1]).sum(axis=0)
        return gx, gg, gb

    return _record(out_data, (x, gamma, beta), bwd)


# -- convolution and pooling ----------------------------------------------------


def conv2d(
    x: Tensor,
    w: Tensor,
    b: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    """Grouped 2-D convolution on NHWC input.

    Weight layout is (kh, kw, cin_per_group, cout) with output channels
    ordered group-major.  Bias is omitted when b is None.
    """
    _result_dtype(x, w)
    if x.ndim != 4:
        raise ValueError("conv2d expects NHWC input")
    n, h, wd, cin = x.shape
    kh, kw, cin_g, cout = w.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("conv2d: kernel extents must be odd")
    if cin % groups != 0 or cout % groups != 0:
        raise ValueError(f"conv2d: groups={groups} does not divide channels")
    if cin // groups != cin_g:
        raise ValueError(
            f"conv2d: weight expects {cin_g} in-channels per group, input has {cin // groups}"
        )
    cout_g = cout // groups

    xp = x.data
    if padding:
        buf = np.zeros(
            (n, h + 2 * padding, wd + 2 * padding, cin), dtype=x.dtype
        )
        buf[:, padding : padding + h, padding : padding + wd, :] = xp
        xp = buf
    hp, wp = xp.shape[1], xp.shape[2]
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ValueError("conv2d: kernel larger than padded input")

    depthwise = groups == cin and cin_g == 1 and cout == cin and stride == 1
    if depthwise:
        # shift-accumulate; avoids materializing any patch tensor
        out_data = np.zeros((n, ho, wo, cout), dtype=xp.dtype)
        for a in range(kh):
            for c in range(kw):
                out_data += xp[:, a : a + ho, c : c + wo, :] * w.data[a, c, 0, :]
    elif groups == 1:
        view = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
        view = view[:, ::stride, ::stride]  # (n, ho, wo, cin, kh, kw)
        cols = view.reshape(n * ho * wo, cin * kh * kw)
        wr2 = w.data.transpose(2, 0, 1, 3).reshape(cin * kh * kw, cout)
        out_data = (cols @ wr2).reshape(n, ho, wo, cout)
    else:
        view = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
        view = view[:, ::stride, ::stride]
        patches = view.reshape(n, ho, wo, groups, cin_g, kh, kw)
        wr = w.data.reshape(kh, kw, cin_g, groups, cout_g)
        out_data = np.einsum("nxygiab,abigo->nxygo", patches, wr, optimize=True)
        out_data = np.ascontiguousarray(out_data).reshape(n, ho, wo, cout)
    if b is not None:
        out_data = out_data + b.data

    def bwd(g, needs):
        gx = gw = gb = None
        if depthwise:
            if needs[1]:
                gw = np.empty_like(w.data)
                for a in range(kh):
                    for c in range(kw):
                        gw[a, c, 0, :] = np.einsum(
                            "nijc,nijc->c", xp[:, a : a + ho, c : c + wo, :], g
                        )
            if needs[0]:
                gxp = np.zeros((n, hp, wp, cin), dtype=g.dtype)
                for a in range(kh):
                    for c in range(kw):
                        gxp[:, a : a + ho, c : c + wo, :] += g * w.data[a, c, 0, :]
        elif groups == 1:
            g2 = g.reshape(n * ho * wo, cout)
            if needs[1]:
                gw = (cols.T @ g2).reshape(cin, kh, kw, cout).transpose(1, 2, 0, 3)
                gw = np.ascontiguousarray(gw)
            if needs[0]:
                gp = (g2 @ wr2.T).reshape(n, ho, wo, cin, kh, kw)
                gxp = np.zeros((n, hp, wp, cin), dtype=g.dtype)
                for a in range(kh):
                    for c in range(kw):
                        gxp[
                            :, a : a + stride * ho : stride, c : c + stride * wo : stride, :
                        ] += gp[:, :, :, :, a, c]
        else:
            gr = g.reshape(n, ho, wo, groups, cout_g)
            patches = (
                np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))[
                    :, ::stride, ::stride
                ].reshape(n, ho, wo, groups, cin_g, kh, kw)
            )
            wr = w.data.reshape(kh, kw, cin_g, groups, cout_g)
            if needs[1]:
                gw = np.einsum("nxygiab,nxygo->abigo", patches, gr, optimize=True)
                gw = np.ascontiguousarray(gw).reshape(kh, kw, cin_g, cout)
            if needs[0]:
                gp = np.einsum("nxygo,abigo->nxygiab", gr, wr, optimize=True)
                gp = gp.reshape(n, ho, wo, cin, kh, kw)
                gxp = np.zeros((n, hp, wp, cin), dtype=g.dtype)
                for a in range(kh):
                    for c in range(kw):
                        gxp[
                            :, a : a + stride * ho : stride, c : c + stride * wo : stride, :
                        ] += gp[:, :, :, :, a, c]
        if needs[0]:
            gx = (
                gxp[:, padding : padding + h, padding : padding + wd, :]
                if padding
                else gxp
            )
        if b is not None and needs[2]:
            gb = g.reshape(-1, cout).sum(axis=0)
        return (gx, gw, gb) if b is not None else (gx, gw)

    inputs = (x, w) if b is None else (x, w, b)
    return _record(out_data, inputs, bwd)


def avg_pool2d(x: Tensor, window: int, stride: int) -> Tensor:
    """Average pooling with exact tiling (window == stride)."""
    if window != stride:
        raise ValueError("avg_pool2d supports exact tiling only (window == stride)")
    if window == 1:
        return _record(x.data.copy(), (x,), lambda g, needs: (g if needs[0] else None,))
    if x.ndim != 4:
        raise ValueError("avg_pool2d expects NHWC input")
    n, h, w, c = x.shape
    if h % window or w % window:
        raise ValueError(f"avg_pool2d: {h}x{w} not divisible by window {window}")
    ho, wo = h // window, w // window
    blocks = x.data.reshape(n, ho, window, wo, window, c)
    out_data = blocks.mean(axis=(2, 4))

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        scale = g.dtype.type(1.0 / (window * window))
        gx = np.broadcast_to(
            (g * scale)[:, :, None, :, None, :], (n, ho, window, wo, window, c)
        )
        return (gx.reshape(n, h, w, c).copy(),)

    return _record(out_data, (x,), bwd)


# -- shape manipulation -----------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape

    def bwd(g, needs):
        return (g.reshape(old) if needs[0] else None,)

    return _record(a.data.reshape(shape), (a,), bwd)


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)

    def bwd(g, needs):
        return (np.ascontiguousarray(g.transpose(inv)) if needs[0] else None,)

    return _record(np.ascontiguousarray(a.data.transpose(axes)), (a,), bwd)


def concat(parts: list[Tensor], axis: int) -> Tensor:
    _result_dtype(*parts)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g, needs):
        out = []
        for i, p in enumerate(parts):
            if not needs[i]:
                out.append(None)
                continue
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            out.append(np.ascontiguousarray(g[tuple(sl)]))
        return tuple(out)

    return _record(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), bwd)


def _slice(a: Tensor, key) -> Tensor:
    out_data = a.data[key]
    if out_data.base is not None:
        out_data = out_data.copy()

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        gx = np.zeros_like(a.data)
        np.add.at(gx, key, g)
        return (gx,)

    return _record(out_data, (a,), bwd)


def pad2d(a: Tensor, bottom: int, right: int) -> Tensor:
    """Zero-pad the spatial axes of an NHWC tensor at the bottom/right."""
    if bottom == 0 and right == 0:
        return _record(a.data.copy(), (a,), lambda g, needs: (g if needs[0] else None,))
    n, h, w, c = a.shape

    def bwd(g, needs):
        return (np.ascontiguousarray(g[:, :h, :w, :]) if needs[0] else None,)

    out_data = np.pad(a.data, ((0, 0), (0, bottom), (0, right), (0, 0)))
    return _record(out_data, (a,), bwd)


def crop2d(a: Tensor, h: int, w: int) -> Tensor:
    """Crop an NHWC tensor to its top-left h x w region."""
    n, hh, ww, c = a.shape
    if h == hh and w == ww:
        return _record(a.data.copy(), (a,), lambda g, needs: (g if needs[0] else None,))

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        gx = np.zeros_like(a.data)
        gx[:, :h, :w, :] = g
        return (gx,)

    return _record(np.ascontiguousarray(a.data[:, :h, :w, :]), (a,), bwd)


def roll2d(a: Tensor, shift_h: int, shift_w: int) -> Tensor:
    """Toroidal roll of the spatial axes of an NHWC tensor."""

    def bwd(g, needs):
        return (np.roll(g, (-shift_h, -shift_w), axis=(1, 2)) if needs[0] else None,)

    return _record(np.roll(a.data, (shift_h, shift_w), axis=(1, 2)), (a,), bwd)


def gather(a: Tensor, index: np.ndarray, axis: int = 0) -> Tensor:
    """Take rows of `a` along `axis` with an integer index array."""
    index = np.asarray(index)
    out_data = np.take(a.data, index, axis=axis)

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        gx = np.zeros_like(a.data)
        moved = np.moveaxis(gx, axis, 0)
        np.add.at(moved, index, np.moveaxis(g, axis, 0) if index.ndim == 1 else g)
        return (gx,)

    return _record(out_data, (a,), bwd)


# -- reductions -------------------------------------------------------------------


def _norm_axis(axis, ndim):
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axis = _norm_axis(axis, a.ndim)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gk = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gk, a.shape).copy(),)

    return _record(out_data, (a,), bwd)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axis = _norm_axis(axis, a.ndim)
    count = (
        a.data.size
        if axis is None
        else int(np.prod([a.shape[ax] for ax in axis]))
    )
    out_data = a.data.mean(axis=axis, keepdims=keepdims)

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        scale = g.dtype.type(1.0 / count)
        if axis is None:
            return (np.broadcast_to(g * scale, a.shape).copy(),)
        gk = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gk * scale, a.shape).copy(),)

    return _record(out_data, (a,), bwd)


def l1_distance(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute difference (size-normalized L1)."""
    return reduce_mean(abs_(sub(a, b)))


# -- pixel shuffles ----------------------------------------------------------------


def _lift(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 3:
        return reshape(x, (1,) + x.shape), True
    return x, False


def pixel_shuffle_down(x: Tensor, r: int) -> Tensor:
    """(H, W, C) -> (H/r, W/r, r^2 C); channel index (dy*r + dx)*C + c."""
    x, lifted = _lift(x)
    n, h, w, c = x.shape
    if h % r or w % r:
        raise ValueError(f"pixel_shuffle_down: {h}x{w} not divisible by r={r}")
    t = reshape(x, (n, h // r, r, w // r, r, c))
    t = transpose(t, (0, 1, 3, 2, 4, 5))
    t = reshape(t, (n, h // r, w // r, r * r * c))
    return reshape(t, t.shape[1:]) if lifted else t


def pixel_shuffle_up(x: Tensor, r: int) -> Tensor:
    """Inverse of pixel_shuffle_down; channels must divide by r^2."""
    x, lifted = _lift(x)
    n, h, w, c = x.shape
    if c % (r * r):
        raise ValueError(f"pixel_shuffle_up: {c} channels not divisible by r^2={r * r}")
    t = reshape(x, (n, h, w, r, r, c // (r * r)))
    t = transpose(t, (0, 1, 3, 2, 4, 5))
    t = reshape(t, (n, h * r, w * r, c // (r * r)))
    return reshape(t, t.shape[1:]) if lifted else t
