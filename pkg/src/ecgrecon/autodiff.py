"""Minimal reverse-mode autodiff over numpy arrays.

Every operation on :class:`Tensor` records its parents and a closure that
pushes the output gradient back to them. :meth:`Tensor.backward` walks that
graph in reverse topological order, visiting each node once.

Only the layer set the reconstruction network needs is provided. Layout
conventions follow the mainstream deep-learning frameworks: inputs are
``[batch, channels, *spatial]``, convolutions are cross-correlations (no
kernel flip) and transposed-convolution weights are ``[C_in, C_out, kh, kw]``.
"""

import contextlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kernels

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.name = name

    # -- basics -----------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __len__(self):
        return self.shape[0]

    # -- graph --------------------------------------------------------------
    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf that requires it."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
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
        grads = {id(self): np.asarray(grad, dtype=self.dtype)}
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
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # -- arithmetic --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_lift(other, self.dtype)))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_lift(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def __getitem__(self, idx):
        return getitem(self, idx)


def _lift(x, dtype=None):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=dtype))


def _make(data, parents, backward):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- elementwise ------------------------------------------------------------

def add(a, b):
    a, b = _lift(a), _lift(b, a.dtype if isinstance(a, Tensor) else None)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a):
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a, b):
    a = _lift(a)
    b = _lift(b, a.dtype)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)))


def div(a, b):
    a = _lift(a)
    b = _lift(b, a.dtype)
    out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)))


def power(a, p):
    return _make(a.data ** p, (a,), lambda g: (g * p * a.data ** (p - 1),))


def sqrt(a):
    """Square root; the gradient at exactly 0 is taken as 0 instead of inf."""
    out = np.sqrt(a.data)

    def back(g):
        with np.errstate(divide="ignore"):
            d = np.where(out > 0, 0.5 / np.where(out > 0, out, 1), 0)
        return (g * d,)
    return _make(out, (a,), back)


def tanh(a):
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1 - out * out),))


tanh_act = tanh


def leaky_relu(a, slope=0.2):
    pos = a.data > 0
    out = np.where(pos, a.data, a.data * a.dtype.type(slope))
    return _make(out, (a,), lambda g: (np.where(pos, g, g * a.dtype.type(slope)),))


def dropout(a, p=0.2, training=True, rng=None):
    """Inverted dropout: zero with probability ``p`` and rescale by ``1/(1-p)``."""
    if not training or p == 0:
        return a
    if not 0 <= p < 1:
        raise ValueError("dropout probability must be in [0, 1)")
    rng = rng if rng is not None else np.random.default_rng()
    keep = (rng.random(a.shape) >= p).astype(a.dtype) / a.dtype.type(1 - p)
    return _make(a.data * keep, (a,), lambda g: (g * keep,))


# -- reductions / shape -----------------------------------------------------

def tsum(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)
    return _make(out, (a,), back)


def tmean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * a.dtype.type(1.0 / n)


def reshape(a, shape):
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes):
    inv = np.argsort(axes)
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def getitem(a, idx):
    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)
    return _make(a.data[idx], (a,), back)


def concat(tensors, axis=0):
    tensors = [_lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return _make(out, tensors, lambda g: tuple(np.split(g, cuts, axis=axis)))


# -- convolutions -------------------------------------------------------------

def _pair(v):
    return (v, v) if np.isscalar(v) else tuple(v)


def _windows2d(xp, kh, kw, sh, sw, ho, wo):
    """``[B, C, Hp, Wp]`` -> ``[B*ho*wo, C*kh*kw]`` patch matrix."""
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw][:, :, :ho, :wo]
    b, c = xp.shape[:2]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * kh * kw)


def _scatter2d(cols, b, c, hp, wp, kh, kw, sh, sw, ho, wo, dtype):
    """Adjoint of :func:`_windows2d`: sum patches back onto a padded canvas."""
    return kernels.col2im2d(cols.astype(dtype, copy=False), b, c, hp, wp, kh, kw, sh, sw, ho, wo)


def _conv2d_out(h, w, kh, kw, sh, sw, ph, pw):
    return (h + 2 * ph - kh) // sh + 1, (w + 2 * pw - kw) // sw + 1


def _batched(x, nd):
    return (x, False) if x.ndim == nd + 2 else (x.reshape((1,) + x.shape), True)


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2D cross-correlation.

    Parameters
    ----------
    x : Tensor, shape (B, C_in, H, W) or (C_in, H, W)
    weight : Tensor, shape (C_out, C_in, kh, kw)
    bias : Tensor, shape (C_out,), optional
    stride, padding : int or pair
    """
    x, unbatched = _batched(x, 2)
    if unbatched:
        return conv2d(x, weight, bias, stride, padding).reshape(
            _conv_shape_unbatched(x, weight, stride, padding))
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    b, c, h, w = x.shape
    co, ci, kh, kw = weight.shape
    if ci != c:
        raise ValueError(f"conv2d: input has {c} channels, weight expects {ci}")
    ho, wo = _conv2d_out(h, w, kh, kw, sh, sw, ph, pw)
    if ho < 1 or wo < 1:
        raise ValueError("conv2d: kernel larger than padded input")
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = _windows2d(xp, kh, kw, sh, sw, ho, wo)
    wmat = weight.data.reshape(co, -1)
    y = cols @ wmat.T
    if bias is not None:
        y = y + bias.data
    out = y.reshape(b, ho, wo, co).transpose(0, 3, 1, 2)

    def back(g):
        gm = g.transpose(0, 2, 3, 1).reshape(-1, co)
        gx = None
        if x.requires_grad:
            gx = _scatter2d(gm @ wmat, b, c, h + 2 * ph, w + 2 * pw, kh, kw, sh, sw, ho, wo,
                            x.dtype)[:, :, ph:ph + h, pw:pw + w]
        gw = (gm.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gb = gm.sum(axis=0) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) + ((bias,) if bias is not None else ())
    return _make(np.ascontiguousarray(out), parents, back)


def _conv_shape_unbatched(x, weight, stride, padding):
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    ho, wo = _conv2d_out(x.shape[2], x.shape[3], weight.shape[2], weight.shape[3], sh, sw, ph, pw)
    return (weight.shape[0], ho, wo)


def conv_transpose2d(x, weight, bias=None, stride=1, padding=0):
    """Transposed 2D convolution (the input-gradient of :func:`conv2d`).

    ``weight`` is ``(C_in, C_out, kh, kw)``; the output size per axis is
    ``(H - 1) * stride - 2 * padding + k``.
    """
    x, unbatched = _batched(x, 2)
    if unbatched:
        y = conv_transpose2d(x, weight, bias, stride, padding)
        return y.reshape(y.shape[1:])
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    b, ci, h, w = x.shape
    ci_w, co, kh, kw = weight.shape
    if ci != ci_w:
        raise ValueError(f"conv_transpose2d: input has {ci} channels, weight expects {ci_w}")
    hp, wp = (h - 1) * sh + kh, (w - 1) * sw + kw
    ho, wo = hp - 2 * ph, wp - 2 * pw
    if ho < 1 or wo < 1:
        raise ValueError("conv_transpose2d: padding removes the whole output")
    xm = x.data.transpose(0, 2, 3, 1).reshape(-1, ci)
    wmat = weight.data.reshape(ci, -1)
    canvas = _scatter2d(xm @ wmat, b, co, hp, wp, kh, kw, sh, sw, h, w, x.dtype)
    out = canvas[:, :, ph:ph + ho, pw:pw + wo]
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)

    def back(g):
        gp = np.pad(g, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        cols = _windows2d(gp, kh, kw, sh, sw, h, w)
        gx = (cols @ wmat.T).reshape(b, h, w, ci).transpose(0, 3, 1, 2) if x.requires_grad else None
        gw = (xm.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) + ((bias,) if bias is not None else ())
    return _make(np.ascontiguousarray(out), parents, back)


transposed_conv2d = conv_transpose2d


def conv1d(x, weight, bias=None, stride=1, padding=0, groups=1):
    """1D cross-correlation with optional channel groups.

    ``x`` is ``(B, groups*C_in, M)``, ``weight`` is ``(groups*C_out, C_in, k)``.
    Each group is convolved with its own weights; the reconstruction network
    uses ``groups=12`` to give every lead an independent filter bank.
    """
    x, unbatched = _batched(x, 1)
    if unbatched:
        y = conv1d(x, weight, bias, stride, padding, groups)
        return y.reshape(y.shape[1:])
    b, c, m = x.shape
    oc, ci, k = weight.shape
    gsz = groups
    if c != gsz * ci or oc % gsz:
        raise ValueError(f"conv1d: channels {c} incompatible with weight {weight.shape} "
                         f"and groups={groups}")
    co = oc // gsz
    mo = (m + 2 * padding - k) // stride + 1
    if mo < 1:
        raise ValueError("conv1d: kernel larger than padded input")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding)))
    win = sliding_window_view(xp, k, axis=2)[:, :, ::stride][:, :, :mo]  # B, C, mo, k
    cols = (win.reshape(b, gsz, ci, mo, k).transpose(1, 0, 3, 2, 4)
            .reshape(gsz, b * mo, ci * k))
    wmat = weight.data.reshape(gsz, co, ci * k).transpose(0, 2, 1)  # G, ci*k, co
    y = np.matmul(cols, wmat)  # G, B*mo, co
    out = y.reshape(gsz, b, mo, co).transpose(1, 0, 3, 2).reshape(b, oc, mo)
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1)

    def back(g):
        gm = g.reshape(b, gsz, co, mo).transpose(1, 0, 3, 2).reshape(gsz, b * mo, co)
        gx = gw = gb = None
        if x.requires_grad:
            gcols = np.matmul(gm, wmat.transpose(0, 2, 1))  # G, B*mo, ci*k
            gcols = gcols.reshape(gsz, b, mo, ci, k).transpose(1, 0, 3, 2, 4).reshape(b, c, mo, k)
            gxp = np.zeros((b, c, m + 2 * padding), dtype=x.dtype)
            for j in range(k):
                gxp[:, :, j:j + stride * (mo - 1) + 1:stride] += gcols[..., j]
            gx = gxp[:, :, padding:padding + m]
        if weight.requires_grad:
            gw = np.matmul(cols.transpose(0, 2, 1), gm)  # G, ci*k, co
            gw = gw.transpose(0, 2, 1).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2))
        return gx, gw, gb

    parents = (x, weight) + ((bias,) if bias is not None else ())
    return _make(np.ascontiguousarray(out), parents, back)


# -- normalization ---------------------------------------------------------------

def batchnorm(x, gamma, beta, running_mean=None, running_var=None, training=True,
              momentum=0.1, eps=1e-5, feature_axes=(1,)):
    """Batch normalization over every axis not in ``feature_axes``.

    ``gamma``/``beta`` and the running statistics have the shape of the
    feature axes. In training mode the running statistics (plain arrays) are
    updated in place with the unbiased batch variance.
    """
    feature_axes = tuple(feature_axes)
    red = tuple(i for i in range(x.ndim) if i not in feature_axes)
    bshape = tuple(x.shape[i] if i in feature_axes else 1 for i in range(x.ndim))
    g_ = gamma.data.reshape(bshape)
    n = int(np.prod([x.shape[i] for i in red]))
    dt = x.dtype.type
    if training:
        mu = x.data.mean(axis=red, keepdims=True)
        xc = x.data - mu
        var = (xc * xc).mean(axis=red, keepdims=True)
        if running_mean is not None:
            running_mean *= 1 - momentum
            running_mean += momentum * mu.reshape(running_mean.shape)
            unbiased = var * (n / max(n - 1, 1))
            running_var *= 1 - momentum
            running_var += momentum * unbiased.reshape(running_var.shape)
    else:
        mu = running_mean.reshape(bshape).astype(x.dtype)
        xc = x.data - mu
        var = running_var.reshape(bshape).astype(x.dtype)
    inv = dt(1) / np.sqrt(var + dt(eps))
    xhat = xc * inv
    out = g_ * xhat + beta.data.reshape(bshape)

    def back(g):
        gg = (g * xhat).sum(axis=red).reshape(gamma.shape) if gamma.requires_grad else None
        gbeta = g.sum(axis=red).reshape(beta.shape) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            dxh = g * g_
            if training:
                gx = inv / n * (n * dxh - dxh.sum(axis=red, keepdims=True)
                                - xhat * (dxh * xhat).sum(axis=red, keepdims=True))
            else:
                gx = dxh * inv
        return gx, gg, gbeta

    return _make(out, (x, gamma, beta), back)


# -- finite differences -----------------------------------------------------------

def fd_check(fn, inputs, h=1e-5, seed=0, max_elements=None, floor=1e-6):
    """Compare reverse-mode gradients with central differences.

    ``fn`` maps the list of input tensors to an output tensor. The output is
    contracted with a fixed random projection so that every output element
    contributes. For each input that requires a gradient, the error is
    ``max|analytic - numeric| / max(|analytic|, |numeric|, floor)`` over all
    (or ``max_elements`` randomly chosen) entries; the worst input is
    returned. The floor keeps inputs whose true gradient is zero (a bias
    feeding a batchnorm) from dividing difference noise by itself.
    """
    rng = np.random.default_rng([seed, 0xFD])
    out = fn(inputs)
    proj = rng.standard_normal(out.shape)

    def scalar():
        with no_grad():
            return float((fn(inputs).data * proj).sum())

    for t in inputs:
        t.grad = None
    (fn(inputs) * Tensor(proj.astype(out.dtype))).sum().backward()
    worst = 0.0
    for t in inputs:
        if not t.requires_grad:
            continue
        if not t.data.flags.c_contiguous:
            t.data = np.ascontiguousarray(t.data)
        ana = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_elements is not None and flat.size > max_elements:
            idx = rng.choice(flat.size, size=max_elements, replace=False)
        num = np.empty(idx.size)
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + h
            fp = scalar()
            flat[i] = old - h
            fm = scalar()
            flat[i] = old
            num[j] = (fp - fm) / (2 * h)
        a = ana.reshape(-1)[idx]
        scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(num), initial=0.0)),
                    floor)
        worst = max(worst, float(np.max(np.abs(a - num), initial=0.0)) / scale)
    return worst
