"""Dense arrays with reverse-mode differentiation.

Just enough machinery for a small non-causal transformer: matmul,
elementwise ops, softmax, layer norm, embedding gather/scatter, masked
cross-entropy. Values are numpy arrays (float32 for training, float64
allowed in tests and oracles); gradients are accumulated by walking the
tape in reverse topological order.
"""

from __future__ import annotations

import numpy as np


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required."""


def _as_array(x, dtype):
    if isinstance(x, np.ndarray):
        return x.astype(dtype, copy=False)
    return np.asarray(x, dtype=dtype)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A numpy array plus an optional gradient slot and a backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False, dtype=None, _parents=()):
        if isinstance(data, Tensor):
            data = data.data
        self.data = _as_array(data, dtype or getattr(data, "dtype", np.float32))
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float32)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._parents = _parents

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ---- operators -------------------------------------------------

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def __add__(self, other):
        other = self._coerce(other)
        out = _make(self.data + other.data, (self, other))
        if out.requires_grad:
            def bwd(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(g, other.data.shape))
            out._backward = bwd
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _make(-self.data, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        out = _make(self.data * other.data, (self, other))
        if out.requires_grad:
            def bwd(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g * other.data, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(g * self.data, other.data.shape))
            out._backward = bwd
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        out = _make(self.data / other.data, (self, other))
        if out.requires_grad:
            def bwd(g):
                if self.requires_grad:
                    self._accumulate(_unbroadcast(g / other.data, self.data.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(-g * self.data / other.data**2, other.data.shape))
            out._backward = bwd
        return out

    def __pow__(self, p):
        assert np.isscalar(p)
        out = _make(self.data ** p, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g * p * self.data ** (p - 1))
        return out

    def __matmul__(self, other):
        other = self._coerce(other)
        out = _make(np.matmul(self.data, other.data), (self, other))
        if out.requires_grad:
            def bwd(g):
                if self.requires_grad:
                    ga = np.matmul(g, np.swapaxes(other.data, -1, -2))
                    self._accumulate(_unbroadcast(ga, self.data.shape))
                if other.requires_grad:
                    gb = np.matmul(np.swapaxes(self.data, -1, -2), g)
                    other._accumulate(_unbroadcast(gb, other.data.shape))
            out._backward = bwd
        return out

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _make(self.data.reshape(shape), (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g.reshape(self.data.shape))
        return out

    def transpose(self, *axes):
        out = _make(np.transpose(self.data, axes), (self,))
        if out.requires_grad:
            inv = np.argsort(axes)
            out._backward = lambda g: self._accumulate(np.transpose(g, inv))
        return out

    def sum(self, axis=None, keepdims=False):
        out = _make(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out.requires_grad:
            def bwd(g):
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(g, self.data.shape))
            out._backward = bwd
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def relu(self):
        out = _make(np.maximum(self.data, 0), (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g * (self.data > 0))
        return out

    def tanh(self):
        y = np.tanh(self.data)
        out = _make(y, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g * (1 - y * y))
        return out


def _make(data: np.ndarray, parents: tuple) -> Tensor:
    req = any(p.requires_grad for p in parents)
    t = Tensor(data, requires_grad=req, _parents=parents if req else ())
    return t


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    out = _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]
        def bwd(g):
            for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
                if t.requires_grad:
                    t._accumulate(piece)
        out._backward = bwd
    return out


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather; backward scatter-adds into the table."""
    ids = np.asarray(ids)
    out = _make(weight.data[ids], (weight,))
    if out.requires_grad:
        def bwd(g):
            gw = np.zeros_like(weight.data)
            np.add.at(gw, ids, g)
            weight._accumulate(gw)
        out._backward = bwd
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = _make(xhat * gain.data + bias.data, (x, gain, bias))
    if out.requires_grad:
        def bwd(g):
            d = x.data.shape[-1]
            if gain.requires_grad:
                gain._accumulate(_unbroadcast(g * xhat, gain.data.shape))
            if bias.requires_grad:
                bias._accumulate(_unbroadcast(g, bias.data.shape))
            if x.requires_grad:
                gx_hat = g * gain.data
                gx = inv / d * (d * gx_hat
                                - gx_hat.sum(axis=-1, keepdims=True)
                                - xhat * (gx_hat * xhat).sum(axis=-1, keepdims=True))
                x._accumulate(gx)
        out._backward = bwd
    return out


def softmax_array(logits: np.ndarray, temperature: float = 1.0, axis: int = -1) -> np.ndarray:
    """Stable softmax on a raw array (max-subtraction before exponentiation)."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    logits = np.asarray(logits, dtype=np.result_type(logits, np.float32))
    if not np.all(np.isfinite(logits)):
        raise NumericError("softmax: non-finite logits")
    z = logits / temperature
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(logits, temperature: float = 1.0, axis: int = -1):
    """Softmax over the last axis with temperature; Tensor in, Tensor out."""
    if not isinstance(logits, Tensor):
        return softmax_array(logits, temperature, axis)
    p = softmax_array(logits.data, temperature, axis)
    out = _make(p, (logits,))
    if out.requires_grad:
        def bwd(g):
            dot = (g * p).sum(axis=axis, keepdims=True)
            logits._accumulate((g - dot) * p / temperature)
        out._backward = bwd
    return out


def log_softmax_array(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def cross_entropy(logits: Tensor, targets, label_smoothing: float = 0.0,
                  weight_mask=None) -> Tensor:
    """Mean over masked positions of -sum_k t_k log p_k.

    t = (1-eps) * onehot(target) + eps / v, p = softmax(logits, 1).
    Logits may carry leading batch axes; the last axis is the vocabulary.
    """
    if not 0.0 <= label_smoothing < 1.0:
        raise ValueError(f"label_smoothing must be in [0, 1), got {label_smoothing}")
    if not isinstance(logits, Tensor):
        logits = Tensor(logits)
    v = logits.data.shape[-1]
    flat = logits.data.reshape(-1, v)
    tgt = np.asarray(targets).reshape(-1)
    if tgt.shape[0] != flat.shape[0]:
        raise ValueError("targets do not match logits positions")
    if tgt.min() < 0 or tgt.max() >= v:
        raise ValueError(f"target id out of range [0, {v})")
    if weight_mask is None:
        mask = np.ones(flat.shape[0], dtype=logits.data.dtype)
    else:
        mask = np.asarray(weight_mask, dtype=logits.data.dtype).reshape(-1)
    total = mask.sum()
    if total <= 0:
        raise ValueError("weight_mask must select at least one position")
    if not np.all(np.isfinite(flat)):
        raise NumericError("cross_entropy: non-finite logits")

    logp = log_softmax_array(flat)
    eps = label_smoothing
    rows = np.arange(flat.shape[0])
    nll = -(1.0 - eps) * logp[rows, tgt] - (eps / v) * logp.sum(axis=-1)
    value = (nll * mask).sum() / total

    out = _make(np.asarray(value, dtype=logits.data.dtype), (logits,))
    if out.requires_grad:
        def bwd(g):
            p = np.exp(logp)
            t = np.full_like(p, eps / v)
            t[rows, tgt] += 1.0 - eps
            gl = (p - t) * (mask / total)[:, None] * g
            logits._accumulate(gl.reshape(logits.data.shape))
        out._backward = bwd
    return out


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    if p <= 0:
        return x
    keep = (rng.random(x.data.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    return x * Tensor(keep)


class ParamSet:
    """Named, ordered collection of parameter Tensors."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, data, requires_grad: bool = True) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = data if isinstance(data, Tensor) else Tensor(data, requires_grad=requires_grad)
        t.requires_grad = requires_grad
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def total_count(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def copy_values(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]):
        for k, t in self._params.items():
            src = values[k]
            if src.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {k}: {src.shape} vs {t.data.shape}")
            t.data = src.astype(t.data.dtype).copy()

    def astype(self, dtype) -> "ParamSet":
        out = ParamSet()
        for k, t in self._params.items():
            out.add(k, Tensor(t.data.astype(dtype), requires_grad=t.requires_grad))
        return out


def grad_check(loss_fn, params: ParamSet, step: float = 1e-3,
               max_coords: int = 512, seed: int = 0, full: bool = False) -> float:
    """Max relative error of reverse-mode gradients vs central differences.

    loss_fn must be deterministic given the parameter values (any internal
    randomness fixed by its own seed). Checks a fixed-seed subsample of at
    most `max_coords` coordinates per tensor unless `full` is set.

    Reverse-mode gradients are taken from the parameters' own precision;
    the finite-difference oracle always evaluates on a temporary float64
    upcast of the parameters (a 32-bit loss is too quantized to difference).
    """
    params.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for k, t in params.items()}

    saved = {k: t.data for k, t in params.items()}
    for t in params._params.values():
        t.data = t.data.astype(np.float64)
    try:
        rng = np.random.default_rng(seed)
        worst = 0.0
        for name, t in params.items():
            if not t.requires_grad:
                continue
            # Gradient coordinates below the dtype's noise floor carry no
            # meaningful relative error; compare those absolutely.
            floor = max(1e-8, 1e3 * float(np.finfo(saved[name].dtype).eps))
            n = t.data.size
            if full or n <= max_coords:
                coords = np.arange(n)
            else:
                coords = rng.choice(n, size=max_coords, replace=False)
            flat = t.data.reshape(-1)
            for c in coords:
                orig = flat[c]
                a = analytic[name].reshape(-1)[c]
                # The optimal step balances truncation against roundoff and
                # differs per coordinate; try two scales and keep the closer
                # estimate.
                best = None
                for h in (step, 3 * step):
                    flat[c] = orig + h
                    f_plus = loss_fn().item()
                    flat[c] = orig - h
                    f_minus = loss_fn().item()
                    flat[c] = orig
                    numeric = (f_plus - f_minus) / (2 * h)
                    if best is None or abs(a - numeric) < abs(a - best):
                        best = numeric
                denom = max(abs(a), abs(best), floor)
                worst = max(worst, abs(a - best) / denom)
    finally:
        for k, t in params._params.items():
            t.data = saved[k]
    return worst
