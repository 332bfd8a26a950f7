"""Small numpy engine for the semantic autoencoders and the feature classifier.

Only the layer kinds those networks need are here (conv2d, convtranspose2d,
linear, 2x2 max pooling), each with a hand-written backward pass. Batched
tensors are ndarrays laid out (N, C, H, W) for feature maps and (N, F) for
flat vectors. Flattening is channel-major, row-major (plain C order).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

KINDS = ("conv2d", "convtranspose2d", "linear", "maxpool2d")
ACTIVATIONS = ("relu", "sigmoid", "none")


def _pair(v) -> tuple[int, int]:
    if isinstance(v, int):
        return (v, v)
    a, b = v
    return (int(a), int(b))


@dataclass(frozen=True)
class LayerSpec:
    """One row of an architecture table.

    ``in_ch``/``out_ch`` are channels for the conv kinds and features for
    ``linear``. ``reshape`` lets a linear layer hand a (C, H, W) map to the
    next transpose conv.
    """

    kind: str
    in_ch: int
    out_ch: int
    kernel: tuple[int, int] = (1, 1)
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    output_padding: tuple[int, int] = (0, 0)
    activation: str = "none"
    reshape: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        for name in ("kernel", "stride", "padding", "output_padding"):
            object.__setattr__(self, name, _pair(getattr(self, name)))
        if self.in_ch < 1 or self.out_ch < 1:
            raise ValueError(f"{self.kind}: channel/feature counts must be positive")
        if self.kind == "convtranspose2d":
            if any(o >= s for o, s in zip(self.output_padding, self.stride)):
                raise ValueError(
                    f"convtranspose2d: output_padding {self.output_padding} must be "
                    f"smaller than stride {self.stride}"
                )
        elif self.output_padding != (0, 0):
            raise ValueError(f"{self.kind}: output_padding only applies to convtranspose2d")
        if self.reshape is not None:
            if self.kind != "linear":
                raise ValueError("reshape only applies to linear layers")
            object.__setattr__(self, "reshape", tuple(int(d) for d in self.reshape))
            if int(np.prod(self.reshape)) != self.out_ch:
                raise ValueError(f"reshape {self.reshape} does not hold {self.out_ch} features")

    @property
    def has_params(self) -> bool:
        return self.kind != "maxpool2d"

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        kh, kw = self.kernel
        if self.kind == "conv2d":
            return {"weight": (self.out_ch, self.in_ch, kh, kw), "bias": (self.out_ch,)}
        if self.kind == "convtranspose2d":
            return {"weight": (self.in_ch, self.out_ch, kh, kw), "bias": (self.out_ch,)}
        if self.kind == "linear":
            return {"weight": (self.out_ch, self.in_ch), "bias": (self.out_ch,)}
        return {}

    def output_shape(self, in_shape: Sequence[int]) -> tuple[int, ...]:
        """Shape inference for one unbatched input; raises ValueError on mismatch."""
        in_shape = tuple(in_shape)
        if self.kind == "linear":
            n = int(np.prod(in_shape))
            if n != self.in_ch:
                raise ValueError(f"linear expects {self.in_ch} input features, got {n} {in_shape}")
            return self.reshape if self.reshape is not None else (self.out_ch,)
        if len(in_shape) != 3:
            raise ValueError(f"{self.kind} expects a (C, H, W) input, got {in_shape}")
        c, h, w = in_shape
        if c != self.in_ch:
            raise ValueError(f"{self.kind} expects {self.in_ch} input channels, got {c}")
        (kh, kw), (sh, sw), (ph, pw) = self.kernel, self.stride, self.padding
        if self.kind == "conv2d":
            ho = (h + 2 * ph - kh) // sh + 1
            wo = (w + 2 * pw - kw) // sw + 1
        elif self.kind == "convtranspose2d":
            oh, ow = self.output_padding
            ho = (h - 1) * sh - 2 * ph + kh + oh
            wo = (w - 1) * sw - 2 * pw + kw + ow
        else:
            ho, wo = h // 2, w // 2
        if ho < 1 or wo < 1:
            raise ValueError(f"{self.kind} on {in_shape} gives non-positive output extent {(ho, wo)}")
        return (self.out_ch, ho, wo)


# ---------------------------------------------------------------- primitives


def relu(x):
    return np.maximum(x, 0)


def sigmoid(x):
    x = np.asarray(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _activate(z, act):
    if act == "relu":
        return relu(z)
    if act == "sigmoid":
        return sigmoid(z)
    return z


def _activation_backward(dy, out, act):
    if act == "relu":
        # relu'(0) := 0
        return dy * (out > 0)
    if act == "sigmoid":
        return dy * out * (1 - out)
    return dy


def _windows(xp, kernel, stride, out_hw):
    """Strided (N, C, Ho, Wo, kh, kw) view of sliding windows over a padded map."""
    (kh, kw), (sh, sw), (ho, wo) = kernel, stride, out_hw
    v = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return v[:, :, : (ho - 1) * sh + 1 : sh, : (wo - 1) * sw + 1 : sw]


def _pad(x, padding):
    ph, pw = padding
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def _crop(x, padding):
    ph, pw = padding
    return x[:, :, ph : x.shape[2] - ph, pw : x.shape[3] - pw]


def _col2im(dcols, padded_hw, stride):
    """Scatter-add (N, Ho, Wo, C, kh, kw) window contributions into an (N, C, Hp, Wp) map."""
    n, ho, wo, c, kh, kw = dcols.shape
    sh, sw = stride
    out = np.zeros((n, c) + tuple(padded_hw), dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + (ho - 1) * sh + 1 : sh, j : j + (wo - 1) * sw + 1 : sw] += (
                dcols[..., i, j].transpose(0, 3, 1, 2)
            )
    return out


def _conv_out_hw(h, w, kernel, stride, padding):
    return (
        (h + 2 * padding[0] - kernel[0]) // stride[0] + 1,
        (w + 2 * padding[1] - kernel[1]) // stride[1] + 1,
    )


def conv2d(x, weight, bias=None, stride=(1, 1), padding=(0, 0)):
    """2-D cross-correlation of (N, C, H, W) with weight (K, C, kh, kw)."""
    stride, padding = _pair(stride), _pair(padding)
    kernel = weight.shape[2:]
    out_hw = _conv_out_hw(x.shape[2], x.shape[3], kernel, stride, padding)
    if min(out_hw) < 1:
        raise ValueError(f"conv2d output extent {out_hw} is not positive")
    cols = _windows(_pad(x, padding), kernel, stride, out_hw)
    y = np.tensordot(cols, weight, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        y = y + bias[None, :, None, None]
    return np.ascontiguousarray(y)


def conv2d_backward(dy, x, weight, stride=(1, 1), padding=(0, 0), need_input_grad=True):
    """Returns (dx, dweight, dbias) for :func:`conv2d`."""
    stride, padding = _pair(stride), _pair(padding)
    kernel = weight.shape[2:]
    out_hw = dy.shape[2:]
    xp = _pad(x, padding)
    cols = _windows(xp, kernel, stride, out_hw)
    dw = np.tensordot(dy, cols, axes=([0, 2, 3], [0, 2, 3]))
    db = dy.sum(axis=(0, 2, 3))
    dx = None
    if need_input_grad:
        dcols = np.tensordot(dy, weight, axes=([1], [0]))  # (N, Ho, Wo, C, kh, kw)
        dx = _crop(_col2im(dcols, xp.shape[2:], stride), padding)
    return dx, dw, db


def conv_transpose2d(x, weight, bias=None, stride=(1, 1), padding=(0, 0), output_padding=(0, 0)):
    """Transpose convolution; weight is (C_in, C_out, kh, kw) and the op is the adjoint of conv2d."""
    stride, padding, output_padding = _pair(stride), _pair(padding), _pair(output_padding)
    kh, kw = weight.shape[2:]
    n, _, h, w = x.shape
    hp = (h - 1) * stride[0] + kh + output_padding[0]
    wp = (w - 1) * stride[1] + kw + output_padding[1]
    if hp - 2 * padding[0] < 1 or wp - 2 * padding[1] < 1:
        raise ValueError("conv_transpose2d output extent is not positive")
    dcols = np.tensordot(x, weight, axes=([1], [0]))  # (N, H, W, C_out, kh, kw)
    y = _crop(_col2im(dcols, (hp, wp), stride), padding)
    if bias is not None:
        y = y + bias[None, :, None, None]
    return np.ascontiguousarray(y)


def conv_transpose2d_backward(dy, x, weight, stride=(1, 1), padding=(0, 0), need_input_grad=True):
    stride, padding = _pair(stride), _pair(padding)
    kernel = weight.shape[2:]
    out_hw = x.shape[2:]
    cols = _windows(_pad(dy, padding), kernel, stride, out_hw)  # (N, C_out, H, W, kh, kw)
    dw = np.tensordot(x, cols, axes=([0, 2, 3], [0, 2, 3]))
    db = dy.sum(axis=(0, 2, 3))
    dx = conv2d(dy, weight, None, stride, padding) if need_input_grad else None
    return dx, dw, db


def linear(x, weight, bias=None):
    y = x @ weight.T
    if bias is not None:
        y = y + bias
    return y


def linear_backward(dy, x, weight, need_input_grad=True):
    dx = dy @ weight if need_input_grad else None
    return dx, dy.T @ x, dy.sum(axis=0)


def maxpool2d(x):
    """2x2 / stride 2 max pooling; odd trailing rows/cols are dropped."""
    n, c, h, w = x.shape
    xs = x[:, :, : h // 2 * 2, : w // 2 * 2].reshape(n, c, h // 2, 2, w // 2, 2)
    return xs.max(axis=(3, 5))


def maxpool2d_backward(dy, x):
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    xs = x[:, :, : h2 * 2, : w2 * 2].reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = xs.reshape(n, c, h2, w2, 4)
    # ties go to the first element of the window
    idx = flat.argmax(axis=-1)
    mask = np.zeros_like(flat)
    np.put_along_axis(mask, idx[..., None], 1, axis=-1)
    grad = (mask * dy[..., None]).reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    dx = np.zeros_like(x)
    dx[:, :, : h2 * 2, : w2 * 2] = grad.reshape(n, c, h2 * 2, w2 * 2)
    return dx


# ------------------------------------------------------------------- params


class ParamSet(dict):
    """Ordered name -> ndarray mapping. Insertion order is the canonical order."""

    @property
    def total_scalars(self) -> int:
        return int(sum(v.size for v in self.values()))

    def copy(self) -> "ParamSet":
        return ParamSet((k, v.copy()) for k, v in self.items())

    def astype(self, dtype) -> "ParamSet":
        return ParamSet((k, v.astype(dtype)) for k, v in self.items())

    def flat(self) -> np.ndarray:
        if not self:
            return np.zeros(0, dtype=np.float32)
        return np.concatenate([v.ravel() for v in self.values()])

    def with_flat(self, values: np.ndarray) -> "ParamSet":
        """Same names and shapes, values taken in order from a flat vector."""
        values = np.asarray(values)
        if values.size != self.total_scalars:
            raise ValueError(f"expected {self.total_scalars} values, got {values.size}")
        out, pos = ParamSet(), 0
        for k, v in self.items():
            out[k] = values[pos : pos + v.size].reshape(v.shape).astype(v.dtype)
            pos += v.size
        return out

    def prefixed(self, prefix: str) -> "ParamSet":
        return ParamSet((prefix + k, v) for k, v in self.items())

    def strip(self, prefix: str) -> "ParamSet":
        return ParamSet((k[len(prefix) :], v) for k, v in self.items() if k.startswith(prefix))


PARAM_MAGIC = b"AESC"
PARAM_VERSION = 1


def serialize_params(params: ParamSet) -> bytes:
    """Canonical little-endian layout: header, then one record per entry in order."""
    parts = [PARAM_MAGIC, struct.pack("<HI", PARAM_VERSION, len(params))]
    for name, arr in params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def _parse_params(blob: bytes) -> ParamSet:
    mv = memoryview(blob)
    if len(blob) < 10 or bytes(mv[:4]) != PARAM_MAGIC:
        raise ValueError("not a parameter payload (bad magic)")
    version, count = struct.unpack_from("<HI", blob, 4)
    if version != PARAM_VERSION:
        raise ValueError(f"unsupported parameter format version {version}")
    pos, out = 10, ParamSet()
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = bytes(mv[pos : pos + nlen]).decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            shape = struct.unpack_from(f"<{rank}I", blob, pos)
            pos += 4 * rank
            nbytes = 4 * int(np.prod(shape, dtype=np.int64))
            if pos + nbytes > len(blob):
                raise ValueError(f"entry {name!r} truncated")
            out[name] = np.frombuffer(blob, dtype="<f4", count=nbytes // 4, offset=pos).reshape(shape).astype(np.float32)
            pos += nbytes
    except struct.error as exc:
        raise ValueError(f"truncated parameter payload: {exc}") from None
    if pos != len(blob):
        raise ValueError(f"parameter payload has {len(blob) - pos} trailing bytes")
    return out


def deserialize_params(blob: bytes, arch: "Network | ParamSet") -> ParamSet:
    """Parse a payload and check it against the architecture it claims to fill."""
    template = arch.param_template() if isinstance(arch, Network) else arch
    expected = 10 + sum(2 + len(k.encode()) + 1 + 4 * v.ndim + 4 * v.size for k, v in template.items())
    if len(blob) != expected:
        raise ValueError(f"parameter payload is {len(blob)} bytes, architecture needs {expected}")
    params = _parse_params(blob)
    if list(params) != list(template):
        raise ValueError("parameter names do not match the architecture")
    for k, v in template.items():
        if params[k].shape != v.shape:
            raise ValueError(f"{k}: shape {params[k].shape} != architecture {v.shape}")
    return params


# ------------------------------------------------------------------ network


@dataclass
class Network:
    """A sequential stack of :class:`LayerSpec` rows with a fixed input shape."""

    name: str
    input_shape: tuple[int, ...]
    layers: list[LayerSpec]
    shapes: list[tuple[int, ...]] = field(init=False)

    def __post_init__(self):
        self.input_shape = tuple(self.input_shape)
        self.shapes = [self.input_shape]
        for i, spec in enumerate(self.layers):
            try:
                self.shapes.append(spec.output_shape(self.shapes[-1]))
            except ValueError as exc:
                raise ValueError(f"{self.name} layer {i} ({spec.kind}): {exc}") from None

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.shapes[-1]

    def param_template(self, dtype=np.float32) -> ParamSet:
        out = ParamSet()
        for i, spec in enumerate(self.layers):
            for pname, shape in spec.param_shapes().items():
                out[f"{i}.{pname}"] = np.zeros(shape, dtype=dtype)
        return out

    def init_params(self, rng: np.random.Generator | int, dtype=np.float32) -> ParamSet:
        """Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases."""
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        out = ParamSet()
        for i, spec in enumerate(self.layers):
            shapes = spec.param_shapes()
            if not shapes:
                continue
            kh, kw = spec.kernel
            fan_in = spec.in_ch if spec.kind == "linear" else spec.in_ch * kh * kw
            bound = np.sqrt(6.0 / fan_in)
            out[f"{i}.weight"] = rng.uniform(-bound, bound, size=shapes["weight"]).astype(dtype)
            out[f"{i}.bias"] = np.zeros(shapes["bias"], dtype=dtype)
        return out

    def _check_input(self, x):
        x = np.asarray(x)
        if x.shape[1:] != self.input_shape:
            if x.shape == self.input_shape:
                raise ValueError(f"{self.name}: input must be batched, got {x.shape}")
            raise ValueError(f"{self.name}: input shape {x.shape[1:]} != expected {self.input_shape}")
        return x

    def forward(self, params: ParamSet, x, keep: bool = False, upto: int | None = None):
        """Run layers [0, upto). With ``keep`` also returns the per-layer cache for backward."""
        x = self._check_input(x)
        stop = len(self.layers) if upto is None else upto
        cache = []
        for i, spec in enumerate(self.layers[:stop]):
            inp = x
            if spec.kind == "conv2d":
                z = conv2d(x, params[f"{i}.weight"], params[f"{i}.bias"], spec.stride, spec.padding)
            elif spec.kind == "convtranspose2d":
                z = conv_transpose2d(
                    x, params[f"{i}.weight"], params[f"{i}.bias"], spec.stride, spec.padding, spec.output_padding
                )
            elif spec.kind == "linear":
                z = linear(x.reshape(len(x), -1), params[f"{i}.weight"], params[f"{i}.bias"])
                if spec.reshape is not None:
                    z = z.reshape((len(z),) + spec.reshape)
            else:
                z = maxpool2d(x)
            x = _activate(z, spec.activation)
            if keep:
                cache.append((inp, x))
        return (x, cache) if keep else x

    def backward(
        self,
        params: ParamSet,
        cache,
        dy,
        need_param_grads: bool = True,
        skip_last_activation: bool = False,
        need_input_grad: bool = True,
    ):
        """Backpropagate ``dy`` through the cached forward pass.

        With ``skip_last_activation`` the incoming gradient is taken w.r.t. the
        last layer's pre-activation (used for a fused sigmoid + BCE gradient).
        Returns (d input, ParamSet of gradients or None).
        """
        grads = ParamSet() if need_param_grads else None
        n = len(cache)
        for i in range(n - 1, -1, -1):
            spec = self.layers[i]
            inp, out = cache[i]
            if not (skip_last_activation and i == n - 1):
                dy = _activation_backward(dy, out, spec.activation)
            need_dx = i > 0 or need_input_grad
            if spec.kind == "conv2d":
                dx, dw, db = conv2d_backward(dy, inp, params[f"{i}.weight"], spec.stride, spec.padding, need_dx)
            elif spec.kind == "convtranspose2d":
                dx, dw, db = conv_transpose2d_backward(dy, inp, params[f"{i}.weight"], spec.stride, spec.padding, need_dx)
            elif spec.kind == "linear":
                flat = inp.reshape(len(inp), -1)
                dx, dw, db = linear_backward(dy.reshape(len(dy), -1), flat, params[f"{i}.weight"], need_dx)
                if dx is not None:
                    dx = dx.reshape(inp.shape)
            else:
                dx, dw, db = maxpool2d_backward(dy, inp), None, None
            if need_param_grads and dw is not None:
                grads[f"{i}.bias"] = db
                grads[f"{i}.weight"] = dw
            dy = dx
        if grads is not None:
            # canonical order
            grads = ParamSet((k, grads[k]) for k in params if k in grads)
        return dy, grads

    def describe(self) -> list[dict]:
        return [
            {
                "kind": s.kind,
                "in_ch": s.in_ch,
                "out_ch": s.out_ch,
                "kernel": list(s.kernel),
                "stride": list(s.stride),
                "padding": list(s.padding),
                "output_padding": list(s.output_padding),
                "activation": s.activation,
                "reshape": list(s.reshape) if s.reshape else None,
            }
            for s in self.layers
        ]

    @classmethod
    def from_description(cls, name: str, input_shape: Iterable[int], rows: list[dict]) -> "Network":
        layers = [
            LayerSpec(
                kind=r["kind"],
                in_ch=r["in_ch"],
                out_ch=r["out_ch"],
                kernel=tuple(r["kernel"]),
                stride=tuple(r["stride"]),
                padding=tuple(r["padding"]),
                output_padding=tuple(r["output_padding"]),
                activation=r["activation"],
                reshape=tuple(r["reshape"]) if r.get("reshape") else None,
            )
            for r in rows
        ]
        return cls(name, tuple(input_shape), layers)


# -------------------------------------------------------------------- adam


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: ParamSet, grads: ParamSet) -> None:
        """In-place bias-corrected Adam update. A non-finite gradient aborts the run."""
        for name, g in grads.items():
            if name not in params:
                raise KeyError(f"gradient for unknown parameter {name!r}")
            if g.shape != params[name].shape:
                raise ValueError(f"{name}: gradient shape {g.shape} != parameter {params[name].shape}")
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for name, g in grads.items():
            p = params[name]
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            v = self.v[name]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)
