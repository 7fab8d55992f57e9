"""Darknet-style network definitions and binary weight files.

A cfg file is INI-like: ``[section]`` headers, ``key=value`` lines and ``#``
comments. Layers are numbered from 0 after the leading ``[net]`` section.
Negative indices in ``route``/``shortcut`` count back from the current layer.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np

from .errors import ParseError, TrailingBytesError, TruncatedWeightsError, WeightsVersionError

LAYER_KINDS = ("convolutional", "shortcut", "route", "upsample", "yolo")
ACTIVATIONS = ("linear", "leaky")
BN_EPS = 1e-5

# training/augmentation keys accepted in [net] and [yolo]; kept verbatim
_NET_EXTRA = {
    "batch", "subdivisions", "momentum", "decay", "learning_rate", "burn_in",
    "max_batches", "policy", "steps", "scales", "angle", "saturation",
    "exposure", "hue",
}
_YOLO_EXTRA = {"jitter", "ignore_thresh", "truth_thresh", "random"}
_KEYS = {
    "net": {"width", "height", "channels"} | _NET_EXTRA,
    "convolutional": {"filters", "size", "stride", "pad", "batch_normalize", "activation"},
    "shortcut": {"from", "activation"},
    "route": {"layers"},
    "upsample": {"stride"},
    "yolo": {"mask", "anchors", "classes", "num"} | _YOLO_EXTRA,
}


@dataclass
class LayerSpec:
    kind: str
    filters: int = 0
    size: int = 1
    stride: int = 1
    pad: int = 0
    batch_normalize: int = 0
    activation: str = "linear"
    from_index: int = 0
    layers: tuple[int, ...] = ()
    mask: tuple[int, ...] = ()
    anchors: tuple[tuple[float, float], ...] = ()
    classes: int = 0
    options: dict[str, str] = field(default_factory=dict)
    line: int = 0

    @property
    def padding(self) -> int:
        return self.size // 2 if self.pad else 0

    @property
    def masked_anchors(self) -> list[tuple[float, float]]:
        return [self.anchors[i] for i in self.mask]


@dataclass
class NetworkConfig:
    width: int
    height: int
    channels: int
    layers: list[LayerSpec]
    shapes: list[tuple[int, int, int]]
    options: dict[str, str] = field(default_factory=dict)

    def input_channels(self, i: int) -> int:
        return self.channels if i == 0 else self.shapes[i - 1][0]

    def resolve(self, i: int, ref: int) -> int:
        return i + ref if ref < 0 else ref

    @property
    def yolo_indices(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if l.kind == "yolo"]

    def conv_param_count(self, i: int) -> int:
        l = self.layers[i]
        kernel = l.filters * self.input_channels(i) * l.size * l.size
        return kernel + (4 * l.filters if l.batch_normalize else l.filters)

    def param_count(self) -> int:
        return sum(self.conv_param_count(i) for i, l in enumerate(self.layers) if l.kind == "convolutional")

    def __eq__(self, other):
        if not isinstance(other, NetworkConfig):
            return NotImplemented
        strip = lambda c: [{k: v for k, v in vars(l).items() if k != "line"} for l in c.layers]
        return (
            (self.width, self.height, self.channels, self.shapes, self.options)
            == (other.width, other.height, other.channels, other.shapes, other.options)
            and strip(self) == strip(other)
        )


def _int(value: str, key: str, line: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"'{key}' expects an integer, got {value!r}", line) from None


def _int_list(value: str, key: str, line: int) -> tuple[int, ...]:
    items = [v.strip() for v in value.split(",") if v.strip()]
    if not items:
        raise ParseError(f"'{key}' is empty", line)
    return tuple(_int(v, key, line) for v in items)


def _anchor_list(value: str, line: int) -> tuple[tuple[float, float], ...]:
    try:
        nums = [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise ParseError(f"malformed anchors {value!r}", line) from None
    if len(nums) % 2 or not nums:
        raise ParseError("anchors must be (w, h) pairs", line)
    if any(n <= 0 for n in nums):
        raise ParseError("anchors must be positive", line)
    return tuple((nums[i], nums[i + 1]) for i in range(0, len(nums), 2))


def _read_sections(text: str) -> list[tuple[str, int, list[tuple[str, str, int]]]]:
    sections: list[tuple[str, int, list[tuple[str, str, int]]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(f"malformed section header {raw.strip()!r}", lineno)
            name = line[1:-1].strip()
            if name not in _KEYS:
                raise ParseError(f"unknown section [{name}]", lineno)
            if name == "net" and sections:
                raise ParseError("[net] must be the first section", lineno)
            if name != "net" and not sections:
                raise ParseError(f"section [{name}] appears before [net]", lineno)
            sections.append((name, lineno, []))
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {raw.strip()!r}", lineno)
        if not sections:
            raise ParseError("key=value outside any section", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        name, _, entries = sections[-1]
        if key not in _KEYS[name]:
            raise ParseError(f"unknown key '{key}' in [{name}]", lineno)
        if any(k == key for k, _, _ in entries):
            raise ParseError(f"duplicate key '{key}' in [{name}]", lineno)
        entries.append((key, value, lineno))
    if not sections:
        raise ParseError("missing [net] section", 1)
    return sections


def _build_layer(name: str, header_line: int, entries: list[tuple[str, str, int]]) -> LayerSpec:
    layer = LayerSpec(kind=name, line=header_line)
    vals = {k: (v, ln) for k, v, ln in entries}

    def need(key):
        if key not in vals:
            raise ParseError(f"[{name}] is missing '{key}'", header_line)
        return vals[key]

    if name == "convolutional":
        for key in ("filters", "size"):
            v, ln = need(key)
            setattr(layer, key, _int(v, key, ln))
        for key, default in (("stride", 1), ("pad", 0), ("batch_normalize", 0)):
            if key in vals:
                v, ln = vals[key]
                setattr(layer, key, _int(v, key, ln))
            else:
                setattr(layer, key, default)
        if layer.filters < 1:
            raise ParseError("filters must be >= 1", vals["filters"][1])
        if layer.size < 1 or layer.size % 2 == 0:
            raise ParseError("conv size must be odd", vals["size"][1])
        if layer.stride < 1:
            raise ParseError("stride must be >= 1", vals["stride"][1])
        if layer.pad not in (0, 1) or layer.batch_normalize not in (0, 1):
            ln = vals.get("pad", vals.get("batch_normalize", ("", header_line)))[1]
            raise ParseError("pad and batch_normalize must be 0 or 1", ln)
    elif name == "shortcut":
        v, ln = need("from")
        layer.from_index = _int(v, "from", ln)
    elif name == "route":
        v, ln = need("layers")
        layer.layers = _int_list(v, "layers", ln)
    elif name == "upsample":
        v, ln = vals.get("stride", ("2", header_line))
        layer.stride = _int(v, "stride", ln)
        if layer.stride < 1:
            raise ParseError("upsample factor must be >= 1", ln)
    elif name == "yolo":
        v, ln = need("anchors")
        layer.anchors = _anchor_list(v, ln)
        v, ln = need("classes")
        layer.classes = _int(v, "classes", ln)
        if layer.classes < 1:
            raise ParseError("classes must be >= 1", ln)
        if "mask" in vals:
            v, ln = vals["mask"]
            layer.mask = _int_list(v, "mask", ln)
        else:
            layer.mask = tuple(range(len(layer.anchors)))
        if any(m < 0 or m >= len(layer.anchors) for m in layer.mask):
            raise ParseError("mask index outside the anchor list", vals.get("mask", (v, ln))[1])
        if "num" in vals:
            v, ln = vals["num"]
            if _int(v, "num", ln) != len(layer.anchors):
                raise ParseError("num does not match the anchor count", ln)
        for key in _YOLO_EXTRA & vals.keys():
            layer.options[key] = vals[key][0]
    if "activation" in vals:
        v, ln = vals["activation"]
        if v not in ACTIVATIONS:
            raise ParseError(f"unsupported activation {v!r}", ln)
        layer.activation = v
    return layer


def _propagate(cfg_in: tuple[int, int, int], layers: list[LayerSpec]) -> list[tuple[int, int, int]]:
    shapes: list[tuple[int, int, int]] = []
    for i, l in enumerate(layers):
        prev = cfg_in if i == 0 else shapes[i - 1]

        def ref(r: int) -> tuple[int, int, int]:
            j = i + r if r < 0 else r
            if j < 0 or j >= i:
                raise ParseError(f"layer {i} ({l.kind}) references unresolved layer {r}", l.line)
            return shapes[j]

        c, h, w = prev
        if l.kind == "convolutional":
            oh = (h + 2 * l.padding - l.size) // l.stride + 1
            ow = (w + 2 * l.padding - l.size) // l.stride + 1
            if oh < 1 or ow < 1:
                raise ParseError(f"conv layer {i} produces an empty output", l.line)
            shapes.append((l.filters, oh, ow))
        elif l.kind == "shortcut":
            other = ref(l.from_index)
            if other != prev:
                raise ParseError(f"shortcut shape mismatch {other} vs {prev}", l.line)
            shapes.append(prev)
        elif l.kind == "route":
            srcs = [ref(r) for r in l.layers]
            if len({s[1:] for s in srcs}) != 1:
                raise ParseError(f"route inputs differ in spatial size: {srcs}", l.line)
            shapes.append((sum(s[0] for s in srcs), srcs[0][1], srcs[0][2]))
        elif l.kind == "upsample":
            shapes.append((c, h * l.stride, w * l.stride))
        elif l.kind == "yolo":
            expected = len(l.mask) * (5 + l.classes)
            if c != expected:
                raise ParseError(
                    f"yolo layer {i} receives {c} channels, expected {expected} = {len(l.mask)}*(5+{l.classes})",
                    l.line,
                )
            shapes.append(prev)
    return shapes


def parse_cfg(text: str) -> NetworkConfig:
    sections = _read_sections(text)
    name, net_line, entries = sections[0]
    vals = {k: (v, ln) for k, v, ln in entries}
    dims = {}
    for key in ("width", "height", "channels"):
        if key not in vals:
            raise ParseError(f"[net] is missing '{key}'", net_line)
        dims[key] = _int(vals[key][0], key, vals[key][1])
        if dims[key] < 1:
            raise ParseError(f"'{key}' must be positive", vals[key][1])
    options = {k: v for k, (v, _) in vals.items() if k in _NET_EXTRA}
    layers = [_build_layer(n, ln, e) for n, ln, e in sections[1:]]
    shapes = _propagate((dims["channels"], dims["height"], dims["width"]), layers)
    return NetworkConfig(dims["width"], dims["height"], dims["channels"], layers, shapes, options)


def _fmt_float(x: float) -> str:
    return repr(float(x)).removesuffix(".0") if float(x).is_integer() else repr(float(x))


def serialize_cfg(cfg: NetworkConfig) -> str:
    out = ["[net]", f"width={cfg.width}", f"height={cfg.height}", f"channels={cfg.channels}"]
    out += [f"{k}={v}" for k, v in cfg.options.items()]
    for l in cfg.layers:
        out.append("")
        out.append(f"[{l.kind}]")
        if l.kind == "convolutional":
            out += [
                f"batch_normalize={l.batch_normalize}",
                f"filters={l.filters}",
                f"size={l.size}",
                f"stride={l.stride}",
                f"pad={l.pad}",
                f"activation={l.activation}",
            ]
        elif l.kind == "shortcut":
            out += [f"from={l.from_index}", f"activation={l.activation}"]
        elif l.kind == "route":
            out.append("layers=" + ",".join(str(i) for i in l.layers))
        elif l.kind == "upsample":
            out.append(f"stride={l.stride}")
        elif l.kind == "yolo":
            out.append("mask=" + ",".join(str(m) for m in l.mask))
            out.append("anchors=" + ", ".join(f"{_fmt_float(w)},{_fmt_float(h)}" for w, h in l.anchors))
            out.append(f"classes={l.classes}")
            out.append(f"num={len(l.anchors)}")
            out += [f"{k}={v}" for k, v in l.options.items()]
    return "\n".join(out) + "\n"


@dataclass
class ConvParams:
    weights: np.ndarray  # (filters, in_channels, size, size)
    biases: np.ndarray  # beta when batch-normalized
    scales: np.ndarray | None = None  # gamma
    rolling_mean: np.ndarray | None = None
    rolling_variance: np.ndarray | None = None

    def fused(self) -> tuple[np.ndarray, np.ndarray]:
        """Kernel and bias with batchnorm folded in."""
        if self.scales is None:
            return self.weights, self.biases
        k = self.scales / np.sqrt(self.rolling_variance + BN_EPS)
        return self.weights * k[:, None, None, None], self.biases - self.rolling_mean * k


@dataclass
class Model:
    config: NetworkConfig
    params: dict[int, ConvParams]
    version: tuple[int, int, int] = (0, 2, 0)
    seen: int = 0
    _fused: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for i, l in enumerate(self.config.layers):
            if l.kind != "convolutional":
                continue
            p = self.params[i]
            shape = (l.filters, self.config.input_channels(i), l.size, l.size)
            if p.weights.shape != shape or p.biases.shape != (l.filters,):
                raise ValueError(f"layer {i}: parameter shapes do not match the config")
            if l.batch_normalize and any(
                a is None or a.shape != (l.filters,) for a in (p.scales, p.rolling_mean, p.rolling_variance)
            ):
                raise ValueError(f"layer {i}: incomplete batchnorm parameters")

    def fused(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Inference kernel and bias for conv layer ``i``, folded once and cached."""
        if i not in self._fused:
            self._fused[i] = self.params[i].fused()
        return self._fused[i]


def _seen_is_64bit(major: int, minor: int) -> bool:
    return major * 10 + minor >= 2


def load_weights(config: NetworkConfig, payload: bytes | BinaryIO) -> Model:
    data = payload if isinstance(payload, (bytes, bytearray, memoryview)) else payload.read()
    data = bytes(data)
    if len(data) < 12:
        raise TruncatedWeightsError("weights file shorter than its version header")
    major, minor, revision = struct.unpack_from("<iii", data, 0)
    if major < 0 or minor < 0 or revision < 0 or major > 1000 or minor > 1000:
        raise WeightsVersionError(f"implausible weights version {major}.{minor}.{revision}")
    pos = 12
    if _seen_is_64bit(major, minor):
        if len(data) < pos + 8:
            raise TruncatedWeightsError("weights file truncated inside the header")
        (seen,) = struct.unpack_from("<q", data, pos)
        pos += 8
    else:
        if len(data) < pos + 4:
            raise TruncatedWeightsError("weights file truncated inside the header")
        (seen,) = struct.unpack_from("<i", data, pos)
        pos += 4

    def take(count: int, layer: int) -> np.ndarray:
        nonlocal pos
        end = pos + 4 * count
        if end > len(data):
            raise TruncatedWeightsError(f"weights file truncated in layer {layer}")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=pos).astype(np.float64)
        pos = end
        return arr

    params: dict[int, ConvParams] = {}
    for i, l in enumerate(config.layers):
        if l.kind != "convolutional":
            continue
        shape = (l.filters, config.input_channels(i), l.size, l.size)
        if l.batch_normalize:
            beta = take(l.filters, i)
            gamma = take(l.filters, i)
            mean = take(l.filters, i)
            var = take(l.filters, i)
            w = take(int(np.prod(shape)), i).reshape(shape)
            params[i] = ConvParams(w, beta, gamma, mean, var)
        else:
            b = take(l.filters, i)
            w = take(int(np.prod(shape)), i).reshape(shape)
            params[i] = ConvParams(w, b)
    if pos != len(data):
        raise TrailingBytesError(f"{len(data) - pos} trailing bytes after the last layer")
    return Model(config, params, (major, minor, revision), seen)


def save_weights(model: Model) -> bytes:
    buf = io.BytesIO()
    major, minor, revision = model.version
    buf.write(struct.pack("<iii", major, minor, revision))
    buf.write(struct.pack("<q" if _seen_is_64bit(major, minor) else "<i", model.seen))
    for i, l in enumerate(model.config.layers):
        if l.kind != "convolutional":
            continue
        p = model.params[i]
        arrays = [p.biases]
        if l.batch_normalize:
            arrays += [p.scales, p.rolling_mean, p.rolling_variance]
        arrays.append(p.weights)
        for a in arrays:
            buf.write(np.asarray(a, dtype="<f4").tobytes())
    return buf.getvalue()


def init_model(config: NetworkConfig, seed: int = 0, head_gain: float = 0.1, objectness_prior: float = 0.01) -> Model:
    """Fresh model with fan-in scaled (Kaiming) kernels and zero biases.

    Convs feeding a yolo layer get their kernels scaled by ``head_gain`` and
    objectness biases set to the logit of ``objectness_prior``, so training
    starts from anchor-shaped boxes and mostly-empty cells. Values are rounded
    to float32 so a save/load cycle is lossless.
    """
    rng = np.random.default_rng(seed)
    heads = {i - 1: config.layers[i] for i in config.yolo_indices if i > 0}
    params: dict[int, ConvParams] = {}
    for i, l in enumerate(config.layers):
        if l.kind != "convolutional":
            continue
        fan_in = config.input_channels(i) * l.size * l.size
        shape = (l.filters, config.input_channels(i), l.size, l.size)
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        b = np.zeros(l.filters)
        if i in heads and not l.batch_normalize and l.filters == len(heads[i].mask) * (5 + heads[i].classes):
            w *= head_gain
            b[4 :: 5 + heads[i].classes] = np.log(objectness_prior / (1 - objectness_prior))
        w = w.astype(np.float32).astype(np.float64)
        b = b.astype(np.float32).astype(np.float64)
        if l.batch_normalize:
            params[i] = ConvParams(w, b, np.ones(l.filters), np.zeros(l.filters), np.ones(l.filters))
        else:
            params[i] = ConvParams(w, b)
    return Model(config, params)
