"""Sequential network descriptions and their declarative text format.

Two flavours share one file format:

* sequential specs (the default) chain conv/pool/flatten/linear layers from
  an input shape; shapes are inferred and validated, and these are the only
  specs the forward pass and the pruning engine accept.
* ``graph`` specs are flat bags of countable layers with explicit shape
  annotations (``in=``, ``hin=``, ``win=``).  They exist so FLOPs/params of
  non-sequential topologies (residual or densely connected nets) can be
  counted; everything else rejects them.

Format example::

    # toy CNN
    input 1 16 16
    conv out=8 k=3 stride=1 pad=1 bias=1 bn=0 act=relu
    maxpool k=2 stride=2
    flatten
    linear out=2 bias=1
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .errors import SpecError


@dataclass(frozen=True)
class Conv:
    out_channels: int
    k_h: int
    k_w: int
    stride: int = 1
    padding: int = 0
    bias: bool = True
    batchnorm: bool = False
    activation: str = "relu"  # "relu" or "none"
    in_channels: Optional[int] = None
    h_in: Optional[int] = None  # graph mode only
    w_in: Optional[int] = None


@dataclass(frozen=True)
class MaxPool:
    k: int
    stride: int


@dataclass(frozen=True)
class AvgPool:
    k: int
    stride: int


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Linear:
    out_features: int
    bias: bool = True
    activation: str = "none"
    in_features: Optional[int] = None


@dataclass(frozen=True)
class BatchNormEntry:
    """Standalone batchnorm over `channels`; countable in graph specs only."""

    channels: int


Layer = Union[Conv, MaxPool, AvgPool, Flatten, Linear, BatchNormEntry]


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, int, int]  # (C, H, W)
    layers: tuple[Layer, ...]
    graph: bool = False

    def conv_indices(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if isinstance(l, Conv)]

    def layer_names(self) -> list[str]:
        names = []
        counts: dict[str, int] = {}
        for layer in self.layers:
            kind = type(layer).__name__.lower()
            kind = {"batchnormentry": "bn"}.get(kind, kind)
            n = counts.get(kind, 0)
            counts[kind] = n + 1
            names.append(f"{kind}{n}")
        return names


def require_sequential(spec: NetworkSpec, context: str) -> None:
    if spec.graph:
        raise SpecError(
            f"{context} supports sequential chains only; this spec is a graph "
            "(count-only) description"
        )


def resolve_shapes(spec: NetworkSpec) -> tuple[NetworkSpec, list[tuple]]:
    """Infer and validate per-layer input shapes of a sequential spec.

    Returns the spec with in_channels/in_features filled in plus the input
    shape seen by each layer: (C, H, W) tuples before flatten, (features,)
    after.  Raises SpecError when adjacent layers are not chain-compatible.
    """
    require_sequential(spec, "shape resolution")
    c, h, w = spec.input_shape
    if c < 1 or h < 1 or w < 1:
        raise SpecError(f"input shape must be positive, got {spec.input_shape}")
    flattened: Optional[int] = None
    shapes: list[tuple] = []
    resolved: list[Layer] = []
    for idx, layer in enumerate(spec.layers):
        if isinstance(layer, Conv):
            if flattened is not None:
                raise SpecError(f"layer {idx}: conv after flatten")
            if layer.in_channels not in (None, c):
                raise SpecError(
                    f"layer {idx}: declared in={layer.in_channels} but chain carries {c}"
                )
            h_out = (h + 2 * layer.padding - layer.k_h) // layer.stride + 1
            w_out = (w + 2 * layer.padding - layer.k_w) // layer.stride + 1
            if h_out < 1 or w_out < 1:
                raise SpecError(f"layer {idx}: conv collapses spatial dims to zero")
            shapes.append((c, h, w))
            resolved.append(replace(layer, in_channels=c, h_in=h, w_in=w))
            c, h, w = layer.out_channels, h_out, w_out
        elif isinstance(layer, (MaxPool, AvgPool)):
            if flattened is not None:
                raise SpecError(f"layer {idx}: pool after flatten")
            h_out = (h - layer.k) // layer.stride + 1
            w_out = (w - layer.k) // layer.stride + 1
            if h_out < 1 or w_out < 1:
                raise SpecError(f"layer {idx}: pool window larger than input")
            shapes.append((c, h, w))
            resolved.append(layer)
            h, w = h_out, w_out
        elif isinstance(layer, Flatten):
            if flattened is not None:
                raise SpecError(f"layer {idx}: duplicate flatten")
            shapes.append((c, h, w))
            resolved.append(layer)
            flattened = c * h * w
        elif isinstance(layer, Linear):
            if flattened is None:
                raise SpecError(f"layer {idx}: linear before flatten")
            if layer.in_features not in (None, flattened):
                raise SpecError(
                    f"layer {idx}: declared in={layer.in_features} but chain carries "
                    f"{flattened}"
                )
            shapes.append((flattened,))
            resolved.append(replace(layer, in_features=flattened))
            flattened = layer.out_features
        elif isinstance(layer, BatchNormEntry):
            raise SpecError(
                f"layer {idx}: standalone batchnorm entries are graph-spec only"
            )
        else:  # pragma: no cover
            raise SpecError(f"layer {idx}: unknown layer type {type(layer)}")
    return NetworkSpec(spec.input_shape, tuple(resolved), graph=False), shapes


def _parse_kv(tokens: list[str], line_no: int) -> dict[str, str]:
    kv = {}
    for tok in tokens:
        if "=" not in tok:
            raise SpecError(f"expected key=value, got {tok!r}", line=line_no)
        key, val = tok.split("=", 1)
        kv[key] = val
    return kv


def _get_int(kv: dict, key: str, line_no: int, default=None) -> Optional[int]:
    if key not in kv:
        if default is not None or key in ("in", "hin", "win"):
            return default
        raise SpecError(f"missing required field {key!r}", line=line_no)
    try:
        return int(kv.pop(key))
    except ValueError:
        raise SpecError(f"field {key!r} must be an integer", line=line_no) from None


def parse_spec(text: str) -> NetworkSpec:
    """Parse the declarative layer-list format; errors carry line numbers."""
    layers: list[Layer] = []
    input_shape = None
    graph = False
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kind, rest = tokens[0], tokens[1:]
        if kind == "graph":
            if layers or input_shape:
                raise SpecError("'graph' must precede all other lines", line=line_no)
            graph = True
        elif kind == "input":
            if len(rest) != 3:
                raise SpecError("input takes exactly C H W", line=line_no)
            try:
                input_shape = tuple(int(v) for v in rest)
            except ValueError:
                raise SpecError("input dims must be integers", line=line_no) from None
        elif kind == "conv":
            kv = _parse_kv(rest, line_no)
            k = _get_int(kv, "k", line_no, default=-1)
            k_h = _get_int(kv, "kh", line_no, default=k)
            k_w = _get_int(kv, "kw", line_no, default=k)
            if k_h is None or k_h < 1 or k_w is None or k_w < 1:
                raise SpecError("conv needs k= (or kh=/kw=) >= 1", line=line_no)
            layer = Conv(
                out_channels=_get_int(kv, "out", line_no),
                k_h=k_h,
                k_w=k_w,
                stride=_get_int(kv, "stride", line_no, default=1),
                padding=_get_int(kv, "pad", line_no, default=0),
                bias=bool(_get_int(kv, "bias", line_no, default=1)),
                batchnorm=bool(_get_int(kv, "bn", line_no, default=0)),
                activation=kv.pop("act", "relu"),
                in_channels=_get_int(kv, "in", line_no),
                h_in=_get_int(kv, "hin", line_no),
                w_in=_get_int(kv, "win", line_no),
            )
            if layer.activation not in ("relu", "none"):
                raise SpecError(f"unknown activation {layer.activation!r}", line=line_no)
            if kv:
                raise SpecError(f"unknown conv fields {sorted(kv)}", line=line_no)
            layers.append(layer)
        elif kind in ("maxpool", "avgpool"):
            kv = _parse_kv(rest, line_no)
            k = _get_int(kv, "k", line_no)
            stride = _get_int(kv, "stride", line_no, default=k)
            if kv:
                raise SpecError(f"unknown pool fields {sorted(kv)}", line=line_no)
            layers.append(MaxPool(k, stride) if kind == "maxpool" else AvgPool(k, stride))
        elif kind == "flatten":
            layers.append(Flatten())
        elif kind == "linear":
            kv = _parse_kv(rest, line_no)
            layer = Linear(
                out_features=_get_int(kv, "out", line_no),
                bias=bool(_get_int(kv, "bias", line_no, default=1)),
                activation=kv.pop("act", "none"),
                in_features=_get_int(kv, "in", line_no),
            )
            if layer.activation not in ("relu", "none"):
                raise SpecError(f"unknown activation {layer.activation!r}", line=line_no)
            if kv:
                raise SpecError(f"unknown linear fields {sorted(kv)}", line=line_no)
            layers.append(layer)
        elif kind == "batchnorm":
            kv = _parse_kv(rest, line_no)
            layers.append(BatchNormEntry(channels=_get_int(kv, "c", line_no)))
            if kv:
                raise SpecError(f"unknown batchnorm fields {sorted(kv)}", line=line_no)
        else:
            raise SpecError(f"unknown layer kind {kind!r}", line=line_no)

    if input_shape is None:
        raise SpecError("spec is missing an 'input C H W' line")
    spec = NetworkSpec(input_shape, tuple(layers), graph=graph)
    if graph:
        _validate_graph(spec)
    else:
        spec, _ = resolve_shapes(spec)
    return spec


def _validate_graph(spec: NetworkSpec) -> None:
    for idx, layer in enumerate(spec.layers):
        if isinstance(layer, Conv):
            if layer.in_channels is None or layer.h_in is None or layer.w_in is None:
                raise SpecError(
                    f"layer {idx}: graph conv entries need explicit in=, hin=, win="
                )
        elif isinstance(layer, Linear):
            if layer.in_features is None:
                raise SpecError(f"layer {idx}: graph linear entries need explicit in=")


def render_spec(spec: NetworkSpec) -> str:
    """Canonical text rendering; parse(render(s)) reproduces s."""
    lines = []
    if spec.graph:
        lines.append("graph")
    lines.append("input {} {} {}".format(*spec.input_shape))
    for layer in spec.layers:
        if isinstance(layer, Conv):
            parts = ["conv"]
            if layer.in_channels is not None:
                parts.append(f"in={layer.in_channels}")
            parts.append(f"out={layer.out_channels}")
            if layer.k_h == layer.k_w:
                parts.append(f"k={layer.k_h}")
            else:
                parts.append(f"kh={layer.k_h} kw={layer.k_w}")
            parts.append(f"stride={layer.stride} pad={layer.padding}")
            if spec.graph and layer.h_in is not None:
                parts.append(f"hin={layer.h_in} win={layer.w_in}")
            parts.append(
                f"bias={int(layer.bias)} bn={int(layer.batchnorm)} act={layer.activation}"
            )
            lines.append(" ".join(parts))
        elif isinstance(layer, MaxPool):
            lines.append(f"maxpool k={layer.k} stride={layer.stride}")
        elif isinstance(layer, AvgPool):
            lines.append(f"avgpool k={layer.k} stride={layer.stride}")
        elif isinstance(layer, Flatten):
            lines.append("flatten")
        elif isinstance(layer, Linear):
            prefix = f"in={layer.in_features} " if layer.in_features is not None else ""
            lines.append(
                f"linear {prefix}out={layer.out_features} bias={int(layer.bias)}"
                f" act={layer.activation}"
            )
        elif isinstance(layer, BatchNormEntry):
            lines.append(f"batchnorm c={layer.channels}")
    return "\n".join(lines) + "\n"


def load_spec(path) -> NetworkSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_spec(fh.read())
