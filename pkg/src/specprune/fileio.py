"""Versioned binary and text artifacts: tensors, checkpoints, reports.

All binary formats are little-endian, magic-tagged and versioned; every read
validates the header and payload length before returning a value, reporting
the byte offset of the first problem.  Payloads are 32-bit floats (complex:
interleaved re, im) or 16-bit unsigned labels.  Writes go through a
temp-file-plus-rename so concurrent readers never observe a torn file.
"""

from __future__ import annotations

import os
import struct
from typing import Optional, Sequence

import numpy as np

from .autoencoder import AutoencoderParams
from .errors import FormatError, InvalidArgument
from .network import NetworkSpec, parse_spec, render_spec
from .nn import ModelState
from .prune import LayerPruneRow, PruneMask, PruneReport
from .scoring import ImportanceVector
from .tensor import CTensor4, Tensor4

TENSOR_MAGIC = b"SCAP"
TENSOR_VERSION = 1
_TENSOR_HEADER = struct.Struct("<4sHBB4I")

CKPT_MAGIC = b"SPCK"
CKPT_VERSION = 1

DTYPE_F32 = 0
DTYPE_C64 = 1
DTYPE_U16 = 2


def _atomic_write(path, data: bytes) -> None:
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _payload_bytes(arr: np.ndarray, dtype_tag: int) -> bytes:
    if dtype_tag == DTYPE_F32:
        return np.ascontiguousarray(arr, dtype="<f4").tobytes()
    if dtype_tag == DTYPE_C64:
        inter = np.empty(arr.shape + (2,), dtype="<f4")
        inter[..., 0] = arr.real
        inter[..., 1] = arr.imag
        return inter.tobytes()
    if dtype_tag == DTYPE_U16:
        return np.ascontiguousarray(arr, dtype="<u2").tobytes()
    raise InvalidArgument(f"unknown dtype tag {dtype_tag}")


def _payload_array(data: bytes, dims: Sequence[int], dtype_tag: int, payload_offset: int):
    count = 1
    for d in dims:
        count *= d
    unit = {DTYPE_F32: 4, DTYPE_C64: 8, DTYPE_U16: 2}.get(dtype_tag)
    if unit is None:
        raise FormatError(f"unknown dtype tag {dtype_tag}")
    expected = count * unit
    if len(data) != expected:
        raise FormatError(
            f"truncated payload: expected {expected} bytes, got {len(data)}",
            offset=payload_offset + len(data),
        )
    if dtype_tag == DTYPE_F32:
        return np.frombuffer(data, dtype="<f4").astype(np.float64).reshape(dims)
    if dtype_tag == DTYPE_C64:
        flat = np.frombuffer(data, dtype="<f4").astype(np.float64)
        return (flat[0::2] + 1j * flat[1::2]).reshape(dims)
    return np.frombuffer(data, dtype="<u2").copy().reshape(dims)


def write_tensor(path, t) -> None:
    """Write a Tensor4/CTensor4 (f32 payload) or uint16 label tensor."""
    if isinstance(t, Tensor4):
        tag, arr = DTYPE_F32, t.data
    elif isinstance(t, CTensor4):
        tag, arr = DTYPE_C64, t.data
    elif isinstance(t, np.ndarray) and t.dtype == np.uint16 and t.ndim == 4:
        tag, arr = DTYPE_U16, t
    else:
        raise InvalidArgument(f"cannot serialize {type(t).__name__} as a tensor file")
    header = _TENSOR_HEADER.pack(TENSOR_MAGIC, TENSOR_VERSION, tag, 4, *arr.shape)
    _atomic_write(path, header + _payload_bytes(arr, tag))


def read_tensor(path):
    """Read a tensor file back; labels come out as a uint16 ndarray."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _TENSOR_HEADER.size:
        raise FormatError(
            f"header truncated: need {_TENSOR_HEADER.size} bytes, got {len(blob)}",
            offset=len(blob),
        )
    magic, version, tag, rank, d0, d1, d2, d3 = _TENSOR_HEADER.unpack_from(blob)
    if magic != TENSOR_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {TENSOR_MAGIC!r}", offset=0)
    if version > TENSOR_VERSION:
        raise FormatError(
            f"file version {version} is newer than supported {TENSOR_VERSION}", offset=4
        )
    if rank != 4:
        raise FormatError(f"expected rank 4, got {rank}", offset=7)
    dims = (d0, d1, d2, d3)
    arr = _payload_array(blob[_TENSOR_HEADER.size :], dims, tag, _TENSOR_HEADER.size)
    if tag == DTYPE_F32:
        return Tensor4(arr)
    if tag == DTYPE_C64:
        return CTensor4(arr)
    return arr


def write_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint16).reshape(-1, 1, 1, 1)
    write_tensor(path, labels)


def read_labels(path) -> np.ndarray:
    arr = read_tensor(path)
    if not isinstance(arr, np.ndarray) or arr.dtype != np.uint16:
        raise FormatError("expected a u16 label tensor")
    return arr.reshape(-1)


# --- named-tensor checkpoint container -----------------------------------


def _pack_named(meta: dict[str, str], tensors: list[tuple[str, np.ndarray, int]]) -> bytes:
    meta_text = "".join(f"{k}={v}\n" for k, v in meta.items()).encode("utf-8")
    out = [CKPT_MAGIC, struct.pack("<H", CKPT_VERSION)]
    out.append(struct.pack("<I", len(meta_text)))
    out.append(meta_text)
    out.append(struct.pack("<H", len(tensors)))
    for name, arr, tag in tensors:
        nb = name.encode("utf-8")
        out.append(struct.pack("<H", len(nb)))
        out.append(nb)
        out.append(struct.pack("<BB", tag, arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(_payload_bytes(arr, tag))
    return b"".join(out)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError(
                f"truncated checkpoint while reading {what}", offset=len(self.blob)
            )
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out


def _unpack_named(blob: bytes) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    rd = _Reader(blob)
    magic = rd.take(4, "magic")
    if magic != CKPT_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {CKPT_MAGIC!r}", offset=0)
    (version,) = struct.unpack("<H", rd.take(2, "version"))
    if version > CKPT_VERSION:
        raise FormatError(
            f"checkpoint version {version} is newer than supported {CKPT_VERSION}",
            offset=4,
        )
    (meta_len,) = struct.unpack("<I", rd.take(4, "meta length"))
    meta_text = rd.take(meta_len, "meta block").decode("utf-8")
    meta = {}
    for line in meta_text.splitlines():
        if line:
            key, _, value = line.partition("=")
            meta[key] = value
    (count,) = struct.unpack("<H", rd.take(2, "tensor count"))
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", rd.take(2, "name length"))
        name = rd.take(name_len, "name").decode("utf-8")
        tag, rank = struct.unpack("<BB", rd.take(2, "dtype/rank"))
        dims = struct.unpack(f"<{rank}I", rd.take(4 * rank, "dims"))
        unit = {DTYPE_F32: 4, DTYPE_C64: 8, DTYPE_U16: 2}[tag]
        size = unit * int(np.prod(dims, dtype=np.int64)) if dims else unit
        payload = rd.take(size, f"payload of {name}")
        tensors[name] = _payload_array(payload, dims, tag, rd.pos - size)
    return meta, tensors


def save_model(path, model: ModelState) -> None:
    """Model checkpoint: embedded spec text plus per-layer weight tensors."""
    meta = {
        "kind": "model",
        "seed": str(model.seed),
        "spec": render_spec(model.spec).replace("\n", ";"),
    }
    tensors = []
    for idx, entry in enumerate(model.weights):
        if entry is None:
            continue
        for key, arr in entry.items():
            tensors.append((f"layer{idx}.{key}", np.asarray(arr), DTYPE_F32))
    _atomic_write(path, _pack_named(meta, tensors))


def load_model(path, expected_spec: Optional[NetworkSpec] = None) -> ModelState:
    with open(path, "rb") as fh:
        meta, tensors = _unpack_named(fh.read())
    if meta.get("kind") != "model":
        raise FormatError(f"not a model checkpoint (kind={meta.get('kind')!r})")
    spec = parse_spec(meta["spec"].replace(";", "\n"))
    if expected_spec is not None and render_spec(expected_spec) != render_spec(spec):
        raise InvalidArgument("checkpoint spec does not match the expected network")
    weights: list[Optional[dict]] = [None] * len(spec.layers)
    for name, arr in tensors.items():
        prefix, _, key = name.partition(".")
        idx = int(prefix.removeprefix("layer"))
        if not 0 <= idx < len(spec.layers):
            raise FormatError(f"checkpoint tensor {name!r} is outside the network")
        if weights[idx] is None:
            weights[idx] = {}
        weights[idx][key] = arr
    model = ModelState(spec, weights, momentum={}, seed=int(meta.get("seed", "0")))
    _validate_model_shapes(model)
    return model


def _validate_model_shapes(model: ModelState) -> None:
    from .network import Conv, Linear  # local to avoid import noise at module top

    for idx, layer in enumerate(model.spec.layers):
        entry = model.weights[idx]
        if isinstance(layer, Conv):
            want = (layer.out_channels, layer.in_channels, layer.k_h, layer.k_w)
            if entry is None or entry["w"].shape != want:
                raise InvalidArgument(
                    f"layer {idx}: checkpoint weight shape "
                    f"{None if entry is None else entry['w'].shape} != spec shape {want}"
                )
        elif isinstance(layer, Linear):
            want = (layer.out_features, layer.in_features)
            if entry is None or entry["w"].shape != want:
                raise InvalidArgument(
                    f"layer {idx}: checkpoint weight shape "
                    f"{None if entry is None else entry['w'].shape} != spec shape {want}"
                )


def save_autoencoder(path, layer_name: str, ae_real: AutoencoderParams, ae_imag: AutoencoderParams) -> None:
    meta = {
        "kind": "autoencoder",
        "layer": layer_name,
        "n": str(ae_real.n),
        "bottleneck": str(ae_real.bottleneck),
        "shared": "1" if ae_real is ae_imag else "0",
    }
    tensors = [
        ("real.w1", ae_real.w1, DTYPE_F32),
        ("real.w2", ae_real.w2, DTYPE_F32),
        ("imag.w1", ae_imag.w1, DTYPE_F32),
        ("imag.w2", ae_imag.w2, DTYPE_F32),
    ]
    _atomic_write(path, _pack_named(meta, tensors))


def load_autoencoder(
    path, expected_n: Optional[int] = None
) -> tuple[AutoencoderParams, AutoencoderParams, str]:
    with open(path, "rb") as fh:
        meta, tensors = _unpack_named(fh.read())
    if meta.get("kind") != "autoencoder":
        raise FormatError(f"not an autoencoder checkpoint (kind={meta.get('kind')!r})")
    n = int(meta["n"])
    if expected_n is not None and n != expected_n:
        raise InvalidArgument(
            f"autoencoder width n={n} does not match required n={expected_n}"
        )
    ae_real = AutoencoderParams(
        n, max(1, n // 4), tensors["real.w1"], tensors["real.w2"], "real"
    )
    if meta.get("shared") == "1":
        ae_imag = ae_real
    else:
        ae_imag = AutoencoderParams(
            n, max(1, n // 4), tensors["imag.w1"], tensors["imag.w2"], "imaginary"
        )
    return ae_real, ae_imag, meta.get("layer", "")


def save_dataset(directory, images: np.ndarray, labels: np.ndarray) -> None:
    os.makedirs(directory, exist_ok=True)
    write_tensor(os.path.join(directory, "images.tensor"), Tensor4(images))
    write_labels(os.path.join(directory, "labels.tensor"), labels)


def load_dataset(directory) -> tuple[np.ndarray, np.ndarray]:
    images = read_tensor(os.path.join(directory, "images.tensor"))
    labels = read_labels(os.path.join(directory, "labels.tensor"))
    if not isinstance(images, Tensor4):
        raise FormatError("dataset images must be a real tensor file")
    if images.shape[0] != labels.shape[0]:
        raise FormatError("image/label counts disagree")
    return images.data.copy(), labels


# --- text artifacts -------------------------------------------------------


def _fmt(x) -> str:
    return "none" if x is None else repr(float(x))


def render_report(report: PruneReport) -> str:
    lines = [
        "specprune prune report v1",
        f"tool_version: {report.tool_version}",
        f"config_hash: {report.config_hash}",
        f"tau: {_fmt(report.tau)}",
        f"fusion: {report.fusion}",
        f"alpha: {_fmt(report.alpha)}",
        f"k_min_rule: {report.k_min_rule}",
        f"seed: {report.seed}",
        f"capture_point: {report.capture_point}",
        f"pool_size: {report.pool_size}",
        f"baseline_flops: {report.baseline_flops}",
        f"baseline_params: {report.baseline_params}",
        f"pruned_flops: {report.pruned_flops}",
        f"pruned_params: {report.pruned_params}",
        f"fr_percent: {_fmt(report.fr)}",
        f"pr_percent: {_fmt(report.pr)}",
        f"baseline_accuracy: {_fmt(report.baseline_accuracy)}",
        f"pruned_accuracy: {_fmt(report.pruned_accuracy)}",
        f"finetuned_accuracy: {_fmt(report.finetuned_accuracy)}",
        "[layers]",
        "name kept total safeguard",
    ]
    for row in report.layers:
        lines.append(f"{row.name} {row.kept} {row.total} {'yes' if row.safeguard else 'no'}")
    lines.append("[end]")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> PruneReport:
    lines = text.splitlines()
    if not lines or lines[0] != "specprune prune report v1":
        raise FormatError("not a prune report")
    kv = {}
    rows = []
    in_table = False
    for line in lines[1:]:
        if line == "[layers]":
            in_table = True
            continue
        if line == "[end]":
            break
        if in_table:
            if line.startswith("name "):
                continue
            name, kept, total, safeguard = line.split()
            rows.append(LayerPruneRow(name, int(kept), int(total), safeguard == "yes"))
        elif line:
            key, _, value = line.partition(": ")
            kv[key] = value

    def opt(key):
        return None if kv[key] == "none" else float(kv[key])

    return PruneReport(
        tau=float(kv["tau"]),
        fusion=kv["fusion"],
        alpha=float(kv["alpha"]),
        k_min_rule=kv["k_min_rule"],
        seed=int(kv["seed"]),
        capture_point=kv["capture_point"],
        pool_size=int(kv["pool_size"]),
        layers=rows,
        baseline_flops=int(kv["baseline_flops"]),
        baseline_params=int(kv["baseline_params"]),
        pruned_flops=int(kv["pruned_flops"]),
        pruned_params=int(kv["pruned_params"]),
        fr=float(kv["fr_percent"]),
        pr=float(kv["pr_percent"]),
        tool_version=kv["tool_version"],
        config_hash=kv["config_hash"],
        baseline_accuracy=opt("baseline_accuracy"),
        pruned_accuracy=opt("pruned_accuracy"),
        finetuned_accuracy=opt("finetuned_accuracy"),
    )


def save_report(path, report: PruneReport) -> None:
    _atomic_write(path, render_report(report).encode("utf-8"))


def load_report(path) -> PruneReport:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_report(fh.read())


def save_scores(path, scores: list[tuple[int, ImportanceVector]], fusion: str, alpha: float) -> None:
    lines = ["specprune scores v1", f"fusion: {fusion}", f"alpha: {_fmt(alpha)}"]
    for idx, iv in scores:
        lines.append(f"[layer {iv.layer_id} index {idx}]")
        lines.append("channel fid i_fid i_l1 fused normalized")
        for k in range(len(iv.fid)):
            vals = (iv.fid[k], iv.i_fid[k], iv.i_l1[k], iv.fused[k], iv.normalized[k])
            lines.append(f"{k} " + " ".join(repr(float(v)) for v in vals))
    lines.append("[end]")
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def load_scores(path) -> list[tuple[int, ImportanceVector]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "specprune scores v1":
        raise FormatError("not a scores file")
    out = []
    layer_id = None
    idx = None
    cols: dict[str, list[float]] = {}

    def close():
        if layer_id is not None:
            out.append(
                (
                    idx,
                    ImportanceVector(
                        layer_id,
                        np.array(cols["fid"]),
                        np.array(cols["i_fid"]),
                        np.array(cols["i_l1"]),
                        np.array(cols["fused"]),
                        np.array(cols["normalized"]),
                    ),
                )
            )

    for line in lines[1:]:
        if line.startswith("[layer "):
            close()
            parts = line.strip("[]").split()
            layer_id, idx = parts[1], int(parts[3])
            cols = {k: [] for k in ("fid", "i_fid", "i_l1", "fused", "normalized")}
        elif line == "[end]":
            close()
            layer_id = None
        elif line and line[0].isdigit():
            vals = line.split()
            for key, val in zip(("fid", "i_fid", "i_l1", "fused", "normalized"), vals[1:]):
                cols[key].append(float(val))
    return out


def save_mask(path, mask: PruneMask, safeguards: dict[int, bool]) -> None:
    lines = ["specprune mask v1"]
    for idx in sorted(mask.keep):
        kept = " ".join(str(k) for k in mask.keep[idx])
        flag = "yes" if safeguards.get(idx, False) else "no"
        lines.append(f"layer {idx} safeguard {flag}: {kept}")
    lines.append("[end]")
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def load_mask(path) -> tuple[PruneMask, dict[int, bool]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "specprune mask v1":
        raise FormatError("not a mask file")
    keep = {}
    flags = {}
    for line in lines[1:]:
        if line == "[end]" or not line:
            continue
        head, _, kept = line.partition(":")
        parts = head.split()
        idx = int(parts[1])
        flags[idx] = parts[3] == "yes"
        keep[idx] = tuple(int(tok) for tok in kept.split())
    return PruneMask(keep), flags
