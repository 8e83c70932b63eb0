"""File formats: series (CSV and binary), network weights and network specs.

Binary series: ``b"PENABC01"``, little-endian u32 M, u32 count, then
count*M little-endian float64 values row by row.

Weights: ``b"PENWTS01"``, u32 header length, a UTF-8 TOML header echoing
the network spec, then every weight and bias array as little-endian float64
in layer order (inner network first for a PEN).  Loading checks the header
against the expected spec and the payload length against the layer sizes.
"""

import hashlib
import struct
import sys

import numpy as np

from .nn import Layer, MlpSpec
from .pen import PenSpec, PenWeights

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SERIES_MAGIC = b"PENABC01"
WEIGHTS_MAGIC = b"PENWTS01"


class FormatError(ValueError):
    pass


# --------------------------------------------------------------------------
# series
# --------------------------------------------------------------------------


def write_series_binary(path, ys):
    ys = np.atleast_2d(np.asarray(ys, dtype="<f8"))
    count, m = ys.shape
    with open(path, "wb") as fh:
        fh.write(SERIES_MAGIC)
        fh.write(struct.pack("<II", m, count))
        fh.write(np.ascontiguousarray(ys).tobytes())


def read_series_binary(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != SERIES_MAGIC:
        raise FormatError(f"{path}: not a series file (bad magic)")
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header")
    m, count = struct.unpack("<II", raw[8:16])
    body = raw[16:]
    if len(body) != 8 * m * count:
        raise FormatError(f"{path}: expected {count}x{m} values, found {len(body) // 8}")
    return np.frombuffer(body, dtype="<f8").reshape(count, m).astype(float)


def write_matrix_csv(path, rows, header):
    """CSV with a header line and full-precision values."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[1] != len(header):
        raise ValueError("header length does not match the number of columns")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(repr(float(v)) for v in r) + "\n")


def read_matrix_csv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size and data.shape[1] != len(header):
        raise FormatError(f"{path}: rows do not match the header")
    return header, data


def write_series_csv(path, y):
    y = np.asarray(y, dtype=float).ravel()
    write_matrix_csv(path, y[:, None], ["y"])


def read_series_csv(path):
    return read_matrix_csv(path)[1][:, 0]


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


# --------------------------------------------------------------------------
# network specs
# --------------------------------------------------------------------------


def _layers_text(spec):
    items = ", ".join(f'"{l.in_dim}:{l.out_dim}:{l.activation}"' for l in spec.layers)
    return f"[{items}]"


def _layers_parse(items):
    layers = []
    for it in items:
        a, b, act = it.split(":")
        layers.append(Layer(int(a), int(b), act))
    return MlpSpec(tuple(layers))


def spec_to_text(spec):
    if isinstance(spec, PenSpec):
        return (
            'kind = "pen"\n'
            f"d = {spec.d}\n"
            f"extra_dim = {spec.extra_dim}\n"
            f'pooling = "{spec.pooling}"\n'
            f"inner = {_layers_text(spec.inner)}\n"
            f"outer = {_layers_text(spec.outer)}\n"
        )
    return f'kind = "mlp"\nlayers = {_layers_text(spec)}\n'


def spec_from_text(text):
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise FormatError(f"bad network spec: {exc}") from exc
    kind = doc.get("kind")
    if kind == "pen":
        return PenSpec(
            int(doc["d"]),
            _layers_parse(doc["inner"]),
            _layers_parse(doc["outer"]),
            int(doc.get("extra_dim", 0)),
            str(doc.get("pooling", "sum")),
        )
    if kind == "mlp":
        return _layers_parse(doc["layers"])
    raise FormatError(f"unknown network kind {kind!r}")


# --------------------------------------------------------------------------
# weights
# --------------------------------------------------------------------------


def _flat_layers(spec, weights):
    if isinstance(spec, PenSpec):
        return [*zip(spec.inner.layers, weights.inner), *zip(spec.outer.layers, weights.outer)]
    return list(zip(spec.layers, weights))


def save_weights(path, spec, weights):
    header = spec_to_text(spec).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for layer, (W, b) in _flat_layers(spec, weights):
            if W.shape != (layer.out_dim, layer.in_dim) or b.shape != (layer.out_dim,):
                raise ValueError("weights do not match the spec")
            fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def _read_mlp(spec, buf, pos):
    out = []
    for l in spec.layers:
        nW = l.out_dim * l.in_dim
        W = np.frombuffer(buf, "<f8", nW, pos).reshape(l.out_dim, l.in_dim).astype(float)
        pos += 8 * nW
        b = np.frombuffer(buf, "<f8", l.out_dim, pos).astype(float)
        pos += 8 * l.out_dim
        out.append((W, b))
    return out, pos


def load_weights(path, expect=None):
    """Return ``(spec, weights)``; raise if the stored spec differs from ``expect``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != WEIGHTS_MAGIC:
        raise FormatError(f"{path}: not a weights file (bad magic)")
    (hlen,) = struct.unpack("<I", raw[8:12])
    spec = spec_from_text(raw[12 : 12 + hlen].decode("utf-8"))
    if expect is not None and spec != expect:
        raise FormatError(f"{path}: stored network spec does not match the configured one")
    body = raw[12 + hlen :]
    from .nn import count_weights

    if len(body) != 8 * count_weights(spec):
        raise FormatError(f"{path}: payload size does not match the stored spec")
    if isinstance(spec, PenSpec):
        inner, pos = _read_mlp(spec.inner, body, 0)
        outer, _ = _read_mlp(spec.outer, body, pos)
        return spec, PenWeights(inner, outer)
    weights, _ = _read_mlp(spec, body, 0)
    return spec, weights
