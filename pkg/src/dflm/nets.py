"""Solution approximators u(x; theta): an MLP and a ResNet with identity shortcuts."""
from __future__ import annotations

from dataclasses import asdict, dataclass
import json
import struct

import numpy as np

from .autodiff import Activation, ParamVector, Tape

ENCODINGS = ("coords", "onehot", "param")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description.

    For ``kind="mlp"``, ``dims`` is ``[L0, ..., LD]`` including input and output.
    For ``kind="resnet"``, ``dims`` is the block width list ``[L0, ..., LD]`` with
    ``L0 == LD``; ``in_dim``/``out_dim`` are the embedding input and readout sizes.
    """

    kind: str
    dims: tuple
    activation: str = "swish"
    n_blocks: int = 0
    in_dim: int = 2
    out_dim: int = 1
    input_activation: str | None = None
    encoding: str = "coords"
    coord_dim: int = 2

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        Activation.parse(self.activation)
        if self.input_activation is not None:
            Activation.parse(self.input_activation)
        if self.encoding not in ENCODINGS:
            raise ValueError(f"unknown encoding {self.encoding!r}")
        if self.kind == "mlp":
            if len(self.dims) < 2:
                raise ValueError("MLP needs at least input and output dims")
            first, last = self.dims[0], self.dims[-1]
        elif self.kind == "resnet":
            if self.n_blocks < 1 or len(self.dims) < 2:
                raise ValueError("ResNet needs n_blocks >= 1 and at least two block dims")
            if self.dims[0] != self.dims[-1]:
                raise ValueError("ResNet block dims must satisfy L0 == LD")
            first, last = self.in_dim, self.out_dim
        else:
            raise ValueError(f"unknown network kind {self.kind!r}")
        if last != 1:
            raise ValueError("output dimension must be 1")
        if first != self.input_dim:
            raise ValueError(
                f"input layer has {first} units but encoding {self.encoding!r} "
                f"produces {self.input_dim}")

    @property
    def input_dim(self):
        extra = {"coords": 0, "onehot": 2, "param": 1}[self.encoding]
        return self.coord_dim + extra

    def layout(self):
        if self.kind == "mlp":
            out = []
            for i, (n, m) in enumerate(zip(self.dims[:-1], self.dims[1:])):
                out += [(f"W{i}", (m, n)), (f"b{i}", (m,))]
            return out
        L = self.dims
        out = [("W_in", (L[0], self.in_dim)), ("b_in", (L[0],))]
        for i in range(self.n_blocks):
            for j in range(len(L) - 1):
                out += [(f"W{i}_{j}", (L[j + 1], L[j])), (f"b{i}_{j}", (L[j + 1],))]
        out += [("W_out", (self.out_dim, L[-1])), ("b_out", (self.out_dim,))]
        return out

    def n_params(self):
        return sum(int(np.prod(s)) for _, s in self.layout())

    def to_dict(self):
        d = asdict(self)
        d["dims"] = list(self.dims)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def mlp(dims, activation="swish", encoding="coords"):
    return NetworkSpec("mlp", tuple(dims), activation, encoding=encoding)


def resnet(n_blocks, block_dims, activation="swish", input_activation=None,
           encoding="coords", coord_dim=2):
    in_dim = coord_dim + {"coords": 0, "onehot": 2, "param": 1}[encoding]
    return NetworkSpec("resnet", tuple(block_dims), activation, n_blocks=n_blocks,
                       in_dim=in_dim, input_activation=input_activation,
                       encoding=encoding, coord_dim=coord_dim)


PRESETS = {
    "laplace_mlp": lambda act="swish": mlp([2, 20, 20, 20, 20, 1], act),
    "laplace_resnet": lambda act="swish": resnet(3, [20, 20, 20], act),
    "interface_resnet": lambda: resnet(3, [60, 60, 60, 60], "swish(1)", "lrelu(0.1)",
                                       encoding="onehot"),
    "taxis_resnet": lambda: resnet(3, [40, 40, 40, 40], "elu"),
    "taxis_family_resnet": lambda: resnet(4, [40, 40, 40, 40], "lrelu(0.1)",
                                          encoding="param"),
}


def init(spec: NetworkSpec, seed) -> ParamVector:
    """Fan-in scaled normal weights, zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    params = ParamVector(spec.layout())
    for name, shape in params.layout:
        if name.startswith("W"):
            params[name][...] = rng.standard_normal(shape) / np.sqrt(shape[1])
    return params


def encode(points, encoding="coords", categories=None, params=None):
    """Network input rows for ``points`` (n, d).

    ``onehot`` appends (1, 0) for category 0 and (0, 1) for category 1;
    ``param`` appends the PDE parameter value per row.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = points.shape[0]
    if encoding == "coords":
        return points
    if encoding == "onehot":
        if categories is None:
            raise ValueError("one-hot encoding needs subdomain categories")
        cat = np.broadcast_to(np.asarray(categories, dtype=np.int64), (n,))
        if np.any((cat < 0) | (cat > 1)):
            raise ValueError("categories must be 0 or 1")
        out = np.zeros((n, points.shape[1] + 2))
        out[:, :-2] = points
        out[np.arange(n), points.shape[1] + cat] = 1.0
        return out
    if encoding == "param":
        if params is None:
            raise ValueError("parameter encoding needs a parameter value")
        r = np.broadcast_to(np.asarray(params, dtype=np.float64), (n,))
        return np.column_stack([points, r])
    raise ValueError(f"unknown encoding {encoding!r}")


FORWARD_CHUNK = 1024


def forward(spec: NetworkSpec, params: ParamVector, inputs):
    """Evaluate u for encoded input rows; returns shape (n,).

    Rows are processed in cache-sized chunks; results do not depend on the
    chunking since every row is computed independently.
    """
    h = np.atleast_2d(inputs)
    if h.shape[1] != spec.input_dim:
        raise ValueError(f"expected {spec.input_dim} input columns, got {h.shape[1]}")
    n = h.shape[0]
    if n <= FORWARD_CHUNK:
        return _forward_rows(spec, params, h)
    out = np.empty(n)
    for i in range(0, n, FORWARD_CHUNK):
        out[i:i + FORWARD_CHUNK] = _forward_rows(spec, params, h[i:i + FORWARD_CHUNK])
    return out


def _forward_rows(spec, params, h):
    act = Activation.parse(spec.activation)
    if spec.kind == "mlp":
        depth = len(spec.dims) - 1
        for i in range(depth - 1):
            z = h @ params[f"W{i}"].T
            z += params[f"b{i}"]
            h = act.apply_(z)
        out = h @ params[f"W{depth - 1}"].T + params[f"b{depth - 1}"]
        return out[:, 0]
    act_in = Activation.parse(spec.input_activation or spec.activation)
    z = h @ params["W_in"].T
    z += params["b_in"]
    R = act_in.apply_(z)
    for i in range(spec.n_blocks):
        z = R
        for j in range(len(spec.dims) - 1):
            z = z @ params[f"W{i}_{j}"].T
            z += params[f"b{i}_{j}"]
            z = act.apply_(z)
        R = R + z
    out = R @ params["W_out"].T + params["b_out"]
    return out[:, 0]


def record_forward(tape: Tape, spec: NetworkSpec, inputs):
    """Same computation as :func:`forward`, recorded on ``tape``; returns an (n,) node."""
    x = tape.constant(np.atleast_2d(inputs))
    p = tape.param
    if spec.kind == "mlp":
        depth = len(spec.dims) - 1
        h = x
        for i in range(depth - 1):
            h = tape.activation(spec.activation, tape.affine(p(f"W{i}"), p(f"b{i}"), h))
        out = tape.affine(p(f"W{depth - 1}"), p(f"b{depth - 1}"), h)
    else:
        R = tape.activation(spec.input_activation or spec.activation,
                            tape.affine(p("W_in"), p("b_in"), x))
        for i in range(spec.n_blocks):
            z = R
            for j in range(len(spec.dims) - 1):
                z = tape.activation(spec.activation, tape.affine(p(f"W{i}_{j}"), p(f"b{i}_{j}"), z))
            R = tape.add(R, z)
        out = tape.affine(p("W_out"), p("b_out"), R)
    return tape.column(out)


class Network:
    """A NetworkSpec bound to parameters; callable on raw points."""

    def __init__(self, spec: NetworkSpec, params: ParamVector, categorize=None):
        if params.layout != spec.layout():
            raise ValueError("parameter layout does not match the network spec")
        self.spec = spec
        self.params = params
        self.categorize = categorize

    def __call__(self, points, categories=None, params=None):
        points = np.atleast_2d(points)
        if self.spec.encoding == "onehot" and categories is None:
            if self.categorize is None:
                raise ValueError("one-hot network needs categories or a categorize function")
            categories = self.categorize(points)
        return forward(self.spec, self.params, encode(points, self.spec.encoding, categories, params))


CHECKPOINT_MAGIC = b"DFLMCKPT"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, spec: NetworkSpec, params: ParamVector, header=None, arrays=None):
    """Write header JSON + little-endian float64 payload (theta first, then ``arrays``)."""
    sections = [("theta", np.asarray(params.values, dtype=np.float64))]
    for name, arr in (arrays or {}).items():
        sections.append((name, np.asarray(arr, dtype=np.float64)))
    meta = dict(header or {})
    meta["version"] = CHECKPOINT_VERSION
    meta["network"] = spec.to_dict()
    meta["sections"] = [{"name": n, "shape": list(a.shape)} for n, a in sections]
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(blob)))
        f.write(blob)
        for _, arr in sections:
            f.write(arr.astype("<f8").tobytes(order="C"))


def load_checkpoint(path):
    """Returns ``(spec, params, header, arrays)``."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<IQ", data, 8)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    start = 8 + struct.calcsize("<IQ")
    header = json.loads(data[start:start + hlen].decode("utf-8"))
    offset = start + hlen
    arrays = {}
    for sec in header["sections"]:
        count = int(np.prod(sec["shape"], dtype=np.int64))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        arrays[sec["name"]] = arr.astype(np.float64).reshape(sec["shape"])
        offset += 8 * count
    spec = NetworkSpec.from_dict(header["network"])
    params = ParamVector(spec.layout(), arrays.pop("theta"))
    return spec, params, header, arrays
