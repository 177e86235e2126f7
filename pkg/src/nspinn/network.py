"""MLP surrogate mapping (x, y[, t]) to (u, v, p), plus checkpoint I/O."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CheckpointFormatError, CheckpointParseError, ContractViolation

CHECKPOINT_VERSION = 1
OUTPUT_WIDTH = 3


def sigmoid(z):
    # tanh form: vectorizes far better than exp on common CPUs
    return 0.5 * np.tanh(0.5 * z) + 0.5


class Activation:
    """Element-wise activation with closed-form derivatives up to third order.

    ``derivatives(z, n)`` returns ``(f, f', ..., f^(n))``. The value ``f`` is
    computed with the same expression as ``value`` so that plain forward
    passes and jet passes agree bit for bit.
    """

    name = ""

    def value(self, z):
        raise NotImplementedError

    def derivatives(self, z, n):
        raise NotImplementedError


class SiLU(Activation):
    name = "silu"

    def value(self, z):
        return z * sigmoid(z)

    def derivatives(self, z, n):
        s = sigmoid(z)
        out = [z * s]
        if n >= 1:
            one_minus = 1.0 - s
            out.append(s * (1.0 + z * one_minus))
        if n >= 2:
            q = s * one_minus
            skew = 1.0 - 2.0 * s
            out.append(q * (2.0 + z * skew))
        if n >= 3:
            out.append(q * (skew * (3.0 + z * skew) - 2.0 * z * q))
        return out


class Logistic(Activation):
    name = "sigmoid"

    def value(self, z):
        return sigmoid(z)

    def derivatives(self, z, n):
        s = sigmoid(z)
        out = [s]
        if n >= 1:
            q = s * (1.0 - s)
            out.append(q)
        if n >= 2:
            skew = 1.0 - 2.0 * s
            out.append(q * skew)
        if n >= 3:
            out.append(q * (skew * skew - 2.0 * q))
        return out


class Tanh(Activation):
    name = "tanh"

    def value(self, z):
        return np.tanh(z)

    def derivatives(self, z, n):
        t = np.tanh(z)
        out = [t]
        if n >= 1:
            d1 = 1.0 - t * t
            out.append(d1)
        if n >= 2:
            out.append(-2.0 * t * d1)
        if n >= 3:
            out.append(d1 * (6.0 * t * t - 2.0))
        return out


class Identity(Activation):
    name = "identity"

    def value(self, z):
        return z

    def derivatives(self, z, n):
        out = [z]
        if n >= 1:
            out.append(np.ones_like(z))
        out.extend(np.zeros_like(z) for _ in range(2, n + 1))
        return out


ACTIVATIONS: dict[str, Activation] = {
    a.name: a for a in (SiLU(), Logistic(), Tanh(), Identity())
}


def get_activation(tag: str) -> Activation:
    try:
        return ACTIVATIONS[tag]
    except KeyError:
        raise ContractViolation(
            f"unknown activation {tag!r}; expected one of {sorted(ACTIVATIONS)}"
        ) from None


def dtype_for(precision: int) -> np.dtype:
    if precision == 64:
        return np.dtype(np.float64)
    if precision == 32:
        return np.dtype(np.float32)
    raise ContractViolation(f"precision must be 32 or 64, got {precision}")


@dataclass(frozen=True, eq=False)
class Mlp:
    """Fully connected network ``h^{k+1} = act(A^k h^k + b^k)``.

    ``weights[k]`` has shape ``(out, in)``. The last layer is linear unless
    ``literal_output_activation`` is set.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activation: str = "silu"
    literal_output_activation: bool = False
    precision: int = 64
    seed: int | None = None

    def __post_init__(self):
        get_activation(self.activation)
        dtype = dtype_for(self.precision)
        if len(self.weights) != len(self.biases) or len(self.weights) < 2:
            raise ContractViolation("need at least one hidden layer and matching biases")
        weights = tuple(np.ascontiguousarray(w, dtype=dtype) for w in self.weights)
        biases = tuple(np.ascontiguousarray(b, dtype=dtype) for b in self.biases)
        prev = weights[0].shape[1]
        if prev not in (2, 3):
            raise ContractViolation(f"input width must be 2 or 3, got {prev}")
        for k, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or w.shape[1] != prev or b.shape != (w.shape[0],):
                raise ContractViolation(
                    f"layer {k}: weight {w.shape} / bias {b.shape} incompatible "
                    f"with previous width {prev}"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ContractViolation(f"layer {k}: non-finite parameters")
            prev = w.shape[0]
        if prev != OUTPUT_WIDTH:
            raise ContractViolation(f"output width must be {OUTPUT_WIDTH}, got {prev}")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def dtype(self) -> np.dtype:
        return dtype_for(self.precision)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def unsteady(self) -> bool:
        return self.input_dim == 3

    @property
    def hidden_layers(self) -> int:
        return len(self.weights) - 1

    @property
    def widths(self) -> list[int]:
        return [w.shape[0] for w in self.weights[:-1]]

    @property
    def act(self) -> Activation:
        return get_activation(self.activation)

    @property
    def params(self) -> list[np.ndarray]:
        """Parameters interleaved as ``[A0, b0, A1, b1, ...]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def layer_activated(self, k: int) -> bool:
        return k < self.hidden_layers or self.literal_output_activation

    def with_params(self, params: Sequence[np.ndarray]) -> "Mlp":
        return Mlp(
            weights=tuple(params[0::2]),
            biases=tuple(params[1::2]),
            activation=self.activation,
            literal_output_activation=self.literal_output_activation,
            precision=self.precision,
            seed=self.seed,
        )

    def astype(self, precision: int) -> "Mlp":
        return Mlp(
            weights=self.weights,
            biases=self.biases,
            activation=self.activation,
            literal_output_activation=self.literal_output_activation,
            precision=precision,
            seed=self.seed,
        )


def new_mlp(
    hidden_layers: int,
    neurons: int,
    activation: str = "silu",
    seed: int = 0,
    unsteady: bool = True,
    precision: int = 64,
    literal_output_activation: bool = False,
) -> Mlp:
    """Glorot-uniform weights, zero biases, reproducible per seed."""
    if hidden_layers < 1 or neurons < 1:
        raise ContractViolation("hidden_layers and neurons must be >= 1")
    rng = np.random.default_rng(seed)
    sizes = [3 if unsteady else 2] + [neurons] * hidden_layers + [OUTPUT_WIDTH]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(
        tuple(weights),
        tuple(biases),
        activation=activation,
        literal_output_activation=literal_output_activation,
        precision=precision,
        seed=seed,
    )


def as_points(net: Mlp, points) -> np.ndarray:
    pts = np.asarray(points, dtype=net.dtype)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != net.input_dim:
        raise ContractViolation(
            f"points of shape {np.shape(points)} do not match input width {net.input_dim}"
        )
    return pts


def affine(h: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return h @ w.T + b


def forward(net: Mlp, points) -> np.ndarray:
    """Evaluate the network; returns an ``(N, 3)`` array of (u, v, p)."""
    h = as_points(net, points)
    act = net.act
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = affine(h, w, b)
        h = act.value(z) if net.layer_activated(k) else z
    return h


# -- checkpoints --------------------------------------------------------------


@dataclass
class Checkpoint:
    net: Mlp
    variant: str = "unsteady"
    iteration: int = 0
    loss: float | None = None
    extra: dict = field(default_factory=dict)


def checkpoint_to_json(ckpt: Checkpoint) -> str:
    net = ckpt.net
    doc = {
        "version": CHECKPOINT_VERSION,
        "variant": ckpt.variant,
        "activation": net.activation,
        "literal_output_activation": net.literal_output_activation,
        "precision": net.precision,
        "seed": net.seed,
        "iteration": ckpt.iteration,
        "loss": None if ckpt.loss is None or not np.isfinite(ckpt.loss) else float(ckpt.loss),
        "layers": [
            {
                "rows": int(w.shape[0]),
                "cols": int(w.shape[1]),
                # tolist() widens to Python floats whose repr round-trips exactly
                "A": w.ravel().tolist(),
                "b": b.tolist(),
            }
            for w, b in zip(net.weights, net.biases)
        ],
    }
    return json.dumps(doc)


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    atomic_write_text(path, checkpoint_to_json(ckpt))


def checkpoint_from_json(text: str, precision: int | None = None) -> Checkpoint:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise CheckpointParseError(offset, exc.msg) from None
    if not isinstance(doc, dict):
        raise CheckpointFormatError("checkpoint must be a JSON object")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointFormatError(
            f"unsupported checkpoint version {doc.get('version')!r}"
        )
    try:
        stored = int(doc["precision"])
        layers = doc["layers"]
        weights, biases = [], []
        for k, layer in enumerate(layers):
            rows, cols = int(layer["rows"]), int(layer["cols"])
            a = np.asarray(layer["A"], dtype=dtype_for(stored))
            b = np.asarray(layer["b"], dtype=dtype_for(stored))
            if a.shape != (rows * cols,) or b.shape != (rows,):
                raise CheckpointFormatError(
                    f"layer {k}: header says {rows}x{cols} but found "
                    f"{a.size} weights and {b.size} biases"
                )
            weights.append(a.reshape(rows, cols))
            biases.append(b)
        net = Mlp(
            tuple(weights),
            tuple(biases),
            activation=doc["activation"],
            literal_output_activation=bool(doc.get("literal_output_activation", False)),
            precision=stored,
            seed=doc.get("seed"),
        )
    except (KeyError, TypeError) as exc:
        raise CheckpointFormatError(f"missing or malformed field: {exc}") from None
    except ContractViolation as exc:
        raise CheckpointFormatError(str(exc)) from None
    if precision is not None and precision != stored:
        net = net.astype(precision)
    loss = doc.get("loss")
    return Checkpoint(
        net=net,
        variant=doc.get("variant", "unsteady"),
        iteration=int(doc.get("iteration", 0)),
        loss=None if loss is None else float(loss),
    )


def load_checkpoint(path, precision: int | None = None) -> Checkpoint:
    return checkpoint_from_json(Path(path).read_text(), precision=precision)


def save(net: Mlp, path, variant="unsteady", iteration=0, loss=None) -> None:
    save_checkpoint(Checkpoint(net, variant, iteration, loss), path)


def load(path, precision: int | None = None) -> Mlp:
    return load_checkpoint(path, precision).net
