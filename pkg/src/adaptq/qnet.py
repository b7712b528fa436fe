"""Q-network parameters, optimizer, and checkpoint serialization."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .backend import default_backend


def huber(x, delta: float = 1.0):
    """Elementwise Huber penalty: quadratic within delta, linear outside."""
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    return np.where(ax <= delta, 0.5 * x * x, delta * (ax - 0.5 * delta))


class QNetwork:
    """Three fully-connected layers [D, hidden0, hidden1, N], ReLU inside.

    Weights and biases are float64, initialized uniformly in
    [-1/sqrt(fan_in), 1/sqrt(fan_in)] from the given seed.
    """

    def __init__(
        self,
        feature_dim: int,
        num_actions: int,
        *,
        hidden: tuple[int, int] = (128, 64),
        seed: int = 0,
        backend=None,
    ) -> None:
        if feature_dim < 1 or num_actions < 1:
            raise ValueError("feature_dim and num_actions must be positive")
        self.layer_sizes = (feature_dim, hidden[0], hidden[1], num_actions)
        self.seed = seed
        self.backend = backend if backend is not None else default_backend()
        rng = np.random.default_rng(seed)
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.layer_sizes, self.layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.params.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def feature_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def num_actions(self) -> int:
        return self.layer_sizes[-1]

    def activations(self, X: np.ndarray):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return self.backend.forward(X, *self.params)

    def forward(self, X: np.ndarray) -> np.ndarray:
        """Q-values for a batch of states, shape (B, N)."""
        return self.activations(X)[2]

    def q_values(self, state: np.ndarray) -> np.ndarray:
        """Q-values for one state, shape (N,)."""
        return self.forward(state)[0]

    def clone(self) -> "QNetwork":
        twin = QNetwork.__new__(QNetwork)
        twin.layer_sizes = self.layer_sizes
        twin.seed = self.seed
        twin.backend = self.backend
        twin.params = [p.copy() for p in self.params]
        return twin

    def copy_params_from(self, other: "QNetwork") -> None:
        if other.layer_sizes != self.layer_sizes:
            raise ValueError("layer sizes differ")
        for mine, theirs in zip(self.params, other.params):
            mine[...] = theirs

    # the backend is a module, which pickle refuses; ship its name instead
    # so networks can cross process boundaries for parallel evaluation
    def __getstate__(self):
        state = self.__dict__.copy()
        state["backend"] = (
            "cython" if self.backend.__name__.endswith("_qnet_core") else "numpy"
        )
        return state

    def __setstate__(self, state) -> None:
        from .backend import load_backend

        state["backend"] = load_backend(state["backend"])
        self.__dict__.update(state)


class Adam:
    """Adaptive-moment optimizer over a QNetwork's parameter list."""

    def __init__(
        self,
        net: QNetwork,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in net.params]
        self.v = [np.zeros_like(p) for p in net.params]

    def step(self, params: list[np.ndarray], grads) -> None:
        self.t += 1
        correct1 = 1.0 - self.beta1**self.t
        correct2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


def save_checkpoint(net: QNetwork, path: str | Path, meta: dict | None = None) -> None:
    """Write a JSON header plus the parameters as a little-endian f32 blob."""
    header = json.dumps(
        {"layer_sizes": list(net.layer_sizes), "seed": net.seed, "meta": meta or {}}
    ).encode()
    blob = b"".join(np.asarray(p, dtype="<f4").tobytes() for p in net.params)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(blob)


def load_checkpoint(path: str | Path, backend=None) -> tuple[QNetwork, dict]:
    raw = Path(path).read_bytes()
    (hlen,) = struct.unpack_from("<I", raw, 0)
    header = json.loads(raw[4 : 4 + hlen].decode())
    sizes = header["layer_sizes"]
    net = QNetwork(
        sizes[0],
        sizes[-1],
        hidden=(sizes[1], sizes[2]),
        seed=header["seed"],
        backend=backend,
    )
    body = raw[4 + hlen :]
    offset = 0
    for p in net.params:
        nbytes = p.size * 4
        flat = np.frombuffer(body[offset : offset + nbytes], dtype="<f4")
        p[...] = flat.astype(np.float64).reshape(p.shape)
        offset += nbytes
    if offset != len(body):
        raise ValueError("checkpoint blob length does not match layer sizes")
    return net, header["meta"]
