"""The two estimators: thigh-frame pose regression and horizontal velocity."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from ..features import POSE_INPUT_DIM, TRANS_INPUT_DIM
from .layers import DenseStack, LSTMStack
from .losses import pose_loss, pose_loss_grad, velocity_loss, velocity_loss_grad

POSE_OUTPUT_DIM = 24 * 6
VELOCITY_OUTPUT_DIM = 2


class _RecurrentNet:
    kind = ""
    input_dim = 0
    output_dim = 0

    def __init__(self, hidden: int = 512, num_layers: int = 2, seed: int = 0, dtype=np.float32):
        self.hidden = hidden
        self.num_layers = num_layers
        self.dtype = np.dtype(dtype)
        self.core = LSTMStack("lstm", self.input_dim, hidden, num_layers)
        self.head = DenseStack("head", [hidden, self.output_dim])
        self.params: dict[str, np.ndarray] = {}
        self._state = None
        rng = np.random.default_rng(seed)
        self._init_params(rng)

    def _init_params(self, rng):
        self.core.init(self.params, rng, self.dtype)
        self.head.init(self.params, rng, self.dtype)

    def config(self) -> dict:
        return {"hidden": self.hidden, "num_layers": self.num_layers}

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def _check_input(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[-1] != self.input_dim or x.shape[1] == 0:
            raise ShapeMismatch(f"expected (B, T, {self.input_dim}) input with T > 0, got {x.shape}")
        return x

    # training helpers implemented by subclasses: initial_state / init_backward
    def initial_state(self, batch, extra):
        return self.core.zero_state(batch, self.dtype), None

    def init_backward(self, d_state, init_cache, grads):
        pass

    def forward_batch(self, x, extra=None):
        x = self._check_input(x)
        state, init_cache = self.initial_state(x.shape[0], extra)
        h, caches = self.core.forward(self.params, x, state)
        y, head_cache = self.head.forward(self.params, h)
        return y, (caches, head_cache, init_cache)

    def backward_batch(self, dy, cache) -> dict:
        caches, head_cache, init_cache = cache
        grads: dict[str, np.ndarray] = {}
        dh = self.head.backward(self.params, dy, head_cache, grads)
        _, d_state = self.core.backward(self.params, dh, caches, grads)
        self.init_backward(d_state, init_cache, grads)
        return grads

    # streaming
    def reset(self, extra=None):
        self._state, _ = self.initial_state(1, None if extra is None else np.asarray(extra)[None])

    def step(self, x: np.ndarray) -> np.ndarray:
        if self._state is None:
            self.reset()
        x = np.asarray(x, dtype=self.dtype).reshape(1, -1)
        if x.shape[1] != self.input_dim:
            raise ShapeMismatch(f"expected a {self.input_dim}-vector, got {x.shape[1]}")
        h, self._state = self.core.step(self.params, x, self._state)
        return self.head.apply(self.params, h)[0]


class PoseNet(_RecurrentNet):
    """Pose regressor whose recurrent state is initialized from the first-frame pose."""

    kind = "pose"
    input_dim = POSE_INPUT_DIM
    output_dim = POSE_OUTPUT_DIM

    def __init__(self, hidden: int = 512, num_layers: int = 2, init_hidden: int | None = None,
                 seed: int = 0, dtype=np.float32):
        self.init_hidden = hidden if init_hidden is None else init_hidden
        super().__init__(hidden, num_layers, seed, dtype)

    def _init_params(self, rng):
        self.init_encoder = DenseStack(
            "init", [POSE_OUTPUT_DIM, self.init_hidden, self.init_hidden, 2 * self.num_layers * self.hidden])
        self.init_encoder.init(self.params, rng, self.dtype)
        super()._init_params(rng)

    def config(self) -> dict:
        return {**super().config(), "init_hidden": self.init_hidden}

    def initial_state(self, batch, first_pose):
        if first_pose is None:
            raise ShapeMismatch("PoseNet needs the first-frame pose")
        fp = np.asarray(first_pose, dtype=self.dtype).reshape(batch, POSE_OUTPUT_DIM)
        out, cache = self.init_encoder.forward(self.params, fp)
        hs = self.hidden
        state = [(out[:, (2 * l) * hs:(2 * l + 1) * hs], out[:, (2 * l + 1) * hs:(2 * l + 2) * hs])
                 for l in range(self.num_layers)]
        return state, cache

    def init_backward(self, d_state, init_cache, grads):
        d_out = np.concatenate([part for pair in d_state for part in pair], axis=1)
        self.init_encoder.backward(self.params, d_out, init_cache, grads)

    def forward(self, first_pose, seq) -> np.ndarray:
        """Whole-sequence forward; returns ``(T, 144)`` (or ``(B, T, 144)`` for batches)."""
        seq = np.asarray(seq)
        y, _ = self.forward_batch(seq, np.asarray(first_pose).reshape(-1, POSE_OUTPUT_DIM))
        return y[0] if seq.ndim == 2 else y

    def loss_and_grads(self, batch) -> tuple[float, dict]:
        first, x, target = batch
        y, cache = self.forward_batch(x, first)
        return pose_loss(y, target), self.backward_batch(pose_loss_grad(y, target).astype(self.dtype), cache)


class VelocityNet(_RecurrentNet):
    """Horizontal root velocity from world-frame sensor features."""

    kind = "velocity"
    input_dim = TRANS_INPUT_DIM
    output_dim = VELOCITY_OUTPUT_DIM

    def forward(self, seq) -> np.ndarray:
        seq = np.asarray(seq)
        y, _ = self.forward_batch(seq)
        return y[0] if seq.ndim == 2 else y

    def loss_and_grads(self, batch) -> tuple[float, dict]:
        x, target = batch
        y, cache = self.forward_batch(x)
        return velocity_loss(y, target), self.backward_batch(velocity_loss_grad(y, target).astype(self.dtype), cache)


def pose_forward(net: PoseNet, first_pose, seq) -> np.ndarray:
    return net.forward(first_pose, seq)


def velocity_forward(net: VelocityNet, seq) -> np.ndarray:
    return net.forward(seq)
