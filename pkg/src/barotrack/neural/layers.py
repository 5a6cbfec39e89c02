"""Dense stacks and multi-layer LSTMs with hand-written backward passes.

Parameters live in flat ``dict[str, ndarray]`` objects owned by the network;
layers only know the key prefix they read from. Batched tensors are
``(batch, time, features)``.
"""

from __future__ import annotations

import numpy as np


def sigmoid(x):
    # split form avoids overflow in exp for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class DenseStack:
    """Fully connected layers, ReLU between them, linear output."""

    def __init__(self, prefix: str, sizes: list[int]):
        self.prefix = prefix
        self.sizes = list(sizes)

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def keys(self, i: int) -> tuple[str, str]:
        return f"{self.prefix}.{i}.W", f"{self.prefix}.{i}.b"

    def init(self, params: dict, rng: np.random.Generator, dtype=np.float64) -> None:
        for i in range(self.n_layers):
            fan_in, fan_out = self.sizes[i], self.sizes[i + 1]
            k = 1.0 / np.sqrt(fan_in)
            w, b = self.keys(i)
            params[w] = rng.uniform(-k, k, (fan_in, fan_out)).astype(dtype)
            params[b] = rng.uniform(-k, k, fan_out).astype(dtype)

    def forward(self, params: dict, x: np.ndarray):
        cache = []
        h = x
        for i in range(self.n_layers):
            w, b = self.keys(i)
            z = h @ params[w] + params[b]
            cache.append(h)
            h = np.maximum(z, 0.0) if i < self.n_layers - 1 else z
        cache.append(h)
        return h, cache

    def backward(self, params: dict, dy: np.ndarray, cache, grads: dict) -> np.ndarray:
        d = dy
        for i in reversed(range(self.n_layers)):
            w, b = self.keys(i)
            if i < self.n_layers - 1:
                d = d * (cache[i + 1] > 0)
            h_in = cache[i]
            grads[w] = grads.get(w, 0) + h_in.reshape(-1, h_in.shape[-1]).T @ d.reshape(-1, d.shape[-1])
            grads[b] = grads.get(b, 0) + d.reshape(-1, d.shape[-1]).sum(axis=0)
            d = d @ params[w].T
        return d

    def apply(self, params: dict, x: np.ndarray) -> np.ndarray:
        for i in range(self.n_layers):
            w, b = self.keys(i)
            x = x @ params[w] + params[b]
            if i < self.n_layers - 1:
                x = np.maximum(x, 0.0)
        return x


class LSTMStack:
    """Unidirectional multi-layer LSTM, gate order (input, forget, cell, output)."""

    def __init__(self, prefix: str, input_size: int, hidden: int, num_layers: int = 2):
        self.prefix = prefix
        self.input_size = input_size
        self.hidden = hidden
        self.num_layers = num_layers

    def keys(self, layer: int) -> tuple[str, str, str]:
        p = f"{self.prefix}.{layer}"
        return f"{p}.Wx", f"{p}.Wh", f"{p}.b"

    def init(self, params: dict, rng: np.random.Generator, dtype=np.float64) -> None:
        h = self.hidden
        k = 1.0 / np.sqrt(h)
        for layer in range(self.num_layers):
            d = self.input_size if layer == 0 else h
            wx, wh, b = self.keys(layer)
            params[wx] = rng.uniform(-k, k, (d, 4 * h)).astype(dtype)
            params[wh] = rng.uniform(-k, k, (h, 4 * h)).astype(dtype)
            bias = rng.uniform(-k, k, 4 * h)
            bias[h:2 * h] += 1.0
            params[b] = bias.astype(dtype)

    def zero_state(self, batch: int, dtype=np.float64):
        return [(np.zeros((batch, self.hidden), dtype), np.zeros((batch, self.hidden), dtype))
                for _ in range(self.num_layers)]

    # ---- whole-sequence training path
    def forward(self, params: dict, x: np.ndarray, state):
        """``x`` is ``(B, T, D)``; ``state`` a list of ``(h0, c0)`` per layer."""
        caches = []
        inp = x
        hs = self.hidden
        for layer in range(self.num_layers):
            wx, wh, b = self.keys(layer)
            B, T, D = inp.shape
            h, c = state[layer]
            xw = (inp.reshape(B * T, D) @ params[wx]).reshape(B, T, 4 * hs) + params[b]
            H = np.empty((B, T, hs), dtype=x.dtype)
            C = np.empty((B, T, hs), dtype=x.dtype)
            G = np.empty((B, T, 4 * hs), dtype=x.dtype)
            TC = np.empty((B, T, hs), dtype=x.dtype)
            Wh = params[wh]
            for t in range(T):
                z = xw[:, t] + h @ Wh
                g = np.empty_like(z)
                g[:, :2 * hs] = sigmoid(z[:, :2 * hs])
                g[:, 2 * hs:3 * hs] = np.tanh(z[:, 2 * hs:3 * hs])
                g[:, 3 * hs:] = sigmoid(z[:, 3 * hs:])
                c = g[:, hs:2 * hs] * c + g[:, :hs] * g[:, 2 * hs:3 * hs]
                tc = np.tanh(c)
                h = g[:, 3 * hs:] * tc
                H[:, t], C[:, t], G[:, t], TC[:, t] = h, c, g, tc
            caches.append((inp, H, C, G, TC, state[layer][0], state[layer][1]))
            inp = H
        return inp, caches

    def backward(self, params: dict, d_out: np.ndarray, caches, grads: dict):
        """Backprop through time. Returns ``(dx, d_state)``."""
        hs = self.hidden
        d_state = [None] * self.num_layers
        d = d_out
        for layer in reversed(range(self.num_layers)):
            wx, wh, b = self.keys(layer)
            inp, H, C, G, TC, h0, c0 = caches[layer]
            B, T, D = inp.shape
            Wh = params[wh]
            dZ = np.empty_like(G)
            dh_next = np.zeros((B, hs), dtype=d.dtype)
            dc_next = np.zeros((B, hs), dtype=d.dtype)
            for t in reversed(range(T)):
                g = G[:, t]
                i, f, gg, o = g[:, :hs], g[:, hs:2 * hs], g[:, 2 * hs:3 * hs], g[:, 3 * hs:]
                c_prev = C[:, t - 1] if t > 0 else c0
                dh = d[:, t] + dh_next
                tc = TC[:, t]
                dc = dc_next + dh * o * (1.0 - tc * tc)
                dz = dZ[:, t]
                dz[:, :hs] = dc * gg * i * (1.0 - i)
                dz[:, hs:2 * hs] = dc * c_prev * f * (1.0 - f)
                dz[:, 2 * hs:3 * hs] = dc * i * (1.0 - gg * gg)
                dz[:, 3 * hs:] = dh * tc * o * (1.0 - o)
                dh_next = dz @ Wh.T
                dc_next = dc * f
            H_prev = np.concatenate([h0[:, None], H[:, :-1]], axis=1)
            flat_dz = dZ.reshape(B * T, 4 * hs)
            grads[wx] = grads.get(wx, 0) + inp.reshape(B * T, D).T @ flat_dz
            grads[wh] = grads.get(wh, 0) + H_prev.reshape(B * T, hs).T @ flat_dz
            grads[b] = grads.get(b, 0) + flat_dz.sum(axis=0)
            d = (flat_dz @ params[wx].T).reshape(B, T, D)
            d_state[layer] = (dh_next, dc_next)
        return d, d_state

    # ---- streaming inference path
    def step(self, params: dict, x: np.ndarray, state):
        """One time step for ``x`` of shape ``(B, D)``; returns ``(h_top, new_state)``."""
        hs = self.hidden
        new_state = []
        inp = x
        for layer in range(self.num_layers):
            wx, wh, b = self.keys(layer)
            h, c = state[layer]
            z = inp @ params[wx] + h @ params[wh] + params[b]
            ifo = sigmoid(np.concatenate([z[:, :2 * hs], z[:, 3 * hs:]], axis=1))
            i, f, o = ifo[:, :hs], ifo[:, hs:2 * hs], ifo[:, 2 * hs:]
            c = f * c + i * np.tanh(z[:, 2 * hs:3 * hs])
            h = o * np.tanh(c)
            new_state.append((h, c))
            inp = h
        return inp, new_state
