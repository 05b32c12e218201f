"""Dense float64 numeric core with explicit forward/backward for every op.

Values live in numpy arrays; every operation builds a ``Var`` node that
remembers its inputs and a hand-written backward closure.  Gradients
accumulate with ``+=`` (shared parameters may sit on several paths) and are
zeroed only by the optimizer step.  Everything is deterministic given a
numpy ``Generator``.
"""

from __future__ import annotations

import json
import struct
import zipfile
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand dimensions disagree for an operation."""


class EmptyInputError(ValueError):
    """An operation that needs at least one element got none."""


class ParameterError(ValueError):
    """A hyperparameter is outside its valid range."""


class Var:
    """A node in the computation: a value, its gradient and a backward hook."""

    __slots__ = ("value", "grad", "_parents", "_backward")

    def __init__(self, value, parents: tuple = (), backward: Callable[[], None] | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape


class Parameter(Var):
    """A named, trainable leaf ``Var``."""

    __slots__ = ("name",)

    def __init__(self, value, name: str):
        super().__init__(value)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name}, shape={self.value.shape})"


def constant(value) -> Var:
    return Var(value)


def backward(root: Var) -> None:
    """Run reverse-mode accumulation from a scalar root."""
    if root.value.ndim != 0:
        raise ShapeError(f"backward root must be scalar, got shape {root.value.shape}")
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node._backward is not None:
            node._backward()


def zero_grads(params: Iterable[Var]) -> None:
    for p in params:
        p.grad[...] = 0.0


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------

def add(a: Var, b: Var) -> Var:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"add: shapes {a.value.shape} and {b.value.shape} differ")
    out = Var(a.value + b.value, (a, b))

    def _bw():
        a.grad += out.grad
        b.grad += out.grad

    out._backward = _bw
    return out


def mul(a: Var, b: Var) -> Var:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"mul: shapes {a.value.shape} and {b.value.shape} differ")
    out = Var(a.value * b.value, (a, b))

    def _bw():
        a.grad += b.value * out.grad
        b.grad += a.value * out.grad

    out._backward = _bw
    return out


def scale(x: Var, k: float) -> Var:
    out = Var(x.value * k, (x,))

    def _bw():
        x.grad += k * out.grad

    out._backward = _bw
    return out


def elem_mul_const(x: Var, mask: np.ndarray) -> Var:
    """Elementwise product with a constant array (dropout masks etc.)."""
    if x.value.shape != mask.shape:
        raise ShapeError(f"elem_mul_const: shapes {x.value.shape} and {mask.shape} differ")
    out = Var(x.value * mask, (x,))

    def _bw():
        x.grad += mask * out.grad

    out._backward = _bw
    return out


def sigmoid(x: Var) -> Var:
    v = np.where(x.value >= 0, 1.0 / (1.0 + np.exp(-x.value)),
                 np.exp(np.minimum(x.value, 0)) / (1.0 + np.exp(np.minimum(x.value, 0))))
    out = Var(v, (x,))

    def _bw():
        x.grad += v * (1.0 - v) * out.grad

    out._backward = _bw
    return out


def tanh(x: Var) -> Var:
    v = np.tanh(x.value)
    out = Var(v, (x,))

    def _bw():
        x.grad += (1.0 - v * v) * out.grad

    out._backward = _bw
    return out


def concat(parts: Sequence[Var]) -> Var:
    if not parts:
        raise EmptyInputError("concat of zero vectors")
    for p in parts:
        if p.value.ndim != 1:
            raise ShapeError(f"concat expects 1-d vectors, got shape {p.value.shape}")
    sizes = [p.value.shape[0] for p in parts]
    out = Var(np.concatenate([p.value for p in parts]), tuple(parts))

    def _bw():
        off = 0
        for p, n in zip(parts, sizes):
            p.grad += out.grad[off:off + n]
            off += n

    out._backward = _bw
    return out


def slice1d(x: Var, lo: int, hi: int) -> Var:
    out = Var(x.value[lo:hi], (x,))

    def _bw():
        x.grad[lo:hi] += out.grad

    out._backward = _bw
    return out


def stack_rows(rows: Sequence[Var]) -> Var:
    if not rows:
        raise EmptyInputError("stack_rows of zero rows")
    out = Var(np.stack([r.value for r in rows]), tuple(rows))

    def _bw():
        for i, r in enumerate(rows):
            r.grad += out.grad[i]

    out._backward = _bw
    return out


def vsum(x: Var) -> Var:
    out = Var(np.sum(x.value), (x,))

    def _bw():
        x.grad += out.grad

    out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def affine(x: Var, w: Var, b: Var) -> Var:
    """y = W @ x + b for a 1-d ``x``."""
    if x.value.ndim != 1 or w.value.ndim != 2:
        raise ShapeError(f"affine: expected matrix W and vector x, got {w.value.shape} and {x.value.shape}")
    if w.value.shape[1] != x.value.shape[0] or b.value.shape != (w.value.shape[0],):
        raise ShapeError(
            f"affine: W {w.value.shape}, x {x.value.shape}, b {b.value.shape} do not agree")
    out = Var(w.value @ x.value + b.value, (x, w, b))

    def _bw():
        w.grad += np.outer(out.grad, x.value)
        b.grad += out.grad
        x.grad += w.value.T @ out.grad

    out._backward = _bw
    return out


def affine_rows(xs: Var, w: Var, b: Var) -> Var:
    """Row-wise affine: (m, d) @ W.T + b -> (m, out)."""
    if xs.value.ndim != 2 or w.value.shape[1] != xs.value.shape[1] or b.value.shape != (w.value.shape[0],):
        raise ShapeError(
            f"affine_rows: X {xs.value.shape}, W {w.value.shape}, b {b.value.shape} do not agree")
    out = Var(xs.value @ w.value.T + b.value, (xs, w, b))

    def _bw():
        w.grad += out.grad.T @ xs.value
        b.grad += out.grad.sum(axis=0)
        xs.grad += out.grad @ w.value

    out._backward = _bw
    return out


def rows_gather(table: Var, ids: Sequence[int]) -> Var:
    """Select rows of an embedding table; backward scatter-adds."""
    idx = np.asarray(ids, dtype=np.intp)
    out = Var(table.value[idx], (table,))

    def _bw():
        np.add.at(table.grad, idx, out.grad)

    out._backward = _bw
    return out


def char_windows(emb: Var, width: int) -> Var:
    """Sliding windows of ``width`` rows with zero padding, flattened per window.

    (t, d) -> (t, width*d); one pad row on each side for width 3, so a 1-row
    input still yields one valid window per position.
    """
    if width % 2 != 1:
        raise ParameterError(f"char_windows width must be odd, got {width}")
    t, d = emb.value.shape
    pad = width // 2
    padded = np.zeros((t + 2 * pad, d))
    padded[pad:pad + t] = emb.value
    windows = np.stack([padded[i:i + width].reshape(width * d) for i in range(t)])
    out = Var(windows, (emb,))

    def _bw():
        gpad = np.zeros_like(padded)
        for i in range(t):
            gpad[i:i + width] += out.grad[i].reshape(width, d)
        emb.grad += gpad[pad:pad + t]

    out._backward = _bw
    return out


def max_over_rows(x: Var) -> Var:
    """Max-over-time pooling: (t, n) -> (n,); backward routes to the argmax row."""
    if x.value.ndim != 2 or x.value.shape[0] == 0:
        raise ShapeError(f"max_over_rows needs a non-empty matrix, got shape {x.value.shape}")
    arg = np.argmax(x.value, axis=0)
    out = Var(x.value[arg, np.arange(x.value.shape[1])], (x,))

    def _bw():
        x.grad[arg, np.arange(x.value.shape[1])] += out.grad

    out._backward = _bw
    return out


def softmax(x: Var) -> Var:
    """Numerically stable softmax over a 1-d vector."""
    if x.value.ndim != 1 or x.value.shape[0] == 0:
        raise ShapeError(f"softmax needs a non-empty vector, got shape {x.value.shape}")
    z = x.value - np.max(x.value)
    e = np.exp(z)
    s = e / e.sum()
    out = Var(s, (x,))

    def _bw():
        g = out.grad
        x.grad += s * (g - np.dot(s, g))

    out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# recurrent cells
# ---------------------------------------------------------------------------

@dataclass
class LstmParams:
    """Fused-gate LSTM cell parameters: gates ordered (input, forget, cell, output)."""

    w: Parameter  # (4*hidden, input+hidden)
    b: Parameter  # (4*hidden,)

    @property
    def hidden_size(self) -> int:
        return self.b.value.shape[0] // 4

    @property
    def input_size(self) -> int:
        return self.w.value.shape[1] - self.hidden_size

    @staticmethod
    def create(rng: np.random.Generator, input_size: int, hidden_size: int, name: str) -> "LstmParams":
        fan_in = input_size + hidden_size
        w = Parameter(uniform_init(rng, (4 * hidden_size, fan_in), fan_in), f"{name}.w")
        b = Parameter(np.zeros(4 * hidden_size), f"{name}.b")
        b.value[hidden_size:2 * hidden_size] = 1.0  # forget-gate bias
        return LstmParams(w, b)

    def parameters(self) -> list[Parameter]:
        return [self.w, self.b]


def lstm_step(x: Var, h: Var, c: Var, params: LstmParams) -> tuple[Var, Var]:
    """One cell update: gates from a fused affine, then c' = f*c + i*g and
    h' = o*tanh(c').

    The backward is hand-written in two pieces: h' routes its cell-path
    gradient into c' (h' lists c' as a parent, so reverse-topological order
    runs it first), and c' then back-propagates the accumulated cell gradient
    through the gates into W, b, x, h and c.
    """
    hidden = params.hidden_size
    if x.value.shape[0] != params.input_size or h.value.shape[0] != hidden or c.value.shape[0] != hidden:
        raise ShapeError(
            f"lstm_step: x {x.value.shape}, h {h.value.shape}, c {c.value.shape} "
            f"vs params (input {params.input_size}, hidden {hidden})")
    w, b = params.w, params.b
    n_in = x.value.shape[0]
    v = np.concatenate([x.value, h.value])
    z = w.value @ v + b.value
    zi, zf, zg, zo = z[:hidden], z[hidden:2 * hidden], z[2 * hidden:3 * hidden], z[3 * hidden:]
    gi = 1.0 / (1.0 + np.exp(-zi))
    gf = 1.0 / (1.0 + np.exp(-zf))
    gg = np.tanh(zg)
    go = 1.0 / (1.0 + np.exp(-zo))
    c_val = gf * c.value + gi * gg
    tc = np.tanh(c_val)
    c_next = Var(c_val, (x, h, c, w, b))
    h_next = Var(go * tc, (c_next, x, h, w, b))

    def _bw_h():
        gh = h_next.grad
        c_next.grad += gh * go * (1.0 - tc * tc)
        dzo = gh * tc * go * (1.0 - go)
        w.grad[3 * hidden:] += np.outer(dzo, v)
        b.grad[3 * hidden:] += dzo
        gv = w.value[3 * hidden:].T @ dzo
        x.grad += gv[:n_in]
        h.grad += gv[n_in:]

    def _bw_c():
        gc = c_next.grad
        dzi = gc * gg * gi * (1.0 - gi)
        dzf = gc * c.value * gf * (1.0 - gf)
        dzg = gc * gi * (1.0 - gg * gg)
        dz = np.concatenate([dzi, dzf, dzg])
        w.grad[:3 * hidden] += np.outer(dz, v)
        b.grad[:3 * hidden] += dz
        gv = w.value[:3 * hidden].T @ dz
        x.grad += gv[:n_in]
        h.grad += gv[n_in:]
        c.grad += gc * gf

    h_next._backward = _bw_h
    c_next._backward = _bw_c
    return h_next, c_next


def bilstm_encode(seq: Sequence[Var], params_fwd: LstmParams, params_bwd: LstmParams) -> list[Var]:
    """Run two LSTMs in opposite order; output[t] = concat(fwd[t], bwd[t])."""
    if not seq:
        raise EmptyInputError("bilstm_encode: empty sequence")

    def run(seq_dir: Sequence[Var], params: LstmParams) -> list[Var]:
        hidden = params.hidden_size
        h = constant(np.zeros(hidden))
        c = constant(np.zeros(hidden))
        states = []
        for x in seq_dir:
            h, c = lstm_step(x, h, c, params)
            states.append(h)
        return states

    fwd = run(seq, params_fwd)
    bwd = run(list(reversed(seq)), params_bwd)
    bwd.reverse()
    return [concat([f, b]) for f, b in zip(fwd, bwd)]


def bilinear_attention(query: Var, keys: Sequence[Var], m: Var) -> tuple[Var, np.ndarray]:
    """score_i = query^T M key_i; weights = softmax(scores); context = sum w_i key_i.

    Returns the context as a differentiable node and the weights as a plain
    array for inspection.
    """
    if not keys:
        raise EmptyInputError("bilinear_attention: no keys")
    qd = query.value.shape[0]
    kd = keys[0].value.shape[0]
    if m.value.shape != (qd, kd):
        raise ShapeError(f"bilinear_attention: M {m.value.shape} vs query {qd}, key {kd}")
    kmat = np.stack([k.value for k in keys])          # (n, kd)
    u = m.value.T @ query.value                       # (kd,)
    scores = kmat @ u                                 # (n,)
    z = scores - scores.max()
    e = np.exp(z)
    w = e / e.sum()
    ctx_val = kmat.T @ w
    out = Var(ctx_val, (query, m, *keys))

    def _bw():
        g = out.grad                                  # (kd,)
        gw = kmat @ g                                 # (n,)
        gs = w * (gw - np.dot(w, gw))                 # softmax backward
        gu = kmat.T @ gs                              # (kd,)
        query.grad += m.value @ gu
        m.grad += np.outer(query.value, gu)
        for i, k in enumerate(keys):
            k.grad += gs[i] * u + w[i] * g

    out._backward = _bw
    return out, w


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def multilabel_bce_loss(logits: Var, targets: np.ndarray) -> Var:
    """Mean binary cross-entropy of sigmoid(logits) against {0,1} targets."""
    t = np.asarray(targets, dtype=np.float64)
    if logits.value.shape != t.shape:
        raise ShapeError(f"multilabel_bce_loss: logits {logits.value.shape} vs targets {t.shape}")
    z = logits.value
    # stable: max(z,0) - z*t + log(1 + exp(-|z|))
    per = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    out = Var(per.mean(), (logits,))

    def _bw():
        sig = np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)),
                       np.exp(np.minimum(z, 0)) / (1.0 + np.exp(np.minimum(z, 0))))
        logits.grad += out.grad * (sig - t) / z.shape[0]

    out._backward = _bw
    return out


def tag_xent_loss(logits: Var, gold: Sequence[int]) -> Var:
    """Mean negative log softmax probability of the gold tag per step."""
    z = logits.value
    if z.ndim != 2 or z.shape[0] != len(gold):
        raise ShapeError(f"tag_xent_loss: logits {z.shape} vs {len(gold)} gold tags")
    ids = np.asarray(gold, dtype=np.intp)
    if ids.size and (ids.min() < 0 or ids.max() >= z.shape[1]):
        raise IndexError(f"tag_xent_loss: gold tag id out of range 0..{z.shape[1] - 1}")
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    out = Var((lse - z[np.arange(len(gold)), ids]).mean(), (logits,))

    def _bw():
        p = np.exp(z - zmax)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(len(gold)), ids] -= 1.0
        logits.grad += out.grad * p / len(gold)

    out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# optimization
# ---------------------------------------------------------------------------

def clip_global_norm(params: Iterable[Var], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``."""
    if max_norm <= 0:
        raise ParameterError(f"max_norm must be positive, got {max_norm}")
    plist = list(params)
    total = float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in plist)))
    if total > max_norm:
        factor = max_norm / total
        for p in plist:
            p.grad *= factor
    return total


@dataclass
class AdamState:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(params: Sequence[Parameter], state: AdamState) -> None:
    """Bias-corrected ADAM update; zeroes gradients afterwards."""
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for p in params:
        m = state.first_moment.setdefault(p.name, np.zeros_like(p.value))
        v = state.second_moment.setdefault(p.name, np.zeros_like(p.value))
        m *= b1
        m += (1 - b1) * p.grad
        v *= b2
        v += (1 - b2) * p.grad * p.grad
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p.value -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    zero_grads(params)


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: kept entries scaled by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

def gradcheck(loss_fn: Callable[[], Var], params: Sequence[Parameter], eps: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``loss_fn`` must be deterministic and rebuild the graph on every call.
    """
    if not 0.0 < eps <= 1e-3:
        raise ParameterError(f"gradcheck eps must be in (0, 1e-3], got {eps}")
    zero_grads(params)
    loss = loss_fn()
    if not np.isfinite(loss.value):
        raise FloatingPointError("gradcheck: loss is not finite")
    backward(loss)
    analytic = {p.name: p.grad.copy() for p in params}
    worst = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        ana = analytic[p.name].reshape(-1)
        for i in range(flat.shape[0]):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(loss_fn().value)
            flat[i] = orig - eps
            down = float(loss_fn().value)
            flat[i] = orig
            num = (up - down) / (2.0 * eps)
            denom = max(abs(ana[i]), abs(num), 1e-6)
            worst = max(worst, abs(ana[i] - num) / denom)
    zero_grads(params)
    return worst


# ---------------------------------------------------------------------------
# initialization and checkpointing
# ---------------------------------------------------------------------------

def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


_MAGIC = b"CKP1"


def save_checkpoint(path, params: dict[str, np.ndarray], manifest: dict[str, str]) -> None:
    """Flat archive: one binary entry per parameter plus a plain-text manifest.

    Parameter payloads are little-endian float64, prefixed by u32 ndim and
    u32 dims, so a save/load round trip is bit exact.
    """
    stamp = (2020, 1, 1, 0, 0, 0)  # fixed timestamp: same params -> same bytes
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        lines = [f"{k} = {v}" for k, v in manifest.items()]
        zf.writestr(zipfile.ZipInfo("manifest.txt", stamp), "\n".join(lines) + "\n")
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype=np.float64)
            header = _MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
            payload = arr.astype("<f8", copy=False).tobytes()
            zf.writestr(zipfile.ZipInfo(f"params/{name}", stamp), header + payload)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    params: dict[str, np.ndarray] = {}
    manifest: dict[str, str] = {}
    with zipfile.ZipFile(path, "r") as zf:
        for line in zf.read("manifest.txt").decode().splitlines():
            if not line.strip():
                continue
            key, _, value = line.partition(" = ")
            manifest[key] = value
        for info in zf.infolist():
            if not info.filename.startswith("params/"):
                continue
            raw = zf.read(info.filename)
            if raw[:4] != _MAGIC:
                raise ValueError(f"corrupt checkpoint entry {info.filename}")
            ndim = struct.unpack("<I", raw[4:8])[0]
            shape = struct.unpack(f"<{ndim}I", raw[8:8 + 4 * ndim])
            arr = np.frombuffer(raw[8 + 4 * ndim:], dtype="<f8").reshape(shape).copy()
            params[info.filename[len("params/"):]] = arr
    return params, manifest


def manifest_json(manifest: dict[str, str], key: str):
    return json.loads(manifest[key])
