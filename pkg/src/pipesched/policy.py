"""LSTM pointer network over graph embeddings, with exact analytic gradients.

Encoder LSTM turns projected embedding rows into a context matrix; the decoder
LSTM plus one glimpse and a pointer attention head emits one node per step,
already-chosen nodes masked to -inf. Forward passes cache enough state for a
full manual backpropagation, verified against central finite differences in
the test suite.

All math is float64 numpy. Nothing here mutates shared state, so any number
of episodes may run concurrently against one frozen parameter set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import CheckpointError, DecodeExhausted, NumericalError
from .graph import GraphEmbedding

_TENSOR_FIELDS = (
    "w_embed", "b_embed",
    "enc_wx", "enc_wh", "enc_b",
    "dec_wx", "dec_wh", "dec_b",
    "glimpse_ref", "glimpse_query", "glimpse_bias", "glimpse_v",
    "pointer_ref", "pointer_query", "pointer_bias", "pointer_v",
    "dec0_input",
)

CHECKPOINT_MAGIC = b"PSCKPT1\n"


def feature_dim(max_degree: int) -> int:
    # [asap, parent levels x D, parent ids x D, node id, memory]
    return 2 * max_degree + 3


@dataclass
class PolicyParams:
    hidden_dim: int
    max_degree: int
    w_embed: np.ndarray
    b_embed: np.ndarray
    enc_wx: np.ndarray
    enc_wh: np.ndarray
    enc_b: np.ndarray
    dec_wx: np.ndarray
    dec_wh: np.ndarray
    dec_b: np.ndarray
    glimpse_ref: np.ndarray
    glimpse_query: np.ndarray
    glimpse_bias: np.ndarray
    glimpse_v: np.ndarray
    pointer_ref: np.ndarray
    pointer_query: np.ndarray
    pointer_bias: np.ndarray
    pointer_v: np.ndarray
    dec0_input: np.ndarray

    def tensors(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in _TENSOR_FIELDS:
            yield name, getattr(self, name)

    def copy(self) -> "PolicyParams":
        kw = {name: arr.copy() for name, arr in self.tensors()}
        return PolicyParams(self.hidden_dim, self.max_degree, **kw)

    def zeros_like(self) -> "PolicyParams":
        kw = {name: np.zeros_like(arr) for name, arr in self.tensors()}
        return PolicyParams(self.hidden_dim, self.max_degree, **kw)

    def check_finite(self, what: str = "params") -> None:
        for name, arr in self.tensors():
            if not np.all(np.isfinite(arr)):
                raise NumericalError(f"non-finite values in {what} tensor {name}")


def tensor_shapes(hidden_dim: int, max_degree: int) -> dict[str, tuple[int, ...]]:
    d = hidden_dim
    f = feature_dim(max_degree)
    return {
        "w_embed": (f, d), "b_embed": (d,),
        "enc_wx": (d, 4 * d), "enc_wh": (d, 4 * d), "enc_b": (4 * d,),
        "dec_wx": (d, 4 * d), "dec_wh": (d, 4 * d), "dec_b": (4 * d,),
        "glimpse_ref": (d, d), "glimpse_query": (d, d),
        "glimpse_bias": (d,), "glimpse_v": (d,),
        "pointer_ref": (d, d), "pointer_query": (d, d),
        "pointer_bias": (d,), "pointer_v": (d,),
        "dec0_input": (d,),
    }


def init_params(hidden_dim: int, max_degree: int, seed: int = 0) -> PolicyParams:
    """Uniform(-1/sqrt(d), 1/sqrt(d)) init for every tensor."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(hidden_dim)
    kw = {
        name: rng.uniform(-bound, bound, size=shape)
        for name, shape in tensor_shapes(hidden_dim, max_degree).items()
    }
    return PolicyParams(hidden_dim, max_degree, **kw)


def scale_rows(embedding: GraphEmbedding) -> np.ndarray:
    """Normalize integer embedding rows for the projection layer.

    Level columns divide by the per-graph max level, id columns by the max
    node id (the -1 missing-parent sentinel is kept at -1), memory by the max
    memory. Deterministic per graph.
    """
    d = embedding.max_degree
    rows = embedding.rows.astype(np.float64)
    out = rows.copy()
    level_cols = slice(0, 1 + d)
    id_cols = slice(1 + d, 2 + 2 * d)
    mem_col = 2 + 2 * d

    max_level = max(rows[:, 0].max(), 1.0)
    out[:, level_cols] = rows[:, level_cols] / max_level
    max_id = max(rows[:, 1 + 2 * d].max(), 1.0)
    ids = rows[:, id_cols]
    out[:, id_cols] = np.where(ids >= 0, ids / max_id, -1.0)
    max_mem = max(rows[:, mem_col].max(), 1.0)
    out[:, mem_col] = rows[:, mem_col] / max_mem
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


class _LstmStep:
    """Forward cache for one LSTM cell step."""

    __slots__ = ("x", "h_prev", "c_prev", "i", "f", "g", "o", "c", "tanh_c")

    def __init__(self, x, h_prev, c_prev, wx, wh, b, d):
        z = x @ wx + h_prev @ wh + b
        self.x = x
        self.h_prev = h_prev
        self.c_prev = c_prev
        self.i = _sigmoid(z[:d])
        self.f = _sigmoid(z[d:2 * d])
        self.g = np.tanh(z[2 * d:3 * d])
        self.o = _sigmoid(z[3 * d:])
        self.c = self.f * c_prev + self.i * self.g
        self.tanh_c = np.tanh(self.c)

    @property
    def h(self) -> np.ndarray:
        return self.o * self.tanh_c

    def backward(self, dh, dc_in, wx, wh, dwx, dwh, db):
        """Returns (dx, dh_prev, dc_prev); accumulates weight grads in place."""
        do = dh * self.tanh_c
        dc = dc_in + dh * self.o * (1.0 - self.tanh_c ** 2)
        di = dc * self.g
        df = dc * self.c_prev
        dg = dc * self.i
        dc_prev = dc * self.f
        dz = np.concatenate([
            di * self.i * (1.0 - self.i),
            df * self.f * (1.0 - self.f),
            dg * (1.0 - self.g ** 2),
            do * self.o * (1.0 - self.o),
        ])
        dwx += np.outer(self.x, dz)
        dwh += np.outer(self.h_prev, dz)
        db += dz
        return dz @ wx.T, dz @ wh.T, dc_prev


@dataclass
class EncoderOutput:
    contexts: np.ndarray          # |V| x d, row i is the context of node i
    final_state: tuple[np.ndarray, np.ndarray]
    inputs: np.ndarray            # |V| x d projected embedding rows
    scaled_rows: np.ndarray       # |V| x feature_dim
    steps: list                   # per-step LSTM caches (for backward)


def encode(embedding: GraphEmbedding, params: PolicyParams) -> EncoderOutput:
    """Run the encoder LSTM over projected embedding rows."""
    if embedding.max_degree != params.max_degree:
        raise NumericalError(
            f"embedding degree {embedding.max_degree} != model degree {params.max_degree}"
        )
    d = params.hidden_dim
    scaled = scale_rows(embedding)
    xs = scaled @ params.w_embed + params.b_embed
    nv = xs.shape[0]

    h = np.zeros(d)
    c = np.zeros(d)
    contexts = np.zeros((nv, d))
    steps = []
    for t in range(nv):
        step = _LstmStep(xs[t], h, c, params.enc_wx, params.enc_wh, params.enc_b, d)
        h, c = step.h, step.c
        contexts[t] = h
        steps.append(step)
    if not np.all(np.isfinite(contexts)):
        raise NumericalError("non-finite encoder activations")
    return EncoderOutput(contexts, (h, c), xs, scaled, steps)


class _AttentionStep:
    """Forward cache for one decode step: LSTM + glimpse + pointer."""

    __slots__ = ("lstm", "h", "mask", "ag", "tg", "gout", "tp", "probs", "idx")




def _masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    masked = np.where(mask, -np.inf, logits)
    m = masked.max()
    e = np.exp(masked - m)
    return e / e.sum()


def _attend(h, ref_g, ref_p, mask, params):
    """Glimpse then pointer; returns (probs, cache bits)."""
    qg = h @ params.glimpse_query + params.glimpse_bias
    tg = np.tanh(ref_g + qg)
    ug = tg @ params.glimpse_v
    ag = _masked_softmax(ug, mask)
    gout = ag @ ref_g

    qp = gout @ params.pointer_query + params.pointer_bias
    tp = np.tanh(ref_p + qp)
    up = tp @ params.pointer_v
    probs = _masked_softmax(up, mask)
    return probs, (ag, tg, gout, tp)


def decode_step(d_input, dec_state, contexts, mask, params):
    """One pointing step: returns (probabilities over nodes, new decoder state).

    Masked nodes get probability exactly 0; probabilities sum to 1 over the
    rest. Raises DecodeExhausted when every node is masked.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.all():
        raise DecodeExhausted("all nodes are masked")
    d = params.hidden_dim
    h_prev, c_prev = dec_state
    step = _LstmStep(d_input, h_prev, c_prev, params.dec_wx, params.dec_wh, params.dec_b, d)
    ref_g = contexts @ params.glimpse_ref
    ref_p = contexts @ params.pointer_ref
    probs, _ = _attend(step.h, ref_g, ref_p, mask, params)
    if not np.all(np.isfinite(probs)):
        raise NumericalError("non-finite decode probabilities")
    return probs, (step.h, step.c)


@dataclass
class EpisodeTrace:
    sequence: tuple[int, ...]
    step_logprobs: np.ndarray
    masks: list[np.ndarray]
    reward: float = 0.0
    # forward caches needed by backward(); tied to the params that produced them
    _enc: EncoderOutput | None = None
    _steps: list | None = None
    _ref_g: np.ndarray | None = None
    _ref_p: np.ndarray | None = None

    def log_prob(self) -> float:
        return float(self.step_logprobs.sum())

    def entropy(self) -> float:
        """Sum over steps of the entropy of the step distribution."""
        if self._steps is None:
            raise ValueError("trace is missing forward caches")
        total = 0.0
        for cache in self._steps:
            p = cache.probs
            nz = p > 0.0
            total -= float(p[nz] @ np.log(p[nz]))
        return total


def decode_sequence(
    enc_out: EncoderOutput,
    params: PolicyParams,
    mode: str = "greedy",
    rng: np.random.Generator | None = None,
    forced: list[int] | None = None,
) -> EpisodeTrace:
    """Decode a full permutation of nodes.

    mode 'greedy' takes the argmax (ties -> lowest index), 'sample' draws from
    the step distribution, 'forced' scores a given sequence (teacher forcing).
    """
    if mode == "sample" and rng is None:
        raise ValueError("sample mode needs an rng")
    if mode == "forced" and forced is None:
        raise ValueError("forced mode needs a sequence")

    nv = enc_out.contexts.shape[0]
    d = params.hidden_dim
    ref_g = enc_out.contexts @ params.glimpse_ref
    ref_p = enc_out.contexts @ params.pointer_ref

    mask = np.zeros(nv, dtype=bool)
    h, c = enc_out.final_state
    d_input = params.dec0_input
    seq: list[int] = []
    logprobs = np.zeros(nv)
    masks: list[np.ndarray] = []
    steps: list[_AttentionStep] = []

    for t in range(nv):
        cache = _AttentionStep()
        cache.lstm = _LstmStep(d_input, h, c, params.dec_wx, params.dec_wh, params.dec_b, d)
        h, c = cache.lstm.h, cache.lstm.c
        cache.mask = mask.copy()
        probs, (cache.ag, cache.tg, cache.gout, cache.tp) = _attend(
            h, ref_g, ref_p, mask, params
        )
        if not np.all(np.isfinite(probs)):
            raise NumericalError(f"non-finite probabilities at step {t}")
        if mode == "greedy":
            idx = int(np.argmax(probs))
        elif mode == "sample":
            idx = int(rng.choice(nv, p=probs))
        else:
            idx = int(forced[t])
            if mask[idx]:
                raise DecodeExhausted(f"forced index {idx} already selected")
        cache.h = h
        cache.probs = probs
        cache.idx = idx
        with np.errstate(divide="ignore"):
            logprobs[t] = np.log(probs[idx])
        masks.append(cache.mask)
        seq.append(idx)
        steps.append(cache)
        mask[idx] = True
        d_input = enc_out.inputs[idx]

    return EpisodeTrace(
        sequence=tuple(seq),
        step_logprobs=logprobs,
        masks=masks,
        _enc=enc_out,
        _steps=steps,
        _ref_g=ref_g,
        _ref_p=ref_p,
    )


def backward(
    trace: EpisodeTrace,
    advantage: float,
    params: PolicyParams,
    entropy_weight: float = 0.0,
) -> PolicyParams:
    """Gradient of advantage * sum(step log-probs) - entropy_weight * entropy.

    Full backpropagation through pointer, glimpse, decoder LSTM, encoder LSTM
    and the embedding projection. Returns a PolicyParams-shaped container of
    gradients. A positive entropy_weight rewards keeping the step
    distributions spread out, which counters premature collapse onto one
    decoding during policy-gradient training.
    """
    grads = params.zeros_like()
    if advantage == 0.0 and entropy_weight == 0.0:
        return grads
    if trace._enc is None or trace._steps is None:
        raise ValueError("trace is missing forward caches")

    enc = trace._enc
    nv = enc.contexts.shape[0]
    d = params.hidden_dim
    d_ref_g = np.zeros((nv, d))
    d_ref_p = np.zeros((nv, d))
    d_inputs = np.zeros((nv, d))

    dh_next = np.zeros(d)
    dc_next = np.zeros(d)
    for t in range(nv - 1, -1, -1):
        cache = trace._steps[t]
        onehot = np.zeros(nv)
        onehot[cache.idx] = 1.0
        dup = advantage * (onehot - cache.probs)
        if entropy_weight != 0.0:
            # d(-H)/d logit_j = p_j * (log p_j + H) on the unmasked support
            p = cache.probs
            nz = p > 0.0
            logp = np.zeros(nv)
            logp[nz] = np.log(p[nz])
            step_entropy = -float(p[nz] @ logp[nz])
            dup += entropy_weight * p * (logp + step_entropy) * nz

        # pointer head
        grads.pointer_v += cache.tp.T @ dup
        dtp = dup[:, None] * params.pointer_v[None, :] * (1.0 - cache.tp ** 2)
        d_ref_p += dtp
        dqp = dtp.sum(axis=0)
        grads.pointer_query += np.outer(cache.gout, dqp)
        grads.pointer_bias += dqp
        dgout = dqp @ params.pointer_query.T

        # glimpse output (attention-weighted sum of glimpse refs)
        dag = trace._ref_g @ dgout
        d_ref_g += np.outer(cache.ag, dgout)
        dug = cache.ag * (dag - float(cache.ag @ dag))
        grads.glimpse_v += cache.tg.T @ dug
        dtg = dug[:, None] * params.glimpse_v[None, :] * (1.0 - cache.tg ** 2)
        d_ref_g += dtg
        dqg = dtg.sum(axis=0)
        grads.glimpse_query += np.outer(cache.h, dqg)
        grads.glimpse_bias += dqg
        dh = dqg @ params.glimpse_query.T + dh_next

        dx, dh_next, dc_next = cache.lstm.backward(
            dh, dc_next, params.dec_wx, params.dec_wh,
            grads.dec_wx, grads.dec_wh, grads.dec_b,
        )
        if t == 0:
            grads.dec0_input += dx
        else:
            d_inputs[trace.sequence[t - 1]] += dx

    # shared attention reference matrices
    d_contexts = d_ref_g @ params.glimpse_ref.T + d_ref_p @ params.pointer_ref.T
    grads.glimpse_ref += enc.contexts.T @ d_ref_g
    grads.pointer_ref += enc.contexts.T @ d_ref_p

    # encoder BPTT; decoder's initial state is the encoder's final state
    dh_carry, dc_carry = dh_next, dc_next
    for t in range(nv - 1, -1, -1):
        dh = d_contexts[t] + dh_carry
        dx, dh_carry, dc_carry = enc.steps[t].backward(
            dh, dc_carry, params.enc_wx, params.enc_wh,
            grads.enc_wx, grads.enc_wh, grads.enc_b,
        )
        d_inputs[t] += dx

    grads.w_embed += enc.scaled_rows.T @ d_inputs
    grads.b_embed += d_inputs.sum(axis=0)
    grads.check_finite("gradient")
    return grads


def score_sequence(enc_out: EncoderOutput, params: PolicyParams, sequence) -> EpisodeTrace:
    """Teacher-forced log-probability of a given permutation."""
    return decode_sequence(enc_out, params, mode="forced", forced=list(sequence))


def save_checkpoint(params: PolicyParams, path, config: dict | None = None) -> None:
    """Versioned binary container: JSON header + little-endian float64 blobs."""
    header = {
        "version": 1,
        "hidden_dim": params.hidden_dim,
        "max_degree": params.max_degree,
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in params.tensors()],
        "config": config or {},
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(head).to_bytes(8, "little"))
        fh.write(head)
        for _, arr in params.tensors():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[PolicyParams, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        head_len = int.from_bytes(fh.read(8), "little")
        try:
            header = json.loads(fh.read(head_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
        if header.get("version") != 1:
            raise CheckpointError(f"{path}: unsupported version {header.get('version')}")

        hidden_dim = int(header["hidden_dim"])
        max_degree = int(header["max_degree"])
        expected = tensor_shapes(hidden_dim, max_degree)
        kw = {}
        for spec in header["tensors"]:
            name, shape = spec["name"], tuple(spec["shape"])
            if name not in expected:
                raise CheckpointError(f"{path}: unknown tensor {name}")
            if shape != expected[name]:
                raise CheckpointError(
                    f"{path}: tensor {name} has shape {shape}, expected {expected[name]}"
                )
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise CheckpointError(f"{path}: truncated tensor {name}")
            kw[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
        missing = set(expected) - set(kw)
        if missing:
            raise CheckpointError(f"{path}: missing tensors {sorted(missing)}")
    params = PolicyParams(hidden_dim, max_degree, **kw)
    params.check_finite("checkpoint")
    return params, header.get("config", {})
