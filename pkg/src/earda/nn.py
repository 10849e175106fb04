"""Deterministic neural-network core with exact analytic gradients.

Implements the fixed architecture used throughout the package: a two-layer
bidirectional LSTM feature extractor, small ReLU heads for activity and
domain classification, softmax cross-entropy, gradient reversal, and a
bias-corrected adaptive-moment optimizer. All arithmetic is 64-bit and
every gradient is hand-derived and verified against finite differences
(`grad_check`).

Parameters are plain numpy arrays held in small dataclasses; `named_arrays`
flattens any parameter bundle into an ordered name -> array mapping, which
is the interface the optimizer and checkpoint code work against.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit as sigmoid
from threadpoolctl import threadpool_limits

GATES = ("i", "f", "g", "o")


class ShapeError(ValueError):
    """Array shape inconsistent with the parameter bundle it is used with."""


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------

@dataclass
class LstmCellParams:
    """Weights of one LSTM direction: per-gate input, recurrent and bias terms."""

    w_i: np.ndarray  # (hidden, input_dim)
    w_f: np.ndarray
    w_g: np.ndarray
    w_o: np.ndarray
    u_i: np.ndarray  # (hidden, hidden)
    u_f: np.ndarray
    u_g: np.ndarray
    u_o: np.ndarray
    b_i: np.ndarray  # (hidden,)
    b_f: np.ndarray
    b_g: np.ndarray
    b_o: np.ndarray

    @property
    def hidden(self) -> int:
        return self.w_i.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_i.shape[1]

    def named_arrays(self, prefix: str) -> dict:
        out = {}
        for kind in ("w", "u", "b"):
            for gate in GATES:
                out[f"{prefix}.{kind}_{gate}"] = getattr(self, f"{kind}_{gate}")
        return out


@dataclass
class LstmLayerParams:
    fwd: LstmCellParams
    bwd: LstmCellParams


@dataclass
class BiLstmParams:
    """Stacked bidirectional LSTM; layer l consumes the per-step concatenation
    of layer l-1's two directional outputs."""

    layers: list

    @property
    def hidden(self) -> int:
        return self.layers[0].fwd.hidden

    @property
    def input_dim(self) -> int:
        return self.layers[0].fwd.input_dim

    @property
    def feature_dim(self) -> int:
        return 2 * self.layers[-1].fwd.hidden

    def named_arrays(self, prefix: str) -> dict:
        out = {}
        for li, layer in enumerate(self.layers):
            out.update(layer.fwd.named_arrays(f"{prefix}.l{li}.fw"))
            out.update(layer.bwd.named_arrays(f"{prefix}.l{li}.bw"))
        return out


@dataclass
class HeadParams:
    """Dense classification head: linear -> ReLU -> linear."""

    w1: np.ndarray  # (width, feature_dim)
    b1: np.ndarray
    w2: np.ndarray  # (classes, width)
    b2: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def classes(self) -> int:
        return self.w2.shape[0]

    def named_arrays(self, prefix: str) -> dict:
        return {
            f"{prefix}.w1": self.w1,
            f"{prefix}.b1": self.b1,
            f"{prefix}.w2": self.w2,
            f"{prefix}.b2": self.b2,
        }


def named_arrays(model) -> dict:
    """Ordered name -> array view of a full model (extractor + both heads)."""
    out = {}
    out.update(model.extractor.named_arrays("feat"))
    out.update(model.label_head.named_arrays("label"))
    out.update(model.domain_head.named_arrays("domain"))
    return out


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def _uniform_fan(rng, fan_in, fan_out, shape):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def _init_cell(rng, input_dim: int, hidden: int) -> LstmCellParams:
    kw = {}
    for gate in GATES:
        kw[f"w_{gate}"] = _uniform_fan(rng, input_dim, hidden, (hidden, input_dim))
        kw[f"u_{gate}"] = _uniform_fan(rng, hidden, hidden, (hidden, hidden))
        kw[f"b_{gate}"] = np.zeros(hidden)
    kw["b_f"] = np.ones(hidden)  # open forget gates help early gradient flow
    return LstmCellParams(**kw)


def _init_head(rng, input_dim: int, width: int, classes: int) -> HeadParams:
    return HeadParams(
        w1=_uniform_fan(rng, input_dim, width, (width, input_dim)),
        b1=np.zeros(width),
        w2=_uniform_fan(rng, width, classes, (classes, width)),
        b2=np.zeros(classes),
    )


def init_params(
    seed: int,
    input_dim: int = 2,
    hidden: int = 16,
    num_layers: int = 2,
    head_width: int = 32,
    label_classes: int = 4,
    domain_classes: int = 2,
):
    """Seeded parameter bundle: (extractor, label head, domain head).

    Weights are uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); biases
    are zero except forget-gate biases, which start at 1.0.
    """
    rng = np.random.default_rng(seed)
    layers = []
    dim = input_dim
    for _ in range(num_layers):
        layers.append(
            LstmLayerParams(fwd=_init_cell(rng, dim, hidden), bwd=_init_cell(rng, dim, hidden))
        )
        dim = 2 * hidden
    extractor = BiLstmParams(layers=layers)
    label_head = _init_head(rng, dim, head_width, label_classes)
    domain_head = _init_head(rng, dim, head_width, domain_classes)
    return extractor, label_head, domain_head


# ---------------------------------------------------------------------------
# LSTM forward / backward (batched core)
# ---------------------------------------------------------------------------

# Internal gate stacking order: the three sigmoid gates first so one expit
# call covers them, the tanh cell gate last.
_STACK_ORDER = ("i", "f", "o", "g")


@dataclass
class _DirectionCache:
    xs: np.ndarray
    wx: np.ndarray
    wh: np.ndarray
    gates: np.ndarray  # (T, B, 4H) in _STACK_ORDER
    cs: np.ndarray
    hs: np.ndarray
    tanh_c: np.ndarray
    reverse: bool


def _stack_cell(cell: LstmCellParams):
    wx = np.concatenate([getattr(cell, f"w_{g}") for g in _STACK_ORDER], axis=0)
    wh = np.concatenate([getattr(cell, f"u_{g}") for g in _STACK_ORDER], axis=0)
    b = np.concatenate([getattr(cell, f"b_{g}") for g in _STACK_ORDER])
    return wx, wh, b


def _direction_forward(xs: np.ndarray, cell: LstmCellParams, reverse: bool):
    # xs: (T, B, D); returns per-step hidden states (T, B, H) plus cache
    t_len, batch, _ = xs.shape
    h = cell.hidden
    wx, wh, b = _stack_cell(cell)
    # sigmoid(a) = 0.5 * (1 + tanh(a / 2)): halving the sigmoid-gate rows of
    # the stacked weights lets a single contiguous tanh evaluate all gates
    wx_s = wx.copy()
    wx_s[: 3 * h] *= 0.5
    wh_st = np.ascontiguousarray(wh.T)
    wh_st[:, : 3 * h] *= 0.5
    b_s = b.copy()
    b_s[: 3 * h] *= 0.5
    pre_x = (xs.reshape(t_len * batch, -1) @ wx_s.T).reshape(t_len, batch, 4 * h)
    pre_x += b_s
    hs = np.empty((t_len, batch, h))
    cache = _DirectionCache(
        xs=xs, wx=wx, wh=wh,
        gates=np.empty((t_len, batch, 4 * h)),
        cs=np.empty((t_len, batch, h)),
        hs=hs,
        tanh_c=np.empty((t_len, batch, h)),
        reverse=reverse,
    )
    h_state = np.zeros((batch, h))
    c_state = np.zeros((batch, h))
    pre = np.empty((batch, 4 * h))
    tmp = np.empty((batch, h))
    order = range(t_len - 1, -1, -1) if reverse else range(t_len)
    for t in order:
        np.dot(h_state, wh_st, out=pre)
        pre += pre_x[t]
        gates = cache.gates[t]
        np.tanh(pre, out=gates)
        sig = gates[:, : 3 * h]
        sig += 1.0
        sig *= 0.5
        gi = gates[:, :h]
        gf = gates[:, h : 2 * h]
        go = gates[:, 2 * h : 3 * h]
        gg = gates[:, 3 * h :]
        c_new = cache.cs[t]
        np.multiply(gf, c_state, out=c_new)
        np.multiply(gi, gg, out=tmp)
        c_new += tmp
        tc = cache.tanh_c[t]
        np.tanh(c_new, out=tc)
        h_new = hs[t]
        np.multiply(go, tc, out=h_new)
        h_state = h_new
        c_state = c_new
    return hs, cache


def _direction_backward(d_hs: np.ndarray, cache: _DirectionCache):
    # d_hs: (T, B, H) gradients on the per-step outputs
    t_len, batch, h = d_hs.shape
    gates = cache.gates
    gi_all = gates[:, :, :h]
    gf_all = gates[:, :, h : 2 * h]
    go_all = gates[:, :, 2 * h : 3 * h]
    gg_all = gates[:, :, 3 * h :]
    # elementwise activation derivatives have no recurrence; batch them
    sig_block = gates[:, :, : 3 * h]
    sig_d = np.subtract(1.0, sig_block)
    sig_d *= sig_block
    gg_d = np.multiply(gg_all, gg_all)
    np.subtract(1.0, gg_d, out=gg_d)
    tc_d = np.multiply(cache.tanh_c, cache.tanh_c)
    np.subtract(1.0, tc_d, out=tc_d)

    # state consumed at step t is the state produced by the previously
    # processed step; the first processed step consumed zeros
    zero_state = np.zeros((batch, h))
    prev_of = (lambda a, t: a[t + 1] if t + 1 < t_len else zero_state) if cache.reverse \
        else (lambda a, t: a[t - 1] if t > 0 else zero_state)

    dpre_all = np.empty((t_len, batch, 4 * h))
    dh = np.zeros((batch, h))
    dc = np.zeros((batch, h))
    dh_t = np.empty((batch, h))
    tmp = np.empty((batch, h))
    order = range(t_len) if cache.reverse else range(t_len - 1, -1, -1)
    for t in order:
        np.add(d_hs[t], dh, out=dh_t)
        np.multiply(dh_t, go_all[t], out=tmp)
        tmp *= tc_d[t]
        dc += tmp
        dpre = dpre_all[t]
        v = dpre[:, :h]
        np.multiply(dc, gg_all[t], out=v)
        v *= sig_d[t, :, :h]
        v = dpre[:, h : 2 * h]
        np.multiply(dc, prev_of(cache.cs, t), out=v)
        v *= sig_d[t, :, h : 2 * h]
        v = dpre[:, 2 * h : 3 * h]
        np.multiply(dh_t, cache.tanh_c[t], out=v)
        v *= sig_d[t, :, 2 * h : 3 * h]
        v = dpre[:, 3 * h :]
        np.multiply(dc, gi_all[t], out=v)
        v *= gg_d[t]
        dh = dpre @ cache.wh
        dc *= gf_all[t]
    flat = dpre_all.reshape(t_len * batch, 4 * h)
    d_wx = flat.T @ cache.xs.reshape(t_len * batch, -1)
    # h_prev is hs shifted by one processing step with a zero boundary row,
    # so the boundary term vanishes and slicing gives the same contraction
    if cache.reverse:
        d_wh = dpre_all[:-1].reshape(-1, 4 * h).T @ cache.hs[1:].reshape(-1, h)
    else:
        d_wh = dpre_all[1:].reshape(-1, 4 * h).T @ cache.hs[:-1].reshape(-1, h)
    d_b = dpre_all.sum(axis=(0, 1))
    d_xs = (flat @ cache.wx).reshape(t_len, batch, -1)
    grads = {}
    for kind, src in (("w", d_wx), ("u", d_wh), ("b", d_b)):
        for gidx, gate in enumerate(_STACK_ORDER):
            grads[f"{kind}_{gate}"] = src[gidx * h : (gidx + 1) * h]
    return d_xs, grads


def _features_forward(windows: np.ndarray, params: BiLstmParams):
    # windows: (B, T, D) -> features (B, 2H) plus layer caches
    seq = np.ascontiguousarray(np.transpose(windows, (1, 0, 2)))
    caches = []
    inp = seq
    hs_f = hs_b = None
    for layer in params.layers:
        hs_f, cf = _direction_forward(inp, layer.fwd, reverse=False)
        hs_b, cb = _direction_forward(inp, layer.bwd, reverse=True)
        inp = np.concatenate([hs_f, hs_b], axis=2)
        caches.append((cf, cb))
    feats = np.concatenate([hs_f[-1], hs_b[0]], axis=1)
    return feats, caches


def _features_backward(d_feats: np.ndarray, caches, params: BiLstmParams) -> dict:
    h_dim = params.hidden
    t_len = caches[0][0].xs.shape[0]
    batch = d_feats.shape[0]
    d_hs_f = np.zeros((t_len, batch, h_dim))
    d_hs_b = np.zeros((t_len, batch, h_dim))
    d_hs_f[-1] = d_feats[:, :h_dim]
    d_hs_b[0] = d_feats[:, h_dim:]
    grads: dict = {}
    for li in range(len(params.layers) - 1, -1, -1):
        cf, cb = caches[li]
        d_in_f, gf = _direction_backward(d_hs_f, cf)
        d_in_b, gb = _direction_backward(d_hs_b, cb)
        d_in = d_in_f + d_in_b
        for name, g in gf.items():
            grads[f"feat.l{li}.fw.{name}"] = g
        for name, g in gb.items():
            grads[f"feat.l{li}.bw.{name}"] = g
        if li > 0:
            d_hs_f = d_in[:, :, :h_dim]
            d_hs_b = d_in[:, :, h_dim:]
    return grads


# ---------------------------------------------------------------------------
# public forward operations
# ---------------------------------------------------------------------------

def feature_forward(window: np.ndarray, params: BiLstmParams):
    """Run one window through the bidirectional extractor.

    Returns the sequence feature (concatenation of the top layer's
    forward-direction state at the last step and backward-direction state at
    the first step) and the cache needed for exact gradients.
    """
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2 or window.shape[1] != params.input_dim:
        raise ShapeError(
            f"window shape {window.shape} incompatible with input dim {params.input_dim}"
        )
    feats, caches = _features_forward(window[None, :, :], params)
    return feats[0], caches


def _head_forward(feats: np.ndarray, params: HeadParams):
    z1 = feats @ params.w1.T + params.b1
    act = np.maximum(z1, 0.0)
    logits = act @ params.w2.T + params.b2
    return logits, (feats, z1, act)


def _head_backward(d_logits: np.ndarray, cache, params: HeadParams):
    feats, z1, act = cache
    d_w2 = d_logits.T @ act
    d_b2 = d_logits.sum(axis=0)
    d_act = d_logits @ params.w2
    d_z1 = d_act * (z1 > 0.0)
    d_w1 = d_z1.T @ feats
    d_b1 = d_z1.sum(axis=0)
    d_feats = d_z1 @ params.w1
    grads = {"w1": d_w1, "b1": d_b1, "w2": d_w2, "b2": d_b2}
    return d_feats, grads


def head_forward(feature: np.ndarray, params: HeadParams):
    """Dense head on a single feature vector: linear -> ReLU -> linear."""
    feature = np.asarray(feature, dtype=np.float64)
    if feature.ndim != 1 or feature.shape[0] != params.input_dim:
        raise ShapeError(
            f"feature shape {feature.shape} incompatible with head input {params.input_dim}"
        )
    logits, cache = _head_forward(feature[None, :], params)
    return logits[0], cache


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _softmax_ce_rows(logits: np.ndarray, truths: np.ndarray):
    probs = _softmax_rows(logits)
    rows = np.arange(logits.shape[0])
    losses = -np.log(probs[rows, truths])
    grads = probs
    grads[rows, truths] -= 1.0
    return losses, grads


def softmax_ce(logits: np.ndarray, truth: int):
    """Cross-entropy of softmax(logits) against a class index.

    Returns (loss, gradient w.r.t. logits); the gradient is
    softmax(logits) - onehot(truth) and always sums to zero.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= truth < logits.shape[0]:
        raise IndexError(f"class index {truth} out of range for {logits.shape[0]} logits")
    losses, grads = _softmax_ce_rows(logits[None, :], np.array([truth]))
    return float(losses[0]), grads[0]


def grl_backward(upstream_grad: np.ndarray, weight: float) -> np.ndarray:
    """Gradient-reversal backward rule: scale the upstream gradient by -weight.

    The forward pass of the reversal layer is the identity, so no forward
    counterpart exists.
    """
    return -weight * np.asarray(upstream_grad, dtype=np.float64)


# ---------------------------------------------------------------------------
# batch loss and gradients
# ---------------------------------------------------------------------------

@dataclass
class LossParts:
    label_loss: float
    domain_loss: float
    total: float  # label_loss - weight * domain_loss


def _unpack_batch(batch):
    if not batch:
        raise ValueError("batch must be non-empty")
    windows = np.stack([np.asarray(s[0], dtype=np.float64) for s in batch])
    labels = np.array([s[1] for s in batch], dtype=np.intp)
    domains = np.array([s[2] for s in batch], dtype=np.intp)
    use_label = np.array([bool(s[3]) for s in batch])
    return windows, labels, domains, use_label


def loss_parts(batch, model, domain_weight: float) -> LossParts:
    """Forward-only loss evaluation over a batch of
    (window, label, domain, use_label_loss) samples."""
    windows, labels, domains, use_label = _unpack_batch(batch)
    feats, _ = _features_forward(windows, model.extractor)
    label_loss = 0.0
    if use_label.any():
        logits, _ = _head_forward(feats[use_label], model.label_head)
        losses, _ = _softmax_ce_rows(logits, labels[use_label])
        label_loss = float(losses.mean())
    d_logits, _ = _head_forward(feats, model.domain_head)
    d_losses, _ = _softmax_ce_rows(d_logits, domains)
    domain_loss = float(d_losses.mean())
    return LossParts(label_loss, domain_loss, label_loss - domain_weight * domain_loss)


def backprop_batch(batch, model, domain_weight: float):
    """Loss components and exact gradients for one adversarial batch.

    The label head's gradients come from the label pathway (mean over samples
    flagged use_label_loss), the domain head's from the domain pathway (mean
    over all samples). The extractor's gradient is the label-pathway gradient
    minus domain_weight times the domain-pathway gradient; the sign flip is
    the gradient-reversal rule applied at the feature boundary.

    Returns (LossParts, grads) with grads keyed like `named_arrays`.
    """
    windows, labels, domains, use_label = _unpack_batch(batch)
    feats, caches = _features_forward(windows, model.extractor)
    batch_n = feats.shape[0]
    grads: dict = {}

    d_feats_label = np.zeros_like(feats)
    label_loss = 0.0
    n_labeled = int(use_label.sum())
    if n_labeled:
        logits, hc = _head_forward(feats[use_label], model.label_head)
        losses, d_logits = _softmax_ce_rows(logits, labels[use_label])
        label_loss = float(losses.mean())
        d_logits /= n_labeled
        d_sub, head_grads = _head_backward(d_logits, hc, model.label_head)
        d_feats_label[use_label] = d_sub
    else:
        head_grads = {k.split(".")[-1]: np.zeros_like(v)
                      for k, v in model.label_head.named_arrays("label").items()}
    for name, g in head_grads.items():
        grads[f"label.{name}"] = g

    d_logits_dom, dc = _head_forward(feats, model.domain_head)
    d_losses, d_logits_dom = _softmax_ce_rows(d_logits_dom, domains)
    domain_loss = float(d_losses.mean())
    d_logits_dom /= batch_n
    d_feats_domain, dom_grads = _head_backward(d_logits_dom, dc, model.domain_head)
    for name, g in dom_grads.items():
        grads[f"domain.{name}"] = g

    d_feats = d_feats_label + grl_backward(d_feats_domain, domain_weight)
    grads.update(_features_backward(d_feats, caches, model.extractor))

    parts = LossParts(label_loss, domain_loss, label_loss - domain_weight * domain_loss)
    return parts, grads


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Per-parameter first/second moment accumulators plus step counter."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState):
    """One bias-corrected adaptive-moment update, in place on `params`.

    Only keys present in `grads` are touched, so a head excluded from a
    training mode keeps its initial values and moments.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for key, g in grads.items():
        p = params[key]
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape} for {key}")
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(p)
            state.v[key] = np.zeros_like(p)
        v = state.v[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------

def grad_check(model, batch, domain_weight: float, eps: float = 1e-5,
               max_coords: int = 2000, seed: int = 0) -> float:
    """Max relative error between analytic gradients of the adversarial
    objective and central finite differences.

    The objective is label_loss - domain_weight * domain_loss, so the
    analytic gradient w.r.t. the domain head is -domain_weight times the
    domain-pathway gradient returned by `backprop_batch`. When the full
    coordinate count exceeds `max_coords`, a seeded random subset of at
    least 200 coordinates is checked instead.
    """
    if not 0 < eps <= 1e-3:
        raise ValueError(f"eps must be in (0, 1e-3], got {eps}")
    with threadpool_limits(limits=1):
        return _grad_check_inner(model, batch, domain_weight, eps, max_coords, seed)


def _grad_check_inner(model, batch, domain_weight, eps, max_coords, seed):
    params = named_arrays(model)
    _, grads = backprop_batch(batch, model, domain_weight)
    analytic = {}
    for key, g in grads.items():
        if key.startswith("domain."):
            analytic[key] = -domain_weight * g
        else:
            analytic[key] = g

    coords = [(key, idx) for key, arr in params.items() for idx in range(arr.size)]
    if len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        take = max(200, max_coords)
        picks = rng.choice(len(coords), size=take, replace=False)
        coords = [coords[i] for i in picks]

    max_err = 0.0
    for key, idx in coords:
        arr = params[key]
        orig = arr.flat[idx]
        arr.flat[idx] = orig + eps
        up = loss_parts(batch, model, domain_weight).total
        arr.flat[idx] = orig - eps
        down = loss_parts(batch, model, domain_weight).total
        arr.flat[idx] = orig
        numeric = (up - down) / (2.0 * eps)
        a = analytic.get(key)
        a_val = 0.0 if a is None else float(a.flat[idx])
        err = abs(a_val - numeric) / max(1.0, abs(a_val), abs(numeric))
        if err > max_err:
            max_err = err
    return max_err
