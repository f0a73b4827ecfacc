"""Dual-head residual MLP student trained against a forest teacher.

The network maps a padded fingerprint to a softmax ratio vector and a
sigmoid presence vector. Everything is float64 numpy with hand-written
backward passes so runs are bit-reproducible on one thread.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
BCE_CLIP = 1e-7
TEACHER_FLOOR = 1e-6


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class NetConfig:
    in_dim: int = 405
    widths: tuple = (256, 128, 128, 64)
    n_out: int = 5
    dropout: float = 0.2
    residual: bool = True

    def residual_layer(self):
        """Index of the layer whose output receives its own input, or None."""
        if not self.residual:
            return None
        for i in range(1, len(self.widths)):
            if self.widths[i] == self.widths[i - 1]:
                return i
        return None


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.7
    beta: float = 0.5
    huber_delta: float = 0.1
    peak_lr: float = 1e-3
    epochs: int = 200
    weight_decay: float = 1e-6
    grad_clip_norm: float = 1.0
    val_fraction: float = 0.2
    batch_size: int = 16
    seed: int = 0
    warmup_fraction: float = 0.3
    final_lr_ratio: float = 0.01
    regression: str = "huber"      # or "mse"
    soft_labels: bool = True       # False: KL against the (floored) truth

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        for name in ("beta", "huber_delta", "peak_lr", "epochs", "grad_clip_norm",
                     "batch_size"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0 or not 0.0 < self.val_fraction < 1.0:
            raise ValueError("invalid weight_decay or val_fraction")
        if self.regression not in ("huber", "mse"):
            raise ValueError(f"unknown regression loss {self.regression!r}")


@dataclass
class StudentParams:
    config: NetConfig
    layers: list            # dicts: W, b, gamma, beta, mean, var
    ratio_head: dict        # W, b
    presence_head: dict     # W, b
    opt_state: dict = field(default_factory=dict)

    def tensors(self):
        """Trainable arrays in a fixed order, as ``(name, array)`` pairs."""
        out = []
        for i, layer in enumerate(self.layers):
            out += [(f"l{i}.{k}", layer[k]) for k in ("W", "b", "gamma", "beta")]
        out += [(f"ratio.{k}", self.ratio_head[k]) for k in ("W", "b")]
        out += [(f"presence.{k}", self.presence_head[k]) for k in ("W", "b")]
        return out

    def buffers(self):
        out = []
        for i, layer in enumerate(self.layers):
            out += [(f"l{i}.{k}", layer[k]) for k in ("mean", "var")]
        return out

    @property
    def n_params(self) -> int:
        return int(sum(a.size for _, a in self.tensors()))

    def copy(self):
        cp = lambda d: {k: v.copy() for k, v in d.items()}
        return StudentParams(self.config, [cp(l) for l in self.layers], cp(self.ratio_head),
                             cp(self.presence_head),
                             {k: [a.copy() for a in v] if isinstance(v, list) else v
                              for k, v in self.opt_state.items()})


def init_params(config: NetConfig, seed=0) -> StudentParams:
    """He-uniform dense weights, zero biases, identity batch-norm."""
    rng = np.random.default_rng(seed)

    def dense(n_in, n_out):
        lim = math.sqrt(6.0 / n_in)
        return rng.uniform(-lim, lim, size=(n_in, n_out)), np.zeros(n_out)

    layers = []
    n_in = config.in_dim
    for width in config.widths:
        w, b = dense(n_in, width)
        layers.append(dict(W=w, b=b, gamma=np.ones(width), beta=np.zeros(width),
                           mean=np.zeros(width), var=np.ones(width)))
        n_in = width
    wr, br = dense(n_in, config.n_out)
    wp, bp = dense(n_in, config.n_out)
    return StudentParams(config, layers, dict(W=wr, b=br), dict(W=wp, b=bp))


# --------------------------------------------------------------------------
# forward / backward


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def student_forward(params: StudentParams, x, mode="eval", rng=None, skip_residual=False):
    """Return ``(ratios, presence, cache)``.

    In ``"train"`` mode batch-norm uses batch statistics and dropout is
    active (``rng`` draws the masks); ``"eval"`` uses running statistics.
    ``skip_residual`` drops the skip connection (probe only).
    """
    cfg = params.config
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != cfg.in_dim:
        raise ValueError(f"expected input length {cfg.in_dim}, got {x.shape[1]}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    train = mode == "train"
    res = None if skip_residual else cfg.residual_layer()
    h = x
    caches = []
    for i, layer in enumerate(params.layers):
        z = h @ layer["W"] + layer["b"]
        if train:
            mu, var = z.mean(axis=0), z.var(axis=0)
        else:
            mu, var = layer["mean"], layer["var"]
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        zhat = (z - mu) * inv_std
        a = np.maximum(layer["gamma"] * zhat + layer["beta"], 0.0)
        mask = None
        if train and cfg.dropout > 0:
            if rng is None:
                raise ValueError("train mode with dropout needs an rng")
            mask = (rng.random(a.shape) >= cfg.dropout) / (1.0 - cfg.dropout)
            a = a * mask
        out = a + h if i == res else a
        caches.append(dict(h_in=h, zhat=zhat, inv_std=inv_std, mask=mask,
                           batch_stats=(mu, var) if train else None))
        h = out
    zr = h @ params.ratio_head["W"] + params.ratio_head["b"]
    zp = h @ params.presence_head["W"] + params.presence_head["b"]
    log_s = _log_softmax(zr)
    cache = dict(layers=caches, h=h, log_s=log_s, zp=zp, train=train, res=res)
    return np.exp(log_s), _sigmoid(zp), cache


def huber(e, delta):
    a = np.abs(e)
    return np.where(a <= delta, 0.5 * e ** 2, delta * (a - 0.5 * delta))


def _huber_grad(e, delta):
    return np.clip(e, -delta, delta)


def prepare_teacher(t, floor=TEACHER_FLOOR):
    t = np.maximum(np.asarray(t, dtype=float), floor)
    return t / t.sum(axis=-1, keepdims=True)


def loss(ratios, presence, teacher, truth_ratios, truth_presence, cfg: TrainConfig,
         log_ratios=None):
    """Batch-mean ``alpha KL(s||t) + (1-alpha) sum Huber + beta sum BCE``.

    Returns ``(total, breakdown)``; ``breakdown`` holds the three batch-mean
    terms before weighting.
    """
    s = np.atleast_2d(ratios)
    log_s = np.log(np.maximum(s, 1e-300)) if log_ratios is None else log_ratios
    t = prepare_teacher(np.atleast_2d(teacher))
    c = np.atleast_2d(truth_ratios)
    y = np.atleast_2d(truth_presence)
    p = np.clip(np.atleast_2d(presence), BCE_CLIP, 1.0 - BCE_CLIP)

    kl = np.sum(s * (log_s - np.log(t)), axis=1)
    e = s - c
    reg = huber(e, cfg.huber_delta) if cfg.regression == "huber" else e ** 2
    reg = reg.sum(axis=1)
    bce = -np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p), axis=1)
    terms = dict(kl=float(kl.mean()), regression=float(reg.mean()), bce=float(bce.mean()))
    total = (cfg.alpha * terms["kl"] + (1.0 - cfg.alpha) * terms["regression"]
             + cfg.beta * terms["bce"])
    return total, terms


def loss_and_grads(params: StudentParams, x, teacher, truth_ratios, truth_presence,
                   cfg: TrainConfig, mode="train", rng=None):
    """Forward, loss and analytic gradients (dict keyed like ``tensors()``)."""
    s, p_raw, cache = student_forward(params, x, mode, rng)
    total, terms = loss(s, p_raw, teacher, truth_ratios, truth_presence, cfg, cache["log_s"])
    n = s.shape[0]
    t = prepare_teacher(np.atleast_2d(teacher))
    c = np.atleast_2d(truth_ratios)
    y = np.atleast_2d(truth_presence)

    # ratio head: d/ds of the KL and regression terms, then through softmax
    g_s = cfg.alpha * (cache["log_s"] - np.log(t) + 1.0)
    e = s - c
    g_s = g_s + (1.0 - cfg.alpha) * (_huber_grad(e, cfg.huber_delta)
                                     if cfg.regression == "huber" else 2.0 * e)
    g_zr = s * (g_s - np.sum(s * g_s, axis=1, keepdims=True)) / n
    # presence head: BCE through the sigmoid; zero where the clip is active
    clipped = (p_raw < BCE_CLIP) | (p_raw > 1.0 - BCE_CLIP)
    g_zp = np.where(clipped, 0.0, cfg.beta * (p_raw - y)) / n

    h = cache["h"]
    grads = {"ratio.W": h.T @ g_zr, "ratio.b": g_zr.sum(axis=0),
             "presence.W": h.T @ g_zp, "presence.b": g_zp.sum(axis=0)}
    g_h = g_zr @ params.ratio_head["W"].T + g_zp @ params.presence_head["W"].T

    train = cache["train"]
    for i in range(len(params.layers) - 1, -1, -1):
        layer, lc = params.layers[i], cache["layers"][i]
        g_out = g_h
        g_skip = g_out if i == cache["res"] else None
        g_a = g_out * lc["mask"] if lc["mask"] is not None else g_out
        y_bn = layer["gamma"] * lc["zhat"] + layer["beta"]
        g_y = g_a * (y_bn > 0)
        grads[f"l{i}.gamma"] = np.sum(g_y * lc["zhat"], axis=0)
        grads[f"l{i}.beta"] = g_y.sum(axis=0)
        g_zhat = g_y * layer["gamma"]
        if train:
            m = g_zhat.shape[0]
            g_z = lc["inv_std"] / m * (m * g_zhat - g_zhat.sum(axis=0)
                                       - lc["zhat"] * np.sum(g_zhat * lc["zhat"], axis=0))
        else:
            g_z = g_zhat * lc["inv_std"]
        grads[f"l{i}.W"] = lc["h_in"].T @ g_z
        grads[f"l{i}.b"] = g_z.sum(axis=0)
        g_h = g_z @ layer["W"].T
        if g_skip is not None:
            g_h = g_h + g_skip
    return total, terms, grads, cache


def _update_running_stats(params, cache):
    for layer, lc in zip(params.layers, cache["layers"]):
        mu, var = lc["batch_stats"]
        layer["mean"] = (1 - BN_MOMENTUM) * layer["mean"] + BN_MOMENTUM * mu
        layer["var"] = (1 - BN_MOMENTUM) * layer["var"] + BN_MOMENTUM * var


# --------------------------------------------------------------------------
# optimisation


def one_cycle_lr(step, total_steps, peak_lr=1e-3, warmup_fraction=0.3, final_ratio=0.01):
    """Linear warm-up from 0 to ``peak_lr`` then cosine decay to ``peak_lr * final_ratio``.

    ``step`` counts from 0; the learning rate used for update ``step`` is
    ``lr(step + 1)`` so the first update is one increment above zero.
    """
    warm = max(1, int(round(warmup_fraction * total_steps)))
    k = step + 1
    if k <= warm:
        return peak_lr * k / warm
    frac = (k - warm) / max(1, total_steps - warm)
    low = peak_lr * final_ratio
    return low + 0.5 * (peak_lr - low) * (1.0 + math.cos(math.pi * frac))


def clip_gradients(grads, max_norm):
    """Scale all gradients so their global l2 norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


def adam_step(params: StudentParams, grads, lr, cfg: TrainConfig,
              b1=0.9, b2=0.999, eps=1e-8):
    st = params.opt_state
    if not st:
        st.update(t=0, m=[np.zeros_like(a) for _, a in params.tensors()],
                  v=[np.zeros_like(a) for _, a in params.tensors()])
    st["t"] += 1
    t = st["t"]
    for j, (name, arr) in enumerate(params.tensors()):
        g = grads[name]
        st["m"][j] = b1 * st["m"][j] + (1 - b1) * g
        st["v"][j] = b2 * st["v"][j] + (1 - b2) * g * g
        m_hat = st["m"][j] / (1 - b1 ** t)
        v_hat = st["v"][j] / (1 - b2 ** t)
        if name.endswith(".W"):
            arr *= 1.0 - lr * cfg.weight_decay
        arr -= lr * m_hat / (np.sqrt(v_hat) + eps)


def stratified_split(groups, fraction, seed):
    """Indices ``(train, held_out)`` holding out ``fraction`` of every group."""
    groups = np.asarray(groups)
    rng = np.random.default_rng(seed)
    held = []
    for g in sorted(set(groups.tolist())):
        idx = np.flatnonzero(groups == g)
        n_out = int(round(fraction * idx.size))
        if idx.size > 1:
            n_out = min(max(n_out, 1), idx.size - 1)
        else:
            n_out = 0
        held += rng.permutation(idx)[:n_out].tolist()
    held = np.array(sorted(held), dtype=np.int64)
    train = np.setdiff1d(np.arange(groups.size), held)
    return train, held


@dataclass
class TrainResult:
    params: StudentParams
    log: list
    best_epoch: int
    train_idx: np.ndarray
    val_idx: np.ndarray
    config: TrainConfig


def train_student(x, teacher, truth_ratios, groups, cfg: TrainConfig | None = None,
                  net: NetConfig | None = None) -> TrainResult:
    """Adam + one-cycle training with a stratified validation hold-out.

    ``groups`` labels every sample (e.g. pure/binary/ternary) for the split.
    The parameters with the lowest validation loss are returned.
    """
    cfg = cfg or TrainConfig()
    x = np.asarray(x, dtype=float)
    teacher = np.asarray(teacher, dtype=float)
    c = np.asarray(truth_ratios, dtype=float)
    if x.shape[0] < 20:
        raise ValueError("training needs at least 20 samples")
    y = (c > 0).astype(float)
    target = teacher if cfg.soft_labels else c
    net = net or NetConfig(in_dim=x.shape[1], n_out=c.shape[1])
    params = init_params(net, cfg.seed)

    train_idx, val_idx = stratified_split(groups, cfg.val_fraction, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    n_batches = math.ceil(train_idx.size / cfg.batch_size)
    total_steps = cfg.epochs * n_batches
    step = 0
    best = (math.inf, -1, None)
    log = []
    for epoch in range(cfg.epochs):
        order = train_idx[rng.permutation(train_idx.size)]
        losses = []
        for b in range(n_batches):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            if idx.size < 2:  # batch-norm needs two rows
                continue
            total, _, grads, cache = loss_and_grads(params, x[idx], target[idx], c[idx],
                                                    y[idx], cfg, "train", rng)
            if not np.isfinite(total):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}")
            grads, _ = clip_gradients(grads, cfg.grad_clip_norm)
            lr = one_cycle_lr(step, total_steps, cfg.peak_lr, cfg.warmup_fraction,
                              cfg.final_lr_ratio)
            adam_step(params, grads, lr, cfg)
            _update_running_stats(params, cache)
            losses.append(total)
            step += 1
        s, p, _ = student_forward(params, x[val_idx], "eval")
        val, _ = loss(s, p, target[val_idx], c[val_idx], y[val_idx], cfg)
        if not np.isfinite(val):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        log.append(dict(epoch=epoch, train_loss=float(np.mean(losses)), val_loss=float(val),
                        lr=lr))
        if val < best[0]:
            best = (val, epoch, params.copy())
    return TrainResult(best[2], log, best[1], train_idx, val_idx, cfg)


def predict(params: StudentParams, fingerprints, threshold=0.5):
    """Ratios renormalized over the detected components, and the presence mask.

    When no presence output reaches ``threshold`` the arg-max ratio alone
    is reported as present.
    """
    s, p, _ = student_forward(params, fingerprints, "eval")
    present = p >= threshold
    empty = ~present.any(axis=1)
    present[empty, np.argmax(s[empty], axis=1)] = True
    r = np.where(present, s, 0.0)
    return r / r.sum(axis=1, keepdims=True), present


def config_dict(obj):
    return asdict(obj)


def with_changes(cfg, **kw):
    return replace(cfg, **kw)
