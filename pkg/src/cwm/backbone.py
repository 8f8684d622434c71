"""Scoring backbones over categorical features, Adam, and the training loop.

Both backbones take an integer matrix of per-field vocab indices (one column
per feature field) and return one real score per row. Gradients are written
out by hand; everything runs in float64.
"""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

# named RNG sub-streams derived from one seed
STREAM_INIT = 1
STREAM_SHUFFLE = 2
STREAM_DROPOUT = 3
STREAM_SYNTH = 4
STREAM_XAUC = 5


def substream(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(stream)])


class TrainingDiverged(ArithmeticError):
    pass


# --------------------------------------------------------------------------
# model container

@dataclass
class Model:
    """Backbone parameters plus the layout needed to index them.

    ``arrays`` holds the trainable tensors. Feature ``j`` with local index
    ``i`` maps to row ``offsets[j] + i`` of the shared embedding tables.
    """

    backbone: str
    cardinalities: tuple
    arrays: dict
    emb_dim: int = 10
    hidden: int = 64
    dropout: float = 0.2

    def __post_init__(self):
        self.cardinalities = tuple(int(c) for c in self.cardinalities)
        if self.backbone not in ("fm", "mlp"):
            raise ValueError(f"unknown backbone {self.backbone!r}")

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.cardinalities)[:-1]]).astype(np.int64)

    def to_global(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.int64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.cardinalities):
            raise ValueError(f"expected {len(self.cardinalities)} fields, got {X.shape[1]}")
        if np.any(X < 0) or np.any(X >= np.asarray(self.cardinalities)):
            raise IndexError("feature index out of range")
        return X + self.offsets

    def forward(self, X, train: bool = False, rng=None):
        xg = self.to_global(X)
        if self.backbone == "fm":
            return _fm_forward(self.arrays, xg)
        return _mlp_forward(self.arrays, xg, self.dropout if train else 0.0, rng)

    def backward(self, cache, upstream) -> dict:
        if self.backbone == "fm":
            return _fm_backward(self.arrays, cache, upstream)
        return _mlp_backward(self.arrays, cache, upstream)

    def score(self, X) -> np.ndarray:
        return self.forward(X)[0]

    def copy(self) -> "Model":
        return copy.deepcopy(self)

    def shapes(self) -> dict:
        return {k: list(v.shape) for k, v in self.arrays.items()}


def init_model(backbone: str, cardinalities, emb_dim: int = 10, hidden: int = 64,
               dropout: float = 0.2, init_std: float = 0.01, rng=None, bias: float = 0.0) -> Model:
    """Embeddings and dense weights ~ N(0, init_std^2); biases at ``bias`` (output) or 0."""
    rng = np.random.default_rng(0) if rng is None else rng
    n = int(np.sum(cardinalities))
    if backbone == "fm":
        arrays = {
            "bias": np.array(float(bias)),
            "linear": np.zeros(n),
            "emb": rng.normal(0.0, init_std, size=(n, emb_dim)),
        }
    elif backbone == "mlp":
        width = len(cardinalities) * emb_dim
        arrays = {
            "emb": rng.normal(0.0, init_std, size=(n, emb_dim)),
            "w1": rng.normal(0.0, init_std, size=(width, hidden)),
            "b1": np.zeros(hidden),
            "w2": rng.normal(0.0, init_std, size=hidden),
            "b2": np.array(float(bias)),
        }
    else:
        raise ValueError(f"unknown backbone {backbone!r}")
    return Model(backbone, tuple(cardinalities), arrays, emb_dim, hidden, dropout)


# --------------------------------------------------------------------------
# factorization machine

def _fm_forward(p, xg):
    e = p["emb"][xg]                                  # (B, F, k)
    s = e.sum(axis=1)                                 # (B, k)
    pair = 0.5 * (s * s - (e * e).sum(axis=1)).sum(axis=1)
    score = p["bias"] + p["linear"][xg].sum(axis=1) + pair
    return score, (xg, e, s)


def _fm_backward(p, cache, upstream):
    xg, e, s = cache
    g = np.asarray(upstream, dtype=float).reshape(-1)
    grads = {
        "bias": np.array(g.sum()),
        "linear": np.zeros_like(p["linear"]),
        "emb": np.zeros_like(p["emb"]),
    }
    np.add.at(grads["linear"], xg, np.broadcast_to(g[:, None], xg.shape))
    # d pair / d e_f = s - e_f
    np.add.at(grads["emb"], xg, g[:, None, None] * (s[:, None, :] - e))
    return grads


def fm_forward(model: Model, x):
    """Score one feature vector (1-D) or a batch (2-D)."""
    out = model.forward(x)[0]
    return float(out[0]) if np.ndim(x) == 1 else out


def fm_backward(model: Model, x, upstream) -> dict:
    _, cache = model.forward(x)
    return model.backward(cache, np.broadcast_to(np.asarray(upstream, dtype=float), (cache[0].shape[0],)))


# --------------------------------------------------------------------------
# MLP: embeddings -> concat -> dense(hidden) -> ReLU -> dropout -> scalar

def _mlp_forward(p, xg, rate, rng):
    B = xg.shape[0]
    h0 = p["emb"][xg].reshape(B, -1)
    a1 = h0 @ p["w1"] + p["b1"]
    h1 = np.maximum(a1, 0.0)
    if rate > 0:
        if rng is None:
            raise ValueError("dropout in train mode needs an rng")
        mask = (rng.random(h1.shape) >= rate) / (1.0 - rate)
    else:
        mask = None
    h1d = h1 if mask is None else h1 * mask
    score = h1d @ p["w2"] + p["b2"]
    return score, (xg, h0, a1, h1d, mask)


def _mlp_backward(p, cache, upstream):
    xg, h0, a1, h1d, mask = cache
    g = np.asarray(upstream, dtype=float).reshape(-1)
    grads = {"b2": np.array(g.sum()), "w2": h1d.T @ g}
    dh1 = g[:, None] * p["w2"][None, :]
    if mask is not None:
        dh1 = dh1 * mask
    da1 = dh1 * (a1 > 0)
    grads["w1"] = h0.T @ da1
    grads["b1"] = da1.sum(axis=0)
    dh0 = (da1 @ p["w1"].T).reshape(xg.shape[0], xg.shape[1], -1)
    demb = np.zeros_like(p["emb"])
    np.add.at(demb, xg, dh0)
    grads["emb"] = demb
    return {k: grads[k] for k in p}


def mlp_forward(model: Model, x, train_mode: bool = False, rng=None):
    out = model.forward(x, train=train_mode, rng=rng)[0]
    return float(out[0]) if np.ndim(x) == 1 else out


def mlp_backward(model: Model, x, upstream, train_mode: bool = False, rng=None) -> dict:
    _, cache = model.forward(x, train=train_mode, rng=rng)
    return model.backward(cache, np.broadcast_to(np.asarray(upstream, dtype=float), (cache[0].shape[0],)))


# --------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, grads: dict) -> None:
    """Bias-corrected Adam update of ``params`` in place."""
    if set(grads) != set(params):
        raise ValueError(f"gradient keys {sorted(grads)} do not match parameters {sorted(params)}")
    for k, g in grads.items():
        if np.shape(g) != np.shape(params[k]):
            raise ValueError(f"shape mismatch for {k}: {np.shape(g)} vs {np.shape(params[k])}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for k, g in grads.items():
        if k not in state.m:
            state.m[k] = np.zeros_like(params[k])
            state.v[k] = np.zeros_like(params[k])
        m = state.m[k] = b1 * state.m[k] + (1 - b1) * g
        v = state.v[k] = b2 * state.v[k] + (1 - b2) * g * g
        params[k] = params[k] - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# --------------------------------------------------------------------------
# training

@dataclass
class TrainConfig:
    batch_size: int = 512
    max_epochs: int = 100
    patience: int = 5
    lr: float = 5e-4
    seed: int = 0
    emb_dim: int = 10
    hidden: int = 64
    dropout: float = 0.2
    init_std: float = 0.01
    # "zero" or "target_mean": start the output bias at the mean train target
    bias_init: str = "target_mean"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.bias_init not in ("zero", "target_mean"):
            raise ValueError(f"unknown bias_init {self.bias_init!r}")


@dataclass
class TrainResult:
    model: Model
    log: list
    best_epoch: int


def _mean_loss(objective, model, X, w, d, prepared, chunk=8192):
    total = 0.0
    for s in range(0, len(w), chunk):
        sl = slice(s, s + chunk)
        score = model.score(X[sl])
        loss, _ = objective.loss(score, w[sl], d[sl], None if prepared is None else prepared[sl])
        total += float(np.sum(loss))
    return total / max(len(w), 1)


def _initial_bias(objective, prepared, w, d):
    if prepared is None:
        return 0.0
    # censored probit labels sit at the censoring point; their mean is still a sane start
    return float(np.mean(prepared))


def train(train_ds, val_ds, objective, backbone: str = "fm", cfg: TrainConfig | None = None,
          fit_objective: bool = True) -> TrainResult:
    """Mini-batch Adam on the objective's mean per-record loss.

    Returns the parameters with the lowest validation loss (train loss when
    the validation split is empty) together with a per-epoch log.
    """
    cfg = cfg or TrainConfig()
    w_tr, d_tr = train_ds.watch_times(), train_ds.durations()
    if fit_objective:
        objective.fit(w_tr, d_tr)
    X_tr = train_ds.encode(train_ds.vocab)
    prep_tr = objective.prepare(w_tr, d_tr)
    has_val = val_ds is not None and len(val_ds) > 0
    if has_val:
        X_va = val_ds.encode(train_ds.vocab)
        w_va, d_va = val_ds.watch_times(), val_ds.durations()
        prep_va = objective.prepare(w_va, d_va)
    else:
        logger.warning("no validation records; early stopping on train loss")

    bias = _initial_bias(objective, prep_tr, w_tr, d_tr) if cfg.bias_init == "target_mean" else 0.0
    model = init_model(backbone, train_ds.cardinalities(), cfg.emb_dim, cfg.hidden, cfg.dropout,
                       cfg.init_std, substream(cfg.seed, STREAM_INIT), bias=bias)
    opt = AdamState(lr=cfg.lr)
    shuffle_rng = substream(cfg.seed, STREAM_SHUFFLE)
    dropout_rng = substream(cfg.seed, STREAM_DROPOUT)

    n = len(w_tr)
    log = []
    best = (np.inf, model.copy(), 0)
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            # overflow is caught by the finiteness checks below
            with np.errstate(over="ignore", invalid="ignore"):
                score, cache = model.forward(X_tr[idx], train=True, rng=dropout_rng)
            if not np.all(np.isfinite(score)):
                raise TrainingDiverged(f"non-finite score at epoch {epoch}")
            loss, dscore = objective.loss(score, w_tr[idx], d_tr[idx],
                                          None if prep_tr is None else prep_tr[idx])
            batch_loss = float(np.sum(loss))
            if not np.isfinite(batch_loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            total += batch_loss
            grads = model.backward(cache, dscore / len(idx))
            adam_step(opt, model.arrays, grads)
        train_loss = total / n
        val_loss = _mean_loss(objective, model, X_va, w_va, d_va, prep_va) if has_val else train_loss
        if not np.isfinite(val_loss):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
        log.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        logger.info("epoch %d train %.6f val %.6f", epoch, train_loss, val_loss)
        if val_loss < best[0]:
            best = (val_loss, model.copy(), epoch)
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return TrainResult(best[1], log, best[2])


# --------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path, model: Model, schema, vocab, train_config: dict, objective_config: dict,
                    extra: dict | None = None) -> None:
    """Write a JSON checkpoint. Floats use ``repr`` so they round-trip exactly."""
    doc = {
        "format_version": FORMAT_VERSION,
        "backbone": model.backbone,
        "schema": list(schema),
        "vocab": {k: dict(v) for k, v in vocab.items()},
        "shapes": model.shapes(),
        "cardinalities": list(model.cardinalities),
        "architecture": {"emb_dim": model.emb_dim, "hidden": model.hidden, "dropout": model.dropout},
        "parameters": {k: [float(x) for x in np.ravel(v)] for k, v in model.arrays.items()},
        "train_config": train_config,
        "objective_config": objective_config,
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n",
                          encoding="utf-8")


def load_checkpoint(path) -> tuple[Model, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {doc.get('format_version')!r}")
    arrays = {k: np.array(v, dtype=float).reshape(doc["shapes"][k]) for k, v in doc["parameters"].items()}
    arch = doc["architecture"]
    model = Model(doc["backbone"], tuple(doc["cardinalities"]), arrays,
                  arch["emb_dim"], arch["hidden"], arch["dropout"])
    return model, doc


def train_config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
