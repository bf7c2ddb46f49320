"""Adam training of the reconstruction network on masked pairs."""

import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from .loss import LossParams, loss_components

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings.

    ``pairs_per_epoch`` caps how many pairs one epoch visits: each epoch
    takes the first ``pairs_per_epoch`` entries of its own shuffle, so over
    many epochs every pair is still seen. ``None`` visits all pairs.
    """

    epochs: int = 30
    batch_size: int = 16
    lr: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    alpha: float = 0.1
    pearson_only: bool = False
    seed: int = 0
    checkpoint_every: int = 0
    pairs_per_epoch: int = None
    log_pearson: bool = True

    def __post_init__(self):
        for name in ("epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not (math.isfinite(self.lr) and self.lr > 0):
            raise ValueError("lr must be finite and > 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1 and self.adam_eps > 0):
            raise ValueError("invalid Adam constants")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")
        if self.pairs_per_epoch is not None and self.pairs_per_epoch < 1:
            raise ValueError("pairs_per_epoch must be >= 1")

    @property
    def loss_params(self):
        return LossParams(alpha=self.alpha, pearson_only=self.pearson_only)

    def to_dict(self):
        return asdict(self)


# -- Adam ------------------------------------------------------------------------

@dataclass
class AdamState:
    step: int = 0
    m: dict = None
    v: dict = None

    def __post_init__(self):
        self.m = {} if self.m is None else self.m
        self.v = {} if self.v is None else self.v


def adam_step(params, grads, state, config=TrainConfig()):
    """One in-place Adam update.

    Parameters
    ----------
    params : dict of name -> array (or Tensor; its ``.data`` is updated)
    grads : dict of name -> array
        Names missing from ``grads`` get a zero gradient.
    state : AdamState

    Returns
    -------
    (params, state)
    """
    b1, b2 = config.adam_beta1, config.adam_beta2
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        arr = p.data if hasattr(p, "data") and not isinstance(p, np.ndarray) else p
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(arr)
        g = np.asarray(g, dtype=arr.dtype)
        if g.shape != arr.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter {arr.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(arr)
            state.v[name] = np.zeros_like(arr)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        arr -= (config.lr * (m / c1) / (np.sqrt(v / c2) + config.adam_eps)).astype(arr.dtype)
    return params, state


# -- training loop -----------------------------------------------------------------

@dataclass
class EpochLog:
    epoch: int
    composite: float
    mse: float
    pearson: float
    val_composite: float = float("nan")


def _batch(pairs, dtype):
    xs, ys = [], []
    for p in pairs:
        xs.append(p.masked.samples)
        ys.append(p.target.samples)
    return np.stack(xs).astype(dtype), np.stack(ys).astype(dtype)


def _predict(model, x):
    if hasattr(model, "reconstruct_batch"):
        return np.asarray(model.reconstruct_batch(x))
    return np.asarray(model(x))


def validate(model, pairs, alpha=0.1, batch_size=32):
    """Mean composite loss over ``pairs`` in evaluation mode.

    ``model`` may be a :class:`Model` or any object with
    ``reconstruct_batch(array (B, 12, N)) -> array (B, 12, N)``.
    """
    params = alpha if isinstance(alpha, LossParams) else LossParams.parse(alpha)
    if not pairs:
        raise ValueError("no pairs to validate on")
    total = 0.0
    for i in range(0, len(pairs), batch_size):
        chunk = pairs[i:i + batch_size]
        x, y = _batch(chunk, np.float64)
        out = _predict(model, x).astype(np.float64).reshape(y.shape)
        total += float(loss_components(out, y, params)[0].data) * len(chunk)
    return total / len(pairs)


def _model_dtype(model):
    return next(iter(model.params.values())).dtype


def epoch_order(n, seed, epoch, limit=None):
    order = np.random.default_rng([seed, epoch]).permutation(n)
    return order if limit is None else order[:limit]


def save_checkpoint(model, state, epoch, history, directory):
    """Weights, optimizer state and history after ``epoch``."""
    from .dataio import save_weights
    os.makedirs(directory, exist_ok=True)
    stem = os.path.join(directory, f"epoch{epoch:04d}")
    save_weights(model, stem + ".ecgr")
    arrays = {f"m/{k}": v for k, v in state.m.items()}
    arrays.update({f"v/{k}": v for k, v in state.v.items()})
    np.savez(stem + ".adam.npz", **arrays)
    with open(stem + ".json", "w", encoding="utf-8", newline="\n") as f:
        json.dump({"epoch": epoch, "adam_step": state.step,
                   "history": [asdict(h) for h in history]}, f, indent=2)
        f.write("\n")
    return stem


def load_checkpoint(stem, config=None):
    """Inverse of :func:`save_checkpoint`: ``(model, state, epoch, history)``."""
    from .dataio import load_weights
    model = load_weights(stem + ".ecgr", config)
    with np.load(stem + ".adam.npz") as z:
        m = {k[2:]: z[k].copy() for k in z.files if k.startswith("m/")}
        v = {k[2:]: z[k].copy() for k in z.files if k.startswith("v/")}
    with open(stem + ".json", encoding="utf-8") as f:
        meta = json.load(f)
    history = [EpochLog(**h) for h in meta["history"]]
    return model, AdamState(meta["adam_step"], m, v), meta["epoch"], history


def train(model, pairs, config=TrainConfig(), val_pairs=None, checkpoint_dir=None,
          resume=None, log_path=None, progress=None):
    """Minimize the composite loss over ``pairs`` with Adam.

    Parameters
    ----------
    model : Model
        Updated in place.
    pairs : list of DatasetPair
    config : TrainConfig
    val_pairs : list of DatasetPair, optional
        Scored with :func:`validate` after every epoch.
    checkpoint_dir : str, optional
        Where checkpoints go every ``config.checkpoint_every`` epochs.
    resume : tuple, optional
        ``(state, epoch, history)`` from :func:`load_checkpoint`; training
        continues with epoch ``epoch + 1`` exactly as if uninterrupted.
    log_path : str, optional
        Epoch log CSV, rewritten after every epoch.
    progress : callable, optional
        Called with each :class:`EpochLog`.

    Returns
    -------
    (model, list of EpochLog)
    """
    if not pairs:
        raise ValueError("empty training set")
    lp = config.loss_params
    dtype = _model_dtype(model)
    state, start, history = (AdamState(), 0, []) if resume is None else resume
    history = list(history)
    from . import autodiff as ad
    for epoch in range(start + 1, config.epochs + 1):
        order = epoch_order(len(pairs), config.seed, epoch, config.pairs_per_epoch)
        sums = np.zeros(3)
        seen = 0
        for step, lo in enumerate(range(0, len(order), config.batch_size)):
            idx = order[lo:lo + config.batch_size]
            x, y = _batch([pairs[i] for i in idx], dtype)
            rng = np.random.default_rng([config.seed, epoch, step])
            model.zero_grad()
            out = model(x, training=True, rng=rng)
            comp, mse, pear = loss_components(out.reshape(y.shape), y, lp)
            vals = (float(comp.data), float(mse.data),
                    float(pear.data) if config.log_pearson else float("nan"))
            if not all(math.isfinite(v) for v in vals[:2]):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, step {step}: composite={vals[0]}, "
                    f"mse={vals[1]}; lower the learning rate or check the inputs")
            comp.backward()
            grads = {k: p.grad for k, p in model.params.items()}
            adam_step(model.params, grads, state, config)
            sums += np.array(vals) * len(idx)
            seen += len(idx)
        means = sums / seen
        val = validate(model, val_pairs, lp) if val_pairs else float("nan")
        entry = EpochLog(epoch, float(means[0]), float(means[1]), float(means[2]), val)
        history.append(entry)
        log.info("epoch %d composite %.5f mse %.5f pearson %.5f val %.5f", epoch, *means, val)
        if progress is not None:
            progress(entry)
        if log_path:
            write_epoch_log(history, log_path)
        if checkpoint_dir and config.checkpoint_every and epoch % config.checkpoint_every == 0:
            save_checkpoint(model, state, epoch, history, checkpoint_dir)
    model.zero_grad()
    return model, history


def write_epoch_log(history, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "composite", "mse", "pearson", "val_composite"])
        for h in history:
            w.writerow([h.epoch] + [repr(float(v)) for v in (h.composite, h.mse, h.pearson, h.val_composite)])


# -- alpha sweep --------------------------------------------------------------------

SWEEP_ALPHAS = ("0", "0.1", "0.5", "1", "inf")


def alpha_sweep(model_config, train_pairs, eval_records, alphas=SWEEP_ALPHAS,
                config=TrainConfig(), configs=None, init_seed=0, seed=0):
    """Train one model per loss weight and score each on the same records.

    Returns one dict per weight with the mean PCC, RMSE, MAE and DTW over
    ``configs`` (all 17 catalog masks by default) and the final training
    composite.
    """
    from dataclasses import replace

    from .masking import mask_catalog
    from .metrics import evaluate
    from .model import Model
    configs = mask_catalog() if configs is None else configs
    rows = []
    for a in alphas:
        lp = LossParams.parse(a)
        cfg = replace(config, alpha=lp.alpha, pearson_only=lp.pearson_only)
        model = Model.build(model_config, init_seed=init_seed)
        model, hist = train(model, train_pairs, cfg)
        reps = evaluate(model, eval_records, configs, seed=seed, clinical=False)
        row = {"alpha": lp.label, "final_composite": hist[-1].composite}
        for m in ("pcc", "rmse", "mae_mean", "dtw"):
            row[m] = float(np.mean([r.aggregates[m][0] for r in reps]))
        rows.append(row)
    return rows
