"""Conditional-GAN regression of future visibility.

The generator maps (normalized lag features, scalar noise) to a normalized
visibility; the discriminator scores (features, visibility) pairs with a
sigmoid output. The discriminator minimizes the usual cross-entropy value
function and the generator uses the non-saturating ``-log D(x, G(x, z))``
objective. A point forecast is the mean of the generator output over
``prediction_samples`` noise draws.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .errors import ConfigError, DataError
from .features import LagSpec, NormStats, SupervisedSet, apply_norm, fit_norm, invert_norm_target, normalize_target

logger = logging.getLogger(__name__)

MODEL_FORMAT = "fognow.cgan"
MODEL_VERSION = 1
PROB_CLAMP = 1e-7


class EmptyBatch(DataError):
    pass


class EmptyTrainingSet(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NonFiniteLoss(DataError):
    def __init__(self, epoch: int, d_loss: float, g_loss: float):
        super().__init__(f"non-finite loss at epoch {epoch}: disc={d_loss}, gen={g_loss}")
        self.epoch = epoch


@dataclass(frozen=True)
class CganConfig:
    noise_dim: int = 1
    gen_hidden: tuple[int, ...] = (15,) * 6
    disc_hidden: tuple[int, ...] = (15,) * 4
    activation: str = "elu"
    lr_gen: float = 1e-4
    lr_disc: float = 1e-3
    batch_size: int = 100
    epochs: int = 500
    disc_steps_per_gen_step: int = 1
    prediction_samples: int = 50
    patience: int | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "gen_hidden", tuple(int(h) for h in self.gen_hidden))
        object.__setattr__(self, "disc_hidden", tuple(int(h) for h in self.disc_hidden))
        if not (self.lr_gen > 0 and self.lr_disc > 0):
            raise ConfigError("learning rates must be positive")
        if self.batch_size < 1 or self.prediction_samples < 1 or self.noise_dim < 1:
            raise ConfigError("batch_size, prediction_samples and noise_dim must be >= 1")
        if self.epochs < 1 or self.disc_steps_per_gen_step < 1:
            raise ConfigError("epochs and disc_steps_per_gen_step must be >= 1")
        if self.activation not in nn.ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.patience is not None and self.patience < 1:
            raise ConfigError("patience must be >= 1 or None")


@dataclass(eq=False)
class CganModel:
    generator: nn.MlpParams
    discriminator: nn.MlpParams
    norm: NormStats
    config: CganConfig
    spec: LagSpec | None = None
    training_log: list[dict] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def n_features(self) -> int:
        return self.generator.dims[0] - self.config.noise_dim

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "config": asdict(self.config),
            "spec": None if self.spec is None else {**asdict(self.spec), "variables": list(self.spec.variables)},
            "norm": self.norm.to_dict(),
            "generator": self.generator.to_dict(),
            "discriminator": self.discriminator.to_dict(),
            "best_epoch": self.best_epoch,
            "training_log": self.training_log,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CganModel":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise DataError("unsupported cgan model document")
        return cls(
            nn.MlpParams.from_dict(d["generator"]),
            nn.MlpParams.from_dict(d["discriminator"]),
            NormStats.from_dict(d["norm"]),
            CganConfig(**d["config"]),
            None if d["spec"] is None else LagSpec(**d["spec"]),
            list(d["training_log"]),
            int(d["best_epoch"]),
        )


def save_model(model: CganModel, path, provenance: dict | None = None) -> None:
    doc = model.to_dict()
    doc["provenance"] = provenance or {}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> CganModel:
    with open(path) as fh:
        return CganModel.from_dict(json.load(fh))


def cgan_losses(disc_real, disc_fake) -> tuple[float, float]:
    """Discriminator and (non-saturating) generator losses from probabilities."""
    real = np.clip(np.asarray(disc_real, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    fake = np.clip(np.asarray(disc_fake, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    if real.size == 0 or fake.size == 0:
        raise EmptyBatch("loss of an empty batch")
    d_loss = -float(np.mean(np.log(real)) + np.mean(np.log1p(-fake)))
    g_loss = -float(np.mean(np.log(fake)))
    return d_loss, g_loss


def _softplus(v):
    return np.logaddexp(0.0, v)


def cgan_losses_from_logits(logit_real, logit_fake) -> tuple[float, float]:
    """The same losses written on discriminator logits.

    ``-log(sigmoid(l)) = softplus(-l)`` and ``-log(1 - sigmoid(l)) = softplus(l)``.
    Unlike the clamped form, the gradients never vanish when the
    discriminator saturates, which is what training uses.
    """
    lr_ = np.asarray(logit_real, dtype=np.float64)
    lf = np.asarray(logit_fake, dtype=np.float64)
    if lr_.size == 0 or lf.size == 0:
        raise EmptyBatch("loss of an empty batch")
    d_loss = float(np.mean(_softplus(-lr_)) + np.mean(_softplus(lf)))
    g_loss = float(np.mean(_softplus(-lf)))
    return d_loss, g_loss


def build_networks(n_features: int, config: CganConfig) -> tuple[nn.MlpParams, nn.MlpParams]:
    ss = np.random.SeedSequence(config.seed)
    g_seed, d_seed = ss.spawn(2)
    g_dims, g_acts = nn.mlp_architecture(n_features + config.noise_dim, config.gen_hidden, 1,
                                         config.activation, "identity")
    d_dims, d_acts = nn.mlp_architecture(n_features + 1, config.disc_hidden, 1, config.activation, "sigmoid")
    return nn.init_params(g_dims, g_acts, g_seed), nn.init_params(d_dims, d_acts, d_seed)


def discriminator_step(gen, disc, xb, yb, z, state: nn.AdamState):
    """One ADAM step on the discriminator. Returns (disc, state, d_loss, fake, gen_tape)."""
    b = xb.shape[0]
    fake, g_tape = nn.forward(gen, np.hstack([xb, z]))
    p_real, t_real = nn.forward(disc, np.hstack([xb, yb[:, None]]))
    p_fake, t_fake = nn.forward(disc, np.hstack([xb, fake]))
    d_loss, _ = cgan_losses_from_logits(t_real.pre[-1], t_fake.pre[-1])
    # d/dl softplus(-l) = sigmoid(l) - 1, d/dl softplus(l) = sigmoid(l)
    g_real, _ = nn.backward(disc, t_real, (p_real - 1.0) / b, wrt_preactivation=True)
    g_fake, _ = nn.backward(disc, t_fake, p_fake / b, wrt_preactivation=True)
    grads = nn.MlpParams([a + c for a, c in zip(g_real.weights, g_fake.weights)],
                         [a + c for a, c in zip(g_real.biases, g_fake.biases)], disc.activations)
    disc, state = nn.adam_step(disc, grads, state)
    return disc, state, d_loss, fake, g_tape


def generator_loss(gen, disc, xb, z) -> float:
    fake, _ = nn.forward(gen, np.hstack([xb, z]))
    _, tape = nn.forward(disc, np.hstack([xb, fake]))
    return float(np.mean(_softplus(-tape.pre[-1])))


def generator_step(gen, disc, xb, z, state: nn.AdamState, fake=None, g_tape=None):
    """One ADAM step on the generator through a frozen discriminator."""
    b = xb.shape[0]
    if fake is None:
        fake, g_tape = nn.forward(gen, np.hstack([xb, z]))
    p_fake, t_fake = nn.forward(disc, np.hstack([xb, fake]))
    g_loss = float(np.mean(_softplus(-t_fake.pre[-1])))
    _, d_input = nn.backward(disc, t_fake, (p_fake - 1.0) / b, wrt_preactivation=True)
    grads, _ = nn.backward(gen, g_tape, d_input[:, -1:])
    gen, state = nn.adam_step(gen, grads, state)
    return gen, state, g_loss


def _generator_mean(gen: nn.MlpParams, xn: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Normalized generator outputs, shape (rows, K).

    The feature part of the first layer is computed once per row and reused
    for every noise draw.
    """
    n, k, nd = z.shape
    w0, b0 = gen.weights[0], gen.biases[0]
    f = xn.shape[1]
    base = xn @ w0[:, :f].T + b0
    pre = base[:, None, :] + z @ w0[:, f:].T
    a = nn._activate(gen.activations[0], pre.reshape(n * k, -1))
    for w, b, act in zip(gen.weights[1:], gen.biases[1:], gen.activations[1:]):
        a = nn._activate(act, a @ w.T + b)
    return a.reshape(n, k)


def _noise_rng(model: CganModel, seed):
    return np.random.default_rng([model.config.seed, 7919] if seed is None else seed)


def _normalized_rows(model: CganModel, x_rows) -> np.ndarray:
    x = np.asarray(x_rows, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise DimensionMismatch(f"expected {model.n_features} features, got shape {np.shape(x_rows)}")
    return apply_norm(x, model.norm)


def predict_point(model: CganModel, x_rows, k: int | None = None, seed=None) -> np.ndarray:
    """Mean generator output over ``k`` noise draws, in km, clamped at zero."""
    xn = _normalized_rows(model, x_rows)
    k = k or model.config.prediction_samples
    z = _noise_rng(model, seed).standard_normal((xn.shape[0], k, model.config.noise_dim))
    out = np.empty(xn.shape[0])
    chunk = max(1, 200_000 // k)
    for s in range(0, xn.shape[0], chunk):
        out[s:s + chunk] = _generator_mean(model.generator, xn[s:s + chunk], z[s:s + chunk]).mean(axis=1)
    return np.maximum(invert_norm_target(out, model.norm), 0.0)


def sample_predictions(model: CganModel, x_row, k: int, seed=None) -> tuple[np.ndarray, float]:
    """Raw de-normalized samples for one row and their clamped mean."""
    xn = _normalized_rows(model, x_row)
    if xn.shape[0] != 1:
        raise DimensionMismatch("sample_predictions takes a single row")
    z = _noise_rng(model, seed).standard_normal((1, k, model.config.noise_dim))
    samples = invert_norm_target(_generator_mean(model.generator, xn, z)[0], model.norm)
    return samples, max(float(samples.mean()), 0.0)


def _rmse(a, b) -> float:
    return math.sqrt(float(np.mean((a - b) ** 2)))


def train_cgan(train: SupervisedSet, valid: SupervisedSet | None = None,
               config: CganConfig | None = None) -> CganModel:
    """Adversarial training with a best-validation-RMSE snapshot.

    Every batch takes one discriminator step; every
    ``disc_steps_per_gen_step``-th batch also takes a generator step, reusing
    the batch's noise draws.
    """
    config = config or CganConfig()
    if len(train) == 0:
        raise EmptyTrainingSet("no training rows")
    norm = fit_norm(train.x, train.y)
    xn = apply_norm(train.x, norm)
    yn = normalize_target(train.y, norm)
    has_valid = valid is not None and len(valid) > 0
    if has_valid and valid.x.shape[1] != train.x.shape[1]:
        raise DimensionMismatch("train and valid feature counts differ")

    gen, disc = build_networks(train.x.shape[1], config)
    g_state = nn.AdamState.fresh(gen, config.lr_gen)
    d_state = nn.AdamState.fresh(disc, config.lr_disc)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(3)[2])
    model = CganModel(gen, disc, norm, config, train.spec)
    n, bs = len(train), config.batch_size

    best = (np.inf, gen.copy(), disc.copy(), 0)
    stale = 0
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        d_losses, g_losses = [], []
        d_steps = g_steps = 0
        for i, s in enumerate(range(0, n, bs)):
            idx = perm[s:s + bs]
            xb, yb = xn[idx], yn[idx]
            z = rng.standard_normal((idx.size, config.noise_dim))
            disc, d_state, d_loss, fake, g_tape = discriminator_step(gen, disc, xb, yb, z, d_state)
            d_losses.append(d_loss)
            d_steps += 1
            if (i + 1) % config.disc_steps_per_gen_step == 0:
                gen, g_state, g_loss = generator_step(gen, disc, xb, z, g_state, fake, g_tape)
                g_losses.append(g_loss)
                g_steps += 1
        d_mean = float(np.mean(d_losses))
        g_mean = float(np.mean(g_losses)) if g_losses else float("nan")
        if not (math.isfinite(d_mean) and (math.isfinite(g_mean) or not g_losses)):
            raise NonFiniteLoss(epoch, d_mean, g_mean)

        model.generator, model.discriminator = gen, disc
        entry = {"epoch": epoch, "d_loss": d_mean, "g_loss": g_mean, "d_steps": d_steps, "g_steps": g_steps}
        if has_valid:
            score = _rmse(predict_point(model, valid.x), valid.y)
            entry["valid_rmse"] = score
            if score < best[0]:
                best = (score, gen.copy(), disc.copy(), epoch)
                stale = 0
            else:
                stale += 1
        model.training_log.append(entry)
        if has_valid and config.patience is not None and stale >= config.patience:
            logger.info("stopping after %d epochs without validation improvement", stale)
            break

    if has_valid:
        _, model.generator, model.discriminator, model.best_epoch = best
    else:
        model.best_epoch = len(model.training_log)
    return model
