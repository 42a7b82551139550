"""Small conv generator/discriminator, Adam, and the two-phase training loop.

Training is deterministic by construction: every stochastic choice flows from
``np.random.default_rng([seed, stream])`` with a fixed stream id per phase
(0 = weight init, 1 = pretraining batches, 2 = adversarial batches,
3 = feature extractor), and all arithmetic is double precision.

The generator step backpropagates the weighted sum ``sum_k w_k l_k`` with the
weights held as constants of the current iterate. For the hypervolume modes
the weights are ``1/max(mu_k - l_k, eps)``, which is exactly the gradient the
log objectives induce, so the two hypervolume variants (which differ by an
additive constant) produce bit-identical parameter trajectories.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .data_io import ImageBuffer, augment_with_rng, load_image, random_patch_pair
from .losses import (
    FeatureExtractor,
    adv_loss_relativistic_g,
    adv_loss_standard_g,
    disc_loss,
    pixel_loss,
    feature_loss,
)
from .scalarize import (
    DEFAULT_EPS,
    MODE_KINDS,
    ScalarizationMode,
    clamp_flags,
    gradient_weights,
    scalarize,
)

__all__ = [
    "GeneratorNet",
    "DiscriminatorNet",
    "Adam",
    "TrainConfig",
    "TrainResult",
    "init_networks",
    "apply_generator",
    "pretrain_generator",
    "train_step_discriminator",
    "train_step_generator",
    "adversarial_phase",
    "train",
    "load_corpus",
    "lr_at",
    "get_state",
    "set_state",
    "save_checkpoint",
    "load_checkpoint",
    "write_history_csv",
    "write_pretrain_csv",
    "HISTORY_HEADER",
    "PRETRAIN_HEADER",
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
]

HISTORY_HEADER = "iter,l_gan,l_pix,l_fea,scalar,w_gan,w_pix,w_fea,clamped,lr"
PRETRAIN_HEADER = "iter,l_pix"
CHECKPOINT_MAGIC = b"HVGN"
CHECKPOINT_VERSION = 1

ADVERSARIAL_KINDS = ("standard", "relativistic")

# default per-loss upper bounds (gan, pix, fea) by adversarial variant
_DEFAULT_MU = {"relativistic": (20.0, 0.1, 10.0), "standard": (200.0, 0.1, 10.0)}


# ---------------------------------------------------------------------------
# networks
# ---------------------------------------------------------------------------

def _conv_init(rng: np.random.Generator, c_out: int, c_in: int) -> np.ndarray:
    fan_in = c_in * 3 * 3
    return rng.standard_normal((c_out, c_in, 3, 3)) / np.sqrt(fan_in)


class GeneratorNet:
    """conv-lrelu x2, then two (x2 nearest upsample + conv-lrelu) stages,
    closing conv + sigmoid; output spatial size is 4x the input."""

    def __init__(self, channels: int, width: int, rng: np.random.Generator):
        if width < 1:
            raise ValueError(f"generator width must be >= 1, got {width}")
        self.channels = int(channels)
        self.width = int(width)
        shapes = [
            (width, channels),
            (width, width),
            (width, width),
            (channels, width),
        ]
        self._layers = []
        for i, (co, ci) in enumerate(shapes, start=1):
            w = ad.Parameter(_conv_init(rng, co, ci), name=f"g.conv{i}.w")
            b = ad.Parameter(np.zeros(co), name=f"g.conv{i}.b")
            self._layers.append((w, b))

    def params(self) -> list[ad.Parameter]:
        return [p for layer in self._layers for p in layer]

    def forward(self, x: ad.Tensor) -> ad.Tensor:
        (w1, b1), (w2, b2), (w3, b3), (w4, b4) = self._layers
        h = ad.leaky_relu(ad.bias_add(ad.conv2d(x, w1), b1), 0.2)
        h = ad.leaky_relu(ad.bias_add(ad.conv2d(h, w2), b2), 0.2)
        h = ad.upsample_nearest(h, 2)
        h = ad.leaky_relu(ad.bias_add(ad.conv2d(h, w3), b3), 0.2)
        h = ad.upsample_nearest(h, 2)
        return ad.sigmoid(ad.bias_add(ad.conv2d(h, w4), b4))


class DiscriminatorNet:
    """conv-lrelu (C -> w), conv-lrelu (w -> 2w), spatial mean, dense to one
    raw logit per sample (losses apply the sigmoid)."""

    def __init__(self, channels: int, width: int, rng: np.random.Generator):
        if width < 1:
            raise ValueError(f"discriminator width must be >= 1, got {width}")
        self.channels = int(channels)
        self.width = int(width)
        self.w1 = ad.Parameter(_conv_init(rng, width, channels), name="d.conv1.w")
        self.b1 = ad.Parameter(np.zeros(width), name="d.conv1.b")
        self.w2 = ad.Parameter(_conv_init(rng, 2 * width, width), name="d.conv2.w")
        self.b2 = ad.Parameter(np.zeros(2 * width), name="d.conv2.b")
        self.wd = ad.Parameter(
            rng.standard_normal((2 * width, 1)) / np.sqrt(2 * width), name="d.fc.w"
        )
        self.bd = ad.Parameter(np.zeros(()), name="d.fc.b")

    def params(self) -> list[ad.Parameter]:
        return [self.w1, self.b1, self.w2, self.b2, self.wd, self.bd]

    def forward(self, x: ad.Tensor) -> ad.Tensor:
        h = ad.leaky_relu(ad.bias_add(ad.conv2d(x, self.w1), self.b1), 0.2)
        h = ad.leaky_relu(ad.bias_add(ad.conv2d(h, self.w2), self.b2), 0.2)
        h = ad.mean_spatial(h)
        return ad.add(ad.matmul(h, self.wd), self.bd)


def init_networks(
    seed: int, channels: int = 1, gen_width: int = 16, disc_width: int = 8
) -> tuple[GeneratorNet, DiscriminatorNet]:
    """Seeded unit-normal weights scaled by 1/sqrt(fan-in); zero biases."""
    if channels not in (1, 3):
        raise ValueError(f"channels must be 1 or 3, got {channels}")
    rng = np.random.default_rng([seed, 0])
    return GeneratorNet(channels, gen_width, rng), DiscriminatorNet(
        channels, disc_width, rng
    )


def apply_generator(g: GeneratorNet, img: ImageBuffer) -> ImageBuffer:
    """Run the generator on a whole image outside any tape."""
    out = g.forward(ad.Tensor(img.data[None]))
    return ImageBuffer(np.clip(out.data[0], 0.0, 1.0))


# ---------------------------------------------------------------------------
# optimizer and schedule
# ---------------------------------------------------------------------------

class Adam:
    """Standard Adam with bias correction; lr is mutable for scheduling."""

    def __init__(
        self,
        params: Sequence[ad.Parameter],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self._m[i] = self.beta1 * self._m[i] + (1.0 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self._m[i] / bc1
            v_hat = self._v[i] / bc2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def lr_at(base_lr: float, milestones: Sequence[int], t: int) -> float:
    """Learning rate at 1-indexed iteration t: halved at each passed milestone."""
    return base_lr * 0.5 ** sum(1 for m in milestones if t >= m)


# ---------------------------------------------------------------------------
# parameter state and checkpoints
# ---------------------------------------------------------------------------

def get_state(params: Sequence[ad.Parameter]) -> dict[str, np.ndarray]:
    return {p.name: p.data.copy() for p in params}


def set_state(params: Sequence[ad.Parameter], state: dict[str, np.ndarray]) -> None:
    for p in params:
        if p.name not in state:
            raise ValueError(f"state is missing parameter {p.name!r}")
        if state[p.name].shape != p.data.shape:
            raise ValueError(
                f"state shape mismatch for {p.name!r}: "
                f"{state[p.name].shape} vs {p.data.shape}"
            )
        p.data = state[p.name].copy()


def save_checkpoint(path, params: Sequence[ad.Parameter]) -> None:
    """Flat binary: magic, version u32, count u64, then per parameter the
    name (u16 length + bytes), rank u8, extents u64s, little-endian f64 data."""
    buf = bytearray()
    buf += CHECKPOINT_MAGIC
    buf += struct.pack("<I", CHECKPOINT_VERSION)
    buf += struct.pack("<Q", len(params))
    for p in params:
        name = p.name.encode("utf-8")
        buf += struct.pack("<H", len(name))
        buf += name
        buf += struct.pack("<B", p.data.ndim)
        for extent in p.data.shape:
            buf += struct.pack("<Q", extent)
        buf += np.ascontiguousarray(p.data, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(buf))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (count,) = struct.unpack_from("<Q", blob, 8)
    offset = 16
    state: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            shape = struct.unpack_from(f"<{rank}Q", blob, offset)
            offset += 8 * rank
            n = int(np.prod(shape)) if rank else 1
            if offset + 8 * n > len(blob):
                raise ValueError(f"{path}: truncated checkpoint")
            data = np.frombuffer(blob, dtype="<f8", count=n, offset=offset)
            offset += 8 * n
            state[name] = data.reshape(shape).astype(np.float64)
    except struct.error:
        raise ValueError(f"{path}: truncated checkpoint") from None
    if offset > len(blob):
        raise ValueError(f"{path}: truncated checkpoint")
    return state


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run needs; unknown JSON keys are rejected."""

    dataset: str
    output_dir: str
    seed: int = 0
    mode: str = "hv_log"
    mu: tuple | None = None
    eps: float = DEFAULT_EPS
    adversarial: str = "relativistic"
    norm_p: int = 1
    pretrain_iters: int = 2000
    adversarial_iters: int = 1000
    batch_size: int = 4
    patch_size: int = 48
    lr: float = 1e-4
    lr_milestones: tuple = (500,)
    baseline_weights: tuple = (0.005, 0.01, 1.0)
    eval_list: tuple = ()
    feature_tap: str = "post"
    gen_width: int = 16
    disc_width: int = 8

    def __post_init__(self):
        if self.mode not in MODE_KINDS:
            raise ValueError(f"mode must be one of {MODE_KINDS}, got {self.mode!r}")
        if self.adversarial not in ADVERSARIAL_KINDS:
            raise ValueError(
                f"adversarial must be one of {ADVERSARIAL_KINDS}, got "
                f"{self.adversarial!r}"
            )
        if self.norm_p not in (1, 2):
            raise ValueError(f"norm_p must be 1 or 2, got {self.norm_p!r}")
        if self.feature_tap not in ("pre", "post"):
            raise ValueError(f"feature_tap must be 'pre' or 'post', got {self.feature_tap!r}")
        for key in ("pretrain_iters", "adversarial_iters"):
            if not (isinstance(getattr(self, key), int) and getattr(self, key) >= 0):
                raise ValueError(f"{key} must be an integer >= 0, got {getattr(self, key)!r}")
        for key in ("batch_size", "patch_size", "gen_width", "disc_width"):
            if not (isinstance(getattr(self, key), int) and getattr(self, key) >= 1):
                raise ValueError(f"{key} must be an integer >= 1, got {getattr(self, key)!r}")
        if not (isinstance(self.seed, int) and self.seed >= 0):
            raise ValueError(f"seed must be an integer >= 0, got {self.seed!r}")
        if not (self.lr > 0 and math.isfinite(self.lr)):
            raise ValueError(f"lr must be finite and > 0, got {self.lr!r}")
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise ValueError(f"eps must be finite and > 0, got {self.eps!r}")
        ms = tuple(self.lr_milestones)
        if any(not isinstance(m, int) or m < 1 for m in ms) or list(ms) != sorted(set(ms)):
            raise ValueError(
                f"lr_milestones must be strictly increasing positive integers, got {ms}"
            )
        object.__setattr__(self, "lr_milestones", ms)
        if self.mu is not None:
            mu = tuple(float(v) for v in self.mu)
            if len(mu) != 3 or any(not (v > 0 and math.isfinite(v)) for v in mu):
                raise ValueError(
                    f"mu must be 3 finite positive reals (gan, pix, fea), got {self.mu!r}"
                )
            object.__setattr__(self, "mu", mu)
        bw = tuple(float(v) for v in self.baseline_weights)
        if len(bw) != 3 or any(v < 0 or not math.isfinite(v) for v in bw):
            raise ValueError(
                f"baseline_weights must be 3 finite nonnegative reals, got "
                f"{self.baseline_weights!r}"
            )
        object.__setattr__(self, "baseline_weights", bw)
        object.__setattr__(self, "eval_list", tuple(str(p) for p in self.eval_list))

    @property
    def resolved_mu(self) -> tuple:
        return self.mu if self.mu is not None else _DEFAULT_MU[self.adversarial]

    def mode_obj(self) -> ScalarizationMode:
        if self.mode == "linear":
            return ScalarizationMode("linear", self.baseline_weights)
        return ScalarizationMode(self.mode)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        if not isinstance(raw, dict):
            raise ValueError(f"config must be a JSON object, got {type(raw).__name__}")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(unknown)}")
        missing = [k for k in ("dataset", "output_dir") if k not in raw]
        if missing:
            raise ValueError(f"missing required config key(s): {', '.join(missing)}")
        coerced = dict(raw)
        for key in ("mu", "lr_milestones", "baseline_weights", "eval_list"):
            if key in coerced and isinstance(coerced[key], list):
                coerced[key] = tuple(coerced[key])
        return cls(**coerced)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    config: TrainConfig
    pretrain_rows: list
    history_rows: list
    clamp_total: int
    generator: GeneratorNet
    discriminator: DiscriminatorNet
    pretrain_path: str | None = None
    history_path: str | None = None
    checkpoint_path: str | None = None


def load_corpus(dataset) -> list[ImageBuffer]:
    """Load every PGM/PPM under a directory (sorted), or a single image file."""
    path = Path(dataset)
    if path.is_file():
        return [load_image(path)]
    if not path.is_dir():
        raise FileNotFoundError(f"dataset path does not exist: {dataset}")
    files = sorted(
        p for p in path.iterdir() if p.suffix.lower() in (".pgm", ".ppm")
    )
    if not files:
        raise ValueError(f"dataset directory has no .pgm/.ppm images: {dataset}")
    images = [load_image(p) for p in files]
    channels = images[0].channels
    for p, img in zip(files, images):
        if img.channels != channels:
            raise ValueError(f"dataset mixes channel counts: {p}")
    return images


def _draw_batch(
    images: Sequence[ImageBuffer],
    batch_size: int,
    patch_size: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    lrs, hrs = [], []
    for _ in range(batch_size):
        idx = int(rng.integers(0, len(images)))
        pair = random_patch_pair(images[idx], patch_size, rng, idx)
        pair = augment_with_rng(pair, rng)
        lrs.append(pair.lr.data)
        hrs.append(pair.hr.data)
    return np.stack(lrs), np.stack(hrs)


def pretrain_generator(
    g: GeneratorNet,
    images: Sequence[ImageBuffer],
    iterations: int,
    lr: float,
    batch_size: int,
    patch_size: int,
    rng: np.random.Generator,
    p: int = 1,
) -> list[tuple[int, float]]:
    """Adam steps on the pixel loss only; returns (iteration, loss) rows."""
    if not images:
        raise ValueError("pretrain_generator: empty dataset")
    if iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {iterations}")
    opt = Adam(g.params(), lr)
    rows = []
    for t in range(1, iterations + 1):
        lr_batch, hr_batch = _draw_batch(images, batch_size, patch_size, rng)
        with ad.Tape() as tape:
            fake = g.forward(ad.Tensor(lr_batch))
            loss = pixel_loss(fake, ad.Tensor(hr_batch), p)
            tape.backward(loss)
        opt.step()
        ad.zero_grads(g.params())
        rows.append((t, loss.item()))
    return rows


def train_step_discriminator(
    g: GeneratorNet,
    d: DiscriminatorNet,
    lr_batch: np.ndarray,
    hr_batch: np.ndarray,
    opt: Adam,
) -> float:
    """One Adam step on the discriminator; generator outputs are detached."""
    fake = g.forward(ad.Tensor(lr_batch))  # no tape active: plain forward
    with ad.Tape() as tape:
        logits_real = d.forward(ad.Tensor(hr_batch))
        logits_fake = d.forward(fake.detach())
        loss = disc_loss(logits_real, logits_fake)
        tape.backward(loss)
    opt.step()
    ad.zero_grads(d.params())
    return loss.item()


def train_step_generator(
    g: GeneratorNet,
    d: DiscriminatorNet,
    lr_batch: np.ndarray,
    hr_batch: np.ndarray,
    mode: ScalarizationMode,
    mu,
    eps: float,
    opt: Adam,
    extractor: FeatureExtractor,
    p: int,
    adversarial: str,
) -> tuple[np.ndarray, float, np.ndarray, int]:
    """One generator step: returns (loss vector, scalarized value, weights,
    clamp-event count). The discriminator is read but never updated."""
    with ad.Tape() as tape:
        fake = g.forward(ad.Tensor(lr_batch))
        hr_t = ad.Tensor(hr_batch)
        logits_fake = d.forward(fake)
        if adversarial == "relativistic":
            logits_real = d.forward(hr_t)
            l_gan = adv_loss_relativistic_g(logits_real, logits_fake)
        else:
            l_gan = adv_loss_standard_g(logits_fake)
        l_pix = pixel_loss(fake, hr_t, p)
        l_fea = feature_loss(fake, hr_t, extractor, p)
        losses = np.array([l_gan.item(), l_pix.item(), l_fea.item()])
        if mode.kind == "linear":
            weights = np.array(mode.weights, dtype=np.float64)
            clamped = 0
        else:
            weights = gradient_weights(losses, mu, eps)
            clamped = int(clamp_flags(losses, mu, eps).sum())
        scalar = scalarize(losses, mode, mu, eps)
        total = ad.add(
            ad.add(
                ad.scalar_mul(l_gan, weights[0]), ad.scalar_mul(l_pix, weights[1])
            ),
            ad.scalar_mul(l_fea, weights[2]),
        )
        tape.backward(total)
    opt.step()
    ad.zero_grads(g.params())
    ad.zero_grads(d.params())
    return losses, scalar, weights, clamped


def adversarial_phase(
    g: GeneratorNet,
    d: DiscriminatorNet,
    images: Sequence[ImageBuffer],
    config: TrainConfig,
    extractor: FeatureExtractor,
    rng: np.random.Generator,
) -> list[tuple]:
    """Alternating D/G steps (1:1), one shared batch per iteration."""
    mode = config.mode_obj()
    mu = config.resolved_mu
    opt_g = Adam(g.params(), config.lr)
    opt_d = Adam(d.params(), config.lr)
    rows = []
    for t in range(1, config.adversarial_iters + 1):
        step_lr = lr_at(config.lr, config.lr_milestones, t)
        opt_g.lr = step_lr
        opt_d.lr = step_lr
        lr_batch, hr_batch = _draw_batch(
            images, config.batch_size, config.patch_size, rng
        )
        train_step_discriminator(g, d, lr_batch, hr_batch, opt_d)
        losses, scalar, weights, clamped = train_step_generator(
            g,
            d,
            lr_batch,
            hr_batch,
            mode,
            mu,
            config.eps,
            opt_g,
            extractor,
            config.norm_p,
            config.adversarial,
        )
        rows.append((t, *losses, scalar, *weights, clamped, step_lr))
    return rows


def _fmt(v) -> str:
    return repr(float(v))


def write_history_csv(path, rows: Sequence[tuple]) -> None:
    lines = [HISTORY_HEADER]
    for (t, lg, lp, lf, s, wg, wp, wf, clamped, step_lr) in rows:
        lines.append(
            f"{t},{_fmt(lg)},{_fmt(lp)},{_fmt(lf)},{_fmt(s)},"
            f"{_fmt(wg)},{_fmt(wp)},{_fmt(wf)},{int(clamped)},{_fmt(step_lr)}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_pretrain_csv(path, rows: Sequence[tuple]) -> None:
    lines = [PRETRAIN_HEADER]
    for (t, lp) in rows:
        lines.append(f"{t},{_fmt(lp)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def train(config: TrainConfig) -> TrainResult:
    """Pretrain, then alternate D/G steps; write history, pretrain log, and
    checkpoint under the configured output directory."""
    images = load_corpus(config.dataset)
    channels = images[0].channels
    g, d = init_networks(config.seed, channels, config.gen_width, config.disc_width)
    extractor = FeatureExtractor(channels, [config.seed, 3], config.feature_tap)

    pre_rows = pretrain_generator(
        g,
        images,
        config.pretrain_iters,
        config.lr,
        config.batch_size,
        config.patch_size,
        np.random.default_rng([config.seed, 1]),
        config.norm_p,
    )
    adv_rows = adversarial_phase(
        g, d, images, config, extractor, np.random.default_rng([config.seed, 2])
    )

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    pretrain_path = out / "pretrain.csv"
    history_path = out / "history.csv"
    checkpoint_path = out / "checkpoint.hvgn"
    write_pretrain_csv(pretrain_path, pre_rows)
    write_history_csv(history_path, adv_rows)
    save_checkpoint(checkpoint_path, g.params() + d.params())

    return TrainResult(
        config=config,
        pretrain_rows=pre_rows,
        history_rows=adv_rows,
        clamp_total=sum(int(r[8]) for r in adv_rows),
        generator=g,
        discriminator=d,
        pretrain_path=str(pretrain_path),
        history_path=str(history_path),
        checkpoint_path=str(checkpoint_path),
    )
