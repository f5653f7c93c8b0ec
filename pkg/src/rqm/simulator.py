"""Desk-scale federated DP-SGD with pluggable gradient encoders.

Each round the server samples ``n`` of ``N`` devices without replacement.
Every sampled device computes the full-batch gradient of a multinomial
logistic loss on its own data, clips it coordinate-wise to ``[-c, c]`` and
encodes each coordinate independently. A trusted aggregator releases only the
coordinate-wise sum, which the server decodes into a mean-gradient estimate
for one SGD step.

Data are a seeded Gaussian mixture (class means at the vertices of a regular
simplex, unit isotropic covariance), standing in for an image task.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from rqm import rng as rngmod
from rqm.errors import ParameterError, SimulationError
from rqm.mechanism import RqmParams, clip_coordinatewise, decode_aggregate, rqm_sample_array
from rqm.pbm import PbmParams, pbm_decode_aggregate, pbm_for_levels, pbm_sample_array

MECHANISMS = ("noise_free", "rqm", "pbm")


@dataclass(frozen=True)
class SimConfig:
    """Experiment configuration.

    ``clip=None`` calibrates ``c`` to the median absolute coordinate of the
    per-device gradients at the initial model, so about half of the
    coordinates clip in the first round. RQM's range extension is given
    relative to ``c`` (``delta = delta_ratio * c``).
    """

    total_devices: int = 100
    devices_per_round: int = 10
    rounds: int = 500
    learning_rate: float = 1.0
    clip: float | None = None
    mechanism: str = "rqm"
    levels: int = 16
    q: float = 0.42
    delta_ratio: float = 1.0
    theta: float = 0.25
    pbm_match_support: bool = True
    feature_dim: int = 10
    classes: int = 3
    samples_per_device: int = 50
    separation: float = 2.0
    heterogeneity: float = 0.0
    master_seed: int = 0

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ParameterError(f"mechanism must be one of {MECHANISMS}, got {self.mechanism!r}")
        if self.total_devices < 1:
            raise ParameterError("total_devices must be >= 1")
        if not 1 <= self.devices_per_round <= self.total_devices:
            raise ParameterError("devices_per_round must lie in 1..total_devices")
        if self.rounds < 1:
            raise ParameterError(f"rounds must be >= 1, got {self.rounds}")
        if not self.learning_rate > 0:
            raise ParameterError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.clip is not None and not self.clip > 0:
            raise ParameterError(f"clip must be > 0, got {self.clip}")
        if self.classes < 2 or self.feature_dim < self.classes:
            raise ParameterError("need classes >= 2 and feature_dim >= classes")
        if self.samples_per_device < 1:
            raise ParameterError("samples_per_device must be >= 1")
        if not self.separation >= 0 or not 0 <= self.heterogeneity <= 1:
            raise ParameterError("separation must be >= 0 and heterogeneity in [0, 1]")
        if self.master_seed < 0:
            raise ParameterError("master_seed must be >= 0")
        # surface mechanism parameter errors at construction time, for every
        # mechanism, so a comparison run cannot fail halfway through
        RqmParams(c=1.0, delta=self.delta_ratio, m=self.levels, q=self.q)
        pbm_for_levels(1.0, self.theta, self.levels, self.pbm_match_support)

    @property
    def dim(self) -> int:
        """Number of model parameters ``f`` (weights plus per-class bias)."""
        return (self.feature_dim + 1) * self.classes

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Federation:
    features: list[np.ndarray]  # per device, shape (samples, feature_dim + 1) incl. bias column
    labels: list[np.ndarray]
    classes: int

    def __len__(self):
        return len(self.features)

    def pooled(self) -> tuple[np.ndarray, np.ndarray]:
        return np.concatenate(self.features), np.concatenate(self.labels)


@dataclass(frozen=True)
class ModelState:
    w: np.ndarray
    round: int = 0


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    loss: float
    accuracy: float
    bits_per_device: int
    decode_bias: float = math.nan


# --------------------------------------------------------------------------
# encoders


class NoiseFree:
    name = "noise_free"

    def encode(self, g: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return g.copy()

    def decode(self, z_sum: np.ndarray, n: int) -> np.ndarray:
        return z_sum / n

    def bits(self, f: int) -> int:
        return 64 * f


@dataclass(frozen=True)
class RqmCodec:
    params: RqmParams
    name: str = field(default="rqm", init=False)

    def encode(self, g, rng):
        return rqm_sample_array(g, self.params, rng)

    def decode(self, z_sum, n):
        return decode_aggregate(z_sum, n, self.params)

    def bits(self, f: int) -> int:
        return f * math.ceil(math.log2(self.params.m))

    def support_max(self) -> int:
        return self.params.m - 1


@dataclass(frozen=True)
class PbmCodec:
    params: PbmParams
    name: str = field(default="pbm", init=False)

    def encode(self, g, rng):
        return pbm_sample_array(g, self.params, rng)

    def decode(self, z_sum, n):
        return pbm_decode_aggregate(z_sum, n, self.params)

    def bits(self, f: int) -> int:
        return f * math.ceil(math.log2(self.params.m + 1))

    def support_max(self) -> int:
        return self.params.m


def codec_for(config: SimConfig, c: float):
    if config.mechanism == "noise_free":
        return NoiseFree()
    if config.mechanism == "rqm":
        return RqmCodec(RqmParams(c=c, delta=config.delta_ratio * c, m=config.levels, q=config.q))
    return PbmCodec(pbm_for_levels(c, config.theta, config.levels, config.pbm_match_support))


# --------------------------------------------------------------------------
# data and model


def _simplex_means(classes: int, dim: int, scale: float) -> np.ndarray:
    means = np.zeros((classes, dim))
    means[:, :classes] = np.eye(classes) - 1.0 / classes
    return scale * means


def generate_synthetic_federation(config: SimConfig) -> Federation:
    rng = rngmod.stream(config.master_seed, rngmod.DATA)
    k, d, s = config.classes, config.feature_dim, config.samples_per_device
    means = _simplex_means(k, d, config.separation)
    features, labels = [], []
    for _ in range(config.total_devices):
        props = (1 - config.heterogeneity) / k + config.heterogeneity * rng.dirichlet(np.ones(k))
        counts = rng.multinomial(s, props / props.sum())
        y = np.repeat(np.arange(k), counts)
        x = means[y] + rng.standard_normal((s, d))
        features.append(np.hstack([x, np.ones((s, 1))]))
        labels.append(y)
    return Federation(features, labels, k)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_gradient(w: np.ndarray, x: np.ndarray, y: np.ndarray, classes: int) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of a linear softmax model and its gradient in ``w``."""
    W = w.reshape(x.shape[1], classes)
    probs = _softmax(x @ W)
    n = len(y)
    loss = -float(np.mean(np.log(np.clip(probs[np.arange(n), y], 1e-300, None))))
    probs[np.arange(n), y] -= 1.0
    return loss, (x.T @ probs / n).ravel()


def evaluate(w: np.ndarray, x: np.ndarray, y: np.ndarray, classes: int) -> tuple[float, float]:
    W = w.reshape(x.shape[1], classes)
    logits = x @ W
    loss, _ = loss_and_gradient(w, x, y, classes)
    return loss, float(np.mean(logits.argmax(axis=1) == y))


def initial_state(config: SimConfig) -> ModelState:
    return ModelState(np.zeros(config.dim), 0)


def calibrate_clip(federation: Federation, w: np.ndarray) -> float:
    """Median absolute gradient coordinate across all devices at ``w``."""
    grads = [loss_and_gradient(w, x, y, federation.classes)[1] for x, y in zip(federation.features, federation.labels)]
    c = float(np.median(np.abs(np.concatenate(grads))))
    return c if c > 0 else 1.0


def resolve_clip(config: SimConfig, federation: Federation) -> float:
    return config.clip if config.clip is not None else calibrate_clip(federation, initial_state(config).w)


# --------------------------------------------------------------------------
# protocol steps


def clipped_gradient(state: ModelState, x, y, classes: int, c: float) -> np.ndarray:
    _, g = loss_and_gradient(state.w, x, y, classes)
    if not np.all(np.isfinite(g)):
        raise SimulationError("non-finite local gradient", round_index=state.round)
    return clip_coordinatewise(g, c)


def local_update(state: ModelState, data: tuple, codec, c: float, rng: np.random.Generator, classes: int) -> np.ndarray:
    """Clip the device's full-batch gradient and encode every coordinate."""
    x, y = data
    return codec.encode(clipped_gradient(state, x, y, classes, c), rng)


def secure_aggregate(messages) -> np.ndarray:
    """Coordinate-wise sum of the device messages; only the sum leaves here.

    Integer messages are summed exactly; real-valued ones with ``math.fsum``
    so the result does not depend on arrival order.
    """
    messages = [np.asarray(m) for m in messages]
    if not messages:
        raise ValueError("secure_aggregate needs at least one message")
    f = messages[0].shape
    if any(m.shape != f for m in messages):
        raise ValueError("messages have mismatched lengths")
    if all(np.issubdtype(m.dtype, np.integer) for m in messages):
        return np.sum(messages, axis=0, dtype=np.int64)
    stacked = np.stack(messages).astype(np.float64)
    return np.array([math.fsum(col) for col in stacked.T])


def server_step(state: ModelState, z_sum, n: int, codec, learning_rate: float) -> ModelState:
    g_hat = codec.decode(z_sum, n)
    w = state.w - learning_rate * g_hat
    if not np.all(np.isfinite(w)):
        raise SimulationError("non-finite model after server step", round_index=state.round)
    return ModelState(w, state.round + 1)


def sample_devices(config: SimConfig, round_index: int) -> np.ndarray:
    rng = rngmod.stream(config.master_seed, rngmod.SAMPLING, round_index)
    return np.sort(rng.choice(config.total_devices, size=config.devices_per_round, replace=False))


def encode_round(state: ModelState, federation: Federation, devices, codec, c: float, master_seed: int) -> list:
    """Messages of the given devices for the current round, in the order given.

    Each device encodes with its own (device, round) stream, so the result
    for a device does not depend on which other devices ran or in what order.
    """
    out = []
    for dev in devices:
        dev = int(dev)
        rng = rngmod.device_stream(master_seed, dev, state.round)
        try:
            out.append(local_update(state, (federation.features[dev], federation.labels[dev]), codec, c, rng, federation.classes))
        except SimulationError as err:
            raise SimulationError(str(err).split(" [")[0], round_index=state.round, device_id=dev) from err
    return out


def run_training(config: SimConfig, diagnostics: bool = False, federation: Federation | None = None) -> list[RoundMetrics]:
    """Run the full protocol for ``config.rounds`` rounds.

    With ``diagnostics`` each round also records the distance between the
    decoded gradient and the mean clipped gradient of the sampled devices.
    """
    federation = federation or generate_synthetic_federation(config)
    c = resolve_clip(config, federation)
    codec = codec_for(config, c)
    bits = codec.bits(config.dim)
    x_all, y_all = federation.pooled()
    state = initial_state(config)
    history = []
    for t in range(config.rounds):
        devices = sample_devices(config, t)
        z_sum = secure_aggregate(encode_round(state, federation, devices, codec, c, config.master_seed))
        bias = math.nan
        if diagnostics:
            g_hat = codec.decode(z_sum, len(devices))
            target = np.mean(
                [clipped_gradient(state, federation.features[d], federation.labels[d], federation.classes, c) for d in devices],
                axis=0,
            )
            bias = float(np.linalg.norm(g_hat - target))
        state = server_step(state, z_sum, len(devices), codec, config.learning_rate)
        loss, acc = evaluate(state.w, x_all, y_all, federation.classes)
        if not (math.isfinite(loss) and math.isfinite(acc)):
            raise SimulationError("non-finite metrics", round_index=t)
        history.append(RoundMetrics(t, loss, acc, bits, bias))
    return history


def frozen_decoded_gradients(config: SimConfig, rounds: int, federation: Federation | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Decoded gradients over ``rounds`` rounds with the model held at its initial value.

    Returns ``(g_hats, target)``: one decoded estimate per round and the mean
    clipped gradient over the whole device pool, which uniform device
    sampling makes the expectation of each estimate.
    """
    federation = federation or generate_synthetic_federation(config)
    c = resolve_clip(config, federation)
    codec = codec_for(config, c)
    w0 = initial_state(config).w
    target = np.mean(
        [clipped_gradient(ModelState(w0), x, y, federation.classes, c) for x, y in zip(federation.features, federation.labels)],
        axis=0,
    )
    g_hats = np.empty((rounds, config.dim))
    for t in range(rounds):
        state = ModelState(w0, t)
        devices = sample_devices(config, t)
        z_sum = secure_aggregate(encode_round(state, federation, devices, codec, c, config.master_seed))
        g_hats[t] = codec.decode(z_sum, len(devices))
    return g_hats, target
