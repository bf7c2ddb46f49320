"""Hybrid 1D/2D U-Net for 12-lead reconstruction.

Encoder level ``i`` runs two branches on the same input map:

* a 2D block (conv ``(3, 5)`` stride ``(1, 2)``, batchnorm, LeakyReLU,
  dropout) that mixes neighbouring leads, and
* twelve per-lead 1D blocks (conv ``5`` stride ``2``, batchnorm, LeakyReLU,
  dropout) implemented as one grouped convolution.

Both halve the time axis and keep the 12 lead rows; their outputs are
concatenated channel-wise. That concatenation feeds the next level and is
kept as the skip tensor for the symmetric decoder block. A ``(13, 3)``
transposed-convolution transition sits at the bottleneck, and four
transposed-convolution decoder blocks double the time axis back to the
input length. The last block ends in ``tanh``.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .leads import N_LEADS, EcgRecord, InvalidInputError


@dataclass(frozen=True)
class ModelConfig:
    enc2d_channels: tuple = (32, 64, 128, 256)
    enc1d_channels_per_lead: tuple = (8, 16, 32, 64)
    leaky_slope: float = 0.2
    dropout_p: float = 0.2
    transition_kernel: tuple = (13, 3)
    time_stride: int = 2
    input_shape: tuple = (1, 12, 512)
    share_1d_weights_across_leads: bool = False
    enc2d_kernel: tuple = (3, 5)
    enc1d_kernel: int = 5

    def __post_init__(self):
        for name in ("enc2d_channels", "enc1d_channels_per_lead", "transition_kernel",
                     "input_shape", "enc2d_kernel"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if len(self.enc2d_channels) != 4 or len(self.enc1d_channels_per_lead) != 4:
            raise InvalidInputError("the encoder needs exactly 4 levels in both branches")
        if any(c < 1 for c in self.enc2d_channels + self.enc1d_channels_per_lead):
            raise InvalidInputError("channel counts must be positive")
        c, h, w = self.input_shape
        if c != 1 or h != N_LEADS:
            raise InvalidInputError("input must be a single-channel 12-row map")
        if self.time_stride < 2 or self.time_stride % 2:
            raise InvalidInputError("time_stride must be a positive even number")
        if w % (self.time_stride ** 4):
            raise InvalidInputError(f"input width {w} must be divisible by {self.time_stride ** 4}")
        kh, kw = self.transition_kernel
        if kh % 2 == 0 or kw % 2 == 0:
            raise InvalidInputError("transition kernel must be odd to preserve the bottleneck size")
        if self.enc2d_kernel[0] % 2 == 0 or self.enc2d_kernel[1] % 2 == 0 or self.enc1d_kernel % 2 == 0:
            raise InvalidInputError("encoder kernels must be odd")

    @property
    def level_channels(self):
        """Channels of each concatenated (2D + stacked 1D) encoder output."""
        return tuple(a + b for a, b in zip(self.enc2d_channels, self.enc1d_channels_per_lead))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


DESK_CONFIG = ModelConfig(enc2d_channels=(8, 16, 32, 64),
                          enc1d_channels_per_lead=(2, 4, 8, 16))


@dataclass
class Model:
    config: ModelConfig
    params: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)

    # -- construction ----------------------------------------------------
    @classmethod
    def build(cls, config=ModelConfig(), init_seed=0, dtype=np.float32):
        rng = np.random.default_rng(init_seed)
        m = cls(config)
        cfg = config
        kh2, kw2 = cfg.enc2d_kernel
        k1 = cfg.enc1d_kernel
        in_ch = 1
        for i, (c2, c1) in enumerate(zip(cfg.enc2d_channels, cfg.enc1d_channels_per_lead)):
            m._conv(rng, f"enc{i}.conv2d", (c2, in_ch, kh2, kw2), in_ch * kh2 * kw2, dtype)
            m._norm(f"enc{i}.bn2d", (c2,), dtype)
            groups = 1 if cfg.share_1d_weights_across_leads else N_LEADS
            m._conv(rng, f"enc{i}.conv1d", (groups * c1, in_ch, k1), in_ch * k1, dtype)
            bn_shape = (c1,) if cfg.share_1d_weights_across_leads else (c1, N_LEADS)
            m._norm(f"enc{i}.bn1d", bn_shape, dtype)
            in_ch = c2 + c1
        levels = cfg.level_channels
        kh, kw = cfg.transition_kernel
        # transposed-conv fan-in is taken over the input channels
        m._conv(rng, "transition.deconv", (levels[3], levels[3], kh, kw), levels[3] * kh * kw, dtype)
        m._norm("transition.bn", (levels[3],), dtype)
        dec_in = levels[3]
        outs = (levels[2], levels[1], levels[0], 1)
        for j, co in enumerate(outs):
            ci = dec_in + levels[3 - j]
            kw_dec = 2 * cfg.time_stride
            m._conv(rng, f"dec{j}.deconv", (ci, co, 3, kw_dec), ci * 3 * kw_dec, dtype)
            if j < 3:
                m._norm(f"dec{j}.bn", (co,), dtype)
            dec_in = co
        return m

    def _conv(self, rng, name, shape, fan_in, dtype):
        bound = 1.0 / np.sqrt(fan_in)
        self.params[name + ".weight"] = Tensor(
            rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)
        bias_len = shape[1] if "deconv" in name else shape[0]
        self.params[name + ".bias"] = Tensor(
            rng.uniform(-bound, bound, size=bias_len).astype(dtype), requires_grad=True)

    def _norm(self, name, shape, dtype):
        self.params[name + ".gamma"] = Tensor(np.ones(shape, dtype=dtype), requires_grad=True)
        self.params[name + ".beta"] = Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)
        self.buffers[name + ".running_mean"] = np.zeros(shape, dtype=dtype)
        self.buffers[name + ".running_var"] = np.ones(shape, dtype=dtype)

    # -- introspection --------------------------------------------------------
    def parameter_count(self):
        return int(sum(p.size for p in self.params.values()))

    def state_dict(self):
        """Named arrays of parameters and batchnorm running statistics."""
        state = {k: p.data for k, p in self.params.items()}
        state.update(self.buffers)
        return state

    def load_state_dict(self, state):
        for k, p in self.params.items():
            p.data = np.array(state[k], dtype=p.dtype)
        for k, b in self.buffers.items():
            b[...] = state[k]

    def astype(self, dtype):
        """A deep copy with every array cast to ``dtype``."""
        m = Model(self.config)
        m.params = {k: Tensor(p.data.astype(dtype), requires_grad=True) for k, p in self.params.items()}
        m.buffers = {k: b.astype(dtype) for k, b in self.buffers.items()}
        return m

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    # -- forward --------------------------------------------------------------
    def _bn(self, x, name, training, feature_axes=(1,)):
        return ad.batchnorm(x, self.params[name + ".gamma"], self.params[name + ".beta"],
                            self.buffers[name + ".running_mean"], self.buffers[name + ".running_var"],
                            training=training, feature_axes=feature_axes)

    def __call__(self, x, training=False, rng=None):
        """Run the network on a batch.

        Parameters
        ----------
        x : Tensor or array, shape (B, 1, 12, W) or (B, 12, W)
        training : bool
            Batch statistics and dropout when True; running statistics and no
            dropout otherwise.
        rng : numpy Generator, optional
            Source of dropout masks in training mode.

        Returns
        -------
        Tensor, shape (B, 1, 12, W)
        """
        cfg = self.config
        p = self.params
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=next(iter(p.values())).dtype))
        if x.ndim == 3:
            x = x.reshape(x.shape[0], 1, x.shape[1], x.shape[2])
        if x.shape[1:] != cfg.input_shape:
            raise InvalidInputError(f"expected input (B, {cfg.input_shape}), got {x.shape}")
        if training and rng is None:
            rng = np.random.default_rng()
        slope = cfg.leaky_slope
        s = cfg.time_stride
        kh2, kw2 = cfg.enc2d_kernel
        k1 = cfg.enc1d_kernel
        h = x
        skips = []
        for i in range(4):
            b, c, nl, w = h.shape
            a = ad.conv2d(h, p[f"enc{i}.conv2d.weight"], p[f"enc{i}.conv2d.bias"],
                          stride=(1, s), padding=(kh2 // 2, kw2 // 2))
            a = ad.leaky_relu(self._bn(a, f"enc{i}.bn2d", training), slope)
            a = ad.dropout(a, cfg.dropout_p, training, rng)

            c1 = cfg.enc1d_channels_per_lead[i]
            if cfg.share_1d_weights_across_leads:
                lead_in = h.transpose(0, 2, 1, 3).reshape(b * nl, c, w)
                d = ad.conv1d(lead_in, p[f"enc{i}.conv1d.weight"], p[f"enc{i}.conv1d.bias"],
                              stride=s, padding=k1 // 2)
                d = d.reshape(b, nl, c1, d.shape[-1]).transpose(0, 2, 1, 3)
                d = self._bn(d, f"enc{i}.bn1d", training, (1,))
            else:
                lead_in = h.transpose(0, 2, 1, 3).reshape(b, nl * c, w)
                d = ad.conv1d(lead_in, p[f"enc{i}.conv1d.weight"], p[f"enc{i}.conv1d.bias"],
                              stride=s, padding=k1 // 2, groups=nl)
                d = d.reshape(b, nl, c1, d.shape[-1]).transpose(0, 2, 1, 3)
                d = self._bn(d, f"enc{i}.bn1d", training, (1, 2))
            d = ad.leaky_relu(d, slope)
            d = ad.dropout(d, cfg.dropout_p, training, rng)

            h = ad.concat([a, d], axis=1)
            skips.append(h)

        kh, kw = cfg.transition_kernel
        t = ad.conv_transpose2d(h, p["transition.deconv.weight"], p["transition.deconv.bias"],
                                stride=1, padding=(kh // 2, kw // 2))
        y = ad.leaky_relu(self._bn(t, "transition.bn", training), slope)
        for j in range(4):
            y = ad.concat([y, skips[3 - j]], axis=1)
            y = ad.conv_transpose2d(y, p[f"dec{j}.deconv.weight"], p[f"dec{j}.deconv.bias"],
                                    stride=(1, s), padding=(1, s // 2))
            if j < 3:
                y = ad.leaky_relu(self._bn(y, f"dec{j}.bn", training), slope)
            else:
                y = ad.tanh(y)
        return y

    def forward(self, masked, mode="eval", rng=None):
        """Reconstruct one masked ECG; returns an :class:`EcgRecord`."""
        samples = masked.samples if hasattr(masked, "samples") else np.asarray(masked)
        if samples.shape != self.config.input_shape[1:]:
            raise InvalidInputError(f"expected {self.config.input_shape[1:]}, got {samples.shape}")
        training = mode == "train"
        if training:
            y = self(samples[None], training=True, rng=rng)
        else:
            with ad.no_grad():
                y = self(samples[None], training=False)
        out = np.asarray(y.data[0, 0], dtype=np.float64)
        fs = getattr(masked, "sampling_rate", 51.2)
        sid = getattr(masked, "source_id", "")
        return EcgRecord(out, fs, id=sid)

    def reconstruct_batch(self, x):
        """Eval-mode reconstruction of an array ``(B, 12, W)``."""
        with ad.no_grad():
            return np.asarray(self(x, training=False).data[:, 0])


def build(config=ModelConfig(), init_seed=0, dtype=np.float32):
    return Model.build(config, init_seed, dtype)


def parameter_count(model):
    return model.parameter_count()
