"""U-AFNO surrogate: U-Net encoder, AFNO token-mixing bottleneck, U-Net decoder.

Channel schedule: encoder level k has ``base_channels * 2**k`` channels; the
latent grid carries the channels of the last level at H / 2**enc_levels.
AFNO mixing weights are indexed per Fourier mode of the latent grid, so a
built model is tied to one input resolution.
"""

from __future__ import annotations

import json
import os
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, FormatError, ShapeError, TruncationError

WEIGHTS_MAGIC = b"UAFW"
WEIGHTS_VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}


@dataclass(frozen=True)
class UAFNOConfig:
    in_channels: int = 3
    height: int = 64
    width: int = 64
    enc_levels: int = 3
    base_channels: int = 16
    n_blocks: int = 2
    heads: int = 4
    mlp_hidden: int = 128
    patch: int = 1
    shrink: float = 0.0
    pad_mode: str = "periodic_reflect"
    ln_eps: float = 1e-12

    def __post_init__(self):
        self.validate()

    def validate(self):
        ints = ("in_channels", "height", "width", "enc_levels", "base_channels",
                "n_blocks", "heads", "mlp_hidden", "patch")
        for k in ints:
            v = getattr(self, k)
            lo = 0 if k in ("enc_levels", "n_blocks") else 1
            if not isinstance(v, int) or isinstance(v, bool) or v < lo:
                raise ConfigError(f"model.{k} must be a non-negative integer, got {v!r}")
        if self.patch != 1:
            raise ConfigError("model.patch must be 1")
        if self.shrink < 0:
            raise ConfigError("model.shrink must be >= 0")
        if self.pad_mode not in ("periodic_reflect", "zero"):
            raise ConfigError(f"model.pad_mode {self.pad_mode!r} not supported")
        f = 2 ** self.enc_levels
        for name, n in (("height", self.height), ("width", self.width)):
            if n % f:
                raise ConfigError(f"model.{name}={n} not divisible by 2**enc_levels={f}")
            lat = n // f
            if lat & (lat - 1):
                raise ConfigError(f"latent {name} {lat} is not a power of two")
        if self.latent_channels % self.heads:
            raise ConfigError(f"latent channels {self.latent_channels} not divisible by heads {self.heads}")

    @property
    def channels(self):
        return [self.base_channels * 2 ** lev for lev in range(self.enc_levels)]

    @property
    def latent_channels(self):
        return self.channels[-1] if self.enc_levels else self.base_channels

    @property
    def latent_shape(self):
        f = 2 ** self.enc_levels
        return (self.latent_channels, self.height // f, self.width // f)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown model keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def paper(cls):
        """3 x 512 x 512 input, 256 x 64 x 64 latent, 12 blocks, 16 heads."""
        return cls(height=512, width=512, enc_levels=3, base_channels=64, n_blocks=12,
                   heads=16, mlp_hidden=3072)

    @classmethod
    def desk(cls, height=64, width=64):
        return cls(height=height, width=width)


def parameter_shapes(cfg):
    """Ordered name -> (shape, is_complex) for every parameter; allocates nothing."""
    shapes = OrderedDict()
    cin = cfg.in_channels
    if cfg.enc_levels == 0:
        shapes["stem.w"] = ((cfg.base_channels, cin, 1, 1), False)
        shapes["stem.b"] = ((cfg.base_channels,), False)
        cin = cfg.base_channels
    for lev, c in enumerate(cfg.channels):
        for k in range(2):
            shapes[f"enc{lev}.conv{k}.w"] = ((c, cin if k == 0 else c, 3, 3), False)
            shapes[f"enc{lev}.conv{k}.b"] = ((c,), False)
        cin = c
    C, h, w = cfg.latent_shape
    dh = C // cfg.heads
    for i in range(cfg.n_blocks):
        p = f"block{i}."
        shapes[p + "ln1.g"] = ((C,), False)
        shapes[p + "ln1.b"] = ((C,), False)
        shapes[p + "mix.w"] = ((h * w, cfg.heads, dh, dh), True)
        shapes[p + "mix.b"] = ((cfg.heads, dh), True)
        shapes[p + "ln2.g"] = ((C,), False)
        shapes[p + "ln2.b"] = ((C,), False)
        shapes[p + "mlp1.w"] = ((C, cfg.mlp_hidden), False)
        shapes[p + "mlp1.b"] = ((cfg.mlp_hidden,), False)
        shapes[p + "mlp2.w"] = ((cfg.mlp_hidden, C), False)
        shapes[p + "mlp2.b"] = ((C,), False)
    cur = C
    for lev in reversed(range(cfg.enc_levels)):
        c = cfg.channels[lev]
        shapes[f"dec{lev}.conv0.w"] = ((c, cur + c, 3, 3), False)
        shapes[f"dec{lev}.conv0.b"] = ((c,), False)
        shapes[f"dec{lev}.conv1.w"] = ((c, c, 3, 3), False)
        shapes[f"dec{lev}.conv1.b"] = ((c,), False)
        cur = c
    shapes["head.w"] = ((cfg.in_channels, cur, 1, 1), False)
    shapes["head.b"] = ((cfg.in_channels,), False)
    return shapes


def activation_shapes(cfg):
    """Shapes along the forward path, computed without running the model."""
    H, W = cfg.height, cfg.width
    out = {"input": (cfg.in_channels, H, W), "skips": []}
    for lev, c in enumerate(cfg.channels):
        out["skips"].append((c, H >> lev, W >> lev))
    out["latent"] = cfg.latent_shape
    out["output"] = (cfg.in_channels, H, W)
    return out


def _fan_in(name, shape):
    if name.endswith("mix.w"):
        return shape[-2]
    if len(shape) == 4:
        return shape[1] * shape[2] * shape[3]
    return shape[0]


class UAFNO:
    def __init__(self, cfg, params):
        self.cfg = cfg
        self.params = params

    def parameters(self):
        return list(self.params.values())

    def n_parameters(self):
        return int(sum(p.data.size for p in self.params.values()))

    def __getitem__(self, name):
        return self.params[name]

    # -------------------------------------------------------------- forward

    def _conv(self, x, name, pad=1):
        return ad.conv2d(x, self.params[name + ".w"], self.params[name + ".b"],
                         pad=pad, pad_mode=self.cfg.pad_mode)

    def encode(self, x):
        cfg = self.cfg
        x = ad.Tensor(x) if not isinstance(x, ad.Tensor) else x
        if x.shape != (cfg.in_channels, cfg.height, cfg.width):
            raise ShapeError(f"input shape {x.shape} does not match model "
                             f"{(cfg.in_channels, cfg.height, cfg.width)}")
        if cfg.enc_levels == 0:
            x = self._conv(x, "stem", pad=0)
        skips = []
        for lev in range(cfg.enc_levels):
            x = ad.gelu(self._conv(x, f"enc{lev}.conv0"))
            x = ad.gelu(self._conv(x, f"enc{lev}.conv1"))
            skips.append(x)
            x = ad.down2(x)
        return x, skips

    def afno_block(self, x, i):
        cfg = self.cfg
        C, h, w = x.shape
        if (C, h, w) != cfg.latent_shape:
            raise ShapeError(f"token grid {x.shape} does not match latent {cfg.latent_shape}")
        p = self.params
        pre = f"block{i}."
        t = ad.transpose(x, (1, 2, 0))
        u = ad.layernorm(t, p[pre + "ln1.g"], p[pre + "ln1.b"], cfg.ln_eps)
        u = ad.fft2(u)
        u = ad.reshape(u, (h * w, cfg.heads, C // cfg.heads))
        u = ad.block_complex_linear(u, p[pre + "mix.w"], p[pre + "mix.b"])
        u = ad.reshape(u, (h, w, C))
        u = ad.softshrink(ad.complex_gelu(u), cfg.shrink)
        y = ad.add(t, ad.ifft2(u))
        v = ad.layernorm(y, p[pre + "ln2.g"], p[pre + "ln2.b"], cfg.ln_eps)
        v = ad.gelu(ad.linear(v, p[pre + "mlp1.w"], p[pre + "mlp1.b"]))
        v = ad.linear(v, p[pre + "mlp2.w"], p[pre + "mlp2.b"])
        z = ad.add(y, v)
        return ad.transpose(z, (2, 0, 1))

    def decode(self, x, skips):
        cfg = self.cfg
        if len(skips) != cfg.enc_levels:
            raise ShapeError(f"expected {cfg.enc_levels} skips, got {len(skips)}")
        for lev in reversed(range(cfg.enc_levels)):
            x = ad.up2(x)
            s = skips[lev]
            if s.shape[1:] != x.shape[1:] or s.shape[0] != cfg.channels[lev]:
                raise ShapeError(f"skip {lev} shape {s.shape} incompatible with {x.shape}")
            x = ad.concat([x, s], axis=0)
            x = ad.gelu(self._conv(x, f"dec{lev}.conv0"))
            x = ad.gelu(self._conv(x, f"dec{lev}.conv1"))
        return self._conv(x, "head", pad=0)

    def forward(self, x):
        z, skips = self.encode(x)
        for i in range(self.cfg.n_blocks):
            z = self.afno_block(z, i)
        return ad.sigmoid(self.decode(z, skips))

    __call__ = forward

    def predict(self, fields):
        """Untracked forward on a plain (3, H, W) array."""
        with ad.no_grad():
            return self.forward(ad.Tensor(np.asarray(fields, dtype=np.float64))).data


def build(cfg, seed=0):
    """Allocate and initialize every parameter deterministically from ``seed``."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    params = OrderedDict()
    for name, (shape, cplx) in parameter_shapes(cfg).items():
        kind = name.rsplit(".", 1)[-1]
        if kind == "g":
            data = np.ones(shape)
        elif kind == "b":
            data = np.zeros(shape, dtype=np.complex128 if cplx else np.float64)
        else:
            bound = np.sqrt(1.0 / _fan_in(name, shape))
            data = rng.uniform(-bound, bound, shape)
            if cplx:
                data = data + 1j * rng.uniform(-bound, bound, shape)
        params[name] = ad.Tensor(data, requires_grad=True, name=name)
    return UAFNO(cfg, params)


# ------------------------------------------------------------------ weights file

def save_weights(model, path):
    cfg_bytes = json.dumps(model.cfg.to_dict(), sort_keys=True).encode()
    parts = [WEIGHTS_MAGIC, struct.pack("<II", WEIGHTS_VERSION, len(cfg_bytes)), cfg_bytes,
             struct.pack("<I", len(model.params))]
    for name, t in model.params.items():
        nb = name.encode()
        code = 1 if t.is_complex else 0
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack("<BB", code, t.data.ndim))
        parts.append(struct.pack(f"<{t.data.ndim}I", *t.shape))
        parts.append(np.ascontiguousarray(t.data, dtype=_DTYPES[code]).tobytes())
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise TruncationError(f"{self.path}: truncated while reading {what}", field=what)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_weights(path, expected=None):
    """Read a weights file; ``expected`` (UAFNOConfig) must match if given."""
    with open(path, "rb") as fh:
        r = _Reader(fh.read(), path)
    if r.take(4, "magic") != WEIGHTS_MAGIC:
        raise FormatError(f"{path}: bad magic", field="magic")
    version, nconf = r.unpack("<II", "header")
    if version != WEIGHTS_VERSION:
        raise FormatError(f"{path}: unsupported version {version}", field="version")
    try:
        cfg = UAFNOConfig.from_dict(json.loads(r.take(nconf, "config").decode()))
    except (ValueError, TypeError) as exc:
        raise FormatError(f"{path}: invalid embedded config: {exc}", field="config") from exc
    if expected is not None and expected != cfg:
        raise ConfigError(f"{path}: weights config {cfg.to_dict()} incompatible with {expected.to_dict()}")
    shapes = parameter_shapes(cfg)
    (count,) = r.unpack("<I", "tensor count")
    if count != len(shapes):
        raise FormatError(f"{path}: {count} tensors, config needs {len(shapes)}", field="count")
    params = OrderedDict()
    for name, (shape, cplx) in shapes.items():
        (nlen,) = r.unpack("<H", "name length")
        got = r.take(nlen, "name").decode()
        code, ndim = r.unpack("<BB", f"{name} header")
        dims = r.unpack(f"<{ndim}I", f"{name} dims")
        if got != name or tuple(dims) != shape or code != int(cplx):
            raise FormatError(f"{path}: tensor {got} {dims} does not match expected {name} {shape}",
                              field=name)
        dt = _DTYPES[code]
        n = int(np.prod(shape))
        data = np.frombuffer(r.take(n * dt.itemsize, name), dtype=dt).reshape(shape)
        params[name] = ad.Tensor(data.astype(dt.newbyteorder("="), copy=True),
                                 requires_grad=True, name=name)
    if r.pos != len(r.buf):
        raise FormatError(f"{path}: trailing bytes", field="trailer")
    return UAFNO(cfg, params)
