"""Structure extraction: a two-domain translation model with a shared structure encoder.

Images from the source domain (``s``) and the style corpus (``t``) are split
into a structure code, produced by one encoder shared by both domains, and a
low-dimensional style code from a per-domain style encoder. Per-domain AdaIN
generators recombine them. After translation training the structure encoder is
frozen and ``decoder_ds`` learns to turn its code into a one-channel structure
map.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import InvalidConfigError, ShapeError, TrainingDivergenceError

DOMAINS = ("source", "target")


def _domain_key(domain) -> str:
    key = {"source": "s", "s": "s", "target": "t", "t": "t"}.get(str(domain))
    if key is None:
        raise ValueError(f"unknown domain {domain!r}; expected one of {DOMAINS}")
    return key


class ConvBlock(nn.Module):
    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0, norm="none",
                 activation="relu", pad_type="reflect"):
        super().__init__()
        self.pad = nn.ReflectionPad2d(padding) if pad_type == "reflect" else nn.ZeroPad2d(padding)
        self.conv = nn.Conv2d(in_ch, out_ch, kernel, stride)
        if norm == "in":
            self.norm = nn.InstanceNorm2d(out_ch)
        elif norm == "ln":
            self.norm = LayerNorm2d(out_ch)
        elif norm == "none":
            self.norm = None
        else:
            raise InvalidConfigError(f"unknown norm {norm!r}")
        self.activation = {
            "relu": nn.ReLU(inplace=False),
            "lrelu": nn.LeakyReLU(0.2, inplace=False),
            "tanh": nn.Tanh(),
            "none": None,
        }[activation]

    def forward(self, x):
        x = self.conv(self.pad(x))
        if self.norm is not None:
            x = self.norm(x)
        if self.activation is not None:
            x = self.activation(x)
        return x


class LayerNorm2d(nn.Module):
    """Per-sample normalization over (C, H, W) with per-channel affine."""

    def __init__(self, channels, eps=1e-5):
        super().__init__()
        self.gamma = nn.Parameter(torch.ones(channels))
        self.beta = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x):
        x = F.layer_norm(x, x.shape[1:], eps=self.eps)
        return x * self.gamma[None, :, None, None] + self.beta[None, :, None, None]


class ResBlock(nn.Module):
    def __init__(self, dim, norm="in"):
        super().__init__()
        self.block = nn.Sequential(
            ConvBlock(dim, dim, 3, 1, 1, norm=norm, activation="relu"),
            ConvBlock(dim, dim, 3, 1, 1, norm=norm, activation="none"),
        )

    def forward(self, x):
        return x + self.block(x)


class StructureEncoder(nn.Module):
    """Shared encoder: 7x7 stem, two stride-2 convs, residual blocks, all with IN."""

    downsample = 4

    def __init__(self, in_ch=3, dim=64, n_res=4):
        super().__init__()
        layers = [ConvBlock(in_ch, dim, 7, 1, 3, norm="in")]
        for _ in range(2):
            layers.append(ConvBlock(dim, 2 * dim, 4, 2, 1, norm="in"))
            dim *= 2
        layers += [ResBlock(dim, norm="in") for _ in range(n_res)]
        self.model = nn.Sequential(*layers)
        self.out_channels = dim

    def forward(self, x):
        h, w = x.shape[-2:]
        if h % self.downsample or w % self.downsample:
            raise ShapeError(f"image dims {h}x{w} must be divisible by {self.downsample}")
        return self.model(x)


class StyleEncoder(nn.Module):
    """Per-domain style encoder without normalization, globally pooled to a vector."""

    def __init__(self, in_ch=3, dim=64, style_dim=8, n_downsample=4):
        super().__init__()
        layers = [ConvBlock(in_ch, dim, 7, 1, 3)]
        for i in range(n_downsample):
            out = dim * 2 if i < 2 else dim
            layers.append(ConvBlock(dim, out, 4, 2, 1))
            dim = out
        self.model = nn.Sequential(*layers, nn.AdaptiveAvgPool2d(1))
        self.fc = nn.Conv2d(dim, style_dim, 1)
        self.style_dim = style_dim

    def forward(self, x):
        return self.fc(self.model(x)).flatten(1)


class AdaINResBlock(nn.Module):
    def __init__(self, dim):
        super().__init__()
        self.conv1 = ConvBlock(dim, dim, 3, 1, 1, activation="none")
        self.conv2 = ConvBlock(dim, dim, 3, 1, 1, activation="none")
        self.dim = dim

    n_params = property(lambda self: 4 * self.dim)

    @staticmethod
    def _adain(x, scale, shift):
        x = F.instance_norm(x)
        return x * scale[:, :, None, None] + shift[:, :, None, None]

    def forward(self, x, params):
        s1, b1, s2, b2 = params.split(self.dim, dim=1)
        y = F.relu(self._adain(self.conv1(x), s1, b1))
        y = self._adain(self.conv2(y), s2, b2)
        return x + y


class Generator(nn.Module):
    """AdaIN decoder: style vector -> MLP -> affine params for every residual block."""

    def __init__(self, dim=256, out_ch=3, style_dim=8, n_res=4, mlp_dim=256, up_kernel=5):
        super().__init__()
        self.res = nn.ModuleList(AdaINResBlock(dim) for _ in range(n_res))
        n_params = sum(b.n_params for b in self.res)
        self.mlp = nn.Sequential(
            nn.Linear(style_dim, mlp_dim), nn.ReLU(),
            nn.Linear(mlp_dim, mlp_dim), nn.ReLU(),
            nn.Linear(mlp_dim, n_params),
        )
        up = []
        for _ in range(2):
            up += [nn.Upsample(scale_factor=2, mode="nearest"),
                   ConvBlock(dim, dim // 2, up_kernel, 1, up_kernel // 2, norm="ln")]
            dim //= 2
        up.append(ConvBlock(dim, out_ch, 7, 1, 3, activation="tanh"))
        self.up = nn.Sequential(*up)
        self.style_dim = style_dim

    def forward(self, structure, style):
        if style.shape[1] != self.style_dim:
            raise ShapeError(f"style code has {style.shape[1]} dims, expected {self.style_dim}")
        params = self.mlp(style)
        offset = 0
        x = structure
        for block in self.res:
            p = params[:, offset:offset + block.n_params]
            # AdaIN scales are centered at 1.
            p = torch.cat([p[:, :block.dim] + 1, p[:, block.dim:2 * block.dim],
                           p[:, 2 * block.dim:3 * block.dim] + 1, p[:, 3 * block.dim:]], dim=1)
            x = block(x, p)
            offset += block.n_params
        return self.up(x)


class PatchDiscriminator(nn.Module):
    def __init__(self, in_ch=3, dim=64, n_layers=4):
        super().__init__()
        layers = [ConvBlock(in_ch, dim, 4, 2, 1, activation="lrelu", pad_type="reflect")]
        for _ in range(n_layers - 1):
            layers.append(ConvBlock(dim, dim * 2, 4, 2, 1, activation="lrelu"))
            dim *= 2
        layers.append(nn.Conv2d(dim, 1, 1))
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        return self.model(x)


class MultiScaleDiscriminator(nn.Module):
    """Patch discriminators applied to a 3-level average-pooled image pyramid."""

    def __init__(self, in_ch=3, dim=64, n_layers=4, n_scales=3):
        super().__init__()
        self.scales = nn.ModuleList(PatchDiscriminator(in_ch, dim, n_layers) for _ in range(n_scales))

    def forward(self, x):
        outs = []
        for i, d in enumerate(self.scales):
            if i:
                x = F.avg_pool2d(x, 3, stride=2, padding=1, count_include_pad=False)
            outs.append(d(x))
        return outs


class UpProjection(nn.Module):
    """2x up-projection: upsample, then a two-conv branch plus a one-conv shortcut."""

    def __init__(self, in_ch, out_ch, kernel=5):
        super().__init__()
        groups = min(8, out_ch)
        pad = kernel // 2
        self.branch = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, kernel, padding=pad), nn.GroupNorm(groups, out_ch), nn.ReLU(),
            nn.Conv2d(out_ch, out_ch, 3, padding=1), nn.GroupNorm(groups, out_ch),
        )
        self.shortcut = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, kernel, padding=pad), nn.GroupNorm(groups, out_ch))

    def forward(self, x):
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        return F.relu(self.branch(x) + self.shortcut(x))


class StructureMapDecoder(nn.Module):
    """Two up-projections back to input resolution, then a conv to one channel."""

    def __init__(self, in_ch=256, activation="softplus", kernel=5):
        super().__init__()
        if activation not in ("softplus", "identity"):
            raise InvalidConfigError(f"unknown structure-map activation {activation!r}")
        self.up1 = UpProjection(in_ch, in_ch // 2, kernel)
        self.up2 = UpProjection(in_ch // 2, in_ch // 4, kernel)
        self.out = nn.Conv2d(in_ch // 4, 1, 3, padding=1)
        self.activation = activation

    def forward(self, code):
        x = self.out(self.up2(self.up1(code)))
        return F.softplus(x) if self.activation == "softplus" else x


# -- objective ---------------------------------------------------------------

@dataclass
class TranslationLossBreakdown:
    recon_image_s: torch.Tensor
    recon_image_t: torch.Tensor
    recon_code_a_s: torch.Tensor
    recon_code_a_t: torch.Tensor
    recon_code_b_s: torch.Tensor
    recon_code_b_t: torch.Tensor
    adv_s: torch.Tensor
    adv_t: torch.Tensor
    total: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name).detach()) for f in fields(self)}


@dataclass(frozen=True)
class TranslationWeights:
    lambda1: float = 10.0  # image reconstruction
    lambda2: float = 1.0   # recon_code_b_t + recon_code_a_s
    lambda3: float = 1.0   # recon_code_b_s + recon_code_a_t
    gan_mode: str = "lsgan"

    def __post_init__(self):
        if self.gan_mode not in ("lsgan", "log"):
            raise InvalidConfigError(f"gan_mode must be 'lsgan' or 'log', got {self.gan_mode!r}")


def weighted_total(parts: dict, w: TranslationWeights):
    return (parts["adv_s"] + parts["adv_t"]
            + w.lambda1 * (parts["recon_image_s"] + parts["recon_image_t"])
            + w.lambda2 * (parts["recon_code_b_t"] + parts["recon_code_a_s"])
            + w.lambda3 * (parts["recon_code_b_s"] + parts["recon_code_a_t"]))


def _as_list(out):
    return out if isinstance(out, (list, tuple)) else [out]


def generator_adv(fake_out, real_out, gan_mode):
    """Adversarial term minimized by the generators.

    lsgan: sum over scales of mean((D(fake) - 1)^2).
    log:   sum over scales of mean(log(1 - D(fake))) + mean(log D(real)), with
           the discriminator emitting logits.
    """
    total = 0.0
    for i, f in enumerate(_as_list(fake_out)):
        if gan_mode == "lsgan":
            total = total + ((f - 1) ** 2).mean()
        else:
            r = _as_list(real_out)[i]
            total = total + F.logsigmoid(-f).mean() + F.logsigmoid(r).mean()
    return total


def discriminator_adv(fake_out, real_out, gan_mode):
    total = 0.0
    for f, r in zip(_as_list(fake_out), _as_list(real_out)):
        if gan_mode == "lsgan":
            total = total + (f ** 2).mean() + ((r - 1) ** 2).mean()
        else:
            total = total - F.logsigmoid(-f).mean() - F.logsigmoid(r).mean()
    return total


class STE(nn.Module):
    """Translation networks plus the structure-map decoder.

    Submodule names define checkpoint keys (``ste.encoder.*`` and so on), so
    they are part of the on-disk format.
    """

    def __init__(self, encoder, style_s, style_t, gen_s, gen_t, disc_s, disc_t, decoder_ds,
                 style_dim=8):
        super().__init__()
        self.encoder = encoder
        self.style_s = style_s
        self.style_t = style_t
        self.gen_s = gen_s
        self.gen_t = gen_t
        self.disc_s = disc_s
        self.disc_t = disc_t
        self.decoder_ds = decoder_ds
        self.style_dim = style_dim

    @classmethod
    def build(cls, dim=64, n_res=4, style_dim=8, mlp_dim=256, disc_dim=64, disc_layers=4,
              disc_scales=3, ms_activation="softplus", up_kernel=5):
        enc = StructureEncoder(3, dim, n_res)
        c = enc.out_channels

        def gen():
            return Generator(c, 3, style_dim, n_res, mlp_dim, up_kernel)

        def style():
            return StyleEncoder(3, dim, style_dim)

        def disc():
            return MultiScaleDiscriminator(3, disc_dim, disc_layers, disc_scales)

        return cls(enc, style(), style(), gen(), gen(), disc(), disc(),
                   StructureMapDecoder(c, ms_activation, up_kernel), style_dim)

    def encode_structure(self, image):
        return self.encoder(image)

    def encode_style(self, image, domain):
        return (self.style_s if _domain_key(domain) == "s" else self.style_t)(image)

    def sample_style(self, rng: torch.Generator | None, n: int = 1, dtype=None):
        return torch.randn(n, self.style_dim, generator=rng, dtype=dtype or torch.get_default_dtype())

    def decode_image(self, structure, style, domain):
        return (self.gen_s if _domain_key(domain) == "s" else self.gen_t)(structure, style)

    def decode_structure_map(self, structure):
        return self.decoder_ds(structure)

    def structure_map(self, image):
        return self.decode_structure_map(self.encode_structure(image))

    def generator_modules(self):
        return [self.encoder, self.style_s, self.style_t, self.gen_s, self.gen_t]

    def discriminator_modules(self):
        return [self.disc_s, self.disc_t]

    def _translate(self, x_s, x_t, rng):
        if len(x_s) == 0 or len(x_t) == 0:
            raise ValueError("translation_loss needs non-empty batches from both domains")
        dtype = x_s.dtype
        z_s = self.sample_style(rng, len(x_t), dtype)
        z_t = self.sample_style(rng, len(x_s), dtype)
        c_s, c_t = self.encoder(x_s), self.encoder(x_t)
        return c_s, c_t, z_s, z_t

    def translation_loss(self, x_s, x_t, rng=None,
                         weights: TranslationWeights = TranslationWeights()) -> TranslationLossBreakdown:
        """Generator-side objective for one pair of batches."""
        c_s, c_t, z_s, z_t = self._translate(x_s, x_t, rng)
        b_s, b_t = self.style_s(x_s), self.style_t(x_t)

        x_ss = self.gen_s(c_s, b_s)
        x_tt = self.gen_t(c_t, b_t)
        x_st = self.gen_t(c_s, z_t)
        x_ts = self.gen_s(c_t, z_s)

        parts = {
            "recon_image_s": (x_ss - x_s).abs().mean(),
            "recon_image_t": (x_tt - x_t).abs().mean(),
            "recon_code_a_s": (self.encoder(x_st) - c_s).abs().mean(),
            "recon_code_b_t": (self.style_t(x_st) - z_t).abs().mean(),
            "recon_code_a_t": (self.encoder(x_ts) - c_t).abs().mean(),
            "recon_code_b_s": (self.style_s(x_ts) - z_s).abs().mean(),
            "adv_t": generator_adv(self.disc_t(x_st), self.disc_t(x_t) if weights.gan_mode == "log" else None,
                                   weights.gan_mode),
            "adv_s": generator_adv(self.disc_s(x_ts), self.disc_s(x_s) if weights.gan_mode == "log" else None,
                                   weights.gan_mode),
        }
        for name, value in parts.items():
            if not torch.isfinite(value).all():
                raise TrainingDivergenceError(f"translation loss term {name} is not finite", term=name)
        return TranslationLossBreakdown(**parts, total=weighted_total(parts, weights))

    def discriminator_loss(self, x_s, x_t, rng=None, gan_mode="lsgan"):
        with torch.no_grad():
            c_s, c_t, z_s, z_t = self._translate(x_s, x_t, rng)
            x_st = self.gen_t(c_s, z_t)
            x_ts = self.gen_s(c_t, z_s)
        loss = (discriminator_adv(self.disc_t(x_st), self.disc_t(x_t), gan_mode)
                + discriminator_adv(self.disc_s(x_ts), self.disc_s(x_s), gan_mode))
        if not torch.isfinite(loss):
            raise TrainingDivergenceError("discriminator loss is not finite", term="disc")
        return loss
