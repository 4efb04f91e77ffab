"""
生成分支
自编码器（AE）与变分自编码器（VAE），分别产生重建特征 I_A 与 I_B
"""

import logging
from typing import List, Optional, Tuple

import numpy as np

from models.config import ModelConfig
from tensorcore import ops
from tensorcore.nn import BatchNorm2d, Conv2d, ConvTranspose2d, Linear, Module, ModuleList
from tensorcore.tensor import Tensor, as_tensor
from utils.errors import ShapeMismatchError

logger = logging.getLogger(__name__)


def _expect(x: Tensor, shape: Tuple, what: str) -> None:
    if tuple(x.shape[1:]) != tuple(shape):
        raise ShapeMismatchError(f"{what}: 期望 (B, {', '.join(map(str, shape))})，实际 {x.shape}")


class EncoderStage(Module):
    """AE 编码阶段：conv k3 s1 p1 -> ReLU -> maxpool 2/2"""

    def __init__(self, cin, cout, rng):
        super().__init__()
        self.conv = Conv2d(cin, cout, 3, stride=1, padding=1, rng=rng)

    def forward(self, x):
        return ops.maxpool2d(ops.relu(self.conv(x)), 2, 2)


class Autoencoder(Module):
    """
    AE：五个编码阶段把 S×S 输入压到 256×S/32×S/32，
    五个 k2 s2 转置卷积还原到 3×S×S，最后一层用 sigmoid
    """

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        ch = config.ae_channels
        self.image_size = config.image_size
        self.latent_shape = (ch[-1], config.ae_latent_size, config.ae_latent_size)
        self.enc = ModuleList(EncoderStage(ch[i], ch[i + 1], rng) for i in range(len(ch) - 1))
        rev = ch[::-1]
        self.dec = ModuleList(ConvTranspose2d(rev[i], rev[i + 1], 2, stride=2, rng=rng)
                              for i in range(len(rev) - 1))

    def encode(self, image: Tensor) -> Tensor:
        _expect(image, (3, self.image_size, self.image_size), "ae_encode")
        x = image
        for stage in self.enc:
            x = stage(x)
        return x

    def decode(self, latent: Tensor) -> Tensor:
        _expect(latent, self.latent_shape, "ae_decode")
        x = latent
        last = len(self.dec) - 1
        for i, deconv in enumerate(self.dec):
            x = deconv(x)
            x = ops.sigmoid(x) if i == last else ops.relu(x)
        return x

    def forward(self, image: Tensor) -> Tensor:
        return self.decode(self.encode(image))


class VAEEncoderStage(Module):
    """VAE 编码阶段：conv k3 s2 p1 -> BN -> LeakyReLU"""

    def __init__(self, cin, cout, slope, rng):
        super().__init__()
        self.slope = slope
        self.conv = Conv2d(cin, cout, 3, stride=2, padding=1, rng=rng)
        self.bn = BatchNorm2d(cout)

    def forward(self, x):
        return ops.leaky_relu(self.bn(self.conv(x)), self.slope)


class VariationalAutoencoder(Module):
    """
    VAE：四个步长 2 的卷积阶段，展平后由两个线性头给出 mu/logvar，
    z 经线性层后重排为 C×g×g，再用四个转置卷积重建到 3×S/2×S/2
    """

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        enc, dec = config.vae_enc_channels, config.vae_dec_channels
        self.image_size = config.image_size
        self.slope = config.leaky_slope
        self.latent_dim = config.vae_latent_dim
        self.grid = config.vae_latent_grid
        self.dec_start = dec[0]

        self.enc = ModuleList(VAEEncoderStage(enc[i], enc[i + 1], self.slope, rng)
                              for i in range(len(enc) - 1))
        self.mu = Linear(config.vae_flat_dim, self.latent_dim, rng=rng)
        self.logvar = Linear(config.vae_flat_dim, self.latent_dim, rng=rng)
        self.dec_linear = Linear(self.latent_dim, self.latent_dim, rng=rng) if config.vae_dec_linear else None
        self.dec = ModuleList(ConvTranspose2d(dec[i], dec[i + 1], 2, stride=2, rng=rng)
                              for i in range(len(dec) - 1))

    def encode(self, image: Tensor) -> Tuple[Tensor, Tensor]:
        _expect(image, (3, self.image_size, self.image_size), "vae_encode")
        x = image
        for stage in self.enc:
            x = stage(x)
        flat = x.reshape(x.shape[0], -1)
        return self.mu(flat), self.logvar(flat)

    def decode(self, z: Tensor, trace: Optional[List[Tuple[int, ...]]] = None) -> Tensor:
        """
        参数:
            z (Tensor): B×latent_dim
            trace (list): 可选，逐阶段记录输出形状
        """
        _expect(z, (self.latent_dim,), "vae_decode")
        x = self.dec_linear(z) if self.dec_linear is not None else z
        x = x.reshape(z.shape[0], self.dec_start, self.grid, self.grid)
        if trace is not None:
            trace.append(x.shape)
        last = len(self.dec) - 1
        for i, deconv in enumerate(self.dec):
            x = deconv(x)
            x = ops.sigmoid(x) if i == last else ops.leaky_relu(x, self.slope)
            if trace is not None:
                trace.append(x.shape)
        return x


def reparameterize(mu: Tensor, logvar: Tensor, rng: Optional[np.random.Generator] = None,
                   eps: Optional[np.ndarray] = None) -> Tensor:
    """
    z = mu + exp(0.5 * logvar) * eps

    参数:
        rng: 用于抽取 eps ~ N(0, I)；rng 与 eps 都为 None 时 eps = 0（推理）
        eps: 直接指定噪声
    """
    if mu.shape != logvar.shape:
        raise ShapeMismatchError(f"reparameterize: mu {mu.shape} 与 logvar {logvar.shape} 不一致")
    if eps is None:
        if rng is None:
            return mu + logvar * 0.0
        eps = rng.standard_normal(mu.shape)
    noise = as_tensor(np.asarray(eps, dtype=mu.dtype), like=mu)
    return mu + ops.exp(logvar * 0.5) * noise


def kl_divergence(mu: Tensor, logvar: Tensor) -> Tensor:
    """批均值的 KL(N(mu, sigma^2) || N(0, I))"""
    per = (logvar + 1.0) - mu * mu - ops.exp(logvar)
    return ops.sum(per) * (-0.5 / mu.shape[0])


# 函数式入口
def ae_encode(image: Tensor, ae: Autoencoder) -> Tensor:
    return ae.encode(image)


def ae_decode(latent: Tensor, ae: Autoencoder) -> Tensor:
    return ae.decode(latent)


def vae_encode(image: Tensor, vae: VariationalAutoencoder) -> Tuple[Tensor, Tensor]:
    return vae.encode(image)


def vae_decode(z: Tensor, vae: VariationalAutoencoder) -> Tensor:
    return vae.decode(z)
