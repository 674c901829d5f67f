"""NVR and NVR+ networks built from the autodiff ops.

NVR: a voxel branch (strided 3D conv blocks, depth-to-channel projection,
2D conv blocks) and a light branch (two dense layers tiled over the latent
map) are concatenated and decoded to an image.

NVR+: the NVR decoder features at output resolution are summed with a
splat-image encoding and refined by a small U-Net.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..autodiff import (
    BatchNormState,
    ParameterStore,
    Tensor,
    add,
    batchnorm,
    concat,
    conv2d,
    conv3d,
    dense,
    relu,
    reshape_projection,
    sigmoid,
    tile,
    upsample_nearest,
)
from ..autodiff.tensor import DimensionError

# output heads start near zero so the first image is almost flat 0.5 gray;
# small but nonzero keeps gradients flowing to every layer from step one
HEAD_GAIN = 1e-3


@dataclass
class NvrConfig:
    voxel_dims: int = 32
    voxel_in_channels: int = 4
    voxel_channels: tuple[int, ...] = (8, 16, 32)
    projection_channels: int = 64
    conv2d_blocks: int = 2
    light_widths: tuple[int, int] = (32, 64)
    decoder_channels: tuple[int, ...] = (64, 32, 16, 16)
    image_dims: int = 64
    plus: bool = False
    splat_channels: int = 16
    splat_layers: int = 4
    unet_channels: tuple[int, int, int] = (48, 48, 64)
    light_offset: tuple[float, float, float] = (0.0, 2.75, 0.0)
    light_scale: tuple[float, float, float] = (1.5, 0.25, 1.5)
    seed: int = 0

    def __post_init__(self):
        for name in ("voxel_channels", "light_widths", "decoder_channels", "unet_channels",
                     "light_offset", "light_scale"):
            setattr(self, name, tuple(getattr(self, name)))
        if self.voxel_dims % (2 ** len(self.voxel_channels)):
            raise ValueError("voxel_dims must be divisible by 2**len(voxel_channels)")
        if self.latent_dims * 2 ** len(self.decoder_channels) != self.image_dims:
            raise ValueError(
                f"decoder cannot reach {self.image_dims}px from a {self.latent_dims}px latent "
                f"with {len(self.decoder_channels)} x2 upsamplings"
            )
        if self.plus and self.decoder_channels[-1] != self.splat_channels:
            raise ValueError("NVR+ needs decoder_channels[-1] == splat_channels for the feature sum")
        if self.plus and self.image_dims % 4:
            raise ValueError("NVR+ U-Net needs image_dims divisible by 4")

    @property
    def latent_dims(self) -> int:
        return self.voxel_dims // 2 ** len(self.voxel_channels)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str | dict) -> "NvrConfig":
        data = json.loads(text) if isinstance(text, str) else dict(text)
        return cls(**data)

    @classmethod
    def paper_scale(cls, plus: bool = True) -> "NvrConfig":
        return cls(
            voxel_dims=128, voxel_channels=(16, 32, 64, 64, 64), projection_channels=256,
            decoder_channels=(256, 128, 64, 32, 32, 16), image_dims=256, plus=plus,
        )


class NeuralVoxelRenderer:
    """Parameters, batchnorm buffers and the forward pass for NVR / NVR+."""

    def __init__(self, config: NvrConfig, dtype=np.float32):
        self.config = config
        self.store = ParameterStore(dtype)
        self.bn: dict[str, BatchNormState] = {}
        self.training = True
        self._rng = np.random.default_rng(config.seed)
        self._build()

    # ------------------------------------------------------------ parameters

    def _conv_params(self, name, shape, bias, gain=1.0):
        fan_in = int(np.prod(shape[:-1]))
        w = self._rng.standard_normal(shape) * np.sqrt(2.0 / fan_in) * gain
        self.store.add(f"{name}.w", w)
        if bias:
            self.store.add(f"{name}.b", np.zeros(shape[-1]))

    def _bn_params(self, name, channels):
        self.store.add(f"{name}.gamma", np.ones(channels))
        self.store.add(f"{name}.beta", np.zeros(channels))
        self.bn[name] = BatchNormState(channels, self.store.dtype)

    def _block_params(self, name, k, cin, cout, spatial=2):
        self._conv_params(name, (k,) * spatial + (cin, cout), bias=False)
        self._bn_params(f"{name}.bn", cout)

    def _build(self):
        c = self.config
        cin = c.voxel_in_channels
        for i, cout in enumerate(c.voxel_channels):
            self._block_params(f"voxel{i}", 3, cin, cout, spatial=3)
            cin = cout
        depth = c.latent_dims
        self._block_params("project", 1, depth * cin, c.projection_channels)
        for i in range(c.conv2d_blocks):
            self._block_params(f"enc2d{i}", 3, c.projection_channels, c.projection_channels)
        l1, l2 = c.light_widths
        self._dense_params("light0", 3, l1)
        self._dense_params("light1", l1, l2)
        cin = c.projection_channels + l2
        for i, cout in enumerate(c.decoder_channels):
            self._block_params(f"dec{i}", 3, cin, cout)
            cin = cout
        if not c.plus:
            self._conv_params("head", (3, 3, cin, 3), bias=True, gain=HEAD_GAIN)
            return
        s = c.splat_channels
        sin = 3
        for i in range(c.splat_layers - 1):
            self._block_params(f"splat{i}", 3, sin, s)
            sin = s
        self._conv_params(f"splat{c.splat_layers - 1}", (3, 3, sin, s), bias=True)
        u1, u2, u3 = c.unet_channels
        self._block_params("unet_e1", 3, s, u1)
        self._block_params("unet_e2", 3, u1, u2)
        self._block_params("unet_e3", 3, u2, u3)
        self._block_params("unet_mid", 3, u3, u3)
        self._block_params("unet_d2", 3, u3 + u2, u2)
        self._block_params("unet_d1", 3, u2 + u1, u1)
        self._conv_params("unet_out", (3, 3, u1, 3), bias=True, gain=HEAD_GAIN)

    def _dense_params(self, name, fin, fout):
        self.store.add(f"{name}.w", self._rng.standard_normal((fin, fout)) * np.sqrt(2.0 / fin))
        self.store.add(f"{name}.b", np.zeros(fout))

    # ------------------------------------------------------------ forward

    def _p(self, name):
        return self.store[name]

    def _block(self, name, x, stride=1, spatial=2):
        conv = conv3d if spatial == 3 else conv2d
        k = self._p(f"{name}.w").shape[0]
        y = conv(x, self._p(f"{name}.w"), None, stride=stride, padding=k // 2)
        y = batchnorm(y, self._p(f"{name}.bn.gamma"), self._p(f"{name}.bn.beta"),
                      self.bn[f"{name}.bn"], training=self.training)
        return relu(y)

    def _conv(self, name, x):
        return conv2d(x, self._p(f"{name}.w"), self._p(f"{name}.b"), padding=1)

    def nvr_features(self, voxels, light) -> Tensor:
        """Decoder features at output resolution, (N, H, W, decoder_channels[-1])."""
        c = self.config
        v = voxels if isinstance(voxels, Tensor) else Tensor(np.asarray(voxels, self.store.dtype))
        expected = (c.voxel_dims,) * 3 + (c.voxel_in_channels,)
        if v.ndim != 5 or v.shape[1:] != expected:
            raise DimensionError(f"voxels must be (N, {', '.join(map(str, expected))}), got {v.shape}")
        n = v.shape[0]
        lt = np.asarray(light, dtype=np.float64).reshape(n, 3)
        lt = (lt - np.asarray(c.light_offset)) / np.asarray(c.light_scale)

        x = v
        for i in range(len(c.voxel_channels)):
            x = self._block(f"voxel{i}", x, stride=2, spatial=3)
        x = reshape_projection(x)
        x = self._block("project", x)
        for i in range(c.conv2d_blocks):
            x = self._block(f"enc2d{i}", x)

        h = relu(dense(Tensor(lt.astype(self.store.dtype)), self._p("light0.w"), self._p("light0.b")))
        h = relu(dense(h, self._p("light1.w"), self._p("light1.b")))
        x = concat([x, tile(h, x.shape[1:3])], axis=-1)

        for i in range(len(c.decoder_channels)):
            x = self._block(f"dec{i}", upsample_nearest(x, 2))
        return x

    def splat_features(self, splat) -> Tensor:
        c = self.config
        s = splat if isinstance(splat, Tensor) else Tensor(np.asarray(splat, self.store.dtype))
        if s.shape[1:] != (c.image_dims, c.image_dims, 3):
            raise DimensionError(f"splat image must be (N, {c.image_dims}, {c.image_dims}, 3), got {s.shape}")
        for i in range(c.splat_layers - 1):
            s = self._block(f"splat{i}", s)
        return self._conv(f"splat{c.splat_layers - 1}", s)

    def forward(self, voxels, light, splat=None, zero_splat: bool = False) -> Tensor:
        feats = self.nvr_features(voxels, light)
        if not self.config.plus:
            return sigmoid(self._conv("head", feats))
        if splat is None:
            raise ValueError("NVR+ needs the splat image")
        sf = self.splat_features(splat)
        if zero_splat:
            sf = Tensor(np.zeros(sf.shape, dtype=sf.dtype))
        x = add(feats, sf)
        e1 = self._block("unet_e1", x)
        e2 = self._block("unet_e2", e1, stride=2)
        e3 = self._block("unet_e3", e2, stride=2)
        m = self._block("unet_mid", e3)
        d2 = self._block("unet_d2", concat([upsample_nearest(m, 2), e2]))
        d1 = self._block("unet_d1", concat([upsample_nearest(d2, 2), e1]))
        return sigmoid(self._conv("unet_out", d1))

    __call__ = forward

    def predict(self, voxels, light, splat=None, batch_size: int = 16) -> np.ndarray:
        """Eval-mode inference without building a graph for the caller."""
        was = self.training
        self.training = False
        try:
            outs = []
            for lo in range(0, len(voxels), batch_size):
                sl = slice(lo, lo + batch_size)
                s = None if splat is None else splat[sl]
                outs.append(self.forward(voxels[sl], light[sl], s).data)
            return np.concatenate(outs, axis=0)
        finally:
            self.training = was

    # ------------------------------------------------------------ state

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = dict(self.store.state_arrays())
        for name, st in self.bn.items():
            arrays[f"{name}.running_mean"] = st.mean
            arrays[f"{name}.running_var"] = st.var
        return arrays

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.store.load_arrays(arrays)
        for name, st in self.bn.items():
            st.mean = np.asarray(arrays[f"{name}.running_mean"], dtype=self.store.dtype).copy()
            st.var = np.asarray(arrays[f"{name}.running_var"], dtype=self.store.dtype).copy()

    def save(self, path) -> None:
        from ..autodiff import save_checkpoint

        save_checkpoint(path, self.state_arrays(), {"config": json.loads(self.config.to_json())})

    @classmethod
    def load(cls, path) -> "NeuralVoxelRenderer":
        from ..autodiff import load_checkpoint

        arrays, meta = load_checkpoint(path)
        model = cls(NvrConfig.from_json(meta["config"]))
        model.load_state_arrays(arrays)
        return model


def nvr_forward(model: NeuralVoxelRenderer, voxels, light) -> Tensor:
    return model.forward(voxels, light)


def nvr_plus_forward(model: NeuralVoxelRenderer, voxels, light, splat) -> Tensor:
    if not model.config.plus:
        raise ValueError("model was configured as plain NVR")
    return model.forward(voxels, light, splat)
