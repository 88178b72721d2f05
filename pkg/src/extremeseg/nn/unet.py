"""3D U-Net with strided-conv downsampling, transposed-conv upsampling,
instance norm, leaky ReLU, and deep supervision heads.

Stage s carries base_features * 2^s channels. Downsampling into stage s uses
the plan's stride_schedule[s]; the decoder mirrors the encoder with
kernel==stride transposed convolutions and skip concatenation. Segmentation
heads sit on every supervised stage (all but the lowest two resolutions).
"""

from dataclasses import dataclass

import numpy as np

from ..planner import PipelinePlan
from . import ops
from .autodiff import Parameter, Tensor


@dataclass(frozen=True)
class UNetSpec:
    in_channels: int
    levels: int
    kernels: tuple           # per-stage conv kernel shapes
    strides: tuple           # per-stage downsampling strides; [0] == (1,1,1)
    base_features: int = 4
    num_classes: int = 2
    leaky_slope: float = 0.01
    norm_eps: float = 1e-5

    def __post_init__(self):
        if len(self.kernels) != self.levels or len(self.strides) != self.levels:
            raise ValueError("kernels/strides must have one entry per stage")
        if tuple(self.strides[0]) != (1, 1, 1):
            raise ValueError("stage 0 stride must be (1,1,1)")

    @property
    def features(self):
        return tuple(self.base_features * 2 ** s for s in range(self.levels))

    @property
    def supervised_stages(self):
        """All stages except the lowest two resolutions; stage 0 always."""
        return tuple(range(max(1, self.levels - 2)))

    @property
    def divisors(self):
        return tuple(int(np.prod([s[a] for s in self.strides]))
                     for a in range(3))

    def to_dict(self):
        return {
            "in_channels": self.in_channels,
            "levels": self.levels,
            "kernels": [list(k) for k in self.kernels],
            "strides": [list(s) for s in self.strides],
            "base_features": self.base_features,
            "num_classes": self.num_classes,
            "leaky_slope": self.leaky_slope,
            "norm_eps": self.norm_eps,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(in_channels=int(d["in_channels"]), levels=int(d["levels"]),
                   kernels=tuple(tuple(k) for k in d["kernels"]),
                   strides=tuple(tuple(s) for s in d["strides"]),
                   base_features=int(d["base_features"]),
                   num_classes=int(d["num_classes"]),
                   leaky_slope=float(d["leaky_slope"]),
                   norm_eps=float(d["norm_eps"]))


def spec_from_plan(plan: PipelinePlan) -> UNetSpec:
    return UNetSpec(in_channels=plan.in_channels, levels=plan.levels,
                    kernels=plan.kernel_schedule, strides=plan.stride_schedule,
                    base_features=plan.base_features)


class UNet3D:
    """Parameter container + forward graph builder.

    Parameter order (the serialization contract) is construction order:
    encoder stages 0..L-1 (conv w,b, norm gamma,beta twice per stage), then
    decoder stages L-2..0 (tconv w,b then two conv blocks), then heads for
    the supervised stages in increasing stage order.
    """

    def __init__(self, spec: UNetSpec, seed: int = 0, dtype=np.float32):
        self.spec = spec
        self.dtype = dtype
        self.params = {}
        rng = np.random.default_rng(seed)
        feats = spec.features
        for s in range(spec.levels):
            cin = spec.in_channels if s == 0 else feats[s - 1]
            self._add_conv_block(rng, f"enc{s}a", cin, feats[s], spec.kernels[s])
            self._add_conv_block(rng, f"enc{s}b", feats[s], feats[s],
                                 spec.kernels[s])
        for s in range(spec.levels - 2, -1, -1):
            self._add_tconv(rng, f"up{s}", feats[s + 1], feats[s],
                            spec.strides[s + 1])
            self._add_conv_block(rng, f"dec{s}a", feats[s] * 2, feats[s],
                                 spec.kernels[s])
            self._add_conv_block(rng, f"dec{s}b", feats[s], feats[s],
                                 spec.kernels[s])
        for s in spec.supervised_stages:
            self._add_head(rng, f"head{s}", feats[s], spec.num_classes)

    def _he(self, rng, shape, fan_in):
        sd = np.sqrt(2.0 / fan_in)
        return Parameter(rng.normal(0.0, sd, size=shape).astype(self.dtype))

    def _add_conv_block(self, rng, name, cin, cout, kernel):
        k = tuple(kernel)
        self.params[f"{name}.w"] = self._he(rng, (cout, cin, *k),
                                            cin * int(np.prod(k)))
        self.params[f"{name}.b"] = Parameter(np.zeros(cout, dtype=self.dtype))
        self.params[f"{name}.gamma"] = Parameter(np.ones(cout, dtype=self.dtype))
        self.params[f"{name}.beta"] = Parameter(np.zeros(cout, dtype=self.dtype))

    def _add_tconv(self, rng, name, cin, cout, stride):
        st = tuple(stride)
        self.params[f"{name}.w"] = self._he(rng, (cin, cout, *st), cin)
        self.params[f"{name}.b"] = Parameter(np.zeros(cout, dtype=self.dtype))

    def _add_head(self, rng, name, cin, nclass):
        self.params[f"{name}.w"] = self._he(rng, (nclass, cin, 1, 1, 1), cin)
        self.params[f"{name}.b"] = Parameter(np.zeros(nclass, dtype=self.dtype))

    def _block(self, x, name, stride=(1, 1, 1)):
        p = self.params
        y = ops.conv3d(x, p[f"{name}.w"], p[f"{name}.b"], stride)
        y = ops.instance_norm(y, p[f"{name}.gamma"], p[f"{name}.beta"],
                              eps=self.spec.norm_eps)
        return ops.leaky_relu(y, self.spec.leaky_slope)

    def forward(self, x):
        """x: (in_channels, X, Y, Z) ndarray with dims divisible by the spec
        divisors. Returns logits per supervised stage, full resolution first."""
        spec = self.spec
        if x.shape[0] != spec.in_channels:
            raise ValueError(f"expected {spec.in_channels} input channels, "
                             f"got {x.shape[0]}")
        for a in range(3):
            if x.shape[1 + a] % spec.divisors[a]:
                raise ValueError(
                    f"input dims {x.shape[1:]} not divisible by {spec.divisors}")
        t = Tensor(np.ascontiguousarray(x, dtype=self.dtype))
        skips = []
        for s in range(spec.levels):
            t = self._block(t, f"enc{s}a", stride=spec.strides[s])
            t = self._block(t, f"enc{s}b")
            skips.append(t)
        dec = {spec.levels - 1: t}
        t = skips[-1]
        for s in range(spec.levels - 2, -1, -1):
            p = self.params
            t = ops.tconv3d(t, p[f"up{s}.w"], p[f"up{s}.b"], spec.strides[s + 1])
            t = ops.concat(t, skips[s])
            t = self._block(t, f"dec{s}a")
            t = self._block(t, f"dec{s}b")
            dec[s] = t
        out = []
        for s in spec.supervised_stages:
            p = self.params
            out.append(ops.conv3d(dec[s], p[f"head{s}.w"], p[f"head{s}.b"]))
        return out

    def parameters(self):
        return list(self.params.values())

    def param_items(self):
        return list(self.params.items())

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_arrays(self):
        return {k: np.array(v.data, copy=True) for k, v in self.params.items()}

    def load_state_arrays(self, state):
        for k, v in self.params.items():
            arr = np.asarray(state[k], dtype=v.data.dtype)
            if arr.shape != v.data.shape:
                raise ValueError(f"shape mismatch for {k}")
            v.data = arr
