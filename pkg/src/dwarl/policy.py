"""Convolutional actor-critic over the sorted observation block, plus checkpoint I/O."""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .dynamics import RobotLimits, VelocityPair
from .observation import ObservationBlock, normalize

CHECKPOINT_MAGIC = b"DWARLCKP"
CHECKPOINT_VERSION = 1

DISCRETE = "discrete"
CONTINUOUS = "continuous"


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class PolicySpec:
    actions: int              # k^2
    n: int
    channels: int = 4
    conv: tuple[int, ...] = (32, 32, 64, 64, 64)
    fc: tuple[int, ...] = (256, 128)
    kind: str = DISCRETE

    def __post_init__(self):
        if self.kind not in (DISCRETE, CONTINUOUS):
            raise ValueError(f"unknown policy kind {self.kind!r}")

    @property
    def k(self) -> int:
        return math.isqrt(self.actions)

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.channels, self.actions, self.n)

    @classmethod
    def from_dict(cls, d: dict) -> "PolicySpec":
        return cls(actions=int(d["actions"]), n=int(d["n"]), channels=int(d["channels"]),
                   conv=tuple(d["conv"]), fc=tuple(d["fc"]), kind=d.get("kind", DISCRETE))


class PolicyNet(nn.Module):
    """Conv stages (3x3, stride 1) then fully connected stages.

    The last linear layer emits ``actions`` logits plus one state value for
    the discrete policy; the continuous variant emits a 2-D velocity mean
    (tanh-squashed to the caps) plus the value, with a learned log-std.
    """

    def __init__(self, spec: PolicySpec):
        super().__init__()
        self.spec = spec
        layers: list[nn.Module] = []
        in_ch = spec.channels
        for width in spec.conv:
            layers += [nn.Conv2d(in_ch, width, kernel_size=3, stride=1, padding=1), nn.ReLU()]
            in_ch = width
        self.conv = nn.Sequential(*layers)
        flat = in_ch * spec.actions * spec.n
        fcs: list[nn.Module] = []
        for width in spec.fc:
            fcs += [nn.Linear(flat, width), nn.ReLU()]
            flat = width
        self.fc = nn.Sequential(*fcs)
        out = spec.actions if spec.kind == DISCRETE else 2
        self.head = nn.Linear(flat, out + 1)
        if spec.kind == CONTINUOUS:
            self.log_std = nn.Parameter(torch.full((2,), -0.5))
        with torch.no_grad():
            self.head.weight.mul_(0.01)
            self.head.bias.zero_()

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.fc(torch.flatten(self.conv(x), 1))
        out = self.head(h)
        return out[:, :-1], out[:, -1]

    def distribution(self, x: torch.Tensor):
        head, value = self(x)
        if self.spec.kind == DISCRETE:
            return torch.distributions.Categorical(logits=head, validate_args=False), value
        std = torch.exp(self.log_std).expand_as(head)
        # non-finite outputs surface as a non-finite loss in the trainer's divergence guard
        return torch.distributions.Normal(head, std, validate_args=False), value


def build_policy(spec: PolicySpec, seed: int = 0, dtype: torch.dtype = torch.float32) -> PolicyNet:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        net = PolicyNet(spec)
    return net.to(dtype)


def _check_block(policy: PolicyNet, block: ObservationBlock) -> None:
    expected = (policy.spec.actions, policy.spec.n, policy.spec.channels)
    if tuple(block.data.shape) != expected:
        raise ValueError(f"observation shape {tuple(block.data.shape)} does not match policy input {expected}")


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(probs)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(probs) - 1))


@torch.no_grad()
def act(policy: PolicyNet, block: ObservationBlock, limits: RobotLimits, mode: str = "sample",
        rng: np.random.Generator | None = None) -> tuple[int, float, float]:
    """Pick an action index from the sorted action map.

    Greedy mode returns the first maximal logit; sample mode draws from the
    categorical distribution with ``rng``.
    """
    _check_block(policy, block)
    x = torch.as_tensor(normalize(block, limits)[None], dtype=next(policy.parameters()).dtype)
    logits, value = policy(x)
    logp_all = torch.log_softmax(logits[0].double(), dim=0).numpy()
    if mode == "greedy":
        index = int(np.argmax(logits[0].numpy()))
    elif mode == "sample":
        index = sample_categorical(np.exp(logp_all), rng or np.random.default_rng())
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return index, float(logp_all[index]), float(value[0])


def squash(raw: np.ndarray, limits: RobotLimits) -> VelocityPair:
    """Map an unbounded 2-D output onto the absolute velocity caps."""
    t = np.tanh(np.asarray(raw, dtype=float))
    v = limits.v_min + 0.5 * (t[0] + 1.0) * (limits.v_max - limits.v_min)
    w = limits.w_min + 0.5 * (t[1] + 1.0) * (limits.w_max - limits.w_min)
    return VelocityPair(float(v), float(w))


@torch.no_grad()
def act_continuous(policy: PolicyNet, block: ObservationBlock, limits: RobotLimits, mode: str = "sample",
                   rng: np.random.Generator | None = None) -> tuple[np.ndarray, float, float]:
    """Raw 2-D action, its log-probability and the value estimate."""
    _check_block(policy, block)
    x = torch.as_tensor(normalize(block, limits)[None], dtype=next(policy.parameters()).dtype)
    mean, value = policy(x)
    mean = mean[0].double().numpy()
    std = np.exp(policy.log_std.detach().double().numpy())
    if mode == "greedy":
        raw = mean
    elif mode == "sample":
        raw = mean + std * (rng or np.random.default_rng()).standard_normal(2)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    logp = float(np.sum(-0.5 * ((raw - mean) / std) ** 2 - np.log(std) - 0.5 * math.log(2 * math.pi)))
    return raw, logp, float(value[0])


# --------------------------------------------------------------------------- checkpoints

_DTYPES = {torch.float32: (0, np.float32), torch.float64: (1, np.float64)}
_CODES = {code: np_t for code, np_t in _DTYPES.values()}


def save_checkpoint(policy: PolicyNet, path: str | Path, extra: dict | None = None) -> None:
    """Magic, version, JSON header (spec + extra), named parameter blobs, CRC32 trailer."""
    header = json.dumps({"spec": asdict(policy.spec), "extra": extra or {}}, sort_keys=True).encode()
    parts = [CHECKPOINT_MAGIC, struct.pack("<HI", CHECKPOINT_VERSION, len(header)), header]
    state = policy.state_dict()
    parts.append(struct.pack("<I", len(state)))
    for name, tensor in state.items():
        code, np_t = _DTYPES[tensor.dtype]
        arr = tensor.detach().cpu().numpy().astype(np_t, copy=False)
        raw_name = name.encode()
        parts.append(struct.pack("<H", len(raw_name)) + raw_name)
        parts.append(struct.pack("<BB", code, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    body = b"".join(parts)
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def read_checkpoint(path: str | Path) -> tuple[PolicySpec, dict[str, np.ndarray], dict]:
    blob = Path(path).read_bytes()
    if len(blob) < len(CHECKPOINT_MAGIC) + 10 or not blob.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path}: not a policy checkpoint")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError(f"{path}: checksum mismatch (truncated or corrupted)")
    off = len(CHECKPOINT_MAGIC)
    version, hlen = struct.unpack_from("<HI", body, off)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    off += 6
    header = json.loads(body[off:off + hlen])
    off += hlen
    (count,) = struct.unpack_from("<I", body, off)
    off += 4
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", body, off)
        off += 2
        name = body[off:off + nlen].decode()
        off += nlen
        code, ndim = struct.unpack_from("<BB", body, off)
        off += 2
        shape = struct.unpack_from(f"<{ndim}I", body, off)
        off += 4 * ndim
        np_t = _CODES[code]
        size = int(np.prod(shape, dtype=np.int64)) * np.dtype(np_t).itemsize
        params[name] = np.frombuffer(body[off:off + size], dtype=np_t).reshape(shape).copy()
        off += size
    if off != len(body):
        raise CheckpointError(f"{path}: trailing bytes after parameter blobs")
    return PolicySpec.from_dict(header["spec"]), params, header.get("extra", {})


def load_checkpoint(path: str | Path, expect: PolicySpec | None = None) -> tuple[PolicyNet, dict]:
    """Rebuild the network; ``expect`` guards against k/n/channel mismatches."""
    spec, params, extra = read_checkpoint(path)
    if expect is not None:
        for name in ("actions", "n", "channels", "kind"):
            if getattr(spec, name) != getattr(expect, name):
                raise CheckpointError(f"{path}: checkpoint {name}={getattr(spec, name)} "
                                      f"but configuration expects {getattr(expect, name)}")
    dtype = torch.float64 if any(p.dtype == np.float64 for p in params.values()) else torch.float32
    net = PolicyNet(spec).to(dtype)
    state = net.state_dict()
    if set(state) != set(params):
        raise CheckpointError(f"{path}: parameter names do not match the architecture")
    for name, arr in params.items():
        if tuple(state[name].shape) != arr.shape:
            raise CheckpointError(f"{path}: shape mismatch for {name}")
    net.load_state_dict({k: torch.from_numpy(v) for k, v in params.items()})
    return net, extra
