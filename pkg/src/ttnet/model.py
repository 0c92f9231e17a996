"""TTnet architecture assembly: preprocessing layer, stacked LTT blocks
(expanding-autoencoder style: conv -> BN -> SeLU -> 1x1 conv -> BN ->
binarize), final linear layer with scalar-statistics batch norm and integer
folding, permutation augmentation, training, and model persistence.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as tnn
import torch.nn.functional as F

from .nn import dual_step, pgd_attack, selu, ste_binarize

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
FOLD_SCALE = 100


def patch_size(stages: list[tuple[int, int]]) -> int:
    """Receptive field of a stack of (kernel, stride) conv stages.

    Composed from the innermost (last) stage backward: p = p*s + (ker - s).
    """
    if not stages:
        raise ValueError("empty stage list")
    p = 1
    for ker, s in reversed(stages):
        p = p * s + (ker - s)
    return p


def _pair(v):
    return tuple(v) if isinstance(v, (tuple, list)) else (v, v)


@dataclass
class LttBlockSpec:
    dims: int = 1
    in_channels: int = 1
    hidden_channels: int = 10  # first conv filters
    out_channels: int = 10     # amplification (1x1) conv filters
    kernel: int | tuple[int, int] = 3
    stride: int | tuple[int, int] = 1
    groups: int = 1
    noise_t: float = 0.0       # dual-step half-width; 0 = plain STE

    @property
    def tau(self) -> float:
        return self.out_channels / self.hidden_channels

    def kernel_elems(self) -> int:
        k = self.kernel
        return k[0] * k[1] if self.dims == 2 else k

    def fan_in(self) -> int:
        return self.kernel_elems() * self.in_channels // self.groups

    def validate(self, name: str = "block") -> None:
        if self.in_channels % self.groups:
            raise ValueError(f"{name}: in_channels {self.in_channels} not "
                             f"divisible by groups {self.groups}")
        if self.hidden_channels % self.groups or self.out_channels % self.groups:
            raise ValueError(f"{name}: channel counts must be divisible by "
                             f"groups {self.groups}")
        n = self.fan_in()
        if n > 16:
            raise ValueError(f"{name}: fan-in {n} exceeds 16 "
                             f"(kernel {self.kernel} x {self.in_channels} "
                             f"channels / {self.groups} groups)")


@dataclass
class PreprocessSpec:
    # s_q = None skips quantization (already-binary tabular inputs)
    s_q: float | None = None
    features: int = 0          # channels for the input batch norm
    enabled: bool = True       # disabled = inputs pass through untouched


@dataclass
class FinalLayerSpec:
    in_features: int
    classes: int
    precision: str = "float"   # "float" | "4bit" | "1bit"


class LttBlock(tnn.Module):
    def __init__(self, spec: LttBlockSpec):
        super().__init__()
        spec.validate()
        self.spec = spec
        conv = tnn.Conv1d if spec.dims == 1 else tnn.Conv2d
        self.conv1 = conv(spec.in_channels, spec.hidden_channels,
                          spec.kernel, stride=spec.stride, padding=0,
                          groups=spec.groups)
        self.bn1 = (tnn.BatchNorm1d if spec.dims == 1 else tnn.BatchNorm2d)(
            spec.hidden_channels, eps=BN_EPS, momentum=BN_MOMENTUM)
        # the 1x1 amplification conv keeps the same grouping; otherwise an
        # output filter would read every input group and the fan-in bound
        # (and per-filter tabulation) would not hold
        self.conv2 = conv(spec.hidden_channels, spec.out_channels, 1,
                          groups=spec.groups)
        self.bn2 = (tnn.BatchNorm1d if spec.dims == 1 else tnn.BatchNorm2d)(
            spec.out_channels, eps=BN_EPS, momentum=BN_MOMENTUM)

    def pre_activation(self, x: torch.Tensor) -> torch.Tensor:
        return self.bn2(self.conv2(selu(self.bn1(self.conv1(x)))))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        z = self.pre_activation(x)
        return dual_step(z, self.spec.noise_t, training=self.training)


class _ScalarBn(tnn.Module):
    """Final-layer batch norm with whole-tensor scalar statistics and a
    scalar scale, so folding into the linear weights stays exact."""

    def __init__(self, classes: int):
        super().__init__()
        self.gamma = tnn.Parameter(torch.ones(1))
        self.beta = tnn.Parameter(torch.zeros(classes))
        self.register_buffer("running_mean", torch.zeros(1))
        self.register_buffer("running_var", torch.ones(1))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.training:
            mean, var = x.mean(), x.var(unbiased=False)
            with torch.no_grad():
                self.running_mean.mul_(1 - BN_MOMENTUM).add_(BN_MOMENTUM * mean)
                self.running_var.mul_(1 - BN_MOMENTUM).add_(BN_MOMENTUM * var)
        else:
            mean, var = self.running_mean, self.running_var
        return self.gamma * (x - mean) / torch.sqrt(var + BN_EPS) + self.beta


def _fake_quant(w: torch.Tensor, bits: int) -> torch.Tensor:
    # symmetric uniform quantizer with an STE (detach trick)
    levels = 2 ** (bits - 1) - 1 if bits > 1 else 1
    scale = w.detach().abs().max().clamp(min=1e-8) / levels
    q = (w / scale).round().clamp(-levels, levels) * scale
    return w + (q - w).detach()


class TtnetModel(tnn.Module):
    def __init__(self, preprocess: PreprocessSpec,
                 blocks: list[LttBlockSpec], final: FinalLayerSpec,
                 feature_names: list[str] | None = None):
        super().__init__()
        self.preprocess_spec = preprocess
        self.block_specs = blocks
        self.final_spec = final
        self.feature_names = feature_names
        if preprocess.enabled:
            bn_cls = tnn.BatchNorm1d if blocks[0].dims == 1 else tnn.BatchNorm2d
            self.pre_bn = bn_cls(preprocess.features, eps=BN_EPS,
                                 momentum=BN_MOMENTUM)
        self.blocks = tnn.ModuleList(LttBlock(s) for s in blocks)
        self.linear = tnn.Linear(final.in_features, final.classes)
        tnn.init.normal_(self.linear.weight, std=0.01)
        tnn.init.zeros_(self.linear.bias)
        self.final_bn = _ScalarBn(final.classes)

    # -- stages ------------------------------------------------------------

    def quantize(self, x: torch.Tensor) -> torch.Tensor:
        sq = self.preprocess_spec.s_q
        if sq is None:
            return x
        q = torch.floor(x / sq) * sq
        # STE: floor has zero gradient and would cut PGD off from the input
        return x + (q - x).detach()

    def binarize_input(self, x: torch.Tensor) -> torch.Tensor:
        if not self.preprocess_spec.enabled:
            return x
        return ste_binarize(self.pre_bn(self.quantize(x)))

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Binary feature vector V feeding the final linear layer."""
        h = self.binarize_input(x)
        for blk in self.blocks:
            h = blk(h)
        return h.flatten(1)

    def logits_from_features(self, v: torch.Tensor) -> torch.Tensor:
        w = self.linear.weight
        if self.final_spec.precision == "4bit":
            w = _fake_quant(w, 4)
        elif self.final_spec.precision == "1bit":
            w = _fake_quant(w, 1)
        return self.final_bn(F.linear(v, w, self.linear.bias))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.logits_from_features(self.features(x))

    def predict(self, x: torch.Tensor) -> torch.Tensor:
        """Eval-mode class prediction through the folded integer head.

        The integer head is the model's canonical classifier: the compiled
        lookup-table engine uses the same w~/b~, so predictions agree
        exactly (floats would disagree on rounding-level logit ties)."""
        self.eval()
        w_t, b_t = fold_final_layer(self)
        with torch.no_grad():
            v = self.features(x).numpy().astype(np.int64)
        logits = v @ w_t.T + b_t
        return torch.from_numpy(logits.argmax(1))


# ---------------------------------------------------------------------------
# final-layer folding


def fold_final_layer(model: TtnetModel):
    """Integer reparameterization of linear + scalar-stat batch norm.

    w~[k,i] = floor(100 * gamma * w[k,i] / sqrt(var + eps))
    b~[i]   = floor(100 * (gamma * (b[i] - mean) / sqrt(var + eps) + beta[i]))

    Returns (w_tilde [classes, features] int64, b_tilde [classes] int64).
    """
    bn = model.final_bn
    var = float(bn.running_var)
    if var <= 0:
        raise ValueError("final BN variance is zero; cannot fold")
    denom = math.sqrt(var + BN_EPS)
    gamma = float(bn.gamma.detach())
    w = model.linear.weight.detach()
    if model.final_spec.precision == "4bit":
        w = _fake_quant(w, 4)
    elif model.final_spec.precision == "1bit":
        w = _fake_quant(w, 1)
    w = w.numpy().astype(np.float64)
    b = model.linear.bias.detach().numpy().astype(np.float64)
    beta = bn.beta.detach().numpy().astype(np.float64)
    mean = float(bn.running_mean)
    w_tilde = np.floor(FOLD_SCALE * gamma * w / denom).astype(np.int64)
    b_tilde = np.floor(FOLD_SCALE * (gamma * (b - mean) / denom + beta)
                       ).astype(np.int64)
    return w_tilde, b_tilde


# ---------------------------------------------------------------------------
# permutation augmentation


def permute_augment(x: np.ndarray, names: list[str], p: int,
                    rng: np.random.Generator):
    """Concatenate P randomly permuted copies of the feature block.

    Output has (P+1) * F features; names get a #k suffix per copy."""
    if p == 0:
        return x, list(names)
    blocks = [x]
    out_names = list(names)
    for k in range(1, p + 1):
        perm = rng.permutation(x.shape[1])
        blocks.append(x[:, perm])
        out_names += [f"{names[j]}#{k}" for j in perm]
    return np.concatenate(blocks, axis=1), out_names


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    lr: float = 0.005
    epochs: int = 10
    batch_size: int = 128
    seed: int = 0
    # robust training (0 disables)
    pgd_eps: float = 0.0
    pgd_eps_ramp_epochs: int = 50
    pgd_steps: int = 10
    pgd_steps_ramp_epochs: int = 23
    pgd_step_size: float = 0.02


def recompute_bn_stats(model: TtnetModel, x: torch.Tensor,
                       batch_size: int = 512) -> None:
    """Replace running BN statistics with exact whole-training-set stats.

    Updating one BN changes every downstream activation, so the layers are
    recomputed in network order, one full pass each.
    """
    model.eval()
    bns = [m for m in model.modules()
           if isinstance(m, (tnn.BatchNorm1d, tnn.BatchNorm2d))]

    def whole_set_input_stats(target):
        s = sq = 0.0
        cnt = 0

        def hook(mod, inp, out):
            nonlocal s, sq, cnt
            v = inp[0].detach()
            dims = [0] + list(range(2, v.dim()))
            s = s + v.sum(dim=dims)
            sq = sq + (v * v).sum(dim=dims)
            cnt += v.numel() // v.shape[1]

        h = target.register_forward_hook(hook)
        with torch.no_grad():
            for i in range(0, len(x), batch_size):
                model.features(x[i:i + batch_size])
        h.remove()
        mean = s / cnt
        return mean, (sq / cnt - mean * mean).clamp(min=0)

    for m in bns:
        mean, var = whole_set_input_stats(m)
        m.running_mean.copy_(mean)
        m.running_var.copy_(var)

    fin_sum = fin_sq = 0.0
    fin_cnt = 0
    with torch.no_grad():
        for i in range(0, len(x), batch_size):
            v = model.features(x[i:i + batch_size])
            w = model.linear.weight
            if model.final_spec.precision != "float":
                w = _fake_quant(w, 4 if model.final_spec.precision == "4bit" else 1)
            z = F.linear(v, w, model.linear.bias)
            fin_sum += float(z.sum())
            fin_sq += float((z * z).sum())
            fin_cnt += z.numel()
    mean = fin_sum / fin_cnt
    model.final_bn.running_mean.fill_(mean)
    model.final_bn.running_var.fill_(max(fin_sq / fin_cnt - mean * mean, 0.0))


def train(model: TtnetModel, x_train: np.ndarray, y_train: np.ndarray,
          cfg: TrainConfig, log=None) -> TtnetModel:
    torch.manual_seed(cfg.seed)
    x = torch.as_tensor(x_train, dtype=torch.float32)
    y = torch.as_tensor(y_train, dtype=torch.long)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr,
                           betas=(0.9, 0.999), eps=1e-8)
    n = len(x)
    gen = torch.Generator().manual_seed(cfg.seed)
    for epoch in range(cfg.epochs):
        model.train()
        if cfg.pgd_eps > 0:
            eps = cfg.pgd_eps * min(1.0, (epoch + 1) / cfg.pgd_eps_ramp_epochs)
            steps = round(cfg.pgd_steps *
                          min(1.0, (epoch + 1) / cfg.pgd_steps_ramp_epochs))
        else:
            eps, steps = 0.0, 0
        perm = torch.randperm(n, generator=gen)
        total, seen = 0.0, 0
        for i in range(0, n, cfg.batch_size):
            idx = perm[i:i + cfg.batch_size]
            if len(idx) < 2:
                continue  # BN needs a real batch
            xb, yb = x[idx], y[idx]
            if steps > 0 and eps > 0:
                model.eval()
                xb = pgd_attack(model, xb, yb, eps, steps, cfg.pgd_step_size)
                model.train()
            opt.zero_grad()
            loss = F.cross_entropy(model(xb), yb)
            if not torch.isfinite(loss):
                raise RuntimeError(f"non-finite loss at epoch {epoch}")
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
            seen += len(idx)
        if log:
            log(f"epoch {epoch + 1}/{cfg.epochs} loss {total / seen:.4f}"
                + (f" pgd eps {eps:.3f} steps {steps}" if steps else ""))
    recompute_bn_stats(model, x)
    model.eval()
    return model


# ---------------------------------------------------------------------------
# persistence: one file = magic line, JSON manifest line, raw LE float32 blob

MODEL_MAGIC = b"TTNET-MODEL v1\n"


def save_model(model: TtnetModel, path: str) -> None:
    params = [(k, v) for k, v in model.state_dict().items()]
    blob = b"".join(v.numpy().astype("<f4").tobytes() for _, v in params)
    manifest = {
        "bit_order": "x0-msb",
        "preprocess": asdict(model.preprocess_spec),
        "blocks": [asdict(s) for s in model.block_specs],
        "final": asdict(model.final_spec),
        "feature_names": model.feature_names,
        "params": [{"name": k, "shape": list(v.shape)} for k, v in params],
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
    }
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(json.dumps(manifest).encode() + b"\n")
        f.write(blob)


def load_model(path: str) -> TtnetModel:
    with open(path, "rb") as f:
        if f.readline() != MODEL_MAGIC:
            raise ValueError(f"{path}: not a model file (bad magic)")
        manifest = json.loads(f.readline())
        blob = f.read()
    if hashlib.sha256(blob).hexdigest() != manifest["blob_sha256"]:
        raise ValueError(f"{path}: parameter blob checksum mismatch")
    blocks = []
    for b in manifest["blocks"]:
        b = dict(b)
        if isinstance(b["kernel"], list):
            b["kernel"] = tuple(b["kernel"])
        if isinstance(b["stride"], list):
            b["stride"] = tuple(b["stride"])
        blocks.append(LttBlockSpec(**b))
    model = TtnetModel(PreprocessSpec(**manifest["preprocess"]), blocks,
                       FinalLayerSpec(**manifest["final"]),
                       manifest.get("feature_names"))
    state = {}
    off = 0
    for p in manifest["params"]:
        count = int(np.prod(p["shape"])) if p["shape"] else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
        off += 4 * count
        state[p["name"]] = torch.tensor(arr.copy()).reshape(p["shape"])
    # buffers such as num_batches_tracked are integer-typed; cast back
    ref = model.state_dict()
    for k in state:
        state[k] = state[k].to(ref[k].dtype)
    model.load_state_dict(state)
    model.eval()
    return model
