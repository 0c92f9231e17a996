"""Named experiment configurations and the key=value config file format.

Config files are plain text: `key = value`, # comments, values parsed as
int/float/bool/string, comma-separated for lists.  HK constraint files hold
one mutual-exclusion group per line, comma-separated feature names.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .model import FinalLayerSpec, LttBlockSpec, PreprocessSpec, TrainConfig


@dataclass
class ExperimentConfig:
    name: str
    blocks: list[LttBlockSpec]
    train: TrainConfig
    s_q: float | None = None
    crop: int | None = None          # center-crop images to crop x crop
    final_precision: str = "float"   # forwarded to the final linear layer
    eps: list[float] = field(default_factory=list)
    hk_file: str | None = None
    solver_cmd: list[str] | None = None
    permutations: int = 0            # permutation-augment copies
    pad_to_stride: bool = True       # pad tabular features to fit stride
    # tabular binarization recipe defaults
    categorical: list[str] = field(default_factory=list)
    drop: list[str] = field(default_factory=list)
    numeric_bits: int = 4
    label_column: str | None = None
    positive_label: str | None = None


ADULT_CATEGORICAL = ["workclass", "marital-status", "occupation",
                     "relationship", "race", "sex", "native-country"]


def _adult(name: str, permutations: int = 0) -> ExperimentConfig:
    blk = LttBlockSpec(dims=1, in_channels=1, hidden_channels=10,
                       out_channels=10, kernel=5, stride=5)
    return ExperimentConfig(
        name=name, blocks=[blk],
        train=TrainConfig(lr=0.005, epochs=10, batch_size=128, seed=0),
        permutations=permutations,
        categorical=list(ADULT_CATEGORICAL),
        drop=["fnlwgt", "education"],
        numeric_bits=4, label_column="income", positive_label=">50K")


def _breast_cancer() -> ExperimentConfig:
    blk = LttBlockSpec(dims=1, in_channels=1, hidden_channels=10,
                       out_channels=10, kernel=3, stride=4)
    return ExperimentConfig(
        name="breast-cancer", blocks=[blk],
        train=TrainConfig(lr=0.005, epochs=10, batch_size=128, seed=0),
        numeric_bits=1, label_column="target", positive_label="1")


def _mnist_small() -> ExperimentConfig:
    blk = LttBlockSpec(dims=2, in_channels=1, hidden_channels=64,
                       out_channels=16, kernel=(3, 2), stride=(2, 2))
    return ExperimentConfig(
        name="mnist-small", blocks=[blk], crop=20, final_precision="4bit",
        train=TrainConfig(lr=0.005, epochs=10, batch_size=64, seed=0))


def _mnist_verify() -> ExperimentConfig:
    blk = LttBlockSpec(dims=2, in_channels=1, hidden_channels=24,
                       out_channels=10, kernel=(3, 3), stride=(3, 3))
    return ExperimentConfig(
        name="mnist-verify", blocks=[blk], s_q=0.61,
        train=TrainConfig(lr=0.0005, epochs=50, batch_size=128, seed=0,
                          pgd_eps=0.3, pgd_eps_ramp_epochs=30,
                          pgd_step_size=0.05),
        eps=[0.1])


def _table9(name: str, stages) -> ExperimentConfig:
    # two-block image architectures; stages = per-block
    # (hidden, out, kernel, stride, groups), in_channels chained
    blocks = []
    in_ch = 1
    for hidden, out, k, s, g in stages:
        blocks.append(LttBlockSpec(dims=2, in_channels=in_ch,
                                   hidden_channels=hidden, out_channels=out,
                                   kernel=k, stride=s, groups=g))
        in_ch = out
    return ExperimentConfig(
        name=name, blocks=blocks,
        train=TrainConfig(lr=0.001, epochs=10, batch_size=128, seed=0))


CONFIGS = {
    "adult-small": lambda: _adult("adult-small"),
    "adult-big": lambda: _adult("adult-big", permutations=10),
    "breast-cancer": _breast_cancer,
    "mnist-small": _mnist_small,
    "mnist-verify": _mnist_verify,
    # patch sizes (6,6) / (7,7) / (7,7) via p -> p*s + (k - s)
    "table9-a": lambda: _table9("table9-a", [
        (60, 48, (3, 3), (3, 3), 1), (384, 48, (2, 2), (2, 2), 24)]),
    "table9-b": lambda: _table9("table9-b", [
        (60, 48, (3, 3), (2, 2), 1), (384, 48, (3, 3), (2, 2), 48)]),
    "table9-c": lambda: _table9("table9-c", [
        (144, 48, (3, 3), (2, 2), 1), (384, 48, (3, 3), (1, 1), 48)]),
}


def get_config(name: str) -> ExperimentConfig:
    if name not in CONFIGS:
        raise ValueError(f"unknown config {name!r}; known: "
                         + ", ".join(sorted(CONFIGS)))
    return CONFIGS[name]()


def parse_config_file(path: str) -> dict:
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key] = _parse_value(val)
    return out


def _parse_value(val: str):
    if "," in val:
        return [_parse_value(v.strip()) for v in val.split(",")]
    low = val.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", ""):
        return None
    for cast in (int, float):
        try:
            return cast(val)
        except ValueError:
            pass
    return val


# keys applied to the nested TrainConfig rather than the experiment itself
_TRAIN_KEYS = {"lr", "epochs", "batch_size", "seed", "pgd_eps",
               "pgd_eps_ramp_epochs", "pgd_steps", "pgd_steps_ramp_epochs",
               "pgd_step_size"}


def apply_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    train_kw = {}
    cfg_kw = {}
    for key, val in overrides.items():
        if key in _TRAIN_KEYS:
            train_kw[key] = val
        elif key == "config":
            continue
        elif key == "eps" and not isinstance(val, list):
            cfg_kw["eps"] = [val]
        elif hasattr(cfg, key):
            cur = getattr(cfg, key)
            if isinstance(cur, list) and not isinstance(val, list) \
                    and key in ("categorical", "drop", "solver_cmd"):
                val = [val]
            cfg_kw[key] = val
        else:
            raise ValueError(f"unknown config key {key!r}")
    if train_kw:
        cfg_kw["train"] = replace(cfg.train, **train_kw)
    return replace(cfg, **cfg_kw)


def final_in_features(blocks: list[LttBlockSpec], spatial: tuple) -> int:
    """Flattened feature count after the LTT stack on a given input size."""
    for b in blocks:
        k = b.kernel if isinstance(b.kernel, tuple) else (b.kernel,) * b.dims
        s = b.stride if isinstance(b.stride, tuple) else (b.stride,) * b.dims
        spatial = tuple((d - kk) // ss + 1 for d, kk, ss in
                        zip(spatial, k, s))
        if any(d < 1 for d in spatial):
            raise ValueError(f"input too small for block {b}")
    out = blocks[-1].out_channels
    for d in spatial:
        out *= d
    return out


def build_model(cfg: ExperimentConfig, input_shape: tuple, classes: int,
                feature_names: list[str] | None = None):
    """input_shape = one sample's shape (C, L) or (C, H, W), post crop/pad."""
    from .model import TtnetModel
    pre = PreprocessSpec(s_q=cfg.s_q, features=input_shape[0])
    feats = final_in_features(cfg.blocks, tuple(input_shape[1:]))
    final = FinalLayerSpec(feats, classes, cfg.final_precision)
    return TtnetModel(pre, [replace(b) for b in cfg.blocks], final,
                      feature_names)


def load_hk(path: str) -> list[list[str]]:
    """One mutual-exclusion group per line, comma-separated names."""
    groups = []
    with open(path) as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            group = [n.strip() for n in line.split(",") if n.strip()]
            if len(group) < 2:
                raise ValueError(f"HK group needs >= 2 features: {line!r}")
            groups.append(group)
    return groups
