"""Flat ``section.key = value`` configuration files, merged with CLI flags.

Lines are ``key = value``; blank lines and ``#`` comments are skipped.
Unknown keys are an error so typos fail loudly. CNN block specs use the
compact form ``expansion:channels:stride:kernel`` joined by commas.
"""

from __future__ import annotations

from pathlib import Path

from .convnet import DEFAULT_BLOCKS, BlockSpec, CnnConfig
from .dsp import MelParams
from .errors import ConfigError
from .train import TrainConfig
from .transformer import AstConfig

_KEY_TYPES: dict[str, type] = {
    "mel.n_mels": int,
    "mel.f_min": float,
    "mel.f_max": float,
    "mel.sample_rate": int,
    "mel.n_fft": int,
    "mel.hop_length": int,
    "mel.window": str,
    "mel.top_db": float,
    "audio.window_seconds": float,
    "audio.hop_seconds": float,
    "model.type": str,
    "ast.patch_size": int,
    "ast.patch_stride": int,
    "ast.embed_dim": int,
    "ast.n_layers": int,
    "ast.n_heads": int,
    "ast.mlp_ratio": int,
    "ast.num_classes": int,
    "ast.image_size": int,
    "ast.init_scheme": str,
    "cnn.stem_channels": int,
    "cnn.blocks": str,
    "cnn.head_channels": int,
    "cnn.num_classes": int,
    "cnn.image_size": int,
    "train.learning_rate": float,
    "train.total_epochs": int,
    "train.train_batch": int,
    "train.val_batch": int,
    "train.patience": int,
    "train.eta_min": float,
    "train.seed": int,
    "data.cap": int,
    "data.val_fraction": float,
    "data.labels": str,
    "predict.topk": int,
}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, object]:
    values: dict[str, object] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw_line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _KEY_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _KEY_TYPES[key](raw)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {raw!r}") from exc
    return values


def load_config_file(path: str | Path) -> dict[str, object]:
    return parse_config_text(Path(path).read_text(), source=str(path))


def write_config_file(path: str | Path, values: dict[str, object]) -> None:
    lines = [f"{key} = {values[key]}" for key in sorted(values)]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_blocks(raw: str) -> tuple[BlockSpec, ...]:
    blocks = []
    for part in raw.split(","):
        fields = part.strip().split(":")
        if len(fields) != 4:
            raise ConfigError(f"block spec {part!r} is not expansion:channels:stride:kernel")
        try:
            e, c, s, k = (int(f) for f in fields)
            blocks.append(BlockSpec(e, c, s, k))
        except ValueError as exc:
            raise ConfigError(f"bad block spec {part!r}: {exc}") from exc
    return tuple(blocks)


def format_blocks(blocks: tuple[BlockSpec, ...]) -> str:
    return ",".join(f"{b.expansion}:{b.channels}:{b.stride}:{b.kernel_size}" for b in blocks)


class RunConfig:
    """Typed view over merged config values (file first, then overrides)."""

    def __init__(self, values: dict[str, object] | None = None):
        self.values = dict(values or {})

    def override(self, key: str, value) -> None:
        if value is None:
            return
        if key not in _KEY_TYPES:
            raise ConfigError(f"unknown key {key!r}")
        self.values[key] = _KEY_TYPES[key](value)

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def mel_params(self) -> MelParams:
        try:
            return MelParams(
                n_mels=self.get("mel.n_mels", 128),
                f_min=self.get("mel.f_min", 20.0),
                f_max=self.get("mel.f_max", 16000.0),
                sample_rate=self.get("mel.sample_rate", 32000),
                n_fft=self.get("mel.n_fft", 512),
                hop_length=self.get("mel.hop_length", 320),
                window=self.get("mel.window", "hann"),
                top_db=self.get("mel.top_db", 80.0),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(
                learning_rate=self.get("train.learning_rate", 1e-4),
                total_epochs=self.get("train.total_epochs", 40),
                train_batch=self.get("train.train_batch", 10),
                val_batch=self.get("train.val_batch", 2),
                patience=self.get("train.patience", 10),
                eta_min=self.get("train.eta_min", 0.0),
                seed=self.get("train.seed", 0),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def ast_config(self, num_classes: int | None = None) -> AstConfig:
        n = num_classes if num_classes is not None else self.get("ast.num_classes")
        if n is None:
            raise ConfigError("ast.num_classes is not set and no dataset provides it")
        try:
            return AstConfig(
                num_classes=int(n),
                patch_size=self.get("ast.patch_size", 16),
                patch_stride=self.get("ast.patch_stride", 10),
                embed_dim=self.get("ast.embed_dim", 768),
                n_layers=self.get("ast.n_layers", 12),
                n_heads=self.get("ast.n_heads", 12),
                mlp_ratio=self.get("ast.mlp_ratio", 4),
                image_size=self.get("ast.image_size", 224),
                init_scheme=self.get("ast.init_scheme", "fixed"),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def cnn_config(self, num_classes: int | None = None) -> CnnConfig:
        n = num_classes if num_classes is not None else self.get("cnn.num_classes")
        if n is None:
            raise ConfigError("cnn.num_classes is not set and no dataset provides it")
        raw_blocks = self.get("cnn.blocks")
        try:
            return CnnConfig(
                num_classes=int(n),
                stem_channels=self.get("cnn.stem_channels", 8),
                blocks=parse_blocks(raw_blocks) if raw_blocks else DEFAULT_BLOCKS,
                head_channels=self.get("cnn.head_channels", 96),
                image_size=self.get("cnn.image_size", 224),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def model_config(self, model_kind: str, num_classes: int | None = None):
        if model_kind == "ast":
            return self.ast_config(num_classes)
        if model_kind == "cnn":
            return self.cnn_config(num_classes)
        raise ConfigError(f"model.type must be 'ast' or 'cnn', got {model_kind!r}")

    def checkpoint_values(self, model_kind: str, model_cfg, labels) -> dict[str, object]:
        """Everything needed to rebuild the model next to its weight file."""
        out: dict[str, object] = {"model.type": model_kind, "data.labels": ",".join(labels)}
        if model_kind == "ast":
            out.update({
                "ast.num_classes": model_cfg.num_classes,
                "ast.patch_size": model_cfg.patch_size,
                "ast.patch_stride": model_cfg.patch_stride,
                "ast.embed_dim": model_cfg.embed_dim,
                "ast.n_layers": model_cfg.n_layers,
                "ast.n_heads": model_cfg.n_heads,
                "ast.mlp_ratio": model_cfg.mlp_ratio,
                "ast.image_size": model_cfg.image_size,
                "ast.init_scheme": model_cfg.init_scheme,
            })
        else:
            out.update({
                "cnn.num_classes": model_cfg.num_classes,
                "cnn.stem_channels": model_cfg.stem_channels,
                "cnn.blocks": format_blocks(model_cfg.blocks),
                "cnn.head_channels": model_cfg.head_channels,
                "cnn.image_size": model_cfg.image_size,
            })
        return out
