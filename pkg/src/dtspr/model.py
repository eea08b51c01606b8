"""Phase-recognition transformer over digital-twin inputs.

Five variants share one architecture: a shared-weight conv patch embedding
over the variant's spatial channels, a mask-token transformer whose summary
is added to the cls token before the encoder (early fusion), a depth-token
transformer whose summary is added after it (late fusion), and an encoder
that interleaves per-frame spatial attention with windowed and full-clip
temporal attention.  The head classifies the phase of the clip's last frame.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

import numpy as np

from . import nn
from .frames import MASK_TOKEN_LEN, N_INSTANCES, N_PHASES
from .nn import AttentionMask, AttentionParams, Parameter, Tensor
from .synth import derive_seed

VARIANTS = ("dt", "depth", "mask", "raw", "raw_dtaug")

INPUT_CHANNELS = {"dt": 11, "depth": 1, "mask": 10, "raw": 3, "raw_dtaug": 14}


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    clip_len: int = 16
    patch_size: int = 16
    model_dim: int = 64
    heads: int = 4
    encoder_layers: int = 4
    token_layers: int = 2
    local_window: int = 4
    ffn_ratio: int = 2
    depth_token_dim: int = 32
    n_phases: int = N_PHASES

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.model_dim % self.heads:
            raise ValueError(f"model_dim {self.model_dim} not divisible by {self.heads} heads")
        if self.clip_len % self.local_window:
            raise ValueError(f"clip_len {self.clip_len} not divisible by local_window {self.local_window}")
        if min(self.clip_len, self.patch_size, self.model_dim, self.heads,
               self.encoder_layers, self.token_layers, self.ffn_ratio) < 1:
            raise ValueError("all size hyperparameters must be positive")

    @property
    def input_channels(self) -> int:
        return INPUT_CHANNELS[self.variant]

    @property
    def uses_mask_tokens(self) -> bool:
        return self.variant in ("dt", "mask", "raw_dtaug")

    @property
    def uses_depth_tokens(self) -> bool:
        return self.variant in ("dt", "depth", "raw_dtaug")

    @property
    def needs_rgb(self) -> bool:
        return self.variant in ("raw", "raw_dtaug")

    def digest(self) -> bytes:
        text = ";".join(f"{f.name}={getattr(self, f.name)}" for f in fields(self))
        return hashlib.sha256(text.encode()).digest()


# tiny: gradient-check/overfit scale on 64x64 frames; small: experiment scale
# on 24x24 frames.
PRESETS = {
    "tiny": dict(clip_len=4, patch_size=16, model_dim=32, heads=4,
                 encoder_layers=2, token_layers=1, local_window=2),
    "small": dict(clip_len=16, patch_size=12, model_dim=32, heads=4,
                  encoder_layers=2, token_layers=1, local_window=4),
}


def preset_config(variant: str, preset: str, **overrides) -> ModelConfig:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; expected one of {tuple(PRESETS)}")
    kw = dict(PRESETS[preset])
    kw.update(overrides)
    return ModelConfig(variant=variant, **kw)


@dataclass
class ClipBatch:
    """Numpy model inputs for a batch of clips.

    spatial: (B, T, C, H, W) float64 with C matching the variant.
    mask_tokens: (B, T, 10, 257) float64 or None.
    depth_tokens: (B, T, D) float64 or None.
    """

    spatial: np.ndarray
    mask_tokens: np.ndarray | None = None
    depth_tokens: np.ndarray | None = None


class Model:
    """A variant's configuration plus its named parameters (insertion-ordered)."""

    def __init__(self, config: ModelConfig, params: dict[str, Parameter]):
        self.config = config
        self.params = params

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def attn(self, prefix: str) -> AttentionParams:
        p = self.params
        return AttentionParams(wq=p[f"{prefix}.wq"], wk=p[f"{prefix}.wk"],
                               wv=p[f"{prefix}.wv"], wo=p[f"{prefix}.wo"],
                               bq=p[f"{prefix}.bq"], bv=p[f"{prefix}.bv"],
                               bo=p[f"{prefix}.bo"])

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(values)
        extra = set(values) - set(self.params)
        if missing or extra:
            raise ValueError(f"checkpoint/model parameter mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        for name, p in self.params.items():
            if values[name].shape != p.data.shape:
                raise ValueError(f"parameter {name}: shape {values[name].shape} != {p.data.shape}")
            p.data = values[name].astype(np.float64).copy()


def build_variant(config: ModelConfig, seed: int) -> Model:
    """Deterministically initialized model for one variant.

    Projections draw from a truncated normal (std 0.02); biases start at
    zero, norm gains at one.  Parameter enumeration order is fixed by
    construction order.
    """
    rng = np.random.default_rng(derive_seed(seed, "init", config.variant))
    d = config.model_dim
    params: dict[str, Parameter] = {}

    def weight(name, shape):
        params[name] = Parameter(nn.trunc_normal(rng, shape), name)

    def bias(name, size):
        params[name] = Parameter(np.zeros(size), name)

    def norm(prefix):
        params[f"{prefix}.ln_g"] = Parameter(np.ones(d), f"{prefix}.ln_g")
        params[f"{prefix}.ln_b"] = Parameter(np.zeros(d), f"{prefix}.ln_b")

    def attention(prefix):
        norm(prefix)
        for w in ("wq", "wk", "wv", "wo"):
            weight(f"{prefix}.{w}", (d, d))
        for b in ("bq", "bv", "bo"):
            bias(f"{prefix}.{b}", d)

    def ffn(prefix):
        norm(prefix)
        weight(f"{prefix}.w1", (d, config.ffn_ratio * d))
        bias(f"{prefix}.b1", config.ffn_ratio * d)
        weight(f"{prefix}.w2", (config.ffn_ratio * d, d))
        bias(f"{prefix}.b2", d)

    def token_path(prefix, in_dim):
        weight(f"{prefix}.proj.w", (in_dim, d))
        bias(f"{prefix}.proj.b", d)
        weight(f"{prefix}.summary", (d,))
        for j in range(config.token_layers):
            attention(f"{prefix}.l{j}.attn")
            ffn(f"{prefix}.l{j}.ffn")
        norm(f"{prefix}.final")

    weight("spatial.patch.w", (d, config.input_channels, config.patch_size, config.patch_size))
    bias("spatial.patch.b", d)
    weight("cls", (d,))
    for i in range(config.encoder_layers):
        attention(f"enc{i}.spatial")
        attention(f"enc{i}.local")
        attention(f"enc{i}.global")
        ffn(f"enc{i}.ffn")
    norm("enc.final")
    if config.uses_mask_tokens:
        token_path("masktok", 256)
    if config.uses_depth_tokens:
        token_path("depthtok", config.depth_token_dim)
    weight("head.w", (d, config.n_phases))
    bias("head.b", config.n_phases)
    return Model(config, params)


# ---------------------------------------------------------------------------
# forward pieces


def _ln(model: Model, prefix: str, x: Tensor) -> Tensor:
    return nn.layer_norm(x, model.params[f"{prefix}.ln_g"], model.params[f"{prefix}.ln_b"])


def _ffn(model: Model, prefix: str, x: Tensor) -> Tensor:
    y = _ln(model, prefix, x)
    y = nn.gelu(nn.linear(y, model.params[f"{prefix}.w1"], model.params[f"{prefix}.b1"]))
    return x + nn.linear(y, model.params[f"{prefix}.w2"], model.params[f"{prefix}.b2"])


def tokenize_spatial(model: Model, clip: np.ndarray) -> Tensor:
    """Patch-embed a clip into (B, T, P, d) tokens with spatial+temporal PE.

    The conv weights are shared across frames; sinusoidal tables encode the
    patch position within a frame and the frame index within the clip.
    """
    cfg = model.config
    b, t, c, h, w = clip.shape
    if c != cfg.input_channels:
        raise ValueError(f"variant {cfg.variant!r} expects {cfg.input_channels} channels, got {c}")
    if t != cfg.clip_len:
        raise ValueError(f"expected clip length {cfg.clip_len}, got {t}")
    if h % cfg.patch_size or w % cfg.patch_size:
        raise ValueError(f"frame {h}x{w} not divisible by patch size {cfg.patch_size}")
    y = nn.conv2d(Tensor(clip), model.params["spatial.patch.w"],
                  model.params["spatial.patch.b"], stride=cfg.patch_size)
    hp, wp = h // cfg.patch_size, w // cfg.patch_size
    p = hp * wp
    y = nn.reshape(y, (b, t, cfg.model_dim, p))
    y = nn.transpose(y, (0, 1, 3, 2))
    y = y + nn.sinusoidal_pe(p, cfg.model_dim)[None, None]
    y = y + nn.sinusoidal_pe(t, cfg.model_dim)[None, :, None, :]
    return y


def _broadcast_rows(x: Tensor, batch: int) -> Tensor:
    # (n,) parameter -> (batch, 1, n) rows
    return nn.reshape(x, (1, 1, x.shape[0])) + Tensor(np.zeros((batch, 1, 1)))


def _token_transformer(model: Model, prefix: str, entries: Tensor,
                       key_allowed: np.ndarray | None) -> Tensor:
    """Summary-token output of a masked token transformer.

    ``entries`` is (B, N, d) with PE already added; the learnable summary is
    appended and always attends; entries whose key mask is False are never
    attended to, so their values cannot reach the summary.
    """
    cfg = model.config
    b, n, d = entries.shape
    x = nn.concat([entries, _broadcast_rows(model.params[f"{prefix}.summary"], b)], axis=1)
    mask = None
    if key_allowed is not None:
        allowed = np.concatenate([key_allowed, np.ones((b, 1), bool)], axis=1)
        mask = AttentionMask(allowed[:, None, None, :])
    for j in range(cfg.token_layers):
        y = _ln(model, f"{prefix}.l{j}.attn", x)
        x = x + nn.masked_mha(y, y, model.attn(f"{prefix}.l{j}.attn"), cfg.heads, mask=mask)
        x = _ffn(model, f"{prefix}.l{j}.ffn", x)
    x = _ln(model, f"{prefix}.final", x)
    return nn.reshape(x[:, n], (b, d))


def embed_mask_tokens(model: Model, table: np.ndarray) -> Tensor:
    """Mask-token summary: (B, T, 10, 257) table -> (B, d).

    The 256 token values are projected to model dim; PE runs over the
    flattened (frame, instance) position; the 257th value gates attention,
    so entries flagged absent cannot influence the summary.
    """
    cfg = model.config
    b, t, k, dtok = table.shape
    if t != cfg.clip_len or k != N_INSTANCES or dtok != MASK_TOKEN_LEN:
        raise ValueError(f"mask-token table must be (B, {cfg.clip_len}, {N_INSTANCES}, "
                         f"{MASK_TOKEN_LEN}), got {table.shape}")
    values = table[..., :256].reshape(b, t * k, 256)
    exists = table[..., 256].reshape(b, t * k) == 1.0
    x = nn.linear(Tensor(values), model.params["masktok.proj.w"], model.params["masktok.proj.b"])
    x = x + nn.sinusoidal_pe(t * k, cfg.model_dim)[None]
    return _token_transformer(model, "masktok", x, exists)


def embed_depth_tokens(model: Model, tokens: np.ndarray) -> Tensor:
    """Depth-token summary: (B, T, D) -> (B, d); same pipeline, all keys allowed."""
    cfg = model.config
    b, t, dd = tokens.shape
    if t != cfg.clip_len or dd != cfg.depth_token_dim:
        raise ValueError(f"depth tokens must be (B, {cfg.clip_len}, {cfg.depth_token_dim}), "
                         f"got {tokens.shape}")
    x = nn.linear(Tensor(tokens), model.params["depthtok.proj.w"], model.params["depthtok.proj.b"])
    x = x + nn.sinusoidal_pe(t, cfg.model_dim)[None]
    return _token_transformer(model, "depthtok", x, None)


def spatial_stage(model: Model, layer: int, tokens: Tensor, cls: Tensor) -> tuple[Tensor, Tensor]:
    """Within-frame attention with residuals: the cls query ranges over the
    cls plus every frame's patches; each patch query ranges over its own
    frame's patches plus the cls."""
    cfg = model.config
    b, t, p, d = tokens.shape
    cls_n = _ln(model, f"enc{layer}.spatial", nn.reshape(cls, (b, 1, d)))
    pat_n = _ln(model, f"enc{layer}.spatial", tokens)
    attn = model.attn(f"enc{layer}.spatial")
    kv_all = nn.concat([cls_n, nn.reshape(pat_n, (b, t * p, d))], axis=1)
    cls = cls + nn.reshape(nn.masked_mha(cls_n, kv_all, attn, cfg.heads), (b, d))
    cls_rep = nn.reshape(cls_n, (b, 1, 1, d)) + Tensor(np.zeros((b, t, 1, 1)))
    kv_frame = nn.concat([cls_rep, pat_n], axis=2)
    tokens = tokens + nn.masked_mha(pat_n, kv_frame, attn, cfg.heads)
    return tokens, cls


def local_temporal_stage(model: Model, layer: int, tokens: Tensor) -> Tensor:
    """Attention among same-patch-index tokens within non-overlapping windows."""
    cfg = model.config
    b, t, p, d = tokens.shape
    nw = t // cfg.local_window
    y = _ln(model, f"enc{layer}.local", tokens)
    y = nn.reshape(y, (b, nw, cfg.local_window, p, d))
    y = nn.transpose(y, (0, 1, 3, 2, 4))
    y = nn.masked_mha(y, y, model.attn(f"enc{layer}.local"), cfg.heads)
    y = nn.transpose(y, (0, 1, 3, 2, 4))
    return tokens + nn.reshape(y, (b, t, p, d))


def global_temporal_stage(model: Model, layer: int, tokens: Tensor) -> Tensor:
    """Attention among same-patch-index tokens across the whole clip."""
    cfg = model.config
    y = _ln(model, f"enc{layer}.global", tokens)
    y = nn.transpose(y, (0, 2, 1, 3))
    y = nn.masked_mha(y, y, model.attn(f"enc{layer}.global"), cfg.heads)
    return tokens + nn.transpose(y, (0, 2, 1, 3))


def hta_encode(model: Model, tokens: Tensor, cls: Tensor) -> tuple[Tensor, Tensor]:
    """Hierarchical encoder over (B, T, P, d) tokens and a (B, d) cls token.

    Each layer runs, with pre-norm residuals around every block: spatial
    attention, windowed temporal attention, full-clip temporal attention,
    then a feed-forward over cls and patches.  Returns the final-norm cls
    and the patch tokens.
    """
    cfg = model.config
    b, _, _, d = tokens.shape
    for i in range(cfg.encoder_layers):
        tokens, cls = spatial_stage(model, i, tokens, cls)
        tokens = local_temporal_stage(model, i, tokens)
        tokens = global_temporal_stage(model, i, tokens)
        cls = nn.reshape(_ffn(model, f"enc{i}.ffn", nn.reshape(cls, (b, 1, d))), (b, d))
        tokens = _ffn(model, f"enc{i}.ffn", tokens)
    cls = nn.reshape(_ln(model, "enc.final", nn.reshape(cls, (b, 1, d))), (b, d))
    return cls, tokens


def predict(model: Model, batch: ClipBatch) -> Tensor:
    """Logits (B, 7) for the phase of each clip's last frame.

    The mask summary is added to the cls before the encoder; the depth
    summary is added to the encoded cls after it.
    """
    cfg = model.config
    b = batch.spatial.shape[0]
    tokens = tokenize_spatial(model, batch.spatial)
    cls = nn.reshape(model.params["cls"], (1, cfg.model_dim)) + Tensor(np.zeros((b, 1)))
    if cfg.uses_mask_tokens:
        if batch.mask_tokens is None:
            raise ValueError(f"variant {cfg.variant!r} needs mask tokens")
        cls = cls + embed_mask_tokens(model, batch.mask_tokens)
    if cfg.uses_depth_tokens and batch.depth_tokens is None:
        raise ValueError(f"variant {cfg.variant!r} needs depth tokens")
    cls, _ = hta_encode(model, tokens, cls)
    if cfg.uses_depth_tokens:
        cls = cls + embed_depth_tokens(model, batch.depth_tokens)
    return nn.linear(cls, model.params["head.w"], model.params["head.b"])


# ---------------------------------------------------------------------------
# checkpoint plumbing


def save_model(path, model: Model) -> None:
    nn.save_checkpoint(path, model.parameters(), model.config.digest())


def load_model(path, config: ModelConfig) -> Model:
    """Rebuild a model from a checkpoint; refuses a config-digest mismatch."""
    _, values = nn.load_checkpoint(path, expected_digest=config.digest())
    model = build_variant(config, seed=0)
    model.load_values(values)
    return model


def config_to_json(config: ModelConfig) -> str:
    import json
    return json.dumps({f.name: getattr(config, f.name) for f in fields(config)}, indent=0, sort_keys=True)


def config_from_json(text: str) -> ModelConfig:
    import json
    return ModelConfig(**json.loads(text))
