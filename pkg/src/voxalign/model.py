"""Dual-branch voxel-to-embedding network with explicit forward and backward.

The text branch maps semantic-region voxels to a text-embedding matrix;
the image branch maps semantic-region and full detail voxels through two
encoders to a shared backbone and output decoder, producing two
image-embedding predictions whose mean is the fused prediction. Each
encoder has a paired voxel decoder used for direct and cross
reconstruction.

Blocks are single affine layers with ReLU and inverted dropout; the two
backbone blocks are dimension-preserving and carry a residual connection,
while encoders and decoders change width and do not. Output decoders are
plain affine maps (signed targets). Dropout masks are recorded during
training forwards so the backward pass and finite-difference replays see
exactly the same network.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._arrays import as_matrix
from .errors import (
    DegenerateInput,
    FormatError,
    InvalidState,
    ShapeMismatch,
)
from .matio import load_matrix, save_matrix
from .rng import Rng

VARIANTS = ("full", "full_no_crec", "text_semantic", "text_detail", "text_only")


@dataclass(frozen=True)
class ModelConfig:
    """Network dimensions and dropout rates.

    Desk-scale defaults live in :func:`desk_config`. At full scale the
    embedding targets would be CLIP ViT-L/14 shaped (77x768 text tokens,
    257x768 image tokens); nothing in the network depends on that choice.
    """

    n_semantic_voxels: int
    n_detail_voxels: int
    latent_dim: int
    text_tokens: int
    text_dim: int
    image_tokens: int
    image_dim: int
    dropout_codec: float = 0.15
    dropout_backbone: float = 0.5

    def __post_init__(self):
        for name in (
            "n_semantic_voxels",
            "n_detail_voxels",
            "latent_dim",
            "text_tokens",
            "text_dim",
            "image_tokens",
            "image_dim",
        ):
            if int(getattr(self, name)) < 1:
                raise DegenerateInput(f"{name} must be >= 1")
        for name in ("dropout_codec", "dropout_backbone"):
            rate = float(getattr(self, name))
            if not 0.0 <= rate < 1.0:
                raise DegenerateInput(f"{name} must lie in [0, 1), got {rate}")


def desk_config(n_semantic_voxels: int = 60, n_detail_voxels: int = 140) -> ModelConfig:
    """Default desk-scale configuration used throughout tests and demos."""
    return ModelConfig(
        n_semantic_voxels=n_semantic_voxels,
        n_detail_voxels=n_detail_voxels,
        latent_dim=128,
        text_tokens=8,
        text_dim=16,
        image_tokens=12,
        image_dim=16,
    )


def image_paths(variant: str) -> tuple:
    """Image-branch paths present under a structural variant."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    if variant in ("full", "full_no_crec"):
        return ("sem", "det")
    if variant == "text_semantic":
        return ("sem",)
    if variant == "text_detail":
        return ("det",)
    return ()


def expected_tensors(cfg: ModelConfig, variant: str = "full") -> dict:
    """Tensor name -> shape map for a variant; biases are 1-D."""
    n_s = cfg.n_semantic_voxels
    n_d = cfg.n_detail_voxels
    lat = cfg.latent_dim
    text_out = cfg.text_tokens * cfg.text_dim
    image_out = cfg.image_tokens * cfg.image_dim
    shapes = {
        "text.encoder.W": (n_s, lat),
        "text.encoder.b": (lat,),
        "text.decoder.W": (lat, n_s),
        "text.decoder.b": (n_s,),
        "text.backbone1.W": (lat, lat),
        "text.backbone1.b": (lat,),
        "text.backbone2.W": (lat, lat),
        "text.backbone2.b": (lat,),
        "text.output.W": (lat, text_out),
        "text.output.b": (text_out,),
    }
    paths = image_paths(variant)
    if paths:
        shapes.update(
            {
                "image.backbone1.W": (lat, lat),
                "image.backbone1.b": (lat,),
                "image.backbone2.W": (lat, lat),
                "image.backbone2.b": (lat,),
                "image.output.W": (lat, image_out),
                "image.output.b": (image_out,),
            }
        )
    if "sem" in paths:
        shapes.update(
            {
                "image.encoder_sem.W": (n_s, lat),
                "image.encoder_sem.b": (lat,),
                "image.decoder_sem.W": (lat, n_s),
                "image.decoder_sem.b": (n_s,),
            }
        )
    if "det" in paths:
        shapes.update(
            {
                "image.encoder_det.W": (n_d, lat),
                "image.encoder_det.b": (lat,),
                "image.decoder_det.W": (lat, n_d),
                "image.decoder_det.b": (n_d,),
            }
        )
    return shapes


@dataclass
class ModelParams:
    """All network weights for one variant, keyed by tensor name."""

    cfg: ModelConfig
    variant: str
    tensors: dict = field(repr=False)

    def __post_init__(self):
        expected = expected_tensors(self.cfg, self.variant)
        missing = sorted(set(expected) - set(self.tensors))
        extra = sorted(set(self.tensors) - set(expected))
        if missing or extra:
            raise ShapeMismatch(
                f"tensor set mismatch for variant {self.variant!r}: "
                f"missing {missing}, unexpected {extra}"
            )
        for name, shape in expected.items():
            t = np.asarray(self.tensors[name], dtype=np.float64)
            if t.shape != shape:
                raise ShapeMismatch(f"{name}: shape {t.shape}, expected {shape}")
            if not np.all(np.isfinite(t)):
                raise DegenerateInput(f"{name}: contains non-finite entries")
            self.tensors[name] = t

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.cfg, self.variant, {k: v.copy() for k, v in self.tensors.items()}
        )


def init_params(cfg: ModelConfig, rng: Rng, variant: str = "full") -> ModelParams:
    """Glorot-uniform weights, zero biases; one child stream per tensor."""
    tensors = {}
    for name, shape in expected_tensors(cfg, variant).items():
        if len(shape) == 1:
            tensors[name] = np.zeros(shape, dtype=np.float64)
        else:
            fan_in, fan_out = shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            tensors[name] = rng.child(f"init/{name}").uniform(-bound, bound, *shape)
    return ModelParams(cfg, variant, tensors)


def param_count(cfg: ModelConfig, variant: str = "full") -> int:
    """Exact number of scalar parameters in a variant."""
    return int(sum(int(np.prod(s)) for s in expected_tensors(cfg, variant).values()))


def _apply_layer(x, weight, bias, rate, rng, masks, key, caches, residual, train):
    z = x @ weight + bias
    activated = np.maximum(z, 0.0)
    mask = None
    if train:
        if masks is not None:
            if key not in masks:
                raise InvalidState(f"missing dropout mask for {key!r}")
            mask = masks[key]
            if mask.shape != activated.shape:
                raise ShapeMismatch(
                    f"mask for {key!r} has shape {mask.shape}, expected {activated.shape}"
                )
        else:
            keep = rng.random(*activated.shape) >= rate
            mask = keep.astype(np.float64) / (1.0 - rate)
        dropped = activated * mask
    else:
        dropped = activated
    y = x + dropped if residual else dropped
    caches[key] = {"x": x, "z": z, "mask": mask}
    return y


def _apply_output(x, weight, bias, key, caches):
    caches[key] = {"x": x}
    return x @ weight + bias


def mlp_block_forward(x, weight, bias, dropout_rate, rng: Rng = None, mask=None):
    """Single network block: ``dropout(relu(x W + b))`` plus a residual path
    when the block preserves width.

    Training mode is selected by passing `rng` (a fresh mask is drawn) or
    `mask` (an inverted-dropout mask is replayed); with neither, the block
    runs in inference mode, which applies no mask and no rescaling. Returns
    the output and the mask used (None in inference).
    """
    xm = as_matrix(x, "x")
    w = as_matrix(weight, "weight")
    b = np.asarray(bias, dtype=np.float64)
    if xm.shape[1] != w.shape[0]:
        raise ShapeMismatch(f"x has {xm.shape[1]} columns, weight expects {w.shape[0]}")
    if b.shape != (w.shape[1],):
        raise ShapeMismatch(f"bias shape {b.shape}, expected ({w.shape[1]},)")
    rate = float(dropout_rate)
    if not 0.0 <= rate < 1.0:
        raise DegenerateInput(f"dropout_rate must lie in [0, 1), got {rate}")
    train = rng is not None or mask is not None
    masks = None if mask is None else {"block": np.asarray(mask, dtype=np.float64)}
    caches = {}
    y = _apply_layer(
        xm,
        w,
        b,
        rate,
        rng,
        masks,
        "block",
        caches,
        residual=w.shape[0] == w.shape[1],
        train=train,
    )
    return y, caches["block"]["mask"]


@dataclass
class TextForward:
    """Text-branch activations for one batch (first axis is the sample)."""

    code: np.ndarray
    recon_sem: np.ndarray
    pred_emb: np.ndarray
    caches: dict = field(repr=False)


@dataclass
class ImageForward:
    """Image-branch activations; absent paths hold None."""

    code_sem: np.ndarray
    code_det: np.ndarray
    recon_sem_direct: np.ndarray
    recon_det_cross: np.ndarray
    recon_det_direct: np.ndarray
    recon_sem_cross: np.ndarray
    pred_sem_emb: np.ndarray
    pred_det_emb: np.ndarray
    pred_fused_emb: np.ndarray
    caches: dict = field(repr=False)


def _as_batch(x, width, name):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != width:
        raise ShapeMismatch(f"{name}: expected (n, {width}), got {np.asarray(x).shape}")
    if not np.all(np.isfinite(a)):
        raise DegenerateInput(f"{name}: contains non-finite entries")
    return a


def text_branch_forward(
    voxels_sem, params: ModelParams, rng: Rng = None, masks: dict = None
) -> TextForward:
    """Run the text branch on a batch (or single vector) of semantic voxels."""
    cfg = params.cfg
    t = params.tensors
    x = _as_batch(voxels_sem, cfg.n_semantic_voxels, "voxels_sem")
    train = rng is not None or masks is not None
    caches = {"mode": "train" if train else "infer"}
    code = _apply_layer(
        x, t["text.encoder.W"], t["text.encoder.b"], cfg.dropout_codec,
        rng, masks, "text.encoder", caches, residual=False, train=train,
    )
    recon = _apply_layer(
        code, t["text.decoder.W"], t["text.decoder.b"], cfg.dropout_codec,
        rng, masks, "text.decoder", caches, residual=False, train=train,
    )
    h = _apply_layer(
        code, t["text.backbone1.W"], t["text.backbone1.b"], cfg.dropout_backbone,
        rng, masks, "text.backbone1", caches, residual=True, train=train,
    )
    h = _apply_layer(
        h, t["text.backbone2.W"], t["text.backbone2.b"], cfg.dropout_backbone,
        rng, masks, "text.backbone2", caches, residual=True, train=train,
    )
    flat = _apply_output(h, t["text.output.W"], t["text.output.b"], "text.output", caches)
    pred = flat.reshape(x.shape[0], cfg.text_tokens, cfg.text_dim)
    return TextForward(code=code, recon_sem=recon, pred_emb=pred, caches=caches)


def image_branch_forward(
    voxels_sem, voxels_det, params: ModelParams, rng: Rng = None, masks: dict = None
) -> ImageForward:
    """Run the image branch; backbone and output decoder are shared across paths.

    The fused prediction is defined as the elementwise mean of the two path
    predictions; with a single active path the fusion is the identity.
    """
    cfg = params.cfg
    t = params.tensors
    paths = image_paths(params.variant)
    if not paths:
        raise InvalidState(f"variant {params.variant!r} has no image branch")
    train = rng is not None or masks is not None
    caches = {"mode": "train" if train else "infer"}
    p_codec = cfg.dropout_codec
    p_backbone = cfg.dropout_backbone

    code_sem = code_det = None
    recon_sem_direct = recon_det_cross = recon_det_direct = recon_sem_cross = None
    pred_sem = pred_det = None

    if "sem" in paths:
        x_s = _as_batch(voxels_sem, cfg.n_semantic_voxels, "voxels_sem")
        code_sem = _apply_layer(
            x_s, t["image.encoder_sem.W"], t["image.encoder_sem.b"], p_codec,
            rng, masks, "image.encoder_sem", caches, residual=False, train=train,
        )
    if "det" in paths:
        x_d = _as_batch(voxels_det, cfg.n_detail_voxels, "voxels_det")
        code_det = _apply_layer(
            x_d, t["image.encoder_det.W"], t["image.encoder_det.b"], p_codec,
            rng, masks, "image.encoder_det", caches, residual=False, train=train,
        )

    if "sem" in paths:
        recon_sem_direct = _apply_layer(
            code_sem, t["image.decoder_sem.W"], t["image.decoder_sem.b"], p_codec,
            rng, masks, "image.decoder_sem@direct", caches, residual=False, train=train,
        )
    if "sem" in paths and "det" in paths:
        recon_det_cross = _apply_layer(
            code_sem, t["image.decoder_det.W"], t["image.decoder_det.b"], p_codec,
            rng, masks, "image.decoder_det@cross", caches, residual=False, train=train,
        )
    if "det" in paths:
        recon_det_direct = _apply_layer(
            code_det, t["image.decoder_det.W"], t["image.decoder_det.b"], p_codec,
            rng, masks, "image.decoder_det@direct", caches, residual=False, train=train,
        )
    if "det" in paths and "sem" in paths:
        recon_sem_cross = _apply_layer(
            code_det, t["image.decoder_sem.W"], t["image.decoder_sem.b"], p_codec,
            rng, masks, "image.decoder_sem@cross", caches, residual=False, train=train,
        )

    def _through_backbone(code, tag):
        h = _apply_layer(
            code, t["image.backbone1.W"], t["image.backbone1.b"], p_backbone,
            rng, masks, f"image.backbone1@{tag}", caches, residual=True, train=train,
        )
        h = _apply_layer(
            h, t["image.backbone2.W"], t["image.backbone2.b"], p_backbone,
            rng, masks, f"image.backbone2@{tag}", caches, residual=True, train=train,
        )
        flat = _apply_output(
            h, t["image.output.W"], t["image.output.b"], f"image.output@{tag}", caches
        )
        return flat.reshape(flat.shape[0], cfg.image_tokens, cfg.image_dim)

    if "sem" in paths:
        pred_sem = _through_backbone(code_sem, "sem")
    if "det" in paths:
        pred_det = _through_backbone(code_det, "det")

    if pred_sem is not None and pred_det is not None:
        fused = 0.5 * (pred_sem + pred_det)
    else:
        fused = pred_sem if pred_sem is not None else pred_det
    return ImageForward(
        code_sem=code_sem,
        code_det=code_det,
        recon_sem_direct=recon_sem_direct,
        recon_det_cross=recon_det_cross,
        recon_det_direct=recon_det_direct,
        recon_sem_cross=recon_sem_cross,
        pred_sem_emb=pred_sem,
        pred_det_emb=pred_det,
        pred_fused_emb=fused,
        caches=caches,
    )


def _layer_backward(caches, key, weight, g_y, residual, train):
    cache = caches[key]
    if train:
        mask = cache["mask"]
        if mask is None:
            raise InvalidState(f"train-mode backward without recorded mask for {key!r}")
        g_dropped = g_y * mask
    else:
        g_dropped = g_y
    g_z = g_dropped * (cache["z"] > 0.0)
    g_w = cache["x"].T @ g_z
    g_b = g_z.sum(axis=0)
    g_x = g_z @ weight.T
    if residual:
        g_x = g_x + g_y
    return g_w, g_b, g_x


def _output_backward(caches, key, weight, g_y):
    x = caches[key]["x"]
    return x.T @ g_y, g_y.sum(axis=0), g_y @ weight.T


def text_branch_backward(
    params: ModelParams, fwd: TextForward, grad_pred_emb, grad_recon_sem
) -> dict:
    """Accumulate text-branch parameter gradients for the given upstream grads."""
    t = params.tensors
    caches = fwd.caches
    train = caches["mode"] == "train"
    grads = {k: np.zeros_like(v) for k, v in t.items() if k.startswith("text.")}

    n = fwd.pred_emb.shape[0]
    g_flat = np.asarray(grad_pred_emb, dtype=np.float64).reshape(n, -1)
    g_w, g_b, g_h = _output_backward(caches, "text.output", t["text.output.W"], g_flat)
    grads["text.output.W"] += g_w
    grads["text.output.b"] += g_b
    g_w, g_b, g_h = _layer_backward(caches, "text.backbone2", t["text.backbone2.W"], g_h, True, train)
    grads["text.backbone2.W"] += g_w
    grads["text.backbone2.b"] += g_b
    g_w, g_b, g_code = _layer_backward(caches, "text.backbone1", t["text.backbone1.W"], g_h, True, train)
    grads["text.backbone1.W"] += g_w
    grads["text.backbone1.b"] += g_b

    g_recon = np.asarray(grad_recon_sem, dtype=np.float64).reshape(fwd.recon_sem.shape)
    g_w, g_b, g_code_dec = _layer_backward(caches, "text.decoder", t["text.decoder.W"], g_recon, False, train)
    grads["text.decoder.W"] += g_w
    grads["text.decoder.b"] += g_b

    g_w, g_b, _ = _layer_backward(
        caches, "text.encoder", t["text.encoder.W"], g_code + g_code_dec, False, train
    )
    grads["text.encoder.W"] += g_w
    grads["text.encoder.b"] += g_b
    return grads


def image_branch_backward(
    params: ModelParams,
    fwd: ImageForward,
    grad_pred_sem_emb=None,
    grad_pred_det_emb=None,
    grad_recon_sem_direct=None,
    grad_recon_det_cross=None,
    grad_recon_det_direct=None,
    grad_recon_sem_cross=None,
) -> dict:
    """Accumulate image-branch parameter gradients.

    Upstream gradients for absent outputs must be None; present outputs with
    a None upstream contribute nothing.
    """
    t = params.tensors
    caches = fwd.caches
    train = caches["mode"] == "train"
    paths = image_paths(params.variant)
    grads = {k: np.zeros_like(v) for k, v in t.items() if k.startswith("image.")}

    g_code_sem = None if fwd.code_sem is None else np.zeros_like(fwd.code_sem)
    g_code_det = None if fwd.code_det is None else np.zeros_like(fwd.code_det)

    def _backbone_back(g_pred, tag):
        n = g_pred.shape[0]
        g_flat = np.asarray(g_pred, dtype=np.float64).reshape(n, -1)
        g_w, g_b, g_h = _output_backward(
            caches, f"image.output@{tag}", t["image.output.W"], g_flat
        )
        grads["image.output.W"] += g_w
        grads["image.output.b"] += g_b
        g_w, g_b, g_h = _layer_backward(
            caches, f"image.backbone2@{tag}", t["image.backbone2.W"], g_h, True, train
        )
        grads["image.backbone2.W"] += g_w
        grads["image.backbone2.b"] += g_b
        g_w, g_b, g_code = _layer_backward(
            caches, f"image.backbone1@{tag}", t["image.backbone1.W"], g_h, True, train
        )
        grads["image.backbone1.W"] += g_w
        grads["image.backbone1.b"] += g_b
        return g_code

    if grad_pred_sem_emb is not None:
        if "sem" not in paths:
            raise InvalidState("gradient supplied for absent semantic path")
        g_code_sem += _backbone_back(grad_pred_sem_emb, "sem")
    if grad_pred_det_emb is not None:
        if "det" not in paths:
            raise InvalidState("gradient supplied for absent detail path")
        g_code_det += _backbone_back(grad_pred_det_emb, "det")

    def _decoder_back(grad, key, weight_name, code_grad):
        g = np.asarray(grad, dtype=np.float64)
        g_w, g_b, g_code = _layer_backward(caches, key, t[weight_name + ".W"], g, False, train)
        grads[weight_name + ".W"] += g_w
        grads[weight_name + ".b"] += g_b
        return code_grad + g_code

    if grad_recon_sem_direct is not None:
        g_code_sem = _decoder_back(
            grad_recon_sem_direct, "image.decoder_sem@direct", "image.decoder_sem", g_code_sem
        )
    if grad_recon_det_cross is not None:
        g_code_sem = _decoder_back(
            grad_recon_det_cross, "image.decoder_det@cross", "image.decoder_det", g_code_sem
        )
    if grad_recon_det_direct is not None:
        g_code_det = _decoder_back(
            grad_recon_det_direct, "image.decoder_det@direct", "image.decoder_det", g_code_det
        )
    if grad_recon_sem_cross is not None:
        g_code_det = _decoder_back(
            grad_recon_sem_cross, "image.decoder_sem@cross", "image.decoder_sem", g_code_det
        )

    if g_code_sem is not None:
        g_w, g_b, _ = _layer_backward(
            caches, "image.encoder_sem", t["image.encoder_sem.W"], g_code_sem, False, train
        )
        grads["image.encoder_sem.W"] += g_w
        grads["image.encoder_sem.b"] += g_b
    if g_code_det is not None:
        g_w, g_b, _ = _layer_backward(
            caches, "image.encoder_det", t["image.encoder_det.W"], g_code_det, False, train
        )
        grads["image.encoder_det.W"] += g_w
        grads["image.encoder_det.b"] += g_b
    return grads


def collect_masks(caches: dict) -> dict:
    """Extract the dropout masks recorded by a training forward, for replay."""
    if caches.get("mode") != "train":
        raise InvalidState("masks are only recorded by training-mode forwards")
    masks = {}
    for key, entry in caches.items():
        if key == "mode" or entry.get("mask") is None:
            continue
        masks[key] = entry["mask"]
    return masks


_CFG_INT_FIELDS = (
    "n_semantic_voxels",
    "n_detail_voxels",
    "latent_dim",
    "text_tokens",
    "text_dim",
    "image_tokens",
    "image_dim",
)


def save_params(params: ModelParams, directory) -> None:
    """Write a checkpoint: one MAT1 file per tensor plus manifest and config."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    manifest_lines = []
    for name in sorted(params.tensors):
        tensor = params.tensors[name]
        matrix = tensor[None, :] if tensor.ndim == 1 else tensor
        filename = f"{name}.mat1"
        save_matrix(matrix, out / filename)
        manifest_lines.append(f"{name}={filename} {matrix.shape[0]} {matrix.shape[1]}")
    (out / "manifest.txt").write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")
    cfg_lines = [f"variant={params.variant}"]
    for fname in _CFG_INT_FIELDS:
        cfg_lines.append(f"{fname}={getattr(params.cfg, fname)}")
    cfg_lines.append(f"dropout_codec={params.cfg.dropout_codec!r}")
    cfg_lines.append(f"dropout_backbone={params.cfg.dropout_backbone!r}")
    (out / "model.cfg").write_text("\n".join(sorted(cfg_lines)) + "\n", encoding="utf-8")


def load_params(directory) -> ModelParams:
    """Load a checkpoint written by :func:`save_params`; bit-exact round trip."""
    root = Path(directory)
    cfg_path = root / "model.cfg"
    if not cfg_path.exists():
        raise FormatError(f"missing model.cfg in {root}", offset=0)
    entries = {}
    for line in cfg_path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        entries[key] = value
    try:
        variant = entries["variant"]
        cfg = ModelConfig(
            **{f: int(entries[f]) for f in _CFG_INT_FIELDS},
            dropout_codec=float(entries["dropout_codec"]),
            dropout_backbone=float(entries["dropout_backbone"]),
        )
    except KeyError as exc:
        raise FormatError(f"model.cfg missing key {exc}", offset=0) from exc

    manifest_path = root / "manifest.txt"
    if not manifest_path.exists():
        raise FormatError(f"missing manifest.txt in {root}", offset=0)
    expected = expected_tensors(cfg, variant)
    tensors = {}
    text = manifest_path.read_text(encoding="utf-8")
    offset = 0
    for line in text.splitlines():
        if line.strip():
            try:
                name, rest = line.split("=", 1)
                filename, rows, cols = rest.split(" ")
                rows, cols = int(rows), int(cols)
            except ValueError:
                raise FormatError(f"malformed manifest line {line!r}", offset=offset) from None
            matrix = load_matrix(root / filename)
            if matrix.shape != (rows, cols):
                raise FormatError(
                    f"{filename}: stored shape {matrix.shape} disagrees with manifest "
                    f"({rows}, {cols})",
                    offset=offset,
                )
            if name in expected and len(expected[name]) == 1:
                if rows != 1:
                    raise FormatError(f"{name}: bias must be stored 1 x n", offset=offset)
                tensors[name] = matrix[0]
            else:
                tensors[name] = matrix
        offset += len(line) + 1
    return ModelParams(cfg, variant, tensors)
