"""Gradient verification suites used by tests and the gradcheck command.

Every analytic gradient in the library is compared against central finite
differences (step 1e-5) across many seeded random instances. Pure-MSE
paths are held to 1e-6 relative error; paths through cosine
normalizations to 1e-5; paths through the CKA quotient to 1e-4.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import (
    LossValueGrad,
    cka_loss,
    crec_loss,
    grad_check,
    image_total_loss,
    mg_loss,
    mse_loss,
    sims_loss,
    text_total_loss,
)
from .model import (
    ModelConfig,
    ModelParams,
    collect_masks,
    image_branch_backward,
    image_branch_forward,
    init_params,
    text_branch_backward,
    text_branch_forward,
)
from .rng import Rng

FD_STEP = 1e-5


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_error: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_error < self.threshold


def _crec_arg_check(rng: Rng) -> float:
    n_s, n_d = 3, 5
    f_s = rng.child("f_s").normal(n_s)
    f_d = rng.child("f_d").normal(n_d)
    recons = [
        rng.child("r0").normal(n_s),
        rng.child("r1").normal(n_d),
        rng.child("r2").normal(n_d),
        rng.child("r3").normal(n_s),
    ]
    grad_fields = (
        "grad_recon_sem_direct",
        "grad_recon_det_cross",
        "grad_recon_det_direct",
        "grad_recon_sem_cross",
    )
    worst = 0.0
    for position, grad_field in enumerate(grad_fields):
        def f(x, position=position, grad_field=grad_field):
            args = list(recons)
            args[position] = x
            result = crec_loss(f_s, f_d, *args)
            return LossValueGrad(result.value, getattr(result, grad_field))

        worst = max(worst, grad_check(f, recons[position], FD_STEP))
    return worst


def _image_total_checks(rng: Rng) -> dict:
    m, d = 4, 3
    n_s, n_d = 3, 5
    fused = rng.child("fused").normal(m, d)
    sem_t = rng.child("sem_t").normal(m, d)
    det_t = rng.child("det_t").normal(m, d)
    pred_sem = rng.child("pred_sem").normal(m, d)
    pred_det = rng.child("pred_det").normal(m, d)
    f_s = rng.child("f_s").normal(n_s)
    f_d = rng.child("f_d").normal(n_d)
    recons = {
        "recon_sem_direct": rng.child("r0").normal(n_s),
        "recon_det_cross": rng.child("r1").normal(n_d),
        "recon_det_direct": rng.child("r2").normal(n_d),
        "recon_sem_cross": rng.child("r3").normal(n_s),
    }

    def call(ps, pd, rec):
        return image_total_loss(
            fused, ps, pd, sem_t, det_t, f_s, f_d,
            rec["recon_sem_direct"], rec["recon_det_cross"],
            rec["recon_det_direct"], rec["recon_sem_cross"],
        )

    out = {}
    out["image_total/pred_sem"] = grad_check(
        lambda x: LossValueGrad(call(x, pred_det, recons).value,
                                call(x, pred_det, recons).grad_pred_sem_emb),
        pred_sem, FD_STEP,
    )
    out["image_total/pred_det"] = grad_check(
        lambda x: LossValueGrad(call(pred_sem, x, recons).value,
                                call(pred_sem, x, recons).grad_pred_det_emb),
        pred_det, FD_STEP,
    )
    worst_recon = 0.0
    for key in recons:
        def f(x, key=key):
            rec = dict(recons)
            rec[key] = x
            result = call(pred_sem, pred_det, rec)
            return LossValueGrad(result.value, getattr(result, f"grad_{key}"))

        worst_recon = max(worst_recon, grad_check(f, recons[key], FD_STEP))
    out["image_total/recons"] = worst_recon
    return out


def loss_gradient_suite(n_seeds: int = 20) -> list:
    """Finite-difference checks for every loss, maximized over seeds."""
    worst = {}

    def record(name, err):
        worst[name] = max(worst.get(name, 0.0), err)

    for s in range(n_seeds):
        rng = Rng(1000 + s, "gradcheck")
        m = 3 + s % 5  # token counts 3..7
        d = 2 + s % 6  # widths 2..7
        target = rng.child("target").normal(m, d)
        pred = rng.child("pred").normal(m, d)
        pred_wide = rng.child("pred_wide").normal(m, d + 1)

        record("mse", grad_check(lambda p: mse_loss(target, p), pred, FD_STEP))
        record(
            "sims/own_first_token",
            grad_check(lambda p: sims_loss(target, p, "own_first_token"), pred, FD_STEP),
        )
        record(
            "sims/target_first_token",
            grad_check(lambda p: sims_loss(target, p, "target_first_token"), pred, FD_STEP),
        )
        record("cka", grad_check(lambda p: cka_loss(target, p), pred_wide, FD_STEP))
        record("mg", grad_check(lambda p: mg_loss(target, p), pred, FD_STEP))
        record("crec", _crec_arg_check(rng.child("crec")))

        f_s = rng.child("f_s").normal(4)
        recon = rng.child("recon").normal(4)
        record(
            "text_total/pred_emb",
            grad_check(
                lambda p: LossValueGrad(
                    text_total_loss(target, p, f_s, recon).value,
                    text_total_loss(target, p, f_s, recon).grad_pred_emb,
                ),
                pred, FD_STEP,
            ),
        )
        record(
            "text_total/recon",
            grad_check(
                lambda r: LossValueGrad(
                    text_total_loss(target, pred, f_s, r).value,
                    text_total_loss(target, pred, f_s, r).grad_recon_sem,
                ),
                recon, FD_STEP,
            ),
        )
        for name, err in _image_total_checks(rng.child("image")).items():
            record(name, err)

    # Standalone MSE paths are exact quadratics and held to 1e-6; paths
    # through composite totals inherit the 1e-4 budget of their CKA part.
    thresholds = {
        "mse": 1e-6,
        "sims/own_first_token": 1e-5,
        "sims/target_first_token": 1e-5,
        "cka": 1e-4,
        "mg": 1e-4,
        "crec": 1e-6,
        "text_total/pred_emb": 1e-4,
        "text_total/recon": 1e-4,
        "image_total/pred_sem": 1e-4,
        "image_total/pred_det": 1e-4,
        "image_total/recons": 1e-4,
    }
    return [CheckResult(name, worst[name], thresholds[name]) for name in thresholds]


def _tiny_config() -> ModelConfig:
    # 194 parameters; embeddings keep >= 3 tokens because linear CKA of a
    # 2-row representation is identically 1 and would not exercise its grad.
    return ModelConfig(
        n_semantic_voxels=3,
        n_detail_voxels=5,
        latent_dim=3,
        text_tokens=3,
        text_dim=3,
        image_tokens=3,
        image_dim=2,
    )


def _max_param_error(tensors, grads, loss_fn, h=FD_STEP):
    worst = 0.0
    for name in sorted(tensors):
        tensor = tensors[name]
        analytic = grads[name]
        it = np.nditer(tensor, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            perturbed = {k: (v.copy() if k == name else v) for k, v in tensors.items()}
            perturbed[name][idx] += h
            f_plus = loss_fn(perturbed)
            perturbed[name][idx] -= 2 * h
            f_minus = loss_fn(perturbed)
            numeric = (f_plus - f_minus) / (2 * h)
            a = float(analytic[idx])
            denom = max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / denom)
            it.iternext()
    return worst


def _fd_safe(caches, *outputs) -> bool:
    """Reject draws where finite differences cannot resolve the gradient.

    Three tiny-model pathologies are screened out deterministically:
    pre-activations sitting on a ReLU kink (one-sided differences),
    near-zero tokens (cosine gradients blow up), and encoder or backbone
    layers with fewer than two active units. The last case makes the
    network positively homogeneous in a single unit, so some parameters
    move the prediction only radially; the scale-invariant losses have a
    true gradient of exactly zero there, which finite differences see only
    as rounding noise above the 1e-8 denominator floor.
    """
    for key, entry in caches.items():
        if key == "mode" or "z" not in entry:
            continue
        z = entry["z"]
        if np.min(np.abs(z)) < 1e-3:
            return False
        if "encoder" in key:
            # Backbone blocks keep full-rank influence through their
            # residual path; only a collapsed code is pathological.
            mask = entry["mask"]
            alive = (z > 0) if mask is None else (z > 0) & (mask != 0)
            if np.any(alive.sum(axis=1) < 2):
                return False
    for out in outputs:
        norms = np.linalg.norm(out.reshape(-1, out.shape[-1]), axis=1)
        if norms.min() < 1e-2:
            return False
    return True


def model_gradient_suite(n_seeds: int = 20) -> list:
    """Per-parameter finite-difference check of the full backward pass.

    Runs a tiny model in training mode with recorded dropout masks, so the
    replayed forwards used for finite differences traverse exactly the
    same network as the analytic backward pass. Draws whose activations
    sit on a ReLU kink (where finite differences are one-sided) are
    redrawn deterministically.
    """
    cfg = _tiny_config()
    worst_text = 0.0
    worst_image = 0.0
    for s in range(n_seeds):
        base = Rng(2000 + s, "model-gradcheck")
        for attempt in range(300):
            rng = base.child(f"attempt-{attempt}")
            params = init_params(cfg, rng.child("init"))
            vox_sem = rng.child("vox_sem").normal(1, cfg.n_semantic_voxels)
            vox_det = rng.child("vox_det").normal(1, cfg.n_detail_voxels)
            tf = text_branch_forward(vox_sem, params, rng=rng.child("text-masks"))
            ifwd = image_branch_forward(vox_sem, vox_det, params, rng=rng.child("image-masks"))
            if _fd_safe(tf.caches, tf.pred_emb) and _fd_safe(ifwd.caches, ifwd.pred_sem_emb, ifwd.pred_det_emb):
                break
        else:  # pragma: no cover - would indicate a broken generator
            raise RuntimeError("no finite-difference-safe draw found")
        text_target = rng.child("text_target").normal(cfg.text_tokens, cfg.text_dim)
        sem_target = rng.child("sem_target").normal(cfg.image_tokens, cfg.image_dim)
        det_target = rng.child("det_target").normal(cfg.image_tokens, cfg.image_dim)
        fused_target = 0.5 * (sem_target + det_target)

        text_masks = collect_masks(tf.caches)

        def text_loss_value(tensors):
            p = ModelParams(cfg, "full", dict(tensors))
            fwd = text_branch_forward(vox_sem, p, masks=text_masks)
            return text_total_loss(
                text_target, fwd.pred_emb[0], vox_sem[0], fwd.recon_sem[0]
            ).value

        tl = text_total_loss(text_target, tf.pred_emb[0], vox_sem[0], tf.recon_sem[0])
        text_grads = text_branch_backward(
            params, tf, tl.grad_pred_emb[None], tl.grad_recon_sem[None]
        )
        text_tensors = {k: v for k, v in params.tensors.items() if k.startswith("text.")}
        worst_text = max(
            worst_text,
            _max_param_error(
                text_tensors,
                text_grads,
                lambda t: text_loss_value({**params.tensors, **t}),
            ),
        )

        image_masks = collect_masks(ifwd.caches)

        def image_loss_value(tensors):
            p = ModelParams(cfg, "full", dict(tensors))
            fwd = image_branch_forward(vox_sem, vox_det, p, masks=image_masks)
            return image_total_loss(
                fused_target,
                fwd.pred_sem_emb[0],
                fwd.pred_det_emb[0],
                sem_target,
                det_target,
                vox_sem[0],
                vox_det[0],
                fwd.recon_sem_direct[0],
                fwd.recon_det_cross[0],
                fwd.recon_det_direct[0],
                fwd.recon_sem_cross[0],
            ).value

        il = image_total_loss(
            fused_target,
            ifwd.pred_sem_emb[0],
            ifwd.pred_det_emb[0],
            sem_target,
            det_target,
            vox_sem[0],
            vox_det[0],
            ifwd.recon_sem_direct[0],
            ifwd.recon_det_cross[0],
            ifwd.recon_det_direct[0],
            ifwd.recon_sem_cross[0],
        )
        image_grads = image_branch_backward(
            params,
            ifwd,
            grad_pred_sem_emb=il.grad_pred_sem_emb[None],
            grad_pred_det_emb=il.grad_pred_det_emb[None],
            grad_recon_sem_direct=il.grad_recon_sem_direct[None],
            grad_recon_det_cross=il.grad_recon_det_cross[None],
            grad_recon_det_direct=il.grad_recon_det_direct[None],
            grad_recon_sem_cross=il.grad_recon_sem_cross[None],
        )
        image_tensors = {k: v for k, v in params.tensors.items() if k.startswith("image.")}
        worst_image = max(
            worst_image,
            _max_param_error(
                image_tensors,
                image_grads,
                lambda t: image_loss_value({**params.tensors, **t}),
            ),
        )
    return [
        CheckResult("model/text_branch", worst_text, 1e-4),
        CheckResult("model/image_branch", worst_image, 1e-4),
    ]


def run_all(n_seeds: int = 20) -> list:
    return loss_gradient_suite(n_seeds) + model_gradient_suite(n_seeds)
