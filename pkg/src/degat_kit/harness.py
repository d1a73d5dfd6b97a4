"""Synthetic deformable scenes, the training/evaluation loop, config and
checkpoint I/O.

The scene generator stands in for real endoscopic footage at desk scale:
a smooth random depth surface, small rigid per-frame camera motion,
depth-correlated shading, and a moving bright bar that overwrites both
color and depth like an instrument occluder. Everything is deterministic
per seed.
"""

import json
import os
import time
from dataclasses import asdict, dataclass

import numpy as np

from .geometry import CameraParams
from .metrics import SsimConfig, psnr, ssim
from .objective import LossWeights, camera_loss
from .toy_model import ModelConfig, forward, init_model_params, loss_and_grads, sgd_step

__all__ = [
    "SyntheticScene",
    "RunReport",
    "NumericAbort",
    "generate_scene",
    "train",
    "evaluate",
    "ablate_k",
    "load_config",
    "save_checkpoint",
    "load_checkpoint",
]

TRAINER_KEYS = {"steps", "lr", "n_frames", "scene_seed"}
WEIGHT_KEYS = {"alpha", "gamma"}
MODEL_KEYS = {
    "image_h", "image_w", "patch_size", "embed_dim", "n_blocks", "n_heads",
    "k_neighbors", "degat_placement", "token_conditioning", "attention_bias",
    "seed", "knn_metric", "cond_hidden", "bias_hidden", "n_buckets",
    "ffn_mult", "cam_hidden",
}

DEFAULT_TRAINER = {"steps": 300, "lr": 0.02, "n_frames": 4, "scene_seed": 0}


class NumericAbort(RuntimeError):
    """Raised when training produces a non-finite loss."""

    def __init__(self, step, loss):
        super().__init__(f"non-finite loss at step {step}: {loss}")
        self.step = step


@dataclass
class SyntheticScene:
    frames: list  # (H, W) float grids in [0, 1]
    gt_depth: list  # (H, W) positive depth grids
    gt_cameras: list  # CameraParams with orthonormal rotations
    occluder_masks: list  # (H, W) bool grids


@dataclass
class RunReport:
    history: list  # LossBreakdown per step
    initial_metrics: dict
    final_metrics: dict
    wall_time: float
    config: dict


def _rodrigues(axis, angle):
    axis = axis / np.linalg.norm(axis)
    kx, ky, kz = axis
    k_cross = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + np.sin(angle) * k_cross + (1.0 - np.cos(angle)) * (k_cross @ k_cross)


def generate_scene(seed, n_frames=4, h=32, w=32):
    """Deterministic synthetic deformable scene with an occluding bar."""
    if h < 16 or w < 16:
        raise ValueError(f"scene must be at least 16x16, got {h}x{w}")
    if n_frames < 1:
        raise ValueError("need at least one frame")
    rng = np.random.default_rng(seed)

    yy, xx = np.meshgrid(
        np.linspace(0.0, 1.0, h), np.linspace(0.0, 1.0, w), indexing="ij"
    )
    n_bumps = 4
    amps = rng.uniform(-0.3, 0.3, n_bumps)
    cxs = rng.uniform(0.1, 0.9, n_bumps)
    cys = rng.uniform(0.1, 0.9, n_bumps)
    sig = rng.uniform(0.1, 0.25, n_bumps)
    base = np.full((h, w), 1.5)
    for a, cx, cy, s in zip(amps, cxs, cys, sig):
        base = base + a * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * s**2))

    bar_w = max(2, w // 8)
    focal_gt = 1.2
    frames, depths, cams, masks = [], [], [], []
    for t in range(n_frames):
        # small smooth per-frame deformation of the surface
        phase = rng.uniform(0.0, 2.0 * np.pi)
        deform = 0.02 * np.sin(2.0 * np.pi * xx + phase) * np.cos(2.0 * np.pi * yy)
        depth = base + deform

        norm = (depth - depth.min()) / max(depth.max() - depth.min(), 1e-12)
        frame = 0.3 + 0.5 * (1.0 - norm) + 0.05 * rng.standard_normal((h, w))

        # instrument bar sweeping across the view
        col = int(round((t / max(n_frames - 1, 1)) * (w - bar_w)))
        mask = np.zeros((h, w), dtype=bool)
        mask[:, col:col + bar_w] = True
        frame = np.where(mask, 0.95, frame)
        depth = np.where(mask, 0.6, depth)

        axis = rng.standard_normal(3)
        angle = 0.03 * t + rng.uniform(-0.005, 0.005)
        rotation = _rodrigues(axis, angle)
        translation = 0.02 * t * rng.standard_normal(3)
        cams.append(
            CameraParams(
                rotation=rotation,
                translation=translation,
                focal=focal_gt,
                principal=((w - 1) / 2.0, (h - 1) / 2.0),
            )
        )
        frames.append(np.clip(frame, 0.0, 1.0))
        depths.append(depth)
        masks.append(mask)
    return SyntheticScene(
        frames=frames, gt_depth=depths, gt_cameras=cams, occluder_masks=masks
    )


def _normalized(depth):
    lo, hi = depth.min(), depth.max()
    if hi - lo <= 0.0:
        return np.zeros_like(depth)
    return (depth - lo) / (hi - lo)


def evaluate(params, cfg, scene, weights=LossWeights()):
    """Depth error, camera loss, and PSNR/SSIM on normalized depth images."""
    depth_maps, cams, _ = forward(params, cfg, scene.frames)
    abs_err = float(
        np.mean([np.abs(dm.depth - gt).mean() for dm, gt in zip(depth_maps, scene.gt_depth)])
    )
    cam_err = float(
        np.mean([camera_loss(c, gt) for c, gt in zip(cams, scene.gt_cameras)])
    )
    ssim_cfg = SsimConfig(dynamic_range=1.0)
    psnrs, ssims = [], []
    for dm, gt in zip(depth_maps, scene.gt_depth):
        a = _normalized(dm.depth)
        b = _normalized(np.asarray(gt))
        psnrs.append(psnr(a, b, 1.0))
        if min(a.shape) >= ssim_cfg.window:
            ssims.append(ssim(a, b, ssim_cfg))
    out = {
        "mean_abs_depth_error": abs_err,
        "camera_loss": cam_err,
        "psnr": float(np.mean(psnrs)),
    }
    if ssims:
        out["ssim"] = float(np.mean(ssims))
    return out


def train(cfg, scene, steps, lr, weights=LossWeights(), params=None):
    """Plain gradient descent on the base loss; aborts on non-finite loss."""
    t0 = time.perf_counter()
    if params is None:
        params = init_model_params(cfg)
    initial_metrics = evaluate(params, cfg, scene, weights)
    history = []
    for step in range(steps):
        breakdown, grads = loss_and_grads(
            params, cfg, scene.frames, scene.gt_depth, scene.gt_cameras, weights
        )
        if not np.isfinite(breakdown.total):
            raise NumericAbort(step, breakdown.total)
        history.append(breakdown)
        params = sgd_step(params, grads, lr)
    final_metrics = evaluate(params, cfg, scene, weights)
    report = RunReport(
        history=history,
        initial_metrics=initial_metrics,
        final_metrics=final_metrics,
        wall_time=time.perf_counter() - t0,
        config={**asdict(cfg), "steps": steps, "lr": lr,
                "alpha": weights.alpha, "gamma": weights.gamma},
    )
    return report, params


def ablate_k(cfg, scene, k_values, steps, lr, weights=LossWeights()):
    """One train+evaluate run per neighbor count, same seed throughout."""
    rows = []
    for k in k_values:
        cfg_k = ModelConfig(**{**asdict(cfg), "k_neighbors": int(k)})
        report, _ = train(cfg_k, scene, steps, lr, weights)
        final = report.history[-1] if report.history else None
        rows.append(
            {
                "k": int(k),
                "final_total": final.total if final else None,
                "final_cam": final.cam if final else None,
                "final_reg": final.reg if final else None,
                **{f"metric_{m}": v for m, v in report.final_metrics.items()},
            }
        )
    return rows


# ---------------------------------------------------------------------------
# config and checkpoint I/O


def load_config(path):
    """Read a flat JSON config; unknown keys are errors (catches typos)."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    allowed = MODEL_KEYS | WEIGHT_KEYS | TRAINER_KEYS
    unknown = set(raw) - allowed
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    cfg = ModelConfig(**{k: v for k, v in raw.items() if k in MODEL_KEYS})
    weights = LossWeights(
        alpha=raw.get("alpha", 0.2), gamma=raw.get("gamma", 1.0)
    )
    trainer = {**DEFAULT_TRAINER, **{k: raw[k] for k in TRAINER_KEYS if k in raw}}
    return cfg, weights, trainer


def save_checkpoint(path, cfg, params):
    """JSON manifest plus one raw little-endian float64 blob per parameter."""
    os.makedirs(path, exist_ok=True)
    manifest = {
        "config": asdict(cfg),
        "params": {k: list(v.shape) for k, v in sorted(params.items())},
    }
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    for k, v in params.items():
        with open(os.path.join(path, f"{k}.bin"), "wb") as fh:
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(os.path.join(path, "manifest.json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    cfg = ModelConfig(**manifest["config"])
    params = {}
    for k, shape in manifest["params"].items():
        blob = np.fromfile(os.path.join(path, f"{k}.bin"), dtype="<f8")
        params[k] = blob.reshape(shape).astype(np.float64)
    return cfg, params
