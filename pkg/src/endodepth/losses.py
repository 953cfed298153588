"""Loss terms for the depth-decoding phase.

The photometric term blends an SSIM score (3x3 window) with an L1 term;
the regularizers are edge-weighted first-difference smoothness penalties
on the appearance residual and the disparity, plus an auxiliary
photometric term that supervises the appearance residual through the
validity mask. All pixel losses are masked means, so their magnitude does
not depend on resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2


@dataclass
class LossConfig:
    """Weights of the total objective: photometric + kappa * regularizers."""

    alpha: float = 0.85
    kappa: float = 1.0
    lambda_rs: float = 0.01
    lambda_ax: float = 0.01
    lambda_es: float = 0.0001

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0,1], got {self.alpha}")
        for name in ("kappa", "lambda_rs", "lambda_ax", "lambda_es"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def _as_batched(img: torch.Tensor) -> tuple[torch.Tensor, tuple]:
    lead = img.shape[:-3]
    return img.reshape(-1, *img.shape[-3:]), lead


def ssim(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Per-pixel SSIM map with a 3x3 mean filter, averaged over channels.

    Inputs are (..., C, H, W); the output is (..., H, W).
    """
    xb, lead = _as_batched(x)
    yb, _ = _as_batched(y)
    xb = F.pad(xb, (1, 1, 1, 1), mode="reflect")
    yb = F.pad(yb, (1, 1, 1, 1), mode="reflect")
    mu_x = F.avg_pool2d(xb, 3, 1)
    mu_y = F.avg_pool2d(yb, 3, 1)
    sigma_x = F.avg_pool2d(xb * xb, 3, 1) - mu_x * mu_x
    sigma_y = F.avg_pool2d(yb * yb, 3, 1) - mu_y * mu_y
    sigma_xy = F.avg_pool2d(xb * yb, 3, 1) - mu_x * mu_y
    num = (2 * mu_x * mu_y + _SSIM_C1) * (2 * sigma_xy + _SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + _SSIM_C1) * (sigma_x + sigma_y + _SSIM_C2)
    return (num / den).mean(dim=1).reshape(*lead, *x.shape[-2:])


def _photometric_map(a: torch.Tensor, b: torch.Tensor, alpha: float) -> torch.Tensor:
    """alpha * (1 - SSIM)/2 + (1 - alpha) * L1, per pixel."""
    l1 = (a - b).abs().mean(dim=-3)
    if alpha == 0.0:
        return l1
    return alpha * (1.0 - ssim(a, b)) / 2.0 + (1.0 - alpha) * l1


def _masked_mean(per_pixel: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    mask = mask.to(dtype=per_pixel.dtype)
    count = mask.sum()
    if count.item() == 0:
        raise ValueError("validity mask is empty; warp is degenerate")
    return (per_pixel * mask).sum() / count


def photometric_loss(
    target: torch.Tensor, synth: torch.Tensor, mask: torch.Tensor, alpha: float
) -> torch.Tensor:
    """Masked photometric discrepancy between the target and a synthesized view.

    Args:
        target: (..., C, H, W) target frame.
        synth: synthesized frame of the same shape.
        mask: (..., H, W) bool validity mask; must select at least one pixel.
        alpha: SSIM weight in [0, 1].
    """
    if target.shape != synth.shape:
        raise ValueError(f"shape mismatch: {tuple(target.shape)} vs {tuple(synth.shape)}")
    return _masked_mean(_photometric_map(target, synth, alpha), mask)


def _grads_xy(img: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """First differences along x and y for (..., H, W) grids."""
    gx = img[..., :, 1:] - img[..., :, :-1]
    gy = img[..., 1:, :] - img[..., :-1, :]
    return gx, gy


def _channel_mean_abs(img: torch.Tensor) -> torch.Tensor:
    """(..., C, H, W) -> (..., H, W) mean absolute intensity over channels."""
    return img.abs().mean(dim=-3)


def residual_smoothness(
    c_delta: torch.Tensor, target: torch.Tensor, synth: torch.Tensor
) -> torch.Tensor:
    """Edge-weighted smoothness of the appearance residual.

    Gradients of the residual are damped where the target/synthesized
    absolute-difference image itself has gradients, and the sum is
    normalized by the pixel count.
    """
    if c_delta.shape != target.shape or target.shape != synth.shape:
        raise ValueError("c_delta, target and synth must share a shape")
    diff = _channel_mean_abs(target - synth)
    dgx, dgy = _grads_xy(diff)
    cgx, cgy = _grads_xy(c_delta)
    cgx = cgx.abs().mean(dim=-3)
    cgy = cgy.abs().mean(dim=-3)
    n = diff.numel()
    total = (cgx * torch.exp(-dgx.abs())).sum() + (cgy * torch.exp(-dgy.abs())).sum()
    return total / n


def auxiliary_loss(
    synth: torch.Tensor,
    target: torch.Tensor,
    c_delta: torch.Tensor,
    mask: torch.Tensor,
    alpha: float,
) -> torch.Tensor:
    """Photometric term between the synthesized frame and the residual-corrected target."""
    if synth.shape != target.shape or c_delta.shape != target.shape:
        raise ValueError("synth, target and c_delta must share a shape")
    return _masked_mean(_photometric_map(synth, target + c_delta, alpha), mask)


def edge_smoothness(
    grid: torch.Tensor, image: torch.Tensor, mean_normalize: bool = True
) -> torch.Tensor:
    """Edge-aware smoothness of a depth/disparity grid against an image.

    Args:
        grid: (..., H, W) disparity (or depth) values.
        image: (..., C, H, W) frame providing the edge weights.
        mean_normalize: divide the grid by its spatial mean first (the
            usual disparity normalization; disable for signed fields).
    """
    if grid.shape[-2:] != image.shape[-2:]:
        raise ValueError("grid and image resolutions differ")
    if mean_normalize:
        mean = grid.mean(dim=(-2, -1), keepdim=True)
        grid = grid / (mean.abs() + 1e-7)
    igx, igy = _grads_xy(_channel_mean_abs(image))
    ggx, ggy = _grads_xy(grid)
    n = grid.numel()
    total = (ggx.abs() * torch.exp(-igx.abs())).sum() + (
        ggy.abs() * torch.exp(-igy.abs())
    ).sum()
    return total / n


def total_loss(
    photometric: torch.Tensor,
    residual_smooth: torch.Tensor,
    auxiliary: torch.Tensor,
    edge_smooth: torch.Tensor,
    config: LossConfig,
) -> torch.Tensor:
    """photometric + kappa * (lambda_rs*rs + lambda_ax*ax + lambda_es*es)."""
    parts = {
        "photometric": photometric,
        "residual_smooth": residual_smooth,
        "auxiliary": auxiliary,
        "edge_smooth": edge_smooth,
    }
    for name, value in parts.items():
        if not torch.isfinite(torch.as_tensor(value)).all():
            raise FloatingPointError(f"loss term '{name}' is not finite: {value}")
    reg = (
        config.lambda_rs * residual_smooth
        + config.lambda_ax * auxiliary
        + config.lambda_es * edge_smooth
    )
    return photometric + config.kappa * reg
