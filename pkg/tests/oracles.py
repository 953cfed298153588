"""Independent scalar reference routines shared by the test modules.

Everything here is deliberately written as plain loops / scalar numpy so
it cannot share a code path with the package implementations it checks.
"""

import math

import numpy as np
import torch


def scalar_correspondence(intr, depth_value, r, t, px, py):
    """Single-pixel warping chain: back-project, transform, reproject."""
    k = np.array(
        [[intr.fx, 0.0, intr.cx], [0.0, intr.fy, intr.cy], [0.0, 0.0, 1.0]], dtype=np.float64
    )
    cam = depth_value * (np.linalg.inv(k) @ np.array([px, py, 1.0]))
    moved = np.asarray(r, dtype=np.float64) @ cam + np.asarray(t, dtype=np.float64)
    proj = k @ moved
    return proj[0] / proj[2], proj[1] / proj[2], moved[2]


def crossnorm_scalar(z, z_hat, mu, sigma2, gamma, eps):
    """Element-wise feature alignment formula, one scalar at a time."""
    return (z - mu) / math.sqrt(sigma2 + eps) * gamma + z_hat


def depth_metrics_scalar(pred, gt):
    """The five depth statistics via explicit accumulation loops."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    gt = np.asarray(gt, dtype=np.float64).ravel()
    n = len(gt)
    abs_rel = sq_rel = mse = mse_log = hits = 0.0
    for d, d_star in zip(pred, gt):
        abs_rel += abs(d_star - d) / d_star
        sq_rel += abs(d_star - d) ** 2 / d_star
        mse += abs(d_star - d) ** 2
        mse_log += (math.log(d_star) - math.log(d)) ** 2
        if max(d_star / d, d / d_star) < 1.25:
            hits += 1.0
    return (
        abs_rel / n,
        sq_rel / n,
        math.sqrt(mse / n),
        math.sqrt(mse_log / n),
        hits / n,
    )


def gradcheck_scalar(fn, x, rel_tol, n_probes=16, eps=1e-6, seed=0):
    """Compare autograd of a scalar-valued fn against central differences.

    Probes randomly chosen elements of x (float64). Fails the calling test
    via assert when the relative error at any probe exceeds rel_tol.
    """
    assert x.dtype == torch.float64, "gradient check must run in double precision"
    x = x.detach().clone().requires_grad_(True)
    (grad,) = torch.autograd.grad(fn(x), x)
    rng = np.random.default_rng(seed)
    flat = x.detach().reshape(-1)
    worst = 0.0
    for _ in range(n_probes):
        i = int(rng.integers(0, flat.numel()))
        xp = flat.clone()
        xp[i] += eps
        xm = flat.clone()
        xm[i] -= eps
        fd = (fn(xp.reshape(x.shape)).item() - fn(xm.reshape(x.shape)).item()) / (2 * eps)
        an = grad.reshape(-1)[i].item()
        err = abs(an - fd) / max(abs(an), abs(fd), 1e-8)
        worst = max(worst, err)
        assert err < rel_tol, f"gradient mismatch at flat index {i}: autograd {an}, fd {fd}"
    return worst
