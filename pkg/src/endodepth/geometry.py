"""Pinhole camera model, SE(3) pose algebra, and differentiable view warping.

All operations are pure torch functions and preserve the dtype of their
inputs, so the same code path serves float64 verification and float32
training. Tensors may carry arbitrary leading batch dimensions as long as
the pose and depth batch shapes broadcast against each other.

Coordinate conventions: pixel (x, y) with x along width, origin at the
center of the top-left pixel; camera looks down +z; depth is the camera-z
coordinate in millimetres.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

_Z_EPS = 1e-6  # minimum transformed depth (mm) treated as in front of the camera


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics. Focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside image "
                f"{self.width}x{self.height}"
            )

    def matrix(self, dtype=torch.float32, device=None) -> torch.Tensor:
        """3x3 calibration matrix K."""
        k = torch.zeros(3, 3, dtype=dtype, device=device)
        k[0, 0] = self.fx
        k[1, 1] = self.fy
        k[0, 2] = self.cx
        k[1, 2] = self.cy
        k[2, 2] = 1.0
        return k

    def scaled(self, width: int, height: int) -> "CameraIntrinsics":
        """Intrinsics for the same camera after resizing to width x height."""
        sx = width / self.width
        sy = height / self.height
        return CameraIntrinsics(
            fx=self.fx * sx, fy=self.fy * sy, cx=self.cx * sx, cy=self.cy * sy,
            width=width, height=height,
        )


@dataclass
class Pose:
    """Rigid transform: x -> rotation @ x + translation.

    rotation: (..., 3, 3) orthonormal, det +1; translation: (..., 3) in mm.
    Leading dimensions are batch dimensions.
    """

    rotation: torch.Tensor
    translation: torch.Tensor

    def __post_init__(self):
        if self.rotation.shape[-2:] != (3, 3):
            raise ValueError(f"rotation must be (...,3,3), got {tuple(self.rotation.shape)}")
        if self.translation.shape[-1] != 3:
            raise ValueError(f"translation must be (...,3), got {tuple(self.translation.shape)}")

    def validate(self, atol: float = 1e-6) -> None:
        """Raise if the rotation block is not a proper rotation."""
        rt_r = self.rotation.transpose(-1, -2) @ self.rotation
        eye = torch.eye(3, dtype=self.rotation.dtype, device=self.rotation.device)
        if not torch.allclose(rt_r, eye.expand_as(rt_r), atol=atol):
            raise ValueError("rotation is not orthonormal")
        det = torch.linalg.det(self.rotation)
        if not torch.allclose(det, torch.ones_like(det), atol=atol):
            raise ValueError("rotation determinant is not +1")

    @staticmethod
    def identity(dtype=torch.float32, device=None) -> "Pose":
        return Pose(
            rotation=torch.eye(3, dtype=dtype, device=device),
            translation=torch.zeros(3, dtype=dtype, device=device),
        )

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self . other)(x) = self(other(x))."""
        return Pose(
            rotation=self.rotation @ other.rotation,
            translation=(self.rotation @ other.translation.unsqueeze(-1)).squeeze(-1)
            + self.translation,
        )

    def invert(self) -> "Pose":
        rot_t = self.rotation.transpose(-1, -2)
        return Pose(
            rotation=rot_t,
            translation=-(rot_t @ self.translation.unsqueeze(-1)).squeeze(-1),
        )

    def matrix3x4(self) -> torch.Tensor:
        """(..., 3, 4) matrix [R | t]."""
        return torch.cat([self.rotation, self.translation.unsqueeze(-1)], dim=-1)

    def to(self, dtype=None, device=None) -> "Pose":
        return Pose(
            rotation=self.rotation.to(dtype=dtype, device=device),
            translation=self.translation.to(dtype=dtype, device=device),
        )


@dataclass
class PixelField:
    """Continuous source-pixel coordinates for every target pixel.

    coords: (..., H, W, 2) as (x, y) in pixels; valid: (..., H, W) bool,
    true where the coordinate landed inside the image with positive
    transformed depth.
    """

    coords: torch.Tensor
    valid: torch.Tensor

    @staticmethod
    def identity(height: int, width: int, dtype=torch.float32, device=None) -> "PixelField":
        ys, xs = torch.meshgrid(
            torch.arange(height, dtype=dtype, device=device),
            torch.arange(width, dtype=dtype, device=device),
            indexing="ij",
        )
        coords = torch.stack([xs, ys], dim=-1)
        valid = torch.ones(height, width, dtype=torch.bool, device=device)
        return PixelField(coords=coords, valid=valid)


def _skew(v: torch.Tensor) -> torch.Tensor:
    """(...,3) -> (...,3,3) cross-product matrix."""
    zero = torch.zeros_like(v[..., 0])
    rows = [
        torch.stack([zero, -v[..., 2], v[..., 1]], dim=-1),
        torch.stack([v[..., 2], zero, -v[..., 0]], dim=-1),
        torch.stack([-v[..., 1], v[..., 0], zero], dim=-1),
    ]
    return torch.stack(rows, dim=-2)


def pose_from_params(axis_angle: torch.Tensor, translation: torch.Tensor) -> Pose:
    """Build a Pose from an axis-angle rotation vector and a translation.

    Rodrigues' formula with a Taylor fallback near zero angle, so the map
    is smooth (and differentiable) everywhere including the identity.
    """
    axis_angle = torch.as_tensor(axis_angle)
    translation = torch.as_tensor(translation)
    if not torch.isfinite(axis_angle).all() or not torch.isfinite(translation).all():
        raise ValueError("pose parameters must be finite")
    theta2 = (axis_angle * axis_angle).sum(dim=-1)
    theta = torch.sqrt(theta2.clamp_min(1e-30))
    small = theta2 < 1e-12
    # sin(t)/t and (1-cos(t))/t^2 with series expansions for tiny t
    a = torch.where(small, 1.0 - theta2 / 6.0, torch.sin(theta) / theta)
    b = torch.where(small, 0.5 - theta2 / 24.0, (1.0 - torch.cos(theta)) / theta2.clamp_min(1e-30))
    k = _skew(axis_angle)
    eye = torch.eye(3, dtype=axis_angle.dtype, device=axis_angle.device)
    rot = eye + a[..., None, None] * k + b[..., None, None] * (k @ k)
    return Pose(rotation=rot, translation=translation)


def pose_log(pose: Pose) -> torch.Tensor:
    """Recover the axis-angle vector of a rotation (angle in [0, pi))."""
    rot = pose.rotation
    trace = rot[..., 0, 0] + rot[..., 1, 1] + rot[..., 2, 2]
    cos_t = ((trace - 1.0) / 2.0).clamp(-1.0, 1.0)
    theta = torch.acos(cos_t)
    vee = torch.stack(
        [
            rot[..., 2, 1] - rot[..., 1, 2],
            rot[..., 0, 2] - rot[..., 2, 0],
            rot[..., 1, 0] - rot[..., 0, 1],
        ],
        dim=-1,
    )
    sin_t = torch.sin(theta)
    small = theta < 1e-6
    # vee = 2 sin(t) * axis; scale to t * axis
    scale = torch.where(small, 0.5 + theta**2 / 12.0, theta / (2.0 * sin_t.clamp_min(1e-30)))
    return vee * scale[..., None]


def project_correspondence(
    intrinsics: CameraIntrinsics, depth: torch.Tensor, pose: Pose
) -> PixelField:
    """Map each target pixel to its location in the source view.

    Back-projects every pixel with its depth, applies the target-to-source
    rigid transform, and reprojects with the same camera. Pixels whose
    transformed depth is not positive, or whose reprojection lands outside
    the image, are flagged invalid; their coordinates stay finite.

    Args:
        intrinsics: camera model shared by target and source views.
        depth: (..., H, W) positive depth of the target view in mm.
        pose: target-to-source transform, batch shape broadcastable
            against depth's batch shape.

    Returns:
        PixelField with coords (..., H, W, 2) and validity mask.
    """
    h, w = depth.shape[-2:]
    if (w, h) != (intrinsics.width, intrinsics.height):
        raise ValueError(
            f"depth {w}x{h} does not match intrinsics {intrinsics.width}x{intrinsics.height}"
        )
    if not torch.isfinite(depth).all():
        raise ValueError("depth contains non-finite values")
    if (depth <= 0).any():
        raise ValueError("depth must be strictly positive everywhere")

    dtype, device = depth.dtype, depth.device
    ident = PixelField.identity(h, w, dtype=dtype, device=device)
    ones = torch.ones(h, w, 1, dtype=dtype, device=device)
    homog = torch.cat([ident.coords, ones], dim=-1)  # (H, W, 3)

    k = intrinsics.matrix(dtype=dtype, device=device)
    k_inv = torch.linalg.inv(k)
    rays = homog @ k_inv.transpose(0, 1)  # (H, W, 3), z component is 1
    points = depth[..., None] * rays  # (..., H, W, 3)

    rot = pose.rotation.to(dtype=dtype, device=device)
    trans = pose.translation.to(dtype=dtype, device=device)
    # (..., H, W, 3) @ (..., 3, 3)^T; insert spatial axes into the pose batch
    moved = torch.matmul(points, rot.unsqueeze(-3).transpose(-1, -2)) + trans[..., None, None, :]

    z = moved[..., 2]
    valid_z = z > _Z_EPS
    safe_z = torch.where(valid_z, z, torch.ones_like(z))
    proj = torch.matmul(moved, k.transpose(0, 1))
    coords = proj[..., :2] / safe_z[..., None]

    # tolerance absorbs round-off of the K @ K^-1 chain at the image border
    tol = 32 * max(w, h) * torch.finfo(dtype).eps
    in_bounds = (
        (coords[..., 0] >= -tol)
        & (coords[..., 0] <= w - 1 + tol)
        & (coords[..., 1] >= -tol)
        & (coords[..., 1] <= h - 1 + tol)
    )
    return PixelField(coords=coords, valid=in_bounds & valid_z)


def inverse_warp(source: torch.Tensor, field: PixelField) -> tuple[torch.Tensor, torch.Tensor]:
    """Bilinearly sample the source image at the field's coordinates.

    Out-of-bounds coordinates are clamped to the border but remain flagged
    invalid in the returned mask. Differentiable w.r.t. both the source
    values and the coordinates.

    Args:
        source: (..., C, H, W) image to sample from.
        field: pixel field whose spatial size matches the source.

    Returns:
        (warped, mask): warped (..., C, H, W) and the field's validity mask.
    """
    h, w = source.shape[-2:]
    if field.coords.shape[-3:-1] != (h, w):
        raise ValueError(
            f"field resolution {tuple(field.coords.shape[-3:-1])} does not match "
            f"source {h}x{w}"
        )
    coords = field.coords
    batch_shape = torch.broadcast_shapes(source.shape[:-3], coords.shape[:-3])
    src = source.expand(*batch_shape, *source.shape[-3:]).reshape(-1, *source.shape[-3:])
    grid = coords.expand(*batch_shape, h, w, 2).reshape(-1, h, w, 2)

    grid = grid.to(dtype=src.dtype)
    gx = 2.0 * grid[..., 0] / (w - 1) - 1.0
    gy = 2.0 * grid[..., 1] / (h - 1) - 1.0
    norm_grid = torch.stack([gx, gy], dim=-1)
    warped = F.grid_sample(
        src, norm_grid, mode="bilinear", padding_mode="border", align_corners=True
    )
    warped = warped.reshape(*batch_shape, *source.shape[-3:])
    return warped, field.valid
