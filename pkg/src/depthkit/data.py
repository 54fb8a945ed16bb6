"""Synthetic depth scenes, training augmentation and sample sets on disk.

Scenes stand in for real RGB-D datasets: a ground ramp receding towards the
top of the image is occluded by 2-5 nearer spheres and boxes, and the image
is rendered from the depth surface (Lambertian shading, per-object albedo and
depth fog) so that depth is recoverable from appearance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from depthkit.container import read_container, write_container
from depthkit.exceptions import ShapeError
from depthkit.objective import build_validity_mask

LIGHT_DIRECTION = np.array([-0.4, -0.6, 1.0]) / np.linalg.norm([-0.4, -0.6, 1.0])
FOG_COLOR = np.array([0.70, 0.75, 0.80])
NOISE_SIGMA = 0.01


@dataclass
class DepthSample:
    """RGB image in [0, 1], metric depth, validity mask and the seed that made it."""

    rgb: np.ndarray
    depth: np.ndarray
    mask: np.ndarray
    scene_seed: int = -1

    def __post_init__(self) -> None:
        if self.rgb.ndim != 3 or self.rgb.shape[0] != 3:
            raise ShapeError(f"rgb must be 3xHxW, got {self.rgb.shape}")
        if self.depth.shape != (1, *self.rgb.shape[1:]):
            raise ShapeError(f"depth {self.depth.shape} does not match rgb {self.rgb.shape}")
        if self.mask.shape != self.depth.shape:
            raise ShapeError(f"mask {self.mask.shape} does not match depth {self.depth.shape}")
        self.mask = self.mask.astype(bool)

    @property
    def size(self) -> tuple[int, int]:
        return self.rgb.shape[1], self.rgb.shape[2]


@dataclass
class SceneObject:
    """A sphere or box standing in front of the ground ramp."""

    kind: str
    center: tuple[float, float]
    half_extent: tuple[float, float]
    base_depth: float
    albedo: np.ndarray
    slope: tuple[float, float] = (0.0, 0.0)

    def footprint(self, height: int, width: int) -> np.ndarray:
        dy, dx = self._offsets(height, width)
        if self.kind == "sphere":
            return dy * dy + dx * dx < 1.0
        return (np.abs(dy) < 1.0) & (np.abs(dx) < 1.0)

    def depth_map(self, height: int, width: int) -> np.ndarray:
        """Object depth on its footprint, +inf elsewhere."""
        dy, dx = self._offsets(height, width)
        inside = self.footprint(height, width)
        if self.kind == "sphere":
            bulge = np.sqrt(np.clip(1.0 - dy * dy - dx * dx, 0.0, 1.0))
            depth = self.base_depth * (1.0 - 0.3 * bulge)
        else:
            depth = self.base_depth * (1.0 + self.slope[0] * dy + self.slope[1] * dx)
        return np.where(inside, depth, np.inf)

    def _offsets(self, height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
        rows, cols = np.mgrid[0:height, 0:width].astype(np.float64)
        return (
            (rows - self.center[0]) / self.half_extent[0],
            (cols - self.center[1]) / self.half_extent[1],
        )


@dataclass
class ScenePlan:
    """Everything a scene is rendered from."""

    size: tuple[int, int]
    depth_range: tuple[float, float]
    ramp: np.ndarray
    ground_albedo: np.ndarray
    objects: list[SceneObject] = field(default_factory=list)


def plan_scene(seed: int, size: tuple[int, int], depth_range: tuple[float, float]) -> ScenePlan:
    """Lay out the ramp and 2-5 occluders; the first occluder is always a sphere."""
    height, width = size
    if height % 32 or width % 32:
        raise ShapeError(f"scene size must be divisible by 32, got {size}")
    _, d_max = depth_range
    rng = np.random.default_rng(seed)

    near = d_max * rng.uniform(0.15, 0.30)
    far = d_max * rng.uniform(0.80, 0.95)
    tilt = rng.uniform(-0.1, 0.1)
    rows = np.linspace(0.0, 1.0, height)[:, None]
    cols = np.linspace(-0.5, 0.5, width)[None, :]
    ramp = far + (near - far) * rows + tilt * (far - near) * cols * (1.0 - rows)
    ramp = np.clip(ramp, near * 0.9, d_max)

    objects: list[SceneObject] = []
    for index in range(int(rng.integers(2, 6))):
        kind = "sphere" if index == 0 or rng.random() < 0.5 else "box"
        radius = rng.uniform(height / 10, height / 4), rng.uniform(width / 10, width / 4)
        if kind == "sphere":
            radius = (radius[0], radius[0] * width / height)
        center = (rng.uniform(0.2, 0.8) * height, rng.uniform(0.2, 0.8) * width)
        albedo = rng.uniform(0.3, 1.0, size=3)
        slope = (rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1))
        obj = SceneObject(kind, center, radius, 1.0, albedo, slope)
        inside = obj.footprint(height, width)
        if not inside.any():
            continue
        # Nearer than the ramp everywhere under the footprint, boxes' slope included.
        obj.base_depth = float(ramp[inside].min() * rng.uniform(0.45, 0.8))
        objects.append(obj)

    return ScenePlan(
        size=(height, width),
        depth_range=depth_range,
        ramp=ramp,
        ground_albedo=rng.uniform(0.4, 0.9, size=3),
        objects=objects,
    )


def _shade(depth: np.ndarray, d_max: float) -> np.ndarray:
    height, width = depth.shape
    surface = depth / d_max * max(height, width)
    dz_dy, dz_dx = np.gradient(surface)
    normals = np.stack([-dz_dx, -dz_dy, np.ones_like(depth)], axis=-1)
    normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
    return 0.25 + 0.75 * np.clip(normals @ LIGHT_DIRECTION, 0.0, 1.0)


def render_scene(plan: ScenePlan, noise_seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite depth and shaded RGB (channels last) for a plan."""
    height, width = plan.size
    d_min, d_max = plan.depth_range
    depth = plan.ramp.copy()
    albedo = np.broadcast_to(plan.ground_albedo, (height, width, 3)).copy()
    for obj in plan.objects:
        obj_depth = obj.depth_map(height, width)
        nearer = obj_depth < depth
        depth[nearer] = obj_depth[nearer]
        albedo[nearer] = obj.albedo
    depth = np.clip(depth, np.nextafter(d_min, np.inf), d_max)

    shade = _shade(depth, d_max)[..., None]
    fog = 0.6 * (depth / d_max)[..., None]
    rgb = albedo * shade * (1.0 - fog) + fog * FOG_COLOR
    rng = np.random.default_rng(noise_seed)
    rgb = np.clip(rgb + rng.normal(0.0, NOISE_SIGMA, size=rgb.shape), 0.0, 1.0)
    return depth, rgb


def generate_scene(
    seed: int, size: tuple[int, int] = (64, 64), depth_range: tuple[float, float] = (1e-3, 10.0)
) -> DepthSample:
    """Deterministic synthetic RGB-D pair for ``seed``."""
    plan = plan_scene(seed, size, depth_range)
    depth, rgb = render_scene(plan, noise_seed=seed + 1)
    depth = depth[None].astype(np.float32)
    return DepthSample(
        rgb=rgb.transpose(2, 0, 1).astype(np.float32),
        depth=depth,
        mask=build_validity_mask(depth, depth_range),
        scene_seed=seed,
    )


def generate_scenes(
    count: int, seed: int, size: tuple[int, int], depth_range: tuple[float, float]
) -> list[DepthSample]:
    return [generate_scene(seed * 1000 + index, size, depth_range) for index in range(count)]


def augment(
    sample: DepthSample,
    rng: np.random.Generator,
    flip_prob: float = 0.5,
    max_rotation: float = 2.5,
    brightness: tuple[float, float] = (0.9, 1.1),
    depth_range: tuple[float, float] | None = None,
) -> DepthSample:
    """Random horizontal flip, small rotation and brightness scaling.

    Flip and rotation move RGB and depth together; pixels rotated in from
    outside the frame are masked out. Brightness only touches RGB.
    """
    rgb, depth, mask = sample.rgb.copy(), sample.depth.copy(), sample.mask.copy()
    flip = rng.random() < flip_prob
    angle = rng.uniform(-max_rotation, max_rotation) if max_rotation > 0 else 0.0
    scale = rng.uniform(*brightness)

    if flip:
        rgb, depth, mask = rgb[..., ::-1], depth[..., ::-1], mask[..., ::-1]
    if angle != 0.0:
        rotate = dict(angle=angle, axes=(1, 2), reshape=False, mode="constant", cval=0.0)
        rgb = ndimage.rotate(rgb, order=1, **rotate)
        depth = ndimage.rotate(depth, order=0, **rotate)
        inside = ndimage.rotate(mask.astype(np.float32), order=0, **rotate) > 0.5
        mask = inside & (depth > 0)
        if depth_range is not None:
            mask &= build_validity_mask(depth, depth_range)
    rgb = np.clip(rgb * scale, 0.0, 1.0)

    return DepthSample(
        rgb=np.ascontiguousarray(rgb, dtype=np.float32),
        depth=np.ascontiguousarray(depth, dtype=np.float32),
        mask=np.ascontiguousarray(mask),
        scene_seed=sample.scene_seed,
    )


def save_samples(path: str | Path, samples: list[DepthSample]) -> Path:
    entries: list[tuple[str, np.ndarray]] = []
    for index, sample in enumerate(samples):
        prefix = f"sample.{index:04d}"
        entries.append((f"{prefix}.rgb", sample.rgb.astype(np.float32)))
        entries.append((f"{prefix}.depth", sample.depth.astype(np.float32)))
        entries.append((f"{prefix}.mask", sample.mask.astype(np.float32)))
        entries.append((f"{prefix}.seed", np.array(sample.scene_seed, dtype=np.float64)))
    return write_container(path, entries)


def load_samples(path: str | Path) -> list[DepthSample]:
    entries = read_container(path)
    prefixes = sorted({name.rsplit(".", 1)[0] for name in entries if name.startswith("sample.")})
    return [
        DepthSample(
            rgb=entries[f"{prefix}.rgb"],
            depth=entries[f"{prefix}.depth"],
            mask=entries[f"{prefix}.mask"] > 0.5,
            scene_seed=int(entries[f"{prefix}.seed"]),
        )
        for prefix in prefixes
    ]
