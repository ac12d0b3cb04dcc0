"""Forward rendering under Lambertian and Blinn-Phong reflectance.

Orthographic shading consumes a normal field; perspective shading consumes
per-pixel log-depth gradients and builds the normal direction
(f*gx, f*gy, x*gx + y*gy + 1) internally.  All dot products are clamped at
zero, intensities are k_d * l_d * <diffuse> + k_s * l_s * <specular>^n and
may legitimately exceed 1 for light intensities above 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    CameraIntrinsics,
    DepthMap,
    GradientField,
    Image,
    KIND_LOG_DEPTH,
    LightSource,
    Material,
    NormalField,
    ORIGIN_CORNER,
)
from .geometry import grid_spacing, halfway_vector_grid, pixel_grid

MODEL_LAMBERTIAN = "lambertian"
MODEL_BLINN_PHONG = "blinn-phong"

PROJECTION_PERSPECTIVE = "perspective"
PROJECTION_ORTHOGRAPHIC = "orthographic"

_VIEW_ORTHO = np.array([0.0, 0.0, 1.0])


@dataclass
class BlinnPhongTerms:
    """Intermediate per-pixel quantities of the perspective specular model.

    w: tilt term x*gx + y*gy + 1 of the unnormalized normal's third component
    p: length of the pixel's view ray direction (x, y, f)
    g: length of the light direction vector
    r: squared in-plane normal magnitude f^2 * (gx^2 + gy^2)
    d: gamma*p - f*g
    D: halfway-proportional vector  L + G*(x, y, f)  (normalizes to the
       halfway vector whenever it is nonzero)
    G: ratio g / p
    """

    w: float
    p: float
    g: float
    r: float
    d: float
    D: np.ndarray
    G: float


def blinn_phong_terms(point, gx, gy, light: LightSource, focal_length) -> BlinnPhongTerms:
    """Evaluate the specular-geometry terms at one image point."""
    w = point.x * gx + point.y * gy + 1.0
    p = float(np.linalg.norm([point.x, point.y, focal_length]))
    g = light.norm
    r = focal_length * focal_length * (gx * gx + gy * gy)
    G = g / p
    d = light.direction[2] * p - focal_length * g
    D = light.direction + G * np.array([point.x, point.y, focal_length])
    return BlinnPhongTerms(w=w, p=p, g=g, r=r, d=d, D=D, G=G)


def _diffuse_orthographic(normals: NormalField, light: LightSource, material: Material):
    light.require_frontal()
    dot = normals.n @ light.unit
    return material.k_d * light.diffuse_intensity * np.maximum(dot, 0.0)


def render_lambertian_orthographic(
    normals: NormalField, light: LightSource, material: Material
) -> Image:
    """Shade a normal field under a distant light, orthographic view."""
    return Image(_diffuse_orthographic(normals, light, material))


def render_blinn_phong_orthographic(
    normals: NormalField, light: LightSource, material: Material
) -> Image:
    """Orthographic Blinn-Phong: adds a specular lobe around the fixed
    halfway vector of the light and the (0, 0, 1) view direction."""
    data = _diffuse_orthographic(normals, light, material)
    if material.k_s != 0.0:
        h = light.unit + _VIEW_ORTHO
        hn = np.linalg.norm(h)
        if hn < 1e-12:
            raise ValueError("degenerate halfway vector: light opposes the view direction")
        spec = np.maximum(normals.n @ (h / hn), 0.0) ** material.shininess
        data = data + material.k_s * light.specular_intensity * spec
    return Image(data)


def _perspective_geometry(grad: GradientField, intr: CameraIntrinsics, centerized):
    X, Y = pixel_grid(grad.width, grad.height, intr, centerized)
    f = intr.focal_length
    w = X * grad.gx + Y * grad.gy + 1.0
    norm = np.sqrt((f * grad.gx) ** 2 + (f * grad.gy) ** 2 + w * w)
    return X, Y, w, norm


def _diffuse_perspective(grad, light, material, intr, centerized):
    light.require_frontal()
    X, Y, w, norm = _perspective_geometry(grad, intr, centerized)
    f = intr.focal_length
    alpha, beta, gamma = light.direction
    num = f * alpha * grad.gx + f * beta * grad.gy + gamma * w
    dot = num / (norm * light.norm)
    data = material.k_d * light.diffuse_intensity * np.maximum(dot, 0.0)
    return data, X, Y, w, norm


def render_lambertian_perspective(
    grad: GradientField, light: LightSource, material: Material, intr: CameraIntrinsics,
    centerized=True,
) -> Image:
    """Shade log-depth gradients under the perspective Lambertian model."""
    data, *_ = _diffuse_perspective(grad, light, material, intr, centerized)
    return Image(data)


def render_blinn_phong_perspective(
    grad: GradientField, light: LightSource, material: Material, intr: CameraIntrinsics,
    centerized=True,
) -> Image:
    """Perspective Blinn-Phong: per-pixel view vector (x, y, f)/||.||, halfway
    vector against the light, specular lobe raised to the shininess."""
    data, X, Y, w, norm = _diffuse_perspective(grad, light, material, intr, centerized)
    if material.k_s != 0.0:
        f = intr.focal_length
        h = halfway_vector_grid(X, Y, f, light)
        hdotn = (h[..., 0] * f * grad.gx + h[..., 1] * f * grad.gy + h[..., 2] * w) / norm
        spec = np.maximum(hdotn, 0.0) ** material.shininess
        data = data + material.k_s * light.specular_intensity * spec
    return Image(data)


def make_sphere_depth(
    width, height, intr: CameraIntrinsics, center, radius,
    projection=PROJECTION_PERSPECTIVE,
) -> DepthMap:
    """Depth map of a sphere; rays that miss the sphere are masked out.

    Perspective pixels trace t*(x, y, f); orthographic pixels trace a
    vertical ray through (x, y).  Depth is the nearest intersection's
    coordinate along the optical axis.
    """
    center = np.asarray(center, dtype=np.float64).reshape(3)
    if radius <= 0:
        raise ValueError("sphere radius must be positive")
    X, Y = pixel_grid(width, height, intr, centerized=True)
    f = intr.focal_length
    if projection == PROJECTION_PERSPECTIVE:
        dd = X * X + Y * Y + f * f
        dc = X * center[0] + Y * center[1] + f * center[2]
        disc = dc * dc - dd * (center @ center - radius * radius)
        hit = disc >= 0.0
        t = np.where(hit, (dc - np.sqrt(np.maximum(disc, 0.0))) / dd, 0.0)
        z = t * f
    elif projection == PROJECTION_ORTHOGRAPHIC:
        rad = radius * radius - (X - center[0]) ** 2 - (Y - center[1]) ** 2
        hit = rad >= 0.0
        z = np.where(hit, center[2] - np.sqrt(np.maximum(rad, 0.0)), 0.0)
    else:
        raise ValueError(f"unknown projection {projection!r}")
    mask = hit & (z > 0.0)
    return DepthMap(z=np.where(mask, z, 0.0), mask=mask)


def _masked_difference(values, mask, step, axis):
    """Central difference where both neighbors are valid, one-sided at
    mask boundaries, invalid where no valid neighbor exists."""
    v = np.moveaxis(values, axis, 0)
    m = np.moveaxis(mask, axis, 0)
    n = v.shape[0]
    vp = np.roll(v, -1, axis=0)
    vm = np.roll(v, 1, axis=0)
    mp = np.roll(m, -1, axis=0)
    mm = np.roll(m, 1, axis=0)
    mp[-1] = False
    mm[0] = False

    out = np.zeros_like(v)
    ok = np.zeros_like(m)
    central = m & mp & mm
    fwd = m & mp & ~mm
    bwd = m & ~mp & mm
    out[central] = (vp[central] - vm[central]) / (2.0 * step)
    out[fwd] = (vp[fwd] - v[fwd]) / step
    out[bwd] = (v[bwd] - vm[bwd]) / step
    ok = central | fwd | bwd
    return np.moveaxis(out, 0, axis), np.moveaxis(ok, 0, axis)


def log_depth_gradients(depth: DepthMap, intr: CameraIntrinsics, centerized=True) -> GradientField:
    """Log-depth gradient field of a depth map by masked central differences."""
    if np.any(depth.z[depth.mask] <= 0):
        raise ValueError("log-depth gradients require strictly positive depth")
    nu = np.where(depth.mask, np.log(np.where(depth.mask, depth.z, 1.0)), 0.0)
    hx, hy = grid_spacing(intr, centerized)
    gx, okx = _masked_difference(nu, depth.mask, hx, axis=1)
    gy, oky = _masked_difference(nu, depth.mask, hy, axis=0)
    mask = depth.mask & okx & oky
    return GradientField(gx=gx, gy=gy, kind=KIND_LOG_DEPTH, mask=mask)


def depth_to_normals_orthographic(depth: DepthMap, intr: CameraIntrinsics) -> NormalField:
    """Normals of a depth map under orthographic viewing, frontal convention:
    unnormalized direction (z_x, z_y, 1)."""
    hx, hy = grid_spacing(intr, centerized=True)
    zx, okx = _masked_difference(depth.z, depth.mask, hx, axis=1)
    zy, oky = _masked_difference(depth.z, depth.mask, hy, axis=0)
    mask = depth.mask & okx & oky
    n = np.stack([zx, zy, np.ones_like(zx)], axis=-1)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    n[~mask] = (0.0, 0.0, 1.0)
    return NormalField(n=n, mask=mask)


@dataclass
class SceneSpec:
    """A renderable synthetic scene: geometry plus material, lights, camera."""

    depth: DepthMap
    material: Material
    lights: list
    intrinsics: CameraIntrinsics
    projection: str = PROJECTION_PERSPECTIVE
    model: str = MODEL_BLINN_PHONG

    def __post_init__(self):
        if len(self.lights) != 3:
            raise ValueError("a scene requires exactly 3 lights")
        if self.projection not in (PROJECTION_PERSPECTIVE, PROJECTION_ORTHOGRAPHIC):
            raise ValueError(f"unknown projection {self.projection!r}")
        if self.model not in (MODEL_LAMBERTIAN, MODEL_BLINN_PHONG):
            raise ValueError(f"unknown reflectance model {self.model!r}")


def render_scene(scene: SceneSpec):
    """Render the three photometric-stereo images of a scene.

    Returns (images, geometry, mask) where geometry is the gradient field
    (perspective) or normal field (orthographic) the images were shaded
    from; pixels outside the scene mask render as 0.
    """
    if scene.projection == PROJECTION_PERSPECTIVE:
        geom = log_depth_gradients(scene.depth, scene.intrinsics)
        if scene.model == MODEL_BLINN_PHONG:
            shade = lambda li: render_blinn_phong_perspective(
                geom, li, scene.material, scene.intrinsics
            )
        else:
            shade = lambda li: render_lambertian_perspective(
                geom, li, scene.material, scene.intrinsics
            )
    else:
        geom = depth_to_normals_orthographic(scene.depth, scene.intrinsics)
        if scene.model == MODEL_BLINN_PHONG:
            shade = lambda li: render_blinn_phong_orthographic(geom, li, scene.material)
        else:
            shade = lambda li: render_lambertian_orthographic(geom, li, scene.material)
    images = []
    for li in scene.lights:
        img = shade(li)
        images.append(Image(np.where(geom.mask, img.data, 0.0), origin=ORIGIN_CORNER))
    return images, geom, geom.mask.copy()
