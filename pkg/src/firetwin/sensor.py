"""Software rendering of the two UAV camera views plus image-space analysis.

Images are (H, W, 3) uint8 arrays, row 0 at the top. The nadir view is drawn
north-up, so image-up is the "forward" direction used by the quadrant split.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from PIL import Image

from .uav import UavState
from .world import World

QUADRANT_KEYS = ("f", "b", "l", "r")

# palette (R, G, B); chosen so the fire / smoke pixel classifiers below fire
# only on the intended materials
SKY_RGB = (135.0, 176.0, 235.0)
SMOKE_RGB = (186.0, 186.0, 186.0)
BACKDROP_RGB = (35.0, 38.0, 45.0)   # beyond the grid edge
BURNED_RGB = (60.0, 55.0, 50.0)
BARREN_RGB = (120.0, 105.0, 85.0)   # zero-fuel ground

GLOW_MIN_RED = 110          # low-light floor keeping flames classifiable
TOPDOWN_SMOKE_KAPPA = 0.25  # column opacity = 1 - exp(-kappa * density)
VOLUME_SMOKE_KAPPA = 0.35   # per meter per unit density along angled rays
RAY_STEPS = 72
RAY_T0 = 2.0


class RenderError(ValueError):
    pass


@dataclass
class CameraIntrinsics:
    fov_deg: float = 60.0
    pitch_deg: float = -90.0   # -90 nadir, -45 angled
    yaw_deg: float = 0.0       # 0 = north, positive toward east

    def validate(self):
        if not 10.0 < self.fov_deg < 170.0:
            raise RenderError("fov must be in (10, 170) degrees")
        return self


def nadir_intrinsics(fov_deg: float = 60.0) -> CameraIntrinsics:
    return CameraIntrinsics(fov_deg=fov_deg, pitch_deg=-90.0).validate()


def angled_intrinsics(yaw_deg: float = 0.0, fov_deg: float = 100.0) -> CameraIntrinsics:
    return CameraIntrinsics(fov_deg=fov_deg, pitch_deg=-45.0, yaw_deg=yaw_deg).validate()


@dataclass
class QuadrantPatches:
    patches: dict  # key -> (h, w, 3) uint8 crop, out-of-region pixels zeroed
    masks: dict    # key -> (H, W) bool over the source image


def surface_colors(world: World) -> np.ndarray:
    """Per-cell ground color (float, no smoke): fuel green, flames, burn scar."""
    fire = world.fire
    fuel = world.fuel
    elev = world.terrain.elevation
    h, w = elev.shape
    rgb = np.empty((h, w, 3))

    load = np.clip(fuel.load / max(world.config.load_ref, 1e-9), 0.0, 1.0)
    span = elev.max() - elev.min()
    shade = 0.8 + 0.4 * ((elev - elev.min()) / span if span > 0 else 0.0)
    rgb[..., 0] = 50.0 * load + BARREN_RGB[0] * (1.0 - load)
    rgb[..., 1] = (95.0 + 65.0 * load) * load + BARREN_RGB[1] * (1.0 - load)
    rgb[..., 2] = 45.0 * load + BARREN_RGB[2] * (1.0 - load)
    rgb *= shade[..., None]

    scar = fire.burned & (fire.intensity <= 0.0)
    rgb[scar] = BURNED_RGB

    burning = fire.intensity > 0.0
    if burning.any():
        i = np.clip(fire.intensity[burning], 0.0, 1.0)
        rgb[burning] = np.stack(
            [200.0 + 55.0 * i, 70.0 + 50.0 * i, 25.0 + 15.0 * i], axis=-1)
    return rgb


def _camera_ground(world: World, uav: UavState) -> tuple[float, float, float, float]:
    north, east = float(uav.pos[0]), float(uav.pos[1])
    alt = uav.altitude
    agl = alt - world.terrain.height_at(north, east)
    if agl <= 0.0:
        raise RenderError(f"camera is below ground (AGL {agl:.1f} m)")
    return north, east, alt, agl


def render_topdown(world: World, uav: UavState, intrinsics: CameraIntrinsics,
                   size: int = 64) -> np.ndarray:
    """Nadir view: orthographic-equivalent sampling of the ground under the UAV.

    Pixel footprint is 2 * AGL * tan(fov/2) / size meters; smoke is composited
    as gray with column-density opacity.
    """
    intrinsics.validate()
    north, east, _, agl = _camera_ground(world, uav)
    mpp = 2.0 * agl * math.tan(math.radians(intrinsics.fov_deg) / 2.0) / size

    half = size / 2.0
    rows = north + (half - np.arange(size) - 0.5) * mpp   # image-up = north
    cols = east + (np.arange(size) + 0.5 - half) * mpp
    cell = world.config.cell_size
    ir = np.floor(rows / cell).astype(np.int64)
    ic = np.floor(cols / cell).astype(np.int64)
    h, w = world.shape
    inside = ((ir >= 0) & (ir < h))[:, None] & ((ic >= 0) & (ic < w))[None, :]
    ir_c = np.clip(ir, 0, h - 1)
    ic_c = np.clip(ic, 0, w - 1)

    ground = surface_colors(world)[np.ix_(ir_c, ic_c)]
    alpha = 1.0 - np.exp(-TOPDOWN_SMOKE_KAPPA * world.smoke.density[np.ix_(ir_c, ic_c)])
    img = ground * (1.0 - alpha[..., None]) + np.array(SMOKE_RGB) * alpha[..., None]
    img[~inside] = BACKDROP_RGB
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


@njit(cache=True)
def _march_rays(out, cam_n, cam_e, cam_alt, yaw, pitch, fov_rad,
                terrain, colors, density, plume, cell, t0, far, n_steps,
                kappa, sky, smoke_rgb, backdrop, ceil_h, extent_n, extent_e):
    img_h, img_w = out.shape[0], out.shape[1]
    grid_h, grid_w = terrain.shape
    tanhalf = np.tan(fov_rad / 2.0)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cyaw, syaw = np.cos(yaw), np.sin(yaw)
    # camera basis in (north, east, up); down-image = forward x right
    f_n, f_e, f_u = cp * cyaw, cp * syaw, sp
    r_n, r_e = -syaw, cyaw
    d_n = sp * cyaw
    d_e = sp * syaw
    d_u = -cp
    growth = (far / t0) ** (1.0 / (n_steps - 1))
    for row in range(img_h):
        v = ((row + 0.5) / img_h * 2.0 - 1.0) * tanhalf
        for col in range(img_w):
            u = ((col + 0.5) / img_w * 2.0 - 1.0) * tanhalf
            dn = f_n + u * r_n + v * d_n
            de = f_e + u * r_e + v * d_e
            du = f_u + v * d_u
            norm = np.sqrt(dn * dn + de * de + du * du)
            dn /= norm
            de /= norm
            du /= norm
            trans = 1.0
            cr = cg = cb = 0.0
            hit = False
            k0 = 0
            if cam_alt > ceil_h:
                if du >= 0.0:
                    out[row, col, 0] = sky[0]
                    out[row, col, 1] = sky[1]
                    out[row, col, 2] = sky[2]
                    continue
                t_ent = (ceil_h - cam_alt) / du
                if t_ent > t0:
                    kf = np.log(t_ent / t0) / np.log(growth)
                    k0 = int(kf)
                    if k0 >= n_steps:
                        k0 = n_steps  # pure sky
            t = t0 * growth ** k0
            for _ in range(k0, n_steps):
                n = cam_n + dn * t
                e = cam_e + de * t
                z = cam_alt + du * t
                if du > 0.0 and z > ceil_h:
                    break
                if 0.0 <= n < extent_n and 0.0 <= e < extent_e:
                    ir = int(n / cell)
                    ic = int(e / cell)
                    if ir >= grid_h:
                        ir = grid_h - 1
                    if ic >= grid_w:
                        ic = grid_w - 1
                    th = terrain[ir, ic]
                    if z <= th:
                        cr += trans * colors[ir, ic, 0]
                        cg += trans * colors[ir, ic, 1]
                        cb += trans * colors[ir, ic, 2]
                        hit = True
                        break
                    d = density[ir, ic]
                    if d > 1e-4 and z < plume[ir, ic]:
                        seg = t * (growth - 1.0)
                        a = 1.0 - np.exp(-kappa * d * seg)
                        cr += trans * a * smoke_rgb[0]
                        cg += trans * a * smoke_rgb[1]
                        cb += trans * a * smoke_rgb[2]
                        trans *= 1.0 - a
                        if trans < 0.004:
                            hit = True
                            break
                elif z <= 0.0:
                    # flat datum ground outside the modeled grid
                    cr += trans * backdrop[0]
                    cg += trans * backdrop[1]
                    cb += trans * backdrop[2]
                    hit = True
                    break
                t *= growth
            if not hit:
                cr += trans * sky[0]
                cg += trans * sky[1]
                cb += trans * sky[2]
            out[row, col, 0] = cr
            out[row, col, 1] = cg
            out[row, col, 2] = cb


def render_angled(world: World, uav: UavState, intrinsics: CameraIntrinsics,
                  size: int = 64) -> np.ndarray:
    """Perspective view pitched down (default 45 deg) along the UAV heading.

    Per-pixel rays march over the heightfield; smoke columns occlude with
    density-dependent opacity, and unhit rays shade as sky.
    """
    intrinsics.validate()
    north, east, alt, _ = _camera_ground(world, uav)
    out = np.empty((size, size, 3))
    terrain = world.terrain.elevation
    plume = world.smoke.plume_height
    ceil_h = float(max(terrain.max(), plume.max()))
    far = max(2000.0, 1.5 * math.hypot(world.terrain.extent_north,
                                       world.terrain.extent_east))
    _march_rays(out, north, east, alt,
                math.radians(intrinsics.yaw_deg), math.radians(intrinsics.pitch_deg),
                math.radians(intrinsics.fov_deg),
                terrain, surface_colors(world), world.smoke.density, plume,
                world.config.cell_size, RAY_T0, far, RAY_STEPS,
                VOLUME_SMOKE_KAPPA,
                np.array(SKY_RGB), np.array(SMOKE_RGB), np.array(BACKDROP_RGB),
                ceil_h, world.terrain.extent_north, world.terrain.extent_east)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# Image-space analysis

def fire_pixel_mask(image: np.ndarray) -> np.ndarray:
    """Fire color rule: R > 1.5 G, R > 1.5 B, R > 100 (exact in integers)."""
    r = image[..., 0].astype(np.int32)
    g = image[..., 1].astype(np.int32)
    b = image[..., 2].astype(np.int32)
    return (2 * r > 3 * g) & (2 * r > 3 * b) & (r > 100)


def fire_pixel_count(image: np.ndarray) -> int:
    return int(fire_pixel_mask(image).sum())


def smoke_pixel_mask(image: np.ndarray) -> np.ndarray:
    """Gray-dominant rule: channel spread <= 30 and mean brightness >= 90."""
    img = image.astype(np.int32)
    spread = img.max(axis=-1) - img.min(axis=-1)
    return (spread <= 30) & (img.sum(axis=-1) >= 270)


def smoke_pixel_count(image: np.ndarray) -> int:
    return int(smoke_pixel_mask(image).sum())


def partition_quadrants(image: np.ndarray) -> QuadrantPatches:
    """Split a square image along its diagonals into f/b/l/r triangles.

    The regions partition the pixel set exactly and swap f<->b, l<->r under a
    180-degree rotation. Patches are bounding-box crops with out-of-region
    pixels zeroed.
    """
    h, w = image.shape[:2]
    if h != w:
        raise RenderError(f"quadrant split needs a square image, got {h}x{w}")
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    # doubled center offsets keep all comparisons integral
    big_u = 2 * rr - (h - 1)   # down-positive
    big_v = 2 * cc - (w - 1)   # right-positive
    au, av = np.abs(big_u), np.abs(big_v)
    masks = {
        "f": ((big_u < 0) & (au >= av)) | ((big_u == 0) & (big_v == 0)),
        "b": (big_u > 0) & (au >= av),
        "l": (big_v < 0) & (av > au),
        "r": (big_v > 0) & (av > au),
    }
    patches = {}
    for key, mask in masks.items():
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        crop = image[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1].copy()
        crop[~mask[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]] = 0
        patches[key] = crop
    return QuadrantPatches(patches=patches, masks=masks)


def apply_lowlight(image: np.ndarray, factor: float) -> np.ndarray:
    """Scale brightness by factor in (0, 1], flooring flame red so fire pixels
    stay classifiable (night glow)."""
    if not 0.0 < factor <= 1.0:
        raise RenderError(f"lowlight factor must be in (0, 1], got {factor}")
    fire = fire_pixel_mask(image)
    out = np.clip(np.rint(image.astype(np.float64) * factor), 0, 255).astype(np.uint8)
    if fire.any():
        floor = np.minimum(image[..., 0][fire], GLOW_MIN_RED).astype(np.uint8)
        out[..., 0][fire] = np.maximum(out[..., 0][fire], floor)
    return out


# ---------------------------------------------------------------------------
# PNG I/O

def to_png_bytes(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_png(image: np.ndarray, path):
    Image.fromarray(image, mode="RGB").save(path, format="PNG")
