"""Wildfire digital twin state: terrain, fuels, wind, fire spread, smoke transport.

Grid convention: arrays are indexed ``[row, col]`` with row increasing northward
and col increasing eastward. Cell (r, c) has its center at
``north = (r + 0.5) * cell_size``, ``east = (c + 0.5) * cell_size``.
Wind vectors are horizontal ``(east, north)`` in m/s.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

# 8-neighborhood offsets (dr, dc)
NEIGHBOR_OFFSETS = (
    (1, 0), (1, 1), (0, 1), (-1, 1),
    (-1, 0), (-1, -1), (0, -1), (1, -1),
)


class WorldError(ValueError):
    """Invalid world configuration, raster, or operation."""


@dataclass
class WorldConfig:
    """All knobs for procedural world generation and stepping."""

    width: int = 128               # cells, east axis
    height: int = 128              # cells, north axis
    cell_size: float = 10.0        # m/cell
    relief: float = 60.0           # max elevation of procedural terrain, m
    noise_octaves: int = 4
    fuel_load: float = 1.0         # kg/m^2
    fuel_moisture: float = 0.1     # fraction
    fuel_noise: float = 0.0        # relative +- load variation
    base_ros: float = 0.05         # m/s, no-wind flat-ground spread rate scale
    wind_factor: float = 0.4       # per (m/s) of along-direction wind
    slope_factor: float = 3.0      # per unit rise/run
    load_ref: float = 1.0          # kg/m^2 that maps to load factor 1
    burn_rate: float = 0.0005      # kg/m^2/s consumed per unit intensity
    ignition_intensity: float = 1.0
    smoke_emission: float = 0.004  # density/s per unit intensity
    smoke_diffusion: float = 2.0   # m^2/s
    smoke_decay: float = 0.004     # 1/s
    plume_base_height: float = 60.0   # m above terrain at zero density
    plume_rise: float = 300.0         # m per unit density
    dt: float = 1.0                # s per world step
    seed: int = 0

    def validate(self):
        if self.width < 8 or self.height < 8:
            raise WorldError(f"grid must be at least 8x8, got {self.width}x{self.height}")
        if self.cell_size <= 0:
            raise WorldError("cell_size must be > 0")
        if self.dt <= 0:
            raise WorldError("dt must be > 0")
        for name in ("relief", "fuel_load", "base_ros", "wind_factor", "slope_factor",
                     "burn_rate", "smoke_emission", "smoke_diffusion", "smoke_decay"):
            if getattr(self, name) < 0:
                raise WorldError(f"{name} must be >= 0")
        if not 0.0 <= self.fuel_moisture <= 1.0:
            raise WorldError("fuel_moisture must be in [0, 1]")
        return self


@dataclass
class TerrainGrid:
    cell_size: float
    elevation: np.ndarray  # (height, width) m, float64

    @property
    def width(self) -> int:
        return self.elevation.shape[1]

    @property
    def height(self) -> int:
        return self.elevation.shape[0]

    @property
    def extent_north(self) -> float:
        return self.height * self.cell_size

    @property
    def extent_east(self) -> float:
        return self.width * self.cell_size

    def validate(self):
        if self.width < 8 or self.height < 8:
            raise WorldError("terrain must be at least 8x8 cells")
        if self.cell_size <= 0:
            raise WorldError("cell_size must be > 0")
        if not np.isfinite(self.elevation).all():
            raise WorldError("terrain elevations must be finite")
        return self

    def height_at(self, north: float, east: float) -> float:
        """Bilinear ground height at a world position; clamped at grid edges."""
        return float(bilinear_sample(self.elevation, north / self.cell_size - 0.5,
                                     east / self.cell_size - 0.5))


@dataclass
class FuelGrid:
    load: np.ndarray       # kg/m^2, >= 0
    moisture: np.ndarray   # fraction in [0, 1]

    def validate(self):
        if self.load.shape != self.moisture.shape:
            raise WorldError("fuel load and moisture shapes differ")
        if (self.load < 0).any():
            raise WorldError("fuel load must be >= 0")
        if (self.moisture < 0).any() or (self.moisture > 1).any():
            raise WorldError("fuel moisture must be in [0, 1]")
        return self


@dataclass
class WindField:
    base_vector: tuple[float, float] = (0.0, 0.0)  # (east, north) m/s
    gust_amplitude: float = 0.0                    # m/s
    gust_period: float = 60.0                      # s

    def validate(self):
        if self.gust_amplitude < 0:
            raise WorldError("gust_amplitude must be >= 0")
        if self.gust_period <= 0:
            raise WorldError("gust_period must be > 0")
        return self

    def sample(self, t: float) -> np.ndarray:
        return sample_wind(self, t)


def sample_wind(wind: WindField, t: float) -> np.ndarray:
    """Wind (east, north) m/s at time t: base plus a deterministic periodic gust."""
    phase = 2.0 * math.pi * t / wind.gust_period
    return np.array([
        wind.base_vector[0] + wind.gust_amplitude * math.sin(phase),
        wind.base_vector[1] + wind.gust_amplitude * math.cos(phase),
    ])


@dataclass
class FireState:
    intensity: np.ndarray       # >= 0; 0 means unburned or burned out
    burned: np.ndarray          # bool, monotone over time
    remaining_fuel: np.ndarray  # kg/m^2
    # per-direction spread progress (m) accumulated toward each target cell
    progress: np.ndarray = None  # (8, height, width)

    @classmethod
    def fresh(cls, fuel: FuelGrid) -> "FireState":
        shape = fuel.load.shape
        return cls(
            intensity=np.zeros(shape),
            burned=np.zeros(shape, dtype=bool),
            remaining_fuel=fuel.load.copy(),
            progress=np.zeros((8,) + shape),
        )


@dataclass
class SmokeField:
    density: np.ndarray       # column density, >= 0
    plume_height: np.ndarray  # m above datum (terrain + rise)

    @classmethod
    def clear(cls, terrain: TerrainGrid, config: WorldConfig) -> "SmokeField":
        density = np.zeros_like(terrain.elevation)
        return cls(density=density,
                   plume_height=plume_height_field(terrain, density, config))


def plume_height_field(terrain: TerrainGrid, density: np.ndarray,
                       config: WorldConfig) -> np.ndarray:
    return terrain.elevation + config.plume_base_height + config.plume_rise * density


def bilinear_sample(grid: np.ndarray, r: float | np.ndarray, c: float | np.ndarray):
    """Bilinearly interpolate a 2D grid at fractional indices, clamped to edges."""
    h, w = grid.shape
    r = np.clip(r, 0.0, h - 1.0)
    c = np.clip(c, 0.0, w - 1.0)
    r0 = np.minimum(np.floor(r).astype(np.int64), h - 2)
    c0 = np.minimum(np.floor(c).astype(np.int64), w - 2)
    fr = r - r0
    fc = c - c0
    return (grid[r0, c0] * (1 - fr) * (1 - fc)
            + grid[r0, c0 + 1] * (1 - fr) * fc
            + grid[r0 + 1, c0] * fr * (1 - fc)
            + grid[r0 + 1, c0 + 1] * fr * fc)


def _value_noise(rng: np.random.Generator, height: int, width: int,
                 octaves: int) -> np.ndarray:
    """Seeded multi-octave value noise in [0, 1] with smoothstep interpolation."""
    acc = np.zeros((height, width))
    amp = 1.0
    total = 0.0
    res = 4
    for _ in range(octaves):
        lattice = rng.random((res + 1, res + 1))
        rr = np.linspace(0.0, res, height)
        cc = np.linspace(0.0, res, width)
        r0 = np.minimum(rr.astype(np.int64), res - 1)
        c0 = np.minimum(cc.astype(np.int64), res - 1)
        fr = rr - r0
        fc = cc - c0
        # smoothstep for C1-continuous octaves
        fr = fr * fr * (3 - 2 * fr)
        fc = fc * fc * (3 - 2 * fc)
        fr = fr[:, None]
        fc = fc[None, :]
        r0 = r0[:, None]
        c0 = c0[None, :]
        tile = (lattice[r0, c0] * (1 - fr) * (1 - fc)
                + lattice[r0, c0 + 1] * (1 - fr) * fc
                + lattice[r0 + 1, c0] * fr * (1 - fc)
                + lattice[r0 + 1, c0 + 1] * fr * fc)
        acc += amp * tile
        total += amp
        amp *= 0.5
        res *= 2
    acc /= total
    lo, hi = acc.min(), acc.max()
    if hi > lo:
        acc = (acc - lo) / (hi - lo)
    return acc


def generate_terrain(config: WorldConfig) -> TerrainGrid:
    """Procedural heightmap: seeded value noise scaled to the relief range."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    noise = _value_noise(rng, config.height, config.width, config.noise_octaves)
    elevation = noise * config.relief
    return TerrainGrid(cell_size=config.cell_size, elevation=elevation).validate()


def generate_fuel(config: WorldConfig) -> FuelGrid:
    """Fuel bed from config defaults, with optional seeded load variation."""
    shape = (config.height, config.width)
    if config.fuel_noise > 0:
        rng = np.random.default_rng(config.seed + 1)
        noise = _value_noise(rng, config.height, config.width, config.noise_octaves)
        load = config.fuel_load * (1.0 + config.fuel_noise * (2.0 * noise - 1.0))
        load = np.maximum(load, 0.0)
    else:
        load = np.full(shape, config.fuel_load)
    moisture = np.full(shape, config.fuel_moisture)
    return FuelGrid(load=load, moisture=moisture).validate()


# ---------------------------------------------------------------------------
# ESRI ASCII grid ingestion

_ASC_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize")


def read_ascii_grid(path) -> tuple[dict, np.ndarray]:
    """Parse an ESRI ASCII grid file to (header, values).

    Values are returned row 0 = south (flipped from the file's north-first
    order to this module's convention). NODATA cells come back as NaN.
    """
    header = {}
    rows = []
    nodata = None
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    i = 0
    for ln in lines:
        parts = ln.split()
        key = parts[0].lower()
        if key in _ASC_HEADER_KEYS or key == "nodata_value":
            if len(parts) != 2:
                raise WorldError(f"malformed header line: {ln!r}")
            try:
                val = float(parts[1])
            except ValueError as exc:
                raise WorldError(f"non-numeric header value: {ln!r}") from exc
            if key == "nodata_value":
                nodata = val
            else:
                header[key] = val
            i += 1
        else:
            break
    for key in _ASC_HEADER_KEYS:
        if key not in header:
            raise WorldError(f"missing header field {key!r}")
    ncols = int(header["ncols"])
    nrows = int(header["nrows"])
    if ncols < 1 or nrows < 1 or header["cellsize"] <= 0:
        raise WorldError("invalid grid dimensions in header")
    for ln in lines[i:]:
        try:
            rows.append([float(v) for v in ln.split()])
        except ValueError as exc:
            raise WorldError(f"non-numeric cell value in row {len(rows)}") from exc
    if len(rows) != nrows or any(len(r) != ncols for r in rows):
        raise WorldError(
            f"dimension mismatch: header says {nrows}x{ncols}, "
            f"got {len(rows)} rows of lengths {sorted({len(r) for r in rows})}")
    values = np.array(rows, dtype=float)
    if nodata is not None:
        values[values == nodata] = np.nan
    header["ncols"] = ncols
    header["nrows"] = nrows
    return header, values[::-1].copy()  # file is north-first; internal is south-first


def load_terrain_asc(path) -> TerrainGrid:
    """Load elevation from .asc; NODATA cells are filled with the grid mean."""
    header, values = read_ascii_grid(path)
    mask = np.isnan(values)
    if mask.all():
        values[:] = 0.0
    elif mask.any():
        values[mask] = np.nanmean(values)
    return TerrainGrid(cell_size=header["cellsize"], elevation=values).validate()


def load_fuel_asc(path, moisture: float = 0.1) -> FuelGrid:
    """Load fuel load from .asc; NODATA cells become zero load (non-burnable)."""
    _, values = read_ascii_grid(path)
    values[np.isnan(values)] = 0.0
    values = np.maximum(values, 0.0)
    return FuelGrid(load=values, moisture=np.full_like(values, moisture)).validate()


def write_ascii_grid(path, values: np.ndarray, cell_size: float,
                     nodata: float = -9999.0):
    """Write a grid (row 0 = south) as an ESRI ASCII file (north-first rows)."""
    nrows, ncols = values.shape
    with open(path, "w") as fh:
        fh.write(f"ncols {ncols}\n")
        fh.write(f"nrows {nrows}\n")
        fh.write("xllcorner 0.0\n")
        fh.write("yllcorner 0.0\n")
        fh.write(f"cellsize {cell_size}\n")
        fh.write(f"NODATA_value {nodata}\n")
        for row in values[::-1]:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


# ---------------------------------------------------------------------------
# Fire spread

def rate_of_spread(from_cell: tuple[int, int], to_cell: tuple[int, int],
                   wind: np.ndarray, terrain: TerrainGrid, fuel: FuelGrid,
                   config: WorldConfig) -> float:
    """Directional spread rate (m/s) from a burning cell to an adjacent cell.

    ROS = R0 * load_factor * (1 - moisture) * max(0, 1 + k_w (w . d_hat))
          * exp(k_s * slope), zero whenever the target has no fuel or is
    saturated. ``wind`` is (east, north) m/s.
    """
    dr = to_cell[0] - from_cell[0]
    dc = to_cell[1] - from_cell[1]
    if (dr, dc) not in NEIGHBOR_OFFSETS:
        raise WorldError(f"cells {from_cell} and {to_cell} are not 8-adjacent")
    dist = math.hypot(dr, dc) * terrain.cell_size
    d_east = dc * terrain.cell_size / dist
    d_north = dr * terrain.cell_size / dist
    along_wind = wind[0] * d_east + wind[1] * d_north
    slope = (terrain.elevation[to_cell] - terrain.elevation[from_cell]) / dist
    ros = (config.base_ros
           * (fuel.load[to_cell] / config.load_ref)
           * (1.0 - fuel.moisture[to_cell])
           * max(0.0, 1.0 + config.wind_factor * along_wind)
           * math.exp(config.slope_factor * slope))
    return max(0.0, ros)


def _active_bbox(mask: np.ndarray, pad: int = 1) -> tuple[slice, slice] | None:
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    h, w = mask.shape
    return (slice(max(0, rows[0] - pad), min(h, rows[-1] + 1 + pad)),
            slice(max(0, cols[0] - pad), min(w, cols[-1] + 1 + pad)))


def step_fire(world: "World", dt: float) -> FireState:
    """Advance fire spread and fuel consumption by dt seconds.

    Burning cells push progress toward each unburned fueled neighbor at the
    directional ROS; a cell ignites once any directional progress reaches
    cell_size. Fuel burns down proportionally to intensity; exhausted cells
    go out but stay flagged burned.
    """
    fire = world.fire
    cfg = world.config
    burning = fire.intensity > 0.0
    box = _active_bbox(burning, pad=1)
    if box is None:
        return fire
    rs, cs = box
    sub_burn = burning[rs, cs]
    sub_int = fire.intensity[rs, cs]
    sub_fuel = fire.remaining_fuel[rs, cs]
    sub_load = world.fuel.load[rs, cs]
    sub_moist = world.fuel.moisture[rs, cs]
    sub_elev = world.terrain.elevation[rs, cs]
    wind = world.wind.sample(world.t)
    cell = cfg.cell_size

    eligible = (~fire.burned[rs, cs]) & (sub_fuel > 0.0)
    new_ignitions = np.zeros_like(sub_burn)
    for k, (dr, dc) in enumerate(NEIGHBOR_OFFSETS):
        dist = math.hypot(dr, dc) * cell
        d_east = dc * cell / dist
        d_north = dr * cell / dist
        wind_term = max(0.0, 1.0 + cfg.wind_factor * (wind[0] * d_east + wind[1] * d_north))
        # source-aligned and target-aligned slices within the bbox
        h, w = sub_burn.shape
        src = (slice(max(0, -dr), min(h, h - dr)), slice(max(0, -dc), min(w, w - dc)))
        tgt = (slice(max(0, dr), min(h, h + dr)), slice(max(0, dc), min(w, w + dc)))
        src_burning = sub_burn[src]
        if not src_burning.any():
            continue
        slope = (sub_elev[tgt] - sub_elev[src]) / dist
        ros = (cfg.base_ros
               * (sub_load[tgt] / cfg.load_ref)
               * (1.0 - sub_moist[tgt])
               * wind_term
               * np.exp(cfg.slope_factor * slope))
        np.maximum(ros, 0.0, out=ros)
        prog = fire.progress[k][rs, cs]
        active = src_burning & eligible[tgt]
        prog_tgt = prog[tgt]
        prog_tgt[active] += ros[active] * dt
        new_ignitions[tgt] |= active & (prog_tgt >= cell)

    if new_ignitions.any():
        sub_int[new_ignitions] = np.maximum(sub_int[new_ignitions],
                                            cfg.ignition_intensity)
        fire.burned[rs, cs] |= new_ignitions

    # fuel consumption for every burning cell (including new ignitions)
    now_burning = sub_int > 0.0
    if now_burning.any():
        consumed = cfg.burn_rate * sub_int * dt
        sub_fuel -= np.where(now_burning, consumed, 0.0)
        np.maximum(sub_fuel, 0.0, out=sub_fuel)
        sub_int[now_burning & (sub_fuel <= 0.0)] = 0.0
    return fire


# ---------------------------------------------------------------------------
# Smoke transport

def step_smoke(world: "World", dt: float) -> SmokeField:
    """Semi-Lagrangian advect + emit + decay + diffuse the smoke column field."""
    smoke = world.smoke
    cfg = world.config
    cell = cfg.cell_size
    wind = world.wind.sample(world.t)
    density = smoke.density

    if wind[0] != 0.0 or wind[1] != 0.0:
        h, w = density.shape
        rr, cc = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float),
                             indexing="ij")
        # backtrace in cell units: row moves with north wind, col with east wind
        src_r = rr - wind[1] * dt / cell
        src_c = cc - wind[0] * dt / cell
        density = bilinear_sample(density, src_r, src_c)

    density = density + cfg.smoke_emission * world.fire.intensity * dt
    density = density - cfg.smoke_decay * density * dt
    if cfg.smoke_diffusion > 0.0:
        padded = np.pad(density, 1, mode="edge")
        lap = (padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2]
               + padded[1:-1, 2:] - 4.0 * density) / (cell * cell)
        density = density + cfg.smoke_diffusion * lap * dt
    np.maximum(density, 0.0, out=density)
    smoke.density = density
    smoke.plume_height = plume_height_field(world.terrain, density, cfg)
    return smoke


# ---------------------------------------------------------------------------
# World container

@dataclass
class World:
    config: WorldConfig
    terrain: TerrainGrid
    fuel: FuelGrid
    wind: WindField
    fire: FireState
    smoke: SmokeField
    t: float = 0.0

    @classmethod
    def from_config(cls, config: WorldConfig, wind: WindField | None = None,
                    terrain: TerrainGrid | None = None,
                    fuel: FuelGrid | None = None) -> "World":
        config.validate()
        terrain = terrain if terrain is not None else generate_terrain(config)
        fuel = fuel if fuel is not None else generate_fuel(config)
        if terrain.elevation.shape != fuel.load.shape:
            raise WorldError("terrain and fuel grids must have the same shape")
        wind = (wind if wind is not None else WindField()).validate()
        return cls(config=config, terrain=terrain, fuel=fuel, wind=wind,
                   fire=FireState.fresh(fuel),
                   smoke=SmokeField.clear(terrain, config))

    @property
    def shape(self) -> tuple[int, int]:
        return self.terrain.elevation.shape

    def in_bounds(self, cell: tuple[int, int]) -> bool:
        r, c = cell
        h, w = self.shape
        return 0 <= r < h and 0 <= c < w

    def step(self, dt: float | None = None):
        dt = self.config.dt if dt is None else dt
        if dt <= 0:
            raise WorldError("dt must be > 0")
        step_fire(self, dt)
        step_smoke(self, dt)
        self.t += dt


def ignite(world: World, cell: tuple[int, int], intensity: float = 1.0) -> bool:
    """Start the given cell burning. Returns False (no-op) on a zero-fuel cell."""
    if not world.in_bounds(cell):
        raise WorldError(f"ignition cell {cell} out of bounds {world.shape}")
    if world.fire.remaining_fuel[cell] <= 0.0:
        return False
    world.fire.intensity[cell] = max(world.fire.intensity[cell], intensity)
    world.fire.burned[cell] = True
    return True


def ignite_disk(world: World, center: tuple[int, int], radius_cells: int = 1,
                intensity: float = 1.0) -> int:
    """Ignite all fueled cells within a radius; returns the number lit."""
    r0, c0 = center
    lit = 0
    for r in range(r0 - radius_cells, r0 + radius_cells + 1):
        for c in range(c0 - radius_cells, c0 + radius_cells + 1):
            if (r - r0) ** 2 + (c - c0) ** 2 <= radius_cells ** 2 and world.in_bounds((r, c)):
                if ignite(world, (r, c), intensity):
                    lit += 1
    return lit


# ---------------------------------------------------------------------------
# Scenario files

def save_scenario(path, config: WorldConfig, wind: WindField,
                  terrain_asc: str | None = None, fuel_asc: str | None = None):
    """Write a scenario JSON naming rasters or the procedural seed."""
    doc = {
        "world": asdict(config),
        "wind": {"base_vector": list(wind.base_vector),
                 "gust_amplitude": wind.gust_amplitude,
                 "gust_period": wind.gust_period},
        "terrain_asc": terrain_asc,
        "fuel_asc": fuel_asc,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_scenario(path) -> World:
    """Build a World from a scenario JSON (procedural or raster-backed)."""
    doc = json.loads(Path(path).read_text())
    config = WorldConfig(**doc["world"])
    wind_doc = doc.get("wind", {})
    wind = WindField(base_vector=tuple(wind_doc.get("base_vector", (0.0, 0.0))),
                     gust_amplitude=wind_doc.get("gust_amplitude", 0.0),
                     gust_period=wind_doc.get("gust_period", 60.0))
    base = Path(path).parent
    terrain = fuel = None
    if doc.get("terrain_asc"):
        terrain = load_terrain_asc(base / doc["terrain_asc"])
    if doc.get("fuel_asc"):
        fuel = load_fuel_asc(base / doc["fuel_asc"], moisture=config.fuel_moisture)
    return World.from_config(config, wind=wind, terrain=terrain, fuel=fuel)
