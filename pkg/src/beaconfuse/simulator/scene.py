"""Scene objects, sensor models and analytic ray intersections.

Geometry is deliberately simple: vertical cylinders and cones for beacons
and people, yawed boxes for vehicles and pallets, and a flat ground plane.
Everything intersects analytically, vectorized over ray bundles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..camera_map import BoundingBox

# Beacon: truncated cone base with a thin retro-reflective pole on top.
BEACON_CONE_HEIGHT = 0.71
BEACON_CONE_BASE_RADIUS = 0.18
BEACON_CONE_APEX_HEIGHT = 0.75
BEACON_POLE_RADIUS = 0.025
BEACON_TOTAL_HEIGHT = 2.0

PERSON_RADIUS = 0.18
PERSON_HEIGHT = 1.75
VEST_BAND = (0.90, 1.35)

VEHICLE_LENGTH = 4.0
VEHICLE_WIDTH = 1.8
VEHICLE_HEIGHT = 1.6
VEHICLE_STRIPE_BAND = (0.70, 0.90)

PALLET_LENGTH = 1.2
PALLET_WIDTH = 1.0
PALLET_HEIGHT = 0.15

GROUND_INTENSITY = 5.0

OBJECT_KINDS = ("beacon", "person_vest", "vehicle", "pallet")


@dataclass(frozen=True)
class SceneObject:
    """One object on the ground plane at (x, y), yaw in degrees."""

    kind: str
    position: tuple[float, float]
    yaw: float = 0.0
    reflectivity: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in OBJECT_KINDS:
            raise ValueError(f"unknown object kind {self.kind!r}")
        for name, value in self.reflectivity.items():
            if not 0 <= value <= 255:
                raise ValueError(f"reflectivity {name!r} must be in [0, 255], got {value}")

    @property
    def distance(self) -> float:
        return math.hypot(*self.position)

    @property
    def angle(self) -> float:
        return math.degrees(math.atan2(self.position[1], self.position[0]))


def make_beacon(x: float, y: float) -> SceneObject:
    return SceneObject("beacon", (x, y), reflectivity={"body": 10.0, "pole": 200.0})


def make_person(x: float, y: float, vest: bool = True) -> SceneObject:
    refl = {"body": 8.0, "vest": 160.0 if vest else 8.0}
    return SceneObject("person_vest", (x, y), reflectivity=refl)


def make_vehicle(x: float, y: float, yaw: float = 0.0) -> SceneObject:
    return SceneObject("vehicle", (x, y), yaw=yaw, reflectivity={"body": 8.0, "stripe": 120.0})


def make_pallet(x: float, y: float, yaw: float = 0.0) -> SceneObject:
    return SceneObject("pallet", (x, y), yaw=yaw, reflectivity={"body": 10.0})


@dataclass(frozen=True)
class LidarModel:
    """Eight fixed-elevation beams swept over an azimuth sector.

    Beam 6 points at the horizon and beam 7 three degrees above it; the
    lower beams continue downward at the same spacing.  Returned
    intensities decay exponentially with range so distant retro-reflective
    surfaces eventually fall below the bright threshold, mirroring real
    signal falloff.
    """

    height: float = 1.4
    elevations_deg: tuple[float, ...] = (-18.0, -15.0, -12.0, -9.0, -6.0, -3.0, 0.0, 3.0)
    azimuth_step_deg: float = 0.05
    azimuth_start_deg: float = -180.0
    azimuth_end_deg: float = 180.0
    range_noise_m: float = 0.02
    dropout: float = 0.02
    intensity_noise: float = 1.0
    intensity_falloff_m: float = 7.6
    max_range_m: float = 100.0

    def __post_init__(self):
        if len(self.elevations_deg) != 8:
            raise ValueError("the device has exactly 8 beams")
        if any(b >= a for a, b in zip(self.elevations_deg[1:], self.elevations_deg[:-1])):
            raise ValueError("beam elevations must be strictly increasing with beam index")
        if self.azimuth_step_deg <= 0:
            raise ValueError("azimuth_step_deg must be > 0")
        if not self.azimuth_start_deg < self.azimuth_end_deg:
            raise ValueError("azimuth sector must be nonempty")

    @property
    def ground_z(self) -> float:
        return -self.height

    def azimuths_deg(self) -> np.ndarray:
        count = int(round((self.azimuth_end_deg - self.azimuth_start_deg) / self.azimuth_step_deg))
        return self.azimuth_start_deg + np.arange(count) * self.azimuth_step_deg


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera co-located with the LiDAR, horizontal optical axis.

    Image x grows with azimuth toward +y, so the +FOV edge lands on the
    right image margin.  Detection confidence decays gently with range.
    """

    image_width: int = 640
    image_height: int = 480
    fov_deg: float = 40.0
    sensor_height: float = 1.4
    min_range_m: float = 3.0
    max_range_m: float = 40.0
    pixel_noise: float = 1.0
    confidence_base: float = 0.97
    confidence_slope: float = 0.005
    confidence_noise: float = 0.02
    miss_rate: float = 0.01

    def __post_init__(self):
        if not 0 < self.fov_deg < 180:
            raise ValueError("fov_deg must be in (0, 180)")
        if not 0 < self.min_range_m < self.max_range_m:
            raise ValueError("ranges must satisfy 0 < min < max")

    @property
    def focal_px(self) -> float:
        return (self.image_width / 2.0) / math.tan(math.radians(self.fov_deg / 2.0))


@dataclass(frozen=True)
class TaggedBox:
    """A rendered bounding box with its hidden ground truth."""

    box: BoundingBox
    object_id: int
    distance: float
    angle: float


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

_NO_HIT = np.inf


@dataclass(frozen=True)
class _Band:
    z_lo: float
    z_hi: float
    intensity: float


@dataclass(frozen=True)
class _Cylinder:
    cx: float
    cy: float
    radius: float
    z0: float
    z1: float
    base_intensity: float
    bands: tuple[_Band, ...] = ()


@dataclass(frozen=True)
class _Cone:
    cx: float
    cy: float
    base_radius: float
    z_base: float
    z_apex: float
    z_top: float
    base_intensity: float


@dataclass(frozen=True)
class _BoxPrim:
    cx: float
    cy: float
    yaw_deg: float
    length: float
    width: float
    z0: float
    z1: float
    base_intensity: float
    bands: tuple[_Band, ...] = ()


def object_primitives(obj: SceneObject, ground_z: float):
    """Decompose a scene object into ray-castable primitives."""
    x, y = obj.position
    refl = obj.reflectivity
    if obj.kind == "beacon":
        return [
            _Cone(
                cx=x, cy=y,
                base_radius=BEACON_CONE_BASE_RADIUS,
                z_base=ground_z,
                z_apex=ground_z + BEACON_CONE_APEX_HEIGHT,
                z_top=ground_z + BEACON_CONE_HEIGHT,
                base_intensity=refl.get("body", 10.0),
            ),
            _Cylinder(
                cx=x, cy=y,
                radius=BEACON_POLE_RADIUS,
                z0=ground_z,
                z1=ground_z + BEACON_TOTAL_HEIGHT,
                base_intensity=refl.get("pole", 200.0),
            ),
        ]
    if obj.kind == "person_vest":
        vest = _Band(ground_z + VEST_BAND[0], ground_z + VEST_BAND[1], refl.get("vest", 160.0))
        return [
            _Cylinder(
                cx=x, cy=y,
                radius=PERSON_RADIUS,
                z0=ground_z,
                z1=ground_z + PERSON_HEIGHT,
                base_intensity=refl.get("body", 8.0),
                bands=(vest,),
            )
        ]
    if obj.kind == "vehicle":
        stripe = _Band(
            ground_z + VEHICLE_STRIPE_BAND[0],
            ground_z + VEHICLE_STRIPE_BAND[1],
            refl.get("stripe", 120.0),
        )
        return [
            _BoxPrim(
                cx=x, cy=y, yaw_deg=obj.yaw,
                length=VEHICLE_LENGTH, width=VEHICLE_WIDTH,
                z0=ground_z, z1=ground_z + VEHICLE_HEIGHT,
                base_intensity=refl.get("body", 8.0),
                bands=(stripe,),
            )
        ]
    if obj.kind == "pallet":
        return [
            _BoxPrim(
                cx=x, cy=y, yaw_deg=obj.yaw,
                length=PALLET_LENGTH, width=PALLET_WIDTH,
                z0=ground_z, z1=ground_z + PALLET_HEIGHT,
                base_intensity=refl.get("body", 10.0),
            )
        ]
    raise ValueError(f"unknown object kind {obj.kind!r}")


def _pick_root(t1, t2, dz, z0, z1):
    """Smallest positive root whose hit height lies inside [z0, z1]."""
    best = np.full(t1.shape, _NO_HIT)
    with np.errstate(invalid="ignore"):
        for t in (t1, t2):
            z = t * dz
            ok = (t > 1e-9) & (z >= z0) & (z <= z1) & np.isfinite(t)
            best = np.where(ok & (t < best), t, best)
    return best


def intersect_primitive(prim, dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rays from the origin against one primitive.

    Returns (t, base_intensity_per_ray); t is inf where the ray misses.
    """
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    if isinstance(prim, _Cylinder):
        a = dx**2 + dy**2
        b = -2.0 * (dx * prim.cx + dy * prim.cy)
        c = prim.cx**2 + prim.cy**2 - prim.radius**2
        t = _solve_quadratic_hits(a, b, c, dz, prim.z0, prim.z1)
        intensity = _banded_intensity(t, dz, prim.base_intensity, prim.bands)
        return t, intensity
    if isinstance(prim, _Cone):
        k = prim.base_radius / (prim.z_apex - prim.z_base)
        a = dx**2 + dy**2 - (k * dz) ** 2
        b = -2.0 * (dx * prim.cx + dy * prim.cy) + 2.0 * k**2 * prim.z_apex * dz
        c = prim.cx**2 + prim.cy**2 - (k * prim.z_apex) ** 2
        t = _solve_quadratic_hits(a, b, c, dz, prim.z_base, prim.z_top)
        return t, np.full(t.shape, prim.base_intensity)
    if isinstance(prim, _BoxPrim):
        yaw = math.radians(prim.yaw_deg)
        cos_y, sin_y = math.cos(yaw), math.sin(yaw)
        # Rotate rays and origin into the box frame.
        lx = cos_y * dx + sin_y * dy
        ly = -sin_y * dx + cos_y * dy
        ox = -(cos_y * prim.cx + sin_y * prim.cy)
        oy = -(-sin_y * prim.cx + cos_y * prim.cy)
        t = _slab_hits(
            (ox, oy, 0.0),
            (lx, ly, dz),
            (-prim.length / 2.0, prim.length / 2.0),
            (-prim.width / 2.0, prim.width / 2.0),
            (prim.z0, prim.z1),
        )
        intensity = _banded_intensity(t, dz, prim.base_intensity, prim.bands)
        return t, intensity
    raise TypeError(f"unknown primitive {type(prim).__name__}")


def _solve_quadratic_hits(a, b, c, dz, z0, z1):
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = b**2 - 4.0 * a * c
        sqrt_disc = np.sqrt(np.maximum(disc, 0.0))
        t1 = (-b - sqrt_disc) / (2.0 * a)
        t2 = (-b + sqrt_disc) / (2.0 * a)
        t1 = np.where(disc >= 0, t1, _NO_HIT)
        t2 = np.where(disc >= 0, t2, _NO_HIT)
    return _pick_root(t1, t2, dz, z0, z1)


def _slab_hits(origin, dirs, x_range, y_range, z_range):
    t_near = np.full(dirs[0].shape, -np.inf)
    t_far = np.full(dirs[0].shape, np.inf)
    for o, d, (lo, hi) in zip(origin, dirs, (x_range, y_range, z_range)):
        d = np.asarray(d, dtype=float)
        o_arr = np.full(d.shape, o) if np.isscalar(o) else np.asarray(d * 0 + o)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            ta = (lo - o_arr) * inv
            tb = (hi - o_arr) * inv
        parallel = np.abs(d) < 1e-12
        inside = (o_arr >= lo) & (o_arr <= hi)
        lo_t = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(ta, tb))
        hi_t = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(ta, tb))
        t_near = np.maximum(t_near, lo_t)
        t_far = np.minimum(t_far, hi_t)
    hit = (t_near <= t_far) & (t_far > 1e-9)
    entry = np.where(t_near > 1e-9, t_near, t_far)
    return np.where(hit, entry, _NO_HIT)


def _banded_intensity(t, dz, base, bands):
    intensity = np.full(t.shape, base)
    if bands:
        with np.errstate(invalid="ignore"):
            z = np.where(np.isfinite(t), t, 0.0) * dz
        for band in bands:
            intensity = np.where((z >= band.z_lo) & (z <= band.z_hi), band.intensity, intensity)
    return intensity
